//! Post-solve diagnostics: curvature of the graph, weighted energy
//! integrals, Lorentzian distance, light segments and the local growth
//! estimate for `w`.

use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::GuardPolicy;
use crate::error::{Error, Result};
use crate::field::{gradient_into, ScalarField};
use crate::grid::{Grid, NodeRole};
use crate::sources::{ball_mass, unit_ball_volume, MeasureSource};

/// Nodal first and second derivatives on the nodes whose whole `3^m`
/// neighbourhood is interior.
struct NodalJets {
    nodes: Vec<usize>,
    /// `m` entries per node.
    grad: Vec<f64>,
    /// `m * m` entries per node.
    hess: Vec<f64>,
}

fn neighbourhood_offsets(grid: &Grid) -> Vec<isize> {
    let m = grid.dim();
    let strides = grid.strides();
    let mut out = Vec::with_capacity(3usize.pow(m as u32));
    for code in 0..3usize.pow(m as u32) {
        let mut c = code;
        let mut off = 0isize;
        for k in 0..m {
            off += (c % 3) as isize * strides[k] as isize - strides[k] as isize;
            c /= 3;
        }
        out.push(off);
    }
    out
}

/// Nodes at least one full cell away from the boundary.
pub fn deep_interior_nodes(grid: &Grid) -> Vec<usize> {
    let offs = neighbourhood_offsets(grid);
    let m = grid.dim();
    let shape = grid.shape();
    grid.interior_nodes()
        .iter()
        .copied()
        .filter(|&n| {
            let mi = grid.node_multi_index(n);
            if (0..m).any(|k| mi[k] == 0 || mi[k] + 1 >= shape[k]) {
                return false;
            }
            offs.iter()
                .all(|&o| grid.role((n as isize + o) as usize) == NodeRole::Interior)
        })
        .collect()
}

fn nodal_jets(u: &ScalarField) -> NodalJets {
    let grid = u.grid();
    let m = grid.dim();
    let h = grid.spacing();
    let v = u.values();
    let strides = grid.strides();
    let mut cell_grad = vec![0.0; grid.cell_count() * m];
    gradient_into(grid, v, &mut cell_grad);
    let nodes = deep_interior_nodes(grid);
    let mut grad = vec![0.0; nodes.len() * m];
    let mut hess = vec![0.0; nodes.len() * m * m];
    let corners = 1usize << m;
    for (i, &n) in nodes.iter().enumerate() {
        let mi = grid.node_multi_index(n);
        let g = &mut grad[i * m..(i + 1) * m];
        let mut cmi = vec![0usize; m];
        for b in 0..corners {
            for k in 0..m {
                cmi[k] = mi[k] - (b >> k & 1);
            }
            let c = grid.cell_from_multi_index(&cmi).expect("deep nodes have all incident cells");
            for k in 0..m {
                g[k] += cell_grad[c * m + k] / corners as f64;
            }
        }
        let hs = &mut hess[i * m * m..(i + 1) * m * m];
        for a in 0..m {
            let sa = strides[a];
            hs[a * m + a] = (v[n + sa] - 2.0 * v[n] + v[n - sa]) / (h[a] * h[a]);
            for b in a + 1..m {
                let sb = strides[b];
                let d = (v[n + sa + sb] - v[n + sa - sb] - v[n - sa + sb] + v[n - sa - sb]) / (4.0 * h[a] * h[b]);
                hs[a * m + b] = d;
                hs[b * m + a] = d;
            }
        }
    }
    NodalJets { nodes, grad, hess }
}

/// Pointwise curvature terms from a gradient and Hessian.
#[derive(Clone, Copy, Debug)]
struct CurvatureTerms {
    w: f64,
    hess2: f64,
    hess_du2: f64,
    hess_du_du: f64,
}

fn curvature_terms(g: &[f64], hs: &[f64], w_max: f64) -> Option<CurvatureTerms> {
    let m = g.len();
    let t: f64 = g.iter().map(|x| x * x).sum();
    let (w, capped) = crate::energy::w_of_norm2(t, w_max);
    if capped {
        return None;
    }
    let mut hess2 = 0.0;
    let mut hess_du2 = 0.0;
    let mut hess_du_du = 0.0;
    for a in 0..m {
        let mut hg = 0.0;
        for b in 0..m {
            hess2 += hs[a * m + b] * hs[a * m + b];
            hg += hs[a * m + b] * g[b];
        }
        hess_du2 += hg * hg;
        hess_du_du += hg * g[a];
    }
    Some(CurvatureTerms {
        w,
        hess2,
        hess_du2,
        hess_du_du,
    })
}

#[derive(Clone, Debug)]
pub struct SecondFundamentalForm {
    /// `|II|` on evaluated nodes, NaN elsewhere.
    pub norm: ScalarField,
    pub evaluated: usize,
    /// Nodes skipped because `w` exceeded the guard.
    pub capped: usize,
}

/// `|II|^2 = w^2 |D^2u|^2 + 2 w^4 |D^2u(Du, .)|^2 + w^6 D^2u(Du, Du)^2` by
/// centred second differences and corner-averaged gradients.
pub fn second_fundamental_form_norm(u: &ScalarField, policy: &GuardPolicy) -> SecondFundamentalForm {
    let grid = u.grid();
    let m = grid.dim();
    let jets = nodal_jets(u);
    let mut vals = vec![f64::NAN; grid.node_count()];
    let mut capped = 0;
    let mut evaluated = 0;
    for (i, &n) in jets.nodes.iter().enumerate() {
        let g = &jets.grad[i * m..(i + 1) * m];
        let hs = &jets.hess[i * m * m..(i + 1) * m * m];
        match curvature_terms(g, hs, policy.w_max) {
            Some(c) => {
                let w2 = c.w * c.w;
                vals[n] = (w2 * c.hess2 + 2.0 * w2 * w2 * c.hess_du2 + w2 * w2 * w2 * c.hess_du_du * c.hess_du_du).sqrt();
                evaluated += 1;
            }
            None => capped += 1,
        }
    }
    SecondFundamentalForm {
        norm: ScalarField::extended(grid.clone(), vals).expect("sizes match"),
        evaluated,
        capped,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    /// Every node one cell away from the boundary.
    Interior,
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{x : r0 <= |x - center| <= r1}`.
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
}

impl Region {
    fn contains(&self, x: &[f64]) -> bool {
        let d = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        match self {
            Region::Interior => true,
            Region::Ball { center, radius } => d(center) <= *radius,
            Region::Box { lower, upper } => x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| l <= v && v <= u),
            Region::Annulus { center, inner, outer } => {
                let r = d(center);
                *inner <= r && r <= *outer
            }
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        let margin = 2.0 * grid.max_spacing();
        let mut x = vec![0.0; grid.dim()];
        for n in 0..grid.node_count() {
            grid.node_position_into(n, &mut x);
            if self.contains(&x) && grid.role(n) != NodeRole::Interior && !matches!(self, Region::Interior) {
                return Err(Error::Argument(format!(
                    "region {self:?} reaches the boundary; keep a margin of {margin}"
                )));
            }
        }
        if let Region::Ball { center, radius } | Region::Annulus { center, outer: radius, .. } = self {
            if grid.distance_to_boundary(center) < radius + margin {
                return Err(Error::Argument(format!(
                    "region {self:?} is closer than {margin} to the boundary"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralReport {
    pub region: Region,
    pub q0: f64,
    /// Discrete measure of the evaluated nodes.
    pub measure: f64,
    pub int_w: f64,
    pub int_w_log1p_w: f64,
    /// `(1 + log w)^q0 {w |D^2u|^2 + w^3 |D^2u(Du,.)|^2 + w^5 D^2u(Du,Du)^2}`.
    pub int_log_weighted_hessian: f64,
    /// `w (1 + log w)^(q0 + 1)`.
    pub int_w_log_power: f64,
    /// `arccosh w`, reported for reference.
    pub int_beta: f64,
    pub capped: usize,
}

pub fn log_weighted_integrals(
    u: &ScalarField,
    q0: f64,
    region: &Region,
    policy: &GuardPolicy,
) -> Result<IntegralReport> {
    if !(q0 >= 0.0) {
        return Err(Error::Argument(format!("q0 must be non-negative, got {q0}")));
    }
    let grid = u.grid();
    region.check(grid)?;
    let m = grid.dim();
    let vol = grid.cell_volume();
    let jets = nodal_jets(u);
    let mut rep = IntegralReport {
        region: region.clone(),
        q0,
        measure: 0.0,
        int_w: 0.0,
        int_w_log1p_w: 0.0,
        int_log_weighted_hessian: 0.0,
        int_w_log_power: 0.0,
        int_beta: 0.0,
        capped: 0,
    };
    let mut x = vec![0.0; m];
    for (i, &n) in jets.nodes.iter().enumerate() {
        grid.node_position_into(n, &mut x);
        if !region.contains(&x) {
            continue;
        }
        let g = &jets.grad[i * m..(i + 1) * m];
        let hs = &jets.hess[i * m * m..(i + 1) * m * m];
        let Some(c) = curvature_terms(g, hs, policy.w_max) else {
            rep.capped += 1;
            continue;
        };
        let w = c.w;
        let lw = 1.0 + w.ln();
        rep.measure += vol;
        rep.int_w += vol * w;
        rep.int_w_log1p_w += vol * w * w.ln_1p();
        rep.int_log_weighted_hessian +=
            vol * lw.powf(q0) * (w * c.hess2 + w.powi(3) * c.hess_du2 + w.powi(5) * c.hess_du_du * c.hess_du_du);
        rep.int_w_log_power += vol * w * lw.powf(q0 + 1.0);
        rep.int_beta += vol * w.acosh();
    }
    Ok(rep)
}

fn radicand(x: &[f64], o: &[f64], du: f64) -> (f64, f64) {
    let r2: f64 = x.iter().zip(o).map(|(a, b)| (a - b) * (a - b)).sum();
    (r2 - du * du, r2)
}

/// `l_o(x) = sqrt(|x - o|^2 - (u(x) - u(o))^2)` on domain nodes.
pub fn lorentzian_distance(u: &ScalarField, o: usize) -> Result<ScalarField> {
    let grid = u.grid();
    if !grid.is_domain_node(o) {
        return Err(Error::Argument(format!("node {o} is not in the domain")));
    }
    let v = u.values();
    let po = grid.node_position(o);
    let mut x = vec![0.0; grid.dim()];
    let mut out = vec![0.0; grid.node_count()];
    for n in 0..grid.node_count() {
        if !grid.is_domain_node(n) {
            continue;
        }
        grid.node_position_into(n, &mut x);
        let (rad, r2) = radicand(&x, &po, v[n] - v[o]);
        if rad < -1e-9 * r2 {
            return Err(Error::SpacelikeViolation(format!(
                "|u(x) - u(o)| exceeds |x - o| between nodes {n} and {o}"
            )));
        }
        out[n] = rad.max(0.0).sqrt();
    }
    ScalarField::extended(grid.clone(), out)
}

/// Domain nodes with `l_o < radius` for some `o` in `centers`.
pub fn lorentzian_ball(u: &ScalarField, centers: &[usize], radius: f64) -> Result<Vec<bool>> {
    let grid = u.grid();
    let mut mask = vec![false; grid.node_count()];
    for &o in centers {
        let d = lorentzian_distance(u, o)?;
        for n in 0..grid.node_count() {
            if grid.is_domain_node(n) && d.values()[n] < radius {
                mask[n] = true;
            }
        }
    }
    Ok(mask)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightSegment {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// `|x - y| - |u(x) - u(y)|`.
    pub slack: f64,
}

impl LightSegment {
    pub fn length(&self) -> f64 {
        dist(&self.start, &self.end)
    }

    /// Euclidean distance from `p` to the segment.
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        let d: Vec<f64> = self.end.iter().zip(&self.start).map(|(a, b)| a - b).collect();
        let l2: f64 = d.iter().map(|v| v * v).sum();
        let t = if l2 > 0.0 {
            (p.iter().zip(&self.start).zip(&d).map(|((x, s), dk)| (x - s) * dk).sum::<f64>() / l2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        p.iter()
            .zip(&self.start)
            .zip(&d)
            .map(|((x, s), dk)| (x - s - t * dk).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Points along the segment at spacing at most `step`.
    pub fn samples(&self, step: f64) -> Vec<Vec<f64>> {
        let n = (self.length() / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                self.start.iter().zip(&self.end).map(|(a, b)| a + t * (b - a)).collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightSegmentReport {
    pub tolerance: f64,
    pub min_length: f64,
    pub segments: Vec<LightSegment>,
    /// Nodes within half a cell of a reported segment.
    pub covered_nodes: Vec<usize>,
    pub seeds: usize,
    /// Fraction of randomly sampled nodes that start a null pair.
    pub sampled_null_fraction: f64,
    pub globally_null: bool,
}

impl LightSegmentReport {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let m = self.segments.first().map_or(0, |s| s.start.len());
        let mut header: Vec<String> = (0..m).map(|k| format!("x{k}")).collect();
        header.extend((0..m).map(|k| format!("y{k}")));
        header.push("slack".into());
        writeln!(out, "{}", header.join(","))?;
        for s in &self.segments {
            let row: Vec<String> = s
                .start
                .iter()
                .chain(&s.end)
                .map(|v| format!("{v:.12e}"))
                .chain(std::iter::once(format!("{:.6e}", s.slack)))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `2 h / diam`, the default light-segment tolerance.
pub fn default_light_tolerance(grid: &Grid) -> f64 {
    2.0 * grid.max_spacing() / grid.bounding_diameter()
}

/// Fraction of cells, by descending `w`, used as seeds.
const SEED_FRACTION: f64 = 0.01;
/// Random nodes probed for the globally-null flag.
const NULL_SAMPLES: usize = 400;

struct Scanner<'a> {
    grid: &'a Grid,
    u: &'a [f64],
    tol: f64,
    step: f64,
}

impl Scanner<'_> {
    fn pair_ok(&self, a: usize, b: usize) -> Option<f64> {
        let (pa, pb) = (self.grid.node_position(a), self.grid.node_position(b));
        let d = dist(&pa, &pb);
        let slack = d - (self.u[a] - self.u[b]).abs();
        (slack <= self.tol * d && self.inside(&pa, &pb)).then_some(slack)
    }

    /// Segment stays in the closure of the active cells.
    fn inside(&self, a: &[f64], b: &[f64]) -> bool {
        let n = (dist(a, b) / (0.5 * self.step)).ceil() as usize;
        (0..=n).all(|i| {
            let t = i as f64 / n.max(1) as f64;
            let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect();
            self.grid.interpolation_weights(&p).is_some_and(|ws| {
                ws.iter().all(|&(node, w)| w == 0.0 || self.grid.is_domain_node(node))
            })
        })
    }

    /// Farthest node along `dir` from `x0` still forming a null pair.
    fn walk(&self, x0: usize, dir: &[f64]) -> usize {
        let p0 = self.grid.node_position(x0);
        let mut best = x0;
        for k in 1.. {
            let p: Vec<f64> = p0.iter().zip(dir).map(|(a, d)| a + k as f64 * self.step * d).collect();
            if self.grid.locate(&p).is_none() {
                break;
            }
            let y = self.grid.nearest_node(&p);
            if !self.grid.is_domain_node(y) || self.pair_ok(x0, y).is_none() {
                break;
            }
            best = y;
        }
        best
    }

    /// Maximal null segment through `x0` along `dir`.
    fn grow(&self, x0: usize, dir: &[f64]) -> Option<LightSegment> {
        let back: Vec<f64> = dir.iter().map(|v| -v).collect();
        let (a, b) = (self.walk(x0, &back), self.walk(x0, dir));
        let (a, b) = if a != b && self.pair_ok(a, b).is_some() {
            (a, b)
        } else {
            let pa = self.grid.node_position(a);
            let pb = self.grid.node_position(b);
            let p0 = self.grid.node_position(x0);
            if dist(&pa, &p0) >= dist(&pb, &p0) {
                (a, x0)
            } else {
                (x0, b)
            }
        };
        if a == b {
            return None;
        }
        let slack = self.pair_ok(a, b)?;
        Some(LightSegment {
            start: self.grid.node_position(a),
            end: self.grid.node_position(b),
            slack,
        })
    }
}

/// Unit direction of `Du` at node `n` (average of incident cell gradients),
/// or `None` where the slope is small.
fn node_direction(grid: &Grid, cell_grad: &[f64], n: usize) -> Option<Vec<f64>> {
    let m = grid.dim();
    let mi = grid.node_multi_index(n);
    let mut g = vec![0.0; m];
    let mut cnt = 0;
    let mut cmi = vec![0usize; m];
    'corners: for b in 0..1usize << m {
        for k in 0..m {
            let lower = b >> k & 1;
            if mi[k] < lower {
                continue 'corners;
            }
            cmi[k] = mi[k] - lower;
        }
        if let Some(c) = grid.cell_from_multi_index(&cmi) {
            if grid.is_active_cell(c) {
                for k in 0..m {
                    g[k] += cell_grad[c * m + k];
                }
                cnt += 1;
            }
        }
    }
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt() / cnt.max(1) as f64;
    if cnt == 0 || norm < 0.5 {
        return None;
    }
    let s = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    Some(g.iter().map(|v| v / s).collect())
}

/// Nodal values of the cell averages: at interior nodes the mean of the
/// incident cell means, i.e. the filter `[1 2 1] / 4` along each axis.
/// Boundary nodes keep their values.
///
/// The cell gradient does not see alternating modes such as
/// `(-1)^(i + j)`, so a discrete minimizer can carry one (staircase
/// boundaries excite it at amplitude O(h^2)). Its node-to-node slopes are
/// O(h) off, which swamps the null test on raw node pairs. The filtered field
/// is the part the gradient controls.
pub fn cell_averaged_values(u: &ScalarField) -> Vec<f64> {
    let grid = u.grid();
    let v = u.values();
    let mut out = v.to_vec();
    let m = grid.dim();
    let strides = grid.strides();
    let mut tmp = v.to_vec();
    // Separable sweep; each pass only touches interior nodes.
    for k in 0..m {
        let s = strides[k];
        for &n in grid.interior_nodes() {
            tmp[n] = 0.25 * (out[n - s] + 2.0 * out[n] + out[n + s]);
        }
        for &n in grid.interior_nodes() {
            out[n] = tmp[n];
        }
    }
    out
}

/// Pairs `(x, y)` of nodes with `|x - y| - |u(x) - u(y)| <= tol |x - y|`,
/// `|x - y| >= 4h` and the segment inside the domain. The test runs on
/// [`cell_averaged_values`].
///
/// Seeds are the nodes of the cells with the largest `w`; from each seed the
/// scan walks both ways along the local gradient direction. Collinear
/// overlapping segments are merged when the union is still null.
pub fn detect_light_segments(u: &ScalarField, tol: Option<f64>) -> Result<LightSegmentReport> {
    let grid = u.grid();
    let tol = tol.unwrap_or_else(|| default_light_tolerance(grid));
    if !(tol > 0.0 && tol < 0.5) {
        return Err(Error::Argument(format!("light tolerance must lie in (0, 0.5), got {tol}")));
    }
    let m = grid.dim();
    let vals = cell_averaged_values(u);
    let scanner = Scanner {
        grid,
        u: &vals,
        tol,
        step: grid.min_spacing(),
    };
    let min_length = 4.0 * grid.max_spacing();
    let mut cell_grad = vec![0.0; grid.cell_count() * m];
    gradient_into(grid, u.values(), &mut cell_grad);

    let mut by_w: Vec<(f64, usize)> = grid
        .active_cells()
        .iter()
        .map(|&c| (cell_grad[c * m..(c + 1) * m].iter().map(|v| v * v).sum::<f64>(), c))
        .collect();
    by_w.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let n_seed_cells = ((by_w.len() as f64 * SEED_FRACTION).ceil() as usize).max(1).min(by_w.len());
    let mut seeds: Vec<usize> = by_w[..n_seed_cells]
        .iter()
        .flat_map(|&(_, c)| grid.corner_offsets().iter().map(move |o| grid.cell_base(c) + o))
        .collect();
    seeds.sort_unstable();
    seeds.dedup();

    let mut segments = Vec::new();
    for &s in &seeds {
        let Some(dir) = node_direction(grid, &cell_grad, s) else {
            continue;
        };
        if let Some(seg) = scanner.grow(s, &dir) {
            if seg.length() >= min_length * (1.0 - 1e-12) {
                segments.push(seg);
            }
        }
    }
    let segments = merge_segments(&scanner, segments);

    let mut covered = Vec::new();
    for seg in &segments {
        for p in seg.samples(0.5 * grid.min_spacing()) {
            let n = grid.nearest_node(&p);
            if dist(&grid.node_position(n), &p) <= 0.5 * grid.max_spacing() * (m as f64).sqrt() {
                covered.push(n);
            }
        }
    }
    covered.sort_unstable();
    covered.dedup();

    let domain: Vec<usize> = (0..grid.node_count()).filter(|&n| grid.is_domain_node(n)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let samples = NULL_SAMPLES.min(domain.len());
    let mut null = 0;
    for _ in 0..samples {
        let n = domain[rng.random_range(0..domain.len())];
        if let Some(dir) = node_direction(grid, &cell_grad, n) {
            if scanner.grow(n, &dir).is_some_and(|s| s.length() >= min_length * (1.0 - 1e-12)) {
                null += 1;
            }
        }
    }
    let frac = if samples > 0 { null as f64 / samples as f64 } else { 0.0 };
    Ok(LightSegmentReport {
        tolerance: tol,
        min_length,
        segments,
        covered_nodes: covered,
        seeds: seeds.len(),
        sampled_null_fraction: frac,
        globally_null: frac > 0.5,
    })
}

fn merge_segments(scanner: &Scanner, mut segs: Vec<LightSegment>) -> Vec<LightSegment> {
    let h = scanner.step;
    // Longest first, so shorter pieces fold into the maximal ones.
    segs.sort_by(|a, b| b.length().total_cmp(&a.length()).then(a.start.partial_cmp(&b.start).unwrap_or(std::cmp::Ordering::Equal)));
    let mut out: Vec<LightSegment> = Vec::new();
    'next: for s in segs {
        for o in out.iter_mut() {
            if o.distance_to(&s.start) <= 0.5 * h && o.distance_to(&s.end) <= 0.5 * h {
                continue 'next;
            }
            let dir_o = unit(&o.start, &o.end);
            let dir_s = unit(&s.start, &s.end);
            let cos: f64 = dir_o.iter().zip(&dir_s).map(|(a, b)| a * b).sum();
            let on_line = |p: &[f64]| {
                let t: f64 = p.iter().zip(&o.start).zip(&dir_o).map(|((x, a), d)| (x - a) * d).sum();
                p.iter()
                    .zip(&o.start)
                    .zip(&dir_o)
                    .map(|((x, a), d)| (x - a - t * d).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    <= 0.5 * h
            };
            let overlaps = o.distance_to(&s.start) <= h || o.distance_to(&s.end) <= h;
            if 1.0 - cos.abs() < 1e-6 && on_line(&s.start) && on_line(&s.end) && overlaps {
                let pts = [o.start.clone(), o.end.clone(), s.start.clone(), s.end.clone()];
                let proj: Vec<f64> = pts
                    .iter()
                    .map(|p| p.iter().zip(&o.start).zip(&dir_o).map(|((x, a), d)| (x - a) * d).sum())
                    .collect();
                let lo = (0..4).min_by(|&i, &j| proj[i].total_cmp(&proj[j])).unwrap_or(0);
                let hi = (0..4).max_by(|&i, &j| proj[i].total_cmp(&proj[j])).unwrap_or(1);
                let (a, b) = (scanner.grid.nearest_node(&pts[lo]), scanner.grid.nearest_node(&pts[hi]));
                if let Some(slack) = scanner.pair_ok(a, b) {
                    *o = LightSegment {
                        start: scanner.grid.node_position(a),
                        end: scanner.grid.node_position(b),
                        slack,
                    };
                    continue 'next;
                }
            }
        }
        out.push(s);
    }
    out
}

fn unit(a: &[f64], b: &[f64]) -> Vec<f64> {
    let d = dist(a, b);
    a.iter().zip(b).map(|(x, y)| (y - x) / d).collect()
}

/// `J_y(r) = int_{B_r(y)} w`, with `w` constant per cell and the ball
/// measure taken exactly: the average of `w` over the cells weighted by
/// their sampled overlap with the ball, times `|B_r|`.
pub fn ball_energy(u: &ScalarField, y: &[f64], r: f64, policy: &GuardPolicy) -> f64 {
    let grid = u.grid();
    let m = grid.dim();
    let ed = crate::energy::energy_density(u, policy);
    let w = ed.w.values();
    let h = grid.spacing();
    let half_diag = 0.5 * h.iter().map(|v| v * v).sum::<f64>().sqrt();
    const SUB: usize = 4;
    let (mut num, mut den) = (0.0, 0.0);
    let mut p = vec![0.0; m];
    for &c in grid.active_cells() {
        let xc = grid.cell_center(c);
        let d = dist(&xc, y);
        let frac = if d + half_diag <= r {
            1.0
        } else if d - half_diag >= r {
            0.0
        } else {
            let base = grid.node_position(grid.cell_base(c));
            let total = SUB.pow(m as u32);
            let mut inside = 0;
            for code in 0..total {
                let mut cc = code;
                for k in 0..m {
                    p[k] = base[k] + h[k] * ((cc % SUB) as f64 + 0.5) / SUB as f64;
                    cc /= SUB;
                }
                if dist(&p, y) < r {
                    inside += 1;
                }
            }
            inside as f64 / total as f64
        };
        num += frac * w[c];
        den += frac;
    }
    if den == 0.0 {
        return 0.0;
    }
    unit_ball_volume(m) * r.powi(m as i32) * num / den
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthMargin {
    pub center: Vec<f64>,
    pub s: f64,
    pub t: f64,
    pub j_s: f64,
    pub j_t: f64,
    pub ball_mass: f64,
    /// `s [J(t)/t + |rho|(B_t)] - J(s)`.
    pub margin: f64,
}

/// Local growth estimate `J_y(s) <= s [J_y(t)/t + |rho|(B_t(y))]`.
pub fn growth_check(
    u: &ScalarField,
    source: &MeasureSource,
    y: usize,
    s: f64,
    t: f64,
    policy: &GuardPolicy,
) -> Result<GrowthMargin> {
    let grid = u.grid();
    if grid.role(y) != NodeRole::Interior {
        return Err(Error::Argument(format!("node {y} is not interior")));
    }
    let center = grid.node_position(y);
    let reach = grid.distance_to_boundary(&center);
    if !(0.0 < s && s < t && t < reach) {
        return Err(Error::Argument(format!(
            "need 0 < s < t < dist(y, boundary) = {reach}, got s = {s}, t = {t}"
        )));
    }
    let j_s = ball_energy(u, &center, s, policy);
    let j_t = ball_energy(u, &center, t, policy);
    let mass = ball_mass(source, &center, t)?;
    Ok(GrowthMargin {
        center,
        s,
        t,
        j_s,
        j_t,
        ball_mass: mass,
        margin: s * (j_t / t + mass) - j_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec, Resolution};
    use std::sync::Arc;

    fn unit_box(m: usize, n: usize) -> Arc<Grid> {
        Arc::new(build_grid(&DomainSpec::unit_box(m), Resolution::Nodes(n)).unwrap())
    }

    fn centered_box(m: usize, n: usize, half: f64) -> Arc<Grid> {
        Arc::new(
            build_grid(
                &DomainSpec::Box {
                    lower: vec![-half; m],
                    upper: vec![half; m],
                },
                Resolution::Nodes(n),
            )
            .unwrap(),
        )
    }

    #[test]
    fn affine_field_has_flat_graph() {
        let g = unit_box(2, 17);
        let u = ScalarField::from_fn(g.clone(), |x| 0.3 * x[0] - 0.5 * x[1] + 1.0);
        let sff = second_fundamental_form_norm(&u, &GuardPolicy::default());
        assert!(sff.evaluated > 0);
        assert!(sff.norm.values().iter().filter(|v| !v.is_nan()).all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn paraboloid_curvature_at_origin() {
        // u = x^2/4: at the origin w = 1, |D^2u| = 1/2 and the gradient terms vanish.
        let g = centered_box(2, 41, 1.0);
        let u = ScalarField::from_fn(g.clone(), |x| 0.25 * x[0] * x[0]);
        let sff = second_fundamental_form_norm(&u, &GuardPolicy::default());
        let o = g.nearest_node(&[0.0, 0.0]);
        assert!((sff.norm.values()[o] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn sff_matches_analytic_on_light_segment_field() {
        use crate::exact::{Counterexample, CounterexampleParams};
        let f = Counterexample::new(CounterexampleParams::new(3, 1, 1.0, 0.2).unwrap()).unwrap();
        let mut errs = Vec::new();
        for n in [41, 81] {
            let g = Arc::new(
                build_grid(
                    &DomainSpec::Box {
                        lower: vec![0.5, 0.5, 0.45],
                        upper: vec![2.0, 2.0, 1.5],
                    },
                    Resolution::Nodes(n),
                )
                .unwrap(),
            );
            let u = ScalarField::from_fn(g.clone(), |x| f.value(x));
            let sff = second_fundamental_form_norm(&u, &GuardPolicy::default());
            let (mut err, mut scale): (f64, f64) = (0.0, 0.0);
            for n in deep_interior_nodes(&g) {
                let x = g.node_position(n);
                let exact = f.second_fundamental_form(&x).unwrap();
                err = err.max((sff.norm.values()[n] - exact).abs());
                scale = scale.max(exact);
            }
            assert!(scale > 1e-2);
            errs.push(err / scale);
        }
        assert!(errs[1] < 0.35 * errs[0] && errs[1] < 1e-2, "{errs:?}");
    }

    #[test]
    fn integrals_of_trivial_fields() {
        let g = unit_box(2, 33);
        let zero = ScalarField::zeros(g.clone());
        let region = Region::Box {
            lower: vec![0.25, 0.25],
            upper: vec![0.75, 0.75],
        };
        let rep = log_weighted_integrals(&zero, 1.5, &region, &GuardPolicy::default()).unwrap();
        assert!((rep.int_w - rep.measure).abs() < 1e-14);
        assert_eq!(rep.int_log_weighted_hessian, 0.0);
        assert!((rep.int_w_log_power - rep.measure).abs() < 1e-14);
        let s = 0.6;
        let aff = ScalarField::from_fn(g.clone(), |x| s * x[0]);
        let rep = log_weighted_integrals(&aff, 1.0, &region, &GuardPolicy::default()).unwrap();
        assert!((rep.int_w - rep.measure / (1.0 - s * s).sqrt()).abs() < 1e-12);
        assert!(rep.int_log_weighted_hessian.abs() < 1e-12);
        let bad = Region::Box {
            lower: vec![0.0, 0.0],
            upper: vec![0.5, 0.5],
        };
        assert!(log_weighted_integrals(&zero, 1.0, &bad, &GuardPolicy::default()).is_err());
    }

    #[test]
    fn radial_integrals_settle_under_refinement() {
        use crate::exact::{radial_field, RadialParams};
        let p = RadialParams::new(2, 1.0, 1.0, 0.0).unwrap();
        let region = Region::Annulus {
            center: vec![0.0, 0.0],
            inner: 0.3,
            outer: 0.6,
        };
        let mut vals = Vec::new();
        for n in [65, 129, 257] {
            let g = Arc::new(
                build_grid(
                    &DomainSpec::Ball {
                        center: vec![0.0, 0.0],
                        radius: 1.0,
                    },
                    Resolution::Nodes(n),
                )
                .unwrap(),
            );
            let u = radial_field(&p, &g).unwrap();
            let rep = log_weighted_integrals(&u, 1.0, &region, &GuardPolicy::default()).unwrap();
            // Normalise by the discrete measure to remove the lattice
            // sampling of the annulus.
            vals.push([rep.int_w / rep.measure, rep.int_log_weighted_hessian / rep.measure]);
        }
        for k in 0..2 {
            let change = (vals[2][k] - vals[1][k]).abs() / vals[2][k].abs();
            assert!(change < 0.02, "entry {k}: {vals:?}");
        }
    }

    #[test]
    fn lorentzian_distance_examples() {
        let g = centered_box(2, 21, 1.0);
        let o = g.nearest_node(&[0.0, 0.0]);
        let c = ScalarField::from_fn(g.clone(), |_| 3.0);
        let d = lorentzian_distance(&c, o).unwrap();
        let x = g.nearest_node(&[0.5, -0.3]);
        assert!((d.values()[x] - (0.5f64.powi(2) + 0.09).sqrt()).abs() < 1e-12);
        let null = ScalarField::from_fn(g.clone(), |x| x[0]);
        let d = lorentzian_distance(&null, o).unwrap();
        assert!(d.values()[g.nearest_node(&[0.7, 0.0])] < 1e-7);
        let slope = ScalarField::from_fn(g.clone(), |x| 0.6 * x[0]);
        let d = lorentzian_distance(&slope, o).unwrap();
        assert!((d.values()[g.nearest_node(&[0.5, 0.0])] - 0.4).abs() < 1e-12);
        let steep = ScalarField::from_fn(g.clone(), |x| 1.5 * x[0]);
        assert!(matches!(lorentzian_distance(&steep, o), Err(Error::SpacelikeViolation(_))));
        // l_o <= |x - o| and balls are nested.
        let r_small = lorentzian_ball(&slope, &[o], 0.3).unwrap();
        let r_big = lorentzian_ball(&slope, &[o], 0.6).unwrap();
        assert!(r_small.iter().zip(&r_big).all(|(a, b)| !a || *b));
        let euclid = lorentzian_ball(&c, &[o], 0.3).unwrap();
        let mut p = vec![0.0; 2];
        for n in 0..g.node_count() {
            g.node_position_into(n, &mut p);
            assert_eq!(euclid[n], (p[0] * p[0] + p[1] * p[1]).sqrt() < 0.3);
        }
    }

    #[test]
    fn light_segments_trivial_cases() {
        let g = unit_box(2, 33);
        let rep = detect_light_segments(&ScalarField::zeros(g.clone()), None).unwrap();
        assert!(rep.is_empty() && !rep.globally_null);
        let u = ScalarField::from_fn(g.clone(), |x| x[1]);
        let rep = detect_light_segments(&u, None).unwrap();
        assert!(rep.globally_null);
        assert!(!rep.is_empty());
        for s in &rep.segments {
            assert!(s.slack <= rep.tolerance * s.length());
            assert!(s.length() >= rep.min_length);
        }
        // Invariance under sign change and shifts.
        let neg = ScalarField::from_fn(g.clone(), |x| 2.0 - x[1]);
        let rep2 = detect_light_segments(&neg, None).unwrap();
        assert_eq!(rep.segments.len(), rep2.segments.len());
        assert_eq!(rep.covered_nodes, rep2.covered_nodes);
        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("x0,x1,y0,y1,slack"));
    }

    #[test]
    fn light_segment_of_a_cone() {
        // u = |x|: every ray from the apex is null; segments through the
        // apex are not.
        let g = centered_box(2, 41, 1.0);
        let u = ScalarField::from_fn(g.clone(), |x| (x[0] * x[0] + x[1] * x[1]).sqrt());
        let rep = detect_light_segments(&u, Some(1e-3)).unwrap();
        assert!(!rep.is_empty());
        for s in &rep.segments {
            let (a, b) = (&s.start, &s.end);
            let ra = (a[0] * a[0] + a[1] * a[1]).sqrt();
            let rb = (b[0] * b[0] + b[1] * b[1]).sqrt();
            assert!(((ra - rb).abs() - s.length()).abs() <= 1e-3 * s.length());
        }
    }

    #[test]
    fn growth_margin_closed_form_for_zero_field() {
        let g = centered_box(2, 65, 1.0);
        let u = ScalarField::zeros(g.clone());
        let y = g.nearest_node(&[0.0, 0.0]);
        let (s, t) = (0.2, 0.45);
        let m = growth_check(&u, &MeasureSource::empty(), y, s, t, &GuardPolicy::default()).unwrap();
        let pi = std::f64::consts::PI;
        let closed = 2.0 * pi * (s * t - s * s) / 2.0;
        assert!((m.margin - closed).abs() < 1e-10, "{} vs {closed}", m.margin);
        assert!(growth_check(&u, &MeasureSource::empty(), y, 0.5, 0.3, &GuardPolicy::default()).is_err());
        assert!(growth_check(&u, &MeasureSource::empty(), y, 0.5, 1.3, &GuardPolicy::default()).is_err());
    }
}
