//! The Born-Infeld Lagrangian `f(p) = 1 - sqrt(1 - |p|^2)`, the discrete
//! action, the energy density `w = (1 - |Du|^2)^(-1/2)`, the proximal map of
//! `f`, and the weak-form and variational-inequality defects.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{divergence_into, gradient_into, ScalarField};
use crate::grid::{Grid, NodeRole};
use crate::sources::{NodalLoad, SourceTerm};

/// Gradients this close to unit length are treated as null.
pub const NULL_GRADIENT_GAP: f64 = 1e-13;
/// Slack allowed when testing `|Du| <= 1`.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    pub total: f64,
    pub lagrangian: f64,
    pub pairing: f64,
    pub feasible: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardPolicy {
    /// Iterates keep `|p| <= 1 - slack` where the scheme projects.
    pub slack: f64,
    /// Energy densities above this are reported as capped.
    pub w_max: f64,
}

impl Default for GuardPolicy {
    fn default() -> Self {
        GuardPolicy {
            slack: 0.0,
            w_max: 1e6,
        }
    }
}

impl GuardPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.slack) || !(self.w_max >= 1.0) {
            return Err(Error::Config(format!("invalid guard policy {self:?}")));
        }
        Ok(())
    }
}

/// `1 - sqrt(1 - |p|^2)`, or `+inf` outside the closed unit ball.
pub fn lagrangian_density(p: &[f64]) -> f64 {
    lagrangian_of_norm2(p.iter().map(|v| v * v).sum())
}

pub(crate) fn lagrangian_of_norm2(t: f64) -> f64 {
    if t > 1.0 {
        f64::INFINITY
    } else {
        t / (1.0 + (1.0 - t).sqrt())
    }
}

/// Partial sum `sum_{j=1}^{terms} b_j t^j` of the series of `1 - sqrt(1 - t)`,
/// `b_j = (2j-2)! / (j! (j-1)! 2^(2j-1))`.
pub fn one_minus_sqrt_series(t: f64, terms: usize) -> f64 {
    let mut b = 0.5;
    let mut tj = t;
    let mut sum = 0.0;
    for j in 1..=terms {
        sum += b * tj;
        b *= (2 * j - 1) as f64 / (2 * (j + 1)) as f64;
        tj *= t;
    }
    sum
}

/// Solution of the radial prox equation in the dual variable `s = r / sqrt(1 - r^2)`:
/// `s / sqrt(1 + s^2) + tau s = q` for `q >= 0`.
///
/// In this variable the equation is well conditioned for every `q`, which
/// the primal form `r + tau r / sqrt(1 - r^2) = q` is not as `r -> 1`.
pub(crate) fn solve_prox_scalar(q: f64, tau: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    // g is concave and increasing, so Newton started left of the root
    // climbs monotonically. Both starting values are lower bounds since
    // s / sqrt(1 + s^2) <= min(s, 1).
    let mut s = ((q - 1.0) / tau).max(q / (1.0 + tau));
    let hi = q / tau;
    for _ in 0..60 {
        let e = 1.0 + s * s;
        let root = e.sqrt();
        let v = s / root + tau * s - q;
        if v >= 0.0 {
            return s;
        }
        let step = -v / (1.0 / (e * root) + tau);
        let next = (s + step).min(hi);
        if next <= s || step <= 1e-15 * next {
            return next;
        }
        s = next;
    }
    s
}

/// `argmin_p f(p) + |p - q|^2 / (2 tau)`.
pub fn prox_lagrangian(q: &[f64], tau: f64) -> Vec<f64> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; q.len()];
    }
    let s = solve_prox_scalar(norm, tau);
    let r = s / (1.0 + s * s).sqrt();
    q.iter().map(|v| v * r / norm).collect()
}

/// Residual `r + tau s - |q|` of the radial optimality equation at the
/// prox output, with `s = r / sqrt(1 - r^2)` recovered in the dual variable.
pub fn prox_residual(q: &[f64], tau: f64) -> f64 {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let s = solve_prox_scalar(norm, tau);
    let r = s / (1.0 + s * s).sqrt();
    r + tau * s - norm
}

/// `prox_{sigma f*}(v)` for the conjugate `f*(p) = sqrt(1 + |p|^2) - 1`, by
/// Moreau's identity applied to [`prox_lagrangian`]. Writes the result in
/// place. `guess` is a hint for the output norm (the previous dual iterate
/// in an iterative scheme); any nonnegative value is safe.
pub(crate) fn prox_conjugate_in_place(v: &mut [f64], sigma: f64, guess: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    // v - sigma prox_{f/sigma}(v/sigma) = s v/|v| with s + sigma s/sqrt(1+s^2) = |v|.
    let s = solve_conjugate_scalar(norm, sigma, guess);
    let scale = s / norm;
    for x in v.iter_mut() {
        *x *= scale;
    }
}

/// Root of `s + sigma s / sqrt(1 + s^2) = a`, Newton from `guess` clamped
/// to the bracket `[max(a - sigma, a / (1 + sigma)), a]`. The left side is
/// concave and increasing in `s`, so a step from the right of the root lands
/// on its left and the iterates increase monotonically from there.
fn solve_conjugate_scalar(a: f64, sigma: f64, guess: f64) -> f64 {
    let lo = (a - sigma).max(a / (1.0 + sigma));
    let mut s = guess.clamp(lo, a);
    for _ in 0..60 {
        let e = 1.0 + s * s;
        let root = e.sqrt();
        let g = s + sigma * s / root - a;
        let step = -g / (1.0 + sigma / (e * root));
        let next = (s + step).clamp(lo, a);
        if (next - s).abs() <= 1e-14 * next {
            return next;
        }
        s = next;
    }
    s
}

/// Cell-wise quantities on active cells.
#[derive(Clone, Debug)]
pub struct CellField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl CellField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// One value per lattice cell; inactive cells hold NaN.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn active_values(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.grid.active_cells().iter().map(|&c| (c, self.values[c]))
    }

    pub fn max(&self) -> f64 {
        self.active_values().map(|(_, v)| v).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Average of the incident active cells at each domain node.
    pub fn to_nodes(&self) -> ScalarField {
        let g = &self.grid;
        let mut sum = vec![0.0; g.node_count()];
        let mut cnt = vec![0u32; g.node_count()];
        for &c in g.active_cells() {
            let b = g.cell_base(c);
            for o in g.corner_offsets() {
                sum[b + o] += self.values[c];
                cnt[b + o] += 1;
            }
        }
        let vals = sum
            .iter()
            .zip(&cnt)
            .map(|(s, n)| if *n > 0 { s / *n as f64 } else { 0.0 })
            .collect();
        ScalarField::extended(g.clone(), vals).expect("sizes match")
    }
}

#[derive(Clone, Debug)]
pub struct EnergyDensity {
    pub w: CellField,
    /// Cells whose `w` was capped at `w_max` (null or superluminal gradients).
    pub capped: usize,
    pub w_max: f64,
}

/// Gradient norm per active cell (NaN elsewhere).
pub fn gradient_norms(u: &ScalarField) -> CellField {
    let g = u.grid();
    let m = g.dim();
    let mut du = vec![0.0; g.cell_count() * m];
    gradient_into(g, u.values(), &mut du);
    let mut values = vec![f64::NAN; g.cell_count()];
    for &c in g.active_cells() {
        values[c] = du[c * m..(c + 1) * m].iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    CellField {
        grid: g.clone(),
        values,
    }
}

pub(crate) fn w_of_norm2(t: f64, w_max: f64) -> (f64, bool) {
    let gap = 1.0 - t;
    if gap <= 2.0 * NULL_GRADIENT_GAP {
        return (w_max, true);
    }
    let w = 1.0 / gap.sqrt();
    if w > w_max {
        (w_max, true)
    } else {
        (w, false)
    }
}

/// `w = (1 - |Du|^2)^(-1/2)` per active cell, capped at `policy.w_max`.
pub fn energy_density(u: &ScalarField, policy: &GuardPolicy) -> EnergyDensity {
    let norms = gradient_norms(u);
    let mut capped = 0;
    let values = norms
        .values
        .iter()
        .map(|r| {
            if r.is_nan() {
                return f64::NAN;
            }
            let (w, cap) = w_of_norm2(r * r, policy.w_max);
            capped += usize::from(cap);
            w
        })
        .collect();
    EnergyDensity {
        w: CellField {
            grid: u.grid().clone(),
            values,
        },
        capped,
        w_max: policy.w_max,
    }
}

/// Discrete action `h^m sum_cells f(Du) - <rho, u>`.
pub fn action(u: &ScalarField, source: &dyn SourceTerm) -> Result<ActionValue> {
    let load = source.load(u.grid())?;
    Ok(action_with_load(u.grid(), u.values(), &load))
}

pub(crate) fn action_with_load(grid: &Grid, u: &[f64], load: &[f64]) -> ActionValue {
    let m = grid.dim();
    let mut du = vec![0.0; grid.cell_count() * m];
    gradient_into(grid, u, &mut du);
    let mut lag = 0.0;
    let mut feasible = true;
    for &c in grid.active_cells() {
        let t: f64 = du[c * m..(c + 1) * m].iter().map(|v| v * v).sum();
        if t > (1.0 + FEASIBILITY_SLACK).powi(2) {
            feasible = false;
        }
        lag += lagrangian_of_norm2(t.min(1.0));
    }
    lag *= grid.cell_volume();
    let pairing: f64 = load.iter().zip(u).map(|(a, b)| a * b).sum();
    ActionValue {
        total: if feasible { lag - pairing } else { f64::INFINITY },
        lagrangian: lag,
        pairing,
        feasible,
    }
}

/// Flux `w Du` per active cell, with `w` capped at `w_max`.
pub(crate) fn flux(grid: &Grid, u: &[f64], w_max: f64) -> Vec<f64> {
    let m = grid.dim();
    let mut du = vec![0.0; grid.cell_count() * m];
    gradient_into(grid, u, &mut du);
    for &c in grid.active_cells() {
        let cell = &mut du[c * m..(c + 1) * m];
        let t: f64 = cell.iter().map(|v| v * v).sum();
        let (w, _) = w_of_norm2(t, w_max);
        cell.iter_mut().for_each(|v| *v *= w);
    }
    du
}

/// `h^m sum_cells w Du . D eta - <rho, eta>` for a test function vanishing
/// off the interior nodes.
pub fn weak_residual(u: &ScalarField, source: &dyn SourceTerm, eta: &ScalarField, w_max: f64) -> Result<f64> {
    let g = u.grid();
    check_vanishes_off_interior(g, eta.values())?;
    let load = source.load(g)?;
    Ok(weak_residual_with_load(g, u.values(), &load, eta.values(), w_max))
}

pub(crate) fn weak_residual_with_load(grid: &Grid, u: &[f64], load: &[f64], eta: &[f64], w_max: f64) -> f64 {
    let m = grid.dim();
    let fl = flux(grid, u, w_max);
    let mut de = vec![0.0; grid.cell_count() * m];
    gradient_into(grid, eta, &mut de);
    let mut lhs = 0.0;
    for &c in grid.active_cells() {
        for k in 0..m {
            lhs += fl[c * m + k] * de[c * m + k];
        }
    }
    lhs * grid.cell_volume() - load.iter().zip(eta).map(|(a, b)| a * b).sum::<f64>()
}

fn check_vanishes_off_interior(grid: &Grid, eta: &[f64]) -> Result<()> {
    if eta.len() != grid.node_count() {
        return Err(Error::Argument("test function lives on a different grid".into()));
    }
    let bad = eta
        .iter()
        .zip(grid.roles())
        .any(|(v, r)| *r != NodeRole::Interior && *v != 0.0);
    if bad {
        return Err(Error::Argument("test function must vanish on boundary nodes".into()));
    }
    Ok(())
}

/// The source for which `u` is the exact discrete minimizer among fields
/// with its boundary values: `b = h^m K^T (w Du)`. Fails if some cell of
/// `u` is not strictly spacelike.
pub fn discrete_source(u: &ScalarField) -> Result<NodalLoad> {
    let g = u.grid();
    let ed = energy_density(u, &GuardPolicy { w_max: f64::INFINITY, ..GuardPolicy::default() });
    if ed.capped > 0 {
        return Err(Error::SpacelikeViolation(format!(
            "{} cells have |Du| >= 1; no finite flux",
            ed.capped
        )));
    }
    let fl = flux(g, u.values(), f64::INFINITY);
    let mut div = vec![0.0; g.node_count()];
    divergence_into(g, &fl, &mut div);
    let vol = g.cell_volume();
    Ok(NodalLoad {
        load: div.iter().map(|d| -vol * d).collect(),
        tag: "discrete".into(),
    })
}

/// `<rho, u - psi> - h^m sum_cells w Du . (Du - D psi)`; nonnegative at the
/// minimizer for every feasible competitor with the same boundary values.
pub fn variational_inequality_gap(
    u: &ScalarField,
    source: &dyn SourceTerm,
    psi: &ScalarField,
    w_max: f64,
) -> Result<f64> {
    let g = u.grid();
    let m = g.dim();
    for &n in g.boundary_nodes() {
        let (a, b) = (u.values()[n], psi.values()[n]);
        if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
            return Err(Error::Argument("competitor must match u on boundary nodes".into()));
        }
    }
    let mut dpsi = vec![0.0; g.cell_count() * m];
    gradient_into(g, psi.values(), &mut dpsi);
    for &c in g.active_cells() {
        let t: f64 = dpsi[c * m..(c + 1) * m].iter().map(|v| v * v).sum();
        if t > (1.0 + FEASIBILITY_SLACK).powi(2) {
            return Err(Error::Argument("competitor is not weakly spacelike".into()));
        }
    }
    let load = source.load(g)?;
    let diff: Vec<f64> = u.values().iter().zip(psi.values()).map(|(a, b)| a - b).collect();
    Ok(-weak_residual_with_load(g, u.values(), &load, &diff, w_max))
}
