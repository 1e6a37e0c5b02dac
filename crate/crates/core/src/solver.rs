//! Primal-dual minimization of the discrete Born-Infeld action
//! `h^m sum_cells f(Du) - <rho, u>` over fields pinned to the boundary datum.
//!
//! The saddle form `min_u max_p <Du, p> - f*(p) - <rho, u>` with
//! `f*(p) = sqrt(1 + |p|^2) - 1` is iterated with over-relaxed primal-dual
//! steps. The dual update is the exact proximal map of `f*`, obtained from
//! the prox of `f` through Moreau's identity, so the constraint `|Du| <= 1`
//! is never penalized: at a saddle point `Du = p / sqrt(1 + |p|^2)`.

use std::sync::Arc;
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;
#[cfg(target_arch = "wasm32")]
use web_time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{action_with_load, prox_conjugate_in_place, w_of_norm2, GuardPolicy};
use crate::error::{Error, Result};
use crate::field::{divergence_into, gradient_into, BoundaryDatum, ScalarField, VectorField};
use crate::grid::Grid;
use crate::linalg::GradientLaplacian;
use crate::sources::{mollify, MeasureSource, SourceTerm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Primal step; derived from the operator norm when absent.
    pub tau: Option<f64>,
    /// Dual step; derived from the operator norm when absent.
    pub sigma: Option<f64>,
    /// Initial ratio `sigma / tau` when both steps are derived.
    pub step_ratio: f64,
    /// Stopping tolerance on the combined residual.
    pub tolerance: f64,
    pub guard: GuardPolicy,
    pub deterministic: bool,
    /// Over-relaxation of the primal extrapolation, in `[0, 1]`.
    pub theta: f64,
    /// Rebalance `tau` and `sigma` (keeping their product) from the residuals.
    pub adaptive_steps: bool,
    pub metric: PrimalMetric,
    /// Residuals are evaluated every this many iterations.
    pub check_every: usize,
    /// Action is recorded every this many iterations.
    pub trace_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 200_000,
            tau: None,
            sigma: None,
            step_ratio: 100.0,
            tolerance: 1e-8,
            guard: GuardPolicy::default(),
            deterministic: true,
            theta: 1.0,
            adaptive_steps: true,
            metric: PrimalMetric::Auto,
            check_every: 10,
            trace_every: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.tau.is_some_and(|t| !(t > 0.0)) || self.sigma.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::Config("step sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config("theta must lie in [0, 1]".into()));
        }
        if !(self.step_ratio > 0.0) || self.check_every == 0 || self.trace_every == 0 {
            return Err(Error::Config("step ratio and check intervals must be positive".into()));
        }
        self.guard.validate()
    }
}

/// Norm in which the primal step is taken.
///
/// `Gradient` uses `|Du|^2`, so the primal update solves a linear system
/// with `K^T K` (factored once per grid) and the admissible steps satisfy
/// `tau sigma <= 1` independently of the mesh. `Euclidean` is the plain
/// scheme with `tau sigma ||K||^2 <= 1`. `Auto` picks `Gradient` when its
/// factor fits in [`GRADIENT_METRIC_BUDGET`] bytes and costs at most
/// [`GRADIENT_METRIC_FLOPS`] multiply-adds (planar grids up to a few
/// hundred nodes per side; most three-dimensional grids fall back).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimalMetric {
    #[default]
    Auto,
    Euclidean,
    Gradient,
}

pub const GRADIENT_METRIC_BUDGET: usize = 600 << 20;
pub const GRADIENT_METRIC_FLOPS: f64 = 3e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Action with the Lagrangian evaluated at `min(|Du|, 1)`; exact when
    /// `feasible` holds.
    pub action: f64,
    pub feasible: bool,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub width: f64,
    pub iterations: usize,
    pub converged: bool,
    pub action: f64,
    /// `max |u_j - u_(j-1)|`; `None` for the first stage.
    pub change_sup: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: ScalarField,
    /// Final dual field `p ~ w Du`.
    pub dual: VectorField,
    pub trace: Vec<TracePoint>,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of `div p + rho` scaled by the grid spacing.
    pub stationarity: f64,
    /// Max-norm of `Du - p / sqrt(1 + |p|^2)`.
    pub consistency: f64,
    /// Max over interior nodes of `|h^m (K^T w Du) - load|` divided by the
    /// node's cell volume: the weak-form defect against nodal hat functions.
    pub weak_residual: f64,
    pub wall_time_s: f64,
    pub exceedances: usize,
    pub max_gradient: f64,
    pub action: f64,
    pub operator_norm: f64,
    /// Largest `||u_k||_inf` seen at the residual checks.
    pub max_sup_norm: f64,
    /// `||phi||_inf + diam`, which bounds every admissible field.
    pub sup_bound: f64,
    pub tau: f64,
    pub sigma: f64,
    pub stages: Vec<StageRecord>,
}

impl SolveReport {
    pub fn grid(&self) -> &Arc<Grid> {
        self.solution.grid()
    }
}

/// Estimates `||K||` for the discrete gradient on interior-supported fields.
pub fn operator_norm(grid: &Grid, seed: u64) -> f64 {
    let m = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; grid.node_count()];
    for &n in grid.interior_nodes() {
        x[n] = rng.random_range(-1.0..1.0);
    }
    let mut ku = vec![0.0; grid.cell_count() * m];
    let mut y = vec![0.0; grid.node_count()];
    let mut lambda = 0.0;
    for _ in 0..60 {
        let norm = grid.interior_nodes().iter().map(|&n| x[n] * x[n]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for &n in grid.interior_nodes() {
            x[n] /= norm;
        }
        gradient_into(grid, &x, &mut ku);
        divergence_into(grid, &ku, &mut y);
        // y = -K^T K x
        lambda = grid.interior_nodes().iter().map(|&n| -y[n] * x[n]).sum::<f64>();
        x.iter_mut().for_each(|v| *v = 0.0);
        for &n in grid.interior_nodes() {
            x[n] = -y[n];
        }
    }
    lambda.max(0.0).sqrt()
}

/// Upper bound `||u||_inf <= ||phi||_inf + diam` satisfied by every weakly
/// spacelike field with the given boundary values.
pub fn sup_bound(grid: &Grid, phi: &BoundaryDatum) -> f64 {
    phi.max_abs() + grid.bounding_diameter()
}

/// Initial state of a solve.
#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    pub primal: Option<ScalarField>,
    pub dual: Option<VectorField>,
}

/// Per-grid setup shared by every solve on that grid: the operator norm
/// and, for the gradient metric, the factored `K^T K`.
#[derive(Clone, Debug)]
pub struct SolverContext {
    grid: Arc<Grid>,
    operator_norm: f64,
    laplacian: Option<Arc<GradientLaplacian>>,
}

impl SolverContext {
    pub fn new(grid: &Arc<Grid>, metric: PrimalMetric) -> Result<Self> {
        let use_gradient = match metric {
            PrimalMetric::Euclidean => false,
            PrimalMetric::Gradient => true,
            PrimalMetric::Auto => {
                let (bytes, flops) = GradientLaplacian::cost_estimate(grid);
                bytes <= GRADIENT_METRIC_BUDGET && flops <= GRADIENT_METRIC_FLOPS
            }
        };
        let laplacian = if use_gradient && !grid.interior_nodes().is_empty() {
            Some(Arc::new(GradientLaplacian::new(grid)?))
        } else {
            None
        };
        Ok(SolverContext {
            grid: grid.clone(),
            operator_norm: operator_norm(grid, 0x5eed),
            laplacian,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn uses_gradient_metric(&self) -> bool {
        self.laplacian.is_some()
    }
}

pub fn solve(grid: &Arc<Grid>, phi: &BoundaryDatum, source: &dyn SourceTerm, config: &SolverConfig) -> Result<SolveReport> {
    solve_from(grid, phi, source, config, &WarmStart::default())
}

pub fn solve_from(
    grid: &Arc<Grid>,
    phi: &BoundaryDatum,
    source: &dyn SourceTerm,
    config: &SolverConfig,
    start: &WarmStart,
) -> Result<SolveReport> {
    config.validate()?;
    let ctx = SolverContext::new(grid, config.metric)?;
    solve_in(&ctx, phi, source, config, start)
}

pub fn solve_in(
    ctx: &SolverContext,
    phi: &BoundaryDatum,
    source: &dyn SourceTerm,
    config: &SolverConfig,
    start: &WarmStart,
) -> Result<SolveReport> {
    config.validate()?;
    let grid = &ctx.grid;
    if phi.values().len() != grid.boundary_nodes().len() {
        return Err(Error::Argument("boundary datum does not match the grid".into()));
    }
    let load = source.load(grid)?;
    if load.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("source is not finite".into()));
    }
    let clock = Instant::now();
    let m = grid.dim();
    let vol = grid.cell_volume();
    let ncell = grid.cell_count() * m;
    let nnode = grid.node_count();
    let interior = grid.interior_nodes();

    let rhs: Vec<f64> = load.iter().map(|b| b / vol).collect();

    let mut u = match &start.primal {
        Some(f) => {
            if f.grid().node_count() != nnode {
                return Err(Error::Argument("initial field lives on a different grid".into()));
            }
            f.values().to_vec()
        }
        None => harmonic_extension(grid, phi),
    };
    for (i, v) in u.iter_mut().enumerate() {
        if !grid.is_domain_node(i) {
            *v = 0.0;
        }
    }
    phi.apply(grid, &mut u);
    let mut p = match &start.dual {
        Some(d) => d.values().to_vec(),
        None => {
            // Start from the flux of the initial field.
            let mut du = vec![0.0; ncell];
            gradient_into(grid, &u, &mut du);
            for &c in grid.active_cells() {
                let cell = &mut du[c * m..(c + 1) * m];
                let t: f64 = cell.iter().map(|v| v * v).sum();
                let (w, _) = w_of_norm2(t.min(1.0 - 1e-6), config.guard.w_max);
                cell.iter_mut().for_each(|v| *v *= w);
            }
            du
        }
    };

    // Under the gradient metric the relevant operator norm is exactly one.
    let knorm = if ctx.laplacian.is_some() { 1.0 } else { ctx.operator_norm };
    let (mut tau, mut sigma) = match (config.tau, config.sigma) {
        (Some(t), Some(s)) => (t, s),
        (Some(t), None) => (t, 1.0 / (t * knorm * knorm)),
        (None, Some(s)) => (1.0 / (s * knorm * knorm), s),
        (None, None) => {
            let r = config.step_ratio.sqrt();
            (1.0 / (knorm * r), r / knorm)
        }
    };
    if tau * sigma * knorm * knorm > 1.0 + 1e-9 {
        return Err(Error::Config(format!(
            "steps violate tau sigma ||K||^2 <= 1 (||K|| = {knorm})"
        )));
    }

    let bound = sup_bound(grid, phi);
    let ratio0 = sigma / tau;
    let mut ubar = u.clone();
    let mut u_prev = u.clone();
    let mut ku = vec![0.0; ncell];
    let mut div = vec![0.0; nnode];
    let mut step = vec![0.0; nnode];
    let mut scratch = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let h = grid.min_spacing();
    let mut stationarity = f64::INFINITY;
    let mut consistency = f64::INFINITY;

    let mut balance_alpha = 0.5;
    let mut max_sup = sup_norm(grid, &u);

    for it in 0..config.max_iterations {
        iterations = it + 1;
        gradient_into(grid, &ubar, &mut ku);
        for &c in grid.active_cells() {
            let pc = &mut p[c * m..(c + 1) * m];
            let guess = pc.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (pk, kk) in pc.iter_mut().zip(&ku[c * m..(c + 1) * m]) {
                *pk += sigma * kk;
            }
            prox_conjugate_in_place(pc, sigma, guess);
        }
        divergence_into(grid, &p, &mut div);
        u_prev.copy_from_slice(&u);
        match &ctx.laplacian {
            Some(lap) => {
                for &n in interior {
                    step[n] = div[n] + rhs[n];
                }
                lap.solve_in_place(&mut step, &mut scratch);
                for &n in interior {
                    u[n] += tau * step[n];
                }
            }
            None => {
                // The sup bound holds for every admissible field, so adding it
                // as a constraint leaves the minimizer alone while keeping
                // early iterates from wandering.
                for &n in interior {
                    u[n] = (u[n] + tau * (div[n] + rhs[n])).clamp(-bound, bound);
                }
            }
        }
        for &n in interior {
            ubar[n] = u[n] + config.theta * (u[n] - u_prev[n]);
        }

        let check = (it + 1) % config.check_every == 0 || it + 1 == config.max_iterations;
        if check {
            // div is -K^T p at the current dual; stationarity is div p + rho.
            stationarity = interior
                .iter()
                .map(|&n| (div[n] + rhs[n]).abs())
                .fold(0.0, f64::max)
                * h;
            gradient_into(grid, &u, &mut ku);
            consistency = 0.0;
            let mut mismatch2 = 0.0;
            let mut station2 = 0.0;
            for &c in grid.active_cells() {
                let pc = &p[c * m..(c + 1) * m];
                let s = (1.0 + pc.iter().map(|v| v * v).sum::<f64>()).sqrt();
                let mut d2 = 0.0;
                for k in 0..m {
                    let d = ku[c * m + k] - pc[k] / s;
                    d2 += d * d;
                }
                mismatch2 += d2;
                consistency = f64::max(consistency, d2.sqrt());
            }
            // Primal residual for step balancing: the realised step, which
            // equals the stationarity defect unless the sup clamp is active.
            for &n in interior {
                let r = match ctx.laplacian {
                    Some(_) => (div[n] + rhs[n]) * h,
                    None => (u[n] - u_prev[n]) / tau * h,
                };
                station2 += r * r;
            }
            let residual = stationarity.max(consistency);
            max_sup = max_sup.max(sup_norm(grid, &u));
            if (it + 1) % config.trace_every == 0 || residual <= config.tolerance {
                let a = action_with_load(grid, &u, &load);
                trace.push(TracePoint {
                    iteration: it + 1,
                    action: a.lagrangian - a.pairing,
                    feasible: a.feasible,
                    residual,
                });
            }
            if residual <= config.tolerance {
                converged = true;
                break;
            }
            if config.adaptive_steps && config.tau.is_none() && config.sigma.is_none() {
                let primal = (station2 / interior.len().max(1) as f64).sqrt();
                let dual = (mismatch2 / grid.active_cells().len().max(1) as f64).sqrt();
                // tau sigma stays fixed; the ratio is kept within 1e3 of its start.
                let drift = (sigma / tau) / ratio0;
                if primal > 2.0 * dual && drift > 1e-3 {
                    tau /= 1.0 - balance_alpha;
                    sigma *= 1.0 - balance_alpha;
                    balance_alpha *= 0.95;
                } else if dual > 2.0 * primal && drift < 1e3 {
                    tau *= 1.0 - balance_alpha;
                    sigma /= 1.0 - balance_alpha;
                    balance_alpha *= 0.95;
                }
            }
        }
    }

    let solution = ScalarField::from_values(grid.clone(), u.clone())
        .map_err(|_| Error::Argument("iteration diverged to non-finite values".into()))?;
    let a = action_with_load(grid, &u, &load);
    let (exceedances, max_gradient, weak_residual) = final_diagnostics(grid, &u, &load, &config.guard);
    Ok(SolveReport {
        dual: VectorField::from_values(grid.clone(), p).unwrap_or_else(|_| VectorField::zeros(grid.clone())),
        solution,
        trace,
        iterations,
        converged,
        stationarity,
        consistency,
        weak_residual,
        wall_time_s: clock.elapsed().as_secs_f64(),
        exceedances,
        max_gradient,
        action: a.total,
        operator_norm: ctx.operator_norm,
        max_sup_norm: max_sup,
        sup_bound: sup_bound(grid, phi),
        tau,
        sigma,
        stages: Vec::new(),
    })
}

/// Discrete harmonic extension of the boundary datum (five-point Laplacian,
/// conjugate gradients), the default starting field. It reproduces affine
/// data exactly and obeys the maximum principle.
pub fn harmonic_extension(grid: &Grid, phi: &BoundaryDatum) -> Vec<f64> {
    let n = grid.node_count();
    let interior = grid.interior_nodes();
    let strides = grid.strides();
    let weights: Vec<f64> = grid.spacing().iter().map(|h| 1.0 / (h * h)).collect();
    let diag: f64 = 2.0 * weights.iter().sum::<f64>();
    let mut u = vec![0.0; n];
    phi.apply(grid, &mut u);
    let apply = |x: &[f64], out: &mut [f64]| {
        for &i in interior {
            let mut s = diag * x[i];
            for (st, w) in strides.iter().zip(&weights) {
                s -= w * (x[i - st] + x[i + st]);
            }
            out[i] = s;
        }
    };
    // Residual r = -A u on interior nodes with u carrying the boundary values.
    let mut r = vec![0.0; n];
    apply(&u, &mut r);
    for &i in interior {
        r[i] = -r[i];
    }
    let norm0 = interior.iter().map(|&i| r[i] * r[i]).sum::<f64>().sqrt();
    if norm0 == 0.0 {
        return u;
    }
    let mut d = vec![0.0; n];
    for &i in interior {
        d[i] = r[i];
    }
    let mut ad = vec![0.0; n];
    let mut rr = norm0 * norm0;
    for _ in 0..10 * interior.len().max(1) {
        apply(&d, &mut ad);
        let dad: f64 = interior.iter().map(|&i| d[i] * ad[i]).sum();
        let alpha = rr / dad;
        for &i in interior {
            u[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        let rr_new: f64 = interior.iter().map(|&i| r[i] * r[i]).sum();
        if rr_new.sqrt() <= 1e-14 * norm0 {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for &i in interior {
            d[i] = r[i] + beta * d[i];
        }
    }
    u
}

fn sup_norm(grid: &Grid, u: &[f64]) -> f64 {
    u.iter()
        .enumerate()
        .filter(|(i, _)| grid.is_domain_node(*i))
        .fold(0.0, |acc, (_, v)| acc.max(v.abs()))
}

fn final_diagnostics(grid: &Grid, u: &[f64], load: &[f64], guard: &GuardPolicy) -> (usize, f64, f64) {
    let m = grid.dim();
    let mut du = vec![0.0; grid.cell_count() * m];
    gradient_into(grid, u, &mut du);
    let mut exceed = 0;
    let mut gmax: f64 = 0.0;
    for &c in grid.active_cells() {
        let cell = &mut du[c * m..(c + 1) * m];
        let t: f64 = cell.iter().map(|v| v * v).sum();
        gmax = gmax.max(t.sqrt());
        let (w, capped) = w_of_norm2(t, guard.w_max);
        exceed += usize::from(capped);
        cell.iter_mut().for_each(|v| *v *= w);
    }
    let mut div = vec![0.0; grid.node_count()];
    divergence_into(grid, &du, &mut div);
    let vol = grid.cell_volume();
    let weak = grid
        .interior_nodes()
        .iter()
        .map(|&n| (div[n] + load[n] / vol).abs())
        .fold(0.0, f64::max)
        * grid.min_spacing();
    (exceed, gmax, weak)
}

/// Solves a sequence of mollified problems with decreasing kernel widths,
/// warm-starting each stage from the previous one.
pub fn continuation_solve(
    grid: &Arc<Grid>,
    phi: &BoundaryDatum,
    source: &MeasureSource,
    widths: &[f64],
    config: &SolverConfig,
    start: &WarmStart,
) -> Result<SolveReport> {
    if widths.is_empty() {
        return Err(Error::Argument("continuation needs at least one width".into()));
    }
    if widths.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Argument("continuation widths must be strictly decreasing".into()));
    }
    config.validate()?;
    let ctx = SolverContext::new(grid, config.metric)?;
    let mut warm = start.clone();
    let mut stages = Vec::new();
    let mut total_iterations = 0;
    let mut total_time = 0.0;
    let mut previous: Option<ScalarField> = None;
    let mut last = None;
    for &width in widths {
        let smooth = mollify(source, grid, width)?;
        let report = solve_in(&ctx, phi, &smooth, config, &warm)?;
        total_iterations += report.iterations;
        total_time += report.wall_time_s;
        stages.push(StageRecord {
            width,
            iterations: report.iterations,
            converged: report.converged,
            action: report.action,
            change_sup: previous.as_ref().map(|prev| prev.max_diff(&report.solution)),
        });
        previous = Some(report.solution.clone());
        warm = WarmStart {
            primal: Some(report.solution.clone()),
            dual: Some(report.dual.clone()),
        };
        let stop = !report.converged;
        last = Some(report);
        if stop {
            break;
        }
    }
    let mut report = last.expect("at least one stage ran");
    report.iterations = total_iterations;
    report.wall_time_s = total_time;
    report.converged = stages.iter().all(|s| s.converged) && stages.len() == widths.len();
    report.stages = stages;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec, Resolution};
    use crate::sources::MollifiedSource;

    fn unit_box(m: usize, n: usize) -> Arc<Grid> {
        Arc::new(
            build_grid(
                &DomainSpec::Box {
                    lower: vec![-1.0; m],
                    upper: vec![1.0; m],
                },
                Resolution::Nodes(n),
            )
            .unwrap(),
        )
    }

    #[test]
    fn zero_data_gives_zero() {
        let grid = unit_box(2, 9);
        let rep = solve(&grid, &BoundaryDatum::zero(&grid), &MollifiedSource::zero(grid.clone()), &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.solution.max_abs(), 0.0);
    }

    /// Affine datum; `zero_start` begins from zero interior values instead
    /// of the harmonic extension (which is already the answer).
    fn plane(m: usize, n: usize, metric: PrimalMetric, zero_start: bool) -> SolveReport {
        let grid = unit_box(m, n);
        let mut slope = vec![0.0; m];
        slope[0] = 0.3;
        slope[m - 1] += 0.4;
        let phi = BoundaryDatum::affine(&grid, &slope, 0.2).unwrap();
        let cfg = SolverConfig {
            tolerance: 1e-11,
            metric,
            ..Default::default()
        };
        let start = WarmStart {
            primal: zero_start.then(|| ScalarField::zeros(grid.clone())),
            dual: None,
        };
        let rep = solve_from(&grid, &phi, &MollifiedSource::zero(grid.clone()), &cfg, &start).unwrap();
        let exact = ScalarField::from_fn(grid.clone(), |x| 0.2 + x.iter().zip(&slope).map(|(a, b)| a * b).sum::<f64>());
        let err = rep.solution.max_diff(&exact);
        assert!(rep.converged, "{} iterations", rep.iterations);
        assert!(err <= 1e-8, "m = {m}: error {err}");
        assert!(rep.max_sup_norm <= rep.sup_bound);
        rep
    }

    #[test]
    fn planes_are_reproduced_in_two_dimensions() {
        let a = plane(2, 33, PrimalMetric::Gradient, true);
        let b = plane(2, 33, PrimalMetric::Euclidean, true);
        assert!(a.iterations < b.iterations);
        assert!(plane(2, 33, PrimalMetric::Auto, false).iterations <= 10);
    }

    #[test]
    fn planes_are_reproduced_in_three_dimensions() {
        plane(3, 33, PrimalMetric::Auto, false);
        plane(3, 17, PrimalMetric::Euclidean, true);
    }
}
