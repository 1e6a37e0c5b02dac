use std::f64::consts::PI;
use std::sync::Arc;

use borninfeld::exact::{radial_field, RadialParams};
use borninfeld::field::BoundaryDatum;
use borninfeld::grid::{build_grid, DomainSpec, Resolution};
use borninfeld::solver::{continuation_solve, PrimalMetric, SolverConfig, WarmStart};
use borninfeld::sources::{MeasureSource, PointCharge};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(257);
    let tol: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-6);
    let adaptive = args.get(3).map(|s| s == "1").unwrap_or(true);
    let grid = Arc::new(
        build_grid(&DomainSpec::Ball { center: vec![0.0, 0.0], radius: 1.0 }, Resolution::Nodes(n)).unwrap(),
    );
    let h = grid.min_spacing();
    let phi = BoundaryDatum::zero(&grid);
    let src = MeasureSource::point_charges(vec![PointCharge { position: vec![0.0, 0.0], weight: 2.0 * PI }]);
    let widths: Vec<f64> = [16.0, 8.0, 4.0, 2.0].iter().map(|k| k * h).collect();
    let ratio: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let metric = match args.get(5).map(|s| s.as_str()) {
        Some("e") => PrimalMetric::Euclidean,
        _ => PrimalMetric::Gradient,
    };
    let cfg = SolverConfig { tolerance: tol, adaptive_steps: adaptive, max_iterations: 100_000, step_ratio: ratio, metric, ..Default::default() };
    let seed: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut start = WarmStart::default();
    if seed > 0 {
        let mut state = seed;
        let vals: Vec<f64> = (0..grid.node_count()).map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        }).collect();
        start.primal = Some(borninfeld::field::ScalarField::from_values(grid.clone(), vals).unwrap());
    }
    let rep = continuation_solve(&grid, &phi, &src, &widths, &cfg, &start).unwrap();
    if let Some(path) = args.get(7) {
        let mut f = std::fs::File::create(path).unwrap();
        rep.solution.write_binary(&mut f).unwrap();
    }
    if let Some(path) = args.get(8) {
        let mut f = std::fs::File::open(path).unwrap();
        let other = borninfeld::field::ScalarField::read_binary(grid.clone(), &mut f).unwrap();
        println!("diff vs {path}: {:.3e}", other.max_diff(&rep.solution));
    }
    println!("time {:.2}s iters {} conv {} K {:.3} tau {:.3e} sigma {:.3e}", rep.wall_time_s, rep.iterations, rep.converged, rep.operator_norm, rep.tau, rep.sigma);
    for s in &rep.stages {
        println!("  width {:.4} iters {} conv {} action {:.6} dsup {:?}", s.width, s.iterations, s.converged, s.action, s.change_sup);
    }
    println!("sup {:.4} bound {:.4}", rep.max_sup_norm, rep.sup_bound);
    println!("stat {:.2e} cons {:.2e} weak {:.2e} gmax {:.6} exceed {}", rep.stationarity, rep.consistency, rep.weak_residual, rep.max_gradient, rep.exceedances);
    let params = RadialParams::new(2, 1.0, 1.0, 0.0).unwrap();
    let exact = radial_field(&params, &grid).unwrap();
    let eps = 2.0 * h;
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for &nd in grid.interior_nodes().iter().chain(grid.boundary_nodes()) {
        let x = grid.node_position(nd);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r < 3.0 * eps { continue; }
        err = err.max((rep.solution.values()[nd] - exact.values()[nd]).abs());
        scale = scale.max(exact.values()[nd].abs());
    }
    println!("rel Linf err {:.4e} (abs {:.3e}, scale {:.3})", err / scale, err, scale);
}
