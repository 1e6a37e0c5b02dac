use std::sync::Arc;

use borninfeld::field::{BoundaryDatum, ScalarField};
use borninfeld::grid::{build_grid, DomainSpec, Resolution};
use borninfeld::solver::{solve, PrimalMetric, SolverConfig};
use borninfeld::sources::MollifiedSource;

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let m: usize = a[1].parse().unwrap();
    let n: usize = a[2].parse().unwrap();
    let metric = if a[3] == "e" { PrimalMetric::Euclidean } else { PrimalMetric::Gradient };
    let iters: usize = a[4].parse().unwrap();
    let tol: f64 = a[5].parse().unwrap();
    let grid = Arc::new(build_grid(&DomainSpec::Box { lower: vec![-1.0; m], upper: vec![1.0; m] }, Resolution::Nodes(n)).unwrap());
    let mut slope = vec![0.0; m];
    slope[0] = 0.3;
    slope[m - 1] += 0.4;
    let phi = BoundaryDatum::affine(&grid, &slope, 0.2).unwrap();
    let cfg = SolverConfig { tolerance: tol, metric, max_iterations: iters, ..Default::default() };
    let rep = solve(&grid, &phi, &MollifiedSource::zero(grid.clone()), &cfg).unwrap();
    let exact = ScalarField::from_fn(grid.clone(), |x| 0.2 + x.iter().zip(&slope).map(|(a, b)| a * b).sum::<f64>());
    println!("iters {} conv {} time {:.2} stat {:.2e} cons {:.2e} err {:.2e} tau {:.2e} sigma {:.2e}", rep.iterations, rep.converged, rep.wall_time_s, rep.stationarity, rep.consistency, rep.solution.max_diff(&exact), rep.tau, rep.sigma);
}
