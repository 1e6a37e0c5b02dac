use std::sync::Arc;
use std::time::Instant;

use borninfeld::field::{divergence_into, gradient_into};
use borninfeld::grid::{build_grid, DomainSpec, Resolution};

fn main() {
    let grid = Arc::new(
        build_grid(&DomainSpec::Ball { center: vec![0.0, 0.0], radius: 1.0 }, Resolution::Nodes(129)).unwrap(),
    );
    let u: Vec<f64> = (0..grid.node_count()).map(|i| (i as f64).sin()).collect();
    let mut g = vec![0.0; grid.cell_count() * 2];
    let mut d = vec![0.0; grid.node_count()];
    let t = Instant::now();
    for _ in 0..1000 {
        gradient_into(&grid, &u, &mut g);
    }
    println!("grad {:?}/iter", t.elapsed() / 1000);
    let t = Instant::now();
    for _ in 0..1000 {
        divergence_into(&grid, &g, &mut d);
    }
    println!("div {:?}/iter", t.elapsed() / 1000);
    let t = Instant::now();
    let mut acc = 0.0;
    for _ in 0..1000 {
        for &c in grid.active_cells() {
            let v = &mut g[2 * c..2 * c + 2];
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            acc += n.sqrt();
        }
    }
    println!("loop {:?}/iter {acc}", t.elapsed() / 1000);
}
