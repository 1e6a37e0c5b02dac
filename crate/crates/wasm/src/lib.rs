//! Browser demo: point charges in the unit disc with zero boundary data.
//!
//! The page places charges, solves, and shows either the solution or its
//! energy density, with detected light segments drawn on top.

use std::f64::consts::PI;
use std::sync::Arc;

use serde_json::json;
use wasm_bindgen::prelude::*;

use borninfeld::diagnostics::detect_light_segments;
use borninfeld::energy::{energy_density, GuardPolicy};
use borninfeld::field::{BoundaryDatum, ScalarField};
use borninfeld::grid::{build_grid, DomainSpec, Grid, Resolution};
use borninfeld::solver::{continuation_solve, solve, SolverConfig, WarmStart};
use borninfeld::sources::{MeasureSource, MollifiedSource, PointCharge};

/// Charges closer than this to the circle are refused: their mollified
/// support would leave the disc.
const MAX_CHARGE_RADIUS: f64 = 0.9;

pub struct DiscDemo {
    grid: Arc<Grid>,
    charges: Vec<PointCharge>,
    solution: Option<ScalarField>,
}

impl DiscDemo {
    pub fn new(nodes: usize) -> Result<Self, String> {
        if !(17..=257).contains(&nodes) {
            return Err(format!("nodes per axis must lie in 17..=257, got {nodes}"));
        }
        let grid = build_grid(
            &DomainSpec::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            Resolution::Nodes(nodes),
        )
        .map_err(|e| e.to_string())?;
        Ok(DiscDemo {
            grid: Arc::new(grid),
            charges: Vec::new(),
            solution: None,
        })
    }

    pub fn nodes(&self) -> usize {
        self.grid.shape()[0]
    }

    /// Adds a charge of strength `b`, i.e. mass `2 pi b`.
    pub fn add_charge(&mut self, x: f64, y: f64, b: f64) -> Result<(), String> {
        if x.hypot(y) > MAX_CHARGE_RADIUS {
            return Err(format!("charges must sit within radius {MAX_CHARGE_RADIUS} of the centre"));
        }
        if !b.is_finite() || b == 0.0 {
            return Err("charge strength must be finite and nonzero".into());
        }
        self.charges.push(PointCharge {
            position: vec![x, y],
            weight: 2.0 * PI * b,
        });
        Ok(())
    }

    pub fn charges(&self) -> Vec<f64> {
        self.charges
            .iter()
            .flat_map(|c| [c.position[0], c.position[1], c.weight / (2.0 * PI)])
            .collect()
    }

    pub fn clear(&mut self) {
        self.charges.clear();
        self.solution = None;
    }

    /// Solves and returns a JSON summary of the run.
    pub fn solve(&mut self, tolerance: f64) -> Result<String, String> {
        let g = &self.grid;
        let h = g.max_spacing();
        let phi = BoundaryDatum::zero(g);
        let cfg = SolverConfig {
            tolerance,
            max_iterations: 20_000,
            ..Default::default()
        };
        let rep = if self.charges.is_empty() {
            solve(g, &phi, &MollifiedSource::zero(g.clone()), &cfg)
        } else {
            let src = MeasureSource::point_charges(self.charges.clone());
            continuation_solve(g, &phi, &src, &[8.0 * h, 4.0 * h, 2.0 * h], &cfg, &WarmStart::default())
        }
        .map_err(|e| e.to_string())?;
        let (lo, hi) = rep
            .solution
            .domain_values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let summary = json!({
            "iterations": rep.iterations,
            "converged": rep.converged,
            "max_gradient": rep.max_gradient,
            "action": rep.action,
            "wall_time_ms": 1e3 * rep.wall_time_s,
            "min": lo,
            "max": hi,
        });
        self.solution = Some(rep.solution);
        Ok(summary.to_string())
    }

    fn solved(&self) -> Result<&ScalarField, String> {
        self.solution.as_ref().ok_or_else(|| "solve first".to_string())
    }

    /// Nodal values in row-major order; NaN outside the disc.
    pub fn heights(&self) -> Result<Vec<f64>, String> {
        let u = self.solved()?;
        Ok((0..self.grid.node_count())
            .map(|n| if self.grid.is_domain_node(n) { u.values()[n] } else { f64::NAN })
            .collect())
    }

    /// Energy density `1 / sqrt(1 - |Du|^2)` averaged to the nodes; NaN
    /// outside the disc and at boundary nodes that touch no interior cell.
    pub fn energy(&self) -> Result<Vec<f64>, String> {
        let w = energy_density(self.solved()?, &GuardPolicy::default()).w.to_nodes();
        Ok((0..self.grid.node_count())
            .map(|n| {
                let v = w.values()[n];
                if self.grid.is_domain_node(n) && v >= 1.0 { v } else { f64::NAN }
            })
            .collect())
    }

    /// Light segments as `x0, y0, x1, y1` quadruples.
    pub fn light_segments(&self, tolerance: f64) -> Result<Vec<f64>, String> {
        let tol = (tolerance > 0.0).then_some(tolerance);
        let rep = detect_light_segments(self.solved()?, tol).map_err(|e| e.to_string())?;
        Ok(rep
            .segments
            .iter()
            .flat_map(|s| [s.start[0], s.start[1], s.end[0], s.end[1]])
            .collect())
    }
}

#[wasm_bindgen]
pub struct Demo {
    inner: DiscDemo,
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(nodes: usize) -> Result<Demo, JsError> {
        Ok(Demo {
            inner: DiscDemo::new(nodes).map_err(js)?,
        })
    }

    pub fn nodes(&self) -> usize {
        self.inner.nodes()
    }

    pub fn add_charge(&mut self, x: f64, y: f64, b: f64) -> Result<(), JsError> {
        self.inner.add_charge(x, y, b).map_err(js)
    }

    /// Flat `x, y, b` triples.
    pub fn charges(&self) -> Vec<f64> {
        self.inner.charges()
    }

    pub fn clear(&mut self) {
        self.inner.clear()
    }

    pub fn solve(&mut self, tolerance: f64) -> Result<String, JsError> {
        self.inner.solve(tolerance).map_err(js)
    }

    pub fn heights(&self) -> Result<Vec<f64>, JsError> {
        self.inner.heights().map_err(js)
    }

    pub fn energy(&self) -> Result<Vec<f64>, JsError> {
        self.inner.energy().map_err(js)
    }

    /// Pass 0 for the default tolerance.
    pub fn light_segments(&self, tolerance: f64) -> Result<Vec<f64>, JsError> {
        self.inner.light_segments(tolerance).map_err(js)
    }
}
