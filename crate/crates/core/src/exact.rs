//! Closed-form reference solutions: the radially symmetric family with a
//! point charge at the origin, and the compactly supported field with a
//! light segment (see [`counterexample`]).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::quadrature::integrate;

pub mod counterexample;

pub use counterexample::*;

/// Radial family on the ball of radius `t_radius`: a charge
/// `b * |S^(m-1)|` at the origin over a constant background `h_curv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialParams {
    pub dim: usize,
    #[serde(rename = "T")]
    pub t_radius: f64,
    pub b: f64,
    #[serde(rename = "H", default)]
    pub h_curv: f64,
}

impl RadialParams {
    pub fn new(dim: usize, t_radius: f64, b: f64, h_curv: f64) -> Result<Self> {
        let p = RadialParams { dim, t_radius, b, h_curv };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Argument("radial family needs m >= 2".into()));
        }
        if !(self.t_radius > 0.0) || !self.t_radius.is_finite() {
            return Err(Error::Argument("radius T must be positive".into()));
        }
        if !(self.b >= 0.0) || !self.h_curv.is_finite() {
            return Err(Error::Argument("charge scale must be nonnegative and H finite".into()));
        }
        Ok(())
    }

    /// Radial derivative magnitude `-u'(r)`, always below one.
    pub fn slope(&self, r: f64) -> f64 {
        let m = self.dim as f64;
        let num = self.b - self.h_curv * r.powi(self.dim as i32) / m;
        let den = (r.powi(2 * self.dim as i32 - 2) + num * num).sqrt();
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

/// `u(r) = int_r^T slope(t) dt`, integrated to absolute accuracy 1e-10.
pub fn radial_value(params: &RadialParams, r: f64) -> f64 {
    let r = r.clamp(0.0, params.t_radius);
    if r == params.t_radius || (params.b == 0.0 && params.h_curv == 0.0) {
        return 0.0;
    }
    integrate(|t| params.slope(t), r, params.t_radius, 1e-11, 0.0).value
}

/// Tabulates `u` on a nonuniform radial mesh and interpolates with cubic
/// Hermite pieces (using the exact slope), which keeps nodewise sampling
/// of large grids cheap. Accuracy is checked against direct quadrature in
/// the tests.
#[derive(Clone, Debug)]
pub struct RadialTable {
    params: RadialParams,
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl RadialTable {
    pub fn new(params: &RadialParams) -> Self {
        // Geometric refinement toward the origin, where the profile bends.
        let n = 4000;
        let t = params.t_radius;
        let mut radii: Vec<f64> = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                t * s * s
            })
            .collect();
        radii.dedup();
        let mut values = vec![0.0; radii.len()];
        for i in (0..radii.len() - 1).rev() {
            let piece = integrate(|x| params.slope(x), radii[i], radii[i + 1], 1e-14, 0.0).value;
            values[i] = values[i + 1] + piece;
        }
        RadialTable {
            params: *params,
            radii,
            values,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        let r = r.clamp(0.0, self.params.t_radius);
        let k = match self.radii.partition_point(|&x| x <= r) {
            0 => 0,
            k if k >= self.radii.len() => self.radii.len() - 2,
            k => k - 1,
        };
        let (r0, r1) = (self.radii[k], self.radii[k + 1]);
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        let h = r1 - r0;
        let s = (r - r0) / h;
        let d0 = -self.params.slope(r0) * h;
        let d1 = -self.params.slope(r1) * h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * v0 + h10 * d0 + h01 * v1 + h11 * d1
    }
}

/// Samples the radial solution centred at the origin on every lattice node
/// (exterior nodes included, with `r` clamped to `T`).
pub fn radial_field(params: &RadialParams, grid: &Arc<Grid>) -> Result<ScalarField> {
    params.validate()?;
    if grid.dim() != params.dim {
        return Err(Error::Argument("grid dimension differs from the radial family".into()));
    }
    let table = RadialTable::new(params);
    Ok(ScalarField::from_fn(grid.clone(), |x| {
        table.value(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }))
}

/// `min(u, u(R_cut))`: the solution whose charge is spread uniformly over
/// the sphere of radius `R_cut`.
pub fn truncated_radial(params: &RadialParams, r_cut: f64, grid: &Arc<Grid>) -> Result<ScalarField> {
    if !(r_cut > 0.0 && r_cut < params.t_radius) {
        return Err(Error::Argument(format!(
            "truncation radius {r_cut} must lie in (0, {})",
            params.t_radius
        )));
    }
    let level = radial_value(params, r_cut);
    let full = radial_field(params, grid)?;
    Ok(full.map(|v| v.min(level)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec, Resolution};

    fn p(m: usize, b: f64) -> RadialParams {
        RadialParams::new(m, 1.0, b, 0.0).unwrap()
    }

    #[test]
    fn endpoint_and_trivial_cases() {
        assert_eq!(radial_value(&p(2, 1.0), 1.0), 0.0);
        assert_eq!(radial_value(&p(3, 0.0), 0.2), 0.0);
    }

    #[test]
    fn three_dimensional_centre_value() {
        // int_0^1 dt / sqrt(t^4 + 1), integrand between 1/sqrt(2) and 1.
        let v = radial_value(&p(3, 1.0), 0.0);
        assert!(v > 1.0 / 2f64.sqrt() && v < 1.0);
        // Composite Simpson with many panels as an independent check.
        let n = 20_000;
        let f = |t: f64| 1.0 / (t.powi(4) + 1.0).sqrt();
        let h = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        assert!((v - s * h / 3.0).abs() < 1e-12);
    }

    #[test]
    fn planar_profile_is_asinh() {
        // m = 2, H = 0, b = 1: u(r) = asinh(T) - asinh(r).
        let pr = p(2, 1.0);
        for &r in &[0.01, 0.1, 0.5, 0.9] {
            let want = 1f64.asinh() - (r as f64).asinh();
            assert!((radial_value(&pr, r) - want).abs() < 1e-10, "r = {r}");
        }
        let table = RadialTable::new(&pr);
        for i in 0..500 {
            let r = 1e-3 + i as f64 * (1.0 - 1e-3) / 500.0;
            let want = 1f64.asinh() - r.asinh();
            assert!((table.value(r) - want).abs() < 1e-9, "r = {r}");
        }
    }

    #[test]
    fn nonincreasing_with_positive_charge() {
        let pr = p(3, 0.7);
        let mut last = f64::INFINITY;
        for i in 0..=50 {
            let v = radial_value(&pr, i as f64 / 50.0);
            assert!(v <= last + 1e-14);
            last = v;
        }
    }

    #[test]
    fn truncation_is_flat_inside() {
        let grid = Arc::new(
            build_grid(
                &DomainSpec::Ball {
                    center: vec![0.0, 0.0],
                    radius: 1.0,
                },
                Resolution::Nodes(41),
            )
            .unwrap(),
        );
        let pr = p(2, 1.0);
        let cut = truncated_radial(&pr, 0.3, &grid).unwrap();
        let level = radial_value(&pr, 0.3);
        for n in 0..grid.node_count() {
            let x = grid.node_position(n);
            if x.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.3 {
                assert!((cut.values()[n] - level).abs() < 1e-9);
            }
        }
        assert!(truncated_radial(&pr, 1.0, &grid).is_err());
        // A vanishing cut radius leaves the field untouched.
        let near = truncated_radial(&pr, 1e-13, &grid).unwrap();
        let full = radial_field(&pr, &grid).unwrap();
        assert!(near.max_diff(&full) < 1e-9);
    }
}
