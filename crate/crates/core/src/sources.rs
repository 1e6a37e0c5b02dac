//! Measure sources `rho = sum a_i delta_{x_i} + rho_ac`, their mollification,
//! norms, and the charge-separation criterion for point charges.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCharge {
    pub position: Vec<f64>,
    pub weight: f64,
}

/// Anything that pairs linearly with nodal fields.
pub trait SourceTerm {
    /// Nodal load vector `b` with `<rho, u> = sum_n b_n u_n`.
    fn load(&self, grid: &Grid) -> Result<Vec<f64>>;

    fn pairing(&self, u: &ScalarField) -> Result<f64> {
        let b = self.load(u.grid())?;
        Ok(b.iter().zip(u.values()).map(|(a, v)| a * v).sum())
    }
}

#[derive(Clone, Debug)]
pub struct MeasureSource {
    pub charges: Vec<PointCharge>,
    /// Absolutely continuous part, as a nodal density.
    pub density: Option<ScalarField>,
    pub tag: String,
}

impl MeasureSource {
    pub fn empty() -> Self {
        MeasureSource {
            charges: Vec::new(),
            density: None,
            tag: "empty".into(),
        }
    }

    pub fn point_charges(charges: Vec<PointCharge>) -> Self {
        MeasureSource {
            charges,
            density: None,
            tag: "point charges".into(),
        }
    }

    pub fn from_density(density: ScalarField) -> Self {
        MeasureSource {
            charges: Vec::new(),
            density: Some(density),
            tag: "density".into(),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    /// Sign-flipped source.
    pub fn negated(&self) -> Self {
        MeasureSource {
            charges: self
                .charges
                .iter()
                .map(|c| PointCharge {
                    position: c.position.clone(),
                    weight: -c.weight,
                })
                .collect(),
            density: self.density.as_ref().map(|d| d.map(|v| -v)),
            tag: format!("-({})", self.tag),
        }
    }

    /// Checks that charges sit inside the domain and the density lives on `grid`.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for c in &self.charges {
            if c.position.len() != grid.dim() || !c.weight.is_finite() {
                return Err(Error::Argument("point charge has the wrong dimension or weight".into()));
            }
            let Some(w) = grid.interpolation_weights(&c.position) else {
                return Err(Error::Argument(format!("charge at {:?} lies outside the grid", c.position)));
            };
            if w.iter().any(|(n, wt)| *wt > 0.0 && !grid.is_domain_node(*n)) {
                return Err(Error::Argument(format!("charge at {:?} lies outside the domain", c.position)));
            }
        }
        if let Some(d) = &self.density {
            if d.grid().shape() != grid.shape() || d.grid().node_count() != grid.node_count() {
                return Err(Error::Argument("density is defined on a different grid".into()));
            }
            if d.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument("density must be finite".into()));
            }
        }
        Ok(())
    }
}

impl SourceTerm for MeasureSource {
    fn load(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.validate(grid)?;
        // Charges become nodal densities first, so both parts go through
        // the same cell-consistent assembly.
        let mut density = match &self.density {
            Some(d) => d.values().to_vec(),
            None => vec![0.0; grid.node_count()],
        };
        let vol = grid.cell_volume();
        for c in &self.charges {
            for (n, w) in grid.interpolation_weights(&c.position).unwrap_or_default() {
                density[n] += c.weight * w / vol;
            }
        }
        Ok(cell_consistent_load(grid, &density))
    }
}

/// A smoothed source `rho_j`, stored as a nodal density.
///
/// The mean-curvature datum is `H_j = -rho_j`, so that `rho_j = -H_j dx`.
#[derive(Clone, Debug)]
pub struct MollifiedSource {
    pub width: f64,
    pub density: ScalarField,
    pub tag: String,
}

impl MollifiedSource {
    /// Wraps an already smooth density without further blurring.
    pub fn from_density(density: ScalarField) -> Self {
        MollifiedSource {
            width: 0.0,
            density,
            tag: "density".into(),
        }
    }

    pub fn zero(grid: Arc<Grid>) -> Self {
        MollifiedSource::from_density(ScalarField::zeros(grid))
    }

    pub fn mean_curvature(&self) -> ScalarField {
        self.density.map(|v| -v)
    }

    /// `h^m sum_n rho_n` over domain nodes.
    pub fn signed_mass(&self) -> f64 {
        self.density.grid().cell_volume() * self.density.domain_values().sum::<f64>()
    }

    pub fn total_variation(&self) -> f64 {
        self.density.grid().cell_volume() * self.density.domain_values().map(f64::abs).sum::<f64>()
    }

    pub fn negated(&self) -> Self {
        MollifiedSource {
            width: self.width,
            density: self.density.map(|v| -v),
            tag: format!("-({})", self.tag),
        }
    }
}

impl SourceTerm for MollifiedSource {
    fn load(&self, grid: &Grid) -> Result<Vec<f64>> {
        if self.density.grid().node_count() != grid.node_count() {
            return Err(Error::Argument("mollified source lives on a different grid".into()));
        }
        Ok(cell_consistent_load(grid, self.density.values()))
    }
}

/// A source given directly by its nodal load vector.
#[derive(Clone, Debug)]
pub struct NodalLoad {
    pub load: Vec<f64>,
    pub tag: String,
}

impl SourceTerm for NodalLoad {
    fn load(&self, grid: &Grid) -> Result<Vec<f64>> {
        if self.load.len() != grid.node_count() {
            return Err(Error::Argument("nodal load lives on a different grid".into()));
        }
        Ok(self.load.clone())
    }
}

/// Load of a nodal density: each active cell carries the corner mean times
/// its volume, shared equally among its corners.
///
/// Per axis this is the filter `[1 2 1] / 4`, which annihilates the
/// alternating modes in the kernel of the cell gradient. Plain nodal
/// sampling lets a density resolved by only a few cells excite those modes.
pub fn cell_consistent_load(grid: &Grid, density: &[f64]) -> Vec<f64> {
    let corners = grid.corner_offsets();
    let share = grid.cell_volume() / (corners.len() * corners.len()) as f64;
    let mut b = vec![0.0; grid.node_count()];
    for &c in grid.active_cells() {
        let base = grid.cell_base(c);
        let sum: f64 = corners.iter().map(|o| density[base + o]).sum();
        for o in corners {
            b[base + o] += share * sum;
        }
    }
    b
}

/// Unnormalized kernel `(1 - |x|^2 / r^2)^3` on the ball of radius `r`.
pub fn bump(dist2: f64, width: f64) -> f64 {
    let t = 1.0 - dist2 / (width * width);
    if t > 0.0 {
        t * t * t
    } else {
        0.0
    }
}

/// Spreads `mass` located at `center` over domain nodes with the bump
/// kernel, normalized so that the discrete mass is exactly `mass`.
fn spread(grid: &Grid, center: &[f64], mass: f64, width: f64, out: &mut [f64]) -> Result<()> {
    let dim = grid.dim();
    let h = grid.spacing();
    let lo: Vec<usize> = (0..dim)
        .map(|k| (((center[k] - width - grid.origin()[k]) / h[k]).floor().max(0.0)) as usize)
        .collect();
    let hi: Vec<usize> = (0..dim)
        .map(|k| {
            let t = ((center[k] + width - grid.origin()[k]) / h[k]).ceil();
            (t.max(0.0) as usize).min(grid.shape()[k] - 1)
        })
        .collect();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut mi = lo.clone();
    let mut x = vec![0.0; dim];
    'outer: loop {
        if let Some(n) = grid.node_from_multi_index(&mi) {
            if grid.is_domain_node(n) {
                grid.node_position_into(n, &mut x);
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                let w = bump(d2, width);
                if w > 0.0 {
                    nodes.push(n);
                    weights.push(w);
                }
            }
        }
        for k in (0..dim).rev() {
            if mi[k] < hi[k] {
                mi[k] += 1;
                continue 'outer;
            }
            mi[k] = lo[k];
        }
        break;
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Resolution(format!(
            "kernel of width {width} around {center:?} touches no domain node"
        )));
    }
    let scale = mass / (total * grid.cell_volume());
    for (n, w) in nodes.into_iter().zip(weights) {
        out[n] += w * scale;
    }
    Ok(())
}

/// Convolves `source` with the compactly supported bump of radius `width`.
///
/// Point charges become discretely normalized kernels centred at their
/// exact (off-grid) positions; the density part is redistributed node by
/// node with the same normalized kernel, so signed mass is preserved and
/// total variation does not grow.
pub fn mollify(source: &MeasureSource, grid: &Arc<Grid>, width: f64) -> Result<MollifiedSource> {
    if !(width >= 2.0 * grid.max_spacing() * (1.0 - 1e-12)) {
        return Err(Error::Resolution(format!(
            "mollification width {width} is below twice the grid spacing {}",
            grid.max_spacing()
        )));
    }
    source.validate(grid)?;
    let mut out = vec![0.0; grid.node_count()];
    for c in &source.charges {
        spread(grid, &c.position, c.weight, width, &mut out)?;
    }
    if let Some(d) = &source.density {
        let vol = grid.cell_volume();
        let mut x = vec![0.0; grid.dim()];
        for (n, v) in d.values().iter().enumerate() {
            if *v != 0.0 && grid.is_domain_node(n) {
                grid.node_position_into(n, &mut x);
                spread(grid, &x, v * vol, width, &mut out)?;
            }
        }
    }
    Ok(MollifiedSource {
        width,
        density: ScalarField::from_values(grid.clone(), out)?,
        tag: format!("{} mollified at width {width}", source.tag),
    })
}

pub fn total_variation(source: &MeasureSource) -> f64 {
    let charges: f64 = source.charges.iter().map(|c| c.weight.abs()).sum();
    let density = source.density.as_ref().map_or(0.0, |d| {
        d.grid().cell_volume() * d.domain_values().map(f64::abs).sum::<f64>()
    });
    charges + density
}

/// `|rho|(B_radius(center))`: charges strictly inside plus the nodal
/// quadrature of `|rho_ac|` over nodes strictly inside.
pub fn ball_mass(source: &MeasureSource, center: &[f64], radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Argument(format!("radius must be positive, got {radius}")));
    }
    let r2 = radius * radius;
    let dist2 = |x: &[f64]| x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut total: f64 = source
        .charges
        .iter()
        .filter(|c| dist2(&c.position) < r2)
        .map(|c| c.weight.abs())
        .sum();
    if let Some(d) = &source.density {
        let grid = d.grid();
        let mut x = vec![0.0; grid.dim()];
        let mut acc = 0.0;
        for (n, v) in d.values().iter().enumerate() {
            if grid.is_domain_node(n) {
                grid.node_position_into(n, &mut x);
                if dist2(&x) < r2 {
                    acc += v.abs();
                }
            }
        }
        total += acc * grid.cell_volume();
    }
    Ok(total)
}

/// Surface measure of the unit sphere `S^(n-1)` in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 2.0) * unit_sphere_area(n - 2),
    }
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    unit_sphere_area(n) / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationMargin {
    /// `min_{i != j} |x_i - x_j|` minus the charge threshold; `+inf` when not applicable.
    pub margin: f64,
    pub threshold: f64,
    pub min_separation: f64,
    /// False in two dimensions, where the criterion gives no finite threshold.
    pub applicable: bool,
}

/// Sufficient condition for the absence of light segments between point
/// charges: positive when the charges are far apart relative to their
/// sign-split total magnitudes.
pub fn charge_separation_margin(source: &MeasureSource, dim: usize) -> Result<SeparationMargin> {
    if dim < 2 {
        return Err(Error::Argument("dimension must be at least 2".into()));
    }
    let mut min_sep = f64::INFINITY;
    for (i, a) in source.charges.iter().enumerate() {
        for b in &source.charges[i + 1..] {
            let d = a
                .position
                .iter()
                .zip(&b.position)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            min_sep = min_sep.min(d);
        }
    }
    if dim == 2 {
        return Ok(SeparationMargin {
            margin: f64::INFINITY,
            threshold: f64::INFINITY,
            min_separation: min_sep,
            applicable: false,
        });
    }
    let m = dim as f64;
    let neg: f64 = source.charges.iter().filter(|c| c.weight < 0.0).map(|c| -c.weight).sum();
    let pos: f64 = source.charges.iter().filter(|c| c.weight > 0.0).map(|c| c.weight).sum();
    let e = 1.0 / (m - 1.0);
    let threshold = (m / unit_sphere_area(dim)).powf(e) * (m - 1.0) / (m - 2.0) * (neg.powf(e) + pos.powf(e));
    Ok(SeparationMargin {
        margin: min_sep - threshold,
        threshold,
        min_separation: min_sep,
        applicable: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec, Resolution};

    fn unit_grid(n: usize) -> Arc<Grid> {
        Arc::new(build_grid(&DomainSpec::unit_box(2), Resolution::Nodes(n)).unwrap())
    }

    #[test]
    fn cell_consistent_load_ignores_alternating_modes() {
        let g = Arc::new(build_grid(&DomainSpec::unit_box(3), Resolution::Nodes(9)).unwrap());
        let alt: Vec<f64> = (0..g.node_count())
            .map(|n| {
                let mi = g.node_multi_index(n);
                if (mi[0] + mi[1]) % 2 == 0 { 1.0 } else { -1.0 }
            })
            .collect();
        assert!(cell_consistent_load(&g, &alt).iter().all(|v| v.abs() < 1e-15));
        let ones = vec![1.0; g.node_count()];
        let total: f64 = cell_consistent_load(&g, &ones).iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    fn charge(x: &[f64], a: f64) -> PointCharge {
        PointCharge {
            position: x.to_vec(),
            weight: a,
        }
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-14);
    }

    #[test]
    fn single_charge_mollifies_to_unit_mass() {
        let g = unit_grid(33);
        let src = MeasureSource::point_charges(vec![charge(&[0.5, 0.5], 1.0)]);
        let m = mollify(&src, &g, 4.0 / 32.0).unwrap();
        assert!((m.signed_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dipole_mass_and_variation() {
        let g = unit_grid(33);
        let src = MeasureSource::point_charges(vec![charge(&[0.3, 0.5], 1.0), charge(&[0.71, 0.43], -1.0)]);
        let m = mollify(&src, &g, 0.1).unwrap();
        assert!(m.signed_mass().abs() < 1e-12);
        assert!((m.total_variation() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn width_below_two_cells_is_rejected() {
        let g = unit_grid(11);
        let src = MeasureSource::point_charges(vec![charge(&[0.5, 0.5], 1.0)]);
        assert!(matches!(mollify(&src, &g, 0.15), Err(Error::Resolution(_))));
    }

    #[test]
    fn variation_of_charges_and_empty() {
        let src = MeasureSource::point_charges(vec![charge(&[0.2, 0.2], 2.0), charge(&[0.7, 0.7], -3.0)]);
        assert_eq!(total_variation(&src), 5.0);
        assert_eq!(total_variation(&MeasureSource::empty()), 0.0);
    }

    #[test]
    fn unit_density_variation_matches_node_quadrature() {
        let g = unit_grid(21);
        let src = MeasureSource::from_density(ScalarField::from_fn(g.clone(), |_| 1.0));
        // Nodal sums over the closed box count (n/(n-1))^2 of the area.
        let want = (21.0f64 / 20.0).powi(2);
        assert!((total_variation(&src) - want).abs() < 1e-12);
        assert!((total_variation(&src) - 1.0).abs() < 0.11);
    }

    #[test]
    fn ball_mass_cases() {
        let src = MeasureSource::point_charges(vec![charge(&[0.5, 0.5], -1.5)]);
        assert_eq!(ball_mass(&src, &[0.5, 0.5], 0.1).unwrap(), 1.5);
        assert_eq!(ball_mass(&src, &[0.1, 0.1], 0.2).unwrap(), 0.0);
        let g = unit_grid(201);
        let dens = MeasureSource::from_density(ScalarField::from_fn(g, |_| 1.0));
        let v = ball_mass(&dens, &[0.5, 0.5], 0.5).unwrap();
        assert!((v - std::f64::consts::PI / 4.0).abs() < 0.02);
    }

    #[test]
    fn separation_margin_values() {
        let src = MeasureSource::point_charges(vec![charge(&[0.0, 0.0, 0.0], 1.0), charge(&[3.0, 0.0, 0.0], -1.0)]);
        let m = charge_separation_margin(&src, 3).unwrap();
        // (3 / 4pi)^(1/2) * 2 * (1 + 1)
        let thr = (3.0 / (4.0 * std::f64::consts::PI)).sqrt() * 4.0;
        assert!((m.threshold - thr).abs() < 1e-14);
        assert!((m.threshold - 1.954).abs() < 1e-3);
        assert!((m.margin - (3.0 - thr)).abs() < 1e-14);

        let one = MeasureSource::point_charges(vec![charge(&[0.0, 0.0, 0.0], 1.0)]);
        let m1 = charge_separation_margin(&one, 3).unwrap();
        assert!((m1.threshold - 0.977).abs() < 1e-3);
        assert_eq!(m1.margin, f64::INFINITY);

        let m2 = charge_separation_margin(&src, 2).unwrap();
        assert!(!m2.applicable && m2.margin.is_infinite());
    }
}
