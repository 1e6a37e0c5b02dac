//! Grid-sampled scalar and vector fields and the discrete gradient pair.
//!
//! Gradients are cell-centred: along axis `k` each cell averages the
//! `2^(m-1)` edge differences of its corners. The divergence is the exact
//! negative transpose of that map, so
//! `sum_cells Du . p = -sum_nodes u div(p)` for every `u` vanishing on
//! non-interior nodes.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, NodeRole};

const MAGIC: &[u8; 8] = b"BORNINF\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    extended: bool,
}

impl ScalarField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.node_count();
        ScalarField {
            grid,
            values: vec![0.0; n],
            extended: false,
        }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Argument(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("field values must be finite".into()));
        }
        Ok(ScalarField {
            grid,
            values,
            extended: false,
        })
    }

    /// A field allowed to carry `+inf` entries.
    pub fn extended(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Argument("value count does not match node count".into()));
        }
        Ok(ScalarField {
            grid,
            values,
            extended: true,
        })
    }

    /// Samples `f` at every domain node; exterior nodes hold zero.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; grid.node_count()];
        let mut x = vec![0.0; grid.dim()];
        for (i, v) in values.iter_mut().enumerate() {
            if grid.is_domain_node(i) {
                grid.node_position_into(i, &mut x);
                *v = f(&x);
            }
        }
        ScalarField {
            grid,
            values,
            extended: false,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    /// Max-norm over domain nodes.
    pub fn max_abs(&self) -> f64 {
        self.domain_values().map(f64::abs).fold(0.0, f64::max)
    }

    pub fn domain_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.is_domain_node(*i))
            .map(|(_, v)| *v)
    }

    /// `max |self - other|` over domain nodes.
    pub fn max_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(i, _)| self.grid.is_domain_node(*i))
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| if self.grid.is_domain_node(i) { f(*v) } else { 0.0 })
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
            extended: self.extended,
        }
    }

    /// Multilinear interpolation at an arbitrary point inside the lattice.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let w = self.grid.interpolation_weights(x)?;
        Some(w.iter().map(|(n, wt)| wt * self.values[*n]).sum())
    }

    pub fn write_binary(&self, out: &mut impl Write) -> Result<()> {
        write_blob(&self.grid, 1, &self.values, out)
    }

    pub fn read_binary(grid: Arc<Grid>, input: &mut impl Read) -> Result<Self> {
        let blob = FieldBlob::read(input)?;
        blob.check_grid(&grid, 1)?;
        ScalarField::extended(grid, blob.payload).map(|mut f| {
            f.extended = f.values.iter().any(|v| !v.is_finite());
            f
        })
    }

    /// CSV with one row per domain node: coordinates then value.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let dim = self.grid.dim();
        let header: Vec<String> = (0..dim).map(|k| format!("x{k}")).chain(["value".into()]).collect();
        writeln!(out, "{}", header.join(","))?;
        let mut x = vec![0.0; dim];
        for (i, v) in self.values.iter().enumerate() {
            if !self.grid.is_domain_node(i) {
                continue;
            }
            self.grid.node_position_into(i, &mut x);
            for xk in &x {
                write!(out, "{xk},")?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

/// Cell-centred vector samples, `m` components per lattice cell. Inactive
/// cells hold zeros.
#[derive(Clone, Debug)]
pub struct VectorField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.cell_count() * grid.dim();
        VectorField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() * grid.dim() {
            return Err(Error::Argument("vector field size does not match cell count".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("vector field values must be finite".into()));
        }
        Ok(VectorField { grid, values })
    }

    /// Fills every active cell with `f(cell centre)`.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let dim = grid.dim();
        let mut values = vec![0.0; grid.cell_count() * dim];
        for &c in grid.active_cells() {
            let v = f(&grid.cell_center(c));
            values[c * dim..(c + 1) * dim].copy_from_slice(&v[..dim]);
        }
        VectorField { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        let m = self.grid.dim();
        &self.values[c * m..(c + 1) * m]
    }

    /// Euclidean norm of the sample in cell `c`.
    pub fn cell_norm(&self, c: usize) -> f64 {
        self.cell(c).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn write_binary(&self, out: &mut impl Write) -> Result<()> {
        write_blob(&self.grid, self.grid.dim() as u32, &self.values, out)
    }

    pub fn read_binary(grid: Arc<Grid>, input: &mut impl Read) -> Result<Self> {
        let blob = FieldBlob::read(input)?;
        blob.check_grid(&grid, grid.dim() as u32)?;
        VectorField::from_values(grid, blob.payload)
    }
}

/// `Du` per active cell, written into `out` (length `cells * m`).
pub fn gradient_into(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let m = grid.dim();
    let offsets = grid.corner_offsets();
    let scales: Vec<f64> = grid
        .spacing()
        .iter()
        .map(|h| 1.0 / ((1usize << (m - 1)) as f64 * h))
        .collect();
    if m == 2 {
        let (o1, o2, o3) = (offsets[1], offsets[2], offsets[3]);
        for &c in grid.active_cells() {
            let b = grid.cell_base(c);
            let (u0, u1, u2, u3) = (u[b], u[b + o1], u[b + o2], u[b + o3]);
            out[2 * c] = (u1 + u3 - u0 - u2) * scales[0];
            out[2 * c + 1] = (u2 + u3 - u0 - u1) * scales[1];
        }
        return;
    }
    if m == 3 {
        let o: [usize; 8] = std::array::from_fn(|k| offsets[k]);
        for &c in grid.active_cells() {
            let b = grid.cell_base(c);
            let v: [f64; 8] = std::array::from_fn(|k| u[b + o[k]]);
            out[3 * c] = (v[1] + v[3] + v[5] + v[7] - v[0] - v[2] - v[4] - v[6]) * scales[0];
            out[3 * c + 1] = (v[2] + v[3] + v[6] + v[7] - v[0] - v[1] - v[4] - v[5]) * scales[1];
            out[3 * c + 2] = (v[4] + v[5] + v[6] + v[7] - v[0] - v[1] - v[2] - v[3]) * scales[2];
        }
        return;
    }
    let mut corner = [0.0f64; 64];
    for &c in grid.active_cells() {
        let b = grid.cell_base(c);
        for (v, o) in corner.iter_mut().zip(offsets) {
            *v = u[b + o];
        }
        for k in 0..m {
            let mut s = 0.0;
            for (bit, v) in corner[..offsets.len()].iter().enumerate() {
                if bit >> k & 1 == 1 {
                    s += v;
                } else {
                    s -= v;
                }
            }
            out[c * m + k] = s * scales[k];
        }
    }
}

/// Negative transpose of [`gradient_into`]: `out = -K^T p` on every lattice node.
pub fn divergence_into(grid: &Grid, p: &[f64], out: &mut [f64]) {
    let m = grid.dim();
    let offsets = grid.corner_offsets();
    let scales: Vec<f64> = grid
        .spacing()
        .iter()
        .map(|h| 1.0 / ((1usize << (m - 1)) as f64 * h))
        .collect();
    out.iter_mut().for_each(|v| *v = 0.0);
    if m == 2 {
        let (o1, o2, o3) = (offsets[1], offsets[2], offsets[3]);
        for &c in grid.active_cells() {
            let b = grid.cell_base(c);
            let px = p[2 * c] * scales[0];
            let py = p[2 * c + 1] * scales[1];
            out[b] += px + py;
            out[b + o1] += -px + py;
            out[b + o2] += px - py;
            out[b + o3] += -px - py;
        }
        return;
    }
    if m == 3 {
        let o: [usize; 8] = std::array::from_fn(|k| offsets[k]);
        for &c in grid.active_cells() {
            let b = grid.cell_base(c);
            let (px, py, pz) = (p[3 * c] * scales[0], p[3 * c + 1] * scales[1], p[3 * c + 2] * scales[2]);
            for (k, ok) in o.iter().enumerate() {
                let sx = if k & 1 == 1 { -px } else { px };
                let sy = if k & 2 == 2 { -py } else { py };
                let sz = if k & 4 == 4 { -pz } else { pz };
                out[b + ok] += sx + sy + sz;
            }
        }
        return;
    }
    for &c in grid.active_cells() {
        let b = grid.cell_base(c);
        let pc = &p[c * m..(c + 1) * m];
        for (bit, o) in offsets.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..m {
                if bit >> k & 1 == 1 {
                    s -= pc[k] * scales[k];
                } else {
                    s += pc[k] * scales[k];
                }
            }
            out[b + o] += s;
        }
    }
}

pub fn discrete_gradient(u: &ScalarField) -> VectorField {
    let grid = u.grid.clone();
    let mut out = vec![0.0; grid.cell_count() * grid.dim()];
    gradient_into(&grid, &u.values, &mut out);
    VectorField { grid, values: out }
}

pub fn discrete_divergence(p: &VectorField) -> ScalarField {
    let grid = p.grid.clone();
    let mut out = vec![0.0; grid.node_count()];
    divergence_into(&grid, &p.values, &mut out);
    ScalarField {
        grid,
        values: out,
        extended: false,
    }
}

/// Closed-form origin of a boundary datum, when known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum BoundaryForm {
    Zero,
    Affine { slope: Vec<f64>, offset: f64, slope_norm: f64 },
    Radial { center: Vec<f64> },
    Sampled,
}

/// Dirichlet values on the boundary nodes of a grid, aligned with
/// [`Grid::boundary_nodes`].
#[derive(Clone, Debug)]
pub struct BoundaryDatum {
    values: Vec<f64>,
    form: BoundaryForm,
}

impl BoundaryDatum {
    pub fn zero(grid: &Grid) -> Self {
        BoundaryDatum {
            values: vec![0.0; grid.boundary_nodes().len()],
            form: BoundaryForm::Zero,
        }
    }

    pub fn affine(grid: &Grid, slope: &[f64], offset: f64) -> Result<Self> {
        if slope.len() != grid.dim() {
            return Err(Error::Argument("affine slope has the wrong dimension".into()));
        }
        let values = grid
            .boundary_nodes()
            .iter()
            .map(|&n| {
                let x = grid.node_position(n);
                offset + x.iter().zip(slope).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Self::new(
            values,
            BoundaryForm::Affine {
                slope: slope.to_vec(),
                offset,
                slope_norm: slope.iter().map(|s| s * s).sum::<f64>().sqrt(),
            },
        )
    }

    pub fn from_fn(grid: &Grid, form: BoundaryForm, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid
            .boundary_nodes()
            .iter()
            .map(|&n| f(&grid.node_position(n)))
            .collect();
        Self::new(values, form)
    }

    /// Boundary values taken from a full field.
    pub fn from_field(field: &ScalarField) -> Result<Self> {
        let values = field
            .grid()
            .boundary_nodes()
            .iter()
            .map(|&n| field.values()[n])
            .collect();
        Self::new(values, BoundaryForm::Sampled)
    }

    pub fn new(values: Vec<f64>, form: BoundaryForm) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("boundary values must be finite".into()));
        }
        Ok(BoundaryDatum { values, form })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn form(&self) -> &BoundaryForm {
        &self.form
    }

    pub fn shifted(&self, c: f64) -> BoundaryDatum {
        BoundaryDatum {
            values: self.values.iter().map(|v| v + c).collect(),
            form: BoundaryForm::Sampled,
        }
    }

    pub fn negated(&self) -> BoundaryDatum {
        BoundaryDatum {
            values: self.values.iter().map(|v| -v).collect(),
            form: BoundaryForm::Sampled,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Writes the datum into the boundary entries of `u`.
    pub fn apply(&self, grid: &Grid, u: &mut [f64]) {
        for (&n, v) in grid.boundary_nodes().iter().zip(&self.values) {
            u[n] = *v;
        }
    }
}

/// Parsed contents of a binary field file.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldBlob {
    pub components: u32,
    pub node_counts: Vec<u32>,
    pub spacing: Vec<f64>,
    pub payload: Vec<f64>,
}

impl FieldBlob {
    pub fn read(input: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; 16];
        input.read_exact(&mut header)?;
        if &header[..8] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let components = u32::from_le_bytes(header[12..16].try_into().unwrap());
        let dim = read_u32(input)? as usize;
        if !(1..=8).contains(&dim) {
            return Err(Error::Format(format!("implausible dimension {dim}")));
        }
        let node_counts = (0..dim).map(|_| read_u32(input)).collect::<Result<Vec<_>>>()?;
        let spacing = (0..dim).map(|_| read_f64(input)).collect::<Result<Vec<_>>>()?;
        let samples: usize = if components == 1 {
            node_counts.iter().map(|&n| n as usize).product()
        } else {
            node_counts.iter().map(|&n| (n as usize).saturating_sub(1)).product::<usize>() * components as usize
        };
        let payload = (0..samples).map(|_| read_f64(input)).collect::<Result<Vec<_>>>()?;
        Ok(FieldBlob {
            components,
            node_counts,
            spacing,
            payload,
        })
    }

    fn check_grid(&self, grid: &Grid, components: u32) -> Result<()> {
        let counts_match = self.node_counts.len() == grid.dim()
            && self.node_counts.iter().zip(grid.shape()).all(|(a, b)| *a as usize == *b);
        let spacing_match = self
            .spacing
            .iter()
            .zip(grid.spacing())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs());
        if !counts_match || !spacing_match || self.components != components {
            return Err(Error::Format("field file does not match the grid".into()));
        }
        Ok(())
    }
}

fn write_blob(grid: &Grid, components: u32, payload: &[f64], out: &mut impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&components.to_le_bytes())?;
    out.write_all(&(grid.dim() as u32).to_le_bytes())?;
    for &n in grid.shape() {
        out.write_all(&(n as u32).to_le_bytes())?;
    }
    for h in grid.spacing() {
        out.write_all(&h.to_le_bytes())?;
    }
    for v in payload {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(input: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Euclidean pairing over interior nodes only.
pub fn interior_dot(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.interior_nodes().iter().map(|&n| a[n] * b[n]).sum()
}

/// Zeroes every entry that is not an interior node.
pub fn restrict_to_interior(grid: &Grid, u: &mut [f64]) {
    for (v, role) in u.iter_mut().zip(grid.roles()) {
        if *role != NodeRole::Interior {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec, Resolution};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(spec: DomainSpec, n: usize) -> Arc<Grid> {
        Arc::new(build_grid(&spec, Resolution::Nodes(n)).unwrap())
    }

    #[test]
    fn gradient_exact_on_affine() {
        for dim in 2..=4 {
            let g = grid(DomainSpec::unit_box(dim), 5);
            let slope: Vec<f64> = (0..dim).map(|k| 0.3 - 0.2 * k as f64).collect();
            let s2 = slope.clone();
            let u = ScalarField::from_fn(g.clone(), move |x| 1.5 + x.iter().zip(&s2).map(|(a, b)| a * b).sum::<f64>());
            let du = discrete_gradient(&u);
            for &c in g.active_cells() {
                for k in 0..dim {
                    assert!((du.cell(c)[k] - slope[k]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = grid(DomainSpec::unit_box(3), 4);
        let u = ScalarField::from_fn(g, |_| 7.0);
        assert!(discrete_gradient(&u).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_of_product_matches_corner_average() {
        let g = grid(DomainSpec::unit_box(2), 5);
        let u = ScalarField::from_fn(g.clone(), |x| x[0] * x[1]);
        let du = discrete_gradient(&u);
        let h = 0.25;
        for i in 0..4 {
            for j in 0..4 {
                let (x0, y0) = (i as f64 * h, j as f64 * h);
                let f = |x: f64, y: f64| x * y;
                let gx = ((f(x0 + h, y0) - f(x0, y0)) + (f(x0 + h, y0 + h) - f(x0, y0 + h))) / (2.0 * h);
                let gy = ((f(x0, y0 + h) - f(x0, y0)) + (f(x0 + h, y0 + h) - f(x0 + h, y0))) / (2.0 * h);
                let c = i * 4 + j;
                assert!((du.cell(c)[0] - gx).abs() < 1e-14);
                assert!((du.cell(c)[1] - gy).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn divergence_of_constant_vanishes_inside() {
        let g = grid(DomainSpec::unit_box(2), 6);
        let p = VectorField::from_fn(g.clone(), |_| vec![0.4, -1.3]);
        let d = discrete_divergence(&p);
        for &n in g.interior_nodes() {
            assert!(d.values()[n].abs() < 1e-12);
        }
    }

    #[test]
    fn second_difference_of_square() {
        let g = grid(DomainSpec::unit_box(2), 9);
        let u = ScalarField::from_fn(g.clone(), |x| x[0] * x[0]);
        let d = discrete_divergence(&discrete_gradient(&u));
        for &n in g.interior_nodes() {
            assert!((d.values()[n] - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn adjointness_on_all_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let kinds = [
            DomainSpec::unit_box(2),
            DomainSpec::Ball { center: vec![0.0; 3], radius: 1.0 },
            DomainSpec::LShape { lower: vec![0.0, 0.0], upper: vec![1.0, 1.0] },
            DomainSpec::unit_box(4),
        ];
        for spec in kinds {
            let g = grid(spec, 9);
            for _ in 0..10 {
                let mut u: Vec<f64> = (0..g.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
                restrict_to_interior(&g, &mut u);
                let mut p: Vec<f64> = (0..g.cell_count() * g.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                for c in 0..g.cell_count() {
                    if !g.is_active_cell(c) {
                        p[c * g.dim()..(c + 1) * g.dim()].iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                let mut du = vec![0.0; p.len()];
                gradient_into(&g, &u, &mut du);
                let mut dp = vec![0.0; u.len()];
                divergence_into(&g, &p, &mut dp);
                let lhs: f64 = du.iter().zip(&p).map(|(a, b)| a * b).sum();
                let rhs = -interior_dot(&g, &u, &dp);
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn binary_roundtrip_and_bad_magic() {
        let g = grid(DomainSpec::unit_box(2), 4);
        let u = ScalarField::from_fn(g.clone(), |x| x[0] - 2.0 * x[1]);
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 4 + 2 * 4 + 2 * 8 + 16 * 8);
        let back = ScalarField::read_binary(g.clone(), &mut buf.as_slice()).unwrap();
        assert_eq!(back.values(), u.values());
        buf[0] = b'X';
        assert!(matches!(ScalarField::read_binary(g, &mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn csv_lists_domain_nodes() {
        let g = grid(DomainSpec::unit_box(2), 3);
        let u = ScalarField::from_fn(g, |x| x[0]);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert_eq!(text.lines().next().unwrap(), "x0,x1,value");
    }
}
