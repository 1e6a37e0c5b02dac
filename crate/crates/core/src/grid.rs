//! Structured grids over boxes, balls and masked regions of `R^m`.
//!
//! Nodes live on a rectangular lattice stored in row-major order (last axis
//! fastest). A lattice node is *exterior* when it lies outside the domain,
//! *interior* when all of its `3^m - 1` lattice neighbours are domain nodes,
//! and *boundary* otherwise. Cells are the lattice hypercubes; a cell is
//! active when all of its `2^m` corners are domain nodes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_DIM: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Exterior,
    Boundary,
    Interior,
}

/// Geometric description of the domain, before sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// The box `[lower, upper]` with the quadrant above the midpoint in the
    /// first two axes removed.
    #[serde(rename = "lshape")]
    LShape { lower: Vec<f64>, upper: Vec<f64> },
}

impl DomainSpec {
    pub fn unit_box(dim: usize) -> Self {
        DomainSpec::Box {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Box { lower, .. } | DomainSpec::LShape { lower, .. } => lower.len(),
            DomainSpec::Ball { center, .. } => center.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    /// Nodes per axis.
    Nodes(usize),
    /// Target spacing; the node count per axis is rounded to fit the extent.
    Spacing(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    Box,
    Ball { center: Vec<f64>, radius: f64 },
    Mask,
}

#[derive(Clone, Debug)]
pub struct Grid {
    dim: usize,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    kind: DomainKind,
    roles: Vec<NodeRole>,
    strides: Vec<usize>,
    cell_shape: Vec<usize>,
    cell_strides: Vec<usize>,
    cell_base: Vec<usize>,
    cell_active: Vec<bool>,
    active_cells: Vec<usize>,
    corner_offsets: Vec<usize>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

/// Builds a grid from a domain description.
pub fn build_grid(domain: &DomainSpec, resolution: Resolution) -> Result<Grid> {
    let dim = domain.dim();
    match domain {
        DomainSpec::Box { lower, upper } => {
            check_extent(lower, upper)?;
            let (shape, spacing) = lattice_for(lower, upper, resolution)?;
            Grid::from_predicate(lower.clone(), shape, spacing, DomainKind::Box, |_| true)
        }
        DomainSpec::LShape { lower, upper } => {
            check_extent(lower, upper)?;
            if dim < 2 {
                return Err(Error::Config("an L-shaped domain needs at least two axes".into()));
            }
            let (shape, spacing) = lattice_for(lower, upper, resolution)?;
            let mid: Vec<f64> = lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect();
            let tol = 1e-9 * spacing.iter().cloned().fold(f64::INFINITY, f64::min);
            Grid::from_predicate(lower.clone(), shape, spacing, DomainKind::Mask, |x| {
                !(x[0] > mid[0] + tol && x[1] > mid[1] + tol)
            })
        }
        DomainSpec::Ball { center, radius } => {
            if !(*radius > 0.0) || !radius.is_finite() {
                return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
            }
            let lower: Vec<f64> = center.iter().map(|c| c - radius).collect();
            let upper: Vec<f64> = center.iter().map(|c| c + radius).collect();
            let (shape, spacing) = lattice_for(&lower, &upper, resolution)?;
            let r2 = radius * radius * (1.0 + 1e-12);
            let c = center.clone();
            Grid::from_predicate(
                lower,
                shape,
                spacing,
                DomainKind::Ball {
                    center: center.clone(),
                    radius: *radius,
                },
                move |x| x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2,
            )
        }
    }
}

fn check_extent(lower: &[f64], upper: &[f64]) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(Error::Config("lower and upper corners differ in dimension".into()));
    }
    if lower.len() < 2 || lower.len() > MAX_DIM {
        return Err(Error::Config(format!(
            "dimension must lie in 2..={MAX_DIM}, got {}",
            lower.len()
        )));
    }
    for (k, (a, b)) in lower.iter().zip(upper).enumerate() {
        if !(b - a > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!("degenerate extent on axis {k}: [{a}, {b}]")));
        }
    }
    Ok(())
}

fn lattice_for(lower: &[f64], upper: &[f64], resolution: Resolution) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut shape = Vec::with_capacity(lower.len());
    let mut spacing = Vec::with_capacity(lower.len());
    for (a, b) in lower.iter().zip(upper) {
        let len = b - a;
        let n = match resolution {
            Resolution::Nodes(n) => n,
            Resolution::Spacing(h) => {
                if !(h > 0.0) {
                    return Err(Error::Config(format!("spacing must be positive, got {h}")));
                }
                (len / h).round() as usize + 1
            }
        };
        if n < 3 {
            return Err(Error::Resolution(format!(
                "at least 3 nodes per axis are required, got {n}"
            )));
        }
        shape.push(n);
        spacing.push(len / (n - 1) as f64);
    }
    Ok((shape, spacing))
}

impl Grid {
    /// Samples a lattice and keeps the nodes where `inside` holds.
    pub fn from_predicate(
        origin: Vec<f64>,
        shape: Vec<usize>,
        spacing: Vec<f64>,
        kind: DomainKind,
        inside: impl Fn(&[f64]) -> bool,
    ) -> Result<Grid> {
        let dim = shape.len();
        if dim < 2 || dim > MAX_DIM || spacing.len() != dim || origin.len() != dim {
            return Err(Error::Config("inconsistent lattice description".into()));
        }
        if spacing.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Config("spacing must be positive on every axis".into()));
        }
        if shape.iter().any(|&n| n < 2) {
            return Err(Error::Resolution("at least two nodes per axis are required".into()));
        }
        let mut strides = vec![1usize; dim];
        for k in (0..dim - 1).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        let node_count = strides[0] * shape[0];

        let mut in_domain = vec![false; node_count];
        let mut x = vec![0.0; dim];
        for (idx, flag) in in_domain.iter_mut().enumerate() {
            let mut rem = idx;
            for k in 0..dim {
                let i = rem / strides[k];
                rem %= strides[k];
                x[k] = origin[k] + i as f64 * spacing[k];
            }
            *flag = inside(&x);
        }

        let deltas = neighbour_deltas(dim);
        let mut roles = vec![NodeRole::Exterior; node_count];
        let mut mi = vec![0usize; dim];
        for idx in 0..node_count {
            if !in_domain[idx] {
                continue;
            }
            unravel(idx, &strides, &mut mi);
            let full = deltas.iter().all(|d| {
                shifted(&mi, d, &shape).is_some_and(|j| in_domain[ravel(&j, &strides)])
            });
            roles[idx] = if full { NodeRole::Interior } else { NodeRole::Boundary };
        }

        let cell_shape: Vec<usize> = shape.iter().map(|n| n - 1).collect();
        let mut cell_strides = vec![1usize; dim];
        for k in (0..dim - 1).rev() {
            cell_strides[k] = cell_strides[k + 1] * cell_shape[k + 1];
        }
        let cell_count = cell_strides[0] * cell_shape[0];
        let corners = 1usize << dim;
        let corner_offsets: Vec<usize> = (0..corners)
            .map(|b| (0..dim).filter(|k| b >> k & 1 == 1).map(|k| strides[k]).sum())
            .collect();
        let mut cell_base = Vec::with_capacity(cell_count);
        let mut cell_active = Vec::with_capacity(cell_count);
        let mut active_cells = Vec::new();
        for c in 0..cell_count {
            unravel(c, &cell_strides, &mut mi);
            let base = ravel(&mi, &strides);
            let active = corner_offsets.iter().all(|o| in_domain[base + o]);
            cell_base.push(base);
            cell_active.push(active);
            if active {
                active_cells.push(c);
            }
        }

        let interior = (0..node_count).filter(|&i| roles[i] == NodeRole::Interior).collect();
        let boundary = (0..node_count).filter(|&i| roles[i] == NodeRole::Boundary).collect();

        Ok(Grid {
            dim,
            shape,
            spacing,
            origin,
            kind,
            roles,
            strides,
            cell_shape,
            cell_strides,
            cell_base,
            cell_active,
            active_cells,
            corner_offsets,
            interior,
            boundary,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis of the underlying lattice.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    /// Number of lattice nodes, exterior ones included.
    pub fn node_count(&self) -> usize {
        self.roles.len()
    }

    pub fn domain_node_count(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cell_base.len()
    }

    pub fn cell_shape(&self) -> &[usize] {
        &self.cell_shape
    }

    pub fn role(&self, node: usize) -> NodeRole {
        self.roles[node]
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn is_domain_node(&self, node: usize) -> bool {
        self.roles[node] != NodeRole::Exterior
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn active_cells(&self) -> &[usize] {
        &self.active_cells
    }

    pub fn is_active_cell(&self, cell: usize) -> bool {
        self.cell_active[cell]
    }

    /// Lattice node at the lower corner of `cell`.
    pub fn cell_base(&self, cell: usize) -> usize {
        self.cell_base[cell]
    }

    /// Node offsets of the `2^m` cell corners; bit `k` of the corner number
    /// selects the upper side along axis `k`.
    pub fn corner_offsets(&self) -> &[usize] {
        &self.corner_offsets
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Volume of one cell, `prod h_k`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn node_multi_index(&self, node: usize) -> Vec<usize> {
        let mut mi = vec![0; self.dim];
        unravel(node, &self.strides, &mut mi);
        mi
    }

    pub fn node_from_multi_index(&self, mi: &[usize]) -> Option<usize> {
        if mi.len() != self.dim || mi.iter().zip(&self.shape).any(|(i, n)| i >= n) {
            return None;
        }
        Some(ravel(mi, &self.strides))
    }

    /// Cell whose lower corner has lattice index `mi`.
    pub fn cell_from_multi_index(&self, mi: &[usize]) -> Option<usize> {
        if mi.len() != self.dim || mi.iter().zip(&self.cell_shape).any(|(i, n)| i >= n) {
            return None;
        }
        Some(mi.iter().zip(&self.cell_strides).map(|(i, s)| i * s).sum())
    }

    pub fn node_position(&self, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.node_position_into(node, &mut x);
        x
    }

    pub fn node_position_into(&self, node: usize, x: &mut [f64]) {
        let mut rem = node;
        for k in 0..self.dim {
            let i = rem / self.strides[k];
            rem %= self.strides[k];
            x[k] = self.origin[k] + i as f64 * self.spacing[k];
        }
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        let mut x = self.node_position(self.cell_base[cell]);
        for (xk, h) in x.iter_mut().zip(&self.spacing) {
            *xk += 0.5 * h;
        }
        x
    }

    /// Lattice node closest to `x` (may be exterior).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mi: Vec<usize> = (0..self.dim)
            .map(|k| {
                let t = ((x[k] - self.origin[k]) / self.spacing[k]).round();
                t.clamp(0.0, (self.shape[k] - 1) as f64) as usize
            })
            .collect();
        ravel(&mi, &self.strides)
    }

    /// Cell containing `x` together with the local coordinates in `[0,1]^m`,
    /// or `None` when `x` lies outside the lattice.
    pub fn locate(&self, x: &[f64]) -> Option<(usize, Vec<f64>)> {
        let mut cell = 0;
        let mut local = Vec::with_capacity(self.dim);
        for k in 0..self.dim {
            let t = (x[k] - self.origin[k]) / self.spacing[k];
            let ncell = self.cell_shape[k];
            if !(t >= -1e-12 && t <= ncell as f64 + 1e-12) {
                return None;
            }
            let i = (t.floor().max(0.0) as usize).min(ncell - 1);
            local.push((t - i as f64).clamp(0.0, 1.0));
            cell += i * self.cell_strides[k];
        }
        Some((cell, local))
    }

    /// Multilinear interpolation weights of `x`: `(node, weight)` pairs over
    /// the corners of the containing cell.
    pub fn interpolation_weights(&self, x: &[f64]) -> Option<Vec<(usize, f64)>> {
        let (cell, local) = self.locate(x)?;
        let base = self.cell_base[cell];
        let out = self
            .corner_offsets
            .iter()
            .enumerate()
            .map(|(b, off)| {
                let w: f64 = (0..self.dim)
                    .map(|k| if b >> k & 1 == 1 { local[k] } else { 1.0 - local[k] })
                    .product();
                (base + off, w)
            })
            .collect();
        Some(out)
    }

    /// Euclidean diameter of the lattice bounding box.
    pub fn bounding_diameter(&self) -> f64 {
        self.shape
            .iter()
            .zip(&self.spacing)
            .map(|(n, h)| ((n - 1) as f64 * h).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean distance from a node to the nearest non-interior domain node
    /// or exterior lattice position, a grid-scale proxy for `dist(x, dOmega)`.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        let mut p = vec![0.0; self.dim];
        for (node, role) in self.roles.iter().enumerate() {
            if *role == NodeRole::Interior {
                continue;
            }
            self.node_position_into(node, &mut p);
            let d = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            best = best.min(d);
        }
        best.sqrt()
    }

    /// Shortest-path distances from `source` to every node through the
    /// neighbour graph of domain nodes.
    ///
    /// Edges join a node to any of its `3^m - 1` lattice neighbours whose
    /// spanned sub-box consists of domain nodes only, so diagonal moves never
    /// cut across a re-entrant corner. Unreachable nodes get `+inf`.
    pub fn intrinsic_distances_from(&self, source: usize) -> Result<Vec<f64>> {
        if source >= self.node_count() || !self.is_domain_node(source) {
            return Err(Error::Argument(format!("node {source} is not a domain node")));
        }
        let edges = self.edge_templates();
        let mut dist = vec![f64::INFINITY; self.node_count()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry(0.0, source));
        let mut mi = vec![0usize; self.dim];
        while let Some(HeapEntry(d, node)) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            unravel(node, &self.strides, &mut mi);
            for edge in &edges {
                let Some(j) = shifted(&mi, &edge.delta, &self.shape) else {
                    continue;
                };
                let target = ravel(&j, &self.strides);
                if !self.is_domain_node(target) {
                    continue;
                }
                let clear = edge.span.iter().all(|rel| {
                    shifted(&mi, rel, &self.shape)
                        .is_some_and(|q| self.is_domain_node(ravel(&q, &self.strides)))
                });
                if !clear {
                    continue;
                }
                let nd = d + edge.length;
                if nd < dist[target] {
                    dist[target] = nd;
                    heap.push(HeapEntry(nd, target));
                }
            }
        }
        Ok(dist)
    }

    pub fn intrinsic_distance(&self, x: usize, y: usize) -> Result<f64> {
        if y >= self.node_count() || !self.is_domain_node(y) {
            return Err(Error::Argument(format!("node {y} is not a domain node")));
        }
        if x == y {
            if !self.is_domain_node(x) {
                return Err(Error::Argument(format!("node {x} is not a domain node")));
            }
            return Ok(0.0);
        }
        Ok(self.intrinsic_distances_from(x)?[y])
    }

    fn edge_templates(&self) -> Vec<EdgeTemplate> {
        neighbour_deltas(self.dim)
            .into_iter()
            .map(|delta| {
                let support: Vec<usize> = (0..self.dim).filter(|&k| delta[k] != 0).collect();
                let mut span = Vec::new();
                for mask in 1..(1usize << support.len()) - 1 {
                    let mut rel = vec![0isize; self.dim];
                    for (bit, &k) in support.iter().enumerate() {
                        if mask >> bit & 1 == 1 {
                            rel[k] = delta[k];
                        }
                    }
                    span.push(rel);
                }
                let length = delta
                    .iter()
                    .zip(&self.spacing)
                    .map(|(d, h)| (*d as f64 * h).powi(2))
                    .sum::<f64>()
                    .sqrt();
                EdgeTemplate { delta, span, length }
            })
            .collect()
    }
}

struct EdgeTemplate {
    delta: Vec<isize>,
    span: Vec<Vec<isize>>,
    length: f64,
}

#[derive(PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Admissibility margin of boundary data: `min_{x != y} d(x, y) - |phi(x) - phi(y)|`
/// over boundary node pairs, with `d` the grid intrinsic distance.
///
/// `values` is aligned with [`Grid::boundary_nodes`]. A strictly positive
/// margin certifies a spacelike extension at grid scale. When `max_sources`
/// is given, shortest-path trees are only grown from an evenly strided subset
/// of boundary nodes.
pub fn admissibility_margin(grid: &Grid, values: &[f64], max_sources: Option<usize>) -> Result<f64> {
    let boundary = grid.boundary_nodes();
    if values.len() != boundary.len() {
        return Err(Error::Argument(format!(
            "boundary datum has {} values but the grid has {} boundary nodes",
            values.len(),
            boundary.len()
        )));
    }
    let stride = match max_sources {
        Some(cap) if cap > 0 && boundary.len() > cap => boundary.len().div_ceil(cap),
        _ => 1,
    };
    let mut margin = f64::INFINITY;
    for a in (0..boundary.len()).step_by(stride) {
        let dist = grid.intrinsic_distances_from(boundary[a])?;
        for (b, &node) in boundary.iter().enumerate() {
            if b == a {
                continue;
            }
            let m = dist[node] - (values[a] - values[b]).abs();
            if m < margin {
                margin = m;
            }
        }
    }
    Ok(margin)
}

pub(crate) fn neighbour_deltas(dim: usize) -> Vec<Vec<isize>> {
    let total = 3usize.pow(dim as u32);
    (0..total)
        .map(|mut t| {
            (0..dim)
                .map(|_| {
                    let d = (t % 3) as isize - 1;
                    t /= 3;
                    d
                })
                .collect::<Vec<isize>>()
        })
        .filter(|d| d.iter().any(|&x| x != 0))
        .collect()
}

fn unravel(mut idx: usize, strides: &[usize], out: &mut [usize]) {
    for (o, s) in out.iter_mut().zip(strides) {
        *o = idx / s;
        idx %= s;
    }
}

fn ravel(mi: &[usize], strides: &[usize]) -> usize {
    mi.iter().zip(strides).map(|(i, s)| i * s).sum()
}

fn shifted(mi: &[usize], delta: &[isize], shape: &[usize]) -> Option<Vec<usize>> {
    mi.iter()
        .zip(delta)
        .zip(shape)
        .map(|((&i, &d), &n)| {
            let j = i as isize + d;
            (j >= 0 && (j as usize) < n).then_some(j as usize)
        })
        .collect()
}
