//! Direct solver for the pinned-boundary operator `K^T K`, where `K` is the
//! cell gradient of [`crate::field::gradient_into`].
//!
//! The matrix splits into the connected components of its coupling graph
//! (in two dimensions with equal spacings the corner-average gradient only
//! couples diagonal neighbours, so the two checkerboard colours separate).
//! Each component is factored by a banded Cholesky decomposition in lattice
//! order.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Dense lower band, row `i` holding columns `i - bw ..= i`.
#[derive(Clone, Debug)]
struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors in place. `l` holds the lower band of a symmetric matrix.
    fn factor(n: usize, bw: usize, mut l: Vec<f64>) -> Result<Self> {
        let w = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = l[i * w + (j + bw - i)];
                let ri = i * w + (k0 + bw - i);
                let rj = j * w + (k0 + bw - j);
                let len = j - k0;
                sum -= dot(&l[ri..ri + len], &l[rj..rj + len]);
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::Argument(
                            "gradient operator is singular on this grid (interior node without an active cell)".into(),
                        ));
                    }
                    l[i * w + bw] = sum.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = sum / l[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let row = &self.l[i * w + (j0 + self.bw - i)..i * w + self.bw];
            let s = dot(row, &x[j0..i]);
            x[i] = (x[i] - s) / self.l[i * w + self.bw];
        }
        for i in (0..self.n).rev() {
            x[i] /= self.l[i * w + self.bw];
            let xi = x[i];
            let j0 = i.saturating_sub(self.bw);
            let row = &self.l[i * w + (j0 + self.bw - i)..i * w + self.bw];
            for (xj, lij) in x[j0..i].iter_mut().zip(row) {
                *xj -= lij * xi;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise without reassociation.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[derive(Clone, Debug)]
struct Component {
    nodes: Vec<usize>,
    chol: BandedCholesky,
}

/// Factorization of `K^T K` restricted to interior nodes.
#[derive(Clone, Debug)]
pub struct GradientLaplacian {
    components: Vec<Component>,
    scratch_len: usize,
}

impl GradientLaplacian {
    /// Band storage in bytes and factorization multiply-adds, without
    /// building anything.
    pub fn cost_estimate(grid: &Grid) -> (usize, f64) {
        let (comps, _) = components(grid);
        comps.iter().fold((0, 0.0), |(bytes, flops), nodes| {
            let bw = bandwidth(grid, nodes);
            (
                bytes + nodes.len() * (bw + 1) * 8,
                flops + nodes.len() as f64 * (bw * bw) as f64 / 2.0,
            )
        })
    }

    pub fn new(grid: &Grid) -> Result<Self> {
        let (comps, local) = components(grid);
        let stencil = stencil(grid);
        let offsets = grid.corner_offsets();
        let mut out = Vec::with_capacity(comps.len());
        let mut owner = vec![usize::MAX; grid.node_count()];
        for (ci, nodes) in comps.iter().enumerate() {
            for &n in nodes {
                owner[n] = ci;
            }
        }
        let bws: Vec<usize> = comps.iter().map(|nodes| bandwidth(grid, nodes)).collect();
        let mut bands: Vec<Vec<f64>> = comps
            .iter()
            .zip(&bws)
            .map(|(nodes, &bw)| vec![0.0; nodes.len() * (bw + 1)])
            .collect();
        for &c in grid.active_cells() {
            let base = grid.cell_base(c);
            for (a, oa) in offsets.iter().enumerate() {
                let na = base + oa;
                if owner[na] == usize::MAX {
                    continue;
                }
                for (b, ob) in offsets.iter().enumerate() {
                    let nb = base + ob;
                    if owner[nb] == usize::MAX || local[nb] > local[na] || stencil[a][b] == 0.0 {
                        continue;
                    }
                    let ci = owner[na];
                    debug_assert_eq!(ci, owner[nb]);
                    let bw = bws[ci];
                    let (i, j) = (local[na], local[nb]);
                    bands[ci][i * (bw + 1) + (j + bw - i)] += stencil[a][b];
                }
            }
        }
        let mut scratch_len = 0;
        for ((nodes, bw), band) in comps.into_iter().zip(bws).zip(bands) {
            scratch_len = scratch_len.max(nodes.len());
            let chol = BandedCholesky::factor(nodes.len(), bw, band)?;
            out.push(Component { nodes, chol });
        }
        Ok(GradientLaplacian {
            components: out,
            scratch_len,
        })
    }

    /// Overwrites the interior entries of `x` with `(K^T K)^{-1} x`.
    /// Entries on other nodes are left untouched.
    pub fn solve_in_place(&self, x: &mut [f64], scratch: &mut Vec<f64>) {
        scratch.resize(self.scratch_len, 0.0);
        for comp in &self.components {
            let buf = &mut scratch[..comp.nodes.len()];
            for (v, &n) in buf.iter_mut().zip(&comp.nodes) {
                *v = x[n];
            }
            comp.chol.solve_in_place(buf);
            for (v, &n) in buf.iter().zip(&comp.nodes) {
                x[n] = *v;
            }
        }
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }
}

/// `stencil[a][b] = sum_k s_k(a) s_k(b) scale_k^2` for corners `a`, `b`.
fn stencil(grid: &Grid) -> Vec<Vec<f64>> {
    let m = grid.dim();
    let corners = 1usize << m;
    let scales: Vec<f64> = grid
        .spacing()
        .iter()
        .map(|h| 1.0 / ((1usize << (m - 1)) as f64 * h))
        .collect();
    let sign = |corner: usize, k: usize| if corner >> k & 1 == 1 { 1.0 } else { -1.0 };
    (0..corners)
        .map(|a| {
            (0..corners)
                .map(|b| (0..m).map(|k| sign(a, k) * sign(b, k) * scales[k] * scales[k]).sum())
                .collect()
        })
        .collect()
}

/// Interior nodes grouped by coupling component, each in lattice order, and
/// the local index of every node within its component.
fn components(grid: &Grid) -> (Vec<Vec<usize>>, Vec<usize>) {
    let stencil = stencil(grid);
    let offsets = grid.corner_offsets();
    let mut parent: Vec<usize> = (0..grid.node_count()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let interior = |n: usize| grid.role(n) == crate::grid::NodeRole::Interior;
    for &c in grid.active_cells() {
        let base = grid.cell_base(c);
        for (a, oa) in offsets.iter().enumerate() {
            for (b, ob) in offsets.iter().enumerate().skip(a + 1) {
                let (na, nb) = (base + oa, base + ob);
                if stencil[a][b] != 0.0 && interior(na) && interior(nb) {
                    let (ra, rb) = (find(&mut parent, na), find(&mut parent, nb));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut comp_of_root = std::collections::HashMap::new();
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut local = vec![usize::MAX; grid.node_count()];
    for &n in grid.interior_nodes() {
        let r = find(&mut parent, n);
        let ci = *comp_of_root.entry(r).or_insert_with(|| {
            comps.push(Vec::new());
            comps.len() - 1
        });
        local[n] = comps[ci].len();
        comps[ci].push(n);
    }
    (comps, local)
}

fn bandwidth(grid: &Grid, nodes: &[usize]) -> usize {
    // Nodes are in increasing lattice order, so a coupling across lattice
    // distance d spans at most the number of component nodes inside it.
    let reach = grid.corner_offsets().iter().copied().max().unwrap_or(0);
    let mut bw = 0;
    let mut j = 0;
    for (i, &n) in nodes.iter().enumerate() {
        while nodes[j] + reach < n {
            j += 1;
        }
        bw = bw.max(i - j);
    }
    bw
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{divergence_into, gradient_into};
    use crate::grid::{build_grid, DomainSpec, Resolution};

    fn apply(grid: &Grid, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; grid.cell_count() * grid.dim()];
        gradient_into(grid, x, &mut g);
        let mut d = vec![0.0; grid.node_count()];
        divergence_into(grid, &g, &mut d);
        d.iter().map(|v| -v).collect()
    }

    fn check(spec: DomainSpec, n: usize, expected_components: Option<usize>) {
        let grid = build_grid(&spec, Resolution::Nodes(n)).unwrap();
        let lap = GradientLaplacian::new(&grid).unwrap();
        if let Some(k) = expected_components {
            assert_eq!(lap.component_count(), k);
        }
        let mut x = vec![0.0; grid.node_count()];
        for (i, &nd) in grid.interior_nodes().iter().enumerate() {
            x[nd] = ((i * 7919) % 101) as f64 / 50.0 - 1.0;
        }
        let b = apply(&grid, &x);
        let mut y = b.clone();
        let mut scratch = Vec::new();
        for &nd in grid.boundary_nodes() {
            y[nd] = 0.0;
        }
        lap.solve_in_place(&mut y, &mut scratch);
        let err = grid
            .interior_nodes()
            .iter()
            .map(|&nd| (y[nd] - x[nd]).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "solve error {err}");
    }

    #[test]
    fn inverts_on_planar_domains() {
        check(
            DomainSpec::Box {
                lower: vec![0.0, 0.0],
                upper: vec![1.0, 1.0],
            },
            17,
            Some(2),
        );
        check(
            DomainSpec::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            33,
            None,
        );
        check(
            DomainSpec::LShape {
                lower: vec![0.0, 0.0],
                upper: vec![1.0, 1.0],
            },
            21,
            None,
        );
    }

    #[test]
    fn inverts_in_three_dimensions() {
        check(
            DomainSpec::Box {
                lower: vec![0.0, 0.0, 0.0],
                upper: vec![1.0, 2.0, 1.0],
            },
            9,
            None,
        );
    }
}
