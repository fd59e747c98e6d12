//! Block-sparse normal equations over an upper-triangular CSC pattern.

use std::collections::HashMap;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Mat, Side};
use nalgebra::{DMatrix, SMatrix, SVector};

/// Sparsity of `JᵀJ` for `num_poses` pose blocks of width `D` followed by
/// scalar latent columns.
pub struct Pattern<const D: usize> {
    num_poses: usize,
    num_latents: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Position of row block `a` inside the block list of column block `b`, for `a ≤ b`.
    pose_slot: HashMap<(usize, usize), usize>,
    /// Position of pose block `a` inside the list of latent column `l`.
    latent_slot: HashMap<(usize, usize), usize>,
    latent_rows: Vec<usize>,
    symbolic: SymbolicLlt<usize>,
    csc: SymbolicSparseColMat<usize>,
}

impl<const D: usize> Pattern<D> {
    /// `pairs` are pose-pose couplings; `latent_links` are (pose, latent) couplings.
    pub fn new(num_poses: usize, num_latents: usize, pairs: impl IntoIterator<Item = (usize, usize)>, latent_links: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut above: Vec<Vec<usize>> = vec![Vec::new(); num_poses];
        for (i, j) in pairs {
            if i != j {
                above[i.max(j)].push(i.min(j));
            }
        }
        for (b, list) in above.iter_mut().enumerate() {
            list.push(b);
            list.sort_unstable();
            list.dedup();
        }
        let mut latent_lists: Vec<Vec<usize>> = vec![Vec::new(); num_latents];
        for (p, l) in latent_links {
            latent_lists[l].push(p);
        }
        for list in &mut latent_lists {
            list.sort_unstable();
            list.dedup();
        }

        let n = num_poses * D + num_latents;
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut pose_slot = HashMap::new();
        col_ptr.push(0);
        for (b, list) in above.iter().enumerate() {
            for (slot, &a) in list.iter().enumerate() {
                pose_slot.insert((a, b), slot);
            }
            for c in 0..D {
                for &a in list {
                    let rows = if a == b { c + 1 } else { D };
                    row_idx.extend((0..rows).map(|r| a * D + r));
                }
                col_ptr.push(row_idx.len());
            }
        }
        let mut latent_slot = HashMap::new();
        let mut latent_rows = Vec::with_capacity(num_latents);
        for (l, list) in latent_lists.iter().enumerate() {
            for (slot, &p) in list.iter().enumerate() {
                latent_slot.insert((p, l), slot);
                row_idx.extend((0..D).map(|r| p * D + r));
            }
            latent_rows.push(list.len());
            row_idx.push(num_poses * D + l);
            col_ptr.push(row_idx.len());
        }
        let csc = SymbolicSparseColMat::new_checked(n, n, col_ptr.clone(), None, row_idx.clone());
        let symbolic = SymbolicLlt::try_new(csc.as_ref(), Side::Upper).expect("symbolic analysis of a valid pattern");
        Self { num_poses, num_latents, col_ptr, row_idx, pose_slot, latent_slot, latent_rows, symbolic, csc }
    }

    pub fn dim(&self) -> usize {
        self.num_poses * D + self.num_latents
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn num_latents(&self) -> usize {
        self.num_latents
    }

    pub fn latent_col(&self, l: usize) -> usize {
        self.num_poses * D + l
    }
}

/// Normal equations `H δ = -g` assembled on a [`Pattern`].
pub struct NormalEquations<'p, const D: usize> {
    pattern: &'p Pattern<D>,
    pub values: Vec<f64>,
    pub gradient: Vec<f64>,
}

impl<'p, const D: usize> NormalEquations<'p, D> {
    pub fn new(pattern: &'p Pattern<D>) -> Self {
        Self { pattern, values: vec![0.0; pattern.nnz()], gradient: vec![0.0; pattern.dim()] }
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        self.gradient.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `block` to `H[a, b]` (pose blocks, `a ≤ b`; only the upper part of diagonal blocks is stored).
    pub fn add_pose_block(&mut self, a: usize, b: usize, block: &SMatrix<f64, D, D>) {
        let p = self.pattern;
        let slot = p.pose_slot[&(a, b)];
        for c in 0..D {
            let base = p.col_ptr[b * D + c] + slot * D;
            let rows = if a == b { c + 1 } else { D };
            for r in 0..rows {
                self.values[base + r] += block[(r, c)];
            }
        }
    }

    pub fn add_pose_latent(&mut self, pose: usize, latent: usize, column: &SVector<f64, D>) {
        let p = self.pattern;
        let slot = p.latent_slot[&(pose, latent)];
        let base = p.col_ptr[p.latent_col(latent)] + slot * D;
        for r in 0..D {
            self.values[base + r] += column[r];
        }
    }

    pub fn add_latent_diag(&mut self, latent: usize, v: f64) {
        let p = self.pattern;
        let base = p.col_ptr[p.latent_col(latent)] + p.latent_rows[latent] * D;
        self.values[base] += v;
    }

    pub fn add_pose_gradient(&mut self, pose: usize, g: &SVector<f64, D>) {
        for r in 0..D {
            self.gradient[pose * D + r] += g[r];
        }
    }

    pub fn add_latent_gradient(&mut self, latent: usize, g: f64) {
        let c = self.pattern.latent_col(latent);
        self.gradient[c] += g;
    }

    /// Indices of the diagonal entries in `values`.
    pub fn diagonal_indices(&self) -> Vec<usize> {
        let p = self.pattern;
        (0..p.dim()).map(|c| p.col_ptr[c + 1] - 1).collect()
    }

    /// `H x` using the symmetric upper storage.
    pub fn multiply(&self, x: &[f64]) -> Vec<f64> {
        let p = self.pattern;
        let mut y = vec![0.0; x.len()];
        for c in 0..p.dim() {
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                let r = p.row_idx[k];
                let v = self.values[k];
                y[r] += v * x[c];
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }

    /// Decouples latent `l` in `damped` so that its step solves to zero once
    /// its gradient entry is zeroed too.
    pub fn pin_latent(&self, damped: &mut [f64], l: usize) {
        let p = self.pattern;
        let c = p.latent_col(l);
        let (start, end) = (p.col_ptr[c], p.col_ptr[c + 1]);
        damped[start..end - 1].iter_mut().for_each(|v| *v = 0.0);
        damped[end - 1] = 1.0;
    }

    /// Solves `A δ = -g` where `damped` holds the values of `A`.
    pub fn solve(&self, damped: &[f64], gradient: &[f64]) -> Option<Vec<f64>> {
        let p = self.pattern;
        let mat = SparseColMatRef::new(p.csc.as_ref(), damped);
        let llt = Llt::try_new_with_symbolic(p.symbolic.clone(), mat, Side::Upper).ok()?;
        let n = p.dim();
        let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| -gradient[i]);
        llt.solve_in_place(rhs.as_mut());
        let out: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    }

    /// Dense copy of the full symmetric matrix, for tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.pattern;
        let mut m = DMatrix::zeros(p.dim(), p.dim());
        for c in 0..p.dim() {
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                let r = p.row_idx[k];
                m[(r, c)] += self.values[k];
                if r != c {
                    m[(c, r)] += self.values[k];
                }
            }
        }
        m
    }
}
