//! Compressed sparse row storage and the symmetric solvers used by the
//! finite-element code.
//!
//! The direct solver is an envelope (profile) Cholesky factorization applied
//! after a reverse Cuthill-McKee reordering. On the structured triangulations
//! used here the envelope stays close to the bandwidth of the mesh graph, and
//! the factorization is fully deterministic. A Jacobi-preconditioned conjugate
//! gradient solver is provided for systems whose envelope would be too large.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::SolveError;

/// Square sparse matrix in CSR layout with sorted column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from (row, col, value) triplets, summing duplicates.
    ///
    /// The triplets are sorted in place, so the summation order (and hence the
    /// result) depends only on the multiset of triplets pushed for each entry
    /// in their original order.
    pub fn from_triplets(n: usize, triplets: &mut [(usize, usize, f64)]) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in triplets.iter() {
            assert!(r < n && c < n, "triplet index out of range");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Dense row-major input, dropping exact zeros.
    pub fn from_dense(n: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), n * n);
        let mut t = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = dense[r * n + c];
                if v != 0.0 {
                    t.push((r, c, v));
                }
            }
        }
        Self::from_triplets(n, &mut t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let s = self.row_ptr[r];
        let e = self.row_ptr[r + 1];
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Index into `values()` of entry (r, c), if it is structurally present.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (cols, _) = self.row(r);
        cols.binary_search(&c).ok().map(|k| self.row_ptr[r] + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *yr = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n)
            .map(|r| {
                let (cols, vals) = self.row(r);
                x[r] * cols.iter().zip(vals).map(|(&c, &v)| v * y[c]).sum::<f64>()
            })
            .sum()
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `a * self + b * other` for two matrices with identical sparsity pattern.
    pub fn linear_combination(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert!(
            self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx,
            "linear_combination requires identical sparsity patterns"
        );
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }

    /// Principal submatrix on the (sorted, distinct) index list `keep`.
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &r in keep {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if map[c] != usize::MAX {
                    col_idx.push(map[c]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        // `keep` is sorted, so the remapped columns stay sorted.
        CsrMatrix {
            n: keep.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Largest |A_ij - A_ji| relative to the largest |A_ij|.
    pub fn symmetry_error(&self) -> f64 {
        let mut max_abs: f64 = 0.0;
        let mut max_diff: f64 = 0.0;
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                max_abs = max_abs.max(v.abs());
                max_diff = max_diff.max((v - self.get(c, r)).abs());
            }
        }
        if max_abs == 0.0 {
            0.0
        } else {
            max_diff / max_abs
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                d[r * self.n + c] = v;
            }
        }
        d
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric pattern of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut level = vec![0usize; n];

    let bfs_farthest = |start: usize, level: &mut [usize]| -> (usize, usize) {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        seen[start] = true;
        level[start] = 0;
        queue.push_back(start);
        let mut last = start;
        while let Some(u) = queue.pop_front() {
            if level[u] > level[last] || (level[u] == level[last] && degree[u] < degree[last]) {
                last = u;
            }
            for &w in a.row(u).0 {
                if !seen[w] {
                    seen[w] = true;
                    level[w] = level[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        (last, level[last])
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start node within this component.
        let mut start = seed;
        let (mut far, mut ecc) = bfs_farthest(start, &mut level);
        for _ in 0..8 {
            let (f2, e2) = bfs_farthest(far, &mut level);
            if e2 <= ecc {
                break;
            }
            start = far;
            far = f2;
            ecc = e2;
        }
        let start = if degree[far] < degree[start] { far } else { start };

        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        let mut nbrs = Vec::new();
        while let Some(u) = queue.pop_front() {
            order.push(u);
            nbrs.clear();
            nbrs.extend(a.row(u).0.iter().copied().filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor `P A P^T = L L^T`.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

/// Pivots below this fraction of the original diagonal are treated as a
/// loss of definiteness.
const PIVOT_TOLERANCE: f64 = 1e-11;

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self, SolveError> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_ordering(a, perm)
    }

    /// Number of stored entries of the envelope for the RCM ordering of `a`.
    pub fn envelope_size(a: &CsrMatrix) -> usize {
        let perm = reverse_cuthill_mckee(a);
        let (first, _) = Self::envelope(a, &perm);
        first.iter().enumerate().map(|(i, &f)| i - f + 1).sum()
    }

    fn envelope(a: &CsrMatrix, perm: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let n = a.dim();
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old_r in 0..n {
            let r = inv_perm[old_r];
            for &old_c in a.row(old_r).0 {
                let c = inv_perm[old_c];
                if c < r && c < first[r] {
                    first[r] = c;
                }
            }
        }
        (first, inv_perm)
    }

    pub fn factor_with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self, SolveError> {
        let n = a.dim();
        assert_eq!(perm.len(), n);
        let (first, inv_perm) = Self::envelope(a, &perm);
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offsets[n]];
        for old_r in 0..n {
            let r = inv_perm[old_r];
            let (cols, vals) = a.row(old_r);
            for (&old_c, &v) in cols.iter().zip(vals) {
                let c = inv_perm[old_c];
                if c <= r {
                    data[offsets[r] + (c - first[r])] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let row_i = offsets[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = offsets[j];
                let mut s = data[row_i + (j - fi)];
                let li = &data[row_i + (k0 - fi)..row_i + (j - fi)];
                let lj = &data[row_j + (k0 - fj)..row_j + (j - fj)];
                s -= dot(li, lj);
                let djj = data[row_j + (j - fj)];
                data[row_i + (j - fi)] = s / djj;
            }
            let diag_orig = data[row_i + (i - fi)];
            let li = &data[row_i..row_i + (i - fi)];
            let d = diag_orig - dot(li, li);
            if !(d > PIVOT_TOLERANCE * diag_orig.abs()) || !d.is_finite() {
                return Err(SolveError::NotPositiveDefinite {
                    index: perm[i],
                    pivot: d,
                });
            }
            data[row_i + (i - fi)] = libm::sqrt(d);
        }

        Ok(Self {
            n,
            perm,
            inv_perm,
            first,
            offsets,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        // Forward: L y = Pb (row-oriented).
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            let s = y[i] - dot(&row[..i - fi], &y[fi..i]);
            y[i] = s / row[i - fi];
        }
        // Backward: L^T x = y (column sweep over rows of L).
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, &l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        (0..n).map(|old| y[self.inv_perm[old]]).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Jacobi-preconditioned conjugate gradients. `tol` is relative to `‖b‖`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, SolveError> {
    let n = a.dim();
    let diag = a.diagonal();
    if let Some((i, &d)) = diag.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
        return Err(SolveError::NotPositiveDefinite { index: i, pivot: d });
    }
    let b_norm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut r: Vec<f64> = a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        if norm2(&r) <= tol * b_norm {
            return Ok(x);
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolveError::NotPositiveDefinite { index: 0, pivot: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm2(&r) / b_norm;
    if res <= tol {
        Ok(x)
    } else {
        Err(SolveError::NoConvergence {
            iterations: max_iter,
            residual: res,
        })
    }
}

/// Relative residual `‖Ax - b‖ / ‖b‖` (absolute when `b = 0`).
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let bn = norm2(b);
    if bn == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / bn
    }
}

/// Strategy used by [`SpdSolver`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Envelope Cholesky unless the envelope exceeds `max_envelope` entries.
    Auto { max_envelope: usize },
    Direct,
    ConjugateGradient,
}

impl Default for SolverKind {
    fn default() -> Self {
        SolverKind::Auto {
            max_envelope: 40_000_000,
        }
    }
}

/// A prepared SPD solver: either a Cholesky factor or a matrix for CG.
#[derive(Clone, Debug)]
pub enum SpdSolver {
    Direct { matrix: CsrMatrix, factor: EnvelopeCholesky },
    Iterative { matrix: CsrMatrix },
}

pub const SOLVE_TOLERANCE: f64 = 1e-10;

impl SpdSolver {
    pub fn new(matrix: CsrMatrix, kind: SolverKind) -> Result<Self, SolveError> {
        let direct = match kind {
            SolverKind::Direct => true,
            SolverKind::ConjugateGradient => false,
            SolverKind::Auto { max_envelope } => {
                EnvelopeCholesky::envelope_size(&matrix) <= max_envelope
            }
        };
        if direct {
            let factor = EnvelopeCholesky::factor(&matrix)?;
            Ok(SpdSolver::Direct { matrix, factor })
        } else {
            Ok(SpdSolver::Iterative { matrix })
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        match self {
            SpdSolver::Direct { matrix, .. } | SpdSolver::Iterative { matrix } => matrix,
        }
    }

    /// Solves `A x = b` to relative residual [`SOLVE_TOLERANCE`].
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        match self {
            SpdSolver::Direct { matrix, factor } => {
                let mut x = factor.solve(b);
                // A couple of refinement sweeps recover the last digits on
                // badly scaled systems (small ersatz contrast).
                for _ in 0..3 {
                    let res = relative_residual(matrix, &x, b);
                    if res <= SOLVE_TOLERANCE * 1e-2 {
                        return Ok(x);
                    }
                    let ax = matrix.mul_vec(&x);
                    let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
                    let dx = factor.solve(&r);
                    x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
                }
                let res = relative_residual(matrix, &x, b);
                if res <= SOLVE_TOLERANCE {
                    Ok(x)
                } else {
                    Err(SolveError::NoConvergence {
                        iterations: 3,
                        residual: res,
                    })
                }
            }
            SpdSolver::Iterative { matrix } => {
                let n = matrix.dim();
                conjugate_gradient(matrix, b, None, SOLVE_TOLERANCE * 1e-1, 20 * n + 100)
            }
        }
    }
}
