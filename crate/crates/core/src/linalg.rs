//! Compressed sparse row matrices and the linear solvers used by the
//! time steppers.
//!
//! Finite element operators on a structured grid are banded once the nodes
//! are numbered row by row, so the direct path is a banded LU with partial
//! pivoting. The iterative path is restarted GMRES, which does not need the
//! operator to be symmetric.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("entry ({row}, {col}) out of range for a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is singular (zero pivot in column {column})")]
    Singular { column: usize },
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("Krylov breakdown after {iterations} iterations (relative residual {residual:e})")]
    Breakdown { iterations: usize, residual: f64 },
}

/// Square or rectangular matrix in compressed sparse row form.
///
/// Column indices are strictly increasing within a row and no explicit
/// zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed in the order given and entries that sum to exactly zero are
    /// dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(row, col, _) in triplets {
            if row >= n_rows || col >= n_cols {
                return Err(LinalgError::IndexOutOfRange {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
            counts[row + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        // bucket by row, keeping input order inside a row
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(row, col, value) in triplets {
            bucket[next[row]] = (col, value);
            next[row] += 1;
        }

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..n_rows {
            let row = &mut bucket[counts[i]..counts[i + 1]];
            // stable sort so duplicates accumulate in input order
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == col {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    col_indices.push(col);
                    values.push(sum);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Iterates `(col, value)` over the stored entries of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            out.extend(self.row(i).map(|(j, v)| (i, j, v)));
        }
        out
    }

    /// `y = A x`. Each row is accumulated in ascending column order, so the
    /// result is bitwise reproducible.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<(), LinalgError> {
        if x.len() != self.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        if y.len() != self.n_rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_rows,
                got: y.len(),
            });
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        }
        Ok(())
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64, LinalgError> {
        let ay = self.matvec(y)?;
        if x.len() != ay.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: ay.len(),
                got: x.len(),
            });
        }
        Ok(dot(x, &ay))
    }

    pub fn transpose(&self) -> Self {
        let mut triplets: Vec<(usize, usize, f64)> =
            self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        Self::from_triplets(self.n_cols, self.n_rows, &triplets)
            .expect("transposed indices are in range")
    }

    /// `alpha * A + beta * B` on the union sparsity pattern.
    pub fn linear_combination(
        alpha: f64,
        a: &SparseMatrix,
        beta: f64,
        b: &SparseMatrix,
    ) -> Result<Self, LinalgError> {
        if a.n_rows != b.n_rows || a.n_cols != b.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: a.n_rows * a.n_cols,
                got: b.n_rows * b.n_cols,
            });
        }
        let mut row_offsets = Vec::with_capacity(a.n_rows + 1);
        let mut col_indices = Vec::with_capacity(a.nnz().max(b.nnz()));
        let mut values = Vec::with_capacity(a.nnz().max(b.nnz()));
        row_offsets.push(0);
        for i in 0..a.n_rows {
            let (mut p, pe) = (a.row_offsets[i], a.row_offsets[i + 1]);
            let (mut q, qe) = (b.row_offsets[i], b.row_offsets[i + 1]);
            while p < pe || q < qe {
                let ca = if p < pe { a.col_indices[p] } else { usize::MAX };
                let cb = if q < qe { b.col_indices[q] } else { usize::MAX };
                let (col, v) = if ca == cb {
                    let v = alpha * a.values[p] + beta * b.values[q];
                    p += 1;
                    q += 1;
                    (ca, v)
                } else if ca < cb {
                    p += 1;
                    (ca, alpha * a.values[p - 1])
                } else {
                    q += 1;
                    (cb, beta * b.values[q - 1])
                };
                if v != 0.0 {
                    col_indices.push(col);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows: a.n_rows,
            n_cols: a.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// `A · diag(d)`.
    pub fn scale_columns(&self, d: &[f64]) -> Result<Self, LinalgError> {
        if d.len() != self.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_cols,
                got: d.len(),
            });
        }
        let mut out = self.clone();
        for (v, &c) in out.values.iter_mut().zip(&self.col_indices) {
            *v *= d[c];
        }
        out.drop_zeros();
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out.drop_zeros();
        out
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetric_part(&self) -> Result<Self, LinalgError> {
        Self::linear_combination(0.5, self, 0.5, &self.transpose())
    }

    /// Extracts the rows and columns listed in `rows` and `cols`, in that
    /// order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.n_cols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        let mut entries: Vec<(usize, f64)> = Vec::new();
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for &r in rows {
            entries.clear();
            entries.extend(
                self.row(r)
                    .filter(|&(c, _)| col_map[c] != usize::MAX)
                    .map(|(c, v)| (col_map[c], v)),
            );
            entries.sort_by_key(|&(c, _)| c);
            for &(c, v) in &entries {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: rows.len(),
            n_cols: cols.len(),
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        (0..self.n_rows).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol))
    }

    /// Lower and upper bandwidth of the stored pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for i in 0..self.n_rows {
            for (j, _) in self.row(i) {
                if j < i {
                    lower = lower.max(i - j);
                } else {
                    upper = upper.max(j - i);
                }
            }
        }
        (lower, upper)
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_offsets.push(0);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        self.row_offsets = row_offsets;
        self.col_indices = col_indices;
        self.values = values;
    }
}

pub fn build_sparse(
    n_rows: usize,
    n_cols: usize,
    triplets: &[(usize, usize, f64)],
) -> Result<SparseMatrix, LinalgError> {
    SparseMatrix::from_triplets(n_rows, n_cols, triplets)
}

pub fn matvec(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
    a.matvec(x)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    DirectLu,
    KrylovNonsymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    pub method: SolveMethod,
    pub rel_tol: f64,
    /// `None` means `10 * n`.
    pub max_iterations: Option<usize>,
    /// GMRES restart length.
    pub restart: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            method: SolveMethod::DirectLu,
            rel_tol: 1e-10,
            max_iterations: None,
            restart: 50,
        }
    }
}

impl SolveSettings {
    pub fn krylov() -> Self {
        Self {
            method: SolveMethod::KrylovNonsymmetric,
            ..Self::default()
        }
    }

    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(10 * n).max(1)
    }
}

/// LU factorization with partial pivoting of a banded matrix.
///
/// Row `i` of the working array covers columns `i - kl ..= i + kl + ku`,
/// which is wide enough for the fill produced by row interchanges. The
/// multipliers of step `k` are kept apart from `U`, so the solve replays the
/// interchanges and eliminations in factorization order.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    upper: Vec<f64>,
    multipliers: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch {
                expected: a.n_rows(),
                got: a.n_cols(),
            });
        }
        let n = a.n_rows();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut upper = vec![0.0; n * width];
        for i in 0..n {
            for (j, v) in a.row(i) {
                upper[i * width + j + kl - i] = v;
            }
        }
        let mut multipliers = vec![0.0; n * kl];
        let mut pivots = vec![0; n];
        // last structurally nonzero column of each working row
        let mut row_end: Vec<usize> = (0..n).map(|i| (i + ku).min(n.saturating_sub(1))).collect();
        let at = |i: usize, j: usize| i * width + j + kl - i;

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = upper[at(k, k)].abs();
            for r in k + 1..=last_row {
                let v = upper[at(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(LinalgError::Singular { column: k });
            }
            pivots[k] = p;
            if p != k {
                // both rows hold nothing left of column k at this point
                let last_col = row_end[k].max(row_end[p]);
                for j in k..=last_col {
                    upper.swap(at(k, j), at(p, j));
                }
                row_end.swap(k, p);
            }
            let last_col = row_end[k];
            let (head, tail) = upper.split_at_mut((k + 1) * width);
            let pivot_row = &head[at(k, k)..=at(k, last_col)];
            let pivot = pivot_row[0];
            for r in k + 1..=last_row {
                let base = (r - k - 1) * width;
                let start = base + k + kl - r;
                let m = tail[start] / pivot;
                multipliers[k * kl + (r - k - 1)] = m;
                tail[start] = 0.0;
                if m != 0.0 {
                    let target = &mut tail[start + 1..=start + last_col - k];
                    for (t, &u) in target.iter_mut().zip(&pivot_row[1..]) {
                        *t -= m * u;
                    }
                    row_end[r] = row_end[r].max(last_col);
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            width,
            upper,
            multipliers,
            pivots,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let (kl, ku, w) = (self.kl, self.ku, self.width);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                    b[r] -= self.multipliers[k * kl + (r - k - 1)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.upper[k * w + j + kl - k] * b[j];
            }
            b[k] = acc / self.upper[k * w + kl];
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

/// Checks positive definiteness of a symmetric matrix by attempting a banded
/// LDLᵀ factorization without pivoting. Pivots below `1e-13` times the
/// largest diagonal entry count as failure.
pub fn is_positive_definite(a: &SparseMatrix) -> bool {
    if !a.is_square() {
        return false;
    }
    let n = a.n_rows();
    if n == 0 {
        return true;
    }
    let (kl, ku) = a.bandwidths();
    let bw = kl.max(ku);
    let width = 2 * bw + 1;
    let mut band = vec![0.0; n * width];
    let at = |i: usize, j: usize| i * width + j + bw - i;
    let mut diag_max: f64 = 0.0;
    for i in 0..n {
        for (j, v) in a.row(i) {
            band[at(i, j)] = v;
        }
        diag_max = diag_max.max(a.get(i, i).abs());
    }
    let threshold = 1e-13 * diag_max;
    for k in 0..n {
        let pivot = band[at(k, k)];
        if !(pivot > threshold) {
            return false;
        }
        for r in k + 1..=(k + bw).min(n - 1) {
            let m = band[at(r, k)] / pivot;
            if m == 0.0 {
                continue;
            }
            for j in k + 1..=(k + bw).min(n - 1) {
                band[at(r, j)] -= m * band[at(k, j)];
            }
        }
    }
    true
}

/// Anything that can be applied as `z = P⁻¹ v`.
pub trait Preconditioner {
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError>;
}

impl Preconditioner for BandedLu {
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.solve(v)
    }
}

/// Restarted GMRES with optional right preconditioning. Returns the iterate
/// and the number of inner iterations. The stopping test uses the true
/// residual `‖b − A x‖₂ ≤ rel_tol ‖b‖₂`.
pub fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    settings: &SolveSettings,
    precond: Option<&dyn Preconditioner>,
) -> Result<(Vec<f64>, usize), LinalgError> {
    let n = a.n_rows();
    if !a.is_square() || b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let target = settings.rel_tol * b_norm;
    let max_iter = settings.iteration_cap(n);
    let restart = settings.restart.clamp(1, n.max(1));
    let mut total = 0usize;

    let residual = |x: &[f64]| -> Result<Vec<f64>, LinalgError> {
        let ax = a.matvec(x)?;
        Ok(b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect())
    };

    loop {
        let r = residual(&x)?;
        let beta = norm2(&r);
        if beta <= target {
            return Ok((x, total));
        }
        if total >= max_iter {
            return Err(LinalgError::NotConverged {
                iterations: total,
                residual: beta / b_norm,
            });
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        let mut broke_down = false;

        for j in 0..restart {
            let z = match precond {
                Some(p) => p.apply(&basis[j])?,
                None => basis[j].clone(),
            };
            let mut w = a.matvec(&z)?;
            // modified Gram-Schmidt
            for (i, vi) in basis.iter().enumerate() {
                let h = dot(&w, vi);
                hess[i][j] = h;
                w.iter_mut().zip(vi).for_each(|(wk, vk)| *wk -= h * vk);
            }
            let h_next = norm2(&w);
            hess[j + 1][j] = h_next;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = hess[j][j].hypot(hess[j + 1][j]);
            if denom == 0.0 {
                broke_down = true;
                break;
            }
            cs[j] = hess[j][j] / denom;
            sn[j] = hess[j + 1][j] / denom;
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            if g[j + 1].abs() <= target || total >= max_iter || h_next == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        if used == 0 {
            return Err(LinalgError::Breakdown {
                iterations: total,
                residual: beta / b_norm,
            });
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= hess[i][k] * y[k];
            }
            y[i] = acc / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&basis) {
            update.iter_mut().zip(vi).for_each(|(u, v)| *u += yi * v);
        }
        let update = match precond {
            Some(p) => p.apply(&update)?,
            None => update,
        };
        x.iter_mut().zip(&update).for_each(|(xi, ui)| *xi += ui);

        if broke_down {
            let r = residual(&x)?;
            let res = norm2(&r);
            if res <= target {
                return Ok((x, total));
            }
            return Err(LinalgError::Breakdown {
                iterations: total,
                residual: res / b_norm,
            });
        }
    }
}

/// A system matrix prepared once and solved against many right-hand sides.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    matrix: SparseMatrix,
    settings: SolveSettings,
    lu: Option<BandedLu>,
}

impl LinearSolver {
    pub fn new(matrix: SparseMatrix, settings: SolveSettings) -> Result<Self, LinalgError> {
        if !matrix.is_square() {
            return Err(LinalgError::DimensionMismatch {
                expected: matrix.n_rows(),
                got: matrix.n_cols(),
            });
        }
        let lu = match settings.method {
            SolveMethod::DirectLu => Some(BandedLu::factor(&matrix)?),
            SolveMethod::KrylovNonsymmetric => None,
        };
        Ok(Self {
            matrix,
            settings,
            lu,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn factorization(&self) -> Option<&BandedLu> {
        self.lu.as_ref()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.solve_preconditioned(b, None)
    }

    /// Solves `A x = b`; on the Krylov path `precond` is used as a right
    /// preconditioner.
    pub fn solve_preconditioned(
        &self,
        b: &[f64],
        precond: Option<&dyn Preconditioner>,
    ) -> Result<Vec<f64>, LinalgError> {
        match &self.lu {
            Some(lu) => solve_direct(&self.matrix, lu, b, &self.settings),
            None => gmres(&self.matrix, b, None, &self.settings, precond).map(|(x, _)| x),
        }
    }
}

/// Direct solve followed by up to three steps of iterative refinement if
/// the residual misses the tolerance.
fn solve_direct(
    a: &SparseMatrix,
    lu: &BandedLu,
    b: &[f64],
    settings: &SolveSettings,
) -> Result<Vec<f64>, LinalgError> {
    let mut x = lu.solve(b)?;
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut res = 0.0;
    for round in 0..=3 {
        let ax = a.matvec(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        res = norm2(&r);
        if res <= settings.rel_tol * b_norm {
            return Ok(x);
        }
        if !res.is_finite() || round == 3 {
            break;
        }
        let dx = lu.solve(&r)?;
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
    }
    Err(LinalgError::NotConverged {
        iterations: 3,
        residual: res / b_norm,
    })
}

pub fn solve_linear(
    a: &SparseMatrix,
    b: &[f64],
    settings: &SolveSettings,
) -> Result<Vec<f64>, LinalgError> {
    if b.len() != a.n_rows() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n_rows(),
            got: b.len(),
        });
    }
    match settings.method {
        SolveMethod::DirectLu => {
            let lu = BandedLu::factor(a)?;
            solve_direct(a, &lu, b, settings)
        }
        SolveMethod::KrylovNonsymmetric => gmres(a, b, None, settings, None).map(|(x, _)| x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(a: &SparseMatrix) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; a.n_cols()]; a.n_rows()];
        for (i, j, v) in a.triplets() {
            d[i][j] = v;
        }
        d
    }

    #[test]
    fn identity_from_triplets() {
        let a = build_sparse(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(a, SparseMatrix::identity(2));
    }

    #[test]
    fn duplicates_are_summed() {
        let a = build_sparse(2, 2, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 3.0);
    }

    #[test]
    fn triplets_are_sorted_into_csr() {
        let a = build_sparse(2, 2, &[(0, 1, 5.0), (0, 0, 1.0), (1, 0, 2.0), (1, 1, 4.0)]).unwrap();
        assert_eq!(a.row_offsets(), &[0, 2, 4]);
        assert_eq!(a.col_indices(), &[0, 1, 0, 1]);
        assert_eq!(a.values(), &[1.0, 5.0, 2.0, 4.0]);
    }

    #[test]
    fn cancelling_entries_are_not_stored() {
        let a = build_sparse(2, 2, &[(0, 1, 1.5), (0, 1, -1.5), (1, 1, 1.0)]).unwrap();
        assert_eq!(a.nnz(), 1);
        assert!(a.values().iter().all(|&v| v != 0.0));
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        let err = build_sparse(2, 2, &[(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, LinalgError::IndexOutOfRange { row: 2, .. }));
    }

    #[test]
    fn matvec_examples() {
        let i3 = SparseMatrix::identity(3);
        assert_eq!(i3.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let d = build_sparse(2, 2, &[(0, 0, 2.0), (1, 1, 4.0)]).unwrap();
        assert_eq!(d.matvec(&[1.0, 2.0]).unwrap(), vec![2.0, 8.0]);
        let z = SparseMatrix::zeros(3, 3);
        assert_eq!(z.matvec(&[4.0, -1.0, 9.0]).unwrap(), vec![0.0; 3]);
        assert!(matches!(
            d.matvec(&[1.0]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_examples_both_methods() {
        let cases: Vec<(SparseMatrix, Vec<f64>, Vec<f64>)> = vec![
            (SparseMatrix::identity(2), vec![7.0, -3.0], vec![7.0, -3.0]),
            (
                build_sparse(2, 2, &[(0, 0, 2.0), (1, 1, 4.0)]).unwrap(),
                vec![2.0, 8.0],
                vec![1.0, 2.0],
            ),
            (
                build_sparse(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]).unwrap(),
                vec![2.0, 1.0],
                vec![1.0, 1.0],
            ),
        ];
        for settings in [SolveSettings::default(), SolveSettings::krylov()] {
            for (a, b, expected) in &cases {
                let x = solve_linear(a, b, &settings).unwrap();
                for (xi, ei) in x.iter().zip(expected) {
                    assert!((xi - ei).abs() < 1e-12, "{settings:?}: {x:?}");
                }
            }
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = build_sparse(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(
            BandedLu::factor(&a),
            Err(LinalgError::Singular { .. })
        ));
    }

    #[test]
    fn gmres_reports_non_convergence() {
        // rotation-like matrix: GMRES(1) stagnates
        let a = build_sparse(2, 2, &[(0, 1, 1.0), (1, 0, -1.0)]).unwrap();
        let settings = SolveSettings {
            method: SolveMethod::KrylovNonsymmetric,
            rel_tol: 1e-12,
            max_iterations: Some(5),
            restart: 1,
        };
        let err = solve_linear(&a, &[1.0, 0.0], &settings).unwrap_err();
        match err {
            LinalgError::NotConverged { residual, .. } | LinalgError::Breakdown { residual, .. } => {
                assert!(residual > 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = build_sparse(3, 3, &[(0, 1, 2.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0), (2, 2, 3.0)])
            .unwrap();
        let b = [2.0, 2.0, 4.0];
        let x = solve_linear(&a, &b, &SolveSettings::default()).unwrap();
        let r = a.matvec(&x).unwrap();
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn positive_definite_check() {
        let spd = build_sparse(2, 2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        assert!(is_positive_definite(&spd));
        let indefinite =
            build_sparse(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(!is_positive_definite(&indefinite));
    }

    #[test]
    fn linear_combination_and_transpose() {
        let a = build_sparse(2, 3, &[(0, 0, 1.0), (1, 2, 2.0)]).unwrap();
        let b = build_sparse(2, 3, &[(0, 0, -1.0), (0, 1, 3.0)]).unwrap();
        let c = SparseMatrix::linear_combination(1.0, &a, 1.0, &b).unwrap();
        assert_eq!(dense(&c), vec![vec![0.0, 3.0, 0.0], vec![0.0, 0.0, 2.0]]);
        assert_eq!(c.nnz(), 2);
        let t = a.transpose();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.get(2, 1), 2.0);
    }

    fn random_system() -> impl Strategy<Value = (SparseMatrix, Vec<f64>)> {
        (2usize..=50).prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec((0..n, 0..n, -1.0f64..1.0), 0..4 * n),
                proptest::collection::vec(-1.0f64..1.0, n),
                proptest::collection::vec(0.5f64..2.0, n),
            )
                .prop_map(|(n, mut entries, b, diag)| {
                    let row_abs: Vec<f64> = (0..n)
                        .map(|i| entries.iter().filter(|e| e.0 == i).map(|e| e.2.abs()).sum())
                        .collect();
                    // strict diagonal dominance keeps the system nonsingular
                    for i in 0..n {
                        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                        entries.push((i, i, sign * (row_abs[i] + diag[i])));
                    }
                    (build_sparse(n, n, &entries).unwrap(), b)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solvers_meet_residual_tolerance((a, b) in random_system()) {
            for settings in [SolveSettings::default(), SolveSettings::krylov()] {
                let x = solve_linear(&a, &b, &settings).unwrap();
                let ax = a.matvec(&x).unwrap();
                let r: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
                prop_assert!(norm2(&r) <= settings.rel_tol * norm2(&b) * 10.0 + 1e-300);
            }
        }

        #[test]
        fn direct_and_krylov_agree((a, b) in random_system()) {
            let tight = SolveSettings { rel_tol: 1e-13, ..SolveSettings::krylov() };
            let x1 = solve_linear(&a, &b, &SolveSettings::default()).unwrap();
            let x2 = solve_linear(&a, &b, &tight).unwrap();
            let diff: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| p - q).collect();
            prop_assert!(norm2(&diff) <= 1e-8 * norm2(&x1).max(1e-300));
        }

        #[test]
        fn matvec_is_linear(
            (a, x) in random_system(),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let y: Vec<f64> = x.iter().rev().copied().collect();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| alpha * p + beta * q).collect();
            let lhs = a.matvec(&combo).unwrap();
            let ax = a.matvec(&x).unwrap();
            let ay = a.matvec(&y).unwrap();
            let scale = a.values().iter().map(|v| v.abs()).sum::<f64>() * 6.0;
            for i in 0..lhs.len() {
                let rhs = alpha * ax[i] + beta * ay[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-14 * scale.max(1.0));
            }
        }
    }
}
