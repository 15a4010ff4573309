//! Small linear-algebra kernels used by the geometry and the Newton solver:
//! symmetric eigenvalues for 2×2/3×3 blocks, a CSR matrix, banded LU with
//! partial pivoting, and ILU(0)-preconditioned restarted GMRES.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut ev = match n {
        1 => vec![m[(0, 0)]],
        2 => {
            let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            vec![mean + rad, mean - rad]
        }
        3 => {
            let m3 = Matrix3::from_fn(|i, j| m[(i, j)]);
            SymmetricEigen::new(m3).eigenvalues.iter().copied().collect()
        }
        _ => m.clone().symmetric_eigen().eigenvalues.iter().copied().collect(),
    };
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix with the given sparsity pattern (column indices per
    /// row, sorted ascending) and zero values.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            nrows: rows.len(),
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Position of `(row, col)` in `values`, if it is in the pattern.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        self.col_idx[lo..hi].binary_search(&col).ok().map(|p| lo + p)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *yi = acc;
        }
    }

    /// Largest `|col − row|` over the pattern.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                bw = bw.max(self.col_idx[p].abs_diff(i));
            }
        }
        bw
    }
}

/// Why a linear solve gave up.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearSolveFailure {
    /// Zero pivot in a direct factorization.
    Singular { column: usize },
    /// The Krylov iteration did not reach the requested tolerance.
    NoConvergence { iterations: usize, relative_residual: f64 },
}

impl std::fmt::Display for LinearSolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LinearSolveFailure::Singular { column } => write!(f, "singular matrix (zero pivot in column {column})"),
            LinearSolveFailure::NoConvergence {
                iterations,
                relative_residual,
            } => write!(
                f,
                "GMRES stalled after {iterations} iterations at relative residual {relative_residual:e}"
            ),
        }
    }
}

/// Banded LU with partial pivoting, LAPACK `gbtrf` layout: row interchanges
/// widen the upper band to `kl + ku`.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    // row-major, each row holds columns i − kl ..= i + kl + ku
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self, LinearSolveFailure> {
        let n = a.nrows;
        let bw = a.bandwidth();
        let (kl, ku) = (bw, bw);
        let width = 2 * kl + ku + 1;
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[p];
                data[i * width + (j + kl - i)] = a.values[p];
            }
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data,
            pivots: vec![0; n],
        };
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + (col + self.kl - row)
    }

    fn eliminate(&mut self) -> Result<(), LinearSolveFailure> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.kl + self.ku;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for r in k + 1..=last_row {
                let v = self.data[self.idx(r, k)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= 1e-300 * scale {
                return Err(LinearSolveFailure::Singular { column: k });
            }
            self.pivots[k] = piv;
            let last_col = (k + ku).min(n - 1);
            if piv != k {
                for c in k..=last_col {
                    let a = self.idx(k, c);
                    let b = self.idx(piv, c);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for r in k + 1..=last_row {
                let rk = self.idx(r, k);
                let factor = self.data[rk] / pivot;
                self.data[rk] = factor;
                if factor == 0.0 {
                    continue;
                }
                let base_r = self.idx(r, k);
                let base_k = self.idx(k, k);
                for off in 1..=(last_col - k) {
                    self.data[base_r + off] -= factor * self.data[base_k + off];
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let kl = self.kl;
        let ku = self.kl + self.ku;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + kl).min(n - 1) {
                    b[r] -= self.data[self.idx(r, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for c in k + 1..=(k + ku).min(n - 1) {
                acc -= self.data[self.idx(k, c)] * b[c];
            }
            b[k] = acc / self.data[self.idx(k, k)];
        }
    }
}

/// Incomplete LU with zero fill on the pattern of `a`.
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinearSolveFailure> {
        let mut lu = a.clone();
        let n = lu.nrows;
        let mut diag_pos = vec![usize::MAX; n];
        for (i, d) in diag_pos.iter_mut().enumerate() {
            *d = lu.position(i, i).ok_or(LinearSolveFailure::Singular { column: i })?;
        }
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (lo, hi) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in lo..hi {
                marker[lu.col_idx[p]] = p;
            }
            for p in lo..hi {
                let k = lu.col_idx[p];
                if k >= i {
                    break;
                }
                let pivot = lu.values[diag_pos[k]];
                if pivot == 0.0 {
                    return Err(LinearSolveFailure::Singular { column: k });
                }
                let factor = lu.values[p] / pivot;
                lu.values[p] = factor;
                for q in diag_pos[k] + 1..lu.row_ptr[k + 1] {
                    let m = marker[lu.col_idx[q]];
                    if m != usize::MAX && m >= lo && m < hi {
                        lu.values[m] -= factor * lu.values[q];
                    }
                }
            }
            for p in lo..hi {
                marker[lu.col_idx[p]] = usize::MAX;
            }
            if lu.values[diag_pos[i]] == 0.0 {
                return Err(LinearSolveFailure::Singular { column: i });
            }
        }
        Ok(Self { lu, diag_pos })
    }

    pub fn apply(&self, x: &mut [f64]) {
        let lu = &self.lu;
        let n = lu.nrows;
        for i in 0..n {
            let mut acc = x[i];
            for p in lu.row_ptr[i]..self.diag_pos[i] {
                acc -= lu.values[p] * x[lu.col_idx[p]];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for p in self.diag_pos[i] + 1..lu.row_ptr[i + 1] {
                acc -= lu.values[p] * x[lu.col_idx[p]];
            }
            x[i] = acc / lu.values[self.diag_pos[i]];
        }
    }
}

/// Right-preconditioned restarted GMRES. Returns the iteration count.
pub fn gmres_ilu(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<usize, LinearSolveFailure> {
    let n = a.nrows;
    let precond = Ilu0::new(a)?;
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut total = 0;
    let mut rel = f64::INFINITY;
    while total < max_iter {
        a.matvec(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm(&r);
        rel = beta / b_norm;
        if rel <= rel_tol {
            return Ok(total);
        }
        let m = restart.min(max_iter - total);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            z.copy_from_slice(&basis[j]);
            precond.apply(&mut z);
            a.matvec(&z, &mut w);
            for (i, v) in basis.iter().enumerate() {
                let h = dot(&w, v);
                hess[i][j] = h;
                axpy(-h, v, &mut w);
            }
            // second Gram–Schmidt pass
            for (i, v) in basis.iter().enumerate() {
                let h = dot(&w, v);
                hess[i][j] += h;
                axpy(-h, v, &mut w);
            }
            let h_next = norm(&w);
            hess[j + 1][j] = h_next;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = hess[j][j].hypot(hess[j + 1][j]);
            if denom == 0.0 {
                return Err(LinearSolveFailure::Singular { column: j });
            }
            cs[j] = hess[j][j] / denom;
            sn[j] = hess[j + 1][j] / denom;
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            rel = g[j + 1].abs() / b_norm;
            if rel <= rel_tol || h_next == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= hess[i][k] * y[k];
            }
            y[i] = acc / hess[i][i];
        }
        z.iter_mut().for_each(|v| *v = 0.0);
        for (k, yk) in y.iter().enumerate() {
            axpy(*yk, &basis[k], &mut z);
        }
        precond.apply(&mut z);
        for i in 0..n {
            x[i] += z[i];
        }
    }
    a.matvec(x, &mut r);
    let true_rel = r.iter().zip(b).map(|(ri, bi)| (bi - ri).powi(2)).sum::<f64>().sqrt() / b_norm;
    if true_rel <= rel_tol {
        return Ok(total);
    }
    Err(LinearSolveFailure::NoConvergence {
        iterations: total,
        relative_residual: rel.max(true_rel),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
