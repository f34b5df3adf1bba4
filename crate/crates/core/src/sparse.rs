//! Sparse-matrix kernels: CSR storage, a banded Cholesky factorization and a
//! Jacobi-preconditioned conjugate-gradient fallback.
//!
//! The regular-grid discretization produces matrices with a narrow band under
//! the row-major node numbering, so a symmetric band factorization is the
//! direct solver of choice here. CG is kept as a fallback for systems whose
//! band would be too wide to factor cheaply.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indices = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len());
        let mut row_of: Vec<usize> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            debug_assert!(r < nrows && c < ncols);
            if let (Some(&pr), Some(&pc)) = (row_of.last(), indices.last()) {
                if pr == r && pc == c {
                    *data.last_mut().unwrap() += v;
                    continue;
                }
            }
            row_of.push(r);
            indices.push(c);
            data.push(v);
        }
        let mut indptr = vec![0usize; nrows + 1];
        for &r in &row_of {
            indptr[r + 1] += 1;
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { nrows, ncols, indptr, indices, data }
    }

    /// Builds from per-row (col, value) lists; entries within a row need not be
    /// sorted, duplicates are summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut iter = row.into_iter();
            if let Some((mut cur_c, mut cur_v)) = iter.next() {
                for (c, v) in iter {
                    if c == cur_c {
                        cur_v += v;
                    } else {
                        indices.push(cur_c);
                        data.push(cur_v);
                        cur_c = c;
                        cur_v = v;
                    }
                }
                indices.push(cur_c);
                data.push(cur_v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows, ncols, indptr, indices, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        (&self.indices[lo..hi], &self.data[lo..hi])
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Result<Array1<f64>> {
        crate::error::ensure_len(x.len(), self.ncols, "matvec operand")?;
        let mut y = Array1::zeros(self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// y = Aᵀ x.
    pub fn matvec_t(&self, x: &[f64]) -> Result<Array1<f64>> {
        crate::error::ensure_len(x.len(), self.nrows, "transpose matvec operand")?;
        let mut y = Array1::zeros(self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let xi = x[i];
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols];
        for &c in &self.indices {
            counts[c] += 1;
        }
        let mut indptr = vec![0usize; self.ncols + 1];
        for c in 0..self.ncols {
            indptr[c + 1] = indptr[c] + counts[c];
        }
        let mut indices = vec![0usize; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        let mut next = indptr.clone();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let pos = next[c];
                indices[pos] = i;
                data[pos] = v;
                next[c] += 1;
            }
        }
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, indptr, indices, data }
    }

    /// C = A B via Gustavson's row-merging scheme.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        crate::error::ensure_len(other.nrows, self.ncols, "matmul inner dimension")?;
        let n = other.ncols;
        let mut accum = vec![0.0f64; n];
        let mut marker = vec![usize::MAX; n];
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            let (a_cols, a_vals) = self.row(i);
            for (&k, &av) in a_cols.iter().zip(a_vals) {
                let (b_cols, b_vals) = other.row(k);
                for (&j, &bv) in b_cols.iter().zip(b_vals) {
                    if marker[j] != i {
                        marker[j] = i;
                        accum[j] = 0.0;
                        touched.push(j);
                    }
                    accum[j] += av * bv;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                indices.push(j);
                data.push(accum[j]);
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix { nrows: self.nrows, ncols: n, indptr, indices, data })
    }

    /// Returns a copy with column j scaled by s[j].
    pub fn scale_columns(&self, s: &[f64]) -> Result<CsrMatrix> {
        crate::error::ensure_len(s.len(), self.ncols, "column scaling")?;
        let mut out = self.clone();
        for (idx, &c) in out.indices.iter().enumerate() {
            out.data[idx] *= s[c];
        }
        Ok(out)
    }

    /// Adds `value` to every diagonal entry in place, inserting missing ones.
    pub fn add_diagonal(&self, value: f64) -> CsrMatrix {
        let n = self.nrows.min(self.ncols);
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut row: Vec<(usize, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
            if i < n {
                row.push((i, value));
            }
            rows.push(row);
        }
        CsrMatrix::from_rows(self.ncols, rows)
    }

    /// Extracts the submatrix on the kept rows and columns. `row_map[i]` /
    /// `col_map[j]` give the new index or `None` when dropped.
    pub fn extract(&self, row_map: &[Option<usize>], col_map: &[Option<usize>], new_rows: usize, new_cols: usize) -> CsrMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); new_rows];
        for i in 0..self.nrows {
            let Some(ri) = row_map[i] else { continue };
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if let Some(cj) = col_map[c] {
                    rows[ri].push((cj, v));
                }
            }
        }
        CsrMatrix::from_rows(new_cols, rows)
    }

    /// Largest |A_ij|.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Diagonal entries (zero where absent).
    pub fn diagonal(&self) -> Array1<f64> {
        let n = self.nrows.min(self.ncols);
        let mut d = Array1::zeros(n);
        for i in 0..n {
            let (cols, vals) = self.row(i);
            if let Ok(pos) = cols.binary_search(&i) {
                d[i] = vals[pos];
            }
        }
        d
    }

    /// Half bandwidth: max over rows of (i - min column index).
    pub fn half_bandwidth(&self) -> usize {
        let mut hb = 0;
        for i in 0..self.nrows {
            let (cols, _) = self.row(i);
            if let Some(&c0) = cols.first() {
                if c0 < i {
                    hb = hb.max(i - c0);
                }
            }
            if let Some(&c1) = cols.last() {
                if c1 > i {
                    hb = hb.max(c1 - i);
                }
            }
        }
        hb
    }

    /// Dense copy, for small oracles and debugging.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.nrows, self.ncols));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                m[(i, c)] = v;
            }
        }
        m
    }
}

/// Cholesky factorization of a symmetric positive definite band matrix.
///
/// The lower band of L is stored row-wise: `band[i*(hb+1) + hb - (i-j)]`
/// holds `L[i][j]` for `0 <= i-j <= hb`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    hb: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the symmetric matrix `a` (only its lower triangle is read).
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
                what: "banded Cholesky operand",
            });
        }
        let n = a.nrows();
        let hb = a.half_bandwidth();
        let w = hb + 1;
        let mut band = vec![0.0f64; n * w];
        // load lower triangle into band storage
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if c <= i {
                    band[i * w + hb - (i - c)] = v;
                }
            }
        }
        // in-place banded LL^T
        for i in 0..n {
            let j0 = i.saturating_sub(hb);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(hb));
                let mut sum = band[i * w + hb - (i - j)];
                // sum -= L[i][k] * L[j][k] for k in k0..j
                let li = &band[i * w..(i + 1) * w];
                let lj = &band[j * w..(j + 1) * w];
                for k in k0..j {
                    sum -= li[hb - (i - k)] * lj[hb - (j - k)];
                }
                if j < i {
                    let ljj = band[j * w + hb];
                    band[i * w + hb - (i - j)] = sum / ljj;
                } else {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite(format!(
                            "pivot {sum:e} at row {i}"
                        )));
                    }
                    band[i * w + hb] = sum.sqrt();
                }
            }
        }
        Ok(BandedCholesky { n, hb, band })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let hb = self.hb;
        let w = hb + 1;
        // forward: L y = b
        for i in 0..n {
            let j0 = i.saturating_sub(hb);
            let mut sum = b[i];
            let li = &self.band[i * w..(i + 1) * w];
            for j in j0..i {
                sum -= li[hb - (i - j)] * b[j];
            }
            b[i] = sum / li[hb];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let kmax = (i + hb).min(n - 1);
            let mut sum = b[i];
            for k in (i + 1)..=kmax {
                sum -= self.band[k * w + hb - (k - i)] * b[k];
            }
            b[i] = sum / self.band[i * w + hb];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Array1<f64>> {
        crate::error::ensure_len(b.len(), self.n, "banded solve rhs")?;
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(Array1::from_vec(x))
    }
}

/// Jacobi-preconditioned conjugate gradient for SPD operators.
///
/// Returns the solution and the iteration count; errors when the relative
/// residual fails to reach `tol` within `max_iter` iterations.
pub fn pcg<F>(apply: F, b: &[f64], tol: f64, max_iter: usize, diag: Option<&[f64]>) -> Result<(Array1<f64>, usize)>
where
    F: Fn(&[f64]) -> Array1<f64>,
{
    let n = b.len();
    let b_norm = l2_norm(b);
    if b_norm == 0.0 {
        return Ok((Array1::zeros(n), 0));
    }
    let precond = |r: &Array1<f64>| -> Array1<f64> {
        match diag {
            Some(d) => Array1::from_iter(r.iter().zip(d).map(|(ri, di)| ri / di.max(1e-300))),
            None => r.clone(),
        }
    };
    let mut x = Array1::<f64>::zeros(n);
    let mut r = Array1::from_vec(b.to_vec());
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for it in 0..max_iter {
        let ap = apply(p.as_slice().unwrap());
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite("CG encountered non-positive curvature".into()));
        }
        let alpha = rz / pap;
        x = &x + &(alpha * &p);
        r = &r - &(alpha * &ap);
        if l2_norm(r.as_slice().unwrap()) <= tol * b_norm {
            return Ok((x, it + 1));
        }
        z = precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &(beta * &p);
    }
    Err(Error::SolverFailure(format!(
        "CG did not reach tol {tol:e} in {max_iter} iterations"
    )))
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
