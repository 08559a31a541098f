//! Compressed-row sparse storage, preconditioned CG and dense LU.
//!
//! Everything here is deterministic regardless of the rayon thread count:
//! SpMV parallelizes over rows and reductions use fixed-size chunks summed in
//! order.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::SolveError;

type SResult<T> = std::result::Result<T, SolveError>;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

const PAR_ROWS: usize = 4096;
const DOT_CHUNK: usize = 4096;

impl CsrMatrix {
    /// Zero matrix with the given per-row column sets (sorted and deduplicated here).
    pub fn from_pattern(ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for mut r in rows.into_iter() {
            r.sort_unstable();
            r.dedup();
            debug_assert!(r.last().map_or(true, |&c| c < ncols));
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            nrows: row_ptr.len() - 1,
            ncols,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Sums duplicate entries.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let mut m = Self::from_pattern(ncols, rows);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::from_pattern(n, (0..n).map(|i| vec![i]).collect());
        m.values.fill(1.0);
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Structure and values borrowed separately, for scatter into disjoint rows.
    pub fn parts_mut(&mut self) -> (&[usize], &[usize], &mut [f64]) {
        (&self.row_ptr, &self.col_idx, &mut self.values)
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Position of `(i, j)` in the value array, if structurally present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        self.col_idx[lo..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|k| lo + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds into an existing entry; panics if `(i, j)` is outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[k] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        let row = |(i, yi): (usize, &mut f64)| {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, a)| a * x[j]).sum();
        };
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(row);
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - A_ji|` over the stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }
}

/// Deterministic inner product (fixed chunking, in-order combination).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() < 4 * DOT_CHUNK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let partial: Vec<f64> = a
        .par_chunks(DOT_CHUNK)
        .zip(b.par_chunks(DOT_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    partial.iter().sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub residual: f64,
    pub wall_time: Duration,
    pub method: &'static str,
}

pub fn cg_solve(a: &CsrMatrix, b: &[f64], opts: &CgOptions) -> SResult<(Vec<f64>, SolveReport)> {
    pcg(a, b, opts, None)
}

/// Residual norm attainable in floating point for the iterate `x`:
/// a small multiple of `ε ‖ |A| |x| ‖`. Solutions with a large offset
/// (e.g. strongly contrasting coefficients under a mean constraint) cannot
/// be resolved below it.
fn roundoff_floor(a: &CsrMatrix, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.nrows {
        let (c, v) = a.row(i);
        let t: f64 = c.iter().zip(v).map(|(&j, aij)| (aij * x[j]).abs()).sum();
        s += t * t;
    }
    64.0 * f64::EPSILON * s.sqrt()
}

/// Preconditioned CG. With `kernel = Some(z)` the system is treated as
/// singular with null space `span{z}` and residuals are kept orthogonal to it.
fn pcg(a: &CsrMatrix, b: &[f64], opts: &CgOptions, kernel: Option<&[f64]>) -> SResult<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(SolveError::Dimension(format!(
            "{}x{} matrix with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(SolveError::Dimension(format!("tolerance {} not in (0, 1)", opts.tol)));
    }
    let project = |v: &mut [f64]| {
        if let Some(z) = kernel {
            let c = dot(z, v) / dot(z, z);
            axpy(-c, z, v);
        }
    };
    let inv_diag: Option<Vec<f64>> = match opts.preconditioner {
        Preconditioner::None => None,
        Preconditioner::Jacobi => Some(
            a.diagonal()
                .iter()
                .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        ),
    };
    let precond = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((zi, ri), di)| *zi = ri * di),
        None => z.copy_from_slice(r),
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    project(&mut r);
    let bnorm = dot(&r, &r).sqrt();
    let report = |iterations, residual| SolveReport {
        iterations,
        residual,
        wall_time: start.elapsed(),
        method: "cg",
    };
    if bnorm == 0.0 {
        return Ok((x, report(0, 0.0)));
    }
    let max_iter = opts.max_iter.unwrap_or((10 * n).max(100));
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = 1.0;
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let curv = dot(&p, &ap);
        if !(curv > 0.0) {
            return Err(SolveError::Breakdown {
                iteration: it,
                curvature: curv,
            });
        }
        let alpha = rz / curv;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        project(&mut r);
        res = dot(&r, &r).sqrt() / bnorm;
        if res <= opts.tol {
            // confirm with the true residual to guard against drift
            let mut tr = b.to_vec();
            project(&mut tr);
            let ax = a.matvec(&x);
            axpy(-1.0, &ax, &mut tr);
            project(&mut tr);
            let true_res = dot(&tr, &tr).sqrt() / bnorm;
            if true_res <= (opts.tol * 10.0).max(roundoff_floor(a, &x) / bnorm) {
                return Ok((x, report(it, true_res)));
            }
            r = tr;
        }
        precond(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(SolveError::NotConverged {
        iterations: max_iter,
        residual: res,
    })
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> SResult<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(SolveError::Dimension(format!("dense system of order {n} with mismatched matrix")));
    }
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty range");
        let pv = m[piv][col];
        if !(pv.abs() > 1e-14 * scale) {
            return Err(SolveError::Singular { column: col, pivot: pv });
        }
        m.swap(col, piv);
        x.swap(col, piv);
        let (top, rest) = m.split_at_mut(col + 1);
        let prow = &top[col];
        for (off, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pv;
            if f != 0.0 {
                for k in col..n {
                    row[k] -= f * prow[k];
                }
                x[col + 1 + off] -= f * x[col];
            }
        }
    }
    for col in (0..n).rev() {
        let s: f64 = (col + 1..n).map(|k| m[col][k] * x[k]).sum();
        x[col] = (x[col] - s) / m[col][col];
    }
    Ok(x)
}

/// Largest order for which constrained systems are solved densely.
pub const DENSE_LIMIT: usize = 2000;

/// Solves `K u = f` subject to `m·u = 0`, where `K` is symmetric positive
/// semidefinite with null space spanned by the constant vector.
///
/// Small systems use the bordered matrix `[[K, m], [mᵀ, 0]]`; larger ones use
/// CG restricted to the range of `K` followed by a shift of the constant mode.
pub fn solve_zero_mean(k: &CsrMatrix, f: &[f64], m: &[f64], opts: &CgOptions) -> SResult<(Vec<f64>, SolveReport)> {
    let n = k.nrows();
    if m.len() != n || f.len() != n {
        return Err(SolveError::Dimension("constraint vector length".into()));
    }
    let ones = vec![1.0; n];
    let m1 = dot(m, &ones);
    if n <= DENSE_LIMIT {
        let start = Instant::now();
        let mut a = k.to_dense();
        for (row, &mi) in a.iter_mut().zip(m) {
            row.push(mi);
        }
        let mut last = m.to_vec();
        last.push(0.0);
        a.push(last);
        let mut rhs = f.to_vec();
        rhs.push(0.0);
        let mut sol = dense_solve(&a, &rhs)?;
        sol.pop();
        let ku = k.matvec(&sol);
        let num: f64 = ku.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = dot(f, f).sqrt().max(f64::MIN_POSITIVE);
        return Ok((
            sol,
            SolveReport {
                iterations: 1,
                residual: num / den,
                wall_time: start.elapsed(),
                method: "bordered-lu",
            },
        ));
    }
    // make the rhs compatible: remove the component that the multiplier absorbs
    let mut rhs = f.to_vec();
    let c = dot(&ones, f) / m1;
    axpy(-c, m, &mut rhs);
    let (mut u, mut rep) = pcg(k, &rhs, opts, Some(&ones))?;
    let shift = dot(m, &u) / m1;
    u.iter_mut().for_each(|v| *v -= shift);
    rep.method = "projected-cg";
    Ok((u, rep))
}

/// Direct solve for small SPD systems, CG otherwise.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], opts: &CgOptions, dense_limit: usize) -> SResult<(Vec<f64>, SolveReport)> {
    if a.nrows() <= dense_limit {
        let start = Instant::now();
        let x = dense_solve(&a.to_dense(), b)?;
        let mut r = a.matvec(&x);
        axpy(-1.0, b, &mut r);
        let residual = dot(&r, &r).sqrt() / dot(b, b).sqrt().max(f64::MIN_POSITIVE);
        return Ok((
            x,
            SolveReport {
                iterations: 1,
                residual,
                wall_time: start.elapsed(),
                method: "lu",
            },
        ));
    }
    cg_solve(a, b, opts)
}
