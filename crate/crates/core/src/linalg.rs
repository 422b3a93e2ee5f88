//! Column-pivoted Householder QR for dense complex matrices.
//!
//! Used to solve the (possibly ill-conditioned) beam synthesis systems in the
//! least-squares sense, with a cheap condition estimate taken from the
//! diagonal of `R`.

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::parallel::Execution;
use crate::CMatrix;

/// `A·P = Q·R` for an `m×n` matrix with `m >= n`.
#[derive(Debug, Clone)]
pub struct ColPivQr {
    rows: usize,
    /// Upper-triangular factor, stored by column (`r[j][i]`, `i <= j`).
    r: Vec<Vec<Complex64>>,
    /// Unit Householder vectors, `reflectors[k]` acts on rows `k..m`.
    reflectors: Vec<Vec<Complex64>>,
    /// Column `j` of `A·P` is column `perm[j]` of `A`.
    perm: Vec<usize>,
}

impl ColPivQr {
    pub fn factor(a: &CMatrix) -> Result<Self> {
        Self::factor_with(a, Execution::default())
    }

    pub fn factor_with(a: &CMatrix, exec: Execution) -> Result<Self> {
        let (m, n) = a.dim();
        if m < n || n == 0 {
            return Err(invalid(format!("QR needs a tall non-empty matrix, got {m}x{n}")));
        }
        let mut cols: Vec<(usize, Vec<Complex64>)> =
            (0..n).map(|j| (j, a.column(j).to_vec())).collect();
        let mut reflectors = Vec::with_capacity(n);

        for k in 0..n {
            let pivot = (k..n)
                .map(|j| (j, tail_norm_sqr(&cols[j].1, k)))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                .0;
            cols.swap(k, pivot);

            let (head, tail) = cols.split_at_mut(k + 1);
            let x = &mut head[k].1;
            let v = householder(&mut x[k..]);
            if !v.is_empty() {
                exec.for_each_mut(tail, |(_, c)| apply_reflector(&v, &mut c[k..]));
            }
            reflectors.push(v);
        }

        let perm = cols.iter().map(|(j, _)| *j).collect();
        let r = cols
            .into_iter()
            .enumerate()
            .map(|(j, (_, mut c))| {
                c.truncate(j + 1);
                c
            })
            .collect();
        Ok(Self { rows: m, r, reflectors, perm })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.r.len()
    }

    /// `|R_11| / |R_nn|`; infinite when the trailing pivot vanishes.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.cols();
        let first = self.r[0][0].norm();
        let last = self.r[n - 1][n - 1].norm();
        if first == 0.0 {
            return f64::INFINITY;
        }
        if last == 0.0 {
            f64::INFINITY
        } else {
            first / last
        }
    }

    /// Least-squares solution of `A·x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        if b.len() != self.rows {
            return Err(invalid(format!(
                "right-hand side has {} entries, matrix has {} rows",
                b.len(),
                self.rows
            )));
        }
        let n = self.cols();
        let mut y = b.to_vec();
        for (k, v) in self.reflectors.iter().enumerate() {
            if !v.is_empty() {
                apply_reflector(v, &mut y[k..]);
            }
        }
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            for (j, zj) in z.iter().enumerate().skip(i + 1) {
                acc -= self.r[j][i] * zj;
            }
            let d = self.r[i][i];
            if d.norm() == 0.0 {
                return Err(invalid("matrix is rank deficient"));
            }
            z[i] = acc / d;
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (j, &p) in self.perm.iter().enumerate() {
            x[p] = z[j];
        }
        Ok(x)
    }
}

fn tail_norm_sqr(c: &[Complex64], from: usize) -> f64 {
    c[from..].iter().map(|z| z.norm_sqr()).sum()
}

/// Turns `x` into `(beta, 0, …, 0)` in place and returns the unit reflector
/// `v` with `(I - 2vv^H)x_old = x_new`. Returns an empty vector when `x` is
/// already zero.
fn householder(x: &mut [Complex64]) -> Vec<Complex64> {
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Vec::new();
    }
    let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { Complex64::new(1.0, 0.0) };
    let beta = -phase * norm;
    let mut v: Vec<Complex64> = x.to_vec();
    v[0] -= beta;
    let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= vnorm);
    x[0] = beta;
    x[1..].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    v
}

fn apply_reflector(v: &[Complex64], c: &mut [Complex64]) {
    let dot: Complex64 = v.iter().zip(c.iter()).map(|(a, b)| a.conj() * b).sum();
    let s = dot * 2.0;
    for (ci, vi) in c.iter_mut().zip(v) {
        *ci -= vi * s;
    }
}
