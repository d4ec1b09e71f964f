//! Banded Cholesky factorization.
//!
//! Column-major node numbering on a structured quad grid gives a stiffness
//! matrix whose half bandwidth is about `2 * (nely + 2)`, so a dense band
//! factor is both compact and fast. The same kernel serves the fine-grid
//! reference solver and the coarse-grid factor reused by reanalysis.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// Row `i` holds `L[i][i-bw ..= i]`; entries left of column 0 are zero.
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Factorizes a symmetric positive definite matrix. Only the lower
    /// triangle of `a` is read.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("Cholesky needs a square matrix"));
        }
        let n = a.nrows();
        let bw = a.half_bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    band[i * w + (j + bw - i)] = v;
                }
            }
        }

        for i in 0..n {
            let i_lo = i.saturating_sub(bw);
            for j in i_lo..=i {
                let k_lo = i_lo.max(j.saturating_sub(bw));
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                let mut s = band[ri + j];
                for k in k_lo..j {
                    s -= band[ri + k] * band[rj + k];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    band[ri + i] = s.sqrt();
                } else {
                    band[ri + j] = s / band[rj + j];
                }
            }
        }
        Ok(BandedCholesky { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.bw
    }

    /// `L[i][j]` for `j <= i`.
    pub fn l(&self, i: usize, j: usize) -> f64 {
        if j > i || i - j > self.bw {
            0.0
        } else {
            self.band[i * (self.bw + 1) + self.bw - i + j]
        }
    }

    #[inline]
    fn row_offset(&self, i: usize) -> usize {
        i * (self.bw + 1) + self.bw - i
    }

    /// In place `L y = b`.
    pub fn forward(&self, b: &mut [f64]) {
        self.forward_from(b, 0);
    }

    /// Forward substitution assuming `b[..start]` is zero.
    pub fn forward_from(&self, b: &mut [f64], start: usize) {
        assert_eq!(b.len(), self.n);
        for i in start..self.n {
            let r = self.row_offset(i);
            let lo = i.saturating_sub(self.bw).max(start);
            let mut s = b[i];
            for k in lo..i {
                s -= self.band[r + k] * b[k];
            }
            b[i] = s / self.band[r + i];
        }
    }

    /// In place `L^T x = y`.
    pub fn backward(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.n);
        for i in (0..self.n).rev() {
            let r = self.row_offset(i);
            let xi = y[i] / self.band[r + i];
            y[i] = xi;
            let lo = i.saturating_sub(self.bw);
            for k in lo..i {
                y[k] -= self.band[r + k] * xi;
            }
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `‖L Lᵀ − A‖_F / ‖A‖_F`, evaluated over the band.
    pub fn reconstruction_error(&self, a: &CsrMatrix) -> f64 {
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let k_lo = lo.max(j.saturating_sub(self.bw));
                let llt: f64 = (k_lo..=j).map(|k| self.l(i, k) * self.l(j, k)).sum();
                let aij = a.get(i, j);
                let mult = if i == j { 1.0 } else { 2.0 };
                err2 += mult * (llt - aij).powi(2);
                norm2 += mult * aij * aij;
            }
        }
        (err2 / norm2).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn solves_tridiagonal() {
        let a = tridiag(20);
        let f = BandedCholesky::factor(&a).unwrap();
        assert_eq!(f.half_bandwidth(), 1);
        let x_true: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = f.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-13);
        }
        assert!(f.reconstruction_error(&a) < 1e-15);
    }

    #[test]
    fn rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        assert!(matches!(
            BandedCholesky::factor(&a),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }

    #[test]
    fn forward_from_skips_leading_zeros() {
        let a = tridiag(10);
        let f = BandedCholesky::factor(&a).unwrap();
        let mut e = vec![0.0; 10];
        e[4] = 1.0;
        let mut full = e.clone();
        f.forward(&mut full);
        f.forward_from(&mut e, 4);
        assert_eq!(e, full);
    }
}
