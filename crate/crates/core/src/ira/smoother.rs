use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// `sweeps` forward Gauss–Seidel passes over `K u = f`, ascending order.
pub fn gauss_seidel(k: &CsrMatrix, u: &mut [f64], f: &[f64], sweeps: usize) -> Result<()> {
    let n = k.nrows();
    if u.len() != n || f.len() != n {
        return Err(Error::invalid("smoother dimension mismatch"));
    }
    for _ in 0..sweeps {
        for i in 0..n {
            let (cols, vals) = k.row(i);
            let mut s = f[i];
            let mut diag = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                if j == i {
                    diag = v;
                } else {
                    s -= v * u[j];
                }
            }
            if !(diag > 0.0) {
                return Err(Error::SingularSmoother(i));
            }
            u[i] = s / diag;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[f64]]) -> CsrMatrix {
        let mut t = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), rows.len(), &t).unwrap()
    }

    #[test]
    fn decoupled_system_in_one_sweep() {
        let k = dense(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let mut u = vec![0.0; 2];
        gauss_seidel(&k, &mut u, &[2.0, 4.0], 1).unwrap();
        assert_eq!(u, vec![1.0, 1.0]);
    }

    #[test]
    fn one_sweep_arithmetic() {
        let k = dense(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let mut u = vec![0.0; 2];
        gauss_seidel(&k, &mut u, &[3.0, 3.0], 1).unwrap();
        assert_eq!(u, vec![1.5, 0.75]);
    }

    #[test]
    fn exact_solution_is_fixed_point() {
        let k = dense(&[&[4.0, -1.0, 0.0], &[-1.0, 4.0, -1.0], &[0.0, -1.0, 4.0]]);
        let x = vec![1.0, 2.0, 3.0];
        let f = k.mul_vec(&x);
        let mut u = x.clone();
        gauss_seidel(&k, &mut u, &f, 3).unwrap();
        for (a, b) in u.iter().zip(&x) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_diagonal_is_rejected() {
        let k = dense(&[&[1.0, 1.0], &[1.0, 0.0]]);
        let mut u = vec![0.0; 2];
        assert!(matches!(
            gauss_seidel(&k, &mut u, &[1.0, 1.0], 1),
            Err(Error::SingularSmoother(1))
        ));
    }
}
