//! Exact reanalysis of the coarse system.
//!
//! With `K_ref = L0 L0ᵀ` and a new matrix `K_i` that differs from it only
//! in the rows and columns of a set `M`, every solution of `K_i dx = d`
//! can be written as `dx = K_ref⁻¹ d + B y`, where
//!
//! ```text
//! B   = K_ref⁻¹ E_M Z_MM⁻¹,   Z_MM = E_Mᵀ K_ref⁻¹ E_M = WᵀW,   W = L0⁻¹ E_M
//! K_B = (K_i B)_M = Z_MM⁻¹ + ΔK_MM
//! ```
//!
//! `B` is identity on `M` and its remaining rows are annihilated by the
//! unmodified rows of `K_i`, so `y` solves the `n_d × n_d` system
//! `K_B y = δ_M`. Only `W` (forward substitutions starting at each modified
//! DOF) and two small dense Cholesky factors are formed; `B` itself is
//! applied implicitly.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::banded::BandedCholesky;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Stored coarse factorization and the solution it was built with.
#[derive(Debug, Clone)]
pub struct ReferenceFactorization {
    pub l0: BandedCholesky,
    pub k_ref: CsrMatrix,
    /// `K_ref⁻¹ d_ref`; empty until a right-hand side has been seen.
    pub dx_ref: Vec<f64>,
    pub d_ref: Vec<f64>,
    pub iteration_tag: usize,
}

impl ReferenceFactorization {
    pub fn new(k_ref: CsrMatrix, iteration_tag: usize) -> Result<Self> {
        let l0 = BandedCholesky::factor(&k_ref)?;
        Ok(ReferenceFactorization {
            l0,
            k_ref,
            dx_ref: Vec::new(),
            d_ref: Vec::new(),
            iteration_tag,
        })
    }

    pub fn with_rhs(k_ref: CsrMatrix, d_ref: &[f64], iteration_tag: usize) -> Result<Self> {
        let mut r = Self::new(k_ref, iteration_tag)?;
        r.set_reference_rhs(d_ref);
        Ok(r)
    }

    pub fn set_reference_rhs(&mut self, d_ref: &[f64]) {
        self.d_ref = d_ref.to_vec();
        self.dx_ref = self.l0.solve(d_ref);
    }

    pub fn has_rhs(&self) -> bool {
        !self.dx_ref.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.k_ref.nrows()
    }
}

/// Coarse DOFs whose stiffness row or correction right-hand side changed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModificationSet {
    pub indices: Vec<usize>,
}

impl ModificationSet {
    pub fn n_d(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn modification_tolerance(k_ref: &CsrMatrix) -> f64 {
    1e-12 * k_ref.max_abs()
}

/// `Σ_j |a_ij − b_ij|` over the union of both row patterns.
fn row_abs_diff(a: &CsrMatrix, b: &CsrMatrix, i: usize) -> f64 {
    let (ca, va) = a.row(i);
    let (cb, vb) = b.row(i);
    let (mut p, mut q) = (0, 0);
    let mut s = 0.0;
    while p < ca.len() || q < cb.len() {
        if q == cb.len() || (p < ca.len() && ca[p] < cb[q]) {
            s += va[p].abs();
            p += 1;
        } else if p == ca.len() || cb[q] < ca[p] {
            s += vb[q].abs();
            q += 1;
        } else {
            s += (va[p] - vb[q]).abs();
            p += 1;
            q += 1;
        }
    }
    s
}

/// Row `j` is modified when `Σ|K_i − K_ref|_j + |δ_j|` exceeds
/// [`modification_tolerance`].
pub fn detect_modifications(
    k_i: &CsrMatrix,
    reference: &ReferenceFactorization,
    delta: &[f64],
) -> ModificationSet {
    let tau = modification_tolerance(&reference.k_ref);
    let indices = (0..k_i.nrows())
        .filter(|&j| {
            let dj = delta.get(j).copied().unwrap_or(0.0).abs();
            row_abs_diff(k_i, &reference.k_ref, j) + dj > tau
        })
        .collect();
    ModificationSet { indices }
}

fn dense_cholesky(m: DMatrix<f64>, n_d: usize) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(Error::ReanalysisBreakdown(n_d))
}

/// Per-matrix part of the reanalysis, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct PreparedReanalysis {
    indices: Vec<usize>,
    /// Column `k` of `W = L0⁻¹ E_M`; entries before `indices[k]` are zero.
    w: Vec<Vec<f64>>,
    delta_k: DMatrix<f64>,
    zmm: Cholesky<f64, Dyn>,
    kb: Cholesky<f64, Dyn>,
}

impl PreparedReanalysis {
    pub fn new(
        reference: &ReferenceFactorization,
        k_i: &CsrMatrix,
        mods: &ModificationSet,
    ) -> Result<Self> {
        let n = reference.dim();
        if k_i.nrows() != n {
            return Err(Error::invalid("modified matrix dimension differs from reference"));
        }
        let idx = mods.indices.clone();
        let n_d = idx.len();
        if n_d == 0 {
            return Err(Error::invalid("empty modification set"));
        }
        let w: Vec<Vec<f64>> = idx
            .iter()
            .map(|&j| {
                let mut col = vec![0.0; n];
                col[j] = 1.0;
                reference.l0.forward_from(&mut col, j);
                col
            })
            .collect();

        let mut z = DMatrix::zeros(n_d, n_d);
        for a in 0..n_d {
            for b in a..n_d {
                let lo = idx[a].max(idx[b]);
                let v: f64 = w[a][lo..].iter().zip(&w[b][lo..]).map(|(x, y)| x * y).sum();
                z[(a, b)] = v;
                z[(b, a)] = v;
            }
        }
        let zmm = dense_cholesky(z, n_d)?;

        let mut delta_k = DMatrix::zeros(n_d, n_d);
        for (a, &ja) in idx.iter().enumerate() {
            for (b, &jb) in idx.iter().enumerate() {
                delta_k[(a, b)] = k_i.get(ja, jb) - reference.k_ref.get(ja, jb);
            }
        }
        let mut kb = zmm.inverse() + &delta_k;
        kb = (&kb + kb.transpose()) * 0.5;
        let kb = dense_cholesky(kb, n_d)?;
        Ok(PreparedReanalysis {
            indices: idx,
            w,
            delta_k,
            zmm,
            kb,
        })
    }

    pub fn n_d(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Solves `K_i dx = d`.
    pub fn solve(&self, reference: &ReferenceFactorization, d: &[f64]) -> Vec<f64> {
        let mut dx = reference.l0.solve(d);
        let base_m = DVector::from_iterator(self.n_d(), self.indices.iter().map(|&j| dx[j]));
        // δ_M = d_M − (K_i K_ref⁻¹ d)_M, which reduces to −ΔK_MM (K_ref⁻¹ d)_M
        let delta_m = -(&self.delta_k * base_m);
        let y = self.kb.solve(&delta_m);
        let s = self.zmm.solve(&y);
        let mut t = vec![0.0; dx.len()];
        for (k, col) in self.w.iter().enumerate() {
            let sk = s[k];
            let lo = self.indices[k];
            for (ti, wi) in t[lo..].iter_mut().zip(&col[lo..]) {
                *ti += sk * wi;
            }
        }
        reference.l0.backward(&mut t);
        for (a, b) in dx.iter_mut().zip(&t) {
            *a += b;
        }
        dx
    }
}

/// Solves `K_i dx = d_i` from the reference factor. An empty modification
/// set means the matrix is unchanged and two triangular solves suffice.
pub fn exact_reanalysis(
    reference: &ReferenceFactorization,
    k_i: &CsrMatrix,
    d_i: &[f64],
    mods: &ModificationSet,
) -> Result<Vec<f64>> {
    if d_i.len() != reference.dim() {
        return Err(Error::invalid("right-hand side dimension mismatch"));
    }
    if mods.is_empty() {
        return Ok(reference.l0.solve(d_i));
    }
    Ok(PreparedReanalysis::new(reference, k_i, mods)?.solve(reference, d_i))
}

/// Explicit form of the reanalysis quantities, relative to the stored
/// reference solution `dx_ref`:
///
/// ```text
/// δ   = d_i − K_i dx_ref
/// K_c B = R,   K_B = (K_i B)_M,   K_B y = δ_M,   dx = dx_ref + B y
/// ```
///
/// `K_c` is `K_i` with the rows and columns of `M` replaced by identity and
/// column `j` of `R` is `−K_i[:, j]` with the rows of `M` replaced by `e_j`.
/// Intended for inspection and testing; the solver uses
/// [`PreparedReanalysis`]. The modification set must cover the support of
/// `δ` for `dx` to be exact.
#[derive(Debug, Clone)]
pub struct ReanalysisWorkspace {
    pub indices: Vec<usize>,
    pub b: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub k_b: DMatrix<f64>,
    pub y: DVector<f64>,
    pub delta: Vec<f64>,
}

impl ReanalysisWorkspace {
    pub fn build(
        reference: &ReferenceFactorization,
        k_i: &CsrMatrix,
        d_i: &[f64],
        mods: &ModificationSet,
    ) -> Result<Self> {
        if !reference.has_rhs() {
            return Err(Error::invalid("reference has no stored solution"));
        }
        let n = reference.dim();
        let prep = PreparedReanalysis::new(reference, k_i, mods)?;
        let idx = prep.indices.clone();
        let n_d = idx.len();

        let zinv = prep.zmm.inverse();
        let mut b = DMatrix::zeros(n, n_d);
        for c in 0..n_d {
            let mut t = vec![0.0; n];
            for (k, col) in prep.w.iter().enumerate() {
                let s = zinv[(k, c)];
                let lo = idx[k];
                for (ti, wi) in t[lo..].iter_mut().zip(&col[lo..]) {
                    *ti += s * wi;
                }
            }
            reference.l0.backward(&mut t);
            b.set_column(c, &DVector::from_vec(t));
        }

        let mut in_m = vec![false; n];
        for &j in &idx {
            in_m[j] = true;
        }
        let mut r = DMatrix::zeros(n, n_d);
        for (c, &j) in idx.iter().enumerate() {
            for row in 0..n {
                r[(row, c)] = if in_m[row] {
                    if row == j {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    -k_i.get(row, j)
                };
            }
        }

        let mut k_b = DMatrix::zeros(n_d, n_d);
        for (a, &ja) in idx.iter().enumerate() {
            let (cols, vals) = k_i.row(ja);
            for c in 0..n_d {
                k_b[(a, c)] = cols.iter().zip(vals).map(|(&col, &v)| v * b[(col, c)]).sum();
            }
        }

        let kdx = k_i.mul_vec(&reference.dx_ref);
        let delta: Vec<f64> = d_i.iter().zip(&kdx).map(|(a, b)| a - b).collect();
        let delta_m = DVector::from_iterator(n_d, idx.iter().map(|&j| delta[j]));
        let y = k_b
            .clone()
            .lu()
            .solve(&delta_m)
            .ok_or(Error::ReanalysisBreakdown(n_d))?;
        Ok(ReanalysisWorkspace {
            indices: idx,
            b,
            r,
            k_b,
            y,
            delta,
        })
    }

    /// `dx_ref + B y`.
    pub fn solution(&self, reference: &ReferenceFactorization) -> Vec<f64> {
        let by = &self.b * &self.y;
        reference.dx_ref.iter().zip(by.iter()).map(|(a, b)| a + b).collect()
    }

    /// `K_c` as described on the type, dense.
    pub fn constrained_matrix(&self, k_i: &CsrMatrix) -> DMatrix<f64> {
        let n = k_i.nrows();
        let mut in_m = vec![false; n];
        for &j in &self.indices {
            in_m[j] = true;
        }
        let mut kc = DMatrix::zeros(n, n);
        for i in 0..n {
            let (cols, vals) = k_i.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if !in_m[i] && !in_m[j] {
                    kc[(i, j)] = v;
                }
            }
            if in_m[i] {
                kc[(i, i)] = 1.0;
            }
        }
        kc
    }
}
