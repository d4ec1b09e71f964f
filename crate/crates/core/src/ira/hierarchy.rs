use crate::error::{Error, Result};
use crate::fe::prolongation::node_stencil;
use crate::fe::{build_prolongation, Assembler, ElementStiffness, GridSpec, Prolongation, Spring};
use crate::sparse::CsrMatrix;

use super::smoother::gauss_seidel;

/// Fine/coarse pair with the Galerkin coarse operator `K* = Pᵀ K P`.
///
/// `P` has the rows of constrained fine DOFs zeroed, so `K*` is the
/// projection of the unconstrained problem and coarse corrections never
/// move supports. Because every fine element sits inside one coarse
/// element, `K*` is assembled element by element from precomputed
/// `P_eᵀ k P_e` blocks instead of a sparse triple product.
#[derive(Debug, Clone)]
pub struct TwoGridHierarchy {
    pub prolongation: Prolongation,
    pub coarse_operator: CsrMatrix,
    pub smoother_sweeps: usize,
    pub fine_dim: usize,
    pub coarse_dim: usize,
    coarse_assembler: Assembler,
    /// Per fine element: owning coarse element and its unit-modulus block.
    blocks: Vec<(usize, [[f64; 8]; 8])>,
    /// Per spring: coarse DOFs and weights of its `P` row, and stiffness.
    springs: Vec<(Vec<(usize, f64)>, f64)>,
    /// Coarse DOFs whose `P` column vanishes; they get a unit diagonal.
    empty_columns: Vec<usize>,
}

impl TwoGridHierarchy {
    pub fn new(
        fine: &GridSpec,
        ke: &ElementStiffness,
        fixed: &[bool],
        springs: &[Spring],
        smoother_sweeps: usize,
    ) -> Result<Self> {
        if fixed.len() != fine.dof_count() {
            return Err(Error::invalid("fixed mask length does not match the grid"));
        }
        let prolongation = build_prolongation(fine)?.constrained(fixed);
        let coarse = prolongation.coarse_grid.clone();
        let coarse_assembler = Assembler::new(&coarse);

        let mut blocks = Vec::with_capacity(fine.element_count());
        for e in 0..fine.element_count() {
            let (ix, iy) = fine.element_ij(e);
            let ce = coarse.element_index(ix / 2, iy / 2);
            let cnodes = coarse.element_nodes(ce);
            let fnodes = fine.element_nodes(e);
            // p[a][b]: weight of coarse local DOF b in fine local DOF a
            let mut p = [[0.0; 8]; 8];
            for (a, &fnode) in fnodes.iter().enumerate() {
                let (fx, fy) = fine.node_ij(fnode);
                for (cnode, w) in node_stencil(&coarse, fx, fy) {
                    let b = cnodes.iter().position(|&c| c == cnode).expect("stencil inside coarse element");
                    for d in 0..2 {
                        if !fixed[2 * fnode + d] {
                            p[2 * a + d][2 * b + d] = w;
                        }
                    }
                }
            }
            let mut kp = [[0.0; 8]; 8];
            for a in 0..8 {
                for b in 0..8 {
                    kp[a][b] = (0..8).map(|c| ke.entries[a][c] * p[c][b]).sum();
                }
            }
            let mut g = [[0.0; 8]; 8];
            for a in 0..8 {
                for b in 0..8 {
                    g[a][b] = (0..8).map(|c| p[c][a] * kp[c][b]).sum();
                }
            }
            blocks.push((ce, g));
        }

        let w = &prolongation.weights;
        let mut spring_rows = Vec::new();
        for s in springs {
            if s.dof >= fine.dof_count() {
                return Err(Error::invalid(format!("spring DOF {} out of range", s.dof)));
            }
            let (cols, vals) = w.row(s.dof);
            let row: Vec<(usize, f64)> = cols
                .iter()
                .zip(vals)
                .filter(|(_, &v)| v != 0.0)
                .map(|(&c, &v)| (c, v))
                .collect();
            spring_rows.push((row, s.stiffness));
        }

        let mut has_weight = vec![false; coarse.dof_count()];
        for i in 0..w.nrows() {
            let (cols, vals) = w.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if v != 0.0 {
                    has_weight[c] = true;
                }
            }
        }
        let empty_columns = (0..coarse.dof_count()).filter(|&c| !has_weight[c]).collect();

        Ok(TwoGridHierarchy {
            fine_dim: fine.dof_count(),
            coarse_dim: coarse.dof_count(),
            coarse_operator: coarse_assembler.pattern().clone(),
            coarse_assembler,
            prolongation,
            smoother_sweeps,
            blocks,
            springs: spring_rows,
            empty_columns,
        })
    }

    /// Rebuilds `K*` for new element moduli. The fine matrix these moduli
    /// produce must be the one later handed to the V-cycle.
    pub fn update(&mut self, moduli: &[f64]) -> Result<()> {
        if moduli.len() != self.blocks.len() {
            return Err(Error::invalid(format!(
                "{} moduli for {} elements",
                moduli.len(),
                self.blocks.len()
            )));
        }
        let k = &mut self.coarse_operator;
        k.zero_values();
        let vals = k.values_mut();
        for (&(ce, ref g), &m) in self.blocks.iter().zip(moduli) {
            let slots = self.coarse_assembler.element_slots(ce);
            for a in 0..8 {
                for b in 0..8 {
                    vals[slots[a * 8 + b]] += m * g[a][b];
                }
            }
        }
        for (row, stiffness) in &self.springs {
            for &(i, wi) in row {
                for &(j, wj) in row {
                    let slot = k.slot(i, j).expect("spring stencil in coarse pattern");
                    k.values_mut()[slot] += stiffness * wi * wj;
                }
            }
        }
        for &c in &self.empty_columns {
            let slot = k.slot(c, c).expect("diagonal in pattern");
            k.values_mut()[slot] = 1.0;
        }
        Ok(())
    }
}

/// `Pᵀ (f − K u)`.
pub fn restrict_residual(h: &TwoGridHierarchy, k: &CsrMatrix, u: &[f64], f: &[f64]) -> Vec<f64> {
    let ku = k.mul_vec(u);
    let r: Vec<f64> = f.iter().zip(&ku).map(|(a, b)| a - b).collect();
    h.prolongation.restrict(&r)
}

/// Anything that can solve the coarse problem `K* dx = d`.
pub trait CoarseSolve {
    fn solve_coarse(&mut self, d: &[f64]) -> Result<Vec<f64>>;
}

impl<F> CoarseSolve for F
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    fn solve_coarse(&mut self, d: &[f64]) -> Result<Vec<f64>> {
        self(d)
    }
}

/// Pre-smooth, coarse correction, post-smooth.
pub fn v_cycle(
    h: &TwoGridHierarchy,
    k: &CsrMatrix,
    f: &[f64],
    u: &mut [f64],
    coarse: &mut dyn CoarseSolve,
) -> Result<()> {
    if k.nrows() != h.fine_dim || f.len() != h.fine_dim || u.len() != h.fine_dim {
        return Err(Error::invalid("V-cycle dimension mismatch"));
    }
    gauss_seidel(k, u, f, h.smoother_sweeps)?;
    let d = restrict_residual(h, k, u, f);
    let dx = coarse.solve_coarse(&d)?;
    let correction = h.prolongation.prolong(&dx);
    for (ui, ci) in u.iter_mut().zip(&correction) {
        *ui += ci;
    }
    gauss_seidel(k, u, f, h.smoother_sweeps)
}
