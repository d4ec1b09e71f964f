use log::warn;

use super::{ElementStiffness, GridSpec};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn offset(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLoad {
    pub node: usize,
    pub axis: Axis,
    pub magnitude: f64,
}

/// Grounded linear spring on one DOF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spring {
    pub dof: usize,
    pub stiffness: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditions {
    pub fixed_dofs: Vec<usize>,
    pub springs: Vec<Spring>,
}

impl BoundaryConditions {
    /// Per-DOF fixed flags.
    pub fn fixed_mask(&self, ndof: usize) -> Result<Vec<bool>> {
        let mut mask = vec![false; ndof];
        for &d in &self.fixed_dofs {
            if d >= ndof {
                return Err(Error::invalid(format!("fixed DOF {d} out of range ({ndof})")));
            }
            mask[d] = true;
        }
        Ok(mask)
    }
}

/// Assembled, constraint-eliminated linear system `K U = F`.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub stiffness: CsrMatrix,
    pub load: Vec<f64>,
    pub fixed: Vec<bool>,
    pub springs: Vec<Spring>,
}

impl GlobalSystem {
    pub fn dim(&self) -> usize {
        self.load.len()
    }

    pub fn fixed_dofs(&self) -> Vec<usize> {
        (0..self.fixed.len()).filter(|&i| self.fixed[i]).collect()
    }

    /// `F - K U`
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.stiffness.mul_vec(u);
        for (ri, fi) in r.iter_mut().zip(&self.load) {
            *ri = fi - *ri;
        }
        r
    }
}

/// Reusable assembler: the sparsity pattern and the element-to-slot map are
/// computed once per grid.
#[derive(Debug, Clone)]
pub struct Assembler {
    grid: GridSpec,
    pattern: CsrMatrix,
    slots: Vec<[usize; 64]>,
}

impl Assembler {
    pub fn new(grid: &GridSpec) -> Self {
        let ndof = grid.dof_count();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); ndof];
        for e in 0..grid.element_count() {
            let dofs = grid.element_dofs(e);
            for &i in &dofs {
                rows[i].extend_from_slice(&dofs);
            }
        }
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
        }
        let pattern = CsrMatrix::from_pattern(ndof, &rows);
        let slots = (0..grid.element_count())
            .map(|e| {
                let dofs = grid.element_dofs(e);
                let mut s = [0usize; 64];
                for a in 0..8 {
                    for b in 0..8 {
                        s[a * 8 + b] = pattern.slot(dofs[a], dofs[b]).expect("element entry in pattern");
                    }
                }
                s
            })
            .collect();
        Assembler {
            grid: grid.clone(),
            pattern,
            slots,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Zero matrix with the grid's Q4 sparsity pattern.
    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    /// Value slots of element `e` in row-major 8x8 order.
    pub fn element_slots(&self, e: usize) -> &[usize; 64] {
        &self.slots[e]
    }

    /// `Σ_e E_e · scatter(ke)` without constraints or springs.
    pub fn assemble_raw(&self, ke: &ElementStiffness, moduli: &[f64]) -> Result<CsrMatrix> {
        if moduli.len() != self.grid.element_count() {
            return Err(Error::invalid(format!(
                "{} moduli for {} elements",
                moduli.len(),
                self.grid.element_count()
            )));
        }
        let mut k = self.pattern.clone();
        let vals = k.values_mut();
        for (e, &m) in moduli.iter().enumerate() {
            let slots = &self.slots[e];
            for a in 0..8 {
                for b in 0..8 {
                    vals[slots[a * 8 + b]] += m * ke.entries[a][b];
                }
            }
        }
        Ok(k)
    }

    /// Assembles `K`, adds springs and eliminates fixed DOFs symmetrically
    /// (zero row and column, unit diagonal, zero load). Moduli below
    /// `min_modulus` are rejected.
    pub fn assemble(
        &self,
        ke: &ElementStiffness,
        moduli: &[f64],
        bcs: &BoundaryConditions,
        min_modulus: f64,
    ) -> Result<GlobalSystem> {
        let threshold = min_modulus * (1.0 - 1e-9);
        if let Some((element, &modulus)) = moduli
            .iter()
            .enumerate()
            .find(|(_, &m)| !(m >= threshold) || !m.is_finite())
        {
            return Err(Error::ModulusBelowFloor {
                element,
                modulus,
                floor: min_modulus,
            });
        }
        let ndof = self.grid.dof_count();
        let fixed = bcs.fixed_mask(ndof)?;
        let mut k = self.assemble_raw(ke, moduli)?;
        for s in &bcs.springs {
            if s.dof >= ndof {
                return Err(Error::invalid(format!("spring DOF {} out of range", s.dof)));
            }
            let slot = k.slot(s.dof, s.dof).expect("diagonal in pattern");
            k.values_mut()[slot] += s.stiffness;
        }
        eliminate_fixed(&mut k, &fixed);
        Ok(GlobalSystem {
            stiffness: k,
            load: vec![0.0; ndof],
            fixed,
            springs: bcs.springs.clone(),
        })
    }
}

fn eliminate_fixed(k: &mut CsrMatrix, fixed: &[bool]) {
    for i in 0..k.nrows() {
        let (cols, vals) = k.row_mut(i);
        for (&j, v) in cols.iter().zip(vals.iter_mut()) {
            if fixed[i] || fixed[j] {
                *v = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
}

/// One-shot assembly; see [`Assembler::assemble`].
pub fn assemble_global(
    grid: &GridSpec,
    ke: &ElementStiffness,
    element_moduli: &[f64],
    bcs: &BoundaryConditions,
    min_modulus: f64,
) -> Result<GlobalSystem> {
    Assembler::new(grid).assemble(ke, element_moduli, bcs, min_modulus)
}

/// Writes point loads into `system.load`, replacing what was there. Loads
/// on the same DOF add up; loads on fixed DOFs are dropped with a warning.
pub fn apply_load(system: &mut GlobalSystem, loads: &[PointLoad]) -> Result<()> {
    let ndof = system.dim();
    let mut f = vec![0.0; ndof];
    for l in loads {
        let dof = 2 * l.node + l.axis.offset();
        if dof >= ndof {
            return Err(Error::invalid(format!("load node {} out of range", l.node)));
        }
        if system.fixed[dof] {
            warn!("load on fixed DOF {dof} ignored");
            continue;
        }
        f[dof] += l.magnitude;
    }
    system.load = f;
    Ok(())
}
