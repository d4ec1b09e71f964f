use super::GridSpec;
use crate::error::Result;
use crate::sparse::CsrMatrix;

/// Bilinear interpolation from a grid at half resolution.
#[derive(Debug, Clone)]
pub struct Prolongation {
    /// `N_fine x N_coarse`
    pub weights: CsrMatrix,
    pub coarse_grid: GridSpec,
}

/// Coarse nodes and weights interpolating fine node `(ix, iy)`.
pub(crate) fn node_stencil(coarse: &GridSpec, ix: usize, iy: usize) -> Vec<(usize, f64)> {
    let xs: Vec<(usize, f64)> = if ix % 2 == 0 {
        vec![(ix / 2, 1.0)]
    } else {
        vec![(ix / 2, 0.5), (ix / 2 + 1, 0.5)]
    };
    let ys: Vec<(usize, f64)> = if iy % 2 == 0 {
        vec![(iy / 2, 1.0)]
    } else {
        vec![(iy / 2, 0.5), (iy / 2 + 1, 0.5)]
    };
    let mut out = Vec::with_capacity(4);
    for &(cx, wx) in &xs {
        for &(cy, wy) in &ys {
            out.push((coarse.node_index(cx, cy), wx * wy));
        }
    }
    out
}

pub fn build_prolongation(fine: &GridSpec) -> Result<Prolongation> {
    fine.check_two_grid()?;
    let (cnx, cny) = (fine.nelx / 2, fine.nely / 2);
    let mut coarse_mask = vec![false; cnx * cny];
    for e in 0..fine.element_count() {
        if fine.is_active(e) {
            let (ix, iy) = fine.element_ij(e);
            coarse_mask[(ix / 2) * cny + iy / 2] = true;
        }
    }
    let coarse = GridSpec::new(fine.domain_width, fine.domain_height, cnx, cny)?
        .with_active_mask(coarse_mask)?;

    let mut rows = Vec::with_capacity(fine.dof_count());
    let mut vals = Vec::with_capacity(fine.dof_count());
    for node in 0..fine.node_count() {
        let (ix, iy) = fine.node_ij(node);
        let mut stencil = node_stencil(&coarse, ix, iy);
        stencil.sort_by_key(|&(c, _)| c);
        for d in 0..2 {
            rows.push(stencil.iter().map(|&(c, _)| 2 * c + d).collect::<Vec<_>>());
            vals.push(stencil.iter().map(|&(_, w)| w).collect::<Vec<_>>());
        }
    }
    let mut weights = CsrMatrix::from_pattern(coarse.dof_count(), &rows);
    for (i, v) in vals.iter().enumerate() {
        weights.row_mut(i).1.copy_from_slice(v);
    }
    Ok(Prolongation {
        weights,
        coarse_grid: coarse,
    })
}

impl Prolongation {
    pub fn fine_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn coarse_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Copy with the rows of constrained fine DOFs zeroed, so coarse
    /// corrections never move a support.
    pub fn constrained(&self, fixed: &[bool]) -> Prolongation {
        let mut w = self.weights.clone();
        for (i, &f) in fixed.iter().enumerate() {
            if f {
                w.row_mut(i).1.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Prolongation {
            weights: w,
            coarse_grid: self.coarse_grid.clone(),
        }
    }

    pub fn prolong(&self, coarse: &[f64]) -> Vec<f64> {
        self.weights.mul_vec(coarse)
    }

    pub fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        self.weights.mul_transpose_vec(fine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_by_node_position() {
        let fine = GridSpec::new(2.0, 1.0, 4, 2).unwrap();
        let p = build_prolongation(&fine).unwrap();
        let c = &p.coarse_grid;
        assert_eq!((c.nelx, c.nely), (2, 1));

        // coincident node
        let (cols, vals) = p.weights.row(2 * fine.node_index(2, 2));
        assert_eq!(cols, &[2 * c.node_index(1, 1)]);
        assert_eq!(vals, &[1.0]);

        // edge midpoint
        let (cols, vals) = p.weights.row(2 * fine.node_index(1, 0) + 1);
        assert_eq!(cols.len(), 2);
        assert_eq!(vals, &[0.5, 0.5]);
        assert!(cols.contains(&(2 * c.node_index(0, 0) + 1)));
        assert!(cols.contains(&(2 * c.node_index(1, 0) + 1)));

        // cell centre
        let (_, vals) = p.weights.row(2 * fine.node_index(1, 1));
        assert_eq!(vals, &[0.25; 4]);
    }

    #[test]
    fn partition_of_unity() {
        let fine = GridSpec::new(2.0, 1.0, 8, 4).unwrap();
        let p = build_prolongation(&fine).unwrap();
        let ones = vec![1.0; p.coarse_dim()];
        assert!(p.prolong(&ones).iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(p.weights.values().iter().all(|w| [1.0, 0.5, 0.25].contains(w)));
    }

    #[test]
    fn constrained_rows_vanish() {
        let fine = GridSpec::new(2.0, 1.0, 4, 2).unwrap();
        let p = build_prolongation(&fine).unwrap();
        let mut fixed = vec![false; fine.dof_count()];
        fixed[0] = true;
        fixed[7] = true;
        let pc = p.constrained(&fixed);
        let v = pc.prolong(&vec![1.0; p.coarse_dim()]);
        for (i, x) in v.iter().enumerate() {
            assert_eq!(*x, if fixed[i] { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn odd_grid_rejected() {
        let fine = GridSpec::new(1.0, 1.0, 3, 2).unwrap();
        assert!(build_prolongation(&fine).is_err());
    }
}
