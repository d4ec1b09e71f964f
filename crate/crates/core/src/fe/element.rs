use crate::error::{Error, Result};

/// 8x8 stiffness of a rectangular plane-stress bilinear quad, unit thickness.
///
/// DOF order follows [`GridSpec::element_dofs`](super::GridSpec::element_dofs):
/// `(ux, uy)` of the four corners counter-clockwise from bottom-left.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementStiffness {
    pub entries: [[f64; 8]; 8],
    pub poisson_ratio: f64,
}

impl ElementStiffness {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    /// `a^T k b` for element DOF vectors.
    pub fn bilinear(&self, a: &[f64; 8], b: &[f64; 8]) -> f64 {
        let mut s = 0.0;
        for i in 0..8 {
            let row = &self.entries[i];
            let kb: f64 = (0..8).map(|j| row[j] * b[j]).sum();
            s += a[i] * kb;
        }
        s
    }
}

const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Plane-stress Q4 stiffness by 2x2 Gauss quadrature.
pub fn build_element_stiffness(e: f64, nu: f64, ew: f64, eh: f64) -> Result<ElementStiffness> {
    if !(e > 0.0) {
        return Err(Error::invalid(format!("Young's modulus must be positive, got {e}")));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(Error::invalid(format!("Poisson ratio must lie in [0, 0.5), got {nu}")));
    }
    if !(ew > 0.0 && eh > 0.0) {
        return Err(Error::invalid(format!("element size must be positive, got {ew}x{eh}")));
    }

    let c = e / (1.0 - nu * nu);
    let d = [
        [c, c * nu, 0.0],
        [c * nu, c, 0.0],
        [0.0, 0.0, c * (1.0 - nu) / 2.0],
    ];
    let g = 1.0 / 3f64.sqrt();
    let det_j = ew * eh / 4.0;

    let mut k = [[0.0; 8]; 8];
    for &(xi, eta) in &[(-g, -g), (g, -g), (g, g), (-g, g)] {
        let mut b = [[0.0; 8]; 3];
        for (a, &(xa, ya)) in CORNERS.iter().enumerate() {
            let dndx = 0.25 * xa * (1.0 + eta * ya) * 2.0 / ew;
            let dndy = 0.25 * ya * (1.0 + xi * xa) * 2.0 / eh;
            b[0][2 * a] = dndx;
            b[1][2 * a + 1] = dndy;
            b[2][2 * a] = dndy;
            b[2][2 * a + 1] = dndx;
        }
        for i in 0..8 {
            for j in 0..8 {
                let mut s = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        s += b[p][i] * d[p][q] * b[q][j];
                    }
                }
                k[i][j] += s * det_j;
            }
        }
    }
    // exact symmetry
    for i in 0..8 {
        for j in 0..i {
            let avg = 0.5 * (k[i][j] + k[j][i]);
            k[i][j] = avg;
            k[j][i] = avg;
        }
    }
    Ok(ElementStiffness {
        entries: k,
        poisson_ratio: nu,
    })
}
