//! The three benchmark problems: cantilever, L-shape and displacement
//! inverter.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fe::{Axis, BoundaryConditions, GridSpec, PointLoad, Spring};
use crate::mmc::{Component, FieldSnapshot, HeavisideParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Cantilever,
    LShape,
    Mechanism,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Cantilever => "cantilever",
            ProblemKind::LShape => "lshape",
            ProblemKind::Mechanism => "mechanism",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cantilever" => Ok(ProblemKind::Cantilever),
            "lshape" | "l-shape" => Ok(ProblemKind::LShape),
            "mechanism" | "inverter" => Ok(ProblemKind::Mechanism),
            other => Err(Error::invalid(format!("unknown problem '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    /// `FᵀU`
    Compliance,
    /// `U[dof]`; negative when the output moves the intended way.
    OutputDisplacement { dof: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemDefaults {
    pub eta: f64,
    pub eps_star: f64,
    pub delta: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub grid: GridSpec,
    pub volume_fraction_bound: f64,
    pub loads: Vec<PointLoad>,
    pub bcs: BoundaryConditions,
    pub objective: ObjectiveKind,
    pub defaults: ProblemDefaults,
    pub initial_components: Vec<Component>,
    pub e_modulus: f64,
    pub poisson_ratio: f64,
}

const SPRING_STIFFNESS: f64 = 0.1;

/// Initial volume fraction relative to the bound.
const INITIAL_VOLUME_RATIO: f64 = 1.05;

fn both_dofs(node: usize) -> [usize; 2] {
    [2 * node, 2 * node + 1]
}

pub fn build_problem(kind: ProblemKind, nelx: usize, nely: usize) -> Result<ProblemSpec> {
    let (dw, dh) = match kind {
        ProblemKind::LShape => (1.0, 1.0),
        _ => (2.0, 1.0),
    };
    let mut grid = GridSpec::new(dw, dh, nelx, nely)?;
    grid.check_two_grid()?;
    let defaults = |eta, delta| ProblemDefaults {
        eta,
        eps_star: 1e-2,
        delta,
        max_iter: 600,
    };

    let (vbar, loads, bcs, objective, defs) = match kind {
        ProblemKind::Cantilever => {
            let fixed_dofs = (0..=nely).flat_map(|iy| both_dofs(grid.node_index(0, iy))).collect();
            let loads = vec![PointLoad {
                node: grid.node_index(nelx, nely / 2),
                axis: Axis::Y,
                magnitude: -1.0,
            }];
            let bcs = BoundaryConditions {
                fixed_dofs,
                springs: vec![],
            };
            (0.4, loads, bcs, ObjectiveKind::Compliance, defaults(0.11, 0.002))
        }
        ProblemKind::LShape => {
            // the top-right block x > 0.4, y > 0.6 is passive
            let mask = (0..grid.element_count())
                .map(|e| {
                    let (ix, iy) = grid.element_ij(e);
                    let xc = (ix as f64 + 0.5) * grid.element_width;
                    let yc = (iy as f64 + 0.5) * grid.element_height;
                    !(xc > 0.4 * dw && yc > 0.6 * dh)
                })
                .collect();
            grid = grid.with_active_mask(mask)?;
            let fixed_dofs = (0..=nelx)
                .filter(|&ix| ix as f64 * grid.element_width <= 0.4 * dw + 1e-12)
                .flat_map(|ix| both_dofs(grid.node_index(ix, nely)))
                .collect();
            let iy = (0.3 * nely as f64).round() as usize;
            let loads = vec![PointLoad {
                node: grid.node_index(nelx, iy),
                axis: Axis::Y,
                magnitude: -1.0,
            }];
            let bcs = BoundaryConditions {
                fixed_dofs,
                springs: vec![],
            };
            (0.3, loads, bcs, ObjectiveKind::Compliance, defaults(0.05, 0.001))
        }
        ProblemKind::Mechanism => {
            let n_in = grid.node_index(0, nely / 2);
            let n_out = grid.node_index(nelx, nely / 2);
            let fixed_dofs = [grid.node_index(0, 0), grid.node_index(0, nely)]
                .into_iter()
                .flat_map(both_dofs)
                .collect();
            let springs = vec![
                Spring {
                    dof: 2 * n_in,
                    stiffness: SPRING_STIFFNESS,
                },
                Spring {
                    dof: 2 * n_out,
                    stiffness: SPRING_STIFFNESS,
                },
            ];
            let loads = vec![PointLoad {
                node: n_in,
                axis: Axis::X,
                magnitude: 1.0,
            }];
            let bcs = BoundaryConditions { fixed_dofs, springs };
            let objective = ObjectiveKind::OutputDisplacement { dof: 2 * n_out };
            (0.3, loads, bcs, objective, defaults(0.13, 0.002))
        }
    };

    let initial_components = scale_to_volume(
        &initial_layout(kind, &grid),
        &grid,
        INITIAL_VOLUME_RATIO * vbar,
    )?;
    Ok(ProblemSpec {
        kind,
        grid,
        volume_fraction_bound: vbar,
        loads,
        bcs,
        objective,
        defaults: defs,
        initial_components,
        e_modulus: 1.0,
        poisson_ratio: 0.3,
    })
}

/// Scales all thicknesses by a common factor so the layout's volume
/// fraction on `grid` matches `target`, by bisection.
pub fn scale_to_volume(components: &[Component], grid: &GridSpec, target: f64) -> Result<Vec<Component>> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(format!("target volume fraction {target} outside (0, 1)")));
    }
    let params = HeavisideParams::for_grid(grid);
    let scaled = |factor: f64| -> Vec<Component> {
        components
            .iter()
            .map(|c| Component {
                t1: c.t1 * factor,
                t2: c.t2 * factor,
                t3: c.t3 * factor,
                ..*c
            })
            .collect()
    };
    let fraction = |factor: f64| -> Result<f64> {
        Ok(FieldSnapshot::evaluate(&scaled(factor), grid, 1.0, &params)?.volume_fraction)
    };
    let (mut lo, mut hi) = (1e-3, 1.0);
    while fraction(hi)? < target {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::invalid(format!("layout cannot reach volume fraction {target}")));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if fraction(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(scaled(hi))
}

/// Crossed pairs of bars along the diagonals of a regular grid of cells.
/// Bars run a tenth of the diagonal past the cell corners so neighbouring
/// pairs overlap rather than meet tip to tip. For the L-shape, pairs whose
/// cell centre lies in the cut-out are left out.
pub fn initial_layout(kind: ProblemKind, grid: &GridSpec) -> Vec<Component> {
    let (dw, dh) = (grid.domain_width, grid.domain_height);
    let (cols, rows, half_thickness) = match kind {
        ProblemKind::Cantilever | ProblemKind::Mechanism => (4, 2, 0.05 * dh),
        ProblemKind::LShape => (4, 4, 0.03 * dh),
    };
    let (cw, ch) = (dw / cols as f64, dh / rows as f64);
    let theta = ch.atan2(cw).min(FRAC_PI_2);
    let half_length = 0.6 * cw.hypot(ch);
    let mut out = Vec::with_capacity(2 * cols * rows);
    for i in 0..cols {
        for j in 0..rows {
            let x0 = (i as f64 + 0.5) * cw;
            let y0 = (j as f64 + 0.5) * ch;
            if kind == ProblemKind::LShape && x0 > 0.4 * dw && y0 > 0.6 * dh {
                continue;
            }
            for sign in [1.0, -1.0] {
                out.push(Component {
                    x0,
                    y0,
                    half_length,
                    t1: half_thickness,
                    t2: half_thickness,
                    t3: half_thickness,
                    theta: sign * theta,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantilever_setup() {
        let p = build_problem(ProblemKind::Cantilever, 80, 40).unwrap();
        assert_eq!(p.bcs.fixed_dofs.len(), 82);
        assert_eq!(p.loads.len(), 1);
        assert_eq!(p.grid.node_coords(p.loads[0].node), (2.0, 0.5));
        assert_eq!(p.initial_components.len(), 16);
        for c in &p.initial_components {
            assert!(c.x0 > 0.0 && c.x0 < 2.0 && c.y0 > 0.0 && c.y0 < 1.0);
            assert!((c.theta.abs() - 0.5f64.atan2(0.5)).abs() < 1e-15);
        }
        assert_eq!(p.defaults.eta, 0.11);
    }

    #[test]
    fn lshape_active_counts() {
        for (n, count) in [(80, 4864), (100, 7600), (160, 19456)] {
            let p = build_problem(ProblemKind::LShape, n, n).unwrap();
            assert_eq!(p.grid.active_count(), count, "{n}x{n}");
        }
        let p = build_problem(ProblemKind::LShape, 80, 80).unwrap();
        assert_eq!(p.initial_components.len(), 24);
        let (x, y) = p.grid.node_coords(p.loads[0].node);
        assert!((x - 1.0).abs() < 1e-12 && (y - 0.3).abs() < 1e-12);
        // top edge from x = 0 to 0.4: 33 nodes
        assert_eq!(p.bcs.fixed_dofs.len(), 66);
    }

    #[test]
    fn mechanism_setup() {
        let p = build_problem(ProblemKind::Mechanism, 80, 40).unwrap();
        assert_eq!(p.bcs.fixed_dofs.len(), 4);
        assert_eq!(p.bcs.springs.len(), 2);
        assert!(p.bcs.springs.iter().all(|s| s.stiffness == 0.1));
        let ObjectiveKind::OutputDisplacement { dof } = p.objective else {
            panic!("mechanism objective");
        };
        assert_eq!(p.grid.node_coords(dof / 2), (2.0, 0.5));
        assert_eq!(p.loads[0].axis, Axis::X);
    }

    #[test]
    fn rebuild_is_identical() {
        for kind in [ProblemKind::Cantilever, ProblemKind::LShape, ProblemKind::Mechanism] {
            let (nx, ny) = if kind == ProblemKind::LShape { (40, 40) } else { (40, 20) };
            assert_eq!(build_problem(kind, nx, ny).unwrap(), build_problem(kind, nx, ny).unwrap());
        }
    }

    #[test]
    fn initial_volume_sits_just_above_bound() {
        for kind in [ProblemKind::Cantilever, ProblemKind::LShape, ProblemKind::Mechanism] {
            let (nx, ny) = if kind == ProblemKind::LShape { (40, 40) } else { (40, 20) };
            let p = build_problem(kind, nx, ny).unwrap();
            let params = HeavisideParams::for_grid(&p.grid);
            let vf = FieldSnapshot::evaluate(&p.initial_components, &p.grid, 1.0, &params)
                .unwrap()
                .volume_fraction;
            let vbar = p.volume_fraction_bound;
            assert!((vf - 1.05 * vbar).abs() < 1e-6, "{kind:?}: {vf}");
            assert!((0.3..=0.8).contains(&vf) && vf >= 0.8 * vbar);
        }
    }

    #[test]
    fn names_and_errors() {
        assert_eq!("lshape".parse::<ProblemKind>().unwrap(), ProblemKind::LShape);
        assert!("bridge".parse::<ProblemKind>().is_err());
        assert!(build_problem(ProblemKind::Cantilever, 81, 40).is_err());
    }
}
