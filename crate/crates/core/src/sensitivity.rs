//! Adjoint sensitivities with respect to component parameters.
//!
//! For an objective `C = lᵀU` with `K U = F` the adjoint `λ` solves
//! `K λ = −l` and `∂C/∂a = λᵀ (∂K/∂a) U`. Element moduli depend on the
//! design only through the nodal Heaviside values, so
//!
//! ```text
//! ∂C/∂a = Σ_n S_n ∂H_n/∂a,
//! S_n   = Σ_{e ∋ n, e active} (E/4) q H_n^{q−1} λ_eᵀ k u_e
//! ```
//!
//! and `∂H_n/∂a` is nonzero only for nodes inside the Heaviside band and
//! only for the parameters of the component attaining the max there. The
//! Heaviside acts on the distance-like field, so `∂H_n/∂a = H'(d_n) ∂d_n/∂a`.
//! Springs and passive elements do not depend on the design.

use crate::error::{Error, Result};
use crate::fe::{ElementStiffness, GridSpec};
use crate::mmc::{heaviside_derivative, tdf_distance_gradient_all, Component, FieldSnapshot, HeavisideParams, PARAMS_PER_COMPONENT};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    /// Value of the differentiated function.
    pub value: f64,
    /// One entry per design variable, seven per component.
    pub values: Vec<f64>,
}

/// Everything the gradients need besides displacements.
#[derive(Debug, Clone, Copy)]
pub struct SensitivityContext<'a> {
    pub grid: &'a GridSpec,
    pub components: &'a [Component],
    pub snapshot: &'a FieldSnapshot,
    pub ke: &'a ElementStiffness,
    pub params: &'a HeavisideParams,
    pub e_modulus: f64,
}

impl SensitivityContext<'_> {
    fn check(&self, vectors: &[&[f64]]) -> Result<()> {
        let ndof = self.grid.dof_count();
        if vectors.iter().any(|v| v.len() != ndof) {
            return Err(Error::invalid(format!("displacement length differs from {ndof} DOFs")));
        }
        if self.snapshot.h_nodal.len() != self.grid.node_count()
            || self.snapshot.owner.iter().any(|&o| o >= self.components.len())
        {
            return Err(Error::invalid("field snapshot does not match grid or components"));
        }
        Ok(())
    }

    fn element_vector(&self, v: &[f64], e: usize) -> [f64; 8] {
        let dofs = self.grid.element_dofs(e);
        std::array::from_fn(|a| v[dofs[a]])
    }

    /// `Σ_n weight_n ∂H_n/∂a` for every design variable.
    fn chain_nodal(&self, weight: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; PARAMS_PER_COMPONENT * self.components.len()];
        for (n, &w) in weight.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let dh = heaviside_derivative(self.snapshot.dist_nodal[n], self.params);
            if dh == 0.0 {
                continue;
            }
            let owner = self.snapshot.owner[n];
            let (x, y) = self.grid.node_coords(n);
            let g = tdf_distance_gradient_all(&self.components[owner], x, y);
            let base = PARAMS_PER_COMPONENT * owner;
            for (k, gk) in g.iter().enumerate() {
                out[base + k] += w * dh * gk;
            }
        }
        out
    }

    /// Nodal weights `S_n` and `Σ_e E_e λ_eᵀ k u_e`.
    fn nodal_weights(&self, u: &[f64], lambda: &[f64]) -> (Vec<f64>, f64) {
        let q = self.params.q;
        let mut s = vec![0.0; self.grid.node_count()];
        let mut total = 0.0;
        for e in 0..self.grid.element_count() {
            if !self.grid.is_active(e) {
                continue;
            }
            let ue = self.element_vector(u, e);
            let le = self.element_vector(lambda, e);
            let w = self.ke.bilinear(&le, &ue);
            total += self.snapshot.element_moduli[e] * w;
            for n in self.grid.element_nodes(e) {
                let h = self.snapshot.h_nodal[n];
                s[n] += self.e_modulus / 4.0 * q as f64 * h.powi(q - 1) * w;
            }
        }
        (s, total)
    }
}

/// `λᵀ (∂K/∂a) U` for every design variable.
pub fn adjoint_gradient(ctx: &SensitivityContext<'_>, u: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    ctx.check(&[u, lambda])?;
    let (s, _) = ctx.nodal_weights(u, lambda);
    Ok(ctx.chain_nodal(&s))
}

/// Compliance `UᵀKU` (equal to `FᵀU` at the exact solution, springs
/// aside) and its gradient; self-adjoint with `λ = −U`.
pub fn compliance_gradient(ctx: &SensitivityContext<'_>, u: &[f64]) -> Result<GradientVector> {
    ctx.check(&[u])?;
    let (s, energy) = ctx.nodal_weights(u, u);
    let values = ctx.chain_nodal(&s).into_iter().map(|v| -v).collect();
    Ok(GradientVector { value: energy, values })
}

/// Output displacement `C = U[output_dof]` with the adjoint `λ` solving
/// `K λ = −e_out`.
pub fn mechanism_gradient(
    ctx: &SensitivityContext<'_>,
    u: &[f64],
    lambda: &[f64],
    output_dof: usize,
) -> Result<GradientVector> {
    if output_dof >= u.len() {
        return Err(Error::invalid(format!("output DOF {output_dof} out of range")));
    }
    let values = adjoint_gradient(ctx, u, lambda)?;
    Ok(GradientVector {
        value: u[output_dof],
        values,
    })
}

/// Constraint `g = V / V_active − bound` and its gradient.
pub fn volume_gradient(ctx: &SensitivityContext<'_>, bound: f64) -> Result<GradientVector> {
    ctx.check(&[])?;
    let grid = ctx.grid;
    let mut count = vec![0u32; grid.node_count()];
    for e in (0..grid.element_count()).filter(|&e| grid.is_active(e)) {
        for n in grid.element_nodes(e) {
            count[n] += 1;
        }
    }
    let scale = 0.25 / grid.active_count() as f64;
    let weight: Vec<f64> = count.iter().map(|&c| c as f64 * scale).collect();
    Ok(GradientVector {
        value: ctx.snapshot.volume_fraction - bound,
        values: ctx.chain_nodal(&weight),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::{apply_load, build_element_stiffness, Assembler, Axis, BoundaryConditions, PointLoad, Spring};
    use crate::sparse::dot;

    struct Setup {
        grid: GridSpec,
        ke: ElementStiffness,
        params: HeavisideParams,
        bcs: BoundaryConditions,
        loads: Vec<PointLoad>,
    }

    fn cantilever(nelx: usize, nely: usize) -> Setup {
        let grid = GridSpec::new(2.0, 1.0, nelx, nely).unwrap();
        let ke = build_element_stiffness(1.0, 0.3, grid.element_width, grid.element_height).unwrap();
        let params = HeavisideParams::for_grid(&grid);
        let bcs = BoundaryConditions {
            fixed_dofs: (0..=nely).flat_map(|iy| [2 * iy, 2 * iy + 1]).collect(),
            springs: vec![],
        };
        let loads = vec![PointLoad {
            node: grid.node_index(nelx, nely / 2),
            axis: Axis::Y,
            magnitude: -1.0,
        }];
        Setup { grid, ke, params, bcs, loads }
    }

    fn four_components() -> Vec<Component> {
        vec![
            Component { x0: 0.5, y0: 0.3, half_length: 0.6, t1: 0.1, t2: 0.14, t3: 0.09, theta: 0.45 },
            Component { x0: 0.55, y0: 0.7, half_length: 0.6, t1: 0.11, t2: 0.12, t3: 0.1, theta: -0.4 },
            Component { x0: 1.45, y0: 0.35, half_length: 0.55, t1: 0.12, t2: 0.1, t3: 0.13, theta: 0.25 },
            Component { x0: 1.5, y0: 0.68, half_length: 0.5, t1: 0.09, t2: 0.13, t3: 0.1, theta: 0.3 },
        ]
    }

    /// Exact state at a design: snapshot, displacement, system.
    fn analyse(s: &Setup, comps: &[Component]) -> (FieldSnapshot, Vec<f64>, crate::fe::GlobalSystem) {
        let snap = FieldSnapshot::evaluate(comps, &s.grid, 1.0, &s.params).unwrap();
        let mut sys = Assembler::new(&s.grid)
            .assemble(&s.ke, &snap.element_moduli, &s.bcs, s.params.floor())
            .unwrap();
        apply_load(&mut sys, &s.loads).unwrap();
        let u = refined_solve(&sys, &sys.load);
        (snap, u, sys)
    }

    /// Direct solve plus one step of iterative refinement, so the finite
    /// differences are not swamped by solver roundoff.
    fn refined_solve(sys: &crate::fe::GlobalSystem, f: &[f64]) -> Vec<f64> {
        let chol = crate::banded::BandedCholesky::factor(&sys.stiffness).unwrap();
        let mut u = chol.solve(f);
        let ku = sys.stiffness.mul_vec(&u);
        let r: Vec<f64> = f.iter().zip(&ku).map(|(a, b)| a - b).collect();
        let du = chol.solve(&r);
        u.iter_mut().zip(&du).for_each(|(a, b)| *a += b);
        u
    }

    fn perturbed(comps: &[Component], var: usize, h: f64) -> Vec<Component> {
        let mut out = comps.to_vec();
        let c = var / PARAMS_PER_COMPONENT;
        let mut p = out[c].params();
        p[var % PARAMS_PER_COMPONENT] += h;
        out[c] = Component::from_params(&p);
        out
    }

    /// Relative above `floor`, absolute below it.
    fn assert_matches(analytic: &[f64], fd: &[f64], tol: f64, floor_ratio: f64) {
        let gmax = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = floor_ratio * gmax;
        for (k, (a, f)) in analytic.iter().zip(fd).enumerate() {
            let scale = a.abs().max(floor);
            assert!((a - f).abs() <= tol * scale, "var {k}: analytic {a:e}, fd {f:e}");
        }
    }

    /// `λ₊ᵀ (K₊ − K₋) U₋`, which equals `lᵀ(U₊ − U₋)` exactly when
    /// `K₊ λ₊ = −l`. The matrix difference is formed element by element
    /// from the moduli, so the central difference carries no cancellation.
    fn secant_difference(s: &Setup, plus: &[Component], minus: &[Component], l: &[f64]) -> f64 {
        let (sp, _, sysp) = analyse(s, plus);
        let (sm, um, _) = analyse(s, minus);
        let neg: Vec<f64> = l.iter().map(|v| -v).collect();
        let lp = refined_solve(&sysp, &neg);
        let mut acc = 0.0;
        for e in 0..s.grid.element_count() {
            let de = sp.element_moduli[e] - sm.element_moduli[e];
            if de == 0.0 {
                continue;
            }
            let dofs = s.grid.element_dofs(e);
            let le: [f64; 8] = std::array::from_fn(|a| lp[dofs[a]]);
            let ue: [f64; 8] = std::array::from_fn(|a| um[dofs[a]]);
            acc += de * s.ke.bilinear(&le, &ue);
        }
        acc
    }

    #[test]
    fn compliance_matches_finite_differences() {
        let s = cantilever(20, 10);
        let comps = four_components();
        let (snap, u, sys) = analyse(&s, &comps);
        let ctx = SensitivityContext { grid: &s.grid, components: &comps, snapshot: &snap, ke: &s.ke, params: &s.params, e_modulus: 1.0 };
        let g = compliance_gradient(&ctx, &u).unwrap();
        assert!((g.value - dot(&sys.load, &u)).abs() < 1e-9 * g.value);
        let h = 1e-6;
        let secant: Vec<f64> = (0..28)
            .map(|v| secant_difference(&s, &perturbed(&comps, v, h), &perturbed(&comps, v, -h), &sys.load) / (2.0 * h))
            .collect();
        assert_matches(&g.values, &secant, 1e-4, 1e-8);

        // plain differences of the solved objective, limited by roundoff
        let plain: Vec<f64> = (0..28)
            .map(|v| {
                let c = |d: f64| {
                    let (_, u, sys) = analyse(&s, &perturbed(&comps, v, d));
                    dot(&sys.load, &u)
                };
                (c(h) - c(-h)) / (2.0 * h)
            })
            .collect();
        assert_matches(&g.values, &plain, 1e-3, 1e-8);
    }

    #[test]
    fn volume_matches_finite_differences() {
        let s = cantilever(20, 10);
        let comps = four_components();
        let (snap, _, _) = analyse(&s, &comps);
        let ctx = SensitivityContext { grid: &s.grid, components: &comps, snapshot: &snap, ke: &s.ke, params: &s.params, e_modulus: 1.0 };
        let g = volume_gradient(&ctx, 0.4).unwrap();
        assert!((g.value - (snap.volume_fraction - 0.4)).abs() < 1e-15);
        let h = 1e-6;
        let fd: Vec<f64> = (0..28)
            .map(|v| {
                let vol = |d: f64| FieldSnapshot::evaluate(&perturbed(&comps, v, d), &s.grid, 1.0, &s.params).unwrap().volume_fraction;
                (vol(h) - vol(-h)) / (2.0 * h)
            })
            .collect();
        assert_matches(&g.values, &fd, 1e-4, 1e-8);
    }

    #[test]
    fn interior_translation_preserves_volume() {
        let s = cantilever(40, 20);
        let comps = vec![Component { x0: 1.0, y0: 0.5, half_length: 0.5, t1: 0.15, t2: 0.15, t3: 0.15, theta: 0.0 }];
        let snap = FieldSnapshot::evaluate(&comps, &s.grid, 1.0, &s.params).unwrap();
        let ctx = SensitivityContext { grid: &s.grid, components: &comps, snapshot: &snap, ke: &s.ke, params: &s.params, e_modulus: 1.0 };
        let g = volume_gradient(&ctx, 0.4).unwrap();
        let gmax = g.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(g.values[0].abs() < 1e-10 * gmax, "{:e}", g.values[0]);
        assert!(g.values[1].abs() < 1e-10 * gmax);
    }

    #[test]
    fn untouched_component_and_scaling() {
        let s = cantilever(20, 10);
        let mut comps = four_components();
        // a tiny component buried inside another never owns a band node
        comps.push(Component { x0: 0.5, y0: 0.3, half_length: 0.05, t1: 0.02, t2: 0.02, t3: 0.02, theta: 0.45 });
        let (snap, u, _) = analyse(&s, &comps);
        let ctx = SensitivityContext { grid: &s.grid, components: &comps, snapshot: &snap, ke: &s.ke, params: &s.params, e_modulus: 1.0 };
        let g = compliance_gradient(&ctx, &u).unwrap();
        assert!(g.values[28..].iter().all(|&v| v == 0.0));
        assert!(volume_gradient(&ctx, 0.4).unwrap().values[28..].iter().all(|&v| v == 0.0));

        let u2: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        let g2 = compliance_gradient(&ctx, &u2).unwrap();
        for (a, b) in g.values.iter().zip(&g2.values) {
            assert!((4.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
        let zero = vec![0.0; u.len()];
        assert!(compliance_gradient(&ctx, &zero).unwrap().values.iter().all(|&v| v == 0.0));
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        let adj = adjoint_gradient(&ctx, &u, &neg).unwrap();
        assert_eq!(adj, g.values);
        assert!(compliance_gradient(&ctx, &u[1..]).is_err());
    }

    #[test]
    fn mechanism_matches_finite_differences() {
        let grid = GridSpec::new(2.0, 1.0, 20, 10).unwrap();
        let ke = build_element_stiffness(1.0, 0.3, grid.element_width, grid.element_height).unwrap();
        let params = HeavisideParams::for_grid(&grid);
        let n_in = grid.node_index(0, 5);
        let n_out = grid.node_index(20, 5);
        let out_dof = 2 * n_out;
        let (n_tl, n_bl) = (grid.node_index(0, 10), grid.node_index(0, 0));
        let bcs = BoundaryConditions {
            fixed_dofs: vec![2 * n_tl, 2 * n_tl + 1, 2 * n_bl, 2 * n_bl + 1],
            springs: vec![Spring { dof: 2 * n_in, stiffness: 0.1 }, Spring { dof: out_dof, stiffness: 0.1 }],
        };
        let s = Setup {
            grid,
            ke,
            params,
            bcs,
            loads: vec![PointLoad { node: n_in, axis: Axis::X, magnitude: 1.0 }],
        };
        let comps = vec![
            Component { x0: 0.5, y0: 0.75, half_length: 0.58, t1: 0.08, t2: 0.1, t3: 0.09, theta: -0.45 },
            Component { x0: 0.5, y0: 0.25, half_length: 0.58, t1: 0.08, t2: 0.1, t3: 0.09, theta: 0.45 },
            Component { x0: 1.4, y0: 0.5, half_length: 0.62, t1: 0.1, t2: 0.07, t3: 0.08, theta: 0.05 },
            Component { x0: 0.3, y0: 0.52, half_length: 0.36, t1: 0.07, t2: 0.08, t3: 0.07, theta: 0.03 },
        ];
        let (snap, u, sys) = analyse(&s, &comps);
        let mut e_out = vec![0.0; u.len()];
        e_out[out_dof] = 1.0;
        let neg: Vec<f64> = e_out.iter().map(|v| -v).collect();
        let lambda = refined_solve(&sys, &neg);
        let ctx = SensitivityContext { grid: &s.grid, components: &comps, snapshot: &snap, ke: &s.ke, params: &s.params, e_modulus: 1.0 };
        let g = mechanism_gradient(&ctx, &u, &lambda, out_dof).unwrap();
        assert!(g.values.iter().fold(0.0f64, |m, v| m.max(v.abs())) > 1e-3);
        let h = 1e-6;
        let secant: Vec<f64> = (0..28)
            .map(|v| secant_difference(&s, &perturbed(&comps, v, h), &perturbed(&comps, v, -h), &e_out) / (2.0 * h))
            .collect();
        assert_matches(&g.values, &secant, 1e-3, 1e-8);
    }
}
