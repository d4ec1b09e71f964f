use ira_mmc::cli::{run, ComparisonReport, Evaluator, RunConfig, SolverKind};
use ira_mmc::fe::{apply_load, build_element_stiffness, Assembler, GlobalSystem};
use ira_mmc::ira::{direct_solve, ira_solve, IraConfig, IraSolver};
use ira_mmc::mmc::{Component, FieldSnapshot, HeavisideParams};
use ira_mmc::problems::{build_problem, ProblemKind, ProblemSpec};
use proptest::prelude::*;

fn initial_system(spec: &ProblemSpec) -> (GlobalSystem, Vec<f64>, ira_mmc::fe::ElementStiffness) {
    let grid = &spec.grid;
    let params = HeavisideParams::for_grid(grid);
    let snap = FieldSnapshot::evaluate(&spec.initial_components, grid, spec.e_modulus, &params).unwrap();
    let ke = build_element_stiffness(1.0, spec.poisson_ratio, grid.element_width, grid.element_height).unwrap();
    let mut sys = Assembler::new(grid)
        .assemble(&ke, &snap.element_moduli, &spec.bcs, spec.e_modulus * params.floor())
        .unwrap();
    apply_load(&mut sys, &spec.loads).unwrap();
    (sys, snap.element_moduli, ke)
}

fn energy_gap(sys: &GlobalSystem, u: &[f64], exact: &[f64]) -> f64 {
    let e: Vec<f64> = u.iter().zip(exact).map(|(a, b)| a - b).collect();
    let ke = sys.stiffness.mul_vec(&e);
    let kx = sys.stiffness.mul_vec(exact);
    let num: f64 = e.iter().zip(&ke).map(|(a, b)| a * b).sum();
    let den: f64 = exact.iter().zip(&kx).map(|(a, b)| a * b).sum();
    (num / den).sqrt()
}

#[test]
fn tight_ira_matches_direct_on_every_benchmark() {
    for (kind, nx, ny) in [
        (ProblemKind::Cantilever, 40, 20),
        (ProblemKind::LShape, 40, 40),
        (ProblemKind::Mechanism, 40, 20),
    ] {
        let spec = build_problem(kind, nx, ny).unwrap();
        let (sys, moduli, ke) = initial_system(&spec);
        let exact = direct_solve(&sys, &sys.load).unwrap();
        let config = IraConfig {
            eps_star: 1e-12,
            max_cycles: 400,
            ..IraConfig::default()
        };
        let mut solver = IraSolver::new(&spec.grid, &ke, &sys.fixed, &sys.springs, config).unwrap();
        let mut u = vec![0.0; sys.dim()];
        let stats = ira_solve(&mut solver, &sys, &moduli, &mut u).unwrap();
        assert!(!stats.fell_back, "{kind}: {stats:?}");
        let gap = energy_gap(&sys, &u, &exact);
        assert!(gap < 1e-5, "{kind}: energy-norm error {gap:e}");
    }
}

#[test]
fn evaluators_agree_at_the_start() {
    for kind in [ProblemKind::Cantilever, ProblemKind::Mechanism] {
        let spec = build_problem(kind, 40, 20).unwrap();
        let mut full = Evaluator::new(spec.clone(), SolverKind::Full, 0.11, 1e-2).unwrap();
        let mut ira = Evaluator::new(spec, SolverKind::Ira, 0.11, 1e-2).unwrap();
        let x = full.design_of(&full.spec().initial_components.clone());
        let (a, b) = (full.evaluate(&x).unwrap(), ira.evaluate(&x).unwrap());
        assert!((a.objective - b.objective).abs() <= 2e-2 * a.objective.abs(), "{kind}: {} vs {}", a.objective, b.objective);
        assert_eq!(a.g, b.g);
        assert_eq!(a.dg, b.dg);
    }
}

#[test]
fn self_comparison_is_zero() {
    let mut cfg = RunConfig::new(ProblemKind::Cantilever, 20, 10, SolverKind::Full);
    cfg.max_iter = Some(5);
    let s = run(&cfg).unwrap().summary;
    let report = ComparisonReport::from_summaries(Some(s.clone()), Some(s));
    assert!(report.complete);
    assert_eq!(report.objective_pct, Some(0.0));
    assert_eq!(report.iterations_pct, Some(0.0));
    assert_eq!(report.time_pct, Some(0.0));
    let missing = ComparisonReport::from_summaries(None, report.ira.clone());
    assert!(!missing.complete && missing.render().contains("incomplete"));
}

fn jittered(base: &[Component], shifts: &[f64]) -> Vec<Component> {
    base.iter()
        .zip(shifts.chunks(4))
        .map(|(c, s)| Component {
            x0: c.x0 + 0.1 * s[0],
            y0: c.y0 + 0.1 * s[1],
            half_length: c.half_length * (1.0 + 0.3 * s[2]),
            theta: c.theta + s[3],
            ..*c
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_layouts_stay_solvable(shifts in prop::collection::vec(-1.0f64..1.0, 64)) {
        let mut spec = build_problem(ProblemKind::Cantilever, 20, 10).unwrap();
        spec.initial_components = jittered(&spec.initial_components, &shifts);
        let params = HeavisideParams::for_grid(&spec.grid);
        let snap = FieldSnapshot::evaluate(&spec.initial_components, &spec.grid, 1.0, &params).unwrap();
        prop_assert!(snap.h_nodal.iter().all(|h| (params.alpha..=1.0).contains(h)));
        let floor = params.floor();
        prop_assert!(snap.element_moduli.iter().all(|&m| m >= floor * (1.0 - 1e-12) && m <= 1.0));
        prop_assert!((params.alpha..=1.0).contains(&snap.volume_fraction));

        let (sys, _, _) = initial_system(&spec);
        let u = direct_solve(&sys, &sys.load).unwrap();
        let r = sys.residual(&u);
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(rn < 1e-6, "residual {}", rn);
        let c: f64 = sys.load.iter().zip(&u).map(|(a, b)| a * b).sum();
        prop_assert!(c > 0.0);
    }
}
