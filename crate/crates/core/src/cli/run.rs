use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ResolvedParams, RunConfig, SolverKind};
use super::history::{format_history, format_summary, HistoryRow, RunRecord, RunSummary};
use crate::banded::BandedCholesky;
use crate::error::{Error, Result};
use crate::fe::{apply_load, build_element_stiffness, Assembler, ElementStiffness, GlobalSystem};
use crate::ira::{IraConfig, IraSolver, SolverMode};
use crate::mmc::{write_components, Component, FieldSnapshot, HeavisideParams, PARAMS_PER_COMPONENT};
use crate::optimizer::{
    check_stop, gcmma_step, mma_step, GcmmaState, MmaSettings, MmaState, OptimizerMode, StopReason,
    SwitchMonitor, VariableScaling,
};
use crate::problems::{ObjectiveKind, ProblemSpec};
use crate::sensitivity::{compliance_gradient, mechanism_gradient, volume_gradient, SensitivityContext};
use crate::sparse::dot;

/// Design evaluated at one point: objective, constraint and normalized
/// gradients plus what the history row needs.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub components: Vec<Component>,
    pub snapshot: FieldSnapshot,
    /// Objective in physical units.
    pub objective: f64,
    /// Objective as seen by the optimizer.
    pub f0: f64,
    pub g: f64,
    pub df0: Vec<f64>,
    pub dg: Vec<f64>,
    pub solver_mode: SolverMode,
    pub n_d: usize,
    pub v_cycles: usize,
}

enum Backend {
    Direct,
    Ira(Box<IraSolver>),
}

/// Geometry, analysis and sensitivities for one problem.
pub struct Evaluator {
    spec: ProblemSpec,
    ke: ElementStiffness,
    params: HeavisideParams,
    assembler: Assembler,
    scaling: VariableScaling,
    backend: Backend,
    objective_scale: f64,
    u: Vec<f64>,
    lambda: Vec<f64>,
    evaluations: usize,
}

impl Evaluator {
    pub fn new(spec: ProblemSpec, solver: SolverKind, eta: f64, eps_star: f64) -> Result<Self> {
        let grid = &spec.grid;
        let ke = build_element_stiffness(1.0, spec.poisson_ratio, grid.element_width, grid.element_height)?;
        let params = HeavisideParams::for_grid(grid);
        let assembler = Assembler::new(grid);
        let backend = match solver {
            SolverKind::Full => Backend::Direct,
            SolverKind::Ira => {
                let fixed = spec.bcs.fixed_mask(grid.dof_count())?;
                let config = IraConfig {
                    eta,
                    eps_star,
                    ..IraConfig::default()
                };
                Backend::Ira(Box::new(IraSolver::new(grid, &ke, &fixed, &spec.bcs.springs, config)?))
            }
        };
        let ndof = grid.dof_count();
        Ok(Evaluator {
            scaling: VariableScaling::for_domain(grid.domain_width, grid.domain_height),
            ke,
            params,
            assembler,
            backend,
            objective_scale: 1.0,
            u: vec![0.0; ndof],
            lambda: vec![0.0; ndof],
            evaluations: 0,
            spec,
        })
    }

    /// Replaces the default Heaviside regularization.
    pub fn with_heaviside(mut self, params: HeavisideParams) -> Result<Self> {
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn scaling(&self) -> &VariableScaling {
        &self.scaling
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn ira(&self) -> Option<&IraSolver> {
        match &self.backend {
            Backend::Ira(s) => Some(s),
            Backend::Direct => None,
        }
    }

    /// Compliance is divided by its initial magnitude so the optimizer sees
    /// values of order one; the mechanism output is already of that order.
    pub fn calibrate(&mut self, initial_objective: f64) {
        self.objective_scale = match self.spec.objective {
            ObjectiveKind::Compliance if initial_objective != 0.0 => 1.0 / initial_objective.abs(),
            _ => 1.0,
        };
    }

    pub fn objective_scale(&self) -> f64 {
        self.objective_scale
    }

    /// Normalized design vector of `components`.
    pub fn design_of(&self, components: &[Component]) -> Vec<f64> {
        let phys: Vec<f64> = components.iter().flat_map(|c| c.params()).collect();
        let mut x = self.scaling.normalize(&phys);
        self.scaling.clamp(&mut x);
        x
    }

    pub fn components_of(&self, x: &[f64]) -> Vec<Component> {
        self.scaling
            .denormalize(x)
            .chunks(PARAMS_PER_COMPONENT)
            .map(Component::from_params)
            .collect()
    }

    fn solve(&mut self, system: &GlobalSystem, moduli: &[f64]) -> Result<(SolverMode, usize, usize)> {
        let adjoint_rhs = match self.spec.objective {
            ObjectiveKind::Compliance => None,
            ObjectiveKind::OutputDisplacement { dof } => {
                let mut r = vec![0.0; system.dim()];
                r[dof] = -1.0;
                Some(r)
            }
        };
        match &mut self.backend {
            Backend::Direct => {
                let chol = BandedCholesky::factor(&system.stiffness)?;
                self.u = chol.solve(&system.load);
                if let Some(r) = adjoint_rhs {
                    self.lambda = chol.solve(&r);
                }
                Ok((SolverMode::Direct, 0, 0))
            }
            Backend::Ira(solver) => {
                solver.begin(moduli)?;
                solver.solve(system, &system.load, &mut self.u)?;
                if let Some(r) = adjoint_rhs {
                    solver.solve(system, &r, &mut self.lambda)?;
                }
                let stats = solver.finish()?;
                Ok((stats.mode, stats.n_d, stats.v_cycles))
            }
        }
    }

    pub fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation> {
        self.evaluations += 1;
        let components = self.components_of(x);
        let snapshot = FieldSnapshot::evaluate(&components, &self.spec.grid, self.spec.e_modulus, &self.params)?;
        let floor = self.spec.e_modulus * self.params.floor();
        let mut system = self
            .assembler
            .assemble(&self.ke, &snapshot.element_moduli, &self.spec.bcs, floor)?;
        apply_load(&mut system, &self.spec.loads)?;
        let (solver_mode, n_d, v_cycles) = self.solve(&system, &snapshot.element_moduli)?;

        let ctx = SensitivityContext {
            grid: &self.spec.grid,
            components: &components,
            snapshot: &snapshot,
            ke: &self.ke,
            params: &self.params,
            e_modulus: self.spec.e_modulus,
        };
        let (objective, grad) = match self.spec.objective {
            ObjectiveKind::Compliance => {
                let gv = compliance_gradient(&ctx, &self.u)?;
                (dot(&system.load, &self.u), gv.values)
            }
            ObjectiveKind::OutputDisplacement { dof } => {
                let gv = mechanism_gradient(&ctx, &self.u, &self.lambda, dof)?;
                (gv.value, gv.values)
            }
        };
        let vol = volume_gradient(&ctx, self.spec.volume_fraction_bound)?;
        let s = self.objective_scale;
        let df0 = self
            .scaling
            .normalize_gradient(&grad)
            .into_iter()
            .map(|v| v * s)
            .collect();
        Ok(Evaluation {
            f0: objective * s,
            g: vol.value,
            df0,
            dg: self.scaling.normalize_gradient(&vol.values),
            objective,
            components,
            snapshot,
            solver_mode,
            n_d,
            v_cycles,
        })
    }
}

/// Initial layout, optionally perturbed by up to 1% of each variable's
/// range.
pub fn initial_design(eval: &Evaluator, seed: Option<u64>) -> Vec<f64> {
    let mut x = eval.design_of(&eval.spec().initial_components);
    if let Some(seed) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bounds = eval.scaling().bounds(eval.spec().initial_components.len());
        for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
            *v += 0.01 * (hi - lo) * rng.random_range(-1.0..=1.0);
        }
        eval.scaling().clamp(&mut x);
    }
    x
}

struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = &self.dir {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn snapshot(&self, iter: usize, ev: &Evaluation, spec: &ProblemSpec) -> Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        let mut density = String::new();
        for row in ev.snapshot.density_rows(&spec.grid) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
            let _ = writeln!(density, "{}", line.join(" "));
        }
        self.write(&format!("density_{iter:04}.txt"), &density)?;
        self.write(&format!("components_{iter:04}.txt"), &write_components(&ev.components, &spec.grid))
    }
}

/// Runs the optimization described by `config`, writing artifacts into
/// `config.output_dir` when set.
pub fn run(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    run_problem(config.build_problem()?, config)
}

/// As [`run`], for an explicitly built problem; the problem fields of
/// `config` only label the output.
pub fn run_problem(spec: ProblemSpec, config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let params = config.resolved(&spec);
    let out = Output {
        dir: config.output_dir.clone(),
    };
    if let Some(dir) = &out.dir {
        ensure_dir(dir)?;
    }
    info!(
        "{} {}x{} solver={} eta={} eps*={} delta={}",
        config.problem, config.nelx, config.nely, config.solver, params.eta, params.eps_star, params.delta
    );
    let record = optimize(spec, config, &params, &out)?;
    out.write("history.csv", &format_history(&record.rows))?;
    out.write(
        "summary.txt",
        &format_summary(config.problem.as_str(), config.solver.as_str(), config.nelx, config.nely, &record.summary),
    )?;
    Ok(record)
}

fn optimize(spec: ProblemSpec, config: &RunConfig, p: &ResolvedParams, out: &Output) -> Result<RunRecord> {
    let clock = Instant::now();
    let mut io_time = 0.0;
    let mut eval = Evaluator::new(spec, config.solver, p.eta, p.eps_star)?;
    let mut x = initial_design(&eval, config.seed);
    let mut current = eval.evaluate(&x)?;
    eval.calibrate(current.objective);
    current.f0 = current.objective * eval.objective_scale();
    current.df0.iter_mut().for_each(|v| *v *= eval.objective_scale());

    let t = Instant::now();
    out.snapshot(0, &current, eval.spec())?;
    io_time += t.elapsed().as_secs_f64();

    let bounds = eval.scaling().bounds(eval.spec().initial_components.len());
    let settings = MmaSettings {
        move_limit: config.move_limit,
        ..MmaSettings::default()
    };
    let mut gc = GcmmaState::new(MmaState::new(bounds, settings)?);
    let mut monitor = SwitchMonitor::new(p.delta);
    monitor.record(current.objective);

    let mut rows = Vec::new();
    let mut stop_reason = StopReason::Budget;
    let mut switch_iteration = None;
    for iter in 1..=p.max_iter {
        let opt_mode = if monitor.switched {
            OptimizerMode::Gcmma
        } else {
            OptimizerMode::Mma
        };
        if opt_mode == OptimizerMode::Gcmma && switch_iteration.is_none() {
            switch_iteration = Some(iter);
        }
        let mut v_cycles = 0;
        let (x_new, next) = match opt_mode {
            OptimizerMode::Mma => {
                let step = mma_step(&x, current.f0, &current.df0, current.g, &current.dg, &mut gc.mma)?;
                let ev = eval.evaluate(&step.x_new)?;
                v_cycles += ev.v_cycles;
                (step.x_new, ev)
            }
            OptimizerMode::Gcmma => {
                let outcome = gcmma_step(&x, current.f0, &current.df0, current.g, &current.dg, &mut gc, |xt| {
                    let ev = eval.evaluate(xt)?;
                    v_cycles += ev.v_cycles;
                    Ok((ev.f0, ev.g, ev))
                })?;
                debug!(
                    "iteration {iter}: {} GCMMA inner evaluations, conservative {}, rho {:?}",
                    outcome.inner_iterations,
                    outcome.conservative,
                    outcome.rho_history.last()
                );
                (outcome.x_new, outcome.payload)
            }
        };
        let decision = check_stop(&x_new, &x, p.tol_x, iter, p.max_iter);
        x = x_new;
        current = next;
        monitor.record(current.objective);

        let wall_s = clock.elapsed().as_secs_f64() - io_time;
        rows.push(HistoryRow {
            iteration: iter,
            objective: current.objective,
            constraint: current.g,
            max_dx: decision.max_change,
            opt_mode,
            solver_mode: current.solver_mode,
            n_d: current.n_d,
            v_cycles,
            wall_s,
        });
        info!(
            "it {iter:4} C={:.6e} g={:+.3e} dx={:.2e} {} {} n_d={} cycles={}",
            current.objective, current.g, decision.max_change, opt_mode, current.solver_mode, current.n_d, v_cycles
        );

        let done = decision.stop();
        if done || iter % config.snapshot_every == 0 {
            let t = Instant::now();
            out.snapshot(iter, &current, eval.spec())?;
            io_time += t.elapsed().as_secs_f64();
        }
        if done {
            stop_reason = decision.reason.unwrap_or(StopReason::Budget);
            break;
        }
    }

    let (refactorizations, reanalysis_iterations, fallbacks) = match eval.ira() {
        Some(s) => {
            let st = s.stats();
            let reanalysis = st.mode_per_call.iter().filter(|&&m| m == SolverMode::Reanalysis).count();
            (st.refactorizations, reanalysis, st.fallbacks)
        }
        None => (eval.evaluations(), 0, 0),
    };
    if fallbacks > 0 {
        warn!("{fallbacks} solves fell back to the direct solver");
    }
    let summary = RunSummary {
        iterations: rows.len(),
        stop_reason,
        objective: current.objective,
        constraint: current.g,
        volume_fraction: current.snapshot.volume_fraction,
        wall_s: rows.last().map_or(0.0, |r| r.wall_s),
        refactorizations,
        reanalysis_iterations,
        fallbacks,
        evaluations: eval.evaluations(),
        switch_iteration,
    };
    Ok(RunRecord { rows, summary })
}

pub(crate) fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
