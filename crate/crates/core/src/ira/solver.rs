use std::fmt;
use std::time::Instant;

use log::{debug, warn};

use super::hierarchy::{v_cycle, TwoGridHierarchy};
use super::reanalysis::{detect_modifications, PreparedReanalysis, ReferenceFactorization};
use crate::banded::BandedCholesky;
use crate::error::{Error, Result};
use crate::fe::{ElementStiffness, GlobalSystem, GridSpec, Spring};
use crate::sparse::{dot, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IraConfig {
    /// Refactorize when `n_d / n_c` exceeds this.
    pub eta: f64,
    /// Slack tolerance on the relative energy change between cycles.
    pub eps_star: f64,
    /// Gauss–Seidel sweeps before and after the coarse correction.
    pub sweeps: usize,
    pub max_cycles: usize,
}

impl Default for IraConfig {
    fn default() -> Self {
        IraConfig {
            eta: 0.11,
            eps_star: 1e-2,
            sweeps: 2,
            max_cycles: 50,
        }
    }
}

impl IraConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !(self.eps_star > 0.0) || self.max_cycles == 0 {
            return Err(Error::invalid(format!("bad solver configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    /// Direct factorization of the fine system.
    Direct,
    /// V-cycles with a freshly factorized coarse operator.
    Refactorized,
    /// V-cycles with the coarse problem solved by reanalysis.
    Reanalysis,
}

impl SolverMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverMode::Direct => "direct",
            SolverMode::Refactorized => "refactor",
            SolverMode::Reanalysis => "reanalysis",
        }
    }
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub mode: SolverMode,
    /// Coarse DOFs modified relative to the reference; zero right after a
    /// cold start or a forced refactorization.
    pub n_d: usize,
    pub v_cycles: usize,
    /// At least one solve missed the slack tolerance and was redone directly.
    pub fell_back: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SolverStats {
    pub v_cycles: usize,
    pub refactorizations: usize,
    pub n_d_history: Vec<usize>,
    pub mode_per_call: Vec<SolverMode>,
    pub fallbacks: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub v_cycles: usize,
    pub converged: bool,
    pub last_change: f64,
}

enum Coarse {
    Reference,
    Prepared(PreparedReanalysis),
}

/// Stateful IRA solver for one fixed mesh and constraint set.
///
/// Per outer iteration call [`IraSolver::begin`] with the new element
/// moduli, then [`IraSolver::solve`] once per right-hand side, then
/// [`IraSolver::finish`].
pub struct IraSolver {
    hierarchy: TwoGridHierarchy,
    reference: Option<ReferenceFactorization>,
    coarse: Coarse,
    config: IraConfig,
    stats: SolverStats,
    outer_iter: usize,
    force_refactor: bool,
    current: Option<IterationStats>,
}

impl IraSolver {
    pub fn new(
        grid: &GridSpec,
        ke: &ElementStiffness,
        fixed: &[bool],
        springs: &[Spring],
        config: IraConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(IraSolver {
            hierarchy: TwoGridHierarchy::new(grid, ke, fixed, springs, config.sweeps)?,
            reference: None,
            coarse: Coarse::Reference,
            config,
            stats: SolverStats::default(),
            outer_iter: 0,
            force_refactor: false,
            current: None,
        })
    }

    pub fn hierarchy(&self) -> &TwoGridHierarchy {
        &self.hierarchy
    }

    pub fn reference(&self) -> Option<&ReferenceFactorization> {
        self.reference.as_ref()
    }

    pub fn stats(&self) -> &SolverStats {
        &self.stats
    }

    pub fn config(&self) -> &IraConfig {
        &self.config
    }

    /// Rebuilds the coarse operator and chooses between refactorization and
    /// reanalysis.
    pub fn begin(&mut self, moduli: &[f64]) -> Result<SolverMode> {
        let t0 = Instant::now();
        self.hierarchy.update(moduli)?;
        let k = &self.hierarchy.coarse_operator;
        let n_c = self.hierarchy.coarse_dim;

        let mut decision = None;
        let mut detected = 0;
        if let (Some(r), false) = (&self.reference, self.force_refactor) {
            let mods = detect_modifications(k, r, &[]);
            let n_d = mods.n_d();
            detected = n_d;
            if n_d as f64 / n_c as f64 > self.config.eta {
                debug!("n_d = {n_d} of {n_c}: refactorizing");
            } else if n_d == 0 {
                decision = Some((Coarse::Reference, 0));
            } else {
                match PreparedReanalysis::new(r, k, &mods) {
                    Ok(p) => decision = Some((Coarse::Prepared(p), n_d)),
                    Err(Error::ReanalysisBreakdown(_)) => {
                        warn!("reduced reanalysis system not positive definite; refactorizing")
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        let (mode, n_d) = match decision {
            Some((coarse, n_d)) => {
                self.coarse = coarse;
                (SolverMode::Reanalysis, n_d)
            }
            None => {
                self.reference = Some(ReferenceFactorization::new(k.clone(), self.outer_iter)?);
                self.coarse = Coarse::Reference;
                self.force_refactor = false;
                self.stats.refactorizations += 1;
                (SolverMode::Refactorized, detected)
            }
        };
        self.current = Some(IterationStats {
            mode,
            n_d,
            v_cycles: 0,
            fell_back: false,
        });
        self.stats.wall_time += t0.elapsed().as_secs_f64();
        Ok(mode)
    }

    /// Runs V-cycles on `K u = f` from the initial guess in `u` until the
    /// relative change of `uᵀ K u` between cycles drops below `eps_star`.
    /// If that never happens within `max_cycles`, `u` is replaced by a
    /// direct solution and the next iteration refactorizes.
    pub fn solve(&mut self, system: &GlobalSystem, f: &[f64], u: &mut [f64]) -> Result<SolveReport> {
        let t0 = Instant::now();
        let current = self
            .current
            .as_mut()
            .ok_or_else(|| Error::invalid("solve called before begin"))?;
        let k = &system.stiffness;
        let reference = &mut self.reference;
        let coarse = &self.coarse;
        let mut coarse_solve = |d: &[f64]| -> Result<Vec<f64>> {
            let r = reference.as_mut().expect("reference exists after begin");
            if !r.has_rhs() {
                r.set_reference_rhs(d);
                return Ok(r.dx_ref.clone());
            }
            Ok(match coarse {
                Coarse::Reference => r.l0.solve(d),
                Coarse::Prepared(p) => p.solve(r, d),
            })
        };

        let mut e_prev = energy(k, u);
        let mut report = SolveReport {
            v_cycles: 0,
            converged: false,
            last_change: f64::INFINITY,
        };
        for _ in 0..self.config.max_cycles {
            v_cycle(&self.hierarchy, k, f, u, &mut coarse_solve)?;
            report.v_cycles += 1;
            let e = energy(k, u);
            report.last_change = relative_change(e, e_prev);
            e_prev = e;
            if report.last_change < self.config.eps_star {
                report.converged = true;
                break;
            }
        }
        current.v_cycles += report.v_cycles;
        self.stats.v_cycles += report.v_cycles;
        if !report.converged {
            warn!(
                "no slack convergence after {} cycles (change {:.3e}); solving directly",
                report.v_cycles, report.last_change
            );
            let exact = direct_solve(system, f)?;
            u.copy_from_slice(&exact);
            current.fell_back = true;
            self.force_refactor = true;
            self.stats.fallbacks += 1;
        }
        self.stats.wall_time += t0.elapsed().as_secs_f64();
        Ok(report)
    }

    /// Closes the outer iteration and records its statistics.
    pub fn finish(&mut self) -> Result<IterationStats> {
        let cur = self
            .current
            .take()
            .ok_or_else(|| Error::invalid("finish called before begin"))?;
        self.stats.n_d_history.push(cur.n_d);
        self.stats.mode_per_call.push(cur.mode);
        self.outer_iter += 1;
        Ok(cur)
    }
}

fn energy(k: &CsrMatrix, u: &[f64]) -> f64 {
    dot(u, &k.mul_vec(u))
}

fn relative_change(e: f64, e_prev: f64) -> f64 {
    if e == e_prev {
        0.0
    } else if e == 0.0 {
        f64::INFINITY
    } else {
        ((e - e_prev) / e).abs()
    }
}

/// One outer iteration with a single right-hand side (`system.load`).
/// `u` carries the warm start in and the solution out.
pub fn ira_solve(
    solver: &mut IraSolver,
    system: &GlobalSystem,
    moduli: &[f64],
    u: &mut [f64],
) -> Result<IterationStats> {
    solver.begin(moduli)?;
    solver.solve(system, &system.load, u)?;
    solver.finish()
}

/// Reference solver: banded Cholesky of the fine system.
pub fn direct_solve(system: &GlobalSystem, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != system.dim() {
        return Err(Error::invalid("right-hand side dimension mismatch"));
    }
    Ok(BandedCholesky::factor(&system.stiffness)?.solve(f))
}
