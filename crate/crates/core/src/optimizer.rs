//! MMA and GCMMA for one inequality constraint, the oscillation-triggered
//! switch between them, and stopping control.
//!
//! Both methods build the separable approximation
//!
//! ```text
//! f̃_i(x) = r_i + Σ_j p_ij / (U_j − x_j) + q_ij / (x_j − L_j)
//! ```
//!
//! and solve `min f̃_0 + c y + ½ d y²` subject to `f̃_1 − y ≤ 0` and the
//! move box through its one-dimensional dual. The artificial `y` keeps the
//! subproblem feasible when the constraint cannot be met within the box.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmaSettings {
    pub asymptote_init: f64,
    pub asymptote_decrease: f64,
    pub asymptote_increase: f64,
    /// Maximum step as a fraction of the variable range.
    pub move_limit: f64,
    /// Fraction of the asymptote distance kept clear by the move box.
    pub albefa: f64,
    /// Regularization added to the curvature of every approximation.
    pub raa0: f64,
    /// Penalty on the artificial variable, linear and quadratic.
    pub c: f64,
    pub d: f64,
}

impl Default for MmaSettings {
    fn default() -> Self {
        MmaSettings {
            asymptote_init: 0.5,
            asymptote_decrease: 0.7,
            asymptote_increase: 1.2,
            move_limit: 0.1,
            albefa: 0.1,
            raa0: 1e-5,
            c: 1000.0,
            d: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MmaState {
    pub lower_asymptote: Vec<f64>,
    pub upper_asymptote: Vec<f64>,
    pub x_prev: Option<Vec<f64>>,
    pub x_prev2: Option<Vec<f64>>,
    pub bounds: Vec<(f64, f64)>,
    pub settings: MmaSettings,
    pub outer_iter: usize,
}

impl MmaState {
    pub fn new(bounds: Vec<(f64, f64)>, settings: MmaSettings) -> Result<Self> {
        if bounds.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::invalid("variable bounds must be finite with min < max"));
        }
        let n = bounds.len();
        Ok(MmaState {
            lower_asymptote: vec![0.0; n],
            upper_asymptote: vec![0.0; n],
            x_prev: None,
            x_prev2: None,
            bounds,
            settings,
            outer_iter: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn update_asymptotes(&mut self, x: &[f64]) {
        let s = self.settings;
        for j in 0..x.len() {
            let range = self.bounds[j].1 - self.bounds[j].0;
            match (&self.x_prev, &self.x_prev2) {
                (Some(x1), Some(x2)) => {
                    let osc = (x[j] - x1[j]) * (x1[j] - x2[j]);
                    let factor = if osc < 0.0 {
                        s.asymptote_decrease
                    } else if osc > 0.0 {
                        s.asymptote_increase
                    } else {
                        1.0
                    };
                    let lo = x[j] - factor * (x1[j] - self.lower_asymptote[j]);
                    let up = x[j] + factor * (self.upper_asymptote[j] - x1[j]);
                    self.lower_asymptote[j] = lo.clamp(x[j] - 10.0 * range, x[j] - 0.01 * range);
                    self.upper_asymptote[j] = up.clamp(x[j] + 0.01 * range, x[j] + 10.0 * range);
                }
                _ => {
                    self.lower_asymptote[j] = x[j] - s.asymptote_init * range;
                    self.upper_asymptote[j] = x[j] + s.asymptote_init * range;
                }
            }
        }
    }

    fn advance(&mut self, x: &[f64]) {
        self.x_prev2 = self.x_prev.take();
        self.x_prev = Some(x.to_vec());
        self.outer_iter += 1;
    }

    fn check(&self, x: &[f64], grads: [&[f64]; 2]) -> Result<()> {
        let n = self.dim();
        if x.len() != n || grads.iter().any(|g| g.len() != n) {
            return Err(Error::invalid("design and gradient lengths differ from the bounds"));
        }
        Ok(())
    }
}

/// Convex separable subproblem around a design point.
#[derive(Debug, Clone)]
pub struct MmaSubproblem {
    pub x0: Vec<f64>,
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Objective (index 0) and constraint (index 1) coefficients.
    pub p: [Vec<f64>; 2],
    pub q: [Vec<f64>; 2],
    pub r: [f64; 2],
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub y: f64,
}

impl MmaSubproblem {
    /// `rho[i]` is the curvature regularization of function `i`.
    fn build(state: &MmaState, x: &[f64], f: [f64; 2], df: [&[f64]; 2], rho: [f64; 2]) -> Self {
        let s = state.settings;
        let n = x.len();
        let (low, upp) = (state.lower_asymptote.clone(), state.upper_asymptote.clone());
        let mut alpha = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p = [vec![0.0; n], vec![0.0; n]];
        let mut q = [vec![0.0; n], vec![0.0; n]];
        let mut r = f;
        for j in 0..n {
            let (xmin, xmax) = state.bounds[j];
            let range = xmax - xmin;
            alpha[j] = xmin
                .max(low[j] + s.albefa * (x[j] - low[j]))
                .max(x[j] - s.move_limit * range);
            beta[j] = xmax
                .min(upp[j] - s.albefa * (upp[j] - x[j]))
                .min(x[j] + s.move_limit * range);
            let ux = upp[j] - x[j];
            let xl = x[j] - low[j];
            for i in 0..2 {
                let g = df[i][j];
                let (gp, gm) = (g.max(0.0), (-g).max(0.0));
                p[i][j] = ux * ux * (1.001 * gp + 0.001 * gm + rho[i] / range);
                q[i][j] = xl * xl * (0.001 * gp + 1.001 * gm + rho[i] / range);
                r[i] -= p[i][j] / ux + q[i][j] / xl;
            }
        }
        MmaSubproblem {
            x0: x.to_vec(),
            low,
            upp,
            alpha,
            beta,
            p,
            q,
            r,
            c: s.c,
            d: s.d,
        }
    }

    /// `f̃_i(x)`.
    pub fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.r[i]
            + x.iter()
                .enumerate()
                .map(|(j, &xj)| self.p[i][j] / (self.upp[j] - xj) + self.q[i][j] / (xj - self.low[j]))
                .sum::<f64>()
    }

    fn x_of(&self, lambda: f64) -> Vec<f64> {
        (0..self.x0.len())
            .map(|j| {
                let pp = (self.p[0][j] + lambda * self.p[1][j]).sqrt();
                let qq = (self.q[0][j] + lambda * self.q[1][j]).sqrt();
                let x = if pp + qq > 0.0 {
                    (self.low[j] * pp + self.upp[j] * qq) / (pp + qq)
                } else {
                    self.x0[j]
                };
                x.clamp(self.alpha[j], self.beta[j])
            })
            .collect()
    }

    fn y_of(&self, lambda: f64) -> f64 {
        ((lambda - self.c) / self.d).max(0.0)
    }

    fn dual_slope(&self, lambda: f64) -> f64 {
        self.value(1, &self.x_of(lambda)) - self.y_of(lambda)
    }

    /// Maximizes the concave dual by bisection on its monotone slope.
    pub fn solve(&self) -> SubproblemSolution {
        let finish = |lambda: f64| SubproblemSolution {
            x: self.x_of(lambda),
            lambda,
            y: self.y_of(lambda),
        };
        if self.dual_slope(0.0) <= 0.0 {
            return finish(0.0);
        }
        let mut hi = 1.0;
        while self.dual_slope(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e30 {
                return finish(hi);
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.dual_slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        finish(0.5 * (lo + hi))
    }

    /// Largest scaled violation of the subproblem's optimality conditions:
    /// stationarity in `x` (sign-aware at the box), stationarity in `y`,
    /// primal feasibility and complementarity.
    pub fn kkt_residual(&self, sol: &SubproblemSolution) -> f64 {
        let lam = sol.lambda;
        let mut worst: f64 = 0.0;
        for j in 0..sol.x.len() {
            let x = sol.x[j];
            let ux = self.upp[j] - x;
            let xl = x - self.low[j];
            let pp = self.p[0][j] + lam * self.p[1][j];
            let qq = self.q[0][j] + lam * self.q[1][j];
            let grad = pp / (ux * ux) - qq / (xl * xl);
            let scale = pp / (ux * ux) + qq / (xl * xl) + 1e-300;
            let width = self.beta[j] - self.alpha[j];
            let at_lo = x - self.alpha[j] <= 1e-12 * width;
            let at_hi = self.beta[j] - x <= 1e-12 * width;
            let v = if at_lo && at_hi {
                0.0
            } else if at_lo {
                (-grad).max(0.0)
            } else if at_hi {
                grad.max(0.0)
            } else {
                grad.abs()
            };
            worst = worst.max(v / scale);
        }
        let g = self.value(1, &sol.x) - sol.y;
        let gscale = self.r[1].abs().max(1.0);
        worst = worst.max(g.max(0.0) / gscale);
        worst = worst.max((lam * g).abs() / (gscale * lam.max(1.0)));
        let dy = self.c + self.d * sol.y - lam;
        worst = worst.max((-dy).max(0.0) / self.c).max((sol.y * dy).abs() / self.c);
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmaStep {
    pub x_new: Vec<f64>,
    pub lambda: f64,
    /// The artificial variable had to absorb constraint violation.
    pub relaxed: bool,
}

/// One MMA iteration from `x` with objective `f0`, constraint `g ≤ 0` and
/// their gradients.
pub fn mma_step(
    x: &[f64],
    f0: f64,
    grad_f0: &[f64],
    g: f64,
    grad_g: &[f64],
    state: &mut MmaState,
) -> Result<MmaStep> {
    state.check(x, [grad_f0, grad_g])?;
    state.update_asymptotes(x);
    let raa0 = state.settings.raa0;
    let sub = MmaSubproblem::build(state, x, [f0, g], [grad_f0, grad_g], [raa0, raa0]);
    let sol = sub.solve();
    state.advance(x);
    Ok(MmaStep {
        relaxed: sol.y > 0.0,
        lambda: sol.lambda,
        x_new: sol.x,
    })
}

#[derive(Debug, Clone)]
pub struct GcmmaState {
    pub mma: MmaState,
    /// Current conservativeness of the objective and constraint
    /// approximations.
    pub rho0: f64,
    pub rho_i: f64,
    pub inner_iter_cap: usize,
    pub rho_min: f64,
}

impl GcmmaState {
    pub fn new(mma: MmaState) -> Self {
        GcmmaState {
            mma,
            rho0: 1e-5,
            rho_i: 1e-5,
            inner_iter_cap: 15,
            rho_min: 1e-5,
        }
    }

    fn initial_rho(&self, grad: &[f64]) -> f64 {
        let n = grad.len() as f64;
        let s: f64 = grad
            .iter()
            .zip(&self.mma.bounds)
            .map(|(g, (lo, hi))| g.abs() * (hi - lo))
            .sum();
        (0.1 * s / n).max(self.rho_min)
    }
}

#[derive(Debug, Clone)]
pub struct GcmmaOutcome<T> {
    pub x_new: Vec<f64>,
    pub f0: f64,
    pub g: f64,
    /// Whatever the evaluator returned at `x_new`.
    pub payload: T,
    pub inner_iterations: usize,
    /// False when the inner cap was hit before the approximations became
    /// conservative.
    pub conservative: bool,
    /// `(ρ0, ρ1)` of each inner iteration, in order.
    pub rho_history: Vec<(f64, f64)>,
    /// Approximated `(f̃0, f̃1)` at `x_new`.
    pub approx: (f64, f64),
}

/// One GCMMA outer iteration. `eval` returns `(f0, g, payload)` at a trial
/// point; the last evaluation is handed back so the caller can reuse it.
#[allow(clippy::too_many_arguments)]
pub fn gcmma_step<T, F>(
    x: &[f64],
    f0: f64,
    grad_f0: &[f64],
    g: f64,
    grad_g: &[f64],
    state: &mut GcmmaState,
    mut eval: F,
) -> Result<GcmmaOutcome<T>>
where
    F: FnMut(&[f64]) -> Result<(f64, f64, T)>,
{
    state.mma.check(x, [grad_f0, grad_g])?;
    state.mma.update_asymptotes(x);
    let mut rho = [state.initial_rho(grad_f0), state.initial_rho(grad_g)];
    let mut history = Vec::new();
    let mut inner = 0;
    loop {
        history.push((rho[0], rho[1]));
        let sub = MmaSubproblem::build(&state.mma, x, [f0, g], [grad_f0, grad_g], rho);
        let sol = sub.solve();
        let (f_new, g_new, payload) = eval(&sol.x)?;
        inner += 1;
        let approx = [sub.value(0, &sol.x), sub.value(1, &sol.x)];
        let actual = [f_new, g_new];
        let tol = |v: f64| 1e-10 * v.abs().max(1.0);
        let conservative = (0..2).all(|i| approx[i] + tol(actual[i]) >= actual[i]);
        if conservative || inner >= state.inner_iter_cap {
            if !conservative {
                log::warn!("GCMMA inner loop capped at {inner} iterations without conservativeness");
            }
            state.rho0 = rho[0];
            state.rho_i = rho[1];
            state.mma.advance(x);
            return Ok(GcmmaOutcome {
                x_new: sol.x,
                f0: f_new,
                g: g_new,
                payload,
                inner_iterations: inner,
                conservative,
                rho_history: history,
                approx: (approx[0], approx[1]),
            });
        }
        let dist: f64 = (0..x.len())
            .map(|j| {
                let (lo, up) = (sub.low[j], sub.upp[j]);
                let xh = sol.x[j];
                let range = state.mma.bounds[j].1 - state.mma.bounds[j].0;
                (up - lo) * (xh - x[j]).powi(2) / ((up - xh) * (xh - lo) * range)
            })
            .sum();
        for i in 0..2 {
            if approx[i] + tol(actual[i]) < actual[i] && dist > 0.0 {
                let delta = (actual[i] - approx[i]) / dist;
                rho[i] = (1.1 * (rho[i] + delta)).min(10.0 * rho[i]);
            }
        }
    }
}

/// Symmetric relative change `(a − b) / ((|a| + |b|) / 2)`.
fn symmetric_change(a: f64, b: f64) -> f64 {
    let den = 0.5 * (a.abs() + b.abs());
    if den == 0.0 {
        0.0
    } else {
        (a - b) / den
    }
}

/// One-way MMA to GCMMA latch driven by objective oscillation.
#[derive(Debug, Clone)]
pub struct SwitchMonitor {
    pub f_hist: VecDeque<f64>,
    pub delta: f64,
    pub switched: bool,
    /// Number of objective values recorded when the latch closed.
    pub switched_at: Option<usize>,
    recorded: usize,
}

impl SwitchMonitor {
    pub fn new(delta: f64) -> Self {
        SwitchMonitor {
            f_hist: VecDeque::with_capacity(3),
            delta,
            switched: false,
            switched_at: None,
            recorded: 0,
        }
    }

    /// Adds an objective value and latches if the criterion holds.
    pub fn record(&mut self, f0: f64) -> bool {
        if self.f_hist.len() == 3 {
            self.f_hist.pop_front();
        }
        self.f_hist.push_back(f0);
        self.recorded += 1;
        if !self.switched && should_switch(self) {
            self.switched = true;
            self.switched_at = Some(self.recorded);
        }
        self.switched
    }
}

/// True when the product of the last two symmetric relative objective
/// changes lies strictly inside `(−δ, 0)`, or the monitor already latched.
pub fn should_switch(monitor: &SwitchMonitor) -> bool {
    if monitor.switched {
        return true;
    }
    if monitor.f_hist.len() < 3 {
        return false;
    }
    let (a, b, c) = (monitor.f_hist[0], monitor.f_hist[1], monitor.f_hist[2]);
    let product = symmetric_change(a, b) * symmetric_change(b, c);
    -monitor.delta < product && product < 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Budget,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::Budget => "budget",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopDecision {
    pub reason: Option<StopReason>,
    pub max_change: f64,
}

impl StopDecision {
    pub fn stop(&self) -> bool {
        self.reason.is_some()
    }
}

pub fn max_change(x_new: &[f64], x_old: &[f64]) -> f64 {
    x_new
        .iter()
        .zip(x_old)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Stops when every normalized variable moved less than `tol`, or when
/// `iter` reached `max_iter`.
pub fn check_stop(x_new: &[f64], x_old: &[f64], tol: f64, iter: usize, max_iter: usize) -> StopDecision {
    let m = max_change(x_new, x_old);
    let reason = if m < tol {
        Some(StopReason::Converged)
    } else if iter >= max_iter {
        Some(StopReason::Budget)
    } else {
        None
    };
    StopDecision { reason, max_change: m }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerMode {
    Mma,
    Gcmma,
}

impl OptimizerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerMode::Mma => "mma",
            OptimizerMode::Gcmma => "gcmma",
        }
    }
}

impl fmt::Display for OptimizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps physical component parameters to comparable normalized units:
/// positions and lengths by the domain size, angles by π.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableScaling {
    scale: [f64; 7],
    bounds: [(f64, f64); 7],
}

impl VariableScaling {
    /// Bounds: centre inside the domain, `t_min ≤ L ≤ max(DW, DH)`,
    /// `t_min ≤ t ≤ 0.2 DH`, `|θ| ≤ π/2`, with `t_min = 0.01 min(DW, DH)`.
    pub fn for_domain(dw: f64, dh: f64) -> Self {
        let t_min = 0.01 * dw.min(dh);
        let scale = [dw, dh, dw, dh, dh, dh, PI];
        let phys = [
            (0.0, dw),
            (0.0, dh),
            (t_min, dw.max(dh)),
            (t_min, 0.2 * dh),
            (t_min, 0.2 * dh),
            (t_min, 0.2 * dh),
            (-PI / 2.0, PI / 2.0),
        ];
        let bounds = std::array::from_fn(|k| (phys[k].0 / scale[k], phys[k].1 / scale[k]));
        VariableScaling { scale, bounds }
    }

    pub fn t_min(&self) -> f64 {
        self.bounds[3].0 * self.scale[3]
    }

    pub fn normalize(&self, physical: &[f64]) -> Vec<f64> {
        physical.iter().enumerate().map(|(i, v)| v / self.scale[i % 7]).collect()
    }

    pub fn denormalize(&self, normalized: &[f64]) -> Vec<f64> {
        normalized.iter().enumerate().map(|(i, v)| v * self.scale[i % 7]).collect()
    }

    /// Chain rule for gradients taken with respect to physical values.
    pub fn normalize_gradient(&self, grad: &[f64]) -> Vec<f64> {
        grad.iter().enumerate().map(|(i, g)| g * self.scale[i % 7]).collect()
    }

    pub fn bounds(&self, n_components: usize) -> Vec<(f64, f64)> {
        (0..7 * n_components).map(|i| self.bounds[i % 7]).collect()
    }

    /// Clamps a normalized design into the box.
    pub fn clamp(&self, normalized: &mut [f64]) {
        for (i, v) in normalized.iter_mut().enumerate() {
            let (lo, hi) = self.bounds[i % 7];
            *v = v.clamp(lo, hi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad_state(x0: f64) -> (MmaState, Vec<f64>) {
        let st = MmaState::new(vec![(-10.0, 10.0)], MmaSettings::default()).unwrap();
        (st, vec![x0])
    }

    #[test]
    fn one_variable_descent_to_optimum() {
        for &x0 in &[3.0] {
            let (mut st, mut x) = quad_state(x0);
            let f = |x: f64| (x - 1.0).powi(2);
            let mut prev = f(x[0]);
            for _ in 0..60 {
                if prev < 1e-12 {
                    break;
                }
                let df = [2.0 * (x[0] - 1.0)];
                // inactive constraint
                let step = mma_step(&x, f(x[0]), &df, -1.0, &[0.0], &mut st).unwrap();
                assert!(f(step.x_new[0]) <= prev, "from {x0}: {} after {}", f(step.x_new[0]), prev);
                prev = f(step.x_new[0]);
                x = step.x_new;
            }
            assert!((x[0] - 1.0).abs() < 1e-6, "x = {}", x[0]);
        }
    }

    fn random_subproblem(seed: u64, n: usize) -> (MmaState, Vec<f64>, [Vec<f64>; 2], [f64; 2]) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let bounds = vec![(0.0, 1.0); n];
        let mut st = MmaState::new(bounds, MmaSettings::default()).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.9)).collect();
        let df0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dg: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        st.update_asymptotes(&x);
        (st, x, [df0, dg], [1.0, rng.random_range(-0.05..0.2)])
    }

    #[test]
    fn dual_solution_satisfies_kkt() {
        for seed in 0..20 {
            let (st, x, df, f) = random_subproblem(seed, 12);
            let sub = MmaSubproblem::build(&st, &x, f, [&df[0], &df[1]], [1e-5, 1e-5]);
            let sol = sub.solve();
            assert!(sub.kkt_residual(&sol) < 1e-8, "seed {seed}: {}", sub.kkt_residual(&sol));
        }
    }

    #[test]
    fn approximation_interpolates_at_expansion_point() {
        let (st, x, df, f) = random_subproblem(3, 5);
        let sub = MmaSubproblem::build(&st, &x, f, [&df[0], &df[1]], [1e-5, 1e-5]);
        assert!((sub.value(0, &x) - f[0]).abs() < 1e-12);
        assert!((sub.value(1, &x) - f[1]).abs() < 1e-12);
    }

    #[test]
    fn infeasible_constraint_is_relaxed() {
        let mut st = MmaState::new(vec![(0.0, 1.0); 2], MmaSettings::default()).unwrap();
        // g = 5 + x0 + x1 cannot be made non-positive within the box
        let step = mma_step(&[0.5, 0.5], 0.0, &[0.0, 0.0], 6.0, &[1.0, 1.0], &mut st).unwrap();
        assert!(step.relaxed);
        assert!(step.x_new.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn gcmma_conservative_first_trial_is_one_step() {
        let mut st = GcmmaState::new(MmaState::new(vec![(-10.0, 10.0)], MmaSettings::default()).unwrap());
        // linear objective is over-approximated by any MMA model
        let out = gcmma_step(&[2.0], 2.0, &[1.0], -1.0, &[0.0], &mut st, |x: &[f64]| Ok((x[0], -1.0, ()))).unwrap();
        assert_eq!(out.inner_iterations, 1);
        assert!(out.conservative);
        assert!(out.x_new[0] < 2.0);
    }

    #[test]
    fn gcmma_raises_rho_until_conservative() {
        let mut st = GcmmaState::new(MmaState::new(vec![(-10.0, 10.0); 2], MmaSettings::default()).unwrap());
        st.rho_min = 1e-12;
        // strongly curved objective with tiny gradient at x: initial rho is tiny
        let f = |x: &[f64]| 50.0 * ((x[0] - 1.0).powi(2) + (x[1] + 1.0).powi(2));
        let x = [1.0001, -0.9999];
        let g = [100.0 * (x[0] - 1.0), 100.0 * (x[1] + 1.0)];
        let out = gcmma_step(&x, f(&x), &g, -1.0, &[0.0, 0.0], &mut st, |x: &[f64]| Ok((f(x), -1.0, ()))).unwrap();
        assert!(out.conservative);
        assert!(out.approx.0 >= out.f0 - 1e-10);
        let rhos: Vec<f64> = out.rho_history.iter().map(|r| r.0).collect();
        assert!(rhos.windows(2).all(|w| w[1] > w[0]), "{rhos:?}");
    }

    #[test]
    fn gcmma_fixed_point() {
        let mut st = GcmmaState::new(MmaState::new(vec![(-1.0, 1.0)], MmaSettings::default()).unwrap());
        let out = gcmma_step(&[0.0], 0.0, &[0.0], -1.0, &[0.0], &mut st, |x: &[f64]| Ok((x[0] * x[0], -1.0, ()))).unwrap();
        assert_eq!(out.x_new, vec![0.0]);
        assert_eq!(out.inner_iterations, 1);
    }

    fn monitor(vals: &[f64], delta: f64) -> SwitchMonitor {
        let mut m = SwitchMonitor::new(delta);
        for &v in vals {
            m.f_hist.push_back(v);
        }
        m
    }

    #[test]
    fn switch_arithmetic() {
        assert!(!should_switch(&monitor(&[100.0, 100.0, 100.0], 0.002)));
        assert!(should_switch(&monitor(&[10.0, 9.999, 10.0], 0.002)));
        assert!(!should_switch(&monitor(&[10.0, 8.0, 9.0], 0.002)));
        assert!(!should_switch(&monitor(&[10.0, 9.0], 0.002)));
        // monotone decrease gives a positive product
        assert!(!should_switch(&monitor(&[10.0, 9.0, 8.5], 0.002)));
        // negative objectives
        assert!(should_switch(&monitor(&[-0.5, -0.5001, -0.5], 0.002)));
    }

    #[test]
    fn switch_latches() {
        let mut m = SwitchMonitor::new(0.002);
        let seq = [10.0, 9.0, 8.0, 8.001, 8.0, 7.0, 6.0, 5.0];
        let modes: Vec<bool> = seq.iter().map(|&v| m.record(v)).collect();
        assert_eq!(modes, vec![false, false, false, true, true, true, true, true]);
        assert_eq!(m.switched_at, Some(4));
    }

    #[test]
    fn stop_rules() {
        let d = check_stop(&[0.0005], &[0.0], 1e-3, 3, 600);
        assert_eq!(d.reason, Some(StopReason::Converged));
        let d = check_stop(&[0.005], &[0.0], 1e-3, 600, 600);
        assert_eq!(d.reason, Some(StopReason::Budget));
        let d = check_stop(&[0.005], &[0.0], 1e-3, 10, 600);
        assert!(!d.stop());
    }

    #[test]
    fn scaling_roundtrip() {
        let s = VariableScaling::for_domain(2.0, 1.0);
        let p = [1.0, 0.5, 0.7, 0.05, 0.06, 0.07, 0.4];
        let back = s.denormalize(&s.normalize(&p));
        for (a, b) in p.iter().zip(&back) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((s.t_min() - 0.01).abs() < 1e-15);
        let b = s.bounds(2);
        assert_eq!(b.len(), 14);
        assert_eq!(b[6], (-0.5, 0.5));
    }

    proptest! {
        #[test]
        fn iterates_stay_inside_box_and_asymptotes(seed in 0u64..500, steps in 1usize..6) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 6;
            let bounds: Vec<(f64, f64)> = (0..n).map(|_| { let lo = rng.random_range(-2.0..0.0); (lo, lo + rng.random_range(0.5..3.0)) }).collect();
            let mut st = MmaState::new(bounds.clone(), MmaSettings::default()).unwrap();
            let mut x: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
            for _ in 0..steps {
                let df: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let dg: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let step = mma_step(&x, 1.0, &df, rng.random_range(-0.1..0.1), &dg, &mut st).unwrap();
                for j in 0..n {
                    prop_assert!(step.x_new[j] >= bounds[j].0 && step.x_new[j] <= bounds[j].1);
                    prop_assert!(st.lower_asymptote[j] < step.x_new[j] && step.x_new[j] < st.upper_asymptote[j]);
                }
                x = step.x_new;
            }
        }
    }
}
