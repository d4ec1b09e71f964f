use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ira::SolverMode;
use crate::optimizer::{OptimizerMode, StopReason};

pub const HISTORY_HEADER: &str =
    "iteration,objective,constraint,max_dx,opt_mode,solver_mode,n_d,v_cycles,wall_s";

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub objective: f64,
    pub constraint: f64,
    pub max_dx: f64,
    pub opt_mode: OptimizerMode,
    pub solver_mode: SolverMode,
    pub n_d: usize,
    pub v_cycles: usize,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub objective: f64,
    pub constraint: f64,
    pub volume_fraction: f64,
    pub wall_s: f64,
    pub refactorizations: usize,
    pub reanalysis_iterations: usize,
    pub fallbacks: usize,
    pub evaluations: usize,
    /// First iteration run in GCMMA mode.
    pub switch_iteration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<HistoryRow>,
    pub summary: RunSummary,
}

pub fn format_history(rows: &[HistoryRow]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.objective,
            r.constraint,
            r.max_dx,
            r.opt_mode,
            r.solver_mode,
            r.n_d,
            r.v_cycles,
            r.wall_s
        );
    }
    out
}

pub fn parse_history(text: &str) -> Result<Vec<HistoryRow>> {
    let bad = |detail: String| Error::Parse {
        what: "history".into(),
        detail,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(HISTORY_HEADER) {
        return Err(bad("missing or unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(format!("row {} has {} fields", i + 1, f.len())));
        }
        let e = |what: &str| bad(format!("row {}: bad {what}", i + 1));
        rows.push(HistoryRow {
            iteration: f[0].parse().map_err(|_| e("iteration"))?,
            objective: f[1].parse().map_err(|_| e("objective"))?,
            constraint: f[2].parse().map_err(|_| e("constraint"))?,
            max_dx: f[3].parse().map_err(|_| e("max_dx"))?,
            opt_mode: match f[4] {
                "mma" => OptimizerMode::Mma,
                "gcmma" => OptimizerMode::Gcmma,
                _ => return Err(e("opt_mode")),
            },
            solver_mode: match f[5] {
                "direct" => SolverMode::Direct,
                "refactor" => SolverMode::Refactorized,
                "reanalysis" => SolverMode::Reanalysis,
                _ => return Err(e("solver_mode")),
            },
            n_d: f[6].parse().map_err(|_| e("n_d"))?,
            v_cycles: f[7].parse().map_err(|_| e("v_cycles"))?,
            wall_s: f[8].parse().map_err(|_| e("wall_s"))?,
        });
    }
    Ok(rows)
}

pub fn format_summary(problem: &str, solver: &str, nelx: usize, nely: usize, s: &RunSummary) -> String {
    let switch = s.switch_iteration.map_or("none".to_string(), |v| v.to_string());
    format!(
        "problem = {problem}\nsolver = {solver}\nnelx = {nelx}\nnely = {nely}\n\
         iterations = {}\nstop_reason = {}\nobjective = {}\nconstraint = {}\n\
         volume_fraction = {}\nwall_s = {}\nrefactorizations = {}\n\
         reanalysis_iterations = {}\nfallbacks = {}\nevaluations = {}\nswitch_iteration = {switch}\n",
        s.iterations,
        s.stop_reason,
        s.objective,
        s.constraint,
        s.volume_fraction,
        s.wall_s,
        s.refactorizations,
        s.reanalysis_iterations,
        s.fallbacks,
        s.evaluations,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_roundtrip() {
        let rows = vec![
            HistoryRow {
                iteration: 1,
                objective: 75.37123456789,
                constraint: -1.2e-3,
                max_dx: 0.1,
                opt_mode: OptimizerMode::Mma,
                solver_mode: SolverMode::Refactorized,
                n_d: 0,
                v_cycles: 3,
                wall_s: 0.012345,
            },
            HistoryRow {
                iteration: 2,
                objective: -0.79,
                constraint: 1e-17,
                max_dx: 3.3e-4,
                opt_mode: OptimizerMode::Gcmma,
                solver_mode: SolverMode::Reanalysis,
                n_d: 57,
                v_cycles: 2,
                wall_s: 1.5,
            },
        ];
        let text = format_history(&rows);
        assert!(text.starts_with(HISTORY_HEADER));
        assert_eq!(parse_history(&text).unwrap(), rows);
        assert!(parse_history("iteration,objective\n").is_err());
    }
}
