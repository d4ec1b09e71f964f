use std::fmt::Write as _;

use log::error;

use super::config::{RunConfig, SolverKind};
use super::history::RunSummary;
use super::run::{ensure_dir, run};
use crate::error::{Error, Result};

/// `(b − a) / a · 100`; undefined when `a` is zero.
pub fn percent_difference(a: f64, b: f64) -> Option<f64> {
    (a != 0.0).then(|| (b - a) / a * 100.0)
}

/// Formats `x` with four significant digits, without exponent notation.
pub fn four_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = 3 - magnitude;
    if decimals >= 0 {
        let s = format!("{:.*}", decimals as usize, x);
        // rounding can add a digit, e.g. 9.9996 -> 10.000
        let digits = s.chars().filter(|c| c.is_ascii_digit()).collect::<String>();
        if digits.trim_start_matches('0').len() > 4 && decimals > 0 {
            return format!("{:.*}", decimals as usize - 1, x);
        }
        s
    } else {
        let unit = 10f64.powi(-decimals);
        format!("{}", (x / unit).round() * unit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub full: Option<RunSummary>,
    pub ira: Option<RunSummary>,
    /// False when either leg aborted.
    pub complete: bool,
    pub objective_pct: Option<f64>,
    pub iterations_pct: Option<f64>,
    pub time_pct: Option<f64>,
}

impl ComparisonReport {
    pub fn from_summaries(full: Option<RunSummary>, ira: Option<RunSummary>) -> Self {
        let pct = |f: fn(&RunSummary) -> f64| match (&full, &ira) {
            (Some(a), Some(b)) => percent_difference(f(a), f(b)),
            _ => None,
        };
        ComparisonReport {
            complete: full.is_some() && ira.is_some(),
            objective_pct: pct(|s| s.objective),
            iterations_pct: pct(|s| s.iterations as f64),
            time_pct: pct(|s| s.wall_s),
            full,
            ira,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12}{:>16}{:>16}{:>12}{:>14}", "method", "objective", "constraint", "iterations", "time_s");
        for (name, s) in [("full", &self.full), ("ira", &self.ira)] {
            match s {
                Some(s) => {
                    let _ = writeln!(
                        out,
                        "{name:<12}{:>16.6e}{:>16.3e}{:>12}{:>14.3}",
                        s.objective, s.constraint, s.iterations, s.wall_s
                    );
                }
                None => {
                    let _ = writeln!(out, "{name:<12}{:>16}", "aborted");
                }
            }
        }
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{}%", four_significant(v)));
        let _ = writeln!(out, "percentage difference (ira vs full)");
        let _ = writeln!(out, "  objective  {}", fmt(self.objective_pct));
        let _ = writeln!(out, "  iterations {}", fmt(self.iterations_pct));
        let _ = writeln!(out, "  time       {}", fmt(self.time_pct));
        let _ = writeln!(out, "status = {}", if self.complete { "complete" } else { "incomplete" });
        out
    }
}

/// Runs the full and IRA legs one after the other with otherwise identical
/// settings. Each leg writes into its own subdirectory of `output_dir`.
pub fn compare(base: &RunConfig) -> Result<ComparisonReport> {
    base.validate()?;
    let mut legs = Vec::new();
    for solver in [SolverKind::Full, SolverKind::Ira] {
        let mut cfg = base.clone();
        cfg.solver = solver;
        cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(solver.as_str()));
        legs.push(match run(&cfg) {
            Ok(r) => Some(r.summary),
            Err(e) => {
                error!("{solver} run aborted: {e}");
                None
            }
        });
    }
    let ira = legs.pop().flatten();
    let full = legs.pop().flatten();
    let report = ComparisonReport::from_summaries(full, ira);
    if let Some(dir) = &base.output_dir {
        ensure_dir(dir)?;
        let path = dir.join("comparison.txt");
        std::fs::write(&path, report.render()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
