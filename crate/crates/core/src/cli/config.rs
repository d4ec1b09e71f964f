use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::problems::{build_problem, ProblemKind, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Direct factorization of the fine system every iteration.
    Full,
    Ira,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Full => "full",
            SolverKind::Ira => "ira",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(SolverKind::Full),
            "ira" => Ok(SolverKind::Ira),
            other => Err(Error::invalid(format!("unknown solver '{other}' (full or ira)"))),
        }
    }
}

/// Run parameters. Unset scalars fall back to the problem defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub nelx: usize,
    pub nely: usize,
    pub solver: SolverKind,
    pub eta: Option<f64>,
    pub eps_star: Option<f64>,
    pub delta: Option<f64>,
    pub tol_x: f64,
    pub max_iter: Option<usize>,
    /// Jitters the initial layout when set.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Snapshot cadence in iterations; first and last are always written.
    pub snapshot_every: usize,
    /// MMA move limit as a fraction of each variable's range.
    pub move_limit: f64,
}

impl RunConfig {
    pub fn new(problem: ProblemKind, nelx: usize, nely: usize, solver: SolverKind) -> Self {
        RunConfig {
            problem,
            nelx,
            nely,
            solver,
            eta: None,
            eps_star: None,
            delta: None,
            tol_x: 1e-3,
            max_iter: None,
            seed: None,
            output_dir: None,
            snapshot_every: 10,
            move_limit: 0.01,
        }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::new(ProblemKind::Cantilever, 80, 40, SolverKind::Ira);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                what: "config".into(),
                detail: format!("line {}: expected key = value", lineno + 1),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key; used for both file entries and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            value.parse::<T>().map_err(|e| Error::Parse {
                what: format!("config key '{key}'"),
                detail: format!("'{value}': {e}"),
            })
        }
        match key {
            "problem" => self.problem = value.parse()?,
            "nelx" => self.nelx = num(key, value)?,
            "nely" => self.nely = num(key, value)?,
            "solver" => self.solver = value.parse()?,
            "eta" => self.eta = Some(num(key, value)?),
            "eps_star" => self.eps_star = Some(num(key, value)?),
            "delta" => self.delta = Some(num(key, value)?),
            "tol_x" => self.tol_x = num(key, value)?,
            "max_iter" => self.max_iter = Some(num(key, value)?),
            "seed" => self.seed = Some(num(key, value)?),
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "snapshot_every" => self.snapshot_every = num(key, value)?,
            "move_limit" => self.move_limit = num(key, value)?,
            other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta", self.eta),
            ("eps_star", self.eps_star),
            ("delta", self.delta),
            ("tol_x", Some(self.tol_x)),
            ("move_limit", Some(self.move_limit)),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::invalid(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if self.move_limit > 1.0 {
            return Err(Error::invalid("move_limit is a fraction of the range, at most 1"));
        }
        if self.max_iter == Some(0) || self.snapshot_every == 0 {
            return Err(Error::invalid("max_iter and snapshot_every must be positive"));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<ProblemSpec> {
        build_problem(self.problem, self.nelx, self.nely)
    }

    /// Parameters with problem defaults filled in.
    pub fn resolved(&self, spec: &ProblemSpec) -> ResolvedParams {
        ResolvedParams {
            eta: self.eta.unwrap_or(spec.defaults.eta),
            eps_star: self.eps_star.unwrap_or(spec.defaults.eps_star),
            delta: self.delta.unwrap_or(spec.defaults.delta),
            max_iter: self.max_iter.unwrap_or(spec.defaults.max_iter),
            tol_x: self.tol_x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedParams {
    pub eta: f64,
    pub eps_star: f64,
    pub delta: f64,
    pub max_iter: usize,
    pub tol_x: f64,
}
