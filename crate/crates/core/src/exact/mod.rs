//! Exact solution through a time-expanded binary program and an external MIP
//! solver.
//!
//! Variables are named `P_t_a_v_w` (AGV `a` uses edge `(v, w)` during step
//! `t`), `L_t_a_j` and `U_t_a_j` (AGV `a` loads or unloads job `j` during step
//! `t`). Rows are named `eqK_<indices>` after their constraint tag. The model
//! is written as an LP file, a heuristic plan is passed as a MIP start, and the
//! solver's solution file is read back into a [`Solution`].
//!
//! The solver is run as
//! `cbc {model} -sec {limit} -mipstart {start} -solve -solu {solution}`; the
//! template can be replaced through [`SolverCommand::parse`] or the
//! `AGV_SOLVER_CMD` environment variable.

mod bridge;
mod lp;
mod model;

use std::io;
use std::path::Path;
use std::process::Command;

use thiserror::Error;

use crate::heuristics::{base_schedule, Assigner, HeuristicError, OnlineState};
use crate::instance::{AgvId, Instance, JobId};
use crate::solution::{verify, Solution, Violation};

pub use bridge::{encode, import_solution, warm_start_from};
pub use lp::{parse_solution, write_lp, write_start, SolveStatus, SolverOutput};
pub use model::{build_mip, MipModel, Row, Sense, Var};

pub const SOLVER_ENV: &str = "AGV_SOLVER_CMD";
pub const DEFAULT_TEMPLATE: &str = "cbc {model} -sec {limit} -mipstart {start} -solve -solu {solution}";

#[derive(Debug, Error)]
pub enum ExactError {
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error("plan needs {needed} steps but the model has {model}")]
    HorizonTooShort { needed: usize, model: usize },
    #[error("no model variable for {0}")]
    UnknownVariable(String),
    #[error("agv {agv} does not follow an edge at step {time}")]
    NotAnEdge { agv: AgvId, time: usize },
    #[error("warm start violates rows: {}", .0.join(", "))]
    WarmStartRejected(Vec<String>),
    #[error("variable {name} has fractional value {value}")]
    Fractional { name: String, value: f64 },
    #[error("agv {agv} does not use exactly one edge at step {time}")]
    PositionCount { time: usize, agv: AgvId },
    #[error("job {0} is handled by more than one agv")]
    SplitJob(JobId),
    #[error("job {0} is loaded or unloaded more than once")]
    RepeatedAction(JobId),
    #[error("solver executable `{0}` not found")]
    SolverMissing(String),
    #[error("solver command is empty")]
    EmptyCommand,
    #[error("solver produced no usable solution: {0}")]
    SolverOutput(String),
    #[error("imported solution fails verification: {0:?}")]
    ImportInfeasible(Vec<Violation>),
    #[error("model is infeasible")]
    Infeasible,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ExactError {
    /// Whether the error comes from the environment rather than the input.
    pub fn is_environment(&self) -> bool {
        matches!(self, ExactError::SolverMissing(_) | ExactError::EmptyCommand | ExactError::Io(_))
    }
}

/// Argument template for the solver executable. Placeholders: `{model}`,
/// `{limit}`, `{start}` and `{solution}`. The word before `{start}` is
/// dropped together with it when no start is given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverCommand {
    words: Vec<String>,
}

impl SolverCommand {
    pub fn parse(template: &str) -> Result<Self, ExactError> {
        let words: Vec<String> = template.split_whitespace().map(str::to_string).collect();
        if words.is_empty() {
            return Err(ExactError::EmptyCommand);
        }
        Ok(Self { words })
    }

    /// `AGV_SOLVER_CMD` if set, the CBC template otherwise. A value without
    /// placeholders names the program only.
    pub fn from_env() -> Result<Self, ExactError> {
        match std::env::var(SOLVER_ENV) {
            Ok(t) if !t.trim().is_empty() => Self::for_program(t.trim()),
            _ => Self::parse(DEFAULT_TEMPLATE),
        }
    }

    /// Uses `program` with the default argument layout.
    pub fn for_program(program: &str) -> Result<Self, ExactError> {
        if program.contains('{') {
            return Self::parse(program);
        }
        let rest = DEFAULT_TEMPLATE.split_once(' ').map_or("", |x| x.1);
        Self::parse(&format!("{program} {rest}"))
    }

    pub fn program(&self) -> &str {
        &self.words[0]
    }

    fn args(&self, model: &Path, limit: f64, start: Option<&Path>, solution: &Path) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for w in &self.words[1..] {
            if w.contains("{start}") {
                match start {
                    Some(p) => out.push(w.replace("{start}", &p.display().to_string())),
                    None => {
                        out.pop();
                    }
                }
                continue;
            }
            out.push(
                w.replace("{model}", &model.display().to_string())
                    .replace("{limit}", &format!("{limit}"))
                    .replace("{solution}", &solution.display().to_string()),
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalStatus {
    Optimal,
    FeasibleIncumbent,
    Infeasible,
    TimeoutNoIncumbent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalResult {
    pub status: ExternalStatus,
    pub objective: Option<f64>,
    pub values: Vec<(String, f64)>,
}

/// Writes the model (and optional start) to a temporary directory, runs the
/// solver and parses its solution file.
pub fn solve_external(lp_text: &str, start: Option<&str>, command: &SolverCommand, time_limit_s: f64) -> Result<ExternalResult, ExactError> {
    let dir = tempfile::tempdir()?;
    let model_path = dir.path().join("model.lp");
    let start_path = dir.path().join("start.sol");
    let sol_path = dir.path().join("solution.sol");
    std::fs::write(&model_path, lp_text)?;
    if let Some(s) = start {
        std::fs::write(&start_path, s)?;
    }
    let args = command.args(&model_path, time_limit_s, start.map(|_| start_path.as_path()), &sol_path);
    let output = match Command::new(command.program()).args(&args).output() {
        Ok(o) => o,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ExactError::SolverMissing(command.program().to_string())),
        Err(e) => return Err(e.into()),
    };
    let captured = || format!("{}{}", String::from_utf8_lossy(&output.stdout), String::from_utf8_lossy(&output.stderr));
    let text = std::fs::read_to_string(&sol_path).map_err(|_| ExactError::SolverOutput(captured()))?;
    let parsed = parse_solution(&text);
    let status = match parsed.status {
        SolveStatus::Optimal => ExternalStatus::Optimal,
        SolveStatus::Infeasible => ExternalStatus::Infeasible,
        SolveStatus::Stopped if parsed.objective.is_some() && !parsed.values.is_empty() => ExternalStatus::FeasibleIncumbent,
        SolveStatus::Stopped => ExternalStatus::TimeoutNoIncumbent,
        SolveStatus::Unknown => return Err(ExactError::SolverOutput(format!("{text}\n{}", captured()))),
    };
    Ok(ExternalResult { status, objective: parsed.objective, values: parsed.values })
}

/// Model horizon taken from the loops heuristic plan.
pub fn horizon_from_heuristic(instance: &Instance, state: Option<&OnlineState>) -> Result<usize, HeuristicError> {
    Ok(base_schedule(instance, state, Assigner::Loops)?.horizon)
}

#[derive(Debug, Clone)]
pub struct ExactConfig {
    pub time_limit_s: f64,
    pub command: SolverCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactStatus {
    /// The solver proved optimality within the model horizon.
    Optimal,
    /// The solver stopped with an incumbent better than the start.
    Improved,
    /// The heuristic start plan was kept.
    Incumbent,
}

#[derive(Debug, Clone)]
pub struct ExactOutcome {
    pub solution: Solution,
    pub status: ExactStatus,
    pub horizon: usize,
}

/// Solves `instance` on the horizon of its loops plan, warm-started from that
/// plan. Never returns a plan worse than the start.
pub fn solve_exact(instance: &Instance, state: Option<&OnlineState>, config: &ExactConfig) -> Result<ExactOutcome, ExactError> {
    let start = base_schedule(instance, state, Assigner::Loops)?;
    let horizon = start.horizon;
    if instance.jobs().is_empty() {
        return Ok(ExactOutcome { solution: start, status: ExactStatus::Optimal, horizon });
    }
    let model = build_mip(instance, horizon, state);
    let values = warm_start_from(&model, instance, &start)?;
    let start_obj = model.objective_value(&values);
    let result = solve_external(&write_lp(&model), Some(&write_start(&model, &values)), &config.command, config.time_limit_s)?;
    let status = match result.status {
        ExternalStatus::Infeasible => return Err(ExactError::Infeasible),
        ExternalStatus::TimeoutNoIncumbent => return Ok(ExactOutcome { solution: start, status: ExactStatus::Incumbent, horizon }),
        ExternalStatus::Optimal => ExactStatus::Optimal,
        ExternalStatus::FeasibleIncumbent => ExactStatus::Improved,
    };
    let solution = import_solution(&model, &result.values)?;
    let violations = verify(instance, &solution, state);
    if !violations.is_empty() {
        return Err(ExactError::ImportInfeasible(violations));
    }
    let imported = model.objective_value(&bridge::encode(&model, instance, &solution)?);
    if imported > start_obj || (imported == start_obj && status != ExactStatus::Optimal) {
        return Ok(ExactOutcome { solution: start, status: ExactStatus::Incumbent, horizon });
    }
    Ok(ExactOutcome { solution, status, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_template_substitution() {
        let c = SolverCommand::parse(DEFAULT_TEMPLATE).unwrap();
        let args = c.args(Path::new("/m.lp"), 5.0, Some(Path::new("/s")), Path::new("/o"));
        assert_eq!(args, ["/m.lp", "-sec", "5", "-mipstart", "/s", "-solve", "-solu", "/o"]);
        let args = c.args(Path::new("/m.lp"), 1.5, None, Path::new("/o"));
        assert_eq!(args, ["/m.lp", "-sec", "1.5", "-solve", "-solu", "/o"]);
        assert_eq!(SolverCommand::for_program("/opt/cbc").unwrap().program(), "/opt/cbc");
        assert!(SolverCommand::parse("  ").is_err());
    }

    #[test]
    fn missing_executable_is_environment_error() {
        let c = SolverCommand::for_program("/nonexistent/solver-binary").unwrap();
        let err = solve_external("Minimize\n obj:\nSubject To\nEnd\n", None, &c, 1.0).unwrap_err();
        assert!(matches!(err, ExactError::SolverMissing(_)));
        assert!(err.is_environment());
    }
}
