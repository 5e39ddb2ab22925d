use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Game,
    Variational,
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: SolverKind,
    pub converged: bool,
    /// Game: sweeps. Variational: accepted steps over all stages.
    pub iterations: usize,
    /// Game: `sup |u − T(u)|`. Variational: scaled stationarity measure of the last stage.
    pub residual: f64,
    /// Game: sup-norm change of the last sweep.
    pub sup_change: f64,
    pub tau: f64,
    /// The problem was solved with `(−g, −τ)` and negated, which exchanges
    /// the minimal and maximal solutions.
    pub roles_swapped: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageReport>,
    /// Variational only: `true` if the output has no wells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub well_check: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SolveReport {
    pub(crate) fn new(solver: SolverKind, tau: f64) -> Self {
        SolveReport {
            solver,
            converged: false,
            iterations: 0,
            residual: f64::NAN,
            sup_change: f64::NAN,
            tau,
            roles_swapped: false,
            stages: Vec::new(),
            well_check: None,
            wall_time_s: None,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Converged,
    /// Zero energy: the iterate is an exact minimizer.
    Exact,
    /// No step satisfied the line search.
    Stalled,
    MaxSteps,
}

/// One exponent of the `L^p` schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub p: f64,
    pub steps: usize,
    pub status: StageStatus,
    /// `E^(1/p)` at the end of the stage.
    pub objective: f64,
    /// Largest integrand value `max Ĥ`, the scale energies are divided by.
    pub scale: f64,
    pub residual: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub step_mean: f64,
    /// `E^(1/p)` after every accepted step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}
