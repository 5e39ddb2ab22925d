//! One configured run: solve, check, write artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use aronsson_core::analysis::{
    self, check_absolute_minimizing, check_max_principle, check_ordering, detect_flat_pieces,
    detect_wells, AbsMinReport, MaxPrincipleCheck, OrderingCheck,
};
use aronsson_core::exact1d::{self, ViscosityReport};
use aronsson_core::{
    game, variational, BoundaryData, Classification, Family, Grid, GridFunction,
    ParabolaFlatSolution, Problem, SolveReport, Verdict,
};
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::{CliError, EXIT_CHECK_FAILED, EXIT_NOT_CONVERGED, EXIT_OK, SPEC_VERSION};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Leave wall times out of the artifacts so that reruns are byte identical.
    pub deterministic: bool,
    /// Also run the absolute-minimizer battery and the 1D exact oracles.
    pub extended: bool,
}

/// A named pass/fail check. Passes when `value <= tol`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tol: f64,
}

impl Check {
    fn new(name: &str, value: f64, tol: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: value <= tol,
            value,
            tol,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub problem: Problem,
    pub game: Option<(GridFunction, SolveReport)>,
    pub variational: Option<(GridFunction, SolveReport)>,
    pub family: Option<Family>,
    pub checks: Vec<Check>,
    /// Artifact paths in the order they were written.
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn converged(&self) -> bool {
        self.game
            .iter()
            .chain(&self.variational)
            .all(|(_, r)| r.converged)
    }

    pub fn checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Non-convergence takes precedence over failed checks.
    pub fn exit_code(&self) -> u8 {
        if !self.converged() {
            EXIT_NOT_CONVERGED
        } else if !self.checks_passed() {
            EXIT_CHECK_FAILED
        } else {
            EXIT_OK
        }
    }
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    spec_version: &'static str,
    kind: &'a str,
    #[serde(flatten)]
    body: T,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, kind: &str, body: T) -> Result<(), CliError> {
    let a = Artifact {
        spec_version: SPEC_VERSION,
        kind,
        body,
    };
    let mut text = serde_json::to_string_pretty(&a).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct SolutionAnalysis {
    classification: Classification,
    wells: usize,
    flat_pieces: usize,
    max_principle: MaxPrincipleCheck,
}

#[derive(Serialize)]
struct SolverArtifact<'a> {
    config: ConfigEcho<'a>,
    report: &'a SolveReport,
    analysis: SolutionAnalysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    battery: Option<AbsMinReport>,
}

#[derive(Clone, Copy, Serialize)]
struct ConfigEcho<'a> {
    domain: &'a aronsson_core::DomainSpec,
    g: &'a str,
    tau: f64,
    mode: Mode,
    nodes: usize,
}

#[derive(Serialize)]
struct MemberRecord {
    c: f64,
    tau: f64,
    solution: ParabolaFlatSolution,
    viscosity: ViscosityReport,
    verdict: Verdict,
}

#[derive(Serialize)]
struct ChecksArtifact<'a> {
    converged: bool,
    passed: bool,
    checks: &'a [Check],
}

/// Flips `u` for `τ < 0` so that the minimal solution is always the one
/// with wells and the maximal one the one with flat pieces.
fn oriented(u: &GridFunction, tau: f64) -> GridFunction {
    if tau < 0.0 {
        u.map(|x| -x)
    } else {
        u.clone()
    }
}

fn analyse(u: &GridFunction, tau: f64, tol: f64) -> SolutionAnalysis {
    let o = oriented(u, tau);
    SolutionAnalysis {
        classification: analysis::classify(&o),
        wells: detect_wells(&o).len(),
        flat_pieces: detect_flat_pieces(&o).len(),
        max_principle: check_max_principle(&o, tol),
    }
}

fn family_of(problem: &Problem) -> Result<Family, CliError> {
    let grid = &problem.grid;
    let spec = grid.spec();
    let (first, last) = (0, grid.len() - 1);
    Ok(exact1d::family_tau(
        spec.x[0],
        spec.x[1],
        problem.g.value(first),
        problem.g.value(last),
        problem.tau,
    )?)
}

/// Runs `cfg` and writes its artifacts under `cfg.out_dir`.
pub fn run(cfg: &RunConfig, opts: RunOptions) -> Result<RunOutcome, CliError> {
    let grid = Arc::new(Grid::new(cfg.domain)?);
    let g = BoundaryData::from_expr(&cfg.g_src, &grid)?;
    let problem = Problem::new(grid.clone(), g, cfg.tau)?;
    let out = cfg.out_dir.as_path();
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let echo = ConfigEcho {
        domain: &cfg.domain,
        g: &cfg.g_src,
        tau: cfg.tau,
        mode: cfg.mode,
        nodes: grid.len(),
    };
    let tol = cfg.check.tol;
    let mut outcome = RunOutcome {
        problem: problem.clone(),
        game: None,
        variational: None,
        family: None,
        checks: Vec::new(),
        files: Vec::new(),
    };

    if cfg.mode == Mode::Exact1d {
        run_exact(cfg, opts, &mut outcome)?;
    }

    if cfg.mode.runs_game() {
        let started = Instant::now();
        let (u, mut rep) = game::value_iteration(&problem, &cfg.game)?;
        rep.wall_time_s = (!opts.deterministic).then(|| started.elapsed().as_secs_f64());
        let a = analyse(&u, cfg.tau, tol);
        outcome.checks.push(Check::new(
            "game.max_principle",
            -a.max_principle.margin,
            tol,
        ));
        outcome
            .checks
            .push(Check::new("game.flat_pieces", a.flat_pieces as f64, 0.0));
        if opts.extended && grid.dim() == 1 && cfg.tau != 0.0 {
            let fam = family_of(&problem)?;
            let exact = if cfg.tau > 0.0 {
                fam.minimal()
            } else {
                fam.maximal()
            };
            let err = u.sup_error(|p| exact.value(p[0]));
            outcome.checks.push(Check::new("game.exact1d", err, tol));
        }
        let csv = out.join("game.csv");
        u.save_csv(&csv)?;
        let json = out.join("game.json");
        write_json(
            &json,
            "game",
            SolverArtifact {
                config: echo,
                report: &rep,
                analysis: a,
                battery: None,
            },
        )?;
        outcome.files.extend([csv, json]);
        outcome.game = Some((u, rep));
    }

    if cfg.mode.runs_variational() {
        let (u, mut rep) = variational::minimize_lp(&problem, &cfg.lp)?;
        if opts.deterministic {
            rep.wall_time_s = None;
        }
        let a = analyse(&u, cfg.tau, tol);
        outcome.checks.push(Check::new(
            "variational.max_principle",
            -a.max_principle.margin,
            tol,
        ));
        outcome
            .checks
            .push(Check::new("variational.wells", a.wells as f64, 0.0));
        let battery = if opts.extended {
            let b = check_absolute_minimizing(
                &oriented(&u, cfg.tau),
                cfg.tau.abs(),
                &cfg.check.battery,
            );
            outcome.checks.push(Check::new(
                "variational.battery",
                b.worst_margin,
                cfg.check.battery.slack,
            ));
            if grid.dim() == 1 && cfg.tau != 0.0 {
                let fam = family_of(&problem)?;
                let exact = if cfg.tau > 0.0 {
                    fam.maximal()
                } else {
                    fam.minimal()
                };
                let err = u.sup_error(|p| exact.value(p[0]));
                outcome
                    .checks
                    .push(Check::new("variational.exact1d", err, tol));
            }
            Some(b)
        } else {
            None
        };
        let csv = out.join("variational.csv");
        u.save_csv(&csv)?;
        let json = out.join("variational.json");
        write_json(
            &json,
            "variational",
            SolverArtifact {
                config: echo,
                report: &rep,
                analysis: a,
                battery,
            },
        )?;
        outcome.files.extend([csv, json]);
        outcome.variational = Some((u, rep));
    }

    if let (Some((ug, _)), Some((uv, _))) = (&outcome.game, &outcome.variational) {
        let (lo, hi) = if cfg.tau >= 0.0 { (ug, uv) } else { (uv, ug) };
        let ord = check_ordering(lo, hi, tol)?;
        outcome
            .checks
            .push(Check::new("ordering", ord.worst_violation, tol));
        let json = out.join("ordering.json");
        write_json(&json, "ordering", OrderingArtifact { tol, check: ord })?;
        outcome.files.push(json);
    }

    let json = out.join("checks.json");
    write_json(
        &json,
        "checks",
        ChecksArtifact {
            converged: outcome.converged(),
            passed: outcome.checks_passed(),
            checks: &outcome.checks,
        },
    )?;
    outcome.files.push(json);
    Ok(outcome)
}

#[derive(Serialize)]
struct OrderingArtifact {
    tol: f64,
    check: OrderingCheck,
}

#[derive(Serialize)]
struct ExactArtifact<'a> {
    family: &'a Family,
    singleton: bool,
    members: Vec<MemberRecord>,
}

fn run_exact(cfg: &RunConfig, opts: RunOptions, outcome: &mut RunOutcome) -> Result<(), CliError> {
    let problem = &outcome.problem;
    let grid = problem.grid.clone();
    let fam = family_of(problem)?;
    let out = cfg.out_dir.as_path();

    let mut members = Vec::new();
    let mut viscosity_failures = 0;
    let mut misclassified = 0;
    let sols = fam.enumerate(cfg.check.members);
    let last = sols.len() - 1;
    for (i, sol) in sols.into_iter().enumerate() {
        let viscosity = exact1d::verify_viscosity(&sol);
        if !viscosity.solves_aronsson {
            viscosity_failures += 1;
        }
        let sampled = exact1d::sample(&sol, grid.clone())?;
        let verdict = analysis::classify(&oriented(&sampled, cfg.tau)).verdict;
        if !fam.is_singleton() {
            // Rank in the oriented order, where the minimal member has wells.
            let rank = if cfg.tau > 0.0 { i } else { last - i };
            let expected = match rank {
                0 => Verdict::ValueFunctionOnly,
                r if r == last => Verdict::AbsoluteMinimizerOnly,
                _ => Verdict::Intermediate,
            };
            if verdict != expected {
                misclassified += 1;
            }
        }
        members.push(MemberRecord {
            c: sol.c,
            tau: sol.tau,
            solution: sol,
            viscosity,
            verdict,
        });
    }
    outcome.checks.push(Check::new(
        "exact1d.viscosity",
        viscosity_failures as f64,
        0.0,
    ));
    if opts.extended {
        outcome.checks.push(Check::new(
            "exact1d.classification",
            misclassified as f64,
            0.0,
        ));
    }

    for (name, sol) in [
        ("exact1d_minimal.csv", fam.minimal()),
        ("exact1d_maximal.csv", fam.maximal()),
    ] {
        let path = out.join(name);
        exact1d::sample(&sol, grid.clone())?.save_csv(&path)?;
        outcome.files.push(path);
    }
    let json = out.join("exact1d.json");
    write_json(
        &json,
        "exact1d",
        ExactArtifact {
            family: &fam,
            singleton: fam.is_singleton(),
            members,
        },
    )?;
    outcome.files.push(json);
    outcome.family = Some(fam);
    Ok(())
}

#[derive(Serialize)]
struct ClassificationArtifact {
    tau: f64,
    classification: Classification,
    wells: Vec<analysis::Well>,
    flat_pieces: Vec<analysis::FlatPiece>,
}

/// Classifies a saved solution on the grid of `cfg`.
pub fn classify_csv(cfg: &RunConfig, csv: &Path) -> Result<(Classification, String), CliError> {
    let grid = Arc::new(Grid::new(cfg.domain)?);
    let u = GridFunction::load_csv(grid, csv)?;
    let o = oriented(&u, cfg.tau);
    let body = ClassificationArtifact {
        tau: cfg.tau,
        classification: analysis::classify(&o),
        wells: detect_wells(&o),
        flat_pieces: detect_flat_pieces(&o),
    };
    let a = Artifact {
        spec_version: SPEC_VERSION,
        kind: "classification",
        body: &body,
    };
    let text = serde_json::to_string_pretty(&a).expect("classification serializes");
    Ok((body.classification, text))
}
