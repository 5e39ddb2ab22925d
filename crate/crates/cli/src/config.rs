//! Flat `key = value` run configuration.
//!
//! ```text
//! # Zero data, unit curvature
//! domain.kind = interval
//! domain.x0 = -1
//! domain.x1 = 1
//! domain.h = 0.004
//! g.expr = 0
//! tau = 1
//! solver = both
//! game.eps = 0.02
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Unknown and repeated
//! keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aronsson_core::analysis::AbsMinParams;
use aronsson_core::{parse_expr, DomainSpec, Expression, GameParams, Init, LpParams, Sweep};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Game,
    Variational,
    Exact1d,
    Both,
}

impl Mode {
    fn parse(s: &str) -> Option<Mode> {
        Some(match s {
            "game" => Mode::Game,
            "variational" => Mode::Variational,
            "exact1d" => Mode::Exact1d,
            "both" => Mode::Both,
            _ => return None,
        })
    }

    pub fn runs_game(self) -> bool {
        matches!(self, Mode::Game | Mode::Both)
    }

    pub fn runs_variational(self) -> bool {
        matches!(self, Mode::Variational | Mode::Both)
    }
}

/// Tolerances and sampling sizes for the post-solve checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckParams {
    /// Pointwise tolerance for ordering, maximum principle and oracles.
    pub tol: f64,
    pub battery: AbsMinParams,
    /// Members of the exact 1D family to sample.
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub g_src: String,
    pub g: Expression,
    pub tau: f64,
    pub mode: Mode,
    pub game: GameParams,
    pub lp: LpParams,
    pub check: CheckParams,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

const KEYS: &[&str] = &[
    "domain.kind",
    "domain.x0",
    "domain.x1",
    "domain.y0",
    "domain.y1",
    "domain.cx",
    "domain.cy",
    "domain.r",
    "domain.h",
    "g.expr",
    "tau",
    "solver",
    "game.eps",
    "game.tol",
    "game.max_iter",
    "game.sweep",
    "game.init",
    "lp.schedule",
    "lp.tol",
    "lp.max_steps",
    "lp.initial_step",
    "lp.shrink",
    "lp.sufficient_decrease",
    "lp.offset",
    "check.tol",
    "check.trials",
    "check.perturbations",
    "check.slack",
    "exact1d.members",
    "out.dir",
    "seed",
    "threads",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn req(&self, key: &str) -> Result<(usize, &str), CliError> {
        self.raw(key)
            .ok_or_else(|| CliError::config(0, format!("missing required key `{key}`")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| {
                CliError::config(line, format!("`{key}`: cannot parse `{v}` as a number"))
            }),
        }
    }

    fn num_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn req_num(&self, key: &str) -> Result<f64, CliError> {
        self.req(key)?;
        Ok(self.num(key)?.expect("present"))
    }

    fn line(&self, key: &str) -> usize {
        self.raw(key).map_or(0, |(l, _)| l)
    }
}

fn split_entries(text: &str) -> Result<Entries, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let Some((k, v)) = s.split_once('=') else {
            return Err(CliError::config(
                line,
                format!("expected `key = value`, got `{s}`"),
            ));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(CliError::config(line, format!("unknown key `{k}`")));
        }
        if let Some((first, _)) = map.insert(k.to_string(), (line, v.to_string())) {
            return Err(CliError::config(
                line,
                format!("key `{k}` already set on line {first}"),
            ));
        }
    }
    Ok(Entries { map })
}

fn domain(e: &Entries) -> Result<DomainSpec, CliError> {
    let (line, kind) = e.req("domain.kind")?;
    let h = e.req_num("domain.h")?;
    let spec = match kind {
        "interval" => DomainSpec::interval(e.req_num("domain.x0")?, e.req_num("domain.x1")?, h),
        "rectangle" => DomainSpec::rectangle(
            [e.req_num("domain.x0")?, e.req_num("domain.x1")?],
            [e.req_num("domain.y0")?, e.req_num("domain.y1")?],
            h,
        ),
        "disc" => {
            let c = [e.num_or("domain.cx", 0.0)?, e.num_or("domain.cy", 0.0)?];
            let r: f64 = e.num_or("domain.r", 1.0)?;
            // Default box: the disc plus a two-cell margin.
            let pad = r + 2.0 * h;
            DomainSpec::disc(
                c,
                r,
                [
                    e.num_or("domain.x0", c[0] - pad)?,
                    e.num_or("domain.x1", c[0] + pad)?,
                ],
                [
                    e.num_or("domain.y0", c[1] - pad)?,
                    e.num_or("domain.y1", c[1] + pad)?,
                ],
                h,
            )
        }
        other => {
            return Err(CliError::config(
                line,
                format!("domain.kind must be interval, rectangle or disc, got `{other}`"),
            ))
        }
    };
    spec.validate()
        .map_err(|err| CliError::config(line, err.to_string()))?;
    Ok(spec)
}

fn game(e: &Entries, h: f64) -> Result<GameParams, CliError> {
    let mut p = GameParams::new(e.num_or("game.eps", 5.0 * h)?);
    p.tol = e.num_or("game.tol", p.tol)?;
    p.max_iter = e.num_or("game.max_iter", p.max_iter)?;
    if let Some((line, s)) = e.raw("game.sweep") {
        p.sweep = match s {
            "gauss-seidel" => Sweep::GaussSeidel,
            "jacobi" => Sweep::Jacobi,
            _ => {
                return Err(CliError::config(
                    line,
                    format!("game.sweep: unknown sweep `{s}`"),
                ))
            }
        };
    }
    if let Some((line, s)) = e.raw("game.init") {
        p.init = match s {
            "boundary-max" => Init::BoundaryMax,
            "boundary-min" => Init::BoundaryMin,
            _ => {
                return Err(CliError::config(
                    line,
                    format!("game.init: unknown start `{s}`"),
                ))
            }
        };
    }
    p.validate(h)
        .map_err(|err| CliError::config(e.line("game.eps"), err.to_string()))?;
    Ok(p)
}

fn lp(e: &Entries) -> Result<LpParams, CliError> {
    let mut p = LpParams::default();
    if let Some((line, s)) = e.raw("lp.schedule") {
        p.p_schedule = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| {
                CliError::config(line, format!("lp.schedule: expected numbers, got `{s}`"))
            })?;
    }
    p.tol = e.num_or("lp.tol", p.tol)?;
    p.max_steps = e.num_or("lp.max_steps", p.max_steps)?;
    p.backtracking.initial_step = e.num_or("lp.initial_step", p.backtracking.initial_step)?;
    p.backtracking.shrink = e.num_or("lp.shrink", p.backtracking.shrink)?;
    p.backtracking.sufficient_decrease =
        e.num_or("lp.sufficient_decrease", p.backtracking.sufficient_decrease)?;
    p.offset = e.num_or("lp.offset", p.offset)?;
    p.validate()
        .map_err(|err| CliError::config(e.line("lp.schedule"), err.to_string()))?;
    Ok(p)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let e = split_entries(text)?;
        let domain = domain(&e)?;
        let (gline, g_src) = e.req("g.expr")?;
        let g =
            parse_expr(g_src).map_err(|err| CliError::config(gline, format!("g.expr: {err}")))?;
        if domain.dim() == 1 && g.uses_y() {
            return Err(CliError::config(
                gline,
                "g.expr uses y on an interval".into(),
            ));
        }
        let tau: f64 = e.num_or("tau", 1.0)?;
        if !tau.is_finite() {
            return Err(CliError::config(
                e.line("tau"),
                format!("tau must be finite, got {tau}"),
            ));
        }
        let mode = match e.raw("solver") {
            None => Mode::Both,
            Some((line, s)) => Mode::parse(s).ok_or_else(|| {
                CliError::config(
                    line,
                    format!("solver must be game, variational, exact1d or both, got `{s}`"),
                )
            })?,
        };
        if mode == Mode::Exact1d && domain.dim() != 1 {
            return Err(CliError::config(
                e.line("solver"),
                "exact1d needs an interval domain".into(),
            ));
        }
        let seed = e.num_or("seed", 0u64)?;
        let battery = AbsMinParams {
            trials: e.num_or("check.trials", 40)?,
            perturbations_per_trial: e.num_or("check.perturbations", 5)?,
            slack: e.num_or("check.slack", 0.05)?,
            seed,
        };
        let check = CheckParams {
            tol: e.num_or("check.tol", 0.05)?,
            battery,
            members: e.num_or("exact1d.members", 5)?,
        };
        if !(check.tol >= 0.0 && check.battery.slack >= 0.0) {
            return Err(CliError::config(
                e.line("check.tol"),
                "check tolerances must be nonnegative".into(),
            ));
        }
        let threads = e.num_or("threads", 1usize)?.max(1);
        let mut game = game(&e, domain.h)?;
        game.threads = threads;
        Ok(RunConfig {
            game,
            lp: lp(&e)?,
            domain,
            g_src: g_src.to_string(),
            g,
            tau,
            mode,
            check,
            out_dir: PathBuf::from(e.raw("out.dir").map_or("out", |(_, v)| v)),
            seed,
            threads,
        })
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|err| CliError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        })?;
        RunConfig::parse(&text)
    }

    /// Applies command-line overrides.
    pub fn with_overrides(
        mut self,
        out: Option<PathBuf>,
        threads: Option<usize>,
        seed: Option<u64>,
    ) -> Self {
        if let Some(o) = out {
            self.out_dir = o;
        }
        if let Some(t) = threads {
            self.threads = t.max(1);
        }
        if let Some(s) = seed {
            self.seed = s;
            self.check.battery.seed = s;
        }
        self.game.threads = self.threads;
        self
    }
}
