//! Runs every `*.cfg` of a directory with the full set of checks.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::run::{run, write_json, Check, RunOptions};
use crate::{CliError, EXIT_CHECK_FAILED, EXIT_NOT_CONVERGED, EXIT_OK};

#[derive(Debug, Clone, Serialize)]
pub struct FixtureResult {
    pub name: String,
    pub converged: bool,
    pub passed: bool,
    pub exit_code: u8,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub fixtures: Vec<FixtureResult>,
    pub exit_code: u8,
}

fn configs_in(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Runs each fixture into `out/<stem>` and writes `out/verify.json`. The
/// exit code is the worst over all fixtures.
pub fn verify(
    dir: &Path,
    out: &Path,
    threads: Option<usize>,
    seed: Option<u64>,
) -> Result<VerifySummary, CliError> {
    let paths = configs_in(dir)?;
    if paths.is_empty() {
        return Err(CliError::Io {
            path: dir.to_path_buf(),
            message: "no .cfg files".into(),
        });
    }
    let opts = RunOptions {
        deterministic: true,
        extended: true,
    };
    let mut fixtures = Vec::new();
    for path in paths {
        let name = path
            .file_stem()
            .expect("file has a stem")
            .to_string_lossy()
            .into_owned();
        let cfg = RunConfig::load(&path)?.with_overrides(Some(out.join(&name)), threads, seed);
        let o = run(&cfg, opts)?;
        fixtures.push(FixtureResult {
            name,
            converged: o.converged(),
            passed: o.checks_passed(),
            exit_code: o.exit_code(),
            checks: o.checks,
        });
    }
    let exit_code = if fixtures.iter().any(|f| f.exit_code == EXIT_NOT_CONVERGED) {
        EXIT_NOT_CONVERGED
    } else if fixtures.iter().any(|f| f.exit_code == EXIT_CHECK_FAILED) {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    };
    let summary = VerifySummary {
        fixtures,
        exit_code,
    };
    write_json(&out.join("verify.json"), "verify", &summary)?;
    Ok(summary)
}
