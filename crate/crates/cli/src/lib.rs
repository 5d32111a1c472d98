//! Command-line front end: configuration parsing, command execution and
//! reproducible output directories with a digest manifest.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

use std::path::Path;
use std::time::Instant;

use crate::config::RunConfig;
use crate::manifest::{sha256_hex, write_atomic, Check, OutputDigest, RunManifest, SCHEMA};

/// Exit code when every check passes.
pub const EXIT_PASS: i32 = 0;
/// Exit code when the run finished but some check failed.
pub const EXIT_FAIL: i32 = 1;
/// Exit code for configuration or numerical errors.
pub const EXIT_ERROR: i32 = 2;

/// Result of a dispatched run, as recorded in its manifest.
#[derive(Debug)]
pub struct RunResult {
    pub manifest: RunManifest,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        self.manifest.exit_code
    }

    pub fn checks(&self) -> &[Check] {
        &self.manifest.checks
    }
}

fn write_output(dir: &Path, file: String, bytes: &[u8], digests: &mut Vec<OutputDigest>) -> std::io::Result<()> {
    write_atomic(&dir.join(&file), bytes)?;
    digests.push(OutputDigest { file, sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
    Ok(())
}

/// Execute `cfg`, write its tables, plots and `results.json`, then the manifest.
pub fn dispatch(cfg: &RunConfig) -> std::io::Result<RunResult> {
    std::fs::create_dir_all(&cfg.out)?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(std::io::Error::other)?;
    let outcome = pool.install(|| commands::execute(cfg));
    let mut outputs = Vec::new();
    let (checks, error) = match outcome {
        Ok(o) => {
            for t in &o.tables {
                write_output(&cfg.out, format!("{}.csv", t.name), t.to_csv().as_bytes(), &mut outputs)?;
            }
            for p in &o.plots {
                write_output(&cfg.out, format!("{}.svg", p.name), p.to_svg().as_bytes(), &mut outputs)?;
            }
            let results = serde_json::json!({ "summary": o.summary, "checks": o.checks });
            let bytes = serde_json::to_vec_pretty(&results).map_err(std::io::Error::other)?;
            write_output(&cfg.out, "results.json".into(), &bytes, &mut outputs)?;
            (o.checks, None)
        }
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let exit_code = if error.is_some() {
        EXIT_ERROR
    } else if checks.iter().all(Check::passed) {
        EXIT_PASS
    } else {
        EXIT_FAIL
    };
    let manifest = RunManifest {
        schema: SCHEMA.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: cfg.command.name().into(),
        config: serde_json::to_value(cfg).map_err(std::io::Error::other)?,
        seed: cfg.seed,
        workers: cfg.workers,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs,
        checks,
        error,
        exit_code,
    };
    manifest.write(&cfg.out)?;
    Ok(RunResult { manifest })
}
