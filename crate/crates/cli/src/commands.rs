//! Command implementations. Each returns tables, plots and check verdicts;
//! file output and the manifest are handled by the dispatcher.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use atfbm::density::{caputo_half_of, density_field};
use atfbm::local_time::{
    existence_diagnostic, fourier_l2_check, holder_set_variable, moment_scaling_check, ExistenceLadder,
    ExistenceVerdict, FourierOptions, ScalingFit, ScalingOptions,
};
use atfbm::pde::{pde_residual, CheckStatus, PdeCase, PdeProblem};
use atfbm::process::{
    increment_tail_constant, oscillation_exponent, sample_path, sup_tail_slope, OscillationOptions, SupTailOptions,
};
use atfbm::rng::{derive_seed, path_seed};
use atfbm::scaling_limit::{composed_limit_test, fdd_energy_check, variance_growth, HeavyIndexSpec, LinearProcessSpec};
use atfbm::special_integrals::{
    identity_sweep, min_distance_growth, simplex_dirichlet_closed, simplex_dirichlet_quadrature, simplex_sweep,
    weighted_growth, GrowthReport, SimplexIntegralSpec,
};
use atfbm::{Error, FbmSpec, ProcessSpec, StableKind, StableSpec};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{CommandId, ConfigError, RunConfig};
use crate::manifest::{Check, RunManifest, FILE_NAME};
use crate::output::{Cell, Plot, Series, Table};

/// Everything a command produces besides the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    pub checks: Vec<Check>,
    pub summary: serde_json::Value,
}

/// Tolerance for reproducing the closed-form time factor by quadrature.
pub const TIME_FACTOR_TOL: f64 = 1e-10;
/// Tolerance of the Richardson-extrapolated variance constant.
pub const VARIANCE_LIMIT_TOL: f64 = 0.01;

fn kind_of(cfg: &RunConfig) -> StableKind {
    match cfg.text("kind") {
        "subordinator" => StableKind::Subordinator,
        _ => StableKind::Symmetric,
    }
}

fn process_spec(cfg: &RunConfig) -> atfbm::Result<ProcessSpec> {
    let sigma = cfg.opt_real("sigma").unwrap_or(1.0);
    let dim = cfg.opt_int("dim").unwrap_or(1) as usize;
    ProcessSpec::new(FbmSpec::new(cfg.real("H"))?, StableSpec::new(cfg.real("alpha"), sigma, kind_of(cfg))?, dim)
}

fn pde_cases(cfg: &RunConfig) -> atfbm::Result<Vec<PdeProblem>> {
    let cases = match cfg.text("case") {
        "all" => PdeCase::ALL.to_vec(),
        name => vec![name.parse::<PdeCase>()?],
    };
    Ok(cases
        .into_iter()
        .map(|c| {
            let mut p = PdeProblem::new(c);
            if let Some(h) = cfg.opt_real("H") {
                p = p.with_hurst(h);
            }
            if let Some(b) = cfg.opt_real("beta") {
                p = p.with_beta(b);
            }
            if let Some(k) = cfg.opt_int("k") {
                p = p.with_k(k as u32);
            }
            p
        })
        .collect())
}

/// Core parameter names that differ from the config key.
fn key_for(name: &str) -> &str {
    match name {
        "c" => "coef",
        other => other,
    }
}

fn attribute(cfg: &RunConfig, e: Error) -> ConfigError {
    match &e {
        Error::InvalidParameter { name, .. } => cfg.domain(key_for(name), e.to_string()),
        _ => cfg.domain("", e.to_string()),
    }
}

fn positive(cfg: &RunConfig, keys: &[&str]) -> Result<(), ConfigError> {
    for &k in keys {
        if let Some(v) = cfg.params.get(k) {
            let ok = match v {
                crate::config::Value::Int(i) => *i > 0,
                crate::config::Value::Real(r) => *r > 0.0,
                crate::config::Value::List(l) => l.iter().all(|&x| x > 0.0),
                crate::config::Value::Text(_) => true,
            };
            if !ok {
                return Err(cfg.domain(k, format!("{k} must be positive")));
            }
        }
    }
    Ok(())
}

/// Command-specific domain checks, run by `parse_config`.
pub fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    match cfg.command {
        CommandId::Simulate => {
            positive(cfg, &["dim", "paths", "steps", "horizon"])?;
            process_spec(cfg).map_err(|e| attribute(cfg, e))?;
        }
        CommandId::Density => {
            positive(cfg, &["t", "mass_tol"])?;
            process_spec(cfg).map_err(|e| attribute(cfg, e))?;
            if !(cfg.real("x_min") < cfg.real("x_max")) {
                return Err(cfg.domain("x_max", "x_max must exceed x_min"));
            }
            if cfg.count("x_points") < 3 {
                return Err(cfg.domain("x_points", "x_points must be at least 3"));
            }
        }
        CommandId::PdeCheck => {
            for p in pde_cases(cfg).map_err(|e| attribute(cfg, e))? {
                p.validate().map_err(|e| attribute(cfg, e))?;
            }
        }
        CommandId::Localtime => {
            positive(
                cfg,
                &["dim", "paths", "horizon", "points", "cutoff", "moment", "h_grid", "radii", "width_factor"],
            )?;
            process_spec(cfg).map_err(|e| attribute(cfg, e))?;
        }
        CommandId::Tails => {
            positive(cfg, &["paths", "u_grid", "steps"])?;
            process_spec(cfg).map_err(|e| attribute(cfg, e))?;
            if !(cfg.real("a") >= 0.0 && cfg.real("a") < cfg.real("b") && cfg.real("b") < cfg.real("b2")) {
                return Err(cfg.domain("b2", "need 0 <= a < b < b2"));
            }
        }
        CommandId::ScalingLimit => {
            positive(cfg, &["n_list", "n_check", "c_list", "t", "paths", "fdd_c", "t1", "t2", "fdd_paths"])?;
            LinearProcessSpec::new(cfg.real("coef"), cfg.real("gamma")).map_err(|e| attribute(cfg, e))?;
            HeavyIndexSpec::new(cfg.real("alpha")).map_err(|e| attribute(cfg, e))?;
        }
        CommandId::Oracle => {
            positive(cfg, &["simplex_points", "simplex_max_n", "mc_samples", "identity_configs", "n_max", "random"])?;
            StableSpec::new(cfg.real("alpha"), 1.0, kind_of(cfg)).map_err(|e| attribute(cfg, e))?;
            if !(0.0..1.0).contains(&cfg.real("gamma")) {
                return Err(cfg.domain("gamma", "gamma must lie in [0,1)"));
            }
        }
        CommandId::Report => {}
    }
    Ok(())
}

/// CSV files written by each command, for `--help`.
pub fn output_help(command: CommandId) -> &'static str {
    match command {
        CommandId::Simulate => {
            "paths.csv: path,t,y1,x1[,y2,x2,...] (y = stable clock Y_j(t), x = X_j(t) = W_j(Y_j(t)))\n\
             paths.svg: first paths of x1 against t"
        }
        CommandId::Density => {
            "density.csv: t,x,q (marginal density q(t,x))\n\
             mass.csv: t,mass,outside (total mass, of which outside the x-range)\n\
             density.svg: q against x per t"
        }
        CommandId::PdeCheck => {
            "pde.csv: case,name,residual,residual_coarse,refinement_ratio,tolerance,status,params\n\
             caputo.csv: function,t,value,exact,abs_error (cases all and d)"
        }
        CommandId::Localtime => {
            "existence.csv: level,time_step,bin_width,l2,std_error\n\
             fourier.csv: truncated_lhs,truncated_lhs_se,tail_correction,lhs,kernel,time_factor,time_factor_closed,rhs,relative_gap\n\
             moment.csv, holder.csv: h,statistic,std_error\n\
             oscillation.csv: r,mean_log_statistic,std_error\n\
             plus <mode>.svg where applicable"
        }
        CommandId::ScalingLimit => {
            "variance.csv: n,variance,ratio,limit_constant,quoted_constant\n\
             ks.csv: c,ks,critical\n\
             fdd.csv: c,t1,t2,statistic,p_value\n\
             ks.svg: KS distance against c"
        }
        CommandId::Tails => {
            "tail_constant.csv (constant): a,b,u,scaled_tail,exceedances\n\
             sup_tail.csv (sup): u,tail,exceedances\n\
             plus <table>.svg"
        }
        CommandId::Oracle => {
            "simplex.csv: n,h,betas,closed,quadrature,quadrature_se,monte_carlo,monte_carlo_se,max_sigmas\n\
             identity.csv: index,dim,gamma,lhs,lhs_se,rhs,gap\n\
             growth_min.csv, growth_weighted.csv: n,configuration,value,ratio\n\
             growth.svg: largest ratio against n"
        }
        CommandId::Report => "report.csv: run,command,check,verdict,detail",
    }
}

/// Run the command of `cfg` (outputs are not written here).
pub fn execute(cfg: &RunConfig) -> atfbm::Result<Outcome> {
    match cfg.command {
        CommandId::Simulate => simulate(cfg),
        CommandId::Density => density(cfg),
        CommandId::PdeCheck => pde_check(cfg),
        CommandId::Localtime => localtime(cfg),
        CommandId::ScalingLimit => scaling_limit(cfg),
        CommandId::Tails => tails(cfg),
        CommandId::Oracle => oracle(cfg),
        CommandId::Report => report(cfg),
    }
}

fn grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect()
}

fn simulate(cfg: &RunConfig) -> atfbm::Result<Outcome> {
    let spec = process_spec(cfg)?;
    let times = grid(0.0, cfg.real("horizon"), cfg.count("steps"));
    let paths = (0..cfg.int("paths"))
        .into_par_iter()
        .map(|i| sample_path(&spec, &times, path_seed(cfg.seed, i)))
        .collect::<atfbm::Result<Vec<_>>>()?;
    let mut columns = vec!["path".to_string(), "t".to_string()];
    for j in 1..=spec.dim {
        columns.push(format!("y{j}"));
        columns.push(format!("x{j}"));
    }
    let mut table = Table { name: "paths".into(), columns, rows: Vec::new() };
    let mut finite = true;
    for (i, path) in paths.iter().enumerate() {
        for (k, &t) in times.iter().enumerate() {
            let mut row: Vec<Cell> = vec![i.into(), t.into()];
            for j in 0..spec.dim {
                let (y, x) = (path.stable_paths[j].values[k], path.values[j][k]);
                finite &= y.is_finite() && x.is_finite();
                row.push(y.into());
                row.push(x.into());
            }
            table.push(row);
        }
    }
    let plot = Plot {
        name: "paths".into(),
        title: format!("X_1(t), H={}, alpha={}", spec.hurst(), spec.alpha()),
        x_label: "t".into(),
        y_label: "x1".into(),
        log_x: false,
        log_y: false,
        series: paths
            .iter()
            .take(6)
            .enumerate()
            .map(|(i, p)| Series {
                label: format!("path {i}"),
                points: times.iter().copied().zip(p.values[0].iter().copied()).collect(),
            })
            .collect(),
    };
    Ok(Outcome {
        tables: vec![table],
        plots: vec![plot],
        checks: vec![Check::new(
            "paths-finite",
            finite,
            format!("{} paths on {} grid points", paths.len(), times.len()),
        )],
        summary: json!({ "spec": spec, "paths": paths.len(), "steps": times.len() - 1 }),
    })
}

fn density(cfg: &RunConfig) -> atfbm::Result<Outcome> {
    let spec = process_spec(cfg)?;
    let xs = grid(cfg.real("x_min"), cfg.real("x_max"), cfg.count("x_points") - 1);
    let field = density_field(spec.hurst(), &spec.stable, cfg.list("t"), &xs)?;
    let mut table = Table::new("density", &["t", "x", "q"]);
    let mut mass = Table::new("mass", &["t", "mass", "outside"]);
    let mut checks = Vec::new();
    let tol = cfg.real("mass_tol");
    for (i, &t) in field.t_grid.iter().enumerate() {
        for (j, &x) in field.x_grid.iter().enumerate() {
            table.push(vec![t.into(), x.into(), field.q[i][j].into()]);
        }
        mass.push(vec![t.into(), field.mass[i].into(), field.outside[i].into()]);
        let err = (field.mass[i] - 1.0).abs();
        checks.push(Check::new(format!("mass-t{t}"), err <= tol, format!("|mass - 1| = {err:.3e}, tolerance {tol:e}")));
    }
    let plot = Plot {
        name: "density".into(),
        title: format!("density of X(t), H={}, alpha={}", spec.hurst(), spec.alpha()),
        x_label: "x".into(),
        y_label: "q(t,x)".into(),
        log_x: false,
        log_y: false,
        series: field
            .t_grid
            .iter()
            .zip(&field.q)
            .map(|(t, q)| Series {
                label: format!("t={t}"),
                points: xs.iter().copied().zip(q.iter().copied()).collect(),
            })
            .collect(),
    };
    Ok(Outcome {
        tables: vec![table, mass],
        plots: vec![plot],
        checks,
        summary: json!({ "spec": spec, "mass": field.mass, "outside": field.outside, "layout": field.layout }),
    })
}

fn pde_check(cfg: &RunConfig) -> atfbm::Result<Outcome> {
    let problems = pde_cases(cfg)?;
    let mut table = Table::new(
        "pde",
        &["case", "name", "residual", "residual_coarse", "refinement_ratio", "tolerance", "status", "params"],
    );
    let mut checks = Vec::new();
    let mut reports = Vec::new();
    for p in &problems {
        let r = pde_residual(p)?;
        let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let status = match r.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Inconclusive => "inconclusive",
        };
        table.push(vec![
            r.case_id.clone().into(),
            r.case_name.into(),
            r.residual.into(),
            r.residual_coarse.into(),
            r.refinement_ratio.into(),
            r.tolerance.into(),
            status.into(),
            params.join(";").into(),
        ]);
        checks.push(Check::new(
            format!("pde-{}", r.case_id),
            r.status == CheckStatus::Pass,
            format!(
                "{}: residual {:.3e} (coarse {:.3e}), refinement ratio {:.2}, tolerance {:e}",
                r.case_name, r.residual, r.residual_coarse, r.refinement_ratio, r.tolerance
            ),
        ));
        reports.push(r);
    }
    let mut tables = vec![table];
    if problems.iter().any(|p| p.case == PdeCase::FractionalCauchy) {
        let tol = cfg.real("caputo_tol");
        let mut caputo = Table::new("caputo", &["function", "t", "value", "exact", "abs_error"]);
        type Case = (&'static str, fn(f64) -> f64, f64);
        let cases: [Case; 2] = [("t", |t| t, 2.0 / PI.sqrt()), ("sqrt(t)", f64::sqrt, PI.sqrt() / 2.0)];
        for (name, u, exact) in cases {
            let value = caputo_half_of(u, 1.0, 512, 3.0)?;
            let err = (value - exact).abs();
            caputo.push(vec![name.into(), 1.0.into(), value.into(), exact.into(), err.into()]);
            checks.push(Check::new(
                format!("caputo-{name}"),
                err <= tol,
                format!("half derivative of {name} at t=1: {value:.10} vs {exact:.10}"),
            ));
        }
        tables.push(caputo);
    }
    Ok(Outcome { tables, plots: Vec::new(), checks, summary: json!({ "reports": reports }) })
}

fn covers(ci: (f64, f64), target: f64) -> bool {
    ci.0 <= target && target <= ci.1
}

fn scaling_outcome(name: &str, fit: &ScalingFit, checks: Vec<Check>, log_stat: bool) -> Outcome {
    let mut table = Table::new(name, &["h", "statistic", "std_error"]);
    for &(h, s, se) in &fit.table {
        table.push(vec![h.into(), s.into(), se.into()]);
    }
    let plot = Plot {
        name: name.into(),
        title: format!("{name} scaling, slope {:.3} (target {:.3})", fit.slope, fit.target),
        x_label: "h".into(),
        y_label: "statistic".into(),
        log_x: true,
        log_y: !log_stat,
        series: vec![Series { label: "estimate".into(), points: fit.table.iter().map(|r| (r.0, r.1)).collect() }],
    };
    Outcome { tables: vec![table], plots: vec![plot], checks, summary: json!({ "fit": fit }) }
}

fn localtime(cfg: &RunConfig) -> atfbm::Result<Outcome> {
    let spec = process_spec(cfg)?;
    let paths = cfg.count("paths");
    let seed = cfg.seed;
    match cfg.text("mode") {
        "existence" => {
            let ladder = ExistenceLadder {
                horizon: cfg.real("horizon"),
                coarse_steps: cfg.count("coarse_steps"),
                refinement: cfg.count("refinement"),
                levels: cfg.count("levels"),
                width_factor: cfg.real("width_factor"),
                threshold: cfg.real("threshold"),
            };
            let d = existence_diagnostic(&spec, ladder, paths, seed)?;
            let expected =
                if spec.local_time_exists() { ExistenceVerdict::Stabilizes } else { ExistenceVerdict::Diverges };
            let mut table = Table::new("existence", &["level", "time_step", "bin_width", "l2", "std_error"]);
            for (l, lv) in d.levels.iter().enumerate() {
                table.push(vec![l.into(), lv.time_step.into(), lv.bin_width.into(), lv.l2.into(), lv.std_error.into()]);
            }
            let plot = Plot {
                name: "existence".into(),
                title: format!("occupation L2 norm, dH/alpha = {:.3}", d.exponent),
                x_label: "time step".into(),
                y_label: "integral of L^2".into(),
                log_x: true,
                log_y: true,
                series: vec![Series {
                    label: "mean".into(),
                    points: d.levels.iter().map(|l| (l.time_step, l.l2)).collect(),
                }],
            };
            let check = Check::new(
                "existence",
                d.verdict == expected,
                format!("dH/alpha = {:.4}: verdict {:?}, expected {:?}", d.exponent, d.verdict, expected),
            );
            Ok(Outcome {
                tables: vec![table],
                plots: vec![plot],
                checks: vec![check],
                summary: json!({ "diagnostic": d }),
            })
        }
        "fourier" => {
            let opts = FourierOptions { points: cfg.count("points"), cutoff: cfg.real("cutoff") };
            let horizon = cfg.real("horizon");
            let r = fourier_l2_check(&spec, horizon, paths, seed, opts)?;
            let g = spec.exponent();
            let closed = 2.0 * horizon.powf(2.0 - g) / ((1.0 - g) * (2.0 - g));
            let mut table = Table::new(
                "fourier",
                &[
                    "truncated_lhs",
                    "truncated_lhs_se",
                    "tail_correction",
                    "lhs",
                    "kernel",
                    "time_factor",
                    "time_factor_closed",
                    "rhs",
                    "relative_gap",
                ],
            );
            table.push(vec![
                r.truncated_lhs.into(),
                r.truncated_lhs_se.into(),
                r.tail_correction.into(),
                r.lhs.into(),
                r.kernel.into(),
                r.time_factor.into(),
                closed.into(),
                r.rhs.into(),
                r.relative_gap.into(),
            ]);
            let tol = cfg.real("gap_tol");
            let tf_err = (r.time_factor - closed).abs();
            let checks = vec![
                Check::new(
                    "fourier-l2",
                    r.relative_gap <= tol,
                    format!("lhs {:.5} vs rhs {:.5}, gap {:.3e}", r.lhs, r.rhs, r.relative_gap),
                ),
                Check::new(
                    "time-factor",
                    tf_err <= TIME_FACTOR_TOL * closed.max(1.0),
                    format!("quadrature {:.15} vs closed form {closed:.15}", r.time_factor),
                ),
            ];
            Ok(Outcome { tables: vec![table], plots: Vec::new(), checks, summary: json!({ "check": r }) })
        }
        "moment" => {
            let opts = ScalingOptions { points: cfg.count("points"), width_factor: cfg.real("width_factor") };
            let moment = cfg.int("moment") as u32;
            let fit = moment_scaling_check(&spec, moment, cfg.list("h_grid"), paths, seed, opts)?;
            let check = Check::new(
                "moment-scaling",
                covers(fit.ci, fit.target),
                format!("slope {:.4}, 95% CI [{:.4}, {:.4}], target {:.4}", fit.slope, fit.ci.0, fit.ci.1, fit.target),
            );
            Ok(scaling_outcome("moment", &fit, vec![check], false))
        }
        "holder" => {
            let opts = ScalingOptions { points: cfg.count("points"), width_factor: cfg.real("width_factor") };
            let fit = holder_set_variable(&spec, cfg.list("h_grid"), paths, seed, opts)?;
            let width = fit.ci.1 - fit.ci.0;
            let max_width = cfg.real("ci_width");
            let checks = vec![
                Check::new(
                    "holder-exponent",
                    covers(fit.ci, fit.target) && width <= max_width,
                    format!(
                        "slope {:.4}, 95% CI [{:.4}, {:.4}] (width {width:.3}, max {max_width}), target {:.4}",
                        fit.slope, fit.ci.0, fit.ci.1, fit.target
                    ),
                ),
                Check::new(
                    "pigeonhole",
                    fit.pigeonhole_violations == 0,
                    format!("{} violations of |B| <= L*·volume", fit.pigeonhole_violations),
                ),
            ];
            Ok(scaling_outcome("holder", &fit, checks, true))
        }
        _ => {
            let r = oscillation_exponent(&spec, cfg.list("radii"), paths, seed, OscillationOptions::default())?;
            let tol = cfg.real("exponent_tol");
            let mut table = Table::new("oscillation", &["r", "mean_log_statistic", "std_error"]);
            for &(r0, m, se) in &r.per_radius {
                table.push(vec![r0.into(), m.into(), se.into()]);
            }
            let plot = Plot {
                name: "oscillation".into(),
                title: format!("oscillation exponent {:.3} (target {:.3})", r.exponent, r.target),
                x_label: "r".into(),
                y_label: "mean log statistic".into(),
                log_x: true,
                log_y: false,
                series: vec![Series {
                    label: "estimate".into(),
                    points: r.per_radius.iter().map(|p| (p.0, p.1)).collect(),
                }],
            };
            let check = Check::new(
                "oscillation-exponent",
                (r.exponent - r.target).abs() <= tol,
                format!("exponent {:.4} ± {:.4}, target {:.4}, tolerance {tol}", r.exponent, r.std_error, r.target),
            );
            Ok(Outcome {
                tables: vec![table],
                plots: vec![plot],
                checks: vec![check],
                summary: json!({ "exponent": r }),
            })
        }
    }
}

fn tails(cfg: &RunConfig) -> atfbm::Result<Outcome> {
    let spec = process_spec(cfg)?;
    let paths = cfg.count("paths");
    if cfg.text("mode") == "constant" {
        let u_grid = cfg.opt_list("u_grid").map(<[f64]>::to_vec).unwrap_or_else(|| vec![5.0, 10.0, 20.0, 40.0, 80.0]);
        let (a, b, b2) = (cfg.real("a"), cfg.real("b"), cfg.real("b2"));
        let first = increment_tail_constant(&spec, a, b, &u_grid, paths, cfg.seed)?;
        let second = increment_tail_constant(&spec, a, b2, &u_grid, paths, derive_seed(cfg.seed, &[1]))?;
        let mut table = Table::new("tail_constant", &["a", "b", "u", "scaled_tail", "exceedances"]);
        for (end, est) in [(b, &first), (b2, &second)] {
            for &(u, s, k) in &est.table {
                table.push(vec![a.into(), end.into(), u.into(), s.into(), k.into()]);
            }
        }
        let rel = (first.estimate / first.target - 1.0).abs();
        let ratio = second.estimate / first.estimate;
        let expected = (b2 - a) / (b - a);
        let (ctol, rtol) = (cfg.real("constant_tol"), cfg.real("ratio_tol"));
        let checks = vec![
            Check::new(
                "tail-constant",
                rel <= ctol,
                format!(
                    "estimate {:.4} ± {:.4} vs {:.4} (relative error {rel:.3}){}",
                    first.estimate,
                    first.std_error,
                    first.target,
                    if first.thin_tail { ", thin tail" } else { "" }
                ),
            ),
            Check::new(
                "tail-length-ratio",
                (ratio / expected - 1.0).abs() <= rtol,
                format!("ratio {ratio:.4} vs {expected:.4}"),
            ),
        ];
        let plot = Plot {
            name: "tail_constant".into(),
            title: "scaled increment tail".into(),
            x_label: "u".into(),
            y_label: "u^(alpha/H) P(|dZ| > u)".into(),
            log_x: true,
            log_y: false,
            series: [(b, &first), (b2, &second)]
                .iter()
                .map(|(end, e)| Series {
                    label: format!("[{a}, {end}]"),
                    points: e.table.iter().map(|r| (r.0, r.1)).collect(),
                })
                .collect(),
        };
        Ok(Outcome {
            tables: vec![table],
            plots: vec![plot],
            checks,
            summary: json!({ "first": first, "second": second }),
        })
    } else {
        let u_grid = cfg.opt_list("u_grid").map(<[f64]>::to_vec).unwrap_or_else(|| vec![2.0, 4.0, 8.0, 16.0, 32.0]);
        let opts = SupTailOptions { n_steps: cfg.count("steps"), ..SupTailOptions::default() };
        let r = sup_tail_slope(&spec, &u_grid, paths, cfg.seed, opts)?;
        let mut table = Table::new("sup_tail", &["u", "tail", "exceedances"]);
        for &(u, p, k) in &r.table {
            table.push(vec![u.into(), p.into(), k.into()]);
        }
        let check = Check::new(
            "sup-tail-slope",
            covers(r.ci, r.target),
            format!(
                "slope {:.4}, 95% CI [{:.4}, {:.4}], target {:.4}{}",
                r.slope,
                r.ci.0,
                r.ci.1,
                r.target,
                if r.thin_tail { ", thin tail" } else { "" }
            ),
        );
        let plot = Plot {
            name: "sup_tail".into(),
            title: format!("running maximum tail, slope {:.3}", r.slope),
            x_label: "u".into(),
            y_label: "P(sup |Z| > u)".into(),
            log_x: true,
            log_y: true,
            series: vec![Series { label: "estimate".into(), points: r.table.iter().map(|x| (x.0, x.1)).collect() }],
        };
        Ok(Outcome { tables: vec![table], plots: vec![plot], checks: vec![check], summary: json!({ "slope": r }) })
    }
}

fn scaling_limit(cfg: &RunConfig) -> atfbm::Result<Outcome> {
    let lp = LinearProcessSpec::new(cfg.real("coef"), cfg.real("gamma"))?;
    let heavy = HeavyIndexSpec::new(cfg.real("alpha"))?;
    let n_check = cfg.real("n_check");
    let mut n_list = cfg.list("n_list").to_vec();
    if !n_list.contains(&n_check) {
        n_list.push(n_check);
    }
    n_list.sort_by(f64::total_cmp);
    let growth = variance_growth(lp, &n_list);
    let mut variance = Table::new("variance", &["n", "variance", "ratio", "limit_constant", "quoted_constant"]);
    for ((&n, &v), &r) in growth.n.iter().zip(&growth.variance).zip(&growth.ratio) {
        variance.push(vec![n.into(), v.into(), r.into(), growth.limit_constant.into(), growth.quoted_constant.into()]);
    }
    let at = growth.n.iter().position(|&n| n == n_check).expect("n_check is in the list");
    let ratio = growth.ratio[at];
    let tol = cfg.real("variance_tol");
    let mut checks = vec![Check::new(
        "variance-ratio",
        (ratio / growth.quoted_constant - 1.0).abs() <= tol,
        format!(
            "V(n)/n^(2H) = {ratio:.4} at n = {n_check} vs quoted constant {:.4} (derived constant {:.4})",
            growth.quoted_constant, growth.limit_constant
        ),
    )];
    // The leading correction to the ratio decays like n^{γ−1}.
    let k = growth.n.len();
    if k >= 2 {
        let (n1, n2) = (growth.n[k - 2], growth.n[k - 1]);
        let (r1, r2) = (growth.ratio[k - 2], growth.ratio[k - 1]);
        let q = (n2 / n1).powf(1.0 - lp.gamma());
        let extrapolated = (q * r2 - r1) / (q - 1.0);
        checks.push(Check::new(
            "variance-limit",
            (extrapolated / growth.limit_constant - 1.0).abs() <= VARIANCE_LIMIT_TOL,
            format!(
                "extrapolated from n = {n1}, {n2}: {extrapolated:.4} vs derived constant {:.4}",
                growth.limit_constant
            ),
        ));
    }

    let composed = composed_limit_test(lp, heavy, cfg.list("c_list"), cfg.real("t"), cfg.count("paths"), cfg.seed)?;
    let mut ks = Table::new("ks", &["c", "ks", "critical"]);
    for (&c, &d) in composed.c.iter().zip(&composed.ks) {
        ks.push(vec![c.into(), d.into(), composed.critical.into()]);
    }
    let ks_final = cfg.real("ks_final");
    checks.push(Check::new(
        "ks-nonincreasing",
        composed.nonincreasing,
        format!("KS {:?} with 1% critical value {:.4}", composed.ks, composed.critical),
    ));
    checks.push(Check::new(
        "ks-final",
        composed.final_ks < ks_final,
        format!("final KS {:.4} vs {ks_final}", composed.final_ks),
    ));

    let fdd = fdd_energy_check(
        lp,
        heavy,
        cfg.real("fdd_c"),
        (cfg.real("t1"), cfg.real("t2")),
        cfg.count("fdd_paths"),
        cfg.count("permutations"),
        derive_seed(cfg.seed, &[2]),
    )?;
    let level = cfg.real("fdd_level");
    let mut fdd_table = Table::new("fdd", &["c", "t1", "t2", "statistic", "p_value"]);
    fdd_table.push(vec![fdd.c.into(), fdd.t1.into(), fdd.t2.into(), fdd.statistic.into(), fdd.p_value.into()]);
    checks.push(Check::new("fdd-energy", fdd.p_value > level, format!("p = {:.4} at level {level}", fdd.p_value)));

    let plot = Plot {
        name: "ks".into(),
        title: "KS distance to the composed limit".into(),
        x_label: "c".into(),
        y_label: "KS".into(),
        log_x: true,
        log_y: false,
        series: vec![Series {
            label: "KS".into(),
            points: composed.c.iter().copied().zip(composed.ks.iter().copied()).collect(),
        }],
    };
    Ok(Outcome {
        tables: vec![variance, ks, fdd_table],
        plots: vec![plot],
        checks,
        summary: json!({ "variance": growth, "composed": composed, "fdd": fdd }),
    })
}

fn growth_table(name: &str, report: &GrowthReport) -> Table {
    let mut t = Table::new(name, &["n", "configuration", "value", "ratio"]);
    for r in &report.rows {
        t.push(vec![r.n.into(), r.configuration.clone().into(), r.value.into(), r.ratio.into()]);
    }
    t
}

fn oracle(cfg: &RunConfig) -> atfbm::Result<Outcome> {
    let seed = cfg.seed;
    let mut checks = Vec::new();

    let two = simplex_dirichlet_closed(&SimplexIntegralSpec::new(1.0, vec![0.5])?);
    let pi = simplex_dirichlet_closed(&SimplexIntegralSpec::new(1.0, vec![0.5, 0.5])?);
    let mixed = SimplexIntegralSpec::new(1.0, vec![0.2, 0.5, 0.8])?;
    let mixed_q = simplex_dirichlet_quadrature(&mixed)?.value / simplex_dirichlet_closed(&mixed);
    checks.push(Check::new(
        "simplex-examples",
        (two - 2.0).abs() < 1e-12 && (pi - PI).abs() < 1e-12 && (mixed_q - 1.0).abs() < 0.01,
        format!("n=1: {two:.15}, n=2: {pi:.15}, mixed quadrature/closed {mixed_q:.12}"),
    ));

    let rows = simplex_sweep(cfg.count("simplex_points"), cfg.count("simplex_max_n"), cfg.count("mc_samples"), seed)?;
    let mut simplex = Table::new(
        "simplex",
        &["n", "h", "betas", "closed", "quadrature", "quadrature_se", "monte_carlo", "monte_carlo_se", "max_sigmas"],
    );
    for r in &rows {
        let betas: Vec<String> = r.betas.iter().map(|b| crate::output::format_real(*b)).collect();
        let (q, qse) = r.quadrature.map_or((f64::NAN, f64::NAN), |e| (e.value, e.std_error));
        simplex.push(vec![
            r.betas.len().into(),
            r.h.into(),
            betas.join(";").into(),
            r.closed.into(),
            q.into(),
            qse.into(),
            r.monte_carlo.value.into(),
            r.monte_carlo.std_error.into(),
            r.max_sigmas.into(),
        ]);
    }
    let limit = cfg.real("sigma_limit");
    let worst = rows.iter().map(|r| r.max_sigmas).fold(0.0, f64::max);
    checks.push(Check::new(
        "simplex-sweep",
        rows.iter().all(|r| r.max_sigmas <= limit),
        format!("{} configurations, largest discrepancy {worst:.2} error bars (limit {limit})", rows.len()),
    ));

    let ids = identity_sweep(cfg.count("identity_configs"), seed)?;
    let mut identity = Table::new("identity", &["index", "dim", "gamma", "lhs", "lhs_se", "rhs", "gap"]);
    for (i, c) in ids.iter().enumerate() {
        identity.push(vec![
            i.into(),
            c.dim.into(),
            c.gamma.into(),
            c.lhs.value.into(),
            c.lhs.std_error.into(),
            c.rhs.into(),
            c.gap.into(),
        ]);
    }
    let id_tol = cfg.real("identity_tol");
    let max_gap = ids.iter().map(|c| c.gap).fold(0.0, f64::max);
    checks.push(Check::new(
        "conditioning-identity",
        max_gap < id_tol,
        format!("{} covariances, largest relative gap {max_gap:.3e}", ids.len()),
    ));

    let gamma = cfg.real("gamma");
    let n_max = cfg.count("n_max");
    let slack = cfg.real("stable_slack");
    let min_growth = min_distance_growth(gamma, n_max, cfg.count("random"), seed)?;
    checks.push(Check::new(
        "min-distance-growth",
        min_growth.is_stable(slack),
        format!(
            "max ratio {:.4} up to n = {n_max}, {:.4} up to n = {}",
            min_growth.max_ratio,
            min_growth.max_ratio_half,
            n_max / 2
        ),
    ));
    let law = StableSpec::new(cfg.real("alpha"), 1.0, kind_of(cfg))?;
    let ns: Vec<usize> = std::iter::successors(Some(1usize), |n| Some(2 * n)).take_while(|&n| n <= n_max).collect();
    let weighted = weighted_growth(gamma, &law, &ns, cfg.count("random"), seed)?;
    checks.push(Check::new(
        "weighted-growth",
        weighted.is_stable(slack),
        format!(
            "max ratio {:.4} up to n = {}, {:.4} up to half",
            weighted.max_ratio,
            ns.last().unwrap_or(&0),
            weighted.max_ratio_half
        ),
    ));
    let plot = Plot {
        name: "growth".into(),
        title: format!("value / n^gamma, gamma = {gamma}"),
        x_label: "n".into(),
        y_label: "ratio".into(),
        log_x: true,
        log_y: false,
        series: [("unweighted", &min_growth), ("density-weighted", &weighted)]
            .iter()
            .map(|(label, rep)| {
                let mut best: BTreeMap<usize, f64> = BTreeMap::new();
                for r in &rep.rows {
                    let e = best.entry(r.n).or_insert(0.0);
                    *e = e.max(r.ratio);
                }
                Series {
                    label: format!("{label} (max over configurations)"),
                    points: best.into_iter().map(|(n, r)| (n as f64, r)).collect(),
                }
            })
            .collect(),
    };
    Ok(Outcome {
        tables: vec![
            simplex,
            identity,
            growth_table("growth_min", &min_growth),
            growth_table("growth_weighted", &weighted),
        ],
        plots: vec![plot],
        checks,
        summary: json!({
            "simplex_worst_sigmas": worst,
            "identity_max_gap": max_gap,
            "min_distance": { "max_ratio": min_growth.max_ratio, "max_ratio_half": min_growth.max_ratio_half },
            "weighted": { "max_ratio": weighted.max_ratio, "max_ratio_half": weighted.max_ratio_half },
        }),
    })
}

/// Directories below `root` holding a manifest, in sorted order.
fn manifest_dirs(root: &Path, skip: &Path, out: &mut Vec<PathBuf>) {
    if root.join(FILE_NAME).is_file() && root != skip {
        out.push(root.to_path_buf());
    }
    let Ok(entries) = std::fs::read_dir(root) else {
        return;
    };
    let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    dirs.sort();
    for d in dirs {
        manifest_dirs(&d, skip, out);
    }
}

fn report(cfg: &RunConfig) -> atfbm::Result<Outcome> {
    let root = PathBuf::from(cfg.text("root"));
    let skip = cfg.out.canonicalize().unwrap_or_else(|_| cfg.out.clone());
    let mut dirs = Vec::new();
    manifest_dirs(&root, &skip, &mut dirs);
    dirs.retain(|d| d.canonicalize().map_or(true, |c| c != skip));
    let mut table = Table::new("report", &["run", "command", "check", "verdict", "detail"]);
    let mut checks = Vec::new();
    for dir in &dirs {
        let run = dir.strip_prefix(&root).unwrap_or(dir).display().to_string();
        let run = if run.is_empty() { ".".to_string() } else { run };
        match RunManifest::read(dir) {
            Ok(m) => {
                let bad = m.mismatches(dir);
                table.push(vec![
                    run.clone().into(),
                    m.command.clone().into(),
                    "digests".into(),
                    if bad.is_empty() { "pass" } else { "fail" }.into(),
                    format!("{} outputs; mismatched: {}", m.outputs.len(), bad.join(" ")).into(),
                ]);
                for c in &m.checks {
                    let verdict = if c.passed() { "pass" } else { "fail" };
                    table.push(vec![
                        run.clone().into(),
                        m.command.clone().into(),
                        c.name.clone().into(),
                        verdict.into(),
                        c.detail.clone().into(),
                    ]);
                }
                if let Some(e) = &m.error {
                    table.push(vec![
                        run.clone().into(),
                        m.command.clone().into(),
                        "error".into(),
                        "fail".into(),
                        e.clone().into(),
                    ]);
                }
                let failed: Vec<&str> = m.checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
                checks.push(Check::new(
                    run,
                    bad.is_empty() && m.all_passed(),
                    format!(
                        "{}: {} checks, failed [{}], digest mismatches {}",
                        m.command,
                        m.checks.len(),
                        failed.join(", "),
                        bad.len()
                    ),
                ));
            }
            Err(e) => checks.push(Check::new(run, false, format!("unreadable manifest: {e}"))),
        }
    }
    Ok(Outcome { tables: vec![table], plots: Vec::new(), checks, summary: json!({ "runs": dirs.len() }) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, Flags};

    fn parse(command: CommandId, args: &[&str]) -> Result<RunConfig, ConfigError> {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        parse_config(command, "", &args, &Flags::default())
    }

    #[test]
    fn core_parameter_errors_point_at_the_config_key() {
        let e = parse(CommandId::ScalingLimit, &["coef=0"]).unwrap_err().to_string();
        assert!(e.starts_with("argument 1:"), "{e}");
        let e = parse(CommandId::Simulate, &["kind=subordinator", "alpha=1.5"]).unwrap_err().to_string();
        assert!(e.starts_with("argument 2:"), "{e}");
    }

    #[test]
    fn interval_and_grid_constraints() {
        assert!(parse(CommandId::Tails, &["mode=constant", "a=1", "b=0.5"]).is_err());
        assert!(parse(CommandId::Density, &["x_min=1", "x_max=0"]).is_err());
        assert!(parse(CommandId::Localtime, &["mode=moment", "h_grid=0.5,0"]).is_err());
        assert!(parse(CommandId::PdeCheck, &["case=z"]).is_err());
        assert!(parse(CommandId::Oracle, &["gamma=1"]).is_err());
        assert!(parse(CommandId::PdeCheck, &["case=f", "H=0.5"]).is_ok());
    }

    #[test]
    fn simulate_outcome_shape() {
        let cfg = parse(CommandId::Simulate, &["paths=2", "steps=4", "dim=2"]).unwrap();
        let o = execute(&cfg).unwrap();
        assert_eq!(o.tables[0].columns, ["path", "t", "y1", "x1", "y2", "x2"]);
        assert_eq!(o.tables[0].rows.len(), 10);
        assert!(o.checks.iter().all(Check::passed));
        assert_eq!(o.tables[0].reals("x1")[0], 0.0);
    }

    #[test]
    fn help_names_the_tables_each_command_writes() {
        let cfg = parse(CommandId::PdeCheck, &["case=d"]).unwrap();
        let o = execute(&cfg).unwrap();
        for t in &o.tables {
            assert!(output_help(CommandId::PdeCheck).contains(&format!("{}.csv: {}", t.name, t.columns.join(","))));
        }
    }
}
