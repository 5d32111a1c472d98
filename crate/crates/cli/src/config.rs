//! Run configuration: a flat `key=value` file (one pair per line, `#`
//! comments), command-line `key=value` overrides, and `--seed/--out/--workers`
//! flags, resolved in that order of increasing precedence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

/// Where a resolved value came from; used to point errors at their source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Default,
    Line(usize),
    Argument(usize),
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Argument(n) => write!(f, "argument {n}"),
            Origin::Flag => write!(f, "flag"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: expected `key=value`, got `{text}`")]
    Syntax { origin: Origin, text: String },

    #[error("{origin}: unknown key `{key}` for command `{command}`")]
    UnknownKey { origin: Origin, key: String, command: &'static str },

    #[error("{origin}: duplicate key `{key}`")]
    Duplicate { origin: Origin, key: String },

    #[error("{origin}: `{key}` expects {expected}, got `{value}`")]
    Type { origin: Origin, key: String, expected: String, value: String },

    #[error("missing required key `{key}` for command `{command}`")]
    Missing { key: &'static str, command: &'static str },

    #[error("{origin}: {reason}")]
    Domain { origin: Origin, reason: String },
}

/// Entry points of the verification matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandId {
    Simulate,
    Density,
    PdeCheck,
    Localtime,
    ScalingLimit,
    Tails,
    Oracle,
    Report,
}

impl CommandId {
    pub const ALL: [CommandId; 8] = [
        CommandId::Simulate,
        CommandId::Density,
        CommandId::PdeCheck,
        CommandId::Localtime,
        CommandId::ScalingLimit,
        CommandId::Tails,
        CommandId::Oracle,
        CommandId::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommandId::Simulate => "simulate",
            CommandId::Density => "density",
            CommandId::PdeCheck => "pde-check",
            CommandId::Localtime => "localtime",
            CommandId::ScalingLimit => "scaling-limit",
            CommandId::Tails => "tails",
            CommandId::Oracle => "oracle",
            CommandId::Report => "report",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for CommandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Value type of a parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kind {
    Int,
    Real,
    Enum(&'static [&'static str]),
    RealList,
    Text,
}

impl Kind {
    fn describe(self) -> String {
        match self {
            Kind::Int => "a nonnegative integer".into(),
            Kind::Real => "a real number".into(),
            Kind::Enum(options) => format!("one of {}", options.join("|")),
            Kind::RealList => "a comma-separated list of reals".into(),
            Kind::Text => "text".into(),
        }
    }

    fn parse(self, raw: &str) -> Option<Value> {
        match self {
            Kind::Int => raw.parse::<u64>().ok().map(Value::Int),
            Kind::Real => parse_real(raw).map(Value::Real),
            Kind::Enum(options) => options.contains(&raw).then(|| Value::Text(raw.to_string())),
            Kind::RealList => {
                let items: Option<Vec<f64>> = raw.split(',').map(|s| parse_real(s.trim())).collect();
                items.filter(|v| !v.is_empty()).map(Value::List)
            }
            Kind::Text => (!raw.is_empty()).then(|| Value::Text(raw.to_string())),
        }
    }
}

fn parse_real(raw: &str) -> Option<f64> {
    raw.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// One documented parameter of a command.
#[derive(Clone, Copy, Debug)]
pub struct Param {
    pub key: &'static str,
    pub kind: Kind,
    /// `None` marks a required key (or an optional one, see `optional`).
    pub default: Option<&'static str>,
    pub optional: bool,
    pub help: &'static str,
}

const fn p(key: &'static str, kind: Kind, default: &'static str, help: &'static str) -> Param {
    Param { key, kind, default: Some(default), optional: false, help }
}

const fn required(key: &'static str, kind: Kind, help: &'static str) -> Param {
    Param { key, kind, default: None, optional: false, help }
}

const fn optional(key: &'static str, kind: Kind, help: &'static str) -> Param {
    Param { key, kind, default: None, optional: true, help }
}

const KINDS: Kind = Kind::Enum(&["symmetric", "subordinator"]);

/// Keys accepted by every command.
pub const COMMON: [Param; 3] = [
    p("seed", Kind::Int, "1", "master seed"),
    p("out", Kind::Text, "out", "output directory"),
    p("workers", Kind::Int, "0", "worker threads (0 = all cores)"),
];

const SIMULATE: &[Param] = &[
    p("H", Kind::Real, "0.5", "Hurst index of the fBm"),
    p("alpha", Kind::Real, "1.5", "stability index of Y"),
    p("kind", KINDS, "symmetric", "symmetric stable process or subordinator"),
    p("sigma", Kind::Real, "1", "scale of Y"),
    p("dim", Kind::Int, "1", "number of independent coordinates"),
    p("paths", Kind::Int, "4", "number of paths"),
    p("steps", Kind::Int, "256", "grid steps on [0, horizon]"),
    p("horizon", Kind::Real, "1", "time horizon"),
];

const DENSITY: &[Param] = &[
    p("H", Kind::Real, "0.5", "Hurst index of the fBm"),
    p("alpha", Kind::Real, "1.5", "stability index of Y"),
    p("kind", KINDS, "symmetric", "symmetric stable process or subordinator"),
    p("sigma", Kind::Real, "1", "scale of Y"),
    p("t", Kind::RealList, "0.5,1,2", "times"),
    p("x_min", Kind::Real, "-8", "left end of the x grid"),
    p("x_max", Kind::Real, "8", "right end of the x grid"),
    p("x_points", Kind::Int, "401", "x grid points"),
    p("mass_tol", Kind::Real, "1e-3", "allowed |mass − 1| per time"),
];

const PDE_CHECK: &[Param] = &[
    p("case", Kind::Text, "all", "case letter a..j, case name, or `all`"),
    optional("H", Kind::Real, "override the Hurst index of the case"),
    optional("beta", Kind::Real, "override the Laplacian order of the case"),
    optional("k", Kind::Int, "override the iteration count of case j"),
    p("caputo_tol", Kind::Real, "1e-5", "tolerance of the closed-form Caputo checks"),
];

const LOCALTIME: &[Param] = &[
    required("mode", Kind::Enum(&["existence", "fourier", "moment", "holder", "oscillation"]), "diagnostic to run"),
    p("dim", Kind::Int, "1", "spatial dimension d"),
    p("H", Kind::Real, "0.5", "Hurst index of the fBm"),
    p("alpha", Kind::Real, "2", "stability index of Y"),
    p("kind", KINDS, "symmetric", "symmetric stable process or subordinator"),
    p("paths", Kind::Int, "1000", "Monte Carlo paths"),
    p("horizon", Kind::Real, "1", "time horizon T (existence, fourier)"),
    p("coarse_steps", Kind::Int, "8", "existence: steps at the coarsest level"),
    p("refinement", Kind::Int, "8", "existence: step refinement per level"),
    p("levels", Kind::Int, "3", "existence: ladder levels"),
    p("threshold", Kind::Real, "1.5", "existence: growth factor per level separating the verdicts"),
    p("points", Kind::Int, "256", "fourier: jitter points; moment, holder: steps per interval"),
    p("cutoff", Kind::Real, "200", "fourier: frequency cutoff U"),
    p("gap_tol", Kind::Real, "0.05", "fourier: allowed relative gap between the two sides"),
    p("moment", Kind::Int, "2", "moment: order n"),
    p("h_grid", Kind::RealList, "1,0.25,0.0625,0.015625,0.00390625", "moment, holder: interval lengths"),
    p("width_factor", Kind::Real, "1", "moment, holder: bandwidth factor"),
    p(
        "radii",
        Kind::RealList,
        "1,0.25,0.0625,0.015625,0.00390625,0.0009765625,0.000244140625,0.00006103515625",
        "oscillation: radii",
    ),
    p("ci_width", Kind::Real, "0.3", "holder: largest admissible 95% interval width"),
    p("exponent_tol", Kind::Real, "0.1", "oscillation: allowed |exponent − H/α|"),
];

const TAILS: &[Param] = &[
    required("mode", Kind::Enum(&["constant", "sup"]), "increment tail constant or running-maximum exponent"),
    p("H", Kind::Real, "0.5", "Hurst index of the fBm"),
    p("alpha", Kind::Real, "1", "stability index of Y"),
    p("kind", KINDS, "symmetric", "symmetric stable process or subordinator"),
    p("paths", Kind::Int, "1000000", "Monte Carlo paths"),
    optional("u_grid", Kind::RealList, "tail levels (default 5,10,20,40,80 for constant, 2,4,8,16,32 for sup)"),
    p("a", Kind::Real, "0", "constant: interval start"),
    p("b", Kind::Real, "1", "constant: interval end"),
    p("b2", Kind::Real, "2", "constant: end of the comparison interval"),
    p("constant_tol", Kind::Real, "0.1", "constant: allowed relative error"),
    p("ratio_tol", Kind::Real, "0.1", "constant: allowed relative error of the length ratio"),
    p("steps", Kind::Int, "32", "sup: grid steps on [0, 1]"),
];

const SCALING_LIMIT: &[Param] = &[
    p("gamma", Kind::Real, "0.75", "coefficient decay a_j = coef·j^{−gamma}"),
    p("coef", Kind::Real, "1", "coefficient scale"),
    p("alpha", Kind::Real, "0.5", "Pareto jump index"),
    p("n_list", Kind::RealList, "1000,10000,100000,1000000", "variance table sizes"),
    p("n_check", Kind::Real, "100000", "size at which the variance ratio is checked"),
    p("variance_tol", Kind::Real, "0.05", "allowed relative error of the variance ratio"),
    p("c_list", Kind::RealList, "100,1000,10000", "time scales c"),
    p("t", Kind::Real, "1", "evaluation time"),
    p("paths", Kind::Int, "10000", "Monte Carlo paths per c"),
    p("ks_final", Kind::Real, "0.05", "largest admissible KS at the largest c"),
    p("fdd_c", Kind::Real, "1000", "time scale of the two-time check"),
    p("t1", Kind::Real, "0.5", "first time of the two-time check"),
    p("t2", Kind::Real, "1", "second time of the two-time check"),
    p("fdd_paths", Kind::Int, "1000", "paths of the two-time check"),
    p("permutations", Kind::Int, "199", "permutations of the energy test"),
    p("fdd_level", Kind::Real, "0.01", "rejection level of the energy test"),
];

const ORACLE: &[Param] = &[
    p("simplex_points", Kind::Int, "40", "randomized simplex configurations"),
    p("simplex_max_n", Kind::Int, "8", "largest simplex dimension"),
    p("mc_samples", Kind::Int, "100000", "Monte Carlo samples per simplex configuration"),
    p("sigma_limit", Kind::Real, "3", "admissible discrepancy in error bars"),
    p("identity_configs", Kind::Int, "50", "random covariances for the conditioning identity"),
    p("identity_tol", Kind::Real, "1e-3", "admissible relative gap of the identity"),
    p("gamma", Kind::Real, "0.5", "singularity order of the nearest-point integrals"),
    p("n_max", Kind::Int, "64", "largest number of points"),
    p("random", Kind::Int, "8", "random configurations per n"),
    p("alpha", Kind::Real, "1", "stability index of the density weight"),
    p("kind", KINDS, "symmetric", "symmetric law or subordinator"),
    p("stable_slack", Kind::Real, "2", "admissible growth of the maximum ratio under doubling n"),
];

const REPORT: &[Param] = &[p("root", Kind::Text, ".", "directory searched for run manifests")];

impl CommandId {
    pub fn params(self) -> &'static [Param] {
        match self {
            CommandId::Simulate => SIMULATE,
            CommandId::Density => DENSITY,
            CommandId::PdeCheck => PDE_CHECK,
            CommandId::Localtime => LOCALTIME,
            CommandId::ScalingLimit => SCALING_LIMIT,
            CommandId::Tails => TAILS,
            CommandId::Oracle => ORACLE,
            CommandId::Report => REPORT,
        }
    }

    fn param(self, key: &str) -> Option<&'static Param> {
        self.params().iter().chain(COMMON.iter()).find(|p| p.key == key)
    }

    /// Key listing for `--help`.
    pub fn help_text(self) -> String {
        let mut s = String::from("Keys (key=value, in the config file or on the command line):\n");
        for p in self.params().iter().chain(COMMON.iter()) {
            let default = match (p.default, p.optional) {
                (Some(d), _) => format!(" [default: {d}]"),
                (None, true) => " [optional]".into(),
                (None, false) => " [required]".into(),
            };
            s.push_str(&format!("  {:<14} {}; {}{default}\n", p.key, p.help, p.kind.describe()));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(u64),
    Real(f64),
    Text(String),
    List(Vec<f64>),
}

/// Fully resolved, typed configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandId,
    pub params: BTreeMap<String, Value>,
    #[serde(skip)]
    pub origins: BTreeMap<String, Origin>,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
}

/// Flag overrides; each wins over the file and over `key=value` arguments.
#[derive(Clone, Debug, Default)]
pub struct Flags {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn split_pair(text: &str, origin: Origin) -> Result<(String, String), ConfigError> {
    let (k, v) =
        text.split_once('=').ok_or_else(|| ConfigError::Syntax { origin: origin.clone(), text: text.into() })?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(ConfigError::Syntax { origin, text: text.into() });
    }
    Ok((k.to_string(), v.to_string()))
}

/// Parse the file text and the `key=value` arguments, then apply the flags.
pub fn parse_config(command: CommandId, file: &str, args: &[String], flags: &Flags) -> Result<RunConfig, ConfigError> {
    let mut raw: BTreeMap<String, (String, Origin)> = BTreeMap::new();
    for (i, line) in file.lines().enumerate() {
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let origin = Origin::Line(i + 1);
        let (k, v) = split_pair(text, origin.clone())?;
        if raw.contains_key(&k) {
            return Err(ConfigError::Duplicate { origin, key: k });
        }
        raw.insert(k, (v, origin));
    }
    for (i, arg) in args.iter().enumerate() {
        let (k, v) = split_pair(arg, Origin::Argument(i + 1))?;
        raw.insert(k, (v, Origin::Argument(i + 1)));
    }
    for (key, value) in [
        ("seed", flags.seed.map(|s| s.to_string())),
        ("out", flags.out.as_ref().map(|p| p.display().to_string())),
        ("workers", flags.workers.map(|w| w.to_string())),
    ] {
        if let Some(v) = value {
            raw.insert(key.into(), (v, Origin::Flag));
        }
    }

    let mut params = BTreeMap::new();
    let mut origins = BTreeMap::new();
    for (key, (value, origin)) in &raw {
        let param = command.param(key).ok_or_else(|| ConfigError::UnknownKey {
            origin: origin.clone(),
            key: key.clone(),
            command: command.name(),
        })?;
        let typed = param.kind.parse(value).ok_or_else(|| ConfigError::Type {
            origin: origin.clone(),
            key: key.clone(),
            expected: param.kind.describe(),
            value: value.clone(),
        })?;
        params.insert(key.clone(), typed);
        origins.insert(key.clone(), origin.clone());
    }
    for param in command.params().iter().chain(COMMON.iter()) {
        if params.contains_key(param.key) {
            continue;
        }
        match param.default {
            Some(d) => {
                params.insert(param.key.into(), param.kind.parse(d).expect("defaults parse"));
                origins.insert(param.key.into(), Origin::Default);
            }
            None if param.optional => {}
            None => return Err(ConfigError::Missing { key: param.key, command: command.name() }),
        }
    }
    let seed = match params.remove("seed") {
        Some(Value::Int(s)) => s,
        _ => unreachable!("seed is typed Int with a default"),
    };
    let out = match params.remove("out") {
        Some(Value::Text(s)) => PathBuf::from(s),
        _ => unreachable!("out is typed Text with a default"),
    };
    let workers = match params.remove("workers") {
        Some(Value::Int(w)) => w as usize,
        _ => unreachable!("workers is typed Int with a default"),
    };
    let config = RunConfig { command, params, origins, seed, out, workers };
    crate::commands::validate(&config)?;
    Ok(config)
}

impl RunConfig {
    pub fn real(&self, key: &str) -> f64 {
        match self.params.get(key) {
            Some(Value::Real(v)) => *v,
            other => panic!("`{key}` is not a resolved real: {other:?}"),
        }
    }

    pub fn opt_real(&self, key: &str) -> Option<f64> {
        self.params.get(key).map(|_| self.real(key))
    }

    pub fn int(&self, key: &str) -> u64 {
        match self.params.get(key) {
            Some(Value::Int(v)) => *v,
            other => panic!("`{key}` is not a resolved integer: {other:?}"),
        }
    }

    pub fn opt_int(&self, key: &str) -> Option<u64> {
        self.params.get(key).map(|_| self.int(key))
    }

    pub fn count(&self, key: &str) -> usize {
        self.int(key) as usize
    }

    pub fn text(&self, key: &str) -> &str {
        match self.params.get(key) {
            Some(Value::Text(v)) => v,
            other => panic!("`{key}` is not resolved text: {other:?}"),
        }
    }

    pub fn list(&self, key: &str) -> &[f64] {
        match self.params.get(key) {
            Some(Value::List(v)) => v,
            other => panic!("`{key}` is not a resolved list: {other:?}"),
        }
    }

    pub fn opt_list(&self, key: &str) -> Option<&[f64]> {
        self.params.get(key).map(|_| self.list(key))
    }

    pub fn origin(&self, key: &str) -> Origin {
        self.origins.get(key).cloned().unwrap_or(Origin::Default)
    }

    /// Domain error attributed to the source of `key`.
    pub fn domain(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::Domain { origin: self.origin(key), reason: reason.into() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Flags {
        Flags::default()
    }

    #[test]
    fn empty_file_with_required_keys_on_the_command_line() {
        let c = parse_config(CommandId::Tails, "", &["mode=sup".into()], &flags()).unwrap();
        assert_eq!(c.text("mode"), "sup");
        assert_eq!(c.seed, 1);
        assert_eq!(c.real("alpha"), 1.0);
    }

    #[test]
    fn missing_required_key() {
        let e = parse_config(CommandId::Tails, "", &[], &flags()).unwrap_err();
        assert_eq!(e, ConfigError::Missing { key: "mode", command: "tails" });
    }

    #[test]
    fn flag_seed_overrides_file() {
        let f = Flags { seed: Some(7), ..flags() };
        let c = parse_config(CommandId::Simulate, "seed=3\n", &[], &f).unwrap();
        assert_eq!(c.seed, 7);
        let c = parse_config(CommandId::Simulate, "seed=3\n", &[], &flags()).unwrap();
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# a run\n\nH = 0.3 # rough\nalpha=0.5\nkind=subordinator\n";
        let c = parse_config(CommandId::Simulate, text, &[], &flags()).unwrap();
        assert_eq!(c.real("H"), 0.3);
        assert_eq!(c.text("kind"), "subordinator");
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let e = parse_config(CommandId::Simulate, "H=0.5\nfoo=1\n", &[], &flags()).unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey { origin: Origin::Line(2), key: "foo".into(), command: "simulate" });
        assert!(e.to_string().starts_with("line 2:"));
    }

    #[test]
    fn type_mismatch_reports_its_line() {
        let e = parse_config(CommandId::Simulate, "paths=many\n", &[], &flags()).unwrap_err();
        assert!(matches!(e, ConfigError::Type { origin: Origin::Line(1), .. }), "{e}");
        let e = parse_config(CommandId::Simulate, "kind=other\n", &[], &flags()).unwrap_err();
        assert!(e.to_string().contains("symmetric|subordinator"));
    }

    #[test]
    fn syntax_and_duplicates() {
        let e = parse_config(CommandId::Simulate, "H 0.5\n", &[], &flags()).unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { origin: Origin::Line(1), .. }));
        let e = parse_config(CommandId::Simulate, "H=0.5\nH=0.6\n", &[], &flags()).unwrap_err();
        assert!(matches!(e, ConfigError::Duplicate { origin: Origin::Line(2), .. }));
    }

    #[test]
    fn alpha_out_of_range() {
        let e = parse_config(CommandId::Simulate, "alpha=2.5\n", &[], &flags()).unwrap_err();
        let msg = e.to_string();
        assert!(msg.starts_with("line 1:") && msg.contains("out of (0,2]"), "{msg}");
    }

    #[test]
    fn arguments_override_file_and_lists_parse() {
        let c = parse_config(CommandId::Density, "t=1\n", &["t=0.5, 2".into()], &flags()).unwrap();
        assert_eq!(c.list("t"), &[0.5, 2.0]);
        assert_eq!(c.origin("t"), Origin::Argument(1));
    }

    #[test]
    fn help_lists_every_key() {
        for cmd in CommandId::ALL {
            let help = cmd.help_text();
            for p in cmd.params() {
                assert!(help.contains(p.key));
            }
            assert_eq!(CommandId::from_name(cmd.name()), Some(cmd));
        }
    }
}
