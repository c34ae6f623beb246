//! Flat key = value experiment configs.
//!
//! Grammar: one `key = value` pair per line, `#` starts a comment line,
//! `[section]` lines are allowed as visual grouping and carry no meaning.
//! Validation collects every error (with its line number) instead of
//! stopping at the first.

use std::collections::BTreeMap;
use std::fmt;

use crate::table::format_cell;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line number; 0 for whole-config constraint violations.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "{}", self.message)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    OuFilter,
    WienerFilterFreq,
    OuSmooth,
    WienerProcess,
    Pll,
    Oscillator,
    Sweep,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::OuFilter => "ou-filter",
            ExperimentKind::WienerFilterFreq => "wiener-filter-freq",
            ExperimentKind::OuSmooth => "ou-smooth",
            ExperimentKind::WienerProcess => "wiener-process",
            ExperimentKind::Pll => "pll",
            ExperimentKind::Oscillator => "oscillator",
            ExperimentKind::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ou-filter" => ExperimentKind::OuFilter,
            "wiener-filter-freq" => ExperimentKind::WienerFilterFreq,
            "ou-smooth" => ExperimentKind::OuSmooth,
            "wiener-process" => ExperimentKind::WienerProcess,
            "pll" => ExperimentKind::Pll,
            "oscillator" => ExperimentKind::Oscillator,
            "sweep" => ExperimentKind::Sweep,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PllMessage {
    Ou,
    Wiener,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PllMode {
    Linearized,
    Nonlinear,
    Canonical,
}

impl PllMode {
    pub fn name(&self) -> &'static str {
        match self {
            PllMode::Linearized => "linearized",
            PllMode::Nonlinear => "nonlinear",
            PllMode::Canonical => "canonical",
        }
    }

    pub fn code(&self) -> f64 {
        match self {
            PllMode::Linearized => 0.0,
            PllMode::Nonlinear => 1.0,
            PllMode::Canonical => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    KalmanBucy,
    WienerLoop,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::KalmanBucy => "kb",
            EstimatorKind::WienerLoop => "wiener",
        }
    }

    pub fn code(&self) -> f64 {
        match self {
            EstimatorKind::KalmanBucy => 0.0,
            EstimatorKind::WienerLoop => 1.0,
        }
    }
}

/// Parsed and validated experiment description. Every field holds its
/// effective value (defaults applied), so the canonical echo reparses to an
/// equal config.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub k: Option<f64>,
    pub kappa: Option<f64>,
    pub beta: f64,
    pub lambda: Option<f64>,
    pub photon_number: Option<f64>,
    pub q: Option<f64>,
    pub mass: f64,
    pub omega_m: f64,
    pub hbar: f64,
    pub t0: f64,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub message: Option<PllMessage>,
    pub mode: PllMode,
    pub estimator: EstimatorKind,
    pub smoothing: bool,
    pub t_d: Option<f64>,
    pub out: Option<String>,
    pub allow_coarse_dt: bool,
    pub omega_count: usize,
    pub sweep_experiment: Option<ExperimentKind>,
    pub sweep_param: Option<String>,
    pub sweep_values: Vec<f64>,
}

const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "k",
    "kappa",
    "beta",
    "Lambda",
    "N",
    "Q",
    "mass",
    "omega_m",
    "hbar",
    "t0",
    "dt",
    "duration",
    "trials",
    "master_seed",
    "message",
    "mode",
    "estimator",
    "smoothing",
    "t_d",
    "out",
    "allow_coarse_dt",
    "omega_count",
    "sweep_experiment",
    "sweep_param",
    "sweep_values",
];

struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|(l, _)| *l).unwrap_or(0)
    }

    fn float(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<f64> {
        let (line, value) = self.entries.get(key)?;
        match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                errors.push(ConfigError {
                    line: *line,
                    message: format!("key '{key}' needs a finite numeric value, got '{value}'"),
                });
                None
            }
        }
    }

    fn integer(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<u64> {
        let (line, value) = self.entries.get(key)?;
        match value.parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                errors.push(ConfigError {
                    line: *line,
                    message: format!("key '{key}' needs a non-negative integer, got '{value}'"),
                });
                None
            }
        }
    }

    fn boolean(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<bool> {
        let (line, value) = self.entries.get(key)?;
        match value.as_str() {
            "1" | "true" | "on" | "yes" => Some(true),
            "0" | "false" | "off" | "no" => Some(false),
            other => {
                errors.push(ConfigError {
                    line: *line,
                    message: format!("key '{key}' needs on/off, got '{other}'"),
                });
                None
            }
        }
    }

    fn string(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }
}

fn scan_lines(text: &str) -> (RawConfig, Vec<ConfigError>) {
    let mut entries = BTreeMap::new();
    let mut errors = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            continue; // section headers are decorative
        }
        match line.split_once('=') {
            Some((key, value)) => {
                let key = key.trim().to_string();
                let value = value.trim().to_string();
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    errors.push(ConfigError {
                        line: line_no,
                        message: format!("unknown key '{key}'"),
                    });
                    continue;
                }
                if entries.contains_key(&key) {
                    errors.push(ConfigError {
                        line: line_no,
                        message: format!("duplicate key '{key}'"),
                    });
                    continue;
                }
                entries.insert(key, (line_no, value));
            }
            None => errors.push(ConfigError {
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            }),
        }
    }
    (RawConfig { entries }, errors)
}

/// Maximum `dt * gamma` accepted without the override flag.
pub const DT_GAMMA_LIMIT: f64 = 0.02;

pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let (raw, mut errors) = scan_lines(text);

    let kind = match raw.string("experiment") {
        Some(name) => match ExperimentKind::parse(name) {
            Some(kind) => Some(kind),
            None => {
                errors.push(ConfigError {
                    line: raw.line_of("experiment"),
                    message: format!(
                        "unknown experiment '{name}' (expected ou-filter, wiener-filter-freq, \
                         ou-smooth, wiener-process, pll, oscillator or sweep)"
                    ),
                });
                None
            }
        },
        None => {
            errors.push(ConfigError { line: 0, message: "missing required key 'experiment'".into() });
            None
        }
    };

    let k = raw.float("k", &mut errors);
    let kappa = raw.float("kappa", &mut errors);
    let beta = raw.float("beta", &mut errors).unwrap_or(1.0);
    let lambda = raw.float("Lambda", &mut errors);
    let photon_number = raw.float("N", &mut errors);
    let q = raw.float("Q", &mut errors);
    let mass = raw.float("mass", &mut errors).unwrap_or(1.0);
    let omega_m = raw.float("omega_m", &mut errors).unwrap_or(1.0);
    let hbar = raw.float("hbar", &mut errors).unwrap_or(1.0);
    let t0 = raw.float("t0", &mut errors).unwrap_or(0.0);
    let dt = raw.float("dt", &mut errors);
    let duration = raw.float("duration", &mut errors);
    let trials = raw.integer("trials", &mut errors).map(|v| v as usize);
    let master_seed = raw.integer("master_seed", &mut errors);
    let t_d = raw.float("t_d", &mut errors);
    let out = raw.string("out").map(|s| s.to_string());
    let allow_coarse_dt = raw.boolean("allow_coarse_dt", &mut errors).unwrap_or(false);
    let omega_count = raw.integer("omega_count", &mut errors).map(|v| v as usize).unwrap_or(1000);

    let message = match raw.string("message") {
        Some("ou") => Some(PllMessage::Ou),
        Some("wiener") => Some(PllMessage::Wiener),
        Some(other) => {
            errors.push(ConfigError {
                line: raw.line_of("message"),
                message: format!("key 'message' needs ou or wiener, got '{other}'"),
            });
            None
        }
        None => None,
    };
    let mode = match raw.string("mode") {
        Some("linearized") | None => PllMode::Linearized,
        Some("nonlinear") => PllMode::Nonlinear,
        Some("canonical") => PllMode::Canonical,
        Some(other) => {
            errors.push(ConfigError {
                line: raw.line_of("mode"),
                message: format!(
                    "key 'mode' needs linearized, nonlinear or canonical, got '{other}'"
                ),
            });
            PllMode::Linearized
        }
    };
    let estimator = match raw.string("estimator") {
        Some("kb") | None => EstimatorKind::KalmanBucy,
        Some("wiener") => EstimatorKind::WienerLoop,
        Some(other) => {
            errors.push(ConfigError {
                line: raw.line_of("estimator"),
                message: format!("key 'estimator' needs kb or wiener, got '{other}'"),
            });
            EstimatorKind::KalmanBucy
        }
    };
    let smoothing = raw.boolean("smoothing", &mut errors).unwrap_or(false);

    let sweep_experiment = match raw.string("sweep_experiment") {
        Some(name) => match ExperimentKind::parse(name) {
            Some(ExperimentKind::Sweep) | None => {
                errors.push(ConfigError {
                    line: raw.line_of("sweep_experiment"),
                    message: format!("'{name}' is not a sweepable experiment"),
                });
                None
            }
            some => some,
        },
        None => None,
    };
    let sweep_param = raw.string("sweep_param").map(|s| s.to_string());
    let mut sweep_values = Vec::new();
    if let Some(list) = raw.string("sweep_values") {
        for part in list.split(',') {
            match part.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => sweep_values.push(v),
                _ => errors.push(ConfigError {
                    line: raw.line_of("sweep_values"),
                    message: format!("sweep_values entry '{}' is not numeric", part.trim()),
                }),
            }
        }
    }

    let Some(kind) = kind else {
        return Err(errors);
    };

    let mut cfg = ExperimentConfig {
        kind,
        k,
        kappa,
        beta,
        lambda,
        photon_number,
        q,
        mass,
        omega_m,
        hbar,
        t0,
        dt,
        duration,
        trials: trials.unwrap_or(0),
        master_seed: master_seed.unwrap_or(0),
        message,
        mode,
        estimator,
        smoothing,
        t_d,
        out,
        allow_coarse_dt,
        omega_count,
        sweep_experiment,
        sweep_param,
        sweep_values,
    };

    validate(&mut cfg, &raw, trials.is_some(), master_seed.is_some(), &mut errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

fn require_positive(
    value: Option<f64>,
    key: &str,
    kind: ExperimentKind,
    raw: &RawConfig,
    errors: &mut Vec<ConfigError>,
) -> Option<f64> {
    match value {
        Some(v) if v > 0.0 => Some(v),
        Some(v) => {
            errors.push(ConfigError {
                line: raw.line_of(key),
                message: format!("key '{key}' must be positive for {}, got {v}", kind.name()),
            });
            None
        }
        None => {
            errors.push(ConfigError {
                line: 0,
                message: format!("experiment {} requires key '{key}'", kind.name()),
            });
            None
        }
    }
}

fn validate(
    cfg: &mut ExperimentConfig,
    raw: &RawConfig,
    has_trials: bool,
    has_seed: bool,
    errors: &mut Vec<ConfigError>,
) {
    let kind = cfg.kind;
    let target = if kind == ExperimentKind::Sweep {
        match cfg.sweep_experiment {
            Some(t) => t,
            None => {
                errors.push(ConfigError {
                    line: 0,
                    message: "experiment sweep requires key 'sweep_experiment'".into(),
                });
                return;
            }
        }
    } else {
        kind
    };
    if kind == ExperimentKind::Sweep {
        if cfg.sweep_param.is_none() {
            errors.push(ConfigError {
                line: 0,
                message: "experiment sweep requires key 'sweep_param'".into(),
            });
        }
        if cfg.sweep_values.is_empty() {
            errors.push(ConfigError {
                line: 0,
                message: "experiment sweep requires a non-empty 'sweep_values' list".into(),
            });
        }
        if let Some(param) = &cfg.sweep_param {
            const SWEEPABLE: &[&str] =
                &["k", "kappa", "beta", "Lambda", "N", "Q", "mass", "omega_m", "hbar"];
            if !SWEEPABLE.contains(&param.as_str()) {
                errors.push(ConfigError {
                    line: raw.line_of("sweep_param"),
                    message: format!("'{param}' is not a sweepable model parameter"),
                });
            }
        }
    }

    // Model-parameter requirements per experiment family.
    let needs_ou = matches!(
        (target, cfg.message),
        (ExperimentKind::OuFilter, _)
            | (ExperimentKind::WienerFilterFreq, _)
            | (ExperimentKind::OuSmooth, _)
            | (ExperimentKind::Pll, Some(PllMessage::Ou))
    );
    let needs_wiener = matches!(
        (target, cfg.message),
        (ExperimentKind::WienerProcess, _) | (ExperimentKind::Pll, Some(PllMessage::Wiener))
    );
    if target == ExperimentKind::Pll && cfg.message.is_none() {
        errors.push(ConfigError {
            line: 0,
            message: "experiment pll requires key 'message' (ou or wiener)".into(),
        });
    }
    if needs_ou {
        require_positive(cfg.k, "k", target, raw, errors);
        require_positive(cfg.kappa, "kappa", target, raw, errors);
        require_positive(cfg.lambda, "Lambda", target, raw, errors);
    }
    if needs_wiener {
        require_positive(cfg.photon_number, "N", target, raw, errors);
        require_positive(cfg.kappa, "kappa", target, raw, errors);
        if (cfg.beta - 1.0).abs() > 1e-12 {
            errors.push(ConfigError {
                line: raw.line_of("beta"),
                message: "the Wiener-process formulas assume beta = 1".into(),
            });
        }
    }
    if target == ExperimentKind::Oscillator {
        require_positive(cfg.q, "Q", target, raw, errors);
    }
    if !(cfg.beta > 0.0) {
        errors.push(ConfigError {
            line: raw.line_of("beta"),
            message: format!("beta must be positive, got {}", cfg.beta),
        });
    }

    // Grid and Monte Carlo requirements.
    let needs_mc = matches!(
        target,
        ExperimentKind::OuFilter
            | ExperimentKind::OuSmooth
            | ExperimentKind::WienerProcess
            | ExperimentKind::Pll
    );
    if needs_mc {
        if !has_trials {
            errors.push(ConfigError {
                line: 0,
                message: format!("experiment {} requires key 'trials'", target.name()),
            });
        }
        if !has_seed {
            errors.push(ConfigError {
                line: 0,
                message: format!("experiment {} requires key 'master_seed'", target.name()),
            });
        }
    }
    if target == ExperimentKind::Oscillator && cfg.trials > 0 && !has_seed {
        errors.push(ConfigError {
            line: 0,
            message: "oscillator validation with trials > 0 requires 'master_seed'".into(),
        });
    }
    if target == ExperimentKind::Pll && cfg.smoothing && cfg.estimator != EstimatorKind::WienerLoop
    {
        errors.push(ConfigError {
            line: raw.line_of("smoothing"),
            message: "post-loop smoothing needs estimator = wiener (the loop filter \
                      the anticausal stage was designed against)"
                .into(),
        });
    }
    if let Some(dt) = cfg.dt {
        if !(dt > 0.0) {
            errors.push(ConfigError {
                line: raw.line_of("dt"),
                message: format!("dt must be positive, got {dt}"),
            });
        }
    }
    if let Some(duration) = cfg.duration {
        if !(duration > 0.0) {
            errors.push(ConfigError {
                line: raw.line_of("duration"),
                message: format!("duration must be positive, got {duration}"),
            });
        }
    }

    // dt * gamma constraint (unless overridden).
    if let (Some(dt), Some(gamma)) = (cfg.dt, cfg.closed_loop_rate()) {
        if dt * gamma >= DT_GAMMA_LIMIT && !cfg.allow_coarse_dt {
            errors.push(ConfigError {
                line: raw.line_of("dt"),
                message: format!(
                    "dt * gamma = {:.3} exceeds {DT_GAMMA_LIMIT} (gamma = {gamma:.4}); \
                     refine dt or set allow_coarse_dt = on",
                    dt * gamma
                ),
            });
        }
    }
}

impl ExperimentConfig {
    /// Effective closed-loop rate of the configured model, used for default
    /// grids and the dt constraint.
    pub fn closed_loop_rate(&self) -> Option<f64> {
        let target = if self.kind == ExperimentKind::Sweep {
            self.sweep_experiment?
        } else {
            self.kind
        };
        match target {
            ExperimentKind::OuFilter | ExperimentKind::WienerFilterFreq | ExperimentKind::OuSmooth => {
                let (k, kappa, lambda) = (self.k?, self.kappa?, self.lambda?);
                Some(k * (kappa * lambda / k + 1.0).sqrt())
            }
            ExperimentKind::WienerProcess => {
                Some(2.0 * self.kappa? * self.photon_number?.sqrt())
            }
            ExperimentKind::Pll => match self.message? {
                PllMessage::Ou => {
                    let (k, kappa, lambda) = (self.k?, self.kappa?, self.lambda?);
                    Some(k * (kappa * lambda / k + 1.0).sqrt())
                }
                PllMessage::Wiener => Some(2.0 * self.kappa? * self.photon_number?.sqrt()),
            },
            ExperimentKind::Oscillator => {
                let q = self.q?;
                if q <= 0.0 {
                    return None;
                }
                let s = ((1.0 + q * q).sqrt() - 1.0).sqrt();
                let inv_tf = std::f64::consts::SQRT_2 * self.omega_m * s;
                Some(inv_tf.max(self.omega_m))
            }
            ExperimentKind::Sweep => None,
        }
    }

    /// Default `dt = min(1/gamma, duration)/200` when not configured.
    pub fn effective_dt(&self) -> Option<f64> {
        self.dt.or_else(|| {
            let gamma = self.closed_loop_rate()?;
            let horizon = (1.0 / gamma).min(self.effective_duration()?);
            Some(horizon / 200.0)
        })
    }

    /// Default `duration = 40/gamma` when not configured.
    pub fn effective_duration(&self) -> Option<f64> {
        self.duration.or_else(|| Some(40.0 / self.closed_loop_rate()?))
    }

    /// Canonical flat echo; reparsing it yields an equal config.
    pub fn echo(&self) -> String {
        fn num(lines: &mut Vec<String>, key: &str, v: Option<f64>) {
            if let Some(v) = v {
                lines.push(format!("{key} = {}", format_cell(v)));
            }
        }
        let mut lines = vec![format!("experiment = {}", self.kind.name())];
        num(&mut lines, "k", self.k);
        num(&mut lines, "kappa", self.kappa);
        num(&mut lines, "beta", Some(self.beta));
        num(&mut lines, "Lambda", self.lambda);
        num(&mut lines, "N", self.photon_number);
        num(&mut lines, "Q", self.q);
        num(&mut lines, "mass", Some(self.mass));
        num(&mut lines, "omega_m", Some(self.omega_m));
        num(&mut lines, "hbar", Some(self.hbar));
        num(&mut lines, "t0", Some(self.t0));
        num(&mut lines, "dt", self.dt);
        num(&mut lines, "duration", self.duration);
        lines.push(format!("trials = {}", self.trials));
        lines.push(format!("master_seed = {}", self.master_seed));
        if let Some(message) = self.message {
            lines.push(format!(
                "message = {}",
                match message {
                    PllMessage::Ou => "ou",
                    PllMessage::Wiener => "wiener",
                }
            ));
        }
        lines.push(format!("mode = {}", self.mode.name()));
        lines.push(format!("estimator = {}", self.estimator.name()));
        lines.push(format!("smoothing = {}", if self.smoothing { "on" } else { "off" }));
        num(&mut lines, "t_d", self.t_d);
        if let Some(out) = &self.out {
            lines.push(format!("out = {out}"));
        }
        lines.push(format!(
            "allow_coarse_dt = {}",
            if self.allow_coarse_dt { "on" } else { "off" }
        ));
        lines.push(format!("omega_count = {}", self.omega_count));
        if let Some(se) = self.sweep_experiment {
            lines.push(format!("sweep_experiment = {}", se.name()));
        }
        if let Some(sp) = &self.sweep_param {
            lines.push(format!("sweep_param = {sp}"));
        }
        if !self.sweep_values.is_empty() {
            let values: Vec<String> =
                self.sweep_values.iter().map(|v| format_cell(*v)).collect();
            lines.push(format!("sweep_values = {}", values.join(",")));
        }
        lines.join("\n")
    }

    /// Apply one numeric model-parameter override (used by sweeps).
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<(), String> {
        match key {
            "k" => self.k = Some(value),
            "kappa" => self.kappa = Some(value),
            "beta" => self.beta = value,
            "Lambda" => self.lambda = Some(value),
            "N" => self.photon_number = Some(value),
            "Q" => self.q = Some(value),
            "mass" => self.mass = value,
            "omega_m" => self.omega_m = value,
            "hbar" => self.hbar = value,
            other => return Err(format!("'{other}' is not a sweepable model parameter")),
        }
        Ok(())
    }
}

/// Pull the `# config-begin` .. `# config-end` block back out of an emitted
/// CSV; reparsing it reproduces the config that generated the file.
pub fn extract_config_echo(csv_text: &str) -> Option<String> {
    let mut lines = Vec::new();
    let mut inside = false;
    for line in csv_text.lines() {
        match line.trim() {
            "# config-begin" => inside = true,
            "# config-end" => return Some(lines.join("\n")),
            other if inside => lines.push(other.strip_prefix("# ")?.to_string()),
            _ => {}
        }
    }
    None
}
