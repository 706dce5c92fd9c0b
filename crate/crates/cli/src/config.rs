//! The run configuration file.
//!
//! ```toml
//! output_dir = "out"            # optional, default "out"
//!
//! [model]
//! agents = 10                   # optional when `initial` is given
//! dim = 1                       # default 1
//! scaling = "fixed"             # "fixed" | "rescaled", default "fixed"
//! seed = 0                      # default 0
//! initial = [[0.0], [1.0]]      # optional, one row per agent
//!
//! [kernel]
//! kind = "rational-decay"       # "constant" | "rational-decay" | "piecewise-linear"
//! a = 1.0                       # constant: value; piecewise-linear: knots = [[r, phi], ...]
//! b = 1.0
//! p = 1.0
//!
//! [schedule]
//! family = "duty-cycle"         # "constant" | "duty-cycle" | "random-blackout" | "random-levels"
//! mu = 0.3
//! period = 1.0                  # default 1
//! pairing = "independent"       # "independent" | "symmetric" | "shared", default "independent"
//! levels = [0.0, 0.5, 1.0]      # random-levels only
//! value = 0.5                   # constant only, default mu / period
//!
//! [integrator]                  # optional section
//! dt = 0.001                    # default period / 1000
//! record_every = 1              # default 1
//! max_time = 100.0              # default 100
//! stop_diameter = 0.0           # default 0 (disabled)
//!
//! [sweep]                       # required by `sweep` only
//! mu_values = [1.0, 0.6, 0.3, 0.1]
//! trials = 100
//! epsilon = 0.01                # default 0.01
//! max_time = 460.517            # default 100 ln 100
//! max_time_scales_with_mu = true  # cutoff = max_time * period / mu, default true
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use pe_consensus::{
    initial_state, trial_ensemble, InfluenceKernel, IntegratorSettings, MaxTime, Model, Pairing,
    PeParameters, ScalingMode, ScheduleEnsemble, ScheduleFamily, State, SweepSpec,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: ModelSection,
    pub kernel: InfluenceKernel,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub scaling: ScalingMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Constant,
    DutyCycle,
    RandomBlackout,
    RandomLevels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub family: FamilyName,
    pub mu: f64,
    #[serde(default = "unit")]
    pub period: f64,
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default)]
    pub stop_diameter: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            dt: None,
            record_every: 1,
            max_time: default_max_time(),
            stop_diameter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub mu_values: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_sweep_cutoff")]
    pub max_time: f64,
    #[serde(default = "yes")]
    pub max_time_scales_with_mu: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_max_time() -> f64 {
    100.0
}

fn default_epsilon() -> f64 {
    1e-2
}

fn default_sweep_cutoff() -> f64 {
    100.0 * 100f64.ln()
}

/// A configuration problem, anchored to a line of the file when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path.display(), line, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A parsed config together with its source text, for error anchoring.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    source: String,
}

/// Everything a single simulation needs.
pub struct Simulation {
    pub initial: State,
    pub ensemble: ScheduleEnsemble,
    pub model: Model,
    pub settings: IntegratorSettings,
}

impl RunConfig {
    /// Canonical serialized form; parsing it back yields the same config.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn family(&self) -> ScheduleFamily {
        match self.schedule.family {
            FamilyName::Constant => ScheduleFamily::Constant {
                value: self.schedule.value,
            },
            FamilyName::DutyCycle => ScheduleFamily::DutyCycle,
            FamilyName::RandomBlackout => ScheduleFamily::RandomBlackout,
            FamilyName::RandomLevels => ScheduleFamily::RandomLevels {
                levels: self.schedule.levels.clone().unwrap_or_default(),
            },
        }
    }

    pub fn model(&self) -> Model {
        Model::new(self.kernel.clone(), self.model.scaling)
    }

    pub fn dt(&self) -> f64 {
        self.integrator.dt.unwrap_or(1e-3 * self.schedule.period)
    }

    fn spec(&self, mu_values: Vec<f64>, n_trials: usize, seed: u64, max_time: MaxTime) -> SweepSpec {
        let sweep = self.sweep.as_ref();
        SweepSpec {
            mu_values,
            n_trials,
            agents: self.agent_count(),
            dim: self.model.dim,
            window: self.schedule.period,
            epsilon: sweep.map_or(default_epsilon(), |s| s.epsilon),
            kernel: self.kernel.clone(),
            scaling: self.model.scaling,
            family: self.family(),
            pairing: self.schedule.pairing,
            master_seed: seed,
            max_time,
            dt: self.dt(),
            record_every: self.integrator.record_every,
        }
    }

    fn agent_count(&self) -> usize {
        match (&self.model.initial, self.model.agents) {
            (Some(rows), _) => rows.len(),
            (None, Some(n)) => n,
            (None, None) => 0,
        }
    }
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(path, source)
    }

    pub fn parse(path: &Path, source: String) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(&source).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of(&source, s.start)),
            message: e.message().to_string(),
        })?;
        let loaded = LoadedConfig {
            config,
            path: path.to_path_buf(),
            source,
        };
        loaded.check()?;
        Ok(loaded)
    }

    pub(crate) fn error(&self, section: Option<&str>, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line: locate(&self.source, section, key),
            message: message.into(),
        }
    }

    /// Semantic checks that do not need any simulation.
    fn check(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        let m = &c.model;
        if m.dim == 0 {
            return Err(self.error(Some("model"), "dim", "dim must be >= 1"));
        }
        match (&m.initial, m.agents) {
            (None, None) => {
                return Err(self.error(Some("model"), "agents", "set `agents` or `initial`"))
            }
            (Some(rows), agents) => {
                if agents.is_some_and(|n| n != rows.len()) {
                    return Err(self.error(
                        Some("model"),
                        "agents",
                        format!("agents = {} but `initial` has {} rows", agents.unwrap(), rows.len()),
                    ));
                }
                if let Some(row) = rows.iter().find(|r| r.len() != m.dim) {
                    return Err(self.error(
                        Some("model"),
                        "initial",
                        format!("initial row {row:?} does not have dim = {} entries", m.dim),
                    ));
                }
            }
            _ => {}
        }
        if c.agent_count() < 2 {
            return Err(self.error(Some("model"), "agents", "need at least 2 agents"));
        }

        if let Err(e) = c.kernel.validate() {
            return Err(self.error(Some("kernel"), "kind", e.to_string()));
        }

        let s = &c.schedule;
        if !(s.period.is_finite() && s.period > 0.0) {
            return Err(self.error(Some("schedule"), "period", "period must be > 0"));
        }
        if let Err(e) = PeParameters::new(s.mu, s.period) {
            return Err(self.error(Some("schedule"), "mu", e.to_string()));
        }
        match (s.family, &s.levels) {
            (FamilyName::RandomLevels, None) => {
                return Err(self.error(Some("schedule"), "family", "random-levels needs `levels`"))
            }
            (FamilyName::RandomLevels, Some(_)) | (_, None) => {}
            (_, Some(_)) => {
                return Err(self.error(Some("schedule"), "levels", "`levels` is only used by random-levels"))
            }
        }
        if let Some(v) = s.value {
            if s.family != FamilyName::Constant {
                return Err(self.error(Some("schedule"), "value", "`value` is only used by the constant family"));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(self.error(Some("schedule"), "value", format!("value {v} outside [0, 1]")));
            }
        }

        let i = &c.integrator;
        let settings = IntegratorSettings::new(c.dt(), i.record_every, i.max_time, i.stop_diameter)
            .and_then(|st| st.check_resolution(s.period).map(|_| st));
        if let Err(e) = settings {
            let key = if i.record_every == 0 {
                "record_every"
            } else if !(i.max_time > 0.0) {
                "max_time"
            } else if !(i.stop_diameter >= 0.0) {
                "stop_diameter"
            } else {
                "dt"
            };
            return Err(self.error(Some("integrator"), key, e.to_string()));
        }

        if let Some(sw) = &c.sweep {
            if sw.trials == 0 {
                return Err(self.error(Some("sweep"), "trials", "trials must be >= 1"));
            }
            if sw.mu_values.is_empty() {
                return Err(self.error(Some("sweep"), "mu_values", "mu_values is empty"));
            }
            if let Some(e) = sw.mu_values.iter().find_map(|&mu| PeParameters::new(mu, s.period).err()) {
                return Err(self.error(Some("sweep"), "mu_values", e.to_string()));
            }
            if !(sw.epsilon.is_finite() && sw.epsilon > 0.0) {
                return Err(self.error(Some("sweep"), "epsilon", "epsilon must be > 0"));
            }
            if !(sw.max_time.is_finite() && sw.max_time > 0.0) {
                return Err(self.error(Some("sweep"), "max_time", "max_time must be > 0"));
            }
        }
        Ok(())
    }

    /// Builds the single run, with optional overrides of `mu` and the seed.
    /// Positions are drawn exactly as trial 0 of a sweep with the same seed.
    pub fn simulation(&self, mu: Option<f64>, seed: Option<u64>) -> Result<Simulation, ConfigError> {
        let c = &self.config;
        let mu = mu.unwrap_or(c.schedule.mu);
        let flag = |e: pe_consensus::Error| ConfigError {
            path: self.path.clone(),
            line: None,
            message: e.to_string(),
        };
        PeParameters::new(mu, c.schedule.period).map_err(flag)?;
        let cutoff = MaxTime::Absolute(c.integrator.max_time);
        let spec = c.spec(vec![mu], 1, seed.unwrap_or(c.model.seed), cutoff);
        let initial = match &c.model.initial {
            Some(rows) => State::from_points(0.0, rows)
                .map_err(|e| self.error(Some("model"), "initial", e.to_string()))?,
            None => initial_state(&spec, 0).map_err(flag)?,
        };
        let ensemble = trial_ensemble(&spec, mu, 0)
            .map_err(|e| self.error(Some("schedule"), "family", e.to_string()))?;
        let i = &c.integrator;
        let settings = IntegratorSettings::new(c.dt(), i.record_every, i.max_time, i.stop_diameter)
            .map_err(flag)?;
        Ok(Simulation {
            initial,
            ensemble,
            model: c.model(),
            settings,
        })
    }

    pub fn sweep_spec(&self, seed: Option<u64>, trials: Option<usize>) -> Result<SweepSpec, ConfigError> {
        let c = &self.config;
        let Some(sweep) = &c.sweep else {
            return Err(self.error(None, "sweep", "missing [sweep] section"));
        };
        if c.model.initial.is_some() {
            return Err(self.error(
                Some("model"),
                "initial",
                "sweeps draw random initial positions; remove `initial`",
            ));
        }
        let trials = trials.unwrap_or(sweep.trials);
        if trials == 0 {
            return Err(ConfigError {
                path: self.path.clone(),
                line: None,
                message: "--trials must be >= 1".into(),
            });
        }
        let cutoff = if sweep.max_time_scales_with_mu {
            MaxTime::PerInverseDuty(sweep.max_time)
        } else {
            MaxTime::Absolute(sweep.max_time)
        };
        let spec = c.spec(sweep.mu_values.clone(), trials, seed.unwrap_or(c.model.seed), cutoff);
        spec.validate().map_err(|e| self.error(Some("sweep"), "mu_values", e.to_string()))?;
        Ok(spec)
    }
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// 1-based line where `key` is assigned inside `[section]`, or where the
/// section header itself appears when `key` names a section.
fn locate(source: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut header_line = None;
    for (idx, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            if section.is_none() && name.trim() == key {
                return Some(idx + 1);
            }
            if section == Some(name.trim()) {
                header_line = Some(idx + 1);
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        if lhs.trim() == key && current.as_deref() == section {
            return Some(idx + 1);
        }
    }
    header_line
}
