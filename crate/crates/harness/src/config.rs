//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # SEA benchmark defaults
//! system = sea
//! N = 500
//! L = 10
//! alpha = auto
//! sweep_N = 50, 100, 150
//! ```
//!
//! Every key can be overridden from the command line with `--set key=value`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ddmhe_core::{CollectionMode, NoiseKind, NoiseSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?} ({reason})")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemChoice {
    Sea,
    Scalar,
    File(PathBuf),
}

impl fmt::Display for SystemChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemChoice::Sea => f.write_str("sea"),
            SystemChoice::Scalar => f.write_str("scalar"),
            SystemChoice::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for SystemChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sea" => Ok(SystemChoice::Sea),
            "scalar" => Ok(SystemChoice::Scalar),
            _ => s
                .strip_prefix("file:")
                .map(|p| SystemChoice::File(PathBuf::from(p)))
                .ok_or_else(|| "expected sea, scalar or file:<path>".to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSetting {
    Auto,
    Fixed(f64),
}

impl fmt::Display for AlphaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaSetting::Auto => f.write_str("auto"),
            AlphaSetting::Fixed(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemChoice,
    pub n_samples: usize,
    pub horizon: usize,
    pub alpha: AlphaSetting,
    pub alpha_safety: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub sigma_chi: f64,
    pub sigma_u: f64,
    pub sigma_x0: f64,
    pub noise: NoiseKind,
    pub excitation_amp: f64,
    pub excitation_freq: f64,
    pub trials: usize,
    pub horizon_t: usize,
    pub seed: u64,
    pub sweep_n: Vec<usize>,
    /// Each entry sets `sigma_w = sigma_v`.
    pub sweep_sigma: Vec<f64>,
    pub collection_mode: CollectionMode,
    /// Segment spacing; `None` means `L + 1`.
    pub gap: Option<usize>,
    pub mse_lo: usize,
    pub mse_hi: usize,
    /// `None` means `ε₀ / 2`.
    pub eps: Option<f64>,
    pub theta: f64,
    /// Whether reports may compare against the true plant.
    pub truth: bool,
    pub pi1: Option<f64>,
    pub pi2: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemChoice::Sea,
            n_samples: 500,
            horizon: 10,
            alpha: AlphaSetting::Auto,
            alpha_safety: 0.5,
            sigma_w: 0.002,
            sigma_v: 0.002,
            sigma_chi: 0.01,
            sigma_u: 10.0,
            sigma_x0: 1.0,
            noise: NoiseKind::Gaussian,
            excitation_amp: 5.0,
            excitation_freq: 0.2,
            trials: 50,
            horizon_t: 100,
            seed: 0,
            sweep_n: Vec::new(),
            sweep_sigma: Vec::new(),
            collection_mode: CollectionMode::Restart,
            gap: None,
            mse_lo: 11,
            mse_hi: 100,
            eps: None,
            theta: 0.05,
            truth: true,
            pi1: None,
            pi2: None,
        }
    }
}

/// Keys written by [`ExperimentConfig::to_text`]. `sigma` is also accepted
/// on input as shorthand for equal `sigma_w` and `sigma_v`.
pub const KEYS: [&str; 27] = [
    "system",
    "N",
    "L",
    "alpha",
    "alpha_safety",
    "sigma_w",
    "sigma_v",
    "sigma_chi",
    "sigma_u",
    "sigma_x0",
    "noise",
    "excitation_amp",
    "excitation_freq",
    "trials",
    "T",
    "seed",
    "sweep_N",
    "sweep_sigma",
    "collection_mode",
    "gap",
    "mse_lo",
    "mse_hi",
    "eps",
    "theta",
    "truth",
    "pi1",
    "pi2",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_auto(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn show_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".into(), |x| x.to_string())
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "system" => self.system = parse(key, value)?,
            "N" => self.n_samples = parse(key, value)?,
            "L" => self.horizon = parse(key, value)?,
            "alpha" => {
                self.alpha = parse_auto(key, value)?.map_or(AlphaSetting::Auto, AlphaSetting::Fixed)
            }
            "alpha_safety" => self.alpha_safety = parse(key, value)?,
            "sigma_w" => self.sigma_w = parse(key, value)?,
            "sigma_v" => self.sigma_v = parse(key, value)?,
            // shorthand for equal process and measurement noise
            "sigma" => {
                self.sigma_w = parse(key, value)?;
                self.sigma_v = self.sigma_w;
            }
            "sigma_chi" => self.sigma_chi = parse(key, value)?,
            "sigma_u" => self.sigma_u = parse(key, value)?,
            "sigma_x0" => self.sigma_x0 = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "excitation_amp" => self.excitation_amp = parse(key, value)?,
            "excitation_freq" => self.excitation_freq = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "T" => self.horizon_t = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "sweep_N" => self.sweep_n = parse_list(key, value)?,
            "sweep_sigma" => self.sweep_sigma = parse_list(key, value)?,
            "collection_mode" => self.collection_mode = parse(key, value)?,
            "gap" => {
                self.gap = if value == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "mse_lo" => self.mse_lo = parse(key, value)?,
            "mse_hi" => self.mse_hi = parse(key, value)?,
            "eps" => self.eps = parse_auto(key, value)?,
            "theta" => self.theta = parse(key, value)?,
            "truth" => self.truth = parse(key, value)?,
            "pi1" => self.pi1 = parse_auto(key, value)?,
            "pi2" => self.pi2 = parse_auto(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
        self.set(k.trim(), v)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("L must be positive".into());
        }
        if self.horizon_t < self.horizon + 1 {
            return bad(format!(
                "T = {} must be at least L + 1 = {}",
                self.horizon_t,
                self.horizon + 1
            ));
        }
        if self.mse_lo < self.horizon || self.mse_lo > self.mse_hi || self.mse_hi > self.horizon_t {
            return bad(format!(
                "MSE window [{}, {}] must lie within [L, T] = [{}, {}]",
                self.mse_lo, self.mse_hi, self.horizon, self.horizon_t
            ));
        }
        if self.sweep_n.contains(&0) || self.sweep_sigma.iter().any(|s| s.is_nan() || *s < 0.0) {
            return bad("sweep values must be positive".into());
        }
        if !(self.alpha_safety > 0.0 && self.alpha_safety < 1.0) {
            return bad("alpha_safety must lie in (0, 1)".into());
        }
        if let AlphaSetting::Fixed(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return bad("alpha must be positive".into());
            }
        }
        self.noise_spec()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            kind: self.noise,
            sigma_w: self.sigma_w,
            sigma_v: self.sigma_v,
            sigma_chi: self.sigma_chi,
            sigma_u: self.sigma_u,
            sigma_x0: self.sigma_x0,
        }
    }

    pub fn gap(&self) -> usize {
        self.gap.unwrap_or(self.horizon + 1)
    }

    /// The config as `key = value` text, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let values = [
            self.system.to_string(),
            self.n_samples.to_string(),
            self.horizon.to_string(),
            self.alpha.to_string(),
            self.alpha_safety.to_string(),
            self.sigma_w.to_string(),
            self.sigma_v.to_string(),
            self.sigma_chi.to_string(),
            self.sigma_u.to_string(),
            self.sigma_x0.to_string(),
            self.noise.to_string(),
            self.excitation_amp.to_string(),
            self.excitation_freq.to_string(),
            self.trials.to_string(),
            self.horizon_t.to_string(),
            self.seed.to_string(),
            join(&self.sweep_n),
            join(&self.sweep_sigma),
            self.collection_mode.to_string(),
            self.gap.map_or_else(|| "auto".into(), |g| g.to_string()),
            self.mse_lo.to_string(),
            self.mse_hi.to_string(),
            show_auto(self.eps),
            self.theta.to_string(),
            self.truth.to_string(),
            show_auto(self.pi1),
            show_auto(self.pi2),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
