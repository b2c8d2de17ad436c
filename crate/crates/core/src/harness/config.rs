//! JSON experiment configuration.

use serde::{Deserialize, Serialize};

use crate::channel::{Profile, SameBinPaths};
use crate::error::{Result, SyncError};
use crate::frame::{Qam, Scheme};
use crate::pilots::{bem_order, mu_half_len, GuardPolicy, Structure};
use crate::sync_freq::CfoSearchConfig;
use crate::sync_time::MetricSlide;

pub const SCHEMA_VERSION: u32 = 1;

/// Delay spacing of a 3.84 MHz system.
pub const DEFAULT_DELTA_TAU: f64 = 1.0 / 3.84e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_id")]
    pub experiment_id: String,
    pub m: usize,
    pub n: usize,
    #[serde(default = "default_delta_tau")]
    pub delta_tau: f64,
    /// Channel length `L_ch`; the CP is `L_ch + θ_max − 1`.
    #[serde(default = "default_l_ch")]
    pub l_ch: usize,
    #[serde(default = "default_theta_max")]
    pub theta_max: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_qam")]
    pub qam: Qam,
    #[serde(default)]
    pub pilot: PilotConfig,
    #[serde(default = "default_profile")]
    pub channel: Profile,
    #[serde(default)]
    pub same_bin_paths: SameBinPaths,
    pub kappa_max: Vec<f64>,
    /// SNR points in dB; `null` is a noiseless point.
    pub snr_db: Vec<Option<f64>>,
    /// Number of users per sweep point.
    pub users: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cfo: CfoDraw,
    #[serde(default)]
    pub timing_offsets: TimingDraw,
    #[serde(default)]
    pub variants: Variants,
    /// BEM order; defaults to `⌈2κ_max + 1⌉` per point.
    #[serde(default)]
    pub beta: Option<usize>,
    #[serde(default = "default_search")]
    pub cfo_search: CfoSearchConfig,
    #[serde(default)]
    pub metric_slide: MetricSlide,
    /// Stamp `wall_seconds`; off by default so output is reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    pub structure: Structure,
    #[serde(default)]
    pub guard: GuardPolicy,
    /// Base length; defaults to `L_ch` (SU-PCP) or `L_ch + ⌈β/2⌉` (MU-PCP).
    #[serde(default)]
    pub half_len: Option<usize>,
    #[serde(default = "default_root")]
    pub root: i64,
    #[serde(default = "default_sigma_p2")]
    pub sigma_p2: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// MU-PCP delay anchor; defaults to `M − 1`.
    #[serde(default)]
    pub anchor: Option<usize>,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            structure: Structure::MuPcp,
            guard: GuardPolicy::Full,
            half_len: None,
            root: 1,
            sigma_p2: 1e4,
            alpha: 0.5,
            anchor: None,
        }
    }
}

/// Per-user CFO draw in units of `Δν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CfoDraw {
    Uniform { min: f64, max: f64 },
    /// Every user gets the same CFO; each value is its own sweep point.
    Fixed { values: Vec<f64> },
}

impl Default for CfoDraw {
    fn default() -> Self {
        CfoDraw::Uniform { min: -0.5, max: 0.5 }
    }
}

/// Per-user timing offset draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimingDraw {
    /// Uniform integers in `0..=θ_max`.
    Uniform,
    Fixed { value: usize },
}

impl Default for TimingDraw {
    fn default() -> Self {
        TimingDraw::Uniform
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimingVariant {
    /// Threshold relative to the metric maximum; defaults to the midpoint
    /// of the normalized range.
    FirstPeak {
        #[serde(default)]
        threshold: Option<f64>,
    },
    HighestPeak,
    /// True offsets handed to the CFO and channel estimators.
    Genie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CfoVariant {
    Ml,
    Absorbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variants {
    pub timing: Vec<TimingVariant>,
    /// Empty skips CFO and channel estimation.
    #[serde(default)]
    pub cfo: Vec<CfoVariant>,
}

impl Default for Variants {
    fn default() -> Self {
        Self {
            timing: vec![TimingVariant::FirstPeak { threshold: None }, TimingVariant::HighestPeak],
            cfo: vec![CfoVariant::Ml, CfoVariant::Absorbed],
        }
    }
}

fn default_id() -> String {
    "experiment".into()
}
fn default_delta_tau() -> f64 {
    DEFAULT_DELTA_TAU
}
fn default_l_ch() -> usize {
    10
}
fn default_theta_max() -> usize {
    8
}
fn default_scheme() -> Scheme {
    Scheme::GbbmaDelay
}
fn default_qam() -> Qam {
    Qam::Qam16
}
fn default_profile() -> Profile {
    Profile::Eva
}
fn default_root() -> i64 {
    1
}
fn default_sigma_p2() -> f64 {
    1e4
}
fn default_alpha() -> f64 {
    0.5
}
/// The fractional range of the default draw; the library default spans
/// `[−N/2, N/2)`.
pub fn default_search() -> CfoSearchConfig {
    CfoSearchConfig { min: -0.5, max: 0.5, step: 0.05, tolerance: 1e-4 }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SyncError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn l_cp(&self) -> usize {
        crate::frame::FrameParams::cp_length(self.l_ch, self.theta_max)
    }

    pub fn beta_for(&self, kappa_max: f64) -> usize {
        self.beta.unwrap_or_else(|| bem_order(kappa_max))
    }

    pub fn half_len_for(&self, kappa_max: f64) -> usize {
        self.pilot.half_len.unwrap_or_else(|| match self.pilot.structure {
            Structure::SuPcp => self.l_ch,
            Structure::MuPcp => mu_half_len(self.l_ch, self.beta_for(kappa_max)),
        })
    }

    /// CFO sweep values: one `None` for random draws, otherwise each fixed value.
    pub fn cfo_points(&self) -> Vec<Option<f64>> {
        match &self.cfo {
            CfoDraw::Uniform { .. } => vec![None],
            CfoDraw::Fixed { values } => values.iter().map(|&v| Some(v)).collect(),
        }
    }

    /// Structural checks that need no simulation; capacity checks happen
    /// when the sweep points are prepared.
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(SyncError::Config(s.into()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(SyncError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.m == 0 || self.n == 0 {
            return bad("M and N must be positive");
        }
        if self.l_ch == 0 {
            return bad("l_ch must be at least 1");
        }
        if self.kappa_max.is_empty() || self.snr_db.is_empty() || self.users.is_empty() {
            return bad("kappa_max, snr_db and users must be nonempty");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.kappa_max.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return bad("kappa_max values must be finite and non-negative");
        }
        if self.snr_db.iter().flatten().any(|s| !s.is_finite()) {
            return bad("snr_db values must be finite or null");
        }
        if self.users.contains(&0) {
            return bad("user counts must be positive");
        }
        if self.variants.timing.is_empty() {
            return bad("at least one timing variant is required");
        }
        for v in &self.variants.timing {
            if let TimingVariant::FirstPeak { threshold: Some(t) } = v {
                if !(*t > 0.0 && *t < 1.0) {
                    return bad("first-peak threshold must lie in (0, 1)");
                }
            }
        }
        match &self.cfo {
            CfoDraw::Uniform { min, max } => {
                if !(min.is_finite() && max.is_finite() && min <= max) {
                    return bad("CFO draw needs finite min <= max");
                }
            }
            CfoDraw::Fixed { values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return bad("fixed CFO values must be nonempty and finite");
                }
            }
        }
        if let TimingDraw::Fixed { value } = self.timing_offsets {
            if value > self.theta_max {
                return bad("fixed timing offset exceeds theta_max");
            }
        }
        if self.beta == Some(0) {
            return bad("beta must be at least 1");
        }
        if !(self.pilot.sigma_p2 > 0.0) || !(self.pilot.alpha > 0.0 && self.pilot.alpha <= 1.0) {
            return bad("sigma_p2 must be positive and alpha in (0, 1]");
        }
        if !(self.delta_tau > 0.0) {
            return bad("delta_tau must be positive");
        }
        self.cfo_search.validate()
    }
}
