//! Run configuration: a versioned TOML document.
//!
//! ```toml
//! schema_version = 1
//!
//! [device]
//! n_total = 1e11
//! eta_d = 0.65
//! dark_count = 8e-7
//! misalignment_x = 0.005
//! misalignment_z = 0.005
//! ec_efficiency = 1.16
//! epsilon = 1e-7
//!
//! [channel]
//! alpha_db_per_km = 0.2
//! stable = { length_a_km = 10.0, length_b_km = 60.0 }
//!
//! [task]
//! params = [0.01, 0.06, 0.78, 0.18, 0.03, 0.77, 0.09, 0.46, 0.64, 0.17, 0.03, 0.78]
//! ```
//!
//! Channel losses given in dB (`loss_a_db`, unstable `levels_*`) exclude the
//! detector; `eta_d` multiplies every arm. Each arm takes a length or a loss,
//! never both.

use mdiqkd::bsm::DetectorSpec;
use mdiqkd::channel::{Channel, CompensationPolicy, StableChannel, UnstableChannel};
use mdiqkd::keyrate::{EntropyBase, FluctuationConfig};
use mdiqkd::model::ProtocolConfig;
use mdiqkd::optimizer::{NeighborhoodPolicy, OptimizerConfig, ParamBounds};
use mdiqkd::sources::ParamVector;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub device: DeviceBlock,
    #[serde(default)]
    pub channel: ChannelBlock,
    #[serde(default)]
    pub protocol: ProtocolBlock,
    #[serde(default)]
    pub optimizer: OptimizerBlock,
    #[serde(default)]
    pub task: TaskBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceBlock {
    pub n_total: f64,
    pub eta_d: f64,
    pub dark_count: f64,
    pub misalignment_x: f64,
    pub misalignment_z: f64,
    pub ec_efficiency: f64,
    pub epsilon: f64,
    /// Standard-error multiplier matching `epsilon`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    5.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelBlock {
    #[serde(default = "default_alpha")]
    pub alpha_db_per_km: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stable: Option<StableArms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unstable: Option<UnstableArms>,
}

fn default_alpha() -> f64 {
    mdiqkd::channel::DEFAULT_ALPHA_DB_PER_KM
}

impl Default for ChannelBlock {
    fn default() -> Self {
        Self {
            alpha_db_per_km: default_alpha(),
            stable: None,
            unstable: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableArms {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_a_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_a_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_b_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_b_db: Option<f64>,
}

/// Each level is `[loss_db, probability]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnstableArms {
    pub levels_a: Vec<[f64; 2]>,
    pub levels_b: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyBaseName {
    #[default]
    Two,
    Natural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolBlock {
    #[serde(default)]
    pub entropy_base: EntropyBaseName,
    #[serde(default = "yes")]
    pub joint_constraints: bool,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn yes() -> bool {
    true
}

fn default_k_max() -> usize {
    mdiqkd::sources::DEFAULT_K_MAX
}

impl Default for ProtocolBlock {
    fn default() -> Self {
        Self {
            entropy_base: EntropyBaseName::Two,
            joint_constraints: true,
            k_max: default_k_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerBlock {
    pub fd_step_mu: f64,
    pub fd_step_p: f64,
    pub initial_step: f64,
    pub backtrack: f64,
    pub min_step: f64,
    pub jump_step: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub multistart: usize,
    pub seed: u64,
    pub neighborhood_samples: usize,
    pub full_neighborhood_at_final: bool,
    pub always_full_neighborhood: bool,
    pub mu_min: f64,
    pub mu_cap: f64,
    pub order_margin: f64,
    pub p_min: f64,
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        let c = OptimizerConfig::<f64>::default();
        let b = ParamBounds::<f64>::default();
        Self {
            fd_step_mu: c.fd_step_mu,
            fd_step_p: c.fd_step_p,
            initial_step: c.initial_step,
            backtrack: c.backtrack,
            min_step: c.min_step,
            jump_step: c.jump_step,
            max_iterations: c.max_iterations,
            tolerance: c.tolerance,
            multistart: c.multistart,
            seed: c.seed,
            neighborhood_samples: c.neighborhood.sample_size,
            full_neighborhood_at_final: c.neighborhood.full_at_final,
            always_full_neighborhood: c.neighborhood.always_full,
            mu_min: b.mu_min,
            mu_cap: b.mu_cap,
            order_margin: b.order_margin,
            p_min: b.p_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    /// Source parameters for `evaluate`, in [`ParamVector::NAMES`] order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<[f64; 12]>,
    /// Optional extra starting point for `optimize` and the scans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<[f64; 12]>,
    /// `[L_A_km, L_B_km]` points for `scan-distance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<DistanceSweep>,
    /// `[delta_db, eta_prime_db]` cells for `scan-compensation`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<[f64; 2]>>,
    /// Cartesian grid for `scan-compensation`, added after `cells`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<CompensationGrid>,
}

/// Totals `L_A + L_B` from `total_min_km` to `total_max_km` in steps of
/// `step_km`, with `L_B - L_A = offset_km`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSweep {
    pub total_min_km: f64,
    pub total_max_km: f64,
    pub step_km: f64,
    #[serde(default)]
    pub offset_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompensationGrid {
    pub delta_db: Vec<f64>,
    pub eta_prime_db: Vec<f64>,
}

impl RunConfig {
    /// Parses and validates `text`; errors carry the line of the offending key.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            ConfigError::new("", e.message().to_string()).at_line(line)
        })?;
        cfg.validate().map_err(|e| {
            let line = locate(text, &e.path);
            e.at_line(line)
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// Checks everything that does not depend on the task.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::new(
                "schema_version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let d = &self.device;
        positive("device.n_total", d.n_total)?;
        within("device.eta_d", d.eta_d, 0.0, 1.0)?;
        positive("device.ec_efficiency", d.ec_efficiency)?;
        self.detector()?;
        self.fluctuation()?;
        non_negative("channel.alpha_db_per_km", self.channel.alpha_db_per_km)?;
        if let Some(s) = &self.channel.stable {
            self.stable_channel(s)?;
        }
        if let Some(u) = &self.channel.unstable {
            self.unstable_channel(u)?;
        }
        if self.channel.stable.is_some() && self.channel.unstable.is_some() {
            return Err(ConfigError::new("channel", "set either `stable` or `unstable`, not both"));
        }
        if self.protocol.k_max < 2 {
            return Err(ConfigError::new("protocol.k_max", "must be at least 2"));
        }
        self.optimizer_config()?;
        let bounds = self.bounds();
        if !(bounds.mu_min > 0.0 && bounds.mu_min + bounds.order_margin <= bounds.mu_cap && bounds.mu_cap <= 1.0) {
            return Err(ConfigError::new(
                "optimizer.mu_cap",
                "need 0 < mu_min, mu_min + order_margin <= mu_cap <= 1",
            ));
        }
        if !(bounds.p_min >= 0.0 && bounds.p_min < 0.25) {
            return Err(ConfigError::new("optimizer.p_min", "must lie in [0, 0.25)"));
        }
        for (path, params) in [("task.params", &self.task.params), ("task.initial", &self.task.initial)] {
            if let Some(p) = params {
                ParamVector(*p)
                    .validate(self.optimizer.mu_cap)
                    .map_err(|e| ConfigError::new(path, e.to_string()))?;
            }
        }
        if let Some(sweep) = &self.task.sweep {
            positive("task.sweep.step_km", sweep.step_km)?;
            non_negative("task.sweep.total_min_km", sweep.total_min_km)?;
            if sweep.total_max_km < sweep.total_min_km {
                return Err(ConfigError::new("task.sweep.total_max_km", "must be >= total_min_km"));
            }
            if sweep.offset_km.abs() > sweep.total_min_km {
                return Err(ConfigError::new("task.sweep.offset_km", "|offset| exceeds the smallest total"));
            }
        }
        if let Some(points) = &self.task.distances {
            for p in points {
                non_negative("task.distances", p[0])?;
                non_negative("task.distances", p[1])?;
            }
        }
        for cell in self.compensation_cells() {
            CompensationPolicy::from_db(cell[0], cell[1]).map_err(|e| ConfigError::new("task.cells", e.to_string()))?;
        }
        Ok(())
    }

    pub fn detector(&self) -> Result<DetectorSpec<f64>, ConfigError> {
        let d = &self.device;
        DetectorSpec::new(d.dark_count, d.misalignment_x, d.misalignment_z).map_err(|e| {
            let field = match &e {
                mdiqkd::Error::OutOfRange { name, .. } => format!("device.{name}"),
                _ => "device".to_string(),
            };
            ConfigError::new(&field, e.to_string())
        })
    }

    fn fluctuation(&self) -> Result<FluctuationConfig<f64>, ConfigError> {
        FluctuationConfig::new(self.device.gamma, self.device.epsilon, self.protocol.joint_constraints).map_err(|e| {
            let field = match &e {
                mdiqkd::Error::OutOfRange { name, .. } => format!("device.{name}"),
                _ => "device".to_string(),
            };
            ConfigError::new(&field, e.to_string())
        })
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig<f64>, ConfigError> {
        Ok(ProtocolConfig {
            n_total: self.device.n_total,
            ec_efficiency: self.device.ec_efficiency,
            fluctuation: self.fluctuation()?,
            entropy_base: match self.protocol.entropy_base {
                EntropyBaseName::Two => EntropyBase::Two,
                EntropyBaseName::Natural => EntropyBase::Natural,
            },
            k_max: self.protocol.k_max,
        })
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig<f64>, ConfigError> {
        let o = &self.optimizer;
        let cfg = OptimizerConfig {
            fd_step_mu: o.fd_step_mu,
            fd_step_p: o.fd_step_p,
            initial_step: o.initial_step,
            backtrack: o.backtrack,
            min_step: o.min_step,
            jump_step: o.jump_step,
            max_iterations: o.max_iterations,
            tolerance: o.tolerance,
            multistart: o.multistart,
            seed: o.seed,
            neighborhood: NeighborhoodPolicy {
                sample_size: o.neighborhood_samples,
                full_at_final: o.full_neighborhood_at_final,
                always_full: o.always_full_neighborhood,
            },
            start_region: None,
        };
        cfg.validate().map_err(|e| {
            let field = match &e {
                mdiqkd::Error::OutOfRange { name, .. } => format!("optimizer.{name}"),
                _ => "optimizer".to_string(),
            };
            ConfigError::new(&field, e.to_string())
        })?;
        Ok(cfg)
    }

    pub fn bounds(&self) -> ParamBounds<f64> {
        let o = &self.optimizer;
        ParamBounds {
            mu_min: o.mu_min,
            mu_cap: o.mu_cap,
            order_margin: o.order_margin,
            p_min: o.p_min,
        }
    }

    fn stable_channel(&self, arms: &StableArms) -> Result<StableChannel<f64>, ConfigError> {
        let eta_a = self.arm("channel.stable", 'a', arms.length_a_km, arms.loss_a_db)?;
        let eta_b = self.arm("channel.stable", 'b', arms.length_b_km, arms.loss_b_db)?;
        StableChannel::new(eta_a, eta_b).map_err(|e| ConfigError::new("channel.stable", e.to_string()))
    }

    fn arm(&self, path: &str, side: char, length: Option<f64>, loss: Option<f64>) -> Result<f64, ConfigError> {
        let eta_d = self.device.eta_d;
        match (length, loss) {
            (Some(_), Some(_)) => Err(ConfigError::new(
                &format!("{path}.length_{side}_km"),
                format!("arm {side} sets both length_{side}_km and loss_{side}_db"),
            )),
            (None, None) => Err(ConfigError::new(
                path,
                format!("arm {side} needs length_{side}_km or loss_{side}_db"),
            )),
            (Some(km), None) => {
                non_negative(&format!("{path}.length_{side}_km"), km)?;
                Ok(mdiqkd::channel::distance_to_transmittance(km, self.channel.alpha_db_per_km, eta_d))
            }
            (None, Some(db)) => {
                non_negative(&format!("{path}.loss_{side}_db"), db)?;
                Ok(mdiqkd::scalar::db_to_linear(db) * eta_d)
            }
        }
    }

    fn unstable_channel(&self, arms: &UnstableArms) -> Result<UnstableChannel<f64>, ConfigError> {
        for (path, levels) in [("channel.unstable.levels_a", &arms.levels_a), ("channel.unstable.levels_b", &arms.levels_b)] {
            for l in levels {
                non_negative(path, l[0])?;
            }
        }
        let a: Vec<(f64, f64)> = arms.levels_a.iter().map(|l| (l[0], l[1])).collect();
        let b: Vec<(f64, f64)> = arms.levels_b.iter().map(|l| (l[0], l[1])).collect();
        UnstableChannel::from_db_levels(&a, &b, self.device.eta_d)
            .map_err(|e| ConfigError::new("channel.unstable", e.to_string()))
    }

    /// The configured channel; `None` when the channel block names no arms.
    pub fn channel(&self) -> Result<Option<Channel<f64>>, ConfigError> {
        if let Some(s) = &self.channel.stable {
            return Ok(Some(Channel::Stable(self.stable_channel(s)?)));
        }
        if let Some(u) = &self.channel.unstable {
            return Ok(Some(Channel::Unstable(self.unstable_channel(u)?)));
        }
        Ok(None)
    }

    /// Stable channel for a scan point.
    pub fn distance_channel(&self, l_a: f64, l_b: f64) -> Result<Channel<f64>, ConfigError> {
        let c = StableChannel::from_distances(l_a, l_b, self.channel.alpha_db_per_km, self.device.eta_d)
            .map_err(|e| ConfigError::new("task.distances", e.to_string()))?;
        Ok(Channel::Stable(c))
    }

    /// Explicit distance points followed by the sweep, in order.
    pub fn distance_points(&self) -> Vec<[f64; 2]> {
        let mut out = self.task.distances.clone().unwrap_or_default();
        if let Some(s) = &self.task.sweep {
            let count = ((s.total_max_km - s.total_min_km) / s.step_km + 1e-9).floor() as usize;
            for i in 0..=count {
                let total = s.total_min_km + i as f64 * s.step_km;
                out.push([(total - s.offset_km) / 2.0, (total + s.offset_km) / 2.0]);
            }
        }
        out
    }

    /// Explicit cells followed by the grid, without the baseline.
    pub fn compensation_cells(&self) -> Vec<[f64; 2]> {
        let mut out = self.task.cells.clone().unwrap_or_default();
        if let Some(g) = &self.task.grid {
            for &d in &g.delta_db {
                for &e in &g.eta_prime_db {
                    out.push([d, e]);
                }
            }
        }
        out
    }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("{v} must be a finite positive number")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("{v} must be finite and >= 0")))
    }
}

fn within(path: &str, v: f64, lo: f64, hi: f64) -> Result<(), ConfigError> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("{v} is outside [{lo}, {hi}]")))
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Best-effort line of a dotted `path` such as `device.dark_count` or
/// `channel.stable.length_a_km` (inline tables included).
pub fn locate(text: &str, path: &str) -> Option<usize> {
    if path.is_empty() {
        return None;
    }
    let parts: Vec<&str> = path.split('.').collect();
    let mut section: Vec<String> = Vec::new();
    let mut fallback = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim();
            section = name.split('.').map(|s| s.trim().to_string()).collect();
            if section.iter().map(String::as_str).eq(parts.iter().copied()) {
                fallback = Some(i + 1);
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let mut full: Vec<&str> = section.iter().map(String::as_str).collect();
        full.extend(key.trim().split('.').map(str::trim));
        if full == parts {
            return Some(i + 1);
        }
        // key of an inline table on this line
        if parts.len() > full.len() && parts[..full.len()] == full[..] {
            let rest = parts[full.len()..].join(".");
            if value.contains(&format!("{rest} =")) || value.contains(&format!("{rest}=")) {
                return Some(i + 1);
            }
            fallback = fallback.or(Some(i + 1));
        }
    }
    fallback
}
