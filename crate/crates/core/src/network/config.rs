//! Declarative network and training configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schedule::{Schedule, ScheduleKind, Segment};
use crate::algebra::AlgebraDim;
use crate::error::{Error, Result};
use crate::init::{Criterion, PhaseLaw};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub algebra_dim: usize,
    pub stage_blocks: Vec<usize>,
    /// Stage widths in real channels.
    pub stage_filters: Vec<usize>,
    pub kernel: usize,
    pub classes: usize,
    pub input_channels: usize,
    /// One input-construction block reused for every imaginary part instead
    /// of `d - 1` independent blocks.
    pub shared_input_block: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub nesterov: bool,
    pub schedule_kind: ScheduleKind,
    /// Explicit segments; overrides `schedule_kind` when present.
    pub schedule: Option<Vec<Segment>>,
    pub init: Criterion,
    pub phase_law: PhaseLaw,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            algebra_dim: 8,
            stage_blocks: vec![10, 9, 9],
            stage_filters: vec![32, 64, 128],
            kernel: 3,
            classes: 10,
            input_channels: 3,
            shared_input_block: false,
            batch_size: 64,
            epochs: 120,
            momentum: 0.9,
            nesterov: true,
            schedule_kind: ScheduleKind::Convex,
            schedule: None,
            init: Criterion::He,
            phase_law: PhaseLaw::Isotropic,
            bn_eps: crate::batchnorm::DEFAULT_EPS,
            bn_momentum: crate::batchnorm::DEFAULT_MOMENTUM,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// One residual block per stage at widths `[8, 16, 32]` with a shared
    /// input block, sized for gradient checks and smoke runs.
    pub fn micro(algebra_dim: usize, classes: usize) -> Self {
        Self {
            algebra_dim,
            stage_blocks: vec![1, 1, 1],
            stage_filters: vec![8, 16, 32],
            classes,
            shared_input_block: true,
            batch_size: 16,
            epochs: 10,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dim(&self) -> Result<AlgebraDim> {
        AlgebraDim::new(self.algebra_dim).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim()?.get();
        if self.stage_blocks.len() != self.stage_filters.len() {
            return Err(Error::Config(format!(
                "{} stage block counts but {} stage widths",
                self.stage_blocks.len(),
                self.stage_filters.len()
            )));
        }
        if self.stage_filters.is_empty() {
            return Err(Error::Config("at least one stage is required".into()));
        }
        if let Some(&f) = self.stage_filters.iter().find(|&&f| f == 0 || f % d != 0) {
            return Err(Error::Config(format!("stage width {f} is not a positive multiple of {d}")));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel size {} must be odd", self.kernel)));
        }
        for (name, v) in [
            ("classes", self.classes),
            ("input_channels", self.input_channels),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("momentum values must lie in [0, 1)".into()));
        }
        if !(self.bn_eps > 0.0) {
            return Err(Error::Config("bn_eps must be positive".into()));
        }
        let schedule = self.schedule()?;
        if schedule.epochs() < self.epochs {
            return Err(Error::Config(format!(
                "schedule covers {} epochs, training runs {}",
                schedule.epochs(),
                self.epochs
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule> {
        match &self.schedule {
            Some(segments) => Schedule::new(segments.clone()),
            None => Schedule::of_kind(self.schedule_kind, self.epochs),
        }
    }

    /// Hex SHA-256 of the fields that determine parameter shapes.
    pub fn architecture_hash(&self) -> String {
        let arch = (
            self.algebra_dim,
            &self.stage_blocks,
            &self.stage_filters,
            self.kernel,
            self.classes,
            self.input_channels,
            self.shared_input_block,
        );
        hex_digest(serde_json::to_string(&arch).expect("serializable").as_bytes())
    }

    /// Hex SHA-256 of the whole configuration.
    pub fn config_hash(&self) -> String {
        hex_digest(serde_json::to_string(self).expect("serializable").as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
