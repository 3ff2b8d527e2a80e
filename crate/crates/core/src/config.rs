//! Run configuration: JSON blocks for distributions, schedule,
//! discriminator, loss, training, and sweeps, plus dotted-path flag
//! overrides and a content hash for reproducible run directories.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::{Error, Result};
use crate::loss::{GammaSide, LambdaKind, LossConfig, TimestepDistribution};
use crate::mixture::{GaussianMixture, MixtureConfig};
use crate::quad::Region;
use crate::sde::{SdeKind, SdeSchedule};
use crate::train::{MlpDiscriminatorSpec, OverfitConfig, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionsConfig {
    pub p: MixtureConfig,
    pub p_hat: MixtureConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: SdeKind,
    pub beta_min: f64,
    pub beta_max: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
    pub t_min_factor: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: SdeKind::SubVp,
            beta_min: 0.1,
            beta_max: 20.0,
            horizon: 1.0,
            n_steps: 500,
            t_min_factor: 1e-3,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<SdeSchedule> {
        Ok(SdeSchedule::new(self.kind, self.beta_min, self.beta_max, self.horizon)?
            .with_t_min_factor(self.t_min_factor))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossBlock {
    pub lambda_kind: LambdaKind,
    pub gamma: f64,
    pub gamma_on: GammaSide,
    pub timestep_distribution: TimestepDistribution,
}

impl Default for LossBlock {
    fn default() -> Self {
        Self {
            lambda_kind: LambdaKind::GSquared,
            gamma: 0.1,
            gamma_on: GammaSide::Ce,
            timestep_distribution: TimestepDistribution::Uniform,
        }
    }
}

impl LossBlock {
    pub fn build(&self, schedule: &SdeSchedule) -> LossConfig {
        LossConfig {
            lambda_kind: self.lambda_kind,
            gamma: self.gamma,
            gamma_on: self.gamma_on,
            t_min: schedule.t_min(),
            timestep_distribution: self.timestep_distribution,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverfitBlock {
    pub sizes: Vec<usize>,
    pub target_eps: f64,
    pub step_cap: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for OverfitBlock {
    fn default() -> Self {
        Self {
            sizes: vec![100, 400, 1600],
            target_eps: 0.01,
            step_cap: 60_000,
            learning_rate: 0.01,
            batch_size: 256,
        }
    }
}

impl OverfitBlock {
    pub fn build(&self, seed: u64) -> OverfitConfig {
        OverfitConfig {
            target_eps: self.target_eps,
            step_cap: self.step_cap,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub w_list: Vec<f64>,
    pub gamma_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub omega_list: Vec<f64>,
    pub seeds_per_row: usize,
    pub n_eval_samples: usize,
    pub n_permutations: usize,
    pub kl_mc: usize,
    pub kl_nodes: usize,
    pub knn_k: usize,
    /// Quadrature region; empty vectors mean "derive from the mixtures".
    pub region_lo: Vec<f64>,
    pub region_hi: Vec<f64>,
    pub grid_points: usize,
    pub overfit: OverfitBlock,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![200, 2000, 20000],
            w_list: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            gamma_list: vec![0.0, 0.1, 1.0, 10.0],
            eps_list: vec![0.01],
            omega_list: vec![1.0, 3.0, 10.0, 30.0, 100.0],
            seeds_per_row: 3,
            n_eval_samples: 1000,
            n_permutations: 199,
            kl_mc: 256,
            kl_nodes: 65,
            knn_k: 3,
            region_lo: vec![],
            region_hi: vec![],
            grid_points: 0,
            overfit: OverfitBlock::default(),
        }
    }
}

impl SweepConfig {
    /// Explicit region if configured, else the mass-bounding box of the pair.
    pub fn region_for(&self, mixtures: &[&GaussianMixture]) -> Result<Region> {
        if !self.region_lo.is_empty() || !self.region_hi.is_empty() {
            return Region::new(self.region_lo.clone(), self.region_hi.clone());
        }
        crate::loss::bounding_region(mixtures, 7.0)
    }

    pub fn grid_points_for(&self, dim: usize) -> usize {
        if self.grid_points > 0 {
            return self.grid_points;
        }
        match dim {
            1 => 2049,
            _ => 65,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub distributions: DistributionsConfig,
    pub schedule: ScheduleConfig,
    pub discriminator: MlpDiscriminatorSpec,
    pub loss: LossBlock,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let (p, p_hat) = crate::presets::canonical_2d_pair();
        Self {
            distributions: DistributionsConfig {
                p: MixtureConfig::from_mixture(&p),
                p_hat: MixtureConfig::from_mixture(&p_hat),
            },
            schedule: ScheduleConfig::default(),
            discriminator: MlpDiscriminatorSpec::default(),
            loss: LossBlock::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    /// Load from a JSON file, then apply dotted-path overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config file {}: {e}", p.display()))
                })?;
                serde_json::from_str::<serde_json::Value>(&text)
                    .map_err(|e| Error::Config(format!("bad JSON in {}: {e}", p.display())))?
            }
            None => serde_json::to_value(Self::default())?,
        };
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn build_pair(&self) -> Result<(GaussianMixture, GaussianMixture)> {
        Ok((self.distributions.p.build()?, self.distributions.p_hat.build()?))
    }

    /// Hex digest of the canonical serialized config.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        hex_string(&digest)
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Set config leaf `a.b.c` to `raw`, parsing the value as JSON where
/// possible and falling back to a string.
fn apply_override(root: &mut serde_json::Value, key: &str, raw: &str) -> Result<()> {
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cursor.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override {key}: {part} is not an object"))
        })?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = map
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

/// Parse trailing CLI tokens of the form `--a.b.c value` or `--a.b.c=value`.
pub fn parse_override_args(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let tok = &args[i];
        let stripped = tok.strip_prefix("--").ok_or_else(|| {
            Error::Config(format!("expected --path.to.field, got {tok}"))
        })?;
        if let Some((k, v)) = stripped.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            i += 1;
        } else {
            let v = args.get(i + 1).ok_or_else(|| {
                Error::Config(format!("override --{stripped} is missing a value"))
            })?;
            out.push((stripped.to_string(), v.clone()));
            i += 2;
        }
    }
    Ok(out)
}
