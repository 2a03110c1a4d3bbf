//! Experiment configuration: a strict TOML schema validated against the
//! benchmark registry. Unknown keys are rejected.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use beliefbo::acquisition::AcquisitionKind;
use beliefbo::belief::{McBudget, UserBelief, WeightStrategy};
use beliefbo::benchmarks::{self, BenchmarkSpec, PriorQuality, PriorSpec};
use beliefbo::engine::BoConfig;
use beliefbo::kernel::KernelKind;
use beliefbo::rng;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Registry name, e.g. "hartmann4".
    pub benchmark: String,
    /// Total evaluations per run, including the initial design.
    pub evaluations: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    /// Output directory; `--out` and the BELIEFBO_OUT root override/prefix.
    #[serde(default)]
    pub output: Option<String>,
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub mc: McOverrides,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub value_prior: ValuePriorConfig,
    #[serde(default)]
    pub location_prior: LocationPriorConfig,
}

fn default_batch() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    /// Unique label used in result files.
    pub name: String,
    /// "logei" | "mes" | "ts"
    pub acquisition: String,
    /// "location" | "value" | "uniform"
    pub belief: String,
    /// "good" | "bad"; required for location beliefs.
    #[serde(default)]
    pub prior_quality: Option<String>,
    /// "rejection" | "importance"; default rejection.
    #[serde(default)]
    pub strategy: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct McOverrides {
    pub functions: Option<usize>,
    pub rff_features: Option<usize>,
    pub resample_cap: Option<usize>,
    pub optimal_values: Option<usize>,
    pub noise_samples: Option<usize>,
    pub argmax_candidates_per_dim: Option<usize>,
    pub argmax_ascent_starts: Option<usize>,
    pub argmax_ascent_steps: Option<usize>,
    pub acq_candidates_per_dim: Option<usize>,
    pub acq_restarts: Option<usize>,
    pub acq_ascent_steps: Option<usize>,
}

impl McOverrides {
    pub fn apply(&self, mut base: McBudget) -> McBudget {
        if let Some(v) = self.functions {
            base.num_functions = v;
        }
        if let Some(v) = self.rff_features {
            base.rff_features = v;
        }
        if let Some(v) = self.resample_cap {
            base.resample_cap = v;
        }
        if let Some(v) = self.optimal_values {
            base.optimal_values = v;
        }
        if let Some(v) = self.noise_samples {
            base.noise_samples = v;
        }
        if let Some(v) = self.argmax_candidates_per_dim {
            base.argmax_candidates_per_dim = v;
        }
        if let Some(v) = self.argmax_ascent_starts {
            base.argmax_ascent_starts = v;
        }
        if let Some(v) = self.argmax_ascent_steps {
            base.argmax_ascent_steps = v;
        }
        if let Some(v) = self.acq_candidates_per_dim {
            base.acq_candidates_per_dim = v;
        }
        if let Some(v) = self.acq_restarts {
            base.acq_restarts = v;
        }
        if let Some(v) = self.acq_ascent_steps {
            base.acq_ascent_steps = v;
        }
        base
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "se" | "matern52"
    pub kernel: String,
    pub fit_restarts: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernel: "se".into(),
            fit_restarts: 8,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub count: usize,
    pub with_mode: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            count: 3,
            with_mode: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ValuePriorConfig {
    /// Standard deviation of the optimal-value belief, raw output units.
    pub sigma: f64,
}

impl Default for ValuePriorConfig {
    fn default() -> Self {
        Self { sigma: 0.5 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LocationPriorConfig {
    /// Belief standard deviation, normalized units per dimension.
    pub sigma: f64,
    pub offset_good: f64,
    pub offset_bad: f64,
}

impl Default for LocationPriorConfig {
    fn default() -> Self {
        Self {
            sigma: 0.25,
            offset_good: 0.1,
            offset_bad: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if benchmarks::lookup(&self.benchmark).is_none() {
            let known: Vec<&str> = benchmarks::registry().iter().map(|b| b.name).collect();
            bail!(
                "unknown benchmark '{}'; registry: {}",
                self.benchmark,
                known.join(", ")
            );
        }
        if self.evaluations < 1 {
            bail!("evaluations must be >= 1");
        }
        if self.batch_size < 1 {
            bail!("batch_size must be >= 1");
        }
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        if self.methods.is_empty() {
            bail!("at least one [[methods]] entry is required");
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.methods {
            if !names.insert(&m.name) {
                bail!("duplicate method name '{}'", m.name);
            }
            match m.acquisition.as_str() {
                "logei" | "mes" | "ts" => {}
                other => bail!("method '{}': unknown acquisition '{other}'", m.name),
            }
            match m.belief.as_str() {
                "uniform" => {}
                "location" => match m.prior_quality.as_deref() {
                    Some("good") | Some("bad") => {}
                    Some(other) => {
                        bail!("method '{}': unknown prior_quality '{other}'", m.name)
                    }
                    None => bail!(
                        "method '{}': location belief requires prior_quality",
                        m.name
                    ),
                },
                "value" => {
                    if self.value_prior.sigma <= 0.0 {
                        bail!("value_prior.sigma must be > 0");
                    }
                }
                other => bail!("method '{}': unknown belief '{other}'", m.name),
            }
            if let Some(s) = m.strategy.as_deref() {
                if s != "rejection" && s != "importance" {
                    bail!("method '{}': unknown strategy '{s}'", m.name);
                }
            }
        }
        match self.model.kernel.as_str() {
            "se" | "matern52" => {}
            other => bail!("unknown kernel '{other}' (use \"se\" or \"matern52\")"),
        }
        if self.model.fit_restarts < 1 {
            bail!("model.fit_restarts must be >= 1");
        }
        if self.init.count < 1 {
            bail!("init.count must be >= 1");
        }
        Ok(())
    }

    pub fn spec(&self) -> BenchmarkSpec {
        benchmarks::lookup(&self.benchmark).expect("validated")
    }

    pub fn budget(&self) -> McBudget {
        self.mc.apply(McBudget::default())
    }

    /// Engine configuration for one (method, seed) cell.
    pub fn bo_config(&self, method: &MethodConfig, seed: u64) -> Result<BoConfig> {
        let spec = self.spec();
        let belief = match method.belief.as_str() {
            "uniform" => UserBelief::Uniform,
            "location" => {
                let quality = match method.prior_quality.as_deref() {
                    Some("good") => PriorQuality::Good,
                    _ => PriorQuality::Bad,
                };
                let pspec = PriorSpec {
                    quality,
                    offset_fraction: match quality {
                        PriorQuality::Good => self.location_prior.offset_good,
                        PriorQuality::Bad => self.location_prior.offset_bad,
                    },
                    sigma: self.location_prior.sigma,
                    seed: rng::derive_seed(seed, &[0x77]),
                };
                benchmarks::build_prior(&spec, &pspec)?
            }
            "value" => benchmarks::build_maxvalue_prior(&spec, self.value_prior.sigma)?,
            _ => unreachable!("validated"),
        };
        let budget = self.budget();
        let acquisition = match method.acquisition.as_str() {
            "logei" => AcquisitionKind::LogEi,
            "mes" => AcquisitionKind::Mes {
                optimal_values: budget.optimal_values,
                noise_samples: budget.noise_samples,
            },
            "ts" => AcquisitionKind::ThompsonSampling,
            _ => unreachable!("validated"),
        };
        let mut cfg = BoConfig::new(spec.space(), belief, acquisition);
        cfg.evaluations = self.evaluations;
        cfg.batch_size = self.batch_size;
        cfg.mc = budget;
        cfg.kernel = match self.model.kernel.as_str() {
            "matern52" => KernelKind::Matern52,
            _ => KernelKind::SquaredExponential,
        };
        cfg.strategy = match method.strategy.as_deref() {
            Some("importance") => WeightStrategy::Importance,
            _ => WeightStrategy::Rejection,
        };
        cfg.init_count = self.init.count;
        cfg.init_with_mode = self.init.with_mode;
        cfg.fit_restarts = self.model.fit_restarts;
        cfg.seed = seed;
        cfg.validate()
            .map_err(|e| anyhow::anyhow!("method '{}': {e}", method.name))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
benchmark = "hartmann4"
evaluations = 5
seeds = [0, 1]

[[methods]]
name = "logei-good"
acquisition = "logei"
belief = "location"
prior_quality = "good"

[[methods]]
name = "logei-vanilla"
acquisition = "logei"
belief = "uniform"
"#;

    #[test]
    fn minimal_config_parses_and_validates() {
        let cfg = ExperimentConfig::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.batch_size, 1);
        assert_eq!(cfg.methods.len(), 2);
        let bo = cfg.bo_config(&cfg.methods[0], 0).unwrap();
        assert_eq!(bo.evaluations, 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\nunexpected_key = 1\n");
        let err = ExperimentConfig::from_str(&bad).unwrap_err();
        assert!(format!("{err:#}").contains("unexpected_key"));
    }

    #[test]
    fn unknown_benchmark_is_rejected_with_registry_listing() {
        let bad = MINIMAL.replace("hartmann4", "branin2");
        let err = ExperimentConfig::from_str(&bad).unwrap_err();
        assert!(format!("{err:#}").contains("registry"));
    }

    #[test]
    fn location_belief_requires_quality() {
        let bad = MINIMAL.replace("prior_quality = \"good\"\n", "");
        assert!(ExperimentConfig::from_str(&bad).is_err());
    }

    #[test]
    fn duplicate_method_names_are_rejected() {
        let bad = MINIMAL.replace("logei-vanilla", "logei-good");
        assert!(ExperimentConfig::from_str(&bad).is_err());
    }
}
