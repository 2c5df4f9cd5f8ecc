//! JSON run configuration. Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wildsim_core::kernels::{Kernel, WeightFamily, WeightSpec};
use wildsim_core::particle::SimConfig;
use wildsim_core::wildsum::{Base, WildSum};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsConfig {
    Uniform { lo: f64, hi: f64 },
    Beta { alpha: f64, beta: f64, scale: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Identity { m: usize },
    Sum { m: usize },
    CappedSum { m: usize, cap: f64 },
    Wealth { m: usize, weights: WeightsConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Point { value: f64 },
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelConfig,
    pub initial: InitialConfig,
    /// Number of agents; needed by `simulate` and `compare`.
    #[serde(default)]
    pub population: Option<usize>,
    /// Per-agent meeting rate.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    1.0
}

impl KernelConfig {
    pub fn build(&self) -> Result<Kernel, CliError> {
        let kernel = match self {
            KernelConfig::Identity { m } => Kernel::Identity { m: *m },
            KernelConfig::Sum { m } => Kernel::Sum { m: *m },
            KernelConfig::CappedSum { m, cap } => Kernel::CappedSum { m: *m, cap: *cap },
            KernelConfig::Wealth { m, weights } => Kernel::Wealth(weights.build(*m)?),
        };
        kernel.validate()?;
        Ok(kernel)
    }
}

impl WeightsConfig {
    pub fn build(&self, m: usize) -> Result<WeightSpec, CliError> {
        let family = match self.clone() {
            WeightsConfig::Uniform { lo, hi } => WeightFamily::Uniform { lo, hi },
            WeightsConfig::Beta { alpha, beta, scale } => WeightFamily::ScaledBeta { alpha, beta, scale },
            WeightsConfig::Discrete { values, probs } => WeightFamily::Discrete { values, probs },
        };
        Ok(WeightSpec::new(m, family)?)
    }
}

impl InitialConfig {
    pub fn build(&self) -> Result<Base, CliError> {
        let base = match self.clone() {
            InitialConfig::Point { value } => Base::PointMass(value),
            InitialConfig::Normal { mean, sd } => Base::Normal { mean, sd },
            InitialConfig::Exponential { rate } => Base::Exponential { rate },
            InitialConfig::Uniform { lo, hi } => Base::Uniform { lo, hi },
            InitialConfig::Discrete { values, probs } => Base::Discrete { values, probs },
        };
        base.validate()?;
        Ok(base)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!(
            "cannot read config file `{}`: {e}; check the path given to --config",
            path.display()
        )))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Usage(format!("invalid config: {e}; see docs/config.md for the schema")))?;
        cfg.kernel.build()?;
        cfg.initial.build()?;
        Ok(cfg)
    }

    pub fn wild_sum(&self) -> Result<WildSum, CliError> {
        Ok(WildSum::new(self.kernel.build()?, self.initial.build()?)?)
    }

    /// The wealth weights, for the `econo` commands.
    pub fn weights(&self) -> Result<WeightSpec, CliError> {
        match &self.kernel {
            KernelConfig::Wealth { m, weights } => weights.build(*m),
            _ => Err(CliError::Usage("econo commands need a wealth kernel (\"kind\": \"wealth\")".into())),
        }
    }

    pub fn sim_config(&self, horizon: f64, seed: u64) -> Result<SimConfig, CliError> {
        let population = self.population.ok_or_else(|| {
            CliError::Usage("the config needs a \"population\" entry for particle simulation".into())
        })?;
        let mut cfg = SimConfig::new(population, self.kernel.build()?, self.initial.build()?, horizon, seed)?;
        cfg.lambda = self.lambda;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_kernels() {
        let cfg = RunConfig::parse(
            r#"{"kernel":{"kind":"wealth","m":2,"weights":{"family":"uniform","lo":0.0,"hi":1.0}},
                "initial":{"law":"exponential","rate":1.0},"population":2000}"#,
        )
        .unwrap();
        assert_eq!(cfg.weights().unwrap(), WeightSpec::uniform(2, 0.0, 1.0).unwrap());
        assert_eq!(cfg.lambda, 1.0);
        for k in [r#"{"kind":"sum","m":3}"#, r#"{"kind":"identity","m":2}"#] {
            let text = format!(r#"{{"kernel":{k},"initial":{{"law":"point","value":1.0}}}}"#);
            assert!(RunConfig::parse(&text).is_ok());
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"kernel":{"kind":"sum","m":2},"initial":{"law":"point","value":1},"extra":1}"#,
            r#"{"kernel":{"kind":"sum","m":2,"cap":3},"initial":{"law":"point","value":1}}"#,
            r#"{"kernel":{"kind":"wealth","m":2,"weights":{"family":"uniform","lo":0,"hi":1,"x":0}},"initial":{"law":"point","value":1}}"#,
        ] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Usage(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_validation_errors() {
        let text = r#"{"kernel":{"kind":"sum","m":1},"initial":{"law":"point","value":1}}"#;
        assert!(matches!(RunConfig::parse(text), Err(CliError::Core(_))));
    }
}
