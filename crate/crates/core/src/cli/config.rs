use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineMethod};
use crate::error::{Error, Result};
use crate::eval::GedMode;
use crate::knockout::KnockoutConfig;
use crate::pipeline::ModelConfig;
use crate::synth::SynthConfig;

/// Environment variable holding the default thread count.
pub const THREADS_ENV: &str = "SUBTYPE_NETS_THREADS";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Defaults to the synthetic cohort inside the run directory.
    pub expression: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub annotation: Option<PathBuf>,
    /// Planted-edge truth for precision reporting, when known.
    pub truth: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub zero_fraction_threshold: f64,
    pub log_transform: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            zero_fraction_threshold: 0.10,
            log_transform: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub dataset: String,
    pub ged_mode: GedMode,
    /// Training seeds `seed, seed + 1, …` whose networks are evaluated.
    pub seeds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dataset: "cohort".into(),
            ged_mode: GedMode::Approx,
            seeds: 5,
        }
    }
}

/// One baseline run. With `match_edges` the baseline keeps as many edges
/// per subtype as the mean inferred network of the same seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    pub label: Option<String>,
    pub match_edges: bool,
    pub params: BaselineConfig,
}

impl BaselineSpec {
    pub fn name(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None if self.match_edges => format!("{}_matched", self.params.method.name()),
            None => self.params.method.name().to_string(),
        }
    }
}

pub fn default_baselines() -> Vec<BaselineSpec> {
    [false, true]
        .into_iter()
        .flat_map(|m| {
            BaselineMethod::ALL.into_iter().map(move |method| BaselineSpec {
                label: None,
                match_edges: m,
                params: BaselineConfig::for_method(method),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
    pub knockout: KnockoutConfig,
    pub baselines: Vec<BaselineSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            paths: Paths {
                output: PathBuf::from("run"),
                ..Default::default()
            },
            synth: SynthConfig::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelConfig::new(),
            eval: EvalConfig::default(),
            knockout: KnockoutConfig::default(),
            baselines: default_baselines(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Sets the master seed; the synthetic cohort, knockout and baseline
    /// permutations all use it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = seed;
        self.knockout.seed = seed;
        for b in &mut self.baselines {
            b.params.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.knockout.validate()?;
        self.synth.validate().map_err(|e| Error::Config(e.to_string()))?;
        for b in &self.baselines {
            b.params.validate()?;
        }
        if self.eval.seeds == 0 {
            return Err(Error::Config("eval.seeds must be at least 1".into()));
        }
        if !(self.preprocess.zero_fraction_threshold > 0.0 && self.preprocess.zero_fraction_threshold <= 1.0) {
            return Err(Error::Config("preprocess.zero_fraction_threshold outside (0, 1]".into()));
        }
        let mut names: Vec<String> = self.baselines.iter().map(BaselineSpec::name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("two baselines are named {}", w[0])));
        }
        if names.iter().any(|n| n == GESUBNET || n.contains(['/', '\\'])) {
            return Err(Error::Config("baseline labels must be plain names other than the model's".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.eval.seeds as u64).map(|i| self.seed + i).collect()
    }

    /// Explicit setting, then the environment, then 1.
    pub fn thread_count(&self) -> usize {
        self.threads
            .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
            .unwrap_or(1)
            .max(1)
    }
}

/// Method name of the inferred networks in reports.
pub const GESUBNET: &str = "gesubnet";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("seed = 9\n[model.patient]\nmax_epochs = 3\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.patient.max_epochs, 3);
        assert_eq!(c.model.patient.batch_size, 32);
        assert_eq!(c.model.edge_split, [0.8, 0.1, 0.1]);
        assert_eq!(c.baselines.len(), 6);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(RunConfig::from_toml("sed = 1"), Err(Error::Config(_))));
        let bad = RunConfig::from_toml("[knockout]\np_select = 0.0\n").unwrap();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
