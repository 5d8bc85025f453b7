//! Run configuration: one TOML file plus command-line overrides.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use diffqec::code::ObservableMode;
use diffqec::diffusion::{DEFAULT_OFFSET, DEFAULT_STEPS};
use diffqec::nn::{DenoiserConfig, TrainConfig, DEFAULT_CHAINS};
use diffqec::noise::{NoiseKind, NoiseModel};

pub const CONFIG_VERSION: &str = "diffqec-config-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    pub p: f64,
    pub p_meas: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            kind: NoiseKind::CodeCapacity,
            p: 0.08,
            p_meas: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub steps: usize,
    pub offset: f64,
    pub hidden: usize,
    pub layers: usize,
    pub conv_channels: [usize; 2],
    pub time_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = DenoiserConfig::new(3, 1);
        Self {
            steps: DEFAULT_STEPS,
            offset: DEFAULT_OFFSET,
            hidden: c.hidden,
            layers: c.layers,
            conv_channels: c.conv_channels,
            time_dim: c.time_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributeSection {
    pub m_steps: usize,
    pub top_k: usize,
    /// Number of single-qubit-error shots generated when no dataset is given.
    pub shots: usize,
}

impl Default for AttributeSection {
    fn default() -> Self {
        Self {
            m_steps: 256,
            top_k: 2,
            shots: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub distances: Vec<usize>,
    pub decoders: Vec<String>,
    pub shots: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            distances: vec![3, 5, 7],
            decoders: vec!["diffqec".into(), "mwpm".into()],
            shots: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: String,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub d: usize,
    pub rounds: Vec<usize>,
    pub observables: ObservableMode,
    pub noise: NoiseSection,
    pub shots: usize,
    pub decoder: String,
    pub chains: usize,
    /// Dataset to decode or attribute; defaults to the generated file for the first `r`.
    pub dataset: Option<PathBuf>,
    /// Training datasets; default to the generated files for every `r`.
    pub datasets: Vec<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Prediction files to post-select; default to every decoder's file under `out`.
    pub predictions: Vec<PathBuf>,
    pub rho: Vec<f64>,
    pub lambda: f64,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub attribute: AttributeSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION.into(),
            seed: None,
            out: PathBuf::from("out"),
            d: 3,
            rounds: vec![1],
            observables: ObservableMode::Single,
            noise: NoiseSection::default(),
            shots: 10_000,
            decoder: "diffqec".into(),
            chains: DEFAULT_CHAINS,
            dataset: None,
            datasets: Vec::new(),
            checkpoint: None,
            predictions: Vec::new(),
            rho: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            lambda: 1.0,
            model: ModelSection::default(),
            train: TrainConfig::default(),
            attribute: AttributeSection::default(),
            bench: BenchSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub decoder: Option<String>,
    pub d: Option<usize>,
    pub rounds: Option<Vec<usize>>,
    pub p: Option<f64>,
    pub pmeas: Option<f64>,
    pub shots: Option<usize>,
    pub rho: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub chains: Option<usize>,
    pub steps: Option<usize>,
}

pub const DECODERS: [&str; 4] = ["diffqec", "mwpm", "ml", "lookup"];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($src:ident => $($dst:tt)+) => {
                if let Some(v) = &o.$src {
                    self.$($dst)+ = v.clone();
                }
            };
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        set!(out => out);
        set!(decoder => decoder);
        set!(d => d);
        set!(rounds => rounds);
        set!(p => noise.p);
        set!(pmeas => noise.p_meas);
        set!(shots => shots);
        set!(rho => rho);
        set!(lambda => lambda);
        set!(chains => chains);
        set!(steps => model.steps);
        if o.pmeas.is_some_and(|p| p > 0.0) {
            self.noise.kind = NoiseKind::Phenomenological;
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.version != CONFIG_VERSION {
            return Err(format!("unsupported config version {:?}, expected {CONFIG_VERSION:?}", self.version));
        }
        if self.d < 3 || self.d % 2 == 0 {
            return Err(format!("d must be odd and at least 3, got {}", self.d));
        }
        if self.rounds.is_empty() || self.rounds.contains(&0) {
            return Err("rounds must be a non-empty list of positive integers".into());
        }
        self.noise_model().validate().map_err(|e| e.to_string())?;
        if self.shots == 0 {
            return Err("shots must be positive".into());
        }
        if !DECODERS.contains(&self.decoder.as_str()) {
            return Err(format!("unknown decoder {:?}; expected one of {DECODERS:?}", self.decoder));
        }
        if self.chains == 0 {
            return Err("chains must be positive".into());
        }
        if let Some(r) = self.rho.iter().find(|r| !(0.0..=0.99).contains(*r)) {
            return Err(format!("rho {r} outside [0, 0.99]"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(format!("lambda must be finite and non-negative, got {}", self.lambda));
        }
        self.denoiser_config().validate().map_err(|e| e.to_string())?;
        if !(self.model.offset > 0.0) {
            return Err("model.offset must be positive".into());
        }
        if self.train.batch_size == 0 || self.train.shard_size == 0 || !(self.train.learning_rate > 0.0) {
            return Err("train.batch_size, train.shard_size and train.learning_rate must be positive".into());
        }
        if self.attribute.m_steps < diffqec::analysis::attribution::MIN_IG_STEPS {
            return Err("attribute.m_steps must be at least 8".into());
        }
        if let Some(d) = self.bench.distances.iter().find(|d| **d < 3 || **d % 2 == 0) {
            return Err(format!("bench distance {d} must be odd and at least 3"));
        }
        if let Some(dec) = self.bench.decoders.iter().find(|n| !DECODERS.contains(&n.as_str())) {
            return Err(format!("unknown bench decoder {dec:?}"));
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64, String> {
        self.seed.ok_or_else(|| "a seed is required for this command (set `seed` or pass --seed)".into())
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            kind: self.noise.kind,
            p_phys: self.noise.p,
            p_meas: self.noise.p_meas,
        }
    }

    pub fn denoiser_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            d: self.d,
            label_len: self.observables.label_len(),
            steps: self.model.steps,
            hidden: self.model.hidden,
            layers: self.model.layers,
            conv_channels: self.model.conv_channels,
            time_dim: self.model.time_dim,
        }
    }

    pub fn dataset_path(&self, r: usize) -> PathBuf {
        self.out.join(format!("dataset_d{}_r{r}.jsonl", self.d))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint.json"))
    }

    pub fn predictions_path(&self, decoder: &str) -> PathBuf {
        self.out.join(format!("predictions_{decoder}.jsonl"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[noise]\nq = 0.1").is_err());
        let c = RunConfig::from_toml("seed = 4\nrounds = [3, 5]\n[noise]\np = 0.01").unwrap();
        assert_eq!(c.seed, Some(4));
        assert_eq!(c.rounds, vec![3, 5]);
        assert_eq!(c.noise.p, 0.01);
    }

    #[test]
    fn flags_win() {
        let mut c = RunConfig::from_toml("seed = 4\nd = 5").unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            pmeas: Some(0.01),
            ..Default::default()
        });
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.d, 5);
        assert_eq!(c.noise.kind, NoiseKind::Phenomenological);
        c.validate().unwrap();
    }

    #[test]
    fn bad_values_fail_validation() {
        for text in ["d = 4", "rounds = []", "decoder = \"bp\"", "rho = [1.5]", "version = \"v0\"", "chains = 0"] {
            let c = RunConfig::from_toml(text).unwrap();
            assert!(c.validate().is_err(), "{text}");
        }
    }
}
