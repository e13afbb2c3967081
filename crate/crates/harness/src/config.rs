//! Declarative experiment configuration.
//!
//! A config is a TOML document. Only `[model]` is required; every other
//! section and field falls back to the defaults below. The full schema is
//! documented in `docs/config.md`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use bpfrls::joint::Forgetting;
use bpfrls::metrics::MadCenter;
use bpfrls::model::parameter_len;
use bpfrls::rls::DEFAULT_P0;
use bpfrls::{BilinearModel, Estimator, JointConfig, ParameterVector, ResamplePolicy, StateEstimateMode, WeightMode};
use serde::{Deserialize, Serialize};

use crate::error::{config_error, HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub montecarlo: MonteCarloSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_name() -> String {
    "experiment".into()
}

/// True system. `n = a.len()` and `n_k = k.len()`; `b` is given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Label recorded in the run metadata, e.g. which version of a reference
    /// model this is.
    #[serde(default = "default_variant")]
    pub variant: String,
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    #[serde(default)]
    pub k: Vec<f64>,
    /// Diagonal of the process-noise covariance.
    pub q: Vec<f64>,
    /// Measurement-noise variance, used when the sweep lists none.
    pub r: f64,
}

fn default_variant() -> String {
    "custom".into()
}

impl ModelSpec {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn n_k(&self) -> usize {
        self.k.len()
    }

    pub fn parameter_len(&self) -> usize {
        parameter_len(self.n(), self.n_k())
    }

    /// The model with measurement-noise variance `r`.
    pub fn build(&self, r: f64) -> Result<BilinearModel> {
        let n = self.n();
        if let Some(row) = self.b.iter().find(|row| row.len() != n) {
            return Err(config_error(format!(
                "model.b rows must have {n} entries, found {}",
                row.len()
            )));
        }
        if self.b.len() != n {
            return Err(config_error(format!(
                "model.b must have {n} rows, found {}",
                self.b.len()
            )));
        }
        Ok(BilinearModel::from_parameters(
            &ParameterVector(self.theta()),
            n,
            self.n_k(),
            self.q.clone(),
            r,
        )?)
    }

    /// `[a | B row-major | f | k]`.
    pub fn theta(&self) -> Vec<f64> {
        let mut theta = self.a.clone();
        theta.extend(self.b.iter().flatten());
        theta.extend(&self.f);
        theta.extend(&self.k);
        theta
    }

    pub fn parameter_names(&self) -> Vec<String> {
        parameter_names(self.n(), self.n_k())
    }
}

/// Column names for a packed parameter vector: `a1.., b11.., f1.., k1..`.
pub fn parameter_names(n: usize, n_k: usize) -> Vec<String> {
    let sep = if n >= 10 { "_" } else { "" };
    let mut names: Vec<String> = (1..=n).map(|i| format!("a{i}")).collect();
    for i in 1..=n {
        for j in 1..=n {
            names.push(format!("b{i}{sep}{j}"));
        }
    }
    names.extend((1..=n).map(|i| format!("f{i}")));
    names.extend((1..=n_k).map(|i| format!("k{i}")));
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Identification length `L`.
    #[serde(default = "default_length")]
    pub length: usize,
    /// Extra samples simulated after the identification window and used only
    /// for output prediction.
    #[serde(default)]
    pub holdout: usize,
    #[serde(default)]
    pub input: InputSpec,
}

fn default_length() -> usize {
    3000
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            length: default_length(),
            holdout: 0,
            input: InputSpec::default(),
        }
    }
}

impl DataSpec {
    pub fn total_len(&self) -> usize {
        self.length + self.holdout
    }
}

/// Excitation. The schedule of `prbs-modulated` spans identification and
/// hold-out samples together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSpec {
    Prbs {
        #[serde(default = "default_low")]
        low: f64,
        #[serde(default = "default_high")]
        high: f64,
    },
    PrbsModulated {
        #[serde(default = "default_low")]
        low: f64,
        #[serde(default = "default_high")]
        high: f64,
        amplitudes: Vec<f64>,
    },
}

fn default_low() -> f64 {
    -1.0
}

fn default_high() -> f64 {
    1.0
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec::Prbs { low: -1.0, high: 1.0 }
    }
}

/// An estimator run on each dataset. `bpfrls` uses `estimator.weight-mode`;
/// the other two B-PF-RLS entries fix it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bpfrls,
    BpfrlsKnownR,
    BpfrlsDwo,
    Bsorls,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Bpfrls, Method::BpfrlsKnownR, Method::BpfrlsDwo, Method::Bsorls];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bpfrls => "bpfrls",
            Method::BpfrlsKnownR => "bpfrls-known-r",
            Method::BpfrlsDwo => "bpfrls-dwo",
            Method::Bsorls => "bsorls",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EstimatorSpec {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_weight_mode")]
    pub weight_mode: WeightMode,
    /// Variance used by known-R weighting; defaults to the true variance of
    /// each run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Process-noise diagonal used by the particles; defaults to the model's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default = "default_init_spread")]
    pub init_spread: f64,
    #[serde(default = "default_resample")]
    pub resample: ResamplePolicy,
    #[serde(default = "default_state_estimate")]
    pub state_estimate: StateEstimateMode,
    #[serde(default = "default_observer_p0")]
    pub observer_p0: f64,
    #[serde(default = "default_true")]
    pub stability_guard: bool,
    /// `initial = 1` gives plain recursive least squares.
    #[serde(default)]
    pub forgetting: Forgetting,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Bpfrls]
}

fn default_particles() -> usize {
    1002
}

fn default_weight_mode() -> WeightMode {
    WeightMode::KnownR
}

fn default_p0() -> f64 {
    DEFAULT_P0
}

fn default_init_spread() -> f64 {
    0.1
}

fn default_resample() -> ResamplePolicy {
    ResamplePolicy::EveryStep
}

fn default_state_estimate() -> StateEstimateMode {
    StateEstimateMode::Weighted
}

fn default_observer_p0() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            particles: default_particles(),
            weight_mode: default_weight_mode(),
            r: None,
            q: None,
            p0: default_p0(),
            theta0: None,
            init_spread: default_init_spread(),
            resample: default_resample(),
            state_estimate: default_state_estimate(),
            observer_p0: default_observer_p0(),
            stability_guard: true,
            forgetting: Forgetting::default(),
        }
    }
}

impl EstimatorSpec {
    /// Core configuration for one run of `method`.
    pub fn joint_config(
        &self,
        method: Method,
        model: &ModelSpec,
        true_r: f64,
        particles: usize,
        seed: u64,
    ) -> JointConfig {
        let mut cfg = JointConfig::new(
            model.n(),
            model.n_k(),
            self.q.clone().unwrap_or_else(|| model.q.clone()),
            Some(self.r.unwrap_or(true_r)),
        );
        cfg.particles = particles;
        cfg.weight_mode = match method {
            Method::BpfrlsKnownR => WeightMode::KnownR,
            Method::BpfrlsDwo => WeightMode::Dwo,
            Method::Bpfrls | Method::Bsorls => self.weight_mode,
        };
        cfg.estimator = match method {
            Method::Bsorls => Estimator::Bsorls,
            _ => Estimator::Bpfrls,
        };
        cfg.p0 = self.p0;
        cfg.theta0 = self.theta0.clone();
        cfg.init_spread = self.init_spread;
        cfg.resample = self.resample;
        cfg.state_estimate = self.state_estimate;
        cfg.observer_p0 = self.observer_p0;
        cfg.stability_guard = self.stability_guard;
        cfg.forgetting = (self.forgetting.initial != 1.0).then_some(self.forgetting);
        cfg.seed = seed;
        cfg
    }
}

/// Grid of runs: every noise variance x particle count x seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepSpec {
    /// Measurement-noise variances; empty means `[model.r]`.
    #[serde(default)]
    pub noise_variances: Vec<f64>,
    /// Particle counts; empty means `[estimator.particles]`.
    #[serde(default)]
    pub particle_counts: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            noise_variances: Vec::new(),
            particle_counts: Vec::new(),
            seeds: default_seeds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MonteCarloSpec {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub mad_center: MadCenter,
    /// Reuse the base seed for every run instead of `seed + i`.
    #[serde(default)]
    pub fixed_seed: bool,
}

fn default_runs() -> usize {
    50
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self {
            runs: default_runs(),
            mad_center: MadCenter::Mean,
            fixed_seed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Times `t` (1-based sample counts) reported in the summary tables.
    /// Entries beyond the data length are dropped; the final time is always
    /// reported.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<usize>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_checkpoints() -> Vec<usize> {
    vec![100, 1000, 3000]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            checkpoints: default_checkpoints(),
        }
    }
}

/// One cell of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub noise_index: usize,
    pub noise_variance: f64,
    pub particles: usize,
    pub seed: u64,
}

impl Cell {
    pub fn dir_name(&self) -> String {
        format!("v{}_n{}_s{}", self.noise_index, self.particles, self.seed)
    }
}

impl ExperimentConfig {
    /// A config with the given model and defaults everywhere else.
    pub fn new(model: ModelSpec) -> Self {
        Self {
            name: default_name(),
            model,
            data: DataSpec::default(),
            estimator: EstimatorSpec::default(),
            sweep: SweepSpec::default(),
            montecarlo: MonteCarloSpec::default(),
            output: OutputSpec::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment configs always serialise")
    }

    pub fn noise_variances(&self) -> Vec<f64> {
        if self.sweep.noise_variances.is_empty() {
            vec![self.model.r]
        } else {
            self.sweep.noise_variances.clone()
        }
    }

    pub fn particle_counts(&self) -> Vec<usize> {
        if self.sweep.particle_counts.is_empty() {
            vec![self.estimator.particles]
        } else {
            self.sweep.particle_counts.clone()
        }
    }

    /// Cells in a fixed order: noise variance, then particle count, then seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for (noise_index, &noise_variance) in self.noise_variances().iter().enumerate() {
            for &particles in &self.particle_counts() {
                for &seed in &self.sweep.seeds {
                    cells.push(Cell {
                        noise_index,
                        noise_variance,
                        particles,
                        seed,
                    });
                }
            }
        }
        cells
    }

    /// Checkpoints within `1..=L`, sorted, always ending with `L`.
    pub fn checkpoints(&self) -> Vec<usize> {
        let len = self.data.length;
        let mut set: BTreeSet<usize> = self
            .output
            .checkpoints
            .iter()
            .copied()
            .filter(|&t| t >= 1 && t <= len)
            .collect();
        set.insert(len);
        set.into_iter().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let model = &self.model;
        if model.n() == 0 {
            return Err(config_error("model.a must not be empty"));
        }
        model.build(model.r)?;
        if self.data.length == 0 {
            return Err(config_error("data.length must be positive"));
        }
        if let InputSpec::PrbsModulated { amplitudes, .. } = &self.data.input {
            if amplitudes.is_empty() {
                return Err(config_error("data.input.amplitudes must not be empty"));
            }
            if amplitudes.len() > self.data.total_len() {
                return Err(config_error("more amplitude segments than samples"));
            }
        }
        let (low, high) = match &self.data.input {
            InputSpec::Prbs { low, high } | InputSpec::PrbsModulated { low, high, .. } => (*low, *high),
        };
        if !(low.is_finite() && high.is_finite()) {
            return Err(config_error("input levels must be finite"));
        }

        let est = &self.estimator;
        if est.methods.is_empty() {
            return Err(config_error("estimator.methods must not be empty"));
        }
        let distinct: BTreeSet<Method> = est.methods.iter().copied().collect();
        if distinct.len() != est.methods.len() {
            return Err(config_error("estimator.methods lists a method twice"));
        }
        if self.sweep.seeds.is_empty() {
            return Err(config_error("sweep.seeds must not be empty"));
        }
        let distinct: BTreeSet<u64> = self.sweep.seeds.iter().copied().collect();
        if distinct.len() != self.sweep.seeds.len() {
            return Err(config_error("sweep.seeds lists a seed twice"));
        }
        for &r in &self.noise_variances() {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(config_error(format!(
                    "noise variance must be finite and non-negative, got {r}"
                )));
            }
        }
        let counts = self.particle_counts();
        if counts.contains(&0) {
            return Err(config_error("particle counts must be positive"));
        }
        if counts.iter().collect::<BTreeSet<_>>().len() != counts.len() {
            return Err(config_error("sweep.particle-counts lists a count twice"));
        }
        for &r in &self.noise_variances() {
            for &method in &est.methods {
                est.joint_config(method, model, r, counts[0], 0).validate()?;
            }
        }
        if self.output.checkpoints.contains(&0) {
            return Err(config_error("checkpoints count samples from 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelSpec {
        ModelSpec {
            variant: "custom".into(),
            a: vec![0.3, -0.25],
            b: vec![vec![0.1, 0.15], vec![0.3, 0.2]],
            f: vec![1.15, 1.56],
            k: vec![-0.14, 0.2],
            q: vec![0.0049, 0.0001],
            r: 0.2025,
        }
    }

    #[test]
    fn model_only_config_gets_defaults() {
        let text = r#"
            [model]
            a = [0.3, -0.25]
            b = [[0.1, 0.15], [0.3, 0.2]]
            f = [1.15, 1.56]
            k = [-0.14, 0.2]
            q = [0.0049, 0.0001]
            r = 0.2025
        "#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(config, ExperimentConfig::new(model()));
        assert_eq!(config.data.length, 3000);
        assert_eq!(config.estimator.particles, 1002);
        assert_eq!(config.cells().len(), 1);
        config.validate().unwrap();
    }

    #[test]
    fn model_is_required() {
        assert!(ExperimentConfig::from_toml_str("name = \"x\"").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut text = ExperimentConfig::new(model()).to_toml_string();
        text.push_str("\n[extra]\nvalue = 1\n");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut config = ExperimentConfig::new(model());
        config.data.input = InputSpec::PrbsModulated {
            low: -1.0,
            high: 1.0,
            amplitudes: vec![2.0, 3.0],
        };
        config.estimator.methods = vec![Method::BpfrlsDwo, Method::Bsorls];
        config.estimator.resample = ResamplePolicy::EssThreshold(0.5);
        config.estimator.q = Some(vec![0.01, 0.01]);
        config.sweep.noise_variances = vec![0.1, 0.2];
        let back = ExperimentConfig::from_toml_str(&config.to_toml_string()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn theta_and_names_line_up() {
        let m = model();
        assert_eq!(m.theta(), vec![0.3, -0.25, 0.1, 0.15, 0.3, 0.2, 1.15, 1.56, -0.14, 0.2]);
        assert_eq!(
            m.parameter_names(),
            ["a1", "a2", "b11", "b12", "b21", "b22", "f1", "f2", "k1", "k2"]
        );
        assert_eq!(m.build(0.1).unwrap().pack().as_slice(), m.theta().as_slice());
        assert_eq!(parameter_names(10, 0)[10 + 1], "b1_2");
    }

    #[test]
    fn cells_are_ordered() {
        let mut config = ExperimentConfig::new(model());
        config.sweep.noise_variances = vec![0.1, 0.2];
        config.sweep.particle_counts = vec![10, 20];
        config.sweep.seeds = vec![5, 6];
        let cells = config.cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(
            (cells[0].noise_variance, cells[0].particles, cells[0].seed),
            (0.1, 10, 5)
        );
        assert_eq!(
            (cells[1].noise_variance, cells[1].particles, cells[1].seed),
            (0.1, 10, 6)
        );
        assert_eq!(
            (cells[7].noise_variance, cells[7].particles, cells[7].seed),
            (0.2, 20, 6)
        );
        assert_eq!(cells[7].dir_name(), "v1_n20_s6");
    }

    #[test]
    fn checkpoints_are_clipped_and_end_at_length() {
        let mut config = ExperimentConfig::new(model());
        config.data.length = 1500;
        assert_eq!(config.checkpoints(), vec![100, 1000, 1500]);
        config.data.length = 3000;
        assert_eq!(config.checkpoints(), vec![100, 1000, 3000]);
    }

    #[test]
    fn validation_errors() {
        let base = ExperimentConfig::new(model());
        base.validate().unwrap();

        let mut c = base.clone();
        c.data.length = 0;
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.model.b = vec![vec![0.1, 0.15]];
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.model.q = vec![0.1];
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.estimator.methods = vec![];
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.estimator.methods = vec![Method::Bsorls, Method::Bsorls];
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.sweep.particle_counts = vec![0];
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.sweep.seeds = vec![];
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.sweep.noise_variances = vec![0.0];
        assert!(c.validate().is_err(), "known-R weighting with zero variance");
        c.estimator.methods = vec![Method::BpfrlsDwo];
        c.validate().unwrap();

        let mut c = base.clone();
        c.estimator.theta0 = Some(vec![0.0; 3]);
        assert!(c.validate().is_err());

        let mut c = base;
        c.data.input = InputSpec::PrbsModulated {
            low: -1.0,
            high: 1.0,
            amplitudes: vec![],
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn method_names_parse_back() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("kalman"), None);
    }

    #[test]
    fn joint_config_mapping() {
        let spec = EstimatorSpec::default();
        let m = model();
        let cfg = spec.joint_config(Method::BpfrlsDwo, &m, 0.64, 50, 9);
        assert_eq!(cfg.weight_mode, WeightMode::Dwo);
        assert_eq!(cfg.estimator, Estimator::Bpfrls);
        assert_eq!((cfg.particles, cfg.seed, cfg.r), (50, 9, Some(0.64)));
        assert_eq!(cfg.q_diag, m.q);
        assert!(cfg.forgetting.is_some());
        let cfg = spec.joint_config(Method::Bsorls, &m, 0.64, 50, 9);
        assert_eq!(cfg.estimator, Estimator::Bsorls);

        let mut plain = spec;
        plain.forgetting.initial = 1.0;
        plain.r = Some(0.5);
        let cfg = plain.joint_config(Method::Bpfrls, &m, 0.64, 50, 9);
        assert_eq!(cfg.forgetting, None);
        assert_eq!(cfg.r, Some(0.5));
    }
}
