//! Built-in experiments.
//!
//! Where a reference model comes in two inconsistent versions, both
//! variants are kept and selectable by name; the variant in use ends up in
//! the run metadata.

use crate::config::{ExperimentConfig, InputSpec, Method, ModelSpec};
use crate::error::{config_error, Result};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// The first variant is the default.
    pub variants: Vec<ModelSpec>,
    build: fn(ModelSpec) -> ExperimentConfig,
}

impl Preset {
    pub fn config(&self, variant: Option<&str>) -> Result<ExperimentConfig> {
        let model = match variant {
            None => self.variants[0].clone(),
            Some(v) => self.variants.iter().find(|m| m.variant == v).cloned().ok_or_else(|| {
                let known: Vec<&str> = self.variants.iter().map(|m| m.variant.as_str()).collect();
                config_error(format!(
                    "preset {} has no variant {v:?} (known: {})",
                    self.name,
                    known.join(", ")
                ))
            })?,
        };
        Ok((self.build)(model))
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

fn example1_model(variant: &str, b12: f64, k2: f64) -> ModelSpec {
    ModelSpec {
        variant: variant.into(),
        a: vec![0.30, -0.25],
        b: vec![vec![0.10, b12], vec![0.30, 0.20]],
        f: vec![1.15, 1.56],
        k: vec![-0.14, k2],
        q: vec![sq(0.07), sq(0.01)],
        r: sq(0.45),
    }
}

fn example1(model: ModelSpec) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(model);
    c.name = "example1".into();
    c.data.length = 3000;
    c.estimator.particles = 1002;
    c.sweep.noise_variances = vec![sq(0.45), sq(0.80), sq(1.00)];
    c.output.checkpoints = vec![100, 1000, 3000];
    c
}

fn example2_model(variant: &str, b31: f64) -> ModelSpec {
    ModelSpec {
        variant: variant.into(),
        a: vec![0.40, -0.24, -0.16, 0.05],
        b: vec![
            vec![-0.45, 0.32, 0.18, -0.10],
            vec![-0.02, 0.10, -0.07, 0.0],
            vec![b31, -0.05, 0.0, 0.20],
            vec![0.05, 0.0, 0.30, -0.20],
        ],
        f: vec![1.20, 1.60, 0.60, 2.12],
        k: vec![-0.41],
        q: vec![sq(0.07), sq(0.01), sq(0.02), sq(0.04)],
        r: sq(0.30),
    }
}

fn example2(model: ModelSpec) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(model);
    c.name = "example2".into();
    c.data.length = 5000;
    c.estimator.particles = 217;
    c.sweep.noise_variances = vec![sq(0.30), sq(0.80), sq(1.00)];
    c.output.checkpoints = vec![100, 1000, 2000, 5000];
    c
}

/// Discretised two-tank model. Its usual `a` entries use the opposite
/// sign convention; they are stored here as `a_i = -A(i, 1)`.
fn example3_model() -> ModelSpec {
    ModelSpec {
        variant: "printed".into(),
        a: vec![0.2773, -0.0190],
        b: vec![vec![-0.0070, 0.0090], vec![0.0, 0.0095]],
        f: vec![0.0350, 0.0092],
        k: vec![0.28],
        q: vec![sq(0.05), sq(0.001)],
        r: sq(0.60),
    }
}

fn example3(model: ModelSpec) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(model);
    c.name = "example3".into();
    c.data.length = 5000;
    c.data.holdout = 100;
    c.data.input = InputSpec::PrbsModulated {
        low: -1.0,
        high: 1.0,
        amplitudes: vec![20.0, 40.0, 60.0, 80.0],
    };
    c.estimator.particles = 1002;
    c.estimator.methods = vec![Method::Bpfrls];
    c.sweep.noise_variances = vec![sq(0.60), sq(0.80), sq(1.00)];
    c.output.checkpoints = vec![100, 1000, 2000, 5000];
    c
}

pub fn presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "example1",
            description: "second-order system, colored noise of order 2, L = 3000, 1002 particles",
            variants: vec![example1_model("text", 0.15, 0.20), example1_model("table", 0.14, 0.01)],
            build: example1,
        },
        Preset {
            name: "example2",
            description: "fourth-order system, 25 parameters, L = 5000, 217 particles",
            variants: vec![example2_model("table", 0.40), example2_model("printed", 0.10)],
            build: example2,
        },
        Preset {
            name: "example3",
            description: "discretised two-tank system, amplitude-modulated PRBS, L = 5000 plus 100 hold-out samples",
            variants: vec![example3_model()],
            build: example3,
        },
    ]
}

pub fn preset(name: &str, variant: Option<&str>) -> Result<ExperimentConfig> {
    let all = presets();
    let p = all.iter().find(|p| p.name == name).ok_or_else(|| {
        let known: Vec<&str> = all.iter().map(|p| p.name).collect();
        config_error(format!("unknown preset {name:?} (known: {})", known.join(", ")))
    })?;
    p.config(variant)
}
