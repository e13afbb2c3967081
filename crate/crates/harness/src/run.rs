//! Experiment operations: dataset generation, estimator runs and the
//! `simulate` / `identify` / `compare` / `montecarlo` drivers.
//!
//! One seed drives a whole cell: the input, the noise and the particles draw
//! from disjoint streams of the same generator, so a cell is reproducible from
//! its seed alone and every method in a cell sees the same data.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use bpfrls::joint::{identify, predict_outputs};
use bpfrls::metrics::{monte_carlo_summary, RunSummary};
use bpfrls::model::simulate as simulate_model;
use bpfrls::signals::{prbs, prbs_amplitude_modulated};
use bpfrls::{BilinearModel, IdentificationResult, NoiseStreams, Trajectory};
use rayon::prelude::*;

use crate::config::{Cell, DataSpec, ExperimentConfig, InputSpec, Method};
use crate::error::{config_error, Result};
use crate::output::{self, Metadata, SeedRecord};

/// A simulated dataset: `length` identification samples followed by the
/// hold-out samples.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub seed: u64,
    pub noise_variance: f64,
    pub model: BilinearModel,
    pub theta: Vec<f64>,
    pub trajectory: Trajectory,
    pub length: usize,
}

impl Dataset {
    pub fn u_train(&self) -> &[f64] {
        &self.trajectory.u[..self.length]
    }

    pub fn y_train(&self) -> &[f64] {
        &self.trajectory.y[..self.length]
    }

    pub fn u_holdout(&self) -> &[f64] {
        &self.trajectory.u[self.length..]
    }

    pub fn y_holdout(&self) -> &[f64] {
        &self.trajectory.y[self.length..]
    }

    /// Noise-free hold-out output `x_1(t)`.
    pub fn clean_holdout(&self) -> Vec<f64> {
        self.trajectory.clean_output()[self.length..].to_vec()
    }
}

pub fn input_signal(spec: &DataSpec, seed: u64) -> Result<Vec<f64>> {
    let len = spec.total_len();
    Ok(match &spec.input {
        InputSpec::Prbs { low, high } => prbs(len, seed, *low, *high),
        InputSpec::PrbsModulated { low, high, amplitudes } => {
            prbs_amplitude_modulated(len, seed, (*low, *high), amplitudes)?
        }
    })
}

pub fn simulate_dataset(config: &ExperimentConfig, noise_variance: f64, seed: u64) -> Result<Dataset> {
    let model = config.model.build(noise_variance)?;
    let u = input_signal(&config.data, seed)?;
    let noise = NoiseStreams::generate(seed, u.len(), noise_variance, &model.q_diag);
    let trajectory = simulate_model(&model, &u, &noise)?;
    Ok(Dataset {
        seed,
        noise_variance,
        theta: model.pack().into_inner(),
        model,
        trajectory,
        length: config.data.length,
    })
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub result: IdentificationResult,
    /// Noise-free simulation of the final model over the hold-out input,
    /// started from the final state estimate.
    pub prediction: Option<Vec<f64>>,
}

impl MethodRun {
    pub fn final_delta(&self) -> f64 {
        self.result
            .final_delta()
            .expect("runs on simulated data know the truth")
    }
}

/// Runs `method` on `data`; the particle streams use the dataset's seed.
pub fn run_method(config: &ExperimentConfig, method: Method, data: &Dataset, particles: usize) -> Result<MethodRun> {
    let joint = config
        .estimator
        .joint_config(method, &config.model, data.noise_variance, particles, data.seed);
    let result = identify(&joint, data.u_train(), data.y_train(), Some(&data.theta))?;
    let prediction = if data.u_holdout().is_empty() {
        None
    } else {
        Some(predict_outputs(
            result.final_theta(),
            data.model.n(),
            data.model.n_k(),
            data.u_holdout(),
            &result.final_state,
        )?)
    };
    Ok(MethodRun {
        method,
        result,
        prediction,
    })
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub cell: Cell,
    pub data: Dataset,
    pub runs: Vec<MethodRun>,
}

/// Simulates a cell's data and runs every configured method on it, in memory.
pub fn run_cell(config: &ExperimentConfig, cell: Cell) -> Result<CellRun> {
    let data = simulate_dataset(config, cell.noise_variance, cell.seed)?;
    let runs = config
        .estimator
        .methods
        .iter()
        .map(|&m| run_method(config, m, &data, cell.particles))
        .collect::<Result<Vec<_>>>()?;
    Ok(CellRun { cell, data, runs })
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    /// `(cell, method, final delta_theta)` in cell order.
    pub rows: Vec<(Cell, Method, f64)>,
}

fn write_cell(config: &ExperimentConfig, operation: &str, run: &CellRun, dir: &Path) -> Result<()> {
    output::create_dir(dir)?;
    let names = config.model.parameter_names();
    let checkpoints = config.checkpoints();
    let mut files = vec!["data.csv".to_string()];
    output::write_data(&dir.join("data.csv"), &run.data)?;
    for m in &run.runs {
        let prefix = m.method.name();
        let mut emit = |kind: &str| {
            let file = format!("{prefix}_{kind}.csv");
            files.push(file.clone());
            dir.join(file)
        };
        output::write_theta(&emit("theta"), m, &names)?;
        output::write_states(&emit("states"), m, &run.data)?;
        output::write_noise(&emit("noise"), m, &run.data)?;
        output::write_summary(&emit("summary"), m, &run.data, &checkpoints)?;
        if let Some(p) = &m.prediction {
            output::write_prediction(&emit("prediction"), p, &run.data)?;
        }
    }
    if run.runs.len() > 1 {
        files.push("comparison.csv".into());
        output::write_comparison(&dir.join("comparison.csv"), &run.runs)?;
    }
    let mut meta = Metadata::new(operation, config);
    meta.cell = Some(run.cell);
    meta.seeds = vec![SeedRecord::uniform(run.cell.seed)];
    meta.files = files;
    meta.write(dir)?;
    Ok(())
}

fn execute(config: &ExperimentConfig, operation: &str) -> Result<ExperimentReport> {
    config.validate()?;
    let out_dir = config.output.dir.clone();
    output::create_dir(&out_dir)?;
    let cells = config.cells();
    let per_cell = cells
        .par_iter()
        .map(|&cell| {
            let run = run_cell(config, cell)?;
            write_cell(config, operation, &run, &out_dir.join(cell.dir_name()))?;
            Ok(run
                .runs
                .iter()
                .map(|m| (cell, m.method, m.final_delta()))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = per_cell.into_iter().flatten().collect();
    output::write_index(&out_dir.join("index.csv"), &rows)?;
    let mut meta = Metadata::new(operation, config);
    meta.seeds = config.sweep.seeds.iter().map(|&s| SeedRecord::uniform(s)).collect();
    meta.files = std::iter::once("index.csv".to_string())
        .chain(cells.iter().map(|c| format!("{}/", c.dir_name())))
        .collect();
    meta.write(&out_dir)?;
    Ok(ExperimentReport { out_dir, rows })
}

/// Simulates and identifies every cell of the sweep, writing one directory of
/// traces per cell plus an index.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    execute(config, "identify")
}

/// Like [`run_experiment`], but requires at least two methods; each cell's
/// methods share one dataset, and `comparison.csv` puts their errors side by
/// side.
pub fn compare(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.estimator.methods.len() < 2 {
        return Err(config_error("compare needs at least two methods in estimator.methods"));
    }
    execute(config, "compare")
}

/// Writes the simulated data of each (noise variance, seed) pair without
/// running any estimator. Returns the directories written.
pub fn simulate(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let out_dir = config.output.dir.clone();
    output::create_dir(&out_dir)?;
    let pairs: Vec<(usize, f64, u64)> = config
        .noise_variances()
        .into_iter()
        .enumerate()
        .flat_map(|(i, r)| config.sweep.seeds.iter().map(move |&s| (i, r, s)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, r, seed)| {
            let data = simulate_dataset(config, r, seed)?;
            let dir = out_dir.join(format!("v{i}_s{seed}"));
            output::create_dir(&dir)?;
            output::write_data(&dir.join("data.csv"), &data)?;
            let mut meta = Metadata::new("simulate", config);
            meta.methods.clear();
            meta.seeds = vec![SeedRecord::uniform(seed)];
            meta.files = vec!["data.csv".into()];
            meta.write(&dir)?;
            Ok(dir)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MonteCarloCell {
    pub noise_index: usize,
    pub noise_variance: f64,
    pub particles: usize,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub out_dir: PathBuf,
    pub cells: Vec<MonteCarloCell>,
}

/// Seeds of the Monte Carlo runs: `base + i`, or `base` throughout when the
/// seed is fixed.
pub fn montecarlo_seeds(config: &ExperimentConfig) -> Vec<u64> {
    let base = config.sweep.seeds[0];
    (0..config.montecarlo.runs as u64)
        .map(|i| if config.montecarlo.fixed_seed { base } else { base + i })
        .collect()
}

/// `montecarlo.runs` independent runs per noise variance and particle count,
/// summarised per parameter. Only the first entry of `sweep.seeds` is used,
/// as the base seed.
pub fn montecarlo(config: &ExperimentConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    if config.montecarlo.runs < 2 {
        return Err(config_error(format!(
            "a Monte Carlo study needs at least 2 runs, got {}",
            config.montecarlo.runs
        )));
    }
    let out_dir = config.output.dir.clone();
    output::create_dir(&out_dir)?;
    let seeds = montecarlo_seeds(config);
    let names = config.model.parameter_names();
    let methods = &config.estimator.methods;

    let mut cells = Vec::new();
    let mut files = Vec::new();
    for (noise_index, &r) in config.noise_variances().iter().enumerate() {
        for &particles in &config.particle_counts() {
            // finals[run][method]
            let finals = seeds
                .par_iter()
                .map(|&seed| {
                    let data = simulate_dataset(config, r, seed)?;
                    methods
                        .iter()
                        .map(|&m| Ok(run_method(config, m, &data, particles)?.result.final_theta().to_vec()))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let theta = config.model.theta();
            for (j, &method) in methods.iter().enumerate() {
                let per_run: Vec<Vec<f64>> = finals.iter().map(|f| f[j].clone()).collect();
                let summary = monte_carlo_summary(&per_run, &theta, config.montecarlo.mad_center)?;
                let stem = format!("mc_v{noise_index}_n{particles}_{}", method.name());
                output::write_mc_summary(&out_dir.join(format!("{stem}_summary.csv")), &summary, &names)?;
                output::write_mc_runs(
                    &out_dir.join(format!("{stem}_runs.csv")),
                    &seeds,
                    &per_run,
                    &summary.final_delta,
                    &names,
                )?;
                files.push(format!("{stem}_summary.csv"));
                files.push(format!("{stem}_runs.csv"));
                cells.push(MonteCarloCell {
                    noise_index,
                    noise_variance: r,
                    particles,
                    method,
                    seeds: seeds.clone(),
                    summary,
                });
            }
        }
    }
    let mut meta = Metadata::new("montecarlo", config);
    let distinct: BTreeSet<u64> = seeds.iter().copied().collect();
    meta.seeds = distinct.into_iter().map(SeedRecord::uniform).collect();
    meta.files = files;
    meta.write(&out_dir)?;
    Ok(MonteCarloReport { out_dir, cells })
}
