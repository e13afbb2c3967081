//! CSV traces and run metadata. Column layouts are listed in
//! `docs/csv-schema.md` and must not change without updating it.

use std::path::{Path, PathBuf};

use bpfrls::metrics::RunSummary;
use bpfrls::GENERATOR_ID;
use serde::Serialize;

use crate::config::{parameter_names, Cell, ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::run::{Dataset, MethodRun};

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn nums(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|&v| num(v))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let wrap = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn header(fixed: &[&str], tail: impl IntoIterator<Item = String>) -> Vec<String> {
    fixed.iter().map(|s| s.to_string()).chain(tail).collect()
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// Seeds behind one simulated dataset and the estimator runs on it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeedRecord {
    pub input: u64,
    pub noise: u64,
    pub particles: u64,
}

impl SeedRecord {
    pub fn uniform(seed: u64) -> Self {
        Self {
            input: seed,
            noise: seed,
            particles: seed,
        }
    }
}

#[derive(Serialize)]
pub(crate) struct Metadata<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub operation: &'a str,
    pub generator_id: &'static str,
    pub model_variant: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<Cell>,
    pub seeds: Vec<SeedRecord>,
    pub methods: Vec<&'static str>,
    pub files: Vec<String>,
    pub config: &'a ExperimentConfig,
}

impl<'a> Metadata<'a> {
    pub fn new(operation: &'a str, config: &'a ExperimentConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            operation,
            generator_id: GENERATOR_ID,
            model_variant: &config.model.variant,
            cell: None,
            seeds: Vec::new(),
            methods: config.estimator.methods.iter().map(|m| m.name()).collect(),
            files: Vec::new(),
            config,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("metadata.json");
        let mut text = serde_json::to_string_pretty(self).expect("metadata always serialises");
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

pub(crate) fn write_data(path: &Path, data: &Dataset) -> Result<()> {
    let n = data.model.n();
    let tr = &data.trajectory;
    let rows = (0..tr.len()).map(|t| {
        let mut row = vec![
            t.to_string(),
            u8::from(t >= data.length).to_string(),
            num(tr.u[t]),
            num(tr.y[t]),
            num(tr.x[t][0]),
        ];
        row.extend(nums(&tr.x[t]));
        row.extend([num(tr.v[t]), num(tr.e[t])]);
        row.extend(nums(&tr.w[t]));
        row
    });
    let head = header(
        &["t", "holdout", "u", "y", "y_clean"],
        indexed("x", n)
            .chain(["v".to_string(), "e".to_string()])
            .chain(indexed("w", n)),
    );
    write_csv(path, &head, rows)
}

pub(crate) fn write_theta(path: &Path, run: &MethodRun, names: &[String]) -> Result<()> {
    let r = &run.result;
    let delta = r.delta_theta.as_ref();
    let rows = (0..r.len()).map(|t| {
        let mut row = vec![t.to_string(), delta.map_or(String::new(), |d| num(d[t]))];
        row.extend(nums(&r.theta[t]));
        row
    });
    write_csv(path, &header(&["t", "delta_theta"], names.iter().cloned()), rows)
}

pub(crate) fn write_states(path: &Path, run: &MethodRun, data: &Dataset) -> Result<()> {
    let r = &run.result;
    let n = data.model.n();
    let rows = (0..r.len()).map(|t| {
        let mut row = vec![t.to_string()];
        row.extend(nums(&r.x_hat[t]));
        row.extend(nums(&data.trajectory.x[t]));
        row
    });
    write_csv(path, &header(&["t"], indexed("x_hat", n).chain(indexed("x", n))), rows)
}

pub(crate) fn write_noise(path: &Path, run: &MethodRun, data: &Dataset) -> Result<()> {
    let r = &run.result;
    let tr = &data.trajectory;
    let n = data.model.n();
    let rows = (0..r.len()).map(|t| {
        let mut row = vec![t.to_string(), num(r.v_hat[t]), num(r.e_hat[t])];
        row.extend(nums(&r.w_hat[t]));
        row.extend([num(tr.v[t]), num(tr.e[t])]);
        row.extend(nums(&tr.w[t]));
        row
    });
    let head = header(
        &["t", "v_hat", "e_hat"],
        indexed("w_hat", n)
            .chain(["v".to_string(), "e".to_string()])
            .chain(indexed("w", n)),
    );
    write_csv(path, &head, rows)
}

/// Estimates at the checkpoints, then a row with the true values.
pub(crate) fn write_summary(path: &Path, run: &MethodRun, data: &Dataset, checkpoints: &[usize]) -> Result<()> {
    let r = &run.result;
    let names = parameter_names(data.model.n(), data.model.n_k());
    let mut rows: Vec<Vec<String>> = checkpoints
        .iter()
        .map(|&c| {
            let mut row = vec!["estimate".to_string(), c.to_string()];
            row.extend(nums(&r.theta[c - 1]));
            row.push(r.delta_theta.as_ref().map_or(String::new(), |d| num(d[c - 1])));
            row
        })
        .collect();
    let mut truth = vec!["true".to_string(), String::new()];
    truth.extend(nums(&data.theta));
    truth.push(String::new());
    rows.push(truth);
    write_csv(
        path,
        &header(
            &["row", "samples"],
            names.into_iter().chain(["delta_theta".to_string()]),
        ),
        rows,
    )
}

pub(crate) fn write_prediction(path: &Path, prediction: &[f64], data: &Dataset) -> Result<()> {
    let tr = &data.trajectory;
    let rows = prediction.iter().enumerate().map(|(i, &y_hat)| {
        let t = data.length + i;
        vec![t.to_string(), num(tr.u[t]), num(tr.y[t]), num(tr.x[t][0]), num(y_hat)]
    });
    write_csv(path, &header(&["t", "u", "y", "y_clean", "y_hat"], []), rows)
}

pub(crate) fn write_comparison(path: &Path, runs: &[MethodRun]) -> Result<()> {
    let len = runs.first().map_or(0, |r| r.result.len());
    let rows = (0..len).map(|t| {
        let mut row = vec![t.to_string()];
        row.extend(
            runs.iter()
                .map(|r| r.result.delta_theta.as_ref().map_or(String::new(), |d| num(d[t]))),
        );
        row
    });
    let head = header(&["t"], runs.iter().map(|r| format!("delta_theta_{}", r.method.name())));
    write_csv(path, &head, rows)
}

pub(crate) fn write_mc_summary(path: &Path, summary: &RunSummary, names: &[String]) -> Result<()> {
    let rows = names.iter().enumerate().map(|(j, name)| {
        vec![
            name.clone(),
            num(summary.truth[j]),
            num(summary.mean[j]),
            num(summary.mad[j]),
            num(summary.rmsd[j]),
        ]
    });
    write_csv(path, &header(&["parameter", "true", "mean", "mad", "rmsd"], []), rows)
}

pub(crate) fn write_mc_runs(
    path: &Path,
    seeds: &[u64],
    finals: &[Vec<f64>],
    deltas: &[f64],
    names: &[String],
) -> Result<()> {
    let rows = finals.iter().enumerate().map(|(i, theta)| {
        let mut row = vec![i.to_string(), seeds[i].to_string(), num(deltas[i])];
        row.extend(nums(theta));
        row
    });
    write_csv(
        path,
        &header(&["run", "seed", "delta_theta"], names.iter().cloned()),
        rows,
    )
}

/// One line per cell and method of an experiment.
pub(crate) fn write_index(path: &Path, rows: &[(Cell, Method, f64)]) -> Result<()> {
    let body = rows.iter().map(|(cell, method, delta)| {
        vec![
            cell.dir_name(),
            num(cell.noise_variance),
            cell.particles.to_string(),
            cell.seed.to_string(),
            method.name().to_string(),
            num(*delta),
        ]
    });
    write_csv(
        path,
        &header(
            &[
                "run",
                "noise_variance",
                "particles",
                "seed",
                "method",
                "final_delta_theta",
            ],
            [],
        ),
        body,
    )
}
