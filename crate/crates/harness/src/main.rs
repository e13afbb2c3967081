use std::path::PathBuf;
use std::process::ExitCode;

use bpfrls::metrics::{median, MadCenter};
use bpfrls::WeightMode;
use bpfrls_harness::{presets, ExperimentConfig, HarnessError, Method};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bpfrls", version, about = "Bilinear system identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate datasets and write them without identifying anything.
    Simulate(RunArgs),
    /// Simulate and identify every cell of the sweep.
    Identify(RunArgs),
    /// Run two or more methods on the same datasets.
    Compare(RunArgs),
    /// Repeat runs over consecutive seeds and summarise the final estimates.
    Montecarlo {
        #[command(flatten)]
        run: RunArgs,
        /// Number of runs M (seeds seed, seed+1, ..., seed+M-1).
        #[arg(long)]
        runs: Option<usize>,
        /// Use the base seed for every run.
        #[arg(long)]
        fixed_seed: bool,
        #[arg(long, value_enum)]
        mad_center: Option<CliMadCenter>,
    },
    /// Built-in experiments.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List the built-in presets and their model variants.
    List,
    /// Print a preset as a TOML config.
    Show {
        name: String,
        #[arg(long)]
        variant: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment: example1, example2 or example3.
    #[arg(long)]
    preset: Option<String>,
    /// Model variant of the preset.
    #[arg(long, requires = "preset")]
    variant: Option<String>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single particle count instead of the configured list.
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long, value_enum)]
    weight_mode: Option<CliWeightMode>,
    /// Run a single measurement-noise variance instead of the configured list.
    #[arg(long)]
    noise_variance: Option<f64>,
    /// Identification length L.
    #[arg(long)]
    length: Option<usize>,
    /// Comma-separated methods: bpfrls, bpfrls-known-r, bpfrls-dwo, bsorls.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliWeightMode {
    KnownR,
    Dwo,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMadCenter {
    Mean,
    Truth,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        let known: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method {s:?} (known: {})", known.join(", "))
    })
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut c = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_file(path)?,
            (None, Some(name)) => bpfrls_harness::preset(name, self.variant.as_deref())?,
            (None, None) => return Err(HarnessError::Config("pass --preset <name> or --config <file>".into())),
        };
        if let Some(seed) = self.seed {
            c.sweep.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            c.output.dir = out.clone();
        }
        if let Some(n) = self.particles {
            c.estimator.particles = n;
            c.sweep.particle_counts = vec![n];
        }
        if let Some(mode) = self.weight_mode {
            c.estimator.weight_mode = match mode {
                CliWeightMode::KnownR => WeightMode::KnownR,
                CliWeightMode::Dwo => WeightMode::Dwo,
            };
        }
        if let Some(r) = self.noise_variance {
            c.sweep.noise_variances = vec![r];
        }
        if let Some(len) = self.length {
            c.data.length = len;
        }
        if let Some(methods) = &self.methods {
            c.estimator.methods = methods.clone();
        }
        Ok(c)
    }
}

fn percent(v: f64) -> String {
    format!("{:.4}%", 100.0 * v)
}

fn print_report(report: &bpfrls_harness::run::ExperimentReport) {
    for (cell, method, delta) in &report.rows {
        println!(
            "{:<16} {:<15} noise variance {:<8} final delta_theta {}",
            cell.dir_name(),
            method.name(),
            cell.noise_variance,
            percent(*delta)
        );
    }
    println!("wrote {}", report.out_dir.display());
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate(args) => {
            for dir in bpfrls_harness::simulate(&args.load()?)? {
                println!("{}", dir.display());
            }
        }
        Command::Identify(args) => print_report(&bpfrls_harness::run_experiment(&args.load()?)?),
        Command::Compare(args) => print_report(&bpfrls_harness::compare(&args.load()?)?),
        Command::Montecarlo {
            run,
            runs,
            fixed_seed,
            mad_center,
        } => {
            let mut config = run.load()?;
            if let Some(m) = runs {
                config.montecarlo.runs = m;
            }
            config.montecarlo.fixed_seed |= fixed_seed;
            if let Some(c) = mad_center {
                config.montecarlo.mad_center = match c {
                    CliMadCenter::Mean => MadCenter::Mean,
                    CliMadCenter::Truth => MadCenter::Truth,
                };
            }
            let report = bpfrls_harness::montecarlo(&config)?;
            for cell in &report.cells {
                println!(
                    "v{} n{} {:<15} {} runs, median final delta_theta {}",
                    cell.noise_index,
                    cell.particles,
                    cell.method.name(),
                    cell.summary.runs,
                    percent(median(&cell.summary.final_delta))
                );
            }
            println!("wrote {}", report.out_dir.display());
        }
        Command::Preset { action } => match action {
            PresetAction::List => {
                for p in presets() {
                    let variants: Vec<&str> = p.variants.iter().map(|m| m.variant.as_str()).collect();
                    println!("{:<9} {} [variants: {}]", p.name, p.description, variants.join(", "));
                }
            }
            PresetAction::Show { name, variant } => {
                print!(
                    "{}",
                    bpfrls_harness::preset(&name, variant.as_deref())?.to_toml_string()
                );
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
