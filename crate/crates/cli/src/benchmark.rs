//! `mps-sso benchmark`: the methods x layers grid against one model ground
//! state, emitting the per-cell CSV and optional plot-ready data.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use mps_sso::experiment::{run_experiment, Method};
use mps_sso::hamiltonian::HamiltonianSpec;
use mps_sso::{Error, ExperimentConfig, Result, SsoConfig, TnoConfig};

use crate::config::{
    load_config, parse_grad, parse_layer_list, save_config, ModelTarget, TargetConfig,
    TargetFlags,
};

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    target: TargetFlags,

    /// Comma-separated methods (default: all five).
    #[arg(long)]
    methods: Option<String>,

    /// Run every depth 1..=K.
    #[arg(long, conflicts_with = "layers")]
    layers_max: Option<usize>,

    /// Comma-separated explicit depth list (overrides --layers-max).
    #[arg(long)]
    layers: Option<String>,

    /// Best-of-N restarts per grid cell.
    #[arg(long)]
    restarts: Option<u32>,

    /// Root seed of the grid.
    #[arg(long)]
    seed: Option<u64>,

    /// Schmidt threshold for inter-layer truncation.
    #[arg(long)]
    thresh: Option<f64>,

    /// Gradient mode: analytic or fd.
    #[arg(long)]
    grad: Option<String>,

    /// Optimiser iteration cap per layer.
    #[arg(long)]
    max_iter: Option<usize>,

    /// Worker threads for the grid.
    #[arg(long)]
    jobs: Option<usize>,

    /// Write the per-cell CSV here.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,

    /// Also write plot-ready CSVs (eps_S vs L, chi_max vs L) next to --out.
    #[arg(long)]
    emit_plot_data: bool,

    /// Load the run configuration from a JSON file (flags still override).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Write the resolved run configuration here.
    #[arg(long)]
    save_config: Option<PathBuf>,

    /// Print the full grid result as JSON instead of the summary table.
    #[arg(long)]
    json: bool,
}

/// The fully-resolved grid run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub model: ModelTarget,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub layers: Vec<usize>,
    #[serde(default = "default_restarts")]
    pub restarts: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_grid_sso")]
    pub sso: SsoConfig,
    #[serde(default)]
    pub tno: TnoConfig,
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_restarts() -> u32 {
    2
}
fn default_seed() -> u64 {
    7
}
fn default_jobs() -> usize {
    1
}
fn default_grid_sso() -> SsoConfig {
    // the grid supplies best-of-restarts itself; the inner optimiser runs one
    SsoConfig { restarts: 1, ..SsoConfig::default() }
}

impl BenchmarkConfig {
    fn to_experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            chi_target: self.model.chi_target,
            thresh: self.sso.lambda_thresh,
            target_thresh: self.model.target_thresh,
            restarts: self.restarts,
            seed: self.seed,
            jobs: self.jobs,
            sso: self.sso.clone(),
            tno: self.tno.clone(),
        }
    }
}

fn resolve(args: &BenchmarkArgs) -> Result<BenchmarkConfig> {
    let mut cfg: BenchmarkConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => BenchmarkConfig {
            model: placeholder_model(),
            methods: default_methods(),
            layers: Vec::new(),
            restarts: default_restarts(),
            seed: default_seed(),
            jobs: default_jobs(),
            sso: default_grid_sso(),
            tno: TnoConfig::default(),
        },
    };

    // reuse the shared target overlay, then reject file targets: the grid
    // needs model provenance for its CSV columns
    let mut target = TargetConfig {
        target: None,
        model: if args.config.is_some() { Some(cfg.model.clone()) } else { None },
    };
    args.target.apply(&mut target)?;
    if target.target.is_some() {
        return Err(Error::validation(
            "benchmark requires --model; --target files carry no model provenance",
        ));
    }
    cfg.model = target
        .model
        .ok_or_else(|| Error::validation("benchmark requires --model <family>"))?;

    if let Some(list) = &args.methods {
        cfg.methods = list
            .split(',')
            .map(|m| m.trim().parse::<Method>())
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(list) = &args.layers {
        cfg.layers = parse_layer_list(list)?;
    } else if let Some(k) = args.layers_max {
        if k == 0 {
            return Err(Error::validation("--layers-max must be at least 1"));
        }
        cfg.layers = (1..=k).collect();
    }
    if cfg.layers.is_empty() {
        return Err(Error::validation(
            "no depths: pass --layers-max K or --layers a,b,c",
        ));
    }
    if let Some(r) = args.restarts {
        cfg.restarts = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.thresh {
        cfg.sso.lambda_thresh = t;
    }
    if let Some(g) = &args.grad {
        let mode = parse_grad(g)?;
        cfg.sso.gradient_mode = mode;
        cfg.tno.gradient_mode = mode;
    }
    if let Some(it) = args.max_iter {
        cfg.sso.max_iter = it;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

/// Stand-in model before the flags land; never survives `resolve`.
fn placeholder_model() -> ModelTarget {
    ModelTarget {
        spec: HamiltonianSpec::ising(0, 0.5),
        chi_target: 0,
        target_thresh: 0.0,
    }
}

/// `results.csv` -> `results_eps_vs_L.csv` / `results_chi_vs_L.csv`.
fn plot_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

pub fn run(args: BenchmarkArgs) -> Result<()> {
    let cfg = resolve(&args)?;
    if let Some(path) = &args.save_config {
        save_config(path, &cfg)?;
    }

    let result = run_experiment(
        &cfg.model.spec,
        &cfg.methods,
        &cfg.layers,
        &cfg.to_experiment(),
    )?;

    // flush results before reporting failures: partial grids still land
    fs::write(&args.out, result.to_csv())?;
    if args.emit_plot_data {
        let (eps, chi) = result.plot_data(&cfg.methods, &cfg.layers);
        fs::write(plot_path(&args.out, "eps_vs_L"), eps)?;
        fs::write(plot_path(&args.out, "chi_vs_L"), chi)?;
    }

    let failed: Vec<_> = result.cells.iter().filter(|c| !c.is_ok()).collect();
    for cell in &failed {
        eprintln!(
            "warning: cell {} L={} restart {} failed: {}",
            cell.method,
            cell.layers,
            cell.restart,
            cell.error.as_deref().unwrap_or("unknown")
        );
    }

    if args.json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else {
        println!(
            "{} n={} chi_target={} E0={:.10} F_comp={:.12}",
            result.family, result.n, result.chi_target, result.energy,
            result.compression_fidelity
        );
        println!("method    L  F_S               eps_S         chi_max");
        for &m in &cfg.methods {
            for &l in &cfg.layers {
                match result.best(m, l) {
                    Some(c) => println!(
                        "{:<8} {:>2}  {:<16.12} {:<13.6e} {:>7}",
                        m.to_string(),
                        l,
                        c.f_s.unwrap_or(f64::NAN),
                        c.eps_s.unwrap_or(f64::NAN),
                        c.chi_max.unwrap_or(0)
                    ),
                    None => println!("{:<8} {:>2}  failed", m.to_string(), l),
                }
            }
        }
    }

    if !failed.is_empty() && failed.len() == result.cells.len() {
        return Err(Error::numerical(format!(
            "all {} grid cells failed; first error: {}",
            result.cells.len(),
            failed[0].error.as_deref().unwrap_or("unknown")
        )));
    }
    Ok(())
}
