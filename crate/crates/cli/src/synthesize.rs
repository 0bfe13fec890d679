//! `mps-sso synthesize`: one target, one method, one circuit.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use mps_sso::experiment::{synthesize_method, Method};
use mps_sso::io::{save_circuit, save_report};
use mps_sso::{Result, SsoConfig, TnoConfig};

use crate::config::{
    load_config, parse_grad, save_config, TargetConfig, TargetFlags,
};

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    target: TargetFlags,

    /// Synthesis method: sso, mpd, mpd-lw, mpd-all, or sso-all.
    #[arg(long)]
    method: Option<String>,

    /// Total circuit depth L.
    #[arg(long)]
    layers: Option<usize>,

    /// Schmidt threshold for inter-layer truncation.
    #[arg(long)]
    thresh: Option<f64>,

    /// Independent optimiser restarts (best run kept).
    #[arg(long)]
    restarts: Option<usize>,

    /// Root seed of the run.
    #[arg(long)]
    seed: Option<u64>,

    /// Gradient mode: analytic or fd.
    #[arg(long)]
    grad: Option<String>,

    /// Optimiser iteration cap per layer.
    #[arg(long)]
    max_iter: Option<usize>,

    /// Write the circuit JSON here.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Write the synthesis report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,

    /// Load the run configuration from a JSON file (flags still override).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Write the resolved run configuration here.
    #[arg(long)]
    save_config: Option<PathBuf>,

    /// Machine-readable one-object summary on stdout.
    #[arg(long)]
    json: bool,
}

/// The fully-resolved run: serialising this and replaying it through
/// `--config` reproduces the synthesis bit for bit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesizeConfig {
    #[serde(flatten)]
    pub target: TargetConfig,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub sso: SsoConfig,
    #[serde(default)]
    pub tno: TnoConfig,
}

fn default_method() -> Method {
    Method::Sso
}

fn resolve(args: &SynthesizeArgs) -> Result<SynthesizeConfig> {
    let mut cfg: SynthesizeConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => SynthesizeConfig {
            target: TargetConfig { target: None, model: None },
            method: default_method(),
            sso: SsoConfig::default(),
            tno: TnoConfig::default(),
        },
    };
    args.target.apply(&mut cfg.target)?;
    if let Some(m) = &args.method {
        cfg.method = m.parse()?;
    }
    if let Some(l) = args.layers {
        cfg.sso.layers = l;
    }
    if let Some(t) = args.thresh {
        cfg.sso.lambda_thresh = t;
    }
    if let Some(r) = args.restarts {
        cfg.sso.restarts = r;
    }
    if let Some(s) = args.seed {
        cfg.sso.seed = s;
    }
    if let Some(g) = &args.grad {
        let mode = parse_grad(g)?;
        cfg.sso.gradient_mode = mode;
        cfg.tno.gradient_mode = mode;
    }
    if let Some(it) = args.max_iter {
        cfg.sso.max_iter = it;
    }
    Ok(cfg)
}

pub fn run(args: SynthesizeArgs) -> Result<()> {
    let cfg = resolve(&args)?;
    if let Some(path) = &args.save_config {
        save_config(path, &cfg)?;
    }

    let (target, provenance) = cfg.target.resolve()?;
    let (circuit, report) = synthesize_method(&target, cfg.method, &cfg.sso, &cfg.tno)?;

    let f_s = report.f_s.unwrap_or(report.f_l);
    let eps_s = 1.0 - f_s;
    if args.json {
        let mut summary = serde_json::json!({
            "method": cfg.method,
            "n": report.n,
            "layers": report.layers,
            "seed": report.seed,
            "f_s": f_s,
            "eps_s": eps_s,
            "chi_max": report.chi_max,
        });
        if let Some(p) = &provenance {
            summary["energy"] = serde_json::json!(p.energy);
            summary["compression_fidelity"] = serde_json::json!(p.compression_fidelity);
        }
        println!("{summary}");
    } else {
        println!("method   = {}", cfg.method);
        println!("n        = {}", report.n);
        println!("layers   = {}", report.layers);
        if let Some(p) = &provenance {
            println!("energy   = {:.12}", p.energy);
            println!("F_comp   = {:.12}", p.compression_fidelity);
        }
        println!("F_S      = {:.12}", f_s);
        println!("eps_S    = {:.6e}", eps_s);
        println!("chi_max  = {}", report.chi_max);
    }

    if let Some(path) = &args.out {
        save_circuit(path, &circuit)?;
    }
    if let Some(path) = &args.report {
        save_report(path, &report)?;
    }
    Ok(())
}
