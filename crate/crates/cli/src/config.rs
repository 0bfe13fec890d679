//! Shared configuration plumbing: target selection (MPS file or built-in
//! model), flag-over-file merging, and helpers for writing outputs.
//!
//! Each subcommand resolves its flags into one fully-concrete serialisable
//! config value. `--config file.json` supplies the base; explicitly-passed
//! flags override it field by field; defaults fill the rest. The resolved
//! value is what `--save-config` writes, and feeding it back through
//! `--config` with no other flags reproduces the run exactly.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use mps_sso::hamiltonian::{target_mps, HamiltonianSpec};
use mps_sso::io::load_mps;
use mps_sso::{Error, Family, Mps, Result};

/// Where the state to prepare comes from: an MPS JSON file, or the
/// compressed ground state of a built-in model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelTarget>,
}

/// A Hamiltonian ground state compressed to `chi_target` (dropping Schmidt
/// values at or below `target_thresh`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelTarget {
    #[serde(flatten)]
    pub spec: HamiltonianSpec,
    pub chi_target: usize,
    #[serde(default)]
    pub target_thresh: f64,
}

/// Energy and compression fidelity of a model-derived target; absent when
/// the target came from a file.
pub struct TargetProvenance {
    pub energy: f64,
    pub compression_fidelity: f64,
}

impl TargetConfig {
    pub fn resolve(&self) -> Result<(Mps, Option<TargetProvenance>)> {
        match (&self.target, &self.model) {
            (Some(_), Some(_)) => Err(Error::validation(
                "give either --target or --model, not both",
            )),
            (Some(path), None) => Ok((load_mps(path)?, None)),
            (None, Some(model)) => {
                let t = target_mps(&model.spec, model.chi_target, model.target_thresh)?;
                Ok((
                    t.mps,
                    Some(TargetProvenance {
                        energy: t.energy,
                        compression_fidelity: t.compression_fidelity,
                    }),
                ))
            }
            (None, None) => Err(Error::validation(
                "no target: pass --target <mps.json> or --model <family> with --chi-target",
            )),
        }
    }
}

/// Flags selecting and parameterising the target; shared verbatim by
/// `synthesize` and `benchmark`.
#[derive(Args, Clone, Debug)]
pub struct TargetFlags {
    /// Path to a target MPS JSON file.
    #[arg(long, conflicts_with = "model")]
    pub target: Option<PathBuf>,

    /// Built-in model family: ising, mbl, hubbard_spinless, or heisenberg2d.
    #[arg(long)]
    pub model: Option<String>,

    /// Chain length (1D families).
    #[arg(long)]
    pub n: Option<usize>,

    /// Grid rows (heisenberg2d).
    #[arg(long)]
    pub rows: Option<usize>,

    /// Grid columns (heisenberg2d).
    #[arg(long)]
    pub cols: Option<usize>,

    /// Bond-dimension cap when compressing the model ground state.
    #[arg(long)]
    pub chi_target: Option<usize>,

    /// Schmidt threshold when compressing the model ground state.
    #[arg(long)]
    pub target_thresh: Option<f64>,

    /// Exchange coupling J.
    #[arg(long)]
    pub j: Option<f64>,

    /// Transverse field (ising).
    #[arg(long)]
    pub h_x: Option<f64>,

    /// Disorder standard deviation (mbl).
    #[arg(long)]
    pub dh: Option<f64>,

    /// Hopping amplitude (hubbard_spinless).
    #[arg(long)]
    pub t: Option<f64>,

    /// Interaction strength (hubbard_spinless).
    #[arg(long)]
    pub v: Option<f64>,

    /// Chemical potential (hubbard_spinless).
    #[arg(long)]
    pub mu: Option<f64>,

    /// Disorder / eigensolver seed of the model itself.
    #[arg(long)]
    pub model_seed: Option<u64>,
}

impl TargetFlags {
    /// Overlay these flags onto a base target selection.
    pub fn apply(&self, base: &mut TargetConfig) -> Result<()> {
        if let Some(path) = &self.target {
            base.target = Some(path.clone());
            base.model = None;
        }
        if let Some(name) = &self.model {
            let family: Family = name.parse()?;
            // keep file-provided parameters when the family agrees
            let keep = matches!(&base.model, Some(m) if m.spec.family == family);
            if !keep {
                base.model = Some(ModelTarget {
                    spec: default_spec(family),
                    chi_target: 0,
                    target_thresh: 0.0,
                });
            }
            base.target = None;
        }
        if let Some(m) = &mut base.model {
            if let Some(n) = self.n {
                m.spec.n = n;
            }
            if let Some(rows) = self.rows {
                m.spec.rows = rows;
            }
            if let Some(cols) = self.cols {
                m.spec.cols = cols;
            }
            if let Some(j) = self.j {
                m.spec.j = j;
            }
            if let Some(h_x) = self.h_x {
                m.spec.h_x = h_x;
            }
            if let Some(dh) = self.dh {
                m.spec.dh = dh;
            }
            if let Some(t) = self.t {
                m.spec.t = t;
            }
            if let Some(v) = self.v {
                m.spec.v = v;
            }
            if let Some(mu) = self.mu {
                m.spec.mu = mu;
            }
            if let Some(seed) = self.model_seed {
                m.spec.seed = seed;
            }
            if let Some(chi) = self.chi_target {
                m.chi_target = chi;
            }
            if let Some(thresh) = self.target_thresh {
                m.target_thresh = thresh;
            }
            if m.chi_target == 0 {
                return Err(Error::validation(
                    "a model target needs --chi-target >= 1",
                ));
            }
        } else if self.chi_target.is_some() || self.n.is_some() {
            return Err(Error::validation(
                "model flags given without --model (or a config file providing one)",
            ));
        }
        Ok(())
    }
}

/// A spec of the given family with every coupling at its benchmark default
/// and geometry unset (the serde defaults are authoritative).
fn default_spec(family: Family) -> HamiltonianSpec {
    let value = serde_json::json!({ "family": family });
    serde_json::from_value(value).expect("family-only spec deserializes")
}

/// Load a JSON config file into any deserialisable config type.
pub fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))
}

/// Write the resolved run configuration for later replay via `--config`.
pub fn save_config<T: Serialize>(path: &Path, cfg: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

/// Parse a comma-separated list of positive layer counts.
pub fn parse_layer_list(s: &str) -> Result<Vec<usize>> {
    let layers = s
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::validation(format!("bad layer count '{part}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if layers.is_empty() || layers.contains(&0) {
        return Err(Error::validation("layer counts must be positive"));
    }
    Ok(layers)
}

/// Parse `analytic` / `fd` into a gradient mode.
pub fn parse_grad(s: &str) -> Result<mps_sso::GradientMode> {
    match s {
        "analytic" => Ok(mps_sso::GradientMode::Analytic),
        "fd" | "finite-difference" => Ok(mps_sso::GradientMode::FiniteDifference),
        other => Err(Error::validation(format!(
            "unknown gradient mode '{other}' (expected analytic or fd)"
        ))),
    }
}
