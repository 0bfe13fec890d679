//! JSON serialisation for states, circuits, and reports.
//!
//! Schemas (complex entries are `[re, im]` pairs at full double precision;
//! serde_json's shortest-round-trip float formatting guarantees the reload is
//! numerically identical, independent of locale):
//!
//! MPS:
//! `{ "n": int, "tensors": [ { "shape": [l, 2, r], "data": [[re, im], ...] } ],
//!   "norm_log": real }` — `data` is row-major over `(left, phys, right)`.
//!
//! Circuit:
//! `{ "n": int, "layers": [ { "adjoint": bool, "gates": [ { "sites": [i, i+1],
//!   "params": [15 reals], "unitary": [[ [re, im]; 4 ]; 4] } ] } ],
//!   "meta": { "method", "seed", "layer_losses" } }` — storing both the chart
//! parameters and the realised unitary keeps exports self-contained: a reader
//! needs no exponential-map convention to apply the circuit.
//!
//! Reports serialise [`SynthesisReport`] directly. All wall-clock data lives
//! in the single `timing` field, so [`stable_report_json`] — the form meant
//! for byte-level reproducibility checks — is the same document with that
//! field zeroed.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, CircuitMeta, StaircaseLayer, Su4Gate};
use crate::error::{Error, Result};
use crate::mps::Mps;
use crate::sso::{SynthesisReport, Timing};
use num_complex::Complex64 as C64;

#[derive(Serialize, Deserialize)]
struct MpsFile {
    n: usize,
    tensors: Vec<SiteFile>,
    norm_log: f64,
}

#[derive(Serialize, Deserialize)]
struct SiteFile {
    shape: [usize; 3],
    data: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct CircuitFile {
    n: usize,
    layers: Vec<LayerFile>,
    meta: MetaFile,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    adjoint: bool,
    gates: Vec<GateFile>,
}

#[derive(Serialize, Deserialize)]
struct GateFile {
    sites: [usize; 2],
    params: Vec<f64>,
    unitary: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    method: String,
    seed: u64,
    layer_losses: Vec<f64>,
}

pub fn mps_to_json(mps: &Mps) -> Result<String> {
    let tensors = (0..mps.n())
        .map(|j| {
            let t = mps.site(j);
            let (l, d, r) = t.dim();
            SiteFile {
                shape: [l, d, r],
                data: t.iter().map(|z| [z.re, z.im]).collect(),
            }
        })
        .collect();
    let file = MpsFile { n: mps.n(), tensors, norm_log: mps.norm_log() };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn mps_from_json(s: &str) -> Result<Mps> {
    let file: MpsFile = serde_json::from_str(s)?;
    if file.tensors.len() != file.n {
        return Err(Error::validation(format!(
            "MPS file declares n = {} but carries {} tensors",
            file.n,
            file.tensors.len()
        )));
    }
    if !file.norm_log.is_finite() {
        return Err(Error::validation("MPS file norm_log is not finite"));
    }
    let tensors = file
        .tensors
        .into_iter()
        .enumerate()
        .map(|(j, site)| {
            let [l, d, r] = site.shape;
            if site.data.len() != l * d * r {
                return Err(Error::validation(format!(
                    "site {j}: shape {:?} expects {} entries, file has {}",
                    site.shape,
                    l * d * r,
                    site.data.len()
                )));
            }
            let flat: Vec<C64> =
                site.data.iter().map(|&[re, im]| C64::new(re, im)).collect();
            Array3::from_shape_vec((l, d, r), flat)
                .map_err(|e| Error::validation(format!("site {j}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    // from_tensors re-validates the chain and resets the prefactor
    let mut mps = Mps::from_tensors(tensors)?;
    mps.norm_log = file.norm_log;
    Ok(mps)
}

pub fn circuit_to_json(circuit: &Circuit) -> Result<String> {
    let layers = circuit
        .layers
        .iter()
        .map(|(layer, adjoint)| LayerFile {
            adjoint: *adjoint,
            gates: layer
                .gates()
                .iter()
                .map(|g| GateFile {
                    sites: [g.site, g.site + 1],
                    params: g.params.to_vec(),
                    unitary: (0..4)
                        .map(|i| (0..4).map(|j| [g.unitary[[i, j]].re, g.unitary[[i, j]].im]).collect())
                        .collect(),
                })
                .collect(),
        })
        .collect();
    let file = CircuitFile {
        n: circuit.n,
        layers,
        meta: MetaFile {
            method: circuit.meta.method.clone(),
            seed: circuit.meta.seed,
            layer_losses: circuit.meta.layer_losses.clone(),
        },
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn circuit_from_json(s: &str) -> Result<Circuit> {
    let file: CircuitFile = serde_json::from_str(s)?;
    let layers = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(li, layer)| {
            let gates = layer
                .gates
                .into_iter()
                .enumerate()
                .map(|(gi, g)| {
                    if g.sites[1] != g.sites[0] + 1 {
                        return Err(Error::validation(format!(
                            "layer {li} gate {gi}: sites {:?} are not adjacent",
                            g.sites
                        )));
                    }
                    if g.params.len() != 15 {
                        return Err(Error::validation(format!(
                            "layer {li} gate {gi}: {} parameters, expected 15",
                            g.params.len()
                        )));
                    }
                    if g.unitary.len() != 4 || g.unitary.iter().any(|row| row.len() != 4) {
                        return Err(Error::validation(format!(
                            "layer {li} gate {gi}: unitary is not 4x4"
                        )));
                    }
                    let mut unitary = Array2::zeros((4, 4));
                    for (i, row) in g.unitary.iter().enumerate() {
                        for (j, &[re, im]) in row.iter().enumerate() {
                            unitary[[i, j]] = C64::new(re, im);
                        }
                    }
                    let mut params = [0.0; 15];
                    params.copy_from_slice(&g.params);
                    // the unitary is authoritative; params are carried as-is
                    Ok(Su4Gate { site: g.sites[0], params, unitary })
                })
                .collect::<Result<Vec<_>>>()?;
            StaircaseLayer::new(gates).map(|sl| (sl, layer.adjoint))
        })
        .collect::<Result<Vec<_>>>()?;
    Circuit::new(
        file.n,
        layers,
        CircuitMeta {
            method: file.meta.method,
            seed: file.meta.seed,
            layer_losses: file.meta.layer_losses,
        },
    )
}

pub fn report_to_json(report: &SynthesisReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn report_from_json(s: &str) -> Result<SynthesisReport> {
    Ok(serde_json::from_str(s)?)
}

/// Report JSON with the wall-clock field zeroed: two runs with the same
/// inputs and seed produce byte-identical output in this form.
pub fn stable_report_json(report: &SynthesisReport) -> Result<String> {
    let mut stable = report.clone();
    stable.timing = Timing { total_seconds: 0.0, per_restart_seconds: Vec::new() };
    Ok(serde_json::to_string_pretty(&stable)?)
}

pub fn save_mps(path: impl AsRef<Path>, mps: &Mps) -> Result<()> {
    fs::write(path, mps_to_json(mps)?)?;
    Ok(())
}

pub fn load_mps(path: impl AsRef<Path>) -> Result<Mps> {
    mps_from_json(&fs::read_to_string(path)?)
}

pub fn save_circuit(path: impl AsRef<Path>, circuit: &Circuit) -> Result<()> {
    fs::write(path, circuit_to_json(circuit)?)?;
    Ok(())
}

pub fn load_circuit(path: impl AsRef<Path>) -> Result<Circuit> {
    circuit_from_json(&fs::read_to_string(path)?)
}

pub fn save_report(path: impl AsRef<Path>, report: &SynthesisReport) -> Result<()> {
    fs::write(path, report_to_json(report)?)?;
    Ok(())
}
