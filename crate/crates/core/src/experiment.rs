//! The benchmark grid: run the five synthesis methods over a range of layer
//! counts against one Hamiltonian target, best-of-`restarts` per cell, with
//! per-cell error capture and CSV emission.
//!
//! A *cell* is one `(method, layers, restart)` synthesis run. Cells are
//! independent: each derives its own seed from the experiment root via the
//! splitmix tree (so results do not depend on execution order or the `jobs`
//! thread count), failures are recorded on the cell without aborting the
//! grid, and assembly sorts cells into a canonical order.
//!
//! Restart semantics: the grid level implements the benchmark's
//! "best of N runs" by repeating each `(method, layers)` cell with distinct
//! derived seeds and reporting the highest-fidelity success. The embedded
//! [`SsoConfig`] keeps its own inner restart count (default 1 here) so the
//! two levels do not silently multiply. The deterministic MPD baseline runs
//! one restart regardless — repeats cannot differ.
//!
//! CSV schema (one row per successful cell):
//! `family,n,chi_target,method,L,restart,F_S,eps_S,chi_max,seconds,seed`.
//! Floats use Rust's shortest round-trip formatting; everything except the
//! wall-clock `seconds` column is bit-reproducible for a fixed root seed.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::hamiltonian::{target_mps, Family, HamiltonianSpec};
use crate::mpd::mpd_synthesize;
use crate::mps::Mps;
use crate::rng::derive_seed;
use crate::sso::{self, SsoConfig, SynthesisReport};
use crate::tno::{tno_synthesize, InitSource, TnoConfig, TnoMode};

/// Seed-stream tag separating grid cells from other consumers of the root.
const STREAM_CELL: u64 = 20;

/// The five synthesis methods of the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mpd,
    Sso,
    MpdLw,
    MpdAll,
    SsoAll,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Mpd, Method::Sso, Method::MpdLw, Method::MpdAll, Method::SsoAll];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mpd => "mpd",
            Method::Sso => "sso",
            Method::MpdLw => "mpd-lw",
            Method::MpdAll => "mpd-all",
            Method::SsoAll => "sso-all",
        }
    }

    /// Stable index used in the per-cell seed derivation.
    fn index(self) -> u64 {
        match self {
            Method::Mpd => 0,
            Method::Sso => 1,
            Method::MpdLw => 2,
            Method::MpdAll => 3,
            Method::SsoAll => 4,
        }
    }

    /// MPD has no random element; repeating it cannot change the result.
    fn is_deterministic(self) -> bool {
        matches!(self, Method::Mpd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mpd" => Ok(Method::Mpd),
            "sso" => Ok(Method::Sso),
            "mpd-lw" => Ok(Method::MpdLw),
            "mpd-all" => Ok(Method::MpdAll),
            "sso-all" => Ok(Method::SsoAll),
            other => Err(Error::validation(format!(
                "unknown method '{other}' (expected mpd, sso, mpd-lw, mpd-all, or sso-all)"
            ))),
        }
    }
}

/// Grid-level configuration. `sso` supplies the optimiser budget shared by
/// every stochastic method (its `layers`, `seed`, and `lambda_thresh` are
/// overwritten per cell); `tno` supplies the polish budget (its `mode` and
/// `init_source` are overwritten per method).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Target MPS bond dimension for the compressed ground state.
    pub chi_target: usize,
    /// Schmidt threshold `lambda_thresh` used for inter-layer truncation.
    pub thresh: f64,
    /// Schmidt threshold for building the target itself (0 = cap-only).
    pub target_thresh: f64,
    /// Best-of-N restarts per grid cell.
    pub restarts: u32,
    /// Root seed; every cell derives from it.
    pub seed: u64,
    /// Worker threads for the grid.
    pub jobs: usize,
    pub sso: SsoConfig,
    pub tno: TnoConfig,
}

impl ExperimentConfig {
    pub fn new(chi_target: usize) -> Self {
        ExperimentConfig {
            chi_target,
            thresh: 1e-7,
            target_thresh: 0.0,
            restarts: 2,
            seed: 7,
            jobs: 1,
            sso: SsoConfig { restarts: 1, ..SsoConfig::default() },
            tno: TnoConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi_target == 0 {
            return Err(Error::validation("chi_target must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.thresh) {
            return Err(Error::validation(format!(
                "thresh {} must lie in [0, 1)",
                self.thresh
            )));
        }
        if self.restarts == 0 {
            return Err(Error::validation("restarts must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::validation("jobs must be at least 1"));
        }
        Ok(())
    }
}

/// One `(method, layers, restart)` synthesis run. Success fills the numeric
/// fields; failure fills `error` and leaves them `None`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub layers: usize,
    pub restart: u32,
    pub seed: u64,
    pub f_s: Option<f64>,
    pub eps_s: Option<f64>,
    pub chi_max: Option<usize>,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CellResult {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Assembled grid: the target's provenance plus every attempted cell, in
/// canonical `(method, layers, restart)` order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub family: Family,
    pub n: usize,
    pub chi_target: usize,
    /// `|⟨target|ψ_exact⟩|²` of the compressed ground state.
    pub compression_fidelity: f64,
    /// Ground-state energy of the benchmark Hamiltonian.
    pub energy: f64,
    pub cells: Vec<CellResult>,
}

impl BenchmarkResult {
    /// Best successful cell for `(method, layers)` by fidelity, ties broken
    /// by lowest restart index.
    pub fn best(&self, method: Method, layers: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .filter(|c| c.method == method && c.layers == layers && c.is_ok())
            .max_by(|a, b| {
                let fa = a.f_s.unwrap_or(f64::NEG_INFINITY);
                let fb = b.f_s.unwrap_or(f64::NEG_INFINITY);
                fa.partial_cmp(&fb)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.restart.cmp(&a.restart))
            })
    }

    /// Full per-cell CSV; failed cells are omitted (their errors live in
    /// `cells`), successful rows appear in canonical order.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("family,n,chi_target,method,L,restart,F_S,eps_S,chi_max,seconds,seed\n");
        for c in self.cells.iter().filter(|c| c.is_ok()) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                self.family,
                self.n,
                self.chi_target,
                c.method,
                c.layers,
                c.restart,
                c.f_s.unwrap_or(f64::NAN),
                c.eps_s.unwrap_or(f64::NAN),
                c.chi_max.unwrap_or(0),
                c.seconds,
                c.seed
            ));
        }
        out
    }

    /// Plot-ready CSVs over the best cell per `(method, layers)`:
    /// `(eps_S vs L, chi_max vs L)`.
    pub fn plot_data(&self, methods: &[Method], layers: &[usize]) -> (String, String) {
        let mut eps = String::from("method,L,eps_S\n");
        let mut chi = String::from("method,L,chi_max\n");
        for &m in methods {
            for &l in layers {
                if let Some(c) = self.best(m, l) {
                    eps.push_str(&format!("{},{},{}\n", m, l, c.eps_s.unwrap_or(f64::NAN)));
                    chi.push_str(&format!("{},{},{}\n", m, l, c.chi_max.unwrap_or(0)));
                }
            }
        }
        (eps, chi)
    }
}

/// Dispatch one synthesis run for `method` at the depth, seed, and threshold
/// carried by `base`. The polish budget comes from `tno`; its mode and
/// initialisation are overridden to match the method.
pub fn synthesize_method(
    target: &Mps,
    method: Method,
    base: &SsoConfig,
    tno: &TnoConfig,
) -> Result<(Circuit, SynthesisReport)> {
    match method {
        Method::Mpd => mpd_synthesize(target, base.layers, base.lambda_thresh),
        Method::Sso => sso::synthesize(target, base),
        Method::MpdLw => {
            let tno = TnoConfig {
                mode: TnoMode::Layerwise,
                init_source: InitSource::Mpd,
                ..tno.clone()
            };
            tno_synthesize(target, base, &tno)
        }
        Method::MpdAll => {
            let tno = TnoConfig {
                mode: TnoMode::Joint,
                init_source: InitSource::Mpd,
                ..tno.clone()
            };
            tno_synthesize(target, base, &tno)
        }
        Method::SsoAll => {
            let tno = TnoConfig {
                mode: TnoMode::Joint,
                init_source: InitSource::Sso,
                ..tno.clone()
            };
            tno_synthesize(target, base, &tno)
        }
    }
}

/// One grid cell: `synthesize_method` at `layers` with the given seed.
fn run_cell(
    target: &Mps,
    method: Method,
    layers: usize,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<SynthesisReport> {
    let base = SsoConfig {
        layers,
        seed,
        lambda_thresh: cfg.thresh,
        ..cfg.sso.clone()
    };
    synthesize_method(target, method, &base, &cfg.tno).map(|(_, report)| report)
}

fn cell_from_report(
    method: Method,
    layers: usize,
    restart: u32,
    seed: u64,
    outcome: Result<SynthesisReport>,
) -> CellResult {
    match outcome {
        Ok(report) => {
            let f_s = report.f_s.unwrap_or(report.f_l);
            if !(0.0..=1.0 + 1e-12).contains(&f_s) {
                return CellResult {
                    method,
                    layers,
                    restart,
                    seed,
                    f_s: None,
                    eps_s: None,
                    chi_max: None,
                    seconds: report.timing.total_seconds,
                    error: Some(format!("fidelity {f_s} outside [0, 1 + 1e-12]")),
                };
            }
            CellResult {
                method,
                layers,
                restart,
                seed,
                f_s: Some(f_s),
                eps_s: Some(1.0 - f_s),
                chi_max: Some(report.chi_max),
                seconds: report.timing.total_seconds,
                error: None,
            }
        }
        Err(e) => CellResult {
            method,
            layers,
            restart,
            seed,
            f_s: None,
            eps_s: None,
            chi_max: None,
            seconds: 0.0,
            error: Some(e.to_string()),
        },
    }
}

/// Run the full `methods × layers × restarts` grid against the spec's
/// compressed ground state. Cells run on `cfg.jobs` threads; per-cell
/// failures are recorded and the grid continues.
pub fn run_experiment(
    spec: &HamiltonianSpec,
    methods: &[Method],
    layers: &[usize],
    cfg: &ExperimentConfig,
) -> Result<BenchmarkResult> {
    cfg.validate()?;
    spec.validate()?;
    if methods.is_empty() || layers.is_empty() {
        return Err(Error::validation("need at least one method and one layer count"));
    }
    if layers.iter().any(|&l| l == 0) {
        return Err(Error::validation("layer counts must be at least 1"));
    }

    let target = target_mps(spec, cfg.chi_target, cfg.target_thresh)?;

    // enumerate cells in canonical order; each carries its derived seed
    let mut plan: Vec<(Method, usize, u32, u64)> = Vec::new();
    for &m in methods {
        for &l in layers {
            let restarts = if m.is_deterministic() { 1 } else { cfg.restarts };
            for r in 0..restarts {
                let seed =
                    derive_seed(cfg.seed, &[STREAM_CELL, m.index(), l as u64, r as u64]);
                plan.push((m, l, r, seed));
            }
        }
    }

    let slots: Vec<Mutex<Option<CellResult>>> =
        plan.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.jobs.min(plan.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= plan.len() {
                    break;
                }
                let (m, l, r, seed) = plan[i];
                let outcome = run_cell(&target.mps, m, l, seed, cfg);
                let cell = cell_from_report(m, l, r, seed, outcome);
                *slots[i].lock().expect("cell slot poisoned") = Some(cell);
            });
        }
    });

    let cells: Vec<CellResult> = slots
        .into_iter()
        .map(|s| s.into_inner().expect("cell slot poisoned").expect("cell not run"))
        .collect();

    Ok(BenchmarkResult {
        family: spec.family,
        n: spec.n_qubits(),
        chi_target: cfg.chi_target,
        compression_fidelity: target.compression_fidelity,
        energy: target.energy,
        cells,
    })
}
