//! Full-circuit fidelity maximisation: polish a finished staircase circuit by
//! minimising `1 - |<target| C(theta) |0...0>|^2` over its gate parameters.
//!
//! Two modes share the gradient machinery. *Layerwise* sweeps the layers from
//! last-applied to first, optimising each with the rest frozen; the frozen
//! parts enter only through a pulled-back bra and a partially applied ket,
//! both reused across the sweep. *Joint* optimises every parameter at once,
//! including the analytic preparation layer through its generator chart.
//! Both are strictly monotone: the optimiser never accepts an increase, so
//! the polished circuit is at least as good as its initialisation.
//!
//! For layer `j` of the circuit `C = A_{D-1} ... A_0` (each `A_j` a staircase
//! layer, possibly applied as an adjoint), the overlap factorises as
//! `z = <b_{j+1}| A_j |k_j>` with `k_j = A_{j-1}...A_0|0>` and
//! `<b_{j+1}| = <t| A_{D-1}...A_{j+1}`, so the per-gate derivative reduces to
//! the same 4x4 environment tensors used by the Schmidt optimiser, and
//! `d(1-|z|^2) = -2 Re(conj(z) dz)`.

use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::circuit::{
    apply_layer, gate_and_param_derivatives, Circuit, StaircaseLayer, GATE_PARAMS,
};
use crate::error::{Error, Result};
use crate::mpd::mpd_synthesize;
use crate::mps::Mps;
use crate::optim::{lbfgs, LbfgsOptions};
use crate::sso::{self, GradientMode, LayerEnvironments, PolishRecord, SsoConfig, SynthesisReport};

/// Central-difference step for the finite-difference gradient mode.
const FD_STEP: f64 = 1e-5;

/// Which circuit the polish starts from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitSource {
    /// Analytic matrix-product-disentangler circuit.
    #[default]
    Mpd,
    /// Schmidt-spectrum-optimised circuit.
    Sso,
    /// Caller supplies the circuit directly (only valid for `polish`).
    Given,
}

/// Parameter-update strategy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TnoMode {
    /// One layer at a time, sweeping last-applied to first.
    #[default]
    Layerwise,
    /// All layers at once.
    Joint,
}

/// Configuration for full-circuit fidelity maximisation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TnoConfig {
    pub mode: TnoMode,
    pub init_source: InitSource,
    /// Iteration cap: per layer visit in layerwise mode, total in joint mode.
    pub max_iter: usize,
    /// Layer sweeps in layerwise mode (ignored by joint).
    pub sweeps: usize,
    pub grad_tol: f64,
    /// Hard bond-dimension cap for circuit application; exceeding it is a
    /// resource error naming the offending layer.
    pub chi_cap: Option<usize>,
    pub gradient_mode: GradientMode,
}

impl Default for TnoConfig {
    fn default() -> Self {
        TnoConfig {
            mode: TnoMode::Layerwise,
            init_source: InitSource::Mpd,
            max_iter: 40,
            sweeps: 3,
            grad_tol: 1e-8,
            chi_cap: None,
            gradient_mode: GradientMode::Analytic,
        }
    }
}

impl TnoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::validation("max_iter must be at least 1"));
        }
        if self.sweeps == 0 {
            return Err(Error::validation("sweeps must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::validation("grad_tol must be positive"));
        }
        if self.chi_cap == Some(0) {
            return Err(Error::validation("chi_cap must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of a polish run.
#[derive(Clone, Debug)]
pub struct TnoOutcome {
    pub mode: TnoMode,
    /// `1 - F_S` before and after.
    pub loss_before: f64,
    pub loss_after: f64,
    pub iterations: usize,
    pub n_evals: usize,
    /// Completed sweeps (layerwise only).
    pub sweeps: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

impl TnoOutcome {
    pub fn polish_record(&self) -> PolishRecord {
        PolishRecord {
            mode: match self.mode {
                TnoMode::Layerwise => "layerwise".into(),
                TnoMode::Joint => "joint".into(),
            },
            loss_before: self.loss_before,
            loss_after: self.loss_after,
            iterations: self.iterations,
            n_evals: self.n_evals,
            sweeps: self.sweeps,
            converged: self.converged,
            trace: self.trace.clone(),
        }
    }
}

/// `1 - |<target|C|0...0>|^2` by exact application; `chi_cap` bounds the
/// intermediate bond dimension.
pub fn fidelity_loss(target: &Mps, circuit: &Circuit, chi_cap: Option<usize>) -> Result<f64> {
    let zero = Mps::zero_state(circuit.n)?;
    let (prepared, _) = circuit.apply_with(&zero, 0.0, chi_cap)?;
    Ok(1.0 - prepared.fidelity(target)?)
}

/// Fidelity loss of the circuit with layer adjoint flags `flags` and flat
/// slot-major parameters `x`, plus its full parameter gradient. `mode`
/// selects the analytic pull-back or central finite differences.
pub fn fidelity_loss_and_grad(
    target: &Mps,
    flags: &[bool],
    x: &[f64],
    mode: GradientMode,
    chi_cap: Option<usize>,
) -> Result<(f64, Vec<f64>)> {
    let n = target.n();
    if flags.is_empty() {
        return Err(Error::validation("need at least one layer"));
    }
    let target_norm = target.normalized()?;
    match mode {
        GradientMode::Analytic => joint_loss_grad(&target_norm, n, flags, x, chi_cap),
        GradientMode::FiniteDifference => {
            joint_loss_grad_fd(&target_norm, n, flags, x, chi_cap)
        }
    }
}

/// `k_j = A_{j-1} ... A_0 |0>` for `j = 0..=D`, applied exactly.
fn ket_chain(
    n: usize,
    layers: &[(StaircaseLayer, bool)],
    chi_cap: Option<usize>,
) -> Result<Vec<Mps>> {
    let mut states = Vec::with_capacity(layers.len() + 1);
    states.push(Mps::zero_state(n)?);
    for (idx, (layer, adj)) in layers.iter().enumerate() {
        let next = apply_layer(states.last().expect("non-empty chain"), layer, *adj)?;
        if let Some(cap) = chi_cap {
            if next.max_bond_dim() > cap {
                return Err(Error::resource(format!(
                    "bond dimension {} exceeds cap {cap} after layer {idx}",
                    next.max_bond_dim()
                )));
            }
        }
        states.push(next);
    }
    Ok(states)
}

fn pack(layers: &[(StaircaseLayer, bool)]) -> Vec<f64> {
    layers.iter().flat_map(|(l, _)| l.params_flat()).collect()
}

fn unpack(
    n: usize,
    flags: &[bool],
    x: &[f64],
) -> Result<Vec<(StaircaseLayer, bool)>> {
    let per_layer = GATE_PARAMS * (n - 1);
    if x.len() != per_layer * flags.len() {
        return Err(Error::shape(format!(
            "{} parameters cannot fill {} layers of {per_layer}",
            x.len(),
            flags.len()
        )));
    }
    flags
        .iter()
        .zip(x.chunks_exact(per_layer))
        .map(|(&adj, chunk)| Ok((StaircaseLayer::from_params(n, chunk)?, adj)))
        .collect()
}

/// Gradient contraction for one slot: `dz` for each of the 15 parameters,
/// honouring the adjoint flag of the applied matrix.
fn slot_dz(theta: &[f64], env: &Array2<C64>, adj: bool) -> Result<[C64; GATE_PARAMS]> {
    let (_, dgs) = gate_and_param_derivatives(theta)?;
    let mut out = [C64::new(0.0, 0.0); GATE_PARAMS];
    for (a, dg) in dgs.iter().enumerate() {
        let mut dz = C64::new(0.0, 0.0);
        for p in 0..4 {
            for q in 0..4 {
                // applied matrix is G or G^dag: d(G^dag)[p,q] = conj(dG[q,p])
                let dm = if adj { dg[[q, p]].conj() } else { dg[[p, q]] };
                dz += dm * env[[p, q]];
            }
        }
        out[a] = dz;
    }
    Ok(out)
}

/// Loss and gradient for a single layer between fixed bra and ket states.
fn layer_loss_grad(
    bra: &Mps,
    ket: &Mps,
    theta: &[f64],
    adj: bool,
) -> Result<(f64, Vec<f64>)> {
    let n = ket.n();
    let layer = StaircaseLayer::from_params(n, theta)?;
    let mats = layer.applied_matrices(adj);
    let engine = LayerEnvironments::new(ket, &mats, !adj)?;
    let (envs, z) = engine.slot_envs(bra)?;
    let mut grad = vec![0.0; theta.len()];
    for slot in 0..n - 1 {
        let chunk = &theta[GATE_PARAMS * slot..GATE_PARAMS * (slot + 1)];
        let dzs = slot_dz(chunk, &envs[slot], adj)?;
        for (a, dz) in dzs.iter().enumerate() {
            grad[GATE_PARAMS * slot + a] = -2.0 * (z.conj() * dz).re;
        }
    }
    Ok((1.0 - z.norm_sqr(), grad))
}

fn layer_loss_only(bra: &Mps, ket: &Mps, theta: &[f64], adj: bool) -> Result<f64> {
    let layer = StaircaseLayer::from_params(ket.n(), theta)?;
    let applied = apply_layer(ket, &layer, adj)?;
    let z = bra.overlap(&applied)?;
    Ok(1.0 - z.norm_sqr())
}

fn layer_loss_grad_fd(
    bra: &Mps,
    ket: &Mps,
    theta: &[f64],
    adj: bool,
) -> Result<(f64, Vec<f64>)> {
    let loss = layer_loss_only(bra, ket, theta, adj)?;
    let mut grad = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for k in 0..theta.len() {
        probe[k] = theta[k] + FD_STEP;
        let fp = layer_loss_only(bra, ket, &probe, adj)?;
        probe[k] = theta[k] - FD_STEP;
        let fm = layer_loss_only(bra, ket, &probe, adj)?;
        probe[k] = theta[k];
        grad[k] = (fp - fm) / (2.0 * FD_STEP);
    }
    Ok((loss, grad))
}

/// Loss and gradient over all layers at once.
fn joint_loss_grad(
    target_norm: &Mps,
    n: usize,
    flags: &[bool],
    x: &[f64],
    chi_cap: Option<usize>,
) -> Result<(f64, Vec<f64>)> {
    let layers = unpack(n, flags, x)?;
    let kets = ket_chain(n, &layers, chi_cap)?;
    let d = layers.len();
    let per_layer = GATE_PARAMS * (n - 1);
    let mut grad = vec![0.0; x.len()];
    let mut bra = target_norm.clone();
    let mut z = C64::new(0.0, 0.0);
    // envs need conj(z); z comes out of the first (topmost) engine pass
    let mut slot_dzs: Vec<(usize, C64)> = Vec::with_capacity(x.len());
    for j in (0..d).rev() {
        let (layer, adj) = &layers[j];
        let mats = layer.applied_matrices(*adj);
        let engine = LayerEnvironments::new(&kets[j], &mats, !*adj)?;
        let (envs, total) = engine.slot_envs(&bra)?;
        if j == d - 1 {
            z = total;
        }
        for slot in 0..n - 1 {
            let base = j * per_layer + GATE_PARAMS * slot;
            let chunk = &x[base..base + GATE_PARAMS];
            let dzs = slot_dz(chunk, &envs[slot], *adj)?;
            for (a, dz) in dzs.iter().enumerate() {
                slot_dzs.push((base + a, *dz));
            }
        }
        if j > 0 {
            bra = apply_layer(&bra, layer, !*adj)?;
        }
    }
    for (idx, dz) in slot_dzs {
        grad[idx] = -2.0 * (z.conj() * dz).re;
    }
    Ok((1.0 - z.norm_sqr(), grad))
}

fn joint_loss_grad_fd(
    target_norm: &Mps,
    n: usize,
    flags: &[bool],
    x: &[f64],
    chi_cap: Option<usize>,
) -> Result<(f64, Vec<f64>)> {
    let loss_at = |v: &[f64]| -> Result<f64> {
        let layers = unpack(n, flags, v)?;
        let kets = ket_chain(n, &layers, chi_cap)?;
        let z = target_norm.overlap(kets.last().expect("non-empty chain"))?;
        Ok(1.0 - z.norm_sqr())
    };
    let loss = loss_at(x)?;
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        probe[k] = x[k] + FD_STEP;
        let fp = loss_at(&probe)?;
        probe[k] = x[k] - FD_STEP;
        let fm = loss_at(&probe)?;
        probe[k] = x[k];
        grad[k] = (fp - fm) / (2.0 * FD_STEP);
    }
    Ok((loss, grad))
}

/// Run L-BFGS over a fallible objective, surfacing the first evaluation
/// error instead of silently treating it as an infinite loss.
fn run_lbfgs<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<crate::optim::LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut eval_error: Option<Error> = None;
    let out = lbfgs(
        |x| match f(x) {
            Ok(pair) => pair,
            Err(e) => {
                if eval_error.is_none() {
                    eval_error = Some(e);
                }
                (f64::INFINITY, vec![0.0; x.len()])
            }
        },
        x0,
        opts,
    );
    match eval_error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Layer-by-layer polish: sweep from the last-applied layer to the first,
/// optimising each with the others frozen, for up to `cfg.sweeps` sweeps.
pub fn optimize_layerwise(
    target: &Mps,
    circuit: &Circuit,
    cfg: &TnoConfig,
) -> Result<(Circuit, TnoOutcome)> {
    cfg.validate()?;
    let n = circuit.n;
    let d = circuit.depth();
    if d == 0 {
        return Err(Error::validation("cannot polish an empty circuit"));
    }
    let target_norm = target.normalized()?;
    let mut layers = circuit.layers.clone();
    let loss_before = fidelity_loss(&target_norm, circuit, cfg.chi_cap)?;
    let mut current = loss_before;
    let opts = LbfgsOptions {
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        ..LbfgsOptions::default()
    };
    let mut trace = vec![loss_before];
    let mut iterations = 0usize;
    let mut n_evals = 0usize;
    let mut converged = false;
    let mut sweeps_done = 0usize;
    'sweeps: for _ in 0..cfg.sweeps {
        let kets = ket_chain(n, &layers, cfg.chi_cap)?;
        let mut bra = target_norm.clone();
        let sweep_start = current;
        for j in (0..d).rev() {
            let adj = layers[j].1;
            let x0 = layers[j].0.params_flat();
            let ket = &kets[j];
            let out = run_lbfgs(
                |th| match cfg.gradient_mode {
                    GradientMode::Analytic => layer_loss_grad(&bra, ket, th, adj),
                    GradientMode::FiniteDifference => layer_loss_grad_fd(&bra, ket, th, adj),
                },
                x0,
                &opts,
            )?;
            iterations += out.iterations;
            n_evals += out.n_evals;
            let new_layer = StaircaseLayer::from_params(n, &out.x)?;
            if j > 0 {
                bra = apply_layer(&bra, &new_layer, !adj)?;
            }
            layers[j] = (new_layer, adj);
            current = out.fx;
            trace.push(current);
        }
        sweeps_done += 1;
        if sweep_start - current < 1e-12 {
            converged = true;
            break 'sweeps;
        }
    }
    let polished = Circuit::new(n, layers, circuit.meta.clone())?;
    let loss_after = fidelity_loss(&target_norm, &polished, cfg.chi_cap)?;
    let outcome = TnoOutcome {
        mode: TnoMode::Layerwise,
        loss_before,
        loss_after,
        iterations,
        n_evals,
        sweeps: sweeps_done,
        converged,
        trace,
    };
    Ok((polished, outcome))
}

/// Joint polish: optimise every parameter of every layer at once, with the
/// preparation layer entering through its generator chart.
pub fn optimize_joint(
    target: &Mps,
    circuit: &Circuit,
    cfg: &TnoConfig,
) -> Result<(Circuit, TnoOutcome)> {
    cfg.validate()?;
    let n = circuit.n;
    if circuit.depth() == 0 {
        return Err(Error::validation("cannot polish an empty circuit"));
    }
    let target_norm = target.normalized()?;
    let flags: Vec<bool> = circuit.layers.iter().map(|l| l.1).collect();
    let x0 = pack(&circuit.layers);
    let opts = LbfgsOptions {
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        ..LbfgsOptions::default()
    };
    let out = run_lbfgs(
        |x| match cfg.gradient_mode {
            GradientMode::Analytic => joint_loss_grad(&target_norm, n, &flags, x, cfg.chi_cap),
            GradientMode::FiniteDifference => {
                joint_loss_grad_fd(&target_norm, n, &flags, x, cfg.chi_cap)
            }
        },
        x0,
        &opts,
    )?;
    let loss_before = *out.trace.first().expect("non-empty trace");
    let layers = unpack(n, &flags, &out.x)?;
    let polished = Circuit::new(n, layers, circuit.meta.clone())?;
    let loss_after = fidelity_loss(&target_norm, &polished, cfg.chi_cap)?;
    let outcome = TnoOutcome {
        mode: TnoMode::Joint,
        loss_before,
        loss_after,
        iterations: out.iterations,
        n_evals: out.n_evals,
        sweeps: 0,
        converged: out.converged,
        trace: out.trace,
    };
    Ok((polished, outcome))
}

/// Polish with the mode chosen by the config.
pub fn polish(target: &Mps, circuit: &Circuit, cfg: &TnoConfig) -> Result<(Circuit, TnoOutcome)> {
    match cfg.mode {
        TnoMode::Layerwise => optimize_layerwise(target, circuit, cfg),
        TnoMode::Joint => optimize_joint(target, circuit, cfg),
    }
}

fn method_tag(init: InitSource, mode: TnoMode) -> Result<String> {
    let base = match init {
        InitSource::Mpd => "mpd",
        InitSource::Sso => "sso",
        InitSource::Given => {
            return Err(Error::validation(
                "tno synthesis needs an mpd or sso initialisation",
            ))
        }
    };
    let suffix = match mode {
        TnoMode::Layerwise => "lw",
        TnoMode::Joint => "all",
    };
    Ok(format!("{base}-{suffix}"))
}

/// Build the initial circuit from `base`, polish it, and fold the polish
/// into the synthesis report under the combined method tag ("mpd-lw",
/// "mpd-all", "sso-lw" or "sso-all").
pub fn tno_synthesize(
    target: &Mps,
    base: &SsoConfig,
    cfg: &TnoConfig,
) -> Result<(Circuit, SynthesisReport)> {
    cfg.validate()?;
    let tag = method_tag(cfg.init_source, cfg.mode)?;
    let t0 = Instant::now();
    let (circuit, mut report) = match cfg.init_source {
        InitSource::Mpd => mpd_synthesize(target, base.layers, base.lambda_thresh)?,
        InitSource::Sso => sso::synthesize(target, base)?,
        InitSource::Given => unreachable!("rejected by method_tag"),
    };
    let (mut polished, outcome) = polish(target, &circuit, cfg)?;
    let f_s = 1.0 - outcome.loss_after;
    // the fidelity evaluation applies the circuit exactly, so its bond growth
    // is part of the method's resource footprint
    let chain = ket_chain(polished.n, &polished.layers, cfg.chi_cap)?;
    let chain_chi = chain.iter().map(|s| s.max_bond_dim()).max().unwrap_or(1);
    polished.meta.method = tag.clone();
    report.method = tag;
    report.chi_max = report.chi_max.max(chain_chi);
    report.f_s = Some(f_s);
    report.eps_s = Some(1.0 - f_s);
    report.polish = Some(outcome.polish_record());
    report.timing.total_seconds = t0.elapsed().as_secs_f64();
    Ok((polished, report))
}
