//! Schmidt Spectrum Optimisation: disentangling-layer optimisation and
//! state-preparation circuit assembly.
//!
//! The loss for one staircase layer `U(theta)` applied to a state `psi` is
//! the total squared Schmidt weight beyond the two leading coefficients,
//! summed over every interior bond of `U(theta) psi`:
//!
//! ```text
//! C(theta) = sum_i (1 - lambda_{i,1}^2 - lambda_{i,2}^2)
//! ```
//!
//! Driving `C` to zero makes the state exactly bond-dimension 2, at which
//! point a single analytic staircase layer prepares it from `|0...0>`.
//! Synthesis therefore runs `L - 1` optimised layers, truncates the result to
//! chi = 2, builds the preparation layer, and emits the reversed circuit
//! `[U_prep, U_{L-1}^dag, ..., U_1^dag]`.
//!
//! Gradients are analytic. For bond `i`, `lambda_{i,1}^2 + lambda_{i,2}^2 =
//! <phi_i|psi'>` where `phi_i` is the rank-2 reduced state keeping the two
//! leading Schmidt components at bond `i` (an unnormalised MPS), so
//!
//! ```text
//! dC/dtheta_a = -2 Re sum_i <phi_i| dU/dtheta_a |psi>,
//! ```
//!
//! which needs no singular-value denominators and stays finite at spectral
//! degeneracies (where it is a valid subgradient of the sorted-sum loss; the
//! event is flagged). Each `<phi_i| dU |psi>` reduces to per-gate 4x4
//! environment tensors computed by [`LayerEnvironments`] in `O(n chi^3)`.

use std::time::Instant;

use ndarray::{s, Array2, Array3, Axis};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::circuit::{
    absorb_gate_qr, apply_layer, gate_and_param_derivatives, prep_layer_from_chi2,
    swap_qubit_order, Circuit, CircuitMeta, StaircaseLayer, GATE_PARAMS,
};
use crate::error::{Error, Result};
use crate::mps::{fuse_left, fuse_right, transfer_step, unfuse_left, unfuse_right, Mps, SchmidtSpectra};
use crate::optim::{lbfgs, LbfgsOptions, LbfgsOutcome};
use crate::rng::{derive_seed, normal_vec, rng_from_seed};
use crate::tensor::{conj_transpose, reshaped, svd_descending};

/// Below this loss a layer has nothing left to disentangle and the identity
/// is kept without running the optimiser.
const LOSS_FLOOR: f64 = 1e-14;
/// Schmidt-gap threshold below which the lambda_2 / lambda_3 crossing is
/// reported as a degenerate-gradient event.
const DEGENERACY_GAP: f64 = 1e-10;
/// Central-difference step for the finite-difference gradient mode.
const FD_STEP: f64 = 1e-5;
/// Standard deviation of the basin-hopping parameter kick.
const HOP_STD: f64 = 0.05;
/// Largest allowed basin-hop count.
const MAX_BASIN_HOPS: usize = 3;

// Seed-stream tags so every random draw has a stable, independent stream.
const STREAM_RESTART: u64 = 1;
const STREAM_LAYER: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_HOP: u64 = 4;

/// How gradients of the layer loss are computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Exact environment-tensor gradient (default).
    #[default]
    Analytic,
    /// Central finite differences with step 1e-5; slow but assumption-free.
    FiniteDifference,
}

/// Configuration for the SSO pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SsoConfig {
    /// Total circuit depth L: one analytic preparation layer plus `L - 1`
    /// optimised disentangling layers.
    pub layers: usize,
    /// Iteration cap per layer optimisation.
    pub max_iter: usize,
    /// Gradient-norm convergence threshold.
    pub grad_tol: f64,
    /// Standard deviation of the Gaussian parameter initialisation.
    pub init_std: f64,
    /// Schmidt values at or below this threshold are dropped between layers.
    pub lambda_thresh: f64,
    /// Independent synthesis restarts; the best-F_S run is returned.
    pub restarts: usize,
    /// Root seed; every stochastic choice derives from it deterministically.
    pub seed: u64,
    pub gradient_mode: GradientMode,
    /// Extra perturb-and-reoptimise passes per layer (Gaussian kick of
    /// std 0.05, at most 3); 0 disables basin hopping.
    pub basin_hops: usize,
}

impl Default for SsoConfig {
    fn default() -> Self {
        SsoConfig {
            layers: 2,
            max_iter: 200,
            grad_tol: 1e-8,
            init_std: 1e-3,
            lambda_thresh: 1e-7,
            restarts: 2,
            seed: 7,
            gradient_mode: GradientMode::Analytic,
            basin_hops: 0,
        }
    }
}

impl SsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::validation("layers must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(Error::validation("max_iter must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::validation("grad_tol must be positive"));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::validation("init_std must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.lambda_thresh) {
            return Err(Error::validation("lambda_thresh must lie in [0, 1)"));
        }
        if self.restarts == 0 {
            return Err(Error::validation("restarts must be at least 1"));
        }
        if self.basin_hops > MAX_BASIN_HOPS {
            return Err(Error::validation(format!(
                "basin_hops must be at most {MAX_BASIN_HOPS}"
            )));
        }
        Ok(())
    }
}

/// Per-optimised-layer statistics recorded during a disentangling run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerRecord {
    /// Zero-based index of the optimised layer (application order).
    pub index: usize,
    /// Loss of the input state.
    pub loss_before: f64,
    /// Loss after applying the optimised layer and the between-layer
    /// truncation.
    pub loss_after: f64,
    pub iterations: usize,
    pub n_evals: usize,
    pub converged: bool,
    pub line_search_failed: bool,
    /// The optimiser failed to beat the identity layer, so theta = 0 was
    /// kept to preserve loss monotonicity.
    pub used_identity_fallback: bool,
    /// A lambda_2 = lambda_3 near-degeneracy was crossed during optimisation
    /// (the gradient there is a subgradient).
    pub degenerate_gradient: bool,
    /// Loss at each accepted optimiser step, starting from the initial point.
    pub loss_trace: Vec<f64>,
    /// Largest bond dimension right after the layer, before truncation.
    pub chi_pre_truncation: usize,
    pub chi_after_truncation: usize,
    /// Squared Schmidt weight dropped by the between-layer truncation.
    pub truncation_discarded: f64,
    /// F_{chi=2} of the post-layer state.
    pub chi2_fidelity: f64,
    /// Per-bond Schmidt spectra of the post-layer state.
    pub spectra: Vec<Vec<f64>>,
}

/// Summary of one synthesis restart.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub seed: u64,
    pub f_l: f64,
    pub f_s: f64,
    pub chi_max: usize,
}

/// Wall-clock times, kept in their own struct so reports can be compared
/// byte-for-byte after dropping this single field.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub per_restart_seconds: Vec<f64>,
}

/// Record of a full-circuit fidelity polish (filled in by the `tno` module).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolishRecord {
    /// "layerwise" or "joint".
    pub mode: String,
    /// 1 - F_S of the circuit before and after polishing.
    pub loss_before: f64,
    pub loss_after: f64,
    pub iterations: usize,
    pub n_evals: usize,
    /// Completed layer sweeps (layerwise mode only).
    pub sweeps: usize,
    pub converged: bool,
    /// Loss after each accepted optimiser step (joint) or each layer pass
    /// (layerwise).
    pub trace: Vec<f64>,
}

/// Full record of a disentangling or synthesis run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisReport {
    /// Method tag: "sso", "mpd", "mpd-lw", "mpd-all", or "sso-all".
    pub method: String,
    pub n: usize,
    /// Requested total depth L.
    pub layers: usize,
    /// Root seed of the run.
    pub seed: u64,
    /// Records of the winning restart's optimised layers.
    pub layer_records: Vec<LayerRecord>,
    /// Largest bond dimension after each between-layer truncation, starting
    /// with the target state itself.
    pub chi_trajectory: Vec<usize>,
    /// True maximum bond extent over every intermediate state of the run,
    /// including pre-truncation peaks.
    pub chi_max: usize,
    /// Fidelity of the final disentangled state with its chi = 2 truncation.
    pub f_l: f64,
    /// Fidelity of the prepared state against the target; `None` when no
    /// circuit was assembled (plain `disentangle` runs).
    pub f_s: Option<f64>,
    /// 1 - F_S.
    pub eps_s: Option<f64>,
    pub restarts: Vec<RestartRecord>,
    pub best_restart: usize,
    /// Count of degenerate-gradient events over the winning restart.
    pub degenerate_events: usize,
    /// Full-circuit fidelity polish, when one ran after synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polish: Option<PolishRecord>,
    pub timing: Timing,
}

/// The disentangling loss C = sum_i (1 - lambda_{i,1}^2 - lambda_{i,2}^2); a
/// missing second coefficient counts as zero.
pub fn sso_loss(spectra: &SchmidtSpectra) -> f64 {
    (0..spectra.n_bonds())
        .map(|b| {
            let lam = spectra.bond(b);
            let l1 = lam.first().map_or(0.0, |x| x * x);
            let l2 = lam.get(1).map_or(0.0, |x| x * x);
            1.0 - l1 - l2
        })
        .sum()
}

fn loss_from_lams(lams: &[Vec<f64>]) -> f64 {
    lams.iter()
        .map(|lam| {
            let l1 = lam.first().map_or(0.0, |x| x * x);
            let l2 = lam.get(1).map_or(0.0, |x| x * x);
            1.0 - l1 - l2
        })
        .sum()
}

/// Loss of `psi` after one staircase layer with the given flat parameters.
pub fn layer_loss(psi: &Mps, theta: &[f64]) -> Result<f64> {
    let layer = StaircaseLayer::from_params(psi.n(), theta)?;
    let out = apply_layer(psi, &layer, false)?;
    Ok(sso_loss(&out.schmidt_spectra()?))
}

// ---------------------------------------------------------------------------
// Per-gate environment engine
// ---------------------------------------------------------------------------

/// Forward-pass snapshots of a staircase layer applied to a ket, reusable
/// across many bra states when assembling per-gate environment tensors.
///
/// For slot `i` the environment `E_i` is the 4x4 tensor such that replacing
/// gate `i`'s matrix by any `X` gives `<bra|G_above X G_below|ket> =
/// sum_{s,t} X[s,t] E_i[s,t]`, where "above"/"below" follow the layer's
/// application order. Descending (adjoint-order) layers are handled by
/// mirroring the chain, which turns them into ascending ones.
pub(crate) struct LayerEnvironments {
    mirror: bool,
    /// Applied per-slot matrices in engine (possibly mirrored) orientation.
    mats: Vec<Array2<C64>>,
    /// Ket before any gate, canonicalised to centre 0 (engine orientation).
    k0: Mps,
    /// Snapshot of the site-`i` tensor just before gate `i` acts.
    ka: Vec<Array3<C64>>,
    /// Fully applied ket (engine orientation), centre at the last site.
    kf: Mps,
    /// Fully applied ket in the caller's orientation.
    kf_out: Mps,
}

impl LayerEnvironments {
    /// Run the forward pass. `mats[i]` acts on sites `(i, i+1)`; `ascending`
    /// selects slot order `0..n-2` (plain layers) versus `n-2..0` (layers
    /// applied as adjoints).
    pub(crate) fn new(ket: &Mps, mats: &[Array2<C64>], ascending: bool) -> Result<Self> {
        let n = ket.n();
        if n < 2 {
            return Err(Error::validation("environments need at least 2 sites"));
        }
        if mats.len() != n - 1 {
            return Err(Error::shape(format!(
                "{} gate matrices for a {n}-site staircase (expected {})",
                mats.len(),
                n - 1
            )));
        }
        let mirror = !ascending;
        let (ket_in, mats_in): (Mps, Vec<Array2<C64>>) = if mirror {
            let swapped =
                (0..n - 1).rev().map(|i| swap_qubit_order(&mats[i].view())).collect();
            (ket.mirrored(), swapped)
        } else {
            (ket.clone(), mats.to_vec())
        };
        let k0 = ket_in.canonicalized(0)?;
        let mut kf = k0.clone();
        let mut ka = Vec::with_capacity(n - 1);
        for (i, mat) in mats_in.iter().enumerate() {
            ka.push(kf.tensors[i].clone());
            absorb_gate_qr(&mut kf.tensors, i, &mat.view(), true)?;
        }
        kf.canonical = Some(n - 1);
        let kf_out = if mirror { kf.mirrored() } else { kf.clone() };
        Ok(LayerEnvironments { mirror, mats: mats_in, k0, ka, kf, kf_out })
    }

    /// The layer applied to the ket, in the caller's site order.
    pub(crate) fn final_state(&self) -> &Mps {
        &self.kf_out
    }

    /// Per-slot environments and the full overlap `<bra|G|ket>`, in the
    /// caller's slot order and qubit convention.
    pub(crate) fn slot_envs(&self, bra: &Mps) -> Result<(Vec<Array2<C64>>, C64)> {
        if self.mirror {
            let (envs_m, total) = self.slot_envs_ascending(&bra.mirrored())?;
            let n1 = envs_m.len();
            let envs = (0..n1)
                .map(|i| swap_qubit_order(&envs_m[n1 - 1 - i].view()))
                .collect();
            Ok((envs, total))
        } else {
            self.slot_envs_ascending(bra)
        }
    }

    fn slot_envs_ascending(&self, bra: &Mps) -> Result<(Vec<Array2<C64>>, C64)> {
        let n = self.k0.n();
        if bra.n() != n {
            return Err(Error::shape(format!(
                "bra has {} sites but the ket has {n}",
                bra.n()
            )));
        }
        let br = bra.canonicalized(n - 1)?;
        let scale = C64::new((br.norm_log + self.k0.norm_log).exp(), 0.0);

        // Left environments pair the untouched bra prefix with the fully
        // applied ket: gates at slots >= i never act left of site i, and
        // tensors 0..i of the applied chain already include gates 0..i-1.
        let mut l_envs: Vec<Array2<C64>> = Vec::with_capacity(n - 1);
        let mut l = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        for i in 0..n - 1 {
            l_envs.push(l.clone());
            l = transfer_step(&l, &br.tensors[i], &self.kf.tensors[i]);
        }
        let total_mat = transfer_step(&l, &br.tensors[n - 1], &self.kf.tensors[n - 1]);
        let total = total_mat[[0, 0]] * scale;

        // Sweep slots top-down, absorbing each gate's adjoint into the bra
        // after its environment is assembled; the right environment then
        // extends over the freshly finalised site i+1 against the pre-gate
        // ket.
        let mut b_tensors = br.tensors.clone();
        let mut r_env = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        let mut envs: Vec<Array2<C64>> = vec![Array2::zeros((4, 4)); n - 1];
        for i in (0..n - 1).rev() {
            let mut env = assemble_env(
                &l_envs[i],
                &b_tensors[i],
                &b_tensors[i + 1],
                &self.ka[i],
                &self.k0.tensors[i + 1],
                &r_env,
            );
            env.mapv_inplace(|z| z * scale);
            envs[i] = env;
            let adj = conj_transpose(&self.mats[i].view());
            absorb_gate_qr(&mut b_tensors, i, &adj.view(), false)?;
            r_env = right_transfer_step(&r_env, &b_tensors[i + 1], &self.k0.tensors[i + 1]);
        }
        Ok((envs, total))
    }
}

/// Extend a right environment (sites > j) by absorbing site j of both chains:
/// `R'[bl, kl] = sum conj(bra[bl, p, br]) R[br, kr] ket[kl, p, kr]`.
fn right_transfer_step(
    r: &Array2<C64>,
    bra_site: &Array3<C64>,
    ket_site: &Array3<C64>,
) -> Array2<C64> {
    let (bl, d, _) = bra_site.dim();
    let t = fuse_left(bra_site).mapv(|z| z.conj()).dot(r);
    let t = reshaped(t, (bl, d * r.ncols()));
    t.dot(&fuse_right(ket_site).t())
}

/// Contract everything around one gate slot into its 4x4 environment.
///
/// `l` spans the bra/ket bonds left of site i, `r` the bonds right of site
/// i+1 (bra side already gate-absorbed); `p`, `q` are the bra tensors at
/// sites i, i+1 and `t`, `v` the pre-gate ket tensors. Entry `[s, t]` is the
/// coefficient of `X[s, t]` with `s = 2 s_i + s_{i+1}` over the bra legs and
/// `t` likewise over the ket legs.
fn assemble_env(
    l: &Array2<C64>,
    p: &Array3<C64>,
    q: &Array3<C64>,
    t: &Array3<C64>,
    v: &Array3<C64>,
    r: &Array2<C64>,
) -> Array2<C64> {
    let (bl0, _, bm) = p.dim();
    let (_, _, br2) = q.dim();
    let (_, _, km) = t.dim();
    let (_, _, kr2) = v.dim();
    // x1[bl0, (t km)] -> x2[(bl0 t), (t2 kr2)] -> x3[(bl0 t t2), br2]
    let x1 = reshaped(l.dot(&fuse_right(t)), (bl0 * 2, km));
    let x2 = reshaped(x1.dot(&fuse_right(v)), (bl0 * 4, kr2));
    let x3 = reshaped(x2.dot(&r.t()), (bl0, 4 * br2));
    // contract the bra site i: x4[(s bm), (t t2 br2)]
    let pc = p
        .mapv(|z| z.conj())
        .permuted_axes([1, 2, 0])
        .as_standard_layout()
        .into_owned()
        .into_shape((2 * bm, bl0))
        .expect("env bra reshape");
    let x4 = reshaped(pc.dot(&x3), (2, bm, 2, 2, br2));
    // contract the bra site i+1 over (bm, br2)
    let x4p = x4
        .permuted_axes([0, 2, 3, 1, 4])
        .as_standard_layout()
        .into_owned()
        .into_shape((8, bm * br2))
        .expect("env x4p reshape");
    let qc = q
        .mapv(|z| z.conj())
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
        .into_shape((2, bm * br2))
        .expect("env qc reshape");
    // reorder (s, t, t2, s2) -> ((s s2), (t t2))
    let x5 = reshaped(x4p.dot(&qc.t()), (2, 2, 2, 2));
    x5.permuted_axes([0, 3, 1, 2])
        .as_standard_layout()
        .into_owned()
        .into_shape((4, 4))
        .expect("env final reshape")
}

// ---------------------------------------------------------------------------
// Schmidt sweep and rank-2 reduced states
// ---------------------------------------------------------------------------

/// One right-to-left SVD sweep over a state: left-canonical `a` tensors,
/// right-canonical `b` tensors, per-bond left singular bases `us`, and the
/// Schmidt spectra `lams`.
struct SchmidtSweep {
    a: Vec<Array3<C64>>,
    b: Vec<Array3<C64>>,
    us: Vec<Array2<C64>>,
    lams: Vec<Vec<f64>>,
}

fn schmidt_sweep(psi: &Mps) -> Result<SchmidtSweep> {
    let n = psi.n();
    let c = psi.canonicalized(n - 1)?;
    let a = c.tensors.clone();
    let mut b: Vec<Array3<C64>> = vec![Array3::zeros((1, 1, 1)); n];
    let mut us: Vec<Array2<C64>> = vec![Array2::zeros((0, 0)); n - 1];
    let mut lams: Vec<Vec<f64>> = vec![Vec::new(); n - 1];
    let mut centre = c.tensors[n - 1].clone();
    for j in (1..n).rev() {
        let (_, d, r) = centre.dim();
        let (u, sv, vh) = svd_descending(&fuse_right(&centre).view())?;
        lams[j - 1] = sv.to_vec();
        b[j] = unfuse_right(vh, d, r);
        let mut usig = u.clone();
        for (col, sing) in sv.iter().enumerate() {
            usig.column_mut(col).mapv_inplace(|z| z * C64::new(*sing, 0.0));
        }
        us[j - 1] = u;
        let prev = &c.tensors[j - 1];
        let (lp, dp, _) = prev.dim();
        centre = unfuse_left(fuse_left(prev).dot(&usig), lp, dp);
    }
    b[0] = centre;
    Ok(SchmidtSweep { a, b, us, lams })
}

/// The unnormalised rank-2 reduced state at `bond`: keep the two leading
/// Schmidt components there, everything else exact. Its overlap with the
/// original state is `lambda_1^2 + lambda_2^2`.
///
/// Built as `A_0 .. A_{bond-1} [A_bond U_{:,:2}] [diag(lambda_{1:2}) B] B ..`
/// with the weight carried in `norm_log`, so the centre stays unit-norm and
/// the canonical flag is valid.
fn rank2_reduced_state(sweep: &SchmidtSweep, bond: usize) -> Result<Mps> {
    let n = sweep.b.len();
    let lam = &sweep.lams[bond];
    let k = lam.len().min(2);
    let weight: f64 = lam.iter().take(k).map(|x| x * x).sum();
    let wnorm = weight.sqrt();
    if wnorm < 1e-300 {
        return Err(Error::numerical("vanishing leading Schmidt weight"));
    }
    let mut tensors = Vec::with_capacity(n);
    tensors.extend(sweep.a[..bond].iter().cloned());
    let ai = &sweep.a[bond];
    let (l, d, _) = ai.dim();
    let uk = sweep.us[bond].slice(s![.., ..k]).to_owned();
    tensors.push(unfuse_left(fuse_left(ai).dot(&uk), l, d));
    let mut centre = sweep.b[bond + 1].slice(s![..k, .., ..]).to_owned();
    for (row, lv) in lam.iter().take(k).enumerate() {
        let scale = C64::new(lv / wnorm, 0.0);
        centre.index_axis_mut(Axis(0), row).mapv_inplace(|z| z * scale);
    }
    tensors.push(centre);
    tensors.extend(sweep.b[bond + 2..].iter().cloned());
    let mut phi = Mps::from_tensors(tensors)?;
    phi.canonical = Some(bond + 1);
    phi.norm_log = wnorm.ln();
    Ok(phi)
}

// ---------------------------------------------------------------------------
// Loss and gradient
// ---------------------------------------------------------------------------

/// Result of one loss-and-gradient evaluation.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub loss: f64,
    /// `d loss / d theta`, slot-major, `15 (n-1)` entries.
    pub grad: Vec<f64>,
    /// True when some bond had `lambda_2 - lambda_3 < 1e-10`, in which case
    /// the gradient is a subgradient of the sorted-sum loss.
    pub degenerate: bool,
}

/// Loss and gradient of the staircase layer `U(theta)` applied to `psi`.
pub fn sso_loss_and_grad(psi: &Mps, theta: &[f64], mode: GradientMode) -> Result<LossGrad> {
    let n = psi.n();
    if n < 2 {
        return Err(Error::validation("the layer loss needs at least 2 sites"));
    }
    if theta.len() != GATE_PARAMS * (n - 1) {
        return Err(Error::validation(format!(
            "expected {} parameters for {n} sites, got {}",
            GATE_PARAMS * (n - 1),
            theta.len()
        )));
    }
    match mode {
        GradientMode::Analytic => loss_and_grad_analytic(psi, theta),
        GradientMode::FiniteDifference => loss_and_grad_fd(psi, theta),
    }
}

fn degenerate_gap(lams: &[Vec<f64>]) -> bool {
    lams.iter().any(|lam| lam.len() >= 3 && lam[1] - lam[2] < DEGENERACY_GAP)
}

fn loss_and_grad_analytic(psi: &Mps, theta: &[f64]) -> Result<LossGrad> {
    let n = psi.n();
    let n_slots = n - 1;
    let mut mats = Vec::with_capacity(n_slots);
    let mut derivs = Vec::with_capacity(n_slots);
    for chunk in theta.chunks_exact(GATE_PARAMS) {
        let (g, dg) = gate_and_param_derivatives(chunk)?;
        mats.push(g);
        derivs.push(dg);
    }
    let engine = LayerEnvironments::new(psi, &mats, true)?;
    let sweep = schmidt_sweep(engine.final_state())?;
    let loss = loss_from_lams(&sweep.lams);
    let degenerate = degenerate_gap(&sweep.lams);

    // Sum the per-bond rank-2 environments; bonds already at rank <= 2
    // contribute exactly zero (their reduced state is the full state and the
    // norm is conserved).
    let mut env_sum: Vec<Array2<C64>> = vec![Array2::zeros((4, 4)); n_slots];
    let mut any = false;
    for bond in 0..n - 1 {
        if sweep.lams[bond].len() <= 2 {
            continue;
        }
        let phi = rank2_reduced_state(&sweep, bond)?;
        let (envs, total) = engine.slot_envs(&phi)?;
        debug_assert!(
            {
                let w: f64 = sweep.lams[bond].iter().take(2).map(|x| x * x).sum();
                (total.re - w).abs() < 1e-8 && total.im.abs() < 1e-8
            },
            "rank-2 environment total drifted from the Schmidt weight"
        );
        for (acc, e) in env_sum.iter_mut().zip(envs) {
            *acc += &e;
        }
        any = true;
    }

    let mut grad = vec![0.0; theta.len()];
    if any {
        for i in 0..n_slots {
            for (a, dg) in derivs[i].iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for st in 0..4 {
                    for tt in 0..4 {
                        acc += dg[[st, tt]] * env_sum[i][[st, tt]];
                    }
                }
                grad[GATE_PARAMS * i + a] = -2.0 * acc.re;
            }
        }
    }
    Ok(LossGrad { loss, grad, degenerate })
}

fn loss_and_grad_fd(psi: &Mps, theta: &[f64]) -> Result<LossGrad> {
    let layer = StaircaseLayer::from_params(psi.n(), theta)?;
    let applied = apply_layer(psi, &layer, false)?;
    let spectra = applied.schmidt_spectra()?;
    let loss = sso_loss(&spectra);
    let degenerate = degenerate_gap(&spectra.spectra);
    let mut grad = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for k in 0..theta.len() {
        probe[k] = theta[k] + FD_STEP;
        let fp = layer_loss(psi, &probe)?;
        probe[k] = theta[k] - FD_STEP;
        let fm = layer_loss(psi, &probe)?;
        probe[k] = theta[k];
        grad[k] = (fp - fm) / (2.0 * FD_STEP);
    }
    Ok(LossGrad { loss, grad, degenerate })
}

// ---------------------------------------------------------------------------
// Layer optimisation and the disentangling loop
// ---------------------------------------------------------------------------

/// Outcome of optimising one staircase layer.
#[derive(Clone, Debug)]
pub struct LayerOptimization {
    /// Optimal flat parameters (all zero when the identity fallback fired).
    pub theta: Vec<f64>,
    /// Loss at each accepted step.
    pub trace: Vec<f64>,
    pub loss_before: f64,
    pub loss_after: f64,
    pub iterations: usize,
    pub n_evals: usize,
    pub converged: bool,
    pub line_search_failed: bool,
    pub used_identity_fallback: bool,
    pub degenerate_events: usize,
}

/// Optimise one staircase layer on `psi` from a Gaussian initialisation.
///
/// The optimiser is limited-memory quasi-Newton with a strong-Wolfe line
/// search, so the accepted-step loss sequence is non-increasing; if the final
/// loss still exceeds the identity layer's, theta = 0 is returned instead
/// (flagged), making `loss_after <= loss_before` unconditional.
pub fn optimize_layer(psi: &Mps, cfg: &SsoConfig, seed: u64) -> Result<LayerOptimization> {
    cfg.validate()?;
    let n = psi.n();
    if n < 2 {
        return Err(Error::validation("layer optimisation needs at least 2 sites"));
    }
    let dim = GATE_PARAMS * (n - 1);
    let loss_before = sso_loss(&psi.schmidt_spectra()?);

    // Already disentangled to working precision: keep the identity layer.
    if loss_before <= LOSS_FLOOR {
        return Ok(LayerOptimization {
            theta: vec![0.0; dim],
            trace: vec![loss_before],
            loss_before,
            loss_after: loss_before,
            iterations: 0,
            n_evals: 0,
            converged: true,
            line_search_failed: false,
            used_identity_fallback: false,
            degenerate_events: 0,
        });
    }

    let opts = LbfgsOptions {
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        ..LbfgsOptions::default()
    };
    let mut degenerate_events = 0usize;
    let mut eval_error: Option<Error> = None;
    let mut best: Option<LbfgsOutcome> = None;
    let mut iterations = 0usize;
    let mut n_evals = 0usize;
    let mut line_search_failed = false;

    for hop in 0..=cfg.basin_hops {
        let x0 = if hop == 0 {
            let mut rng = rng_from_seed(derive_seed(seed, &[STREAM_INIT]));
            normal_vec(&mut rng, dim, cfg.init_std)
        } else {
            let base = &best.as_ref().expect("hops follow the initial run").x;
            let mut rng = rng_from_seed(derive_seed(seed, &[STREAM_HOP, hop as u64]));
            let kick = normal_vec(&mut rng, dim, HOP_STD);
            base.iter().zip(&kick).map(|(a, b)| a + b).collect()
        };
        let out = lbfgs(
            |th| match sso_loss_and_grad(psi, th, cfg.gradient_mode) {
                Ok(lg) => {
                    if lg.degenerate {
                        degenerate_events += 1;
                    }
                    (lg.loss, lg.grad)
                }
                Err(e) => {
                    if eval_error.is_none() {
                        eval_error = Some(e);
                    }
                    (f64::INFINITY, vec![0.0; th.len()])
                }
            },
            x0,
            &opts,
        );
        if let Some(e) = eval_error.take() {
            return Err(e);
        }
        iterations += out.iterations;
        n_evals += out.n_evals;
        line_search_failed |= out.line_search_failed;
        if best.as_ref().map_or(true, |b| out.fx < b.fx) {
            best = Some(out);
        }
    }
    let out = best.expect("at least one optimisation pass");
    if out.fx <= loss_before {
        Ok(LayerOptimization {
            theta: out.x,
            trace: out.trace,
            loss_before,
            loss_after: out.fx,
            iterations,
            n_evals,
            converged: out.converged,
            line_search_failed,
            used_identity_fallback: false,
            degenerate_events,
        })
    } else {
        Ok(LayerOptimization {
            theta: vec![0.0; dim],
            trace: out.trace,
            loss_before,
            loss_after: loss_before,
            iterations,
            n_evals,
            converged: out.converged,
            line_search_failed,
            used_identity_fallback: true,
            degenerate_events,
        })
    }
}

struct RunArtifacts {
    layers: Vec<StaircaseLayer>,
    final_state: Mps,
    records: Vec<LayerRecord>,
    chi_trajectory: Vec<usize>,
    chi_max: usize,
    degenerate_events: usize,
}

fn disentangle_with_seed(target: &Mps, cfg: &SsoConfig, seed: u64) -> Result<RunArtifacts> {
    let mut psi = target.normalized()?;
    let mut chi_max = psi.max_bond_dim();
    let mut chi_trajectory = vec![psi.max_bond_dim()];
    let mut layers = Vec::new();
    let mut records = Vec::new();
    let mut degenerate_events = 0usize;
    for k in 0..cfg.layers.saturating_sub(1) {
        let lseed = derive_seed(seed, &[STREAM_LAYER, k as u64]);
        let opt = optimize_layer(&psi, cfg, lseed)?;
        degenerate_events += opt.degenerate_events;
        let layer = StaircaseLayer::from_params(psi.n(), &opt.theta)?;
        let full = apply_layer(&psi, &layer, false)?;
        chi_max = chi_max.max(full.max_bond_dim());
        let (next, discarded) = full.truncate(None, cfg.lambda_thresh)?;
        let spectra = next.schmidt_spectra()?;
        let loss_after = sso_loss(&spectra);
        records.push(LayerRecord {
            index: k,
            loss_before: opt.loss_before,
            loss_after,
            iterations: opt.iterations,
            n_evals: opt.n_evals,
            converged: opt.converged,
            line_search_failed: opt.line_search_failed,
            used_identity_fallback: opt.used_identity_fallback,
            degenerate_gradient: opt.degenerate_events > 0,
            loss_trace: opt.trace,
            chi_pre_truncation: full.max_bond_dim(),
            chi_after_truncation: next.max_bond_dim(),
            truncation_discarded: discarded,
            chi2_fidelity: next.chi_k_fidelity(2)?,
            spectra: spectra.spectra.clone(),
        });
        layers.push(layer);
        chi_trajectory.push(next.max_bond_dim());
        psi = next;
    }
    Ok(RunArtifacts { layers, final_state: psi, records, chi_trajectory, chi_max, degenerate_events })
}

/// Result of a disentangling run: the optimised layers in application order
/// and the final (approximately chi = 2) state.
#[derive(Clone, Debug)]
pub struct DisentangleOutcome {
    pub layers: Vec<StaircaseLayer>,
    pub final_state: Mps,
    pub report: SynthesisReport,
}

/// Run `L - 1` optimised disentangling layers on the target, truncating at
/// `lambda_thresh` between layers.
pub fn disentangle(target: &Mps, cfg: &SsoConfig) -> Result<DisentangleOutcome> {
    cfg.validate()?;
    let t0 = Instant::now();
    let run = disentangle_with_seed(target, cfg, cfg.seed)?;
    let f_l = run.final_state.chi_k_fidelity(2)?;
    let report = SynthesisReport {
        method: "sso".into(),
        n: target.n(),
        layers: cfg.layers,
        seed: cfg.seed,
        layer_records: run.records,
        chi_trajectory: run.chi_trajectory,
        chi_max: run.chi_max,
        f_l,
        f_s: None,
        eps_s: None,
        restarts: Vec::new(),
        best_restart: 0,
        degenerate_events: run.degenerate_events,
        polish: None,
        timing: Timing {
            total_seconds: t0.elapsed().as_secs_f64(),
            per_restart_seconds: Vec::new(),
        },
    };
    Ok(DisentangleOutcome { layers: run.layers, final_state: run.final_state, report })
}

/// Synthesise a preparation circuit for the target.
///
/// Each restart disentangles with its own derived seed, truncates the result
/// to chi = 2, builds the analytic preparation layer, and assembles the
/// circuit `[U_prep, U_{L-1}^dag, ..., U_1^dag]`. Exactly-zero (identity)
/// optimised layers are dropped from the circuit. `F_L` is the fidelity of
/// the disentangled state with its chi = 2 truncation; `F_S` is measured by
/// applying the circuit to `|0...0>` exactly. The best-F_S restart wins;
/// ties keep the earliest.
pub fn synthesize(target: &Mps, cfg: &SsoConfig) -> Result<(Circuit, SynthesisReport)> {
    cfg.validate()?;
    let n = target.n();
    if n < 2 {
        return Err(Error::validation("circuit synthesis needs at least 2 qubits"));
    }
    let t0 = Instant::now();
    let target_norm = target.normalized()?;
    let zero = Mps::zero_state(n)?;
    let mut restart_records = Vec::new();
    let mut per_restart_seconds = Vec::new();
    let mut best: Option<(usize, Circuit, RunArtifacts, f64, f64)> = None;
    for r in 0..cfg.restarts {
        let rt0 = Instant::now();
        let rseed = derive_seed(cfg.seed, &[STREAM_RESTART, r as u64]);
        let run = disentangle_with_seed(&target_norm, cfg, rseed)?;
        let (chi2_state, discarded) = run.final_state.truncate(Some(2), 0.0)?;
        let f_l = 1.0 - discarded;
        let prep = prep_layer_from_chi2(&chi2_state)?;
        let mut layer_list: Vec<(StaircaseLayer, bool)> = vec![(prep, false)];
        layer_list.extend(
            run.layers
                .iter()
                .rev()
                .filter(|l| l.params_flat().iter().any(|&p| p != 0.0))
                .map(|l| (l.clone(), true)),
        );
        let meta = CircuitMeta {
            method: "sso".into(),
            seed: rseed,
            layer_losses: run.records.iter().map(|rec| rec.loss_after).collect(),
        };
        let circuit = Circuit::new(n, layer_list, meta)?;
        let prepared = circuit.apply(&zero)?;
        let f_s = prepared.fidelity(&target_norm)?;
        restart_records.push(RestartRecord { restart: r, seed: rseed, f_l, f_s, chi_max: run.chi_max });
        per_restart_seconds.push(rt0.elapsed().as_secs_f64());
        if best.as_ref().map_or(true, |&(_, _, _, _, bf)| f_s > bf) {
            best = Some((r, circuit, run, f_l, f_s));
        }
    }
    let (best_restart, circuit, run, f_l, f_s) = best.expect("restarts >= 1");
    let report = SynthesisReport {
        method: "sso".into(),
        n,
        layers: cfg.layers,
        seed: cfg.seed,
        layer_records: run.records,
        chi_trajectory: run.chi_trajectory,
        chi_max: run.chi_max,
        f_l,
        f_s: Some(f_s),
        eps_s: Some(1.0 - f_s),
        restarts: restart_records,
        best_restart,
        degenerate_events: run.degenerate_events,
        polish: None,
        timing: Timing {
            total_seconds: t0.elapsed().as_secs_f64(),
            per_restart_seconds,
        },
    };
    Ok((circuit, report))
}
