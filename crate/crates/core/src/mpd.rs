//! Matrix product disentangler: the analytic, optimisation-free baseline.
//!
//! Each layer is derived in closed form from the chi = 2 truncation of the
//! current state: the staircase that prepares that truncation from `|0...0>`
//! is applied *in reverse*, which maps the state close to the all-zero
//! product state (exactly, when the state already has bond dimension 2).
//! After `L - 1` such layers the residual is truncated to chi = 2 and
//! prepared analytically, giving the same circuit shape as SSO synthesis:
//! `[U_prep, U_{L-1}^dag, ..., U_1^dag]` — except that here every
//! `U_k^dag` is itself a preparation staircase applied forwards.

use std::time::Instant;

use crate::circuit::{apply_layer, prep_layer_from_chi2, Circuit, CircuitMeta, StaircaseLayer};
use crate::error::{Error, Result};
use crate::mps::Mps;
use crate::sso::{sso_loss, LayerRecord, RestartRecord, SynthesisReport, Timing};

/// The analytic disentangling step for `psi`: the staircase preparing its
/// chi = 2 truncation. Apply it with `adjoint = true` to disentangle.
pub fn mpd_layer(psi: &Mps) -> Result<StaircaseLayer> {
    let (chi2, _) = psi.truncate(Some(2), 0.0)?;
    prep_layer_from_chi2(&chi2)
}

/// Disentangle `target` with `layers - 1` analytic layers and assemble the
/// preparation circuit. Deterministic: no seeds, no restarts.
pub fn mpd_synthesize(
    target: &Mps,
    layers: usize,
    lambda_thresh: f64,
) -> Result<(Circuit, SynthesisReport)> {
    if layers == 0 {
        return Err(Error::validation("layers must be at least 1"));
    }
    if !(0.0..1.0).contains(&lambda_thresh) {
        return Err(Error::validation("lambda_thresh must lie in [0, 1)"));
    }
    let n = target.n();
    if n < 2 {
        return Err(Error::validation("circuit synthesis needs at least 2 qubits"));
    }
    let t0 = Instant::now();
    let mut psi = target.normalized()?;
    let mut chi_max = psi.max_bond_dim();
    let mut chi_trajectory = vec![psi.max_bond_dim()];
    let mut prep_layers: Vec<StaircaseLayer> = Vec::new();
    let mut records = Vec::new();
    for k in 0..layers - 1 {
        let loss_before = sso_loss(&psi.schmidt_spectra()?);
        let p = mpd_layer(&psi)?;
        let full = apply_layer(&psi, &p, true)?;
        chi_max = chi_max.max(full.max_bond_dim());
        let (next, discarded) = full.truncate(None, lambda_thresh)?;
        let spectra = next.schmidt_spectra()?;
        let loss_after = sso_loss(&spectra);
        records.push(LayerRecord {
            index: k,
            loss_before,
            loss_after,
            iterations: 0,
            n_evals: 0,
            converged: true,
            line_search_failed: false,
            used_identity_fallback: false,
            degenerate_gradient: false,
            loss_trace: vec![loss_before, loss_after],
            chi_pre_truncation: full.max_bond_dim(),
            chi_after_truncation: next.max_bond_dim(),
            truncation_discarded: discarded,
            chi2_fidelity: next.chi_k_fidelity(2)?,
            spectra: spectra.spectra.clone(),
        });
        chi_trajectory.push(next.max_bond_dim());
        prep_layers.push(p);
        psi = next;
    }
    let (chi2_state, discarded) = psi.truncate(Some(2), 0.0)?;
    let f_l = 1.0 - discarded;
    let prep = prep_layer_from_chi2(&chi2_state)?;
    // U_k = P_k^dag during disentangling, so the circuit applies P_k plain.
    let mut layer_list: Vec<(StaircaseLayer, bool)> = vec![(prep, false)];
    layer_list.extend(prep_layers.iter().rev().map(|p| (p.clone(), false)));
    let meta = CircuitMeta {
        method: "mpd".into(),
        seed: 0,
        layer_losses: records.iter().map(|r| r.loss_after).collect(),
    };
    let circuit = Circuit::new(n, layer_list, meta)?;
    let prepared = circuit.apply(&Mps::zero_state(n)?)?;
    let f_s = prepared.fidelity(&target.normalized()?)?;
    let report = SynthesisReport {
        method: "mpd".into(),
        n,
        layers,
        seed: 0,
        layer_records: records,
        chi_trajectory,
        chi_max,
        f_l,
        f_s: Some(f_s),
        eps_s: Some(1.0 - f_s),
        restarts: vec![RestartRecord { restart: 0, seed: 0, f_l, f_s, chi_max }],
        best_restart: 0,
        degenerate_events: 0,
        polish: None,
        timing: Timing {
            total_seconds: t0.elapsed().as_secs_f64(),
            per_restart_seconds: Vec::new(),
        },
    };
    Ok((circuit, report))
}
