//! Staircase circuits of two-qubit gates and their action on an MPS.
//!
//! Every gate is an SU(4)-up-to-phase unitary written in the exponential
//! chart `G(theta) = exp(i sum_a theta_a P_a)` over the 15 non-identity
//! two-qubit Pauli strings, ordered lexicographically over `{I,X,Y,Z}^2`
//! with `II` removed:
//!
//! ```text
//! IX IY IZ XI XX XY XZ YI YX YY YZ ZI ZX ZY ZZ
//! ```
//!
//! The first letter acts on the lower site index (the high bit of the
//! two-qubit basis index `2 q_j + q_{j+1}`, matching the crate's big-endian
//! site order). A *staircase layer* places one gate on every neighbouring
//! pair `(0,1), (1,2), ..., (n-2, n-1)` and is applied in ascending slot
//! order; the adjoint application conjugate-transposes every gate and walks
//! the slots in descending order.
//!
//! Gate application contracts the two site tensors, applies the 4x4 matrix,
//! and splits back with a thin SVD *keeping every singular value*, so a layer
//! at most doubles each bond and the growth is deterministic. Truncation is a
//! separate, explicit step ([`crate::mps::Mps::truncate`]).
//!
//! Derivatives of `G` with respect to its parameters use the eigenbasis
//! (Daleckii-Krein) form: with `H = W diag(d) W^H`,
//! `dG[a] = W (M_a . Gamma) W^H` where `M_a = W^H (i P_a) W` and
//! `Gamma_kl = exp(i(d_k+d_l)/2) sinc((d_k-d_l)/2)` — a branch-free formula
//! that remains exact in the degenerate limit. Finite-difference tests pin it
//! down.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;
use once_cell::sync::Lazy;

use crate::error::{Error, Result};
use crate::mps::{Mps, PHYS_DIM};
use crate::tensor::{
    conj_transpose, eig_general, eigh_hermitian, expm_unitary, max_abs_diff, qr_thin,
    reshaped, svd_descending, unitarity_defect,
};

/// Number of generator parameters per two-qubit gate.
pub const GATE_PARAMS: usize = 15;

fn kron2(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros((4, 4));
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[[2 * i + k, 2 * j + l]] = a[[i, j]] * b[[k, l]];
                }
            }
        }
    }
    out
}

/// The 15 two-qubit Pauli strings in the crate's canonical order.
pub fn pauli_basis() -> &'static [Array2<C64>; GATE_PARAMS] {
    static BASIS: Lazy<[Array2<C64>; GATE_PARAMS]> = Lazy::new(|| {
        let o = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let z = C64::new(0.0, 0.0);
        let eye = arr2(&[[o, z], [z, o]]);
        let x = arr2(&[[z, o], [o, z]]);
        let y = arr2(&[[z, -i], [i, z]]);
        let zz = arr2(&[[o, z], [z, -o]]);
        let singles = [eye, x, y, zz];
        let mut out: Vec<Array2<C64>> = Vec::with_capacity(15);
        for a in 0..4 {
            for b in 0..4 {
                if a == 0 && b == 0 {
                    continue;
                }
                out.push(kron2(&singles[a], &singles[b]));
            }
        }
        out.try_into().expect("15 Pauli strings")
    });
    &BASIS
}

/// Generator `sum_a theta_a P_a`.
fn generator(theta: &[f64]) -> Array2<C64> {
    let basis = pauli_basis();
    let mut h = Array2::<C64>::zeros((4, 4));
    for (t, p) in theta.iter().zip(basis.iter()) {
        if *t != 0.0 {
            h.scaled_add(C64::new(*t, 0.0), p);
        }
    }
    h
}

/// Gate unitary `exp(i sum_a theta_a P_a)`.
pub fn gate_from_params(theta: &[f64]) -> Result<Array2<C64>> {
    if theta.len() != GATE_PARAMS {
        return Err(Error::validation(format!(
            "a gate needs {GATE_PARAMS} parameters, got {}",
            theta.len()
        )));
    }
    expm_unitary(&generator(theta).view())
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Gate unitary together with all 15 parameter derivatives `dG/dtheta_a`.
pub fn gate_and_param_derivatives(
    theta: &[f64],
) -> Result<(Array2<C64>, Vec<Array2<C64>>)> {
    if theta.len() != GATE_PARAMS {
        return Err(Error::validation(format!(
            "a gate needs {GATE_PARAMS} parameters, got {}",
            theta.len()
        )));
    }
    let h = generator(theta);
    let (d, w) = eigh_hermitian(&h.view())?;
    let wh = conj_transpose(&w.view());
    // gate from the same eigendecomposition
    let mut scaled = w.clone();
    for (k, dk) in d.iter().enumerate() {
        let p = C64::new(0.0, *dk).exp();
        scaled.column_mut(k).mapv_inplace(|z| z * p);
    }
    let gate = scaled.dot(&wh);

    let mut gamma = Array2::<C64>::zeros((4, 4));
    for k in 0..4 {
        for l in 0..4 {
            let mid = 0.5 * (d[k] + d[l]);
            let half = 0.5 * (d[k] - d[l]);
            gamma[[k, l]] = C64::new(0.0, mid).exp() * C64::new(sinc(half), 0.0);
        }
    }

    let basis = pauli_basis();
    let mut derivs = Vec::with_capacity(GATE_PARAMS);
    for p in basis.iter() {
        let ip = p.mapv(|z| z * C64::new(0.0, 1.0));
        let m = wh.dot(&ip).dot(&w);
        let hadamard = &m * &gamma;
        derivs.push(w.dot(&hadamard).dot(&wh));
    }
    Ok((gate, derivs))
}

/// Parameters of the exponential chart for an arbitrary 4x4 unitary, dropping
/// the global-phase (identity) component of the logarithm.
///
/// The principal matrix logarithm is assembled from an eigendecomposition;
/// eigenvector clusters belonging to near-degenerate eigenvalues (within
/// 1e-8) are re-orthonormalised before use. The result is verified:
/// `gate_from_params(theta)` must reproduce `u` up to a global phase within
/// 1e-8, else this returns a numerical error.
pub fn su4_log_params(u: &ArrayView2<C64>) -> Result<[f64; GATE_PARAMS]> {
    if u.dim() != (4, 4) {
        return Err(Error::shape(format!(
            "su4_log_params needs a 4x4 matrix, got {}x{}",
            u.nrows(),
            u.ncols()
        )));
    }
    let defect = unitarity_defect(u);
    if defect > 1e-10 {
        return Err(Error::validation(format!(
            "su4_log_params input is not unitary (defect {defect:.3e} > 1e-10)"
        )));
    }
    let (vals, vecs) = eig_general(u)?;
    // sort eigenpairs by principal argument for stable clustering
    let mut order: Vec<usize> = (0..4).collect();
    let args: Vec<f64> = vals.iter().map(|z| z.arg()).collect();
    order.sort_by(|&a, &b| args[a].partial_cmp(&args[b]).unwrap());

    // cluster nearly equal eigenvalues and orthonormalise each cluster
    let mut sorted_vecs = Array2::<C64>::zeros((4, 4));
    let mut sorted_args = [0.0f64; 4];
    for (pos, &k) in order.iter().enumerate() {
        sorted_vecs.column_mut(pos).assign(&vecs.column(k));
        sorted_args[pos] = args[k];
    }
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4
            && (vals[order[end]] - vals[order[end - 1]]).norm() < 1e-8
        {
            end += 1;
        }
        if end - start > 1 {
            let block = sorted_vecs.slice(ndarray::s![.., start..end]).to_owned();
            let (q, _) = qr_thin(&block.view())?;
            sorted_vecs.slice_mut(ndarray::s![.., start..end]).assign(&q);
        }
        start = end;
    }

    // H = sum_k arg(lambda_k) v_k v_k^H, re-Hermitised to absorb roundoff
    let mut h = Array2::<C64>::zeros((4, 4));
    for k in 0..4 {
        let v = sorted_vecs.column(k);
        let a = C64::new(sorted_args[k], 0.0);
        for i in 0..4 {
            for j in 0..4 {
                h[[i, j]] += a * v[i] * v[j].conj();
            }
        }
    }
    let hh = conj_transpose(&h.view());
    let h = (&h + &hh).mapv(|z| z * C64::new(0.5, 0.0));

    let basis = pauli_basis();
    let mut theta = [0.0f64; GATE_PARAMS];
    for (a, p) in basis.iter().enumerate() {
        let tr: C64 = (0..4).map(|i| (0..4).map(|j| p[[i, j]] * h[[j, i]]).sum::<C64>()).sum();
        theta[a] = tr.re / 4.0;
    }

    // verify the chart reproduces u up to global phase
    let g = gate_from_params(&theta)?;
    let tr: C64 = (0..4)
        .map(|i| (0..4).map(|j| g[[j, i]].conj() * u[[j, i]]).sum::<C64>())
        .sum();
    let phase = if tr.norm() > 1e-12 { tr / tr.norm() } else { C64::new(1.0, 0.0) };
    let aligned = g.mapv(|z| z * phase);
    let dev = max_abs_diff(&aligned.view(), u);
    if dev > 1e-8 {
        return Err(Error::numerical(format!(
            "exponential chart failed to reproduce the unitary (deviation {dev:.3e})"
        )));
    }
    Ok(theta)
}

/// A two-qubit gate on sites `(site, site + 1)`: generator parameters plus
/// the explicit unitary. The pair satisfies
/// `unitary == gate_from_params(params)` up to a global phase within 1e-8.
#[derive(Clone, Debug)]
pub struct Su4Gate {
    pub site: usize,
    pub params: [f64; GATE_PARAMS],
    pub unitary: Array2<C64>,
}

impl Su4Gate {
    pub fn from_params(site: usize, theta: &[f64]) -> Result<Self> {
        let unitary = gate_from_params(theta)?;
        let mut params = [0.0; GATE_PARAMS];
        params.copy_from_slice(theta);
        Ok(Su4Gate { site, params, unitary })
    }

    /// Wrap an explicit unitary, recovering chart parameters via the
    /// principal logarithm (global phase is not representable and is
    /// dropped).
    pub fn from_unitary(site: usize, unitary: Array2<C64>) -> Result<Self> {
        let params = su4_log_params(&unitary.view())?;
        Ok(Su4Gate { site, params, unitary })
    }

    pub fn identity(site: usize) -> Self {
        Su4Gate {
            site,
            params: [0.0; GATE_PARAMS],
            unitary: Array2::eye(4),
        }
    }

    pub fn adjoint(&self) -> Self {
        let mut params = [0.0; GATE_PARAMS];
        for (p, q) in params.iter_mut().zip(self.params.iter()) {
            *p = -q;
        }
        Su4Gate {
            site: self.site,
            params,
            unitary: conj_transpose(&self.unitary.view()),
        }
    }
}

/// One gate per neighbouring pair: slot `i` acts on sites `(i, i+1)`.
#[derive(Clone, Debug)]
pub struct StaircaseLayer {
    gates: Vec<Su4Gate>,
}

impl StaircaseLayer {
    pub fn new(gates: Vec<Su4Gate>) -> Result<Self> {
        if gates.is_empty() {
            return Err(Error::validation("a staircase layer needs at least one gate"));
        }
        for (i, g) in gates.iter().enumerate() {
            if g.site != i {
                return Err(Error::validation(format!(
                    "staircase slot {i} holds a gate on site {}",
                    g.site
                )));
            }
            if g.unitary.dim() != (4, 4) {
                return Err(Error::shape(format!(
                    "gate {i} unitary is {}x{}, expected 4x4",
                    g.unitary.nrows(),
                    g.unitary.ncols()
                )));
            }
        }
        Ok(StaircaseLayer { gates })
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("a staircase layer needs at least 2 sites"));
        }
        StaircaseLayer::new((0..n - 1).map(Su4Gate::identity).collect())
    }

    /// Build from `15 (n-1)` flattened parameters, slot-major.
    pub fn from_params(n: usize, flat: &[f64]) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("a staircase layer needs at least 2 sites"));
        }
        if flat.len() != GATE_PARAMS * (n - 1) {
            return Err(Error::validation(format!(
                "expected {} parameters for {n} sites, got {}",
                GATE_PARAMS * (n - 1),
                flat.len()
            )));
        }
        let gates = flat
            .chunks_exact(GATE_PARAMS)
            .enumerate()
            .map(|(i, chunk)| Su4Gate::from_params(i, chunk))
            .collect::<Result<Vec<_>>>()?;
        StaircaseLayer::new(gates)
    }

    /// Number of sites the layer acts on.
    pub fn n(&self) -> usize {
        self.gates.len() + 1
    }

    pub fn gates(&self) -> &[Su4Gate] {
        &self.gates
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.gates.iter().flat_map(|g| g.params.iter().copied()).collect()
    }

    /// The matrices actually applied to the state for the given direction:
    /// conjugate-transposed when `adjoint` (application order is handled by
    /// the caller).
    pub(crate) fn applied_matrices(&self, adjoint: bool) -> Vec<Array2<C64>> {
        self.gates
            .iter()
            .map(|g| {
                if adjoint {
                    conj_transpose(&g.unitary.view())
                } else {
                    g.unitary.clone()
                }
            })
            .collect()
    }
}

/// Contract sites `(i, i+1)`, apply a 4x4 matrix to the grouped physical
/// legs, and return the acted block matricised as `(l*2, 2*r)` together with
/// the outer bond dimensions.
fn two_site_block(
    tensors: &[Array3<C64>],
    i: usize,
    g4: &ArrayView2<C64>,
) -> (Array2<C64>, usize, usize) {
    let (l, d, m) = tensors[i].dim();
    let (m2, d2, r) = tensors[i + 1].dim();
    debug_assert_eq!(m, m2);
    debug_assert_eq!(d, PHYS_DIM);
    debug_assert_eq!(d2, PHYS_DIM);
    // two-site block theta[(l s), (s' r)]
    let left = reshaped(tensors[i].to_owned(), (l * d, m));
    let right = reshaped(tensors[i + 1].to_owned(), (m, d2 * r));
    let theta = reshaped(left.dot(&right), (l, d, d2, r));
    // group the two physical legs: (s s') x (l r)
    let grouped = theta
        .permuted_axes([1, 2, 0, 3])
        .as_standard_layout()
        .into_owned()
        .into_shape((d * d2, l * r))
        .expect("theta group reshape");
    let acted = g4.dot(&grouped);
    let split = acted
        .into_shape((d, d2, l, r))
        .expect("theta ungroup reshape")
        .permuted_axes([2, 0, 1, 3])
        .as_standard_layout()
        .into_owned()
        .into_shape((l * d, d2 * r))
        .expect("theta split reshape");
    (split, l, r)
}

/// Apply a 4x4 matrix to sites `(i, i+1)` of the tensor chain, splitting back
/// by thin SVD and keeping all singular values. The orthogonality centre must
/// sit on the active pair; it moves to `i+1` when `move_right`, else to `i`.
pub(crate) fn apply_gate_split(
    tensors: &mut [Array3<C64>],
    i: usize,
    g4: &ArrayView2<C64>,
    move_right: bool,
) -> Result<()> {
    let (split, l, r) = two_site_block(tensors, i, g4);
    let d = PHYS_DIM;
    let (u, s, vh) = svd_descending(&split.view())?;
    let k = s.len();
    if move_right {
        tensors[i] = reshaped(u, (l, d, k));
        let mut sv = vh;
        for (j, sing) in s.iter().enumerate() {
            sv.row_mut(j).mapv_inplace(|z| z * C64::new(*sing, 0.0));
        }
        tensors[i + 1] = reshaped(sv, (k, d, r));
    } else {
        tensors[i + 1] = reshaped(vh, (k, d, r));
        let mut us = u;
        for (j, sing) in s.iter().enumerate() {
            us.column_mut(j).mapv_inplace(|z| z * C64::new(*sing, 0.0));
        }
        tensors[i] = reshaped(us, (l, d, k));
    }
    Ok(())
}

/// Same action as `apply_gate_split` but factored with QR instead of SVD:
/// exact, cheaper, and gauge- rather than Schmidt-normalised. Used in the
/// gradient engine's inner loops, where only the state matters.
pub(crate) fn absorb_gate_qr(
    tensors: &mut [Array3<C64>],
    i: usize,
    g4: &ArrayView2<C64>,
    move_right: bool,
) -> Result<()> {
    let (split, l, r) = two_site_block(tensors, i, g4);
    let d = PHYS_DIM;
    if move_right {
        let (q, rr) = qr_thin(&split.view())?;
        let k = q.ncols();
        tensors[i] = reshaped(q, (l, d, k));
        tensors[i + 1] = reshaped(rr, (k, d, r));
    } else {
        // LQ via QR of the plain transpose: split = R^T Q^T with Q^T
        // row-orthonormal, so site i+1 ends up right-canonical.
        let st = split.t().as_standard_layout().to_owned();
        let (q, rr) = qr_thin(&st.view())?;
        let k = q.ncols();
        let qt = q.t().as_standard_layout().to_owned();
        tensors[i + 1] = reshaped(qt, (k, d, r));
        let rt = rr.t().as_standard_layout().to_owned();
        tensors[i] = reshaped(rt, (l, d, k));
    }
    Ok(())
}

/// Apply a staircase layer exactly. Ascending slot order for the plain layer;
/// the adjoint applies conjugate-transposed gates in descending order. Every
/// bond at most doubles; nothing is truncated.
pub fn apply_layer(psi: &Mps, layer: &StaircaseLayer, adjoint: bool) -> Result<Mps> {
    let n = psi.n();
    if layer.n() != n {
        return Err(Error::shape(format!(
            "layer acts on {} sites but the state has {n}",
            layer.n()
        )));
    }
    let mats = layer.applied_matrices(adjoint);
    if adjoint {
        let mut out = psi.canonicalized(n - 1)?;
        for i in (0..n - 1).rev() {
            // centre is at i+1; after the split it sits at i
            apply_gate_split(&mut out.tensors, i, &mats[i].view(), false)?;
        }
        out.canonical = Some(0);
        Ok(out)
    } else {
        let mut out = psi.canonicalized(0)?;
        for (i, mat) in mats.iter().enumerate() {
            apply_gate_split(&mut out.tensors, i, &mat.view(), true)?;
        }
        out.canonical = Some(n - 1);
        Ok(out)
    }
}

/// Metadata carried alongside a circuit for reporting and serialisation.
#[derive(Clone, Debug, Default)]
pub struct CircuitMeta {
    pub method: String,
    pub seed: u64,
    /// Per-layer disentangling losses recorded during synthesis, if any.
    pub layer_losses: Vec<f64>,
}

/// An ordered list of staircase layers, each optionally applied as its
/// adjoint. Layer 0 is applied first.
#[derive(Clone, Debug)]
pub struct Circuit {
    pub n: usize,
    pub layers: Vec<(StaircaseLayer, bool)>,
    pub meta: CircuitMeta,
}

/// Bond-growth statistics of a circuit application.
#[derive(Clone, Copy, Debug, Default)]
pub struct ChiStats {
    /// Largest bond extent over every intermediate state, before any
    /// truncation.
    pub chi_max: usize,
}

impl Circuit {
    pub fn new(n: usize, layers: Vec<(StaircaseLayer, bool)>, meta: CircuitMeta) -> Result<Self> {
        for (i, (layer, _)) in layers.iter().enumerate() {
            if layer.n() != n {
                return Err(Error::shape(format!(
                    "circuit layer {i} acts on {} sites, expected {n}",
                    layer.n()
                )));
            }
        }
        Ok(Circuit { n, layers, meta })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Exact application (no truncation, no cap).
    pub fn apply(&self, psi: &Mps) -> Result<Mps> {
        Ok(self.apply_with(psi, 0.0, None)?.0)
    }

    /// Application with optional per-layer truncation threshold and a hard
    /// bond cap; exceeding the cap is a resource error naming the layer.
    pub fn apply_with(
        &self,
        psi: &Mps,
        trunc_thresh: f64,
        chi_cap: Option<usize>,
    ) -> Result<(Mps, ChiStats)> {
        if psi.n() != self.n {
            return Err(Error::shape(format!(
                "circuit acts on {} sites but the state has {}",
                self.n,
                psi.n()
            )));
        }
        let mut state = psi.clone();
        let mut stats = ChiStats { chi_max: state.max_bond_dim() };
        for (idx, (layer, adjoint)) in self.layers.iter().enumerate() {
            state = apply_layer(&state, layer, *adjoint)?;
            stats.chi_max = stats.chi_max.max(state.max_bond_dim());
            if let Some(cap) = chi_cap {
                if state.max_bond_dim() > cap {
                    return Err(Error::resource(format!(
                        "bond dimension {} exceeds cap {cap} after layer {idx}",
                        state.max_bond_dim()
                    )));
                }
            }
            if trunc_thresh > 0.0 {
                let (t, _) = state.truncate(None, trunc_thresh)?;
                state = t;
            }
        }
        Ok((state, stats))
    }
}

/// Build the staircase layer that maps `|0...0>` exactly to a given
/// bond-dimension-2 state.
///
/// With the state right-canonicalised (centre at site 0), gate slot 0 sends
/// `|00>` to the site-0 tensor; every later slot `j` sends the bond-carry
/// basis `|a>|0>` through the right-canonical site tensor, whose isometry
/// property makes the specified gate columns orthonormal; the final slot
/// absorbs the merged last two sites. Unspecified columns are completed
/// deterministically by Gram-Schmidt against the standard basis, so the
/// construction is reproducible. The result is verified to prepare the state
/// with infidelity at most 1e-10.
pub fn prep_layer_from_chi2(psi_tilde: &Mps) -> Result<StaircaseLayer> {
    let n = psi_tilde.n();
    if n < 2 {
        return Err(Error::validation("layer preparation needs at least 2 sites"));
    }
    if psi_tilde.max_bond_dim() > 2 {
        return Err(Error::validation(format!(
            "layer preparation needs bond dimension <= 2, got {}",
            psi_tilde.max_bond_dim()
        )));
    }
    let canon = psi_tilde.canonicalized(0)?;
    let mut gates: Vec<Su4Gate> = Vec::with_capacity(n - 1);
    for slot in 0..n - 1 {
        let mut specified: Vec<(usize, Array1<C64>)> = Vec::new();
        if slot == 0 {
            let t = canon.site(0); // (1, 2, alpha)
            let alpha = t.dim().2;
            let mut col = Array1::<C64>::zeros(4);
            for i in 0..2 {
                for a in 0..alpha {
                    col[2 * i + a] = t[[0, i, a]];
                }
            }
            specified.push((0, col));
            if n == 2 {
                // single-gate chain: site 0 and site 1 merge into one block
                specified.clear();
                let t1 = canon.site(1); // (alpha, 2, 1)
                let mut col = Array1::<C64>::zeros(4);
                for i in 0..2 {
                    for a in 0..alpha {
                        for ip in 0..2 {
                            col[2 * i + ip] += t[[0, i, a]] * t1[[a, ip, 0]];
                        }
                    }
                }
                specified.push((0, col));
            }
        } else if slot < n - 2 {
            let t = canon.site(slot); // (alpha_prev, 2, alpha)
            let (ap, _, a) = t.dim();
            for carry in 0..ap {
                let mut col = Array1::<C64>::zeros(4);
                for i in 0..2 {
                    for b in 0..a {
                        col[2 * i + b] = t[[carry, i, b]];
                    }
                }
                specified.push((2 * carry, col));
            }
        } else {
            // last slot: merged final two sites
            let t = canon.site(n - 2);
            let t_last = canon.site(n - 1);
            let (ap, _, a) = t.dim();
            for carry in 0..ap {
                let mut col = Array1::<C64>::zeros(4);
                for i in 0..2 {
                    for ip in 0..2 {
                        let mut acc = C64::new(0.0, 0.0);
                        for b in 0..a {
                            acc += t[[carry, i, b]] * t_last[[b, ip, 0]];
                        }
                        col[2 * i + ip] = acc;
                    }
                }
                specified.push((2 * carry, col));
            }
        }
        let unitary = complete_unitary(&specified)?;
        gates.push(Su4Gate::from_unitary(slot, unitary)?);
    }
    let layer = StaircaseLayer::new(gates)?;
    // verification: the layer must actually prepare the state
    let zero = Mps::zero_state(n)?;
    let prepared = apply_layer(&zero, &layer, false)?;
    let fid = prepared.fidelity(&canon)?;
    if fid < 1.0 - 1e-10 {
        return Err(Error::numerical(format!(
            "preparation layer infidelity {:.3e} exceeds 1e-10",
            1.0 - fid
        )));
    }
    Ok(layer)
}

/// Extend a set of orthonormal columns (given with their column indices) to a
/// full 4x4 unitary, filling the free columns by Gram-Schmidt against the
/// standard basis; each free column takes the candidate with the largest
/// residual, ties broken by lowest index.
fn complete_unitary(specified: &[(usize, Array1<C64>)]) -> Result<Array2<C64>> {
    let mut u = Array2::<C64>::zeros((4, 4));
    let mut filled = [false; 4];
    let mut fixed: Vec<Array1<C64>> = Vec::with_capacity(4);
    for (idx, col) in specified {
        if *idx >= 4 || filled[*idx] {
            return Err(Error::validation(format!("bad or duplicate gate column {idx}")));
        }
        let norm: f64 = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::numerical(format!(
                "specified gate column {idx} has norm {norm}, expected 1"
            )));
        }
        u.column_mut(*idx).assign(col);
        filled[*idx] = true;
        fixed.push(col.clone());
    }
    for c in 0..4 {
        if filled[c] {
            continue;
        }
        let mut best: Option<(f64, Array1<C64>)> = None;
        for e in 0..4 {
            let mut cand = Array1::<C64>::zeros(4);
            cand[e] = C64::new(1.0, 0.0);
            for f in &fixed {
                let ip: C64 = f.iter().zip(cand.iter()).map(|(a, b)| a.conj() * b).sum();
                cand.zip_mut_with(f, |x, y| *x -= ip * y);
            }
            let norm: f64 = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if best.as_ref().map_or(true, |(bn, _)| norm > *bn + 1e-12) {
                best = Some((norm, cand));
            }
        }
        let (norm, cand) = best.expect("candidate set non-empty");
        if norm < 1e-6 {
            return Err(Error::numerical(
                "gate completion degenerated: no independent candidate column",
            ));
        }
        let newcol = cand.mapv(|z| z / C64::new(norm, 0.0));
        u.column_mut(c).assign(&newcol);
        fixed.push(newcol);
        filled[c] = true;
    }
    Ok(u)
}

/// Reverse the qubit order inside a two-qubit matrix: `g'[ba, dc] = g[ab, cd]`.
pub(crate) fn swap_qubit_order(g: &ArrayView2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros((4, 4));
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    out[[2 * b + a, 2 * d + c]] = g[[2 * a + b, 2 * c + d]];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, rng_from_seed};
    use crate::testkit::{dense_apply_gate, haar_unitary};

    fn random_theta(seed: u64, std: f64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        normal_vec(&mut rng, GATE_PARAMS, std)
    }

    #[test]
    fn pauli_basis_is_orthogonal_traceless_hermitian() {
        let basis = pauli_basis();
        assert_eq!(basis.len(), 15);
        for (a, p) in basis.iter().enumerate() {
            let tr: C64 = (0..4).map(|i| p[[i, i]]).sum();
            assert!(tr.norm() < 1e-14, "P[{a}] has trace {tr}");
            assert!(crate::tensor::hermiticity_defect(&p.view()) < 1e-14);
            for (b, q) in basis.iter().enumerate() {
                let tr: C64 =
                    (0..4).map(|i| (0..4).map(|j| p[[i, j]] * q[[j, i]]).sum::<C64>()).sum();
                let expect = if a == b { 4.0 } else { 0.0 };
                assert!((tr - C64::new(expect, 0.0)).norm() < 1e-13);
            }
        }
        // order spot checks: index 0 is IX, index 3 is XI, index 14 is ZZ
        assert!((basis[0][[0, 1]] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((basis[0][[2, 3]] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((basis[3][[0, 2]] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((basis[14][[0, 0]] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((basis[14][[1, 1]] - C64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((basis[14][[3, 3]] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn gate_at_zero_is_identity_and_xx_rotation_is_known() {
        let g = gate_from_params(&[0.0; 15]).unwrap();
        let eye = Array2::<C64>::eye(4);
        assert!(max_abs_diff(&g.view(), &eye.view()) < 1e-13);

        // exp(i (pi/2) XX) = i XX
        let mut theta = [0.0; 15];
        theta[4] = std::f64::consts::FRAC_PI_2; // XX slot
        let g = gate_from_params(&theta).unwrap();
        let i = C64::new(0.0, 1.0);
        for (r, c) in [(0, 3), (1, 2), (2, 1), (3, 0)] {
            assert!((g[[r, c]] - i).norm() < 1e-12, "entry ({r},{c}) = {}", g[[r, c]]);
        }
        assert!(g[[0, 0]].norm() < 1e-12);
    }

    #[test]
    fn gates_are_unitary_and_adjoint_negates_params() {
        let theta = random_theta(5, 0.7);
        let g = gate_from_params(&theta).unwrap();
        assert!(unitarity_defect(&g.view()) < 1e-12);
        let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
        let gi = gate_from_params(&neg).unwrap();
        let gh = conj_transpose(&g.view());
        assert!(max_abs_diff(&gi.view(), &gh.view()) < 1e-12);
    }

    #[test]
    fn param_derivatives_match_finite_differences() {
        for seed in [101u64, 102] {
            let theta = random_theta(seed, 0.5);
            let (g, derivs) = gate_and_param_derivatives(&theta).unwrap();
            let g0 = gate_from_params(&theta).unwrap();
            assert!(max_abs_diff(&g.view(), &g0.view()) < 1e-12);
            let h = 1e-6;
            for a in 0..GATE_PARAMS {
                let mut tp = theta.clone();
                tp[a] += h;
                let mut tm = theta.clone();
                tm[a] -= h;
                let gp = gate_from_params(&tp).unwrap();
                let gm = gate_from_params(&tm).unwrap();
                let fd = (&gp - &gm).mapv(|z| z / C64::new(2.0 * h, 0.0));
                let dev = max_abs_diff(&fd.view(), &derivs[a].view());
                assert!(dev < 1e-7, "seed {seed} param {a}: FD deviation {dev:.3e}");
            }
        }
    }

    #[test]
    fn param_derivatives_at_zero_are_i_pauli() {
        // fully degenerate spectrum: dG/dtheta_a = i P_a exactly
        let (_, derivs) = gate_and_param_derivatives(&[0.0; 15]).unwrap();
        for (a, p) in pauli_basis().iter().enumerate() {
            let ip = p.mapv(|z| z * C64::new(0.0, 1.0));
            assert!(
                max_abs_diff(&derivs[a].view(), &ip.view()) < 1e-13,
                "param {a}"
            );
        }
    }

    #[test]
    fn log_chart_reaches_haar_random_unitaries() {
        for seed in 0..100u64 {
            let u = haar_unitary(1000 + seed);
            let theta = su4_log_params(&u.view()).unwrap();
            let g = gate_from_params(&theta).unwrap();
            let tr: C64 = (0..4)
                .map(|i| (0..4).map(|j| g[[j, i]].conj() * u[[j, i]]).sum::<C64>())
                .sum();
            let phase = tr / tr.norm();
            let aligned = g.mapv(|z| z * phase);
            let dev = max_abs_diff(&aligned.view(), &u.view());
            assert!(dev < 1e-6, "seed {seed}: distance {dev:.3e}");
        }
    }

    #[test]
    fn log_chart_handles_degenerate_unitaries() {
        // identity, a Pauli (eigenvalues +-1 doubly degenerate), and a gate
        // with eigenvalue -1
        let eye = Array2::<C64>::eye(4);
        let theta = su4_log_params(&eye.view()).unwrap();
        assert!(theta.iter().all(|t| t.abs() < 1e-10));

        let xx = pauli_basis()[4].clone();
        let theta = su4_log_params(&xx.view()).unwrap();
        let g = gate_from_params(&theta).unwrap();
        let tr: C64 = (0..4)
            .map(|i| (0..4).map(|j| g[[j, i]].conj() * xx[[j, i]]).sum::<C64>())
            .sum();
        assert!((tr.norm() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn roundtrip_params_unitary_params() {
        let theta = random_theta(7, 0.4);
        let gate = Su4Gate::from_params(2, &theta).unwrap();
        let back = Su4Gate::from_unitary(2, gate.unitary.clone()).unwrap();
        let g2 = gate_from_params(&back.params).unwrap();
        let tr: C64 = (0..4)
            .map(|i| (0..4).map(|j| g2[[j, i]].conj() * gate.unitary[[j, i]]).sum::<C64>())
            .sum();
        let phase = tr / tr.norm();
        let aligned = g2.mapv(|z| z * phase);
        assert!(max_abs_diff(&aligned.view(), &gate.unitary.view()) < 1e-9);
    }

    #[test]
    fn identity_layer_preserves_states() {
        let psi = Mps::random(6, 4, 11, false).unwrap();
        let layer = StaircaseLayer::identity(6).unwrap();
        for adjoint in [false, true] {
            let out = apply_layer(&psi, &layer, adjoint).unwrap();
            assert!((psi.fidelity(&out).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_layer_matches_dense_oracle() {
        let n = 6;
        let psi = Mps::random(n, 3, 13, false).unwrap();
        let mut rng = rng_from_seed(14);
        let flat = normal_vec(&mut rng, GATE_PARAMS * (n - 1), 0.5);
        let layer = StaircaseLayer::from_params(n, &flat).unwrap();

        let out = apply_layer(&psi, &layer, false).unwrap();
        let mut dense = psi.to_statevector().unwrap();
        for (i, g) in layer.gates().iter().enumerate() {
            dense_apply_gate(&mut dense, n, i, &g.unitary);
        }
        let got = out.to_statevector().unwrap();
        let worst = got.iter().zip(&dense).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "ascending deviation {worst:.3e}");

        // adjoint: conjugate-transposed gates in descending order
        let out = apply_layer(&psi, &layer, true).unwrap();
        let mut dense = psi.to_statevector().unwrap();
        for (i, g) in layer.gates().iter().enumerate().rev() {
            let gh = conj_transpose(&g.unitary.view());
            dense_apply_gate(&mut dense, n, i, &gh);
        }
        let got = out.to_statevector().unwrap();
        let worst = got.iter().zip(&dense).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "descending deviation {worst:.3e}");
    }

    #[test]
    fn layer_then_adjoint_is_identity_and_bonds_at_most_double() {
        let n = 7;
        let psi = Mps::random(n, 3, 15, false).unwrap();
        let mut rng = rng_from_seed(16);
        let flat = normal_vec(&mut rng, GATE_PARAMS * (n - 1), 0.3);
        let layer = StaircaseLayer::from_params(n, &flat).unwrap();
        let fwd = apply_layer(&psi, &layer, false).unwrap();
        for (before, after) in psi.bond_dims().iter().zip(fwd.bond_dims()) {
            assert!(after <= 2 * before, "bond grew from {before} to {after}");
        }
        let back = apply_layer(&fwd, &layer, true).unwrap();
        assert!((psi.fidelity(&back).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn prep_layer_prepares_ghz_exactly() {
        let ghz = Mps::ghz(6).unwrap();
        let (tilde, discarded) = ghz.truncate(Some(2), 0.0).unwrap();
        assert!(discarded.abs() < 1e-14);
        let layer = prep_layer_from_chi2(&tilde).unwrap();
        let zero = Mps::zero_state(6).unwrap();
        let prepared = apply_layer(&zero, &layer, false).unwrap();
        assert!((prepared.fidelity(&ghz).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prep_layer_on_zero_state_is_identity_gates() {
        let zero = Mps::zero_state(5).unwrap();
        let layer = prep_layer_from_chi2(&zero).unwrap();
        let eye = Array2::<C64>::eye(4);
        for g in layer.gates() {
            assert!(max_abs_diff(&g.unitary.view(), &eye.view()) < 1e-12);
        }
    }

    #[test]
    fn prep_layer_handles_random_chi2_states_and_n2() {
        for seed in 0..30u64 {
            let n = 4 + (seed % 6) as usize; // 4..=9
            let psi = Mps::random(n, 2, 2000 + seed, false).unwrap();
            let layer = prep_layer_from_chi2(&psi).unwrap();
            let zero = Mps::zero_state(n).unwrap();
            let prepared = apply_layer(&zero, &layer, false).unwrap();
            let infid = 1.0 - prepared.fidelity(&psi).unwrap();
            assert!(infid < 1e-10, "seed {seed} n {n}: infidelity {infid:.3e}");
        }
        let psi = Mps::random(2, 2, 999, false).unwrap();
        let layer = prep_layer_from_chi2(&psi).unwrap();
        let zero = Mps::zero_state(2).unwrap();
        let prepared = apply_layer(&zero, &layer, false).unwrap();
        assert!((prepared.fidelity(&psi).unwrap() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn prep_layer_rejects_larger_bond_dimension() {
        let psi = Mps::random(5, 3, 21, false).unwrap();
        assert!(matches!(prep_layer_from_chi2(&psi), Err(Error::Validation(_))));
    }

    #[test]
    fn circuit_apply_tracks_chi_and_honours_cap() {
        let n = 6;
        let psi = Mps::zero_state(n).unwrap();
        let mut rng = rng_from_seed(31);
        let l1 = StaircaseLayer::from_params(n, &normal_vec(&mut rng, 75, 0.5)).unwrap();
        let l2 = StaircaseLayer::from_params(n, &normal_vec(&mut rng, 75, 0.5)).unwrap();
        let circuit = Circuit::new(
            n,
            vec![(l1, false), (l2, true)],
            CircuitMeta::default(),
        )
        .unwrap();
        let (out, stats) = circuit.apply_with(&psi, 0.0, None).unwrap();
        assert!(stats.chi_max <= 4);
        assert!(out.max_bond_dim() <= 4);
        let err = circuit.apply_with(&psi, 0.0, Some(1)).unwrap_err();
        match err {
            Error::Resource(msg) => assert!(msg.contains("layer 0"), "msg: {msg}"),
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn swap_qubit_order_is_an_involution_matching_kron_swap() {
        let g = haar_unitary(77);
        let s = swap_qubit_order(&g.view());
        let ss = swap_qubit_order(&s.view());
        assert!(max_abs_diff(&ss.view(), &g.view()) < 1e-15);
        // SWAP . G . SWAP comparison
        let mut swap = Array2::<C64>::zeros((4, 4));
        swap[[0, 0]] = C64::new(1.0, 0.0);
        swap[[1, 2]] = C64::new(1.0, 0.0);
        swap[[2, 1]] = C64::new(1.0, 0.0);
        swap[[3, 3]] = C64::new(1.0, 0.0);
        let expect = swap.dot(&g).dot(&swap);
        assert!(max_abs_diff(&s.view(), &expect.view()) < 1e-14);
    }
}
