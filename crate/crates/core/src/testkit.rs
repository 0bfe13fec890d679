//! Dense-statevector reference implementations shared by unit tests.
//!
//! Everything here works on flat `Vec<C64>` amplitudes in the crate's
//! big-endian bit order and is written with plain loops so it can serve as an
//! independent oracle for the tensor-network code paths.

use crate::circuit::Circuit;
use crate::rng::{normal_vec, rng_from_seed};
use crate::tensor::qr_thin;
use ndarray::Array2;
use num_complex::Complex64 as C64;

/// Apply a 4x4 gate to sites `(site, site + 1)` of an n-qubit vector in the
/// crate's big-endian bit order.
pub(crate) fn dense_apply_gate(v: &mut [C64], n: usize, site: usize, g: &Array2<C64>) {
    let dim = 1usize << n;
    let hi = n - 1 - site; // bit position of `site`
    let lo = n - 2 - site; // bit position of `site + 1`
    let mut out = vec![C64::new(0.0, 0.0); dim];
    for (idx, amp) in v.iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let th = (idx >> hi) & 1;
        let tl = (idx >> lo) & 1;
        let tin = 2 * th + tl;
        let base = idx & !(1 << hi) & !(1 << lo);
        for sout in 0..4usize {
            let coeff = g[[sout, tin]];
            if coeff.norm_sqr() == 0.0 {
                continue;
            }
            let target = base | ((sout >> 1) << hi) | ((sout & 1) << lo);
            out[target] += coeff * amp;
        }
    }
    v.copy_from_slice(&out);
}

/// Apply a whole circuit to a dense vector, honouring per-layer adjoint flags
/// and the staircase ordering (ascending slots for plain layers, descending
/// for adjoints).
pub(crate) fn dense_apply_circuit(v: &mut [C64], circuit: &Circuit) {
    let n = circuit.n;
    for (layer, adjoint) in &circuit.layers {
        let mats = layer.applied_matrices(*adjoint);
        if *adjoint {
            for i in (0..n - 1).rev() {
                dense_apply_gate(v, n, i, &mats[i]);
            }
        } else {
            for (i, mat) in mats.iter().enumerate() {
                dense_apply_gate(v, n, i, mat);
            }
        }
    }
}

/// `|<a|b>|^2` for two dense vectors.
pub(crate) fn dense_fidelity(a: &[C64], b: &[C64]) -> f64 {
    let ip: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    ip.norm_sqr()
}

/// A Haar-random 4x4 unitary (QR of a complex Ginibre matrix with the
/// crate's deterministic sign convention).
pub(crate) fn haar_unitary(seed: u64) -> Array2<C64> {
    let mut rng = rng_from_seed(seed);
    let re = normal_vec(&mut rng, 16, 1.0);
    let im = normal_vec(&mut rng, 16, 1.0);
    let g = Array2::from_shape_fn((4, 4), |(i, j)| C64::new(re[4 * i + j], im[4 * i + j]));
    let (q, _) = qr_thin(&g.view()).unwrap();
    q
}
