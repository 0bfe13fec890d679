//! Matrix product states with open boundaries.
//!
//! A state on `n` qubits is stored as `n` rank-3 tensors `A[j]` of shape
//! `(left_bond, 2, right_bond)` with boundary bonds of extent 1. Basis
//! ordering is big-endian: site 0 is the most significant bit of a
//! computational-basis index. The represented vector is
//! `exp(norm_log) * contraction(tensors)`; `norm_log` keeps norms
//! representable when many small factors accumulate.
//!
//! Canonical structure is tracked as an optional orthogonality centre: when
//! `canonical == Some(c)`, every site left of `c` is left-canonical, every
//! site right of `c` is right-canonical, and the centre tensor has unit
//! Frobenius norm. All fidelity-sensitive routines canonicalise first, so
//! Schmidt coefficients read off a single SVD sweep are exact.
//!
//! Truncation uses a single right-to-left sweep of thin SVDs, accumulating
//! discarded weight in the *original* norm and renormalising once at the end.
//! Because every later truncation acts inside the subspace kept by earlier
//! ones, the cross terms in the overlap vanish and the fidelity obeys
//! `|<psi|psi_trunc>|^2 = 1 - sum(discarded)` exactly, not just to first
//! order. Tests exercise that identity against independent dense overlaps.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::rng::{normal_vec, rng_from_seed};
use crate::tensor::{qr_thin, reshaped, svd_descending};

/// Physical dimension of every site (qubits).
pub const PHYS_DIM: usize = 2;

/// Dense statevector conversions refuse above this many qubits.
pub const MAX_DENSE_QUBITS: usize = 24;

#[derive(Clone, Debug)]
pub struct Mps {
    /// Site tensors, shape `(left, 2, right)`, standard layout.
    pub(crate) tensors: Vec<Array3<C64>>,
    /// Orthogonality centre if known; `None` after operations that break it.
    pub(crate) canonical: Option<usize>,
    /// Log of the scalar prefactor; the represented vector is
    /// `exp(norm_log) * contraction`.
    pub(crate) norm_log: f64,
}

/// Schmidt coefficients for every interior bond of a normalised state:
/// `spectra[b]` is the descending non-negative spectrum across the cut
/// between sites `b` and `b+1`, with squares summing to 1.
#[derive(Clone, Debug)]
pub struct SchmidtSpectra {
    pub spectra: Vec<Vec<f64>>,
}

impl SchmidtSpectra {
    pub fn n_bonds(&self) -> usize {
        self.spectra.len()
    }

    pub fn bond(&self, b: usize) -> &[f64] {
        &self.spectra[b]
    }

    /// Total squared weight at bond `b` (1 for a normalised state).
    pub fn sq_sum(&self, b: usize) -> f64 {
        self.spectra[b].iter().map(|l| l * l).sum()
    }

    /// Squared weight beyond the `k` largest coefficients at bond `b`.
    pub fn tail_sq_sum(&self, b: usize, k: usize) -> f64 {
        self.spectra[b].iter().skip(k).map(|l| l * l).sum()
    }

    /// Von Neumann entanglement entropy (natural log) per bond.
    pub fn entropies(&self) -> Vec<f64> {
        self.spectra
            .iter()
            .map(|s| {
                -s.iter()
                    .map(|l| l * l)
                    .filter(|&p| p > 1e-300)
                    .map(|p| p * p.ln())
                    .sum::<f64>()
            })
            .collect()
    }

    /// Largest bond extent implied by the spectra.
    pub fn max_chi(&self) -> usize {
        self.spectra.iter().map(Vec::len).max().unwrap_or(1)
    }
}

/// Reshape a site tensor to `(left * phys, right)`.
pub(crate) fn fuse_left(t: &Array3<C64>) -> Array2<C64> {
    let (l, d, r) = t.dim();
    reshaped(t.to_owned(), (l * d, r))
}

/// Reshape a site tensor to `(left, phys * right)`.
pub(crate) fn fuse_right(t: &Array3<C64>) -> Array2<C64> {
    let (l, d, r) = t.dim();
    reshaped(t.to_owned(), (l, d * r))
}

pub(crate) fn unfuse_left(m: Array2<C64>, l: usize, d: usize) -> Array3<C64> {
    let r = m.ncols();
    reshaped(m, (l, d, r))
}

pub(crate) fn unfuse_right(m: Array2<C64>, d: usize, r: usize) -> Array3<C64> {
    let l = m.nrows();
    reshaped(m, (l, d, r))
}

/// One transfer-matrix step: given the environment over sites `< j` as an
/// `(bra_bond, ket_bond)` matrix, absorb site `j` of both states.
pub(crate) fn transfer_step(
    env: &Array2<C64>,
    bra_site: &Array3<C64>,
    ket_site: &Array3<C64>,
) -> Array2<C64> {
    let (_, d, kr) = ket_site.dim();
    let (bl, _, _) = bra_site.dim();
    debug_assert_eq!(env.nrows(), bl);
    // X[(bl p), kr] = env . ket
    let x = reshaped(env.dot(&fuse_right(ket_site)), (bl * d, kr));
    // result[br, kr] = sum_{bl, p} conj(bra[bl, p, br]) X[(bl p), kr]
    let bra_mat = fuse_left(bra_site).mapv(|z| z.conj());
    bra_mat.t().dot(&x)
}

impl Mps {
    /// Build from explicit site tensors; validates chain consistency.
    pub fn from_tensors(tensors: Vec<Array3<C64>>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::validation("an MPS needs at least one site"));
        }
        for (j, t) in tensors.iter().enumerate() {
            let (l, d, r) = t.dim();
            if d != PHYS_DIM {
                return Err(Error::shape(format!(
                    "site {j} has physical dimension {d}, expected {PHYS_DIM}"
                )));
            }
            if j == 0 && l != 1 {
                return Err(Error::shape(format!("site 0 left bond is {l}, expected 1")));
            }
            if j + 1 == tensors.len() && r != 1 {
                return Err(Error::shape(format!("last site right bond is {r}, expected 1")));
            }
            if j > 0 {
                let prev_r = tensors[j - 1].dim().2;
                if prev_r != l {
                    return Err(Error::shape(format!(
                        "bond mismatch between sites {} and {j}: {prev_r} vs {l}",
                        j - 1
                    )));
                }
            }
            if !t.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::numerical(format!("site {j} contains a non-finite entry")));
            }
        }
        let tensors = tensors
            .into_iter()
            .map(|t| t.as_standard_layout().to_owned())
            .collect();
        Ok(Mps { tensors, canonical: None, norm_log: 0.0 })
    }

    /// Computational basis product state |bits>.
    pub fn basis_state(bits: &[u8]) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::validation("an MPS needs at least one site"));
        }
        let tensors = bits
            .iter()
            .map(|&b| {
                if b > 1 {
                    return Err(Error::validation(format!("basis bit {b} is not 0 or 1")));
                }
                let mut t = Array3::zeros((1, PHYS_DIM, 1));
                t[[0, b as usize, 0]] = C64::new(1.0, 0.0);
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut mps = Mps::from_tensors(tensors)?;
        mps.canonical = Some(0);
        Ok(mps)
    }

    /// The all-zeros state |0...0>.
    pub fn zero_state(n: usize) -> Result<Self> {
        Mps::basis_state(&vec![0u8; n])
    }

    /// The n-qubit GHZ state (|0..0> + |1..1>) / sqrt(2).
    pub fn ghz(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("GHZ needs at least 2 sites"));
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut tensors = Vec::with_capacity(n);
        let mut first = Array3::zeros((1, 2, 2));
        first[[0, 0, 0]] = C64::new(s, 0.0);
        first[[0, 1, 1]] = C64::new(s, 0.0);
        tensors.push(first);
        for _ in 1..n - 1 {
            let mut mid = Array3::zeros((2, 2, 2));
            mid[[0, 0, 0]] = C64::new(1.0, 0.0);
            mid[[1, 1, 1]] = C64::new(1.0, 0.0);
            tensors.push(mid);
        }
        let mut last = Array3::zeros((2, 2, 1));
        last[[0, 0, 0]] = C64::new(1.0, 0.0);
        last[[1, 1, 0]] = C64::new(1.0, 0.0);
        tensors.push(last);
        Mps::from_tensors(tensors)
    }

    /// Haar-agnostic random state: i.i.d. normal tensor entries (complex, or
    /// real when `real_valued`), bond dimensions `min(chi, full)`, then
    /// canonicalised and normalised. Deterministic in `seed`.
    pub fn random(n: usize, chi: usize, seed: u64, real_valued: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("an MPS needs at least one site"));
        }
        if chi == 0 {
            return Err(Error::validation("bond dimension must be at least 1"));
        }
        let mut rng = rng_from_seed(seed);
        let bond = |b: usize| -> usize {
            // full extent of bond b (between sites b and b+1)
            let left = 1usize << (b + 1).min(40);
            let right = 1usize << (n - 1 - b).min(40);
            chi.min(left).min(right)
        };
        let mut tensors = Vec::with_capacity(n);
        for j in 0..n {
            let l = if j == 0 { 1 } else { bond(j - 1) };
            let r = if j + 1 == n { 1 } else { bond(j) };
            let count = l * PHYS_DIM * r;
            let re = normal_vec(&mut rng, count, 1.0);
            let im = if real_valued { vec![0.0; count] } else { normal_vec(&mut rng, count, 1.0) };
            let t = Array3::from_shape_fn((l, PHYS_DIM, r), |(a, p, b)| {
                let f = (a * PHYS_DIM + p) * r + b;
                C64::new(re[f], im[f])
            });
            tensors.push(t);
        }
        let mut mps = Mps::from_tensors(tensors)?;
        mps = mps.canonicalized(0)?;
        mps.norm_log = 0.0;
        Ok(mps)
    }

    pub fn n(&self) -> usize {
        self.tensors.len()
    }

    pub fn site(&self, j: usize) -> &Array3<C64> {
        &self.tensors[j]
    }

    /// Interior bond extents, length `n - 1`.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors.iter().take(self.n() - 1).map(|t| t.dim().2).collect()
    }

    /// Largest interior bond extent (1 for a single site).
    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn norm_log(&self) -> f64 {
        self.norm_log
    }

    pub fn orthogonality_centre(&self) -> Option<usize> {
        self.canonical
    }

    /// <self|other> including both norm prefactors.
    pub fn overlap(&self, other: &Mps) -> Result<C64> {
        let raw = self.overlap_raw(other)?;
        Ok(raw * (self.norm_log + other.norm_log).exp())
    }

    /// Overlap of the bare tensor networks, ignoring `norm_log`.
    fn overlap_raw(&self, other: &Mps) -> Result<C64> {
        if self.n() != other.n() {
            return Err(Error::shape(format!(
                "overlap needs equal lengths, got {} and {}",
                self.n(),
                other.n()
            )));
        }
        let mut env = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        for j in 0..self.n() {
            env = transfer_step(&env, &self.tensors[j], &other.tensors[j]);
        }
        Ok(env[[0, 0]])
    }

    /// Norm of the represented vector.
    pub fn norm(&self) -> f64 {
        if let Some(c) = self.canonical {
            // centre has unit Frobenius norm by invariant; recompute anyway
            let centre: f64 = self.tensors[c].iter().map(|z| z.norm_sqr()).sum();
            return centre.sqrt() * self.norm_log.exp();
        }
        let raw = self.overlap_raw(self).expect("self-overlap").re.max(0.0);
        raw.sqrt() * self.norm_log.exp()
    }

    /// Fidelity |<a|b>|^2 / (<a|a><b|b>); norm prefactors cancel, so this is
    /// safe even when `norm_log` is far from zero.
    pub fn fidelity(&self, other: &Mps) -> Result<f64> {
        let ab = self.overlap_raw(other)?;
        let aa = self.overlap_raw(self)?.re;
        let bb = other.overlap_raw(other)?.re;
        if aa <= 0.0 || bb <= 0.0 {
            return Err(Error::numerical("fidelity of a zero-norm state"));
        }
        Ok(ab.norm_sqr() / (aa * bb))
    }

    /// Move the orthogonality centre to `centre` by QR sweeps, reusing any
    /// existing canonical structure. The centre tensor is left with unit
    /// Frobenius norm; the absorbed scale goes into `norm_log`.
    pub fn canonicalized(&self, centre: usize) -> Result<Mps> {
        let n = self.n();
        if centre >= n {
            return Err(Error::validation(format!(
                "orthogonality centre {centre} out of range for {n} sites"
            )));
        }
        let mut out = self.clone();
        let (left_from, right_from) = match out.canonical {
            Some(c) if c == centre => return Ok(out),
            Some(c) if c < centre => (c, n - 1 + 1),
            Some(c) => (centre, c + 1), // c > centre: right part already canonical beyond c
            None => (0, n),
        };
        // left-to-right QR up to the centre
        for j in left_from..centre {
            let (l, d, _) = out.tensors[j].dim();
            let (q, r) = qr_thin(&fuse_left(&out.tensors[j]).view())?;
            out.tensors[j] = unfuse_left(q, l, d);
            let next = fuse_right(&out.tensors[j + 1]);
            let (_, dn, rn) = out.tensors[j + 1].dim();
            out.tensors[j + 1] = unfuse_right(r.dot(&next), dn, rn);
        }
        // right-to-left QR down to the centre
        let start = right_from.min(n);
        for j in (centre + 1..start).rev() {
            let (_, d, r) = out.tensors[j].dim();
            let m = fuse_right(&out.tensors[j]); // (l, d r)
            let mt = m.t().as_standard_layout().to_owned(); // (d r, l), plain transpose
            let (q, rr) = qr_thin(&mt.view())?;
            let qt = q.t().as_standard_layout().to_owned(); // (k, d r)
            out.tensors[j] = unfuse_right(qt, d, r);
            let prev = fuse_left(&out.tensors[j - 1]); // (l' d, l)
            let (lp, dp, _) = out.tensors[j - 1].dim();
            let rt = rr.t().as_standard_layout().to_owned(); // (l, k)
            out.tensors[j - 1] = unfuse_left(prev.dot(&rt), lp, dp);
        }
        let centre_norm: f64 =
            out.tensors[centre].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if centre_norm < 1e-300 {
            return Err(Error::numerical("cannot canonicalise a zero-norm state"));
        }
        let inv = C64::new(1.0 / centre_norm, 0.0);
        out.tensors[centre].mapv_inplace(|z| z * inv);
        out.norm_log += centre_norm.ln();
        out.canonical = Some(centre);
        Ok(out)
    }

    /// Same state with unit norm and `norm_log == 0`.
    pub fn normalized(&self) -> Result<Mps> {
        let mut out = self.canonicalized(self.canonical.unwrap_or(0))?;
        out.norm_log = 0.0;
        Ok(out)
    }

    /// Worst deviation from the isometry conditions implied by
    /// `canonical == Some(c)`; for tests and debugging.
    pub fn canonical_defect(&self) -> f64 {
        let Some(c) = self.canonical else { return f64::NAN };
        let mut worst = 0.0f64;
        for j in 0..c {
            let m = fuse_left(&self.tensors[j]);
            let g = m.t().mapv(|z| z.conj()).dot(&m);
            for ((a, b), v) in g.indexed_iter() {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((v - C64::new(target, 0.0)).norm());
            }
        }
        for j in c + 1..self.n() {
            let m = fuse_right(&self.tensors[j]);
            let g = m.dot(&m.t().mapv(|z| z.conj()));
            for ((a, b), v) in g.indexed_iter() {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((v - C64::new(target, 0.0)).norm());
            }
        }
        let centre: f64 = self.tensors[c].iter().map(|z| z.norm_sqr()).sum();
        worst.max((centre - 1.0).abs())
    }

    /// Dense statevector (big-endian site order), including the norm
    /// prefactor. Refuses for more than [`MAX_DENSE_QUBITS`] sites.
    pub fn to_statevector(&self) -> Result<Vec<C64>> {
        let n = self.n();
        if n > MAX_DENSE_QUBITS {
            return Err(Error::resource(format!(
                "dense statevector for n = {n} exceeds the {MAX_DENSE_QUBITS}-qubit guard"
            )));
        }
        let mut acc = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        for t in &self.tensors {
            let (_, d, r) = t.dim();
            let rows = acc.nrows();
            let prod = acc.dot(&fuse_right(t)); // (rows, d r)
            acc = reshaped(prod, (rows * d, r));
        }
        let scale = C64::new(self.norm_log.exp(), 0.0);
        Ok(acc.column(0).iter().map(|z| z * scale).collect())
    }

    /// Exact (up to `chi_max`/`thresh` truncation) MPS from a dense
    /// statevector by successive thin SVDs. Returns the state and the total
    /// discarded squared weight; the output is normalised and the fidelity to
    /// the input is exactly `1 - discarded`.
    ///
    /// The input must have a power-of-two length and unit norm within 1e-8.
    pub fn from_statevector(
        v: &[C64],
        chi_max: Option<usize>,
        thresh: f64,
    ) -> Result<(Mps, f64)> {
        let len = v.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::validation(format!(
                "statevector length {len} is not a power of two >= 2"
            )));
        }
        let n = len.trailing_zeros() as usize;
        if n > MAX_DENSE_QUBITS {
            return Err(Error::resource(format!(
                "statevector with n = {n} exceeds the {MAX_DENSE_QUBITS}-qubit guard"
            )));
        }
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::validation(format!(
                "statevector norm {norm} deviates from 1 by more than 1e-8"
            )));
        }
        if let Some(c) = chi_max {
            if c == 0 {
                return Err(Error::validation("chi_max must be at least 1"));
            }
        }
        let cap = chi_max.unwrap_or(usize::MAX);
        let mut tensors: Vec<Array3<C64>> = Vec::with_capacity(n);
        let mut discarded = 0.0f64;
        let mut m = Array2::from_shape_vec((1, len), v.to_vec())
            .expect("statevector reshape")
            .into_shape((2, len / 2))
            .expect("statevector reshape");
        let mut left = 1usize;
        for _j in 0..n - 1 {
            let (u, s, vh) = svd_descending(&m.view())?;
            let mut keep = s.iter().filter(|&&x| x > thresh).count().clamp(1, cap);
            keep = keep.min(s.len());
            discarded += s.iter().skip(keep).map(|x| x * x).sum::<f64>();
            let uk = u.slice(ndarray::s![.., ..keep]).to_owned();
            tensors.push(unfuse_left(uk, left, PHYS_DIM));
            // carry diag(s_kept) . vh_kept into the remainder, unnormalised
            let mut sv = vh.slice(ndarray::s![..keep, ..]).to_owned();
            for (i, sing) in s.iter().take(keep).enumerate() {
                sv.row_mut(i).mapv_inplace(|z| z * C64::new(*sing, 0.0));
            }
            left = keep;
            let cols = sv.ncols();
            m = reshaped(sv, (keep * 2, cols / 2));
        }
        // final site arrives as (left * 2, 1); its norm^2 is 1 - discarded
        let tail: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let tail_norm = tail.sqrt();
        if tail_norm < 1e-300 {
            return Err(Error::numerical("statevector truncation left a zero state"));
        }
        let mt = m.mapv(|z| z / C64::new(tail_norm, 0.0));
        tensors.push(unfuse_left(mt, left, PHYS_DIM));
        let mut mps = Mps::from_tensors(tensors)?;
        mps.canonical = Some(n - 1);
        Ok((mps, discarded))
    }

    /// Schmidt spectra of the normalised state at every interior bond, from
    /// one left-canonicalisation followed by a right-to-left SVD sweep.
    pub fn schmidt_spectra(&self) -> Result<SchmidtSpectra> {
        let n = self.n();
        if n < 2 {
            return Ok(SchmidtSpectra { spectra: Vec::new() });
        }
        let canon = self.canonicalized(n - 1)?;
        let mut spectra = vec![Vec::new(); n - 1];
        // sweep the centre from site n-1 down to site 0; the singular values
        // of the centre matricisation are the Schmidt coefficients because
        // both environments are isometries
        let mut centre = canon.tensors[n - 1].clone();
        for j in (1..n).rev() {
            let (_, d, r) = centre.dim();
            let m = fuse_right(&centre);
            let (u, s, vh) = svd_descending(&m.view())?;
            spectra[j - 1] = s.to_vec();
            let k = s.len();
            let _right = unfuse_right(vh, d, r);
            // absorb U . diag(s) into the next tensor to the left
            let mut us = u;
            for (i, sing) in s.iter().enumerate() {
                us.column_mut(i).mapv_inplace(|z| z * C64::new(*sing, 0.0));
            }
            if j >= 2 || j == 1 {
                let prev = &canon.tensors[j - 1];
                let (lp, dp, _) = prev.dim();
                let merged = fuse_left(prev).dot(&us);
                centre = unfuse_left(merged, lp, dp);
                debug_assert_eq!(centre.dim().2, k);
            }
        }
        Ok(SchmidtSpectra { spectra })
    }

    /// Truncate every bond to at most `chi_max` coefficients, dropping any
    /// with value `<= thresh`, via a single right-to-left sweep. Returns the
    /// normalised truncated state and the total discarded squared weight;
    /// `fidelity(self, truncated) == 1 - discarded` exactly (see module docs).
    ///
    /// Thresholding compares Schmidt values of the current sweep state, whose
    /// norm differs from 1 only by previously discarded weight.
    pub fn truncate(&self, chi_max: Option<usize>, thresh: f64) -> Result<(Mps, f64)> {
        if let Some(c) = chi_max {
            if c == 0 {
                return Err(Error::validation("chi_max must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&thresh) {
            return Err(Error::validation(format!("threshold {thresh} out of range [0, 1)")));
        }
        let n = self.n();
        let cap = chi_max.unwrap_or(usize::MAX);
        if n < 2 {
            let mut out = self.canonicalized(0)?;
            out.norm_log = self.norm_log;
            return Ok((out, 0.0));
        }
        let canon = self.canonicalized(n - 1)?;
        let mut out_tensors: Vec<Array3<C64>> = vec![Array3::zeros((1, 1, 1)); n];
        let mut discarded = 0.0f64;
        let mut centre = canon.tensors[n - 1].clone();
        for j in (1..n).rev() {
            let (_, d, r) = centre.dim();
            let m = fuse_right(&centre);
            let (u, s, vh) = svd_descending(&m.view())?;
            let mut keep = s.iter().filter(|&&x| x > thresh).count().clamp(1, cap);
            keep = keep.min(s.len());
            discarded += s.iter().skip(keep).map(|x| x * x).sum::<f64>();
            out_tensors[j] = unfuse_right(vh.slice(ndarray::s![..keep, ..]).to_owned(), d, r);
            let mut us = u.slice(ndarray::s![.., ..keep]).to_owned();
            for (i, sing) in s.iter().take(keep).enumerate() {
                us.column_mut(i).mapv_inplace(|z| z * C64::new(*sing, 0.0));
            }
            let prev = &canon.tensors[j - 1];
            let (lp, dp, _) = prev.dim();
            centre = unfuse_left(fuse_left(prev).dot(&us), lp, dp);
        }
        // all that remains of the norm sits in the site-0 tensor
        let tail: f64 = centre.iter().map(|z| z.norm_sqr()).sum();
        let tail_norm = tail.sqrt();
        if tail_norm < 1e-300 {
            return Err(Error::numerical("truncation left a zero state"));
        }
        out_tensors[0] = centre.mapv(|z| z / C64::new(tail_norm, 0.0));
        let mut out = Mps::from_tensors(out_tensors)?;
        out.canonical = Some(0);
        out.norm_log = self.norm_log;
        Ok((out, discarded))
    }

    /// Best possible fidelity of any bond-dimension-`k` approximation reached
    /// by sequential truncation: the retained weight of `truncate(k, 0)`.
    pub fn chi_k_fidelity(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::validation("chi_k_fidelity needs k >= 1"));
        }
        let (_, discarded) = self.truncate(Some(k), 0.0)?;
        Ok(1.0 - discarded)
    }

    /// The site-reversed state: tensor `j` moves to `n-1-j` with its bond
    /// axes swapped (a plain transpose, no conjugation), so overlaps and
    /// Schmidt data are invariant and left/right canonical roles exchange.
    pub(crate) fn mirrored(&self) -> Mps {
        let n = self.n();
        let tensors = self
            .tensors
            .iter()
            .rev()
            .map(|t| t.clone().permuted_axes([2, 1, 0]).as_standard_layout().to_owned())
            .collect();
        Mps {
            tensors,
            canonical: self.canonical.map(|c| n - 1 - c),
            norm_log: self.norm_log,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn random_statevector(seed: u64, n: usize) -> Vec<C64> {
        let mut rng = rng_from_seed(seed);
        let re = normal_vec(&mut rng, 1 << n, 1.0);
        let im = normal_vec(&mut rng, 1 << n, 1.0);
        let mut v: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)).collect();
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= C64::new(norm, 0.0));
        v
    }

    fn dense_overlap(a: &[C64], b: &[C64]) -> C64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    #[test]
    fn basis_states_are_products_with_trivial_spectra() {
        let mps = Mps::basis_state(&[0, 1, 0, 1]).unwrap();
        assert_eq!(mps.bond_dims(), vec![1, 1, 1]);
        let v = mps.to_statevector().unwrap();
        let idx = 0b0101;
        for (i, z) in v.iter().enumerate() {
            let expect = if i == idx { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(z.re, expect, epsilon = 1e-14);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-14);
        }
        let spectra = mps.schmidt_spectra().unwrap();
        for b in 0..3 {
            assert_eq!(spectra.bond(b).len(), 1);
            assert_abs_diff_eq!(spectra.bond(b)[0], 1.0, epsilon = 1e-12);
        }
        assert_eq!(spectra.entropies(), vec![0.0; 3]);
    }

    #[test]
    fn ghz_spectra_and_entropy() {
        let mps = Mps::ghz(5).unwrap();
        assert_abs_diff_eq!(mps.norm(), 1.0, epsilon = 1e-12);
        let spectra = mps.schmidt_spectra().unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for b in 0..4 {
            let sp = spectra.bond(b);
            assert_eq!(sp.len(), 2);
            assert_abs_diff_eq!(sp[0], s, epsilon = 1e-12);
            assert_abs_diff_eq!(sp[1], s, epsilon = 1e-12);
        }
        for e in spectra.entropies() {
            assert_abs_diff_eq!(e, std::f64::consts::LN_2, epsilon = 1e-12);
        }
    }

    #[test]
    fn statevector_roundtrip_is_exact_without_truncation() {
        let v = random_statevector(5, 8);
        let (mps, discarded) = Mps::from_statevector(&v, None, 0.0).unwrap();
        assert!(discarded.abs() < 1e-14);
        assert_eq!(mps.bond_dims(), vec![2, 4, 8, 16, 8, 4, 2]);
        let w = mps.to_statevector().unwrap();
        let worst = v.iter().zip(&w).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "roundtrip deviation {worst:.3e}");
    }

    #[test]
    fn from_statevector_validates_input() {
        let bad_len = vec![C64::new(1.0, 0.0); 3];
        assert!(matches!(
            Mps::from_statevector(&bad_len, None, 0.0),
            Err(Error::Validation(_))
        ));
        let unnormalised = vec![C64::new(1.0, 0.0); 4];
        assert!(matches!(
            Mps::from_statevector(&unnormalised, None, 0.0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn dense_guard_rejects_large_n() {
        let mps = Mps::random(25, 1, 9, false).unwrap();
        assert!(matches!(mps.to_statevector(), Err(Error::Resource(_))));
    }

    #[test]
    fn schmidt_spectra_match_dense_cut_svd() {
        let mps = Mps::random(8, 5, 17, false).unwrap();
        let spectra = mps.schmidt_spectra().unwrap();
        let v = mps.to_statevector().unwrap();
        for cut in 0..7usize {
            let rows = 1usize << (cut + 1);
            let cols = (1usize << 8) / rows;
            let m = Array2::from_shape_vec((rows, cols), v.clone()).unwrap();
            let (_, s, _) = svd_descending(&m.view()).unwrap();
            let sp = spectra.bond(cut);
            for (k, lam) in sp.iter().enumerate() {
                assert!(
                    (lam - s[k]).abs() < 1e-9,
                    "cut {cut} coefficient {k}: sweep {lam} dense {}",
                    s[k]
                );
            }
            for k in sp.len()..s.len() {
                assert!(s[k] < 1e-9, "cut {cut}: dense has extra weight {}", s[k]);
            }
            assert_abs_diff_eq!(spectra.sq_sum(cut), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn canonicalize_preserves_state_and_is_idempotent() {
        let mps = Mps::random(7, 4, 23, false).unwrap();
        for centre in [0usize, 3, 6] {
            let canon = mps.canonicalized(centre).unwrap();
            assert_eq!(canon.orthogonality_centre(), Some(centre));
            assert!(canon.canonical_defect() < 1e-12);
            assert!((mps.fidelity(&canon).unwrap() - 1.0).abs() < 1e-12);
            // strict idempotence: re-running the sweeps reproduces the tensors
            let mut stripped = canon.clone();
            stripped.canonical = None;
            let again = stripped.canonicalized(centre).unwrap();
            for (a, b) in canon.tensors.iter().zip(&again.tensors) {
                let worst =
                    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
                assert!(worst < 1e-12, "idempotence deviation {worst:.3e}");
            }
        }
    }

    #[test]
    fn norm_log_accounts_for_scaling() {
        let mut mps = Mps::random(5, 3, 31, false).unwrap();
        mps.tensors[2].mapv_inplace(|z| z * C64::new(3.0, 0.0));
        mps.canonical = None;
        assert_abs_diff_eq!(mps.norm(), 3.0, epsilon = 1e-10);
        let canon = mps.canonicalized(2).unwrap();
        assert_abs_diff_eq!(canon.norm(), 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(canon.norm_log(), 3.0f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn overlap_matches_dense_inner_product() {
        let va = random_statevector(41, 6);
        let vb = random_statevector(42, 6);
        let (a, _) = Mps::from_statevector(&va, None, 0.0).unwrap();
        let (b, _) = Mps::from_statevector(&vb, None, 0.0).unwrap();
        let got = a.overlap(&b).unwrap();
        let expect = dense_overlap(&va, &vb);
        assert!((got - expect).norm() < 1e-10);
        // orthogonal basis states
        let z = Mps::basis_state(&[0, 0, 1]).unwrap();
        let o = Mps::basis_state(&[0, 1, 1]).unwrap();
        assert!(z.overlap(&o).unwrap().norm() < 1e-14);
    }

    #[test]
    fn truncation_discards_exactly_the_tail_weight() {
        // two 2-qubit blocks sharing a single entangled cut with spectrum
        // sqrt(p); chi_max = 2 must discard exactly p[2] + p[3]
        let p = [0.7f64, 0.2, 0.08, 0.02];
        let mut v = vec![C64::new(0.0, 0.0); 16];
        for (k, pk) in p.iter().enumerate() {
            v[k * 4 + k] = C64::new(pk.sqrt(), 0.0); // |k>_A |k>_B
        }
        let (mps, d0) = Mps::from_statevector(&v, None, 0.0).unwrap();
        assert!(d0.abs() < 1e-14);
        let (trunc, discarded) = mps.truncate(Some(2), 0.0).unwrap();
        assert_abs_diff_eq!(discarded, 0.10, epsilon = 1e-12);
        assert_abs_diff_eq!(mps.fidelity(&trunc).unwrap(), 0.90, epsilon = 1e-10);
        assert!(trunc.max_bond_dim() <= 2);
    }

    #[test]
    fn truncation_fidelity_identity_on_random_states() {
        for (seed, chi) in [(51u64, 2usize), (52, 3), (53, 4)] {
            let mps = Mps::random(8, 10, seed, false).unwrap();
            let (trunc, discarded) = mps.truncate(Some(chi), 0.0).unwrap();
            let f = mps.fidelity(&trunc).unwrap();
            assert!(
                (f - (1.0 - discarded)).abs() < 1e-9,
                "seed {seed} chi {chi}: fidelity {f} vs 1 - discarded {}",
                1.0 - discarded
            );
            assert!(trunc.max_bond_dim() <= chi);
            assert_abs_diff_eq!(trunc.norm(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn mirrored_reverses_amplitudes_and_preserves_overlaps() {
        let a = Mps::random(5, 4, 71, false).unwrap();
        let b = Mps::random(5, 3, 72, false).unwrap();

        // Mirroring twice is the identity.
        let round_trip = a.mirrored().mirrored();
        assert!((a.fidelity(&round_trip).unwrap() - 1.0).abs() < 1e-12);

        // <mirror(a)|mirror(b)> = <a|b> (transposition carries no conjugation).
        let lhs = a.mirrored().overlap(&b.mirrored()).unwrap();
        let rhs = a.overlap(&b).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);

        // Amplitude of bit string s in the mirror equals the reversed string in
        // the original.
        let v = a.to_statevector().unwrap();
        let vm = a.mirrored().to_statevector().unwrap();
        let n = 5usize;
        for s in 0..(1usize << n) {
            let mut rev = 0usize;
            for q in 0..n {
                if s >> (n - 1 - q) & 1 == 1 {
                    rev |= 1 << q;
                }
            }
            assert!((v[s] - vm[rev]).norm() < 1e-12, "bit string {s}");
        }

        // Canonical bookkeeping follows the site relabelling.
        let c = a.canonicalized(1).unwrap();
        let cm = c.mirrored();
        assert_eq!(cm.canonical, Some(3));
        assert!(cm.canonical_defect() < 1e-12);
    }

    #[test]
    fn truncation_with_no_limits_is_identity() {
        let mps = Mps::random(6, 4, 61, false).unwrap();
        let (same, discarded) = mps.truncate(None, 0.0).unwrap();
        assert!(discarded.abs() < 1e-14);
        assert!((mps.fidelity(&same).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_k_fidelity_agrees_with_overlap_route() {
        let mps = Mps::random(8, 8, 71, false).unwrap();
        for k in [1usize, 2, 4] {
            let f = mps.chi_k_fidelity(k).unwrap();
            let (trunc, _) = mps.truncate(Some(k), 0.0).unwrap();
            let f_direct = mps.fidelity(&trunc).unwrap();
            assert!(
                (f - f_direct).abs() < 1e-10,
                "k = {k}: sweep {f} vs overlap {f_direct}"
            );
        }
        // GHZ is exactly bond dimension 2
        let ghz = Mps::ghz(6).unwrap();
        assert_abs_diff_eq!(ghz.chi_k_fidelity(2).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ghz.chi_k_fidelity(1).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn random_states_are_deterministic_in_the_seed() {
        let a = Mps::random(6, 4, 77, false).unwrap();
        let b = Mps::random(6, 4, 77, false).unwrap();
        for (x, y) in a.tensors.iter().zip(&b.tensors) {
            assert_eq!(x, y);
        }
        let c = Mps::random(6, 4, 78, false).unwrap();
        assert!((a.fidelity(&c).unwrap() - 1.0).abs() > 1e-6);
        // real-valued request stays real
        let r = Mps::random(5, 3, 79, true).unwrap();
        let v = r.to_statevector().unwrap();
        for z in v {
            assert!(z.im.abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prop_spectra_normalised_and_truncation_consistent(
            n in 3usize..7,
            chi in 2usize..5,
            seed in 0u64..1000,
        ) {
            let mps = Mps::random(n, chi, seed, false).unwrap();
            let spectra = mps.schmidt_spectra().unwrap();
            for b in 0..n - 1 {
                prop_assert!((spectra.sq_sum(b) - 1.0).abs() < 1e-10);
                let sp = spectra.bond(b);
                for w in sp.windows(2) {
                    prop_assert!(w[0] >= w[1] - 1e-12);
                }
                prop_assert!(sp.iter().all(|&l| l >= -1e-15));
            }
            let (trunc, discarded) = mps.truncate(Some(2), 0.0).unwrap();
            let f = mps.fidelity(&trunc).unwrap();
            prop_assert!((f - (1.0 - discarded)).abs() < 1e-9);
        }

        #[test]
        fn prop_canonical_forms_preserve_fidelity(
            n in 2usize..7,
            seed in 0u64..1000,
        ) {
            let mps = Mps::random(n, 3, seed, false).unwrap();
            for centre in [0, n - 1] {
                let canon = mps.canonicalized(centre).unwrap();
                prop_assert!(canon.canonical_defect() < 1e-11);
                prop_assert!((mps.fidelity(&canon).unwrap() - 1.0).abs() < 1e-11);
            }
        }
    }
}
