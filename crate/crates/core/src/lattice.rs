//! Lattice quantisation and modulo arithmetic for the feedback link.
//!
//! Two concrete lattices are supported: the scaled cubic lattice `s Z^n`
//! and the scaled Gosset lattice `s E8`. Both carry exact nearest-neighbour
//! quantisers with deterministic tie-breaking, so the Voronoi cell `V0` is
//! the set `{x : quantize(x) = 0}` with boundary points assigned to exactly
//! one cell.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channels::{stream, StreamLabel};
use crate::dd::Dd;
use crate::error::{usage, Error, Result};
use crate::par::{map_range, Execution};
use crate::stats::ProportionEstimate;

/// Normalised second moment G(E8) = 929/12960.
pub const E8_NORMALIZED_SECOND_MOMENT: f64 = 929.0 / 12960.0;

/// Normalised second moment of the cubic lattice, 1/12.
pub const CUBIC_NORMALIZED_SECOND_MOMENT: f64 = 1.0 / 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    #[serde(alias = "scaled_integer", alias = "cubic")]
    Integer,
    #[serde(alias = "scaled_e8")]
    E8,
}

impl std::fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LatticeKind::Integer => f.write_str("integer"),
            LatticeKind::E8 => f.write_str("e8"),
        }
    }
}

impl std::str::FromStr for LatticeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "integer" | "scaled_integer" | "cubic" | "z" => Ok(LatticeKind::Integer),
            "e8" | "scaled_e8" => Ok(LatticeKind::E8),
            other => usage(format!("unknown lattice kind `{other}` (expected integer or e8)")),
        }
    }
}

/// A scaled copy of a base lattice, `scale * G * Z^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    kind: LatticeKind,
    dim: usize,
    scale: f64,
}

impl Lattice {
    pub fn new(kind: LatticeKind, dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 {
            return usage("lattice dimension must be positive");
        }
        if kind == LatticeKind::E8 && dim != 8 {
            return usage(format!("E8 lattice has dimension 8, got {dim}"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return usage(format!("lattice scale must be finite and positive, got {scale}"));
        }
        Ok(Self { kind, dim, scale })
    }

    pub fn integer(dim: usize, scale: f64) -> Result<Self> {
        Self::new(LatticeKind::Integer, dim, scale)
    }

    pub fn e8(scale: f64) -> Result<Self> {
        Self::new(LatticeKind::E8, 8, scale)
    }

    /// Lattice of the given kind whose second moment equals `target`.
    pub fn scale_to_power(kind: LatticeKind, dim: usize, target: f64) -> Result<Self> {
        if !(target.is_finite() && target > 0.0) {
            return usage(format!("target second moment must be positive, got {target}"));
        }
        // sigma^2 = G * s^2 for both kinds (unit base volume)
        let g = match kind {
            LatticeKind::Integer => CUBIC_NORMALIZED_SECOND_MOMENT,
            LatticeKind::E8 => E8_NORMALIZED_SECOND_MOMENT,
        };
        Self::new(kind, dim, (target / g).sqrt())
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Cell volume |det G|. Both base lattices have unit volume.
    pub fn volume(&self) -> f64 {
        self.scale.powi(self.dim as i32)
    }

    pub fn normalized_second_moment(&self) -> f64 {
        match self.kind {
            LatticeKind::Integer => CUBIC_NORMALIZED_SECOND_MOMENT,
            LatticeKind::E8 => E8_NORMALIZED_SECOND_MOMENT,
        }
    }

    /// Per-dimension second moment of a uniform point in `V0`.
    pub fn second_moment(&self) -> f64 {
        self.normalized_second_moment() * self.volume().powf(2.0 / self.dim as f64)
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return usage(format!(
                "vector of length {len} does not match lattice dimension {}",
                self.dim
            ));
        }
        Ok(())
    }

    /// Nearest lattice point, written into `out`.
    pub fn quantize_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x.len())?;
        self.check_dim(out.len())?;
        let s = self.scale;
        match self.kind {
            LatticeKind::Integer => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = s * (xi / s).round_ties_even();
                }
            }
            LatticeKind::E8 => {
                let mut y = [0.0; 8];
                for (yi, &xi) in y.iter_mut().zip(x) {
                    *yi = xi / s;
                }
                let c = nearest_e8(&y);
                for (o, ci) in out.iter_mut().zip(c) {
                    *o = s * ci;
                }
            }
        }
        Ok(())
    }

    pub fn quantize(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.quantize_into(x, &mut out)?;
        Ok(out)
    }

    /// In-place `x <- x mod L`.
    pub fn reduce(&self, x: &mut [f64]) -> Result<()> {
        let mut q = [0.0; 8];
        let mut qv;
        let q: &mut [f64] = if self.dim <= 8 {
            &mut q[..self.dim]
        } else {
            qv = vec![0.0; self.dim];
            &mut qv
        };
        self.quantize_into(x, q)?;
        for (xi, qi) in x.iter_mut().zip(q.iter()) {
            *xi -= qi;
        }
        Ok(())
    }

    /// `x - quantize(x)`; the result lies in `V0`.
    pub fn mod_lattice(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = x.to_vec();
        self.reduce(&mut v)?;
        Ok(v)
    }

    /// Modulo of a double-double vector, returned in plain precision.
    ///
    /// A coarse sublattice point (`s Z^n` for the cubic lattice, `2s Z^8`
    /// for E8) is removed in double-double first, which leaves an operand
    /// of order `s` that the ordinary quantiser reduces exactly. Removing a
    /// sublattice point does not change the coset, so the result equals the
    /// exact modulo up to the final rounding.
    pub fn reduce_dd(&self, x: &[Dd], out: &mut [f64]) -> Result<()> {
        self.check_dim(x.len())?;
        self.check_dim(out.len())?;
        let coarse = match self.kind {
            LatticeKind::Integer => self.scale,
            LatticeKind::E8 => 2.0 * self.scale,
        };
        for (o, &xi) in out.iter_mut().zip(x) {
            let k = (xi.hi / coarse).round_ties_even();
            *o = (xi - Dd::product(k, coarse)).to_f64();
        }
        self.reduce(out)
    }

    /// Whether `x` lies in the fundamental cell (quantises to the origin).
    pub fn in_cell(&self, x: &[f64]) -> Result<bool> {
        let q = self.quantize(x)?;
        Ok(q.iter().all(|&v| v == 0.0))
    }

    /// Uniform sample on `V0`, written into `out`.
    ///
    /// A uniform point on a fundamental domain of any sublattice, reduced
    /// modulo the lattice, is uniform on `V0`. The cubic lattice samples its
    /// own cell directly; E8 samples the cube `[-s, s)^8`, a fundamental
    /// domain of `2s Z^8`, and reduces once (no rejection).
    pub fn sample_dither_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        assert_eq!(out.len(), self.dim, "dither buffer length");
        match self.kind {
            LatticeKind::Integer => {
                for o in out.iter_mut() {
                    let u: f64 = rng.random();
                    *o = self.scale * (u - 0.5);
                }
            }
            LatticeKind::E8 => {
                for o in out.iter_mut() {
                    let u: f64 = rng.random();
                    *o = self.scale * (2.0 * u - 1.0);
                }
                self.reduce(out).expect("dimension checked");
            }
        }
    }

    pub fn sample_dither<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.sample_dither_into(rng, &mut v);
        v
    }
}

// ---------------------------------------------------------------------------
// E8 nearest-point search (unit scale, E8 = D8 u (D8 + 1/2)).

fn nearest_d8(y: &[f64; 8]) -> [f64; 8] {
    let mut f = [0.0; 8];
    let mut sum = 0.0;
    let mut worst = 0;
    let mut worst_err = -1.0;
    for i in 0..8 {
        f[i] = y[i].round_ties_even();
        sum += f[i];
        let err = (y[i] - f[i]).abs();
        if err > worst_err {
            worst_err = err;
            worst = i;
        }
    }
    if sum.rem_euclid(2.0) != 0.0 {
        // re-round the least reliable coordinate the other way
        f[worst] += if y[worst] > f[worst] { 1.0 } else { -1.0 };
    }
    f
}

fn dist_sq(y: &[f64; 8], c: &[f64; 8]) -> f64 {
    y.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn lex_less(a: &[f64; 8], b: &[f64; 8]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// The 240 minimal vectors of E8; they are also its Voronoi-relevant vectors.
fn e8_roots() -> &'static [[f64; 8]] {
    static ROOTS: OnceLock<Vec<[f64; 8]>> = OnceLock::new();
    ROOTS.get_or_init(|| {
        let mut roots = Vec::with_capacity(240);
        for i in 0..8 {
            for j in (i + 1)..8 {
                for si in [-1.0, 1.0] {
                    for sj in [-1.0, 1.0] {
                        let mut r = [0.0; 8];
                        r[i] = si;
                        r[j] = sj;
                        roots.push(r);
                    }
                }
            }
        }
        for mask in 0u32..256 {
            if mask.count_ones() % 2 == 0 {
                let mut r = [0.5; 8];
                for (k, rk) in r.iter_mut().enumerate() {
                    if mask & (1 << k) != 0 {
                        *rk = -0.5;
                    }
                }
                roots.push(r);
            }
        }
        roots
    })
}

/// Largest inner product of `e` with an E8 root, in O(8).
fn max_root_projection(e: &[f64; 8]) -> f64 {
    let mut abs = [0.0; 8];
    let mut neg = 0;
    for i in 0..8 {
        abs[i] = e[i].abs();
        if e[i] < 0.0 {
            neg += 1;
        }
    }
    abs.sort_by(|a, b| b.total_cmp(a));
    let pair = abs[0] + abs[1];
    let total: f64 = abs.iter().sum();
    let half = if neg % 2 == 0 {
        0.5 * total
    } else {
        0.5 * (total - 2.0 * abs[7])
    };
    pair.max(half)
}

/// Nearest E8 point to `y`; exact ties go to the lexicographically smallest.
pub(crate) fn nearest_e8(y: &[f64; 8]) -> [f64; 8] {
    let a = nearest_d8(y);
    let mut shifted = [0.0; 8];
    for i in 0..8 {
        shifted[i] = y[i] - 0.5;
    }
    let mut b = nearest_d8(&shifted);
    for bi in b.iter_mut() {
        *bi += 0.5;
    }
    let (da, db) = (dist_sq(y, &a), dist_sq(y, &b));
    let mut best = if da < db || (da == db && lex_less(&a, &b)) {
        a
    } else {
        b
    };

    let mut e = [0.0; 8];
    for i in 0..8 {
        e[i] = y[i] - best[i];
    }
    // A competing nearest point exists iff y sits on a Voronoi facet, i.e.
    // <y - c, r> = |r|^2 / 2 = 1 for some root r. Screen cheaply, then search.
    if max_root_projection(&e) >= 1.0 - 1e-9 {
        best = resolve_tie(y, best);
    }
    best
}

/// Breadth-first walk over root neighbours at the minimum distance, keeping
/// the lexicographically smallest point of the tie set.
fn resolve_tie(y: &[f64; 8], start: [f64; 8]) -> [f64; 8] {
    let roots = e8_roots();
    let mut dmin = dist_sq(y, &start);
    let mut ties = vec![start];
    let mut head = 0;
    while head < ties.len() {
        let p = ties[head];
        head += 1;
        for r in roots {
            let mut q = [0.0; 8];
            for i in 0..8 {
                q[i] = p[i] + r[i];
            }
            let dq = dist_sq(y, &q);
            if dq < dmin {
                dmin = dq;
                ties.clear();
                ties.push(q);
                head = 0;
                break;
            } else if dq == dmin && !ties.contains(&q) {
                ties.push(q);
            }
        }
    }
    let mut best = ties[0];
    for t in &ties[1..] {
        if lex_less(t, &best) {
            best = *t;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Volume-to-noise ratio and the aliasing exponent.

/// Poltyrev exponent of the unconstrained Gaussian channel; zero for `x <= 1`.
pub fn poltyrev_exponent(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return usage(format!("exponent argument must be positive and finite, got {x}"));
    }
    Ok(if x <= 1.0 {
        0.0
    } else if x <= 2.0 {
        0.5 * (x - 1.0 - x.ln())
    } else if x <= 4.0 {
        0.5 * (x.ln() + (std::f64::consts::E / 4.0).ln())
    } else {
        x / 8.0
    })
}

/// `exp(-dim * Ep(vnr))`, the exponential-order bound on the aliasing probability.
pub fn aliasing_bound(dim: usize, vnr: f64) -> Result<f64> {
    if dim == 0 {
        return usage("lattice dimension must be positive");
    }
    Ok((-(dim as f64) * poltyrev_exponent(vnr)?).exp())
}

/// Volume-to-noise ratio together with the exponent and bound it implies.
///
/// The operative ratio is `L = sigma^2(Lattice) / sigma^2(noise)`; it differs
/// from the volume-based ratio `V^(2/n) / sigma^2` by the factor G(Lattice).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VnrReport {
    pub vnr: f64,
    pub exponent: f64,
    pub bound: f64,
}

impl VnrReport {
    pub fn new(dim: usize, vnr: f64) -> Result<Self> {
        Ok(Self {
            vnr,
            exponent: poltyrev_exponent(vnr)?,
            bound: aliasing_bound(dim, vnr)?,
        })
    }

    pub fn for_lattice(lattice: &Lattice, noise_variance: f64) -> Result<Self> {
        Self::new(lattice.dim(), lattice.second_moment() / noise_variance)
    }
}

/// Fraction of i.i.d. Gaussian vectors that leave the fundamental cell.
pub fn estimate_pmod<R: Rng + ?Sized>(
    lattice: &Lattice,
    noise_variance: f64,
    trials: u64,
    rng: &mut R,
) -> ProportionEstimate {
    let sd = noise_variance.max(0.0).sqrt();
    let n = lattice.dim();
    let mut x = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut hits = 0;
    for _ in 0..trials {
        for xi in x.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *xi = sd * g;
        }
        lattice.quantize_into(&x, &mut q).expect("dimension checked");
        if q.iter().any(|&v| v != 0.0) {
            hits += 1;
        }
    }
    ProportionEstimate::new(hits, trials)
}

const PMOD_BATCH: u64 = 20_000;

/// Batched, seed-addressed version of [`estimate_pmod`] for large trial counts.
pub fn estimate_pmod_seeded(
    lattice: &Lattice,
    noise_variance: f64,
    trials: u64,
    seed: u64,
    exec: Execution,
) -> ProportionEstimate {
    let batches = trials.div_ceil(PMOD_BATCH);
    map_range(exec, 0..batches, |b| {
        let mut rng = stream(seed, b, StreamLabel::ForwardNoise);
        let n = PMOD_BATCH.min(trials - b * PMOD_BATCH);
        estimate_pmod(lattice, noise_variance, n, &mut rng)
    })
    .into_iter()
    .fold(ProportionEstimate::default(), ProportionEstimate::merge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::stream;
    use crate::stats::{gaussian_q, ks_two_sample};
    use proptest::prelude::*;
    use rand::Rng;

    /// Exhaustive oracle: all E8 points with coordinates in a small box
    /// around `y`, nearest by brute force, lexicographic on exact ties.
    fn brute_force_e8(y: &[f64; 8]) -> [f64; 8] {
        let mut best: Option<([f64; 8], f64)> = None;
        let centre: Vec<i64> = y.iter().map(|v| v.round() as i64).collect();
        for half in [false, true] {
            let off = if half { 0.5 } else { 0.0 };
            for code in 0..5i64.pow(8) {
                let mut c = [0.0; 8];
                let mut k = code;
                let mut sum = 0i64;
                for i in 0..8 {
                    let d = k % 5 - 2;
                    k /= 5;
                    let v = centre[i] + d;
                    sum += v;
                    c[i] = v as f64 + off;
                }
                // D8 + half-vector: the integer part must have even sum in both cosets
                // when expressed as integer offsets (z + 1/2 with sum z even)
                if sum.rem_euclid(2) != 0 {
                    continue;
                }
                let d = dist_sq(y, &c);
                match best {
                    None => best = Some((c, d)),
                    Some((b, bd)) => {
                        if d < bd || (d == bd && lex_less(&c, &b)) {
                            best = Some((c, d));
                        }
                    }
                }
            }
        }
        best.unwrap().0
    }

    #[test]
    fn e8_fast_decoder_matches_exhaustive_search() {
        let mut rng = stream(99, 0, StreamLabel::ForwardNoise);
        for _ in 0..60 {
            let mut y = [0.0; 8];
            for v in y.iter_mut() {
                *v = 3.0 * (rng.random::<f64>() - 0.5);
            }
            assert_eq!(nearest_e8(&y), brute_force_e8(&y), "y = {y:?}");
        }
    }

    #[test]
    fn e8_reference_point_from_exhaustive_oracle() {
        let y = [0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let oracle = brute_force_e8(&y);
        // frozen from the oracle: the origin is nearer than any root
        assert_eq!(oracle, [0.0; 8]);
        let l = Lattice::e8(1.0).unwrap();
        assert_eq!(l.quantize(&y).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn e8_ties_resolve_lexicographically() {
        // midpoint between 0 and the root (1,1,0,...): both at distance 1/2
        let y = [0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(nearest_e8(&y), brute_force_e8(&y));
        assert_eq!(nearest_e8(&y), [0.0; 8]);
        // midpoint between 0 and (-1,-1,0,...): the negative root wins
        let y = [-0.5, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(nearest_e8(&y), [-1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(nearest_e8(&y), brute_force_e8(&y));
        // deep hole (1,0,...,0) is equidistant from 16 lattice points
        let y = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(nearest_e8(&y), brute_force_e8(&y));
    }

    #[test]
    fn integer_quantizer_examples() {
        let l = Lattice::integer(1, 4.0).unwrap();
        assert_eq!(l.quantize(&[5.0]).unwrap(), vec![4.0]);
        assert_eq!(l.mod_lattice(&[5.0]).unwrap(), vec![1.0]);
        // -2/4 = -0.5 rounds half to even (0): the boundary point stays in V0
        assert_eq!(l.quantize(&[-2.0]).unwrap(), vec![0.0]);
        assert_eq!(l.mod_lattice(&[-2.0]).unwrap(), vec![-2.0]);
        // 6/4 = 1.5 rounds to 2
        assert_eq!(l.mod_lattice(&[6.0]).unwrap(), vec![-2.0]);
        assert_eq!(l.quantize(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let l = Lattice::e8(1.0).unwrap();
        assert!(matches!(l.quantize(&[1.0, 2.0]), Err(Error::Usage(_))));
        assert!(Lattice::new(LatticeKind::E8, 4, 1.0).is_err());
        assert!(Lattice::integer(0, 1.0).is_err());
    }

    #[test]
    fn second_moment_and_scaling() {
        let l = Lattice::integer(1, 1.0).unwrap();
        assert!((l.second_moment() - 1.0 / 12.0).abs() < 1e-15);
        let l = Lattice::integer(3, (1200.0f64).sqrt()).unwrap();
        assert!((l.second_moment() - 100.0).abs() < 1e-12);
        let l = Lattice::scale_to_power(LatticeKind::Integer, 1, 100.0).unwrap();
        assert!((l.scale() - 34.641_016_151_377_55).abs() < 1e-9);
        let l = Lattice::scale_to_power(LatticeKind::Integer, 1, 1.0 / 12.0).unwrap();
        assert!((l.scale() - 1.0).abs() < 1e-15);
        for kind in [LatticeKind::Integer, LatticeKind::E8] {
            for target in [1e-3, 0.5, 100.0, 7.5e4] {
                let l = Lattice::scale_to_power(kind, 8, target).unwrap();
                assert!((l.second_moment() / target - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn e8_second_moment_matches_dither_monte_carlo() {
        let l = Lattice::e8(1.0).unwrap();
        let mut rng = stream(5, 0, StreamLabel::Dither);
        let n = 1_000_000;
        let mut acc = 0.0;
        let mut v = vec![0.0; 8];
        for _ in 0..n {
            l.sample_dither_into(&mut rng, &mut v);
            acc += v.iter().map(|x| x * x).sum::<f64>();
        }
        let est = acc / (8.0 * n as f64);
        assert!((est / l.second_moment() - 1.0).abs() < 0.005, "{est}");
    }

    #[test]
    fn dithers_lie_in_cell_and_match_moments() {
        for l in [Lattice::integer(1, 3.0).unwrap(), Lattice::e8(2.0).unwrap()] {
            let mut rng = stream(8, 1, StreamLabel::Dither);
            let n = 1_000_000 / l.dim();
            let mut sum = vec![0.0; l.dim()];
            let mut sq = 0.0;
            for k in 0..n {
                let v = l.sample_dither(&mut rng);
                if k < 20_000 {
                    assert!(l.in_cell(&v).unwrap());
                }
                for (s, x) in sum.iter_mut().zip(&v) {
                    *s += x;
                }
                sq += v.iter().map(|x| x * x).sum::<f64>();
            }
            let sm = l.second_moment();
            let est = sq / (n * l.dim()) as f64;
            assert!((est / sm - 1.0).abs() < 0.01, "{:?}: {est} vs {sm}", l.kind());
            let se = (sm / n as f64).sqrt();
            for s in sum {
                assert!((s / n as f64).abs() < 3.0 * se * 1.5);
            }
        }
    }

    #[test]
    fn poltyrev_exponent_values() {
        assert_eq!(poltyrev_exponent(1.0).unwrap(), 0.0);
        assert_eq!(poltyrev_exponent(0.3).unwrap(), 0.0);
        assert!((poltyrev_exponent(8.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(poltyrev_exponent(0.0).is_err());
        assert!(poltyrev_exponent(-1.0).is_err());
        // knots: both branch formulas agree
        let b1 = |x: f64| 0.5 * (x - 1.0 - x.ln());
        let b2 = |x: f64| 0.5 * (x.ln() + (std::f64::consts::E / 4.0).ln());
        let b3 = |x: f64| x / 8.0;
        assert!((b1(2.0) - b2(2.0)).abs() < 1e-12);
        assert!((b1(2.0) - 0.153_426_409_720_027_3).abs() < 1e-12);
        assert!((b2(4.0) - b3(4.0)).abs() < 1e-12);
        assert!((poltyrev_exponent(4.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn aliasing_bound_examples() {
        assert_eq!(aliasing_bound(8, 1.0).unwrap(), 1.0);
        assert!((aliasing_bound(8, 8.0).unwrap() - 3.354_626_279_025_119e-4).abs() < 1e-15);
        for l in [1.1, 2.0, 3.5, 10.0] {
            let mut prev = 1.0;
            for n in 1..30 {
                let b = aliasing_bound(n, l).unwrap();
                assert!(b <= prev && b > 0.0);
                prev = b;
            }
        }
        let r = VnrReport::new(8, 0.5).unwrap();
        assert_eq!((r.exponent, r.bound), (0.0, 1.0));
    }

    #[test]
    fn scalar_pmod_matches_closed_form() {
        let l = Lattice::integer(1, 4.0).unwrap();
        let sigma = 1.1;
        let est = estimate_pmod_seeded(&l, sigma * sigma, 1_000_000, 3, Execution::Parallel);
        let p0 = 2.0 * gaussian_q(4.0 / (2.0 * sigma));
        assert!(
            (est.p() - p0).abs() < 3.0 * est.stderr_at(p0),
            "{} vs {p0}",
            est.p()
        );
        let tiny = estimate_pmod_seeded(&l, 1e-6, 10_000, 3, Execution::Sequential);
        assert_eq!(tiny.hits, 0);
    }

    #[test]
    fn e8_aliases_less_than_cubic_at_equal_power() {
        let noise = 1.0;
        let e8 = Lattice::scale_to_power(LatticeKind::E8, 8, 2.0).unwrap();
        let z8 = Lattice::scale_to_power(LatticeKind::Integer, 8, 2.0).unwrap();
        let pe = estimate_pmod_seeded(&e8, noise, 1_000_000, 4, Execution::Parallel);
        let pz = estimate_pmod_seeded(&z8, noise, 1_000_000, 4, Execution::Parallel);
        assert!(pe.p() < pz.p(), "{} vs {}", pe.p(), pz.p());
    }

    #[test]
    fn dithered_modulo_is_uniform_whatever_the_offset() {
        let l = Lattice::integer(1, 2.5).unwrap();
        let mut rng = stream(12, 0, StreamLabel::Dither);
        let t = 17.3;
        let n = 100_000;
        let a: Vec<f64> = (0..n)
            .map(|_| l.mod_lattice(&[t + l.sample_dither(&mut rng)[0]]).unwrap()[0])
            .collect();
        let b: Vec<f64> = (0..n).map(|_| l.sample_dither(&mut rng)[0]).collect();
        let (_, p) = ks_two_sample(&a, &b);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn reduce_dd_handles_huge_operands() {
        for l in [Lattice::integer(8, 3.7).unwrap(), Lattice::e8(3.7).unwrap()] {
            let small = [0.3, -1.1, 0.7, 0.05, -0.4, 1.2, 0.0, -0.9];
            // add a far-away lattice point plus a huge-but-exact offset
            let x: Vec<Dd> = small
                .iter()
                .enumerate()
                .map(|(i, &s)| Dd::product(2.0 * 3.7, 1.0e11 + i as f64) + s)
                .collect();
            let mut out = vec![0.0; 8];
            l.reduce_dd(&x, &mut out).unwrap();
            let direct = l.mod_lattice(&small).unwrap();
            for (a, b) in out.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    fn lattices() -> impl Strategy<Value = Lattice> {
        prop_oneof![
            (1usize..6, 0.1f64..20.0).prop_map(|(n, s)| Lattice::integer(n, s).unwrap()),
            (0.1f64..20.0).prop_map(|s| Lattice::e8(s).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn modulo_laws(l in lattices(), seed in any::<u64>()) {
            let mut rng = stream(seed, 0, StreamLabel::ForwardNoise);
            let s = l.scale();
            let x: Vec<f64> = (0..l.dim()).map(|_| 10.0 * s * rng.sample::<f64, _>(StandardNormal)).collect();
            let y: Vec<f64> = (0..l.dim()).map(|_| 10.0 * s * rng.sample::<f64, _>(StandardNormal)).collect();
            let mx = l.mod_lattice(&x).unwrap();
            prop_assert!(l.in_cell(&mx).unwrap());
            let mmx = l.mod_lattice(&mx).unwrap();
            for (a, b) in mx.iter().zip(&mmx) {
                prop_assert!((a - b).abs() <= 1e-12 * s);
            }
            let lhs: Vec<f64> = mx.iter().zip(&y).map(|(a, b)| a + b).collect();
            let rhs: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let lhs = l.mod_lattice(&lhs).unwrap();
            let rhs = l.mod_lattice(&rhs).unwrap();
            for (a, b) in lhs.iter().zip(&rhs) {
                prop_assert!((a - b).abs() <= 1e-9 * s);
            }
        }

        #[test]
        fn exponent_positive_above_one(x in 1.0001f64..100.0) {
            prop_assert!(poltyrev_exponent(x).unwrap() > 0.0);
        }
    }
}
