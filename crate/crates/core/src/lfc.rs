//! Linear feedback coding over the two-user broadcast channel.
//!
//! A scheme transmits, at round `n`,
//!
//! ```text
//! X_n = c_n(θ1, θ2) - a_{1,n}·Y_1^{n-1} - a_{2,n}·Y_2^{n-1}      (output form)
//!     = cbar_n(θ1, θ2) - abar_{1,n}·Z_1^{n-1} - abar_{2,n}·Z_2^{n-1}   (noise form)
//! ```
//!
//! Codebook elements are affine in the two message points, so both forms are
//! stored as coefficient pairs. All coefficients are double-double; see
//! [`crate::dd`] for why.

use rand::Rng;
use serde::Serialize;

use crate::channels::{BcParams, Cov2};
use crate::dd::{dot, dot_dd, Dd};
use crate::error::{usage, Error, Result};

/// `M` equispaced zero-mean points with unit second moment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PamConstellation {
    m: u64,
}

/// Largest constellation whose point indices are exact in `f64`.
pub const MAX_PAM_POINTS: u64 = 1 << 52;

impl PamConstellation {
    pub fn new(m: u64) -> Result<Self> {
        if m == 0 || m > MAX_PAM_POINTS {
            return usage(format!("constellation size must lie in [1, 2^52], got {m}"));
        }
        Ok(Self { m })
    }

    /// Largest constellation carrying at most `bits` bits.
    pub fn for_bits(bits: f64) -> Result<Self> {
        if !(bits >= 0.0) {
            return usage(format!("message size in bits must be >= 0, got {bits}"));
        }
        let m = bits.exp2().floor();
        if m > MAX_PAM_POINTS as f64 {
            return usage(format!("{bits} bits exceeds the 2^52-point constellation limit"));
        }
        Self::new((m as u64).max(1))
    }

    pub fn size(&self) -> u64 {
        self.m
    }

    pub fn bits(&self) -> f64 {
        (self.m as f64).log2()
    }

    /// Spacing between neighbouring points, `sqrt(12 / (M^2 - 1))`.
    pub fn min_distance(&self) -> f64 {
        if self.m == 1 {
            return f64::INFINITY;
        }
        let m = self.m as f64;
        (12.0 / (m * m - 1.0)).sqrt()
    }

    pub fn point(&self, k: u64) -> f64 {
        debug_assert!(k < self.m);
        if self.m == 1 {
            return 0.0;
        }
        (2.0 * k as f64 - (self.m - 1) as f64) * 0.5 * self.min_distance()
    }

    /// Index of the nearest point.
    pub fn slice(&self, x: f64) -> u64 {
        if self.m == 1 || x.is_nan() {
            return 0;
        }
        let half = 0.5 * (self.m - 1) as f64;
        let k = (x / self.min_distance() + half).round();
        k.clamp(0.0, (self.m - 1) as f64) as u64
    }

    /// Exact second moment of a uniformly drawn point.
    pub fn second_moment(&self) -> f64 {
        if self.m == 1 {
            0.0
        } else {
            1.0
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.random_range(0..self.m)
    }
}

/// Noise-form coefficients, `cbar_n` and `abar_{i,n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseForm {
    pub codebook: Vec<[Dd; 2]>,
    pub feedback: [Vec<Vec<Dd>>; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct LfcScheme {
    codebook: Vec<[Dd; 2]>,
    feedback: [Vec<Vec<Dd>>; 2],
    decoders: [Vec<Dd>; 2],
    constellations: [PamConstellation; 2],
    noise_form: Option<NoiseForm>,
    constant_power: Option<f64>,
}

/// Power of one round split into message and feedback parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerSplit {
    /// Round index, 1-based.
    pub n: usize,
    pub codebook_power: f64,
    pub feedback_power: f64,
    pub eta: f64,
}

impl PowerSplit {
    pub fn total(&self) -> f64 {
        self.codebook_power + self.feedback_power
    }
}

fn quad(cov: &Cov2, a: f64, b: f64) -> f64 {
    a * a * cov[0][0] + 2.0 * a * b * cov[0][1] + b * b * cov[1][1]
}

impl LfcScheme {
    /// Output-form scheme. `codebook[n]` holds the coefficients of
    /// `(θ1, θ2)` in `c_n`, `feedback[i][n]` has length `n` (rounds are
    /// 0-based here), and `decoders[i]` is the linear estimator row
    /// `θ̂_i = d_i · Y_i` over the full horizon.
    pub fn new(
        codebook: Vec<[Dd; 2]>,
        feedback: [Vec<Vec<Dd>>; 2],
        decoders: [Vec<Dd>; 2],
        constellations: [PamConstellation; 2],
    ) -> Result<Self> {
        let nc = codebook.len();
        if nc == 0 {
            return usage("scheme horizon must be positive");
        }
        for i in 0..2 {
            if feedback[i].len() != nc || decoders[i].len() != nc {
                return usage(format!("receiver {} rows do not match horizon {nc}", i + 1));
            }
            for (n, row) in feedback[i].iter().enumerate() {
                if row.len() != n {
                    return usage(format!(
                        "feedback row a_{{{},{}}} has length {}, expected {n}",
                        i + 1,
                        n + 1,
                        row.len()
                    ));
                }
            }
        }
        Ok(Self {
            codebook,
            feedback,
            decoders,
            constellations,
            noise_form: None,
            constant_power: None,
        })
    }

    /// Declares the per-round power the scheme was designed for.
    pub fn with_constant_power(mut self, power: f64) -> Self {
        self.constant_power = Some(power);
        self
    }

    pub fn horizon(&self) -> usize {
        self.codebook.len()
    }

    pub fn constant_power(&self) -> Option<f64> {
        self.constant_power
    }

    pub fn constellation(&self, i: usize) -> &PamConstellation {
        &self.constellations[i]
    }

    pub fn codebook_coefficients(&self, n: usize) -> [Dd; 2] {
        self.codebook[n]
    }

    pub fn feedback_row(&self, i: usize, n: usize) -> &[Dd] {
        &self.feedback[i][n]
    }

    pub fn decoder_row(&self, i: usize) -> &[Dd] {
        &self.decoders[i]
    }

    pub fn noise_form(&self) -> Option<&NoiseForm> {
        self.noise_form.as_ref()
    }

    fn require_noise_form(&self) -> Result<&NoiseForm> {
        self.noise_form
            .as_ref()
            .ok_or_else(|| Error::Precondition("noise form not computed; call to_noise_form".into()))
    }

    /// Message point of message index `w` for receiver `i`.
    pub fn theta(&self, i: usize, w: u64) -> f64 {
        self.constellations[i].point(w)
    }

    /// `c_n(θ1, θ2)`.
    pub fn codeword(&self, n: usize, theta: [f64; 2]) -> Dd {
        let k = self.codebook[n];
        k[0].mul_f64(theta[0]) + k[1].mul_f64(theta[1])
    }

    /// `cbar_n(θ1, θ2)`; requires the noise form.
    pub fn noise_codeword(&self, n: usize, theta: [f64; 2]) -> Result<Dd> {
        let k = self.require_noise_form()?.codebook[n];
        Ok(k[0].mul_f64(theta[0]) + k[1].mul_f64(theta[1]))
    }

    /// Output-form feedback element `eps_{i,n} = a_{i,n} · Y_i^{n-1}`.
    pub fn feedback_element(&self, i: usize, n: usize, y: &[f64]) -> Dd {
        dot(&self.feedback[i][n], &y[..n])
    }

    /// Receiver `i`'s linear estimate of its message point after `rounds` outputs.
    pub fn estimate(&self, i: usize, y: &[f64], rounds: usize) -> Dd {
        dot(&self.decoders[i][..rounds], &y[..rounds])
    }

    pub fn decode(&self, i: usize, y: &[f64]) -> u64 {
        let est = self.estimate(i, y, self.horizon());
        self.constellations[i].slice(est.to_f64())
    }

    /// Fills `cbar_n` and `abar_{i,n}` by forward substitution of
    /// `Y_i = X + Z_i`, tracking each `X_n` as an affine function of the
    /// message points plus a linear function of past noises.
    pub fn to_noise_form(mut self) -> Self {
        let nc = self.horizon();
        // theta coefficients of X_n, and noise coefficients b[n][j][m] of Z_{j,m}
        let mut u: Vec<[Dd; 2]> = Vec::with_capacity(nc);
        let mut b: Vec<[Vec<Dd>; 2]> = Vec::with_capacity(nc);
        for n in 0..nc {
            let mut un = self.codebook[n];
            let mut bn = [vec![Dd::ZERO; n], vec![Dd::ZERO; n]];
            for i in 0..2 {
                let row = &self.feedback[i][n];
                for (k, &a) in row.iter().enumerate() {
                    if a == Dd::ZERO {
                        continue;
                    }
                    un[0] -= a * u[k][0];
                    un[1] -= a * u[k][1];
                    // Y_{i,k} contributes its own noise Z_{i,k} ...
                    bn[i][k] -= a;
                    // ... and everything X_k depends on
                    for j in 0..2 {
                        for m in 0..k {
                            bn[j][m] -= a * b[k][j][m];
                        }
                    }
                }
            }
            u.push(un);
            b.push(bn);
        }
        let feedback = [0, 1].map(|j| b.iter().map(|bn| bn[j].iter().map(|&x| -x).collect()).collect());
        self.noise_form = Some(NoiseForm {
            codebook: u,
            feedback,
        });
        self
    }

    /// Analytic per-round power under noise covariance `sigma`, with message
    /// second moments taken from the constellations in use.
    pub fn power_profile(&self, sigma: &Cov2) -> Result<Vec<PowerSplit>> {
        let nf = self.require_noise_form()?;
        let m1 = self.constellations[0].second_moment();
        let m2 = self.constellations[1].second_moment();
        Ok((0..self.horizon())
            .map(|n| {
                let u = nf.codebook[n];
                let (u1, u2) = (u[0].to_f64(), u[1].to_f64());
                let codebook_power = u1 * u1 * m1 + u2 * u2 * m2;
                let feedback_power: f64 = (0..n)
                    .map(|m| {
                        quad(
                            sigma,
                            nf.feedback[0][n][m].to_f64(),
                            nf.feedback[1][n][m].to_f64(),
                        )
                    })
                    .sum();
                let total = codebook_power + feedback_power;
                PowerSplit {
                    n: n + 1,
                    codebook_power,
                    feedback_power,
                    eta: if total > 0.0 { feedback_power / total } else { 0.0 },
                }
            })
            .collect())
    }

    /// Covariance of the estimation errors `(θ̂_{1,n} - θ_1, θ̂_{2,n} - θ_2)`
    /// after every round, when round `n` sees forward noise covariance
    /// `sigmas[n]` and the message points are drawn from the constellations.
    pub fn error_covariances(&self, sigmas: &[Cov2]) -> Result<Vec<Cov2>> {
        let nf = self.require_noise_form()?;
        let nc = self.horizon();
        if sigmas.len() != nc {
            return usage(format!("need {nc} noise covariances, got {}", sigmas.len()));
        }
        let moments = [
            self.constellations[0].second_moment(),
            self.constellations[1].second_moment(),
        ];
        // t[i]: coefficients of e_i on (θ1, θ2); h[i][j][m]: on Z_{j,m}
        let mut t = [[Dd::from(-1.0), Dd::ZERO], [Dd::ZERO, Dd::from(-1.0)]];
        let mut h = [
            [vec![Dd::ZERO; nc], vec![Dd::ZERO; nc]],
            [vec![Dd::ZERO; nc], vec![Dd::ZERO; nc]],
        ];
        let mut out = Vec::with_capacity(nc);
        for n in 0..nc {
            let k = nf.codebook[n];
            for i in 0..2 {
                let d = self.decoders[i][n];
                t[i][0] += d * k[0];
                t[i][1] += d * k[1];
                for j in 0..2 {
                    for m in 0..n {
                        h[i][j][m] -= d * nf.feedback[j][n][m];
                    }
                }
                h[i][i][n] += d;
            }
            let mut cov = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in a..2 {
                    let mut acc = Dd::ZERO;
                    for (tt, mm) in [0, 1].into_iter().zip(moments) {
                        acc += (t[a][tt] * t[b][tt]) * mm;
                    }
                    for (m, s) in sigmas.iter().enumerate().take(n + 1) {
                        for j in 0..2 {
                            for l in 0..2 {
                                acc += (h[a][j][m] * h[b][l][m]) * s[j][l];
                            }
                        }
                    }
                    cov[a][b] = acc.to_f64();
                    cov[b][a] = cov[a][b];
                }
            }
            out.push(cov);
        }
        Ok(out)
    }

    /// Output-form inputs for given message points and noise sequences,
    /// with the channel outputs kept in double-double.
    pub fn trajectory_output_form(&self, theta: [f64; 2], z: [&[f64]; 2]) -> Vec<Dd> {
        let nc = self.horizon();
        let mut y: [Vec<Dd>; 2] = [Vec::with_capacity(nc), Vec::with_capacity(nc)];
        let mut x = Vec::with_capacity(nc);
        for n in 0..nc {
            let mut xn = self.codeword(n, theta);
            for i in 0..2 {
                xn -= dot_dd(&self.feedback[i][n], &y[i]);
            }
            for i in 0..2 {
                y[i].push(xn + z[i][n]);
            }
            x.push(xn);
        }
        x
    }

    /// Noise-form inputs for the same message points and noise sequences.
    pub fn trajectory_noise_form(&self, theta: [f64; 2], z: [&[f64]; 2]) -> Result<Vec<Dd>> {
        let nf = self.require_noise_form()?;
        Ok((0..self.horizon())
            .map(|n| {
                let k = nf.codebook[n];
                let mut xn = k[0].mul_f64(theta[0]) + k[1].mul_f64(theta[1]);
                for i in 0..2 {
                    xn -= dot(&nf.feedback[i][n], &z[i][..n]);
                }
                xn
            })
            .collect())
    }
}

/// Record of one run of a scheme over the broadcast channel.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiselessTranscript {
    pub messages: [u64; 2],
    pub decoded: [u64; 2],
    pub x: Vec<f64>,
    pub y: [Vec<f64>; 2],
    /// `θ̂_{i,n} - θ_i` after each round.
    pub errors: Vec<[f64; 2]>,
}

impl NoiselessTranscript {
    pub fn success(&self) -> bool {
        self.messages == self.decoded
    }
}

/// Runs the output form with explicit noise sequences; Terminal A sees the
/// receivers' outputs exactly.
pub fn simulate_with_noise(scheme: &LfcScheme, messages: [u64; 2], z: [&[f64]; 2]) -> NoiselessTranscript {
    let nc = scheme.horizon();
    let theta = [scheme.theta(0, messages[0]), scheme.theta(1, messages[1])];
    let mut x = Vec::with_capacity(nc);
    let mut y = [Vec::with_capacity(nc), Vec::with_capacity(nc)];
    let mut errors = Vec::with_capacity(nc);
    for n in 0..nc {
        let mut xn = scheme.codeword(n, theta);
        for (i, yi) in y.iter().enumerate() {
            xn -= scheme.feedback_element(i, n, yi);
        }
        let xn = xn.to_f64();
        x.push(xn);
        for i in 0..2 {
            y[i].push(xn + z[i][n]);
        }
        errors.push([0, 1].map(|i| (scheme.estimate(i, &y[i], n + 1) - theta[i]).to_f64()));
    }
    let decoded = [scheme.decode(0, &y[0]), scheme.decode(1, &y[1])];
    NoiselessTranscript {
        messages,
        decoded,
        x,
        y,
        errors,
    }
}

/// Draws a forward noise sequence of length `n` from `bc`.
pub fn sample_noise_sequence<R: Rng + ?Sized>(bc: &BcParams, n: usize, rng: &mut R) -> [Vec<f64>; 2] {
    let mut z = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for _ in 0..n {
        let (a, b) = bc.sample_noise(rng);
        z[0].push(a);
        z[1].push(b);
    }
    z
}

/// Reference system with noiseless feedback: messages drawn from
/// `message_rng`, forward noise from `noise_rng`.
pub fn simulate_noiseless<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    scheme: &LfcScheme,
    bc: &BcParams,
    message_rng: &mut R1,
    noise_rng: &mut R2,
) -> NoiselessTranscript {
    let w = [
        scheme.constellation(0).sample(message_rng),
        scheme.constellation(1).sample(message_rng),
    ];
    let z = sample_noise_sequence(bc, scheme.horizon(), noise_rng);
    simulate_with_noise(scheme, w, [&z[0], &z[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{stream, StreamLabel};
    use crate::stats::{correlation, Moments};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_scheme<R: Rng>(nc: usize, rng: &mut R) -> LfcScheme {
        let mut u = || Dd::from(rng.random::<f64>() * 2.0 - 1.0);
        let codebook = (0..nc).map(|_| [u(), u()]).collect();
        let feedback = [0, 1].map(|_| (0..nc).map(|n| (0..n).map(|_| u()).collect()).collect());
        let decoders = [0, 1].map(|_| (0..nc).map(|_| u()).collect());
        let pam = PamConstellation::new(4).unwrap();
        LfcScheme::new(codebook, feedback, decoders, [pam, pam])
            .unwrap()
            .to_noise_form()
    }

    #[test]
    fn pam_moments_and_spacing() {
        for m in [2u64, 3, 4, 7, 16, 1000] {
            let c = PamConstellation::new(m).unwrap();
            let pts: Vec<f64> = (0..m).map(|k| c.point(k)).collect();
            let mean = pts.iter().sum::<f64>() / m as f64;
            let sm = pts.iter().map(|x| x * x).sum::<f64>() / m as f64;
            assert!(mean.abs() < 1e-12);
            assert!((sm - 1.0).abs() < 1e-12);
            for k in 1..m as usize {
                assert!((pts[k] - pts[k - 1] - c.min_distance()).abs() < 1e-12);
            }
            for (k, &p) in pts.iter().enumerate() {
                assert_eq!(c.slice(p), k as u64);
                assert_eq!(c.slice(p + 0.49 * c.min_distance()), k as u64);
            }
            assert_eq!(c.slice(1e9), m - 1);
            assert_eq!(c.slice(-1e9), 0);
        }
        let one = PamConstellation::new(1).unwrap();
        assert_eq!((one.point(0), one.slice(5.0), one.bits()), (0.0, 0, 0.0));
        assert!(PamConstellation::new(0).is_err());
        assert_eq!(PamConstellation::for_bits(10.5).unwrap().size(), 1448);
    }

    #[test]
    fn single_round_noise_form_is_the_codebook() {
        let pam = PamConstellation::new(2).unwrap();
        let s = LfcScheme::new(
            vec![[Dd::from(2.0), Dd::from(-1.0)]],
            [vec![vec![]], vec![vec![]]],
            [vec![Dd::from(1.0)], vec![Dd::from(1.0)]],
            [pam, pam],
        )
        .unwrap()
        .to_noise_form();
        let nf = s.noise_form().unwrap();
        assert_eq!(nf.codebook[0], [Dd::from(2.0), Dd::from(-1.0)]);
        assert!(nf.feedback[0][0].is_empty() && nf.feedback[1][0].is_empty());
    }

    #[test]
    fn two_round_substitution() {
        let a = 0.7;
        let pam = PamConstellation::new(2).unwrap();
        let c1 = [Dd::from(1.5), Dd::from(0.0)];
        let c2 = [Dd::from(0.0), Dd::from(2.0)];
        let s = LfcScheme::new(
            vec![c1, c2],
            [vec![vec![], vec![Dd::from(a)]], vec![vec![], vec![Dd::ZERO]]],
            [vec![Dd::ZERO; 2], vec![Dd::ZERO; 2]],
            [pam, pam],
        )
        .unwrap()
        .to_noise_form();
        let nf = s.noise_form().unwrap();
        // X2 = c2 - a (c1 + Z1): cbar2 = c2 - a c1, abar_{1,2} = [a], abar_{2,2} = [0]
        assert_eq!(nf.codebook[1][0].to_f64(), -a * 1.5);
        assert_eq!(nf.codebook[1][1].to_f64(), 2.0);
        assert_eq!(nf.feedback[0][1][0].to_f64(), a);
        assert_eq!(nf.feedback[1][1][0].to_f64(), 0.0);
    }

    #[test]
    fn random_schemes_agree_in_both_forms() {
        let mut rng = stream(21, 0, StreamLabel::Message);
        let bc = BcParams::new(1.0, 1.0, 0.5, 0.3).unwrap();
        for _ in 0..20 {
            let s = random_scheme(5, &mut rng);
            for _ in 0..50 {
                let z = sample_noise_sequence(&bc, 5, &mut rng);
                let theta = [rng.random::<f64>(), rng.random::<f64>()];
                let a = s.trajectory_output_form(theta, [&z[0], &z[1]]);
                let b = s.trajectory_noise_form(theta, [&z[0], &z[1]]).unwrap();
                for (p, q) in a.iter().zip(&b) {
                    assert!((*p - *q).to_f64().abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn power_profile_matches_monte_carlo() {
        let mut rng = stream(22, 0, StreamLabel::Message);
        let s = random_scheme(4, &mut rng);
        let bc = BcParams::new(1.0, 0.8, 1.3, -0.4).unwrap();
        let prof = s.power_profile(&bc.covariance()).unwrap();
        assert_eq!(prof[0].feedback_power, 0.0);
        assert_eq!(prof[0].eta, 0.0);
        let mut noise = stream(22, 1, StreamLabel::ForwardNoise);
        let mut m = vec![Moments::default(); 4];
        for _ in 0..100_000 {
            let t = simulate_noiseless(&s, &bc, &mut rng, &mut noise);
            for (mi, &x) in m.iter_mut().zip(&t.x) {
                mi.push(x * x);
            }
        }
        for (p, mi) in prof.iter().zip(&m) {
            assert!(
                (mi.mean() - p.total()).abs() < 3.0 * mi.stderr(),
                "round {}: {} vs {}",
                p.n,
                mi.mean(),
                p.total()
            );
        }
    }

    #[test]
    fn codebook_and_feedback_parts_are_uncorrelated() {
        let mut rng = stream(23, 0, StreamLabel::Message);
        let s = random_scheme(5, &mut rng);
        let bc = BcParams::symmetric(1.0, 1.0).unwrap();
        let mut noise = stream(23, 1, StreamLabel::ForwardNoise);
        let n = 4;
        let (mut cb, mut fb) = (Vec::new(), Vec::new());
        for _ in 0..20_000 {
            let w = [
                s.constellation(0).sample(&mut rng),
                s.constellation(1).sample(&mut rng),
            ];
            let theta = [s.theta(0, w[0]), s.theta(1, w[1])];
            let z = sample_noise_sequence(&bc, 5, &mut noise);
            let c = s.noise_codeword(n, theta).unwrap().to_f64();
            let x = s.trajectory_noise_form(theta, [&z[0], &z[1]]).unwrap()[n].to_f64();
            cb.push(c);
            fb.push(c - x);
        }
        let r = correlation(&cb, &fb);
        assert!(r.abs() < 3.0 / (cb.len() as f64).sqrt(), "r = {r}");
    }

    #[test]
    fn zero_noise_always_decodes() {
        // X1 = θ1, X2 = θ2, receivers read their own round directly
        let pam = PamConstellation::new(64).unwrap();
        let one = Dd::from(1.0);
        let s = LfcScheme::new(
            vec![[one, Dd::ZERO], [Dd::ZERO, one]],
            [vec![vec![], vec![Dd::ZERO]], vec![vec![], vec![Dd::ZERO]]],
            [vec![one, Dd::ZERO], vec![Dd::ZERO, one]],
            [pam, pam],
        )
        .unwrap();
        let bc = BcParams::symmetric(1.0, 0.0).unwrap();
        let mut rng = stream(24, 0, StreamLabel::Message);
        let mut noise = stream(24, 0, StreamLabel::ForwardNoise);
        for _ in 0..1000 {
            assert!(simulate_noiseless(&s, &bc, &mut rng, &mut noise).success());
        }
    }

    #[test]
    fn rows_of_wrong_length_are_rejected() {
        let pam = PamConstellation::new(2).unwrap();
        let r = LfcScheme::new(
            vec![[Dd::ZERO; 2]; 2],
            [vec![vec![], vec![]], vec![vec![], vec![Dd::ZERO]]],
            [vec![Dd::ZERO; 2], vec![Dd::ZERO; 2]],
            [pam, pam],
        );
        assert!(matches!(r, Err(Error::Usage(_))));
        let s = LfcScheme::new(
            vec![[Dd::ZERO; 2]],
            [vec![vec![]], vec![vec![]]],
            [vec![Dd::ZERO], vec![Dd::ZERO]],
            [pam, pam],
        )
        .unwrap();
        assert!(s.power_profile(&[[1.0, 0.0], [0.0, 1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn noise_rows_have_matching_lengths(seed in any::<u64>(), nc in 1usize..8) {
            let mut rng = stream(seed, 0, StreamLabel::Message);
            let s = random_scheme(nc, &mut rng);
            let nf = s.noise_form().unwrap();
            for i in 0..2 {
                for n in 0..nc {
                    prop_assert_eq!(nf.feedback[i][n].len(), n);
                    prop_assert_eq!(s.feedback_row(i, n).len(), n);
                }
            }
        }
    }
}
