//! The Ozarow-Leung feedback scheme for the two-user broadcast channel.
//!
//! Rounds 1 and 2 send `sqrt(P) θ1` and `sqrt(P) θ2`; each receiver reads
//! its own round and forms the unbiased estimate `θ̂_i = Y_i / sqrt(P)`.
//! From round 3 on the transmitter sends a power-normalised combination of
//! the two current estimation errors,
//!
//! ```text
//! X_n = w1 ε1 + w2 ε2,   w ∝ (sqrt(λ / α1), s sqrt((1 - λ) / α2)),   s = sgn(ρ),
//! ```
//!
//! and receiver `i` applies the LMMSE correction `θ̂_i ← θ̂_i - g_i Y_i`.
//! The pair of errors is jointly Gaussian given the initial noises, so its
//! covariance `(α1, α2, ρ)` evolves by an exact deterministic recursion.

use serde::Serialize;

use crate::channels::RngStreams;
use crate::channels::{BcParams, Cov2};
use crate::dd::Dd;
use crate::error::{usage, Error, Result};
use crate::lfc::{simulate_noiseless, LfcScheme, PamConstellation};
use crate::par::{map_range, map_slice, Execution};
use crate::regions::{CurveLabel, RatePoint, RegionCurve};
use crate::stats::ProportionEstimate;

/// Estimation-error variances and correlation after `round` rounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OlState {
    pub alpha1: f64,
    pub alpha2: f64,
    pub rho: f64,
    pub round: usize,
}

impl OlState {
    pub fn covariance(&self) -> Cov2 {
        let c = self.rho * (self.alpha1 * self.alpha2).sqrt();
        [[self.alpha1, c], [c, self.alpha2]]
    }

    pub fn from_covariance(s: &Cov2, round: usize) -> Result<Self> {
        let (a1, a2, c) = (s[0][0], s[1][1], s[0][1]);
        let scale = a1.abs().max(a2.abs());
        if !(a1 >= -1e-12 * scale && a2 >= -1e-12 * scale) || c * c > a1 * a2 + 1e-9 * scale * scale {
            return Err(Error::Internal(format!(
                "error covariance left the PSD cone at round {round}: [[{a1}, {c}], [{c}, {a2}]]"
            )));
        }
        let (a1, a2) = (a1.max(0.0), a2.max(0.0));
        let rho = if a1 > 0.0 && a2 > 0.0 {
            (c / (a1 * a2).sqrt()).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        Ok(Self {
            alpha1: a1,
            alpha2: a2,
            rho,
            round,
        })
    }
}

/// State after the two initialisation rounds.
pub fn ol_initial_state(bc: &BcParams) -> OlState {
    let (a1, a2) = if bc.power > 0.0 {
        (bc.sigma1_sq / bc.power, bc.sigma2_sq / bc.power)
    } else {
        (1.0, 1.0)
    };
    // the two initial noises are from different rounds, hence independent
    OlState {
        alpha1: a1,
        alpha2: a2,
        rho: 0.0,
        round: 2,
    }
}

fn mat_vec(s: &Cov2, w: [f64; 2]) -> [f64; 2] {
    [s[0][0] * w[0] + s[0][1] * w[1], s[1][0] * w[0] + s[1][1] * w[1]]
}

/// Error weights for the next round, scaled so that `E[X^2] = power`.
pub fn ol_weights(state: &OlState, lambda: f64, power: f64) -> [f64; 2] {
    let sign = if state.rho < 0.0 { -1.0 } else { 1.0 };
    let dir = |share: f64, alpha: f64| {
        if alpha > 0.0 && share > 0.0 {
            (share / alpha).sqrt()
        } else {
            0.0
        }
    };
    let v = [dir(lambda, state.alpha1), sign * dir(1.0 - lambda, state.alpha2)];
    let s = state.covariance();
    let sv = mat_vec(&s, v);
    let energy = v[0] * sv[0] + v[1] * sv[1];
    if energy <= 0.0 || power <= 0.0 {
        return [0.0, 0.0];
    }
    let k = (power / energy).sqrt();
    [k * v[0], k * v[1]]
}

/// LMMSE gains `g_i = E[ε_i Y_i] / E[Y_i^2]` for the given weights.
pub fn ol_gains(state: &OlState, weights: [f64; 2], sigma: &Cov2, power: f64) -> [f64; 2] {
    let sw = mat_vec(&state.covariance(), weights);
    [0, 1].map(|i| {
        let e = power + sigma[i][i];
        if e > 0.0 {
            sw[i] / e
        } else {
            0.0
        }
    })
}

/// One step of the error-covariance recursion under `X = w·ε` and
/// `ε_i ← ε_i - g_i (X + Z_i)`, with `E[X^2] = power`.
pub fn ol_state_update(
    state: &OlState,
    weights: [f64; 2],
    gains: [f64; 2],
    sigma: &Cov2,
    power: f64,
) -> Result<OlState> {
    let s = state.covariance();
    let sw = mat_vec(&s, weights);
    let g = gains;
    let mut next = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            next[i][j] = s[i][j] - g[j] * sw[i] - g[i] * sw[j] + g[i] * g[j] * (power + sigma[i][j]);
        }
    }
    next[1][0] = next[0][1];
    OlState::from_covariance(&next, state.round + 1)
}

/// Weights and gains applied in one round, with the state they act on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OlRound {
    pub before: OlState,
    pub weights: [f64; 2],
    pub gains: [f64; 2],
}

/// Analytic states after every round `1..=nc`.
pub fn ol_trajectory(bc: &BcParams, lambda: f64, nc: usize) -> Result<Vec<OlState>> {
    let (states, _) = ol_plan(bc, lambda, nc)?;
    Ok(states)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return usage(format!("power split lambda must lie in [0, 1], got {lambda}"));
    }
    Ok(())
}

fn ol_plan(bc: &BcParams, lambda: f64, nc: usize) -> Result<(Vec<OlState>, Vec<OlRound>)> {
    check_lambda(lambda)?;
    bc.validate()?;
    let sigma = bc.covariance();
    let init = ol_initial_state(bc);
    let mut states = vec![
        OlState {
            alpha2: 1.0,
            round: 1,
            ..init
        },
        init,
    ];
    let mut rounds = Vec::new();
    let mut s = init;
    for _ in 2..nc {
        let w = ol_weights(&s, lambda, bc.power);
        let g = ol_gains(&s, w, &sigma, bc.power);
        rounds.push(OlRound {
            before: s,
            weights: w,
            gains: g,
        });
        s = ol_state_update(&s, w, g, &sigma, bc.power)?;
        states.push(s);
    }
    states.truncate(nc);
    Ok((states, rounds))
}

/// Builds the scheme for horizon `nc` with `m1`, `m2` message points.
pub fn ol_build(bc: &BcParams, nc: usize, m1: u64, m2: u64, lambda: f64) -> Result<LfcScheme> {
    if nc < 3 {
        return usage(format!("OL scheme needs at least 3 rounds, got {nc}"));
    }
    if !(bc.power > 0.0) {
        return usage("OL scheme needs positive forward power");
    }
    let constellations = [PamConstellation::new(m1)?, PamConstellation::new(m2)?];
    let (_, rounds) = ol_plan(bc, lambda, nc)?;
    let sq = bc.power.sqrt();
    let inv = Dd::recip(sq);

    let mut codebook = vec![[Dd::from(sq), Dd::ZERO], [Dd::ZERO, Dd::from(sq)]];
    let mut feedback: [Vec<Vec<Dd>>; 2] = [vec![vec![], vec![Dd::ZERO]], vec![vec![], vec![Dd::ZERO]]];
    let mut decoders = [vec![inv, Dd::ZERO], vec![Dd::ZERO, inv]];
    for r in &rounds {
        let w = r.weights;
        // X = w·(θ̂ - θ) = -w·θ - Σ_i (-w_i d_i)·Y_i
        codebook.push([Dd::from(-w[0]), Dd::from(-w[1])]);
        for i in 0..2 {
            feedback[i].push(decoders[i].iter().map(|&d| d.mul_f64(-w[i])).collect());
            decoders[i].push(Dd::from(-r.gains[i]));
        }
    }
    Ok(LfcScheme::new(codebook, feedback, decoders, constellations)?
        .with_constant_power(bc.power)
        .to_noise_form())
}

/// Message sizes `M_i = floor(2^(nc R_i))` for a target rate pair.
pub fn constellations_for_rates(rates: RatePoint, nc: usize) -> Result<[PamConstellation; 2]> {
    Ok([
        PamConstellation::for_bits(rates.r1 * nc as f64)?,
        PamConstellation::for_bits(rates.r2 * nc as f64)?,
    ])
}

/// Builds the scheme carrying the given rate pair.
pub fn ol_build_for_rates(bc: &BcParams, nc: usize, rates: RatePoint, lambda: f64) -> Result<LfcScheme> {
    let [c1, c2] = constellations_for_rates(rates, nc)?;
    ol_build(bc, nc, c1.size(), c2.size(), lambda)
}

/// Steady-state correlation and per-user rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OlFixedPoint {
    pub lambda: f64,
    /// Magnitude of the steady-state correlation.
    pub rho_star: f64,
    pub r1: f64,
    pub r2: f64,
    pub iterations: usize,
}

pub const FIXED_POINT_TOL: f64 = 1e-13;
pub const FIXED_POINT_MAX_ITER: usize = 10_000;

pub fn ol_fixed_point(bc: &BcParams, lambda: f64) -> Result<OlFixedPoint> {
    ol_fixed_point_from(bc, lambda, ol_initial_state(bc))
}

/// Solves for the stationary correlation reached from `init`.
///
/// The recursion is equivariant under rescaling each error, so with unit
/// variances it is a map `ρ ↦ F(ρ)` on the correlation alone. The sign of the
/// correlation flips every round, so the stationary point is a fixed point of
/// `F∘F`, found here with safeguarded Steffensen steps. Each rate is read
/// off the geometric mean of the two contraction factors along the orbit,
/// and `rho_star` reports `|ρ|`.
pub fn ol_fixed_point_from(bc: &BcParams, lambda: f64, init: OlState) -> Result<OlFixedPoint> {
    check_lambda(lambda)?;
    bc.validate()?;
    if !(bc.sigma1_sq > 0.0 && bc.sigma2_sq > 0.0) {
        return usage("rates are unbounded with a noiseless receiver; noise variances must be > 0");
    }
    let sigma = bc.covariance();
    let diverged = |iterations| Error::Divergence {
        params: format!("{bc:?}, lambda = {lambda}"),
        iterations,
    };
    let step = |rho: f64| -> Result<(f64, [f64; 2])> {
        let s = OlState {
            alpha1: 1.0,
            alpha2: 1.0,
            rho,
            round: init.round,
        };
        let w = ol_weights(&s, lambda, bc.power);
        let g = ol_gains(&s, w, &sigma, bc.power);
        let next = ol_state_update(&s, w, g, &sigma, bc.power)?;
        Ok((next.rho, [next.alpha1, next.alpha2]))
    };
    let double = |rho: f64| -> Result<(f64, [f64; 2])> {
        let (mid, ra) = step(rho)?;
        let (end, rb) = step(mid)?;
        Ok((end, [ra[0] * rb[0], ra[1] * rb[1]]))
    };
    let mut rho = init.rho;
    for it in 1..=FIXED_POINT_MAX_ITER {
        let (r1, ratio) = double(rho)?;
        if !(ratio[0] > 0.0 && ratio[1] > 0.0 && r1.is_finite()) {
            return Err(diverged(it));
        }
        if (r1 - rho).abs() < FIXED_POINT_TOL {
            return Ok(OlFixedPoint {
                lambda,
                rho_star: r1.abs(),
                r1: -0.25 * ratio[0].log2(),
                r2: -0.25 * ratio[1].log2(),
                iterations: it,
            });
        }
        let (r2, _) = double(r1)?;
        let denom = r2 - 2.0 * r1 + rho;
        let accel = rho - (r1 - rho) * (r1 - rho) / denom;
        rho = if denom != 0.0 && accel.is_finite() && accel.abs() < 1.0 && accel * r2 >= 0.0 {
            accel
        } else {
            r2
        };
    }
    Err(diverged(FIXED_POINT_MAX_ITER))
}

/// Power split grid dense near both ends, where the rates move fastest.
pub fn lambda_grid(points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.5];
    }
    (0..points)
        .map(|k| {
            let t = k as f64 / (points - 1) as f64;
            let s = (0.5 * std::f64::consts::PI * t).sin();
            s * s
        })
        .collect()
}

/// Fixed-point rate pairs over a power-split grid, dominated points pruned.
pub fn ol_rate_region(bc: &BcParams, lambdas: &[f64], exec: Execution) -> Result<RegionCurve> {
    if lambdas.is_empty() {
        return usage("lambda grid must be non-empty");
    }
    let fps = map_slice(exec, lambdas, |&l| ol_fixed_point(bc, l));
    let mut pts = Vec::with_capacity(fps.len());
    for fp in fps {
        let fp = fp?;
        pts.push(RatePoint::new(fp.r1, fp.r2));
    }
    Ok(RegionCurve::from_points(CurveLabel::OlNoiseless, pts))
}

/// Fraction of trials in which either receiver decodes wrongly.
pub fn ol_decode_error(
    scheme: &LfcScheme,
    bc: &BcParams,
    trials: u64,
    seed: u64,
    exec: Execution,
) -> Result<ProportionEstimate> {
    if trials == 0 {
        return usage("trials must be >= 1");
    }
    let fails = map_range(exec, 0..trials, |t| {
        let mut rng = RngStreams::for_trial(seed, t);
        !simulate_noiseless(scheme, bc, &mut rng.message, &mut rng.forward).success()
    });
    Ok(ProportionEstimate::new(
        fails.iter().filter(|&&f| f).count() as u64,
        trials,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{stream, StreamLabel};
    use crate::regions::shannon_c;
    use crate::stats::Moments;

    fn reference() -> BcParams {
        BcParams::symmetric(10.0, 1.0).unwrap()
    }

    #[test]
    fn constant_power_and_vanishing_codebook() {
        for (bc, lambda) in [
            (reference(), 0.5),
            (BcParams::new(10.0, 1.0, 2.0, 0.3).unwrap(), 0.3),
            (BcParams::new(9.6, 1.4, 1.4, 0.4 / 1.4).unwrap(), 0.8),
        ] {
            let s = ol_build(&bc, 40, 1 << 20, 1 << 20, lambda).unwrap();
            for p in s.power_profile(&bc.covariance()).unwrap() {
                assert!(
                    (p.total() - bc.power).abs() < 1e-9,
                    "round {}: {}",
                    p.n,
                    p.total()
                );
            }
            let nf = s.noise_form().unwrap();
            for n in 2..40 {
                for k in nf.codebook[n] {
                    assert!(k.to_f64().abs() < 1e-9, "round {}: {:?}", n + 1, k);
                }
            }
        }
    }

    #[test]
    fn recursion_matches_generic_error_covariance() {
        for (bc, lambda) in [
            (reference(), 0.5),
            (BcParams::new(10.0, 1.0, 2.0, 0.3).unwrap(), 0.3),
            (BcParams::new(9.9, 1.1, 1.1, 0.1 / 1.1).unwrap(), 0.7),
        ] {
            let nc = 30;
            let s = ol_build(&bc, nc, 1 << 20, 1 << 20, lambda).unwrap();
            let cov = s.error_covariances(&vec![bc.covariance(); nc]).unwrap();
            for (st, c) in ol_trajectory(&bc, lambda, nc).unwrap().iter().zip(&cov) {
                let want = st.covariance();
                for i in 0..2 {
                    for j in 0..2 {
                        let scale = (want[i][i] * want[j][j]).sqrt();
                        assert!((c[i][j] - want[i][j]).abs() < 1e-9 * scale, "{st:?} vs {c:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric_split_keeps_users_equal() {
        for s in ol_trajectory(&reference(), 0.5, 40).unwrap().iter().skip(1) {
            assert!((s.alpha1 - s.alpha2).abs() <= 1e-12 * s.alpha1);
        }
    }

    #[test]
    fn errors_shrink_after_initialisation() {
        let t = ol_trajectory(&BcParams::new(10.0, 1.0, 2.0, 0.2).unwrap(), 0.4, 30).unwrap();
        for w in t[1..].windows(2) {
            assert!(w[1].alpha1 < w[0].alpha1 && w[1].alpha2 < w[0].alpha2);
        }
    }

    #[test]
    fn zero_power_leaves_state_unchanged() {
        let s = OlState {
            alpha1: 0.3,
            alpha2: 0.7,
            rho: 0.2,
            round: 5,
        };
        let sigma = [[1.0, 0.0], [0.0, 1.0]];
        let w = ol_weights(&s, 0.5, 0.0);
        let g = ol_gains(&s, w, &sigma, 0.0);
        let n = ol_state_update(&s, w, g, &sigma, 0.0).unwrap();
        assert_eq!((n.alpha1, n.alpha2, n.rho), (s.alpha1, s.alpha2, s.rho));
    }

    #[test]
    fn noiseless_receivers_learn_in_one_step() {
        // initialisation: a noiseless receiver reads its point exactly
        let bc = BcParams::symmetric(10.0, 0.0).unwrap();
        let init = ol_initial_state(&bc);
        assert_eq!((init.alpha1, init.alpha2), (0.0, 0.0));
        // a single served user is also resolved by one error-proportional round
        let s = OlState {
            alpha1: 0.4,
            alpha2: 0.4,
            rho: 0.0,
            round: 2,
        };
        let sigma = [[0.0; 2]; 2];
        let w = ol_weights(&s, 1.0, 10.0);
        let g = ol_gains(&s, w, &sigma, 10.0);
        let n = ol_state_update(&s, w, g, &sigma, 10.0).unwrap();
        assert!(n.alpha1.abs() < 1e-15);
    }

    #[test]
    fn non_psd_state_is_internal_error() {
        let bad = [[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            OlState::from_covariance(&bad, 3),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn fixed_point_reference_values() {
        // frozen from an independent numpy iteration of the same recursion
        let fp = ol_fixed_point(&reference(), 0.5).unwrap();
        assert!((fp.r1 - 1.01664).abs() < 1e-4, "{fp:?}");
        assert!((fp.r1 - fp.r2).abs() < 1e-12);
        assert!(fp.r1 + fp.r2 > shannon_c(10.0).unwrap());
        let fp = ol_fixed_point(&reference(), 0.3).unwrap();
        assert!(
            (fp.r1 - 0.8149).abs() < 1e-3 && (fp.r2 - 1.1963).abs() < 1e-3,
            "{fp:?}"
        );
        let t = BcParams::from_covariance(9.9, [[1.1, 0.1], [0.1, 1.1]]).unwrap();
        let fp = ol_fixed_point(&t, 0.5).unwrap();
        assert!((fp.r1 - 0.9596).abs() < 1e-3, "{fp:?}");
    }

    #[test]
    fn single_user_endpoints_reach_point_to_point_capacity() {
        let fp = ol_fixed_point(&reference(), 1.0).unwrap();
        assert!((fp.r1 - shannon_c(10.0).unwrap()).abs() < 1e-9 && fp.r2.abs() < 1e-12);
        let fp = ol_fixed_point(&reference(), 0.0).unwrap();
        assert!(fp.r1.abs() < 1e-12);
    }

    #[test]
    fn fixed_point_ignores_initial_state() {
        let bc = BcParams::new(10.0, 1.0, 1.5, 0.1).unwrap();
        let a = ol_fixed_point(&bc, 0.4).unwrap();
        let b = ol_fixed_point_from(
            &bc,
            0.4,
            OlState {
                alpha1: 3.0,
                alpha2: 0.2,
                rho: 0.35,
                round: 2,
            },
        )
        .unwrap();
        assert!((a.rho_star - b.rho_star).abs() < 1e-8);
        assert!((a.r1 - b.r1).abs() < 1e-8 && (a.r2 - b.r2).abs() < 1e-8);
    }

    #[test]
    fn rates_vanish_with_power() {
        let mut prev = f64::INFINITY;
        for p in [1.0, 1e-2, 1e-4, 1e-6] {
            let fp = ol_fixed_point(&BcParams::symmetric(p, 1.0).unwrap(), 0.5).unwrap();
            assert!(fp.r1 < prev);
            prev = fp.r1;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn region_is_symmetric_and_reaches_axes() {
        let r = ol_rate_region(&reference(), &lambda_grid(65), Execution::Parallel).unwrap();
        for p in r.points() {
            if let Some(q) = r.r2_at(p.r2) {
                assert!((q - p.r1).abs() < 2e-3, "{p:?} vs {q}");
            }
        }
        let fp0 = ol_fixed_point(&reference(), 0.0).unwrap();
        assert!(fp0.r1 < 1e-12);
    }

    #[test]
    fn rows_use_unbiased_initial_estimates() {
        let s = ol_build(&reference(), 5, 4, 4, 0.5).unwrap();
        let d = s.decoder_row(0);
        assert!((d[0].mul_f64(10f64.sqrt()) - 1.0).to_f64().abs() < 1e-30);
        assert_eq!(d[1], Dd::ZERO);
        assert!(ol_build(&reference(), 2, 4, 4, 0.5).is_err());
    }

    #[test]
    fn trivial_messages_never_err() {
        let s = ol_build(&reference(), 10, 1, 1, 0.5).unwrap();
        let e = ol_decode_error(&s, &reference(), 200, 1, Execution::Parallel).unwrap();
        assert_eq!(e.hits, 0);
    }

    #[test]
    fn empirical_power_is_constant() {
        let bc = reference();
        let s = ol_build(&bc, 20, 1 << 20, 1 << 20, 0.5).unwrap();
        let mut m = vec![Moments::default(); 20];
        let mut msg = stream(31, 0, StreamLabel::Message);
        let mut noise = stream(31, 0, StreamLabel::ForwardNoise);
        for _ in 0..100_000 {
            let t = simulate_noiseless(&s, &bc, &mut msg, &mut noise);
            for (mi, x) in m.iter_mut().zip(&t.x) {
                mi.push(x * x);
            }
        }
        for mi in &m {
            assert!((mi.mean() / bc.power - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn output_form_feedback_grows_while_noise_form_stays_bounded() {
        let bc = reference();
        let s = ol_build(&bc, 30, 1 << 20, 1 << 20, 0.5).unwrap();
        let mut msg = stream(32, 0, StreamLabel::Message);
        let mut noise = stream(32, 0, StreamLabel::ForwardNoise);
        let mut eps = vec![Moments::default(); 30];
        for _ in 0..2000 {
            let t = simulate_noiseless(&s, &bc, &mut msg, &mut noise);
            for (n, e) in eps.iter_mut().enumerate() {
                e.push(s.feedback_element(0, n, &t.y[0]).to_f64().powi(2));
            }
        }
        assert!(eps[29].mean() > 1e6 * bc.power);
        for p in s.power_profile(&bc.covariance()).unwrap() {
            assert!(p.feedback_power <= bc.power * (1.0 + 1e-9));
        }
    }
}
