//! Forward broadcast channel, MAC feedback link, power metering and seeded
//! random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// 2x2 symmetric covariance matrix.
pub type Cov2 = [[f64; 2]; 2];

/// Two-user Gaussian broadcast channel `Y_i = X + Z_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcParams {
    /// Average forward power constraint.
    pub power: f64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    /// Correlation coefficient of the two receiver noises.
    pub zeta: f64,
}

impl BcParams {
    pub fn new(power: f64, sigma1_sq: f64, sigma2_sq: f64, zeta: f64) -> Result<Self> {
        let p = Self {
            power,
            sigma1_sq,
            sigma2_sq,
            zeta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric channel with uncorrelated noises of variance `sigma_sq`.
    pub fn symmetric(power: f64, sigma_sq: f64) -> Result<Self> {
        Self::new(power, sigma_sq, sigma_sq, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power.is_finite() && self.power >= 0.0) {
            return usage(format!(
                "forward power must be finite and >= 0, got {}",
                self.power
            ));
        }
        if !(self.sigma1_sq >= 0.0 && self.sigma2_sq >= 0.0)
            || !self.sigma1_sq.is_finite()
            || !self.sigma2_sq.is_finite()
        {
            return usage("noise variances must be finite and >= 0");
        }
        if !(self.zeta.abs() <= 1.0) {
            return usage(format!(
                "noise correlation must lie in [-1, 1], got {}",
                self.zeta
            ));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Cov2 {
        let c = self.zeta * (self.sigma1_sq * self.sigma2_sq).sqrt();
        [[self.sigma1_sq, c], [c, self.sigma2_sq]]
    }

    /// Builds parameters from an arbitrary PSD covariance.
    pub fn from_covariance(power: f64, cov: Cov2) -> Result<Self> {
        let (s1, s2) = (cov[0][0], cov[1][1]);
        let zeta = if s1 > 0.0 && s2 > 0.0 {
            (cov[0][1] / (s1 * s2).sqrt()).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        Self::new(power, s1, s2, zeta)
    }

    /// Draws one noise pair `(z1, z2)` via the closed-form 2x2 factorisation.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        let s1 = self.sigma1_sq.sqrt();
        let s2 = self.sigma2_sq.sqrt();
        let z1 = s1 * n1;
        let z2 = s2 * (self.zeta * n1 + (1.0 - self.zeta * self.zeta).max(0.0).sqrt() * n2);
        (z1, z2)
    }

    /// One use of the broadcast channel.
    pub fn transmit<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> (f64, f64) {
        let (z1, z2) = self.sample_noise(rng);
        (x + z1, x + z2)
    }
}

/// Free-function form of [`BcParams::transmit`].
pub fn bc_transmit<R: Rng + ?Sized>(params: &BcParams, x: f64, rng: &mut R) -> (f64, f64) {
    params.transmit(x, rng)
}

/// Additive Gaussian MAC used as the feedback link: `Yt = Xt1 + Xt2 + Zt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacParams {
    /// Per-terminal feedback power constraint.
    pub power: f64,
    pub sigma_sq: f64,
}

impl MacParams {
    /// `sigma_sq = 0` is accepted as the noiseless limit.
    pub fn new(power: f64, sigma_sq: f64) -> Result<Self> {
        if !(power.is_finite() && sigma_sq.is_finite() && sigma_sq >= 0.0) {
            return usage("feedback power and noise variance must be finite, noise >= 0");
        }
        if !(power > sigma_sq) {
            return usage(format!(
                "feedback power {power} must exceed feedback noise variance {sigma_sq}"
            ));
        }
        Ok(Self { power, sigma_sq })
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n: f64 = rng.sample(StandardNormal);
        self.sigma_sq.sqrt() * n
    }

    pub fn transmit<R: Rng + ?Sized>(&self, x1: f64, x2: f64, rng: &mut R) -> f64 {
        x1 + x2 + self.sample_noise(rng)
    }
}

pub fn mac_transmit<R: Rng + ?Sized>(params: &MacParams, x1: f64, x2: f64, rng: &mut R) -> f64 {
    params.transmit(x1, x2, rng)
}

/// Accumulates transmitted energy against a per-symbol budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PowerMeter {
    pub energy: f64,
    pub count: u64,
    pub budget: f64,
}

impl PowerMeter {
    pub fn new(budget: f64) -> Self {
        Self {
            energy: 0.0,
            count: 0,
            budget,
        }
    }

    pub fn record(&mut self, x: f64) {
        self.energy += x * x;
        self.count += 1;
    }

    pub fn record_all(&mut self, xs: &[f64]) {
        xs.iter().for_each(|&x| self.record(x));
    }

    pub fn average(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.energy / self.count as f64
        }
    }

    /// Average power within `budget * (1 + tol)`.
    pub fn within(&self, tol: f64) -> bool {
        self.average() <= self.budget * (1.0 + tol)
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            energy: self.energy + o.energy,
            count: self.count + o.count,
            budget: self.budget,
        }
    }
}

/// Labels of the independent random streams a trial owns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    ForwardNoise = 0,
    FeedbackNoise = 1,
    /// Common randomness: read identically by Terminal A and both receivers.
    Dither = 2,
    Message = 3,
}

const STREAMS_PER_TRIAL: u64 = 4;

/// Deterministic stream for `(seed, trial, label)`.
///
/// ChaCha's 64-bit stream id is split as `trial * 4 + label`, so every trial
/// can be regenerated in isolation and streams never overlap.
pub fn stream(seed: u64, trial: u64, label: StreamLabel) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(STREAMS_PER_TRIAL) + label as u64);
    rng
}

/// The four streams of one trial.
#[derive(Clone, Debug)]
pub struct RngStreams {
    pub forward: ChaCha8Rng,
    pub feedback: ChaCha8Rng,
    pub dither: ChaCha8Rng,
    pub message: ChaCha8Rng,
}

impl RngStreams {
    pub fn for_trial(seed: u64, trial: u64) -> Self {
        Self {
            forward: stream(seed, trial, StreamLabel::ForwardNoise),
            feedback: stream(seed, trial, StreamLabel::FeedbackNoise),
            dither: stream(seed, trial, StreamLabel::Dither),
            message: stream(seed, trial, StreamLabel::Message),
        }
    }
}

pub fn rng_streams(seed: u64) -> RngStreams {
    RngStreams::for_trial(seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{correlation, Moments};

    #[test]
    fn fully_correlated_equal_noise_gives_identical_outputs() {
        let bc = BcParams::new(10.0, 2.0, 2.0, 1.0).unwrap();
        let mut rng = stream(1, 0, StreamLabel::ForwardNoise);
        for i in 0..1000 {
            let (y1, y2) = bc.transmit(i as f64 * 0.01, &mut rng);
            assert_eq!(y1, y2);
        }
    }

    #[test]
    fn zero_noise_passes_input_through() {
        let bc = BcParams::new(10.0, 0.0, 0.0, 0.0).unwrap();
        let mac = MacParams::new(1.0, 0.0).unwrap();
        let mut rng = stream(3, 0, StreamLabel::ForwardNoise);
        assert_eq!(bc.transmit(1.25, &mut rng), (1.25, 1.25));
        assert_eq!(mac.transmit(0.5, -2.0, &mut rng), -1.5);
    }

    #[test]
    fn noise_cross_covariance_matches_sigma() {
        let bc = BcParams::new(1.0, 2.0, 0.5, -0.6).unwrap();
        let mut rng = stream(7, 0, StreamLabel::ForwardNoise);
        let n = 1_000_000;
        let mut prod = Vec::with_capacity(n);
        let (mut m1, mut m2) = (Moments::default(), Moments::default());
        for _ in 0..n {
            let (z1, z2) = bc.sample_noise(&mut rng);
            prod.push(z1 * z2);
            m1.push(z1);
            m2.push(z2);
        }
        let pm = Moments::from_slice(&prod);
        let target = -0.6 * (2.0f64 * 0.5).sqrt();
        assert!(
            (pm.mean() - target).abs() < 3.0 * pm.stderr(),
            "{} vs {}",
            pm.mean(),
            target
        );
        for (m, v) in [(m1, 2.0), (m2, 0.5)] {
            assert!(m.mean().abs() < 3.0 * m.stderr());
            let se = v * (2.0 / n as f64).sqrt();
            assert!((m.mean_sq() - v).abs() < 3.0 * se);
        }
    }

    #[test]
    fn mac_noise_variance_and_independence() {
        let mac = MacParams::new(100.0, 1.5).unwrap();
        let bc = BcParams::symmetric(10.0, 1.0).unwrap();
        let mut s = rng_streams(11);
        let n = 1_000_000;
        let mut zt = Vec::with_capacity(n);
        let mut z1 = Vec::with_capacity(n);
        for _ in 0..n {
            zt.push(mac.transmit(0.3, -0.1, &mut s.feedback) - 0.2);
            z1.push(bc.sample_noise(&mut s.forward).0);
        }
        let m = Moments::from_slice(&zt);
        assert!((m.variance() / 1.5 - 1.0).abs() < 0.01);
        let r = correlation(&zt, &z1);
        assert!(r.abs() < 3.0 / (n as f64).sqrt(), "r = {r}");
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let mut a = stream(5, 2, StreamLabel::Dither);
        let mut b = stream(5, 2, StreamLabel::Dither);
        let xa: Vec<u64> = (0..8).map(|_| a.random()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.random()).collect();
        assert_eq!(xa, xb);
        let f0: u64 = stream(0, 0, StreamLabel::Message).random();
        let f1: u64 = stream(1, 0, StreamLabel::Message).random();
        assert_ne!(f0, f1);
    }

    #[test]
    fn labelled_streams_are_uncorrelated() {
        let mut s = rng_streams(42);
        let n = 1_000_000;
        let a: Vec<f64> = (0..n).map(|_| s.forward.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..n).map(|_| s.dither.sample(StandardNormal)).collect();
        let c: Vec<f64> = (0..n).map(|_| s.message.sample(StandardNormal)).collect();
        let bound = 3.0 / (n as f64).sqrt();
        assert!(correlation(&a, &b).abs() < bound);
        assert!(correlation(&a, &c).abs() < bound);
        assert!(correlation(&b, &c).abs() < bound);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(BcParams::new(10.0, 1.0, 1.0, 1.5).is_err());
        assert!(BcParams::new(-1.0, 1.0, 1.0, 0.0).is_err());
        assert!(MacParams::new(1.0, 1.0).is_err());
        assert!(MacParams::new(1.0, 2.0).is_err());
    }

    #[test]
    fn power_meter_average() {
        let mut m = PowerMeter::new(2.0);
        m.record_all(&[1.0, -1.0, 2.0, 0.0]);
        assert!((m.average() - 1.5).abs() < 1e-15);
        assert!(m.within(0.0));
        m.record(10.0);
        assert!(!m.within(0.02));
    }
}
