//! Small statistical helpers for the Monte Carlo checks.

use serde::Serialize;
use statrs::function::erf::erfc;

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Gaussian tail probability Q(x) = P(N(0,1) > x).
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Binomial proportion with a Wilson 95% interval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ProportionEstimate {
    pub hits: u64,
    pub trials: u64,
}

impl ProportionEstimate {
    pub fn new(hits: u64, trials: u64) -> Self {
        debug_assert!(hits <= trials);
        Self { hits, trials }
    }

    pub fn p(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.hits as f64 / self.trials as f64
        }
    }

    /// Plug-in standard error sqrt(p(1-p)/n).
    pub fn stderr(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.p();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// Standard error under a hypothesised proportion `p0`.
    pub fn stderr_at(&self, p0: f64) -> f64 {
        (p0 * (1.0 - p0) / self.trials.max(1) as f64).sqrt()
    }

    pub fn wilson95(&self) -> (f64, f64) {
        if self.trials == 0 {
            return (0.0, 1.0);
        }
        let n = self.trials as f64;
        let p = self.p();
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        let lo = if self.hits == 0 {
            0.0
        } else {
            (centre - half).max(0.0)
        };
        let hi = if self.hits == self.trials {
            1.0
        } else {
            (centre + half).min(1.0)
        };
        (lo, hi)
    }

    pub fn merge(self, other: Self) -> Self {
        Self::new(self.hits + other.hits, self.trials + other.trials)
    }
}

/// Running first and second moments.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n.max(1) as f64
    }

    /// Mean of squares, the raw second moment.
    pub fn mean_sq(&self) -> f64 {
        self.sum_sq / self.n.max(1) as f64
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n.max(1) as f64).sqrt()
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            n: self.n + o.n,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }
}

/// Sum of reals on a fixed `2^-64` grid, exact and associative, so that
/// aggregates do not depend on how trials are split or scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ExactSum {
    units: i128,
}

impl ExactSum {
    const SCALE: f64 = 18_446_744_073_709_551_616.0;
    /// Largest magnitude accepted per term.
    pub const LIMIT: f64 = 1.0e18;

    /// Adds `x`, rounded to the grid; `false` when `x` is non-finite or
    /// beyond [`ExactSum::LIMIT`] and was not added.
    pub fn add(&mut self, x: f64) -> bool {
        if !(x.abs() <= Self::LIMIT) {
            return false;
        }
        self.units += (x * Self::SCALE).round() as i128;
        true
    }

    pub fn value(&self) -> f64 {
        self.units as f64 / Self::SCALE
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            units: self.units + o.units,
        }
    }
}

impl Serialize for ExactSum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

/// Sample second moment E[x^2] and its standard error.
pub fn second_moment_with_stderr(xs: &[f64]) -> (f64, f64) {
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let m = Moments::from_slice(&sq);
    (m.mean(), m.stderr())
}

/// Pearson correlation of paired samples.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    (d, kolmogorov_sf(lambda))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if (k as u64) % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
