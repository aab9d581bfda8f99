//! Rate regions of the two-user Gaussian broadcast channel and the
//! geometry used to compare them.
//!
//! Every region is represented by the Pareto frontier of a finite set of
//! achievable (or bounding) rate pairs, read between frontier points by
//! linear interpolation.

use serde::Serialize;

use crate::channels::{BcParams, MacParams};
use crate::error::{usage, Result};
use crate::mllfc::transform_params;
use crate::ol::{lambda_grid, ol_rate_region};
use crate::par::{map_slice, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatePoint {
    pub r1: f64,
    pub r2: f64,
}

impl RatePoint {
    pub fn new(r1: f64, r2: f64) -> Self {
        debug_assert!(r1.is_finite() && r2.is_finite());
        Self {
            r1: r1.max(0.0),
            r2: r2.max(0.0),
        }
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.r1 * k, self.r2 * k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CurveLabel {
    NoFeedback,
    LfcOuter,
    OlNoiseless,
    OlTransformed,
    Hull,
}

impl CurveLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveLabel::NoFeedback => "no-feedback",
            CurveLabel::LfcOuter => "lfc-outer",
            CurveLabel::OlNoiseless => "ol-noiseless",
            CurveLabel::OlTransformed => "ol-transformed",
            CurveLabel::Hull => "hull",
        }
    }
}

impl std::fmt::Display for CurveLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Upper-right boundary of a region: `r1` strictly increasing, `r2`
/// strictly decreasing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionCurve {
    label: CurveLabel,
    points: Vec<RatePoint>,
}

impl RegionCurve {
    /// Keeps only the points not weakly dominated by another point.
    pub fn from_points(label: CurveLabel, mut pts: Vec<RatePoint>) -> Self {
        pts.retain(|p| p.r1.is_finite() && p.r2.is_finite());
        pts.sort_by(|a, b| b.r1.total_cmp(&a.r1).then(b.r2.total_cmp(&a.r2)));
        let mut frontier: Vec<RatePoint> = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for p in pts {
            if p.r2 > best {
                best = p.r2;
                frontier.push(p);
            }
        }
        frontier.reverse();
        if frontier.is_empty() {
            frontier.push(RatePoint::new(0.0, 0.0));
        }
        Self {
            label,
            points: frontier,
        }
    }

    pub fn with_label(mut self, label: CurveLabel) -> Self {
        self.label = label;
        self
    }

    pub fn label(&self) -> CurveLabel {
        self.label
    }

    pub fn points(&self) -> &[RatePoint] {
        &self.points
    }

    pub fn max_r1(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.r1)
    }

    pub fn max_r2(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.r2)
    }

    /// Boundary height at `r1`; `None` beyond the largest `r1`.
    pub fn r2_at(&self, r1: f64) -> Option<f64> {
        let pts = &self.points;
        if r1 > self.max_r1() {
            return None;
        }
        if r1 <= pts[0].r1 {
            return Some(pts[0].r2);
        }
        let k = pts.partition_point(|p| p.r1 < r1);
        let (a, b) = (pts[k - 1], pts[k]);
        let t = (r1 - a.r1) / (b.r1 - a.r1);
        Some(a.r2 + t * (b.r2 - a.r2))
    }

    /// Largest amount by which `other` sticks out of `self`, sampled on
    /// `grid` equispaced rates over `[0, other.max_r1()]`.
    pub fn dominance_gap(&self, other: &RegionCurve, grid: usize) -> f64 {
        let top = other.max_r1();
        let n = grid.max(2);
        (0..n)
            .map(|k| {
                let r1 = top * k as f64 / (n - 1) as f64;
                let theirs = other.r2_at(r1).unwrap_or(0.0);
                match self.r2_at(r1) {
                    Some(ours) => theirs - ours,
                    None => theirs.max(r1 - self.max_r1()),
                }
            })
            .fold(0.0, f64::max)
    }

    /// Weak dominance on a shared grid with absolute tolerance `tol`.
    pub fn dominates(&self, other: &RegionCurve, grid: usize, tol: f64) -> bool {
        self.dominance_gap(other, grid) <= tol
    }

    /// Largest boundary difference in either direction on a shared grid.
    pub fn sup_distance(&self, other: &RegionCurve, grid: usize) -> f64 {
        self.dominance_gap(other, grid)
            .max(other.dominance_gap(self, grid))
    }

    /// Whether the frontier is concave (no point above a neighbouring chord).
    pub fn is_concave(&self, tol: f64) -> bool {
        self.points.windows(3).all(|w| {
            let (a, b, c) = (w[0], w[1], w[2]);
            let cross = (b.r1 - a.r1) * (c.r2 - a.r2) - (b.r2 - a.r2) * (c.r1 - a.r1);
            cross <= tol
        })
    }

    /// `label,R1_bits,R2_bits` rows without a header.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", self.label, p.r1, p.r2));
        }
        s
    }
}

pub const CSV_HEADER: &str = "label,R1_bits,R2_bits\n";

pub fn curves_csv(curves: &[&RegionCurve]) -> String {
    let mut s = String::from(CSV_HEADER);
    for c in curves {
        s.push_str(&c.csv_rows());
    }
    s
}

/// `C(x) = ½ log2(1 + x)`.
pub fn shannon_c(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return usage(format!("C(x) needs x >= 0, got {x}"));
    }
    Ok(0.5 * x.ln_1p() / std::f64::consts::LN_2)
}

fn c(x: f64) -> f64 {
    0.5 * x.max(0.0).ln_1p() / std::f64::consts::LN_2
}

/// `points` values on `[0, 1]`, both ends included.
pub fn unit_grid(points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

/// Superposition-coding capacity region without feedback. The stronger
/// receiver decodes both layers.
pub fn no_feedback_region(p: f64, sigma1_sq: f64, sigma2_sq: f64, grid: usize) -> Result<RegionCurve> {
    BcParams::new(p, sigma1_sq, sigma2_sq, 0.0)?;
    let mut pts = Vec::with_capacity(4 * grid);
    // only the stronger receiver can strip the other layer
    for a in unit_grid(grid) {
        if sigma1_sq <= sigma2_sq {
            pts.push(RatePoint::new(
                c(a * p / sigma1_sq),
                c((1.0 - a) * p / (sigma2_sq + a * p)),
            ));
        }
        if sigma2_sq <= sigma1_sq {
            pts.push(RatePoint::new(
                c((1.0 - a) * p / (sigma1_sq + a * p)),
                c(a * p / sigma2_sq),
            ));
        }
    }
    Ok(RegionCurve::from_points(CurveLabel::NoFeedback, pts))
}

/// The two corners of the feedback-MAC pentagon at correlation `rho`.
fn pentagon_corners(p1: f64, p2: f64, rho: f64) -> [RatePoint; 2] {
    let q = 1.0 - rho * rho;
    let c1 = c(p1 * q);
    let c2 = c(p2 * q);
    let cs = c(p1 + p2 + 2.0 * (p1 * p2).sqrt() * rho);
    [
        RatePoint::new(c1, c2.min(cs - c1)),
        RatePoint::new(c1.min(cs - c2), c2),
    ]
}

/// Capacity region of the unit-noise two-user MAC with feedback: union over
/// `rho` of pentagons. The union's boundary is traced by pentagon corners.
pub fn mac_fb_region(p1: f64, p2: f64, rho_grid: usize) -> Result<RegionCurve> {
    if !(p1 >= 0.0 && p2 >= 0.0) {
        return usage("MAC powers must be >= 0");
    }
    let pts = unit_grid(rho_grid)
        .into_iter()
        .flat_map(|r| pentagon_corners(p1, p2, r))
        .collect();
    Ok(RegionCurve::from_points(CurveLabel::LfcOuter, pts))
}

/// Outer bound on linear-feedback rates with noiseless feedback: union over
/// power splits of the dual feedback-MAC regions, evaluated at `rate_grid`
/// values of `R1`.
pub fn lfc_outer_bound(
    bc: &BcParams,
    rate_grid: usize,
    split_grid: usize,
    exec: Execution,
) -> Result<RegionCurve> {
    bc.validate()?;
    if bc.zeta != 0.0 {
        return usage("the LFC outer bound needs uncorrelated noises (zeta = 0)");
    }
    if !(bc.sigma1_sq > 0.0 && bc.sigma2_sq > 0.0) {
        return usage("the LFC outer bound needs positive noise variances");
    }
    let x_max = c(bc.power / bc.sigma1_sq);
    let xs: Vec<f64> = unit_grid(rate_grid).into_iter().map(|u| u * x_max).collect();
    let pts = map_slice(exec, &xs, |&x| RatePoint::new(x, outer_r2_at(bc, x, split_grid)));
    Ok(RegionCurve::from_points(CurveLabel::LfcOuter, pts))
}

/// Largest `R2` in some pentagon with `C1 >= x`, for the split `t`.
fn pentagon_height(bc: &BcParams, x: f64, t: f64) -> f64 {
    let p1 = t * bc.power / bc.sigma1_sq;
    let p2 = (1.0 - t) * bc.power / bc.sigma2_sq;
    let gain = (2.0 * x).exp2();
    if 1.0 + p1 < gain {
        return f64::NEG_INFINITY;
    }
    let rho_max = if p1 > 0.0 {
        (1.0 - (gain - 1.0) / p1).max(0.0).sqrt()
    } else {
        0.0
    };
    let cross = 2.0 * (p1 * p2).sqrt();
    // C2 falls and Cs - x rises in rho; the best rho is where they meet
    let excess = |r: f64| (1.0 + p2 * (1.0 - r * r)) * gain - (1.0 + p1 + p2 + cross * r);
    let mut rho_c = 0.0;
    if excess(0.0) > 0.0 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if excess(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        rho_c = lo;
    }
    let r = rho_c.min(rho_max);
    c(p2 * (1.0 - r * r)).min(c(p1 + p2 + cross * r) - x)
}

fn outer_r2_at(bc: &BcParams, x: f64, split_grid: usize) -> f64 {
    let t_min = (((2.0 * x).exp2() - 1.0) * bc.sigma1_sq / bc.power).clamp(0.0, 1.0);
    let ts: Vec<f64> = unit_grid(split_grid)
        .into_iter()
        .map(|u| t_min + u * (1.0 - t_min))
        .collect();
    let f = |t: f64| pentagon_height(bc, x, t);
    let (k, best) = ts
        .iter()
        .map(|&t| f(t))
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
    // golden section inside the bracket around the best sample
    let (mut a, mut b) = (ts[k.saturating_sub(1)], ts[(k + 1).min(ts.len() - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut u, mut v) = (b - g * (b - a), a + g * (b - a));
    let (mut fu, mut fv) = (f(u), f(v));
    for _ in 0..80 {
        if fu >= fv {
            b = v;
            v = u;
            fv = fu;
            u = b - g * (b - a);
            fu = f(u);
        } else {
            a = u;
            u = v;
            fu = fv;
            v = a + g * (b - a);
            fv = f(v);
        }
    }
    best.max(fu).max(fv).max(0.0)
}

/// Upper-right concave hull of the union of `curves`, axes included.
pub fn convex_hull(curves: &[&RegionCurve]) -> Result<RegionCurve> {
    if curves.is_empty() {
        return usage("convex hull needs at least one curve");
    }
    let mut pts: Vec<RatePoint> = curves.iter().flat_map(|c| c.points.iter().copied()).collect();
    let max_r1 = pts.iter().map(|p| p.r1).fold(0.0, f64::max);
    let max_r2 = pts.iter().map(|p| p.r2).fold(0.0, f64::max);
    pts.push(RatePoint::new(0.0, max_r2));
    pts.push(RatePoint::new(max_r1, 0.0));
    pts.sort_by(|a, b| a.r1.total_cmp(&b.r1).then(a.r2.total_cmp(&b.r2)));
    // monotone chain, upper part only
    let mut hull: Vec<RatePoint> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.r1 - a.r1) * (p.r2 - a.r2) - (b.r2 - a.r2) * (p.r1 - a.r1);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    Ok(RegionCurve::from_points(CurveLabel::Hull, hull))
}

/// Grid sizes for every union the regions take.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionGrids {
    pub alpha: usize,
    /// `R1` samples of the LFC outer bound.
    pub rate: usize,
    pub split: usize,
    pub lambda: usize,
    /// Rate grid for pointwise comparisons.
    pub compare: usize,
}

impl Default for RegionGrids {
    fn default() -> Self {
        Self::uniform(512)
    }
}

impl RegionGrids {
    pub fn uniform(n: usize) -> Self {
        Self {
            alpha: n,
            rate: n,
            split: n,
            lambda: n,
            compare: n,
        }
    }

    pub fn doubled(self) -> Self {
        Self {
            alpha: 2 * self.alpha,
            rate: 2 * self.rate,
            split: 2 * self.split,
            lambda: 2 * self.lambda,
            compare: self.compare,
        }
    }
}

/// The curves compared in the region figure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionBundle {
    pub no_feedback: RegionCurve,
    pub lfc_outer: RegionCurve,
    pub ol_noiseless: RegionCurve,
    pub ol_transformed: RegionCurve,
    /// Hull of the transformed OL region and the no-feedback region.
    pub hull: RegionCurve,
    /// Hull of the noiseless OL region and the no-feedback region.
    pub ol_noiseless_hull: RegionCurve,
}

impl RegionBundle {
    /// The four plotted curves, in plotting order.
    pub fn curves(&self) -> [&RegionCurve; 4] {
        [&self.no_feedback, &self.lfc_outer, &self.ol_noiseless, &self.hull]
    }

    pub fn to_csv(&self) -> String {
        curves_csv(&self.curves())
    }

    /// Gaps of the chain no-feedback ⊆ hull ⊆ OL-noiseless hull ⊆ LFC outer.
    pub fn containment_gaps(&self, grid: usize) -> [f64; 3] {
        [
            self.hull.dominance_gap(&self.no_feedback, grid),
            self.ol_noiseless_hull.dominance_gap(&self.hull, grid),
            self.lfc_outer.dominance_gap(&self.ol_noiseless_hull, grid),
        ]
    }

    /// Hull minus no-feedback boundary on the diagonal `R1 = R2`.
    pub fn symmetric_improvement(&self) -> f64 {
        symmetric_rate(&self.hull) - symmetric_rate(&self.no_feedback)
    }
}

/// Largest `r` with `(r, r)` on or below the boundary, by bisection.
pub fn symmetric_rate(curve: &RegionCurve) -> f64 {
    let (mut lo, mut hi) = (0.0, curve.max_r1().min(curve.max_r2()));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match curve.r2_at(mid) {
            Some(r2) if r2 >= mid => lo = mid,
            _ => hi = mid,
        }
    }
    lo
}

pub fn region_bundle(
    bc: &BcParams,
    mac: &MacParams,
    grids: RegionGrids,
    exec: Execution,
) -> Result<RegionBundle> {
    let no_feedback = no_feedback_region(bc.power, bc.sigma1_sq, bc.sigma2_sq, grids.alpha)?;
    let lfc_outer = lfc_outer_bound(bc, grids.rate, grids.split, exec)?;
    let lambdas = lambda_grid(grids.lambda);
    let ol_noiseless = ol_rate_region(bc, &lambdas, exec)?;
    let transformed = transform_params(bc, mac)?.as_bc()?;
    let ol_transformed = ol_rate_region(&transformed, &lambdas, exec)?.with_label(CurveLabel::OlTransformed);
    let hull = convex_hull(&[&ol_transformed, &no_feedback])?;
    let ol_noiseless_hull = convex_hull(&[&ol_noiseless, &no_feedback])?;
    Ok(RegionBundle {
        no_feedback,
        lfc_outer,
        ol_noiseless,
        ol_transformed,
        hull,
        ol_noiseless_hull,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(pts: &[(f64, f64)]) -> RegionCurve {
        RegionCurve::from_points(
            CurveLabel::Hull,
            pts.iter().map(|&(a, b)| RatePoint::new(a, b)).collect(),
        )
    }

    #[test]
    fn shannon_values() {
        assert_eq!(shannon_c(0.0).unwrap(), 0.0);
        assert!((shannon_c(3.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((shannon_c(10.0).unwrap() - 0.5 * 11f64.log2()).abs() < 1e-15);
        assert!((shannon_c(10.0).unwrap() - 1.72971).abs() < 1e-5);
        assert!(shannon_c(-0.1).is_err());
    }

    #[test]
    fn shannon_is_increasing_and_concave() {
        let xs: Vec<f64> = (0..200).map(|k| 0.05 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| shannon_c(x).unwrap()).collect();
        for w in ys.windows(3) {
            assert!(w[1] > w[0] && w[2] > w[1]);
            assert!(w[2] - 2.0 * w[1] + w[0] <= 0.0);
        }
    }

    #[test]
    fn pruning_and_interpolation() {
        let r = curve(&[(0.0, 1.0), (0.5, 0.8), (0.4, 0.5), (1.0, 0.0), (0.5, 0.2)]);
        assert_eq!(r.points().len(), 3);
        assert_eq!(r.r2_at(0.0), Some(1.0));
        assert!((r.r2_at(0.25).unwrap() - 0.9).abs() < 1e-15);
        assert!((r.r2_at(0.75).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(r.r2_at(1.0), Some(0.0));
        assert_eq!(r.r2_at(1.5), None);
        for w in r.points().windows(2) {
            assert!(w[1].r1 > w[0].r1 && w[1].r2 < w[0].r2);
        }
    }

    #[test]
    fn no_feedback_endpoints_and_sum_rate() {
        let r = no_feedback_region(10.0, 1.0, 1.0, 512).unwrap();
        let first = r.points()[0];
        let last = *r.points().last().unwrap();
        assert!((last.r1 - 1.72971).abs() < 1e-5 && last.r2 == 0.0);
        assert!(first.r1 == 0.0 && (first.r2 - shannon_c(10.0).unwrap()).abs() < 1e-15);
        for p in r.points() {
            assert!((p.r1 + p.r2 - shannon_c(10.0).unwrap()).abs() < 1e-9);
        }
        for a in [0.0, 0.1, 0.37, 0.9, 1.0] {
            let s = shannon_c(a * 10.0).unwrap() + shannon_c((1.0 - a) * 10.0 / (1.0 + a * 10.0)).unwrap();
            assert!((s - shannon_c(10.0).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn asymmetric_no_feedback_favours_the_strong_user() {
        let r = no_feedback_region(10.0, 1.0, 4.0, 256).unwrap();
        assert!((r.max_r1() - shannon_c(10.0).unwrap()).abs() < 1e-12);
        assert!((r.max_r2() - shannon_c(2.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mac_pentagon_corner_at_zero_correlation() {
        // frozen from direct evaluation: (C(5), C(10) - C(5))
        let [a, _] = pentagon_corners(5.0, 5.0, 0.0);
        assert!((a.r1 - 1.292_481_250_360_578).abs() < 1e-12);
        assert!((a.r2 - 0.437_234_558_958_070).abs() < 1e-12);
        let r = mac_fb_region(5.0, 0.0, 64).unwrap();
        assert_eq!(r.points().len(), 1);
        assert!((r.points()[0].r1 - shannon_c(5.0).unwrap()).abs() < 1e-15);
        assert_eq!(r.points()[0].r2, 0.0);
    }

    #[test]
    fn mac_sum_rate_peaks_inside_and_converges() {
        let sum_max = |n: usize| {
            unit_grid(n)
                .into_iter()
                .flat_map(|r| pentagon_corners(5.0, 5.0, r))
                .map(|p| p.r1 + p.r2)
                .fold(0.0, f64::max)
        };
        let (a, b, c) = (sum_max(129), sum_max(257), sum_max(513));
        assert!(b >= a && c >= b);
        assert!(c - b < 0.5 * (b - a) + 1e-12);
        let best = unit_grid(513)
            .into_iter()
            .max_by(|&x, &y| {
                let s = |r| pentagon_corners(5.0, 5.0, r).map(|p| p.r1 + p.r2)[0];
                s(x).total_cmp(&s(y))
            })
            .unwrap();
        assert!(best > 0.0 && best < 1.0);
    }

    #[test]
    fn outer_bound_shape() {
        let bc = BcParams::symmetric(10.0, 1.0).unwrap();
        let r = lfc_outer_bound(&bc, 128, 128, Execution::Parallel).unwrap();
        assert!((r.max_r1() - shannon_c(10.0).unwrap()).abs() < 1e-12);
        for p in r.points().iter().filter(|p| p.r2 > 0.0) {
            assert!((outer_r2_at(&bc, p.r2, 128) - p.r1).abs() < 1e-9, "{p:?}");
        }
        let nf = no_feedback_region(10.0, 1.0, 1.0, 128).unwrap();
        assert!(r.dominates(&nf, 512, 1e-9));
        // every sampled pentagon corner lies inside, and the dense trace comes close
        let t = 0.37;
        let corners = mac_fb_region(t * 10.0, (1.0 - t) * 10.0, 512).unwrap();
        assert!(r.dominance_gap(&corners, 512) < 1e-9);
        let fine = lfc_outer_bound(&bc, 256, 64, Execution::Sequential).unwrap();
        assert!(fine.sup_distance(&r, 512) < 1e-3);
        assert!(lfc_outer_bound(
            &BcParams::new(10.0, 1.0, 1.0, 0.2).unwrap(),
            8,
            8,
            Execution::Sequential
        )
        .is_err());
    }

    #[test]
    fn hull_of_concave_curve_is_itself_and_nested_hull_is_outer() {
        let nf = no_feedback_region(10.0, 1.0, 2.0, 128).unwrap();
        let h = convex_hull(&[&nf]).unwrap();
        assert!(h.sup_distance(&nf, 512) < 1e-12);
        let inner = curve(&[(0.0, 0.5), (0.5, 0.4), (0.8, 0.0)]);
        let h = convex_hull(&[&nf, &inner]).unwrap();
        assert!(h.sup_distance(&nf, 512) < 1e-12);
        assert!(h.is_concave(1e-12));
        assert!(convex_hull(&[]).is_err());
    }

    #[test]
    fn hull_fills_dents() {
        let dented = curve(&[(0.0, 1.0), (0.5, 0.2), (1.0, 0.0)]);
        let h = convex_hull(&[&dented]).unwrap();
        assert!((h.r2_at(0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn symmetric_rate_bisection() {
        let r = curve(&[(0.0, 1.0), (1.0, 0.0)]);
        assert!((symmetric_rate(&r) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let r = curve(&[(0.0, 1.0), (0.5, 0.8), (1.0, 0.0)]);
        let s = curves_csv(&[&r, &r]);
        assert_eq!(s.lines().count(), 1 + 2 * r.points().len());
        assert!(s.starts_with("label,R1_bits,R2_bits\nhull,0,1\n"));
    }
}
