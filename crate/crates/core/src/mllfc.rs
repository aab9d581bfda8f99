//! Modulo-lattice linear feedback coding (MLLFC).
//!
//! `2 NΛ` copies of an inner LFC scheme run interleaved. The copies that
//! share a parity `b` form one block of `NΛ` symbols per round, and the
//! feedback for a block travels over the MAC as one lattice vector:
//!
//! ```text
//! B_i sends   Xt_i = [γ ε_i + V_i] mod Λ
//! A computes  K    = [γ c - (Yt - V_1 - V_2) - γ cbar] mod Λ
//! A sends     X    = K / γ + cbar
//! ```
//!
//! When the operand of the last modulo stays in the Voronoi cell, `X`
//! equals `c - ε_1 - ε_2 - Zt / γ`: the inner scheme runs over a noiseless
//! feedback channel whose forward noise carries the extra term `-Zt / γ`.

use rand::Rng;
use serde::Serialize;

use crate::channels::{BcParams, Cov2, MacParams, PowerMeter, RngStreams};
use crate::dd::Dd;
use crate::error::{usage, Error, Result};
use crate::lattice::{Lattice, LatticeKind, VnrReport};
use crate::lfc::LfcScheme;
use crate::par::{map_range, Execution};
use crate::stats::{gaussian_q, ProportionEstimate};

/// Forward power and noise covariance of the equivalent noiseless-feedback channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransformedParams {
    pub p_eq: f64,
    pub sigma_eq: Cov2,
    pub beta: f64,
}

impl TransformedParams {
    pub fn as_bc(&self) -> Result<BcParams> {
        BcParams::from_covariance(self.p_eq, self.sigma_eq)
    }

    /// Variance `γ⁻² σ̃²` of the noise inserted into the forward channel.
    pub fn inserted_noise(&self, bc: &BcParams) -> f64 {
        bc.power - self.p_eq
    }
}

/// `P_eq = P (1 - σ̃²/P̃)`, `Σ_eq = Σ + σ̃² (P/P̃) 11ᵀ`.
pub fn transform_params(bc: &BcParams, mac: &MacParams) -> Result<TransformedParams> {
    transform_params_with_backoff(bc, mac, 1.0)
}

/// Transform for the backed-off scale `γ = β sqrt(P̃/P)`: the inserted noise
/// `γ⁻² σ̃²` becomes `σ̃² P / (β² P̃)`.
pub fn transform_params_with_backoff(bc: &BcParams, mac: &MacParams, beta: f64) -> Result<TransformedParams> {
    bc.validate()?;
    if !(beta > 0.0 && beta <= 1.0) {
        return usage(format!("gamma backoff beta must lie in (0, 1], got {beta}"));
    }
    let eff = beta * beta * mac.power;
    if !(eff > mac.sigma_sq) {
        return Err(Error::Precondition(format!(
            "need beta^2 * P_fb > sigma_fb^2, got {eff} <= {}",
            mac.sigma_sq
        )));
    }
    let q = mac.sigma_sq * bc.power / eff;
    let p_eq = bc.power * (1.0 - mac.sigma_sq / eff);
    let s = bc.covariance();
    Ok(TransformedParams {
        p_eq,
        sigma_eq: [[s[0][0] + q, s[0][1] + q], [s[1][0] + q, s[1][1] + q]],
        beta,
    })
}

/// Position of one inner-scheme symbol in the interleaved schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Slot {
    /// Copy index within its block, `1..=NΛ`.
    pub n_lattice: usize,
    /// Parity `b ∈ {0, 1}`.
    pub parity: usize,
    /// Inner round `1..=NC`.
    pub round: usize,
}

/// Bijection between slots and global time indices `1..=2 NΛ NC`.
///
/// Block `k = 2(nC - 1) + b` occupies times `k NΛ + 1 ..= (k + 1) NΛ`, so
/// consecutive rounds of one copy are `2 NΛ` apart. The MAC block that runs
/// alongside forward block `k` carries the feedback computed from block
/// `k - 1` for block `k + 1`; MAC blocks `0` and `2 NC - 1` are idle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub n_lattice: usize,
    pub nc: usize,
}

impl Schedule {
    pub fn new(n_lattice: usize, nc: usize) -> Result<Self> {
        if n_lattice == 0 || nc == 0 {
            return usage("schedule needs NΛ >= 1 and NC >= 1");
        }
        Ok(Self { n_lattice, nc })
    }

    pub fn horizon(&self) -> usize {
        2 * self.n_lattice * self.nc
    }

    pub fn blocks(&self) -> usize {
        2 * self.nc
    }

    pub fn block_of(&self, slot: Slot) -> usize {
        2 * (slot.round - 1) + slot.parity
    }

    pub fn time_of(&self, slot: Slot) -> usize {
        slot.n_lattice + self.n_lattice * self.block_of(slot)
    }

    pub fn slot_at(&self, time: usize) -> Option<Slot> {
        if time == 0 || time > self.horizon() {
            return None;
        }
        let k = (time - 1) / self.n_lattice;
        Some(Slot {
            n_lattice: (time - 1) % self.n_lattice + 1,
            parity: k % 2,
            round: k / 2 + 1,
        })
    }

    /// Forward block served by MAC block `k`, if any.
    pub fn mac_target(&self, k: usize) -> Option<usize> {
        (k >= 1 && k + 1 < self.blocks()).then_some(k + 1)
    }

    /// Index of a copy in per-copy arrays: `b NΛ + (nΛ - 1)`.
    pub fn copy_index(&self, n_lattice: usize, parity: usize) -> usize {
        parity * self.n_lattice + n_lattice - 1
    }

    pub fn copies(&self) -> usize {
        2 * self.n_lattice
    }
}

pub fn schedule(n_lattice: usize, nc: usize) -> Result<Schedule> {
    Schedule::new(n_lattice, nc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MllfcConfig {
    pub n_lattice: usize,
    pub nc: usize,
    pub lattice: Lattice,
    pub gamma: f64,
    pub beta: f64,
    /// Subtract and re-add `γ cbar` around the modulo. Off only for paired
    /// comparisons.
    pub cbar_compensation: bool,
    pub record_transcript: bool,
}

impl MllfcConfig {
    pub const PARITIES: usize = 2;

    pub fn new(
        kind: LatticeKind,
        n_lattice: usize,
        nc: usize,
        beta: f64,
        bc: &BcParams,
        mac: &MacParams,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return usage(format!("gamma backoff beta must lie in (0, 1], got {beta}"));
        }
        if !(bc.power > 0.0) {
            return usage("forward power must be positive");
        }
        let lattice = Lattice::scale_to_power(kind, n_lattice, mac.power)?;
        Ok(Self {
            n_lattice,
            nc,
            lattice,
            gamma: beta * (mac.power / bc.power).sqrt(),
            beta,
            cbar_compensation: true,
            record_transcript: false,
        })
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            n_lattice: self.n_lattice,
            nc: self.nc,
        }
    }

    pub fn validate(&self, bc: &BcParams, mac: &MacParams) -> Result<()> {
        if self.lattice.dim() != self.n_lattice {
            return usage(format!(
                "lattice dimension {} does not match NΛ = {}",
                self.lattice.dim(),
                self.n_lattice
            ));
        }
        if (self.lattice.second_moment() / mac.power - 1.0).abs() > 1e-9 {
            return usage(format!(
                "lattice second moment {} does not match feedback power {}",
                self.lattice.second_moment(),
                mac.power
            ));
        }
        let want = self.beta * (mac.power / bc.power).sqrt();
        if (self.gamma / want - 1.0).abs() > 1e-12 {
            return usage(format!(
                "gamma {} does not match beta sqrt(P_fb/P) = {want}",
                self.gamma
            ));
        }
        Schedule::new(self.n_lattice, self.nc)?;
        Ok(())
    }

    /// Forward channel seen by the inner scheme from round 2 on.
    pub fn equivalent_channel(&self, bc: &BcParams, mac: &MacParams) -> Result<BcParams> {
        transform_params_with_backoff(bc, mac, self.beta)?.as_bc()
    }
}

/// `[γ θ + V] mod Λ`.
pub fn feedback_encode(theta: &[f64], dither: &[f64], gamma: f64, lattice: &Lattice) -> Result<Vec<f64>> {
    if theta.len() != dither.len() {
        return usage("feedback block and dither lengths differ");
    }
    let mut out: Vec<f64> = theta.iter().zip(dither).map(|(t, v)| gamma * t + v).collect();
    lattice.reduce(&mut out)?;
    Ok(out)
}

/// Double-double variant used inside the protocol, where `θ` may be huge.
pub fn feedback_encode_dd(
    theta: &[Dd],
    dither: &[f64],
    gamma: f64,
    lattice: &Lattice,
    out: &mut [f64],
) -> Result<()> {
    let x: Vec<Dd> = theta
        .iter()
        .zip(dither)
        .map(|(t, &v)| t.mul_f64(gamma) + v)
        .collect();
    lattice.reduce_dd(&x, out)
}

/// Terminal A's rule: returns `K` and `X = K/γ + cbar` for one block.
pub fn terminal_a_combine(
    y_tilde: &[f64],
    dither_sum: &[f64],
    c: &[Dd],
    cbar: &[Dd],
    gamma: f64,
    lattice: &Lattice,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y_tilde.len();
    if dither_sum.len() != n || c.len() != n || cbar.len() != n {
        return usage("terminal A block lengths differ");
    }
    let operand: Vec<Dd> = (0..n)
        .map(|j| c[j].mul_f64(gamma) - (Dd::from(y_tilde[j]) - dither_sum[j]) - cbar[j].mul_f64(gamma))
        .collect();
    let mut k = vec![0.0; n];
    lattice.reduce_dd(&operand, &mut k)?;
    let x = k
        .iter()
        .zip(cbar)
        .map(|(&kj, &cb)| (Dd::from(kj / gamma) + cb).to_f64())
        .collect();
    Ok((k, x))
}

/// One MAC block as observed by the simulator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MacBlock {
    pub block: usize,
    /// Forward block whose transmission this feedback feeds.
    pub target: usize,
    pub xt: [Vec<f64>; 2],
    pub yt: Vec<f64>,
    pub dither: [Vec<f64>; 2],
    /// `γ(c - cbar - ε_1 - ε_2) - Zt`, the argument of Terminal A's modulo.
    pub operand: Vec<f64>,
    /// Terminal A's `K` for the target block.
    pub combined: Vec<f64>,
    pub alias: bool,
}

/// One row per global time index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TranscriptRow {
    pub time: usize,
    pub slot: Slot,
    pub x: f64,
    pub y: [f64; 2],
    /// `(Xt_1, Xt_2, Yt, alias)` of the MAC symbol sent at this time.
    pub mac: Option<(f64, f64, f64, bool)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MllfcTranscript {
    pub rows: Vec<TranscriptRow>,
    pub mac_blocks: Vec<MacBlock>,
}

pub const TRANSCRIPT_HEADER: &str = "time,scheme,parity,round,X,Y1,Y2,Xt1,Xt2,Yt,alias_flag\n";

impl MllfcTranscript {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRANSCRIPT_HEADER);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},",
                r.time, r.slot.n_lattice, r.slot.parity, r.slot.round, r.x, r.y[0], r.y[1]
            ));
            match r.mac {
                Some((a, b, y, f)) => s.push_str(&format!("{a},{b},{y},{}\n", u8::from(f))),
                None => s.push_str(",,,\n"),
            }
        }
        s
    }
}

/// Per-copy outcome of one protocol run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CopyResult {
    pub n_lattice: usize,
    pub parity: usize,
    pub messages: [u64; 2],
    pub decoded: [u64; 2],
    pub x: Vec<f64>,
    /// Outputs at the two receivers.
    pub y: [Vec<f64>; 2],
    /// Forward noise seen by the inner scheme: `Z_i - Zt/γ`, or `Z_i` in
    /// rounds without feedback.
    pub effective_noise: Vec<[f64; 2]>,
    /// `θ̂_{i,n} - θ_i` after each round.
    pub errors: Vec<[f64; 2]>,
}

impl CopyResult {
    pub fn success(&self) -> bool {
        self.messages == self.decoded
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MllfcRun {
    pub copies: Vec<CopyResult>,
    /// Aliasing flag per MAC block; idle blocks are `false`.
    pub alias: Vec<bool>,
    /// Largest `|X - (c - ε_1 - ε_2 - Zt/γ)|` over rounds fed by a
    /// non-aliased block.
    pub identity_max_deviation: f64,
    pub forward_power: PowerMeter,
    pub feedback_power: [PowerMeter; 2],
    pub transcript: Option<MllfcTranscript>,
}

impl MllfcRun {
    pub fn success(&self) -> bool {
        self.copies.iter().all(CopyResult::success)
    }

    pub fn alias_count(&self) -> usize {
        self.alias.iter().filter(|&&a| a).count()
    }

    pub fn any_alias(&self) -> bool {
        self.alias.iter().any(|&a| a)
    }

    /// First round (0-based) of parity `parity` whose transmission used
    /// aliased feedback.
    pub fn first_aliased_round(&self, parity: usize) -> Option<usize> {
        self.alias
            .iter()
            .enumerate()
            .filter(|&(k, &a)| a && (k + 1) % 2 == parity)
            .map(|(k, _)| k.div_ceil(2))
            .min()
    }
}

struct PendingFeedback {
    eps: [Vec<Dd>; 2],
    y_tilde: Vec<f64>,
    dither_sum: Vec<f64>,
    z_tilde: Vec<f64>,
    mac_index: Option<usize>,
    alias: bool,
}

/// Executes every interleaved copy of `inner` over the simulated forward
/// channel and MAC feedback link. `messages` holds one pair per copy, in
/// [`Schedule::copy_index`] order.
pub fn run_mllfc(
    inner: &LfcScheme,
    bc: &BcParams,
    mac: &MacParams,
    config: &MllfcConfig,
    messages: &[[u64; 2]],
    rng: &mut RngStreams,
) -> Result<MllfcRun> {
    config.validate(bc, mac)?;
    let sched = config.schedule();
    let (nl, nc) = (config.n_lattice, config.nc);
    if inner.horizon() != nc {
        return usage(format!("inner scheme horizon {} != NC = {nc}", inner.horizon()));
    }
    if messages.len() != sched.copies() {
        return usage(format!(
            "need {} message pairs, got {}",
            sched.copies(),
            messages.len()
        ));
    }
    let eq = transform_params_with_backoff(bc, mac, config.beta)?;
    if let Some(p) = inner.constant_power() {
        if p > eq.p_eq * (1.0 + 1e-9) {
            return Err(Error::Precondition(format!(
                "inner scheme power {p} exceeds the equivalent budget {}",
                eq.p_eq
            )));
        }
    }
    let gamma = config.gamma;
    let lattice = &config.lattice;
    let theta: Vec<[f64; 2]> = messages
        .iter()
        .map(|w| [inner.theta(0, w[0]), inner.theta(1, w[1])])
        .collect();

    let copies = sched.copies();
    let mut x_hist = vec![Vec::with_capacity(nc); copies];
    let mut y_hist: Vec<[Vec<f64>; 2]> = vec![[Vec::with_capacity(nc), Vec::with_capacity(nc)]; copies];
    let mut errors = vec![Vec::with_capacity(nc); copies];
    let mut eff_noise = vec![Vec::with_capacity(nc); copies];
    let mut alias = vec![false; sched.blocks()];
    let mut identity = 0.0f64;
    let mut forward_power = PowerMeter::new(bc.power);
    let mut feedback_power = [PowerMeter::new(mac.power), PowerMeter::new(mac.power)];
    let mut transcript = config.record_transcript.then(MllfcTranscript::default);
    let mut pending: Option<PendingFeedback> = None;

    let mut dither = [vec![0.0; nl], vec![0.0; nl]];
    let mut xt = [vec![0.0; nl], vec![0.0; nl]];

    for k in 0..sched.blocks() {
        let parity = k % 2;
        let r = k / 2;

        // forward block k
        let c: Vec<Dd> = (0..nl)
            .map(|j| inner.codeword(r, theta[sched.copy_index(j + 1, parity)]))
            .collect();
        let mut x_block = vec![0.0; nl];
        let mut inserted = vec![0.0; nl];
        match pending.take() {
            None => {
                for j in 0..nl {
                    x_block[j] = c[j].to_f64();
                }
            }
            Some(fb) => {
                let cbar: Vec<Dd> = (0..nl)
                    .map(|j| inner.noise_codeword(r, theta[sched.copy_index(j + 1, parity)]))
                    .collect::<Result<_>>()?;
                let (kv, xv) = if config.cbar_compensation {
                    terminal_a_combine(&fb.y_tilde, &fb.dither_sum, &c, &cbar, gamma, lattice)?
                } else {
                    let zero = vec![Dd::ZERO; nl];
                    terminal_a_combine(&fb.y_tilde, &fb.dither_sum, &c, &zero, gamma, lattice)?
                };
                x_block = xv;
                for j in 0..nl {
                    inserted[j] = -fb.z_tilde[j] / gamma;
                }
                if !fb.alias {
                    for j in 0..nl {
                        let reference = c[j] - fb.eps[0][j] - fb.eps[1][j] - fb.z_tilde[j] / gamma;
                        identity = identity.max((reference - x_block[j]).abs().to_f64());
                    }
                }
                if let (Some(t), Some(m)) = (transcript.as_mut(), fb.mac_index) {
                    t.mac_blocks[m].combined = kv;
                }
            }
        }
        for j in 0..nl {
            let ci = sched.copy_index(j + 1, parity);
            let (z1, z2) = bc.sample_noise(&mut rng.forward);
            let x = x_block[j];
            forward_power.record(x);
            x_hist[ci].push(x);
            y_hist[ci][0].push(x + z1);
            y_hist[ci][1].push(x + z2);
            eff_noise[ci].push([z1 + inserted[j], z2 + inserted[j]]);
            let e = [0, 1].map(|i| (inner.estimate(i, &y_hist[ci][i], r + 1) - theta[ci][i]).to_f64());
            errors[ci].push(e);
            if let Some(t) = transcript.as_mut() {
                t.rows.push(TranscriptRow {
                    time: sched.time_of(Slot {
                        n_lattice: j + 1,
                        parity,
                        round: r + 1,
                    }),
                    slot: Slot {
                        n_lattice: j + 1,
                        parity,
                        round: r + 1,
                    },
                    x,
                    y: [x + z1, x + z2],
                    mac: None,
                });
            }
        }

        // MAC block k, feeding forward block k + 1
        let Some(target) = sched.mac_target(k) else {
            continue;
        };
        let tp = target % 2;
        let tr = target / 2;
        let eps: [Vec<Dd>; 2] = [0, 1].map(|i| {
            (0..nl)
                .map(|j| inner.feedback_element(i, tr, &y_hist[sched.copy_index(j + 1, tp)][i]))
                .collect()
        });
        for i in 0..2 {
            lattice.sample_dither_into(&mut rng.dither, &mut dither[i]);
            feedback_encode_dd(&eps[i], &dither[i], gamma, lattice, &mut xt[i])?;
            feedback_power[i].record_all(&xt[i]);
        }
        let z_tilde: Vec<f64> = (0..nl).map(|_| mac.sample_noise(&mut rng.feedback)).collect();
        let y_tilde: Vec<f64> = (0..nl).map(|j| xt[0][j] + xt[1][j] + z_tilde[j]).collect();
        let dither_sum: Vec<f64> = (0..nl).map(|j| dither[0][j] + dither[1][j]).collect();

        // simulator-only oracle: does Terminal A's modulo operand leave V0?
        let operand: Vec<f64> = (0..nl)
            .map(|j| {
                let th = theta[sched.copy_index(j + 1, tp)];
                let c = inner.codeword(tr, th);
                let cbar = if config.cbar_compensation {
                    inner.noise_codeword(tr, th)?
                } else {
                    Dd::ZERO
                };
                Ok(((c - cbar - eps[0][j] - eps[1][j]).mul_f64(gamma) - z_tilde[j]).to_f64())
            })
            .collect::<Result<_>>()?;
        let flagged = !lattice.in_cell(&operand)?;
        alias[k] = flagged;

        let mac_index = transcript.as_mut().map(|t| {
            let base = t.rows.len() - nl;
            for j in 0..nl {
                t.rows[base + j].mac = Some((xt[0][j], xt[1][j], y_tilde[j], flagged));
            }
            t.mac_blocks.push(MacBlock {
                block: k,
                target,
                xt: xt.clone(),
                yt: y_tilde.clone(),
                dither: dither.clone(),
                operand: operand.clone(),
                combined: Vec::new(),
                alias: flagged,
            });
            t.mac_blocks.len() - 1
        });
        pending = Some(PendingFeedback {
            eps,
            y_tilde,
            dither_sum,
            z_tilde,
            mac_index,
            alias: flagged,
        });
    }

    let results = (0..copies)
        .map(|ci| {
            let parity = ci / nl;
            CopyResult {
                n_lattice: ci % nl + 1,
                parity,
                messages: messages[ci],
                decoded: [inner.decode(0, &y_hist[ci][0]), inner.decode(1, &y_hist[ci][1])],
                x: std::mem::take(&mut x_hist[ci]),
                y: std::mem::take(&mut y_hist[ci]),
                effective_noise: std::mem::take(&mut eff_noise[ci]),
                errors: std::mem::take(&mut errors[ci]),
            }
        })
        .collect();
    Ok(MllfcRun {
        copies: results,
        alias,
        identity_max_deviation: identity,
        forward_power,
        feedback_power,
        transcript,
    })
}

/// Draws independent uniform message pairs for every copy.
pub fn sample_messages<R: Rng + ?Sized>(inner: &LfcScheme, copies: usize, rng: &mut R) -> Vec<[u64; 2]> {
    (0..copies)
        .map(|_| {
            [
                inner.constellation(0).sample(rng),
                inner.constellation(1).sample(rng),
            ]
        })
        .collect()
}

/// One trial, reproducible from `(seed, trial)` alone.
pub fn mllfc_trial(
    inner: &LfcScheme,
    bc: &BcParams,
    mac: &MacParams,
    config: &MllfcConfig,
    seed: u64,
    trial: u64,
) -> Result<MllfcRun> {
    let mut rng = RngStreams::for_trial(seed, trial);
    let messages = sample_messages(inner, config.schedule().copies(), &mut rng.message);
    run_mllfc(inner, bc, mac, config, &messages, &mut rng)
}

/// Runs trials `range` and returns them in trial order.
pub fn mllfc_trials(
    inner: &LfcScheme,
    bc: &BcParams,
    mac: &MacParams,
    config: &MllfcConfig,
    seed: u64,
    range: std::ops::Range<u64>,
    exec: Execution,
) -> Result<Vec<MllfcRun>> {
    map_range(exec, range, |t| mllfc_trial(inner, bc, mac, config, seed, t))
        .into_iter()
        .collect()
}

/// Per-round variance of Terminal A's modulo operand `-γ(ε̄_1 + ε̄_2) - Zt`,
/// before any aliasing, for rounds `1..=NC` (zero for round 1, which uses no
/// feedback).
pub fn operand_variances(
    inner: &LfcScheme,
    bc: &BcParams,
    mac: &MacParams,
    config: &MllfcConfig,
) -> Result<Vec<f64>> {
    let nf = inner
        .noise_form()
        .ok_or_else(|| Error::Precondition("inner scheme lacks its noise form".into()))?;
    let first = bc.covariance();
    let later = config.equivalent_channel(bc, mac)?.covariance();
    let gamma = config.gamma;
    Ok((0..inner.horizon())
        .map(|n| {
            if n == 0 {
                return 0.0;
            }
            let fb: f64 = (0..n)
                .map(|m| {
                    let s = if m == 0 { &first } else { &later };
                    let (a, b) = (nf.feedback[0][n][m].to_f64(), nf.feedback[1][n][m].to_f64());
                    a * a * s[0][0] + 2.0 * a * b * s[0][1] + b * b * s[1][1]
                })
                .sum();
            gamma * gamma * fb + mac.sigma_sq
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AliasingReport {
    /// Flagged blocks over active MAC blocks, aliasing cascades included.
    pub raw: ProportionEstimate,
    /// First aliasing events over blocks at risk, counted per parity chain
    /// up to and including its first event.
    pub first_event: ProportionEstimate,
    /// Trials without any flag.
    pub clean_trials: ProportionEstimate,
    /// `P̃ / max_n Var(operand_n)`.
    pub operative_vnr: f64,
    pub vnr: VnrReport,
    /// For the cubic lattice: expected first events under the closed form
    /// `1 - (1 - 2Q(s / 2σ_v))^NΛ` per block, and its variance.
    pub predicted_first_events: Option<(f64, f64)>,
}

/// Aliasing tallies of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AliasCounts {
    /// Flagged blocks over active MAC blocks.
    pub raw: ProportionEstimate,
    /// First events over blocks at risk, per parity chain.
    pub first_event: ProportionEstimate,
    /// Inner round (0-based) fed by each block at risk.
    pub at_risk_rounds: Vec<usize>,
}

impl AliasCounts {
    pub fn from_run(run: &MllfcRun, sched: &Schedule) -> Self {
        let mut c = Self::default();
        let mut stopped = [false; 2];
        for k in 0..sched.blocks() {
            let Some(target) = sched.mac_target(k) else {
                continue;
            };
            let flagged = run.alias[k];
            c.raw = c.raw.merge(ProportionEstimate::new(u64::from(flagged), 1));
            let chain = target % 2;
            if !stopped[chain] {
                c.first_event = c
                    .first_event
                    .merge(ProportionEstimate::new(u64::from(flagged), 1));
                c.at_risk_rounds.push(target / 2);
                stopped[chain] = flagged;
            }
        }
        c
    }
}

pub fn aliasing_report(
    runs: &[MllfcRun],
    inner: &LfcScheme,
    bc: &BcParams,
    mac: &MacParams,
    config: &MllfcConfig,
) -> Result<AliasingReport> {
    let sched = config.schedule();
    let var = operand_variances(inner, bc, mac, config)?;
    let worst = var.iter().copied().fold(0.0, f64::max);
    let operative_vnr = if worst > 0.0 {
        mac.power / worst
    } else {
        f64::INFINITY
    };
    let block_p: Vec<f64> = var
        .iter()
        .map(|&v| {
            if v <= 0.0 {
                return 0.0;
            }
            let q = 2.0 * gaussian_q(config.lattice.scale() / (2.0 * v.sqrt()));
            1.0 - (1.0 - q).powi(config.n_lattice as i32)
        })
        .collect();

    let mut raw = ProportionEstimate::default();
    let mut first = ProportionEstimate::default();
    let mut clean = ProportionEstimate::default();
    let (mut expect, mut expect_var) = (0.0, 0.0);
    for run in runs {
        let c = AliasCounts::from_run(run, &sched);
        raw = raw.merge(c.raw);
        first = first.merge(c.first_event);
        clean = clean.merge(ProportionEstimate::new(u64::from(!run.any_alias()), 1));
        for &round in &c.at_risk_rounds {
            let p = block_p[round];
            expect += p;
            expect_var += p * (1.0 - p);
        }
    }
    let vnr = VnrReport::new(config.n_lattice, operative_vnr.min(1e300))?;
    let predicted = (config.lattice.kind() == LatticeKind::Integer).then_some((expect, expect_var));
    Ok(AliasingReport {
        raw,
        first_event: first,
        clean_trials: clean,
        operative_vnr,
        vnr,
        predicted_first_events: predicted,
    })
}
