//! The four experiment commands. Each returns a serialisable summary with a
//! list of named checks and writes its artefacts under the configured
//! output directory.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::channels::{BcParams, Cov2, MacParams};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::svg::region_plot;
use crate::lattice::{aliasing_bound, estimate_pmod_seeded, Lattice, LatticeKind};
use crate::lfc::{simulate_with_noise, LfcScheme};
use crate::mllfc::{mllfc_trial, operand_variances, transform_params, AliasCounts, MllfcConfig, MllfcRun};
use crate::par::{map_range, Execution};
use crate::regions::{curves_csv, region_bundle, symmetric_rate, RegionBundle, RatePoint};
use crate::stats::{gaussian_q, ExactSum, Moments, ProportionEstimate};

/// Tolerance for pointwise comparisons between sampled boundaries, in bits.
pub const REGION_TOL: f64 = 1e-4;
/// Tolerance of the algebraic identities checked per symbol.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Forward power may exceed `P` by this fraction.
pub const FORWARD_POWER_SLACK: f64 = 0.02;
/// Feedback power must match `P̃` to this fraction.
pub const FEEDBACK_POWER_TOL: f64 = 0.01;
/// Standard errors allowed between an estimate and its reference.
pub const Z_LIMIT: f64 = 3.0;

/// A proportion with its Wilson 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Probability {
    pub hits: u64,
    pub trials: u64,
    pub p: f64,
    pub ci95: [f64; 2],
}

impl From<ProportionEstimate> for Probability {
    fn from(e: ProportionEstimate) -> Self {
        let (lo, hi) = e.wilson95();
        Self {
            hits: e.hits,
            trials: e.trials,
            p: e.p(),
            ci95: [lo, hi],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            passed,
            detail: detail.into(),
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// Summary and the files a command wrote.
#[derive(Clone, Debug)]
pub struct CommandOutput<T> {
    pub summary: T,
    pub files: Vec<PathBuf>,
    pub passed: bool,
    /// The JSON-lines document also written to disk.
    pub jsonl: String,
}

#[derive(Serialize)]
struct Line<'a, T: Serialize> {
    record: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn json_line<T: Serialize>(record: &str, body: &T) -> Result<String> {
    let mut s = serde_json::to_string(&Line { record, body })
        .map_err(|e| Error::Internal(format!("summary does not serialise: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

/// Writes the effective configuration, independent of where it is written.
fn write_config(cfg: &ExperimentConfig, files: &mut Vec<PathBuf>) -> Result<()> {
    let mut echo = cfg.clone();
    echo.out = PathBuf::from(".");
    echo.threads = 0;
    write_file(&cfg.out, "config.toml", &echo.to_toml(), files)
}

// ---------------------------------------------------------------------------
// regions

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveSummary {
    pub label: String,
    pub points: usize,
    pub max_r1: f64,
    pub max_r2: f64,
    pub symmetric_rate: f64,
    /// Sup distance to the same curve computed on doubled grids.
    pub refinement_change: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionsSummary {
    pub p_eq: f64,
    pub sigma_eq: Cov2,
    pub curves: Vec<CurveSummary>,
    /// Gaps of no-feedback ⊆ hull ⊆ OL-noiseless hull ⊆ LFC outer bound.
    pub containment_gaps: [f64; 3],
    pub symmetric_improvement: f64,
    /// Sup distance between transformed and noiseless OL boundaries.
    pub transformed_gap: f64,
    pub checks: Vec<Check>,
}

/// Computes the region bundle and its checks without touching the disk.
pub fn regions_analysis(cfg: &ExperimentConfig, exec: Execution) -> Result<(RegionBundle, RegionsSummary)> {
    let (bc, mac) = (cfg.bc()?, cfg.mac()?);
    let grid = cfg.grids.compare;
    let bundle = region_bundle(&bc, &mac, cfg.grids, exec)?;
    let fine = region_bundle(&bc, &mac, cfg.grids.doubled(), exec)?;
    let t = transform_params(&bc, &mac)?;

    let pairs = [
        (&bundle.no_feedback, &fine.no_feedback),
        (&bundle.lfc_outer, &fine.lfc_outer),
        (&bundle.ol_noiseless, &fine.ol_noiseless),
        (&bundle.ol_transformed, &fine.ol_transformed),
        (&bundle.hull, &fine.hull),
    ];
    let curves: Vec<CurveSummary> = pairs
        .iter()
        .map(|(c, f)| CurveSummary {
            label: c.label().to_string(),
            points: c.points().len(),
            max_r1: c.max_r1(),
            max_r2: c.max_r2(),
            symmetric_rate: symmetric_rate(c),
            refinement_change: c.sup_distance(f, grid),
        })
        .collect();
    let gaps = bundle.containment_gaps(grid);
    let improvement = bundle.symmetric_improvement();
    let transformed_gap = bundle.ol_transformed.sup_distance(&bundle.ol_noiseless, grid);

    let names = [
        "no-feedback in hull",
        "hull in ol-noiseless hull",
        "ol-noiseless hull in lfc-outer",
    ];
    let mut checks: Vec<Check> = names
        .iter()
        .zip(gaps)
        .map(|(n, g)| {
            Check::new(
                &format!("containment: {n}"),
                g <= REGION_TOL,
                format!("gap {g:.3e} bits"),
            )
        })
        .collect();
    checks.push(Check::new(
        "strict improvement at the symmetric point",
        improvement > REGION_TOL,
        format!("hull exceeds no-feedback by {improvement:.6} bits"),
    ));
    let worst = curves.iter().map(|c| c.refinement_change).fold(0.0, f64::max);
    checks.push(Check::new(
        "grid refinement",
        worst < REGION_TOL,
        format!("largest change on doubling {worst:.3e} bits"),
    ));
    if mac.sigma_sq == 0.0 {
        checks.push(Check::new(
            "noiseless feedback leaves OL unchanged",
            transformed_gap <= 1e-12,
            format!("sup distance {transformed_gap:.3e}"),
        ));
    }
    let summary = RegionsSummary {
        p_eq: t.p_eq,
        sigma_eq: t.sigma_eq,
        curves,
        containment_gaps: gaps,
        symmetric_improvement: improvement,
        transformed_gap,
        checks,
    };
    Ok((bundle, summary))
}

pub fn cmd_regions(cfg: &ExperimentConfig, exec: Execution) -> Result<CommandOutput<RegionsSummary>> {
    let (bundle, summary) = regions_analysis(cfg, exec)?;
    let mut files = Vec::new();
    write_config(cfg, &mut files)?;
    write_file(&cfg.out, "regions.csv", &bundle.to_csv(), &mut files)?;
    let mut all = bundle.curves().to_vec();
    all.push(&bundle.ol_transformed);
    write_file(&cfg.out, "regions_all.csv", &curves_csv(&all), &mut files)?;
    let title = format!(
        "P={}, s1={}, s2={}, Pfb={}, sfb={}",
        cfg.bc.power, cfg.bc.sigma1_sq, cfg.bc.sigma2_sq, cfg.mac.power, cfg.mac.sigma_sq
    );
    write_file(
        &cfg.out,
        "regions.svg",
        &region_plot(&bundle.curves(), &title),
        &mut files,
    )?;
    let mut jsonl = String::new();
    for c in &summary.curves {
        jsonl.push_str(&json_line("curve", c)?);
    }
    jsonl.push_str(&json_line("regions", &summary)?);
    write_file(&cfg.out, "regions.jsonl", &jsonl, &mut files)?;
    Ok(CommandOutput {
        passed: all_passed(&summary.checks),
        summary,
        files,
        jsonl,
    })
}

// ---------------------------------------------------------------------------
// simulate

/// Outcome of one trial; reproducible from `(seed, trial)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: u64,
    pub copy_success: Vec<bool>,
    pub alias: AliasCounts,
    pub forward_energy: f64,
    pub forward_symbols: u64,
    pub feedback_energy: [f64; 2],
    pub feedback_symbols: [u64; 2],
    pub identity_max_deviation: f64,
}

impl TrialResult {
    pub fn from_run(trial: u64, run: &MllfcRun, config: &MllfcConfig) -> Self {
        Self {
            trial,
            copy_success: run.copies.iter().map(|c| c.success()).collect(),
            alias: AliasCounts::from_run(run, &config.schedule()),
            forward_energy: run.forward_power.energy,
            forward_symbols: run.forward_power.count,
            feedback_energy: run.feedback_power.map(|m| m.energy),
            feedback_symbols: run.feedback_power.map(|m| m.count),
            identity_max_deviation: run.identity_max_deviation,
        }
    }

    pub fn success(&self) -> bool {
        self.copy_success.iter().all(|&s| s)
    }

    pub fn alias_count(&self) -> u64 {
        self.alias.raw.hits
    }
}

/// Order-independent totals over any set of trials.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrialAggregate {
    pub errors: ProportionEstimate,
    pub copy_errors: ProportionEstimate,
    pub alias: ProportionEstimate,
    pub first_event: ProportionEstimate,
    pub aliased_trials: ProportionEstimate,
    pub forward_energy: ExactSum,
    pub forward_symbols: u64,
    pub feedback_energy: [ExactSum; 2],
    pub feedback_symbols: [u64; 2],
    /// Energies that could not be accumulated exactly.
    pub unaccumulated: u64,
    pub identity_max_deviation: f64,
}

impl TrialAggregate {
    pub fn push(&mut self, t: &TrialResult) {
        let fails = t.copy_success.iter().filter(|&&s| !s).count() as u64;
        self.errors = self
            .errors
            .merge(ProportionEstimate::new(u64::from(!t.success()), 1));
        self.copy_errors = self
            .copy_errors
            .merge(ProportionEstimate::new(fails, t.copy_success.len() as u64));
        self.alias = self.alias.merge(t.alias.raw);
        self.first_event = self.first_event.merge(t.alias.first_event);
        self.aliased_trials = self
            .aliased_trials
            .merge(ProportionEstimate::new(u64::from(t.alias_count() > 0), 1));
        self.unaccumulated += u64::from(!self.forward_energy.add(t.forward_energy));
        self.forward_symbols += t.forward_symbols;
        for i in 0..2 {
            self.unaccumulated += u64::from(!self.feedback_energy[i].add(t.feedback_energy[i]));
            self.feedback_symbols[i] += t.feedback_symbols[i];
        }
        self.identity_max_deviation = self.identity_max_deviation.max(t.identity_max_deviation);
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            errors: self.errors.merge(o.errors),
            copy_errors: self.copy_errors.merge(o.copy_errors),
            alias: self.alias.merge(o.alias),
            first_event: self.first_event.merge(o.first_event),
            aliased_trials: self.aliased_trials.merge(o.aliased_trials),
            forward_energy: self.forward_energy.merge(o.forward_energy),
            forward_symbols: self.forward_symbols + o.forward_symbols,
            feedback_energy: [0, 1].map(|i| self.feedback_energy[i].merge(o.feedback_energy[i])),
            feedback_symbols: [0, 1].map(|i| self.feedback_symbols[i] + o.feedback_symbols[i]),
            unaccumulated: self.unaccumulated + o.unaccumulated,
            identity_max_deviation: self.identity_max_deviation.max(o.identity_max_deviation),
        }
    }

    pub fn forward_power(&self) -> f64 {
        self.forward_energy.value() / self.forward_symbols.max(1) as f64
    }

    pub fn feedback_power(&self) -> [f64; 2] {
        [0, 1].map(|i| self.feedback_energy[i].value() / self.feedback_symbols[i].max(1) as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub seed: u64,
    pub first_trial: u64,
    pub trials: u64,
    pub lattice: LatticeKind,
    pub n_lattice: usize,
    pub nc: usize,
    pub beta: f64,
    pub margin: f64,
    pub rates: RatePoint,
    pub message_points: [u64; 2],
    pub error: Probability,
    pub copy_error: Probability,
    pub alias_blocks: Probability,
    pub first_alias_events: Probability,
    pub aliased_trials: Probability,
    pub operative_vnr: f64,
    /// `exp(-NΛ Ep(L))` at the operative VNR.
    pub alias_bound_per_block: f64,
    pub forward_power: f64,
    pub feedback_power: [f64; 2],
    pub identity_max_deviation: f64,
    pub aggregate: TrialAggregate,
    pub checks: Vec<Check>,
}

/// Everything a simulation needs, resolved once from the config.
pub struct SimulationSetup {
    pub bc: BcParams,
    pub mac: MacParams,
    pub config: MllfcConfig,
    pub inner: LfcScheme,
    pub rates: RatePoint,
}

impl SimulationSetup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            bc: cfg.bc()?,
            mac: cfg.mac()?,
            config: cfg.mllfc_config()?,
            inner: cfg.inner_scheme()?,
            rates: cfg.target_rates()?,
        })
    }

    pub fn run(&self, seed: u64, trial: u64) -> Result<MllfcRun> {
        mllfc_trial(&self.inner, &self.bc, &self.mac, &self.config, seed, trial)
    }

    pub fn operative_vnr(&self) -> Result<f64> {
        let var = operand_variances(&self.inner, &self.bc, &self.mac, &self.config)?;
        let worst = var.iter().copied().fold(0.0, f64::max);
        Ok(if worst > 0.0 {
            self.mac.power / worst
        } else {
            f64::INFINITY
        })
    }
}

/// Runs trials `range` in parallel and returns them in trial order.
pub fn simulate_trials(
    setup: &SimulationSetup,
    seed: u64,
    range: std::ops::Range<u64>,
    exec: Execution,
) -> Result<Vec<TrialResult>> {
    map_range(exec, range, |t| {
        setup
            .run(seed, t)
            .map(|run| TrialResult::from_run(t, &run, &setup.config))
    })
    .into_iter()
    .collect()
}

pub fn aggregate(results: &[TrialResult]) -> TrialAggregate {
    let mut a = TrialAggregate::default();
    results.iter().for_each(|t| a.push(t));
    a
}

/// Turns totals into the reported summary and its checks.
pub fn summarize(
    cfg: &ExperimentConfig,
    setup: &SimulationSetup,
    agg: TrialAggregate,
) -> Result<SimulateSummary> {
    let fwd = agg.forward_power();
    let fb = agg.feedback_power();
    let vnr = setup.operative_vnr()?;
    let mut checks = vec![Check::new(
        "forward power",
        fwd <= setup.bc.power * (1.0 + FORWARD_POWER_SLACK),
        format!("{fwd:.6} vs budget {}", setup.bc.power),
    )];
    for (i, p) in fb.iter().enumerate() {
        checks.push(Check::new(
            &format!("feedback power {}", i + 1),
            (p / setup.mac.power - 1.0).abs() <= FEEDBACK_POWER_TOL,
            format!("{p:.6} vs {}", setup.mac.power),
        ));
    }
    checks.push(Check::new(
        "energies accumulated",
        agg.unaccumulated == 0,
        format!("{} non-finite or out-of-range energies", agg.unaccumulated),
    ));
    Ok(SimulateSummary {
        seed: cfg.seed,
        first_trial: cfg.first_trial,
        trials: cfg.trials,
        lattice: cfg.mllfc.lattice,
        n_lattice: cfg.mllfc.n_lattice,
        nc: cfg.ol.nc,
        beta: cfg.mllfc.beta,
        margin: cfg.ol.margin,
        rates: setup.rates,
        message_points: [
            setup.inner.constellation(0).size(),
            setup.inner.constellation(1).size(),
        ],
        error: agg.errors.into(),
        copy_error: agg.copy_errors.into(),
        alias_blocks: agg.alias.into(),
        first_alias_events: agg.first_event.into(),
        aliased_trials: agg.aliased_trials.into(),
        operative_vnr: vnr,
        alias_bound_per_block: aliasing_bound(cfg.mllfc.n_lattice, vnr.min(1e300))?,
        forward_power: fwd,
        feedback_power: fb,
        identity_max_deviation: agg.identity_max_deviation,
        aggregate: agg,
        checks,
    })
}

pub const TRIALS_HEADER: &str =
    "trial,success,copy_failures,alias_blocks,forward_power,feedback_power1,feedback_power2\n";

pub fn trials_csv(results: &[TrialResult]) -> String {
    let mut s = String::from(TRIALS_HEADER);
    for t in results {
        let per = |e: f64, n: u64| e / n.max(1) as f64;
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.trial,
            u8::from(t.success()),
            t.copy_success.iter().filter(|&&x| !x).count(),
            t.alias_count(),
            per(t.forward_energy, t.forward_symbols),
            per(t.feedback_energy[0], t.feedback_symbols[0]),
            per(t.feedback_energy[1], t.feedback_symbols[1]),
        ));
    }
    s
}

pub fn cmd_simulate(cfg: &ExperimentConfig, exec: Execution) -> Result<CommandOutput<SimulateSummary>> {
    let setup = SimulationSetup::from_config(cfg)?;
    let range = cfg.first_trial..cfg.first_trial + cfg.trials;
    let results = simulate_trials(&setup, cfg.seed, range.clone(), exec)?;
    let summary = summarize(cfg, &setup, aggregate(&results))?;

    let mut files = Vec::new();
    write_config(cfg, &mut files)?;
    write_file(&cfg.out, "trials.csv", &trials_csv(&results), &mut files)?;
    let mut traced = setup.config;
    traced.record_transcript = true;
    for t in range.take(cfg.simulate.transcripts as usize) {
        let run = mllfc_trial(&setup.inner, &setup.bc, &setup.mac, &traced, cfg.seed, t)?;
        let csv = run.transcript.as_ref().map(|x| x.to_csv()).unwrap_or_default();
        write_file(&cfg.out, &format!("transcript_trial{t}.csv"), &csv, &mut files)?;
    }
    let jsonl = json_line("simulate", &summary)?;
    write_file(&cfg.out, "simulate.jsonl", &jsonl, &mut files)?;
    Ok(CommandOutput {
        passed: all_passed(&summary.checks),
        summary,
        files,
        jsonl,
    })
}

// ---------------------------------------------------------------------------
// lattice

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeRow {
    pub lattice: LatticeKind,
    pub dim: usize,
    pub vnr: f64,
    pub pmod: Probability,
    pub bound: f64,
    /// `1 - (1 - 2Q(sqrt(3L)))^dim` for the cubic lattice.
    pub closed_form: Option<f64>,
    /// Standard errors between the estimate and the closed form.
    pub z: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeSummary {
    pub samples: u64,
    pub rows: Vec<LatticeRow>,
    /// Ratio of cubic to E8 aliasing probability per VNR, where both are positive.
    pub shaping_ratio: Vec<(f64, Option<f64>)>,
    pub checks: Vec<Check>,
}

/// `1 - (1 - 2Q(sqrt(3L)))^dim`.
pub fn cubic_pmod(dim: usize, vnr: f64) -> f64 {
    let q = 2.0 * gaussian_q((3.0 * vnr).sqrt());
    -(dim as f64 * (-q).ln_1p()).exp_m1()
}

pub fn lattice_table(cfg: &ExperimentConfig, exec: Execution) -> Result<LatticeSummary> {
    let samples = cfg.lattice_sweep.samples;
    let specs = [
        (LatticeKind::Integer, 1),
        (LatticeKind::Integer, 8),
        (LatticeKind::E8, 8),
    ];
    let mut rows = Vec::new();
    for &vnr in &cfg.lattice_sweep.vnr {
        for (kind, dim) in specs {
            let lat = Lattice::scale_to_power(kind, dim, 1.0)?;
            // same seed for every row of one VNR: the 8-dimensional rows see identical noise
            let est = estimate_pmod_seeded(&lat, lat.second_moment() / vnr, samples, cfg.seed, exec);
            let closed = (kind == LatticeKind::Integer).then(|| cubic_pmod(dim, vnr));
            let z = closed.map(|p0| {
                let se = est.stderr_at(p0);
                if se > 0.0 {
                    (est.p() - p0) / se
                } else if est.hits == 0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            });
            rows.push(LatticeRow {
                lattice: kind,
                dim,
                vnr,
                pmod: est.into(),
                bound: aliasing_bound(dim, vnr)?,
                closed_form: closed,
                z,
            });
        }
    }

    let mut checks = Vec::new();
    let worst_z = rows
        .iter()
        .filter_map(|r| r.z)
        .fold(0.0, |a: f64, z| a.max(z.abs()));
    checks.push(Check::new(
        "cubic lattice matches closed form",
        worst_z <= Z_LIMIT,
        format!("largest |z| = {worst_z:.3}"),
    ));
    let low = rows.iter().filter(|r| r.vnr <= 1.0);
    let bad_bound = low.clone().filter(|r| r.bound != 1.0).count();
    checks.push(Check::new(
        "bound is trivial for L <= 1",
        bad_bound == 0,
        format!("{} rows with L <= 1, {bad_bound} with bound != 1", low.count()),
    ));
    let mut shaping = Vec::new();
    let mut worse = Vec::new();
    for block in rows.chunks(specs.len()) {
        let (cubic, e8) = (&block[1], &block[2]);
        shaping.push((cubic.vnr, (e8.pmod.hits > 0).then(|| cubic.pmod.p / e8.pmod.p)));
        if cubic.vnr > 1.0 && e8.pmod.hits > cubic.pmod.hits {
            worse.push(cubic.vnr);
        }
    }
    checks.push(Check::new(
        "E8 aliases no more than the cubic lattice for L > 1",
        worse.is_empty(),
        if worse.is_empty() {
            "paired samples, all VNRs above 1".to_owned()
        } else {
            format!("E8 worse at L = {worse:?}")
        },
    ));
    Ok(LatticeSummary {
        samples,
        rows,
        shaping_ratio: shaping,
        checks,
    })
}

pub const LATTICE_HEADER: &str = "lattice,dim,L,pmod,ci_lo,ci_hi,bound,closed_form\n";

pub fn cmd_lattice(cfg: &ExperimentConfig, exec: Execution) -> Result<CommandOutput<LatticeSummary>> {
    let summary = lattice_table(cfg, exec)?;
    let mut csv = String::from(LATTICE_HEADER);
    let mut jsonl = String::new();
    for r in &summary.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.lattice,
            r.dim,
            r.vnr,
            r.pmod.p,
            r.pmod.ci95[0],
            r.pmod.ci95[1],
            r.bound,
            r.closed_form.map(|p| p.to_string()).unwrap_or_default()
        ));
        jsonl.push_str(&json_line("row", r)?);
    }
    jsonl.push_str(&json_line("lattice", &summary)?);
    let mut files = Vec::new();
    write_config(cfg, &mut files)?;
    write_file(&cfg.out, "lattice.csv", &csv, &mut files)?;
    write_file(&cfg.out, "lattice.jsonl", &jsonl, &mut files)?;
    Ok(CommandOutput {
        passed: all_passed(&summary.checks),
        summary,
        files,
        jsonl,
    })
}

// ---------------------------------------------------------------------------
// verify-reduction

/// Empirical against analytic error variance for one receiver and round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RoundComparison {
    pub round: usize,
    pub user: usize,
    pub analytic: f64,
    /// Mean of `e² / analytic` over alias-free trials.
    pub ratio: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub trials: u64,
    pub beta: f64,
    pub operative_vnr: f64,
    /// Noiseless feedback: the reduction must be exact.
    pub exact_branch: bool,
    pub decode_error: Probability,
    pub alias_blocks: Probability,
    pub clean_trials: Probability,
    pub failures_with_alias: u64,
    pub failures_without_alias: u64,
    pub identity_max_deviation: f64,
    pub paired_max_deviation: f64,
    pub forward_power: f64,
    pub feedback_power: [f64; 2],
    pub rounds: Vec<RoundComparison>,
    pub checks: Vec<Check>,
}

struct VerifyTrial {
    result: TrialResult,
    aliased: bool,
    paired_deviation: f64,
    /// Alias-free trials whose decoding differs from the paired reference.
    decode_mismatch: bool,
    /// Per round and user, `e²/α` of every copy; empty if any block aliased.
    ratios: Vec<[Moments; 2]>,
}

/// Noise covariance per round seen by the inner scheme: `Σ` before any
/// feedback arrives, `Σ_eq` afterwards.
pub fn reference_covariances(bc: &BcParams, eq: &BcParams, nc: usize) -> Vec<Cov2> {
    (0..nc)
        .map(|n| if n == 0 { bc.covariance() } else { eq.covariance() })
        .collect()
}

fn verify_trial(setup: &SimulationSetup, analytic: &[Cov2], seed: u64, t: u64) -> Result<VerifyTrial> {
    let run = setup.run(seed, t)?;
    let result = TrialResult::from_run(t, &run, &setup.config);
    let nc = setup.inner.horizon();
    let mut paired = 0.0f64;
    let mut mismatch = false;
    let mut ratios = vec![[Moments::default(); 2]; if run.any_alias() { 0 } else { nc }];
    for copy in &run.copies {
        let z = [0, 1].map(|i| copy.effective_noise.iter().map(|e| e[i]).collect::<Vec<f64>>());
        let reference = simulate_with_noise(&setup.inner, copy.messages, [&z[0], &z[1]]);
        let clean_rounds = run.first_aliased_round(copy.parity).unwrap_or(nc);
        for n in 0..clean_rounds {
            for i in 0..2 {
                paired = paired.max((reference.y[i][n] - copy.y[i][n]).abs());
            }
        }
        if !run.any_alias() {
            mismatch |= reference.decoded != copy.decoded;
            for (n, m) in ratios.iter_mut().enumerate() {
                for i in 0..2 {
                    let e = copy.errors[n][i];
                    m[i].push(e * e / analytic[n][i][i]);
                }
            }
        }
    }
    Ok(VerifyTrial {
        result,
        aliased: run.any_alias(),
        paired_deviation: paired,
        decode_mismatch: mismatch,
        ratios,
    })
}

pub fn verify_reduction(cfg: &ExperimentConfig, exec: Execution) -> Result<VerifySummary> {
    let setup = SimulationSetup::from_config(cfg)?;
    let eq = setup.config.equivalent_channel(&setup.bc, &setup.mac)?;
    let nc = setup.inner.horizon();
    let analytic = setup
        .inner
        .error_covariances(&reference_covariances(&setup.bc, &eq, nc))?;
    let range = cfg.first_trial..cfg.first_trial + cfg.trials;
    let trials: Vec<VerifyTrial> = map_range(exec, range, |t| verify_trial(&setup, &analytic, cfg.seed, t))
        .into_iter()
        .collect::<Result<_>>()?;

    let mut agg = TrialAggregate::default();
    let mut clean = ProportionEstimate::default();
    let (mut with_alias, mut without_alias) = (0, 0);
    let mut paired = 0.0f64;
    let mut mismatches = 0;
    let mut moments = vec![[Moments::default(); 2]; nc];
    for v in &trials {
        agg.push(&v.result);
        clean = clean.merge(ProportionEstimate::new(u64::from(!v.aliased), 1));
        if !v.result.success() {
            if v.aliased {
                with_alias += 1;
            } else {
                without_alias += 1;
            }
        }
        paired = paired.max(v.paired_deviation);
        mismatches += u64::from(v.decode_mismatch);
        for (acc, m) in moments.iter_mut().zip(&v.ratios) {
            for i in 0..2 {
                acc[i] = acc[i].merge(m[i]);
            }
        }
    }
    let rounds: Vec<RoundComparison> = moments
        .iter()
        .enumerate()
        .flat_map(|(n, m)| {
            let analytic = &analytic;
            (0..2).map(move |i| {
                let se = m[i].stderr();
                RoundComparison {
                    round: n + 1,
                    user: i + 1,
                    analytic: analytic[n][i][i],
                    ratio: m[i].mean(),
                    stderr: se,
                    z: if se > 0.0 { (m[i].mean() - 1.0) / se } else { 0.0 },
                }
            })
        })
        .collect();

    let fwd = agg.forward_power();
    let fb = agg.feedback_power();
    let mut checks = vec![
        Check::new(
            "reduction identity on non-aliased rounds",
            agg.identity_max_deviation <= IDENTITY_TOL,
            format!(
                "max |X - (c - eps1 - eps2 - Zt/gamma)| = {:.3e}",
                agg.identity_max_deviation
            ),
        ),
        Check::new(
            "paired trajectory before aliasing",
            paired <= IDENTITY_TOL,
            format!("max |Y_i - Y_i,ref| = {paired:.3e} over rounds preceding the first alias of each chain"),
        ),
        Check::new(
            "failures attributed to aliasing",
            mismatches == 0,
            format!(
                "{with_alias} failures in aliased trials, {without_alias} in alias-free trials, \
                 {mismatches} alias-free trials decoding differently from the reference"
            ),
        ),
    ];
    if clean.hits == 0 {
        checks.push(Check::new(
            "error variances match the transformed channel",
            false,
            "no alias-free trial to condition on",
        ));
    } else {
        let worst = rounds.iter().fold(0.0f64, |a, r| a.max(r.z.abs()));
        let at = rounds
            .iter()
            .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
            .map(|r| format!(" (round {}, user {})", r.round, r.user))
            .unwrap_or_default();
        checks.push(Check::new(
            "error variances match the transformed channel",
            worst <= Z_LIMIT,
            format!("{} alias-free trials, largest |z| = {worst:.3}{at}", clean.hits),
        ));
    }
    checks.push(Check::new(
        "forward power",
        fwd <= setup.bc.power * (1.0 + FORWARD_POWER_SLACK),
        format!("{fwd:.6} vs budget {}", setup.bc.power),
    ));
    for (i, p) in fb.iter().enumerate() {
        checks.push(Check::new(
            &format!("feedback power {}", i + 1),
            (p / setup.mac.power - 1.0).abs() <= FEEDBACK_POWER_TOL,
            format!("{p:.6} vs {}", setup.mac.power),
        ));
    }
    Ok(VerifySummary {
        seed: cfg.seed,
        trials: cfg.trials,
        beta: cfg.mllfc.beta,
        operative_vnr: setup.operative_vnr()?,
        exact_branch: setup.mac.sigma_sq == 0.0,
        decode_error: agg.errors.into(),
        alias_blocks: agg.alias.into(),
        clean_trials: clean.into(),
        failures_with_alias: with_alias,
        failures_without_alias: without_alias,
        identity_max_deviation: agg.identity_max_deviation,
        paired_max_deviation: paired,
        forward_power: fwd,
        feedback_power: fb,
        rounds,
        checks,
    })
}

pub fn cmd_verify_reduction(cfg: &ExperimentConfig, exec: Execution) -> Result<CommandOutput<VerifySummary>> {
    let summary = verify_reduction(cfg, exec)?;
    let mut jsonl = String::new();
    for c in &summary.checks {
        jsonl.push_str(&json_line("check", c)?);
    }
    jsonl.push_str(&json_line("verify-reduction", &summary)?);
    let mut files = Vec::new();
    write_config(cfg, &mut files)?;
    write_file(&cfg.out, "verify_reduction.jsonl", &jsonl, &mut files)?;
    Ok(CommandOutput {
        passed: all_passed(&summary.checks),
        summary,
        files,
        jsonl,
    })
}
