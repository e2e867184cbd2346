//! Seeded, replicated experiments for SURE-tuned selection.
//!
//! Each replicate records exact per-draw statistics whose expectations are
//! the quantities of interest: the excess degrees of freedom, its quadratic
//! and linear parts, the excess optimism, and the slack of the basic
//! inequality. Replicate `i` always draws its noise from
//! `derive_stream(master_seed, i)` and reduction runs in replicate order, so
//! summaries do not depend on the worker count.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{argmin_first, risks, shell_of_excess};
use crate::error::{Error, Result};
use crate::scalar::{dot, norm_sq, Scalar};
use crate::sequence_model::{derive_stream, GaussianSequenceModel, NoiseStream};
use crate::smoothers::{Smoother, SmootherFamily};

/// Tolerance for the exact per-replicate identities.
pub const IDENTITY_TOL: f64 = 1e-8;

/// Above this many replicates, records are only kept when forced.
pub const RECORD_RETENTION_LIMIT: u64 = 1_000_000;

const CHUNK: u64 = 8192;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord<T> {
    pub replicate_index: u64,
    pub selected: String,
    /// `min_s SURE(s)`.
    pub sure_min: T,
    /// `‖H_ŝ y − θ₀‖²`.
    pub loss_selected: T,
    /// `σ⁻² (H_ŝ y)ᵀ z − tr(H_ŝ)`.
    pub edf_total: T,
    /// `σ⁻² zᵀ H_ŝ z − tr(H_ŝ)`.
    pub edf_quadratic: T,
    /// `σ⁻² (H_ŝ θ₀)ᵀ z`.
    pub edf_linear: T,
    /// `loss_selected + nσ² − sure_min`.
    pub exopt_stat: T,
    /// `nσ² − ‖z‖² − 2θ₀ᵀz`, equal to `exopt_stat − 2σ²·edf_total` and
    /// mean zero.
    pub exopt_remainder: T,
    /// `nσ² − ‖z‖²`.
    pub noise_energy_gap: T,
    /// Peeling shell of the selected member; `None` when `r⋆ = 0`.
    pub shell: Option<u32>,
    /// Right minus left side of the basic inequality
    /// `σ⁻²(R(ŝ) − R(s₀)) ≤ W_ŝ − W_s₀ + 2(Z_ŝ − Z_s₀)`.
    pub basic_inequality_slack: T,
    /// `tr(H_ŝ)`.
    pub df_selected: T,
}

impl<T: Scalar> ReplicateRecord<T> {
    /// `|edf_total − (edf_quadratic + edf_linear)|` relative to `1 + |edf_total|`.
    pub fn edf_decomposition_error(&self) -> f64 {
        let total = self.edf_total.as_f64();
        (total - self.edf_quadratic.as_f64() - self.edf_linear.as_f64()).abs() / (1.0 + total.abs())
    }

    /// `exopt_stat − 2σ²·edf_total − exopt_remainder`.
    pub fn exopt_linkage_error(&self, sigma_sq: T) -> f64 {
        (self.exopt_stat - T::of(2.0) * sigma_sq * self.edf_total - self.exopt_remainder).as_f64()
    }
}

/// A family and model with the per-member quantities that do not depend on
/// the noise precomputed.
#[derive(Debug, Clone)]
pub struct Experiment<'a, T> {
    family: &'a SmootherFamily<T>,
    model: &'a GaussianSequenceModel<T>,
    risks: Vec<T>,
    h_theta: Vec<Vec<T>>,
    oracle: usize,
    r_star: T,
    shells: Option<Vec<u32>>,
}

impl<'a, T: Scalar> Experiment<'a, T> {
    pub fn new(family: &'a SmootherFamily<T>, model: &'a GaussianSequenceModel<T>) -> Result<Self> {
        if family.n() != model.n() {
            return Err(Error::shape("experiment family vs model", model.n(), family.n()));
        }
        let risks = risks(family, model)?;
        let oracle = argmin_first(risks.iter().copied());
        let r_star = risks[oracle] / model.sigma_sq();
        let shells = if r_star > T::zero() {
            Some(
                risks
                    .iter()
                    .map(|&r| shell_of_excess(r - risks[oracle], model.sigma_sq(), r_star))
                    .collect::<Result<_>>()?,
            )
        } else {
            None
        };
        let h_theta = family
            .members()
            .iter()
            .map(|s| s.apply(model.theta0()))
            .collect();
        Ok(Experiment {
            family,
            model,
            risks,
            h_theta,
            oracle,
            r_star,
            shells,
        })
    }

    pub fn family(&self) -> &SmootherFamily<T> {
        self.family
    }

    pub fn model(&self) -> &GaussianSequenceModel<T> {
        self.model
    }

    pub fn risks(&self) -> &[T] {
        &self.risks
    }

    pub fn oracle_index(&self) -> usize {
        self.oracle
    }

    pub fn r_star(&self) -> T {
        self.r_star
    }

    /// Shell of each member, or `None` when `r⋆ = 0`.
    pub fn member_shells(&self) -> Option<&[u32]> {
        self.shells.as_deref()
    }

    pub fn replicate(&self, replicate_index: u64, stream: &mut NoiseStream) -> ReplicateRecord<T> {
        let obs = self.model.sample(stream);
        self.replicate_from_noise(replicate_index, &obs.z)
            .expect("sampled noise has model dimension")
    }

    /// One replicate for a given noise vector.
    pub fn replicate_from_noise(&self, replicate_index: u64, noise: &[T]) -> Result<ReplicateRecord<T>> {
        let obs = self.model.observe(noise)?;
        let (y, z) = (&obs.y, &obs.z);
        let theta = self.model.theta0();
        let s2 = self.model.sigma_sq();
        let two = T::of(2.0);
        let n_sigma_sq = T::of_usize(self.model.n()) * s2;

        let mut best = 0;
        let mut sure_min = T::infinity();
        let mut fitted = Vec::new();
        for (i, s) in self.family.members().iter().enumerate() {
            let hy = s.apply(y);
            let resid: T = y.iter().zip(&hy).map(|(&a, &b)| (a - b) * (a - b)).sum();
            let value = resid + two * s2 * s.df();
            if value < sure_min {
                sure_min = value;
                best = i;
                fitted = hy;
            }
        }
        let chosen = &self.family.members()[best];
        let df = chosen.df();

        let loss_selected: T = fitted
            .iter()
            .zip(theta)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        let hz = chosen.apply(z);
        let edf_total = dot(&fitted, z) / s2 - df;
        let edf_quadratic = dot(z, &hz) / s2 - df;
        let edf_linear = dot(&self.h_theta[best], z) / s2;
        let exopt_stat = loss_selected + n_sigma_sq - sure_min;
        let z_sq = norm_sq(z);
        let exopt_remainder = n_sigma_sq - z_sq - two * dot(theta, z);

        let (w_sel, zl_sel) = self.centered(best, z, &hz);
        let (w_or, zl_or) = if best == self.oracle {
            (w_sel, zl_sel)
        } else {
            let hz_or = self.family.members()[self.oracle].apply(z);
            self.centered(self.oracle, z, &hz_or)
        };
        let lhs = (self.risks[best] - self.risks[self.oracle]) / s2;
        let rhs = w_sel - w_or + two * (zl_sel - zl_or);

        Ok(ReplicateRecord {
            replicate_index,
            selected: chosen.label().to_owned(),
            sure_min,
            loss_selected,
            edf_total,
            edf_quadratic,
            edf_linear,
            exopt_stat,
            exopt_remainder,
            noise_energy_gap: n_sigma_sq - z_sq,
            shell: self.shells.as_ref().map(|s| s[best]),
            basic_inequality_slack: rhs - lhs,
            df_selected: df,
        })
    }

    /// `(W_s, Z_s)` given `H_s z`.
    fn centered(&self, idx: usize, z: &[T], hz: &[T]) -> (T, T) {
        let s: &Smoother<T> = &self.family.members()[idx];
        let s2 = self.model.sigma_sq();
        let two = T::of(2.0);
        let w = (two * dot(z, hz) - norm_sq(hz)) / s2 + s.frob_sq() - two * s.df();
        let theta = self.model.theta0();
        let zlin = -theta
            .iter()
            .zip(&self.h_theta[idx])
            .zip(z.iter().zip(hz))
            .map(|((&t, &ht), (&zi, &hzi))| (t - ht) * (zi - hzi))
            .sum::<T>()
            / s2;
        (w, zlin)
    }
}

/// One replicate of SURE-tuned selection over `family`.
pub fn replicate<T: Scalar>(
    family: &SmootherFamily<T>,
    model: &GaussianSequenceModel<T>,
    replicate_index: u64,
    stream: &mut NoiseStream,
) -> Result<ReplicateRecord<T>> {
    Ok(Experiment::new(family, model)?.replicate(replicate_index, stream))
}

/// Sample mean and its standard error; `stderr` is `None` for a single
/// replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: Option<f64>,
}

impl Estimate {
    /// `|mean − target| ≤ k·stderr`; false when no stderr is available.
    pub fn within(&self, target: f64, k: f64) -> bool {
        self.stderr
            .is_some_and(|se| (self.mean - target).abs() <= k * se)
    }
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample_variance(&self) -> Option<f64> {
        (self.count > 1).then(|| self.m2 / (self.count - 1) as f64)
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean,
            stderr: self
                .sample_variance()
                .map(|v| (v / self.count as f64).sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckTally {
    pub passed: u64,
    pub failed: u64,
    /// Largest violation magnitude observed (0 when all values were on the
    /// right side of the tolerance with room to spare).
    pub worst: f64,
}

impl CheckTally {
    fn record(&mut self, ok: bool, magnitude: f64) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        self.worst = self.worst.max(magnitude);
    }

    pub fn pass_rate(&self) -> f64 {
        let total = self.passed + self.failed;
        if total == 0 {
            1.0
        } else {
            self.passed as f64 / total as f64
        }
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// Per-replicate exact identity checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityChecks {
    /// `edf_total = edf_quadratic + edf_linear`, relative tolerance.
    pub edf_decomposition: CheckTally,
    /// Basic inequality slack `≥ −IDENTITY_TOL`.
    pub basic_inequality: CheckTally,
    /// `exopt_stat − 2σ²·edf_total = exopt_remainder`, tolerance scaled by
    /// `1 + |exopt_stat| + 2σ²|edf_total|`.
    pub exopt_edf_linkage: CheckTally,
}

impl IdentityChecks {
    pub fn all_passed(&self) -> bool {
        self.edf_decomposition.all_passed()
            && self.basic_inequality.all_passed()
            && self.exopt_edf_linkage.all_passed()
    }

    fn record<T: Scalar>(&mut self, rec: &ReplicateRecord<T>, sigma_sq: T) {
        let e = rec.edf_decomposition_error();
        self.edf_decomposition.record(e <= IDENTITY_TOL, e);

        let slack = rec.basic_inequality_slack.as_f64();
        self.basic_inequality
            .record(slack >= -IDENTITY_TOL, (-slack).max(0.0));

        let link = rec.exopt_linkage_error(sigma_sq).abs();
        let scale = 1.0
            + rec.exopt_stat.as_f64().abs()
            + 2.0 * sigma_sq.as_f64() * rec.edf_total.as_f64().abs();
        self.exopt_edf_linkage.record(link <= IDENTITY_TOL * scale, link);
    }
}

pub const ESTIMAND_NAMES: [&str; 9] = [
    "risk_tuned",
    "exopt",
    "edf_total",
    "edf_quadratic",
    "edf_linear",
    "sure_min_mean",
    "exopt_remainder",
    "noise_energy_gap",
    "df_selected",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub n_reps: u64,
    pub master_seed: u64,
    /// Keyed by the names in [`ESTIMAND_NAMES`].
    pub estimates: BTreeMap<String, Estimate>,
    /// Empty when `r⋆ = 0`.
    pub shell_histogram: BTreeMap<u32, u64>,
    pub selection_histogram: BTreeMap<String, u64>,
    pub identity_checks: IdentityChecks,
    pub shells_available: bool,
}

impl MonteCarloSummary {
    pub fn estimate(&self, name: &str) -> Estimate {
        self.estimates[name]
    }
}

/// Streaming reduction of replicate records, fed in replicate order.
#[derive(Debug, Clone)]
pub struct SummaryBuilder<T> {
    sigma_sq: T,
    master_seed: u64,
    accumulators: [Accumulator; 9],
    shell_histogram: BTreeMap<u32, u64>,
    selection_histogram: BTreeMap<String, u64>,
    checks: IdentityChecks,
    shells_available: bool,
}

impl<T: Scalar> SummaryBuilder<T> {
    pub fn new(experiment: &Experiment<'_, T>, master_seed: u64) -> Self {
        let selection_histogram = experiment
            .family()
            .members()
            .iter()
            .map(|m| (m.label().to_owned(), 0))
            .collect();
        SummaryBuilder {
            sigma_sq: experiment.model().sigma_sq(),
            master_seed,
            accumulators: [Accumulator::default(); 9],
            shell_histogram: BTreeMap::new(),
            selection_histogram,
            checks: IdentityChecks::default(),
            shells_available: experiment.member_shells().is_some(),
        }
    }

    pub fn push(&mut self, rec: &ReplicateRecord<T>) {
        let values = [
            rec.loss_selected,
            rec.exopt_stat,
            rec.edf_total,
            rec.edf_quadratic,
            rec.edf_linear,
            rec.sure_min,
            rec.exopt_remainder,
            rec.noise_energy_gap,
            rec.df_selected,
        ];
        for (acc, v) in self.accumulators.iter_mut().zip(values) {
            acc.push(v.as_f64());
        }
        if let Some(l) = rec.shell {
            *self.shell_histogram.entry(l).or_insert(0) += 1;
        }
        *self
            .selection_histogram
            .entry(rec.selected.clone())
            .or_insert(0) += 1;
        self.checks.record(rec, self.sigma_sq);
    }

    pub fn finish(self) -> MonteCarloSummary {
        MonteCarloSummary {
            n_reps: self.accumulators[0].count(),
            master_seed: self.master_seed,
            estimates: ESTIMAND_NAMES
                .iter()
                .zip(&self.accumulators)
                .map(|(name, acc)| (name.to_string(), acc.estimate()))
                .collect(),
            shell_histogram: self.shell_histogram,
            selection_histogram: self.selection_histogram,
            identity_checks: self.checks,
            shells_available: self.shells_available,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub retain_records: bool,
    /// Keep records even above [`RECORD_RETENTION_LIMIT`].
    pub force_records: bool,
}

/// Runs `n_reps` replicates and reduces them into a summary, returning the
/// records too when retention was requested and allowed.
pub fn run_experiment<T: Scalar>(
    family: &SmootherFamily<T>,
    model: &GaussianSequenceModel<T>,
    n_reps: u64,
    master_seed: u64,
    options: RunOptions,
) -> Result<(MonteCarloSummary, Option<Vec<ReplicateRecord<T>>>)> {
    let experiment = Experiment::new(family, model)?;
    run_prepared(&experiment, n_reps, master_seed, options)
}

pub fn run_prepared<T: Scalar>(
    experiment: &Experiment<'_, T>,
    n_reps: u64,
    master_seed: u64,
    options: RunOptions,
) -> Result<(MonteCarloSummary, Option<Vec<ReplicateRecord<T>>>)> {
    if n_reps == 0 {
        return Err(Error::param("n_reps", "need at least one replicate"));
    }
    let keep = options.retain_records && (n_reps <= RECORD_RETENTION_LIMIT || options.force_records);
    let mut builder = SummaryBuilder::new(experiment, master_seed);
    let mut records = keep.then(Vec::new);

    let mut body = || {
        let mut start = 0;
        while start < n_reps {
            let end = (start + CHUNK).min(n_reps);
            let chunk: Vec<ReplicateRecord<T>> = (start..end)
                .into_par_iter()
                .map(|i| experiment.replicate(i, &mut derive_stream(master_seed, i)))
                .collect();
            for rec in &chunk {
                builder.push(rec);
            }
            if let Some(all) = records.as_mut() {
                all.extend(chunk);
            }
            start = end;
        }
    };
    match options.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::param("threads", e.to_string()))?
            .install(body),
        None => body(),
    }
    Ok((builder.finish(), records))
}

/// Monte Carlo check of `E[SURE(s)] = R(s) + nσ²` for a fixed smoother.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SureUnbiasedness {
    pub mean_sure: f64,
    pub stderr: Option<f64>,
    pub target: f64,
    /// `(mean − target)/stderr`; zero when SURE is constant and on target.
    pub z_score: f64,
}

pub fn sure_unbiasedness_check<T: Scalar>(
    smoother: &Smoother<T>,
    model: &GaussianSequenceModel<T>,
    n_reps: u64,
    master_seed: u64,
) -> Result<SureUnbiasedness> {
    if n_reps == 0 {
        return Err(Error::param("n_reps", "need at least one replicate"));
    }
    let target = (crate::criteria::risk(smoother, model)?
        + T::of_usize(model.n()) * model.sigma_sq())
    .as_f64();
    let values: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let obs = model.sample(&mut derive_stream(master_seed, i));
            crate::criteria::sure(smoother, &obs.y, model.sigma()).map(|v| v.as_f64())
        })
        .collect::<Result<_>>()?;
    let mut acc = Accumulator::default();
    values.iter().for_each(|&v| acc.push(v));
    let est = acc.estimate();
    let diff = est.mean - target;
    let z_score = match est.stderr {
        Some(se) if se > 0.0 => diff / se,
        _ if diff.abs() <= 1e-12 * (1.0 + target.abs()) => 0.0,
        _ => diff.signum() * f64::INFINITY,
    };
    Ok(SureUnbiasedness {
        mean_sure: est.mean,
        stderr: est.stderr,
        target,
        z_score,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellRow {
    pub shell: u32,
    pub count: u64,
    /// Empirical `P(ŝ ∈ S_l)`.
    pub frequency: f64,
    /// `|S_l|`.
    pub members: usize,
    /// `|S_l| · exp(−c · 2^l · r⋆ / h_op²)`.
    pub lemma_shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellDecayReport {
    pub r_star: f64,
    /// `max(h_op, 1)`.
    pub h_op: f64,
    pub c_test: f64,
    pub rows: Vec<ShellRow>,
    /// Shells past the first occupied one whose frequency exceeds that of
    /// the previous shell.
    pub increases: Vec<u32>,
}

impl ShellDecayReport {
    pub fn is_nonincreasing(&self) -> bool {
        self.increases.is_empty()
    }
}

/// Empirical shell occupation against the shape `|S_l| exp(−c 2^l r⋆/h_op²)`.
pub fn shell_decay_report<T: Scalar>(
    records: &[ReplicateRecord<T>],
    family: &SmootherFamily<T>,
    model: &GaussianSequenceModel<T>,
    c_test: f64,
) -> Result<ShellDecayReport> {
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    // Records carry no shell only when r⋆ = 0, which is reported below.
    for l in records.iter().filter_map(|r| r.shell) {
        *counts.entry(l).or_insert(0) += 1;
    }
    shell_decay_from_histogram(&counts, family, model, c_test)
}

/// [`shell_decay_report`] from a shell histogram such as
/// [`MonteCarloSummary::shell_histogram`].
pub fn shell_decay_from_histogram<T: Scalar>(
    counts: &BTreeMap<u32, u64>,
    family: &SmootherFamily<T>,
    model: &GaussianSequenceModel<T>,
    c_test: f64,
) -> Result<ShellDecayReport> {
    let experiment = Experiment::new(family, model)?;
    let shells = experiment.member_shells().ok_or_else(|| {
        Error::DegenerateFamily("r_star = 0: shell decay is undefined".to_owned())
    })?;
    let top = shells
        .iter()
        .copied()
        .chain(counts.keys().copied())
        .max()
        .unwrap_or(0);
    let r_star = experiment.r_star().as_f64();
    let h_op = family.h_op().as_f64().max(1.0);
    let total = counts.values().sum::<u64>().max(1) as f64;
    let rows: Vec<ShellRow> = (0..=top)
        .map(|l| {
            let members = shells.iter().filter(|&&s| s == l).count();
            let count = counts.get(&l).copied().unwrap_or(0);
            ShellRow {
                shell: l,
                count,
                frequency: count as f64 / total,
                members,
                lemma_shape: members as f64
                    * (-c_test * 2f64.powi(l as i32) * r_star / (h_op * h_op)).exp(),
            }
        })
        .collect();
    let first = rows.iter().position(|r| r.count > 0);
    let increases = match first {
        Some(f) => rows
            .windows(2)
            .skip(f)
            .filter(|w| w[1].count > w[0].count)
            .map(|w| w[1].shell)
            .collect(),
        None => Vec::new(),
    };
    Ok(ShellDecayReport {
        r_star,
        h_op,
        c_test,
        rows,
        increases,
    })
}

/// Column order of [`write_records_csv`].
pub const RECORD_COLUMNS: [&str; 13] = [
    "replicate_index",
    "selected",
    "sure_min",
    "loss_selected",
    "edf_total",
    "edf_quadratic",
    "edf_linear",
    "exopt_stat",
    "exopt_remainder",
    "noise_energy_gap",
    "shell",
    "basic_inequality_slack",
    "df_selected",
];

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

/// One row per replicate; empty `shell` when shells are undefined.
pub fn write_records_csv<T: Scalar, W: Write>(
    records: &[ReplicateRecord<T>],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        let f = |x: T| format_float(x.as_f64());
        w.write_record([
            r.replicate_index.to_string(),
            r.selected.clone(),
            f(r.sure_min),
            f(r.loss_selected),
            f(r.edf_total),
            f(r.edf_quadratic),
            f(r.edf_linear),
            f(r.exopt_stat),
            f(r.exopt_remainder),
            f(r.noise_energy_gap),
            r.shell.map(|l| l.to_string()).unwrap_or_default(),
            f(r.basic_inequality_slack),
            f(r.df_selected),
        ])?;
    }
    w.flush()?;
    Ok(())
}
