//! Sweeps over (scheme, HARQ kind, L, rate), Monte Carlo aggregation,
//! CSV output and the closed-form validation report.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{joint_events, joint_thresholds, p_joint, p_special_thresholds, special_thresholds, ErrorPair, SpecialCase};
use crate::error::{Error, Result};
use crate::fading::{ChannelDraw, RngStream, UserProfile};
use crate::harq::{optimize_fdma_w, run_trial, HarqConfig, Scheme, TrialOutcome};
use crate::quadrature::{quadrature_oracle, OracleCase, Tolerance};
use crate::HarqKind;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Trials per aggregation chunk. Fixed so that floating-point sums do not
/// depend on how many workers ran.
const CHUNK: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schemes: Vec<Scheme>,
    pub kinds: Vec<HarqKind>,
    pub l_values: Vec<u32>,
    pub rate_start: f64,
    pub rate_stop: f64,
    pub rate_step: f64,
    pub gamma1_db: f64,
    pub gamma2_db: f64,
    pub trials: u64,
    pub seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            kinds: vec![HarqKind::Cc],
            l_values: vec![2],
            rate_start: 1.0,
            rate_stop: 3.5,
            rate_step: 0.25,
            gamma1_db: 20.0,
            gamma2_db: 15.0,
            trials: 100_000,
            seed: 1,
        }
    }
}

fn config_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Config {
        field,
        reason: reason.into(),
    }
}

impl SweepSpec {
    /// Reads a TOML file; missing keys keep their defaults.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str::<PartialSpec>(&text)
            .map(|p| p.apply(Self::default()))
            .map_err(|source| Error::Toml {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(config_err("schemes", "at least one scheme is required"));
        }
        if self.kinds.is_empty() {
            return Err(config_err("kinds", "at least one HARQ kind is required"));
        }
        if self.l_values.is_empty() {
            return Err(config_err("l_values", "at least one L is required"));
        }
        if !(self.rate_step > 0.0 && self.rate_step.is_finite()) {
            return Err(config_err("rate_step", format!("must be > 0, got {}", self.rate_step)));
        }
        if !(self.rate_start >= 0.0 && self.rate_start.is_finite()) {
            return Err(config_err("rate_start", format!("must be finite and >= 0, got {}", self.rate_start)));
        }
        if !(self.rate_stop >= self.rate_start && self.rate_stop.is_finite()) {
            return Err(config_err("rate_stop", format!("must be finite and >= rate_start, got {}", self.rate_stop)));
        }
        if !self.gamma1_db.is_finite() {
            return Err(config_err("gamma1_db", "must be finite"));
        }
        if !self.gamma2_db.is_finite() {
            return Err(config_err("gamma2_db", "must be finite"));
        }
        if self.trials == 0 {
            return Err(config_err("trials", "must be >= 1"));
        }
        if self.trials >= crate::harq::FDMA_TUNING_STREAM_BASE {
            return Err(config_err("trials", "too many trials for the stream layout"));
        }
        Ok(())
    }

    /// `start, start + step, ...` up to `stop`, computed by index so the grid
    /// does not drift.
    pub fn rates(&self) -> Vec<f64> {
        let n = ((self.rate_stop - self.rate_start) / self.rate_step + 1e-9).floor() as u64;
        (0..=n).map(|i| self.rate_start + i as f64 * self.rate_step).collect()
    }
}

/// A TOML file may leave out any field.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialSpec {
    schemes: Option<Vec<Scheme>>,
    kinds: Option<Vec<HarqKind>>,
    l_values: Option<Vec<u32>>,
    rate_start: Option<f64>,
    rate_stop: Option<f64>,
    rate_step: Option<f64>,
    gamma1_db: Option<f64>,
    gamma2_db: Option<f64>,
    trials: Option<u64>,
    seed: Option<u64>,
}

impl PartialSpec {
    fn apply(self, mut s: SweepSpec) -> SweepSpec {
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { s.$f = v; })* };
        }
        take!(schemes, kinds, l_values, rate_start, rate_stop, rate_step, gamma1_db, gamma2_db, trials, seed);
        s
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub scheme: Scheme,
    pub kind: HarqKind,
    #[serde(rename = "L")]
    pub l: u32,
    pub rate: f64,
    pub user: u8,
    pub error_prob: f64,
    pub ci95_halfwidth: f64,
    pub avg_power_per_packet: f64,
    pub trials: u64,
    pub seed: u64,
    pub fdma_w1: Option<f64>,
    pub mean_chosen_alpha: Option<f64>,
}

pub const CSV_HEADER: [&str; 12] = [
    "scheme",
    "kind",
    "L",
    "rate",
    "user",
    "error_prob",
    "ci95_halfwidth",
    "avg_power_per_packet",
    "trials",
    "seed",
    "fdma_w1",
    "mean_chosen_alpha",
];

/// Summed trial outcomes of one sweep point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub trials: u64,
    pub packets: [u64; 2],
    pub failures: [u64; 2],
    pub energy: [f64; 2],
    pub alpha_sum: f64,
    pub alpha_count: u64,
    /// Per-trial sums for the power interval: `Σe²`, `Σn²`, `Σen` with `e`
    /// the trial's energy and `n` its packet count, both users together.
    pub energy_sq: f64,
    pub packets_sq: f64,
    pub cross: f64,
}

impl Tally {
    fn add(&mut self, o: &TrialOutcome) {
        self.trials += 1;
        for k in 0..2 {
            self.packets[k] += u64::from(o.packets[k]);
            self.failures[k] += u64::from(o.failures[k]);
        }
        self.energy[0] += o.energy_user1;
        self.energy[1] += o.energy_user2;
        if let Some(a) = o.chosen_alpha {
            self.alpha_sum += a;
            self.alpha_count += 1;
        }
        let e = o.energy_user1 + o.energy_user2;
        let n = f64::from(o.packets[0] + o.packets[1]);
        self.energy_sq += e * e;
        self.packets_sq += n * n;
        self.cross += e * n;
    }

    fn merge(&mut self, other: &Tally) {
        self.trials += other.trials;
        for k in 0..2 {
            self.packets[k] += other.packets[k];
            self.failures[k] += other.failures[k];
            self.energy[k] += other.energy[k];
        }
        self.alpha_sum += other.alpha_sum;
        self.alpha_count += other.alpha_count;
        self.energy_sq += other.energy_sq;
        self.packets_sq += other.packets_sq;
        self.cross += other.cross;
    }

    pub fn error_prob(&self, user: usize) -> f64 {
        if self.packets[user] == 0 {
            0.0
        } else {
            self.failures[user] as f64 / self.packets[user] as f64
        }
    }

    /// Energy of both users over packets of both users.
    pub fn power_per_packet(&self) -> f64 {
        let p = self.packets[0] + self.packets[1];
        if p == 0 {
            0.0
        } else {
            (self.energy[0] + self.energy[1]) / p as f64
        }
    }

    /// Delta-method 95% interval of [`Self::power_per_packet`], a ratio of
    /// per-trial sums.
    pub fn power_interval(&self) -> (f64, f64) {
        let r = self.power_per_packet();
        let t = self.trials as f64;
        let n = (self.packets[0] + self.packets[1]) as f64;
        if self.trials < 2 || n == 0.0 {
            return (r, r);
        }
        let resid_sq = (self.energy_sq - 2.0 * r * self.cross + r * r * self.packets_sq).max(0.0);
        let var = resid_sq / (t - 1.0) * t / (n * n);
        let half = Z95 * var.sqrt();
        (r - half, r + half)
    }
}

/// Wilson score interval `(lo, hi)` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Runs `trials` trials of `cfg` and sums them in fixed-size chunks.
pub fn simulate(cfg: &HarqConfig, trials: u64, seed: u64) -> Result<Tally> {
    cfg.validate()?;
    let chunks: Vec<u64> = (0..trials.div_ceil(CHUNK)).collect();
    let partial = chunks
        .par_iter()
        .map(|&c| {
            let mut t = Tally::default();
            for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                t.add(&run_trial(cfg, seed, trial, None)?);
            }
            Ok(t)
        })
        .collect::<Result<Vec<Tally>>>()?;
    let mut total = Tally::default();
    partial.iter().for_each(|t| total.merge(t));
    Ok(total)
}

/// Sweep point with its raw counts, before formatting.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub scheme: Scheme,
    pub kind: HarqKind,
    pub l: u32,
    pub rate: f64,
    pub fdma_w1: Option<f64>,
    pub tally: Tally,
}

impl PointResult {
    pub fn records(&self, seed: u64) -> [SweepRecord; 2] {
        let t = &self.tally;
        let power = t.power_per_packet();
        let alpha = (self.scheme == Scheme::Rsma && t.alpha_count > 0).then(|| t.alpha_sum / t.alpha_count as f64);
        [0, 1].map(|k| {
            let (lo, hi) = wilson_interval(t.failures[k], t.packets[k], Z95);
            SweepRecord {
                scheme: self.scheme,
                kind: self.kind,
                l: self.l,
                rate: self.rate,
                user: k as u8 + 1,
                error_prob: t.error_prob(k),
                ci95_halfwidth: (hi - lo) / 2.0,
                avg_power_per_packet: power,
                trials: t.trials,
                seed,
                fdma_w1: self.fdma_w1,
                mean_chosen_alpha: alpha,
            }
        })
    }

    pub fn power_interval(&self) -> (f64, f64) {
        self.tally.power_interval()
    }

    /// Wilson interval of user `k`'s error probability.
    pub fn interval(&self, user: usize) -> (f64, f64) {
        wilson_interval(self.tally.failures[user], self.tally.packets[user], Z95)
    }
}

/// Config of one sweep point; FDMA gets its tuned bandwidth split.
pub fn point_config(spec: &SweepSpec, scheme: Scheme, kind: HarqKind, l: u32, rate: f64) -> HarqConfig {
    let mut cfg = HarqConfig::new(
        scheme,
        kind,
        l,
        UserProfile::new(spec.gamma1_db, rate),
        UserProfile::new(spec.gamma2_db, rate),
    );
    if scheme == Scheme::Fdma {
        cfg.fdma_w1 = optimize_fdma_w(&cfg, spec.trials, spec.seed);
    }
    cfg
}

/// Every point of the sweep with raw counts, in CSV row order.
pub fn run_sweep_points(spec: &SweepSpec) -> Result<Vec<PointResult>> {
    spec.validate()?;
    let mut out = vec![];
    let mut schemes = spec.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let mut kinds = spec.kinds.clone();
    kinds.sort();
    kinds.dedup();
    let mut ls = spec.l_values.clone();
    ls.sort();
    ls.dedup();
    for &scheme in &schemes {
        for &kind in &kinds {
            for &l in &ls {
                for rate in spec.rates() {
                    let cfg = point_config(spec, scheme, kind, l, rate);
                    let tally = simulate(&cfg, spec.trials, spec.seed)?;
                    out.push(PointResult {
                        scheme,
                        kind,
                        l,
                        rate,
                        fdma_w1: (scheme == Scheme::Fdma).then_some(cfg.fdma_w1),
                        tally,
                    });
                }
            }
        }
    }
    Ok(out)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    Ok(run_sweep_points(spec)?.iter().flat_map(|p| p.records(spec.seed)).collect())
}

/// `%g` with six significant digits.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mant), exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}

fn row_order(a: &SweepRecord, b: &SweepRecord) -> Ordering {
    (a.scheme, a.kind, a.l)
        .cmp(&(b.scheme, b.kind, b.l))
        .then(a.rate.total_cmp(&b.rate))
        .then(a.user.cmp(&b.user))
}

pub fn write_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut sorted = records.to_vec();
    sorted.sort_by(row_order);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(fmt_g).unwrap_or_default();
    for r in &sorted {
        w.write_record([
            r.scheme.to_string(),
            r.kind.to_string(),
            r.l.to_string(),
            fmt_g(r.rate),
            r.user.to_string(),
            fmt_g(r.error_prob),
            fmt_g(r.ci95_halfwidth),
            fmt_g(r.avg_power_per_packet),
            r.trials.to_string(),
            r.seed.to_string(),
            opt(r.fdma_w1),
            opt(r.mean_chosen_alpha),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_err)
}

/// The record as it reads back from CSV.
pub fn rounded(r: &SweepRecord) -> SweepRecord {
    let g = |x: f64| fmt_g(x).parse::<f64>().expect("fmt_g output parses");
    SweepRecord {
        rate: g(r.rate),
        error_prob: g(r.error_prob),
        ci95_halfwidth: g(r.ci95_halfwidth),
        avg_power_per_packet: g(r.avg_power_per_packet),
        fdma_w1: r.fdma_w1.map(g),
        mean_chosen_alpha: r.mean_chosen_alpha.map(g),
        ..r.clone()
    }
}

/// Key:value block for the `single` subcommand.
pub fn key_value_block(r: &SweepRecord) -> String {
    let opt = |v: Option<f64>| v.map(fmt_g).unwrap_or_else(|| "-".into());
    format!(
        "scheme: {}\nkind: {}\nL: {}\nrate: {}\nuser: {}\nerror_prob: {}\nci95_halfwidth: {}\navg_power_per_packet: {}\ntrials: {}\nseed: {}\nfdma_w1: {}\nmean_chosen_alpha: {}\n",
        r.scheme,
        r.kind,
        r.l,
        fmt_g(r.rate),
        r.user,
        fmt_g(r.error_prob),
        fmt_g(r.ci95_halfwidth),
        fmt_g(r.avg_power_per_packet),
        r.trials,
        r.seed,
        opt(r.fdma_w1),
        opt(r.mean_chosen_alpha),
    )
}

// ---------------------------------------------------------------------------
// validation

/// One closed-form test case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPoint {
    pub mean1: f64,
    pub mean2: f64,
    pub case: OracleCase,
    pub kind: HarqKind,
}

impl ValidationPoint {
    pub fn closed_form(&self) -> Result<ErrorPair> {
        match self.case {
            OracleCase::Joint { ts, alpha } => p_joint(&ts, self.mean1, self.mean2, alpha),
            OracleCase::Special { gamma1, gamma2 } => p_special_thresholds(gamma1, gamma2, self.mean1, self.mean2),
        }
    }

    /// `(a, b, a2, b2, alpha)` of the underlying events.
    pub fn event_params(&self) -> (f64, f64, f64, f64, f64) {
        match self.case {
            OracleCase::Joint { ts, alpha } => (ts.g11_1, ts.g2_1, ts.g11_2, ts.g2_2, alpha),
            OracleCase::Special { gamma1, gamma2 } => (gamma1, gamma2, gamma1, gamma2, 1.0),
        }
    }

    /// Whether the point sits in the `a b >= 1` branch.
    pub fn upper_branch(&self) -> bool {
        let (a, b, ..) = self.event_params();
        a * b >= 1.0
    }

    pub fn is_special(&self) -> bool {
        matches!(self.case, OracleCase::Special { .. })
    }
}

fn log_uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo * (hi / lo).powf(rng.next_open_unit())
}

fn uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_open_unit()
}

/// Random points with `Γ1 ∈ [10, 1000]`, `Γ2 ∈ [3, 300]`, `α ∈ [0.05, 0.95]`.
///
/// Thresholds come from a random round-0 draw and rates, so CC and IR
/// substitutions are both exercised. Points cycle through
/// (joint, special) x (CC, IR) x (upper, lower branch); a draw is resampled
/// until its thresholds are positive and in the requested branch.
pub fn validation_grid(n: usize, seed: u64) -> Vec<ValidationPoint> {
    let mut rng = RngStream::new(seed, 0);
    (0..n)
        .map(|i| {
            let special = i % 2 == 1;
            let kind = HarqKind::ALL[(i / 2) % 2];
            let upper = (i / 4) % 2 == 0;
            loop {
                let mean1 = log_uniform(&mut rng, 10.0, 1000.0);
                let mean2 = log_uniform(&mut rng, 3.0, 300.0);
                let alpha = uniform(&mut rng, 0.05, 0.95);
                let r1 = uniform(&mut rng, 0.5, 6.0);
                let r2 = uniform(&mut rng, 0.5, 6.0);
                let draw = ChannelDraw::new(rng.next_exp(mean1 / 8.0), rng.next_exp(mean2 / 8.0));
                let case = if special {
                    let which = if rng.next_open_unit() < 0.5 {
                        SpecialCase::Alpha0
                    } else {
                        SpecialCase::Alpha1
                    };
                    let (gamma1, gamma2) = special_thresholds(&draw, r1, r2, which, kind);
                    OracleCase::Special { gamma1, gamma2 }
                } else {
                    OracleCase::Joint {
                        ts: joint_thresholds(&draw, alpha, r1, r2, kind),
                        alpha,
                    }
                };
                let p = ValidationPoint { mean1, mean2, case, kind };
                let (a, b, ..) = p.event_params();
                if a > 0.0 && b > 0.0 && p.upper_branch() == upper {
                    return p;
                }
            }
        })
        .collect()
}

/// Event counts `[E1, E2, E3]` over `n` paired exponential draws.
pub fn monte_carlo_events(p: &ValidationPoint, n: u64, rng: &mut RngStream) -> [u64; 3] {
    let (a, b, a2, b2, alpha) = p.event_params();
    let mut counts = [0u64; 3];
    for _ in 0..n {
        let x = rng.next_exp(p.mean1);
        let y = rng.next_exp(p.mean2);
        let s = alpha * x;
        let first1 = s / (1.0 + y) >= a;
        let first2 = y / (1.0 + s) >= b;
        if !first1 && !first2 {
            counts[0] += 1;
        }
        if first2 && s < a2 {
            counts[1] += 1;
        }
        if first1 && y < b2 {
            counts[2] += 1;
        }
    }
    counts
}

/// The two reported probabilities from event counts.
pub fn pair_counts(p: &ValidationPoint, c: [u64; 3]) -> [u64; 2] {
    if p.is_special() {
        [c[0] + c[1], c[0] + c[2]]
    } else {
        [c[0] + c[1] + c[2], c[0] + c[2]]
    }
}

/// Binomial z-score of `count / n` against `p`; a zero-variance miss is infinite.
pub fn z_score(count: u64, n: u64, p: f64) -> f64 {
    let phat = count as f64 / n as f64;
    let var = p * (1.0 - p) / n as f64;
    if var > 0.0 {
        (phat - p) / var.sqrt()
    } else if phat == p {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Relative error of `got` against reference `want`; exact zeros agree.
pub fn rel_error(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCheck {
    pub point: ValidationPoint,
    pub closed_form: ErrorPair,
    pub quadrature: ErrorPair,
    pub rel_error: f64,
    pub z: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCheck {
    pub a: f64,
    pub b_below: f64,
    pub b_above: f64,
    /// Closed-form change across the boundary minus the quadrature change.
    pub jump: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<PointCheck>,
    pub boundary: Vec<BoundaryCheck>,
    pub failures: Vec<String>,
    pub mc_draws: u64,
}

pub const REL_LIMIT: f64 = 1e-6;
pub const Z_LIMIT: f64 = 4.0;
pub const JUMP_LIMIT: f64 = 1e-6;

impl ValidationReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.checks.iter().flat_map(|c| c.z).map(f64::abs).fold(0.0, f64::max)
    }

    /// Share of points with both |z| within the limit.
    pub fn z_pass_fraction(&self) -> f64 {
        if self.checks.is_empty() {
            return 1.0;
        }
        let ok = self.checks.iter().filter(|c| c.z.iter().all(|z| z.abs() <= Z_LIMIT)).count();
        ok as f64 / self.checks.len() as f64
    }

    pub fn max_jump(&self) -> f64 {
        self.boundary.iter().map(|b| b.jump.abs()).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
            && self.max_rel_error() <= REL_LIMIT
            && self.max_abs_z() <= Z_LIMIT
            && self.max_jump() <= JUMP_LIMIT
    }

    pub fn summary(&self) -> String {
        format!(
            "points={} max_rel_error={:e} max_abs_z={:.3} z_pass_fraction={:.4} boundary_points={} max_boundary_jump={:e} failures={}",
            self.checks.len(),
            self.max_rel_error(),
            self.max_abs_z(),
            self.z_pass_fraction(),
            self.boundary.len(),
            self.max_jump(),
            self.failures.len(),
        )
    }
}

/// Closed form against quadrature and (if `mc_draws > 0`) Monte Carlo.
pub fn check_points(points: &[ValidationPoint], mc_draws: u64, seed: u64) -> (Vec<PointCheck>, Vec<String>) {
    let tol = Tolerance::default();
    let results: Vec<std::result::Result<PointCheck, String>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let cf = p.closed_form().map_err(|e| format!("point {i}: closed form: {e}"))?;
            let q = quadrature_oracle(&p.case, p.mean1, p.mean2, &tol).map_err(|e| format!("point {i}: quadrature: {e}"))?;
            let rel = rel_error(cf.p11, q.p11).max(rel_error(cf.p2, q.p2));
            let z = if mc_draws > 0 {
                let mut rng = RngStream::new(seed, 1 + i as u64);
                let c = pair_counts(p, monte_carlo_events(p, mc_draws, &mut rng));
                [z_score(c[0], mc_draws, cf.p11), z_score(c[1], mc_draws, cf.p2)]
            } else {
                [0.0; 2]
            };
            Ok(PointCheck {
                point: *p,
                closed_form: cf,
                quadrature: q,
                rel_error: rel,
                z,
            })
        })
        .collect();
    let mut checks = vec![];
    let mut failures = vec![];
    for r in results {
        match r {
            Ok(c) => checks.push(c),
            Err(e) => failures.push(e),
        }
    }
    (checks, failures)
}

/// Points straddling `a b = 1` at relative offset `1e-4`.
pub fn boundary_checks(n: usize, seed: u64) -> (Vec<BoundaryCheck>, Vec<String>) {
    let tol = Tolerance::default();
    let mut rng = RngStream::new(seed, u64::MAX);
    let mut out = vec![];
    let mut failures = vec![];
    for i in 0..n {
        let a = log_uniform(&mut rng, 0.05, 20.0);
        let a2 = a * rng.next_open_unit();
        let alpha = uniform(&mut rng, 0.05, 0.95);
        let m1 = log_uniform(&mut rng, 10.0, 1000.0);
        let m2 = log_uniform(&mut rng, 3.0, 300.0);
        let b_below = (1.0 - 1e-4) / a;
        let b_above = (1.0 + 1e-4) / a;
        let b2 = b_below * rng.next_open_unit();
        let eval = |b: f64| -> std::result::Result<([f64; 3], [f64; 3]), String> {
            let cf = joint_events(a, b, a2, b2, alpha, m1, m2);
            let q = crate::quadrature::joint_events_numeric(a, b, a2, b2, alpha, m1, m2, &tol)
                .map_err(|e| format!("boundary point {i}: {e}"))?;
            Ok((cf, q))
        };
        match (eval(b_below), eval(b_above)) {
            (Ok((c0, q0)), Ok((c1, q1))) => {
                let jump = (0..3).map(|k| ((c1[k] - c0[k]) - (q1[k] - q0[k])).abs()).fold(0.0, f64::max);
                out.push(BoundaryCheck { a, b_below, b_above, jump });
            }
            (Err(e), _) | (_, Err(e)) => failures.push(e),
        }
    }
    (out, failures)
}

/// Full validation: `points` random points, each against quadrature and
/// `mc_draws` Monte Carlo draws, plus boundary continuity.
pub fn run_validate_with(points: usize, seed: u64, mc_draws: u64) -> Result<ValidationReport> {
    if points == 0 {
        return Err(config_err("points", "must be >= 1"));
    }
    let grid = validation_grid(points, seed);
    let (checks, mut failures) = check_points(&grid, mc_draws, seed);
    let (boundary, bf) = boundary_checks((points / 10).max(4), seed);
    failures.extend(bf);
    Ok(ValidationReport {
        checks,
        boundary,
        failures,
        mc_draws,
    })
}

pub const VALIDATE_MC_DRAWS: u64 = 1_000_000;

pub fn run_validate(points: usize, seed: u64) -> Result<ValidationReport> {
    run_validate_with(points, seed, VALIDATE_MC_DRAWS)
}
