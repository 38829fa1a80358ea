//! Monte Carlo studies: coverage and length of split-ratio confidence sets
//! against the normal-limit LS interval, unit-root rejection rates, and a
//! streaming e-process demo.
//!
//! Replications run on a worker pool but every replication owns a seed
//! derived from `(seed, row, replication)` and results are reduced in index
//! order, so reports are byte-identical for any worker count.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{asymptotic_ls_ci, df_null_quantiles, df_test, Decision, NullQuantileTable};
use crate::error::{Error, Result};
use crate::estimation::EstimatorSpec;
use crate::model::{simulate, Family, InitPolicy};
use crate::region::{Interval, ScanConfig};
use crate::rng::child_seed;
use crate::sequential::EProcessState;
use crate::split::{p_value_from_log_e, split_region, test_statistic, NullSpec, SplitConfig};

pub const WORKERS_ENV: &str = "ARINFER_WORKERS";
/// Root seed of the shipped reference outputs.
pub const DEFAULT_SEED: u64 = 20220;
/// Share of replications allowed to fail before a study is abandoned.
pub const FAILURE_BUDGET: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    NormalCi,
    CauchyCi,
    UnitRoot,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: Study,
    pub family: Family,
    /// Replications per `theta0` row.
    pub r: usize,
    pub t_len: usize,
    /// Split point; `None` means `floor(T / 2)`.
    pub t1: Option<usize>,
    pub alpha: f64,
    pub theta0: Vec<f64>,
    pub estimator: EstimatorSpec,
    pub seed: u64,
    /// Simple null for the unit-root and sequential tests.
    pub null_theta: f64,
    /// Keep per-replication records in the report.
    pub keep_records: bool,
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl StudyConfig {
    pub fn normal_ci(seed: u64) -> Self {
        Self {
            study: Study::NormalCi,
            family: Family::Normal,
            r: 1000,
            t_len: 100,
            t1: None,
            alpha: 0.1,
            theta0: vec![0.5],
            estimator: EstimatorSpec::LeastSquares,
            seed,
            null_theta: 1.0,
            keep_records: true,
            workers: None,
        }
    }

    pub fn cauchy_ci(seed: u64) -> Self {
        Self { study: Study::CauchyCi, family: Family::Cauchy, ..Self::normal_ci(seed) }
    }

    pub fn unit_root(seed: u64) -> Self {
        Self {
            study: Study::UnitRoot,
            t_len: 1000,
            theta0: vec![0.0, 0.5, 0.9, 0.95, 1.0],
            keep_records: false,
            ..Self::normal_ci(seed)
        }
    }

    pub fn sequential_demo(seed: u64) -> Self {
        Self { study: Study::Custom, r: 1, t_len: 200, null_theta: 0.0, keep_records: false, ..Self::normal_ci(seed) }
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig { t1: self.t1.unwrap_or(self.t_len / 2) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::arg("r must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::arg(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.theta0.is_empty() || self.theta0.iter().any(|t| !t.is_finite()) {
            return Err(Error::arg("theta0 list must be non-empty and finite"));
        }
        if self.t_len < 3 {
            return Err(Error::arg("T must be at least 3"));
        }
        let t1 = self.split().t1;
        if t1 < 2 || t1 + 1 > self.t_len {
            return Err(Error::arg(format!("t1 = {t1} must satisfy 2 <= t1 <= T - 1")));
        }
        if let EstimatorSpec::Mle { tol, .. } = self.estimator {
            if !(tol > 0.0) {
                return Err(Error::arg("MLE tolerance must be positive"));
            }
        }
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON config.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn replication_seed(&self, row: usize, rep: usize) -> u64 {
        child_seed(self.seed, &[row as u64, rep as u64])
    }
}

/// Provenance attached to every emitted file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ReportMeta {
    fn for_config(cfg: &StudyConfig) -> Self {
        Self {
            version: format!("v{}", env!("CARGO_PKG_VERSION")),
            seed: cfg.seed,
            config_hash: cfg.config_hash(),
            notes: Vec::new(),
        }
    }

    fn csv_preamble(&self) -> String {
        format!("# version={} seed={} config_hash={}\n", self.version, self.seed, self.config_hash)
    }
}

/// One replication of a confidence-interval study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiRecord {
    pub replication: usize,
    pub theta0: f64,
    pub seed: u64,
    pub theta_hat: f64,
    pub fs_intervals: Vec<Interval>,
    pub fs_length: f64,
    pub fs_covers: bool,
    pub ls_lo: f64,
    pub ls_hi: f64,
    pub ls_covers: bool,
    pub ls_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiRow {
    pub theta0: f64,
    pub cp_fs: f64,
    pub cp_ls: f64,
    pub al_fs: f64,
    pub al_ls: f64,
    pub se_cp_fs: f64,
    pub se_cp_ls: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub n_ls_clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRootRecord {
    pub replication: usize,
    pub theta0: f64,
    pub seed: u64,
    pub log_s: f64,
    pub p_value: f64,
    pub fs_reject: bool,
    pub asym_reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRootRow {
    pub theta0: f64,
    pub pr_fs: f64,
    pub pr_asym: f64,
    pub se_pr_fs: f64,
    pub se_pr_asym: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// Per-trajectory summary of the sequential demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialRow {
    pub replication: usize,
    pub theta0: f64,
    pub final_t: usize,
    pub final_log_n: f64,
    pub min_p_bar: f64,
    pub rejected: bool,
    pub covered_throughout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub meta: ReportMeta,
    pub config: StudyConfig,
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ci_rows: Vec<CiRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unit_root_rows: Vec<UnitRootRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sequential_rows: Vec<SequentialRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ci_records: Vec<CiRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unit_root_records: Vec<UnitRootRecord>,
    /// Not serialized: it would break byte-identical reruns.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl ExperimentReport {
    fn new(cfg: &StudyConfig) -> Self {
        Self {
            meta: ReportMeta::for_config(cfg),
            config: cfg.clone(),
            replications: cfg.r,
            ci_rows: Vec::new(),
            unit_root_rows: Vec::new(),
            sequential_rows: Vec::new(),
            ci_records: Vec::new(),
            unit_root_records: Vec::new(),
            wall_time: Duration::ZERO,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Summary table as CSV, one line per `theta0` row.
    pub fn summary_csv(&self) -> Result<String> {
        let mut out = self.meta.csv_preamble().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            for row in &self.ci_rows {
                w.serialize(row)?;
            }
            for row in &self.unit_root_rows {
                w.serialize(row)?;
            }
            for row in &self.sequential_rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }
}

/// Binomial standard error of a proportion.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

fn worker_count(cfg: &StudyConfig) -> Option<usize> {
    cfg.workers.or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok())).filter(|&n| n > 0)
}

/// Runs `job(i)` for `i in 0..n` on the configured pool; results come back
/// in index order.
fn run_indexed<T, F>(cfg: &StudyConfig, n: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    match worker_count(cfg) {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::arg(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(|| (0..n).into_par_iter().map(&job).collect()))
        }
        None => Ok((0..n).into_par_iter().map(&job).collect()),
    }
}

fn check_budget(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > FAILURE_BUDGET * total as f64 {
        Err(Error::FailureBudget { failed, total })
    } else {
        Ok(())
    }
}

fn one_ci_replication(cfg: &StudyConfig, row: usize, rep: usize, theta0: f64, scan: &ScanConfig) -> Result<CiRecord> {
    let seed = cfg.replication_seed(row, rep);
    let model = cfg.family.model();
    let series = simulate(model, theta0, cfg.t_len, InitPolicy::default_for(theta0), seed)?;
    let fs = split_region(model, &series, cfg.split(), &cfg.estimator, cfg.alpha, scan)?;
    let ls = asymptotic_ls_ci(&series, cfg.alpha)?;
    Ok(CiRecord {
        replication: rep,
        theta0,
        seed,
        theta_hat: fs.theta_hat,
        fs_length: fs.region.total_length(),
        fs_covers: fs.region.contains(theta0),
        fs_intervals: fs.region.intervals().to_vec(),
        ls_lo: ls.lo,
        ls_hi: ls.hi,
        ls_covers: ls.contains(theta0),
        ls_clamped: ls.clamped,
    })
}

/// Aggregates CP and AL from records.
pub fn summarize_ci(theta0: f64, records: &[CiRecord], n_failed: usize) -> CiRow {
    let n = records.len();
    let frac = |k: usize| if n == 0 { f64::NAN } else { k as f64 / n as f64 };
    let mean = |s: f64| if n == 0 { f64::NAN } else { s / n as f64 };
    let cp_fs = frac(records.iter().filter(|r| r.fs_covers).count());
    let cp_ls = frac(records.iter().filter(|r| r.ls_covers).count());
    CiRow {
        theta0,
        cp_fs,
        cp_ls,
        al_fs: mean(records.iter().map(|r| r.fs_length).sum()),
        al_ls: mean(records.iter().map(|r| r.ls_hi - r.ls_lo).sum()),
        se_cp_fs: binomial_se(cp_fs, n),
        se_cp_ls: binomial_se(cp_ls, n),
        n_ok: n,
        n_failed,
        n_ls_clamped: records.iter().filter(|r| r.ls_clamped).count(),
    }
}

/// Coverage and length of split-ratio regions versus LS intervals.
pub fn run_ci_study(cfg: &StudyConfig) -> Result<ExperimentReport> {
    if cfg.study == Study::UnitRoot {
        return Err(Error::arg("run_ci_study does not run the unit-root study"));
    }
    cfg.validate()?;
    let start = Instant::now();
    let scan = ScanConfig::default();
    let mut report = ExperimentReport::new(cfg);
    for (row, &theta0) in cfg.theta0.iter().enumerate() {
        let outcomes = run_indexed(cfg, cfg.r, |rep| one_ci_replication(cfg, row, rep, theta0, &scan))?;
        let mut records = Vec::with_capacity(cfg.r);
        let mut failed = 0;
        for outcome in outcomes {
            match outcome {
                Ok(rec) => records.push(rec),
                Err(_) => failed += 1,
            }
        }
        check_budget(failed, cfg.r)?;
        report.ci_rows.push(summarize_ci(theta0, &records, failed));
        if cfg.keep_records {
            report.ci_records.extend(records);
        }
    }
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Null table for the asymptotic test: the shipped one when it matches the
/// study's T and level, a fresh 10^5-path simulation otherwise.
pub fn default_df_table(cfg: &StudyConfig) -> Result<NullQuantileTable> {
    let shipped = NullQuantileTable::shipped();
    if shipped.t_sim == cfg.t_len && shipped.quantile(cfg.alpha).is_some() {
        return Ok(shipped);
    }
    df_null_quantiles(&[cfg.alpha], 100_000, cfg.t_len, child_seed(cfg.seed, &[u64::MAX]))
}

pub fn run_unit_root_study(cfg: &StudyConfig) -> Result<ExperimentReport> {
    let table = default_df_table(cfg)?;
    run_unit_root_study_with_table(cfg, &table)
}

/// Rejection rates of the split test of `theta = null_theta` and of the
/// Dickey-Fuller normalized-bias test.
pub fn run_unit_root_study_with_table(cfg: &StudyConfig, table: &NullQuantileTable) -> Result<ExperimentReport> {
    if cfg.study != Study::UnitRoot {
        return Err(Error::arg("run_unit_root_study needs study = unit_root"));
    }
    if cfg.family != Family::Normal {
        return Err(Error::arg("the unit-root study is defined for the normal family"));
    }
    cfg.validate()?;
    if table.quantile(cfg.alpha).is_none() {
        return Err(Error::arg(format!("null table has no quantile at alpha = {}", cfg.alpha)));
    }
    let start = Instant::now();
    let mut report = ExperimentReport::new(cfg);
    report.meta.notes.push(format!(
        "asymptotic test uses normalized-bias quantiles simulated at T = {} (n = {}, seed = {})",
        table.t_sim, table.n_sims, table.seed
    ));
    let model = cfg.family.model();
    let null = NullSpec::Simple(cfg.null_theta);
    for (row, &theta0) in cfg.theta0.iter().enumerate() {
        let outcomes = run_indexed(cfg, cfg.r, |rep| -> Result<UnitRootRecord> {
            let seed = cfg.replication_seed(row, rep);
            let series = simulate(model, theta0, cfg.t_len, InitPolicy::default_for(theta0), seed)?;
            let test = test_statistic(model, &series, cfg.split(), &cfg.estimator, &null)?;
            let asym = df_test(&series, table, cfg.alpha)?;
            Ok(UnitRootRecord {
                replication: rep,
                theta0,
                seed,
                log_s: test.log_s,
                p_value: test.p_value,
                fs_reject: test.p_value <= cfg.alpha,
                asym_reject: asym == Decision::Reject,
            })
        })?;
        let mut records = Vec::with_capacity(cfg.r);
        let mut failed = 0;
        for outcome in outcomes {
            match outcome {
                Ok(rec) => records.push(rec),
                Err(_) => failed += 1,
            }
        }
        check_budget(failed, cfg.r)?;
        report.unit_root_rows.push(summarize_unit_root(theta0, &records, failed));
        if cfg.keep_records {
            report.unit_root_records.extend(records);
        }
    }
    report.wall_time = start.elapsed();
    Ok(report)
}

pub fn summarize_unit_root(theta0: f64, records: &[UnitRootRecord], n_failed: usize) -> UnitRootRow {
    let n = records.len();
    let frac = |k: usize| if n == 0 { f64::NAN } else { k as f64 / n as f64 };
    let pr_fs = frac(records.iter().filter(|r| r.fs_reject).count());
    let pr_asym = frac(records.iter().filter(|r| r.asym_reject).count());
    UnitRootRow {
        theta0,
        pr_fs,
        pr_asym,
        se_pr_fs: binomial_se(pr_fs, n),
        se_pr_asym: binomial_se(pr_asym, n),
        n_ok: n,
        n_failed,
    }
}

/// One row of the FS/LS interval pairs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiPairRow {
    pub replication: usize,
    pub method: String,
    pub lo: f64,
    pub hi: f64,
    pub covers_theta0: bool,
}

/// The first `k` replications as FS/LS interval pairs. FS regions that are
/// not intervals are reported by their hull.
pub fn ci_pair_rows(report: &ExperimentReport, k: usize) -> Result<Vec<CiPairRow>> {
    if report.ci_records.is_empty() {
        return Err(Error::arg("report carries no per-replication records"));
    }
    if k > report.ci_records.len() {
        return Err(Error::arg(format!("asked for {k} pairs but only {} records exist", report.ci_records.len())));
    }
    let mut rows = Vec::with_capacity(2 * k);
    for rec in &report.ci_records[..k] {
        let hull = rec
            .fs_intervals
            .first()
            .zip(rec.fs_intervals.last())
            .map(|(a, b)| (a.lo, b.hi))
            .unwrap_or((f64::NAN, f64::NAN));
        rows.push(CiPairRow {
            replication: rec.replication,
            method: "FS".into(),
            lo: hull.0,
            hi: hull.1,
            covers_theta0: rec.fs_covers,
        });
        rows.push(CiPairRow {
            replication: rec.replication,
            method: "LS".into(),
            lo: rec.ls_lo,
            hi: rec.ls_hi,
            covers_theta0: rec.ls_covers,
        });
    }
    Ok(rows)
}

pub fn emit_ci_pairs(report: &ExperimentReport, k: usize, path: &Path) -> Result<()> {
    let rows = ci_pair_rows(report, k)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(report.meta.csv_preamble().as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`emit_ci_pairs`].
pub fn read_ci_pairs(path: &Path) -> Result<Vec<CiPairRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Per-step output of the sequential demo. Region columns hold hulls; an
/// empty region has NaN ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialStep {
    pub replication: usize,
    pub t: usize,
    pub log_n: f64,
    pub p_bar: f64,
    pub d_lo: f64,
    pub d_hi: f64,
    pub dbar_lo: f64,
    pub dbar_hi: f64,
    pub dbar_covers_theta0: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialDemo {
    pub report: ExperimentReport,
    pub steps: Vec<SequentialStep>,
}

impl SequentialDemo {
    pub fn steps_csv(&self) -> Result<String> {
        let mut out = self.report.meta.csv_preamble().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            for s in &self.steps {
                w.serialize(s)?;
            }
            w.flush()?;
        }
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }
}

fn hull_ends(region: &crate::region::ConfidenceRegion) -> (f64, f64) {
    region.hull().map_or((f64::NAN, f64::NAN), |h| (h.lo, h.hi))
}

/// Streams a series through a fresh e-process and records every step.
pub fn stream_series(
    family: Family,
    plugin: EstimatorSpec,
    values: &[f64],
    alpha: f64,
    null: &NullSpec,
    theta0: f64,
    replication: usize,
) -> Result<(EProcessState, Vec<SequentialStep>)> {
    let scan = ScanConfig { allow_unbounded: true, ..ScanConfig::default() };
    let mut state = EProcessState::new(family, plugin, 0.0)?.with_monitoring(alpha, scan)?;
    let mut steps = Vec::with_capacity(values.len());
    for &x in values {
        state.update(x)?;
        let log_n = state.log_n(null, crate::estimation::DEFAULT_MLE_TOL)?;
        let (d, dbar) = state.confidence_sequence(alpha, &scan)?;
        let (d_lo, d_hi) = hull_ends(&d);
        let (dbar_lo, dbar_hi) = hull_ends(&dbar);
        steps.push(SequentialStep {
            replication,
            t: state.t(),
            log_n,
            p_bar: p_value_from_log_e(log_n),
            d_lo,
            d_hi,
            dbar_lo,
            dbar_hi,
            dbar_covers_theta0: dbar.contains(theta0),
        });
    }
    Ok((state, steps))
}

/// Simulates `r` trajectories of length `T` under `theta0[0]` and streams
/// each through the e-process.
pub fn run_sequential_demo(cfg: &StudyConfig) -> Result<SequentialDemo> {
    if cfg.r == 0 || !(cfg.alpha > 0.0 && cfg.alpha < 1.0) || cfg.theta0.is_empty() {
        return Err(Error::arg("sequential demo needs r >= 1, alpha in (0, 1) and a theta0"));
    }
    let start = Instant::now();
    let theta0 = cfg.theta0[0];
    let null = NullSpec::Simple(cfg.null_theta);
    let runs = run_indexed(cfg, cfg.r, |rep| -> Result<Vec<SequentialStep>> {
        let model = cfg.family.model();
        let series = simulate(model, theta0, cfg.t_len, InitPolicy::default_for(theta0), cfg.replication_seed(0, rep))?;
        stream_series(cfg.family, cfg.estimator, series.values(), cfg.alpha, &null, theta0, rep).map(|(_, s)| s)
    })?;
    let mut report = ExperimentReport::new(cfg);
    let mut steps = Vec::new();
    for (rep, run) in runs.into_iter().enumerate() {
        let run = run?;
        let last = run.last().expect("T >= 1");
        let min_p = run.iter().map(|s| s.p_bar).fold(1.0, f64::min);
        report.sequential_rows.push(SequentialRow {
            replication: rep,
            theta0,
            final_t: last.t,
            final_log_n: last.log_n,
            min_p_bar: min_p,
            rejected: min_p <= cfg.alpha,
            covered_throughout: run.iter().all(|s| s.dbar_covers_theta0),
        });
        steps.extend(run);
    }
    report.wall_time = start.elapsed();
    Ok(SequentialDemo { report, steps })
}
