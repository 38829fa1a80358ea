//! Anytime-valid inference from a running likelihood-ratio martingale.
//!
//! With a non-anticipating plug-in `theta_hat_{t-1}` (fitted on `X_1..X_{t-1}`)
//!
//! ```text
//! M_T(theta) = prod_{t=p+1}^T f(X_t | lags; theta_hat_{t-1}) / f(X_t | lags; theta)
//! ```
//!
//! is a non-negative martingale with `M_0 = 1` under `theta`. Ville's
//! inequality then bounds `Pr(sup_T M_T(theta) >= 1/alpha)` by `alpha`,
//! which yields sequential tests, P-values and confidence sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{ls_sums, mle_estimate, mle_estimate_widening, EstimatorSpec, DEFAULT_MLE_TOL};
use crate::model::{ArModel, Family, TimeSeries};
use crate::region::{scan_sublevel_set, ConfidenceRegion, Interval, RegionMethod, ScanConfig};
use crate::split::{p_value_from_log_e, NullSpec};

pub const SNAPSHOT_VERSION: u32 = 1;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
struct Monitor {
    scan: ScanConfig,
    running: ConfidenceRegion,
}

/// Running state of the e-process for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EProcessState {
    family: Family,
    plugin: EstimatorSpec,
    default_param: f64,
    history: Vec<f64>,
    /// `theta_hat_{t-1}` used at each informative step `t = p+1..T`.
    plugins: Vec<f64>,
    /// `sum_{s<=t} log f(X_s | lags; theta_hat_{s-1})` after each observation.
    log_num_path: Vec<f64>,
    ls_num: f64,
    ls_den: f64,
    monitor: Option<Monitor>,
}

impl EProcessState {
    pub fn new(family: Family, plugin: EstimatorSpec, default_param: f64) -> Result<Self> {
        if !family.model().param_domain().contains(default_param) {
            return Err(Error::Domain { theta: default_param, reason: "default plug-in outside the domain".into() });
        }
        if let EstimatorSpec::Mle { tol, .. } = plugin {
            if !(tol > 0.0) {
                return Err(Error::arg("MLE tolerance must be positive"));
            }
        }
        Ok(Self {
            family,
            plugin,
            default_param,
            history: Vec::new(),
            plugins: Vec::new(),
            log_num_path: Vec::new(),
            ls_num: 0.0,
            ls_den: 0.0,
            monitor: None,
        })
    }

    /// Starts tracking the running intersection of the level-`alpha`
    /// confidence sets, replaying any history already seen.
    pub fn with_monitoring(mut self, alpha: f64, scan: ScanConfig) -> Result<Self> {
        check_alpha(alpha)?;
        let mut running = ConfidenceRegion::full(self.model().param_domain(), alpha);
        for n in 0..=self.history.len() {
            running = running.intersect(&self.region_at(n, alpha, &scan)?);
        }
        self.monitor = Some(Monitor { scan, running });
        Ok(self)
    }

    pub fn model(&self) -> &'static dyn ArModel {
        self.family.model()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn plugin(&self) -> EstimatorSpec {
        self.plugin
    }

    pub fn default_param(&self) -> f64 {
        self.default_param
    }

    /// Number of observations seen.
    pub fn t(&self) -> usize {
        self.history.len()
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn plugins(&self) -> &[f64] {
        &self.plugins
    }

    pub fn log_num_terms(&self) -> f64 {
        self.log_num_path.last().copied().unwrap_or(0.0)
    }

    pub fn running_region(&self) -> Option<&ConfidenceRegion> {
        self.monitor.as_ref().map(|m| &m.running)
    }

    /// Plug-in fitted on everything seen so far, i.e. the value the next
    /// observation's increment will use.
    pub fn next_plugin(&self) -> f64 {
        let p = self.model().order();
        let n = self.history.len();
        if n <= p {
            return self.default_param;
        }
        let fitted = match self.plugin {
            EstimatorSpec::LeastSquares => {
                if self.ls_den > 0.0 {
                    Some(self.ls_num / self.ls_den)
                } else {
                    None
                }
            }
            EstimatorSpec::Mle { bounds, tol } => {
                let series = TimeSeries::new(self.history.clone()).ok();
                series.and_then(|s| {
                    if bounds.is_bounded() {
                        mle_estimate(self.model(), &s, p + 1, n, bounds, tol).ok()
                    } else {
                        mle_estimate_widening(self.model(), &s, p + 1, n, bounds, tol).ok()
                    }
                })
            }
        };
        match fitted {
            Some(v) if v.is_finite() && self.model().param_domain().contains(v) => v,
            _ => self.default_param,
        }
    }

    /// Feeds one observation.
    pub fn update(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::arg(format!("observation must be finite, got {x}")));
        }
        let model = self.model();
        let p = model.order();
        let t = self.history.len() + 1;
        let mut log_num = self.log_num_terms();
        if t > p {
            let theta_hat = self.next_plugin();
            log_num += model.cond_log_pdf(theta_hat, x, &self.history[t - 1 - p..]);
            self.plugins.push(theta_hat);
        }
        if let Some(&prev) = self.history.last() {
            self.ls_num += prev * x;
            self.ls_den += prev * prev;
        }
        self.history.push(x);
        self.log_num_path.push(log_num);

        if let Some(mon) = &self.monitor {
            let (alpha, scan) = (mon.running.alpha(), mon.scan);
            let current = self.region_at(self.history.len(), alpha, &scan)?;
            let mon = self.monitor.as_mut().expect("monitor present");
            mon.running = mon.running.intersect(&current);
        }
        Ok(())
    }

    pub fn extend(&mut self, xs: &[f64]) -> Result<()> {
        xs.iter().try_for_each(|&x| self.update(x))
    }

    /// `sum_{t=p+1}^{n} log f(X_t | lags; theta)` over the first `n` points.
    fn log_den_prefix(&self, theta: f64, n: usize) -> f64 {
        let model = self.model();
        let p = model.order();
        (p + 1..=n).map(|t| model.cond_log_pdf(theta, self.history[t - 1], &self.history[t - 1 - p..t - 1])).sum()
    }

    fn log_num_prefix(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.log_num_path[n - 1]
        }
    }

    fn log_m_prefix(&self, theta: f64, n: usize) -> f64 {
        if n <= self.model().order() {
            return 0.0;
        }
        let num = self.log_num_prefix(n);
        let den = self.log_den_prefix(theta, n);
        if den == f64::NEG_INFINITY && num > f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            num - den
        }
    }

    /// `log M_T(theta)`.
    pub fn log_m(&self, theta: f64) -> f64 {
        self.log_m_prefix(theta, self.history.len())
    }

    /// `log N_T`: the e-process at the null maximizer of the running
    /// conditional likelihood.
    pub fn log_n(&self, null: &NullSpec, tol: f64) -> Result<f64> {
        let p = self.model().order();
        let n = self.history.len();
        if n <= p {
            return Ok(0.0);
        }
        let theta_tilde = match *null {
            NullSpec::Simple(theta0) => theta0,
            NullSpec::Composite(bounds) => {
                let s = TimeSeries::new(self.history.clone())?;
                if bounds.is_bounded() {
                    mle_estimate(self.model(), &s, p + 1, n, bounds, tol)?
                } else {
                    mle_estimate_widening(self.model(), &s, p + 1, n, bounds, tol)?
                }
            }
        };
        Ok(self.log_m(theta_tilde))
    }

    /// Level-`alpha` confidence set `{theta : log M(theta) <= log(1/alpha)}`
    /// from the first `n` observations.
    fn region_at(&self, n: usize, alpha: f64, scan: &ScanConfig) -> Result<ConfidenceRegion> {
        let model = self.model();
        let domain = model.param_domain();
        let p = model.order();
        let threshold = (1.0 / alpha).ln();
        if n <= p {
            return Ok(ConfidenceRegion::full(domain, alpha));
        }
        if self.family == Family::Normal && scan.method == RegionMethod::Auto {
            // log M is the quadratic L + k/2 log 2pi + 1/2 (Syy - 2 theta Sxy + theta^2 Sxx)
            let (sxy, sxx) = ls_sums(&self.history, 2, n);
            let syy: f64 = self.history[1..n].iter().map(|x| x * x).sum();
            let base = self.log_num_prefix(n) + (n - p) as f64 * HALF_LN_2PI;
            if sxx == 0.0 {
                let level = base + 0.5 * syy;
                return Ok(if level <= threshold {
                    ConfidenceRegion::full(domain, alpha)
                } else {
                    ConfidenceRegion::empty(alpha)
                });
            }
            let center = sxy / sxx;
            let min_level = base + 0.5 * (syy - sxy * center).max(0.0);
            if min_level > threshold {
                return Ok(ConfidenceRegion::empty(alpha));
            }
            let radius = (2.0 * (threshold - min_level) / sxx).sqrt();
            return ConfidenceRegion::new(vec![Interval::new(center - radius, center + radius)], alpha);
        }
        let (sxy, sxx) = ls_sums(&self.history, 2, n);
        let center = if sxx > 0.0 { sxy / sxx } else { self.default_param };
        let cfg = ScanConfig { allow_unbounded: true, ..*scan };
        scan_sublevel_set(|theta| self.log_m_prefix(theta, n), threshold, center, domain, &cfg, alpha)
    }

    /// `(D_T, running intersection of D_1..D_T)` at level `alpha`.
    ///
    /// The intersection comes from the monitor when it tracks the same level
    /// and is replayed from history otherwise.
    pub fn confidence_sequence(&self, alpha: f64, scan: &ScanConfig) -> Result<(ConfidenceRegion, ConfidenceRegion)> {
        check_alpha(alpha)?;
        let n = self.history.len();
        let current = self.region_at(n, alpha, scan)?;
        if let Some(mon) = &self.monitor {
            if mon.running.alpha() == alpha && mon.scan == *scan {
                return Ok((current, mon.running.clone()));
            }
        }
        let mut running = ConfidenceRegion::full(self.model().param_domain(), alpha);
        for k in 1..n {
            running = running.intersect(&self.region_at(k, alpha, scan)?);
        }
        running = running.intersect(&current);
        Ok((current, running))
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            family: self.family,
            plugin: self.plugin,
            default_param: self.default_param,
            history: self.history.clone(),
            scan: self.monitor.as_ref().map(|m| m.scan),
            running_region: self.monitor.as_ref().map(|m| m.running.clone()),
        }
    }

    pub fn to_snapshot_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.snapshot())?)
    }

    /// Rebuilds the state by replaying the snapshot's history.
    pub fn restore(snapshot: &Snapshot) -> Result<Self> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::arg(format!(
                "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
                snapshot.version
            )));
        }
        let mut state = Self::new(snapshot.family, snapshot.plugin, snapshot.default_param)?;
        state.extend(&snapshot.history)?;
        match (&snapshot.running_region, snapshot.scan) {
            (Some(region), Some(scan)) => {
                state.monitor = Some(Monitor { scan, running: region.clone() });
            }
            (None, None) => {}
            _ => return Err(Error::arg("snapshot must carry both scan settings and running region, or neither")),
        }
        Ok(state)
    }

    pub fn from_snapshot_str(text: &str) -> Result<Self> {
        let snapshot: Snapshot = serde_json::from_str(text)?;
        Self::restore(&snapshot)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Serialized form of [`EProcessState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub family: Family,
    pub plugin: EstimatorSpec,
    pub default_param: f64,
    pub history: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub running_region: Option<ConfidenceRegion>,
}

/// `log N_T` for the given null.
pub fn sequential_test_stat(state: &EProcessState, null: &NullSpec, tol: f64) -> Result<f64> {
    state.log_n(null, tol)
}

/// `min(1, 1 / N_T)`.
pub fn sequential_p_value(state: &EProcessState, null: &NullSpec) -> Result<f64> {
    state.log_n(null, DEFAULT_MLE_TOL).map(p_value_from_log_e)
}
