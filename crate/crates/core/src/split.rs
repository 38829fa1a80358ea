//! Split likelihood ratio statistics and the batch inference built on them.
//!
//! For a split point `t1`, the plug-in `theta_hat` is fitted on `X_1..X_t1`
//! and the ratio compares conditional likelihoods over `X_{t1+1}..X_T`:
//!
//! ```text
//! log R(theta) = sum_{t>t1} log f(X_t | lags; theta_hat) - sum_{t>t1} log f(X_t | lags; theta)
//! ```
//!
//! `E_theta[R(theta)] <= 1`, so `{theta : R(theta) <= 1/alpha}` covers with
//! probability at least `1 - alpha` and `1/R` at a null maximizer is a valid
//! P-value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{mle_estimate, mle_estimate_widening, EstimatorSpec, DEFAULT_MLE_TOL};
use crate::model::{conditional_log_lik, ArModel, Family, ParamDomain, TimeSeries};
use crate::region::{scan_sublevel_set, ConfidenceRegion, Interval, RegionMethod, ScanConfig};

/// Index of the last observation in the estimation block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub t1: usize,
}

impl SplitConfig {
    /// Checks `p <= t1 <= T - 1`.
    pub fn new(t1: usize, order: usize, series_len: usize) -> Result<Self> {
        if t1 < order || t1 + 1 > series_len {
            return Err(Error::arg(format!(
                "split point t1 = {t1} must satisfy {order} <= t1 <= {}",
                series_len.saturating_sub(1)
            )));
        }
        Ok(Self { t1 })
    }

    /// `t1 = floor(T / 2)`.
    pub fn halves(series_len: usize) -> Self {
        Self { t1: series_len / 2 }
    }

    fn check(&self, model: &dyn ArModel, series: &TimeSeries) -> Result<()> {
        Self::new(self.t1, model.order(), series.len()).map(|_| ())
    }
}

/// `log R_T(theta)` together with the split and plug-in that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRatioStat {
    pub log_r: f64,
    pub t1: usize,
    pub theta_hat: f64,
}

/// Null hypothesis for the split test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum NullSpec {
    Simple(f64),
    Composite(ParamDomain),
}

fn difference_of_logs(num: f64, den: f64) -> f64 {
    if den == f64::NEG_INFINITY && num > f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        num - den
    }
}

/// Fits `est` on the estimation block `X_1..X_t1`.
pub fn split_estimate(
    model: &dyn ArModel,
    series: &TimeSeries,
    split: SplitConfig,
    est: &EstimatorSpec,
) -> Result<f64> {
    split.check(model, series)?;
    est.estimate(model, series, model.order() + 1, split.t1)
}

/// `log R_T(theta)` for a plug-in computed by the caller from `X_1..X_t1`.
pub fn log_ratio(
    model: &dyn ArModel,
    series: &TimeSeries,
    split: SplitConfig,
    theta_hat: f64,
    theta: f64,
) -> Result<LogRatioStat> {
    split.check(model, series)?;
    let (from, to) = (split.t1 + 1, series.len());
    let num = conditional_log_lik(model, theta_hat, series, from, to)?;
    let den = conditional_log_lik(model, theta, series, from, to)?;
    Ok(LogRatioStat { log_r: difference_of_logs(num, den), t1: split.t1, theta_hat })
}

/// Confidence region and the plug-in it was built around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRegion {
    pub theta_hat: f64,
    pub region: ConfidenceRegion,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `{theta : log R_T(theta) <= log(1/alpha)}` with the plug-in fitted by
/// `est` on the estimation block.
pub fn split_region(
    model: &dyn ArModel,
    series: &TimeSeries,
    split: SplitConfig,
    est: &EstimatorSpec,
    alpha: f64,
    scan: &ScanConfig,
) -> Result<SplitRegion> {
    check_alpha(alpha)?;
    let theta_hat = split_estimate(model, series, split, est)?;
    let region = if model.family() == Family::Normal && scan.method == RegionMethod::Auto {
        let (lo, hi) = normal_ci_endpoints(series, split, theta_hat, alpha)?;
        ConfidenceRegion::new(vec![Interval::new(lo, hi)], alpha)?
    } else {
        let (from, to) = (split.t1 + 1, series.len());
        let num = conditional_log_lik(model, theta_hat, series, from, to)?;
        let objective = |theta: f64| {
            let den = conditional_log_lik(model, theta, series, from, to).unwrap_or(f64::NAN);
            difference_of_logs(num, den)
        };
        scan_sublevel_set(objective, (1.0 / alpha).ln(), theta_hat, model.param_domain(), scan, alpha)?
    };
    Ok(SplitRegion { theta_hat, region })
}

pub fn confidence_region(
    model: &dyn ArModel,
    series: &TimeSeries,
    split: SplitConfig,
    est: &EstimatorSpec,
    alpha: f64,
    scan: &ScanConfig,
) -> Result<ConfidenceRegion> {
    split_region(model, series, split, est, alpha, scan).map(|r| r.region)
}

/// Closed-form interval for the Normal AR(1) family.
///
/// Solves `1/2 sum (X_t - theta X_{t-1})^2 - 1/2 sum (X_t - theta_hat X_{t-1})^2 = log(1/alpha)`
/// over `t = t1+1..T`. Writing `S = sum X_{t-1}^2` and `c` for the
/// second-block LS estimate the roots are
/// `c +- sqrt((theta_hat - c)^2 + 2 log(1/alpha) / S)`.
pub fn normal_ci_endpoints(series: &TimeSeries, split: SplitConfig, theta_hat: f64, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    SplitConfig::new(split.t1, 1, series.len())?;
    let (from, to) = (split.t1 + 1, series.len());
    if from < 2 {
        return Err(Error::arg("normal interval needs t1 >= 1"));
    }
    let (sxy, sxx) = crate::estimation::ls_sums(series.values(), from, to);
    if sxx == 0.0 {
        return Err(Error::DegenerateDesign { from, to });
    }
    let center = sxy / sxx;
    let d = theta_hat - center;
    let radius = (d * d + 2.0 * (1.0 / alpha).ln() / sxx).sqrt().max(d.abs());
    // the set always holds theta_hat; keep that exact under rounding
    Ok(((center - radius).min(theta_hat), (center + radius).max(theta_hat)))
}

/// Split test outcome: `S_T = R_T(theta_tilde)` and `P_T = min(1, 1/S_T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitTest {
    pub theta_hat: f64,
    pub theta_tilde: f64,
    pub log_s: f64,
    pub p_value: f64,
}

pub fn p_value_from_log_e(log_e: f64) -> f64 {
    (-log_e).exp().clamp(0.0, 1.0)
}

/// Maximizer of the second-block conditional likelihood over the null.
fn null_maximizer(model: &dyn ArModel, series: &TimeSeries, from: usize, to: usize, null: &NullSpec) -> Result<f64> {
    match *null {
        NullSpec::Simple(theta0) => Ok(theta0),
        NullSpec::Composite(bounds) if bounds.is_bounded() => {
            mle_estimate(model, series, from, to, bounds, DEFAULT_MLE_TOL)
        }
        NullSpec::Composite(bounds) => mle_estimate_widening(model, series, from, to, bounds, DEFAULT_MLE_TOL),
    }
}

pub fn test_statistic(
    model: &dyn ArModel,
    series: &TimeSeries,
    split: SplitConfig,
    est: &EstimatorSpec,
    null: &NullSpec,
) -> Result<SplitTest> {
    let theta_hat = split_estimate(model, series, split, est)?;
    let theta_tilde = null_maximizer(model, series, split.t1 + 1, series.len(), null)?;
    let stat = log_ratio(model, series, split, theta_hat, theta_tilde)?;
    Ok(SplitTest { theta_hat, theta_tilde, log_s: stat.log_r, p_value: p_value_from_log_e(stat.log_r) })
}

pub fn test_pvalue(
    model: &dyn ArModel,
    series: &TimeSeries,
    split: SplitConfig,
    est: &EstimatorSpec,
    null: &NullSpec,
) -> Result<f64> {
    test_statistic(model, series, split, est, null).map(|t| t.p_value)
}

/// `log(mean(exp(values)))`, stable for large magnitudes.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln() - (values.len() as f64).ln()
}

/// Log of the average of split ratios over several split points; each
/// `estimates[i]` must depend only on `X_1..X_{splits[i].t1}`.
pub fn averaged_log_ratio(
    model: &dyn ArModel,
    series: &TimeSeries,
    splits: &[SplitConfig],
    estimates: &[f64],
    theta: f64,
) -> Result<f64> {
    if splits.is_empty() {
        return Err(Error::arg("averaged ratio needs at least one split"));
    }
    if splits.len() != estimates.len() {
        return Err(Error::arg(format!("{} splits but {} estimates", splits.len(), estimates.len())));
    }
    let terms = splits
        .iter()
        .zip(estimates)
        .map(|(&split, &theta_hat)| log_ratio(model, series, split, theta_hat, theta).map(|s| s.log_r))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_mean_exp(&terms))
}

/// Every split point `t1 = p+1..T-1` with its plug-in; `default_param` stands
/// in where the estimator is undefined on the short prefix.
pub fn full_sweep(
    model: &dyn ArModel,
    series: &TimeSeries,
    est: &EstimatorSpec,
    default_param: f64,
) -> Result<(Vec<SplitConfig>, Vec<f64>)> {
    let p = model.order();
    let mut splits = Vec::new();
    let mut estimates = Vec::new();
    for t1 in p + 1..series.len() {
        let split = SplitConfig::new(t1, p, series.len())?;
        let theta_hat = match split_estimate(model, series, split, est) {
            Ok(v) => v,
            Err(Error::DegenerateDesign { .. }) => default_param,
            Err(e) => return Err(e),
        };
        splits.push(split);
        estimates.push(theta_hat);
    }
    if splits.is_empty() {
        return Err(Error::arg(format!("full sweep needs T >= {}", p + 2)));
    }
    Ok((splits, estimates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CauchyAr1, NormalAr1};

    #[test]
    fn ratio_at_plugin_is_zero() {
        let s = TimeSeries::new(vec![0.3, -1.0, 2.0, 0.7, 0.1]).unwrap();
        for m in [&NormalAr1 as &dyn ArModel, &CauchyAr1] {
            let r = log_ratio(m, &s, SplitConfig { t1: 2 }, 0.37, 0.37).unwrap();
            assert_eq!(r.log_r, 0.0);
        }
    }

    #[test]
    fn normal_hand_ratio() {
        // 1/2[(1-0)^2 + (0-0)^2] - 1/2[(1-0.8*0.5)^2 + (0-0.8)^2] = 0.5 - 0.5
        let s = TimeSeries::new(vec![1.0, 0.5, 1.0, 0.0]).unwrap();
        let r = log_ratio(&NormalAr1, &s, SplitConfig { t1: 2 }, 0.8, 0.0).unwrap();
        assert!(r.log_r.abs() < 1e-15, "{}", r.log_r);
    }

    #[test]
    fn split_bounds() {
        assert!(SplitConfig::new(0, 1, 10).is_err());
        assert!(SplitConfig::new(10, 1, 10).is_err());
        assert!(SplitConfig::new(9, 1, 10).is_ok());
        assert_eq!(SplitConfig::halves(101).t1, 50);
    }

    #[test]
    fn region_keeps_plugin_as_alpha_tends_to_one() {
        let s = TimeSeries::new(vec![0.3, -1.0, 2.0, 0.7, 0.1, -0.4, 1.1, 0.9]).unwrap();
        let alpha = 1.0 - 1e-12;
        for m in [&NormalAr1 as &dyn ArModel, &CauchyAr1] {
            let sr =
                split_region(m, &s, SplitConfig { t1: 4 }, &EstimatorSpec::LeastSquares, alpha, &ScanConfig::default())
                    .unwrap();
            assert!(sr.region.contains(sr.theta_hat), "{:?}", sr);
        }
    }

    #[test]
    fn bad_alpha() {
        let s = TimeSeries::new(vec![0.3, -1.0, 2.0, 0.7]).unwrap();
        for a in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(normal_ci_endpoints(&s, SplitConfig { t1: 2 }, 0.0, a).is_err());
        }
    }

    #[test]
    fn normal_interval_degenerate() {
        let s = TimeSeries::new(vec![1.0, 2.0, 0.0, 0.0, 3.0]).unwrap();
        assert!(matches!(
            normal_ci_endpoints(&s, SplitConfig { t1: 3 }, 0.5, 0.1),
            Err(Error::DegenerateDesign { .. })
        ));
    }

    #[test]
    fn simple_null_at_plugin_has_unit_pvalue() {
        let s = TimeSeries::new(vec![0.3, -1.0, 2.0, 0.7, 0.1, -0.4]).unwrap();
        let split = SplitConfig { t1: 3 };
        let th = split_estimate(&NormalAr1, &s, split, &EstimatorSpec::LeastSquares).unwrap();
        let p = test_pvalue(&NormalAr1, &s, split, &EstimatorSpec::LeastSquares, &NullSpec::Simple(th)).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn composite_null_dominates_simple() {
        // max over the null can only shrink S, so P grows
        let s = TimeSeries::new(vec![0.3, -1.0, 2.0, 0.7, 0.1, -0.4, 1.5, 1.2]).unwrap();
        let split = SplitConfig { t1: 4 };
        let est = EstimatorSpec::LeastSquares;
        let comp =
            test_statistic(&NormalAr1, &s, split, &est, &NullSpec::Composite(ParamDomain::new(0.5, 2.0).unwrap()))
                .unwrap();
        for th in [0.5, 0.9, 1.4, 2.0] {
            let simple = test_statistic(&NormalAr1, &s, split, &est, &NullSpec::Simple(th)).unwrap();
            assert!(comp.log_s <= simple.log_s + 1e-9);
        }
    }

    #[test]
    fn log_mean_exp_values() {
        assert!((log_mean_exp(&[0.0, 0.0]) - 0.0).abs() < 1e-15);
        assert!((log_mean_exp(&[1000.0, 1000.0]) - 1000.0).abs() < 1e-12);
        let v = [0.1_f64, -2.0, 3.0];
        let direct = (v.iter().map(|x| x.exp()).sum::<f64>() / 3.0).ln();
        assert!((log_mean_exp(&v) - direct).abs() < 1e-14);
        assert_eq!(log_mean_exp(&[f64::INFINITY, 0.0]), f64::INFINITY);
    }

    #[test]
    fn averaged_ratio_edge_cases() {
        let s = TimeSeries::new(vec![0.3, -1.0, 2.0, 0.7, 0.1, -0.4]).unwrap();
        assert!(averaged_log_ratio(&NormalAr1, &s, &[], &[], 0.0).is_err());
        let splits = [SplitConfig { t1: 2 }, SplitConfig { t1: 4 }];
        assert_eq!(averaged_log_ratio(&NormalAr1, &s, &splits, &[0.2, 0.2], 0.2).unwrap(), 0.0);
        let one = averaged_log_ratio(&CauchyAr1, &s, &splits[..1], &[0.6], -0.1).unwrap();
        let direct = log_ratio(&CauchyAr1, &s, splits[0], 0.6, -0.1).unwrap().log_r;
        assert!((one - direct).abs() < 1e-14);
    }

    #[test]
    fn full_sweep_covers_all_splits() {
        let s = TimeSeries::new(vec![0.0, 1.0, 0.5, -0.2, 0.4]).unwrap();
        let (splits, est) = full_sweep(&NormalAr1, &s, &EstimatorSpec::LeastSquares, 0.0).unwrap();
        assert_eq!(splits.iter().map(|s| s.t1).collect::<Vec<_>>(), vec![2, 3, 4]);
        // X_1 = 0 makes the t1 = 2 fit degenerate
        assert_eq!(est[0], 0.0);
        assert!((est[1] - 0.5).abs() < 1e-15);
    }
}
