//! Point estimators that feed the ratio statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{conditional_log_lik, ArModel, ParamDomain, TimeSeries};

/// Bracket used when the parameter set is the whole real line.
pub const DEFAULT_MLE_BRACKET: (f64, f64) = (-10.0, 10.0);
pub const DEFAULT_MLE_TOL: f64 = 1e-10;

const N_STARTS: usize = 8;
const SAMPLES_PER_START: usize = 128;
const MAX_BRACKET_HALF_WIDTH: f64 = 1e6;

/// Which estimator produces the plug-in parameter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EstimatorSpec {
    #[default]
    LeastSquares,
    Mle {
        bounds: ParamDomain,
        tol: f64,
    },
}

impl EstimatorSpec {
    /// Conditional MLE over the whole real line with the default tolerance.
    pub fn mle() -> Self {
        EstimatorSpec::Mle { bounds: ParamDomain::REAL_LINE, tol: DEFAULT_MLE_TOL }
    }

    /// Fits the estimator to observations `from..=to` (likelihood terms, so
    /// `from` is the first response index).
    pub fn estimate(&self, model: &dyn ArModel, series: &TimeSeries, from: usize, to: usize) -> Result<f64> {
        match *self {
            EstimatorSpec::LeastSquares => ls_estimate(series, from, to),
            EstimatorSpec::Mle { bounds, tol } => {
                if bounds.is_bounded() {
                    mle_estimate(model, series, from, to, bounds, tol)
                } else {
                    mle_estimate_widening(model, series, from, to, bounds, tol)
                }
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EstimatorSpec::LeastSquares => "ls",
            EstimatorSpec::Mle { .. } => "mle",
        }
    }
}

/// Least-squares AR(1) coefficient from the responses `X_from..=X_to`:
/// `sum X_{t-1} X_t / sum X_{t-1}^2`.
pub fn ls_estimate(series: &TimeSeries, from: usize, to: usize) -> Result<f64> {
    if from < 2 {
        return Err(Error::arg(format!("least squares needs from >= 2, got {from}")));
    }
    if to > series.len() {
        return Err(Error::arg(format!("range ends at {to} but the series has {} points", series.len())));
    }
    let (num, den) = ls_sums(series.values(), from, to);
    if den == 0.0 {
        return Err(Error::DegenerateDesign { from, to });
    }
    Ok(num / den)
}

/// `(sum X_{t-1} X_t, sum X_{t-1}^2)` over `t = from..=to`, 1-based.
pub(crate) fn ls_sums(values: &[f64], from: usize, to: usize) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in from..=to {
        let lag = values[t - 2];
        num += lag * values[t - 1];
        den += lag * lag;
    }
    (num, den)
}

/// Maximizes `f` on `[lo, hi]` with Brent's parabolic/golden-section search.
/// Returns `(argmax, max)`.
pub fn maximize_bracketed<F>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    const MAX_ITER: usize = 200;
    let neg = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = neg(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..MAX_ITER {
        let m = 0.5 * (a + b);
        let tol1 = tol + 1e-12 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = neg(u);
        if fu <= fx {
            if u < x {
                b = x
            } else {
                a = x
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u
            } else {
                b = u
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx)
}

/// Multistart global maximizer of `f` on a finite interval.
///
/// The interval is cut into eight equal cells; each cell is sampled on a
/// regular grid and Brent refinement runs around the best sample of every
/// cell. The best point seen anywhere is returned.
pub fn maximize_multistart<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::arg(format!("multistart needs a finite bracket, got [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::arg("optimizer tolerance must be positive"));
    }
    let cell = (hi - lo) / N_STARTS as f64;
    let step = cell / (SAMPLES_PER_START - 1) as f64;
    let mut best: Option<(f64, f64)> = None;
    let consider = |x: f64, v: f64, best: &mut Option<(f64, f64)>| {
        if v.is_finite() && best.is_none_or(|(_, bv)| v > bv) {
            *best = Some((x, v));
        }
    };

    for k in 0..N_STARTS {
        let c_lo = lo + k as f64 * cell;
        let c_hi = if k + 1 == N_STARTS { hi } else { c_lo + cell };
        let mut cell_best: Option<(f64, f64)> = None;
        for j in 0..SAMPLES_PER_START {
            let x = if j + 1 == SAMPLES_PER_START { c_hi } else { c_lo + j as f64 * step };
            let v = f(x);
            consider(x, v, &mut cell_best);
        }
        let Some((x0, v0)) = cell_best else { continue };
        consider(x0, v0, &mut best);
        let a = (x0 - step).max(lo);
        let b = (x0 + step).min(hi);
        let (xr, vr) = maximize_bracketed(&f, a, b, tol);
        consider(xr, vr, &mut best);
    }
    best.ok_or_else(|| Error::Optimization("objective is non-finite at every start point".into()))
}

/// Conditional MLE over `bounds` from the likelihood terms `from..=to`.
pub fn mle_estimate(
    model: &dyn ArModel,
    series: &TimeSeries,
    from: usize,
    to: usize,
    bounds: ParamDomain,
    tol: f64,
) -> Result<f64> {
    if !bounds.is_bounded() {
        return Err(Error::arg("mle_estimate needs finite bounds; use mle_estimate_widening"));
    }
    // validate the range once so the objective can't fail
    conditional_log_lik(model, bounds.lower, series, from, to)?;
    let objective = |theta: f64| conditional_log_lik(model, theta, series, from, to).unwrap_or(f64::NAN);
    maximize_multistart(objective, bounds.lower, bounds.upper, tol).map(|(x, _)| x)
}

/// Conditional MLE over a possibly unbounded domain: starts from the
/// default bracket (clipped to the domain) and doubles it until the
/// maximizer is interior.
pub fn mle_estimate_widening(
    model: &dyn ArModel,
    series: &TimeSeries,
    from: usize,
    to: usize,
    domain: ParamDomain,
    tol: f64,
) -> Result<f64> {
    let mut half = DEFAULT_MLE_BRACKET.1;
    loop {
        let lo = (-half).max(domain.lower);
        let hi = half.min(domain.upper);
        let bounds = ParamDomain::new(lo, hi)?;
        let theta = mle_estimate(model, series, from, to, bounds, tol)?;
        let edge = 1e-6 * (hi - lo);
        let at_open_lower = lo > domain.lower && theta - lo <= edge;
        let at_open_upper = hi < domain.upper && hi - theta <= edge;
        if !(at_open_lower || at_open_upper) {
            return Ok(theta);
        }
        if half >= MAX_BRACKET_HALF_WIDTH {
            return Err(Error::Optimization(format!("maximizer still on the bracket edge at half-width {half}")));
        }
        half *= 2.0;
    }
}
