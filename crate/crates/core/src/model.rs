//! AR(p) model families, observed series, and trajectory simulation.
//!
//! Time indices in this crate are 1-based: a series holds `X_1..X_T` and
//! `series.x(t)` returns `X_t`. Conditional log-likelihood ranges are given
//! as inclusive `from..=to` time points.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// The parameter set as an interval, possibly unbounded on either side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    #[serde(with = "crate::region::extended_f64")]
    pub lower: f64,
    #[serde(with = "crate::region::extended_f64")]
    pub upper: f64,
}

impl ParamDomain {
    pub const REAL_LINE: ParamDomain = ParamDomain { lower: f64::NEG_INFINITY, upper: f64::INFINITY };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::arg(format!("parameter domain needs lower < upper, got [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.lower && theta <= self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// A parametric AR(p) family with a scalar parameter.
///
/// Lags are always passed oldest first: `[x_{t-p}, .., x_{t-1}]`.
pub trait ArModel: fmt::Debug + Send + Sync {
    fn family(&self) -> Family;

    fn order(&self) -> usize;

    fn param_domain(&self) -> ParamDomain;

    /// Natural-log conditional density of `x` given its lags.
    fn cond_log_pdf(&self, theta: f64, x: f64, lags: &[f64]) -> f64;

    fn sample_innovation(&self, rng: &mut dyn RngCore) -> f64;

    /// Next observation from its lags and an innovation.
    fn propagate(&self, theta: f64, lags: &[f64], innovation: f64) -> f64;

    /// A draw from the stationary law of the first observation.
    fn sample_stationary(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64>;
}

/// `X_t = theta * X_{t-1} + E_t` with `E_t ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NormalAr1;

/// `X_t = theta * X_{t-1} + E_t` with `E_t ~ Cauchy(0, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CauchyAr1;

pub fn normal_ar1() -> NormalAr1 {
    NormalAr1
}

pub fn cauchy_ar1() -> CauchyAr1 {
    CauchyAr1
}

fn check_stationary(theta: f64) -> Result<()> {
    if theta.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { theta, reason: "stationary initialization requires |theta| < 1".into() })
    }
}

impl ArModel for NormalAr1 {
    fn family(&self) -> Family {
        Family::Normal
    }

    fn order(&self) -> usize {
        1
    }

    fn param_domain(&self) -> ParamDomain {
        ParamDomain::REAL_LINE
    }

    fn cond_log_pdf(&self, theta: f64, x: f64, lags: &[f64]) -> f64 {
        let resid = x - theta * lags[0];
        -HALF_LN_2PI - 0.5 * resid * resid
    }

    fn sample_innovation(&self, rng: &mut dyn RngCore) -> f64 {
        StandardNormal.sample(rng)
    }

    fn propagate(&self, theta: f64, lags: &[f64], innovation: f64) -> f64 {
        theta * lags[0] + innovation
    }

    fn sample_stationary(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        check_stationary(theta)?;
        let z: f64 = StandardNormal.sample(rng);
        Ok(z / (1.0 - theta * theta).sqrt())
    }
}

impl ArModel for CauchyAr1 {
    fn family(&self) -> Family {
        Family::Cauchy
    }

    fn order(&self) -> usize {
        1
    }

    fn param_domain(&self) -> ParamDomain {
        ParamDomain::REAL_LINE
    }

    fn cond_log_pdf(&self, theta: f64, x: f64, lags: &[f64]) -> f64 {
        let resid = x - theta * lags[0];
        -PI.ln() - resid.mul_add(resid, 1.0).ln()
    }

    fn sample_innovation(&self, rng: &mut dyn RngCore) -> f64 {
        Cauchy::new(0.0, 1.0).expect("unit scale").sample(rng)
    }

    fn propagate(&self, theta: f64, lags: &[f64], innovation: f64) -> f64 {
        theta * lags[0] + innovation
    }

    fn sample_stationary(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        check_stationary(theta)?;
        // sum_k theta^k E_{t-k} is Cauchy with scale sum_k |theta|^k
        let scale = 1.0 / (1.0 - theta.abs());
        Ok(Cauchy::new(0.0, scale).expect("positive scale").sample(rng))
    }
}

/// Tag for the concrete families; used by configs, snapshots and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Cauchy,
}

static NORMAL: NormalAr1 = NormalAr1;
static CAUCHY: CauchyAr1 = CauchyAr1;

impl Family {
    pub fn model(self) -> &'static dyn ArModel {
        match self {
            Family::Normal => &NORMAL,
            Family::Cauchy => &CAUCHY,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Cauchy => "cauchy",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Family::Normal),
            "cauchy" => Ok(Family::Cauchy),
            other => Err(Error::arg(format!("unknown family {other:?} (expected normal or cauchy)"))),
        }
    }
}

/// Observations `X_1..X_T`, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::arg("time series must contain at least one observation"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite observation at t = {}", pos + 1)));
        }
        Ok(Self { values })
    }

    /// Parses a plain one-column numeric file. Blank lines and `#` comments
    /// are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::arg(format!("line {}: cannot parse {line:?} as a number", lineno + 1)))?;
            values.push(v);
        }
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `X_t` for 1-based `t`.
    pub fn x(&self, t: usize) -> f64 {
        self.values[t - 1]
    }

    /// The `p` lags of `X_t`, oldest first. Requires `t > p`.
    pub fn lags(&self, t: usize, p: usize) -> &[f64] {
        &self.values[t - 1 - p..t - 1]
    }

    /// Scaled copy `c * X_t`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| c * v).collect())
    }
}

/// How the first observation is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum InitPolicy {
    /// `X_1` drawn from the stationary law; needs `|theta| < 1`.
    Stationary,
    /// Start at zero and discard this many steps before `X_1`.
    BurnIn(usize),
    /// Fixed pre-sample value `X_0 = x0`, so `X_1 = theta * x0 + E_1`.
    Fixed(f64),
}

impl InitPolicy {
    /// Stationary start inside the stationary region, `Fixed(0)` otherwise.
    pub fn default_for(theta: f64) -> Self {
        if theta.abs() < 1.0 {
            InitPolicy::Stationary
        } else {
            InitPolicy::Fixed(0.0)
        }
    }
}

/// Appends `steps` observations to `path`, each drawn from the model given
/// the last `p` entries of `path`.
pub fn extend_path(model: &dyn ArModel, theta: f64, path: &mut Vec<f64>, steps: usize, rng: &mut dyn RngCore) {
    let p = model.order();
    path.reserve(steps);
    for _ in 0..steps {
        let e = model.sample_innovation(rng);
        let n = path.len();
        let next = model.propagate(theta, &path[n - p..], e);
        path.push(next);
    }
}

/// Draws a trajectory of length `t_len` under `theta` from `rng`.
pub fn simulate_with(
    model: &dyn ArModel,
    theta: f64,
    t_len: usize,
    init: InitPolicy,
    rng: &mut dyn RngCore,
) -> Result<TimeSeries> {
    if !model.param_domain().contains(theta) {
        return Err(Error::Domain { theta, reason: "not in the model's parameter domain".into() });
    }
    if t_len == 0 {
        return Err(Error::arg("series length must be positive"));
    }
    let p = model.order();
    let values = match init {
        InitPolicy::Stationary => {
            if p != 1 {
                return Err(Error::arg("stationary initialization is only available for order-1 models"));
            }
            let mut path = vec![model.sample_stationary(theta, rng)?];
            extend_path(model, theta, &mut path, t_len - 1, rng);
            path
        }
        InitPolicy::Fixed(x0) => {
            if !x0.is_finite() {
                return Err(Error::arg("fixed initial value must be finite"));
            }
            let mut path = vec![x0; p];
            extend_path(model, theta, &mut path, t_len, rng);
            path.split_off(p)
        }
        InitPolicy::BurnIn(n_burn) => {
            if n_burn == 0 {
                return Err(Error::arg("burn-in length must be positive"));
            }
            let mut path = vec![0.0; p];
            extend_path(model, theta, &mut path, n_burn + t_len, rng);
            path.split_off(p + n_burn)
        }
    };
    TimeSeries::new(values)
        .map_err(|_| Error::Domain { theta, reason: "trajectory overflowed to a non-finite value".into() })
}

/// Simulates a trajectory from a fresh RNG stream seeded with `seed`.
pub fn simulate(model: &dyn ArModel, theta: f64, t_len: usize, init: InitPolicy, seed: u64) -> Result<TimeSeries> {
    let mut rng = rng_from_seed(seed);
    simulate_with(model, theta, t_len, init, &mut rng)
}

/// Sum of conditional log-densities over the inclusive range `from..=to`.
///
/// An empty range (`from > to`) gives zero.
pub fn conditional_log_lik(
    model: &dyn ArModel,
    theta: f64,
    series: &TimeSeries,
    from: usize,
    to: usize,
) -> Result<f64> {
    if from > to {
        return Ok(0.0);
    }
    let p = model.order();
    if from <= p {
        return Err(Error::arg(format!("likelihood range must start after the model order: from = {from}, p = {p}")));
    }
    if to > series.len() {
        return Err(Error::arg(format!("likelihood range ends at {to} but the series has {} points", series.len())));
    }
    Ok((from..=to).map(|t| model.cond_log_pdf(theta, series.x(t), series.lags(t, p))).sum())
}
