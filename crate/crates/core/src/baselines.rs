//! Asymptotic comparators: the normal-limit least-squares interval and a
//! Dickey-Fuller normalized-bias test with simulated null quantiles.
#![allow(clippy::excessive_precision)]

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::ls_estimate;
use crate::model::{simulate, InitPolicy, NormalAr1, TimeSeries};
use crate::rng::child_seed;

const VARIANCE_FLOOR: f64 = 1e-12;

// AS 241 coefficients, constant term first, as published.
const CENTRAL_NUM: [f64; 8] = [
    3.387_132_872_796_366_6,
    133.141_667_891_784_38,
    1_971.590_950_306_551_3,
    13_731.693_765_509_461,
    45_921.953_931_549_87,
    67_265.770_927_008_7,
    33_430.575_583_588_13,
    2_509.080_928_730_122_7,
];
const CENTRAL_DEN: [f64; 8] = [
    1.0,
    42.313_330_701_600_91,
    687.187_007_492_057_9,
    5_394.196_021_424_751,
    21_213.794_301_586_597,
    39_307.895_800_092_71,
    28_729.085_735_721_943,
    5_226.495_278_852_546,
];
const NEAR_NUM: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_545,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    7.745_450_142_783_414e-4,
];
const NEAR_DEN: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    0.689_767_334_985_1,
    0.148_103_976_427_480_07,
    0.015_198_666_563_616_457,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_8e-9,
];
const FAR_NUM: [f64; 8] = [
    6.657_904_643_501_104,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_9,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288e-7,
];
const FAR_DEN: [f64; 8] = [
    1.0,
    0.599_832_206_555_888,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_8e-15,
];

fn horner(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Standard normal quantile, Wichura's AS 241 (PPND16); relative accuracy
/// about 1e-16 over (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * horner(&CENTRAL_NUM, r) / horner(&CENTRAL_DEN, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let z = if r <= 5.0 {
        let r = r - 1.6;
        horner(&NEAR_NUM, r) / horner(&NEAR_DEN, r)
    } else {
        let r = r - 5.0;
        horner(&FAR_NUM, r) / horner(&FAR_DEN, r)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

/// Normal-limit interval around the full-sample least-squares estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsInterval {
    pub theta_ls: f64,
    pub lo: f64,
    pub hi: f64,
    /// `1 - theta_ls^2` fell below the floor and was clamped.
    pub clamped: bool,
}

impl LsInterval {
    pub fn contains(&self, theta: f64) -> bool {
        self.lo <= theta && theta <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `theta_ls +- z_{1-alpha/2} sqrt((1 - theta_ls^2) / T)`.
pub fn asymptotic_ls_ci(series: &TimeSeries, alpha: f64) -> Result<LsInterval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let t_len = series.len();
    if t_len < 3 {
        return Err(Error::arg("asymptotic interval needs T >= 3"));
    }
    let theta_ls = ls_estimate(series, 2, t_len)?;
    let raw = 1.0 - theta_ls * theta_ls;
    let clamped = raw < VARIANCE_FLOOR;
    let half = normal_quantile(1.0 - alpha / 2.0) * (raw.max(VARIANCE_FLOOR) / t_len as f64).sqrt();
    Ok(LsInterval { theta_ls, lo: theta_ls - half, hi: theta_ls + half, clamped })
}

/// One tabulated quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub prob: f64,
    pub value: f64,
}

/// Simulated null quantiles of the normalized bias `T (theta_ls - 1)` under
/// a driftless Gaussian random walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullQuantileTable {
    pub statistic: String,
    pub quantiles: Vec<QuantilePoint>,
    pub n_sims: usize,
    pub t_sim: usize,
    pub seed: u64,
    pub generator: String,
}

pub const NORMALIZED_BIAS: &str = "normalized_bias";
const SHIPPED_TABLE: &str = include_str!("../data/df_normalized_bias_t1000.json");

impl NullQuantileTable {
    pub fn new(quantiles: Vec<QuantilePoint>, n_sims: usize, t_sim: usize, seed: u64) -> Result<Self> {
        let table = Self {
            statistic: NORMALIZED_BIAS.into(),
            quantiles,
            n_sims,
            t_sim,
            seed,
            generator: format!("arinfer {}", env!("CARGO_PKG_VERSION")),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.statistic != NORMALIZED_BIAS {
            return Err(Error::arg(format!("unsupported statistic {:?}", self.statistic)));
        }
        if self.quantiles.iter().any(|q| !(q.prob > 0.0 && q.prob < 1.0) || !q.value.is_finite()) {
            return Err(Error::arg("quantile probabilities must lie in (0, 1) with finite values"));
        }
        if self.quantiles.windows(2).any(|w| !(w[0].prob < w[1].prob && w[0].value < w[1].value)) {
            return Err(Error::arg("quantiles must be strictly increasing in probability and value"));
        }
        Ok(())
    }

    /// Table shipped with the crate (T = 1000, 10^6 simulations).
    pub fn shipped() -> Self {
        let table: Self = serde_json::from_str(SHIPPED_TABLE).expect("shipped table parses");
        table.validate().expect("shipped table is valid");
        table
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn quantile(&self, prob: f64) -> Option<f64> {
        self.quantiles.iter().find(|q| (q.prob - prob).abs() < 1e-12).map(|q| q.value)
    }
}

/// `T (theta_ls - 1)` with `theta_ls` over `t = 2..T`.
pub fn normalized_bias(series: &TimeSeries) -> Result<f64> {
    let t_len = series.len();
    Ok(t_len as f64 * (ls_estimate(series, 2, t_len)? - 1.0))
}

/// Linear-interpolation sample quantile of sorted data.
pub fn sorted_quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Simulates the normalized-bias null distribution and tabulates `probs`.
pub fn df_null_quantiles(probs: &[f64], n_sims: usize, t_sim: usize, seed: u64) -> Result<NullQuantileTable> {
    if n_sims < 2 || t_sim < 3 {
        return Err(Error::arg("need n_sims >= 2 and T_sim >= 3"));
    }
    let mut probs = probs.to_vec();
    probs.sort_by(f64::total_cmp);
    probs.dedup();
    let mut stats = (0..n_sims)
        .into_par_iter()
        .map(|i| {
            let s = simulate(&NormalAr1, 1.0, t_sim, InitPolicy::Fixed(0.0), child_seed(seed, &[i as u64]))?;
            normalized_bias(&s)
        })
        .collect::<Result<Vec<f64>>>()?;
    stats.sort_by(f64::total_cmp);
    let quantiles = probs.iter().map(|&prob| QuantilePoint { prob, value: sorted_quantile(&stats, prob) }).collect();
    NullQuantileTable::new(quantiles, n_sims, t_sim, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reject,
    Retain,
}

/// Left-tailed unit-root test: reject when `T (theta_ls - 1)` is at or
/// below the tabulated `alpha` quantile.
pub fn df_test(series: &TimeSeries, table: &NullQuantileTable, alpha: f64) -> Result<Decision> {
    let critical =
        table.quantile(alpha).ok_or_else(|| Error::arg(format!("alpha = {alpha} is not a tabulated probability")))?;
    Ok(if normalized_bias(series)? <= critical { Decision::Reject } else { Decision::Retain })
}
