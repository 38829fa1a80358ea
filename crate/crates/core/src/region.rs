//! Unions of closed intervals and the generic sublevel-set scanner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamDomain;

/// A closed interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "extended_f64")]
    pub lo: f64,
    #[serde(with = "extended_f64")]
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.lo <= theta && theta <= self.hi
    }
}

/// A finite union of sorted, pairwise disjoint closed intervals tagged
/// with the level it was built at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    intervals: Vec<Interval>,
    alpha: f64,
}

impl ConfidenceRegion {
    pub fn new(intervals: Vec<Interval>, alpha: f64) -> Result<Self> {
        for iv in &intervals {
            if iv.lo.is_nan() || iv.hi.is_nan() || iv.lo > iv.hi {
                return Err(Error::arg(format!("malformed interval [{}, {}]", iv.lo, iv.hi)));
            }
        }
        if intervals.windows(2).any(|w| w[0].hi >= w[1].lo) {
            return Err(Error::arg("intervals must be sorted and pairwise disjoint"));
        }
        Ok(Self { intervals, alpha })
    }

    /// Sorts and merges arbitrary intervals into a region.
    pub fn from_unsorted(mut intervals: Vec<Interval>, alpha: f64) -> Result<Self> {
        intervals.retain(|iv| iv.lo <= iv.hi);
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
                _ => merged.push(iv),
            }
        }
        Self::new(merged, alpha)
    }

    pub fn full(domain: ParamDomain, alpha: f64) -> Self {
        Self { intervals: vec![Interval::new(domain.lower, domain.upper)], alpha }
    }

    pub fn empty(alpha: f64) -> Self {
        Self { intervals: Vec::new(), alpha }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Lebesgue measure of the union.
    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(Interval::length).sum()
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(theta))
    }

    pub fn is_bounded(&self) -> bool {
        self.intervals.first().is_none_or(|iv| iv.lo.is_finite())
            && self.intervals.last().is_none_or(|iv| iv.hi.is_finite())
    }

    /// Smallest interval covering the region.
    pub fn hull(&self) -> Option<Interval> {
        Some(Interval::new(self.intervals.first()?.lo, self.intervals.last()?.hi))
    }

    /// Set intersection; keeps this region's level.
    pub fn intersect(&self, other: &ConfidenceRegion) -> ConfidenceRegion {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].lo.max(b[j].lo);
            let hi = a[i].hi.min(b[j].hi);
            if lo <= hi {
                out.push(Interval::new(lo, hi));
            }
            if a[i].hi < b[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        // touching closed intervals can meet at a single shared point
        out.dedup_by(|next, prev| {
            if next.lo <= prev.hi {
                prev.hi = prev.hi.max(next.hi);
                true
            } else {
                false
            }
        });
        ConfidenceRegion { intervals: out, alpha: self.alpha }
    }

    /// Whether every point of `self` lies in `other`, allowing `tol` slack at
    /// the endpoints.
    pub fn is_subset_of(&self, other: &ConfidenceRegion, tol: f64) -> bool {
        self.intervals.iter().all(|iv| other.intervals.iter().any(|o| o.lo - tol <= iv.lo && iv.hi <= o.hi + tol))
    }
}

/// How a region is computed when a closed form exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMethod {
    /// Closed form where available, generic scan otherwise.
    #[default]
    Auto,
    /// Always scan.
    Scan,
}

/// Settings of the generic region scanner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub initial_half_width: f64,
    pub max_half_width: f64,
    pub grid_points: usize,
    /// Width at which boundary bisection stops.
    pub refine_tol: f64,
    pub method: RegionMethod,
    /// Whether a region still open at the largest window is reported as
    /// running to the domain bound instead of failing.
    pub allow_unbounded: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            initial_half_width: 5.0,
            max_half_width: 1e3,
            grid_points: 4096,
            refine_tol: 1e-8,
            method: RegionMethod::Auto,
            allow_unbounded: false,
        }
    }
}

impl ScanConfig {
    pub fn scan_only(self) -> Self {
        Self { method: RegionMethod::Scan, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.initial_half_width > 0.0 && self.max_half_width >= self.initial_half_width) {
            return Err(Error::arg("scan window widths must satisfy 0 < initial <= max"));
        }
        if self.grid_points < 3 {
            return Err(Error::arg("scan grid needs at least 3 points"));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::arg("refinement tolerance must be positive"));
        }
        Ok(())
    }
}

/// Sublevel set `{theta in domain : f(theta) <= threshold}` by grid scan
/// around `center` plus bisection of every boundary crossing.
///
/// The window starts at `center +- initial_half_width` and doubles while the
/// set still touches a window edge that is not a domain bound. NaN values of
/// `f` count as outside.
pub fn scan_sublevel_set<F>(
    f: F,
    threshold: f64,
    center: f64,
    domain: ParamDomain,
    cfg: &ScanConfig,
    alpha: f64,
) -> Result<ConfidenceRegion>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    if !center.is_finite() {
        return Err(Error::arg("scan center must be finite"));
    }
    let inside = |theta: f64| f(theta) <= threshold;
    let mut half = cfg.initial_half_width;
    loop {
        let lo = (center - half).max(domain.lower);
        let hi = (center + half).min(domain.upper);
        let step = (hi - lo) / (cfg.grid_points - 1) as f64;
        let mut grid: Vec<f64> =
            (0..cfg.grid_points).map(|i| if i + 1 == cfg.grid_points { hi } else { lo + i as f64 * step }).collect();
        if center > lo && center < hi {
            let pos = grid.partition_point(|&g| g < center);
            if grid[pos] != center {
                grid.insert(pos, center);
            }
        }
        let flags: Vec<bool> = grid.iter().map(|&g| inside(g)).collect();
        let open_lo = flags[0] && lo > domain.lower;
        let open_hi = *flags.last().unwrap() && hi < domain.upper;
        if (open_lo || open_hi) && half < cfg.max_half_width {
            half = (half * 2.0).min(cfg.max_half_width);
            continue;
        }
        if (open_lo || open_hi) && !cfg.allow_unbounded {
            return Err(Error::ScanWindow { half_width: half });
        }

        let mut intervals = Vec::new();
        let mut start: Option<f64> = None;
        for i in 0..grid.len() {
            let now = flags[i];
            let before = i > 0 && flags[i - 1];
            if now && !before {
                start = Some(if i == 0 {
                    if open_lo {
                        domain.lower
                    } else {
                        grid[0]
                    }
                } else {
                    bisect_boundary(&inside, grid[i - 1], grid[i], cfg.refine_tol)
                });
            }
            let after = i + 1 < grid.len() && flags[i + 1];
            if now && !after {
                let end = if i + 1 == grid.len() {
                    if open_hi {
                        domain.upper
                    } else {
                        grid[i]
                    }
                } else {
                    bisect_boundary(&inside, grid[i], grid[i + 1], cfg.refine_tol)
                };
                intervals.push(Interval::new(start.take().expect("interval start"), end));
            }
        }
        return ConfidenceRegion::from_unsorted(intervals, alpha);
    }
}

/// Bisects between `a` and `b` (one inside, one outside) until the bracket is
/// narrower than `tol`; returns its midpoint.
fn bisect_boundary<F: Fn(f64) -> bool>(inside: &F, a: f64, b: f64, tol: f64) -> f64 {
    let a_in = inside(a);
    let (mut a, mut b) = (a, b);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if inside(m) == a_in {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Serializes infinities as the strings `"inf"` / `"-inf"`.
pub(crate) mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("expected a number or +-inf, got {other:?}"))),
            },
        }
    }
}
