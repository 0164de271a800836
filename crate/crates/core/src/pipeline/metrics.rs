//! Resolution metrics: warning categories, weighted fix counts and the
//! resolution rate, in exact rational arithmetic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Value};

use super::shift::ShiftMap;
use crate::checker::Warning;

/// Warnings on the original program and on the transformed one.
#[derive(Debug, Clone, Default)]
pub struct WarningSetPair {
    pub w_orig: Vec<Warning>,
    pub w_xform: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsReport {
    /// Roots warned on both before and after.
    pub cl: u64,
    /// Roots warned only after.
    pub xe: u64,
    /// Original warnings no later warning maps to.
    pub xr: u64,
    pub f_cl: BigRational,
    pub f_xe: BigRational,
    pub t: u64,
    /// `(f_cl + f_xe + xr) / t`, or 1 when `t` is 0.
    pub r: BigRational,
}

fn ratio(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// `q` as `a/b`, or `a` when integral.
pub fn fmt_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl MetricsReport {
    pub fn from_counts(cl: u64, xe: u64, xr: u64, f_cl: BigRational, f_xe: BigRational) -> Self {
        let t = cl + xe + xr;
        let r = if t == 0 { BigRational::one() } else { (&f_cl + &f_xe + ratio(xr)) / ratio(t) };
        MetricsReport { cl, xe, xr, f_cl, f_xe, t, r }
    }

    pub fn empty() -> Self {
        MetricsReport::from_counts(0, 0, 0, BigRational::zero(), BigRational::zero())
    }

    /// Sums the counts and weighted scores of two reports.
    pub fn merge(&self, other: &MetricsReport) -> Self {
        MetricsReport::from_counts(self.cl + other.cl, self.xe + other.xe, self.xr + other.xr, &self.f_cl + &other.f_cl, &self.f_xe + &other.f_xe)
    }

    /// `r` as a whole percentage, rounded half up.
    pub fn percent(&self) -> BigInt {
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        (&self.r * ratio(100) + half).floor().to_integer()
    }

    pub fn display_rate(&self) -> String {
        format!("{}%", self.percent())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "CL": self.cl,
            "XE": self.xe,
            "XR": self.xr,
            "F_CL": fmt_rational(&self.f_cl),
            "F_XE": fmt_rational(&self.f_xe),
            "T": self.t,
            "R": fmt_rational(&self.r),
            "rate": self.display_rate(),
        })
    }

    /// A fixed-width table of the categories and the rate.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>6} {:>6} {:>6} {:>10} {:>10} {:>6} {:>6}", "CL", "XE", "XR", "F_CL", "F_XE", "T", "R");
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>6} {:>10} {:>10} {:>6} {:>6}",
            self.cl,
            self.xe,
            self.xr,
            fmt_rational(&self.f_cl),
            fmt_rational(&self.f_xe),
            self.t,
            self.display_rate()
        );
        out
    }
}

/// Categorizes roots and scores each with the fraction of its shifted
/// warnings in `fixed`.
pub fn compute_metrics(pair: &WarningSetPair, shift: &ShiftMap, fixed: &BTreeSet<String>) -> MetricsReport {
    let orig: BTreeSet<&str> = pair.w_orig.iter().map(|w| w.id.as_str()).collect();
    let mut per_root: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for (shifted, root) in &shift.pairs {
        let e = per_root.entry(root.as_str()).or_default();
        e.0 += 1;
        if fixed.contains(shifted) {
            e.1 += 1;
        }
    }
    let (mut cl, mut xe) = (0, 0);
    let (mut f_cl, mut f_xe) = (BigRational::zero(), BigRational::zero());
    for (root, (n, k)) in &per_root {
        let score = BigRational::new(BigInt::from(*k), BigInt::from(*n));
        if orig.contains(root) {
            cl += 1;
            f_cl += score;
        } else {
            xe += 1;
            f_xe += score;
        }
    }
    let xr = orig.iter().filter(|id| !per_root.contains_key(*id)).count() as u64;
    MetricsReport::from_counts(cl, xe, xr, f_cl, f_xe)
}
