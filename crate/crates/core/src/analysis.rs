//! Decay-rate fits, rate-constant witnesses, and algorithm comparisons.

use crate::error::{Error, Result};
use crate::greedy::{run, Algorithm, Dictionary, GreedyTrace};
use crate::linalg::CoeffVector;
use crate::report::{fmt_f64, Report};

/// Residuals at or below this are left out of fits.
pub const FIT_FLOOR: f64 = 1e-13;
pub const MIN_FIT_POINTS: usize = 10;

/// log ‖r_n‖ ≈ intercept + slope · log n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub range: (usize, usize),
    pub points: usize,
}

impl RateFit {
    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.num("slope", self.slope)
            .num("intercept", self.intercept)
            .num("r2", self.r_squared)
            .push("n_min", self.range.0)
            .push("n_max", self.range.1)
            .push("points", self.points);
        r
    }
}

/// Least-squares line through (x, y).
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

/// Fit over steps whose n = index_offset + step lies in [n_min, n_max].
pub fn fit_decay(trace: &GreedyTrace, n_min: usize, n_max: usize) -> Result<RateFit> {
    if !(n_min >= 1 && n_max > n_min) {
        return Err(Error::InvalidArgument(format!("need 1 <= n_min < n_max, got {n_min}, {n_max}")));
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for s in &trace.steps {
        let n = trace.index_offset + s.step_index;
        if n >= n_min && n <= n_max && s.residual_norm > FIT_FLOOR {
            x.push((n as f64).ln());
            y.push(s.residual_norm.ln());
        }
    }
    if x.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints(x.len()));
    }
    let (slope, intercept, r_squared) = fit_line(&x, &y);
    Ok(RateFit { slope, intercept, r_squared, range: (n_min, n_max), points: x.len() })
}

/// Extremes of ‖r_n‖ · n^α / variation_bound along a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub alpha: f64,
    pub variation_bound: f64,
    /// sup over all steps; a finite value witnesses the upper bound.
    pub upper: f64,
    pub upper_at: usize,
    /// inf over n ≥ 10; a value away from 0 witnesses the lower bound.
    pub lower: f64,
    pub lower_at: usize,
}

impl BoundReport {
    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.num("alpha", self.alpha)
            .num("variation_bound", self.variation_bound)
            .num("upper", self.upper)
            .push("upper_at", self.upper_at)
            .num("lower", self.lower)
            .push("lower_at", self.lower_at);
        r
    }
}

pub fn check_bounds(trace: &GreedyTrace, alpha: f64, variation_bound: f64) -> BoundReport {
    let mut rep =
        BoundReport { alpha, variation_bound, upper: 0.0, upper_at: 0, lower: f64::INFINITY, lower_at: 0 };
    for s in &trace.steps {
        let n = trace.index_offset + s.step_index;
        let w = s.residual_norm * (n as f64).powf(alpha) / variation_bound;
        if w > rep.upper {
            rep.upper = w;
            rep.upper_at = n;
        }
        if n >= 10 && w < rep.lower {
            rep.lower = w;
            rep.lower_at = n;
        }
    }
    // A run that stopped early has residual 0 from then on.
    let last = trace.steps.last().map_or(0.0, |s| s.residual_norm);
    if last < 1e-14 && rep.lower > 0.0 {
        rep.lower = 0.0;
        rep.lower_at = trace.index_offset + trace.len() + 1;
    }
    if !rep.lower.is_finite() {
        rep.lower = 0.0;
    }
    rep
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub algorithm: Algorithm,
    pub trace: GreedyTrace,
    pub fit: Option<RateFit>,
}

/// Run each algorithm on the same target and fit its decay over `fit_range`
/// (in shifted indices n = index_offset + step).
pub fn compare(
    f: &CoeffVector,
    dict: &Dictionary,
    algorithms: &[Algorithm],
    steps: usize,
    variation_bound: f64,
    index_offset: usize,
    fit_range: (usize, usize),
) -> Result<Vec<ComparisonRow>> {
    algorithms
        .iter()
        .map(|&algorithm| {
            let mut trace = run(algorithm, f, dict, steps, variation_bound)?;
            trace.index_offset = index_offset;
            let fit = fit_decay(&trace, fit_range.0, fit_range.1).ok();
            Ok(ComparisonRow { algorithm, trace, fit })
        })
        .collect()
}

/// `algorithm,steps,final_residual,slope,r2`; missing fits are left empty.
pub fn comparison_csv(rows: &[ComparisonRow], header: &Report) -> String {
    let mut s = header.to_comment();
    s.push_str("algorithm,steps,final_residual,slope,r2\n");
    for row in rows {
        let (slope, r2) = row.fit.map_or((String::new(), String::new()), |f| (fmt_f64(f.slope), fmt_f64(f.r_squared)));
        s.push_str(&format!(
            "{},{},{},{slope},{r2}\n",
            row.algorithm,
            row.trace.len(),
            fmt_f64(row.trace.final_residual())
        ));
    }
    s
}
