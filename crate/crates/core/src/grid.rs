//! Functions sampled on a uniform grid: cubic Hermite interpolation,
//! Simpson quadrature, and the weighted tail integral ∫_x^hi g(z) dz/z.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quad::{gauss, simpson_samples, simpson_weight, GL4};
use crate::report::{fmt_f64, Report};

/// How a grid function continues outside `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extension {
    /// Evaluation outside the interval is an error.
    #[default]
    None,
    /// Zero below `lo`, constant `value(hi)` above `hi`.
    ZeroBelowConstAbove,
    /// Zero on both sides.
    Zero,
}

#[derive(Debug, Clone)]
pub struct GridFunction {
    lo: f64,
    hi: f64,
    h: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    extension: Extension,
    /// cum[i] = ∫_lo^{x_i} g(z)/z dz, built on first use.
    log_cum: OnceLock<Vec<f64>>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.lo == other.lo
            && self.hi == other.hi
            && self.values == other.values
            && self.extension == other.extension
    }
}

impl GridFunction {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        let m = values.len();
        if m < 3 || m % 2 == 0 {
            return Err(Error::InvalidArgument(format!("grid size {m} must be odd and >= 3")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bad interval [{lo}, {hi}]")));
        }
        let h = (hi - lo) / (m - 1) as f64;
        let slopes = node_slopes(&values, h);
        Ok(Self { lo, hi, h, values, slopes, extension: Extension::None, log_cum: OnceLock::new() })
    }

    /// Sample `f` at `m` equispaced nodes.
    pub fn from_fn(lo: f64, hi: f64, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("grid size {m} must be odd and >= 3")));
        }
        let h = (hi - lo) / (m - 1) as f64;
        let values = (0..m).map(|i| f(node(lo, hi, h, i, m))).collect();
        Self::new(lo, hi, values)
    }

    pub fn with_extension(mut self, ext: Extension) -> Self {
        self.extension = ext;
        self
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    /// Node x_i; the last node is exactly `hi`.
    pub fn x(&self, i: usize) -> f64 {
        node(self.lo, self.hi, self.h, i, self.values.len())
    }

    /// Same nodes, new values (extension kept).
    pub fn map_values(&self, values: Vec<f64>) -> Result<Self> {
        Ok(Self::new(self.lo, self.hi, values)?.with_extension(self.extension))
    }

    /// Checked evaluation: interpolates inside, applies the extension
    /// outside, errors outside when there is no extension.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x >= self.lo && x <= self.hi {
            return Ok(self.interp(x));
        }
        match self.extension {
            Extension::None => Err(Error::OutOfDomain { x, lo: self.lo, hi: self.hi }),
            _ => Ok(self.at(x)),
        }
    }

    /// Unchecked evaluation for hot loops. Outside the interval the
    /// extension rule applies; with no rule the nearest endpoint is used.
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        if x < self.lo {
            match self.extension {
                Extension::None => self.values[0],
                _ => 0.0,
            }
        } else if x > self.hi {
            match self.extension {
                Extension::Zero => 0.0,
                _ => *self.values.last().unwrap(),
            }
        } else {
            self.interp(x)
        }
    }

    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        let s = (x - self.lo) / self.h;
        let last = self.values.len() - 2;
        let i = (s.floor().max(0.0) as usize).min(last);
        (i, s - i as f64)
    }

    #[inline]
    fn interp(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.h, self.slopes[i + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }

    /// Derivative of the cubic interpolant; zero outside the interval.
    pub fn derivative(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let (i, t) = self.locate(x);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.h, self.slopes[i + 1] * self.h);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / self.h
    }

    /// Composite Simpson over all nodes.
    pub fn integrate(&self) -> f64 {
        let n = self.values.len();
        let s: f64 = self.values.iter().enumerate().map(|(i, v)| simpson_weight(i, n) * v).sum();
        s * self.h / 3.0
    }

    fn log_cum(&self) -> &[f64] {
        self.log_cum.get_or_init(|| {
            let mut cum = Vec::with_capacity(self.values.len());
            let mut acc = 0.0;
            cum.push(0.0);
            for i in 0..self.values.len() - 1 {
                acc += gauss(&GL4, self.x(i), self.x(i + 1), |z| self.interp(z) / z);
                cum.push(acc);
            }
            cum
        })
    }

    /// ∫_lo^x g(z)/z dz for x in [lo, hi] (clamped).
    #[inline]
    fn log_cum_at(&self, x: f64) -> f64 {
        let x = x.clamp(self.lo, self.hi);
        let cum = self.log_cum();
        let (i, _) = self.locate(x);
        let xi = self.x(i);
        if x == xi {
            return cum[i];
        }
        cum[i] + gauss(&GL4, xi, x, |z| self.interp(z) / z)
    }

    /// ∫_x^hi g(z)/z dz. Intended for `hi = 1`.
    ///
    /// With `lo = 0` the integral only exists when g vanishes near 0;
    /// that is the caller's responsibility.
    pub fn log_tail(&self, x: f64) -> Result<f64> {
        if !(x >= self.lo && x <= self.hi) {
            return Err(Error::OutOfDomain { x, lo: self.lo, hi: self.hi });
        }
        Ok(self.log_tail_at(x))
    }

    /// Unchecked `log_tail`; clamps to the interval, so the zero-below
    /// extension is honoured for x < lo.
    #[inline]
    pub fn log_tail_at(&self, x: f64) -> f64 {
        let total = *self.log_cum().last().unwrap();
        total - self.log_cum_at(x)
    }

    /// ∫_{x0}^{x1} g(z)/z dz, both ends clamped to the interval.
    pub fn log_integral(&self, x0: f64, x1: f64) -> f64 {
        self.log_cum_at(x1) - self.log_cum_at(x0)
    }

    /// Grid CSV: `# key=value` header (`extra`, then lo/hi/M), `x,value`, rows.
    pub fn to_csv(&self, extra: &Report) -> String {
        let mut s = extra.to_comment();
        s.push_str(&format!(
            "# lo={},hi={},M={}\nx,value\n",
            fmt_f64(self.lo),
            fmt_f64(self.hi),
            self.values.len()
        ));
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&fmt_f64(self.x(i)));
            s.push(',');
            s.push_str(&fmt_f64(*v));
            s.push('\n');
        }
        s
    }

    /// Parse a grid CSV; returns the function and its header pairs.
    pub fn from_csv(text: &str) -> Result<(Self, Report)> {
        let header = Report::parse(
            &text.lines().take_while(|l| l.starts_with('#')).collect::<Vec<_>>().join("\n"),
        );
        let lo = header.get_f64("lo")?;
        let hi = header.get_f64("hi")?;
        let m = header.get_usize("M")?;
        let mut values = Vec::with_capacity(m);
        let mut seen_columns = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_columns {
                if line != "x,value" {
                    return Err(Error::Parse(format!("expected `x,value`, got `{line}`")));
                }
                seen_columns = true;
                continue;
            }
            let (_, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad grid row `{line}`")))?;
            values.push(v.trim().parse().map_err(|_| Error::Parse(format!("bad value `{v}`")))?);
        }
        if values.len() != m {
            return Err(Error::Parse(format!("header says M={m}, found {} rows", values.len())));
        }
        Ok((Self::new(lo, hi, values)?, header))
    }
}

#[inline]
fn node(lo: f64, hi: f64, h: f64, i: usize, m: usize) -> f64 {
    if i + 1 == m {
        hi
    } else {
        lo + i as f64 * h
    }
}

/// Node derivatives by fourth-order finite differences (second order when
/// the grid is too small).
fn node_slopes(y: &[f64], h: f64) -> Vec<f64> {
    let m = y.len();
    let mut d = vec![0.0; m];
    if m < 5 {
        for i in 0..m {
            d[i] = if i == 0 {
                (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h)
            } else if i + 1 == m {
                (3.0 * y[m - 1] - 4.0 * y[m - 2] + y[m - 3]) / (2.0 * h)
            } else {
                (y[i + 1] - y[i - 1]) / (2.0 * h)
            };
        }
        return d;
    }
    let c = 12.0 * h;
    d[0] = (-25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]) / c;
    d[1] = (-3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4]) / c;
    for i in 2..m - 2 {
        d[i] = (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / c;
    }
    let n = m - 1;
    d[n] = (25.0 * y[n] - 48.0 * y[n - 1] + 36.0 * y[n - 2] - 16.0 * y[n - 3] + 3.0 * y[n - 4]) / c;
    d[n - 1] = (3.0 * y[n] + 10.0 * y[n - 1] - 18.0 * y[n - 2] + 6.0 * y[n - 3] - y[n - 4]) / c;
    d
}

/// a⁻¹ ∫_τ^a f(x) f(x/a) dx, with f read through `at` (zero below τ when
/// the extension says so). Zero for a ≤ τ.
///
/// When a is a node of f's grid and τ = lo, the x-samples are the grid
/// nodes themselves; otherwise a uniform subdivision of matching spacing.
pub fn scaled_selfconv(f: &GridFunction, a: f64, tau: f64) -> f64 {
    selfconv_with(f, a, tau, |x| f.at(x))
}

/// [`scaled_selfconv`] for a non-negative f: interpolated values are
/// clipped at 0 so overshoot near kinks cannot flip the sign of the term.
pub fn scaled_selfconv_nonneg(f: &GridFunction, a: f64, tau: f64) -> f64 {
    selfconv_with(f, a, tau, |x| f.at(x).max(0.0))
}

#[inline]
fn selfconv_with(f: &GridFunction, a: f64, tau: f64, ev: impl Fn(f64) -> f64) -> f64 {
    if a <= tau {
        return 0.0;
    }
    let h = f.step();
    let intervals = ((a - tau) / h).round();
    let on_grid = tau == f.lo() && ((tau + intervals * h) - a).abs() <= 1e-12 * a.abs().max(1.0);
    let inv_a = 1.0 / a;
    if on_grid && intervals >= 1.0 {
        let n = intervals as usize;
        let mut y = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let x = f.x(j);
            y.push(f.values()[j] * ev(x * inv_a));
        }
        return simpson_samples(&y, h) * inv_a;
    }
    let mut n = ((a - tau) / h).ceil() as usize;
    n = (n + n % 2).max(2);
    let hs = (a - tau) / n as f64;
    let mut s = 0.0;
    for j in 0..=n {
        let x = if j == n { a } else { tau + j as f64 * hs };
        s += simpson_weight(j, n + 1) * ev(x) * ev(x * inv_a);
    }
    s * hs / 3.0 * inv_a
}
