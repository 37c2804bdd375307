//! The smooth profile φ: mollify the solved f, rescale it so the integral
//! equality holds exactly, and evaluate the two sup-inequalities.

use std::sync::OnceLock;

use crate::constants::c_of;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::quad::{gauss_composite, simpson_weight};
use crate::report::Report;

pub const DEFAULT_T: f64 = 0.01;
pub const MIN_T: f64 = 1e-4;
pub const EQUALITY_TOL: f64 = 1e-8;
const PANELS: usize = 32;
const A_POINTS: usize = 2000;
const WINDOW_POINTS: usize = 201;

fn bump_raw(y: f64) -> f64 {
    if y.abs() < 1.0 {
        (-1.0 / (1.0 - y * y)).exp()
    } else {
        0.0
    }
}

fn bump_mass() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| gauss_composite(-1.0, 1.0, 256, bump_raw))
}

/// Unit-mass bump ν supported on (−1, 1).
pub fn bump(y: f64) -> f64 {
    bump_raw(y) / bump_mass()
}

/// ν_t(y) = t⁻¹ ν(y/t).
pub fn nu_t(y: f64, t: f64) -> f64 {
    bump(y / t) / t
}

/// ∫_{−t}^{s} ν_t.
fn nu_cdf(s: f64, t: f64) -> f64 {
    if s <= -t {
        0.0
    } else if s >= t {
        1.0
    } else {
        gauss_composite(-1.0, s / t, PANELS, bump)
    }
}

/// (f ∗ ν_t)(x), with f zero below `f.lo()` and constant above `f.hi()`.
///
/// The convolution is split at the top of f's interval so the quadrature
/// never straddles the jump of the extension.
pub fn mollify_point(f: &GridFunction, t: f64, x: f64) -> f64 {
    let (lo, hi) = (f.lo(), f.hi());
    let body = gauss_composite((x - t).max(lo), (x + t).min(hi), PANELS, |u| f.at(u) * nu_t(x - u, t));
    let above = if x - hi > -t { f.values()[f.len() - 1] * nu_cdf(x - hi, t) } else { 0.0 };
    body + above
}

/// φ̄_t = f ∗ ν_t sampled on `m` nodes of [0, 1]. `f` lives on [τ, 1].
pub fn mollify(f: &GridFunction, t: f64, m: usize) -> Result<GridFunction> {
    if !(t > 0.0 && t < f.lo()) {
        return Err(Error::InvalidArgument(format!("mollification width {t} must lie in (0, {})", f.lo())));
    }
    GridFunction::from_fn(0.0, 1.0, m, |x| mollify_point(f, t, x).max(0.0))
}

/// Positive root of C·x² + B·x − A = 0.
pub fn normalizing_constant(a: f64, b: f64, c: f64) -> Result<f64> {
    if b == 0.0 && c == 0.0 {
        return Err(Error::DegenerateProfile);
    }
    Ok(2.0 * a / (b + (b * b + 4.0 * a * c).sqrt()))
}

/// ∫ g(x)(1 + ∫_x^1 g(z) dz/z) dx over g's interval.
pub fn equality_lhs(g: &GridFunction) -> f64 {
    let n = g.len();
    let s: f64 =
        (0..n).map(|i| simpson_weight(i, n) * g.values()[i] * (1.0 + g.log_tail_at(g.x(i)))).sum();
    s * g.step() / 3.0
}

fn equality_rhs(beta: f64) -> f64 {
    beta / (1.0 - 2.0 * beta)
}

/// Rescale φ̄ by the constant that makes the integral equality hold.
pub fn normalize(phi_bar: &GridFunction, beta: f64) -> Result<(f64, GridFunction)> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::InvalidArgument(format!("beta {beta} outside (0, 1/2)")));
    }
    let b = phi_bar.integrate();
    let n = phi_bar.len();
    let c: f64 = (0..n)
        .map(|i| simpson_weight(i, n) * phi_bar.values()[i] * phi_bar.log_tail_at(phi_bar.x(i)))
        .sum::<f64>()
        * phi_bar.step()
        / 3.0;
    let a = equality_rhs(beta);
    let ct = normalizing_constant(a, b, c)?;
    let phi = phi_bar.map_values(phi_bar.values().iter().map(|v| v * ct).collect())?;
    let residual = equality_lhs(&phi) - a;
    if residual.abs() > EQUALITY_TOL {
        return Err(Error::ProfileRejected(format!("equality residual {residual:e}")));
    }
    Ok((ct, phi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionMode {
    /// φ on [0, 1]; `t` is the mollification width, used to sample the ramp densely.
    Phi { t: f64 },
    /// f on [τ, 1], with the boundary term at τ.
    F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEntry {
    pub name: String,
    pub sup: f64,
    pub argsup: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    /// ∫g(1 + ∫_x^1 g dz/z) − β/(1−2β).
    pub equality_residual: f64,
    /// τ·f(τ) (f form only).
    pub boundary_value: Option<f64>,
    /// sup |F_numeric − F_closed| (f form only).
    pub f_consistency: Option<f64>,
}

impl ConditionReport {
    pub fn passes(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        for e in &self.entries {
            r.num(format!("{}.sup", e.name), e.sup)
                .num(format!("{}.argsup", e.name), e.argsup)
                .num(format!("{}.threshold", e.name), e.threshold)
                .push(format!("{}.pass", e.name), e.pass);
        }
        r.num("equality_residual", self.equality_residual);
        if let Some(v) = self.boundary_value {
            r.num("boundary_value", v);
        }
        if let Some(v) = self.f_consistency {
            r.num("f_consistency", v);
        }
        r
    }
}

/// Apply `f` to every point, spreading the work over the available cores.
fn par_map(points: &[f64], f: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(16);
    let chunk = points.len().div_ceil(threads).max(1);
    let mut out = vec![0.0; points.len()];
    std::thread::scope(|s| {
        for (src, dst) in points.chunks(chunk).zip(out.chunks_mut(chunk)) {
            let f = &f;
            s.spawn(move || {
                for (x, y) in src.iter().zip(dst.iter_mut()) {
                    *y = f(*x);
                }
            });
        }
    });
    out
}

/// Simpson over [s, a] with spacing close to `h`.
fn simpson_on(s: f64, a: f64, h: f64, f: impl Fn(f64) -> f64) -> f64 {
    if a <= s {
        return 0.0;
    }
    let mut n = ((a - s) / h).ceil() as usize;
    n = (n + n % 2).max(2);
    let hs = (a - s) / n as f64;
    let mut acc = 0.0;
    for j in 0..=n {
        let x = if j == n { a } else { s + j as f64 * hs };
        acc += simpson_weight(j, n + 1) * f(x);
    }
    acc * hs / 3.0
}

fn sup_abs(a_grid: &[f64], vals: &[f64]) -> (f64, f64) {
    let mut best = (0.0, a_grid.first().copied().unwrap_or(0.0));
    for (&a, &v) in a_grid.iter().zip(vals) {
        if v.abs() > best.0 {
            best = (v.abs(), a);
        }
    }
    best
}

/// Evaluate both sup-inequalities (and the equality residual) for `g`.
///
/// The a-grid is 2000 equispaced points plus the two analytic extremizers,
/// and for the φ form a dense window around the ramp at τ.
pub fn check_conditions(g: &GridFunction, beta: f64, tau: f64, mode: ConditionMode) -> ConditionReport {
    let (a_lo, start, prefix) = match mode {
        ConditionMode::Phi { .. } => {
            // Node values are exactly zero up to the ramp; the Hermite
            // stencil reaches two nodes further, so start three back.
            let first = g.values().iter().position(|v| *v != 0.0).unwrap_or(g.len() - 1);
            (0.0, g.x(first.saturating_sub(3)), "phi")
        }
        ConditionMode::F => (tau, tau, "f"),
    };
    let mut a_grid: Vec<f64> =
        (0..A_POINTS).map(|i| a_lo + (1.0 - a_lo) * i as f64 / (A_POINTS - 1) as f64).collect();
    let b_ext = tau * ((1.0 - beta) / (1.0 - 2.0 * beta)).powf(1.0 / beta);
    for b in [b_ext, tau] {
        if b >= a_lo && b <= 1.0 {
            a_grid.push(b);
        }
    }
    if let ConditionMode::Phi { t } = mode {
        for i in 0..WINDOW_POINTS {
            let a = tau - t + 2.0 * t * i as f64 / (WINDOW_POINTS - 1) as f64;
            if (0.0..=1.0).contains(&a) {
                a_grid.push(a);
            }
        }
    }
    a_grid.sort_by(f64::total_cmp);
    a_grid.dedup();

    let h = g.step();
    let l = |y: f64| g.log_tail_at(y);
    let g_start = g.at(start);

    let ineq1 = par_map(&a_grid, |a| {
        if a <= start {
            return 0.0;
        }
        let boundary = g_start * start * (1.0 + l(start / a));
        boundary
            + simpson_on(start, a, h, |x| {
                (g.derivative(x) * x - (beta - 1.0) * g.at(x)) * (1.0 + l(x / a))
            })
    });

    let n = g.len();
    let nodes: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let x = g.x(i);
            let lx = l(x);
            let p = (beta - 1.0) * (1.0 + lx) + g.values()[i];
            (x, lx, simpson_weight(i, n) * p)
        })
        .collect();
    let ineq2 = par_map(&a_grid, |a| {
        let s: f64 = nodes.iter().map(|&(x, lx, wp)| wp * (l(a * x) - lx)).sum();
        s * h / 3.0 + l(a)
    });

    let mut entries = Vec::new();
    for (k, vals) in [(1, &ineq1), (2, &ineq2)] {
        let (sup, argsup) = sup_abs(&a_grid, vals);
        entries.push(ConditionEntry {
            name: format!("{prefix}_ineq_{k}"),
            sup,
            argsup,
            threshold: 1.0,
            pass: sup < 1.0,
        });
    }

    let (boundary_value, f_consistency) = match mode {
        ConditionMode::Phi { .. } => (None, None),
        ConditionMode::F => {
            let c = c_of(beta, tau);
            let diffs = par_map(&a_grid, |a| {
                let num = simpson_on(tau, a, h, |x| g.at(x) * (1.0 + l(x / a)));
                num - c / beta * ((a / tau).powf(beta) - 1.0)
            });
            (Some(tau * g.at(tau)), Some(sup_abs(&a_grid, &diffs).0))
        }
    };

    ConditionReport {
        entries,
        equality_residual: equality_lhs(g) - equality_rhs(beta),
        boundary_value,
        f_consistency,
    }
}

/// φ together with the data it was built from.
#[derive(Debug, Clone)]
pub struct PhiProfile {
    pub phi: GridFunction,
    pub t: f64,
    pub c_t: f64,
    /// φ vanishes on [0, delta].
    pub delta: f64,
    pub beta: f64,
    pub tau: f64,
    /// Present when the profile was built here rather than read back.
    pub conditions: Option<ConditionReport>,
}

impl PhiProfile {
    pub fn from_parts(phi: GridFunction, t: f64, c_t: f64, beta: f64, tau: f64) -> Self {
        Self { phi, t, c_t, delta: tau - 2.0 * t, beta, tau, conditions: None }
    }

    /// φ(x), never negative.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        if x <= self.delta {
            0.0
        } else {
            self.phi.at(x).max(0.0)
        }
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.num("t", self.t).num("C_t", self.c_t).num("delta", self.delta);
        if let Some(c) = &self.conditions {
            r.extend("conditions", &c.to_report());
        }
        r
    }
}

/// Mollify and normalize f, halving t from `t0` until every check passes.
pub fn build_phi(f: &GridFunction, beta: f64, tau: f64, t0: f64, m: usize) -> Result<PhiProfile> {
    let mut t = t0;
    let mut last = String::from("no attempt");
    while t >= MIN_T {
        let attempt = mollify(f, t, m).and_then(|bar| normalize(&bar, beta));
        match attempt {
            Ok((c_t, phi)) => {
                let report = check_conditions(&phi, beta, tau, ConditionMode::Phi { t });
                if report.passes() && report.equality_residual.abs() <= EQUALITY_TOL {
                    let mut p = PhiProfile::from_parts(phi, t, c_t, beta, tau);
                    p.conditions = Some(report);
                    return Ok(p);
                }
                last = format!("t={t}: {}", report.to_report().to_text().replace('\n', " "));
            }
            Err(e) => last = format!("t={t}: {e}"),
        }
        t *= 0.5;
    }
    Err(Error::ProfileRejected(last))
}
