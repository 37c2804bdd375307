//! f(a) + a⁻¹∫_τ^a f(x) f(x/a) dx = G(a) on [τ, 1], solved by iterating the
//! clamped map T̃(f) = max(0, G − S(f)). Even iterates decrease, odd ones
//! increase, and together they bracket the solution.

use crate::constants::ClosedFormBundle;
use crate::error::{Error, Result};
use crate::grid::{scaled_selfconv_nonneg, Extension, GridFunction};
use crate::quad::simpson_weight;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;
const MONOTONE_SLACK: f64 = 1e-9;

/// G sampled on `m` nodes of [τ, 1], zero below τ.
pub fn sample_g(b: &ClosedFormBundle, m: usize) -> Result<GridFunction> {
    Ok(GridFunction::from_fn(b.tau, 1.0, m, |a| b.g(a))?.with_extension(Extension::ZeroBelowConstAbove))
}

/// a ↦ G(a) − a⁻¹∫_τ^a f(x) f(x/a) dx on G's nodes, optionally clamped at 0.
///
/// f is taken to be non-negative: interpolation undershoot next to a
/// clamped kink is cut off at 0.
pub fn apply_t(g: &GridFunction, f: &GridFunction, tau: f64, clamp: bool) -> GridFunction {
    let vals = (0..g.len())
        .map(|i| {
            let v = g.values()[i] - scaled_selfconv_nonneg(f, g.x(i), tau);
            if clamp {
                v.max(0.0)
            } else {
                v
            }
        })
        .collect();
    g.map_values(vals).expect("same grid")
}

/// sup_a a⁻² ∫_τ^a G(x/a) dx, evaluated on G's nodes by quadrature.
pub fn rg_numeric(g: &GridFunction, tau: f64) -> f64 {
    let mut best = 0.0f64;
    for i in 1..g.len() {
        let a = g.x(i);
        let n = {
            let n = i.max(2);
            n + n % 2
        };
        let h = (a - tau) / n as f64;
        let mut s = 0.0;
        for j in 0..=n {
            let x = if j == n { a } else { tau + j as f64 * h };
            s += simpson_weight(j, n + 1) * g.at(x / a);
        }
        best = best.max(s * h / 3.0 / (a * a));
    }
    best
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    /// f₀ = G, f₁, f₂, ...
    pub iterates: Vec<GridFunction>,
    /// sup |f_{2n} − f_{2n+1}| for the last pair.
    pub bracket_width: f64,
    pub converged_f: GridFunction,
    /// sup |f(a) + a⁻¹∫ f(x)f(x/a)dx − G(a)| over the nodes.
    pub residual_sup: f64,
    /// min of f₃ over the grid (NaN with fewer than four iterates).
    pub f3_min: f64,
    /// Both bracket inequalities hold for (g₁, g₂) = (f₃, f₂).
    pub bracket_inequalities: bool,
    pub iterations: usize,
    pub rg: f64,
    /// max |f′| by finite differences of the converged f.
    pub derivative_sup: f64,
    /// K/(1 − R_G) with K = sup|G′| + 2 sup(G)²/τ.
    pub derivative_bound: f64,
}

fn sup_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values().iter().zip(b.values()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn check_monotone(iterates: &[GridFunction]) -> Result<()> {
    let j = iterates.len() - 1;
    if j >= 2 {
        let (new, old) = (&iterates[j], &iterates[j - 2]);
        // Evens go down, odds go up.
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let worst = new
            .values()
            .iter()
            .zip(old.values())
            .map(|(n, o)| sign * (n - o))
            .fold(0.0f64, f64::max);
        if worst > MONOTONE_SLACK {
            return Err(Error::GridTooCoarse(worst));
        }
    }
    if j >= 1 {
        let (even, odd) = if j % 2 == 0 { (&iterates[j], &iterates[j - 1]) } else { (&iterates[j - 1], &iterates[j]) };
        let worst = odd.values().iter().zip(even.values()).map(|(o, e)| o - e).fold(0.0f64, f64::max);
        if worst > MONOTONE_SLACK {
            return Err(Error::GridTooCoarse(worst));
        }
    }
    Ok(())
}

fn residual_sup(g: &GridFunction, f: &GridFunction, tau: f64) -> f64 {
    (0..g.len())
        .map(|i| (f.values()[i] + scaled_selfconv_nonneg(f, g.x(i), tau) - g.values()[i]).abs())
        .fold(0.0, f64::max)
}

fn bracket_ok(g: &GridFunction, g1: &GridFunction, g2: &GridFunction, tau: f64) -> bool {
    let upper = apply_t(g, g1, tau, false);
    let lower = apply_t(g, g2, tau, false);
    let tol = 1e-12;
    (0..g.len()).all(|i| {
        let (l, u, gv) = (g1.values()[i], g2.values()[i], g.values()[i]);
        l >= -tol && l <= u + tol && u <= gv + tol && upper.values()[i] <= u + tol && lower.values()[i] >= l - tol
    })
}

/// The first `k + 1` iterates f₀ = G, ..., f_k, with monotonicity checked.
pub fn bracket_sequence(g: &GridFunction, tau: f64, k: usize) -> Result<IterationReport> {
    if k < 4 {
        return Err(Error::InvalidArgument(format!("need k >= 4, got {k}")));
    }
    let mut iterates = vec![g.clone()];
    for _ in 0..k {
        let next = apply_t(g, iterates.last().unwrap(), tau, true);
        iterates.push(next);
        check_monotone(&iterates)?;
    }
    finish(g, tau, iterates, k)
}

fn finish(g: &GridFunction, tau: f64, iterates: Vec<GridFunction>, iterations: usize) -> Result<IterationReport> {
    let j = iterates.len() - 1;
    let (a, b) = (&iterates[j], &iterates[j - 1]);
    let bracket_width = sup_diff(a, b);
    let avg = a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect();
    let converged_f = g.map_values(avg)?;
    let f3_min = iterates.get(3).map_or(f64::NAN, |f3| f3.values().iter().copied().fold(f64::INFINITY, f64::min));
    let bracket_inequalities = f3_min > 0.0 && bracket_ok(g, &iterates[3], &iterates[2], tau);
    let residual_sup = residual_sup(g, &converged_f, tau);
    let rg = rg_numeric(g, tau);
    let h = g.step();
    let fv = converged_f.values();
    let derivative_sup = fv.windows(2).map(|w| ((w[1] - w[0]) / h).abs()).fold(0.0, f64::max);
    let gv = g.values();
    let g_sup = gv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gp_sup = gv.windows(2).map(|w| ((w[1] - w[0]) / h).abs()).fold(0.0, f64::max);
    let derivative_bound = (gp_sup + 2.0 * g_sup * g_sup / tau) / (1.0 - rg);
    Ok(IterationReport {
        iterates,
        bracket_width,
        converged_f,
        residual_sup,
        f3_min,
        bracket_inequalities,
        iterations,
        rg,
        derivative_sup,
        derivative_bound,
    })
}

/// Iterate T̃ until successive same-parity iterates and the bracket both
/// move by less than `tol`; return the midpoint of the final bracket.
pub fn solve_f(g: &GridFunction, tau: f64, tol: f64, max_iter: usize) -> Result<IterationReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let rg = rg_numeric(g, tau);
    if rg >= 1.0 {
        return Err(Error::ContractionViolated(rg));
    }
    let mut iterates = vec![g.clone()];
    let mut width = f64::INFINITY;
    for it in 1..=max_iter {
        let next = apply_t(g, iterates.last().unwrap(), tau, true);
        iterates.push(next);
        check_monotone(&iterates)?;
        let j = iterates.len() - 1;
        width = sup_diff(&iterates[j], &iterates[j - 1]);
        if j >= 4 {
            let step = sup_diff(&iterates[j], &iterates[j - 2]);
            if step < tol && width < tol {
                return finish(g, tau, iterates, it);
            }
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, width })
}
