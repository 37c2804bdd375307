//! Rate constants (γ, α, β), the critical pair (β*, τ*), and the closed-form
//! quantities c, F, G, R_G together with the parameter inequalities.

use crate::error::{Error, Result};
use crate::roots::bisect_newton;

/// Exponents attached to one shrinkage value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub shrinkage: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub residual: f64,
}

/// Left-hand side of the rate equation for shrinkage `s`.
pub fn gamma_residual(gamma: f64, s: f64) -> f64 {
    (1.0 + gamma).powf(1.0 / (2.0 + gamma)) * (1.0 + 1.0 / (1.0 + gamma)) - 1.0 - (2.0 - s) / gamma
}

fn gamma_residual_deriv(g: f64, s: f64) -> f64 {
    let a = (1.0 + g).powf(1.0 / (2.0 + g));
    let du = (1.0 / (1.0 + g) * (2.0 + g) - (1.0 + g).ln()) / (2.0 + g).powi(2);
    let b = 1.0 + 1.0 / (1.0 + g);
    let db = -1.0 / (1.0 + g).powi(2);
    a * du * b + a * db + (2.0 - s) / (g * g)
}

/// Root γ > 1 of the rate equation, with α = γ/(2(2+γ)) and β = 1/2 − α.
pub fn solve_gamma(s: f64) -> Result<RateConstants> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidArgument(format!("shrinkage {s} not in (0, 1]")));
    }
    let gamma = bisect_newton(
        |g| gamma_residual(g, s),
        |g| gamma_residual_deriv(g, s),
        1.0,
        100.0,
        1e-8,
        1e-13,
    )?;
    let alpha = gamma / (2.0 * (2.0 + gamma));
    Ok(RateConstants {
        shrinkage: s,
        gamma,
        alpha,
        beta: 0.5 - alpha,
        residual: gamma_residual(gamma, s).abs(),
    })
}

/// (β/(1−β))^β · (1−β)²/(1−2β); the construction needs this below 1.
pub fn beta_condition_lhs(beta: f64) -> f64 {
    (beta / (1.0 - beta)).powf(beta) * (1.0 - beta).powi(2) / (1.0 - 2.0 * beta)
}

/// The critical β* in (0, 1/2) where `beta_condition_lhs` equals 1.
pub fn solve_beta_star() -> Result<f64> {
    // Log form: smooth and monotone on the bracket, avoids the trivial root at 0.
    let g = |b: f64| b * (b / (1.0 - b)).ln() + 2.0 * (1.0 - b).ln() - (1.0 - 2.0 * b).ln();
    let dg = |b: f64| {
        (b / (1.0 - b)).ln() + 1.0 + b / (1.0 - b) - 2.0 / (1.0 - b) + 2.0 / (1.0 - 2.0 * b)
    };
    let beta = bisect_newton(g, dg, 0.05, 0.49, 1e-8, 1e-15)?;
    Ok(beta)
}

/// τ*(β) = ((1−2β)/(1−β)²)^(1/β).
pub fn tau_star(beta: f64) -> f64 {
    ((1.0 - 2.0 * beta) / (1.0 - beta).powi(2)).powf(1.0 / beta)
}

/// c = β²/((1−2β)(τ^(−β) − 1)).
pub fn c_of(beta: f64, tau: f64) -> f64 {
    beta * beta / ((1.0 - 2.0 * beta) * (tau.powf(-beta) - 1.0))
}

/// Strictness report for one parameter inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub name: &'static str,
    pub lhs: f64,
    /// Bound the left-hand side is compared with.
    pub bound: f64,
    /// `true` when the inequality is `lhs > bound`, otherwise `lhs < bound`.
    pub lower: bool,
}

impl Margin {
    pub fn strict(&self) -> bool {
        if self.lower {
            self.lhs > self.bound
        } else {
            self.lhs < self.bound
        }
    }

    /// Distance to the bound, positive when strictly satisfied.
    pub fn slack(&self) -> f64 {
        if self.lower {
            self.lhs - self.bound
        } else {
            self.bound - self.lhs
        }
    }
}

/// Closed-form quantities at a fixed (β, τ).
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormBundle {
    pub beta: f64,
    pub tau: f64,
    pub c: f64,
    pub rg: f64,
    pub rg_argmax: f64,
    /// Grid-scan value of R_G over 10⁴+1 points, for cross-checking.
    pub rg_scan: f64,
    pub margins: Vec<Margin>,
}

impl ClosedFormBundle {
    /// F(a) = (c/β)(τ^(−β) a^β − 1).
    pub fn f_closed(&self, a: f64) -> f64 {
        self.c / self.beta * ((a / self.tau).powf(self.beta) - 1.0)
    }

    /// G(a) = c τ^(−β) a^(β−1).
    pub fn g(&self, a: f64) -> f64 {
        self.c * self.tau.powf(-self.beta) * a.powf(self.beta - 1.0)
    }

    pub fn g_prime(&self, a: f64) -> f64 {
        (self.beta - 1.0) * self.c * self.tau.powf(-self.beta) * a.powf(self.beta - 2.0)
    }

    /// a^(−2) ∫_τ^a G(x/a) dx in closed form.
    pub fn rg_at(&self, a: f64) -> f64 {
        rg_at(self.beta, self.tau, self.c, a)
    }

    pub fn margin(&self, name: &str) -> Option<&Margin> {
        self.margins.iter().find(|m| m.name == name)
    }

    pub fn all_strict(&self) -> bool {
        self.margins.iter().all(Margin::strict) && self.rg < 1.0
    }
}

fn rg_at(beta: f64, tau: f64, c: f64, a: f64) -> f64 {
    c * a.powf(-(beta + 1.0)) / beta * ((a / tau).powf(beta) - 1.0)
}

/// Evaluate c, R_G and all parameter inequalities at (β, τ).
pub fn bundle(beta: f64, tau: f64) -> Result<ClosedFormBundle> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::InvalidArgument(format!("beta {beta} not in (0, 1/2)")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau {tau} not in (0, 1)")));
    }
    let c = c_of(beta, tau);
    let rg_argmax = (tau * (1.0 + beta).powf(1.0 / beta)).min(1.0);
    let rg = rg_at(beta, tau, c, rg_argmax);
    let scan_points = 10_001;
    let rg_scan = (0..scan_points)
        .map(|i| tau + (1.0 - tau) * i as f64 / (scan_points - 1) as f64)
        .map(|a| rg_at(beta, tau, c, a))
        .fold(f64::NEG_INFINITY, f64::max);

    let tmb = tau.powf(-beta);
    let pre = beta / ((1.0 - 2.0 * beta) * (tmb - 1.0));
    let common = beta - 1.0 + tmb * (1.0 - 2.0 * beta) / (1.0 - beta);
    let p2 = pre * (common - beta / tau * ((1.0 - 2.0 * beta) / (1.0 - beta)).powf(1.0 / beta));
    let p3 = pre * (common + beta * beta / (tau * (1.0 - beta)));
    let margins = vec![
        Margin { name: "c_below_one", lhs: c, bound: 1.0, lower: false },
        Margin { name: "tail_integral_min", lhs: p2, bound: -1.0, lower: true },
        Margin { name: "tail_integral_max", lhs: p3, bound: 1.0, lower: false },
        Margin {
            name: "beta_power",
            lhs: beta * (1.0 - beta).powf(1.0 / beta),
            bound: 1.0,
            lower: false,
        },
        Margin { name: "critical_beta", lhs: beta_condition_lhs(beta), bound: 1.0, lower: false },
    ];
    Ok(ClosedFormBundle { beta, tau, c, rg, rg_argmax, rg_scan, margins })
}

/// Offsets from the critical pair that give strict margins everywhere.
///
/// β = β* − beta_margin, τ = (1 − tau_margin)·τ*(β).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub beta_margin: f64,
    pub tau_margin: f64,
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self { beta_margin: 0.005, tau_margin: 0.05 }
    }
}

impl OperatingPoint {
    /// Resolved (β, τ).
    pub fn resolve(&self) -> Result<(f64, f64)> {
        let beta = solve_beta_star()? - self.beta_margin;
        if !(beta > 0.0 && beta < 0.5) {
            return Err(Error::InvalidArgument(format!("beta_margin {} out of range", self.beta_margin)));
        }
        if !(self.tau_margin > 0.0 && self.tau_margin < 1.0) {
            return Err(Error::InvalidArgument(format!("tau_margin {} not in (0, 1)", self.tau_margin)));
        }
        Ok((beta, (1.0 - self.tau_margin) * tau_star(beta)))
    }
}
