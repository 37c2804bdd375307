//! The worst-case instance: residuals r_n and atoms d_n built one step at a
//! time so that matching pursuit started from f = r_N picks d_{N+1}, d_{N+2},
//! ... in order while ‖r_n‖ = (n+1)^(β−1/2).
//!
//! Vectors are stored 0-based: coefficient e_i lives at index i − 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constants::solve_beta_star;
use crate::error::{Error, Result};
use crate::greedy::Dictionary;
use crate::grid::GridFunction;
use crate::linalg::{axpy, dot, gemm_abt, norm, CoeffVector};
use crate::phi::PhiProfile;
use crate::report::{fmt_f64, Report};

/// Tolerance for the per-step conditions.
pub const CONDITION_TOL: f64 = 1e-9;
/// Tolerance for oracle-vs-direct agreement.
pub const DISCREPANCY_TOL: f64 = 1e-9;
/// Tolerance for ⟨r_{n−1}, d_n⟩ = q_n in verification.
pub const SELECTION_TOL: f64 = 1e-10;
pub const DEFAULT_K: usize = 200;
pub const DEFAULT_N: usize = 400;
pub const DEFAULT_N_MAX: usize = 5000;
pub const MAX_DOUBLINGS: usize = 4;

/// q_n = √(n^(2β−1) − (n+1)^(2β−1)), evaluated without cancellation.
pub fn q_of(n: usize, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::InvalidArgument(format!("beta {beta} outside (0, 1/2)")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("q_n needs n >= 1".into()));
    }
    let p = 2.0 * beta - 1.0;
    let x = n as f64;
    Ok((-x.powf(p) * (p * (1.0 / x).ln_1p()).exp_m1()).sqrt())
}

#[derive(Debug, Clone)]
pub struct ConstructionParams {
    pub beta: f64,
    pub k: usize,
    pub n: usize,
    pub n_max: usize,
    /// `None` lets [`choose_epsilon`] pick it.
    pub epsilon: Option<f64>,
    pub phi: PhiProfile,
}

impl ConstructionParams {
    pub fn new(phi: PhiProfile, k: usize, n: usize, n_max: usize) -> Self {
        Self { beta: phi.beta, k, n, n_max, epsilon: None, phi }
    }

    pub fn validate(&self) -> Result<()> {
        let bstar = solve_beta_star()?;
        if !(self.beta > 0.0 && self.beta < bstar) {
            return Err(Error::InvalidArgument(format!("beta {} must lie in (0, {bstar})", self.beta)));
        }
        if self.k < 2 || self.n < self.k || self.n_max <= self.n {
            return Err(Error::InvalidArgument(format!(
                "need 2 <= K <= N < n_max, got K={} N={} n_max={}",
                self.k, self.n, self.n_max
            )));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::InvalidArgument(format!("epsilon {e} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// The scalar sequences, indexed by n ∈ [start, start + len).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequences {
    pub start: usize,
    /// q_{start−1}.
    pub q_init: f64,
    pub q: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
}

impl Sequences {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q(&self, n: usize) -> f64 {
        if n + 1 == self.start {
            self.q_init
        } else {
            self.q[n - self.start]
        }
    }

    pub fn gamma(&self, n: usize) -> f64 {
        self.gamma[n - self.start]
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.alpha[n - self.start]
    }

    pub fn xi(&self, n: usize) -> f64 {
        self.xi[n - self.start]
    }
}

/// Worst deviations seen over all executed steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstructionDiagnostics {
    pub steps: usize,
    /// max |‖r_n‖·(n+1)^(1/2−β) − 1|.
    pub norm_dev: f64,
    /// max |⟨r_{n−1}, d_n⟩ − q_n|.
    pub selection_dev: f64,
    /// max |‖d_n‖ − 1|.
    pub unit_dev: f64,
    /// max |q_n − q_of(n)|, non-zero only for replayed sequences.
    pub q_dev: f64,
    pub min_alpha: f64,
    pub min_xi: f64,
    pub max_xi: f64,
}

impl Default for ConstructionDiagnostics {
    fn default() -> Self {
        Self {
            steps: 0,
            norm_dev: 0.0,
            selection_dev: 0.0,
            unit_dev: 0.0,
            q_dev: 0.0,
            min_alpha: f64::INFINITY,
            min_xi: f64::INFINITY,
            max_xi: f64::NEG_INFINITY,
        }
    }
}

impl ConstructionDiagnostics {
    pub fn ok(&self) -> bool {
        self.norm_dev <= CONDITION_TOL
            && self.selection_dev <= CONDITION_TOL
            && self.unit_dev <= CONDITION_TOL
            && self.q_dev <= CONDITION_TOL
            && self.min_alpha >= 0.0
            && self.min_xi > 0.0
            && self.max_xi <= 1.0
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.push("steps", self.steps)
            .num("norm_dev", self.norm_dev)
            .num("selection_dev", self.selection_dev)
            .num("unit_dev", self.unit_dev)
            .num("q_dev", self.q_dev)
            .num("min_alpha", self.min_alpha)
            .num("min_xi", self.min_xi)
            .num("max_xi", self.max_xi)
            .push("ok", self.ok());
        r
    }
}

/// Construction in progress: `r` holds r_n for the current `n`.
#[derive(Debug)]
pub struct ConstructionState {
    beta: f64,
    big_n: usize,
    n_max: usize,
    n: usize,
    r: Vec<f64>,
    weights: Vec<f64>,
    seq: Sequences,
    /// Row 0 is reserved for d̃_N; row 1 + (m − N) holds d_m. Stride n_max.
    atoms: Vec<f64>,
    /// Row m − N holds r_m. Stride n_max.
    residuals: Vec<f64>,
    diagnostics: ConstructionDiagnostics,
    strict: bool,
}

impl ConstructionState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn residual(&self) -> CoeffVector {
        CoeffVector::new(self.r[..self.n].to_vec())
    }

    pub fn sequences(&self) -> &Sequences {
        &self.seq
    }

    pub fn diagnostics(&self) -> &ConstructionDiagnostics {
        &self.diagnostics
    }

    /// Advance from r_{n−1} to r_n, solving for α_n and ξ_n.
    pub fn step(&mut self, params: &ConstructionParams) -> Result<()> {
        self.advance(&params.phi, None)
    }

    fn advance(&mut self, phi: &PhiProfile, given: Option<[f64; 4]>) -> Result<()> {
        let n = self.n + 1;
        if n > self.n_max {
            return Err(Error::InvalidArgument(format!("construction already at n_max = {}", self.n_max)));
        }
        let m = n - 1;
        let inv_n = 1.0 / n as f64;
        for i in 1..n {
            self.weights[i - 1] = phi.value(i as f64 * inv_n) * inv_n;
        }
        let w = &self.weights[..m];
        let q_formula = q_of(n, self.beta)?;
        let (q, gamma, alpha, xi_given) = match given {
            Some([q, g, a, x]) => (q, g, a, Some(x)),
            None => {
                let q = q_formula;
                let gamma = 1.0 / q - 1.0 / self.seq.q(n - 1);
                let s = dot(w, &self.r[..m]);
                if s == 0.0 {
                    return Err(Error::PhiSupportMissesResidual(n));
                }
                let alpha = (q - gamma * (n as f64).powf(2.0 * self.beta - 1.0)) / s;
                (q, gamma, alpha, None)
            }
        };
        let mut d = vec![0.0; n];
        for i in 0..m {
            d[i] = gamma * self.r[i] + alpha * w[i];
        }
        let v2 = dot(&d[..m], &d[..m]);
        let xi = match xi_given {
            Some(x) => x,
            None if v2 > 1.0 => return Err(Error::XiImaginary { step: n, norm: v2.sqrt() }),
            None => (1.0 - v2).sqrt(),
        };
        d[m] = xi;
        let sel = dot(&d[..m], &self.r[..m]);
        let unit = norm(&d);
        axpy(-q, &d, &mut self.r[..n]);
        let rn = norm(&self.r[..n]);
        let target = ((n + 1) as f64).powf(self.beta - 0.5);

        let dg = &mut self.diagnostics;
        dg.steps += 1;
        let norm_dev = (rn / target - 1.0).abs();
        let selection_dev = (sel - q).abs();
        let unit_dev = (unit - 1.0).abs();
        let q_dev = (q - q_formula).abs();
        dg.norm_dev = dg.norm_dev.max(norm_dev);
        dg.selection_dev = dg.selection_dev.max(selection_dev);
        dg.unit_dev = dg.unit_dev.max(unit_dev);
        dg.q_dev = dg.q_dev.max(q_dev);
        dg.min_alpha = dg.min_alpha.min(alpha);
        dg.min_xi = dg.min_xi.min(xi);
        dg.max_xi = dg.max_xi.max(xi);

        if n >= self.big_n {
            let dim = self.n_max;
            let row = 1 + n - self.big_n;
            self.atoms[row * dim..row * dim + n].copy_from_slice(&d);
            let row = n - self.big_n;
            self.residuals[row * dim..row * dim + n].copy_from_slice(&self.r[..n]);
        }
        self.seq.q.push(q);
        self.seq.gamma.push(gamma);
        self.seq.alpha.push(alpha);
        self.seq.xi.push(xi);
        self.n = n;

        if self.strict {
            let bad = [
                (norm_dev > CONDITION_TOL, format!("norm schedule off by {norm_dev:e}")),
                (selection_dev > CONDITION_TOL, format!("<r, d> - q = {selection_dev:e}")),
                (unit_dev > CONDITION_TOL, format!("|d| - 1 = {unit_dev:e}")),
                (alpha < 0.0, format!("alpha = {alpha}")),
                (!(xi > 0.0 && xi <= 1.0), format!("xi = {xi}")),
            ];
            if let Some((_, detail)) = bad.into_iter().find(|(b, _)| *b) {
                return Err(Error::ConditionFailed { step: n, detail });
            }
        }
        Ok(())
    }
}

/// r_{K−1} = −K^(β−1/2)/√(K−1) · (e_1 + ... + e_{K−1}).
pub fn init_state(params: &ConstructionParams) -> Result<ConstructionState> {
    params.validate()?;
    Ok(empty_state(params.beta, params.k, params.n, params.n_max, q_of(params.k - 1, params.beta)?, true))
}

fn empty_state(beta: f64, k: usize, big_n: usize, n_max: usize, q_init: f64, strict: bool) -> ConstructionState {
    let coeff = -(k as f64).powf(beta - 0.5) / ((k - 1) as f64).sqrt();
    let mut r = vec![0.0; n_max];
    r[..k - 1].iter_mut().for_each(|x| *x = coeff);
    let rows = n_max - big_n + 1;
    ConstructionState {
        beta,
        big_n,
        n_max,
        n: k - 1,
        r,
        weights: vec![0.0; n_max],
        seq: Sequences { start: k, q_init, ..Default::default() },
        atoms: vec![0.0; (rows + 1) * n_max],
        residuals: vec![0.0; rows * n_max],
        diagnostics: ConstructionDiagnostics::default(),
        strict,
    }
}

/// Largest ε = 2^(−j) with ε‖r_N‖ ≤ q_{N+1}/2 for which every inequality
/// involving d̃_N is strict up to n_max. The state must be complete.
pub fn choose_epsilon(state: &ConstructionState) -> Result<f64> {
    if state.n != state.n_max {
        return Err(Error::InvalidArgument("choose_epsilon needs the construction run to n_max".into()));
    }
    let (big_n, dim) = (state.big_n, state.n_max);
    let r_n = &state.residuals[..big_n];
    let d_n = &state.atoms[dim..dim + big_n];
    let r_norm = norm(r_n);
    let rows: Vec<(f64, f64, f64)> = (big_n + 1..=state.n_max)
        .map(|n| {
            let r = &state.residuals[(n - 1 - big_n) * dim..][..n - 1];
            (dot(&r[..big_n], r_n) / r_norm, dot(&r[..big_n], d_n), state.seq.q(n))
        })
        .collect();
    let cap = 0.5 * state.seq.q(big_n + 1) / r_norm;
    for j in 1..=60 {
        let eps = 0.5f64.powi(j);
        if eps > cap {
            continue;
        }
        let c = (1.0 - eps * eps).sqrt();
        if rows.iter().all(|&(a, b, q)| (eps * a + c * b).abs() < q) {
            return Ok(eps);
        }
    }
    Err(Error::IncreaseN)
}

/// Finished instance: f = r_N and the dictionary {d̃_N, d_N, ..., d_{n_max}}
/// (the negated atoms are implicit in the sign of the greedy choice).
#[derive(Debug, Clone)]
pub struct AdversarialInstance {
    pub params: ConstructionParams,
    pub epsilon: f64,
    pub f: CoeffVector,
    pub d_tilde: CoeffVector,
    /// Index 0 is d̃_N; index m ≥ 1 is d_{N+m−1}.
    pub dictionary: Dictionary,
    pub variation_bound: f64,
    pub sequences: Sequences,
    pub diagnostics: ConstructionDiagnostics,
    residuals: Vec<f64>,
}

pub fn finalize(state: ConstructionState, params: &ConstructionParams, epsilon: f64) -> Result<AdversarialInstance> {
    if state.n != state.n_max {
        return Err(Error::InvalidArgument("finalize needs the construction run to n_max".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let ConstructionState { big_n, n_max, mut atoms, residuals, seq, diagnostics, strict, .. } = state;
    let dim = n_max;
    let f = residuals[..big_n].to_vec();
    let r_norm = norm(&f);
    let c = (1.0 - epsilon * epsilon).sqrt();
    let d_tilde: Vec<f64> = (0..big_n).map(|i| epsilon * f[i] / r_norm + c * atoms[dim + i]).collect();
    atoms[..big_n].copy_from_slice(&d_tilde);
    let mut support = vec![big_n];
    let mut labels = vec![format!("d~{big_n}")];
    for m in big_n..=n_max {
        support.push(m);
        labels.push(format!("d{m}"));
    }
    let dictionary = if strict {
        Dictionary::from_dense(dim, atoms, support, labels)?
    } else {
        Dictionary::from_dense_unchecked(dim, atoms, support, labels)
    };
    let mut params = params.clone();
    params.epsilon = Some(epsilon);
    let mut f = CoeffVector::new(f);
    f.extend_to(dim);
    Ok(AdversarialInstance {
        params,
        epsilon,
        f,
        d_tilde: CoeffVector::new(d_tilde),
        dictionary,
        variation_bound: r_norm / epsilon * (1.0 + c),
        sequences: seq,
        diagnostics,
        residuals,
    })
}

/// Run the whole construction for one (K, N), choosing ε unless given.
pub fn build(params: &ConstructionParams) -> Result<AdversarialInstance> {
    let mut state = init_state(params)?;
    while state.n < params.n_max {
        state.step(params)?;
    }
    let eps = match params.epsilon {
        Some(e) => e,
        None => choose_epsilon(&state)?,
    };
    finalize(state, params, eps)
}

#[derive(Debug)]
pub struct BuildOutcome {
    pub instance: AdversarialInstance,
    pub verification: VerificationReport,
    /// One line per failed (K, N) before the accepted one.
    pub rejected: Vec<String>,
}

/// [`build`] and [`verify`], doubling K and N up to `MAX_DOUBLINGS` times
/// while either fails.
pub fn build_verified(params: &ConstructionParams, opts: &VerifyOptions) -> Result<BuildOutcome> {
    let mut p = params.clone();
    let mut rejected = Vec::new();
    for attempt in 0..=MAX_DOUBLINGS {
        if attempt > 0 {
            p.k *= 2;
            p.n *= 2;
            if p.n >= p.n_max {
                break;
            }
        }
        match build(&p) {
            Ok(instance) => {
                let verification = verify(&instance, opts);
                if verification.passes() {
                    return Ok(BuildOutcome { instance, verification, rejected });
                }
                rejected.push(format!("K={} N={}: min margin {:e}", p.k, p.n, verification.min_margin));
            }
            Err(e) => rejected.push(format!("K={} N={}: {e}", p.k, p.n)),
        }
    }
    Err(Error::ConditionFailed { step: 0, detail: rejected.join("; ") })
}

/// Which atom an inner product is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Tilde,
    Atom(usize),
}

impl AdversarialInstance {
    pub fn k(&self) -> usize {
        self.params.k
    }

    pub fn big_n(&self) -> usize {
        self.params.n
    }

    pub fn n_max(&self) -> usize {
        self.params.n_max
    }

    pub fn beta(&self) -> f64 {
        self.params.beta
    }

    /// Dictionary index of d_k.
    pub fn atom_index(&self, k: usize) -> usize {
        k - self.big_n() + 1
    }

    /// d_k over its support, N ≤ k ≤ n_max.
    pub fn d(&self, k: usize) -> &[f64] {
        self.dictionary.atom(self.atom_index(k))
    }

    /// r_n over its support, N ≤ n ≤ n_max.
    pub fn residual(&self, n: usize) -> &[f64] {
        let dim = self.n_max();
        &self.residuals[(n - self.big_n()) * dim..][..n]
    }

    fn target(&self, t: Target) -> &[f64] {
        match t {
            Target::Tilde => self.dictionary.atom(0),
            Target::Atom(k) => self.d(k),
        }
    }

    /// h_i = (α_i/i) Σ_{j<i} φ(j/i) e_j, length i − 1.
    pub fn h(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; i - 1];
        self.fill_h(i, &mut out);
        out
    }

    fn fill_h(&self, i: usize, out: &mut [f64]) {
        let a = self.sequences.alpha(i) / i as f64;
        let inv = 1.0 / i as f64;
        for j in 1..i {
            out[j - 1] = a * self.params.phi.value(j as f64 * inv);
        }
    }

    /// ⟨h_i, v⟩ for v supported on the first `v.len()` coordinates.
    fn h_dot(&self, i: usize, v: &[f64]) -> f64 {
        let a = self.sequences.alpha(i) / i as f64;
        let inv = 1.0 / i as f64;
        let top = v.len().min(i - 1);
        let mut s = 0.0;
        for j in 1..=top {
            s += self.params.phi.value(j as f64 * inv) * v[j - 1];
        }
        a * s
    }

    /// ⟨r_n, e_k⟩ from the closed-form coefficient formula, 1 ≤ k ≤ n.
    pub fn coefficient_formula(&self, n: usize, k: usize) -> f64 {
        let (kk, beta) = (self.k(), self.beta());
        let seq = &self.sequences;
        let (lead, from) = if k >= kk {
            (seq.xi(k), k + 1)
        } else {
            ((kk as f64).powf(beta - 0.5) / (seq.q_init * ((kk - 1) as f64).sqrt()), kk)
        };
        let tail: f64 = (from..=n)
            .map(|j| seq.alpha(j) / j as f64 * self.params.phi.value(k as f64 / j as f64))
            .sum();
        -seq.q(n) * (lead + tail)
    }

    /// ⟨r_{n−1}, target⟩ by the recursions, without forming that product.
    pub fn inner_product_oracle(&self, n: usize, t: Target) -> Result<f64> {
        let (big_n, n_max) = (self.big_n(), self.n_max());
        let k = match t {
            Target::Atom(k) => k,
            Target::Tilde => big_n,
        };
        if !(n > big_n && n <= n_max && k >= big_n && k <= n_max && (k != n || t == Target::Tilde)) {
            return Err(Error::InvalidArgument(format!("pair (n={n}, k={k}) out of range")));
        }
        let seq = &self.sequences;
        match t {
            Target::Tilde => {
                let dt = self.target(t);
                let s: f64 = (big_n + 1..n).map(|i| self.h_dot(i, dt)).sum();
                let base = self.epsilon * norm(self.f.as_slice()) / seq.q(big_n);
                Ok(-seq.q(n - 1) * (s - base))
            }
            Target::Atom(k) if k < n => {
                let dk = self.d(k);
                let s: f64 = (k + 1..n).map(|i| self.h_dot(i, dk)).sum();
                Ok(-seq.q(n - 1) * s)
            }
            Target::Atom(k) => {
                let r = self.residual(n - 1);
                let mut y = seq.q(n);
                let mut rho_prev = self.h_dot(n, r);
                for j in n + 1..=k {
                    let rho = self.h_dot(j, r);
                    y = next_above(seq, j, y, rho, rho_prev);
                    rho_prev = rho;
                }
                Ok(y)
            }
        }
    }

    /// ⟨r_{n−1}, target⟩ as a plain dot product.
    pub fn direct_inner_product(&self, n: usize, t: Target) -> f64 {
        dot(self.residual(n - 1), self.target(t))
    }

    /// Dictionary indices PGA is expected to pick: step j takes d_{N+j}.
    pub fn planned_atoms(&self, steps: usize) -> Vec<usize> {
        (1..=steps).map(|j| self.atom_index(self.big_n() + j)).collect()
    }

    /// Residual of the least-squares fit of f by d̃_N and d_N.
    pub fn two_atom_fit_residual(&self) -> f64 {
        let (a, b) = (self.dictionary.atom(0), self.d(self.big_n()));
        let f = &self.f.as_slice()[..a.len()];
        let (aa, ab, bb) = (dot(a, a), dot(a, b), dot(b, b));
        let (fa, fb) = (dot(f, a), dot(f, b));
        let det = aa * bb - ab * ab;
        let x = (fa * bb - fb * ab) / det;
        let y = (fb * aa - fa * ab) / det;
        let res: Vec<f64> = (0..f.len()).map(|i| f[i] - x * a[i] - y * b[i]).collect();
        norm(&res)
    }
}

/// One step of the k > n recursion: y_j from y_{j−1}, with ρ_j = ⟨r_{n−1}, h_j⟩.
#[inline]
fn next_above(seq: &Sequences, j: usize, y: f64, rho: f64, rho_prev: f64) -> f64 {
    let (g, gp) = (seq.gamma(j), seq.gamma(j - 1));
    (1.0 / gp - seq.q(j - 1)) * g * y + rho - g / gp * rho_prev
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Check the direct path only on this many random pairs.
    pub direct_sample: Option<usize>,
    pub seed: u64,
}

impl VerifyOptions {
    /// Full direct check up to n_max = 5000, 10⁵ sampled pairs beyond.
    pub fn for_size(n_max: usize, seed: u64) -> Self {
        Self { direct_sample: (n_max > 5000).then_some(100_000), seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub pairs: usize,
    pub direct_pairs: usize,
    /// min over pairs of (q_n − |⟨r_{n−1}, d_k⟩|)/q_n, both paths.
    pub min_margin: f64,
    /// (n, k); k = None stands for d̃_N.
    pub worst_pair: (usize, Option<usize>),
    pub max_ratio_below: f64,
    pub max_ratio_above: f64,
    pub max_ratio_tilde: f64,
    pub max_discrepancy: f64,
    pub max_selection_error: f64,
    pub all_strict: bool,
    pub construction: ConstructionDiagnostics,
}

impl VerificationReport {
    pub fn passes(&self) -> bool {
        self.all_strict
            && self.min_margin > 0.0
            && self.max_discrepancy <= DISCREPANCY_TOL
            && self.max_selection_error <= SELECTION_TOL
            && self.construction.ok()
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.push("pairs", self.pairs)
            .push("direct_pairs", self.direct_pairs)
            .num("min_margin", self.min_margin)
            .push("worst_pair.n", self.worst_pair.0)
            .push("worst_pair.k", self.worst_pair.1.map_or("tilde".to_string(), |k| k.to_string()))
            .num("max_ratio.below", self.max_ratio_below)
            .num("max_ratio.above", self.max_ratio_above)
            .num("max_ratio.tilde", self.max_ratio_tilde)
            .num("max_discrepancy", self.max_discrepancy)
            .num("max_selection_error", self.max_selection_error)
            .push("all_strict", self.all_strict)
            .extend("construction", &self.construction.to_report())
            .push("pass", self.passes());
        r
    }
}

struct Tally {
    min_margin: f64,
    worst: (usize, Option<usize>),
    below: f64,
    above: f64,
    tilde: f64,
    discrepancy: f64,
    pairs: usize,
    direct_pairs: usize,
}

impl Tally {
    fn record(&mut self, n: usize, k: Option<usize>, q: f64, oracle: f64, direct: Option<f64>) {
        self.pairs += 1;
        let mut mag = oracle.abs();
        if let Some(d) = direct {
            self.direct_pairs += 1;
            self.discrepancy = self.discrepancy.max((d - oracle).abs());
            mag = mag.max(d.abs());
        }
        let ratio = mag / q;
        match k {
            None => self.tilde = self.tilde.max(ratio),
            Some(k) if k < n => self.below = self.below.max(ratio),
            Some(_) => self.above = self.above.max(ratio),
        }
        let margin = 1.0 - ratio;
        if margin < self.min_margin || !margin.is_finite() {
            self.min_margin = if margin.is_finite() { margin } else { f64::NEG_INFINITY };
            self.worst = (n, k);
        }
    }
}

/// Check |⟨r_{n−1}, d̃_N⟩| < q_n and |⟨r_{n−1}, d_k⟩| < q_n for every
/// N < n ≤ n_max and N ≤ k ≤ n_max, k ≠ n, through the recursions and
/// through direct dot products; also check ⟨r_{n−1}, d_n⟩ = q_n.
///
/// All products are assembled from blocked matrix products: R·Dᵀ for the
/// direct path, H·Dᵀ (accumulated over i) and R·Hᵀ for the recursions.
pub fn verify(inst: &AdversarialInstance, opts: &VerifyOptions) -> VerificationReport {
    const B: usize = 128;
    let (big_n, n_max) = (inst.big_n(), inst.n_max());
    let dim = n_max;
    let seq = &inst.sequences;
    let cols = n_max - big_n + 2;
    let dict = inst.dictionary.dense();

    // Rows h_i, i = N+1..=n_max.
    let mut h = vec![0.0; (n_max - big_n) * dim];
    for i in big_n + 1..=n_max {
        inst.fill_h(i, &mut h[(i - big_n - 1) * dim..][..i - 1]);
    }

    let mut samples: Vec<(usize, usize)> = match opts.direct_sample {
        None => Vec::new(),
        Some(count) => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut v: Vec<_> = (0..count).map(|_| (rng.gen_range(big_n + 1..=n_max), rng.gen_range(0..cols))).collect();
            v.sort_unstable();
            v
        }
    };
    samples.reverse();

    let base_tilde = inst.epsilon * norm(inst.f.as_slice()) / seq.q(big_n);
    let mut cum = vec![0.0; cols];
    let mut base = vec![0.0; cols];
    let mut tally = Tally {
        min_margin: f64::INFINITY,
        worst: (0, None),
        below: 0.0,
        above: 0.0,
        tilde: 0.0,
        discrepancy: 0.0,
        pairs: 0,
        direct_pairs: 0,
    };
    let mut selection_error = 0.0f64;
    let mut oracle = vec![0.0; cols];

    for n0 in (big_n + 1..=n_max).step_by(B) {
        let n1 = (n0 + B).min(n_max + 1);
        let rows = n1 - n0;
        let r_block = &inst.residuals[(n0 - 1 - big_n) * dim..];
        let kr = n1 - 2;

        let i_lo = (n0 - 1).max(big_n + 1);
        let i_hi = n1 - 1;
        let hd_cols = (n1 - big_n).min(cols);
        let mut hd = vec![0.0; rows * hd_cols];
        if i_hi > i_lo {
            gemm_abt(i_hi - i_lo, hd_cols, i_hi, &h[(i_lo - big_n - 1) * dim..], dim, dict, dim, &mut hd, hd_cols);
        }

        let rh_cols = n_max - n0 + 1;
        let mut rh = vec![0.0; rows * rh_cols];
        gemm_abt(rows, rh_cols, kr, r_block, dim, &h[(n0 - big_n - 1) * dim..], dim, &mut rh, rh_cols);

        let rd = if opts.direct_sample.is_none() {
            let mut rd = vec![0.0; rows * cols];
            gemm_abt(rows, cols, kr, r_block, dim, dict, dim, &mut rd, cols);
            Some(rd)
        } else {
            None
        };

        for n in n0..n1 {
            let row = n - n0;
            let i = n - 1;
            if i >= i_lo && i < i_hi {
                let src = &hd[(i - i_lo) * hd_cols..][..hd_cols];
                cum[..hd_cols].iter_mut().zip(src).for_each(|(c, v)| *c += v);
            }
            base[i - big_n + 1] = cum[i - big_n + 1];

            let q_prev = seq.q(n - 1);
            let q = seq.q(n);
            oracle[0] = -q_prev * (cum[0] - base_tilde);
            for k in big_n..n {
                let c = k - big_n + 1;
                oracle[c] = -q_prev * (cum[c] - base[c]);
            }
            let rho = &rh[row * rh_cols..][..rh_cols];
            let mut y = q;
            oracle[n - big_n + 1] = q;
            for j in n + 1..=n_max {
                y = next_above(seq, j, y, rho[j - n0], rho[j - 1 - n0]);
                oracle[j - big_n + 1] = y;
            }

            let direct_row = rd.as_ref().map(|rd| &rd[row * cols..][..cols]);
            let sel_col = n - big_n + 1;
            let sel_direct = match direct_row {
                Some(d) => d[sel_col],
                None => dot(inst.residual(n - 1), inst.dictionary.atom(sel_col)),
            };
            selection_error = selection_error.max((sel_direct - q).abs());

            for c in 0..cols {
                if c == sel_col {
                    continue;
                }
                let k = if c == 0 { None } else { Some(big_n + c - 1) };
                let direct = match direct_row {
                    Some(d) => Some(d[c]),
                    None => {
                        let mut hit = None;
                        while samples.last().is_some_and(|&(sn, sc)| (sn, sc) <= (n, c)) {
                            let (sn, sc) = samples.pop().unwrap();
                            if (sn, sc) == (n, c) {
                                hit = Some(dot(inst.residual(n - 1), inst.dictionary.atom(c)));
                            }
                        }
                        hit
                    }
                };
                tally.record(n, k, q, oracle[c], direct);
            }
        }
    }

    VerificationReport {
        pairs: tally.pairs,
        direct_pairs: tally.direct_pairs,
        min_margin: tally.min_margin,
        worst_pair: tally.worst,
        max_ratio_below: tally.below,
        max_ratio_above: tally.above,
        max_ratio_tilde: tally.tilde,
        max_discrepancy: tally.discrepancy,
        max_selection_error: selection_error,
        all_strict: tally.below < 1.0 && tally.above < 1.0 && tally.tilde < 1.0,
        construction: inst.diagnostics,
    }
}

/// Instance file: key=value header, the φ grid, then the scalar sequences.
/// Atoms are not stored; [`reconstruct`] replays them bit-exactly.
pub fn to_instance_file(inst: &AdversarialInstance, header: &Report) -> String {
    let p = &inst.params;
    let mut out = header.to_comment();
    let mut r = Report::new();
    r.num("beta", p.beta)
        .num("tau", p.phi.tau)
        .push("K", p.k)
        .push("N", p.n)
        .push("n_max", p.n_max)
        .num("epsilon", inst.epsilon)
        .num("t", p.phi.t)
        .num("C_t", p.phi.c_t)
        .num("q_init", inst.sequences.q_init)
        .num("variation_bound", inst.variation_bound);
    out.push_str(&r.to_text());
    out.push_str("[phi]\n");
    out.push_str(&p.phi.phi.to_csv(&Report::new()));
    out.push_str("[sequences]\nn,q,gamma,alpha,xi\n");
    let s = &inst.sequences;
    for (j, n) in (s.start..s.start + s.len()).enumerate() {
        out.push_str(&format!(
            "{n},{},{},{},{}\n",
            fmt_f64(s.q[j]),
            fmt_f64(s.gamma[j]),
            fmt_f64(s.alpha[j]),
            fmt_f64(s.xi[j])
        ));
    }
    out
}

/// Parsed instance file, before replay.
#[derive(Debug, Clone)]
pub struct InstanceFile {
    pub params: ConstructionParams,
    pub epsilon: f64,
    pub sequences: Sequences,
    /// Every `key=value` line, comments included.
    pub header: Report,
}

pub fn read_instance_file(text: &str) -> Result<InstanceFile> {
    let phi_at = text.find("[phi]\n").ok_or_else(|| Error::Parse("missing [phi] section".into()))?;
    let seq_at = text.find("[sequences]\n").ok_or_else(|| Error::Parse("missing [sequences] section".into()))?;
    if seq_at < phi_at {
        return Err(Error::Parse("[sequences] before [phi]".into()));
    }
    let head = &text[..phi_at];
    let own = Report::parse(&head.lines().filter(|l| !l.trim_start().starts_with('#')).collect::<Vec<_>>().join("\n"));
    let header = Report::parse(head);
    let beta = own.get_f64("beta")?;
    let tau = own.get_f64("tau")?;
    let (k, n, n_max) = (own.get_usize("K")?, own.get_usize("N")?, own.get_usize("n_max")?);
    let epsilon = own.get_f64("epsilon")?;
    let t = own.get_f64("t")?;
    let c_t = own.get_f64("C_t")?;
    let q_init = own.get_f64("q_init")?;
    let (grid, _) = GridFunction::from_csv(&text[phi_at + "[phi]\n".len()..seq_at])?;
    let phi = PhiProfile::from_parts(grid, t, c_t, beta, tau);

    let mut seq = Sequences { start: k, q_init, ..Default::default() };
    let mut lines = text[seq_at + "[sequences]\n".len()..].lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("n,q,gamma,alpha,xi") {
        return Err(Error::Parse("expected `n,q,gamma,alpha,xi`".into()));
    }
    for (j, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::Parse(format!("bad sequence row `{line}`")));
        }
        let idx: usize = f[0].parse().map_err(|_| Error::Parse(format!("bad index `{}`", f[0])))?;
        if idx != k + j {
            return Err(Error::Parse(format!("sequence row {idx} out of order")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}`")));
        seq.q.push(num(f[1])?);
        seq.gamma.push(num(f[2])?);
        seq.alpha.push(num(f[3])?);
        seq.xi.push(num(f[4])?);
    }
    if seq.len() != n_max + 1 - k {
        return Err(Error::Parse(format!("expected {} sequence rows, found {}", n_max + 1 - k, seq.len())));
    }
    let mut params = ConstructionParams::new(phi, k, n, n_max);
    params.beta = beta;
    params.epsilon = Some(epsilon);
    Ok(InstanceFile { params, epsilon, sequences: seq, header })
}

/// Rebuild the atoms from the stored sequences. Defects are recorded in
/// the diagnostics rather than raised, so [`verify`] can report them.
pub fn reconstruct(file: &InstanceFile) -> Result<AdversarialInstance> {
    let p = &file.params;
    p.validate()?;
    let s = &file.sequences;
    let mut state = empty_state(p.beta, p.k, p.n, p.n_max, s.q_init, false);
    for n in p.k..=p.n_max {
        state.advance(&p.phi, Some([s.q(n), s.gamma(n), s.alpha(n), s.xi(n)]))?;
    }
    finalize(state, p, file.epsilon)
}
