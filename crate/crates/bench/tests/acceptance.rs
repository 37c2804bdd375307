//! One line per acceptance criterion; exits nonzero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharpmp::adversarial::{self, build_verified, q_of, ConstructionParams, Target, VerifyOptions};
use sharpmp::constants::{c_of, tau_star};
use sharpmp::integral_equation::{bracket_sequence, sample_g, solve_f, DEFAULT_MAX_ITER, DEFAULT_TOL};
use sharpmp::linalg::CoeffVector;
use sharpmp::phi::{build_phi, PhiProfile, DEFAULT_T};
use sharpmp::{
    bundle, fit_decay, run, solve_beta_star, solve_gamma, AdversarialInstance, Algorithm, Dictionary, GridFunction,
    OperatingPoint, VerificationReport,
};

const M: usize = 2001;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let r = solve_gamma(1.0).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let pass = (0.182..=0.183).contains(&r.alpha) && r.residual <= 1e-12 && secs < 1.0;
    outcome(pass, format!("alpha={:.12} residual={:e} time={secs:.3}s", r.alpha, r.residual))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let small = solve_gamma(1e-6).unwrap().alpha;
    let alphas: Vec<f64> = (1..=10).map(|i| solve_gamma(i as f64 / 10.0).unwrap().alpha).collect();
    let secs = t.elapsed().as_secs_f64();
    let decreasing = alphas.windows(2).all(|w| w[1] < w[0]);
    let pass = (0.304..=0.306).contains(&small) && decreasing && secs < 1.0;
    outcome(pass, format!("alpha(1e-6)={small:.6} decreasing={decreasing} time={secs:.3}s"))
}

fn criterion_3() -> Outcome {
    let gap = (0.5 - solve_beta_star().unwrap() - solve_gamma(1.0).unwrap().alpha).abs();
    outcome(gap <= 1e-9, format!("|1/2 - beta* - alpha|={gap:e}"))
}

fn criterion_4() -> Outcome {
    let bs = solve_beta_star().unwrap();
    let ts = tau_star(bs);
    let b = bundle(bs, ts).unwrap();
    let c_err = (c_of(bs, ts) - 1.0).abs();
    let agree = (b.rg - b.rg_scan).abs();
    let pass = c_err <= 1e-9 && b.rg < 1.0 && (b.rg - 0.87).abs() <= 0.01 && (b.rg_scan - 0.87).abs() <= 0.01 && agree <= 1e-8;
    outcome(pass, format!("|c-1|={c_err:e} R_G={:.6} scan={:.6} diff={agree:e}", b.rg, b.rg_scan))
}

/// Returns the outcome and the converged f at M nodes.
fn criterion_5(beta: f64, tau: f64) -> (Outcome, GridFunction) {
    let t = Instant::now();
    let bd = bundle(beta, tau).unwrap();
    let g = sample_g(&bd, M).unwrap();
    let coarse = solve_f(&g, tau, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let fine = solve_f(&sample_g(&bd, 2 * M - 1).unwrap(), tau, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let op_f3 = bracket_sequence(&g, tau, 4).unwrap().f3_min;
    let bs = solve_beta_star().unwrap();
    let crit = bundle(bs, tau_star(bs)).unwrap();
    let crit_f3 = bracket_sequence(&sample_g(&crit, M).unwrap(), crit.tau, 4).unwrap().f3_min;
    let secs = t.elapsed().as_secs_f64();
    let (r1, r2) = (coarse.residual_sup, fine.residual_sup);
    let pass = r1 <= 1e-6 && r2 <= 5.0 * r1 && op_f3 > 0.0 && crit_f3 > 0.0 && secs < 30.0;
    let detail = format!(
        "residual_sup={r1:e} doubled={r2:e} f3_min(op)={op_f3:.6} f3_min(critical)={crit_f3:.6} time={secs:.1}s"
    );
    (outcome(pass, detail), coarse.converged_f)
}

fn criterion_6(f: &GridFunction, beta: f64, tau: f64) -> (Outcome, Option<PhiProfile>) {
    let phi = match build_phi(f, beta, tau, DEFAULT_T, M) {
        Ok(p) => p,
        Err(e) => return (outcome(false, format!("build_phi: {e}")), None),
    };
    let c = phi.conditions.as_ref().unwrap();
    let sup1 = c.entry("phi_ineq_1").unwrap().sup;
    let sup2 = c.entry("phi_ineq_2").unwrap().sup;
    let cts: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&t| build_phi(f, beta, tau, t, M).map_or(f64::NAN, |p| if p.t == t { p.c_t } else { f64::NAN }))
        .collect();
    let trend = cts.windows(2).all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs());
    let pass = c.equality_residual.abs() <= 1e-8 && sup1 <= 0.99 && sup2 <= 0.99 && trend;
    let detail = format!(
        "t={} equality_residual={:e} sups=({sup1:.6}, {sup2:.6}) C_t(0.02,0.01,0.005)=({:.7}, {:.7}, {:.7})",
        phi.t, c.equality_residual, cts[0], cts[1], cts[2]
    );
    (outcome(pass, detail), Some(phi))
}

fn criterion_7(inst: &AdversarialInstance, secs: f64) -> Outcome {
    let d = &inst.diagnostics;
    let s = &inst.sequences;
    let n = inst.n_max();
    let (a_end, xi_end) = (s.alpha(n), s.xi(n));
    let pass = d.ok()
        && d.norm_dev <= 1e-9
        && d.min_alpha >= 0.0
        && d.min_xi > 0.0
        && d.max_xi <= 1.0
        && (a_end - 1.0).abs() < 0.1
        && (xi_end - 1.0).abs() < 0.05
        && secs < 300.0;
    outcome(
        pass,
        format!(
            "K={} N={} n_max={n} norm_dev={:e} min_alpha={:.4} xi in [{:.5}, {:.5}] alpha_end={a_end:.5} xi_end={xi_end:.5} time={secs:.1}s",
            inst.k(),
            inst.big_n(),
            d.norm_dev,
            d.min_alpha,
            d.min_xi,
            d.max_xi
        ),
    )
}

fn criterion_8(inst: &AdversarialInstance, rep: &VerificationReport) -> Outcome {
    let steps = inst.n_max() - inst.big_n();
    let trace = run(Algorithm::Pga, &inst.f, &inst.dictionary, steps, inst.variation_bound).unwrap();
    let picked: Vec<usize> = trace.steps.iter().map(|s| s.atom).collect();
    let planned = picked == inst.planned_atoms(steps);
    let worst = trace
        .steps
        .iter()
        .map(|s| {
            let n = inst.big_n() + s.step_index;
            (s.residual_norm * ((n + 1) as f64).powf(0.5 - inst.beta()) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    let full = rep.direct_pairs == rep.pairs;
    let pass = rep.passes() && rep.max_discrepancy <= 1e-9 && full && planned && worst <= 1e-8;
    outcome(
        pass,
        format!(
            "pairs={} min_margin={:e} discrepancy={:e} planned_trajectory={planned} max_norm_dev={worst:e}",
            rep.pairs, rep.min_margin, rep.max_discrepancy
        ),
    )
}

fn criterion_9(inst: &AdversarialInstance) -> Outcome {
    let steps = inst.n_max() - inst.big_n();
    let fit = |alg: Algorithm, dict: &Dictionary| {
        let mut t = run(alg, &inst.f, dict, steps, inst.variation_bound).unwrap();
        t.index_offset = inst.big_n();
        (fit_decay(&t, 500, 5000).unwrap().slope, t.final_residual())
    };
    let (pga, pga_end) = fit(Algorithm::Pga, &inst.dictionary);
    let (oga, oga_end) = fit(Algorithm::Oga, &inst.dictionary.clone().with_gram());
    let beta = inst.beta();
    let bs = solve_beta_star().unwrap();
    let pga_ok = (pga + (0.5 - beta)).abs() <= 0.005 && (beta - bs).abs() <= 0.01;
    let oga_ok = oga <= pga - 0.1;
    outcome(
        pga_ok && oga_ok,
        format!(
            "pga_slope={pga:.5} target={:.5} pga_clause={} oga_slope={oga:.5} separation={:.4} oga_clause={} final(pga, oga)=({pga_end:.5}, {oga_end:.5})",
            -(0.5 - beta),
            if pga_ok { "pass" } else { "fail" },
            pga - oga,
            if oga_ok { "pass" } else { "fail" }
        ),
    )
}

fn energy_identities(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dim = rng.gen_range(3..12);
        let count = rng.gen_range(2..20);
        let atoms: Vec<CoeffVector> = (0..count)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                CoeffVector::new(v.into_iter().map(|x| x / n).collect())
            })
            .collect();
        let dict = Dictionary::from_atoms(atoms).unwrap();
        let f = CoeffVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let s: f64 = rng.gen_range(0.05..1.0);
        for alg in [Algorithm::Pga, Algorithm::PgaShrink(s)] {
            let sh = alg.shrinkage();
            let trace = run(alg, &f, &dict, 50, 1.0).unwrap();
            let e0 = f.norm().powi(2);
            let mut prev = f.norm();
            for st in &trace.steps {
                let lhs = prev * prev - st.residual_norm * st.residual_norm;
                let rhs = (2.0 * sh - sh * sh) * st.value * st.value;
                worst = worst.max((lhs - rhs).abs() / e0);
                prev = st.residual_norm;
            }
        }
    }
    worst
}

fn criterion_10(phi: &PhiProfile, big: &AdversarialInstance) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let energy = energy_identities(&mut rng);

    let inst = adversarial::build(&ConstructionParams::new(phi.clone(), 200, 400, 1000)).unwrap();
    let (big_n, n_max) = (inst.big_n(), inst.n_max());
    let mut oracle = 0.0f64;
    let mut done = 0;
    while done < 10_000 {
        let n = rng.gen_range(big_n + 1..=n_max);
        let t = if rng.gen_range(0..50) == 0 { Target::Tilde } else { Target::Atom(rng.gen_range(big_n..=n_max)) };
        if t == Target::Atom(n) {
            continue;
        }
        oracle = oracle.max((inst.inner_product_oracle(n, t).unwrap() - inst.direct_inner_product(n, t)).abs());
        done += 1;
    }
    let mut coeff = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(big_n..=n_max);
        let k = rng.gen_range(1..=n);
        coeff = coeff.max((inst.residual(n)[k - 1] - inst.coefficient_formula(n, k)).abs());
    }

    let beta = big.beta();
    let q_ratio = q_of(10_000, beta).unwrap() / ((1.0 - 2.0 * beta).sqrt() * 1e4f64.powf(beta - 1.0));
    let n = big.n_max();
    let g_ratio = big.sequences.gamma(n) * (n as f64).powf(beta) * (1.0 - 2.0 * beta).sqrt() / (1.0 - beta);
    let r = big.residual(n);
    let q = big.sequences.q(n);
    let mut coef_band = (f64::INFINITY, f64::NEG_INFINITY);
    for k in [n / 2, 3 * n / 5, 2 * n / 3, 4 * n / 5, 9 * n / 10, n] {
        let ratio = -r[k - 1] / q / (1.0 + big.params.phi.phi.log_tail_at(k as f64 / n as f64));
        coef_band = (coef_band.0.min(ratio), coef_band.1.max(ratio));
    }
    let pass = energy <= 1e-10
        && oracle <= 1e-9
        && coeff <= 1e-10
        && (0.99..=1.01).contains(&q_ratio)
        && (0.98..=1.02).contains(&g_ratio)
        && coef_band.0 >= 0.9
        && coef_band.1 <= 1.1;
    outcome(
        pass,
        format!(
            "energy={energy:e} oracle={oracle:e} coefficients={coeff:e} q_ratio={q_ratio:.5} gamma_ratio={g_ratio:.5} residual_band=[{:.4}, {:.4}]",
            coef_band.0, coef_band.1
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |i: usize, o: Outcome| {
        println!("criterion {i:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((i, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());

    let (beta, tau) = OperatingPoint::default().resolve().unwrap();
    let (o5, f) = criterion_5(beta, tau);
    report(5, o5);
    let (o6, phi) = criterion_6(&f, beta, tau);
    report(6, o6);
    let Some(phi) = phi else {
        for i in 7..=10 {
            report(i, outcome(false, "no profile".into()));
        }
        std::process::exit(1);
    };

    let t = Instant::now();
    let params = ConstructionParams::new(phi.clone(), 200, 400, 5000);
    match build_verified(&params, &VerifyOptions::for_size(5000, 1)) {
        Ok(out) => {
            let secs = t.elapsed().as_secs_f64();
            report(7, criterion_7(&out.instance, secs));
            report(8, criterion_8(&out.instance, &out.verification));
            report(9, criterion_9(&out.instance));
            report(10, criterion_10(&phi, &out.instance));
        }
        Err(e) => {
            for i in 7..=10 {
                report(i, outcome(false, format!("construction failed: {e}")));
            }
        }
    }
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(i, _)| *i).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
