//! Fixed quadrature rules.

/// 4-point Gauss–Legendre nodes and weights on [-1, 1].
pub const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// 8-point Gauss–Legendre nodes and weights on [-1, 1].
pub const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// ∫_a^b f with one Gauss–Legendre panel.
#[inline]
pub fn gauss(rule: &[(f64, f64)], a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for &(x, w) in rule {
        s += w * f(mid + half * x);
    }
    s * half
}

/// ∫_a^b f with `panels` equal 8-point Gauss–Legendre panels.
pub fn gauss_composite(a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let hi = if p + 1 == panels { b } else { lo + h };
        s += gauss(&GL8, lo, hi, &mut f);
    }
    s
}

/// Composite Simpson weight multipliers (1, 4, 2, ..., 4, 1) for `n` nodes,
/// `n` odd. The caller scales by h/3.
#[inline]
pub fn simpson_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Simpson sum of equispaced samples with spacing `h`. Falls back to
/// Simpson + 3/8 on the last three intervals for an odd interval count,
/// and the trapezoid rule for a single interval.
pub fn simpson_samples(y: &[f64], h: f64) -> f64 {
    let n = y.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (y[0] + y[1]),
        _ if n % 2 == 1 => {
            let mut s = 0.0;
            for (i, v) in y.iter().enumerate() {
                s += simpson_weight(i, n) * v;
            }
            s * h / 3.0
        }
        _ => {
            let m = n - 3;
            let head = if m >= 3 { simpson_samples(&y[..m], h) } else { 0.0 };
            let t = &y[m - 1..];
            head + 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_exact_on_polynomials() {
        let v = gauss(&GL4, 0.0, 2.0, |x| x.powi(7));
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-12);
        let v = gauss_composite(0.0, 1.0, 3, |x| x.powi(15));
        assert!((v - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_mixed_rules() {
        // Cubic: both Simpson and 3/8 are exact.
        for n in 2..12 {
            let h = 1.0 / (n - 1) as f64;
            let y: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            let expect = if n == 2 { 0.5 } else { 0.25 };
            assert!((simpson_samples(&y, h) - expect).abs() < 1e-14, "n={n}");
        }
    }
}
