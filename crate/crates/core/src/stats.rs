//! Numerical helpers: chi-square distributions, Kolmogorov-Smirnov tests,
//! adaptive quadrature and golden-section search.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::{Error, Result};

/// CDF of the central chi-square distribution with two degrees of freedom.
pub fn chi2_2_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x / 2.0).exp_m1()
    }
}

/// Survival function of the central chi-square distribution with two
/// degrees of freedom.
pub fn chi2_2_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        (-x / 2.0).exp()
    }
}

/// CDF of the noncentral chi-square distribution with two degrees of
/// freedom and noncentrality `lambda`, i.e. `1 - Q_1(sqrt(lambda), sqrt(x))`.
///
/// Evaluated as the Poisson mixture of central chi-square CDFs with `2 + 2j`
/// degrees of freedom. The sum starts at the Poisson mode and walks outwards
/// with three-term recurrences until the weights are negligible, so the cost
/// grows like `sqrt(lambda)`.
pub fn ncx2_2_cdf(x: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if lambda <= 0.0 {
        return chi2_2_cdf(x);
    }
    let mu = lambda / 2.0;
    let h = x / 2.0;
    let mode = mu.floor();
    let log_w0 = -mu + mode * mu.ln() - ln_gamma(mode + 1.0);
    // G_j = P(j + 1, h), t_j = e^{-h} h^j / j!, G_{j+1} = G_j - t_{j+1}.
    let g0 = gamma_lr(mode + 1.0, h);
    let log_t0 = -h + mode * h.ln() - ln_gamma(mode + 1.0);

    let w0 = log_w0.exp();
    let mut total = w0 * g0;
    // ln_gamma loses absolute precision for large arguments, so w0 is only
    // known to ~1e-9 relative; renormalizing by the summed weights fixes it.
    let mut weight_sum = w0;

    // Upward.
    let (mut w, mut g, mut t, mut j) = (w0, g0, log_t0.exp(), mode);
    loop {
        j += 1.0;
        w *= mu / j;
        t *= h / j;
        g = (g - t).max(0.0);
        total += w * g;
        weight_sum += w;
        if w < 1e-17 * w0.max(1e-300) && j > mu {
            break;
        }
        if w == 0.0 {
            break;
        }
    }

    // Downward.
    let (mut w, mut g, mut t, mut j) = (w0, g0, log_t0.exp(), mode);
    while j > 0.0 {
        // G_{j-1} = G_j + t_j, t_{j-1} = t_j * j / h.
        g = (g + t).min(1.0);
        t = if h > 0.0 { t * j / h } else { 0.0 };
        w *= j / mu;
        j -= 1.0;
        total += w * g;
        weight_sum += w;
        if w < 1e-17 * w0.max(1e-300) {
            break;
        }
    }
    (total / weight_sum).clamp(0.0, 1.0)
}

/// Survival function companion of [`ncx2_2_cdf`].
pub fn ncx2_2_sf(x: f64, lambda: f64) -> f64 {
    1.0 - ncx2_2_cdf(x, lambda)
}

/// Asymptotic Kolmogorov distribution survival function
/// `Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2)`.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * t * t).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Outcome of a Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsResult {
    /// True when the null hypothesis survives at significance `alpha`.
    pub fn accepts(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// One-sample KS test of `samples` against the continuous CDF `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sqrt_n = n.sqrt();
    let t = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(t),
    }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let t = (ne + 0.12 + 0.11 / ne) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(t),
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS_K[7] * fc;
    let mut gauss = GK_WEIGHTS_G[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS_K[i] * pair;
        if i % 2 == 1 {
            gauss += GK_WEIGHTS_G[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`, refined
/// until the summed error estimate is below `abs_tol` or below `rel_tol`
/// times the magnitude of the result.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if !(abs_tol >= 0.0 && rel_tol >= 0.0 && abs_tol + rel_tol > 0.0) {
        return Err(Error::Quadrature(format!(
            "tolerances must be non-negative and not both zero, got {abs_tol}, {rel_tol}"
        )));
    }
    const MAX_INTERVALS: usize = 4096;
    let (v, e) = gauss_kronrod(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let (total, err) = intervals
            .iter()
            .fold((0.0, 0.0), |(t, r), &(_, _, v, e)| (t + v, r + e));
        if err <= abs_tol || err <= rel_tol * total.abs() {
            return Ok(total);
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "error estimate {err:e} for {total:e} still too large after {MAX_INTERVALS} subintervals"
            )));
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("nonempty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod(&f, lo, mid);
        let (v2, e2) = gauss_kronrod(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`,
/// stopping when the bracket is narrower than `tol`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..500 {
        if (hi - lo).abs() <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Marcum Q_1 by direct quadrature of the Rician density, independent of
    /// the series used in `ncx2_2_cdf`.
    fn rician_cdf_by_quadrature(x: f64, lambda: f64) -> f64 {
        // z = 2|y|^2/sigma^2 with unit per-dimension variance scaling: r = sqrt(z),
        // pdf_r(r) = r exp(-(r^2 + a^2)/2) I0(a r), a = sqrt(lambda).
        let a = lambda.sqrt();
        let pdf = |r: f64| {
            // exp(-(r-a)^2/2) * r * I0e(a r), with I0e the scaled Bessel function.
            r * (-(r - a).powi(2) / 2.0).exp() * bessel_i0e(a * r)
        };
        integrate(pdf, 0.0, x.sqrt(), 1e-13, 0.0).unwrap()
    }

    /// exp(-x) I0(x) by its power series / asymptotic expansion.
    fn bessel_i0e(x: f64) -> f64 {
        if x < 30.0 {
            let mut term = 1.0;
            let mut sum = 1.0;
            let q = x * x / 4.0;
            for k in 1..200 {
                term *= q / (k as f64 * k as f64);
                sum += term;
                if term < 1e-17 * sum {
                    break;
                }
            }
            sum * (-x).exp()
        } else {
            let mut sum = 1.0;
            let mut term = 1.0;
            for k in 1..12 {
                let kk = (2 * k - 1) as f64;
                term *= kk * kk / (k as f64 * 8.0 * x);
                sum += term;
            }
            sum / (2.0 * std::f64::consts::PI * x).sqrt()
        }
    }

    #[test]
    fn central_chi2() {
        assert_eq!(chi2_2_cdf(0.0), 0.0);
        assert_relative_eq!(chi2_2_cdf(2.0), 1.0 - (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(chi2_2_sf(4.0), (-2.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn noncentral_matches_quadrature() {
        for &lambda in &[0.5, 3.0, 20.0, 150.0, 900.0] {
            for &frac in &[0.3, 0.8, 1.0, 1.3, 2.0] {
                let x = frac * (lambda + 2.0);
                let series = ncx2_2_cdf(x, lambda);
                let quad = rician_cdf_by_quadrature(x, lambda);
                assert!(
                    (series - quad).abs() < 1e-9,
                    "lambda={lambda} x={x}: {series} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn noncentral_reduces_to_central() {
        for &x in &[0.1, 1.0, 5.0] {
            assert_relative_eq!(ncx2_2_cdf(x, 0.0), chi2_2_cdf(x));
            assert_relative_eq!(ncx2_2_cdf(x, 1e-12), chi2_2_cdf(x), max_relative = 1e-9);
        }
    }

    #[test]
    fn noncentral_large_lambda_is_fast_and_sane() {
        let lambda = 4.0e6;
        assert!(ncx2_2_cdf(lambda * 0.9, lambda) < 1e-100 + 1e-12);
        assert!(ncx2_2_cdf(lambda * 1.1, lambda) > 1.0 - 1e-12);
        let mid = ncx2_2_cdf(lambda + 2.0, lambda);
        assert!((mid - 0.5).abs() < 0.01, "{mid}");
    }

    #[test]
    fn integrate_gaussian() {
        let v = integrate(|x| (-x * x / 2.0).exp(), -12.0, 12.0, 1e-13, 0.0).unwrap();
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-12);
        assert!(integrate(|x| x, 0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section_min(|x| (x - 1.7).powi(2), 0.0, 10.0, 1e-10);
        assert_relative_eq!(x, 1.7, max_relative = 1e-8);
    }

    #[test]
    fn ks_tests_accept_and_reject() {
        // Deterministic uniform grid is (very) close to U(0,1).
        let u: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_one_sample(&u, |x| x.clamp(0.0, 1.0)).accepts(0.01));
        let shifted: Vec<f64> = u.iter().map(|x| x * 0.8).collect();
        assert!(!ks_one_sample(&shifted, |x| x.clamp(0.0, 1.0)).accepts(0.01));
        assert!(ks_two_sample(&u, &u).accepts(0.01));
        assert!(!ks_two_sample(&u, &shifted).accepts(0.01));
    }

    #[test]
    fn kolmogorov_tail_known_values() {
        // Q(1.36) ~ 0.049, Q(1.63) ~ 0.0098.
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 5e-4);
    }
}
