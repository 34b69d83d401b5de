//! One symbol slot: precoded transmission through the channel with phase
//! noise and AWGN, energy-based spatial detection, branch combining and the
//! symbol detectors (plain ML and the two symbol-assisted compensators).

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::constellation::Constellation;
use crate::mapping::SpatialPattern;
use crate::pn_model::PnRealization;
use crate::stats::{chi2_2_sf, golden_section_min, ncx2_2_cdf};
use crate::{Complex, Error, Result};

/// Received samples of the selected branches for one symbol slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedVector {
    pub y: Vec<Complex>,
    /// Total complex noise variance per branch.
    pub noise_variance: f64,
}

impl ReceivedVector {
    /// Normalized energies `z_k = 2|y_k|^2 / sigma^2`.
    ///
    /// With zero noise variance the statistic degenerates to `+inf` or `0`.
    /// Samples below `1e-18` of the strongest one count as zero there, since
    /// ZF leakage onto idle branches is only zero up to rounding.
    pub fn energies(&self) -> Vec<f64> {
        let peak = self.y.iter().map(|y| y.norm_sqr()).fold(0.0, f64::max);
        self.y
            .iter()
            .map(|y| {
                let e = y.norm_sqr();
                if self.noise_variance > 0.0 {
                    2.0 * e / self.noise_variance
                } else if e > 1e-18 * peak {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Compensation {
    None,
    #[serde(alias = "single-stage")]
    Single,
    #[serde(alias = "double-stage")]
    Double,
}

impl Compensation {
    pub fn name(self) -> &'static str {
        match self {
            Compensation::None => "none",
            Compensation::Single => "single",
            Compensation::Double => "double",
        }
    }
}

/// Candidate set used by the symbol detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionDomain {
    FullConstellation,
    Pool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub threshold: f64,
    pub compensation: Compensation,
    pub domain: DetectionDomain,
}

impl DetectorConfig {
    pub fn new(threshold: f64, compensation: Compensation, domain: DetectionDomain) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::Domain(format!("threshold must be positive, got {threshold}")));
        }
        Ok(Self {
            threshold,
            compensation,
            domain,
        })
    }
}

/// Evaluates `y = sqrt(alpha) H_a Phi_tx B s x + n` exactly.
///
/// `pn.tx_phases` must hold one phase per transmit antenna; the receive phase
/// is not applied here but at combining.
pub fn transmit<R: Rng + ?Sized>(
    pattern: &SpatialPattern,
    symbol: Complex,
    ch: &ChannelRealization,
    pn: &PnRealization,
    noise_variance: f64,
    rng: &mut R,
) -> ReceivedVector {
    let nt = ch.n_tx();
    let na = ch.na();
    debug_assert_eq!(pattern.width(), na);
    debug_assert_eq!(pn.tx_phases.len(), nt);

    let mut v = vec![Complex::new(0.0, 0.0); nt];
    for k in (0..na).filter(|&k| pattern.is_active(k)) {
        for (t, vt) in v.iter_mut().enumerate() {
            *vt += ch.b[(t, k)];
        }
    }
    for (vt, &phi) in v.iter_mut().zip(&pn.tx_phases) {
        *vt *= Complex::from_polar(1.0, phi) * symbol;
    }

    let gain = ch.alpha.sqrt();
    let sd = (noise_variance / 2.0).sqrt();
    let y = (0..na)
        .map(|k| {
            let mut acc = Complex::new(0.0, 0.0);
            for (t, vt) in v.iter().enumerate() {
                acc += ch.h_a[(k, t)] * vt;
            }
            let n = Complex::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            gain * acc + sd * n
        })
        .collect();
    ReceivedVector { y, noise_variance }
}

/// Energy-detector threshold minimizing the prior-weighted spatial error
/// probability, averaged uniformly over the constellation points.
pub fn energy_threshold(noise_variance: f64, c: &Constellation, alpha: f64, prior_active: f64) -> Result<f64> {
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return Err(Error::Domain(format!(
            "threshold design needs a positive finite noise variance, got {noise_variance}"
        )));
    }
    if !(0.0..=1.0).contains(&prior_active) {
        return Err(Error::Domain(format!("prior must lie in [0, 1], got {prior_active}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }

    // Distinct energies with multiplicities so each noncentral CDF is
    // evaluated once per candidate threshold.
    let mut energies: Vec<(f64, usize)> = Vec::new();
    for x in c.points() {
        let e = x.norm_sqr();
        match energies.iter_mut().find(|(v, _)| (*v - e).abs() <= 1e-12 * e.max(1.0)) {
            Some((_, n)) => *n += 1,
            None => energies.push((e, 1)),
        }
    }
    let total = c.order() as f64;
    let lambdas: Vec<(f64, f64)> = energies
        .iter()
        .map(|&(e, n)| (2.0 * alpha * e / noise_variance, n as f64 / total))
        .collect();

    let objective = |log_gamma: f64| threshold_risk(log_gamma.exp(), prior_active, &lambdas);
    let lambda_max = lambdas.iter().map(|l| l.0).fold(0.0, f64::max);
    let lo = 1e-6f64.ln();
    let hi = (2.0 * lambda_max).max(100.0).ln();
    Ok(golden_section_min(objective, lo, hi, 1e-7).exp())
}

/// Prior-weighted error probability of a threshold `gamma` against the
/// weighted noncentralities `lambdas`.
pub fn threshold_risk(gamma: f64, prior_active: f64, lambdas: &[(f64, f64)]) -> f64 {
    let miss: f64 = lambdas.iter().map(|&(l, w)| w * ncx2_2_cdf(gamma, l)).sum();
    (1.0 - prior_active) * chi2_2_sf(gamma) + prior_active * miss
}

/// One-bit energy decision per branch. If no branch clears the threshold,
/// the branch with the largest energy is activated (first one on ties).
pub fn detect_spatial(rx: &ReceivedVector, gamma: f64) -> SpatialPattern {
    let z = rx.energies();
    let mut bits: Vec<bool> = z.iter().map(|&zk| zk >= gamma).collect();
    if !bits.iter().any(|&b| b) {
        let mut best = 0;
        for (k, &zk) in z.iter().enumerate() {
            if zk > z[best] {
                best = k;
            }
        }
        bits[best] = true;
    }
    SpatialPattern::from_bits(bits).expect("pattern has an active branch")
}

/// Averages the active branches, applies the receive phase and rescales by
/// `1/sqrt(alpha)` so that the result lives on the constellation scale.
pub fn combine(y: &[Complex], pattern_hat: &SpatialPattern, rx_phase: f64, alpha: f64) -> Complex {
    let mut sum = Complex::new(0.0, 0.0);
    let mut count = 0usize;
    for (_, yk) in y.iter().enumerate().filter(|(k, _)| pattern_hat.is_active(*k)) {
        sum += yk;
        count += 1;
    }
    Complex::from_polar(1.0, rx_phase) * sum / (count.max(1) as f64 * alpha.sqrt())
}

/// Nearest candidate, lowest index on ties.
pub fn ml_detect(y_c: Complex, candidates: &[Complex]) -> (Complex, usize) {
    assert!(!candidates.is_empty(), "ML detection needs candidates");
    let mut best = 0;
    let mut best_d = (y_c - candidates[0]).norm_sqr();
    for (i, x) in candidates.iter().enumerate().skip(1) {
        let d = (y_c - x).norm_sqr();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    (candidates[best], best)
}

/// `mod(delta + pi/2, pi) - pi/2` with the modulus in `[0, pi)`.
///
/// Rounding can land exactly on `-pi/2`; that value is mapped to `+pi/2`
/// to keep the result in `(-pi/2, pi/2]`.
pub fn wrap_phase(delta: f64) -> f64 {
    let w = (delta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    if w <= -FRAC_PI_2 {
        FRAC_PI_2
    } else {
        w
    }
}

/// Outcome of a compensated detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compensated {
    pub symbol: Complex,
    pub index: usize,
    /// Wrapped phase correction applied in the final stage.
    pub phase_estimate: f64,
}

/// Tentative decision, wrapped phase error, derotation and re-detection.
pub fn single_stage_compensate(y_c: Complex, candidates: &[Complex]) -> Compensated {
    let (tentative, _) = ml_detect(y_c, candidates);
    let dphi = wrap_phase(y_c.arg() - tentative.arg());
    let (symbol, index) = ml_detect(y_c * Complex::from_polar(1.0, -dphi), candidates);
    Compensated {
        symbol,
        index,
        phase_estimate: dphi,
    }
}

/// Per-branch derotation before combining, then single-stage compensation
/// of the residual common rotation.
pub fn double_stage_compensate(
    rx: &ReceivedVector,
    pattern_hat: &SpatialPattern,
    candidates: &[Complex],
    rx_phase: f64,
    alpha: f64,
) -> Compensated {
    let scale = alpha.sqrt();
    let derotated: Vec<Complex> = rx
        .y
        .iter()
        .enumerate()
        .map(|(k, &yk)| {
            if !pattern_hat.is_active(k) {
                return yk;
            }
            let (tentative, _) = ml_detect(yk / scale, candidates);
            let dphi = wrap_phase(yk.arg() - tentative.arg());
            yk * Complex::from_polar(1.0, -dphi)
        })
        .collect();
    single_stage_compensate(combine(&derotated, pattern_hat, rx_phase, alpha), candidates)
}

/// Symbol decision for one slot according to the compensation mode.
pub fn detect_symbol(
    rx: &ReceivedVector,
    pattern_hat: &SpatialPattern,
    candidates: &[Complex],
    rx_phase: f64,
    alpha: f64,
    compensation: Compensation,
) -> usize {
    match compensation {
        Compensation::None => ml_detect(combine(&rx.y, pattern_hat, rx_phase, alpha), candidates).1,
        Compensation::Single => {
            single_stage_compensate(combine(&rx.y, pattern_hat, rx_phase, alpha), candidates).index
        }
        Compensation::Double => double_stage_compensate(rx, pattern_hat, candidates, rx_phase, alpha).index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_realization, ChannelConfig, ChannelModel, SvParams};
    use crate::constellation::{build_mqam, build_pools, Sensitivity};
    use crate::pn_model::{sample_pn, PnConfig};
    use crate::seed::{rng_for, Stream};
    use crate::stats::{chi2_2_cdf, ks_one_sample, ks_two_sample};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop_assert, proptest};
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn realization(model: ChannelModel, na: usize, seed: u64) -> ChannelRealization {
        let cfg = ChannelConfig {
            n_tx: 32,
            n_rx: 8,
            model,
        };
        let mut rng = rng_for(seed, Stream::Channel, &[0]);
        draw_realization(&cfg, na, 0.7, &mut rng).unwrap().0
    }

    fn sv() -> ChannelModel {
        ChannelModel::SalehValenzuela(SvParams::default())
    }

    #[test]
    fn noiseless_single_branch() {
        let ch = realization(sv(), 4, 1);
        let mut rng = rng_for(0, Stream::Aux, &[]);
        let x = c(3.0, -1.0);
        let p = SpatialPattern::from_decimal(1, 4).unwrap();
        let rx = transmit(&p, x, &ch, &PnRealization::zero(32), 0.0, &mut rng);
        for k in 0..3 {
            assert!(rx.y[k].norm() < 1e-9);
        }
        assert!((rx.y[3] - ch.alpha.sqrt() * x).norm() < 1e-9);
    }

    #[test]
    fn clo_phase_collapses_to_common_rotation() {
        let ch = realization(ChannelModel::RayleighIid, 4, 2);
        let mut rng = rng_for(0, Stream::Aux, &[]);
        let x = c(-1.0, 3.0);
        let p = SpatialPattern::from_decimal(0b1011, 4).unwrap();
        let phi = 0.37;
        let pn = PnRealization {
            tx_phases: vec![phi; 32],
            rx_phase: 0.0,
        };
        let rx = transmit(&p, x, &ch, &pn, 0.0, &mut rng);
        for k in 0..4 {
            let expect = if p.is_active(k) {
                ch.alpha.sqrt() * x * Complex::from_polar(1.0, phi)
            } else {
                c(0.0, 0.0)
            };
            assert!((rx.y[k] - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_symbol_gives_noise_only() {
        let ch = realization(sv(), 4, 3);
        let p = SpatialPattern::from_decimal(0b1111, 4).unwrap();
        let mut a = rng_for(5, Stream::Aux, &[]);
        let mut b = rng_for(5, Stream::Aux, &[]);
        let rx = transmit(&p, c(0.0, 0.0), &ch, &PnRealization::zero(32), 0.3, &mut a);
        let sd = (0.15f64).sqrt();
        for yk in rx.y {
            let n = Complex::new(
                b.sample::<f64, _>(StandardNormal),
                b.sample::<f64, _>(StandardNormal),
            );
            assert_abs_diff_eq!((yk - sd * n).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn clo_energy_invariance_noiseless() {
        let ch = realization(sv(), 4, 4);
        let mut rng = rng_for(0, Stream::Aux, &[]);
        let pn_cfg = PnConfig::clo(0.1).unwrap();
        let p = SpatialPattern::from_decimal(0b1010, 4).unwrap();
        for _ in 0..100 {
            let pn = sample_pn(&pn_cfg, 32, &mut rng);
            let with = transmit(&p, c(3.0, 3.0), &ch, &pn, 0.0, &mut rng);
            let without = transmit(&p, c(3.0, 3.0), &ch, &PnRealization::zero(32), 0.0, &mut rng);
            for (a, b) in with.y.iter().zip(&without.y) {
                assert!((a.norm() - b.norm()).abs() < 1e-12);
            }
            assert_eq!(detect_spatial(&with, 1.0).decimal(), 0b1010);
        }
    }

    #[test]
    fn energy_statistics_follow_chi_square() {
        let ch = realization(sv(), 4, 6);
        let mut rng = rng_for(9, Stream::Aux, &[]);
        let p = SpatialPattern::from_decimal(0b0001, 4).unwrap();
        let x = c(1.0, -1.0);
        let s2 = 0.5;
        let n = 100_000;
        let (mut idle, mut busy) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let z = transmit(&p, x, &ch, &PnRealization::zero(32), s2, &mut rng).energies();
            idle.push(z[0]);
            busy.push(z[3]);
        }
        let lambda = 2.0 * ch.alpha * x.norm_sqr() / s2;
        assert!(ks_one_sample(&idle, chi2_2_cdf).accepts(0.01));
        assert!(ks_one_sample(&busy, |v| ncx2_2_cdf(v, lambda)).accepts(0.01));
        // A wrong noncentrality must be rejected.
        assert!(!ks_one_sample(&busy, |v| ncx2_2_cdf(v, 1.2 * lambda)).accepts(0.01));
    }

    #[test]
    fn clo_energy_invariance_noisy() {
        let ch = realization(sv(), 4, 7);
        let mut rng = rng_for(10, Stream::Aux, &[]);
        let pn_cfg = PnConfig::clo(0.1).unwrap();
        let p = SpatialPattern::from_decimal(0b0110, 4).unwrap();
        let n = 100_000;
        let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let pn = sample_pn(&pn_cfg, 32, &mut rng);
            a.push(transmit(&p, c(-3.0, 1.0), &ch, &pn, 1.0, &mut rng).energies()[1]);
            b.push(transmit(&p, c(-3.0, 1.0), &ch, &PnRealization::zero(32), 1.0, &mut rng).energies()[1]);
        }
        assert!(ks_two_sample(&a, &b).accepts(0.01));
    }

    #[test]
    fn threshold_matches_grid_search() {
        let qam4 = build_mqam(4).unwrap();
        for &s2 in &[0.05, 0.5, 2.0] {
            let alpha = 0.8;
            let gamma = energy_threshold(s2, &qam4, alpha, 0.5).unwrap();
            let lambdas = [(2.0 * alpha * 2.0 / s2, 1.0)];
            // Grid oracle on a fine linear grid around the reported optimum.
            let (mut best, mut best_r) = (0.0, f64::INFINITY);
            let steps = 200_000;
            let top = 4.0 * gamma;
            for i in 1..=steps {
                let g = top * i as f64 / steps as f64;
                let r = threshold_risk(g, 0.5, &lambdas);
                if r < best_r {
                    best = g;
                    best_r = r;
                }
            }
            assert!((gamma - best).abs() / best < 1e-4, "s2={s2}: {gamma} vs {best}");
            // First-order optimality: weighted densities cross at gamma.
            let central = 0.5 * (-gamma / 2.0).exp();
            let h = 1e-6 * gamma;
            let noncentral = (ncx2_2_cdf(gamma + h, lambdas[0].0) - ncx2_2_cdf(gamma - h, lambdas[0].0)) / (2.0 * h);
            assert!((central - noncentral).abs() / central < 1e-3);
        }
    }

    #[test]
    fn threshold_separates_at_high_snr() {
        let qam16 = build_mqam(16).unwrap();
        let gamma = energy_threshold(1e-5, &qam16, 0.5, 0.5).unwrap();
        let miss = ncx2_2_cdf(gamma, 2.0 * 0.5 * 2.0 / 1e-5);
        assert!(miss < 1e-12 && chi2_2_sf(gamma) < 1e-12);
    }

    #[test]
    fn threshold_rejects_degenerate_variance() {
        let qam4 = build_mqam(4).unwrap();
        assert!(energy_threshold(0.0, &qam4, 1.0, 0.5).is_err());
        assert!(energy_threshold(f64::NAN, &qam4, 1.0, 0.5).is_err());
    }

    #[test]
    fn spatial_fallback_on_silence() {
        let rx = ReceivedVector {
            y: vec![c(0.0, 0.0); 4],
            noise_variance: 1.0,
        };
        let p = detect_spatial(&rx, 2.0);
        assert_eq!(p.bits(), &[true, false, false, false]);

        let rx = ReceivedVector {
            y: vec![c(0.1, 0.0), c(0.0, 0.3), c(0.2, 0.0), c(0.0, 0.0)],
            noise_variance: 1.0,
        };
        assert_eq!(detect_spatial(&rx, 2.0).bits(), &[false, true, false, false]);
    }

    #[test]
    fn combining_examples() {
        let x = c(3.0, -3.0);
        let alpha = 0.6f64;
        let p = SpatialPattern::from_decimal(0b1101, 4).unwrap();
        let y: Vec<Complex> = (0..4)
            .map(|k| if p.is_active(k) { alpha.sqrt() * x } else { c(0.0, 0.0) })
            .collect();
        assert!((combine(&y, &p, 0.0, alpha) - x).norm() < 1e-12);

        let p1 = SpatialPattern::from_decimal(0b0100, 4).unwrap();
        let mut y1 = vec![c(0.0, 0.0); 4];
        y1[1] = alpha.sqrt() * x * Complex::from_polar(1.0, 0.2);
        let expect = x * Complex::from_polar(1.0, 0.2 - 0.05);
        assert!((combine(&y1, &p1, -0.05, alpha) - expect).norm() < 1e-12);
    }

    #[test]
    fn two_branch_phase_variance() {
        let mut rng = rng_for(11, Stream::Aux, &[]);
        let s2 = 0.01f64;
        let sd = s2.sqrt();
        let p = SpatialPattern::from_decimal(0b0011, 4).unwrap();
        let x = c(1.0, 1.0);
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let mut y = vec![c(0.0, 0.0); 4];
            for k in 2..4 {
                y[k] = x * Complex::from_polar(1.0, sd * rng.sample::<f64, _>(StandardNormal));
            }
            let rx_phase = sd * rng.sample::<f64, _>(StandardNormal);
            acc += (combine(&y, &p, rx_phase, 1.0) / x).arg().powi(2);
        }
        let var = acc / n as f64;
        assert!((var / (1.5 * s2) - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn ml_examples() {
        let qam16 = build_mqam(16).unwrap();
        let (x, _) = ml_detect(c(2.9, -3.1), qam16.points());
        assert_eq!(x, c(3.0, -3.0));
        let pair = [c(1.0, 1.0), c(-1.0, -1.0)];
        assert_eq!(ml_detect(c(1.0, 1.0), &pair).1, 0);
        assert_eq!(ml_detect(c(1.0, -1.0), &pair).1, 0);
        assert_eq!(ml_detect(c(-1.0, 1.0), &pair).1, 0);
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_phase(0.0), 0.0);
        assert_abs_diff_eq!(wrap_phase(PI), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_phase(2.0), 2.0 - PI, epsilon = 1e-15);
        assert_eq!(wrap_phase(-FRAC_PI_2), FRAC_PI_2);
        assert_eq!(wrap_phase(FRAC_PI_2), FRAC_PI_2);
    }

    proptest! {
        #[test]
        fn wrap_range(d in -1e4f64..1e4) {
            let w = wrap_phase(d);
            prop_assert!(w > -FRAC_PI_2 && w <= FRAC_PI_2);
            // Differs from the input by a multiple of pi.
            let k = (d - w) / PI;
            prop_assert!((k - k.round()).abs() < 1e-9 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn single_stage_examples() {
        let x = c(3.0, 3.0);
        let pair = [x, -x];
        let out = single_stage_compensate(x * Complex::from_polar(1.0, 0.3), &pair);
        assert_eq!(out.symbol, x);
        let out = single_stage_compensate(x, &pair);
        assert_eq!(out.symbol, x);
        assert_eq!(out.phase_estimate, 0.0);
        let out = single_stage_compensate(x * Complex::from_polar(1.0, FRAC_PI_2 + 0.05), &pair);
        assert_eq!(out.symbol, -x);
    }

    #[test]
    fn pool_ml_is_sign_test() {
        let qam16 = build_mqam(16).unwrap();
        let pools = build_pools(&qam16).unwrap();
        let mut rng = rng_for(12, Stream::Aux, &[]);
        for i in 0..10_000 {
            let pool = &pools[i % pools.len()];
            let y = c(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let d = pool.symbols[1] - pool.symbols[0];
            let mid = (pool.symbols[0] + pool.symbols[1]) / 2.0;
            let proj = ((y - mid) * d.conj()).re;
            let sign = usize::from(proj > 0.0);
            assert_eq!(ml_detect(y, &pool.symbols).1, sign);
        }
    }

    #[test]
    fn double_stage_without_impairments_matches_ml() {
        let qam16 = build_mqam(16).unwrap();
        let pools = build_pools(&qam16).unwrap();
        let p = SpatialPattern::from_decimal(0b0111, 4).unwrap();
        let alpha = 0.9f64;
        for pool in &pools {
            for (i, &x) in pool.symbols.iter().enumerate() {
                let rx = ReceivedVector {
                    y: (0..4)
                        .map(|k| if p.is_active(k) { alpha.sqrt() * x } else { c(0.0, 0.0) })
                        .collect(),
                    noise_variance: 0.0,
                };
                for comp in [Compensation::None, Compensation::Single, Compensation::Double] {
                    assert_eq!(detect_symbol(&rx, &p, &pool.symbols, 0.0, alpha, comp), i);
                }
            }
        }
    }

    #[test]
    fn double_stage_recovers_independent_branch_phases() {
        let x = c(-1.0, 3.0);
        let pair = [x, -x];
        let p = SpatialPattern::from_decimal(0b1110, 4).unwrap();
        let mut rng = rng_for(13, Stream::Aux, &[]);
        for _ in 0..1000 {
            let y = (0..4)
                .map(|k| {
                    let phi = rng.random_range(-1.5..1.5);
                    if p.is_active(k) {
                        x * Complex::from_polar(1.0, phi)
                    } else {
                        c(0.0, 0.0)
                    }
                })
                .collect();
            let rx = ReceivedVector { y, noise_variance: 0.0 };
            assert_eq!(double_stage_compensate(&rx, &p, &pair, 0.0, 1.0).symbol, x);
        }
    }

    #[test]
    fn double_stage_not_worse_than_single() {
        let qam16 = build_mqam(16).unwrap();
        let pools = build_pools(&qam16).unwrap();
        let pool = pools
            .iter()
            .find(|p| p.sensitivity == Sensitivity::Sensitive)
            .unwrap();
        let mut rng = rng_for(14, Stream::Aux, &[]);
        let (sd_pn, sd_n) = (0.1f64.sqrt(), 0.3f64);
        let p = SpatialPattern::from_decimal(0b0101, 4).unwrap();
        let (mut single, mut double) = (0usize, 0usize);
        for t in 0..100_000 {
            let sel = t % 2;
            let x = pool.symbols[sel];
            let y = (0..4)
                .map(|k| {
                    let phi = sd_pn * rng.sample::<f64, _>(StandardNormal);
                    let n = Complex::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    ) * sd_n;
                    if p.is_active(k) {
                        x * Complex::from_polar(1.0, phi) + n
                    } else {
                        n
                    }
                })
                .collect();
            let rx = ReceivedVector {
                y,
                noise_variance: 2.0 * sd_n * sd_n,
            };
            let rx_phase = sd_pn * rng.sample::<f64, _>(StandardNormal);
            single += usize::from(detect_symbol(&rx, &p, &pool.symbols, rx_phase, 1.0, Compensation::Single) != sel);
            double += usize::from(detect_symbol(&rx, &p, &pool.symbols, rx_phase, 1.0, Compensation::Double) != sel);
        }
        assert!(double <= single, "double {double} single {single}");
    }
}
