//! Oscillator phase-noise model.
//!
//! Phase-noise samples are memoryless from one symbol slot to the next. The
//! `N_t` transmit chains draw a jointly Gaussian phase vector with an
//! equicorrelated covariance, and the single receive chain draws one extra
//! independent phase with the same variance.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seed::{rng_for, Stream};
use crate::{Complex, Error, Result};

/// Correlation structure across the transmit RF chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PnMode {
    /// Common local oscillator: every chain sees the same phase (rho = 1).
    Clo,
    /// Free-running oscillators per chain (rho = 0).
    Independent,
    /// Equicorrelated chains with the given correlation coefficient.
    General(f64),
}

/// Phase-noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnConfig {
    /// Per-sample phase variance in rad^2.
    variance: f64,
    mode: PnMode,
}

impl PnConfig {
    pub fn new(variance: f64, mode: PnMode) -> Result<Self> {
        if !variance.is_finite() || variance < 0.0 {
            return Err(Error::PnConfig(format!(
                "variance must be finite and non-negative, got {variance}"
            )));
        }
        if let PnMode::General(rho) = mode {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::PnConfig(format!(
                    "correlation must lie in [0, 1], got {rho}"
                )));
            }
        }
        Ok(Self { variance, mode })
    }

    pub fn clo(variance: f64) -> Result<Self> {
        Self::new(variance, PnMode::Clo)
    }

    pub fn independent(variance: f64) -> Result<Self> {
        Self::new(variance, PnMode::Independent)
    }

    /// Phase-noise free link.
    pub fn off() -> Self {
        Self {
            variance: 0.0,
            mode: PnMode::Clo,
        }
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn mode(&self) -> PnMode {
        self.mode
    }

    /// Correlation coefficient between two distinct transmit chains.
    pub fn correlation(&self) -> f64 {
        match self.mode {
            PnMode::Clo => 1.0,
            PnMode::Independent => 0.0,
            PnMode::General(rho) => rho,
        }
    }
}

/// One symbol slot worth of phase noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PnRealization {
    /// Phase of each transmit RF chain, rad.
    pub tx_phases: Vec<f64>,
    /// Phase of the single receive RF chain, rad.
    pub rx_phase: f64,
}

impl PnRealization {
    /// Realization with every phase exactly zero.
    pub fn zero(n_chains: usize) -> Self {
        Self {
            tx_phases: vec![0.0; n_chains],
            rx_phase: 0.0,
        }
    }
}

/// Covariance of the transmit phase vector.
///
/// The diagonal holds the variance and every off-diagonal entry holds
/// `rho * variance`, so `rho` acts as a correlation coefficient and `rho = 1`
/// gives the rank-one CLO matrix.
pub fn build_covariance(n_chains: usize, cfg: &PnConfig) -> Result<DMatrix<f64>> {
    if n_chains == 0 {
        return Err(Error::PnConfig("at least one RF chain is required".into()));
    }
    // Re-validate: the fields are private but the type is deserializable.
    let cfg = PnConfig::new(cfg.variance, cfg.mode)?;
    let off = cfg.correlation() * cfg.variance;
    Ok(DMatrix::from_fn(n_chains, n_chains, |i, j| {
        if i == j {
            cfg.variance
        } else {
            off
        }
    }))
}

/// Draws one phase-noise realization.
///
/// The equicorrelated Gaussian vector is generated from its one-factor
/// representation `phi_k = sigma * (sqrt(rho) * z_0 + sqrt(1 - rho) * z_k)`,
/// which has exactly the covariance returned by [`build_covariance`]. In CLO
/// mode a single draw is replicated, so all chains are bit-identical.
pub fn sample_pn<R: Rng + ?Sized>(cfg: &PnConfig, n_chains: usize, rng: &mut R) -> PnRealization {
    let sigma = cfg.variance.sqrt();
    let tx_phases = match cfg.mode {
        PnMode::Clo => {
            let phi = sigma * rng.sample::<f64, _>(StandardNormal);
            vec![phi; n_chains]
        }
        PnMode::Independent => (0..n_chains)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        PnMode::General(rho) => {
            let common = rho.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let own = (1.0 - rho).sqrt();
            (0..n_chains)
                .map(|_| sigma * (common + own * rng.sample::<f64, _>(StandardNormal)))
                .collect()
        }
    };
    let rx_phase = sigma * rng.sample::<f64, _>(StandardNormal);
    PnRealization {
        tx_phases,
        rx_phase,
    }
}

/// Combined phase-noise factor seen after combining the active branches.
///
/// `branch_chains[k]` names the transmit chain whose phase affects receive
/// branch `k`. The result is `e^{j phi_rx}` times the average of
/// `e^{j phi_k}` over active branches; with no active branch the guarded
/// denominator leaves an empty sum and the result is zero.
pub fn combined_pn_term(pn: &PnRealization, active: &[bool], branch_chains: &[usize]) -> Complex {
    let mut sum = Complex::new(0.0, 0.0);
    let mut count = 0usize;
    for (k, _) in active.iter().enumerate().filter(|(_, &on)| on) {
        sum += Complex::from_polar(1.0, pn.tx_phases[branch_chains[k]]);
        count += 1;
    }
    Complex::from_polar(1.0, pn.rx_phase) * sum / count.max(1) as f64
}

/// First-order variance of the combined phase with `n_active` independent
/// transmit phases and one receive phase: `(1 + 1/n) * variance`.
pub fn combined_pn_variance(n_active: usize, variance: f64) -> Result<f64> {
    if n_active == 0 {
        return Err(Error::Domain(
            "combined PN variance needs at least one active branch".into(),
        ));
    }
    Ok((1.0 + 1.0 / n_active as f64) * variance)
}

/// Monte Carlo estimate of the variance of `arg(R_PN)` with `n_active`
/// independent transmit phases, from `samples` draws of the sub-stream
/// `(seed, n_active)`.
pub fn monte_carlo_combined_variance(n_active: usize, variance: f64, samples: usize, seed: u64) -> Result<f64> {
    if n_active == 0 || samples < 2 {
        return Err(Error::Domain(
            "need at least one active branch and two samples".into(),
        ));
    }
    let cfg = PnConfig::independent(variance)?;
    let chains: Vec<usize> = (0..n_active).collect();
    let active = vec![true; n_active];
    let mut rng = rng_for(seed, Stream::Aux, &[n_active as u64]);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let pn = sample_pn(&cfg, n_active, &mut rng);
        let theta = combined_pn_term(&pn, &active, &chains).arg();
        s += theta;
        s2 += theta * theta;
    }
    let n = samples as f64;
    let mean = s / n;
    Ok(((s2 - n * mean * mean) / (n - 1.0)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{rng_for, Stream};
    use approx::assert_abs_diff_eq;

    #[test]
    fn clo_covariance_is_all_variance() {
        let cov = build_covariance(3, &PnConfig::clo(0.1).unwrap()).unwrap();
        assert!(cov.iter().all(|&v| v == 0.1));
    }

    #[test]
    fn independent_covariance_is_diagonal() {
        let cov = build_covariance(2, &PnConfig::independent(0.1).unwrap()).unwrap();
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]));
    }

    #[test]
    fn degenerate_covariance() {
        let cov = build_covariance(1, &PnConfig::clo(0.0).unwrap()).unwrap();
        assert_eq!(cov, DMatrix::from_element(1, 1, 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(PnConfig::new(-0.1, PnMode::Clo).is_err());
        assert!(PnConfig::new(0.1, PnMode::General(1.5)).is_err());
        assert!(PnConfig::new(0.1, PnMode::General(-0.01)).is_err());
        assert!(PnConfig::new(f64::NAN, PnMode::Independent).is_err());
        assert!(build_covariance(0, &PnConfig::off()).is_err());
    }

    #[test]
    fn equicorrelated_spectrum() {
        for &(n, rho) in &[(4usize, 0.3), (7, 0.9), (3, 0.0), (5, 1.0)] {
            let var = 0.1;
            let cfg = PnConfig::new(var, PnMode::General(rho)).unwrap();
            let cov = build_covariance(n, &cfg).unwrap();
            let mut eig: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            for e in &eig[..n - 1] {
                assert_abs_diff_eq!(*e, var * (1.0 - rho), epsilon = 1e-12);
            }
            assert_abs_diff_eq!(eig[n - 1], var * (1.0 + (n as f64 - 1.0) * rho), epsilon = 1e-12);
        }
    }

    #[test]
    fn clo_phases_identical() {
        let cfg = PnConfig::clo(0.1).unwrap();
        let mut rng = rng_for(1, Stream::Aux, &[]);
        for _ in 0..1000 {
            let pn = sample_pn(&cfg, 4, &mut rng);
            assert!(pn.tx_phases.iter().all(|&p| p == pn.tx_phases[0]));
        }
    }

    #[test]
    fn zero_variance_gives_zero_phases() {
        let mut rng = rng_for(2, Stream::Aux, &[]);
        for mode in [PnMode::Clo, PnMode::Independent, PnMode::General(0.5)] {
            let pn = sample_pn(&PnConfig::new(0.0, mode).unwrap(), 8, &mut rng);
            assert!(pn.tx_phases.iter().all(|&p| p == 0.0));
            assert_eq!(pn.rx_phase, 0.0);
        }
    }

    #[test]
    fn independent_sample_variance() {
        let cfg = PnConfig::independent(0.1).unwrap();
        let mut rng = rng_for(3, Stream::Aux, &[]);
        let n = 1_000_000;
        let mut acc = [0.0f64; 3];
        let mut rx = 0.0;
        for _ in 0..n {
            let pn = sample_pn(&cfg, 3, &mut rng);
            for (a, p) in acc.iter_mut().zip(&pn.tx_phases) {
                *a += p * p;
            }
            rx += pn.rx_phase * pn.rx_phase;
        }
        for a in acc.iter().chain([&rx]) {
            let v = a / n as f64;
            assert!((v - 0.1).abs() / 0.1 < 0.01, "variance {v}");
        }
    }

    #[test]
    fn general_mode_sample_covariance() {
        let cfg = PnConfig::new(0.2, PnMode::General(0.6)).unwrap();
        let cov = build_covariance(2, &cfg).unwrap();
        let mut rng = rng_for(4, Stream::Aux, &[]);
        let n = 400_000;
        let (mut s00, mut s01, mut srx) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let pn = sample_pn(&cfg, 2, &mut rng);
            s00 += pn.tx_phases[0] * pn.tx_phases[0];
            s01 += pn.tx_phases[0] * pn.tx_phases[1];
            srx += pn.tx_phases[0] * pn.rx_phase;
        }
        let n = n as f64;
        assert_abs_diff_eq!(s00 / n, cov[(0, 0)], epsilon = 0.003);
        assert_abs_diff_eq!(s01 / n, cov[(0, 1)], epsilon = 0.003);
        assert_abs_diff_eq!(srx / n, 0.0, epsilon = 0.003);
    }

    #[test]
    fn combined_term_examples() {
        let pn = PnRealization::zero(4);
        let one = combined_pn_term(&pn, &[false, false, false, true], &[0, 1, 2, 3]);
        assert_abs_diff_eq!((one - Complex::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);

        let pn = PnRealization {
            tx_phases: vec![0.2],
            rx_phase: 0.1,
        };
        let rot = combined_pn_term(&pn, &[true], &[0]);
        assert_abs_diff_eq!((rot - Complex::from_polar(1.0, 0.3)).norm(), 0.0, epsilon = 1e-15);

        let none = combined_pn_term(&pn, &[false], &[0]);
        assert_eq!(none, Complex::new(0.0, 0.0));
    }

    #[test]
    fn variance_law_values() {
        let s = 0.1;
        assert_abs_diff_eq!(combined_pn_variance(1, s).unwrap(), 2.0 * s, epsilon = 1e-15);
        assert_abs_diff_eq!(combined_pn_variance(2, s).unwrap(), 1.5 * s, epsilon = 1e-15);
        assert_abs_diff_eq!(combined_pn_variance(3, s).unwrap(), 4.0 / 3.0 * s, epsilon = 1e-15);
        assert_abs_diff_eq!(combined_pn_variance(4, s).unwrap(), 1.25 * s, epsilon = 1e-15);
        assert!(combined_pn_variance(0, s).is_err());
        for n in 1..16 {
            assert!(
                combined_pn_variance(n + 1, s).unwrap() < combined_pn_variance(n, s).unwrap()
            );
        }
    }

    /// Monte Carlo check of the variance law at the moderate variance,
    /// where the first-order law is accurate to about 2 %.
    #[test]
    fn variance_law_monte_carlo_strong_pn() {
        for n in 1..=4usize {
            let est = monte_carlo_combined_variance(n, 0.1, 1_000_000, 5).unwrap();
            let law = combined_pn_variance(n, 0.1).unwrap();
            assert!((est - law).abs() / law < 0.02, "n={n}: {est} vs {law}");
        }
    }

    #[test]
    fn variance_law_monte_carlo_zero_pn() {
        assert_eq!(monte_carlo_combined_variance(3, 0.0, 1000, 1).unwrap(), 0.0);
    }
}
