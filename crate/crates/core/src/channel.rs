//! Downlink channel: clustered mmWave or i.i.d. Rayleigh realizations,
//! receive-antenna selection, zero-forcing precoding and the ensemble power
//! normalization `alpha = E[ 1 / tr((H_a H_a^H)^{-1}) ]`.

use std::f64::consts::PI;

use log::debug;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::{rng_for, Stream};
use crate::{Complex, Error, Result};

/// Complex matrix type used for channels and precoders.
pub type CMatrix = DMatrix<Complex>;

/// Realizations whose Gram matrix is worse conditioned than this are
/// rejected and redrawn.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

/// Consecutive rejections after which a configuration is declared unusable.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 1000;

/// Parameters of the clustered (Saleh-Valenzuela type) narrowband model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvParams {
    pub n_clusters: usize,
    pub rays_per_cluster: usize,
    /// Per-ray angular spread around the cluster centre, degrees (standard
    /// deviation of the Laplacian offset).
    pub angular_spread_deg: f64,
    /// Cluster centres are uniform in `[-range, range]`, degrees.
    pub cluster_range_deg: f64,
    /// Replace the first ray of the first cluster with a deterministic-power
    /// line-of-sight path.
    pub los_present: bool,
}

impl Default for SvParams {
    fn default() -> Self {
        Self {
            n_clusters: 5,
            rays_per_cluster: 10,
            angular_spread_deg: 7.5,
            cluster_range_deg: 60.0,
            los_present: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModel {
    SalehValenzuela(SvParams),
    RayleighIid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub model: ChannelModel,
}

impl ChannelConfig {
    /// Checks `n_tx >= n_rx >= na >= 1` and the model parameters.
    pub fn validate(&self, na: usize) -> Result<()> {
        if !(self.n_tx >= self.n_rx && self.n_rx >= na && na >= 1) {
            return Err(Error::ChannelConfig(format!(
                "need n_tx >= n_rx >= N_a >= 1, got n_tx={}, n_rx={}, N_a={}",
                self.n_tx, self.n_rx, na
            )));
        }
        if let ChannelModel::SalehValenzuela(p) = self.model {
            if p.n_clusters == 0 || p.rays_per_cluster == 0 {
                return Err(Error::ChannelConfig(
                    "at least one cluster with one ray is required".into(),
                ));
            }
            if !(p.angular_spread_deg >= 0.0) || !(p.cluster_range_deg >= 0.0) {
                return Err(Error::ChannelConfig(
                    "angular spread and cluster range must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Half-wavelength uniform linear array response, unit norm.
pub fn ula_steering(n: usize, angle: f64) -> Vec<Complex> {
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| Complex::from_polar(scale, PI * k as f64 * angle.sin()))
        .collect()
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Laplacian sample with the given standard deviation.
fn laplacian<R: Rng + ?Sized>(rng: &mut R, std_dev: f64) -> f64 {
    if std_dev == 0.0 {
        return 0.0;
    }
    let b = std_dev / std::f64::consts::SQRT_2;
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Draws an `n_rx x n_tx` channel matrix.
///
/// Clustered mode: `H = sqrt(N_t N_r / (N_cl N_ray)) sum g a_r(aoa) a_t(aod)^H`
/// with `g ~ CN(0, 1)`, so each entry has unit average power. Rayleigh mode:
/// i.i.d. `CN(0, 1)` entries.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> CMatrix {
    let (nr, nt) = (cfg.n_rx, cfg.n_tx);
    match cfg.model {
        ChannelModel::RayleighIid => CMatrix::from_fn(nr, nt, |_, _| complex_normal(rng)),
        ChannelModel::SalehValenzuela(p) => {
            let paths = p.n_clusters * p.rays_per_cluster;
            let gain_scale = ((nt * nr) as f64 / paths as f64).sqrt();
            let spread = p.angular_spread_deg.to_radians();
            let range = p.cluster_range_deg.to_radians();
            let mut h = CMatrix::zeros(nr, nt);
            for cluster in 0..p.n_clusters {
                let aoa_c = rng.random_range(-1.0..=1.0) * range;
                let aod_c = rng.random_range(-1.0..=1.0) * range;
                for ray in 0..p.rays_per_cluster {
                    let los = p.los_present && cluster == 0 && ray == 0;
                    let (aoa, aod, g) = if los {
                        let psi = rng.random_range(0.0..2.0 * PI);
                        (aoa_c, aod_c, Complex::from_polar(1.0, psi))
                    } else {
                        (
                            aoa_c + laplacian(rng, spread),
                            aod_c + laplacian(rng, spread),
                            complex_normal(rng),
                        )
                    };
                    let ar = ula_steering(nr, aoa);
                    let at = ula_steering(nt, aod);
                    for i in 0..nr {
                        let gi = g * ar[i] * gain_scale;
                        for j in 0..nt {
                            h[(i, j)] += gi * at[j].conj();
                        }
                    }
                }
            }
            h
        }
    }
}

/// Greedy least-correlated receive-antenna selection.
///
/// Seeds with the largest-norm row and repeatedly adds the row whose largest
/// normalized correlation with the already selected rows is smallest (lowest
/// index on ties). Returns ascending row indices.
pub fn select_antennas(h: &CMatrix, na: usize) -> Vec<usize> {
    let nr = h.nrows();
    assert!(na <= nr, "cannot select {na} of {nr} antennas");
    if na == 0 {
        return Vec::new();
    }
    let norms: Vec<f64> = (0..nr).map(|i| h.row(i).norm()).collect();
    let corr = |a: usize, b: usize| -> f64 {
        let denom = norms[a] * norms[b];
        if denom == 0.0 {
            return 1.0;
        }
        h.row(a).dotc(&h.row(b)).norm() / denom
    };
    let mut selected = Vec::with_capacity(na);
    let mut seed = 0;
    for i in 1..nr {
        if norms[i] > norms[seed] {
            seed = i;
        }
    }
    selected.push(seed);
    while selected.len() < na {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..nr).filter(|i| !selected.contains(i)) {
            let worst = selected.iter().map(|&s| corr(i, s)).fold(0.0, f64::max);
            if best.is_none_or(|(_, b)| worst < b) {
                best = Some((i, worst));
            }
        }
        selected.push(best.expect("rows remain").0);
    }
    selected.sort_unstable();
    selected
}

/// Rows `rows` of `h`, in the given order.
pub fn select_rows(h: &CMatrix, rows: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), h.ncols(), |i, j| h[(rows[i], j)])
}

fn condition_number(gram: &CMatrix) -> f64 {
    let sv = gram.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of the Gram matrix `H_a H_a^H`, rejecting near-singular cases.
fn gram_inverse(h_a: &CMatrix) -> Result<CMatrix> {
    let gram = h_a * h_a.adjoint();
    let cond = condition_number(&gram);
    if !(cond < MAX_CONDITION_NUMBER) {
        return Err(Error::SingularChannel(cond));
    }
    gram.cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularChannel(cond))
}

/// Zero-forcing precoder `B = H_a^H (H_a H_a^H)^{-1}`.
pub fn zf_precoder(h_a: &CMatrix) -> Result<CMatrix> {
    Ok(h_a.adjoint() * gram_inverse(h_a)?)
}

/// `1 / tr((H_a H_a^H)^{-1})` for one realization.
pub fn inverse_trace_power(h_a: &CMatrix) -> Result<f64> {
    let inv = gram_inverse(h_a)?;
    Ok(1.0 / inv.trace().re)
}

/// A selected and precoded channel realization.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: CMatrix,
    pub selected: Vec<usize>,
    pub h_a: CMatrix,
    pub b: CMatrix,
    pub alpha: f64,
}

impl ChannelRealization {
    /// Selects `na` receive antennas of `h` and builds the ZF precoder.
    pub fn new(h: CMatrix, na: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        let selected = select_antennas(&h, na);
        let h_a = select_rows(&h, &selected);
        let b = zf_precoder(&h_a)?;
        Ok(Self {
            h,
            selected,
            h_a,
            b,
            alpha,
        })
    }

    pub fn na(&self) -> usize {
        self.selected.len()
    }

    pub fn n_tx(&self) -> usize {
        self.h.ncols()
    }

    /// `max |(H_a B - I)_{ij}|`.
    pub fn zf_residual(&self) -> f64 {
        let prod = &self.h_a * &self.b;
        let n = prod.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - Complex::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// Draws channels until one is accepted. Returns the realization and the
/// number of rejected draws.
pub fn draw_realization<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    na: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<(ChannelRealization, usize)> {
    for rejected in 0..MAX_CONSECUTIVE_REJECTIONS {
        match ChannelRealization::new(sample_channel(cfg, rng), na, alpha) {
            Ok(r) => return Ok((r, rejected)),
            Err(Error::SingularChannel(cond)) => {
                debug!("rejected channel realization (condition number {cond:.3e})");
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::ChannelRejectionLimit(MAX_CONSECUTIVE_REJECTIONS))
}

/// Monte Carlo estimate of the power normalization constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub realizations: usize,
    pub rejected: usize,
}

/// Estimates `alpha` over `n_realizations` independent (channel, selection)
/// draws. Realization `i` uses its own sub-stream of `seed`, and the
/// contributions are summed in index order, so the result does not depend on
/// the number of worker threads.
pub fn estimate_alpha(cfg: &ChannelConfig, na: usize, n_realizations: usize, seed: u64) -> Result<AlphaEstimate> {
    if n_realizations == 0 {
        return Err(Error::Domain("alpha estimation needs at least one realization".into()));
    }
    cfg.validate(na)?;
    let draws: Vec<(f64, usize)> = (0..n_realizations)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, Stream::Alpha, &[i as u64]);
            for rejected in 0..MAX_CONSECUTIVE_REJECTIONS {
                let h = sample_channel(cfg, &mut rng);
                let h_a = select_rows(&h, &select_antennas(&h, na));
                match inverse_trace_power(&h_a) {
                    Ok(v) => return Ok((v, rejected)),
                    Err(Error::SingularChannel(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::ChannelRejectionLimit(MAX_CONSECUTIVE_REJECTIONS))
        })
        .collect::<Result<_>>()?;
    let sum: f64 = draws.iter().map(|d| d.0).sum();
    Ok(AlphaEstimate {
        alpha: sum / n_realizations as f64,
        realizations: n_realizations,
        rejected: draws.iter().map(|d| d.1).sum(),
    })
}
