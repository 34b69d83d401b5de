//! Monte Carlo link simulation: SNR sweeps over one system variant with
//! per-stream bit-error bookkeeping.
//!
//! Trial `t` at SNR index `i` draws everything it needs from the stream
//! `(master_seed, i, t)`, and channel block `b` (trials `b*P .. (b+1)*P`)
//! from `(master_seed, b)`, so every SNR point sees the same channel
//! sequence and the counts do not depend on scheduling.

use std::ops::AddAssign;
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{draw_realization, estimate_alpha, AlphaEstimate, ChannelConfig, ChannelModel, ChannelRealization};
use crate::constellation::{build_mqam, build_pools, Constellation, Pool};
use crate::mapping::{build_mapping_table, hamming_weight, MappingTable, SpatialPattern};
use crate::pn_model::{sample_pn, PnConfig};
use crate::seed::{derive_seed, rng_for, SimRng, Stream};
use crate::transceiver::{detect_spatial, detect_symbol, energy_threshold, transmit, Compensation};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MappingMode {
    /// `N_a` spatial bits followed by `log2 M` symbol bits.
    Classical,
    /// Pool-prefix bits carried by a weight-constrained spatial pattern.
    Epn,
}

impl MappingMode {
    pub fn name(self) -> &'static str {
        match self {
            MappingMode::Classical => "classical",
            MappingMode::Epn => "epn",
        }
    }
}

/// Full description of one simulated system variant and its sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub modulation: usize,
    pub spectral_efficiency: usize,
    pub mapping: MappingMode,
    pub pn: PnConfig,
    pub channel: ChannelModel,
    pub compensation: Compensation,
    /// Activation prior used for the energy threshold design.
    pub prior_active: f64,
    /// SNR grid in dB; `inf` gives a noiseless point.
    pub snr_db: Vec<f64>,
    /// Trials per batch. A point runs at least one batch.
    pub trials_per_point: u64,
    /// Further batches are added until this many bit errors are seen...
    pub min_bit_errors: u64,
    /// ...or this many trials have run.
    pub max_trials_per_point: u64,
    pub channel_redraw_period: u64,
    pub alpha_realizations: usize,
    pub master_seed: u64,
}

impl SimConfig {
    /// Defaults for everything except the modulation order and mapping.
    pub fn new(modulation: usize, mapping: MappingMode) -> Self {
        Self {
            n_tx: 32,
            n_rx: 8,
            modulation,
            spectral_efficiency: 8,
            mapping,
            pn: PnConfig::off(),
            channel: ChannelModel::SalehValenzuela(Default::default()),
            compensation: Compensation::None,
            prior_active: 0.5,
            snr_db: (0..=8).map(|i| 5.0 * i as f64).collect(),
            trials_per_point: 10_000,
            min_bit_errors: 100,
            max_trials_per_point: 1_000_000,
            channel_redraw_period: 100,
            alpha_realizations: 10_000,
            master_seed: 1,
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.modulation.trailing_zeros() as usize
    }

    /// Number of selected receive antennas, `SE - log2 M`.
    pub fn na(&self) -> Result<usize> {
        let m = self.bits_per_symbol();
        if self.spectral_efficiency <= m {
            return Err(Error::SimConfig(format!(
                "spectral efficiency {} leaves no spatial bits for {}-QAM",
                self.spectral_efficiency, self.modulation
            )));
        }
        Ok(self.spectral_efficiency - m)
    }

    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            model: self.channel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.modulation.is_power_of_two() || self.modulation < 4 || self.modulation.trailing_zeros() % 2 != 0 {
            return Err(Error::UnsupportedOrder(self.modulation));
        }
        let na = self.na()?;
        self.channel_config().validate(na)?;
        PnConfig::new(self.pn.variance(), self.pn.mode())?;
        if !(0.0..=1.0).contains(&self.prior_active) {
            return Err(Error::SimConfig(format!(
                "prior_active must lie in [0, 1], got {}",
                self.prior_active
            )));
        }
        if self.snr_db.is_empty() {
            return Err(Error::SimConfig("the SNR grid is empty".into()));
        }
        if let Some(s) = self.snr_db.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
            return Err(Error::SimConfig(format!("invalid SNR point {s}")));
        }
        if self.channel_redraw_period == 0 {
            return Err(Error::SimConfig("channel_redraw_period must be at least 1".into()));
        }
        if self.alpha_realizations == 0 {
            return Err(Error::SimConfig("alpha_realizations must be at least 1".into()));
        }
        Ok(())
    }

    /// Noise variance for an SNR in dB: `E_s / (SNR * log2 M)`.
    pub fn noise_variance(&self, snr_db: f64, symbol_energy: f64) -> f64 {
        if snr_db == f64::INFINITY {
            return 0.0;
        }
        symbol_energy / (10f64.powf(snr_db / 10.0) * self.bits_per_symbol() as f64)
    }

    /// Short content hash of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..6])
    }
}

/// Bit and error counts of one or more trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrialCounts {
    pub spatial_bits: u64,
    pub spatial_errors: u64,
    pub mqam_bits: u64,
    pub mqam_errors: u64,
}

impl TrialCounts {
    pub fn bits(&self) -> u64 {
        self.spatial_bits + self.mqam_bits
    }

    pub fn errors(&self) -> u64 {
        self.spatial_errors + self.mqam_errors
    }
}

impl AddAssign for TrialCounts {
    fn add_assign(&mut self, o: Self) {
        self.spatial_bits += o.spatial_bits;
        self.spatial_errors += o.spatial_errors;
        self.mqam_bits += o.mqam_bits;
        self.mqam_errors += o.mqam_errors;
    }
}

/// Aggregated result of one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerRecord {
    pub snr_db: f64,
    pub trials: u64,
    pub counts: TrialCounts,
    pub rejected_channels: u64,
    pub wall_time_s: f64,
}

fn ratio(errors: u64, bits: u64) -> f64 {
    if bits == 0 {
        f64::NAN
    } else {
        errors as f64 / bits as f64
    }
}

impl BerRecord {
    pub fn bits_total(&self) -> u64 {
        self.counts.bits()
    }

    pub fn errors_total(&self) -> u64 {
        self.counts.errors()
    }

    /// Overall BER; `NaN` when no bits were sent.
    pub fn ber(&self) -> f64 {
        ratio(self.errors_total(), self.bits_total())
    }

    pub fn ber_spatial(&self) -> f64 {
        ratio(self.counts.spatial_errors, self.counts.spatial_bits)
    }

    pub fn ber_mqam(&self) -> f64 {
        ratio(self.counts.mqam_errors, self.counts.mqam_bits)
    }
}

/// Receiver settings that depend only on the SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub noise_variance: f64,
    pub threshold: f64,
}

/// A validated configuration with its derived tables and `alpha`.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    na: usize,
    constellation: Constellation,
    table: Option<MappingTable>,
    alpha: AlphaEstimate,
}

impl Simulator {
    /// Validates `cfg` and estimates `alpha` from the derived alpha stream.
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let na = cfg.na()?;
        let seed = derive_seed(cfg.master_seed, Stream::Alpha, &[]);
        let alpha = estimate_alpha(&cfg.channel_config(), na, cfg.alpha_realizations, seed)?;
        info!("alpha = {:.6} over {} realizations", alpha.alpha, alpha.realizations);
        Self::with_alpha(cfg, alpha)
    }

    /// Uses a precomputed `alpha` instead of estimating it.
    pub fn with_alpha(cfg: SimConfig, alpha: AlphaEstimate) -> Result<Self> {
        cfg.validate()?;
        if !(alpha.alpha > 0.0) {
            return Err(Error::Domain(format!("alpha must be positive, got {}", alpha.alpha)));
        }
        let na = cfg.na()?;
        let constellation = build_mqam(cfg.modulation)?;
        let table = match cfg.mapping {
            MappingMode::Classical => None,
            MappingMode::Epn => {
                let pools = build_pools(&constellation)?;
                Some(build_mapping_table(cfg.modulation, na, &pools)?)
            }
        };
        Ok(Self {
            cfg,
            na,
            constellation,
            table,
            alpha,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn na(&self) -> usize {
        self.na
    }

    pub fn alpha(&self) -> AlphaEstimate {
        self.alpha
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// Noise variance and energy threshold for one SNR.
    pub fn snr_point(&self, snr_db: f64) -> Result<SnrPoint> {
        let noise_variance = self.cfg.noise_variance(snr_db, self.constellation.symbol_energy());
        let threshold = if noise_variance == 0.0 {
            1.0
        } else {
            energy_threshold(noise_variance, &self.constellation, self.alpha.alpha, self.cfg.prior_active)?
        };
        Ok(SnrPoint {
            snr_db,
            noise_variance,
            threshold,
        })
    }

    /// Channel realization of block `block`, with the number of rejected
    /// draws.
    pub fn channel_block(&self, block: u64) -> Result<(ChannelRealization, usize)> {
        let mut rng = rng_for(self.cfg.master_seed, Stream::Channel, &[block]);
        draw_realization(&self.cfg.channel_config(), self.na, self.alpha.alpha, &mut rng)
    }

    /// One symbol slot: fresh bits, mapping, transmission with fresh phase
    /// noise and AWGN, detection and demapping.
    pub fn run_trial(&self, ch: &ChannelRealization, point: &SnrPoint, trial_seed: u64) -> TrialCounts {
        let mut rng = SimRng::seed_from_u64(trial_seed);
        let m = self.constellation.bits_per_symbol();
        let na = self.na;
        let comp = self.cfg.compensation;

        match &self.table {
            None => {
                let j = rng.random_range(1..1usize << na);
                let label = rng.random_range(0..self.constellation.order());
                let pattern = SpatialPattern::from_decimal(j, na).expect("nonzero pattern");
                let pn = sample_pn(&self.cfg.pn, self.cfg.n_tx, &mut rng);
                let rx = transmit(&pattern, self.constellation.point(label), ch, &pn, point.noise_variance, &mut rng);
                let p_hat = detect_spatial(&rx, point.threshold);
                let label_hat = detect_symbol(&rx, &p_hat, self.constellation.points(), pn.rx_phase, ch.alpha, comp);
                TrialCounts {
                    spatial_bits: na as u64,
                    spatial_errors: u64::from(hamming_weight(j ^ p_hat.decimal(), na)),
                    mqam_bits: m as u64,
                    mqam_errors: u64::from(hamming_weight(label ^ label_hat, m)),
                }
            }
            Some(table) => {
                let prefix = rng.random_range(0..table.entries().len());
                let selector = rng.random_range(0..2usize);
                let entry = &table.entries()[prefix];
                let j = entry.allowed_j[rng.random_range(0..entry.allowed_j.len())];
                let pattern = SpatialPattern::from_decimal(j, na).expect("nonzero pattern");
                let pn = sample_pn(&self.cfg.pn, self.cfg.n_tx, &mut rng);
                let rx = transmit(&pattern, entry.pool.symbols[selector], ch, &pn, point.noise_variance, &mut rng);
                let p_hat = detect_spatial(&rx, point.threshold);
                let entry_hat = table.entry_for_pattern(&p_hat);
                let pool_hat: &Pool = &entry_hat.pool;
                let selector_hat = detect_symbol(&rx, &p_hat, &pool_hat.symbols, pn.rx_phase, ch.alpha, comp);
                // The pattern bits are scored even though J is drawn at
                // random; the symbol bits are the pool prefix plus selector.
                TrialCounts {
                    spatial_bits: na as u64,
                    spatial_errors: u64::from(hamming_weight(j ^ p_hat.decimal(), na)),
                    mqam_bits: m as u64,
                    mqam_errors: u64::from(hamming_weight(prefix ^ pool_hat.index, m - 1))
                        + u64::from(selector != selector_hat),
                }
            }
        }
    }

    /// Runs trials `start..end` of SNR index `snr_index`, block-parallel.
    /// Returns the counts and the number of rejected channel draws.
    pub fn run_trials(&self, snr_index: usize, point: &SnrPoint, start: u64, end: u64) -> Result<(TrialCounts, u64)> {
        if start >= end {
            return Ok((TrialCounts::default(), 0));
        }
        let period = self.cfg.channel_redraw_period;
        let blocks: Vec<u64> = (start / period..=(end - 1) / period).collect();
        let parts: Vec<(TrialCounts, u64)> = blocks
            .par_iter()
            .map(|&b| {
                let (ch, rejected) = self.channel_block(b)?;
                let mut counts = TrialCounts::default();
                for t in (b * period).max(start)..((b + 1) * period).min(end) {
                    let seed = derive_seed(self.cfg.master_seed, Stream::Trial, &[snr_index as u64, t]);
                    counts += self.run_trial(&ch, point, seed);
                }
                Ok((counts, rejected as u64))
            })
            .collect::<Result<_>>()?;
        let mut total = TrialCounts::default();
        let mut rejected = 0;
        for (c, r) in parts {
            total += c;
            rejected += r;
        }
        Ok((total, rejected))
    }

    /// Runs one SNR point with the batch and stopping rules of the config.
    pub fn run_point(&self, snr_index: usize) -> Result<BerRecord> {
        let clock = Instant::now();
        let snr_db = self.cfg.snr_db[snr_index];
        let point = self.snr_point(snr_db)?;
        let batch = self.cfg.trials_per_point;
        let cap = self.cfg.max_trials_per_point.max(batch);
        let mut counts = TrialCounts::default();
        let mut rejected = 0;
        let mut trials = 0;
        while trials < cap && batch > 0 {
            let end = (trials + batch).min(cap);
            let (c, r) = self.run_trials(snr_index, &point, trials, end)?;
            counts += c;
            rejected += r;
            trials = end;
            if counts.errors() >= self.cfg.min_bit_errors {
                break;
            }
        }
        Ok(BerRecord {
            snr_db,
            trials,
            counts,
            rejected_channels: rejected,
            wall_time_s: clock.elapsed().as_secs_f64(),
        })
    }

    /// Runs every SNR point in order, handing each finished record to
    /// `on_point` before starting the next.
    pub fn run_sweep_with(&self, mut on_point: impl FnMut(&BerRecord) -> Result<()>) -> Result<Vec<BerRecord>> {
        let mut out = Vec::with_capacity(self.cfg.snr_db.len());
        for i in 0..self.cfg.snr_db.len() {
            let rec = self.run_point(i)?;
            info!(
                "{} dB: {} trials, BER {:.3e} ({} errors)",
                rec.snr_db,
                rec.trials,
                rec.ber(),
                rec.errors_total()
            );
            on_point(&rec)?;
            out.push(rec);
        }
        Ok(out)
    }

    pub fn run_sweep(&self) -> Result<Vec<BerRecord>> {
        self.run_sweep_with(|_| Ok(()))
    }
}
