//! Run configuration file (TOML).

use std::path::Path;

use serde::Deserialize;

use grsm_core::channel::{ChannelModel, SvParams};
use grsm_core::pn_model::{PnConfig, PnMode};
use grsm_core::sim::{MappingMode, SimConfig};
use grsm_core::transceiver::Compensation;

/// Every key with its default, shown by `grsm ber-sweep --help`.
pub const CONFIG_REFERENCE: &str = "\
Configuration keys (TOML) and defaults:

[system]
  modulation            required, 4 | 16 | 64 ...
  mapping_mode          required, \"classical\" | \"epn\"
  n_tx                  32
  n_rx                  8
  spectral_efficiency   8      (N_a = spectral_efficiency - log2 M)

[pn]
  variance              0.1    (rad^2, 0 disables phase noise)
  mode                  \"clo\" | \"independent\" | \"general\"   default \"clo\"
  correlation           0.5    (only read when mode = \"general\")

[channel]
  model                 \"saleh-valenzuela\" | \"rayleigh\"   default \"saleh-valenzuela\"
  n_clusters            5
  rays_per_cluster      10
  angular_spread_deg    7.5
  cluster_range_deg     60.0
  los_present           true
  alpha_realizations    10000

[detector]
  compensation          \"none\" | \"single\" | \"double\"   default \"none\"
  prior_active          0.5

[sweep]
  snr_db                [0, 5, 10, 15, 20, 25, 30, 35, 40]
  trials_per_point      10000
  min_bit_errors        100
  max_trials_per_point  1000000
  channel_redraw_period 100
  master_seed           1

[[variants]]            optional, each runs the base config with overrides
  label                 free text used in the plot legend
  modulation, mapping_mode, compensation, pn_variance, pn_mode, pn_correlation
";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub system: SystemSection,
    #[serde(default)]
    pub pn: PnSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub variants: Vec<Variant>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub modulation: usize,
    pub mapping_mode: MappingMode,
    #[serde(default = "default_n_tx")]
    pub n_tx: usize,
    #[serde(default = "default_n_rx")]
    pub n_rx: usize,
    #[serde(default = "default_se")]
    pub spectral_efficiency: usize,
}

fn default_n_tx() -> usize {
    32
}

fn default_n_rx() -> usize {
    8
}

fn default_se() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PnModeName {
    Clo,
    Independent,
    General,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PnSection {
    pub variance: f64,
    pub mode: PnModeName,
    pub correlation: f64,
}

impl Default for PnSection {
    fn default() -> Self {
        Self {
            variance: 0.1,
            mode: PnModeName::Clo,
            correlation: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelName {
    SalehValenzuela,
    Rayleigh,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub model: ChannelName,
    pub n_clusters: usize,
    pub rays_per_cluster: usize,
    pub angular_spread_deg: f64,
    pub cluster_range_deg: f64,
    pub los_present: bool,
    pub alpha_realizations: usize,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let sv = SvParams::default();
        Self {
            model: ChannelName::SalehValenzuela,
            n_clusters: sv.n_clusters,
            rays_per_cluster: sv.rays_per_cluster,
            angular_spread_deg: sv.angular_spread_deg,
            cluster_range_deg: sv.cluster_range_deg,
            los_present: sv.los_present,
            alpha_realizations: 10_000,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub compensation: Compensation,
    pub prior_active: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            compensation: Compensation::None,
            prior_active: 0.5,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub trials_per_point: u64,
    pub min_bit_errors: u64,
    pub max_trials_per_point: u64,
    pub channel_redraw_period: u64,
    pub master_seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            snr_db: (0..=8).map(|i| 5.0 * i as f64).collect(),
            trials_per_point: 10_000,
            min_bit_errors: 100,
            max_trials_per_point: 1_000_000,
            channel_redraw_period: 100,
            master_seed: 1,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: Option<String>,
    pub modulation: Option<usize>,
    pub mapping_mode: Option<MappingMode>,
    pub compensation: Option<Compensation>,
    pub pn_variance: Option<f64>,
    pub pn_mode: Option<PnModeName>,
    pub pn_correlation: Option<f64>,
}

/// A labelled, fully resolved simulation configuration.
#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub config: SimConfig,
}

fn pn_config(variance: f64, mode: PnModeName, correlation: f64) -> Result<PnConfig, String> {
    let mode = match mode {
        PnModeName::Clo => PnMode::Clo,
        PnModeName::Independent => PnMode::Independent,
        PnModeName::General => PnMode::General(correlation),
    };
    PnConfig::new(variance, mode).map_err(|e| format!("[pn]: {e}"))
}

pub fn default_label(cfg: &SimConfig) -> String {
    let pn = if cfg.pn.variance() == 0.0 {
        "no PN".to_string()
    } else {
        format!("PN {}", cfg.pn.variance())
    };
    format!(
        "{}QAM {} {} {}",
        cfg.modulation,
        cfg.mapping.name(),
        cfg.compensation.name(),
        pn
    )
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn base(&self) -> Result<SimConfig, String> {
        let ch = &self.channel;
        let channel = match ch.model {
            ChannelName::Rayleigh => ChannelModel::RayleighIid,
            ChannelName::SalehValenzuela => ChannelModel::SalehValenzuela(SvParams {
                n_clusters: ch.n_clusters,
                rays_per_cluster: ch.rays_per_cluster,
                angular_spread_deg: ch.angular_spread_deg,
                cluster_range_deg: ch.cluster_range_deg,
                los_present: ch.los_present,
            }),
        };
        let mut cfg = SimConfig::new(self.system.modulation, self.system.mapping_mode);
        cfg.n_tx = self.system.n_tx;
        cfg.n_rx = self.system.n_rx;
        cfg.spectral_efficiency = self.system.spectral_efficiency;
        cfg.pn = pn_config(self.pn.variance, self.pn.mode, self.pn.correlation)?;
        cfg.channel = channel;
        cfg.alpha_realizations = ch.alpha_realizations;
        cfg.compensation = self.detector.compensation;
        cfg.prior_active = self.detector.prior_active;
        cfg.snr_db = self.sweep.snr_db.clone();
        cfg.trials_per_point = self.sweep.trials_per_point;
        cfg.min_bit_errors = self.sweep.min_bit_errors;
        cfg.max_trials_per_point = self.sweep.max_trials_per_point;
        cfg.channel_redraw_period = self.sweep.channel_redraw_period;
        cfg.master_seed = self.sweep.master_seed;
        Ok(cfg)
    }

    /// Resolves the file into the list of simulations to run: the base
    /// configuration alone, or one job per `[[variants]]` entry.
    pub fn jobs(&self) -> Result<Vec<Job>, String> {
        let base = self.base()?;
        let mut jobs = Vec::new();
        if self.variants.is_empty() {
            jobs.push(Job {
                label: default_label(&base),
                config: base,
            });
        } else {
            for (i, v) in self.variants.iter().enumerate() {
                let mut cfg = base.clone();
                if let Some(m) = v.modulation {
                    cfg.modulation = m;
                }
                if let Some(m) = v.mapping_mode {
                    cfg.mapping = m;
                }
                if let Some(c) = v.compensation {
                    cfg.compensation = c;
                }
                if v.pn_variance.is_some() || v.pn_mode.is_some() || v.pn_correlation.is_some() {
                    cfg.pn = pn_config(
                        v.pn_variance.unwrap_or(self.pn.variance),
                        v.pn_mode.unwrap_or(self.pn.mode),
                        v.pn_correlation.unwrap_or(self.pn.correlation),
                    )
                    .map_err(|e| format!("variants[{i}] {e}"))?;
                }
                jobs.push(Job {
                    label: v.label.clone().unwrap_or_else(|| default_label(&cfg)),
                    config: cfg,
                });
            }
        }
        for (i, job) in jobs.iter().enumerate() {
            job.config
                .validate()
                .map_err(|e| format!("configuration {} ({}): {e}", i, job.label))?;
        }
        Ok(jobs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let f = RunConfigFile::parse("[system]\nmodulation = 16\nmapping_mode = \"epn\"\n").unwrap();
        let jobs = f.jobs().unwrap();
        assert_eq!(jobs.len(), 1);
        let mut expected = SimConfig::new(16, MappingMode::Epn);
        expected.pn = PnConfig::clo(0.1).unwrap();
        assert_eq!(jobs[0].config, expected);
    }

    #[test]
    fn required_keys() {
        let err = RunConfigFile::parse("[system]\nmodulation = 16\n").unwrap_err();
        assert!(err.contains("mapping_mode"), "{err}");
    }

    #[test]
    fn unknown_key_is_named_with_location() {
        let err = RunConfigFile::parse("[system]\nmodulation = 16\nmapping_mode = \"epn\"\n\n[pn]\nvarience = 0.1\n")
            .unwrap_err();
        assert!(err.contains("varience") && err.contains("line 6"), "{err}");
    }

    #[test]
    fn variants_override_base() {
        let text = r#"
[system]
modulation = 16
mapping_mode = "epn"

[[variants]]
compensation = "double"

[[variants]]
label = "classical no PN"
mapping_mode = "classical"
pn_variance = 0.0
"#;
        let jobs = RunConfigFile::parse(text).unwrap().jobs().unwrap();
        assert_eq!(jobs.len(), 2);
        assert_eq!(jobs[0].config.compensation, Compensation::Double);
        assert_eq!(jobs[1].label, "classical no PN");
        assert_eq!(jobs[1].config.pn.variance(), 0.0);
        assert_ne!(jobs[0].config.hash(), jobs[1].config.hash());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let text = "[system]\nmodulation = 16\nmapping_mode = \"epn\"\nn_rx = 2\n";
        assert!(RunConfigFile::parse(text).unwrap().jobs().is_err());
        let text = "[system]\nmodulation = 16\nmapping_mode = \"epn\"\n[pn]\nvariance = -1.0\n";
        assert!(RunConfigFile::parse(text).unwrap().jobs().is_err());
    }
}
