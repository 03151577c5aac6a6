//! Experiment configuration: one TOML file holding the link, trainer,
//! solver, evaluation and sweep settings plus all seeds.

use serde::{Deserialize, Serialize};
use shaper_core::ssfm::{SsfmConfig, StepMode};
use shaper_core::trainer::TrainConfig;
use shaper_core::LinkParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub link: LinkParams,
    pub train: TrainSection,
    pub ssfm: SsfmSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub calibration: CalibrationSection,
    pub seeds: SeedsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub constellation_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: u64,
    pub tau0: f64,
    pub tau_min: f64,
    pub tau_decay: f64,
}

/// `step_km` is either a number (fixed step in km) or the string
/// `"adaptive"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsfmSection {
    pub samples_per_symbol: usize,
    pub step_km: StepSetting,
    pub max_nonlinear_phase_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Symbols per polarization for split-step runs.
    pub n_symbols: usize,
    pub guard_symbols: usize,
    /// Symbols per polarization for NLIN-model Monte-Carlo evaluation.
    pub nlin_symbols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub power_dbm_start: f64,
    pub power_dbm_stop: f64,
    pub power_dbm_step: f64,
    /// Worker threads for independent sweep points; 1 = sequential.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub powers_dbm: Vec<f64>,
    pub min_r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    pub master: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            link: LinkParams::single_span_ssmf(),
            train: TrainSection {
                constellation_size: 256,
                batch_size: 4096,
                learning_rate: 5e-3,
                iterations: 20_000,
                tau0: 1e-5,
                tau_min: 1e-5,
                tau_decay: 0.0,
            },
            ssfm: SsfmSection {
                samples_per_symbol: 8,
                step_km: StepSetting::Named("adaptive".into()),
                max_nonlinear_phase_per_step: 3e-3,
            },
            eval: EvalSection {
                n_symbols: 1 << 15,
                guard_symbols: 256,
                nlin_symbols: 100_000,
            },
            sweep: SweepSection {
                power_dbm_start: 0.0,
                power_dbm_stop: 14.0,
                power_dbm_step: 1.0,
                workers: 1,
            },
            calibration: CalibrationSection {
                powers_dbm: vec![8.0, 11.0, 14.0],
                min_r_squared: 0.9,
            },
            seeds: SeedsSection { master: 20_220_905 },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let config: Self = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.link.validate()?;
        self.ssfm_config()?.validate()?;
        if self.sweep.power_dbm_step <= 0.0 {
            anyhow::bail!("sweep power step must be positive");
        }
        if self.sweep.power_dbm_stop < self.sweep.power_dbm_start {
            anyhow::bail!("sweep power range is empty");
        }
        if self.calibration.powers_dbm.is_empty() {
            anyhow::bail!("calibration needs at least one probe power");
        }
        Ok(())
    }

    pub fn ssfm_config(&self) -> anyhow::Result<SsfmConfig> {
        let step = match &self.ssfm.step_km {
            StepSetting::Fixed(h) => StepMode::Fixed(*h),
            StepSetting::Named(s) if s == "adaptive" => StepMode::Adaptive,
            StepSetting::Named(other) => {
                anyhow::bail!("step_km must be a number or \"adaptive\", got {other:?}")
            }
        };
        Ok(SsfmConfig {
            samples_per_symbol: self.ssfm.samples_per_symbol,
            step,
            max_nonlinear_phase_per_step: self.ssfm.max_nonlinear_phase_per_step,
        })
    }

    pub fn eval_config(&self) -> shaper_core::pipeline::EvalConfig {
        shaper_core::pipeline::EvalConfig {
            n_symbols: self.eval.n_symbols,
            guard_symbols: self.eval.guard_symbols,
        }
    }

    pub fn train_config(&self, power_w: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            iterations: self.train.iterations,
            tau0: self.train.tau0,
            tau_min: self.train.tau_min,
            tau_decay: self.train.tau_decay,
            seed,
            power_w,
        }
    }

    pub fn sweep_powers_dbm(&self) -> Vec<f64> {
        let mut powers = Vec::new();
        let mut p = self.sweep.power_dbm_start;
        while p <= self.sweep.power_dbm_stop + 1e-9 {
            powers.push(p);
            p += self.sweep.power_dbm_step;
        }
        powers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let config = ExperimentConfig::default();
        let text = config.to_toml().unwrap();
        let parsed: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, parsed);
        // And a second serialization is byte-identical.
        assert_eq!(text, parsed.to_toml().unwrap());
    }

    #[test]
    fn fixed_step_round_trips() {
        let mut config = ExperimentConfig::default();
        config.ssfm.step_km = StepSetting::Fixed(0.1);
        let text = config.to_toml().unwrap();
        let parsed: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, parsed);
        assert_eq!(
            parsed.ssfm_config().unwrap().step,
            StepMode::Fixed(0.1)
        );
    }

    #[test]
    fn sweep_grid_is_inclusive() {
        let config = ExperimentConfig::default();
        let powers = config.sweep_powers_dbm();
        assert_eq!(powers.len(), 15);
        assert_eq!(powers[0], 0.0);
        assert_eq!(*powers.last().unwrap(), 14.0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut text = ExperimentConfig::default().to_toml().unwrap();
        text.push_str("\n[typo_section]\nx = 1\n");
        assert!(toml::from_str::<ExperimentConfig>(&text).is_err());
    }
}
