//! Standard sweeps at M = 128, N = 32, 16-QAM, EVA.

use serde::{Deserialize, Serialize};

use crate::harness::config::{CfoDraw, CfoVariant, ExperimentConfig, TimingVariant, Variants};

/// Doppler spread of the reference scenario.
pub const REFERENCE_KAPPA: f64 = 2.91;

/// BEM order used by the presets at every Doppler point; it gives
/// `Ľ_p = 16` with `L_ch = 10`.
pub const PRESET_BETA: usize = 12;

pub const SNR_GRID: [f64; 7] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
pub const KAPPA_GRID: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, REFERENCE_KAPPA];
pub const CFO_GRID: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

/// Horizontal axis of a preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Snr,
    Doppler,
    /// Fixed CFO per point with perfect timing.
    Cfo,
}

fn base(id: &str, trials: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(
        r#"{"schema_version":1,"m":128,"n":32,"kappa_max":[2.91],"snr_db":[20],"users":[2],"trials":1}"#,
    )
    .expect("preset base is valid");
    cfg.experiment_id = id.into();
    cfg.trials = trials;
    cfg.seed = seed;
    cfg.beta = Some(PRESET_BETA);
    cfg
}

fn apply_axis(cfg: &mut ExperimentConfig, axis: Axis) {
    match axis {
        Axis::Snr => cfg.snr_db = SNR_GRID.iter().map(|&s| Some(s)).collect(),
        Axis::Doppler => cfg.kappa_max = KAPPA_GRID.to_vec(),
        Axis::Cfo => {
            cfg.cfo = CfoDraw::Fixed { values: CFO_GRID.to_vec() };
            cfg.variants.timing = vec![TimingVariant::Genie];
        }
    }
}

/// Timing error for Q = 2 and 4 with the default threshold, two explicit
/// thresholds inside the admissible range and the highest-peak detector.
pub fn to_sweep(axis: Axis, trials: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = base("to-sweep", trials, seed);
    cfg.users = vec![2, 4];
    cfg.variants = Variants {
        timing: vec![
            TimingVariant::FirstPeak { threshold: None },
            TimingVariant::FirstPeak { threshold: Some(0.3) },
            TimingVariant::FirstPeak { threshold: Some(0.45) },
            TimingVariant::HighestPeak,
        ],
        cfo: vec![],
    };
    apply_axis(&mut cfg, axis);
    cfg
}

/// CFO MSE for Q = 2 and 4 after first-peak timing.
pub fn cfo_sweep(axis: Axis, trials: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = base("cfo-sweep", trials, seed);
    cfg.users = vec![2, 4];
    cfg.variants = Variants {
        timing: vec![TimingVariant::FirstPeak { threshold: None }],
        cfo: vec![CfoVariant::Ml],
    };
    apply_axis(&mut cfg, axis);
    cfg
}

/// Channel NMSE with compensated and absorbed CFO.
pub fn nmse_sweep(axis: Axis, trials: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = base("nmse-sweep", trials, seed);
    cfg.variants = Variants {
        timing: vec![TimingVariant::FirstPeak { threshold: None }],
        cfo: vec![CfoVariant::Ml, CfoVariant::Absorbed],
    };
    apply_axis(&mut cfg, axis);
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for axis in [Axis::Snr, Axis::Doppler, Axis::Cfo] {
            for cfg in [to_sweep(axis, 5, 1), cfo_sweep(axis, 5, 1), nmse_sweep(axis, 5, 1)] {
                cfg.validate().unwrap();
                assert_eq!(cfg.half_len_for(REFERENCE_KAPPA), 16);
            }
        }
        assert_eq!(nmse_sweep(Axis::Cfo, 5, 1).variants.timing, vec![TimingVariant::Genie]);
    }
}
