//! Synthetic measurements from a known parameter vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Sample};
use crate::config::{CellConfig, Theta};
use crate::error::SimError;
use crate::positive::Direction;
use crate::sim::{CellModel, CurrentProfile, Sampling, SimOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct TwinSettings {
    /// Current as a fraction of the nominal capacity per hour.
    pub c_rate: f64,
    pub dt: f64,
    /// Standard deviation of the additive voltage noise, V.
    pub noise: f64,
    pub seed: u64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for TwinSettings {
    fn default() -> Self {
        TwinSettings {
            c_rate: 1.0 / 12.0,
            dt: 120.0,
            noise: 0.002,
            seed: 1,
            v_min: 2.5,
            v_max: 3.65,
        }
    }
}

/// Full constant-current charge (from SOC 0) or discharge (from SOC 1) of
/// the cell with `theta`, stopped at the voltage cutoff or after 1/c_rate
/// hours, with Gaussian noise on the voltage.
pub fn twin_dataset(
    config: &CellConfig,
    theta: &Theta,
    direction: Direction,
    settings: &TwinSettings,
) -> Result<Dataset, SimError> {
    let params = config.params.with_theta(theta);
    let q_nom = params.q_nom;
    let model = CellModel::new(params, config.model.clone())
        .map_err(|e| SimError::Profile(format!("invalid configuration: {e}")))?;
    let current = direction.sign() * settings.c_rate * q_nom;
    let soc0 = match direction {
        Direction::Discharge => 1.0,
        Direction::Charge => 0.0,
    };
    let init = model.initial_state(soc0, direction)?;
    let profile = CurrentProfile::constant(current, 3600.0 / settings.c_rate)
        .with_cutoffs(Some(settings.v_min), Some(settings.v_max));
    let opts = SimOptions {
        sampling: Sampling::Uniform(settings.dt),
        ..SimOptions::default()
    };
    let trace = model.simulate(&profile, &init, &opts)?;
    let noise = Normal::new(0.0, settings.noise).map_err(|e| SimError::Profile(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let samples = trace
        .t
        .iter()
        .zip(&trace.voltage)
        .map(|(&t, &v)| Sample {
            t,
            current,
            voltage: v + noise.sample(&mut rng),
        })
        .collect();
    Dataset::new(samples, q_nom, soc0).map_err(|e| SimError::Profile(e.to_string()))
}

/// Charge and discharge twins; the discharge noise uses seed + 1.
pub fn twin_pair(
    config: &CellConfig,
    theta: &Theta,
    settings: &TwinSettings,
) -> Result<Vec<Dataset>, SimError> {
    [Direction::Charge, Direction::Discharge]
        .into_iter()
        .enumerate()
        .map(|(k, direction)| {
            let leg = TwinSettings {
                seed: settings.seed.wrapping_add(k as u64),
                ..settings.clone()
            };
            twin_dataset(config, theta, direction, &leg)
        })
        .collect()
}
