//! Invariant measurements shared by the `check` command and the tests:
//! lithium bookkeeping over full C/12 legs, shell grid convergence and the
//! agreement of the matrix form with the nodal equations.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{CellConfig, ShellStencil};
use crate::error::{ModelError, SimError};
use crate::positive::{assemble_shell_rhs, Direction, Mode, ShellModel, ShellState};
use crate::sim::{CellModel, CurrentProfile, Sampling, SimOptions, SimulationTrace, Termination};

pub const V_MIN: f64 = 2.5;
pub const V_MAX: f64 = 3.65;

/// A full constant-current leg at C/12: discharge from SOC 1 or charge from
/// SOC 0 until the voltage cutoff or 12 h.
pub fn c12_leg(
    config: &CellConfig,
    direction: Direction,
    dt: f64,
) -> Result<SimulationTrace, SimError> {
    let model = CellModel::from_config(config)
        .map_err(|e| SimError::Profile(format!("invalid configuration: {e}")))?;
    let soc0 = match direction {
        Direction::Discharge => 1.0,
        Direction::Charge => 0.0,
    };
    let init = model.initial_state(soc0, direction)?;
    let current = direction.sign() * config.params.q_nom / 12.0;
    let profile =
        CurrentProfile::constant(current, 12.0 * 3600.0).with_cutoffs(Some(V_MIN), Some(V_MAX));
    let opts = SimOptions {
        sampling: Sampling::Uniform(dt),
        record_steps: true,
        ..SimOptions::default()
    };
    model.simulate(&profile, &init, &opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    pub direction: Direction,
    /// max |inventory - inventory(0)| / inventory(0) over accepted steps.
    pub electrolyte_drift: f64,
    /// max over samples of |dSOC Q + q| / q_total per electrode, q the
    /// signed charge passed so far.
    pub bookkeeping_n: f64,
    pub bookkeeping_p: f64,
    pub bookkeeping_n_end: f64,
    pub bookkeeping_p_end: f64,
    /// max |flux / (I / (a_p A F L_p)) - 1| over accepted two-phase steps.
    pub flux_identity: f64,
    pub runtime_s: f64,
    pub termination: Option<Termination>,
    pub charge_ah: f64,
}

pub fn conservation(
    config: &CellConfig,
    direction: Direction,
) -> Result<ConservationReport, SimError> {
    let start = Instant::now();
    let trace = c12_leg(config, direction, 60.0)?;
    let runtime_s = start.elapsed().as_secs_f64();
    Ok(conservation_of(&trace, config, direction, runtime_s))
}

/// Bookkeeping figures of a single-direction trace recorded with steps.
pub fn conservation_of(
    trace: &SimulationTrace,
    config: &CellConfig,
    direction: Direction,
    runtime_s: f64,
) -> ConservationReport {
    let p = &config.params;
    let (q_n, q_p) = (p.capacity_n(), p.capacity_p());
    let total = trace
        .q_throughput
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(f64::MIN_POSITIVE);
    let sign = direction.sign();
    let error = |soc: &[f64], q: f64, j: usize| {
        ((soc[j] - soc[0]) * q + sign * trace.q_throughput[j]).abs() / total
    };
    let n = trace.len();
    let worst = |soc: &[f64], q: f64| (0..n).map(|j| error(soc, q, j)).fold(0.0, f64::max);
    let inv0 = trace
        .steps
        .first()
        .map(|s| s.electrolyte_inventory)
        .unwrap_or(1.0);
    let electrolyte_drift = trace
        .steps
        .iter()
        .map(|s| (s.electrolyte_inventory - inv0).abs() / inv0)
        .fold(0.0, f64::max);
    let flux_identity = trace
        .steps
        .iter()
        .filter_map(|s| s.flux_ratio)
        .map(|r| (r - 1.0).abs())
        .fold(0.0, f64::max);
    ConservationReport {
        direction,
        electrolyte_drift,
        bookkeeping_n: worst(&trace.soc_n, q_n),
        bookkeeping_p: worst(&trace.soc_p, q_p),
        bookkeeping_n_end: if n > 0 {
            error(&trace.soc_n, q_n, n - 1)
        } else {
            0.0
        },
        bookkeeping_p_end: if n > 0 {
            error(&trace.soc_p, q_p, n - 1)
        } else {
            0.0
        },
        flux_identity,
        runtime_s,
        termination: trace.termination,
        charge_ah: total,
    }
}

/// RMS voltage difference between the C/12 legs at two shell resolutions,
/// over the sample times both runs reach.
pub fn shell_grid_convergence(
    config: &CellConfig,
    direction: Direction,
    coarse: usize,
    fine: usize,
) -> Result<f64, SimError> {
    let run = |n_r: usize| {
        let mut cfg = config.clone();
        cfg.model.n_r = n_r;
        c12_leg(&cfg, direction, 60.0)
    };
    let (a, b) = (run(coarse)?, run(fine)?);
    let n = a.len().min(b.len());
    let mut sum = 0.0;
    for j in 0..n {
        let d = a.voltage[j] - b.voltage[j];
        sum += d * d;
    }
    Ok((sum / n.max(1) as f64).sqrt())
}

/// Largest normwise relative difference between the matrix form and the
/// nodal right-sided equations over random shell states (r_p and c rows
/// compared separately).
pub fn matrix_equivalence(
    config: &CellConfig,
    states: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    let p = &config.params;
    let geom = p
        .geometry()
        .map_err(|e| ModelError::OutOfDomain(e.to_string()))?;
    let model = ShellModel::new(p, &geom, ShellStencil::RightSided);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..states {
        let intervals = config.model.n_r;
        let direction = if rng.gen::<bool>() {
            Direction::Discharge
        } else {
            Direction::Charge
        };
        let r_p = rng.gen_range(0.02..0.98) * p.r_p;
        let c: Vec<f64> = (1..intervals)
            .map(|_| rng.gen_range(0.05..0.95) * p.c_s_p_max)
            .collect();
        let current = rng.gen_range(-10.0..10.0);
        let shell = ShellState::new(r_p, c, direction);
        let (dr, dc) = assemble_shell_rhs(&shell, current, p, &geom, ShellStencil::RightSided)?;
        let ss = model.state_space(&shell)?;
        let mut x = DVector::zeros(intervals);
        x[0] = r_p;
        for (l, v) in shell.c_shell.iter().enumerate() {
            x[l + 1] = *v;
        }
        let m = ss.rhs(&x, current);
        // normwise: the boundary row is a difference of two nearly equal
        // terms when the first node sits close to g
        let k = model.coefficients(r_p, &shell.c_shell, direction)?;
        worst = worst.max((m[0] - dr).abs() / (k.eta4.abs() * p.c_s_p_max));
        let scale = dc.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (l, v) in dc.iter().enumerate() {
            worst = worst.max((m[l + 1] - v).abs() / scale);
        }
    }
    Ok(worst)
}

/// Indices of samples taken in the two-phase regime.
pub fn plateau_samples(trace: &SimulationTrace) -> Vec<usize> {
    (0..trace.len())
        .filter(|&j| trace.mode[j] == Mode::TwoPhase)
        .collect()
}

/// Fraction of two-phase samples whose voltage lies in [lo, hi].
pub fn band_fraction(trace: &SimulationTrace, lo: f64, hi: f64) -> f64 {
    let idx = plateau_samples(trace);
    if idx.is_empty() {
        return 0.0;
    }
    let inside = idx
        .iter()
        .filter(|&&j| trace.voltage[j] >= lo && trace.voltage[j] <= hi)
        .count();
    inside as f64 / idx.len() as f64
}
