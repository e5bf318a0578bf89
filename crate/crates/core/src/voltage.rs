//! Open-circuit potentials, Butler-Volmer kinetics, terminal voltage and SOC.

use serde::Serialize;

use crate::config::{CellParameters, DerivedGeometry, NegativeOcp};
use crate::electrolyte::{
    electrolyte_potential_drop, electrolyte_resistance, ElectrolyteGrid, ElectrolyteState,
};
use crate::error::ModelError;
use crate::positive::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Electrode {
    Negative,
    Positive,
}

impl Electrode {
    pub fn name(self) -> &'static str {
        match self {
            Electrode::Negative => "negative",
            Electrode::Positive => "positive",
        }
    }
}

fn check_stoichiometry(electrode: Electrode, theta: f64) -> Result<(), ModelError> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(ModelError::Stoichiometry {
            electrode: electrode.name(),
            value: theta,
        })
    }
}

/// LiFePO4 open-circuit potential, V, on the branch of the current direction
/// (at rest, the branch of the last nonzero current).
pub fn ocp_positive(theta: f64, branch: Direction) -> Result<f64, ModelError> {
    check_stoichiometry(Electrode::Positive, theta)?;
    let x = 1.0 - theta;
    Ok(match branch {
        Direction::Discharge => {
            3.382 - 0.2955 * (-44.99 * x.powf(0.8707)).exp()
                + 10f64.powf(-20.71) * (14.17 * x.powf(8.128)).exp()
                + 10f64.powf(-40.82) * (100.0 * x.powf(1.213)).exp()
        }
        Direction::Charge => {
            3.442 - 0.1774 * (-127.7 * x.powf(0.7921)).exp()
                + 10f64.powf(-2.123) * (16.56 * x.powf(24.08)).exp()
                + 10f64.powf(-10.29) * (99.91 * x.powf(22.17)).exp()
        }
    })
}

/// Graphite open-circuit potential, V.
pub fn ocp_negative(theta: f64, model: &NegativeOcp) -> Result<f64, ModelError> {
    check_stoichiometry(Electrode::Negative, theta)?;
    Ok(match model {
        NegativeOcp::SafariDelacourt => {
            0.6379
                + 0.5416 * (-305.5309 * theta).exp()
                + 0.044 * (-(theta - 0.1958) / 0.1088).tanh()
                - 0.1978 * ((theta - 1.0571) / 0.0854).tanh()
                - 0.6875 * ((theta + 0.0117) / 0.0529).tanh()
                - 0.0175 * ((theta - 0.5692) / 0.0875).tanh()
        }
        NegativeOcp::Table { theta: xs, volts } => interpolate_clamped(xs, volts, theta),
    })
}

fn interpolate_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let k = xs.partition_point(|v| *v <= x);
    let s = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + s * (ys[k] - ys[k - 1])
}

/// Exchange current density k F sqrt(c_avg c_surf (c_max - c_surf)), A/m^2.
pub fn exchange_current(electrode: Electrode, c_avg: f64, c_surf: f64, p: &CellParameters) -> f64 {
    let (k, c_max) = match electrode {
        Electrode::Negative => (p.k_n, p.c_s_n_max),
        Electrode::Positive => (p.k_p, p.c_s_p_max),
    };
    k * p.faraday * (c_avg * c_surf * (c_max - c_surf)).max(0.0).sqrt()
}

/// Butler-Volmer overpotential with symmetric transfer (alpha = 0.5).
///
/// The electrode sees +I at the negative and -I at the positive side, so a
/// discharge makes eta_n > 0 and eta_p < 0.
pub fn overpotential(
    electrode: Electrode,
    current: f64,
    i0: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
) -> Result<f64, ModelError> {
    if !(i0 > 0.0) {
        return Err(ModelError::ZeroExchangeCurrent(electrode.name()));
    }
    let (signed, a, l) = match electrode {
        Electrode::Negative => (current, geom.a_n, p.l_n),
        Electrode::Positive => (-current, geom.a_p, p.l_p),
    };
    let arg = signed / (2.0 * p.a_cell * a * l * i0);
    Ok(p.r_gas * p.temperature / (0.5 * p.faraday) * arg.asinh())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoltageBreakdown {
    pub u_p: f64,
    pub u_n: f64,
    pub eta_p: f64,
    pub eta_n: f64,
    pub delta_phi_e: f64,
    /// I (R_l + R_el), V.
    pub ohmic: f64,
    pub v_cell: f64,
}

/// Terminal voltage from the surface concentrations and electrolyte state.
#[allow(clippy::too_many_arguments)]
pub fn cell_voltage(
    electrolyte: &ElectrolyteState,
    grid: &ElectrolyteGrid,
    c_n_surf: f64,
    c_p_surf: f64,
    current: f64,
    branch: Direction,
    p: &CellParameters,
    geom: &DerivedGeometry,
    ocp_n: &NegativeOcp,
) -> Result<VoltageBreakdown, ModelError> {
    let theta_n = c_n_surf / p.c_s_n_max;
    let theta_p = c_p_surf / p.c_s_p_max;
    let u_n = ocp_negative(theta_n, ocp_n)?;
    let u_p = ocp_positive(theta_p, branch)?;
    let c_avg = electrolyte.average(grid);
    let i0_n = exchange_current(Electrode::Negative, c_avg, c_n_surf, p);
    let i0_p = exchange_current(Electrode::Positive, c_avg, c_p_surf, p);
    let eta_n = overpotential(Electrode::Negative, current, i0_n, p, geom)?;
    let eta_p = overpotential(Electrode::Positive, current, i0_p, p, geom)?;
    let delta_phi_e = electrolyte_potential_drop(electrolyte, grid, p)?;
    let r_el = electrolyte_resistance(electrolyte, grid, p, geom)?;
    let ohmic = current * (p.r_l + r_el);
    let v_cell = (u_p + eta_p) - (u_n + eta_n) + delta_phi_e - ohmic;
    Ok(VoltageBreakdown {
        u_p,
        u_n,
        eta_p,
        eta_n,
        delta_phi_e,
        ohmic,
        v_cell,
    })
}

pub fn soc_n(theta_bulk: f64, p: &CellParameters) -> f64 {
    (theta_bulk - p.theta_n_0) / (p.theta_n_100 - p.theta_n_0)
}

pub fn soc_p(theta_bulk: f64, p: &CellParameters) -> f64 {
    (p.theta_p_0 - theta_bulk) / (p.theta_p_0 - p.theta_p_100)
}
