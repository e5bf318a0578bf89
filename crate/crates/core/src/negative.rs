//! Negative (graphite) particle: spherical diffusion with a current-driven
//! surface flux.

use crate::config::{CellParameters, DerivedGeometry};
use crate::error::ModelError;
use crate::sphere;

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeParticleState {
    /// Nodal concentrations on r_i = i R_n / (N - 1), mol/m^3.
    pub c_s_n: Vec<f64>,
}

impl NegativeParticleState {
    pub fn uniform(nodes: usize, c: f64) -> Self {
        NegativeParticleState {
            c_s_n: vec![c; nodes],
        }
    }

    pub fn surface(&self) -> f64 {
        *self.c_s_n.last().expect("non-empty grid")
    }

    pub fn surface_stoichiometry(&self, p: &CellParameters) -> f64 {
        self.surface() / p.c_s_n_max
    }
}

/// dc/dr at r = R_n for the applied current.
pub fn surface_gradient_n(current: f64, p: &CellParameters, geom: &DerivedGeometry) -> f64 {
    -current / (p.d_s_n * geom.a_n * p.a_cell * p.faraday * p.l_n)
}

pub fn assemble_negative_rhs(
    state: &NegativeParticleState,
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
) -> Result<Vec<f64>, ModelError> {
    let mut out = vec![0.0; state.c_s_n.len()];
    negative_rhs_into(&state.c_s_n, current, p, geom, &mut out);
    match out.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ModelError::NonFinite {
            block: "negative particle",
            index,
        }),
        None => Ok(out),
    }
}

pub(crate) fn negative_rhs_into(
    c: &[f64],
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
    out: &mut [f64],
) {
    sphere::diffusion_rhs_into(c, p.r_n, p.d_s_n, surface_gradient_n(current, p, geom), out);
}

pub fn bulk_stoichiometry_n(state: &NegativeParticleState, p: &CellParameters) -> f64 {
    sphere::bulk_fraction(&state.c_s_n, p.r_n, p.c_s_n_max)
}
