use crate::config::{CellParameters, DerivedGeometry};
use crate::error::ModelError;
use crate::sphere;

/// Positive particle outside the plateau, on the same uniform radial grid as
/// the negative particle.
#[derive(Debug, Clone, PartialEq)]
pub struct OnePhaseState {
    pub c_s_p: Vec<f64>,
}

impl OnePhaseState {
    pub fn uniform(nodes: usize, c: f64) -> Self {
        OnePhaseState {
            c_s_p: vec![c; nodes],
        }
    }

    pub fn surface(&self) -> f64 {
        *self.c_s_p.last().expect("non-empty grid")
    }
}

/// dc/dr at r = R_p; discharge lithiates the positive particle.
pub fn surface_gradient_p(current: f64, p: &CellParameters, geom: &DerivedGeometry) -> f64 {
    current / (p.d_s_p * geom.a_p * p.a_cell * p.faraday * p.l_p)
}

pub fn assemble_one_phase_rhs(
    state: &OnePhaseState,
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
) -> Result<Vec<f64>, ModelError> {
    let mut out = vec![0.0; state.c_s_p.len()];
    one_phase_rhs_into(&state.c_s_p, current, p, geom, &mut out);
    match out.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ModelError::NonFinite {
            block: "positive particle",
            index,
        }),
        None => Ok(out),
    }
}

pub(crate) fn one_phase_rhs_into(
    c: &[f64],
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
    out: &mut [f64],
) {
    sphere::diffusion_rhs_into(c, p.r_p, p.d_s_p, surface_gradient_p(current, p, geom), out);
}
