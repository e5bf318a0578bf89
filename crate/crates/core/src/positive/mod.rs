//! Positive (LiFePO4) particle with alpha/beta phase coexistence.
//!
//! Outside the plateau the particle is a plain diffusing sphere
//! ([`OnePhaseState`]). Inside it a uniform core at one phase composition is
//! wrapped by a diffusing shell at the other, separated by the moving boundary
//! r_p; the shell is solved on the fixed coordinate chi = (r - r_p)/(R_p - r_p)
//! ([`ShellState`]). Entering and leaving the plateau remaps between the two.

mod one_phase;
mod shell;
mod transition;

pub(crate) use one_phase::one_phase_rhs_into;
pub use one_phase::{assemble_one_phase_rhs, surface_gradient_p, OnePhaseState};
pub use shell::{
    assemble_shell_rhs, shell_surface_concentration, shell_surface_flux, ShellModel, ShellState,
    StateSpace, TransformCoefficients,
};
pub use transition::{enter_two_phase, exit_two_phase};

use serde::{Deserialize, Serialize};

use crate::config::{CellParameters, DerivedGeometry, TransitionTrigger};
use crate::sphere;

/// Current direction: positive current discharges the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Charge,
    Discharge,
}

impl Direction {
    /// Direction of a nonzero current; `None` at rest.
    pub fn of_current(current: f64) -> Option<Direction> {
        if current > 0.0 {
            Some(Direction::Discharge)
        } else if current < 0.0 {
            Some(Direction::Charge)
        } else {
            None
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Direction::Discharge => 1.0,
            Direction::Charge => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Charge => "charge",
            Direction::Discharge => "discharge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    OnePhaseAlpha,
    TwoPhase,
    OnePhaseBeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRegime {
    pub mode: Mode,
    /// Time of the last transition, s.
    pub t_bar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PositiveState {
    OnePhase(OnePhaseState),
    Shell(ShellState),
}

/// Concentration imposed at the moving boundary.
///
/// Lithiation grows the Li-rich shell (c_beta), delithiation the Li-poor
/// one (c_alpha). At rest the value of the last nonzero current is held,
/// which callers express by passing that direction.
pub fn boundary_concentration(direction: Direction, p: &CellParameters) -> f64 {
    match direction {
        Direction::Discharge => p.c_beta(),
        Direction::Charge => p.c_alpha(),
    }
}

/// Uniform core composition at plateau entry.
pub fn core_initial_condition(direction: Direction, p: &CellParameters) -> f64 {
    match direction {
        Direction::Discharge => p.c_alpha(),
        Direction::Charge => p.c_beta(),
    }
}

/// Regime change the positive particle has to undergo.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionEvent {
    EnterTwoPhase(Direction),
    ExitTwoPhase,
}

/// Signed distance to the next regime change; the transition fires when the
/// value reaches zero from above. `None` when no transition is reachable with
/// the given current.
pub fn trigger_value(
    regime: Mode,
    positive: &PositiveState,
    current: f64,
    p: &CellParameters,
    trigger: TransitionTrigger,
) -> Option<(f64, TransitionEvent)> {
    match (regime, positive) {
        (Mode::TwoPhase, PositiveState::Shell(shell)) => Some((
            shell.r_p / p.r_p - p.rho_frac,
            TransitionEvent::ExitTwoPhase,
        )),
        (Mode::OnePhaseAlpha, PositiveState::OnePhase(s)) if current > 0.0 => {
            let theta = one_phase_trigger_stoichiometry(s, p, trigger);
            Some((
                p.theta_p_alpha - theta,
                TransitionEvent::EnterTwoPhase(Direction::Discharge),
            ))
        }
        (Mode::OnePhaseBeta, PositiveState::OnePhase(s)) if current < 0.0 => {
            let theta = one_phase_trigger_stoichiometry(s, p, trigger);
            Some((
                theta - p.theta_p_beta,
                TransitionEvent::EnterTwoPhase(Direction::Charge),
            ))
        }
        _ => None,
    }
}

fn one_phase_trigger_stoichiometry(
    s: &OnePhaseState,
    p: &CellParameters,
    trigger: TransitionTrigger,
) -> f64 {
    match trigger {
        TransitionTrigger::Surface => s.surface() / p.c_s_p_max,
        TransitionTrigger::Bulk => sphere::bulk_fraction(&s.c_s_p, p.r_p, p.c_s_p_max),
    }
}

/// Regime change due now, if any.
pub fn detect_transition(
    regime: Mode,
    positive: &PositiveState,
    current: f64,
    p: &CellParameters,
    trigger: TransitionTrigger,
) -> Option<TransitionEvent> {
    trigger_value(regime, positive, current, p, trigger)
        .filter(|(value, _)| *value <= 0.0)
        .map(|(_, event)| event)
}

/// Surface concentration of the positive particle, mol/m^3.
pub fn positive_surface_concentration(
    positive: &PositiveState,
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
) -> f64 {
    match positive {
        PositiveState::OnePhase(s) => s.surface(),
        PositiveState::Shell(s) => shell_surface_concentration(s, current, p, geom),
    }
}

/// Bulk stoichiometry of the positive particle.
///
/// In the two-phase regime the uniform core contributes c_core r_p^3 / 3 and
/// the shell is integrated on the chi-grid with g at chi = 0 and the
/// reconstructed surface node at chi = 1.
pub fn bulk_stoichiometry_p(
    positive: &PositiveState,
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
) -> f64 {
    match positive {
        PositiveState::OnePhase(s) => sphere::bulk_fraction(&s.c_s_p, p.r_p, p.c_s_p_max),
        PositiveState::Shell(s) => {
            3.0 * s.lithium_moment(current, p, geom) / (p.c_s_p_max * p.r_p.powi(3))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::reference_parameters;

    #[test]
    fn boundary_and_core_values() {
        let mut p = reference_parameters();
        p.c_s_p_max = 22800.0;
        assert!((boundary_concentration(Direction::Discharge, &p) - 18240.0).abs() < 1e-9);
        assert!((boundary_concentration(Direction::Charge, &p) - 4514.4).abs() < 1e-9);
        assert_eq!(
            core_initial_condition(Direction::Discharge, &p),
            p.c_alpha()
        );
        assert_eq!(core_initial_condition(Direction::Charge, &p), p.c_beta());
    }

    #[test]
    fn rest_holds_the_last_direction() {
        let p = reference_parameters();
        let last = Direction::of_current(4.083).unwrap();
        assert_eq!(Direction::of_current(0.0), None);
        assert_eq!(boundary_concentration(last, &p), p.c_beta());
    }

    #[test]
    fn surface_trigger_in_alpha_phase() {
        let p = reference_parameters();
        let below = PositiveState::OnePhase(OnePhaseState::uniform(20, 0.19 * p.c_s_p_max));
        let above = PositiveState::OnePhase(OnePhaseState::uniform(20, 0.1985 * p.c_s_p_max));
        let t = TransitionTrigger::Surface;
        assert_eq!(
            detect_transition(Mode::OnePhaseAlpha, &below, 4.0, &p, t),
            None
        );
        assert_eq!(
            detect_transition(Mode::OnePhaseAlpha, &above, 4.0, &p, t),
            Some(TransitionEvent::EnterTwoPhase(Direction::Discharge))
        );
        // charging in alpha never enters the plateau
        assert_eq!(
            detect_transition(Mode::OnePhaseAlpha, &above, -4.0, &p, t),
            None
        );
    }

    #[test]
    fn beta_phase_trigger_on_charge() {
        let p = reference_parameters();
        let s = PositiveState::OnePhase(OnePhaseState::uniform(20, 0.7999 * p.c_s_p_max));
        assert_eq!(
            detect_transition(Mode::OnePhaseBeta, &s, -4.0, &p, TransitionTrigger::Bulk),
            Some(TransitionEvent::EnterTwoPhase(Direction::Charge))
        );
    }

    #[test]
    fn two_phase_exit_threshold() {
        let p = reference_parameters();
        let mut shell = ShellState::new(0.5 * p.r_p, vec![p.c_beta(); 29], Direction::Discharge);
        let pos = PositiveState::Shell(shell.clone());
        let t = TransitionTrigger::Surface;
        assert_eq!(detect_transition(Mode::TwoPhase, &pos, 4.0, &p, t), None);
        shell.r_p = 0.0008 * p.r_p;
        assert_eq!(
            detect_transition(Mode::TwoPhase, &PositiveState::Shell(shell), 4.0, &p, t),
            Some(TransitionEvent::ExitTwoPhase)
        );
    }
}
