use super::{boundary_concentration, Direction, OnePhaseState, ShellState};
use crate::config::{CellParameters, DerivedGeometry};
use crate::error::ModelError;
use crate::sphere;

/// Nucleates the shell just inside the surface: r_p = R_p - eps and every
/// shell node at the boundary composition g. The rest of the particle becomes
/// the uniform core, so the one-phase profile is discarded.
pub fn enter_two_phase(
    direction: Direction,
    p: &CellParameters,
    intervals: usize,
) -> Result<ShellState, ModelError> {
    let eps = p.epsilon();
    if eps <= 0.0 || eps >= p.r_p {
        return Err(ModelError::ZeroOffset);
    }
    Ok(ShellState::new(
        p.r_p - eps,
        vec![boundary_concentration(direction, p); intervals - 1],
        direction,
    ))
}

/// Maps the shell back onto the uniform radial grid once the core is gone.
///
/// The chi-grid profile (boundary value, stored nodes, reconstructed surface)
/// is interpolated linearly in r; radial nodes inside r_p take the boundary
/// value. The result is scaled once so its lithium content equals that of the
/// core plus shell.
pub fn exit_two_phase(
    shell: &ShellState,
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
    nodes: usize,
) -> Result<OnePhaseState, ModelError> {
    if shell.r_p > p.rho() {
        return Err(ModelError::ExitGuard(shell.r_p / p.r_p));
    }
    let (r_chi, c_chi) = shell.profile(current, p, geom);
    let h = p.r_p / (nodes - 1) as f64;
    let r: Vec<f64> = (0..nodes).map(|i| i as f64 * h).collect();
    let mut c: Vec<f64> = r
        .iter()
        .map(|&ri| interpolate(&r_chi, &c_chi, ri))
        .collect();
    let target = shell.lithium_moment(current, p, geom);
    let remapped = sphere::moment_piecewise_linear(&r, &c);
    let factor = target / remapped;
    if !factor.is_finite() || (factor - 1.0).abs() > 1e-3 {
        return Err(ModelError::Renormalization(factor));
    }
    for v in &mut c {
        *v *= factor;
    }
    Ok(OnePhaseState { c_s_p: c })
}

fn interpolate(x: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= x[0] {
        return y[0];
    }
    let last = x.len() - 1;
    if at >= x[last] {
        return y[last];
    }
    let k = x.partition_point(|v| *v <= at).min(last);
    let (x0, x1) = (x[k - 1], x[k]);
    let s = (at - x0) / (x1 - x0);
    y[k - 1] + s * (y[k] - y[k - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::reference_parameters;
    use crate::positive::core_initial_condition;

    #[test]
    fn entry_places_boundary_below_surface() {
        let p = reference_parameters();
        let s = enter_two_phase(Direction::Discharge, &p, 30).unwrap();
        assert!((s.r_p / p.r_p - 0.999).abs() < 1e-12);
        assert_eq!(s.c_shell.len(), 29);
        assert!(s.c_shell.iter().all(|c| *c == p.c_beta()));
        let s = enter_two_phase(Direction::Charge, &p, 30).unwrap();
        assert!(s.c_shell.iter().all(|c| *c == p.c_alpha()));
    }

    #[test]
    fn zero_offset_is_rejected() {
        let mut p = reference_parameters();
        p.epsilon_init_frac = 0.0;
        assert_eq!(
            enter_two_phase(Direction::Discharge, &p, 30),
            Err(ModelError::ZeroOffset)
        );
    }

    #[test]
    fn uniform_shell_exits_uniform() {
        let p = reference_parameters();
        let g = p.geometry().unwrap();
        let c = p.c_beta();
        let shell = ShellState::new(0.0, vec![c; 29], Direction::Discharge);
        let s = exit_two_phase(&shell, 0.0, &p, &g, 20).unwrap();
        for v in s.c_s_p {
            assert!((v / c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exit_conserves_lithium() {
        let p = reference_parameters();
        let g = p.geometry().unwrap();
        let c: Vec<f64> = (1..30).map(|l| p.c_beta() + 3.0 * (l * l) as f64).collect();
        let shell = ShellState::new(0.0008 * p.r_p, c, Direction::Discharge);
        let current = 4.0;
        let before = shell.lithium_moment(current, &p, &g);
        let after = exit_two_phase(&shell, current, &p, &g, 20).unwrap();
        let h = p.r_p / 19.0;
        let r: Vec<f64> = (0..20).map(|i| i as f64 * h).collect();
        let moment = sphere::moment_piecewise_linear(&r, &after.c_s_p);
        assert!((moment / before - 1.0).abs() < 1e-12);
        assert!(core_initial_condition(Direction::Discharge, &p) < p.c_beta());
    }

    #[test]
    fn exit_guard() {
        let p = reference_parameters();
        let g = p.geometry().unwrap();
        let shell = ShellState::new(0.5 * p.r_p, vec![p.c_beta(); 29], Direction::Discharge);
        assert!(matches!(
            exit_two_phase(&shell, 4.0, &p, &g, 20),
            Err(ModelError::ExitGuard(_))
        ));
    }
}
