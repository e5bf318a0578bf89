//! Discretization checks against independent references: a fine-grid
//! fixed-domain solver for the frozen shell, the short-time sphere solution
//! for the negative particle, and the matrix form of the shell equations.

mod common;

use common::frozen_shell_error;
use espm::config::{reference_parameters, CellParameters, ShellStencil};
use espm::positive::{assemble_shell_rhs, Direction, ShellModel, ShellState};
use nalgebra::DVector;
use proptest::prelude::*;

#[test]
fn frozen_shell_matches_fine_fixed_domain_solution() {
    let options = espm::ModelOptions::default();
    let e = frozen_shell_error(options.shell_stencil, options.n_r);
    assert!(e < 5e-3, "{e}");
}

#[test]
fn frozen_shell_error_is_first_order_in_both_stencils() {
    // the one-sided surface closure limits both schemes to first order
    for stencil in [ShellStencil::RightSided, ShellStencil::SecondOrder] {
        let coarse = frozen_shell_error(stencil, 30);
        let fine = frozen_shell_error(stencil, 60);
        let ratio = coarse / fine;
        assert!((1.8..2.3).contains(&ratio), "{stencil:?}: {coarse} {fine}");
    }
    assert!(
        frozen_shell_error(ShellStencil::SecondOrder, 30)
            < frozen_shell_error(ShellStencil::RightSided, 30)
    );
}

#[test]
fn negative_particle_short_time_matches_half_space() {
    let (simulated, half_space, corrected) = common::negative_short_time(801);
    let rel = (simulated / half_space - 1.0).abs();
    assert!(rel < 0.02, "{simulated} vs {half_space}: {rel}");
    // the leading curvature correction G D t / R accounts for most of the gap
    assert!((simulated / corrected - 1.0).abs() < 0.25 * rel);
}

fn matrix_vs_nodal(p: &CellParameters, shell: &ShellState, current: f64) -> f64 {
    let geom = p.geometry().unwrap();
    let model = ShellModel::new(p, &geom, ShellStencil::RightSided);
    let (dr, dc) = assemble_shell_rhs(shell, current, p, &geom, ShellStencil::RightSided).unwrap();
    let ss = model.state_space(shell).unwrap();
    let mut x = DVector::zeros(shell.c_shell.len() + 1);
    x[0] = shell.r_p;
    for (l, v) in shell.c_shell.iter().enumerate() {
        x[l + 1] = *v;
    }
    let m = ss.rhs(&x, current);
    // normwise: the boundary row is a difference of two nearly equal terms
    // when the first node sits close to g
    let k = model
        .coefficients(shell.r_p, &shell.c_shell, shell.direction)
        .unwrap();
    let mut worst = (m[0] - dr).abs() / (k.eta4.abs() * p.c_s_p_max);
    let scale = dc.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (l, v) in dc.iter().enumerate() {
        worst = worst.max((m[l + 1] - v).abs() / scale);
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn matrix_form_equals_nodal_rhs(
        rp in 0.02f64..0.98,
        current in -20.0f64..20.0,
        discharge in any::<bool>(),
        n in 3usize..80,
        seed in prop::collection::vec(0.05f64..0.95, 79),
    ) {
        let p = reference_parameters();
        let direction = if discharge { Direction::Discharge } else { Direction::Charge };
        let c: Vec<f64> = seed[..n - 1].iter().map(|s| s * p.c_s_p_max).collect();
        let shell = ShellState::new(rp * p.r_p, c, direction);
        let e = matrix_vs_nodal(&p, &shell, current);
        prop_assert!(e < 1e-14, "{}", e);
    }
}

#[test]
fn matrix_check_helper_agrees() {
    let e = espm::checks::matrix_equivalence(&common::reference(), 100, 3).unwrap();
    assert!(e < 1e-14, "{e}");
}
