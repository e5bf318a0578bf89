//! Full C/12 legs with the reference parameters: regime lifecycle, lithium
//! bookkeeping, flux identity and run-to-run determinism.

mod common;

use common::reference;
use espm::checks::{c12_leg, conservation_of};
use espm::positive::Direction;
use espm::sim::{CellModel, CurrentProfile, SimOptions, SimulationTrace};
use espm::SimError;

fn leg(direction: Direction) -> SimulationTrace {
    c12_leg(&reference(), direction, 60.0).expect("C/12 leg")
}

#[test]
fn discharge_lifecycle() {
    if let Err(e) = common::lifecycle(Direction::Discharge) {
        panic!("{e}");
    }
}

#[test]
fn charge_lifecycle() {
    if let Err(e) = common::lifecycle(Direction::Charge) {
        panic!("{e}");
    }
}

#[test]
fn lithium_bookkeeping_and_flux_identity() {
    let cfg = reference();
    for direction in [Direction::Discharge, Direction::Charge] {
        let trace = leg(direction);
        let r = conservation_of(&trace, &cfg, direction, 0.0);
        assert!(r.electrolyte_drift < 1e-6, "{r:?}");
        assert!(r.bookkeeping_n < 5e-3, "{r:?}");
        assert!(r.bookkeeping_p < 5e-3, "{r:?}");
        assert!(r.flux_identity < 1e-12, "{r:?}");
        // the negative particle has no regime switch and is conserved to
        // integrator accuracy
        assert!(r.bookkeeping_n < 1e-6, "{r:?}");
        // a full leg passes roughly one nominal capacity
        assert!((r.charge_ah / cfg.params.q_nom - 1.0).abs() < 0.05, "{r:?}");
    }
}

#[test]
fn repeated_runs_are_identical() {
    let a = leg(Direction::Discharge);
    let b = leg(Direction::Discharge);
    assert_eq!(a.voltage, b.voltage);
    assert_eq!(a.rp_over_rp, b.rp_over_rp);
}

#[test]
fn sign_reversal_inside_two_phase_is_rejected() {
    let cfg = reference();
    let model = CellModel::from_config(&cfg).unwrap();
    let init = model.initial_state(1.0, Direction::Discharge).unwrap();
    let i = cfg.params.q_nom / 12.0;
    // two-phase starts near 6800 s
    let profile = CurrentProfile {
        segments: vec![(0.0, i), (20000.0, -i)],
        ..CurrentProfile::constant(i, 30000.0)
    };
    let err = model
        .simulate(&profile, &init, &SimOptions::default())
        .unwrap_err();
    match err {
        SimError::SignReversal { t } => assert!((t - 20000.0).abs() < 1.0, "{t}"),
        other => panic!("{other}"),
    }
}

#[test]
fn voltage_cutoff_stops_discharge() {
    let cfg = reference();
    let model = CellModel::from_config(&cfg).unwrap();
    let init = model.initial_state(1.0, Direction::Discharge).unwrap();
    let profile =
        CurrentProfile::constant(cfg.params.q_nom / 12.0, 43200.0).with_cutoffs(Some(3.3), None);
    let trace = model
        .simulate(&profile, &init, &SimOptions::default())
        .unwrap();
    assert_eq!(
        trace.termination,
        Some(espm::sim::Termination::VoltageCutoff)
    );
    assert!((trace.voltage.last().unwrap() - 3.3).abs() < 1e-6);
    assert!(*trace.t.last().unwrap() < 43200.0);
}
