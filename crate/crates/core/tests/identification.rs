//! Identification on synthetic data generated from the reference vector.

use std::sync::OnceLock;

use espm::config::reference_parameters;
use espm::identify::{
    evaluate, identify, twin_pair, Dataset, IdentificationProblem, PsoSettings, Sample,
    TwinSettings,
};
use espm::positive::Direction;
use espm::{CellConfig, Theta};

fn reference() -> CellConfig {
    CellConfig {
        params: reference_parameters(),
        model: Default::default(),
    }
}

fn twins() -> &'static Vec<Dataset> {
    static TWINS: OnceLock<Vec<Dataset>> = OnceLock::new();
    TWINS.get_or_init(|| {
        let cfg = reference();
        twin_pair(&cfg, &cfg.params.theta(), &TwinSettings::default()).unwrap()
    })
}

fn problem(datasets: Vec<Dataset>) -> IdentificationProblem {
    IdentificationProblem::new(reference(), datasets)
}

#[test]
fn twins_cover_a_full_leg_each_way() {
    let ds = twins();
    assert_eq!(ds[0].direction, Direction::Charge);
    assert_eq!(ds[1].direction, Direction::Discharge);
    for d in ds {
        assert_eq!(d.samples.len(), 361);
        let soc = d.soc_exp();
        // 12 h at C/12 of the nominal capacity
        assert!((soc.last().unwrap() - soc[0]).abs() > 0.99);
    }
}

#[test]
fn true_vector_is_feasible_and_fits_to_the_noise_level() {
    let p = problem(twins().clone());
    let e = evaluate(&reference_parameters().theta(), &p);
    assert!(e.feasible(), "{e:?}");
    assert_eq!(e.penalty, 0.0);
    for t in &e.terms {
        assert!(t.failure.is_none() && t.truncated.is_none(), "{t:?}");
        // 2 mV noise on ~3.3 V
        assert!((t.voltage - 0.002 / 3.3).abs() < 2e-4, "{t:?}");
        // coulomb counting uses Q_nom = 49 Ah, the negative electrode holds
        // 49.07 Ah: about 1.4e-3 at the end of a leg
        assert!(t.soc_n < 1e-3, "{t:?}");
    }
    assert!(e.cost < 0.02, "{}", e.cost);
}

#[test]
fn perturbed_vector_costs_more() {
    let p = problem(twins().clone());
    let truth = reference_parameters().theta();
    let base = evaluate(&truth, &p).cost;
    let k = Theta::index_of("theta_p_alpha").unwrap();
    let mut off = truth;
    off.0[k] -= 0.03;
    assert!(evaluate(&off, &p).cost > base);
}

/// Inserts the midpoint between consecutive samples, linear in voltage.
fn densify(ds: &Dataset) -> Dataset {
    let mut samples = Vec::with_capacity(2 * ds.samples.len());
    for w in ds.samples.windows(2) {
        samples.push(w[0]);
        samples.push(Sample {
            t: 0.5 * (w[0].t + w[1].t),
            current: w[0].current,
            voltage: 0.5 * (w[0].voltage + w[1].voltage),
        });
    }
    samples.push(*ds.samples.last().unwrap());
    Dataset::new(samples, ds.q_nom, ds.soc0).unwrap()
}

#[test]
fn cost_is_insensitive_to_doubling_the_sample_density() {
    let truth = reference_parameters().theta();
    let mut theta = truth;
    theta.0[Theta::index_of("R_l").unwrap()] *= 4.0;
    theta.0[Theta::index_of("theta_p_alpha").unwrap()] -= 0.02;
    let sparse = evaluate(&theta, &problem(twins().clone()));
    let dense = evaluate(&theta, &problem(twins().iter().map(densify).collect()));
    assert!(sparse.terms.iter().all(|t| t.truncated.is_none()));
    let (sparse, dense) = (sparse.cost, dense.cost);
    assert!((dense / sparse - 1.0).abs() < 0.01, "{sparse} {dense}");
}

fn small(seed: u64, swarm: usize, iterations: usize) -> IdentificationProblem {
    let mut p = problem(twins().clone());
    p.pso = PsoSettings {
        swarm,
        iterations,
        seed,
        ..PsoSettings::default()
    };
    p
}

#[test]
fn fixed_seed_gives_identical_results() {
    let a = identify(&small(7, 6, 2)).unwrap();
    let b = identify(&small(7, 6, 2)).unwrap();
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.to_json_string(), b.to_json_string());
    assert_eq!(a.evaluations, 18);
    assert!(a.history.windows(2).all(|w| w[1].best <= w[0].best));
    assert!(p_bounds_contain(&a.theta));
}

fn p_bounds_contain(theta: &Theta) -> bool {
    espm::identify::Bounds::reference().contains(theta)
}

#[test]
fn single_particle_without_iterations_returns_its_start() {
    let p = small(3, 1, 0);
    let r = identify(&p).unwrap();
    assert_eq!(r.evaluations, 1);
    assert_eq!(r.history.len(), 1);
    assert_eq!(r.history[0].best, r.evaluation.objective);
}
