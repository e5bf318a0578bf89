//! Global-best particle swarm on the unit box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoSettings {
    pub swarm: usize,
    pub iterations: usize,
    pub seed: u64,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl Default for PsoSettings {
    fn default() -> Self {
        PsoSettings {
            swarm: 60,
            iterations: 200,
            seed: 1,
            inertia: 0.729,
            cognitive: 1.49,
            social: 1.49,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub history: Vec<HistoryEntry>,
    pub evaluations: usize,
}

/// Minimizes `f` over [0, 1]^dim.
///
/// All random numbers are drawn on the calling thread in a fixed order, and
/// the candidates of one generation are evaluated concurrently, so the result
/// depends only on the seed. Positions leaving the box are clamped and the
/// offending velocity component is zeroed.
pub fn minimize<F>(dim: usize, settings: &PsoSettings, f: F) -> PsoOutcome
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let swarm = settings.swarm.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut x: Vec<Vec<f64>> = (0..swarm)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..swarm)
        .map(|_| (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect())
        .collect();
    let evaluate = |pts: &[Vec<f64>]| -> Vec<f64> {
        pts.par_iter()
            .map(|p| {
                let value = f(p);
                if value.is_nan() {
                    f64::INFINITY
                } else {
                    value
                }
            })
            .collect()
    };
    let mut fx = evaluate(&x);
    let mut evaluations = swarm;
    let mut best_x = x.clone();
    let mut best_fx = fx.clone();
    let mut g = argmin(&best_fx);
    let mut history = vec![entry(0, &best_fx, &fx, g)];
    for iteration in 1..=settings.iterations {
        for i in 0..swarm {
            for d in 0..dim {
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                v[i][d] = settings.inertia * v[i][d]
                    + settings.cognitive * r1 * (best_x[i][d] - x[i][d])
                    + settings.social * r2 * (best_x[g][d] - x[i][d]);
                x[i][d] += v[i][d];
                if x[i][d] < 0.0 {
                    x[i][d] = 0.0;
                    v[i][d] = 0.0;
                } else if x[i][d] > 1.0 {
                    x[i][d] = 1.0;
                    v[i][d] = 0.0;
                }
            }
        }
        fx = evaluate(&x);
        evaluations += swarm;
        for i in 0..swarm {
            if fx[i] < best_fx[i] {
                best_fx[i] = fx[i];
                best_x[i].clone_from(&x[i]);
            }
        }
        g = argmin(&best_fx);
        history.push(entry(iteration, &best_fx, &fx, g));
    }
    PsoOutcome {
        best_x: best_x[g].clone(),
        best_f: best_fx[g],
        history,
        evaluations,
    }
}

/// Lowest value, first index on ties.
fn argmin(values: &[f64]) -> usize {
    let mut k = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[k] {
            k = i;
        }
    }
    k
}

fn entry(iteration: usize, best: &[f64], current: &[f64], g: usize) -> HistoryEntry {
    let finite: Vec<f64> = current.iter().copied().filter(|v| v.is_finite()).collect();
    let mean = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    HistoryEntry {
        iteration,
        best: best[g],
        mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum()
    }

    #[test]
    fn finds_minimum_of_a_bowl() {
        let s = PsoSettings {
            swarm: 20,
            iterations: 100,
            ..PsoSettings::default()
        };
        let out = minimize(4, &s, sphere);
        assert!(out.best_f < 1e-8, "{}", out.best_f);
        assert_eq!(out.evaluations, 20 * 101);
        assert_eq!(out.history.len(), 101);
    }

    #[test]
    fn history_is_monotone_and_deterministic() {
        let s = PsoSettings {
            swarm: 8,
            iterations: 15,
            seed: 7,
            ..PsoSettings::default()
        };
        let a = minimize(3, &s, sphere);
        let b = minimize(3, &s, sphere);
        assert_eq!(a, b);
        for w in a.history.windows(2) {
            assert!(w[1].best <= w[0].best);
        }
    }

    #[test]
    fn degenerate_swarm_returns_initial_candidate() {
        let s = PsoSettings {
            swarm: 1,
            iterations: 0,
            ..PsoSettings::default()
        };
        let out = minimize(2, &s, sphere);
        assert_eq!(out.evaluations, 1);
        assert_eq!(out.best_f, sphere(&out.best_x));
    }

    #[test]
    fn boundary_optimum_is_reached_by_clamping() {
        let s = PsoSettings {
            swarm: 10,
            iterations: 40,
            ..PsoSettings::default()
        };
        let out = minimize(2, &s, |x| -x[0] + x[1]);
        assert_eq!(out.best_x, vec![1.0, 0.0]);
    }
}
