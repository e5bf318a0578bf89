//! Identification of the parameter vector from charge/discharge data: a
//! penalized multi-objective cost minimized by particle swarm.

mod dataset;
mod pso;
mod twin;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::{CellConfig, Theta};
use crate::error::ConfigError;
use crate::positive::Direction;
use crate::sim::{CellModel, CurrentProfile, Sampling, SimOptions, SimulationTrace};

pub use dataset::{Dataset, DatasetError, Sample};
pub use pso::{minimize, HistoryEntry, PsoOutcome, PsoSettings};
pub use twin::{twin_dataset, twin_pair, TwinSettings};

/// Cost of a dataset whose simulation produced no sample at all.
pub const FAILURE_COST: f64 = 1e3;

/// Entries searched on a log10 scale (they span decades).
const LOG_SCALED: [bool; 12] = [
    true, true, false, true, true, false, false, false, false, false, false, false,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: Theta,
    pub upper: Theta,
}

impl Bounds {
    /// The published search box.
    pub fn reference() -> Self {
        Bounds {
            lower: Theta([
                1e-6, 1e-8, 1.41, 1e-15, 1e-18, 0.7, 1e-4, 0.05, 0.8, 0.1, 0.8, 1e-3,
            ]),
            upper: Theta([
                2e-5, 1e-5, 1.73, 1e-10, 1e-11, 0.95, 0.2, 0.15, 1.0, 0.2, 0.9, 0.1,
            ]),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (k, log) in LOG_SCALED.iter().enumerate() {
            let (lo, hi) = (self.lower.0[k], self.upper.0[k]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) || (*log && lo <= 0.0) {
                return Err(ConfigError::Bounds(format!(
                    "{}: [{lo}, {hi}]",
                    Theta::NAMES[k]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &Theta) -> bool {
        (0..12).all(|k| theta.0[k] >= self.lower.0[k] && theta.0[k] <= self.upper.0[k])
    }

    /// Maps a point of the unit box to parameter space.
    pub fn from_unit(&self, x: &[f64]) -> Theta {
        let mut t = [0.0; 12];
        for k in 0..12 {
            let (lo, hi) = (self.lower.0[k], self.upper.0[k]);
            let s = x[k].clamp(0.0, 1.0);
            t[k] = if LOG_SCALED[k] {
                10f64.powf(lo.log10() + s * (hi.log10() - lo.log10()))
            } else {
                lo + s * (hi - lo)
            }
            .clamp(lo, hi);
        }
        Theta(t)
    }

    pub fn to_unit(&self, theta: &Theta) -> Vec<f64> {
        (0..12)
            .map(|k| {
                let (lo, hi, v) = (self.lower.0[k], self.upper.0[k], theta.0[k]);
                let s = if LOG_SCALED[k] {
                    (v.log10() - lo.log10()) / (hi.log10() - lo.log10())
                } else {
                    (v - lo) / (hi - lo)
                };
                if s.is_finite() {
                    s
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Parses `{"R_n": [lo, hi], ...}`; names left out keep the reference box.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let map: BTreeMap<String, [f64; 2]> = serde_json::from_str(text)?;
        let mut b = Bounds::reference();
        for (name, [lo, hi]) in map {
            let k = Theta::index_of(&name)
                .ok_or_else(|| ConfigError::Bounds(format!("unknown parameter `{name}`")))?;
            b.lower.0[k] = lo;
            b.upper.0[k] = hi;
        }
        b.validate()?;
        Ok(b)
    }

    pub fn to_json_string(&self) -> String {
        let map: BTreeMap<&str, [f64; 2]> = (0..12)
            .map(|k| (Theta::NAMES[k], [self.lower.0[k], self.upper.0[k]]))
            .collect();
        serde_json::to_string_pretty(&map).expect("json")
    }

    /// Symbol, bounds, identified value and unit, one row per parameter.
    pub fn table_csv(&self, theta: &Theta) -> String {
        let mut out = String::from("symbol,lower_bound,upper_bound,identified,unit\n");
        for k in 0..12 {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{}\n",
                Theta::NAMES[k],
                self.lower.0[k],
                self.upper.0[k],
                theta.0[k],
                Theta::UNITS[k]
            ));
        }
        out
    }
}

/// Everything the cost needs: the cell (fixed parameters and numerics), the
/// data, the search box and the optimizer settings.
#[derive(Debug, Clone)]
pub struct IdentificationProblem {
    pub config: CellConfig,
    pub datasets: Vec<Dataset>,
    pub bounds: Bounds,
    pub weights: [f64; 3],
    /// Capacity window for both electrodes, Ah.
    pub q_bounds: (f64, f64),
    pub penalty_weight: f64,
    pub pso: PsoSettings,
    /// Integrator tolerances; the sampling is replaced by the dataset times.
    pub sim: SimOptions,
}

impl IdentificationProblem {
    /// Unit weights, capacity bounds at +/-10 % of the nominal capacity and
    /// penalty weight 1e2.
    pub fn new(config: CellConfig, datasets: Vec<Dataset>) -> Self {
        let q = config.params.q_nom;
        IdentificationProblem {
            config,
            datasets,
            bounds: Bounds::reference(),
            weights: [1.0; 3],
            q_bounds: (0.9 * q, 1.1 * q),
            penalty_weight: 1e2,
            pso: PsoSettings::default(),
            sim: SimOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.bounds.validate()?;
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(ConfigError::Bounds("weights must be non-negative".into()));
        }
        if !(self.q_bounds.0 <= self.q_bounds.1) || !(self.penalty_weight >= 0.0) {
            return Err(ConfigError::Bounds(
                "capacity bounds or penalty weight".into(),
            ));
        }
        if self.datasets.is_empty() {
            return Err(ConfigError::Bounds("no datasets".into()));
        }
        Ok(())
    }

    /// Model for a candidate vector.
    pub fn model(&self, theta: &Theta) -> Result<CellModel, ConfigError> {
        CellModel::new(
            self.config.params.with_theta(theta),
            self.config.model.clone(),
        )
    }

    /// Simulates dataset `k` with `theta`, sampled at the dataset times. A
    /// run cut short by a model error is returned with the error message.
    pub fn simulate(
        &self,
        theta: &Theta,
        k: usize,
    ) -> Result<(SimulationTrace, Option<String>), String> {
        let ds = &self.datasets[k];
        let model = self.model(theta).map_err(|e| e.to_string())?;
        let init = model
            .initial_state(ds.soc0, ds.direction)
            .map_err(|e| e.to_string())?;
        let last = ds.samples.last().map(|s| s.t).unwrap_or(0.0);
        let profile = CurrentProfile {
            segments: ds.current_schedule(),
            t_end: last,
            v_min: None,
            v_max: None,
            capacity_limit: None,
        };
        let opts = SimOptions {
            sampling: Sampling::Times(ds.times()),
            record_steps: false,
            ..self.sim.clone()
        };
        let (trace, err) = model.simulate_partial(&profile, &init, &opts);
        if trace.is_empty() {
            return Err(err.map_or_else(|| "no samples".to_string(), |e| e.to_string()));
        }
        Ok((trace, err.map(|e| e.to_string())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetCost {
    pub direction: Direction,
    /// RMS of the relative voltage error.
    pub voltage: f64,
    pub soc_n: f64,
    pub soc_p: f64,
    /// w1 voltage + w2 soc_n + w3 soc_p, or the failure cost.
    pub j: f64,
    /// Set when the run stopped early; later samples hold the last values.
    pub truncated: Option<String>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSlack {
    pub name: String,
    /// Non-negative when the constraint holds.
    pub slack: f64,
    pub scale: f64,
}

impl ConstraintSlack {
    /// Violation normalized by the constraint's natural scale.
    pub fn violation(&self) -> f64 {
        (-self.slack / self.scale).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub cost: f64,
    pub terms: Vec<DatasetCost>,
    pub constraints: Vec<ConstraintSlack>,
    pub penalty: f64,
    /// cost + penalty, the quantity the swarm minimizes.
    pub objective: f64,
}

impl Evaluation {
    pub fn feasible(&self) -> bool {
        self.constraints.iter().all(|c| c.violation() == 0.0)
            && self.terms.iter().all(|t| t.failure.is_none())
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Cost terms of one dataset against a (possibly short) trace.
pub fn dataset_cost(ds: &Dataset, trace: &SimulationTrace, weights: &[f64; 3]) -> DatasetCost {
    let soc_exp = ds.soc_exp();
    let last = trace.len() - 1;
    let at = |j: usize| j.min(last);
    let voltage = rms(ds
        .samples
        .iter()
        .enumerate()
        .map(|(j, s)| (s.voltage - trace.voltage[at(j)]) / s.voltage));
    let soc_n = rms(soc_exp
        .iter()
        .enumerate()
        .map(|(j, s)| s - trace.soc_n[at(j)]));
    let soc_p = rms(soc_exp
        .iter()
        .enumerate()
        .map(|(j, s)| s - trace.soc_p[at(j)]));
    DatasetCost {
        direction: ds.direction,
        voltage,
        soc_n,
        soc_p,
        j: weights[0] * voltage + weights[1] * soc_n + weights[2] * soc_p,
        truncated: None,
        failure: None,
    }
}

/// Cost, constraint slacks and penalty of a candidate vector.
pub fn evaluate(theta: &Theta, problem: &IdentificationProblem) -> Evaluation {
    let params = problem.config.params.with_theta(theta);
    let rho = params.rho_frac;
    let q_nom = params.q_nom;
    let mut terms = Vec::with_capacity(problem.datasets.len());
    let mut constraints = vec![
        ConstraintSlack {
            name: "theta_p_beta <= theta_p_0".into(),
            slack: params.theta_p_0 - params.theta_p_beta,
            scale: 1.0,
        },
        ConstraintSlack {
            name: "theta_p_alpha >= theta_p_100".into(),
            slack: params.theta_p_alpha - params.theta_p_100,
            scale: 1.0,
        },
    ];
    for (k, ds) in problem.datasets.iter().enumerate() {
        let label = match ds.direction {
            Direction::Charge => "charge",
            Direction::Discharge => "discharge",
        };
        match problem.simulate(theta, k) {
            Ok((trace, truncated)) => {
                let mut cost = dataset_cost(ds, &trace, &problem.weights);
                cost.truncated = truncated;
                terms.push(cost);
                let n = ds.samples.len();
                let rp: Vec<f64> = (0..n)
                    .map(|j| trace.rp_over_rp[j.min(trace.len() - 1)])
                    .collect();
                let interior = rp[..n - 1].iter().copied().fold(f64::INFINITY, f64::min);
                constraints.push(ConstraintSlack {
                    name: format!("{label}: r_p(j) >= 0, j < N"),
                    slack: if interior.is_finite() { interior } else { 0.0 },
                    scale: 1.0,
                });
                constraints.push(ConstraintSlack {
                    name: format!("{label}: r_p(N) <= rho"),
                    slack: rho - rp[n - 1],
                    scale: 1.0,
                });
            }
            Err(message) => {
                terms.push(DatasetCost {
                    direction: ds.direction,
                    voltage: 0.0,
                    soc_n: 0.0,
                    soc_p: 0.0,
                    j: FAILURE_COST,
                    truncated: None,
                    failure: Some(message),
                });
                constraints.push(ConstraintSlack {
                    name: format!("{label}: r_p(N) <= rho"),
                    slack: -1.0,
                    scale: 1.0,
                });
            }
        }
    }
    let (q_lo, q_hi) = problem.q_bounds;
    for (name, q) in [("Q_n", params.capacity_n()), ("Q_p", params.capacity_p())] {
        constraints.push(ConstraintSlack {
            name: format!("{name} >= Q_lower"),
            slack: q - q_lo,
            scale: q_nom,
        });
        constraints.push(ConstraintSlack {
            name: format!("{name} <= Q_upper"),
            slack: q_hi - q,
            scale: q_nom,
        });
    }
    let cost: f64 = terms.iter().map(|t| t.j).sum();
    let penalty = problem.penalty_weight
        * constraints
            .iter()
            .map(|c| c.violation() * c.violation())
            .sum::<f64>();
    Evaluation {
        cost,
        terms,
        constraints,
        penalty,
        objective: cost + penalty,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub theta: Theta,
    pub evaluation: Evaluation,
    pub history: Vec<HistoryEntry>,
    pub evaluations: usize,
}

impl IdentificationResult {
    pub fn feasible(&self) -> bool {
        self.evaluation.feasible()
    }

    /// JSON report: identified vector, cost breakdown, slacks, history.
    pub fn to_json_string(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            theta: BTreeMap<&'static str, f64>,
            cost: f64,
            penalty: f64,
            objective: f64,
            feasible: bool,
            terms: &'a [DatasetCost],
            constraints: Vec<SlackRow<'a>>,
            evaluations: usize,
            history: &'a [HistoryEntry],
        }
        #[derive(Serialize)]
        struct SlackRow<'a> {
            name: &'a str,
            slack: f64,
            violation: f64,
        }
        let report = Report {
            theta: (0..12)
                .map(|k| (Theta::NAMES[k], self.theta.0[k]))
                .collect(),
            cost: self.evaluation.cost,
            penalty: self.evaluation.penalty,
            objective: self.evaluation.objective,
            feasible: self.feasible(),
            terms: &self.evaluation.terms,
            constraints: self
                .evaluation
                .constraints
                .iter()
                .map(|c| SlackRow {
                    name: &c.name,
                    slack: c.slack,
                    violation: c.violation(),
                })
                .collect(),
            evaluations: self.evaluations,
            history: &self.history,
        };
        serde_json::to_string_pretty(&report).expect("json")
    }
}

/// Runs the swarm over the box and re-evaluates the best vector.
pub fn identify(problem: &IdentificationProblem) -> Result<IdentificationResult, ConfigError> {
    problem.validate()?;
    let outcome = minimize(12, &problem.pso, |x| {
        evaluate(&problem.bounds.from_unit(x), problem).objective
    });
    let theta = problem.bounds.from_unit(&outcome.best_x);
    let evaluation = evaluate(&theta, problem);
    Ok(IdentificationResult {
        theta,
        evaluation,
        history: outcome.history,
        evaluations: outcome.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::reference_parameters;

    #[test]
    fn unit_map_round_trips_and_respects_bounds() {
        let b = Bounds::reference();
        let theta = reference_parameters().theta();
        let back = b.from_unit(&b.to_unit(&theta));
        for k in 0..12 {
            assert!((back.0[k] / theta.0[k] - 1.0).abs() < 1e-12, "{k}");
        }
        assert_eq!(b.from_unit(&[0.0; 12]), b.lower);
        let top = b.from_unit(&[1.0; 12]);
        assert!(b.contains(&top));
        assert!(b.contains(&theta));
    }

    #[test]
    fn bounds_json() {
        let b = Bounds::from_json_str(r#"{"R_l": [0.002, 0.05]}"#).unwrap();
        assert_eq!(b.lower.0[11], 0.002);
        assert_eq!(b.lower.0[0], 1e-6);
        assert_eq!(Bounds::from_json_str(&b.to_json_string()).unwrap(), b);
        assert!(Bounds::from_json_str(r#"{"R_l": [0.1, 0.05]}"#).is_err());
        assert!(Bounds::from_json_str(r#"{"bogus": [0.1, 0.5]}"#).is_err());
    }

    #[test]
    fn constant_voltage_offset_cost() {
        let samples: Vec<Sample> = (0..50)
            .map(|k| Sample {
                t: 60.0 * k as f64,
                current: 4.0,
                voltage: 3.3,
            })
            .collect();
        let ds = Dataset::new(samples, 49.0, 0.9).unwrap();
        let soc = ds.soc_exp();
        let trace = SimulationTrace {
            voltage: vec![3.31; 50],
            soc_n: soc.clone(),
            soc_p: soc,
            t: ds.times(),
            ..SimulationTrace::default()
        };
        let c = dataset_cost(&ds, &trace, &[1.0; 3]);
        assert!((c.j - 0.01 / 3.3).abs() < 1e-12, "{}", c.j);
        let exact = SimulationTrace {
            voltage: vec![3.3; 50],
            ..trace.clone()
        };
        assert_eq!(dataset_cost(&ds, &exact, &[1.0; 3]).j, 0.0);
        // a short trace holds its last sample
        let short = SimulationTrace {
            voltage: vec![3.31; 10],
            soc_n: trace.soc_n[..10].to_vec(),
            soc_p: trace.soc_p[..10].to_vec(),
            t: trace.t[..10].to_vec(),
            ..SimulationTrace::default()
        };
        let c = dataset_cost(&ds, &short, &[1.0; 3]);
        assert!((c.voltage - 0.01 / 3.3).abs() < 1e-12);
        assert!(c.soc_n > 0.0);
    }

    #[test]
    fn reference_vector_satisfies_window_constraints() {
        let p = reference_parameters();
        let cfg = CellConfig {
            params: p.clone(),
            model: Default::default(),
        };
        let ds = Dataset::new(
            vec![
                Sample {
                    t: 0.0,
                    current: 4.0,
                    voltage: 3.3,
                },
                Sample {
                    t: 60.0,
                    current: 4.0,
                    voltage: 3.3,
                },
            ],
            49.0,
            1.0,
        )
        .unwrap();
        let problem = IdentificationProblem::new(cfg, vec![ds]);
        let e = evaluate(&p.theta(), &problem);
        assert!(e.constraints[0].slack > 0.0 && e.constraints[1].slack > 0.0);
        for c in e.constraints.iter().filter(|c| c.name.starts_with('Q')) {
            assert_eq!(c.violation(), 0.0, "{}", c.name);
        }
        // one minute of discharge never reaches the end of the plateau
        assert!(e.penalty > 0.0);
        assert!(!e.feasible());
    }
}
