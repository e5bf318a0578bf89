//! Cell parameters, derived geometry and JSON configuration ingestion.
//!
//! All quantities are SI. The configuration file is a flat JSON object whose
//! keys are the parameter names (`R_n`, `theta_p_alpha`, ...) plus an optional
//! `model` object carrying grid sizes and model switches. Unknown keys are
//! rejected in both places.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::ConfigError;

pub const FARADAY: f64 = 96485.33212;
pub const GAS_CONSTANT: f64 = 8.314462618;

fn default_temperature() -> f64 {
    298.15
}
fn default_faraday() -> f64 {
    FARADAY
}
fn default_gas_constant() -> f64 {
    GAS_CONSTANT
}
fn default_offset_frac() -> f64 {
    0.001
}

/// Geometric, transport, stoichiometric, kinetic and phase constants of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellParameters {
    #[serde(rename = "R_n")]
    pub r_n: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    #[serde(rename = "L_n")]
    pub l_n: f64,
    #[serde(rename = "L_s")]
    pub l_s: f64,
    #[serde(rename = "L_p")]
    pub l_p: f64,
    #[serde(rename = "A_cell")]
    pub a_cell: f64,
    #[serde(rename = "D_s_n")]
    pub d_s_n: f64,
    #[serde(rename = "D_s_p")]
    pub d_s_p: f64,
    pub c_s_n_max: f64,
    pub c_s_p_max: f64,
    pub nu_n: f64,
    pub nu_p: f64,
    pub nu_n_filler: f64,
    pub nu_p_filler: f64,
    /// Separator porosity.
    pub eps_s: f64,
    pub brugg: f64,
    pub t_plus: f64,
    pub c0_electrolyte: f64,
    pub theta_n_100: f64,
    pub theta_n_0: f64,
    pub theta_p_100: f64,
    pub theta_p_0: f64,
    pub theta_p_alpha: f64,
    pub theta_p_beta: f64,
    pub k_n: f64,
    pub k_p: f64,
    #[serde(rename = "R_l")]
    pub r_l: f64,
    #[serde(rename = "T", default = "default_temperature")]
    pub temperature: f64,
    #[serde(rename = "F", default = "default_faraday")]
    pub faraday: f64,
    #[serde(rename = "R_gas", default = "default_gas_constant")]
    pub r_gas: f64,
    #[serde(rename = "Q_nom")]
    pub q_nom: f64,
    #[serde(default = "default_offset_frac")]
    pub epsilon_init_frac: f64,
    #[serde(default = "default_offset_frac")]
    pub rho_frac: f64,
}

/// Active surface areas and porosities that follow from [`CellParameters`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedGeometry {
    pub a_n: f64,
    pub a_p: f64,
    pub eps_n: f64,
    pub eps_s: f64,
    pub eps_p: f64,
}

pub fn derive_geometry(p: &CellParameters) -> Result<DerivedGeometry, ConfigError> {
    let eps_n = 1.0 - p.nu_n - p.nu_n_filler;
    let eps_p = 1.0 - p.nu_p - p.nu_p_filler;
    for (region, value) in [("n", eps_n), ("s", p.eps_s), ("p", eps_p)] {
        if !(value > 0.0 && value < 1.0) {
            return Err(ConfigError::Porosity { region, value });
        }
    }
    Ok(DerivedGeometry {
        a_n: 3.0 * p.nu_n / p.r_n,
        a_p: 3.0 * p.nu_p / p.r_p,
        eps_n,
        eps_s: p.eps_s,
        eps_p,
    })
}

impl CellParameters {
    pub fn geometry(&self) -> Result<DerivedGeometry, ConfigError> {
        derive_geometry(self)
    }

    /// Boundary offset at two-phase entry, m.
    pub fn epsilon(&self) -> f64 {
        self.epsilon_init_frac * self.r_p
    }

    /// Terminal boundary threshold, m.
    pub fn rho(&self) -> f64 {
        self.rho_frac * self.r_p
    }

    pub fn c_alpha(&self) -> f64 {
        self.theta_p_alpha * self.c_s_p_max
    }

    pub fn c_beta(&self) -> f64 {
        self.theta_p_beta * self.c_s_p_max
    }

    /// Electrode capacity from the stoichiometric window, Ah.
    pub fn capacity_n(&self) -> f64 {
        self.nu_n
            * self.faraday
            * self.l_n
            * self.a_cell
            * self.c_s_n_max
            * (self.theta_n_100 - self.theta_n_0).abs()
            / 3600.0
    }

    pub fn capacity_p(&self) -> f64 {
        self.nu_p
            * self.faraday
            * self.l_p
            * self.a_cell
            * self.c_s_p_max
            * (self.theta_p_100 - self.theta_p_0).abs()
            / 3600.0
    }

    pub fn thermal_voltage(&self) -> f64 {
        self.r_gas * self.temperature / self.faraday
    }

    /// Full validation, including the stoichiometric orderings that keep the
    /// plateau inside the positive window.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_physical()?;
        if self.theta_p_100 > self.theta_p_alpha {
            return Err(ConfigError::invariant(
                "theta_p_alpha",
                "theta_p_100 <= theta_p_alpha",
            ));
        }
        if self.theta_p_beta > self.theta_p_0 {
            return Err(ConfigError::invariant(
                "theta_p_beta",
                "theta_p_beta <= theta_p_0",
            ));
        }
        Ok(())
    }

    /// Checks everything a simulation needs to be well posed. The window
    /// orderings (b) and (c) of the identification problem are left out so
    /// that candidate vectors violating them can still be simulated and
    /// penalized.
    pub fn validate_physical(&self) -> Result<(), ConfigError> {
        let positive: [(&'static str, f64); 18] = [
            ("R_n", self.r_n),
            ("R_p", self.r_p),
            ("L_n", self.l_n),
            ("L_s", self.l_s),
            ("L_p", self.l_p),
            ("A_cell", self.a_cell),
            ("D_s_n", self.d_s_n),
            ("D_s_p", self.d_s_p),
            ("c_s_n_max", self.c_s_n_max),
            ("c_s_p_max", self.c_s_p_max),
            ("brugg", self.brugg),
            ("c0_electrolyte", self.c0_electrolyte),
            ("k_n", self.k_n),
            ("k_p", self.k_p),
            ("T", self.temperature),
            ("F", self.faraday),
            ("R_gas", self.r_gas),
            ("Q_nom", self.q_nom),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::invariant(field, format!("{field} > 0")));
            }
        }
        if !(self.r_l.is_finite() && self.r_l >= 0.0) {
            return Err(ConfigError::invariant("R_l", "R_l >= 0"));
        }
        for (field, value) in [("nu_n", self.nu_n), ("nu_p", self.nu_p)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(ConfigError::invariant(field, format!("0 < {field} < 1")));
            }
        }
        for (field, value) in [
            ("nu_n_filler", self.nu_n_filler),
            ("nu_p_filler", self.nu_p_filler),
        ] {
            if !(0.0..1.0).contains(&value) {
                return Err(ConfigError::invariant(field, format!("0 <= {field} < 1")));
            }
        }
        if !(self.t_plus >= 0.0 && self.t_plus < 1.0) {
            return Err(ConfigError::invariant("t_plus", "0 <= t_plus < 1"));
        }
        if !(self.theta_n_0 > 0.0) {
            return Err(ConfigError::invariant("theta_n_0", "0 < theta_n_0"));
        }
        if !(self.theta_n_0 < self.theta_n_100) {
            return Err(ConfigError::invariant(
                "theta_n_100",
                "theta_n_0 < theta_n_100",
            ));
        }
        if !(self.theta_n_100 < 1.0) {
            return Err(ConfigError::invariant("theta_n_100", "theta_n_100 < 1"));
        }
        if !(self.theta_p_100 > 0.0) {
            return Err(ConfigError::invariant("theta_p_100", "0 < theta_p_100"));
        }
        if !(self.theta_p_alpha < self.theta_p_beta) {
            return Err(ConfigError::invariant(
                "theta_p_alpha",
                "theta_p_alpha < theta_p_beta",
            ));
        }
        if !(self.theta_p_100 < self.theta_p_0) {
            return Err(ConfigError::invariant(
                "theta_p_0",
                "theta_p_100 < theta_p_0",
            ));
        }
        if !(self.theta_p_0 < 1.0) {
            return Err(ConfigError::invariant("theta_p_0", "theta_p_0 < 1"));
        }
        if !(self.theta_p_alpha > 0.0 && self.theta_p_beta < 1.0) {
            return Err(ConfigError::invariant(
                "theta_p_alpha",
                "0 < theta_p_alpha < theta_p_beta < 1",
            ));
        }
        for (field, value) in [
            ("epsilon_init_frac", self.epsilon_init_frac),
            ("rho_frac", self.rho_frac),
        ] {
            if !(value > 0.0 && value <= 0.01) {
                return Err(ConfigError::invariant(
                    field,
                    format!("0 < {field} <= 0.01"),
                ));
            }
        }
        derive_geometry(self)?;
        Ok(())
    }

    pub fn theta(&self) -> Theta {
        Theta([
            self.r_n,
            self.r_p,
            self.a_cell,
            self.d_s_n,
            self.d_s_p,
            self.theta_n_100,
            self.theta_n_0,
            self.theta_p_100,
            self.theta_p_0,
            self.theta_p_alpha,
            self.theta_p_beta,
            self.r_l,
        ])
    }

    pub fn with_theta(&self, theta: &Theta) -> CellParameters {
        let t = &theta.0;
        CellParameters {
            r_n: t[0],
            r_p: t[1],
            a_cell: t[2],
            d_s_n: t[3],
            d_s_p: t[4],
            theta_n_100: t[5],
            theta_n_0: t[6],
            theta_p_100: t[7],
            theta_p_0: t[8],
            theta_p_alpha: t[9],
            theta_p_beta: t[10],
            r_l: t[11],
            ..self.clone()
        }
    }
}

/// The identifiable parameter vector, in the fixed order of [`Theta::NAMES`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta(pub [f64; 12]);

impl Theta {
    pub const NAMES: [&'static str; 12] = [
        "R_n",
        "R_p",
        "A_cell",
        "D_s_n",
        "D_s_p",
        "theta_n_100",
        "theta_n_0",
        "theta_p_100",
        "theta_p_0",
        "theta_p_alpha",
        "theta_p_beta",
        "R_l",
    ];
    pub const UNITS: [&'static str; 12] = [
        "m", "m", "m^2", "m^2/s", "m^2/s", "-", "-", "-", "-", "-", "-", "Ohm",
    ];

    pub fn index_of(name: &str) -> Option<usize> {
        Self::NAMES.iter().position(|n| *n == name)
    }
}

/// Which stoichiometry fires the one-phase to two-phase transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransitionTrigger {
    #[default]
    Surface,
    Bulk,
}

/// Difference scheme of the shell equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShellStencil {
    /// Forward difference for the first derivative and a two-point gradient
    /// at the moving boundary; first order in the chi spacing. This is the
    /// scheme of the matrix form.
    RightSided,
    /// Central first derivative in the interior and a three-point one-sided
    /// gradient at the moving boundary. The surface closure is unchanged.
    /// Loses about a quarter as much lithium as `RightSided` at equal N_r.
    #[default]
    SecondOrder,
}

/// Negative-electrode open-circuit potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NegativeOcp {
    /// Graphite fit of Safari & Delacourt, J. Electrochem. Soc. 158 (2011) A562.
    #[default]
    SafariDelacourt,
    /// Piecewise-linear table, stoichiometry ascending.
    Table { theta: Vec<f64>, volts: Vec<f64> },
}

fn d10() -> usize {
    10
}
fn d20() -> usize {
    20
}
fn d60() -> usize {
    60
}

/// Discretization sizes and model switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOptions {
    /// Electrolyte finite volumes per region.
    #[serde(default = "d10")]
    pub n_n: usize,
    #[serde(default = "d10")]
    pub n_s: usize,
    #[serde(default = "d10")]
    pub n_p: usize,
    /// Radial nodes of the negative particle.
    #[serde(rename = "N_rn", default = "d20")]
    pub n_rn: usize,
    /// Radial nodes of the positive particle in the one-phase regimes.
    #[serde(rename = "N_rp", default = "d20")]
    pub n_rp: usize,
    /// Shell grid parameter: the chi-grid has nodes 0..=N_r.
    #[serde(rename = "N_r", default = "d60")]
    pub n_r: usize,
    #[serde(default)]
    pub ocp_negative: NegativeOcp,
    #[serde(default)]
    pub transition_trigger: TransitionTrigger,
    #[serde(default)]
    pub shell_stencil: ShellStencil,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            n_n: 10,
            n_s: 10,
            n_p: 10,
            n_rn: 20,
            n_rp: 20,
            n_r: 60,
            ocp_negative: NegativeOcp::default(),
            transition_trigger: TransitionTrigger::default(),
            shell_stencil: ShellStencil::default(),
        }
    }
}

impl ModelOptions {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value, min) in [
            ("n_n", self.n_n, 3),
            ("n_s", self.n_s, 3),
            ("n_p", self.n_p, 3),
            ("N_rn", self.n_rn, 5),
            ("N_rp", self.n_rp, 5),
            ("N_r", self.n_r, 3),
        ] {
            if value < min {
                return Err(ConfigError::invariant(field, format!("{field} >= {min}")));
            }
        }
        if let NegativeOcp::Table { theta, volts } = &self.ocp_negative {
            if theta.len() < 2 || theta.len() != volts.len() {
                return Err(ConfigError::invariant(
                    "ocp_negative",
                    "table needs >= 2 matching theta/volts entries",
                ));
            }
            if theta.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ConfigError::invariant(
                    "ocp_negative",
                    "table theta strictly increasing",
                ));
            }
        }
        Ok(())
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    pub params: CellParameters,
    pub model: ModelOptions,
}

const MODEL_KEY: &str = "model";
const MODEL_FIELDS: [&str; 9] = [
    "n_n",
    "n_s",
    "n_p",
    "N_rn",
    "N_rp",
    "N_r",
    "ocp_negative",
    "transition_trigger",
    "shell_stencil",
];

impl CellConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_json_with_overrides(text, &[])
    }

    /// Parses `text` after applying `key=value` overrides. Keys naming a model
    /// option (`N_r`, `n_s`, ...) go into the `model` object, everything else
    /// replaces a top-level parameter.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut root: Map<String, Value> = serde_json::from_str(text)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| ConfigError::Override(item.clone()))?;
            let key = key.trim();
            let raw = raw.trim();
            let value: Value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            if MODEL_FIELDS.contains(&key) {
                let model = root
                    .entry(MODEL_KEY)
                    .or_insert_with(|| Value::Object(Map::new()));
                match model {
                    Value::Object(m) => {
                        m.insert(key.to_string(), value);
                    }
                    _ => return Err(ConfigError::Override(item.clone())),
                }
            } else {
                root.insert(key.to_string(), value);
            }
        }
        let model = match root.remove(MODEL_KEY) {
            Some(v) => serde_json::from_value(v)?,
            None => ModelOptions::default(),
        };
        let params: CellParameters = serde_json::from_value(Value::Object(root))?;
        params.validate()?;
        model.validate()?;
        Ok(CellConfig { params, model })
    }

    pub fn to_json_string(&self) -> String {
        let mut root = match serde_json::to_value(&self.params) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("parameters serialize to an object"),
        };
        root.insert(
            MODEL_KEY.to_string(),
            serde_json::to_value(&self.model).expect("model options serialize"),
        );
        serde_json::to_string_pretty(&Value::Object(root)).expect("json")
    }
}

pub fn load_config(path: &Path) -> Result<CellConfig, ConfigError> {
    load_config_with_overrides(path, &[])
}

pub fn load_config_with_overrides(
    path: &Path,
    overrides: &[String],
) -> Result<CellConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    CellConfig::from_json_with_overrides(&text, overrides)
}

/// Reference LFP/graphite cell: the identified vector of the 49 Ah pouch cell
/// plus literature values for the quantities it does not fix (electrode
/// thicknesses and fractions sized so both electrode windows hold ~49 Ah,
/// graphite/LFP maximum concentrations, LiPF6 electrolyte constants).
pub fn reference_parameters() -> CellParameters {
    CellParameters {
        r_n: 1.0e-6,
        r_p: 4.3e-8,
        l_n: 8.85e-5,
        l_s: 2.5e-5,
        l_p: 1.325e-4,
        a_cell: 1.491,
        d_s_n: 6.9e-12,
        d_s_p: 3.1e-17,
        c_s_n_max: 30555.0,
        c_s_p_max: 22800.0,
        nu_n: 0.55,
        nu_p: 0.5,
        nu_n_filler: 0.05,
        nu_p_filler: 0.1,
        eps_s: 0.45,
        brugg: 1.5,
        t_plus: 0.38,
        c0_electrolyte: 1000.0,
        theta_n_100: 0.835,
        theta_n_0: 0.010,
        theta_p_100: 0.070,
        theta_p_0: 0.882,
        theta_p_alpha: 0.198,
        theta_p_beta: 0.800,
        k_n: 1.0e-11,
        k_p: 1.0e-11,
        r_l: 0.001,
        temperature: 298.15,
        faraday: FARADAY,
        r_gas: GAS_CONSTANT,
        q_nom: 49.0,
        epsilon_init_frac: 0.001,
        rho_frac: 0.001,
    }
}
