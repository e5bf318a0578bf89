//! Finite-volume lithium transport in the electrolyte across the negative
//! electrode, separator and positive electrode, plus the transport
//! correlations and the closed-form electrolyte voltage terms.

use crate::config::{CellParameters, DerivedGeometry};
use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Negative,
    Separator,
    Positive,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Negative => "n",
            Region::Separator => "s",
            Region::Positive => "p",
        }
    }
}

/// Uniform volumes inside each region; x = 0 at the negative collector.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrolyteGrid {
    pub n_n: usize,
    pub n_s: usize,
    pub n_p: usize,
    pub x_centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub regions: Vec<Region>,
}

impl ElectrolyteGrid {
    pub fn new(p: &CellParameters, n_n: usize, n_s: usize, n_p: usize) -> Self {
        let mut widths = Vec::with_capacity(n_n + n_s + n_p);
        let mut regions = Vec::with_capacity(widths.capacity());
        for (count, length, region) in [
            (n_n, p.l_n, Region::Negative),
            (n_s, p.l_s, Region::Separator),
            (n_p, p.l_p, Region::Positive),
        ] {
            let w = length / count as f64;
            widths.extend(std::iter::repeat_n(w, count));
            regions.extend(std::iter::repeat_n(region, count));
        }
        let mut x_centers = Vec::with_capacity(widths.len());
        let mut left = 0.0;
        for w in &widths {
            x_centers.push(left + 0.5 * w);
            left += w;
        }
        ElectrolyteGrid {
            n_n,
            n_s,
            n_p,
            x_centers,
            widths,
            regions,
        }
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.widths.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrolyteState {
    pub c: Vec<f64>,
}

impl ElectrolyteState {
    pub fn uniform(grid: &ElectrolyteGrid, c0: f64) -> Self {
        ElectrolyteState {
            c: vec![c0; grid.len()],
        }
    }

    /// Width-weighted mean concentration over the whole cell.
    pub fn average(&self, grid: &ElectrolyteGrid) -> f64 {
        let total: f64 = self.c.iter().zip(&grid.widths).map(|(c, w)| c * w).sum();
        total / grid.total_length()
    }

    /// Total lithium per unit cell area, sum of width * porosity * c.
    pub fn inventory(&self, grid: &ElectrolyteGrid, geom: &DerivedGeometry) -> f64 {
        self.c
            .iter()
            .zip(&grid.widths)
            .zip(&grid.regions)
            .map(|((c, w), r)| c * w * porosity(geom, *r))
            .sum()
    }

    /// Concentrations linearly extrapolated to the two current collectors.
    pub fn collector_values(&self, grid: &ElectrolyteGrid) -> (f64, f64) {
        let n = self.c.len();
        let left = extrapolate(
            grid.x_centers[0],
            self.c[0],
            grid.x_centers[1],
            self.c[1],
            0.0,
        );
        let right = extrapolate(
            grid.x_centers[n - 2],
            self.c[n - 2],
            grid.x_centers[n - 1],
            self.c[n - 1],
            grid.total_length(),
        );
        (left, right)
    }
}

fn extrapolate(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

pub fn porosity(geom: &DerivedGeometry, region: Region) -> f64 {
    match region {
        Region::Negative => geom.eps_n,
        Region::Separator => geom.eps_s,
        Region::Positive => geom.eps_p,
    }
}

/// Temperature of the correlation pole at concentration `c`.
fn diffusivity_pole(c: f64) -> f64 {
    206.25 + 10.0 * c / 1000.0
}

/// Bulk electrolyte diffusivity D(c, T), m^2/s.
pub fn electrolyte_diffusivity(c: f64, temperature: f64) -> Result<f64, ModelError> {
    let pole = diffusivity_pole(c);
    if !(temperature > pole) {
        return Err(ModelError::OutOfDomain(format!(
            "electrolyte diffusivity needs T > {pole} K, got {temperature} K"
        )));
    }
    Ok(diffusivity_unchecked(c, temperature))
}

#[inline]
fn diffusivity_unchecked(c: f64, temperature: f64) -> f64 {
    let exponent = (-4.51 - 59.22 / (temperature - diffusivity_pole(c))) * c / 1000.0;
    1e-4 * 10f64.powf(exponent)
}

/// Bulk electrolyte conductivity kappa(c_avg), S/m.
pub fn electrolyte_conductivity(c_avg: f64) -> f64 {
    let x = c_avg / 1000.0;
    (x / 1.05).powf(0.68) * (-0.1 * (x - 1.05).powi(2) - 0.56 * (x - 1.05)).exp()
}

/// Thermodynamic factor v(c_avg, T) of the diffusion potential.
pub fn thermodynamic_factor(c_avg: f64, temperature: f64) -> f64 {
    let x = c_avg / 1000.0;
    0.601 - 0.24 * x.sqrt() + 0.982 * (1.0 - 0.0052 * (temperature - 293.0)) * x.powf(1.5)
}

/// Pore-wall molar flux per unit electrode volume in each region, mol/(m^3 s).
pub fn pore_wall_flux(p: &CellParameters, current: f64, region: Region) -> f64 {
    match region {
        Region::Negative => current / (p.a_cell * p.faraday * p.l_n),
        Region::Separator => 0.0,
        Region::Positive => -current / (p.a_cell * p.faraday * p.l_p),
    }
}

/// Precomputed per-volume constants for the electrolyte balance.
#[derive(Debug, Clone)]
pub struct ElectrolyteModel {
    pub grid: ElectrolyteGrid,
    eps: Vec<f64>,
    eps_brugg: Vec<f64>,
    temperature: f64,
    source_per_amp: Vec<f64>,
}

impl ElectrolyteModel {
    pub fn new(grid: ElectrolyteGrid, p: &CellParameters, geom: &DerivedGeometry) -> Self {
        let eps: Vec<f64> = grid.regions.iter().map(|r| porosity(geom, *r)).collect();
        let eps_brugg = eps.iter().map(|e| e.powf(p.brugg)).collect();
        let source_per_amp = grid
            .regions
            .iter()
            .zip(&eps)
            .map(|(r, e)| (1.0 - p.t_plus) * pore_wall_flux(p, 1.0, *r) / e)
            .collect();
        ElectrolyteModel {
            grid,
            eps,
            eps_brugg,
            temperature: p.temperature,
            source_per_amp,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// In-place right-hand side; no validation.
    pub fn rhs_into(&self, c: &[f64], current: f64, out: &mut [f64]) {
        let n = c.len();
        let w = &self.grid.widths;
        // resistance-like w_i / D_eff,i for the harmonic face average
        let mut prev_flux = 0.0;
        let mut prev_res =
            w[0] / (diffusivity_unchecked(c[0], self.temperature) * self.eps_brugg[0]);
        for i in 0..n {
            let flux_right = if i + 1 < n {
                let res = w[i + 1]
                    / (diffusivity_unchecked(c[i + 1], self.temperature) * self.eps_brugg[i + 1]);
                let f = 2.0 * (c[i + 1] - c[i]) / (prev_res + res);
                prev_res = res;
                f
            } else {
                0.0
            };
            out[i] =
                (flux_right - prev_flux) / (self.eps[i] * w[i]) + self.source_per_amp[i] * current;
            prev_flux = flux_right;
        }
    }

    pub fn inventory(&self, c: &[f64]) -> f64 {
        c.iter()
            .zip(&self.grid.widths)
            .zip(&self.eps)
            .map(|((c, w), e)| c * w * e)
            .sum()
    }
}

/// Time derivative of the volume-averaged concentrations.
///
/// Each volume satisfies eps_i dc/dt = div(D_eff grad c) + (1 - t+) J_i with
/// harmonic-mean face diffusivities and zero flux at both collectors.
pub fn assemble_electrolyte_rhs(
    state: &ElectrolyteState,
    grid: &ElectrolyteGrid,
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
) -> Result<Vec<f64>, ModelError> {
    for &c in &state.c {
        electrolyte_diffusivity(c, p.temperature)?;
    }
    let model = ElectrolyteModel::new(grid.clone(), p, geom);
    let mut out = vec![0.0; grid.len()];
    model.rhs_into(&state.c, current, &mut out);
    if let Some(index) = out.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite {
            block: "electrolyte",
            index,
        });
    }
    Ok(out)
}

/// Diffusion potential across the cell, V.
pub fn electrolyte_potential_drop(
    state: &ElectrolyteState,
    grid: &ElectrolyteGrid,
    p: &CellParameters,
) -> Result<f64, ModelError> {
    let (c_left, c_right) = state.collector_values(grid);
    if !(c_left > 0.0) {
        return Err(ModelError::BoundaryConcentration("negative"));
    }
    if !(c_right > 0.0) {
        return Err(ModelError::BoundaryConcentration("positive"));
    }
    let v = thermodynamic_factor(state.average(grid), p.temperature);
    Ok(2.0 * p.thermal_voltage() * v * (c_right / c_left).ln())
}

/// Lumped electrolyte resistance, Ohm.
pub fn electrolyte_resistance(
    state: &ElectrolyteState,
    grid: &ElectrolyteGrid,
    p: &CellParameters,
    geom: &DerivedGeometry,
) -> Result<f64, ModelError> {
    let kappa = electrolyte_conductivity(state.average(grid));
    resistance_from_conductivities(
        p,
        [
            kappa * geom.eps_n.powf(p.brugg),
            kappa * geom.eps_s.powf(p.brugg),
            kappa * geom.eps_p.powf(p.brugg),
        ],
    )
}

/// R_el from effective conductivities of the (n, s, p) regions.
pub fn resistance_from_conductivities(
    p: &CellParameters,
    kappa_eff: [f64; 3],
) -> Result<f64, ModelError> {
    for (k, region) in kappa_eff.iter().zip(["n", "s", "p"]) {
        if !(*k > 0.0) {
            return Err(ModelError::ZeroConductivity(region));
        }
    }
    Ok(
        (p.l_n / kappa_eff[0] + 2.0 * p.l_s / kappa_eff[1] + p.l_p / kappa_eff[2])
            / (2.0 * p.a_cell),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::reference_parameters;
    use approx::assert_relative_eq;

    fn setup() -> (CellParameters, DerivedGeometry, ElectrolyteGrid) {
        let p = reference_parameters();
        let g = p.geometry().unwrap();
        let grid = ElectrolyteGrid::new(&p, 10, 10, 10);
        (p, g, grid)
    }

    #[test]
    fn grid_widths_sum_to_cell_length() {
        let (p, _, grid) = setup();
        let l = p.l_n + p.l_s + p.l_p;
        assert!((grid.total_length() - l).abs() / l < 1e-12);
        assert_eq!(grid.regions[10], Region::Separator);
    }

    #[test]
    fn diffusivity_values() {
        // (-4.51 - 59.22 / 81.9) = -5.233077 -> 1e-4 * 10^-5.233077
        let d = electrolyte_diffusivity(1000.0, 298.15).unwrap();
        assert_relative_eq!(d, 5.8463e-10, max_relative = 1e-4);
        let d0 = electrolyte_diffusivity(1e-12, 298.15).unwrap();
        assert_relative_eq!(d0, 1e-4, max_relative = 1e-12);
        assert!(electrolyte_diffusivity(1000.0, 216.25).is_err());
        assert!(electrolyte_diffusivity(1000.0, 200.0).is_err());
    }

    #[test]
    fn conductivity_values() {
        assert_relative_eq!(electrolyte_conductivity(1050.0), 1.0, max_relative = 1e-15);
        // 2^0.68 * exp(-0.1 * 1.05^2 - 0.56 * 1.05)
        let expected = 2f64.powf(0.68) * (-0.110_25f64 - 0.588).exp();
        assert_relative_eq!(
            electrolyte_conductivity(2100.0),
            expected,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            electrolyte_conductivity(2100.0),
            0.79699,
            max_relative = 1e-4
        );
    }

    #[test]
    fn thermodynamic_factor_values() {
        assert_relative_eq!(
            thermodynamic_factor(1000.0, 293.0),
            1.343,
            max_relative = 1e-14
        );
        assert_eq!(thermodynamic_factor(0.0, 350.0), 0.601);
        assert_relative_eq!(
            thermodynamic_factor(1000.0, 313.0),
            1.240872,
            max_relative = 1e-12
        );
    }

    #[test]
    fn equilibrium_rhs_is_zero() {
        let (p, g, grid) = setup();
        let s = ElectrolyteState::uniform(&grid, 1000.0);
        let rhs = assemble_electrolyte_rhs(&s, &grid, 0.0, &p, &g).unwrap();
        assert!(rhs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sources_cancel_in_total_mass() {
        let (p, g, grid) = setup();
        let s = ElectrolyteState {
            c: (0..grid.len()).map(|i| 900.0 + 7.0 * i as f64).collect(),
        };
        let model = ElectrolyteModel::new(grid.clone(), &p, &g);
        for current in [-4.083, 4.083, 49.0] {
            let rhs = assemble_electrolyte_rhs(&s, &grid, current, &p, &g).unwrap();
            let rate = model.inventory(&rhs);
            let scale: f64 = rhs
                .iter()
                .zip(&grid.widths)
                .map(|(r, w)| (r * w).abs())
                .sum();
            assert!(rate.abs() <= 1e-13 * scale, "{rate} vs {scale}");
        }
    }

    #[test]
    fn potential_drop() {
        let (p, _, grid) = setup();
        let s = ElectrolyteState::uniform(&grid, 1000.0);
        assert_eq!(electrolyte_potential_drop(&s, &grid, &p).unwrap(), 0.0);

        // linear profile with c(L)/c(0) = e after extrapolation
        let l = grid.total_length();
        let c0 = 600.0;
        let c_l = c0 * std::f64::consts::E;
        let s = ElectrolyteState {
            c: grid
                .x_centers
                .iter()
                .map(|x| c0 + (c_l - c0) * x / l)
                .collect(),
        };
        let mut q = p.clone();
        q.temperature = 298.15;
        let v = thermodynamic_factor(s.average(&grid), q.temperature);
        let expected = 2.0 * q.r_gas * q.temperature * v / q.faraday;
        let got = electrolyte_potential_drop(&s, &grid, &q).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-9);
        // the hand value with v = 1.343
        assert_relative_eq!(
            2.0 * 8.314 * 298.15 * 1.343 / 96485.0,
            0.0690,
            max_relative = 2e-3
        );

        let s = ElectrolyteState {
            c: grid.x_centers.iter().map(|x| 1100.0 - 0.5e6 * x).collect(),
        };
        assert!(electrolyte_potential_drop(&s, &grid, &p).unwrap() < 0.0);
    }

    #[test]
    fn resistance_values() {
        let mut p = reference_parameters();
        p.l_n = 1e-4;
        p.l_s = 1e-4;
        p.l_p = 1e-4;
        p.a_cell = 1.491;
        let r = resistance_from_conductivities(&p, [1.0; 3]).unwrap();
        assert_relative_eq!(r, 4e-4 / (2.0 * 1.491), max_relative = 1e-15);
        assert_relative_eq!(r, 1.342e-4, max_relative = 1e-3);
        let mut q = p.clone();
        q.a_cell *= 2.0;
        assert_eq!(
            resistance_from_conductivities(&q, [1.0; 3]).unwrap(),
            r / 2.0
        );
        assert!(matches!(
            resistance_from_conductivities(&p, [1.0, 0.0, 1.0]),
            Err(ModelError::ZeroConductivity("s"))
        ));
    }

    #[test]
    fn non_finite_rhs_reports_index() {
        let (p, g, grid) = setup();
        let mut s = ElectrolyteState::uniform(&grid, 1000.0);
        s.c[4] = f64::NAN;
        // NaN fails the domain check first
        assert!(assemble_electrolyte_rhs(&s, &grid, 1.0, &p, &g).is_err());
        s.c[4] = 1000.0;
        let err = assemble_electrolyte_rhs(&s, &grid, f64::INFINITY, &p, &g).unwrap_err();
        assert_eq!(
            err,
            ModelError::NonFinite {
                block: "electrolyte",
                index: 0
            }
        );
    }
}
