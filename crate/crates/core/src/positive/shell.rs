use nalgebra::{DMatrix, DVector};

use super::{boundary_concentration, core_initial_condition, Direction};
use crate::config::{CellParameters, DerivedGeometry, ShellStencil};
use crate::error::ModelError;
use crate::sphere;

/// Two-phase positive particle: moving boundary r_p and the shell
/// concentrations on the interior nodes of the uniform chi-grid.
///
/// The grid has nodes chi_l = l / N_r for l = 0..=N_r. Node 0 sits on the
/// boundary and carries g(I); node N_r sits on the surface and is
/// reconstructed from the flux condition. Only nodes 1..N_r-1 are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellState {
    pub r_p: f64,
    pub c_shell: Vec<f64>,
    /// Direction that created the shell; fixes g and the core composition
    /// for as long as the two-phase regime lasts.
    pub direction: Direction,
}

impl ShellState {
    pub fn new(r_p: f64, c_shell: Vec<f64>, direction: Direction) -> Self {
        ShellState {
            r_p,
            c_shell,
            direction,
        }
    }

    /// Number of chi-intervals N_r.
    pub fn intervals(&self) -> usize {
        self.c_shell.len() + 1
    }

    /// All N_r + 1 chi-grid nodes as (r, c) pairs, including the boundary
    /// and the reconstructed surface node.
    pub fn profile(
        &self,
        current: f64,
        p: &CellParameters,
        geom: &DerivedGeometry,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.intervals();
        let w = p.r_p - self.r_p;
        let r = (0..=n)
            .map(|l| self.r_p + w * l as f64 / n as f64)
            .collect();
        let mut c = Vec::with_capacity(n + 1);
        c.push(boundary_concentration(self.direction, p));
        c.extend_from_slice(&self.c_shell);
        c.push(shell_surface_concentration(self, current, p, geom));
        (r, c)
    }

    /// Integral of c r^2 over the whole particle (core plus shell), mol/m.
    pub fn lithium_moment(&self, current: f64, p: &CellParameters, geom: &DerivedGeometry) -> f64 {
        let core = core_initial_condition(self.direction, p) * self.r_p.powi(3) / 3.0;
        let (r, c) = self.profile(current, p, geom);
        core + sphere::moment_piecewise_linear(&r, &c)
    }
}

/// Coefficients of the transformed shell equations at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformCoefficients {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    /// M4 at the stored nodes l = 1..N_r-1.
    pub m4: Vec<f64>,
    pub eta1: f64,
    /// M4 / d_chi at the stored nodes.
    pub eta2: Vec<f64>,
    pub eta3: f64,
    pub eta4: f64,
    /// dr_p/dt at this state, m/s.
    pub boundary_velocity: f64,
}

impl TransformCoefficients {
    pub fn compute(
        shell: &ShellState,
        p: &CellParameters,
        geom: &DerivedGeometry,
    ) -> Result<Self, ModelError> {
        let model = ShellModel::new(p, geom, ShellStencil::RightSided);
        model.coefficients(shell.r_p, &shell.c_shell, shell.direction)
    }
}

/// Shell equations with the parameter combinations folded in once; this is
/// what the integrator calls.
#[derive(Debug, Clone)]
pub struct ShellModel {
    pub stencil: ShellStencil,
    /// Holds r_p fixed and drops the moving-frame advection term.
    pub frozen_boundary: bool,
    radius: f64,
    diffusivity: f64,
    c_alpha: f64,
    c_beta: f64,
    /// a_p A F L_p
    flux_scale: f64,
}

impl ShellModel {
    pub fn new(p: &CellParameters, geom: &DerivedGeometry, stencil: ShellStencil) -> Self {
        ShellModel {
            stencil,
            frozen_boundary: false,
            radius: p.r_p,
            diffusivity: p.d_s_p,
            c_alpha: p.c_alpha(),
            c_beta: p.c_beta(),
            flux_scale: geom.a_p * p.a_cell * p.faraday * p.l_p,
        }
    }

    fn g(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Discharge => self.c_beta,
            Direction::Charge => self.c_alpha,
        }
    }

    fn width(&self, r_p: f64) -> Result<f64, ModelError> {
        let w = self.radius - r_p;
        if w <= 1e-12 * self.radius || !w.is_finite() {
            return Err(ModelError::SingularShell {
                r_p,
                radius: self.radius,
            });
        }
        Ok(w)
    }

    /// c_{N_r} - c_{N_r-1} = M2 I.
    pub fn surface_step(&self, r_p: f64, intervals: usize, current: f64) -> f64 {
        let w = self.radius - r_p;
        w / intervals as f64 / (self.diffusivity * self.flux_scale) * current
    }

    pub fn coefficients(
        &self,
        r_p: f64,
        c: &[f64],
        direction: Direction,
    ) -> Result<TransformCoefficients, ModelError> {
        let w = self.width(r_p)?;
        let n = c.len() + 1;
        let dchi = 1.0 / n as f64;
        let d = self.diffusivity;
        let g = self.g(direction);
        let m1 = direction.sign() * d / ((self.c_alpha - self.c_beta) * w);
        let m2 = w * dchi / (d * self.flux_scale);
        let m3 = d / (w * w);
        let velocity = if self.frozen_boundary {
            0.0
        } else {
            m1 / dchi * (c[0] - g)
        };
        let m4: Vec<f64> = (1..n)
            .map(|l| {
                let chi = l as f64 * dchi;
                2.0 * d / ((chi * w + r_p) * w) - (chi - 1.0) / w * velocity
            })
            .collect();
        let eta1 = m3 / (dchi * dchi);
        let eta2 = m4.iter().map(|v| v / dchi).collect();
        let eta3 = m2 / dchi * (m4[n - 2] + m3 / dchi);
        Ok(TransformCoefficients {
            m1,
            m2,
            m3,
            m4,
            eta1,
            eta2,
            eta3,
            eta4: m1 / dchi,
            boundary_velocity: velocity,
        })
    }

    /// Writes dr_p/dt and dc/dt for the stored shell nodes.
    pub fn rhs_into(
        &self,
        r_p: f64,
        c: &[f64],
        direction: Direction,
        current: f64,
        dr_p: &mut f64,
        dc: &mut [f64],
    ) -> Result<(), ModelError> {
        self.rhs_with_boundary(r_p, c, self.g(direction), direction, current, dr_p, dc)
    }

    /// Same equations for u = c - g(I). Only concentration differences enter
    /// the shell equations, so the boundary value becomes zero; integrating u
    /// keeps the error control relative to the shell gradients rather than to
    /// the much larger absolute concentrations.
    pub fn rhs_deviation_into(
        &self,
        r_p: f64,
        u: &[f64],
        direction: Direction,
        current: f64,
        dr_p: &mut f64,
        du: &mut [f64],
    ) -> Result<(), ModelError> {
        self.rhs_with_boundary(r_p, u, 0.0, direction, current, dr_p, du)
    }

    pub fn boundary_value(&self, direction: Direction) -> f64 {
        self.g(direction)
    }

    #[allow(clippy::too_many_arguments)]
    fn rhs_with_boundary(
        &self,
        r_p: f64,
        c: &[f64],
        g: f64,
        direction: Direction,
        current: f64,
        dr_p: &mut f64,
        dc: &mut [f64],
    ) -> Result<(), ModelError> {
        let w = self.width(r_p)?;
        let n = c.len() + 1;
        let dchi = 1.0 / n as f64;
        let inv_dchi = n as f64;
        let d = self.diffusivity;
        let m3 = d / (w * w) * inv_dchi * inv_dchi;
        let surface = c[n - 2] + self.surface_step(r_p, n, current);
        let velocity = if self.frozen_boundary {
            0.0
        } else {
            let diff = match self.stencil {
                ShellStencil::RightSided => c[0] - g,
                ShellStencil::SecondOrder => {
                    let second = c.get(1).copied().unwrap_or(surface);
                    0.5 * (4.0 * c[0] - 3.0 * g - second)
                }
            };
            direction.sign() * d / ((self.c_alpha - self.c_beta) * w) * inv_dchi * diff
        };
        *dr_p = velocity;
        let node = |l: usize| -> f64 {
            if l == 0 {
                g
            } else if l == n {
                surface
            } else {
                c[l - 1]
            }
        };
        for l in 1..n {
            let chi = l as f64 * dchi;
            let m4 = 2.0 * d / ((chi * w + r_p) * w) - (chi - 1.0) / w * velocity;
            let (lo, mid, hi) = (node(l - 1), node(l), node(l + 1));
            let advection = match self.stencil {
                ShellStencil::RightSided => m4 * inv_dchi * (hi - mid),
                ShellStencil::SecondOrder => 0.5 * m4 * inv_dchi * (hi - lo),
            };
            dc[l - 1] = m3 * (hi - 2.0 * mid + lo) + advection;
        }
        Ok(())
    }

    /// Matrix form x' = eta1 A1 x + diag(eta2) A2 x + eta3 B I + eta1 G with
    /// x = [r_p; c_1 .. c_{N_r-1}], for the right-sided stencil.
    pub fn state_space(&self, shell: &ShellState) -> Result<StateSpace, ModelError> {
        let k = self.coefficients(shell.r_p, &shell.c_shell, shell.direction)?;
        let g = self.g(shell.direction);
        let dim = shell.c_shell.len() + 1;
        let mut a1 = DMatrix::zeros(dim, dim);
        let mut a2 = DMatrix::zeros(dim, dim);
        let mut eta2 = DVector::zeros(dim);
        a1[(0, 1)] = k.eta4 / k.eta1;
        for row in 1..dim - 1 {
            if row > 1 {
                a1[(row, row - 1)] = 1.0;
            }
            a1[(row, row)] = -2.0;
            a1[(row, row + 1)] = 1.0;
            a2[(row, row)] = -1.0;
            a2[(row, row + 1)] = 1.0;
            eta2[row] = k.eta2[row - 1];
        }
        a1[(dim - 1, dim - 2)] += 1.0;
        a1[(dim - 1, dim - 1)] = -1.0;
        if dim == 2 {
            // the single stored node borders the boundary; its left neighbour
            // is g, not r_p
            a1[(1, 0)] = 0.0;
        }
        let mut b = DVector::zeros(dim);
        b[dim - 1] = 1.0;
        let mut gv = DVector::zeros(dim);
        gv[0] = -k.eta4 / k.eta1 * g;
        gv[1] += g;
        Ok(StateSpace {
            eta1: k.eta1,
            eta2,
            eta3: k.eta3,
            a1,
            a2,
            b,
            g: gv,
        })
    }
}

/// Linear-in-structure representation of the shell dynamics at one state.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub eta1: f64,
    /// Row scaling of A2 (M4 / d_chi at each row, zero where A2 is empty).
    pub eta2: DVector<f64>,
    pub eta3: f64,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DVector<f64>,
}

impl StateSpace {
    pub fn rhs(&self, x: &DVector<f64>, current: f64) -> DVector<f64> {
        let a2x = &self.a2 * x;
        &self.a1 * x * self.eta1
            + a2x.component_mul(&self.eta2)
            + &self.b * (self.eta3 * current)
            + &self.g * self.eta1
    }
}

pub fn assemble_shell_rhs(
    shell: &ShellState,
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
    stencil: ShellStencil,
) -> Result<(f64, Vec<f64>), ModelError> {
    let model = ShellModel::new(p, geom, stencil);
    let mut dr = 0.0;
    let mut dc = vec![0.0; shell.c_shell.len()];
    model.rhs_into(
        shell.r_p,
        &shell.c_shell,
        shell.direction,
        current,
        &mut dr,
        &mut dc,
    )?;
    if !dr.is_finite() {
        return Err(ModelError::NonFinite {
            block: "shell boundary",
            index: 0,
        });
    }
    if let Some(index) = dc.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite {
            block: "shell",
            index,
        });
    }
    Ok((dr, dc))
}

pub fn shell_surface_concentration(
    shell: &ShellState,
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
) -> f64 {
    let model = ShellModel::new(p, geom, ShellStencil::RightSided);
    shell.c_shell[shell.c_shell.len() - 1]
        + model.surface_step(shell.r_p, shell.intervals(), current)
}

/// Molar flux D dc/dr at r = R_p implied by the reconstructed surface node,
/// mol/(m^2 s). Evaluated from the node increment M2 I itself, so it carries
/// no cancellation from subtracting two nearly equal concentrations.
pub fn shell_surface_flux(
    shell: &ShellState,
    current: f64,
    p: &CellParameters,
    geom: &DerivedGeometry,
) -> f64 {
    let model = ShellModel::new(p, geom, ShellStencil::RightSided);
    let n = shell.intervals();
    let step = model.surface_step(shell.r_p, n, current);
    step * n as f64 * p.d_s_p / (p.r_p - shell.r_p)
}
