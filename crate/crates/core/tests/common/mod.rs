//! Reference solutions shared by the oracle and acceptance targets.
#![allow(dead_code)]

use espm::checks::c12_leg;
use espm::config::{reference_parameters, CellConfig, CellParameters, ShellStencil};
use espm::negative::{assemble_negative_rhs, surface_gradient_n, NegativeParticleState};
use espm::ode::{Bdf, BdfOptions, OdeSystem};
use espm::positive::{Direction, Mode, ShellModel};
use espm::sim::{CellModel, CurrentProfile, Sampling, SimOptions};
use espm::ModelError;

pub fn reference() -> CellConfig {
    CellConfig {
        params: reference_parameters(),
        model: Default::default(),
    }
}

/// Solve u_t = D (u_rr + 2 u_r / r) on [a, b], u(a) = g, D u_r(b) = D q,
/// finite volumes on `n` nodes with Crank-Nicolson steps of `dt`.
#[allow(clippy::too_many_arguments)]
fn fixed_domain_reference(
    a: f64,
    b: f64,
    d: f64,
    g: f64,
    q: f64,
    n: usize,
    t_end: f64,
    dt: f64,
) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / (n - 1) as f64;
    let r: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
    // control volume i spans [r_i - h/2, r_i + h/2] clipped to the domain
    let vol: Vec<f64> = (0..n)
        .map(|i| {
            let lo = (r[i] - 0.5 * h).max(a);
            let hi = (r[i] + 0.5 * h).min(b);
            (hi.powi(3) - lo.powi(3)) / 3.0
        })
        .collect();
    let face = |i: usize| {
        let rf = r[i] + 0.5 * h;
        rf * rf
    };
    // L u for interior/outer nodes; node 0 is Dirichlet
    let apply = |u: &[f64], out: &mut [f64]| {
        out[0] = 0.0;
        for i in 1..n {
            let mut flux_in = d * face(i - 1) * (u[i - 1] - u[i]) / h;
            let flux_out = if i + 1 < n {
                d * face(i) * (u[i + 1] - u[i]) / h
            } else {
                d * b * b * q
            };
            flux_in += flux_out;
            out[i] = flux_in / vol[i];
        }
    };
    let mut u = vec![g; n];
    let steps = (t_end / dt).round() as usize;
    let mut lu = vec![0.0; n];
    for _ in 0..steps {
        apply(&u, &mut lu);
        // (I - dt/2 L) u_new = u + dt/2 L u, tridiagonal
        let mut sub = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs: Vec<f64> = (0..n).map(|i| u[i] + 0.5 * dt * lu[i]).collect();
        rhs[0] = g;
        for i in 1..n {
            let w_lo = d * face(i - 1) / h / vol[i];
            sub[i] = -0.5 * dt * w_lo;
            diag[i] = 1.0 + 0.5 * dt * w_lo;
            if i + 1 < n {
                let w_hi = d * face(i) / h / vol[i];
                sup[i] = -0.5 * dt * w_hi;
                diag[i] += 0.5 * dt * w_hi;
            } else {
                // the boundary flux is constant: half from the old level, half new
                rhs[i] += 0.5 * dt * d * b * b * q / vol[i];
            }
        }
        // Thomas algorithm
        for i in 1..n {
            let m = sub[i] / diag[i - 1];
            diag[i] -= m * sup[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        u[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            u[i] = (rhs[i] - sup[i] * u[i + 1]) / diag[i];
        }
    }
    (r, u)
}

fn interpolate(x: &[f64], y: &[f64], at: f64) -> f64 {
    let k = x.partition_point(|v| *v <= at).clamp(1, x.len() - 1);
    let s = (at - x[k - 1]) / (x[k] - x[k - 1]);
    y[k - 1] + s * (y[k] - y[k - 1])
}

struct Shell {
    model: ShellModel,
    r_p: f64,
    current: f64,
    len: usize,
}

impl OdeSystem for Shell {
    fn dim(&self) -> usize {
        self.len
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        let mut dr = 0.0;
        self.model
            .rhs_deviation_into(self.r_p, y, Direction::Discharge, self.current, &mut dr, dy)
    }
}

fn integrate<S: OdeSystem>(sys: &S, y0: Vec<f64>, t_end: f64, atol: f64) -> Vec<f64> {
    let opts = BdfOptions {
        rtol: 1e-8,
        atol: vec![atol; y0.len()],
        max_step: t_end / 20.0,
        first_step: None,
    };
    let mut bdf = Bdf::new(sys, 0.0, y0, t_end, opts).expect("start");
    while !bdf.finished() {
        bdf.step().expect("step");
    }
    bdf.y().to_vec()
}

/// Relative RMS of the shell deviation from g against the reference.
pub fn frozen_shell_error(stencil: ShellStencil, intervals: usize) -> f64 {
    let p = reference_parameters();
    let geom = p.geometry().unwrap();
    let mut model = ShellModel::new(&p, &geom, stencil);
    model.frozen_boundary = true;
    let g = p.c_beta();
    let r_p = 0.5 * p.r_p;
    let current = 4.0;
    let sys = Shell {
        model,
        r_p,
        current,
        len: intervals - 1,
    };
    let w = p.r_p - r_p;
    let t_end = 2.0 * w * w / p.d_s_p;
    // integrate u = c - g so the error control sees the deviation itself
    let u = integrate(&sys, vec![0.0; intervals - 1], t_end, 1e-12);
    let q = current / (p.d_s_p * geom.a_p * p.a_cell * p.faraday * p.l_p);
    let (r_ref, c_ref) =
        fixed_domain_reference(r_p, p.r_p, p.d_s_p, g, q, 201, t_end, t_end / 4000.0);
    let (mut num, mut den) = (0.0, 0.0);
    for (l, ul) in u.iter().enumerate() {
        let r = r_p + (l + 1) as f64 / intervals as f64 * w;
        let reference = interpolate(&r_ref, &c_ref, r) - g;
        num += (ul - reference).powi(2);
        den += reference.powi(2);
    }
    (num / den).sqrt()
}

struct Negative<'a> {
    p: &'a CellParameters,
    geom: espm::DerivedGeometry,
    current: f64,
    nodes: usize,
}

impl OdeSystem for Negative<'_> {
    fn dim(&self) -> usize {
        self.nodes
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        let state = NegativeParticleState { c_s_n: y.to_vec() };
        let out = assemble_negative_rhs(&state, self.current, self.p, &self.geom)?;
        dy.copy_from_slice(&out);
        Ok(())
    }
}

/// Surface concentration change of the negative particle after a short
/// constant-current pulse on `nodes` grid points, with the half-space value
/// 2 G sqrt(D t / pi) and the same plus the sphere curvature term G D t / R.
pub fn negative_short_time(nodes: usize) -> (f64, f64, f64) {
    let p = reference_parameters();
    let geom = p.geometry().unwrap();
    let current = 40.0;
    let sys = Negative {
        p: &p,
        geom,
        current,
        nodes,
    };
    // the rhs only sees differences, so start from zero and integrate the
    // deviation directly; diffusion length is 1 % of the radius
    let t = 1e-4 * p.r_n * p.r_n / p.d_s_n;
    let c = integrate(&sys, vec![0.0; nodes], t, 1e-14);
    let gradient = surface_gradient_n(current, &p, &geom);
    let half_space = gradient * 2.0 * (p.d_s_n * t / std::f64::consts::PI).sqrt();
    let corrected = half_space + gradient * p.d_s_n * t / p.r_n;
    (c[nodes - 1], half_space, corrected)
}

/// Surface stoichiometry just before `t` on a fresh C/12 run.
fn surface_before(direction: Direction, t: f64) -> f64 {
    let cfg = reference();
    let model = CellModel::from_config(&cfg).unwrap();
    let soc0 = if direction == Direction::Discharge {
        1.0
    } else {
        0.0
    };
    let init = model.initial_state(soc0, direction).unwrap();
    let current = direction.sign() * cfg.params.q_nom / 12.0;
    let profile = CurrentProfile::constant(current, t);
    let opts = SimOptions {
        sampling: Sampling::Times(vec![0.0, t]),
        ..SimOptions::default()
    };
    let trace = model.simulate(&profile, &init, &opts).unwrap();
    *trace.theta_p_surf.last().unwrap()
}

/// Checks the regime sequence of a C/12 leg: entry when the surface
/// stoichiometry reaches `threshold`, a shrinking core, and exit at
/// r_p / R_p = 0.001 before the end of the leg.
pub fn lifecycle(direction: Direction) -> Result<String, String> {
    let (first, last, threshold) = match direction {
        Direction::Discharge => (Mode::OnePhaseAlpha, Mode::OnePhaseBeta, 0.198),
        Direction::Charge => (Mode::OnePhaseBeta, Mode::OnePhaseAlpha, 0.800),
    };
    let trace = c12_leg(&reference(), direction, 60.0).map_err(|e| e.to_string())?;
    let [enter, exit] = trace.transitions.as_slice() else {
        return Err(format!("transitions {:?}", trace.transitions));
    };
    if (enter.from, enter.to) != (first, Mode::TwoPhase)
        || (exit.from, exit.to) != (Mode::TwoPhase, last)
    {
        return Err(format!("transitions {:?}", trace.transitions));
    }
    if exit.t >= *trace.t.last().unwrap() {
        return Err(format!("exit at {} s, end of leg", exit.t));
    }
    let surf = surface_before(direction, enter.t - 1e-3);
    if (surf - threshold).abs() > 1e-6 {
        return Err(format!("entered at theta_surf = {surf}"));
    }
    let shell: Vec<f64> = trace
        .steps
        .iter()
        .filter(|s| s.mode == Mode::TwoPhase)
        .filter_map(|s| s.rp_frac)
        .collect();
    if shell.len() < 10 || shell[0] < 0.99 {
        return Err(format!(
            "{} two-phase steps, first r_p/R_p {:?}",
            shell.len(),
            shell.first()
        ));
    }
    if let Some(k) = shell.windows(2).position(|w| w[1] > w[0]) {
        return Err(format!(
            "r_p/R_p rises at step {k}: {} -> {}",
            shell[k],
            shell[k + 1]
        ));
    }
    let end = *shell.last().unwrap();
    if end > 1e-3 * (1.0 + 1e-9) {
        return Err(format!("last two-phase r_p/R_p = {end}"));
    }
    Ok(format!(
        "enter {:.1} s at theta_surf {surf:.6}, {} monotone steps, exit {:.1} s at r_p/R_p {end:.2e}",
        enter.t,
        shell.len(),
        exit.t
    ))
}
