//! Method-of-lines integration of the full cell with event-driven switching
//! of the positive-particle regime.

use std::ops::Range;

use serde::Serialize;

use crate::config::{CellConfig, CellParameters, DerivedGeometry, ModelOptions};
use crate::electrolyte::{ElectrolyteGrid, ElectrolyteModel, ElectrolyteState};
use crate::error::{ConfigError, ModelError, SimError};
use crate::negative::{bulk_stoichiometry_n, negative_rhs_into, NegativeParticleState};
use crate::ode::{find_root, Bdf, BdfError, BdfOptions, OdeSystem};
use crate::positive::{
    bulk_stoichiometry_p, enter_two_phase, exit_two_phase, one_phase_rhs_into,
    positive_surface_concentration, shell_surface_flux, trigger_value, Direction, Mode,
    OnePhaseState, PhaseRegime, PositiveState, ShellModel, ShellState, TransitionEvent,
};
use crate::voltage::{cell_voltage, soc_n, soc_p, VoltageBreakdown};

/// Full dynamic state of the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub electrolyte: ElectrolyteState,
    pub negative: NegativeParticleState,
    pub positive: PositiveState,
    pub regime: PhaseRegime,
    /// Charge moved through the terminals since the start, Ah.
    pub q_throughput: f64,
    /// Direction of the last nonzero current; selects the OCP branch and the
    /// shell boundary value while at rest.
    pub branch: Direction,
}

/// Piecewise-constant current schedule with optional stop conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentProfile {
    /// (start time s, current A), start times strictly increasing; the first
    /// segment starts at the simulation start.
    pub segments: Vec<(f64, f64)>,
    pub t_end: f64,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    /// Stop once this much charge has passed, Ah.
    pub capacity_limit: Option<f64>,
}

impl CurrentProfile {
    pub fn constant(current: f64, t_end: f64) -> Self {
        CurrentProfile {
            segments: vec![(0.0, current)],
            t_end,
            v_min: None,
            v_max: None,
            capacity_limit: None,
        }
    }

    pub fn with_cutoffs(mut self, v_min: Option<f64>, v_max: Option<f64>) -> Self {
        self.v_min = v_min;
        self.v_max = v_max;
        self
    }

    pub fn with_capacity_limit(mut self, ah: f64) -> Self {
        self.capacity_limit = Some(ah);
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.segments.is_empty() {
            return Err(SimError::Profile("no segments".into()));
        }
        for w in self.segments.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(SimError::Profile(format!(
                    "segment times not strictly increasing at t = {}",
                    w[1].0
                )));
            }
        }
        if self.t_end <= self.segments[0].0 {
            return Err(SimError::Profile("t_end before the first segment".into()));
        }
        if self
            .segments
            .iter()
            .any(|(t, i)| !t.is_finite() || !i.is_finite())
        {
            return Err(SimError::Profile("non-finite schedule entry".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Every dt seconds from the start, plus the final time.
    Uniform(f64),
    /// At the given increasing times (those beyond the stop time are dropped).
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub rtol: f64,
    /// Absolute tolerance in concentration units; also used for r_p / R_p.
    pub atol: f64,
    pub sampling: Sampling,
    pub max_step: f64,
    /// Keep a per-step diagnostic record.
    pub record_steps: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            rtol: 1e-6,
            atol: 1e-9,
            sampling: Sampling::Uniform(60.0),
            max_step: 1800.0,
            record_steps: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ProfileEnd,
    VoltageCutoff,
    CapacityLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRecord {
    pub t: f64,
    pub from: Mode,
    pub to: Mode,
}

/// Diagnostics at one accepted integrator step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub mode: Mode,
    pub current: f64,
    /// r_p / R_p in the two-phase regime.
    pub rp_frac: Option<f64>,
    /// Surface flux from the reconstructed node divided by I/(a_p A F L_p).
    pub flux_ratio: Option<f64>,
    pub electrolyte_inventory: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SimulationTrace {
    pub t: Vec<f64>,
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    pub soc_n: Vec<f64>,
    pub soc_p: Vec<f64>,
    pub rp_over_rp: Vec<f64>,
    pub theta_p_surf: Vec<f64>,
    pub theta_n_surf: Vec<f64>,
    pub theta_p_bulk: Vec<f64>,
    pub theta_n_bulk: Vec<f64>,
    pub q_throughput: Vec<f64>,
    pub mode: Vec<Mode>,
    pub breakdown: Vec<VoltageBreakdown>,
    /// Electrolyte lithium per unit area, mol/m^2.
    pub electrolyte_inventory: Vec<f64>,
    pub transitions: Vec<TransitionRecord>,
    pub steps: Vec<StepRecord>,
    pub termination: Option<Termination>,
    pub integrator_steps: usize,
    pub rhs_evals: usize,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub const CSV_HEADER: [&'static str; 14] = [
        "t_s",
        "I_A",
        "V_V",
        "soc_n",
        "soc_p",
        "rp_over_Rp",
        "theta_p_surf",
        "theta_n_surf",
        "U_p_V",
        "U_n_V",
        "eta_p_V",
        "eta_n_V",
        "dphi_e_V",
        "ohmic_V",
    ];

    /// Rows matching [`Self::CSV_HEADER`].
    pub fn csv_rows(&self) -> impl Iterator<Item = [f64; 14]> + '_ {
        (0..self.len()).map(move |i| {
            let b = &self.breakdown[i];
            [
                self.t[i],
                self.current[i],
                self.voltage[i],
                self.soc_n[i],
                self.soc_p[i],
                self.rp_over_rp[i],
                self.theta_p_surf[i],
                self.theta_n_surf[i],
                b.u_p,
                b.u_n,
                b.eta_p,
                b.eta_n,
                b.delta_phi_e,
                b.ohmic,
            ]
        })
    }
}

/// Everything that stays fixed during a simulation: parameters, grids and
/// the precomputed operators.
#[derive(Debug, Clone)]
pub struct CellModel {
    pub params: CellParameters,
    pub geom: DerivedGeometry,
    pub options: ModelOptions,
    electrolyte: ElectrolyteModel,
    shell: ShellModel,
}

impl CellModel {
    /// Checks that the parameters are physical; the plateau-inside-window
    /// orderings are left to [`CellParameters::validate`] so identification
    /// can simulate and penalize candidates that break them.
    pub fn new(params: CellParameters, options: ModelOptions) -> Result<Self, ConfigError> {
        params.validate_physical()?;
        options.validate()?;
        let geom = params.geometry()?;
        let grid = ElectrolyteGrid::new(&params, options.n_n, options.n_s, options.n_p);
        let electrolyte = ElectrolyteModel::new(grid, &params, &geom);
        let shell = ShellModel::new(&params, &geom, options.shell_stencil);
        Ok(CellModel {
            params,
            geom,
            options,
            electrolyte,
            shell,
        })
    }

    pub fn from_config(config: &CellConfig) -> Result<Self, ConfigError> {
        CellModel::new(config.params.clone(), config.model.clone())
    }

    pub fn grid(&self) -> &ElectrolyteGrid {
        &self.electrolyte.grid
    }

    pub fn shell_model(&self) -> &ShellModel {
        &self.shell
    }

    /// Rest state at the given SOC with uniform particles.
    pub fn initial_state(&self, soc0: f64, direction: Direction) -> Result<CellState, ModelError> {
        initial_state_with(&self.params, &self.options, self.grid(), soc0, direction)
    }

    pub fn voltage(&self, state: &CellState, current: f64) -> Result<VoltageBreakdown, ModelError> {
        let p = &self.params;
        let c_p = positive_surface_concentration(&state.positive, current, p, &self.geom);
        cell_voltage(
            &state.electrolyte,
            self.grid(),
            state.negative.surface(),
            c_p,
            current,
            state.branch,
            p,
            &self.geom,
            &self.options.ocp_negative,
        )
    }

    /// (SOC_n, SOC_p) from the bulk stoichiometries.
    pub fn soc(&self, state: &CellState, current: f64) -> (f64, f64) {
        let p = &self.params;
        let theta_n = bulk_stoichiometry_n(&state.negative, p);
        let theta_p = bulk_stoichiometry_p(&state.positive, current, p, &self.geom);
        (soc_n(theta_n, p), soc_p(theta_p, p))
    }

    pub fn simulate(
        &self,
        profile: &CurrentProfile,
        init: &CellState,
        opts: &SimOptions,
    ) -> Result<SimulationTrace, SimError> {
        let (trace, err) = self.simulate_partial(profile, init, opts);
        match err {
            Some(e) => Err(e),
            None => Ok(trace),
        }
    }

    /// Like [`Self::simulate`] but hands back whatever was sampled before a
    /// failure together with the error.
    pub fn simulate_partial(
        &self,
        profile: &CurrentProfile,
        init: &CellState,
        opts: &SimOptions,
    ) -> (SimulationTrace, Option<SimError>) {
        let mut run = Run::new(self, profile, opts);
        let err = run.execute(init.clone()).err();
        (run.trace, err)
    }
}

/// Rest state at `soc0` on the stoichiometric windows.
pub fn initial_state_with(
    p: &CellParameters,
    options: &ModelOptions,
    grid: &ElectrolyteGrid,
    soc0: f64,
    direction: Direction,
) -> Result<CellState, ModelError> {
    if !(0.0..=1.0).contains(&soc0) {
        return Err(ModelError::InvalidSoc(soc0));
    }
    let theta_n = p.theta_n_0 + soc0 * (p.theta_n_100 - p.theta_n_0);
    let theta_p = p.theta_p_0 - soc0 * (p.theta_p_0 - p.theta_p_100);
    let mode = if theta_p < p.theta_p_alpha {
        Mode::OnePhaseAlpha
    } else if theta_p > p.theta_p_beta {
        Mode::OnePhaseBeta
    } else {
        return Err(ModelError::AmbiguousPhase(theta_p));
    };
    Ok(CellState {
        electrolyte: ElectrolyteState::uniform(grid, p.c0_electrolyte),
        negative: NegativeParticleState::uniform(options.n_rn, theta_n * p.c_s_n_max),
        positive: PositiveState::OnePhase(OnePhaseState::uniform(
            options.n_rp,
            theta_p * p.c_s_p_max,
        )),
        regime: PhaseRegime { mode, t_bar: 0.0 },
        q_throughput: 0.0,
        branch: direction,
    })
}

pub fn initial_state(
    soc0: f64,
    direction: Direction,
    p: &CellParameters,
    options: &ModelOptions,
) -> Result<CellState, ModelError> {
    let grid = ElectrolyteGrid::new(p, options.n_n, options.n_s, options.n_p);
    initial_state_with(p, options, &grid, soc0, direction)
}

pub fn simulate(
    profile: &CurrentProfile,
    init: &CellState,
    p: &CellParameters,
    options: &ModelOptions,
    sim: &SimOptions,
) -> Result<SimulationTrace, SimError> {
    let model = CellModel::new(p.clone(), options.clone())
        .map_err(|e| SimError::Profile(format!("invalid configuration: {e}")))?;
    model.simulate(profile, init, sim)
}

/// The ODE system for one constant-current stretch in one regime.
struct Segment<'a> {
    model: &'a CellModel,
    current: f64,
    ne: usize,
    nn: usize,
    np: usize,
    /// Set in the two-phase regime: positive block is [r_p/R_p, c - g].
    shell: Option<Direction>,
}

impl<'a> Segment<'a> {
    fn new(model: &'a CellModel, state: &CellState, current: f64) -> Self {
        let (np, shell) = match &state.positive {
            PositiveState::OnePhase(s) => (s.c_s_p.len(), None),
            PositiveState::Shell(s) => (s.c_shell.len() + 1, Some(s.direction)),
        };
        Segment {
            model,
            current,
            ne: state.electrolyte.c.len(),
            nn: state.negative.c_s_n.len(),
            np,
            shell,
        }
    }

    fn pack(&self, state: &CellState) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.ne + self.nn + self.np);
        y.extend_from_slice(&state.electrolyte.c);
        y.extend_from_slice(&state.negative.c_s_n);
        match &state.positive {
            PositiveState::OnePhase(s) => y.extend_from_slice(&s.c_s_p),
            PositiveState::Shell(s) => {
                let g = self.model.shell.boundary_value(s.direction);
                y.push(s.r_p / self.model.params.r_p);
                y.extend(s.c_shell.iter().map(|c| c - g));
            }
        }
        y
    }

    fn unpack(&self, y: &[f64], template: &CellState, q: f64) -> CellState {
        let (e, rest) = y.split_at(self.ne);
        let (n, pos) = rest.split_at(self.nn);
        let positive = match self.shell {
            None => PositiveState::OnePhase(OnePhaseState {
                c_s_p: pos.to_vec(),
            }),
            Some(direction) => {
                let g = self.model.shell.boundary_value(direction);
                PositiveState::Shell(ShellState::new(
                    pos[0] * self.model.params.r_p,
                    pos[1..].iter().map(|u| u + g).collect(),
                    direction,
                ))
            }
        };
        CellState {
            electrolyte: ElectrolyteState { c: e.to_vec() },
            negative: NegativeParticleState { c_s_n: n.to_vec() },
            positive,
            regime: template.regime,
            q_throughput: q,
            branch: template.branch,
        }
    }

    fn atol(&self, atol: f64) -> Vec<f64> {
        vec![atol; self.ne + self.nn + self.np]
    }
}

impl OdeSystem for Segment<'_> {
    fn dim(&self) -> usize {
        self.ne + self.nn + self.np
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        let m = self.model;
        let p = &m.params;
        let (ye, rest) = y.split_at(self.ne);
        let (yn, yp) = rest.split_at(self.nn);
        let (de, drest) = dy.split_at_mut(self.ne);
        let (dn, dp) = drest.split_at_mut(self.nn);
        m.electrolyte.rhs_into(ye, self.current, de);
        negative_rhs_into(yn, self.current, p, &m.geom, dn);
        match self.shell {
            None => one_phase_rhs_into(yp, self.current, p, &m.geom, dp),
            Some(direction) => {
                let (dxi, du) = dp.split_at_mut(1);
                let mut dr = 0.0;
                m.shell.rhs_deviation_into(
                    yp[0] * p.r_p,
                    &yp[1..],
                    direction,
                    self.current,
                    &mut dr,
                    du,
                )?;
                dxi[0] = dr / p.r_p;
            }
        }
        Ok(())
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        let a = self.ne;
        let b = a + self.nn;
        vec![0..a, a..b, b..b + self.np]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    Transition(TransitionEvent),
    VoltageMin,
    VoltageMax,
    Capacity,
}

struct Run<'a> {
    model: &'a CellModel,
    profile: &'a CurrentProfile,
    opts: &'a SimOptions,
    trace: SimulationTrace,
    samples: Vec<f64>,
    next_sample: usize,
}

impl<'a> Run<'a> {
    fn new(model: &'a CellModel, profile: &'a CurrentProfile, opts: &'a SimOptions) -> Self {
        let t0 = profile.segments.first().map(|s| s.0).unwrap_or(0.0);
        let samples = match &opts.sampling {
            Sampling::Uniform(dt) => {
                let count = ((profile.t_end - t0) / dt).floor() as usize;
                let mut v: Vec<f64> = (0..=count).map(|k| t0 + k as f64 * dt).collect();
                if v.last().is_some_and(|t| profile.t_end - t > 1e-9 * dt) {
                    v.push(profile.t_end);
                }
                v
            }
            Sampling::Times(ts) => ts
                .iter()
                .copied()
                .filter(|t| *t >= t0 && *t <= profile.t_end)
                .collect(),
        };
        Run {
            model,
            profile,
            opts,
            trace: SimulationTrace::default(),
            samples,
            next_sample: 0,
        }
    }

    fn saturation(&self, state: &CellState, t: f64, source: ModelError) -> SimError {
        SimError::Saturation {
            t,
            regime: state.regime.mode,
            source,
        }
    }

    /// Checks that the state is inside every correlation's domain.
    fn check_state(
        &self,
        state: &CellState,
        current: f64,
        t: f64,
    ) -> Result<VoltageBreakdown, SimError> {
        if let Some(i) = state.electrolyte.c.iter().position(|c| !(*c > 0.0)) {
            return Err(self.saturation(
                state,
                t,
                ModelError::OutOfDomain(format!("electrolyte depleted in volume {i}")),
            ));
        }
        self.model
            .voltage(state, current)
            .map_err(|e| self.saturation(state, t, e))
    }

    fn record(&mut self, state: &CellState, current: f64, t: f64) -> Result<(), SimError> {
        let m = self.model;
        let p = &m.params;
        let b = self.check_state(state, current, t)?;
        let theta_n = bulk_stoichiometry_n(&state.negative, p);
        let theta_p = bulk_stoichiometry_p(&state.positive, current, p, &m.geom);
        let tr = &mut self.trace;
        tr.t.push(t);
        tr.current.push(current);
        tr.voltage.push(b.v_cell);
        tr.soc_n.push(soc_n(theta_n, p));
        tr.soc_p.push(soc_p(theta_p, p));
        tr.theta_n_bulk.push(theta_n);
        tr.theta_p_bulk.push(theta_p);
        tr.rp_over_rp.push(boundary_fraction(state, p));
        tr.theta_p_surf.push(
            positive_surface_concentration(&state.positive, current, p, &m.geom) / p.c_s_p_max,
        );
        tr.theta_n_surf.push(state.negative.surface() / p.c_s_n_max);
        tr.q_throughput.push(state.q_throughput);
        tr.mode.push(state.regime.mode);
        tr.breakdown.push(b);
        tr.electrolyte_inventory
            .push(state.electrolyte.inventory(m.grid(), &m.geom));
        Ok(())
    }

    fn event_values(&self, state: &CellState, current: f64) -> Vec<(Event, f64)> {
        let m = self.model;
        let p = &m.params;
        let mut out = Vec::with_capacity(4);
        if let Some((v, e)) = trigger_value(
            state.regime.mode,
            &state.positive,
            current,
            p,
            m.options.transition_trigger,
        ) {
            out.push((Event::Transition(e), v));
        }
        let needs_v = (current > 0.0 && self.profile.v_min.is_some())
            || (current < 0.0 && self.profile.v_max.is_some());
        if needs_v {
            // outside the voltage domain the cutoff counts as crossed
            let v = m.voltage(state, current).map(|b| b.v_cell);
            if current > 0.0 {
                let lim = self.profile.v_min.unwrap_or(f64::NEG_INFINITY);
                out.push((Event::VoltageMin, v.map(|v| v - lim).unwrap_or(-1.0)));
            } else {
                let lim = self.profile.v_max.unwrap_or(f64::INFINITY);
                out.push((Event::VoltageMax, v.map(|v| lim - v).unwrap_or(-1.0)));
            }
        }
        if let Some(limit) = self.profile.capacity_limit {
            out.push((Event::Capacity, limit - state.q_throughput));
        }
        out
    }

    fn execute(&mut self, mut state: CellState) -> Result<(), SimError> {
        self.profile.validate()?;
        let segments = self.profile.segments.clone();
        let mut t = segments[0].0;
        for (k, &(start, current)) in segments.iter().enumerate() {
            let seg_end = segments
                .get(k + 1)
                .map(|s| s.0)
                .unwrap_or(self.profile.t_end)
                .min(self.profile.t_end);
            t = t.max(start);
            if let Some(dir) = Direction::of_current(current) {
                if let PositiveState::Shell(shell) = &state.positive {
                    if shell.direction != dir {
                        return Err(SimError::SignReversal { t });
                    }
                }
                state.branch = dir;
            }
            if self.next_sample == 0 && self.samples.first().is_some_and(|s| *s <= t) {
                self.record(&state, current, t)?;
                self.next_sample = 1;
            }
            match self.run_segment(&mut state, current, t, seg_end)? {
                Some(term) => {
                    self.trace.termination = Some(term);
                    return Ok(());
                }
                None => t = seg_end,
            }
            if seg_end >= self.profile.t_end {
                break;
            }
        }
        self.trace.termination = Some(Termination::ProfileEnd);
        Ok(())
    }

    /// Integrates one constant-current segment, restarting after each regime
    /// change. Returns a termination reason when a stop condition fired.
    fn run_segment(
        &mut self,
        state: &mut CellState,
        current: f64,
        mut t: f64,
        t_end: f64,
    ) -> Result<Option<Termination>, SimError> {
        let m = self.model;
        let q_start = state.q_throughput;
        let t_start = t;
        let q_at = |time: f64| q_start + current.abs() * (time - t_start) / 3600.0;
        'restart: loop {
            if t >= t_end {
                return Ok(None);
            }
            for (event, value) in self.event_values(state, current) {
                if value <= 0.0 {
                    match self.apply_event(state, event, current, t)? {
                        Some(term) => return Ok(Some(term)),
                        None => continue 'restart,
                    }
                }
            }
            let seg = Segment::new(m, state, current);
            let y0 = seg.pack(state);
            let bdf_opts = BdfOptions {
                rtol: self.opts.rtol,
                atol: seg.atol(self.opts.atol),
                max_step: self.opts.max_step,
                first_step: None,
            };
            let template = state.clone();
            let mut solver = Bdf::new(&seg, t, y0, t_end, bdf_opts).map_err(|e| match e {
                BdfError::Rhs(err) => self.saturation(state, t, err),
                BdfError::StepCollapse { t, .. } => SimError::StepCollapse {
                    t,
                    regime: state.regime.mode,
                },
            })?;
            let mut prev = self.event_values(state, current);
            let mut buf = vec![0.0; seg.dim()];
            loop {
                if let Err(e) = solver.step() {
                    self.trace.integrator_steps += solver.stats.steps;
                    self.trace.rhs_evals += solver.stats.rhs_evals;
                    let regime = state.regime.mode;
                    return Err(match e {
                        BdfError::StepCollapse {
                            t,
                            last_rhs_error: Some(source),
                        } => SimError::Saturation { t, regime, source },
                        BdfError::StepCollapse { t, .. } => SimError::StepCollapse { t, regime },
                        BdfError::Rhs(source) => SimError::Saturation { t, regime, source },
                    });
                }
                let t_new = solver.t();
                let t_old = solver.t_old();
                let now = seg.unpack(solver.y(), &template, q_at(t_new));
                let current_values = self.event_values(&now, current);
                // earliest event crossing inside the step
                let mut fired: Option<(f64, Event)> = None;
                for ((event, v_new), (_, v_old)) in current_values.iter().zip(&prev) {
                    if *v_new <= 0.0 && *v_old > 0.0 {
                        let f = |x: f64| {
                            solver.dense(x, &mut buf);
                            let s = seg.unpack(&buf, &template, q_at(x));
                            self.event_values(&s, current)
                                .into_iter()
                                .find(|(e, _)| e == event)
                                .map(|(_, v)| v)
                                .unwrap_or(-1.0)
                        };
                        let xtol = 1e-12 * t_new.abs().max(1.0);
                        let te = find_root(f, t_old, t_new, *v_old, *v_new, xtol, 1e-10);
                        if fired.is_none_or(|(tf, _)| te < tf) {
                            fired = Some((te, *event));
                        }
                    }
                }
                let t_stop = fired.map(|(te, _)| te).unwrap_or(t_new);
                // samples up to the stop time
                while self.next_sample < self.samples.len()
                    && self.samples[self.next_sample] <= t_stop
                {
                    let ts = self.samples[self.next_sample];
                    solver.dense(ts, &mut buf);
                    let s = seg.unpack(&buf, &template, q_at(ts));
                    self.record(&s, current, ts)?;
                    self.next_sample += 1;
                }
                if fired.is_none() {
                    self.check_state(&now, current, t_new)?;
                    if self.opts.record_steps {
                        self.record_step(&now, current, t_new);
                    }
                }
                if let Some((te, event)) = fired {
                    solver.dense(te, &mut buf);
                    *state = seg.unpack(&buf, &template, q_at(te));
                    // the step is cut at the event; keep its end point
                    if self.opts.record_steps {
                        self.record_step(state, current, te);
                    }
                    self.trace.integrator_steps += solver.stats.steps;
                    self.trace.rhs_evals += solver.stats.rhs_evals;
                    t = te;
                    match self.apply_event(state, event, current, te)? {
                        Some(term) => {
                            self.record_final(state, current, te)?;
                            return Ok(Some(term));
                        }
                        None => continue 'restart,
                    }
                }
                prev = current_values;
                if solver.finished() {
                    *state = now;
                    self.trace.integrator_steps += solver.stats.steps;
                    self.trace.rhs_evals += solver.stats.rhs_evals;
                    return Ok(None);
                }
            }
        }
    }

    /// Adds the stop point to the trace unless it coincides with a sample.
    fn record_final(&mut self, state: &CellState, current: f64, t: f64) -> Result<(), SimError> {
        if self.trace.t.last().is_none_or(|last| t > *last)
            && matches!(self.opts.sampling, Sampling::Uniform(_))
        {
            self.record(state, current, t)?;
        }
        Ok(())
    }

    fn record_step(&mut self, state: &CellState, current: f64, t: f64) {
        let m = self.model;
        let p = &m.params;
        let (rp_frac, flux_ratio) = match &state.positive {
            PositiveState::Shell(s) => {
                let expected = current / (m.geom.a_p * p.a_cell * p.faraday * p.l_p);
                let ratio = if current != 0.0 {
                    Some(shell_surface_flux(s, current, p, &m.geom) / expected)
                } else {
                    None
                };
                (Some(s.r_p / p.r_p), ratio)
            }
            PositiveState::OnePhase(_) => (None, None),
        };
        self.trace.steps.push(StepRecord {
            t,
            mode: state.regime.mode,
            current,
            rp_frac,
            flux_ratio,
            electrolyte_inventory: state.electrolyte.inventory(m.grid(), &m.geom),
        });
    }

    fn apply_event(
        &mut self,
        state: &mut CellState,
        event: Event,
        current: f64,
        t: f64,
    ) -> Result<Option<Termination>, SimError> {
        let m = self.model;
        let p = &m.params;
        match event {
            Event::VoltageMin | Event::VoltageMax => Ok(Some(Termination::VoltageCutoff)),
            Event::Capacity => Ok(Some(Termination::CapacityLimit)),
            Event::Transition(TransitionEvent::EnterTwoPhase(direction)) => {
                let shell = enter_two_phase(direction, p, m.options.n_r)?;
                let from = state.regime.mode;
                state.positive = PositiveState::Shell(shell);
                state.regime = PhaseRegime {
                    mode: Mode::TwoPhase,
                    t_bar: t,
                };
                self.trace.transitions.push(TransitionRecord {
                    t,
                    from,
                    to: Mode::TwoPhase,
                });
                Ok(None)
            }
            Event::Transition(TransitionEvent::ExitTwoPhase) => {
                let PositiveState::Shell(shell) = &state.positive else {
                    unreachable!("exit event outside the two-phase regime");
                };
                let one = exit_two_phase(shell, current, p, &m.geom, m.options.n_rp)?;
                let to = match shell.direction {
                    Direction::Discharge => Mode::OnePhaseBeta,
                    Direction::Charge => Mode::OnePhaseAlpha,
                };
                state.positive = PositiveState::OnePhase(one);
                state.regime = PhaseRegime { mode: to, t_bar: t };
                self.trace.transitions.push(TransitionRecord {
                    t,
                    from: Mode::TwoPhase,
                    to,
                });
                Ok(None)
            }
        }
    }
}

/// r_p / R_p for reporting: the shell boundary in the two-phase regime; 1
/// while the whole particle is still in the phase the current is consuming
/// and 0 once it has been converted.
fn boundary_fraction(state: &CellState, p: &CellParameters) -> f64 {
    match (&state.positive, state.regime.mode, state.branch) {
        (PositiveState::Shell(s), _, _) => s.r_p / p.r_p,
        (_, Mode::OnePhaseAlpha, Direction::Discharge) => 1.0,
        (_, Mode::OnePhaseBeta, Direction::Charge) => 1.0,
        _ => 0.0,
    }
}
