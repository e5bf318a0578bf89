//! Command-line front end: simulate, identify, ocp, check, twin.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use espm::checks;
use espm::config::{load_config_with_overrides, reference_parameters, CellConfig, NegativeOcp};
use espm::identify::{identify, twin_pair, Bounds, Dataset, IdentificationProblem, TwinSettings};
use espm::positive::Direction;
use espm::sim::{CellModel, CurrentProfile, Sampling, SimOptions, SimulationTrace};
use espm::voltage::{ocp_negative, ocp_positive};

const EXIT_FAILED_CHECK: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SIMULATION: u8 = 3;
const EXIT_DATASET: u8 = 4;
const EXIT_INFEASIBLE: u8 = 5;

#[derive(Parser)]
#[command(
    name = "espm",
    version,
    about = "Core-shell single particle model of LiFePO4 cells"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a constant-current run or a current schedule.
    Simulate(SimulateArgs),
    /// Identify the parameter vector from charge/discharge data.
    Identify(IdentifyArgs),
    /// Tabulate the open-circuit potentials.
    Ocp(OcpArgs),
    /// Run the invariant suite and report pass/fail per check.
    Check(CheckArgs),
    /// Write synthetic C/12 charge and discharge datasets.
    Twin(TwinArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, env = "ESPM_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Replace a configuration entry, e.g. N_r=60 or R_l=0.002.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Charge,
    Discharge,
}

impl From<ModeArg> for Direction {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Charge => Direction::Charge,
            ModeArg::Discharge => Direction::Discharge,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// C-rate as a number or fraction, e.g. 1/12.
    #[arg(long = "crate", default_value = "1/12")]
    c_rate: String,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Current schedule CSV with columns t_s, I_A (replaces --crate/--mode).
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Initial state of charge; defaults to 1 for discharge, 0 for charge.
    #[arg(long)]
    soc0: Option<f64>,
    /// Stop time, s; defaults to one full C-rate period or the schedule end.
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, default_value_t = checks::V_MIN)]
    v_min: f64,
    #[arg(long, default_value_t = checks::V_MAX)]
    v_max: f64,
    /// Output sampling interval, s.
    #[arg(long, default_value_t = 60.0)]
    dt: f64,
    /// Also write plots.svg.
    #[arg(long)]
    svg: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    charge: Option<PathBuf>,
    #[arg(long)]
    discharge: Option<PathBuf>,
    /// JSON map of parameter name to [lower, upper]; defaults to the
    /// reference box.
    #[arg(long)]
    bounds: Option<PathBuf>,
    /// Nominal capacity for Coulomb counting, Ah; defaults to q_nom.
    #[arg(long)]
    q_nom: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    soc0_charge: f64,
    #[arg(long, default_value_t = 1.0)]
    soc0_discharge: f64,
    #[arg(long, default_value_t = 60)]
    swarm: usize,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    svg: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct OcpArgs {
    /// Configuration selecting the graphite curve; the bundled fit otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CheckArgs {
    /// Configuration to check; the reference cell otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TwinArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 120.0)]
    dt: f64,
    /// Voltage noise standard deviation, V.
    #[arg(long, default_value_t = 0.002)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(
        EXIT_FAILED_CHECK,
        format!("cannot write {}: {e}", path.display()),
    )
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    arguments: Vec<String>,
    config_path: Option<String>,
    config_file_sha256: Option<String>,
    /// Hash of the configuration after overrides, as simulated.
    resolved_config_sha256: Option<String>,
    overrides: Vec<String>,
    seed: Option<u64>,
    outputs: Vec<String>,
}

impl Manifest {
    fn new(command: &'static str, common: &Common) -> Self {
        Manifest {
            tool: "espm",
            version: env!("CARGO_PKG_VERSION"),
            command,
            arguments: std::env::args().skip(1).collect(),
            config_path: None,
            config_file_sha256: None,
            resolved_config_sha256: None,
            overrides: common.overrides.clone(),
            seed: None,
            outputs: Vec::new(),
        }
    }

    fn with_config(mut self, path: &Path, config: &CellConfig) -> Self {
        self.config_path = Some(path.display().to_string());
        self.config_file_sha256 = fs::read(path).ok().map(|b| sha256(&b));
        self.resolved_config_sha256 = Some(sha256(config.to_json_string().as_bytes()));
        self
    }
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_failure(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, mut manifest: Manifest) -> Result<(), Failure> {
        manifest.outputs = std::mem::take(&mut self.written);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        self.write("manifest.json", &text)
    }
}

fn load(path: &Path, overrides: &[String]) -> Result<CellConfig, Failure> {
    load_config_with_overrides(path, overrides)
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))
}

fn parse_rate(text: &str) -> Result<f64, Failure> {
    let bad = || Failure::new(EXIT_CONFIG, format!("bad C-rate `{text}`"));
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        }
        None => text.trim().parse().map_err(|_| bad())?,
    };
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(bad())
    }
}

fn read_schedule(path: &Path) -> Result<Vec<(f64, f64)>, Failure> {
    let fail = |m: String| Failure::new(EXIT_CONFIG, format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| fail(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail(format!("missing column {name}")))
    };
    let (ct, ci) = (col("t_s")?, col("I_A")?);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| fail(format!("row {row}: {e}")))?;
        let num = |c: usize| -> Result<f64, Failure> {
            rec.get(c)
                .unwrap_or("")
                .parse()
                .map_err(|_| fail(format!("row {row}: not a number")))
        };
        out.push((num(ct)?, num(ci)?));
    }
    if out.is_empty() {
        return Err(fail("empty schedule".into()));
    }
    Ok(out)
}

fn trace_csv(trace: &SimulationTrace) -> String {
    let mut out = SimulationTrace::CSV_HEADER.join(",");
    out.push('\n');
    for row in trace.csv_rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn trace_plots(trace: &SimulationTrace) -> String {
    let series = |label: &str, x: &[f64], y: &[f64]| svg::Series {
        label: label.into(),
        points: x.iter().copied().zip(y.iter().copied()).collect(),
    };
    svg::render(&[
        svg::Panel {
            x_label: "capacity (Ah)".into(),
            y_label: "voltage (V)".into(),
            series: vec![series("V", &trace.q_throughput, &trace.voltage)],
        },
        svg::Panel {
            x_label: "time (s)".into(),
            y_label: "SOC (-)".into(),
            series: vec![
                series("SOC_n", &trace.t, &trace.soc_n),
                series("SOC_p", &trace.t, &trace.soc_p),
            ],
        },
        svg::Panel {
            x_label: "time (s)".into(),
            y_label: "r_p / R_p (-)".into(),
            series: vec![series("r_p/R_p", &trace.t, &trace.rp_over_rp)],
        },
    ])
}

fn run_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let config = load(&args.config, &args.common.overrides)?;
    let model =
        CellModel::from_config(&config).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let (segments, default_end, direction) = match (&args.schedule, args.mode) {
        (Some(path), _) => {
            let segments = read_schedule(path)?;
            let end = segments.last().map(|s| s.0).unwrap_or(0.0);
            let first = segments
                .iter()
                .find_map(|s| Direction::of_current(s.1))
                .unwrap_or(Direction::Discharge);
            (segments, end, first)
        }
        (None, Some(mode)) => {
            let rate = parse_rate(&args.c_rate)?;
            let direction = Direction::from(mode);
            let current = direction.sign() * rate * config.params.q_nom;
            (vec![(0.0, current)], 3600.0 / rate, direction)
        }
        (None, None) => {
            return Err(Failure::new(
                EXIT_CONFIG,
                "either --mode or --schedule is required",
            ));
        }
    };
    let soc0 = args.soc0.unwrap_or(match direction {
        Direction::Discharge => 1.0,
        Direction::Charge => 0.0,
    });
    let profile = CurrentProfile {
        segments,
        t_end: args.t_end.unwrap_or(default_end),
        v_min: Some(args.v_min),
        v_max: Some(args.v_max),
        capacity_limit: None,
    };
    if args.dt.is_nan() || args.dt <= 0.0 {
        return Err(Failure::new(EXIT_CONFIG, "--dt must be positive"));
    }
    let init = model
        .initial_state(soc0, direction)
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let opts = SimOptions {
        sampling: Sampling::Uniform(args.dt),
        ..SimOptions::default()
    };
    let (trace, err) = model.simulate_partial(&profile, &init, &opts);
    let mut out = Output::create(&args.common.out)?;
    out.write("trace.csv", &trace_csv(&trace))?;
    if args.svg {
        out.write("plots.svg", &trace_plots(&trace))?;
    }
    out.finish(Manifest::new("simulate", &args.common).with_config(&args.config, &config))?;
    if let Some(e) = err {
        let last = trace
            .t
            .last()
            .map_or(String::from("start"), |t| format!("{t} s"));
        return Err(Failure::new(
            EXIT_SIMULATION,
            format!("simulation failed: {e} (last sample at {last})"),
        ));
    }
    for tr in &trace.transitions {
        eprintln!("t = {:.1} s: {:?} -> {:?}", tr.t, tr.from, tr.to);
    }
    Ok(())
}

fn load_dataset(path: &Path, q_nom: f64, soc0: f64) -> Result<Dataset, Failure> {
    Dataset::from_path(path, q_nom, soc0)
        .map_err(|e| Failure::new(EXIT_DATASET, format!("{}: {e}", path.display())))
}

fn run_identify(args: &IdentifyArgs) -> Result<(), Failure> {
    let config = load(&args.config, &args.common.overrides)?;
    let q_nom = args.q_nom.unwrap_or(config.params.q_nom);
    let mut datasets = Vec::new();
    for (path, soc0, expected) in [
        (&args.charge, args.soc0_charge, Direction::Charge),
        (&args.discharge, args.soc0_discharge, Direction::Discharge),
    ] {
        if let Some(path) = path {
            let ds = load_dataset(path, q_nom, soc0)?;
            if ds.direction != expected {
                return Err(Failure::new(
                    EXIT_DATASET,
                    format!(
                        "{}: current sign does not match a {expected:?} dataset",
                        path.display()
                    ),
                ));
            }
            datasets.push(ds);
        }
    }
    if datasets.is_empty() {
        return Err(Failure::new(
            EXIT_CONFIG,
            "at least one of --charge/--discharge is required",
        ));
    }
    let mut problem = IdentificationProblem::new(config.clone(), datasets);
    if let Some(path) = &args.bounds {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
        problem.bounds =
            Bounds::from_json_str(&text).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    }
    problem.pso.swarm = args.swarm;
    problem.pso.iterations = args.iterations;
    problem.pso.seed = args.seed;
    let result = identify(&problem).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let mut out = Output::create(&args.common.out)?;
    out.write("identification.json", &result.to_json_string())?;
    out.write("table.csv", &problem.bounds.table_csv(&result.theta))?;
    let mut panels = Vec::new();
    for (k, ds) in problem.datasets.iter().enumerate() {
        let name = ds.direction.name();
        let Ok((trace, _)) = problem.simulate(&result.theta, k) else {
            continue;
        };
        let soc = ds.soc_exp();
        let last = trace.len() - 1;
        let mut csv = String::from("t_s,V_exp_V,V_model_V,SOC_exp,SOC_n,SOC_p\n");
        for (j, s) in ds.samples.iter().enumerate() {
            let i = j.min(last);
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.t, s.voltage, trace.voltage[i], soc[j], trace.soc_n[i], trace.soc_p[i]
            ));
        }
        out.write(&format!("fit_{name}.csv"), &csv)?;
        panels.push(svg::Panel {
            x_label: format!("{name}: time (s)"),
            y_label: "voltage (V)".into(),
            series: vec![
                svg::Series {
                    label: "data".into(),
                    points: ds.samples.iter().map(|s| (s.t, s.voltage)).collect(),
                },
                svg::Series {
                    label: "model".into(),
                    points: trace
                        .t
                        .iter()
                        .copied()
                        .zip(trace.voltage.iter().copied())
                        .collect(),
                },
            ],
        });
    }
    if args.svg && !panels.is_empty() {
        out.write("fit.svg", &svg::render(&panels))?;
    }
    let mut manifest = Manifest::new("identify", &args.common).with_config(&args.config, &config);
    manifest.seed = Some(args.seed);
    out.finish(manifest)?;
    println!(
        "J = {:.6e}, penalty = {:.3e}, evaluations = {}",
        result.evaluation.cost, result.evaluation.penalty, result.evaluations
    );
    if !result.feasible() {
        return Err(Failure::new(
            EXIT_INFEASIBLE,
            "identified vector violates the constraints",
        ));
    }
    Ok(())
}

fn run_ocp(args: &OcpArgs) -> Result<(), Failure> {
    let (ocp_n, config) = match &args.config {
        Some(path) => {
            let cfg = load(path, &args.common.overrides)?;
            (cfg.model.ocp_negative.clone(), Some((path, cfg)))
        }
        None => (NegativeOcp::default(), None),
    };
    let mut csv = String::from("theta,U_p_discharge_V,U_p_charge_V,U_n_V\n");
    let (mut dis, mut cha, mut neg) = (Vec::new(), Vec::new(), Vec::new());
    for k in 1..1000 {
        let theta = k as f64 * 1e-3;
        let d = ocp_positive(theta, Direction::Discharge).expect("theta inside (0, 1)");
        let c = ocp_positive(theta, Direction::Charge).expect("theta inside (0, 1)");
        let n = ocp_negative(theta, &ocp_n).expect("theta inside (0, 1)");
        csv.push_str(&format!("{theta},{d},{c},{n}\n"));
        dis.push((theta, d));
        cha.push((theta, c));
        neg.push((theta, n));
    }
    let mut out = Output::create(&args.common.out)?;
    out.write("ocp.csv", &csv)?;
    if args.svg {
        let series = |label: &str, points: Vec<(f64, f64)>| svg::Series {
            label: label.into(),
            points,
        };
        out.write(
            "ocp.svg",
            &svg::render(&[
                svg::Panel {
                    x_label: "theta_p (-)".into(),
                    y_label: "U_p (V)".into(),
                    series: vec![series("discharge", dis), series("charge", cha)],
                },
                svg::Panel {
                    x_label: "theta_n (-)".into(),
                    y_label: "U_n (V)".into(),
                    series: vec![series("graphite", neg)],
                },
            ]),
        )?;
    }
    let mut manifest = Manifest::new("ocp", &args.common);
    if let Some((path, cfg)) = config {
        manifest = manifest.with_config(path, &cfg);
    }
    out.finish(manifest)
}

#[derive(Serialize)]
struct CheckLine {
    name: String,
    value: f64,
    limit: f64,
    pass: bool,
}

fn run_check(args: &CheckArgs) -> Result<(), Failure> {
    let config = match &args.config {
        Some(path) => load(path, &args.common.overrides)?,
        None => {
            let text = CellConfig {
                params: reference_parameters(),
                model: Default::default(),
            }
            .to_json_string();
            CellConfig::from_json_with_overrides(&text, &args.common.overrides)
                .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?
        }
    };
    let sim_fail = |e: espm::SimError| Failure::new(EXIT_SIMULATION, e.to_string());
    let mut lines = Vec::new();
    let mut push = |name: String, value: f64, limit: f64| {
        lines.push(CheckLine {
            pass: value < limit,
            name,
            value,
            limit,
        })
    };
    for direction in [Direction::Discharge, Direction::Charge] {
        let r = checks::conservation(&config, direction).map_err(sim_fail)?;
        let tag = format!("{direction:?}").to_lowercase();
        push(
            format!("{tag}: electrolyte lithium drift"),
            r.electrolyte_drift,
            1e-6,
        );
        push(
            format!("{tag}: negative Coulomb bookkeeping"),
            r.bookkeeping_n,
            5e-3,
        );
        push(
            format!("{tag}: positive Coulomb bookkeeping"),
            r.bookkeeping_p,
            5e-3,
        );
        push(
            format!("{tag}: boundary-flux identity"),
            r.flux_identity,
            1e-12,
        );
        push(format!("{tag}: runtime (s)"), r.runtime_s, 10.0);
        let rms = checks::shell_grid_convergence(&config, direction, 30, 60).map_err(sim_fail)?;
        push(format!("{tag}: N_r 30 -> 60 voltage RMS (V)"), rms, 1e-3);
    }
    let eq = checks::matrix_equivalence(&config, 100, 1)
        .map_err(|e| Failure::new(EXIT_SIMULATION, e.to_string()))?;
    push("matrix form vs nodal rhs".into(), eq, 1e-14);
    for l in &lines {
        println!(
            "{} {:<45} {:.3e} (limit {:.0e})",
            if l.pass { "PASS" } else { "FAIL" },
            l.name,
            l.value,
            l.limit
        );
    }
    let mut out = Output::create(&args.common.out)?;
    out.write(
        "check.json",
        &serde_json::to_string_pretty(&lines).expect("json"),
    )?;
    let mut manifest = Manifest::new("check", &args.common);
    if let Some(path) = &args.config {
        manifest = manifest.with_config(path, &config);
    }
    out.finish(manifest)?;
    let failed = lines.iter().filter(|l| !l.pass).count();
    if failed > 0 {
        return Err(Failure::new(
            EXIT_FAILED_CHECK,
            format!("{failed} check(s) failed"),
        ));
    }
    Ok(())
}

fn run_twin(args: &TwinArgs) -> Result<(), Failure> {
    let config = load(&args.config, &args.common.overrides)?;
    let settings = TwinSettings {
        dt: args.dt,
        noise: args.noise,
        seed: args.seed,
        ..TwinSettings::default()
    };
    let pair = twin_pair(&config, &config.params.theta(), &settings)
        .map_err(|e| Failure::new(EXIT_SIMULATION, e.to_string()))?;
    let mut out = Output::create(&args.common.out)?;
    for ds in &pair {
        let name = format!("{:?}", ds.direction).to_lowercase();
        out.write(&format!("{name}.csv"), &ds.to_csv_string())?;
    }
    let mut manifest = Manifest::new("twin", &args.common).with_config(&args.config, &config);
    manifest.seed = Some(args.seed);
    out.finish(manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Identify(a) => run_identify(a),
        Command::Ocp(a) => run_ocp(a),
        Command::Check(a) => run_check(a),
        Command::Twin(a) => run_twin(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
