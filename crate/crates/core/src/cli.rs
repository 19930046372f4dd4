//! Command-line front end.

use crate::audit::{audit, AuditReport};
use crate::error::{Error, Result};
use crate::generate::{generate_scenario, GenerateConfig};
use crate::io;
use crate::optimizer::{minimize_time, BcdConfig, BisectionConfig, Probe};
use crate::routing::{build_initial_trajectory, InitScheme, InitialTrajectory};
use crate::scenario::{Direction, Mode, Scenario};
use crate::subproblems::{Allocation, DiscretePlan, Problem};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "uavran", version, about = "UAV trajectory and bandwidth/power planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shortest flight period meeting every average-rate requirement.
    PlanPeriodic(PlanArgs),
    /// Shortest one-time mission meeting every throughput requirement.
    PlanOnetime(PlanArgs),
    /// Write the initial trajectory for a given duration without optimising.
    InitOnly(InitArgs),
    /// Re-check a written plan against its scenario.
    Audit(AuditArgs),
    /// Write a random scenario file.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// tsp, pdp or circle; defaults to tsp (periodic) or pdp (one-time).
    #[arg(long, alias = "scheme")]
    pub init: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    #[arg(long = "eta-tol", default_value_t = 1e-3)]
    pub eta_tol: f64,
    #[arg(long = "t-tol", default_value_t = 1.0)]
    pub t_tol: f64,
    #[arg(long = "t-lower")]
    pub t_lower: Option<f64>,
    #[arg(long = "t-upper")]
    pub t_upper: Option<f64>,
    #[arg(long = "max-iter", default_value_t = 100)]
    pub max_iter: usize,
    /// Recorded in plan.json; the planners themselves are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub mode: String,
    #[arg(long, alias = "scheme")]
    pub init: Option<String>,
    /// Duration T in seconds.
    #[arg(long)]
    pub time: f64,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Directory holding plan.json and trajectory.csv.
    #[arg(long)]
    pub plan: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "n-users")]
    pub n_users: usize,
    #[arg(long = "box-side", default_value_t = 6000.0)]
    pub box_side: f64,
    /// Uplink-only users; with --downlink and --pairs defaults to all relay pairs.
    #[arg(long)]
    pub uplink: Option<usize>,
    #[arg(long)]
    pub downlink: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long = "rate-bps")]
    pub rate_bps: Option<f64>,
    #[arg(long = "throughput-bits")]
    pub throughput_bits: Option<f64>,
    /// Scenario file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct FlowRecord {
    flow: usize,
    user_id: u32,
    direction: &'static str,
    requirement: f64,
    achieved: f64,
    ratio: f64,
}

#[derive(Debug, Serialize)]
struct TourRecord {
    scheme: InitScheme,
    order_user_ids: Vec<u32>,
    route_length_m: f64,
    route_time_s: f64,
    case: u8,
    r_star_m: f64,
    heuristic: bool,
}

#[derive(Debug, Serialize)]
struct PlanRecord {
    command: &'static str,
    mode: &'static str,
    seed: u64,
    delta_t: f64,
    eta_tolerance: Option<f64>,
    t_tolerance: Option<f64>,
    t_star: Option<f64>,
    n_slots: usize,
    eta: f64,
    converged: bool,
    flows: Vec<FlowRecord>,
    eta_trace: Vec<f64>,
    probes: Vec<Probe>,
    tour: TourRecord,
    audit_passed: bool,
}

fn scheme_arg(s: &Option<String>, mode: Mode) -> Result<InitScheme> {
    match s {
        Some(s) => s.parse(),
        None => Ok(InitScheme::default_for(mode)),
    }
}

fn tour_record(scn: &Scenario, init: &InitialTrajectory) -> TourRecord {
    TourRecord {
        scheme: init.scheme,
        order_user_ids: init.order.iter().map(|&f| scn.user_id_of_flow(f)).collect(),
        route_length_m: init.route_length,
        route_time_s: init.route_time,
        case: init.case,
        r_star_m: init.r_star,
        heuristic: init.heuristic,
    }
}

fn flow_records(scn: &Scenario, mode: Mode, report: &AuditReport) -> Vec<FlowRecord> {
    (0..scn.n_flows())
        .map(|f| {
            let requirement = scn.requirement(mode, f).unwrap_or(f64::NAN);
            let achieved = report.achieved.get(f).copied().unwrap_or(f64::NAN);
            FlowRecord {
                flow: f + 1,
                user_id: scn.user_id_of_flow(f),
                direction: match scn.flows()[f].direction {
                    Direction::Uplink => "uplink",
                    Direction::Downlink => "downlink",
                },
                requirement,
                achieved,
                ratio: achieved / requirement,
            }
        })
        .collect()
}

fn write_outputs(out: &Path, scn: &Scenario, plan: &DiscretePlan, mut record: PlanRecord) -> Result<AuditReport> {
    std::fs::create_dir_all(out)?;
    let report = audit(scn, plan);
    record.flows = flow_records(scn, plan.mode, &report);
    record.audit_passed = report.passed();
    io::write_json(out.join("plan.json"), &record)?;
    io::write_trajectory_csv(out.join("trajectory.csv"), scn, plan)?;
    std::fs::write(out.join("audit.txt"), report.to_text())?;
    Ok(report)
}

fn plan(args: &PlanArgs, mode: Mode) -> Result<()> {
    let scn = Scenario::load(&args.scenario)?;
    let scheme = scheme_arg(&args.init, mode)?;
    let bcd = BcdConfig { eta_tolerance: args.eta_tol, max_iterations: args.max_iter, delta_t: args.dt };
    let bis = BisectionConfig { t_tolerance: args.t_tol, t_lower: args.t_lower, t_upper: args.t_upper };
    let res = minimize_time(&scn, mode, scheme, &bis, &bcd)?;
    let record = PlanRecord {
        command: match mode {
            Mode::Periodic => "plan-periodic",
            Mode::OneTime => "plan-onetime",
        },
        mode: mode.as_str(),
        seed: args.seed,
        delta_t: args.dt,
        eta_tolerance: Some(args.eta_tol),
        t_tolerance: Some(args.t_tol),
        t_star: Some(res.t_star),
        n_slots: res.plan.n_slots(),
        eta: res.plan.eta,
        converged: res.converged,
        flows: Vec::new(),
        eta_trace: res.trace.clone(),
        probes: res.probes.clone(),
        tour: tour_record(&scn, &res.init),
        audit_passed: false,
    };
    let report = write_outputs(&args.out, &scn, &res.plan, record)?;
    println!("T* = {} s, eta = {:.6}, audit {}", res.t_star, res.plan.eta, if report.passed() { "PASS" } else { "FAIL" });
    Ok(())
}

fn init_only(args: &InitArgs) -> Result<()> {
    let scn = Scenario::load(&args.scenario)?;
    let mode: Mode = args.mode.parse()?;
    let scheme = scheme_arg(&args.init, mode)?;
    if !(args.time > 0.0) {
        return Err(Error::Validation(format!("--time must be positive, got {}", args.time)));
    }
    let prob = Problem::new(&scn, mode, args.dt)?;
    let n = crate::optimizer::slots_for(args.time, args.dt);
    let init = build_initial_trajectory(&scn, mode, scheme, n, args.dt)?;
    let alloc = Allocation::equal_split(&prob, n);
    let eta = prob.eta(&init.q, &alloc);
    let plan = DiscretePlan { mode, delta_t: args.dt, q: init.q.clone(), alloc, eta };
    let record = PlanRecord {
        command: "init-only",
        mode: mode.as_str(),
        seed: args.seed,
        delta_t: args.dt,
        eta_tolerance: None,
        t_tolerance: None,
        t_star: None,
        n_slots: n,
        eta,
        converged: false,
        flows: Vec::new(),
        eta_trace: Vec::new(),
        probes: Vec::new(),
        tour: tour_record(&scn, &init),
        audit_passed: false,
    };
    write_outputs(&args.out, &scn, &plan, record)?;
    println!("initial trajectory: {n} slots, scheme {}, case {}", init.scheme.as_str(), init.case);
    Ok(())
}

/// Returns whether the plan passed.
fn audit_cmd(args: &AuditArgs) -> Result<bool> {
    let scn = Scenario::load(&args.scenario)?;
    let (mode, dt) = io::read_plan_header(args.plan.join("plan.json"))?;
    let plan = io::read_trajectory_csv(args.plan.join("trajectory.csv"), &scn, mode, dt)?;
    let report = audit(&scn, &plan);
    let text = report.to_text();
    print!("{text}");
    std::fs::write(args.plan.join("audit.txt"), &text)?;
    Ok(report.passed())
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let mut cfg = GenerateConfig::relay_only(args.seed, args.n_users, args.box_side);
    if args.uplink.is_some() || args.downlink.is_some() || args.pairs.is_some() {
        cfg.uplink = args.uplink.unwrap_or(0);
        cfg.downlink = args.downlink.unwrap_or(0);
        cfg.pairs = args.pairs.unwrap_or(0);
    }
    cfg.rate_bps = args.rate_bps;
    cfg.throughput_bits = args.throughput_bits;
    generate_scenario(&cfg)?.save(&args.out)
}

/// Runs a parsed command. `Ok(false)` means an audit found violations.
pub fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::PlanPeriodic(a) => plan(a, Mode::Periodic).map(|_| true),
        Command::PlanOnetime(a) => plan(a, Mode::OneTime).map(|_| true),
        Command::InitOnly(a) => init_only(a).map(|_| true),
        Command::Audit(a) => audit_cmd(a),
        Command::Generate(a) => generate(a).map(|_| true),
    }
}
