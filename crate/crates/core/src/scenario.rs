//! Subcommand runners and their output files.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};

use crate::boundary::{self, BOUNDARY_SAMPLES};
use crate::config::{load_initial_field, InitialConfig, ScenarioConfig};
use crate::contour::write_polyline;
use crate::critical_state::{self as cs, minimality_check, mk_residual, solve_step, StepInput};
use crate::error::{Error, Result};
use crate::evolution::{self as ev, electric_field, Evolution, InitialField};
use crate::geometry;
use crate::grid::{GridDomain, ScalarGrid};
use crate::minkowski::{self as mk, DistanceField, Geometry, RayFan, Side};
use crate::power_law::{self as pl, gamma_convergence_report, write_report};
use crate::testbank::{self as tb, TestBank};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Distance,
    Step,
    Evolve,
    Hysteresis,
    Gamma,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Distance => "distance",
            Command::Step => "step",
            Command::Evolve => "evolve",
            Command::Hysteresis => "hysteresis",
            Command::Gamma => "gamma",
        }
    }
}

/// Every numeric tolerance and default used by the library, by name.
pub fn tolerances() -> Vec<(&'static str, f64)> {
    vec![
        ("geometry.BODY_SAMPLES", geometry::BODY_SAMPLES as f64),
        ("geometry.FOURIER_MODES", geometry::FOURIER_MODES as f64),
        ("geometry.ZERO_TOL", geometry::ZERO_TOL),
        ("geometry.GRAD_STEP", geometry::GRAD_STEP),
        ("geometry.HESS_STEP", geometry::HESS_STEP),
        ("geometry.GOLDEN_TOL", geometry::GOLDEN_TOL),
        ("boundary.BOUNDARY_SAMPLES", BOUNDARY_SAMPLES as f64),
        ("boundary.FD_STEP", boundary::FD_STEP),
        ("minkowski.PROJECTION_SLACK", mk::PROJECTION_SLACK),
        ("minkowski.CLUSTER_GAP", mk::CLUSTER_GAP),
        ("minkowski.MAX_CLUSTERS", mk::MAX_CLUSTERS as f64),
        ("minkowski.THETA_TOL", mk::THETA_TOL),
        ("minkowski.CUT_TOL", mk::CUT_TOL),
        ("minkowski.MAX_DISTANCE_TOL", mk::MAX_DISTANCE_TOL),
        ("minkowski.RAY_NODES", mk::RAY_NODES as f64),
        ("minkowski.MAX_REFINEMENTS", mk::MAX_REFINEMENTS as f64),
        ("minkowski.OUTSIDE_TOL", mk::OUTSIDE_TOL),
        ("critical_state.LABEL_SLACK", cs::LABEL_SLACK),
        ("critical_state.LIPSCHITZ_SLACK", cs::LIPSCHITZ_SLACK),
        ("critical_state.FEASIBILITY_SLACK", cs::FEASIBILITY_SLACK),
        ("critical_state.MINIMALITY_TOL", cs::MINIMALITY_TOL),
        ("critical_state.DUAL_SUPPORT", cs::DUAL_SUPPORT),
        ("critical_state.NEAR_CUT_REACHES", cs::NEAR_CUT_REACHES),
        ("evolution.TIME_TOL", ev::TIME_TOL),
        ("evolution.FIELD_THRESHOLD", ev::FIELD_THRESHOLD),
        ("evolution.ADMISSIBILITY_SLACK", ev::ADMISSIBILITY_SLACK),
        ("evolution.DRIVE_JUMP_TOL", ev::DRIVE_JUMP_TOL),
        ("evolution.LOOP_SAMPLES", ev::LOOP_SAMPLES as f64),
        ("evolution.LOOP_SNAPSHOTS", ev::LOOP_SNAPSHOTS as f64),
        ("power_law.ARMIJO_C", pl::ARMIJO_C),
        ("power_law.ARMIJO_SHRINK", pl::ARMIJO_SHRINK),
        ("power_law.STALL_TOL", pl::STALL_TOL),
        ("power_law.STALL_WINDOW", pl::STALL_WINDOW as f64),
        ("power_law.MAX_ITERATIONS", pl::MAX_ITERATIONS as f64),
        ("power_law.WARM_START_SHRINK", pl::WARM_START_SHRINK),
        ("power_law.HISTORY", pl::HISTORY as f64),
        ("power_law.RHO_FLOOR", pl::RHO_FLOOR),
        ("power_law.INITIAL_STEP", pl::INITIAL_STEP),
        ("testbank.BANK_SIZE", tb::BANK_SIZE as f64),
        ("testbank.BANK_SEED", tb::BANK_SEED as f64),
        ("testbank.BANK_MARGIN", tb::BANK_MARGIN),
    ]
}

/// Writes `manifest.toml`: command, version, seed, tolerances and the parsed config.
pub fn write_manifest(out: &Path, command: Command, cfg: &ScenarioConfig, seed: u64) -> Result<()> {
    let mut table = toml::Table::new();
    table.insert("command".into(), command.name().into());
    table.insert("version".into(), VERSION.into());
    let seed_value = match i64::try_from(seed) {
        Ok(s) => toml::Value::Integer(s),
        Err(_) => toml::Value::String(seed.to_string()),
    };
    table.insert("seed".into(), seed_value);
    let mut tol = toml::Table::new();
    for (name, value) in tolerances() {
        tol.insert(name.into(), toml::Value::Float(value));
    }
    table.insert("tolerances".into(), toml::Value::Table(tol));
    let echo = toml::Value::try_from(cfg).map_err(|e| Error::Format(e.to_string()))?;
    table.insert("config".into(), echo);
    let text = toml::to_string(&table).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(out.join("manifest.toml"), text)?;
    Ok(())
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn write_grid(out: &Path, name: &str, g: &ScalarGrid) -> Result<()> {
    g.write_csv(create(out, name)?)
}

fn flag_grid(domain: &Arc<GridDomain>, flags: &[bool]) -> ScalarGrid {
    let vals = flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    ScalarGrid::from_values(domain.clone(), vals).expect("flags are finite")
}

/// Geometry, grid, fan and distance fields shared by all subcommands.
pub struct Setup {
    pub geometry: Geometry,
    pub domain: Arc<GridDomain>,
    pub fan: RayFan,
    pub field: DistanceField,
}

impl Setup {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let omega = cfg.boundary()?;
        let body = cfg.body()?;
        let geometry = Geometry::new(omega, body)?;
        let domain = GridDomain::new(geometry.omega(), cfg.grid.resolution)?;
        let fan = geometry.ray_fan()?;
        let field = geometry.distance_field(&domain);
        info!(
            "grid {}x{}, {} inside cells, {} rays",
            domain.spec().nx,
            domain.spec().ny,
            domain.inside().len(),
            fan.plus.len()
        );
        Ok(Setup {
            geometry,
            domain,
            fan,
            field,
        })
    }
}

/// Runs `command` and writes its files and the manifest into `out`.
///
/// `base` resolves relative paths inside the config.
pub fn run_scenario(
    command: Command,
    cfg: &ScenarioConfig,
    base: &Path,
    out: &Path,
    seed: u64,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_manifest(out, command, cfg, seed)?;
    let setup = Setup::new(cfg)?;
    match command {
        Command::Distance => run_distance(&setup, out),
        Command::Step => run_step(&setup, cfg, base, out, seed),
        Command::Evolve => run_evolve(&setup, cfg, base, out, seed),
        Command::Hysteresis => run_hysteresis(&setup, cfg, base, out),
        Command::Gamma => run_gamma(&setup, cfg, base, out),
    }
}

fn run_distance(s: &Setup, out: &Path) -> Result<()> {
    write_grid(out, "d.csv", &s.field.plus.distance)?;
    write_grid(out, "d_minus.csv", &s.field.minus.distance)?;
    write_grid(out, "singular.csv", &flag_grid(&s.domain, &s.field.plus.singular))?;
    write_grid(
        out,
        "singular_minus.csv",
        &flag_grid(&s.domain, &s.field.minus.singular),
    )?;
    s.fan.write_csv(create(out, "fan.csv")?)?;
    let mut w = csv::Writer::from_writer(create(out, "distance_summary.csv")?);
    w.write_record(["side", "max_distance", "max_cut", "singular_cells"])?;
    for (name, side) in [("plus", Side::Plus), ("minus", Side::Minus)] {
        let sf = s.field.side(side);
        w.write_record([
            name.to_string(),
            s.geometry.max_distance(&s.fan, side).to_string(),
            s.fan.side(side).max_cut().to_string(),
            sf.singular.iter().filter(|&&b| b).count().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn bank(s: &Setup, size: usize, seed: u64) -> Result<TestBank> {
    TestBank::new(s.geometry.omega(), size, seed, tb::BANK_MARGIN)
}

fn run_step(s: &Setup, cfg: &ScenarioConfig, base: &Path, out: &Path, seed: u64) -> Result<()> {
    let ubar = cfg
        .step
        .ubar
        .to_grid(&s.domain, base)
        .map_err(input_error("step.ubar.path"))?;
    let formula = cfg.step.ubar.formula();
    let mut input = StepInput::new(&s.geometry, &s.fan, &s.field, &ubar)?;
    if let Some(f) = &formula {
        input = input.with_exact(f.as_ref());
    }
    let step = solve_step(&input)?;
    write_grid(out, "u.csv", &step.u)?;
    write_grid(out, "v.csv", &step.v)?;
    write_grid(out, "labels.csv", &step.label_grid())?;

    let mut w = csv::Writer::from_writer(create(out, "lambda.csv")?);
    w.write_record(["theta", "lambda", "lambda_minus"])?;
    for ((r, l), lm) in s.fan.plus.rays.iter().zip(&step.lambda).zip(&step.lambda_minus) {
        w.write_record([r.data.theta.to_string(), l.to_string(), lm.to_string()])?;
    }
    w.flush()?;

    let residual = mk_residual(&input, &step, &bank(s, cfg.step.bank_size, seed)?);
    let minimality = minimality_check(&input, &step.u, cfg.step.trials, seed)?;
    let mut w = csv::Writer::from_writer(create(out, "step_summary.csv")?);
    w.write_record(["quantity", "value"])?;
    let rows: [(&str, String); 8] = [
        ("mk_residual", residual.residual.to_string()),
        ("rho_deviation", residual.rho_deviation.to_string()),
        ("checked_cells", residual.checked_cells.to_string()),
        ("singular_skipped", step.singular_skipped.to_string()),
        ("minimality_trials", minimality.trials.to_string()),
        ("minimality_violations", minimality.violations.to_string()),
        ("minimality_worst_margin", minimality.worst_margin.to_string()),
        (
            "objective",
            cs::objective(&s.geometry, &step.u, &ubar)?.to_string(),
        ),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;
    info!(
        "step: residual {:.3e}, {} minimality violations",
        residual.residual, minimality.violations
    );
    Ok(())
}

/// Maps input-file errors to config errors naming `key`.
fn input_error(key: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config { .. } => e,
        Error::Io(_) | Error::Csv(_) | Error::Format(_) | Error::ShapeMismatch { .. } => Error::Config {
            key: key.into(),
            msg: e.to_string(),
        },
        other => other,
    }
}

fn initial_field(s: &Setup, cfg: &ScenarioConfig, base: &Path) -> Result<InitialField> {
    Ok(match &cfg.initial {
        InitialConfig::Zero => InitialField::Uniform,
        InitialConfig::Csv { path } => InitialField::Grid(
            load_initial_field(&base.join(path), s.domain.clone()).map_err(input_error("initial.path"))?,
        ),
    })
}

fn evolution<'a>(s: &'a Setup, cfg: &ScenarioConfig, base: &Path) -> Result<Evolution<'a>> {
    let drive = cfg.drive()?;
    let initial = initial_field(s, cfg, base)?;
    Evolution::new(&s.geometry, &s.fan, &s.field, drive, initial)
}

fn output_times(cfg: &ScenarioConfig, a: f64, b: f64) -> Result<Vec<f64>> {
    if !cfg.evolve.times.is_empty() {
        if let Some(&t) = cfg.evolve.times.iter().find(|&&t| !(a..=b).contains(&t)) {
            return Err(Error::Config {
                key: "evolve.times".into(),
                msg: format!("time {t} lies outside the drive span [{a}, {b}]"),
            });
        }
        return Ok(cfg.evolve.times.clone());
    }
    let n = cfg.evolve.samples.max(2);
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

fn run_evolve(s: &Setup, cfg: &ScenarioConfig, base: &Path, out: &Path, seed: u64) -> Result<()> {
    let evo = evolution(s, cfg, base)?;
    let drive = evo.drive();
    let times = output_times(cfg, drive.start(), drive.end())?;
    let bank = bank(s, cfg.evolve.bank_size, seed)?;

    let mut tw = csv::Writer::from_writer(create(out, "times.csv")?);
    tw.write_record(["index", "t", "Hs", "faraday_residual", "front_pieces"])?;
    for (i, &t) in times.iter().enumerate() {
        let h = evo.closed_form_field(t)?;
        let w = evo.dissipation_field(t)?;
        let e = electric_field(&s.geometry, &h, &w);
        let source = evo.field_rate(t)?.map(|r| -r);
        let faraday = bank.weak_residual(&e, &source);
        write_grid(out, &format!("h_{i:03}.csv"), &h)?;
        write_grid(out, &format!("w_{i:03}.csv"), &w)?;
        e.write_csv(create(out, &format!("e_{i:03}.csv"))?)?;
        let fronts = match evo.penetration_front(t) {
            Ok(lines) => lines,
            Err(Error::EmptyFront(_)) | Err(Error::InvalidField(_)) => Vec::new(),
            Err(e) => return Err(e),
        };
        for (j, line) in fronts.iter().enumerate() {
            write_polyline(line, create(out, &format!("front_{i:03}_{j}.csv"))?)?;
        }
        tw.write_record([
            i.to_string(),
            t.to_string(),
            drive.value(t).to_string(),
            faraday.to_string(),
            fronts.len().to_string(),
        ])?;
    }
    tw.flush()?;

    let mut pw = csv::Writer::from_writer(create(out, "penetration.csv")?);
    pw.write_record(["piece", "t0", "t1", "full_penetration_time"])?;
    for (k, p) in drive.pieces().iter().enumerate() {
        let tau = evo.full_penetration_time(k)?;
        pw.write_record([
            k.to_string(),
            p.t0.to_string(),
            p.t1.to_string(),
            tau.map_or(String::new(), |t| t.to_string()),
        ])?;
    }
    pw.flush()?;
    Ok(())
}

fn run_hysteresis(s: &Setup, cfg: &ScenarioConfig, base: &Path, out: &Path) -> Result<()> {
    let evo = evolution(s, cfg, base)?;
    let lp = evo.hysteresis_loop(cfg.hysteresis.samples_per_piece)?;
    lp.write_csv(create(out, "loop.csv")?)?;
    write_grid(out, "terminal.csv", &lp.terminal)?;
    let mut w = csv::Writer::from_writer(create(out, "snapshots.csv")?);
    w.write_record(["index", "t", "Hs", "file"])?;
    for (i, (t, g)) in lp.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i}.csv");
        write_grid(out, &name, g)?;
        w.write_record([
            i.to_string(),
            t.to_string(),
            evo.drive().value(*t).to_string(),
            name,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_gamma(s: &Setup, cfg: &ScenarioConfig, base: &Path, out: &Path) -> Result<()> {
    let ubar = cfg
        .gamma
        .ubar
        .to_grid(&s.domain, base)
        .map_err(input_error("gamma.ubar.path"))?;
    let formula = cfg.gamma.ubar.formula();
    let mut input = StepInput::new(&s.geometry, &s.fan, &s.field, &ubar)?;
    if let Some(f) = &formula {
        input = input.with_exact(f.as_ref());
    }
    let u = cs::explicit_minimizer(&input)?;
    let body = s.geometry.body(Side::Plus);
    let (rows, solutions) = gamma_convergence_report(&ubar, &u, body, &cfg.gamma.exponents)?;
    write_report(&rows, create(out, "gamma.csv")?)?;
    write_grid(out, "u.csv", &u)?;
    for (i, v) in solutions.iter().enumerate() {
        write_grid(out, &format!("u_p_{i}.csv"), v)?;
    }
    for r in &rows {
        info!("p = {}: gap {:.3e}, {} iterations", r.p, r.gap_l2, r.iterations);
        if !r.liminf_ok {
            warn!("p = {}: J(u) exceeds J_p(u_p) + |u - u_p|", r.p);
        }
    }
    if let Some(r) = rows.iter().find(|r| !r.converged) {
        return Err(Error::NonConvergence {
            iterations: r.iterations,
            residual: r.last_decrease,
        });
    }
    Ok(())
}

/// Resolves the output directory: `--out`, then the config's `out`, then `./out`.
pub fn output_dir(cli: Option<&Path>, cfg: &ScenarioConfig, base: &Path) -> PathBuf {
    match (cli, &cfg.out) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => base.join(p),
        (None, None) => PathBuf::from("out"),
    }
}

/// Exit status for an error: 2 for configuration problems, 3 for numerical failures,
/// 1 for output I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::Io(_) | Error::Csv(_) => 1,
        _ => 3,
    }
}
