//! Acceptance suite; prints one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use beancrit::boundary::{DomainBoundary, DomainShape, FourierMode};
use beancrit::critical_state::{explicit_minimizer, minimality_check, mk_residual, solve_step, StepInput};
use beancrit::evolution::{discrete_path, DrivePiece, DriveProfile, Evolution, InitialField};
use beancrit::grid::{GridDomain, ScalarGrid};
use beancrit::minkowski::{DistanceField, Geometry, RayFan, Side};
use beancrit::power_law::{gamma_convergence_report, DEFAULT_EXPONENTS};
use beancrit::testbank::{TestBank, BANK_MARGIN, BANK_SEED, BANK_SIZE};
use beancrit::{ConvexBody, Result, Vec2};

struct Case {
    geometry: Geometry,
    domain: Arc<GridDomain>,
    fan: RayFan,
    field: DistanceField,
}

impl Case {
    fn new(omega: DomainBoundary, body: ConvexBody, res: usize) -> Result<Self> {
        let geometry = Geometry::new(omega, body)?;
        let domain = GridDomain::new(geometry.omega(), res)?;
        let fan = geometry.ray_fan()?;
        let field = geometry.distance_field(&domain);
        Ok(Case {
            geometry,
            domain,
            fan,
            field,
        })
    }

    fn evolution(&self, drive: DriveProfile) -> Result<Evolution<'_>> {
        Evolution::new(
            &self.geometry,
            &self.fan,
            &self.field,
            drive,
            InitialField::Uniform,
        )
    }

    fn bank(&self) -> Result<TestBank> {
        TestBank::new(self.geometry.omega(), BANK_SIZE, BANK_SEED, BANK_MARGIN)
    }
}

fn disk_disk(res: usize) -> Result<Case> {
    Case::new(DomainBoundary::disk(1.0)?, ConvexBody::disk(1.0)?, res)
}

fn perturbed_disk(amplitude: f64) -> Result<DomainBoundary> {
    DomainBoundary::new(
        DomainShape::PerturbedDisk {
            radius: 1.0,
            modes: vec![FourierMode {
                k: 3,
                amplitude,
                phase: 0.0,
            }],
            center: Vec2::zeros(),
        },
        2048,
    )
}

fn cassini() -> Result<DomainBoundary> {
    DomainBoundary::new(
        DomainShape::Cassini {
            a: 1.2,
            c: 1.0,
            center: Vec2::zeros(),
        },
        2048,
    )
}

fn offset_ellipse() -> Result<ConvexBody> {
    ConvexBody::ellipse(1.5, 0.8, Vec2::new(0.4, -0.2))
}

struct Outcome {
    passed: bool,
    detail: String,
}

type Criterion = fn() -> Result<Outcome>;

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

/// Disk/disk analytic suite at 512² with a 2048-ray fan.
fn disk_disk_suite() -> Result<Outcome> {
    let start = Instant::now();
    let case = disk_disk(512)?;
    let spec = *case.domain.spec();
    let mut d_err: f64 = 0.0;
    for &k in case.domain.inside() {
        let r = spec.point_at(k).norm();
        d_err = d_err.max((case.field.plus.distance.values()[k] - (1.0 - r)).abs());
    }
    let rays = &case.fan.plus.rays;
    let cut_err = rays.iter().map(|r| (r.cut - 1.0).abs()).fold(0.0, f64::max);
    let kappa_err = rays
        .iter()
        .map(|r| (r.data.kappa - 1.0).abs())
        .fold(0.0, f64::max);

    let a = 1.0;
    let evo = case.evolution(DriveProfile::linear(2.0, a)?)?;
    let w = evo.dissipation_field(2.0)?;
    let mut w_err: f64 = 0.0;
    for &k in case.domain.inside() {
        let r = spec.point_at(k).norm();
        if r < 0.05 || case.field.plus.singular[k] {
            continue;
        }
        let exact = a * r / 2.0;
        w_err = w_err.max((w.values()[k] - exact).abs() / exact);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        d_err <= 1e-6 && cut_err <= 1e-3 && kappa_err <= 1e-3 && w_err <= 1e-3 && secs < 60.0,
        format!(
            "max|d-(1-r)| = {d_err:.2e}, max|l-1| = {cut_err:.2e}, max|kappa-1| = {kappa_err:.2e}, \
             max rel |w-ar/2| = {w_err:.2e}, {secs:.1} s"
        ),
    )
}

/// `ū = 1 - x` on the unit disk: the clipping length vanishes only at `θ = 0`.
fn clipping_example() -> Result<Outcome> {
    let case = disk_disk(256)?;
    let f = |x: Vec2| 1.0 - x.x;
    let ubar = ScalarGrid::sample(case.domain.clone(), &f);
    let input = StepInput::new(&case.geometry, &case.fan, &case.field, &ubar)?.with_exact(&f);
    let step = solve_step(&input)?;
    let mut at_zero = f64::NAN;
    let mut min_away = f64::INFINITY;
    for (r, &l) in case.fan.plus.rays.iter().zip(&step.lambda) {
        let th = r.data.theta;
        let signed = if th > PI { th - 2.0 * PI } else { th };
        if signed.abs() < 1e-12 {
            at_zero = l;
        } else if signed.abs() > 0.05 {
            min_away = min_away.min(l);
        }
    }
    outcome(
        at_zero < 0.01 && min_away > 0.99,
        format!("lambda(0) = {at_zero:.2e}, min lambda over |theta| > 0.05 = {min_away:.6}"),
    )
}

/// 100 random feasible competitors over three geometry pairs.
fn minimality() -> Result<Outcome> {
    type Field = fn(Vec2) -> f64;
    let pairs: [(DomainBoundary, ConvexBody, Field, usize); 3] = [
        (
            DomainBoundary::disk(1.0)?,
            ConvexBody::disk(1.0)?,
            |x| 0.25 * (2.0 * x.y).sin() + 0.1,
            34,
        ),
        (
            perturbed_disk(0.15)?,
            offset_ellipse()?,
            |x| 0.3 + 0.2 * x.x - 0.1 * x.y,
            33,
        ),
        (
            cassini()?,
            offset_ellipse()?,
            |x| 0.15 - 0.1 * x.x + 0.15 * x.y,
            33,
        ),
    ];
    let mut trials = 0;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for (i, (omega, body, f, n)) in pairs.into_iter().enumerate() {
        let case = Case::new(omega, body, 128)?;
        let ubar = ScalarGrid::sample(case.domain.clone(), &|x: Vec2| f(x));
        let exact = move |x: Vec2| f(x);
        let input = StepInput::new(&case.geometry, &case.fan, &case.field, &ubar)?.with_exact(&exact);
        let u = explicit_minimizer(&input)?;
        let report = minimality_check(&input, &u, n, BANK_SEED + i as u64)?;
        trials += report.trials;
        violations += report.violations;
        worst = worst.min(report.worst_margin);
    }
    outcome(
        trials == 100 && violations == 0,
        format!("{trials} competitors, {violations} violations, worst relative margin {worst:.3e}"),
    )
}

/// Weak Monge-Kantorovich residual for `ū ≡ 1` under refinement.
fn mk_weak_residual() -> Result<Outcome> {
    let mut residuals = Vec::new();
    for res in [128, 256, 512] {
        let case = disk_disk(res)?;
        let one = |_: Vec2| 1.0;
        let ubar = ScalarGrid::sample(case.domain.clone(), &one);
        let input = StepInput::new(&case.geometry, &case.fan, &case.field, &ubar)?.with_exact(&one);
        let step = solve_step(&input)?;
        residuals.push(mk_residual(&input, &step, &case.bank()?).residual);
    }
    let orders: Vec<f64> = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    outcome(
        residuals[2] < 5e-3 && orders.iter().all(|&q| q >= 1.0),
        format!(
            "residuals 128/256/512 = {:.2e}/{:.2e}/{:.2e}, orders {:.2}/{:.2}",
            residuals[0], residuals[1], residuals[2], orders[0], orders[1]
        ),
    )
}

/// `max |hⁿ - h| ≤ δtⁿ max|H_s'|` for the piecewise-constant discrete path, checked
/// between nodes as well; piece junctions do not fall on partition nodes.
fn limit_bound() -> Result<Outcome> {
    let case = Case::new(perturbed_disk(0.1)?, offset_ellipse()?, 128)?;
    let drive = DriveProfile::new(vec![
        DrivePiece::linear(0.0, 0.9, 0.0, 0.7)?,
        DrivePiece::samples(vec![0.9, 1.4, 1.9, 2.7], vec![0.7, 0.5, -0.1, -0.4])?,
        DrivePiece::linear(2.7, 3.7, -0.4, 0.2)?,
    ])?;
    let evo = case.evolution(drive.clone())?;
    let h0 = evo.initial().clone();
    let rate = drive.max_rate();
    let sub = 4;
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [8usize, 32, 128] {
        let path = discrete_path(&case.field, &h0, &drive, n);
        let dt = (drive.end() - drive.start()) / n as f64;
        let mut worst: f64 = 0.0;
        for (i, hn) in path.iter().enumerate() {
            let steps = if i == n { 1 } else { sub };
            for j in 0..steps {
                let t = (drive.start() + dt * (i as f64 + j as f64 / sub as f64)).min(drive.end());
                worst = worst.max(hn.max_abs_diff(&evo.closed_form_field(t)?));
            }
        }
        let bound = dt * rate;
        ok &= worst <= bound;
        parts.push(format!("n={n}: {worst:.3e} <= {bound:.3e}"));
    }
    outcome(ok, parts.join(", "))
}

/// Weak residual of `-div E = -∂h/∂t` under refinement.
fn faraday() -> Result<Outcome> {
    let times = [0.25, 0.5, 0.75, 1.5];
    let mut residuals = Vec::new();
    for res in [128, 256, 512] {
        let case = disk_disk(res)?;
        let evo = case.evolution(DriveProfile::linear(2.0, 1.0)?)?;
        let bank = case.bank()?;
        let mut worst: f64 = 0.0;
        for &t in &times {
            worst = worst.max(evo.faraday_residual(t, &bank)?);
        }
        residuals.push(worst);
    }
    outcome(
        residuals[2] < 5e-3 && residuals[1] < residuals[0] && residuals[2] < residuals[1],
        format!(
            "max residual over t in {times:?}: 128/256/512 = {:.2e}/{:.2e}/{:.2e}",
            residuals[0], residuals[1], residuals[2]
        ),
    )
}

/// Power-law minimizers approach the constrained minimizer as `p` grows.
fn gamma() -> Result<Outcome> {
    let start = Instant::now();
    let case = disk_disk(128)?;
    let one = |_: Vec2| 1.0;
    let ubar = ScalarGrid::sample(case.domain.clone(), &one);
    let input = StepInput::new(&case.geometry, &case.fan, &case.field, &ubar)?.with_exact(&one);
    let u = explicit_minimizer(&input)?;
    let (rows, _) = gamma_convergence_report(&ubar, &u, case.geometry.body(Side::Plus), &DEFAULT_EXPONENTS)?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap_l2).collect();
    let monotone = gaps.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let converged = rows.iter().all(|r| r.converged);
    let secs = start.elapsed().as_secs_f64();
    let last = *gaps.last().unwrap();
    outcome(
        last < 5e-2 && monotone && converged && secs < 600.0,
        format!(
            "gaps p=4..64: {}, all converged: {converged}, {secs:.1} s",
            gaps.iter()
                .map(|g| format!("{g:.3e}"))
                .collect::<Vec<_>>()
                .join("/")
        ),
    )
}

/// Terminal field of an up-down loop from rest.
fn hysteresis() -> Result<Outcome> {
    let mut ok = true;
    let mut parts = Vec::new();
    let pairs = [
        ("disk/disk", DomainBoundary::disk(1.0)?, ConvexBody::disk(1.0)?),
        (
            "perturbed/ellipse",
            perturbed_disk(0.15)?,
            ConvexBody::ellipse(1.2, 0.8, Vec2::zeros())?,
        ),
    ];
    for (name, omega, body) in pairs {
        let case = Case::new(omega, body, 128)?;
        let (period, amplitude) = (1.0, 0.5);
        let evo = case.evolution(DriveProfile::up_down(period, amplitude)?)?;
        let lp = evo.hysteresis_loop(64)?;
        let d = case.field.plus.distance.values();
        let dm = case.field.minus.distance.values();
        let mut err: f64 = 0.0;
        for &k in case.domain.inside() {
            let expect = (amplitude - dm[k]).max(0.0).min(d[k]);
            err = err.max((lp.terminal.values()[k] - expect).abs());
        }
        let peak = lp.terminal.max();
        ok &= err <= 1e-6 && peak > 0.0;
        parts.push(format!("{name}: max err {err:.1e}, max terminal h {peak:.3}"));
    }
    outcome(ok, parts.join(", "))
}

/// Saturated dissipation peaks near the concave part of the boundary.
fn figure_dissipation() -> Result<Outcome> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, omega) in [("cassini", cassini()?), ("perturbed disk", perturbed_disk(0.15)?)] {
        let case = Case::new(omega, offset_ellipse()?, 256)?;
        let tau = case.geometry.max_distance(&case.fan, Side::Minus);
        let t = 2.0 * tau;
        let evo = case.evolution(DriveProfile::linear(t, 1.0)?)?;
        let w = evo.dissipation_field(t)?;
        let spec = *case.domain.spec();
        let kmax = *case
            .domain
            .inside()
            .iter()
            .max_by(|&&a, &&b| w.values()[a].total_cmp(&w.values()[b]))
            .unwrap();
        let peak = spec.point_at(kmax);
        let samples = case.geometry.omega().samples();
        let kappa_min = samples.iter().map(|s| s.curvature).fold(f64::INFINITY, f64::min);
        let dist = samples
            .iter()
            .filter(|s| s.curvature < 0.0)
            .map(|s| (s.point - peak).norm())
            .fold(f64::INFINITY, f64::min);
        let limit = 0.1 * case.geometry.omega().diameter();
        ok &= kappa_min < 0.0 && dist <= limit;
        parts.push(format!(
            "{name}: argmax w at ({:.3}, {:.3}), {dist:.3} from the concave arc (limit {limit:.3})",
            peak.x, peak.y
        ));
    }
    outcome(ok, parts.join("; "))
}

/// Full penetration time `max d⁻ / a` on the unit disk.
fn penetration_time() -> Result<Outcome> {
    let case = disk_disk(128)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [0.5, 1.0, 4.0] {
        let evo = case.evolution(DriveProfile::linear(2.0 / a, a)?)?;
        let tau = evo.full_penetration_time(0)?.unwrap_or(f64::NAN);
        let err = (tau - 1.0 / a).abs();
        ok &= err <= 1e-6;
        parts.push(format!("a={a}: tau={tau:.9} (err {err:.1e})"));
    }
    outcome(ok, parts.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("disk/disk analytic suite", disk_disk_suite),
        ("single-ray clipping example", clipping_example),
        ("minimality against random competitors", minimality),
        ("Monge-Kantorovich weak residual", mk_weak_residual),
        ("evolution limit bound", limit_bound),
        ("Faraday consistency", faraday),
        ("power-law convergence witness", gamma),
        ("hysteresis terminal field", hysteresis),
        ("dissipation peak near concave boundary", figure_dissipation),
        ("full penetration time", penetration_time),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "[{}] {:>2} {name}: {detail} ({:.1} s)",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
