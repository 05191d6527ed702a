//! One quasistatic step: the explicit minimizer, clipping lengths and the dual function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{ScalarGrid, VectorGrid};
use crate::minkowski::{stencil_reach, DistanceField, Geometry, RayData, RayFan, Side, CUT_TOL, RAY_NODES};
use crate::testbank::{Bump, TestBank};

/// Strict-inequality slack for the `Ω⁺`/`Ω⁻` labels.
pub const LABEL_SLACK: f64 = 1e-10;
/// Allowed excess of the input's pairwise Lipschitz ratio over 1.
pub const LIPSCHITZ_SLACK: f64 = 1e-4;
/// Allowed excess of a competitor's Lipschitz ratio over 1.
pub const FEASIBILITY_SLACK: f64 = 1e-6;
/// Relative slack of the minimality inequality.
pub const MINIMALITY_TOL: f64 = 1e-6;
/// Threshold defining the support of `v` in gradient checks.
pub const DUAL_SUPPORT: f64 = 1e-8;
/// Cells closer than this many stencil reaches to the cut locus skip the `ρ(Du)` check.
pub const NEAR_CUT_REACHES: f64 = 3.0;

/// Partition of `Ω` induced by `ū`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    /// `ū > d`
    Plus,
    /// `ū < -d⁻`
    Minus,
    /// `-d⁻ ≤ ū ≤ d`
    Zero,
}

impl Label {
    pub fn as_int(self) -> i8 {
        match self {
            Label::Plus => 1,
            Label::Minus => -1,
            Label::Zero => 0,
        }
    }
}

/// Data of a step: the geometry, its fan and distance fields, and `ū`.
#[derive(Clone, Copy)]
pub struct StepInput<'a> {
    pub geometry: &'a Geometry,
    pub fan: &'a RayFan,
    pub field: &'a DistanceField,
    pub ubar: &'a ScalarGrid,
    /// Evaluates `ū` off the grid; bilinear interpolation of `ubar` when absent.
    pub exact: Option<&'a (dyn Fn(Vec2) -> f64 + Sync)>,
}

impl<'a> StepInput<'a> {
    pub fn new(
        geometry: &'a Geometry,
        fan: &'a RayFan,
        field: &'a DistanceField,
        ubar: &'a ScalarGrid,
    ) -> Result<Self> {
        let a = ubar.spec();
        let b = field.plus.distance.spec();
        if (a.nx, a.ny) != (b.nx, b.ny) {
            return Err(Error::ShapeMismatch {
                expected: (b.nx, b.ny),
                found: (a.nx, a.ny),
            });
        }
        Ok(StepInput {
            geometry,
            fan,
            field,
            ubar,
            exact: None,
        })
    }

    pub fn with_exact(mut self, f: &'a (dyn Fn(Vec2) -> f64 + Sync)) -> Self {
        self.exact = Some(f);
        self
    }

    #[inline]
    fn ubar_at(&self, x: Vec2) -> f64 {
        match self.exact {
            Some(f) => f(x),
            None => self.ubar.interpolate(x),
        }
    }

    fn bisection_tol(&self) -> f64 {
        CUT_TOL * self.geometry.omega().diameter()
    }

    /// Clip march of `g(t) = ±ū(y + t p) - t` along a ray.
    fn march(&self, ray: &RayData, sign: f64, start: f64, cut: f64) -> Vec<(f64, f64)> {
        positive_run(
            |t| sign * self.ubar_at(ray.at(t)) - t,
            start,
            cut,
            self.bisection_tol(),
        )
    }

    /// Clipping length of one ray.
    fn clip(&self, ray: &RayData, sign: f64, cut: f64) -> f64 {
        self.march(ray, sign, 0.0, cut).last().map_or(0.0, |p| p.0)
    }

    /// `∫_d^λ g(t) M_x(t) dt` for the cell at distance `d` on its own ray.
    fn cell_dual(&self, k: usize, side: Side) -> Option<f64> {
        let sf = self.field.side(side);
        if sf.singular[k] {
            return None;
        }
        let d = sf.distance.values()[k];
        let ray = self.geometry.ray_at(sf.theta[k], side).ok()?;
        let cut = self.fan.side(side).cut_at(ray.theta).max(d);
        let sign = match side {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        };
        let nodes = self.march(&ray, sign, d, cut);
        Some(linear_weight_integral(&nodes, ray.kappa, d))
    }
}

/// Samples `(t, g(t))` of the initial run of `g > 0` from `start`, on the lattice
/// `i·cut/(RAY_NODES-1)`, closed by a bisected endpoint where `g` first fails.
pub(crate) fn positive_run(g: impl Fn(f64) -> f64, start: f64, cut: f64, tol: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let g0 = g(start);
    if !(g0 > 0.0) {
        return out;
    }
    out.push((start, g0));
    if cut <= start {
        return out;
    }
    let step = cut / (RAY_NODES - 1) as f64;
    let first = (start / step).floor() as usize + 1;
    for i in first..RAY_NODES {
        let t = (i as f64 * step).min(cut);
        if t <= start {
            continue;
        }
        let gt = g(t);
        if gt > 0.0 {
            out.push((t, gt));
            continue;
        }
        let last = out.last().map_or(start, |p| p.0);
        let (mut lo, mut hi) = (last, t);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo > last {
            out.push((lo, g(lo).max(0.0)));
        }
        break;
    }
    out
}

/// `∫ g M` over piecewise-linear `g` with the linear weight `M(t) = (1 - tκ)/(1 - dκ)`.
fn linear_weight_integral(nodes: &[(f64, f64)], kappa: f64, d: f64) -> f64 {
    let den = 1.0 - d * kappa;
    if den <= 0.0 {
        return 0.0;
    }
    let m = |t: f64| ((1.0 - t * kappa) / den).max(0.0);
    nodes
        .windows(2)
        .map(|w| {
            let ((t0, g0), (t1, g1)) = (w[0], w[1]);
            let (m0, m1) = (m(t0), m(t1));
            (t1 - t0) / 6.0 * (2.0 * g0 * m0 + g0 * m1 + g1 * m0 + 2.0 * g1 * m1)
        })
        .sum()
}

/// `u = min(max(ū, -d⁻), d)`.
pub fn explicit_minimizer(input: &StepInput) -> Result<ScalarGrid> {
    let geometry = input.geometry;
    let ratio = input.ubar.lipschitz_ratio(|xi| geometry.rho0(Side::Plus, xi));
    if ratio > 1.0 + LIPSCHITZ_SLACK {
        return Err(Error::NotLipschitz {
            violation: ratio - 1.0,
        });
    }
    let d = &input.field.plus.distance;
    let dm = &input.field.minus.distance;
    let mut u = input.ubar.clone();
    for &k in input.ubar.domain().inside() {
        let v = input.ubar.values()[k];
        u.values_mut()[k] = v.max(-dm.values()[k]).min(d.values()[k]);
    }
    Ok(u)
}

/// Cellwise partition labels; outside cells get `Zero`.
pub fn labels(input: &StepInput) -> Vec<Label> {
    let d = input.field.plus.distance.values();
    let dm = input.field.minus.distance.values();
    let ub = input.ubar.values();
    let mut out = vec![Label::Zero; ub.len()];
    for &k in input.ubar.domain().inside() {
        out[k] = if ub[k] > d[k] + LABEL_SLACK {
            Label::Plus
        } else if ub[k] < -dm[k] - LABEL_SLACK {
            Label::Minus
        } else {
            Label::Zero
        };
    }
    out
}

/// `λ` and `λ⁻` at every boundary sample of the fan.
pub fn clipping_lengths(input: &StepInput) -> (Vec<f64>, Vec<f64>) {
    let side = |s: Side, sign: f64| -> Vec<f64> {
        input
            .fan
            .side(s)
            .rays
            .par_iter()
            .map(|r| input.clip(&r.data, sign, r.cut))
            .collect()
    };
    (side(Side::Plus, 1.0), side(Side::Minus, -1.0))
}

/// The dual function and the number of singular `Ω±` cells set to zero.
#[derive(Debug, Clone)]
pub struct DualField {
    pub v: ScalarGrid,
    pub singular_skipped: usize,
}

/// `v` on `Ω⁺ ∪ Ω⁻` by integration along each cell's own ray; 0 on `Ω⁰`.
pub fn dual_function(input: &StepInput, labels: &[Label]) -> Result<DualField> {
    let inside = input.ubar.domain().inside();
    let vals: Vec<Option<f64>> = inside
        .par_iter()
        .map(|&k| match labels[k] {
            Label::Plus => input.cell_dual(k, Side::Plus),
            Label::Minus => input.cell_dual(k, Side::Minus),
            Label::Zero => Some(0.0),
        })
        .collect();
    let mut values = vec![0.0; input.ubar.values().len()];
    let mut skipped = 0;
    for (&k, v) in inside.iter().zip(vals) {
        match v {
            Some(v) => values[k] = v,
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::debug!("{skipped} singular cells in the dual support set to 0");
    }
    Ok(DualField {
        v: ScalarGrid::from_values(input.ubar.domain().clone(), values)?,
        singular_skipped: skipped,
    })
}

/// Everything a step produces.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub u: ScalarGrid,
    pub v: ScalarGrid,
    pub labels: Vec<Label>,
    pub lambda: Vec<f64>,
    pub lambda_minus: Vec<f64>,
    pub singular_skipped: usize,
}

impl StepOutput {
    /// Labels as a `{+1, -1, 0}` grid.
    pub fn label_grid(&self) -> ScalarGrid {
        let vals = self.labels.iter().map(|l| l.as_int() as f64).collect();
        ScalarGrid::from_values(self.u.domain().clone(), vals).expect("labels are finite")
    }
}

pub fn solve_step(input: &StepInput) -> Result<StepOutput> {
    let u = explicit_minimizer(input)?;
    let labels = labels(input);
    let (lambda, lambda_minus) = clipping_lengths(input);
    let dual = dual_function(input, &labels)?;
    Ok(StepOutput {
        u,
        v: dual.v,
        labels,
        lambda,
        lambda_minus,
        singular_skipped: dual.singular_skipped,
    })
}

/// `v Dρ(Du)` with central differences; zero where `v` or `Du` vanishes.
pub fn dual_flux(geometry: &Geometry, u: &ScalarGrid, v: &ScalarGrid) -> VectorGrid {
    let body = geometry.body(Side::Plus);
    let mut flux = VectorGrid::zeros(u.domain().clone());
    for &k in u.domain().inside() {
        let w = v.values()[k];
        if w <= 0.0 {
            continue;
        }
        if let Some(g) = u.gradient(k) {
            if let Ok(p) = body.grad_gauge(g) {
                flux.values_mut()[k] = p * w;
            }
        }
    }
    flux
}

#[derive(Debug, Clone, Copy)]
pub struct ResidualReport {
    /// Weak residual of `-div(v Dρ(Du)) = ū - u` over the test bank.
    pub residual: f64,
    /// `max |ρ(Du) - 1|` over checked cells of `{v > 1e-8}`.
    pub rho_deviation: f64,
    pub checked_cells: usize,
}

/// Weak residual of the Monge-Kantorovich system and the gradient-constraint check.
///
/// The `ρ(Du)` check skips singular and near-cut cells, cells without a full stencil and
/// cells with a differently labeled neighbor.
pub fn mk_residual(input: &StepInput, step: &StepOutput, bank: &TestBank) -> ResidualReport {
    let flux = dual_flux(input.geometry, &step.u, &step.v);
    let source = input.ubar.zip(&step.u, |a, b| a - b);
    let residual = bank.weak_residual(&flux, &source);

    let domain = step.u.domain();
    let spec = domain.spec();
    let body = input.geometry.body(Side::Plus);
    let mut dev: f64 = 0.0;
    let mut checked = 0;
    for &k in domain.inside() {
        if step.v.values()[k] <= DUAL_SUPPORT || !domain.has_full_stencil(k) {
            continue;
        }
        let side = match step.labels[k] {
            Label::Plus => Side::Plus,
            Label::Minus => Side::Minus,
            Label::Zero => continue,
        };
        let reach = NEAR_CUT_REACHES * stencil_reach(input.geometry, side, spec.h);
        if input.field.side(side).near_cut(input.fan.side(side), k, reach) {
            continue;
        }
        let nx = spec.nx;
        if [k - 1, k + 1, k - nx, k + nx]
            .iter()
            .any(|&n| step.labels[n] != step.labels[k])
        {
            continue;
        }
        if let Some(g) = step.u.gradient(k) {
            dev = dev.max((body.gauge(g) - 1.0).abs());
            checked += 1;
        }
    }
    ResidualReport {
        residual,
        rho_deviation: dev,
        checked_cells: checked,
    }
}

/// `J(w) = ∫ (w - ū)²`, with the gradient constraint enforced as a hard gate on the
/// pairwise Lipschitz ratio.
pub fn objective(geometry: &Geometry, w: &ScalarGrid, ubar: &ScalarGrid) -> Result<f64> {
    let ratio = w.lipschitz_ratio(|xi| geometry.rho0(Side::Plus, xi));
    if ratio > 1.0 + FEASIBILITY_SLACK {
        return Err(Error::InfeasibleCompetitor { excess: ratio - 1.0 });
    }
    Ok(w.zip(ubar, |a, b| (a - b) * (a - b)).integral())
}

#[derive(Debug, Clone)]
pub struct MinimalityReport {
    pub trials: usize,
    pub violations: usize,
    /// Smallest `(J(w) - J(u) - ‖u - w‖²) / ‖u - w‖²` over trials.
    pub worst_margin: f64,
    pub passed: bool,
}

/// Random competitors `w = clamp(s (u + ε φ), -d⁻, d)` with `φ` a signed sum of bumps and
/// `s` shrinking the Lipschitz ratio to at most 1.
pub fn random_competitor(input: &StepInput, u: &ScalarGrid, rng: &mut ChaCha8Rng) -> ScalarGrid {
    let omega = input.geometry.omega();
    let (lo, hi) = omega.bounding_box();
    let half = 0.5 * (hi - lo).x.max((hi - lo).y);
    let n_bumps = rng.gen_range(1..=4);
    let mut bumps = Vec::with_capacity(n_bumps);
    while bumps.len() < n_bumps {
        let c = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if !omega.contains(c) {
            continue;
        }
        let s = half * rng.gen_range(0.1..0.6);
        let a = rng.gen_range(-1.0..1.0);
        bumps.push((Bump { center: c, scale: s }, a));
    }
    let amp = rng.gen_range(0.01..1.0) * u.max().abs().max(u.min().abs()).max(0.1);
    let spec = *u.spec();
    let mut w = u.clone();
    for &k in u.domain().inside() {
        let x = spec.point_at(k);
        let phi: f64 = bumps.iter().map(|(b, a)| a * b.value(x)).sum();
        w.values_mut()[k] += amp * phi;
    }
    let ratio = w.lipschitz_ratio(|xi| input.geometry.rho0(Side::Plus, xi));
    let s = 1.0 / ratio.max(1.0);
    let d = input.field.plus.distance.values();
    let dm = input.field.minus.distance.values();
    for &k in u.domain().inside() {
        let v = w.values()[k] * s;
        w.values_mut()[k] = v.max(-dm[k]).min(d[k]);
    }
    w
}

/// Checks `J(w) - J(u) ≥ ‖u - w‖²` on `trials` random feasible competitors.
pub fn minimality_check(
    input: &StepInput,
    u: &ScalarGrid,
    trials: usize,
    seed: u64,
) -> Result<MinimalityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ju = objective(input.geometry, u, input.ubar)?;
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..trials {
        let w = random_competitor(input, u, &mut rng);
        let jw = objective(input.geometry, &w, input.ubar)?;
        let dist2 = u.l2_distance(&w).powi(2);
        if dist2 == 0.0 {
            continue;
        }
        let margin = (jw - ju - dist2) / dist2;
        worst = worst.min(margin);
        if margin < -MINIMALITY_TOL {
            violations += 1;
        }
    }
    Ok(MinimalityReport {
        trials,
        violations,
        worst_margin: worst,
        passed: violations == 0,
    })
}
