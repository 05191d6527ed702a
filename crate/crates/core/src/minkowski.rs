//! Minkowski distances from `∂Ω`, projections, normal rays, cut distances and
//! anisotropic curvatures.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::boundary::DomainBoundary;
use crate::error::{Error, Result};
use crate::geometry::{golden_max, golden_min, ConvexBody, GaugePair, Mat2, Vec2};
use crate::grid::{GridDomain, ScalarField, ScalarGrid};

/// Absolute slack on the distance value for a boundary point to count as a projection.
pub const PROJECTION_SLACK: f64 = 1e-6;
/// Minimal parameter gap separating two projection clusters.
pub const CLUSTER_GAP: f64 = 1e-3;
/// Cap on the number of reported projection clusters.
pub const MAX_CLUSTERS: usize = 16;
/// Golden-section tolerance on the boundary parameter.
pub const THETA_TOL: f64 = 1e-8;
/// Relative (to the diameter) bisection tolerance for cut distances.
pub const CUT_TOL: f64 = 1e-6;
/// Relative bisection tolerance when refining the maximal distance.
pub const MAX_DISTANCE_TOL: f64 = 1e-12;
/// Default quadrature nodes per ray.
pub const RAY_NODES: usize = 256;

/// Cap on local refinements per distance query.
pub const MAX_REFINEMENTS: usize = 32;
/// Relative (to the diameter) distance outside `Ω` still accepted by distance queries.
pub const OUTSIDE_TOL: f64 = 1e-6;

/// Which distance: `d` (gauge of `K⁰`) or `d⁻` (gauge of `-K⁰`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

/// Normal-ray data at a boundary parameter.
#[derive(Debug, Clone, Copy)]
pub struct RayData {
    pub theta: f64,
    pub point: Vec2,
    /// Euclidean inward normal `ν`.
    pub normal: Vec2,
    pub tangent: Vec2,
    /// `|y'(θ)|`
    pub speed: f64,
    /// Euclidean curvature of `∂Ω`.
    pub curvature: f64,
    /// Ray direction `Dρ(ν)`.
    pub direction: Vec2,
    /// `ρ(ν)`
    pub rho_nu: f64,
    /// Anisotropic curvature `κ̃`.
    pub kappa: f64,
}

impl RayData {
    #[inline]
    pub fn at(&self, t: f64) -> Vec2 {
        self.point + self.direction * t
    }
}

/// Minimal value and projection set of a point.
#[derive(Debug, Clone)]
pub struct Projection {
    pub value: f64,
    /// One representative parameter per cluster, the minimizer first.
    pub thetas: Vec<f64>,
}

impl Projection {
    pub fn is_singular(&self) -> bool {
        self.thetas.len() > 1
    }
}

/// `Ω` together with the gauges of `K`, `K⁰`, `-K`, `-K⁰`.
#[derive(Debug, Clone)]
pub struct Geometry {
    omega: DomainBoundary,
    gauges: GaugePair,
    points: Vec<Vec2>,
    tolerance: f64,
}

impl Geometry {
    pub fn new(omega: DomainBoundary, body: ConvexBody) -> Result<Self> {
        let gauges = GaugePair::new(body)?;
        let points = omega.samples().iter().map(|s| s.point).collect();
        let tolerance = OUTSIDE_TOL * omega.diameter();
        Ok(Geometry {
            omega,
            gauges,
            points,
            tolerance,
        })
    }

    /// Sets how far outside `Ω` a query point may lie before it is rejected.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn omega(&self) -> &DomainBoundary {
        &self.omega
    }

    pub fn gauges(&self) -> &GaugePair {
        &self.gauges
    }

    pub fn body(&self, side: Side) -> &ConvexBody {
        match side {
            Side::Plus => &self.gauges.body,
            Side::Minus => &self.gauges.reflected,
        }
    }

    /// Gauge of `K⁰` (plus side) or `-K⁰` (minus side).
    #[inline]
    pub fn rho0(&self, side: Side, xi: Vec2) -> f64 {
        self.body(side).polar_gauge(xi)
    }

    fn check_inside(&self, x: Vec2) -> Result<()> {
        if self.omega.contains(x) || self.omega.euclidean_distance(x) <= self.tolerance {
            Ok(())
        } else {
            Err(Error::OutsideDomain { x: x.x, y: x.y })
        }
    }

    /// `min over y ∈ ∂Ω of ρ⁰(x - y)`.
    pub fn distance(&self, x: Vec2, side: Side) -> Result<f64> {
        self.check_inside(x)?;
        Ok(self.search(x, side, false).value)
    }

    /// The projection set of `x`, clustered.
    pub fn projections(&self, x: Vec2, side: Side) -> Result<Projection> {
        self.check_inside(x)?;
        Ok(self.search(x, side, true))
    }

    /// Distance minimization without the membership check; positive outside `Ω` too.
    pub fn raw_distance(&self, x: Vec2, side: Side) -> f64 {
        self.search(x, side, false).value
    }

    fn search(&self, x: Vec2, side: Side, all: bool) -> Projection {
        let body = self.body(side);
        let n = self.points.len();
        let step = 2.0 * PI / n as f64;
        let vals: Vec<f64> = self.points.iter().map(|y| body.polar_gauge(x - y)).collect();

        // local minima of the samples, ordered by a lower bound of their basin
        let mut cands: Vec<(f64, usize)> = Vec::new();
        for k in 0..n {
            let (a, b, c) = (vals[(k + n - 1) % n], vals[k], vals[(k + 1) % n]);
            if b <= a && b <= c {
                let curv = (a - 2.0 * b + c).max(0.0);
                cands.push((b - 0.25 * curv, k));
            }
        }
        cands.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));

        let slack = if all { PROJECTION_SLACK } else { 0.0 };
        let mut best = f64::INFINITY;
        let mut minima: Vec<(f64, f64)> = Vec::new();
        let cap = if all { 4 * MAX_CLUSTERS } else { MAX_REFINEMENTS };
        for &(lower, k) in &cands {
            if lower > best + slack || minima.len() >= cap {
                break;
            }
            let theta0 = k as f64 * step;
            let f = |th: f64| body.polar_gauge(x - self.omega.point(th));
            let th = golden_min(f, theta0 - step, theta0 + step, THETA_TOL);
            let (th, v) = if f(th) < vals[k] {
                (th, f(th))
            } else {
                (theta0, vals[k])
            };
            best = best.min(v);
            minima.push((th.rem_euclid(2.0 * PI), v));
        }

        let mut keep: Vec<(f64, f64)> = minima.into_iter().filter(|&(_, v)| v <= best + slack).collect();
        if !all {
            let (th, v) = keep
                .iter()
                .copied()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap_or((0.0, best));
            return Projection {
                value: v,
                thetas: vec![th],
            };
        }
        keep.sort_by(|a, b| a.0.total_cmp(&b.0));
        // circular clustering by parameter gaps
        let m = keep.len();
        let mut clusters: Vec<Vec<(f64, f64)>> = Vec::new();
        if m > 0 {
            let start = (0..m)
                .max_by(|&i, &j| {
                    let gi = circ_gap(keep[(i + m - 1) % m].0, keep[i].0);
                    let gj = circ_gap(keep[(j + m - 1) % m].0, keep[j].0);
                    gi.total_cmp(&gj)
                })
                .unwrap_or(0);
            for s in 0..m {
                let cur = keep[(start + s) % m];
                let new_cluster = match clusters.last() {
                    None => true,
                    Some(c) => circ_gap(c.last().unwrap().0, cur.0) > CLUSTER_GAP,
                };
                if new_cluster {
                    clusters.push(vec![cur]);
                } else {
                    clusters.last_mut().unwrap().push(cur);
                }
            }
        }
        let mut reps: Vec<(f64, f64)> = clusters
            .iter()
            .map(|c| *c.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap())
            .collect();
        reps.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
        reps.truncate(MAX_CLUSTERS);
        Projection {
            value: reps.first().map_or(best, |r| r.1),
            thetas: reps.iter().map(|r| r.0).collect(),
        }
    }

    /// Ray data at an arbitrary boundary parameter.
    pub fn ray_at(&self, theta: f64, side: Side) -> Result<RayData> {
        let cp = self.omega.eval(theta);
        let body = self.body(side);
        let rho_nu = body.gauge(cp.normal);
        if rho_nu < 1e-12 {
            return Err(Error::DegenerateNormal(rho_nu));
        }
        let direction = body.grad_gauge(cp.normal)?;
        let hess = body.hess_gauge(cp.normal)?;
        let kappa = cp.curvature * cp.tangent.dot(&(hess * cp.tangent));
        Ok(RayData {
            theta: cp.theta,
            point: cp.point,
            normal: cp.normal,
            tangent: cp.tangent,
            speed: cp.speed,
            curvature: cp.curvature,
            direction,
            rho_nu,
            kappa,
        })
    }

    /// Largest `t` with `d(y + s p) = s` for all `s ≤ t`, by marching and bisection.
    pub fn cut_distance(&self, ray: &RayData, side: Side, tol: f64) -> f64 {
        let diam = self.omega.diameter();
        let eps = 1e-10 * diam;
        let holds = |t: f64| self.raw_distance(ray.at(t), side) >= t - eps;
        let step = diam / 64.0;
        let mut lo = 0.0;
        let mut hi = step;
        let mut guard = 0;
        while holds(hi) {
            lo = hi;
            hi += step;
            guard += 1;
            if guard > 4096 {
                return lo;
            }
        }
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if holds(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// `κ̃` recovered from the Weingarten map `W = -D²ρ(Dd) D²d`, with `D²d` from
    /// finite differences of the distance at offset `3 h` inward.
    pub fn curvature_from_weingarten(&self, ray: &RayData, side: Side, h: f64) -> f64 {
        let s = 3.0 * h;
        let x = ray.at(s);
        let d = |dx: f64, dy: f64| self.raw_distance(x + Vec2::new(dx, dy), side);
        let d0 = d(0.0, 0.0);
        let dxx = (d(h, 0.0) - 2.0 * d0 + d(-h, 0.0)) / (h * h);
        let dyy = (d(0.0, h) - 2.0 * d0 + d(0.0, -h)) / (h * h);
        let dxy = (d(h, h) - d(h, -h) - d(-h, h) + d(-h, -h)) / (4.0 * h * h);
        let hess_d = Mat2::new(dxx, dxy, dxy, dyy);
        let grad_d = ray.normal / ray.rho_nu;
        let Ok(hess_rho) = self.body(side).hess_gauge(grad_d) else {
            return f64::NAN;
        };
        let w = -(hess_rho * hess_d);
        // rank one in the plane: the nonzero eigenvalue is the trace
        let kx = w.trace();
        kx / (1.0 + s * kx)
    }

    /// Builds the fan of normal rays at every boundary sample, both sides.
    pub fn ray_fan(&self) -> Result<RayFan> {
        let plus = self.side_fan(Side::Plus)?;
        let minus = if self.gauges.body.is_symmetric() {
            plus.clone()
        } else {
            self.side_fan(Side::Minus)?
        };
        Ok(RayFan { plus, minus })
    }

    fn side_fan(&self, side: Side) -> Result<SideFan> {
        let n = self.omega.len();
        let tol = CUT_TOL * self.omega.diameter();
        let h_fd = self.omega.diameter() / 512.0;
        let rays: Vec<Result<FanRay>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let theta = 2.0 * PI * k as f64 / n as f64;
                let data = self.ray_at(theta, side)?;
                let cut = self.cut_distance(&data, side, tol);
                Ok(FanRay { data, cut })
            })
            .collect();
        let rays = rays.into_iter().collect::<Result<Vec<_>>>()?;

        let mut disagreements = 0;
        for r in rays.iter().step_by(8) {
            if r.cut > 6.0 * h_fd {
                let kw = self.curvature_from_weingarten(&r.data, side, h_fd);
                if !((kw - r.data.kappa).abs() <= 1e-2 * (1.0 + r.data.kappa.abs())) {
                    disagreements += 1;
                    log::debug!(
                        "theta {:.6}: ray-Jacobian curvature {} vs Weingarten estimate {}",
                        r.data.theta,
                        r.data.kappa,
                        kw
                    );
                }
            }
        }
        if disagreements > 0 {
            log::info!("{disagreements} sampled rays: Weingarten estimate off by more than 1e-2, ray-Jacobian value kept");
        }
        Ok(SideFan { rays })
    }

    /// `max over Ω` of the distance, refined by maximizing the cut distance over rays.
    pub fn max_distance(&self, fan: &RayFan, side: Side) -> f64 {
        let sf = fan.side(side);
        let n = sf.rays.len();
        let k = (0..n)
            .max_by(|&i, &j| sf.rays[i].cut.total_cmp(&sf.rays[j].cut))
            .unwrap_or(0);
        let step = 2.0 * PI / n as f64;
        let tight = MAX_DISTANCE_TOL * self.omega.diameter();
        let cut_at = |th: f64| {
            self.ray_at(th, side)
                .map(|r| self.cut_distance(&r, side, tight))
                .unwrap_or(0.0)
        };
        let theta0 = sf.rays[k].data.theta;
        let th = golden_max(cut_at, theta0 - 2.0 * step, theta0 + 2.0 * step, THETA_TOL);
        cut_at(th).max(cut_at(theta0))
    }

    /// Distance fields on a grid for both sides.
    pub fn distance_field(&self, domain: &Arc<GridDomain>) -> DistanceField {
        let plus = self.side_field(domain, Side::Plus);
        let minus = if self.gauges.body.is_symmetric() {
            plus.clone()
        } else {
            self.side_field(domain, Side::Minus)
        };
        DistanceField { plus, minus }
    }

    fn side_field(&self, domain: &Arc<GridDomain>, side: Side) -> SideField {
        let spec = *domain.spec();
        let results: Vec<Projection> = domain
            .inside()
            .par_iter()
            .map(|&k| self.search(spec.point_at(k), side, true))
            .collect();
        let mut values = vec![0.0; spec.len()];
        let mut theta = vec![0.0; spec.len()];
        let mut singular = vec![false; spec.len()];
        for (&k, p) in domain.inside().iter().zip(&results) {
            values[k] = p.value;
            theta[k] = p.thetas[0];
            singular[k] = p.is_singular();
        }
        SideField {
            distance: ScalarGrid::from_values(domain.clone(), values).expect("distance values are finite"),
            theta,
            singular,
        }
    }
}

fn circ_gap(a: f64, b: f64) -> f64 {
    (b - a).rem_euclid(2.0 * PI)
}

/// `(1 - t κ̃) / (1 - t_from κ̃)`, clamped at 0.
#[inline]
pub fn jacobian_ratio(kappa: f64, t_from: f64, t: f64) -> f64 {
    let num = 1.0 - t * kappa;
    let den = 1.0 - t_from * kappa;
    if num <= 0.0 || den <= 0.0 {
        0.0
    } else {
        num / den
    }
}

/// A boundary sample's normal ray with its cut distance.
#[derive(Debug, Clone, Copy)]
pub struct FanRay {
    pub data: RayData,
    pub cut: f64,
}

impl FanRay {
    /// The Jacobian factor `M(t) = (1 - t κ̃) / (1 - t_from κ̃)`.
    pub fn jacobian_factor(&self, t_from: f64, t: f64) -> Result<f64> {
        let slack = CUT_TOL * (1.0 + self.cut);
        if t > self.cut + slack {
            return Err(Error::CutExceeded { t, cut: self.cut });
        }
        Ok(jacobian_ratio(self.data.kappa, t_from, t))
    }
}

/// Rays of one side at all boundary samples.
#[derive(Debug, Clone)]
pub struct SideFan {
    pub rays: Vec<FanRay>,
}

impl SideFan {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    /// Cut distance at an arbitrary parameter, linear between samples.
    pub fn cut_at(&self, theta: f64) -> f64 {
        let n = self.rays.len();
        let s = theta.rem_euclid(2.0 * PI) / (2.0 * PI) * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        self.rays[i].cut * (1.0 - t) + self.rays[(i + 1) % n].cut * t
    }

    pub fn max_cut(&self) -> f64 {
        self.rays.iter().map(|r| r.cut).fold(0.0, f64::max)
    }

    /// Uniform bound `M₀` on the Jacobian factors over the fan.
    pub fn jacobian_bound(&self) -> f64 {
        self.rays
            .iter()
            .map(|r| 1.0 + r.cut * (-r.data.kappa).max(0.0))
            .fold(1.0, f64::max)
    }

    /// `∫_Ω f dx` in ray coordinates: `Σ_θ ρ(ν)|y'| Δθ ∫₀^clip f(Φ(y,t)) (1 - t κ̃) dt`.
    pub fn integrate<F: ScalarField + ?Sized>(&self, f: &F, clip: &[f64], nodes: usize) -> Result<f64> {
        if clip.len() != self.rays.len() {
            return Err(Error::InvalidField(format!(
                "clip has {} entries for {} rays",
                clip.len(),
                self.rays.len()
            )));
        }
        let nodes = nodes.max(2);
        let dtheta = 2.0 * PI / self.rays.len() as f64;
        let mut total = 0.0;
        for (r, &c) in self.rays.iter().zip(clip) {
            let c = c.clamp(0.0, r.cut);
            if c == 0.0 {
                continue;
            }
            let dt = c / (nodes - 1) as f64;
            let mut s = 0.0;
            for i in 0..nodes {
                let t = i as f64 * dt;
                let v = f.eval(r.data.at(t));
                if v.is_nan() {
                    let p = r.data.at(t);
                    return Err(Error::InvalidField(format!(
                        "NaN integrand at ({}, {})",
                        p.x, p.y
                    )));
                }
                let w = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
                s += w * v * (1.0 - t * r.data.kappa);
            }
            total += s * dt * r.data.rho_nu * r.data.speed;
        }
        Ok(total * dtheta)
    }
}

/// Ray fans for `d` and `d⁻`.
#[derive(Debug, Clone)]
pub struct RayFan {
    pub plus: SideFan,
    pub minus: SideFan,
}

impl RayFan {
    pub fn side(&self, side: Side) -> &SideFan {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }

    /// Writes `theta,px,py,l,kappa,l_minus,kappa_minus`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "px", "py", "l", "kappa", "l_minus", "kappa_minus"])?;
        for (p, m) in self.plus.rays.iter().zip(&self.minus.rays) {
            w.write_record([
                p.data.theta.to_string(),
                p.data.direction.x.to_string(),
                p.data.direction.y.to_string(),
                p.cut.to_string(),
                p.data.kappa.to_string(),
                m.cut.to_string(),
                m.data.kappa.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Distance values, projection parameters and singular flags on a grid.
#[derive(Debug, Clone)]
pub struct SideField {
    pub distance: ScalarGrid,
    pub theta: Vec<f64>,
    pub singular: Vec<bool>,
}

impl SideField {
    /// Whether a cell sits within `reach` (in distance units) of the cut locus
    /// along its own ray.
    pub fn near_cut(&self, fan: &SideFan, k: usize, reach: f64) -> bool {
        self.singular[k] || fan.cut_at(self.theta[k]) - self.distance.values()[k] < reach
    }
}

#[derive(Debug, Clone)]
pub struct DistanceField {
    pub plus: SideField,
    pub minus: SideField,
}

impl DistanceField {
    pub fn side(&self, side: Side) -> &SideField {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }
}

/// Largest `ρ⁰` length of a central-difference stencil arm of size `h`.
pub fn stencil_reach(geometry: &Geometry, side: Side, h: f64) -> f64 {
    [
        Vec2::new(h, 0.0),
        Vec2::new(-h, 0.0),
        Vec2::new(0.0, h),
        Vec2::new(0.0, -h),
    ]
    .iter()
    .map(|&e| geometry.rho0(side, e))
    .fold(0.0, f64::max)
}

/// `|det(∂Φ/∂θ, p)|` with `∂Φ/∂θ` by central differences in `θ`.
pub fn ray_map_jacobian_fd(geometry: &Geometry, side: Side, theta: f64, t: f64, step: f64) -> Result<f64> {
    let a = geometry.ray_at(theta - step, side)?;
    let b = geometry.ray_at(theta + step, side)?;
    let c = geometry.ray_at(theta, side)?;
    let dphi = (b.at(t) - a.at(t)) / (2.0 * step);
    let p = c.direction;
    Ok((dphi.x * p.y - dphi.y * p.x).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{DomainShape, BOUNDARY_SAMPLES};
    use approx::assert_relative_eq;

    fn disk_disk() -> Geometry {
        Geometry::new(DomainBoundary::disk(1.0).unwrap(), ConvexBody::disk(1.0).unwrap()).unwrap()
    }

    fn ellipse_omega(a: f64, b: f64) -> DomainBoundary {
        DomainBoundary::new(
            DomainShape::Ellipse {
                a,
                b,
                center: Vec2::zeros(),
            },
            BOUNDARY_SAMPLES,
        )
        .unwrap()
    }

    /// Dense brute-force minimization oracle.
    fn brute(g: &Geometry, x: Vec2, side: Side) -> f64 {
        let n = 200_000;
        (0..n)
            .map(|k| g.rho0(side, x - g.omega().point(2.0 * PI * k as f64 / n as f64)))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn disk_disk_distance() {
        let g = disk_disk();
        assert_relative_eq!(
            g.distance(Vec2::new(0.5, 0.0), Side::Plus).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        for k in 0..20 {
            let x = Vec2::new(0.04 * k as f64, -0.03 * k as f64);
            assert_relative_eq!(
                g.distance(x, Side::Plus).unwrap(),
                1.0 - x.norm(),
                epsilon = 1e-10
            );
        }
        let y = g.omega().samples()[17].point;
        assert!(g.distance(y, Side::Plus).unwrap() < 1e-12);
    }

    #[test]
    fn outside_point_is_rejected() {
        let g = disk_disk();
        assert!(matches!(
            g.distance(Vec2::new(1.1, 0.0), Side::Plus),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn disk_omega_ellipse_body_center() {
        let g = Geometry::new(
            DomainBoundary::disk(1.0).unwrap(),
            ConvexBody::ellipse(2.0, 1.0, Vec2::zeros()).unwrap(),
        )
        .unwrap();
        let x = Vec2::zeros();
        let d = g.distance(x, Side::Plus).unwrap();
        assert_relative_eq!(d, brute(&g, x, Side::Plus), epsilon = 1e-9);
        assert_relative_eq!(d, 1.0, epsilon = 1e-9);
        let p = g.projections(x, Side::Plus).unwrap();
        assert_eq!(p.thetas.len(), 2);
        for th in p.thetas {
            assert!((th - PI / 2.0).abs() < 1e-6 || (th - 1.5 * PI).abs() < 1e-6);
        }
    }

    #[test]
    fn asymmetric_body_distinguishes_sides() {
        // Ω must not be centrally symmetric, otherwise d⁻(x) = d(-x) and both agree at 0
        let omega = DomainBoundary::new(
            DomainShape::PerturbedDisk {
                radius: 1.0,
                modes: vec![crate::boundary::FourierMode {
                    k: 3,
                    amplitude: 0.1,
                    phase: 0.0,
                }],
                center: Vec2::zeros(),
            },
            BOUNDARY_SAMPLES,
        )
        .unwrap();
        let g = Geometry::new(
            omega,
            ConvexBody::ellipse(1.5, 0.8, Vec2::new(0.4, -0.2)).unwrap(),
        )
        .unwrap();
        for x in [Vec2::zeros(), Vec2::new(0.3, 0.4), Vec2::new(-0.6, 0.1)] {
            let dp = g.distance(x, Side::Plus).unwrap();
            let dm = g.distance(x, Side::Minus).unwrap();
            assert_relative_eq!(dp, brute(&g, x, Side::Plus), epsilon = 1e-9);
            assert_relative_eq!(dm, brute(&g, x, Side::Minus), epsilon = 1e-9);
        }
        let (dp, dm) = (
            g.distance(Vec2::zeros(), Side::Plus).unwrap(),
            g.distance(Vec2::zeros(), Side::Minus).unwrap(),
        );
        assert!((dp - dm).abs() > 1e-3);
    }

    #[test]
    fn symmetric_body_sides_coincide() {
        let g = Geometry::new(
            ellipse_omega(1.3, 0.8),
            ConvexBody::ellipse(1.2, 0.9, Vec2::zeros()).unwrap(),
        )
        .unwrap();
        for x in [Vec2::new(0.1, 0.2), Vec2::new(-0.9, 0.05)] {
            assert_relative_eq!(
                g.distance(x, Side::Plus).unwrap(),
                g.distance(x, Side::Minus).unwrap(),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn projections_regular_and_singular() {
        let g = disk_disk();
        let p = g.projections(Vec2::new(0.5, 0.0), Side::Plus).unwrap();
        assert_eq!(p.thetas.len(), 1);
        assert!(p.thetas[0].min(2.0 * PI - p.thetas[0]) < 1e-6);
        assert!(g.projections(Vec2::zeros(), Side::Plus).unwrap().is_singular());

        // ellipse Ω, disk K: a point of the major axis between the centers of curvature
        let g = Geometry::new(ellipse_omega(2.0, 1.0), ConvexBody::disk(1.0).unwrap()).unwrap();
        let x = Vec2::new(0.7, 0.0);
        let p = g.projections(x, Side::Plus).unwrap();
        assert_eq!(p.thetas.len(), 2);
        // brute-force multi-start oracle: both projections lie symmetric about the axis
        let y0 = g.omega().point(p.thetas[0]);
        let y1 = g.omega().point(p.thetas[1]);
        assert_relative_eq!(y0.x, y1.x, epsilon = 1e-6);
        assert_relative_eq!(y0.y, -y1.y, epsilon = 1e-6);
        assert_relative_eq!(p.value, brute(&g, x, Side::Plus), epsilon = 1e-9);
    }

    #[test]
    fn disk_disk_fan() {
        let g = disk_disk();
        let fan = g.ray_fan().unwrap();
        for r in fan.plus.rays.iter().step_by(41) {
            assert_relative_eq!(r.data.direction, r.data.normal, epsilon = 1e-12);
            assert_relative_eq!(r.cut, 1.0, epsilon = 1e-5);
            assert_relative_eq!(r.data.kappa, 1.0, epsilon = 1e-10);
            assert_relative_eq!(r.jacobian_factor(0.3, 0.3).unwrap(), 1.0);
            // Jacobian oracle: analytic 1 - t and finite-difference ray map
            for &t in &[0.0, 0.25, 0.5, 0.85] {
                let fd = ray_map_jacobian_fd(&g, Side::Plus, r.data.theta, t, 1e-5).unwrap();
                assert_relative_eq!(fd, 1.0 - t, max_relative = 1e-6);
            }
        }
        assert!(matches!(
            fan.plus.rays[0].jacobian_factor(0.0, 1.1),
            Err(Error::CutExceeded { .. })
        ));
        assert_relative_eq!(
            fan.plus.rays[3].jacobian_factor(0.6, 0.8).unwrap(),
            0.2 / 0.4,
            epsilon = 1e-12
        );
        assert_relative_eq!(g.max_distance(&fan, Side::Plus), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn ray_property_and_jacobian_on_anisotropic_pair() {
        let omega = DomainBoundary::new(
            DomainShape::Ellipse {
                a: 1.2,
                b: 0.8,
                center: Vec2::zeros(),
            },
            512,
        )
        .unwrap();
        let g = Geometry::new(
            omega,
            ConvexBody::ellipse(1.5, 0.8, Vec2::new(0.4, -0.2)).unwrap(),
        )
        .unwrap();
        let fan = g.ray_fan().unwrap();
        for side in [Side::Plus, Side::Minus] {
            for r in fan.side(side).rays.iter().step_by(29) {
                let t = 0.5 * r.cut;
                assert_relative_eq!(g.raw_distance(r.data.at(t), side), t, epsilon = 1e-5);
                let p = g.projections(r.data.at(t), side).unwrap();
                let gap = (p.thetas[0] - r.data.theta).abs();
                assert!(gap.min(2.0 * PI - gap) < 1e-5);
                for &frac in &[0.1, 0.5, 0.9] {
                    let t = frac * r.cut;
                    let fd = ray_map_jacobian_fd(&g, side, r.data.theta, t, 1e-5).unwrap();
                    let exact = r.data.rho_nu * r.data.speed * (1.0 - t * r.data.kappa);
                    assert_relative_eq!(fd, exact, max_relative = 1e-3);
                    assert!(1.0 - t * r.data.kappa > 0.0);
                }
            }
        }
    }

    #[test]
    fn weingarten_estimate_matches_ray_curvature() {
        let g = Geometry::new(
            ellipse_omega(1.3, 0.8),
            ConvexBody::ellipse(1.2, 0.9, Vec2::zeros()).unwrap(),
        )
        .unwrap();
        for k in 0..12 {
            let r = g.ray_at(0.5 * k as f64, Side::Plus).unwrap();
            let kw = g.curvature_from_weingarten(&r, Side::Plus, 1.0 / 512.0);
            assert_relative_eq!(kw, r.kappa, max_relative = 1e-3, epsilon = 1e-3);
        }
    }

    #[test]
    fn change_of_variables_areas() {
        let g = disk_disk();
        let fan = g.ray_fan().unwrap();
        let cut: Vec<f64> = fan.plus.rays.iter().map(|r| r.cut).collect();
        let area = fan.plus.integrate(&|_: Vec2| 1.0, &cut, RAY_NODES).unwrap();
        assert_relative_eq!(area, PI, max_relative = 1e-3);
        let half = vec![0.5; cut.len()];
        let annulus = fan.plus.integrate(&|_: Vec2| 1.0, &half, RAY_NODES).unwrap();
        assert_relative_eq!(annulus, 0.75 * PI, max_relative = 1e-6);
        assert_eq!(fan.plus.integrate(&|_: Vec2| 0.0, &cut, RAY_NODES).unwrap(), 0.0);
        assert!(fan.plus.integrate(&|_: Vec2| f64::NAN, &cut, RAY_NODES).is_err());
    }

    #[test]
    fn change_of_variables_matches_grid_quadrature_on_anisotropic_pair() {
        let omega = DomainBoundary::new(
            DomainShape::PerturbedDisk {
                radius: 1.0,
                modes: vec![crate::boundary::FourierMode {
                    k: 3,
                    amplitude: 0.15,
                    phase: 0.0,
                }],
                center: Vec2::zeros(),
            },
            1024,
        )
        .unwrap();
        let g = Geometry::new(
            omega,
            ConvexBody::ellipse(1.5, 0.8, Vec2::new(0.4, -0.2)).unwrap(),
        )
        .unwrap();
        let fan = g.ray_fan().unwrap();
        let f = |x: Vec2| 1.0 + 0.5 * x.x * x.y + x.y;
        for side in [Side::Plus, Side::Minus] {
            let sf = fan.side(side);
            let cut: Vec<f64> = sf.rays.iter().map(|r| r.cut).collect();
            let ray_int = sf.integrate(&f, &cut, RAY_NODES).unwrap();
            let domain = GridDomain::new(g.omega(), 512).unwrap();
            let grid_int = ScalarGrid::sample(domain, &f).integral();
            assert_relative_eq!(ray_int, grid_int, max_relative = 3e-3);
        }
    }

    #[test]
    fn distance_field_properties() {
        let g = Geometry::new(
            DomainBoundary::disk(1.0).unwrap(),
            ConvexBody::ellipse(1.5, 0.8, Vec2::new(0.4, -0.2)).unwrap(),
        )
        .unwrap();
        let domain = GridDomain::new(g.omega(), 64).unwrap();
        let field = g.distance_field(&domain);
        let fan = g.ray_fan().unwrap();
        for side in [Side::Plus, Side::Minus] {
            let sf = field.side(side);
            // ρ-Lipschitz: d(x) - d(z) <= ρ⁰(x - z) for d, and for -d⁻ with the same gauge
            let excess = sf.distance.lipschitz_excess(|v| g.rho0(Side::Plus, v));
            let excess_neg = sf
                .distance
                .map(|v| -v)
                .lipschitz_excess(|v| g.rho0(Side::Plus, v));
            match side {
                Side::Plus => assert!(excess <= 1e-6, "{excess}"),
                Side::Minus => assert!(excess_neg <= 1e-6, "{excess_neg}"),
            }
            // viscosity gradient property at regular cells away from the cut locus
            let h = domain.h();
            let reach = 2.0 * stencil_reach(&g, side, h);
            let body = g.body(Side::Plus);
            for &k in domain.inside() {
                if sf.near_cut(fan.side(side), k, reach) {
                    continue;
                }
                if let Some(grad) = sf.distance.gradient(k) {
                    let grad = if side == Side::Plus { grad } else { -grad };
                    let r = body.gauge(grad);
                    assert!((r - 1.0).abs() < 0.05 * (256.0 * h).max(1.0), "rho(Dd) = {r}");
                }
            }
        }
    }
}
