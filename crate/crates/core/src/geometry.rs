//! Planar convex bodies: gauge, support function (= polar gauge) and their derivatives.
//!
//! A body `K` is a compact convex set with `0` in its interior and a `C²` boundary of
//! strictly positive curvature. Ellipses (optionally offset) and disks are handled in
//! closed form; arbitrary bodies given by boundary points are represented through a
//! smooth Fourier fit of the reciprocal radial function.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Default number of boundary samples used for invariants and tables.
pub const BODY_SAMPLES: usize = 4096;
/// Number of Fourier modes kept when fitting a parametric body.
pub const FOURIER_MODES: usize = 32;

/// Norm below which a vector counts as zero.
pub const ZERO_TOL: f64 = 1e-14;
/// Finite-difference step for gauge gradients.
pub const GRAD_STEP: f64 = 1e-6;
/// Finite-difference step for gauge Hessians.
pub const HESS_STEP: f64 = 1e-5;
/// Golden-section tolerance for support points of parametric bodies.
pub const GOLDEN_TOL: f64 = 1e-12;

#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
pub fn unit(angle: f64) -> Vec2 {
    Vec2::new(angle.cos(), angle.sin())
}

/// Smooth star-shaped body with `rho(r e_phi) = r g(phi)`.
#[derive(Debug, Clone)]
pub struct FourierBody {
    /// `g(phi) = a[0] + sum_m a[m] cos(m phi) + b[m] sin(m phi)`.
    a: Vec<f64>,
    b: Vec<f64>,
    /// Support function on the unit circle, tabulated with its angular derivative.
    support: Vec<f64>,
    support_deriv: Vec<f64>,
    /// The input points, kept for config echo and reflection.
    points: Vec<Vec2>,
}

impl FourierBody {
    /// Fits a body to an ordered closed polygon of boundary points surrounding the origin.
    pub fn from_points(points: &[Vec2]) -> Result<Self> {
        if points.len() < 8 {
            return Err(Error::InvalidBody(format!(
                "parametric body needs at least 8 points, got {}",
                points.len()
            )));
        }
        let mut pts = points.to_vec();
        let area: f64 = (0..pts.len())
            .map(|i| {
                let p = pts[i];
                let q = pts[(i + 1) % pts.len()];
                p.x * q.y - p.y * q.x
            })
            .sum();
        if area < 0.0 {
            pts.reverse();
        }

        let n = BODY_SAMPLES;
        let mut recip = Vec::with_capacity(n);
        for k in 0..n {
            let phi = 2.0 * PI * k as f64 / n as f64;
            let r = ray_polygon_hit(&pts, unit(phi))
                .ok_or_else(|| Error::InvalidBody("origin is not interior to the boundary polygon".into()))?;
            recip.push(1.0 / r);
        }

        let m = FOURIER_MODES;
        let mut a = vec![0.0; m + 1];
        let mut b = vec![0.0; m + 1];
        for (k, g) in recip.iter().enumerate() {
            let phi = 2.0 * PI * k as f64 / n as f64;
            a[0] += g;
            for j in 1..=m {
                let (s, c) = (j as f64 * phi).sin_cos();
                a[j] += g * c;
                b[j] += g * s;
            }
        }
        a[0] /= n as f64;
        for j in 1..=m {
            a[j] *= 2.0 / n as f64;
            b[j] *= 2.0 / n as f64;
        }

        let mut body = FourierBody {
            a,
            b,
            support: Vec::new(),
            support_deriv: Vec::new(),
            points: pts,
        };
        body.tabulate_support();
        Ok(body)
    }

    /// `(g, g', g'')` at angle `phi`.
    fn radial(&self, phi: f64) -> (f64, f64, f64) {
        let mut g = self.a[0];
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        for j in 1..self.a.len() {
            let jf = j as f64;
            let (s, c) = (jf * phi).sin_cos();
            let t = self.a[j] * c + self.b[j] * s;
            g += t;
            g1 += jf * (self.b[j] * c - self.a[j] * s);
            g2 -= jf * jf * t;
        }
        (g, g1, g2)
    }

    fn boundary_point(&self, phi: f64) -> Vec2 {
        unit(phi) / self.radial(phi).0
    }

    fn tabulate_support(&mut self) {
        let n = BODY_SAMPLES;
        let dense: Vec<Vec2> = (0..n)
            .map(|k| self.boundary_point(2.0 * PI * k as f64 / n as f64))
            .collect();
        let step = 2.0 * PI / n as f64;
        self.support = Vec::with_capacity(n);
        self.support_deriv = Vec::with_capacity(n);
        // on a convex curve the maximizing sample moves monotonically with the direction
        let mut best = (0..n)
            .max_by(|&i, &j| dense[i].x.total_cmp(&dense[j].x))
            .unwrap_or(0);
        for k in 0..n {
            let e = unit(2.0 * PI * k as f64 / n as f64);
            loop {
                let next = (best + 1) % n;
                if dense[next].dot(&e) > dense[best].dot(&e) {
                    best = next;
                } else {
                    break;
                }
            }
            let phi0 = best as f64 * step;
            let phi = golden_max(
                |phi| self.boundary_point(phi).dot(&e),
                phi0 - step,
                phi0 + step,
                GOLDEN_TOL,
            );
            let x = self.boundary_point(phi);
            self.support.push(x.dot(&e));
            self.support_deriv.push(x.dot(&perp(e)));
        }
    }

    fn support_unit(&self, psi: f64) -> f64 {
        let n = self.support.len();
        let step = 2.0 * PI / n as f64;
        let s = psi.rem_euclid(2.0 * PI) / step;
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        let j = (i + 1) % n;
        // cubic Hermite
        let (p0, p1) = (self.support[i], self.support[j]);
        let (m0, m1) = (self.support_deriv[i] * step, self.support_deriv[j] * step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1
    }

    /// Angular derivative of the interpolated support function.
    fn support_unit_deriv(&self, psi: f64) -> f64 {
        let n = self.support.len();
        let step = 2.0 * PI / n as f64;
        let s = psi.rem_euclid(2.0 * PI) / step;
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        let j = (i + 1) % n;
        let (p0, p1) = (self.support[i], self.support[j]);
        let (m0, m1) = (self.support_deriv[i] * step, self.support_deriv[j] * step);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1)
            / step
    }

    fn negated(&self) -> Result<Self> {
        let pts: Vec<Vec2> = self.points.iter().map(|p| -p).collect();
        FourierBody::from_points(&pts)
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }
}

/// Distance from the origin to the polygon along direction `e`.
fn ray_polygon_hit(pts: &[Vec2], e: Vec2) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..pts.len() {
        let p = pts[i];
        let q = pts[(i + 1) % pts.len()];
        let d = q - p;
        let denom = e.x * d.y - e.y * d.x;
        if denom.abs() < 1e-300 {
            continue;
        }
        // solve t e = p + s d
        let t = (p.x * d.y - p.y * d.x) / denom;
        let s = (p.x * e.y - p.y * e.x) / denom;
        if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    }
    best
}

pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    golden_min(|x| -f(x), lo, hi, tol)
}

/// Golden-section search for a minimum of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

#[derive(Debug, Clone)]
pub enum BodyShape {
    Disk { radius: f64, center: Vec2 },
    Ellipse { a: f64, b: f64, center: Vec2 },
    Parametric(FourierBody),
}

/// A sample of the body boundary with its outward normal and Euclidean curvature.
#[derive(Debug, Clone, Copy)]
pub struct BodySample {
    pub point: Vec2,
    pub normal: Vec2,
    pub curvature: f64,
}

/// The constraint body `K`.
#[derive(Debug, Clone)]
pub struct ConvexBody {
    shape: BodyShape,
    samples: Vec<BodySample>,
    c1: f64,
    c2: f64,
}

impl ConvexBody {
    pub fn disk(radius: f64) -> Result<Self> {
        Self::offset_disk(radius, Vec2::zeros())
    }

    pub fn offset_disk(radius: f64, center: Vec2) -> Result<Self> {
        Self::new(BodyShape::Disk { radius, center })
    }

    pub fn ellipse(a: f64, b: f64, center: Vec2) -> Result<Self> {
        Self::new(BodyShape::Ellipse { a, b, center })
    }

    pub fn parametric(points: &[Vec2]) -> Result<Self> {
        Self::new(BodyShape::Parametric(FourierBody::from_points(points)?))
    }

    pub fn new(shape: BodyShape) -> Result<Self> {
        match &shape {
            BodyShape::Disk { radius, .. } if !(*radius > 0.0) => {
                return Err(Error::InvalidBody(format!(
                    "disk radius must be positive, got {radius}"
                )))
            }
            BodyShape::Ellipse { a, b, .. } if !(*a > 0.0 && *b > 0.0) => {
                return Err(Error::InvalidBody(format!(
                    "semi-axes must be positive, got {a}, {b}"
                )))
            }
            _ => {}
        }
        let samples = sample_boundary(&shape, BODY_SAMPLES);
        let origin_margin = samples
            .iter()
            .map(|s| s.point.dot(&s.normal))
            .fold(f64::INFINITY, f64::min);
        if !(origin_margin > 0.0) {
            return Err(Error::InvalidBody(
                "the origin must lie strictly inside the body".into(),
            ));
        }
        let min_curv = samples.iter().map(|s| s.curvature).fold(f64::INFINITY, f64::min);
        if !(min_curv > 0.0) {
            return Err(Error::InvalidBody(format!(
                "boundary curvature must be strictly positive (min {min_curv:e})"
            )));
        }
        let (rmin, rmax) = samples.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| {
            let r = s.point.norm();
            (lo.min(r), hi.max(r))
        });
        Ok(ConvexBody {
            shape,
            samples,
            c1: 1.0 / rmax,
            c2: 1.0 / rmin,
        })
    }

    pub fn shape(&self) -> &BodyShape {
        &self.shape
    }

    pub fn samples(&self) -> &[BodySample] {
        &self.samples
    }

    /// Constants with `c1 |xi| <= rho(xi) <= c2 |xi|`.
    pub fn gauge_bounds(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.shape {
            BodyShape::Disk { center, .. } | BodyShape::Ellipse { center, .. } => center.norm() == 0.0,
            BodyShape::Parametric(_) => false,
        }
    }

    /// Gauge `inf { t >= 0 : xi in t K }`.
    pub fn gauge(&self, xi: Vec2) -> f64 {
        match &self.shape {
            BodyShape::Disk { radius, center } => ellipse_gauge(*radius, *radius, *center, xi).0,
            BodyShape::Ellipse { a, b, center } => ellipse_gauge(*a, *b, *center, xi).0,
            BodyShape::Parametric(f) => {
                let r = xi.norm();
                if r == 0.0 {
                    return 0.0;
                }
                r * f.radial(xi.y.atan2(xi.x)).0
            }
        }
    }

    /// Support function of `K`, i.e. the gauge of the polar body `K⁰`.
    pub fn polar_gauge(&self, xi: Vec2) -> f64 {
        match &self.shape {
            BodyShape::Disk { radius, center } => xi.dot(center) + radius * xi.norm(),
            BodyShape::Ellipse { a, b, center } => {
                xi.dot(center) + (a * a * xi.x * xi.x + b * b * xi.y * xi.y).sqrt()
            }
            BodyShape::Parametric(f) => {
                let r = xi.norm();
                if r == 0.0 {
                    return 0.0;
                }
                r * f.support_unit(xi.y.atan2(xi.x))
            }
        }
    }

    /// Gradient of the support function: the point of `K` maximizing `<xi, x>`.
    pub fn grad_polar_gauge(&self, xi: Vec2) -> Result<Vec2> {
        if xi.norm() < ZERO_TOL {
            return Err(Error::ZeroVector);
        }
        Ok(match &self.shape {
            BodyShape::Disk { radius, center } => center + xi.normalize() * *radius,
            BodyShape::Ellipse { a, b, center } => {
                let ax = Vec2::new(a * a * xi.x, b * b * xi.y);
                let n = (a * a * xi.x * xi.x + b * b * xi.y * xi.y).sqrt();
                center + ax / n
            }
            BodyShape::Parametric(f) => {
                let psi = xi.y.atan2(xi.x);
                let e = unit(psi);
                let p = e * f.support_unit(psi) + perp(e) * f.support_unit_deriv(psi);
                // snap onto the boundary along the same ray
                f.boundary_point(p.y.atan2(p.x))
            }
        })
    }

    /// `D rho(xi)`.
    pub fn grad_gauge(&self, xi: Vec2) -> Result<Vec2> {
        let r = xi.norm();
        if r < ZERO_TOL {
            return Err(Error::ZeroVector);
        }
        Ok(match &self.shape {
            BodyShape::Disk { radius, center } => ellipse_gauge(*radius, *radius, *center, xi).1,
            BodyShape::Ellipse { a, b, center } => ellipse_gauge(*a, *b, *center, xi).1,
            BodyShape::Parametric(f) => {
                let phi = xi.y.atan2(xi.x);
                let (g, g1, _) = f.radial(phi);
                let er = unit(phi);
                er * g + perp(er) * g1
            }
        })
    }

    /// `D² rho(xi)`; symmetric, positive semidefinite, `xi` in its kernel.
    pub fn hess_gauge(&self, xi: Vec2) -> Result<Mat2> {
        let r = xi.norm();
        if r < ZERO_TOL {
            return Err(Error::ZeroVector);
        }
        Ok(match &self.shape {
            BodyShape::Disk { radius, center } => ellipse_hessian(*radius, *radius, *center, xi),
            BodyShape::Ellipse { a, b, center } => ellipse_hessian(*a, *b, *center, xi),
            BodyShape::Parametric(f) => {
                let phi = xi.y.atan2(xi.x);
                let (g, _, g2) = f.radial(phi);
                let et = perp(unit(phi));
                et * et.transpose() * ((g + g2) / r)
            }
        })
    }

    /// Central finite-difference gradient of the gauge.
    pub fn grad_gauge_fd(&self, xi: Vec2) -> Result<Vec2> {
        let r = xi.norm();
        if r < ZERO_TOL {
            return Err(Error::ZeroVector);
        }
        let h = GRAD_STEP * r;
        let ex = Vec2::new(h, 0.0);
        let ey = Vec2::new(0.0, h);
        Ok(Vec2::new(
            (self.gauge(xi + ex) - self.gauge(xi - ex)) / (2.0 * h),
            (self.gauge(xi + ey) - self.gauge(xi - ey)) / (2.0 * h),
        ))
    }

    /// Finite-difference Hessian from analytic gradients, symmetrized.
    pub fn hess_gauge_fd(&self, xi: Vec2) -> Result<Mat2> {
        let r = xi.norm();
        if r < ZERO_TOL {
            return Err(Error::ZeroVector);
        }
        let h = HESS_STEP * r;
        let gx =
            (self.grad_gauge(xi + Vec2::new(h, 0.0))? - self.grad_gauge(xi - Vec2::new(h, 0.0))?) / (2.0 * h);
        let gy =
            (self.grad_gauge(xi + Vec2::new(0.0, h))? - self.grad_gauge(xi - Vec2::new(0.0, h))?) / (2.0 * h);
        let m = Mat2::from_columns(&[gx, gy]);
        Ok((m + m.transpose()) * 0.5)
    }

    /// Point reflection `-K`.
    pub fn reflect(&self) -> Result<ConvexBody> {
        let shape = match &self.shape {
            BodyShape::Disk { radius, center } => BodyShape::Disk {
                radius: *radius,
                center: -center,
            },
            BodyShape::Ellipse { a, b, center } => BodyShape::Ellipse {
                a: *a,
                b: *b,
                center: -center,
            },
            BodyShape::Parametric(f) => BodyShape::Parametric(f.negated()?),
        };
        ConvexBody::new(shape)
    }
}

/// Gauge and gradient of the ellipse `{ c + (a cos s, b sin s) }`.
fn ellipse_gauge(a: f64, b: f64, c: Vec2, xi: Vec2) -> (f64, Vec2) {
    let alpha = Vec2::new(xi.x / a, xi.y / b);
    let beta = Vec2::new(c.x / a, c.y / b);
    let aa = alpha.norm_squared();
    if aa == 0.0 {
        return (0.0, Vec2::zeros());
    }
    let ab = alpha.dot(&beta);
    let q = 1.0 - beta.norm_squared();
    let s = (ab * ab + q * aa).sqrt();
    // positive root of q t^2 + 2 ab t - aa = 0, written without cancellation
    let rho = aa / (ab + s);
    let w = alpha - beta * rho;
    (rho, Vec2::new(w.x / a, w.y / b) / s)
}

fn ellipse_hessian(a: f64, b: f64, c: Vec2, xi: Vec2) -> Mat2 {
    let (rho, g) = ellipse_gauge(a, b, c, xi);
    let beta = Vec2::new(c.x / a, c.y / b);
    let q = 1.0 - beta.norm_squared();
    let alpha = Vec2::new(xi.x / a, xi.y / b);
    let s = q * rho + alpha.dot(&beta);
    let ainv_beta = Vec2::new(beta.x / a, beta.y / b);
    let ainv2 = Mat2::new(1.0 / (a * a), 0.0, 0.0, 1.0 / (b * b));
    let h = ainv2 - ainv_beta * g.transpose() - g * ainv_beta.transpose() - g * g.transpose() * q;
    let h = h / s;
    (h + h.transpose()) * 0.5
}

fn sample_boundary(shape: &BodyShape, n: usize) -> Vec<BodySample> {
    (0..n)
        .map(|k| {
            let s = 2.0 * PI * k as f64 / n as f64;
            match shape {
                BodyShape::Disk { radius, center } => ellipse_sample(*radius, *radius, *center, s),
                BodyShape::Ellipse { a, b, center } => ellipse_sample(*a, *b, *center, s),
                BodyShape::Parametric(f) => {
                    let (g, g1, g2) = f.radial(s);
                    let r = 1.0 / g;
                    let r1 = -g1 / (g * g);
                    let r2 = (2.0 * g1 * g1 - g * g2) / (g * g * g);
                    let er = unit(s);
                    let et = perp(er);
                    let d1 = er * r1 + et * r;
                    let d2 = er * (r2 - r) + et * (2.0 * r1);
                    let speed = d1.norm();
                    let t = d1 / speed;
                    BodySample {
                        point: er * r,
                        normal: Vec2::new(t.y, -t.x),
                        curvature: (d1.x * d2.y - d1.y * d2.x) / speed.powi(3),
                    }
                }
            }
        })
        .collect()
}

fn ellipse_sample(a: f64, b: f64, c: Vec2, s: f64) -> BodySample {
    let (sn, cs) = s.sin_cos();
    let n = Vec2::new(b * cs, a * sn);
    let denom = (a * a * sn * sn + b * b * cs * cs).powf(1.5);
    BodySample {
        point: c + Vec2::new(a * cs, b * sn),
        normal: n.normalize(),
        curvature: a * b / denom,
    }
}

/// Gauges of `K`, `K⁰`, `-K` and `-K⁰` together.
#[derive(Debug, Clone)]
pub struct GaugePair {
    pub body: ConvexBody,
    pub reflected: ConvexBody,
}

impl GaugePair {
    pub fn new(body: ConvexBody) -> Result<Self> {
        let reflected = body.reflect()?;
        Ok(GaugePair { body, reflected })
    }

    pub fn rho(&self, xi: Vec2) -> f64 {
        self.body.gauge(xi)
    }

    pub fn rho0(&self, xi: Vec2) -> f64 {
        self.body.polar_gauge(xi)
    }

    pub fn rho_minus(&self, xi: Vec2) -> f64 {
        self.reflected.gauge(xi)
    }

    pub fn rho0_minus(&self, xi: Vec2) -> f64 {
        self.reflected.polar_gauge(xi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn offset_ellipse() -> ConvexBody {
        ConvexBody::ellipse(1.5, 0.8, Vec2::new(0.4, -0.2)).unwrap()
    }

    fn polygon_ellipse(n: usize) -> Vec<Vec2> {
        (0..n)
            .map(|k| {
                let s = 2.0 * PI * k as f64 / n as f64;
                Vec2::new(0.3 + 1.2 * s.cos(), 0.1 + 0.7 * s.sin())
            })
            .collect()
    }

    /// Gauge from the dense sampled boundary: intersect the ray with the polygon.
    fn brute_gauge(body: &ConvexBody, xi: Vec2) -> f64 {
        let pts: Vec<Vec2> = body.samples().iter().map(|s| s.point).collect();
        xi.norm() / ray_polygon_hit(&pts, xi.normalize()).unwrap()
    }

    #[test]
    fn disk_gauge_is_norm() {
        let k = ConvexBody::disk(1.0).unwrap();
        assert_relative_eq!(k.gauge(Vec2::new(3.0, 4.0)), 5.0, epsilon = 1e-14);
        assert_eq!(k.gauge(Vec2::zeros()), 0.0);
    }

    #[test]
    fn ellipse_boundary_point_has_unit_gauge() {
        let k = ConvexBody::ellipse(2.0, 1.0, Vec2::zeros()).unwrap();
        assert_relative_eq!(k.gauge(Vec2::new(2.0, 0.0)), 1.0, epsilon = 1e-14);
        let xi = Vec2::new(0.7, -1.3);
        assert_relative_eq!(
            k.gauge(xi),
            (xi.x * xi.x / 4.0 + xi.y * xi.y).sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn offset_disk_gauge() {
        let k = ConvexBody::offset_disk(1.0, Vec2::new(0.5, 0.0)).unwrap();
        assert_relative_eq!(k.gauge(Vec2::new(1.5, 0.0)), 1.0, epsilon = 1e-14);
        for xi in [Vec2::new(0.3, 1.1), Vec2::new(-2.0, 0.4), Vec2::new(0.0, -0.7)] {
            let oracle = brute_gauge(&k, xi);
            assert_relative_eq!(k.gauge(xi), oracle, max_relative = 1e-6);
        }
    }

    #[test]
    fn offset_ellipse_gauge_matches_polygon_oracle() {
        let k = offset_ellipse();
        for i in 0..32 {
            let xi = unit(0.37 * i as f64) * (0.2 + 0.1 * i as f64);
            assert_relative_eq!(k.gauge(xi), brute_gauge(&k, xi), max_relative = 1e-6);
        }
    }

    #[test]
    fn polar_gauge_values() {
        let disk = ConvexBody::disk(1.0).unwrap();
        assert_relative_eq!(disk.polar_gauge(Vec2::new(0.0, 2.0)), 2.0, epsilon = 1e-14);
        let e = ConvexBody::ellipse(2.0, 1.0, Vec2::zeros()).unwrap();
        assert_relative_eq!(e.polar_gauge(Vec2::new(1.0, 0.0)), 2.0, epsilon = 1e-14);
        // sampled maximization oracle
        let xi = Vec2::new(0.6, -0.9);
        let oracle = e
            .samples()
            .iter()
            .map(|s| s.point.dot(&xi))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(e.polar_gauge(xi), oracle, max_relative = 1e-6);
    }

    #[test]
    fn gradient_at_zero_is_an_error() {
        let k = ConvexBody::disk(1.0).unwrap();
        assert!(matches!(k.grad_gauge(Vec2::zeros()), Err(Error::ZeroVector)));
        assert!(matches!(
            k.hess_gauge(Vec2::new(1e-15, 0.0)),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn disk_derivatives() {
        let k = ConvexBody::disk(1.0).unwrap();
        let g = k.grad_gauge(Vec2::new(0.0, 3.0)).unwrap();
        assert_relative_eq!(g, Vec2::new(0.0, 1.0), epsilon = 1e-14);
        let h = k.hess_gauge(Vec2::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(h, Mat2::new(0.0, 0.0, 0.0, 1.0), epsilon = 1e-14);
    }

    #[test]
    fn ellipse_gradient_direction() {
        let (a, b) = (2.0, 1.0);
        let k = ConvexBody::ellipse(a, b, Vec2::zeros()).unwrap();
        let xi = Vec2::new(1.3, 0.4);
        let g = k.grad_gauge(xi).unwrap();
        let dir = Vec2::new(xi.x / (a * a), xi.y / (b * b));
        let expected = dir * (k.gauge(xi) / dir.dot(&xi));
        assert_relative_eq!(g, expected, epsilon = 1e-12);
        assert_relative_eq!(g, k.grad_gauge_fd(xi).unwrap(), max_relative = 1e-6);
    }

    #[test]
    fn hessian_kernel_and_symmetry() {
        for k in [
            offset_ellipse(),
            ConvexBody::parametric(&polygon_ellipse(400)).unwrap(),
        ] {
            for i in 0..20 {
                let xi = unit(0.31 * i as f64) * (0.5 + 0.05 * i as f64);
                let h = k.hess_gauge(xi).unwrap();
                assert!((h - h.transpose()).norm() < 1e-8);
                assert!((h * xi).norm() < 1e-6, "H xi = {}", (h * xi).norm());
                let hfd = k.hess_gauge_fd(xi).unwrap();
                assert!((h - hfd).norm() < 1e-4 * (1.0 + h.norm()));
                let eig = h.symmetric_eigenvalues();
                assert!(eig.min() > -1e-10);
            }
        }
    }

    #[test]
    fn reflection() {
        let e = ConvexBody::ellipse(2.0, 1.0, Vec2::zeros()).unwrap();
        let r = e.reflect().unwrap();
        let xi = Vec2::new(0.4, 0.9);
        assert_relative_eq!(r.gauge(xi), e.gauge(xi), epsilon = 1e-15);
        let d = ConvexBody::offset_disk(1.0, Vec2::new(0.5, 0.0)).unwrap();
        match d.reflect().unwrap().shape() {
            BodyShape::Disk { center, .. } => assert_eq!(*center, Vec2::new(-0.5, 0.0)),
            _ => panic!("wrong shape"),
        }
        let k = offset_ellipse();
        let kr = k.reflect().unwrap();
        for i in 0..16 {
            let xi = unit(0.7 * i as f64) * 1.3;
            assert_relative_eq!(kr.gauge(xi), k.gauge(-xi), epsilon = 1e-14);
        }
    }

    #[test]
    fn invalid_bodies_rejected() {
        assert!(ConvexBody::offset_disk(1.0, Vec2::new(1.2, 0.0)).is_err());
        assert!(ConvexBody::ellipse(-1.0, 1.0, Vec2::zeros()).is_err());
        // nonconvex: a five-pointed star polygon
        let star: Vec<Vec2> = (0..200)
            .map(|k| {
                let s = 2.0 * PI * k as f64 / 200.0;
                unit(s) * (1.0 + 0.4 * (5.0 * s).cos())
            })
            .collect();
        assert!(ConvexBody::parametric(&star).is_err());
    }

    #[test]
    fn parametric_body_tracks_ellipse() {
        let pts = polygon_ellipse(2000);
        let p = ConvexBody::parametric(&pts).unwrap();
        let e = ConvexBody::ellipse(1.2, 0.7, Vec2::new(0.3, 0.1)).unwrap();
        for i in 0..50 {
            let xi = unit(0.13 * i as f64);
            assert_relative_eq!(p.gauge(xi), e.gauge(xi), max_relative = 1e-4);
            assert_relative_eq!(p.polar_gauge(xi), e.polar_gauge(xi), max_relative = 1e-4);
            let (gp, ge) = (p.grad_polar_gauge(xi).unwrap(), e.grad_polar_gauge(xi).unwrap());
            assert!((gp - ge).norm() < 1e-3, "{gp} vs {ge}");
        }
    }

    fn bodies() -> &'static [ConvexBody] {
        static BODIES: std::sync::OnceLock<Vec<ConvexBody>> = std::sync::OnceLock::new();
        BODIES.get_or_init(|| {
            vec![
                ConvexBody::disk(1.0).unwrap(),
                offset_ellipse(),
                ConvexBody::parametric(&polygon_ellipse(300)).unwrap(),
            ]
        })
    }

    #[test]
    fn gauge_bounds_hold_on_many_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for k in bodies() {
            let (c1, c2) = k.gauge_bounds();
            assert!(c1 < c2 || (c1 - c2).abs() < 1e-12);
            for _ in 0..1000 {
                let xi = unit(rng.gen_range(0.0..2.0 * PI)) * rng.gen_range(1e-3..1e3);
                let r = k.gauge(xi);
                let n = xi.norm();
                assert!(c1 * n <= r * (1.0 + 1e-9) && r <= c2 * n * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn bipolarity() {
        // the gauge of (K⁰)⁰ is the support function of K⁰: max over p in K⁰ of <xi, p>,
        // and K⁰'s boundary is { D rho0 direction } = { Drho(e) }
        for k in bodies() {
            let polar_boundary: Vec<Vec2> = (0..16384)
                .map(|i| {
                    let e = unit(2.0 * PI * i as f64 / 16384.0);
                    e / k.polar_gauge(e)
                })
                .collect();
            for i in 0..24 {
                let xi = unit(0.27 * i as f64) * 0.9;
                let bipolar = polar_boundary
                    .iter()
                    .map(|p| p.dot(&xi))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_relative_eq!(bipolar, k.gauge(xi), max_relative = 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn homogeneity_and_duality(angle in 0.0..2.0 * PI, mag in 1e-3..1e3f64, t in 1e-3..1e3f64) {
            for k in bodies() {
                let xi = unit(angle) * mag;
                let r = k.gauge(xi);
                prop_assert!((k.gauge(xi * t) - t * r).abs() <= 1e-10 * t * r);
                let d0 = k.grad_polar_gauge(xi).unwrap();
                prop_assert!((k.gauge(d0) - 1.0).abs() < 1e-6);
                let g = k.grad_gauge(xi).unwrap();
                prop_assert!((g.dot(&xi) - r).abs() < 1e-6 * r);
                prop_assert!((k.grad_gauge(xi * 2.0).unwrap() - g).norm() < 1e-8 * (1.0 + g.norm()));
                let fd = k.grad_gauge_fd(xi).unwrap();
                prop_assert!((fd - g).norm() < 1e-4 * g.norm());
            }
        }

        #[test]
        fn subadditivity(a1 in 0.0..2.0 * PI, a2 in 0.0..2.0 * PI, m1 in 0.0..10.0f64, m2 in 0.0..10.0f64) {
            for k in bodies() {
                let x = unit(a1) * m1;
                let y = unit(a2) * m2;
                prop_assert!(k.gauge(x + y) <= k.gauge(x) + k.gauge(y) + 1e-10);
            }
        }
    }
}
