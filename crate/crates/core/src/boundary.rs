//! Closed `C²` boundary curves of the cross-section `Ω`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{perp, unit, Vec2};

/// Default number of boundary samples.
pub const BOUNDARY_SAMPLES: usize = 2048;

/// Parameter step for boundary derivatives.
pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierMode {
    pub k: u32,
    pub amplitude: f64,
    pub phase: f64,
}

/// Shape presets. All curves are traversed counterclockwise by `θ ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    Disk {
        radius: f64,
        center: Vec2,
    },
    Ellipse {
        a: f64,
        b: f64,
        center: Vec2,
    },
    /// Cassini oval `|x - f₁| |x - f₂| = a²` with foci `(±c, 0)`; requires `a > c`.
    /// Peanut-shaped (with a concave waist) when `a < c √2`.
    Cassini {
        a: f64,
        c: f64,
        center: Vec2,
    },
    /// `r(θ) = radius (1 + Σ amplitude cos(k θ + phase))`.
    PerturbedDisk {
        radius: f64,
        modes: Vec<FourierMode>,
        center: Vec2,
    },
}

/// A point of the curve with derivative data.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub theta: f64,
    pub point: Vec2,
    /// `|y'(θ)|`
    pub speed: f64,
    pub tangent: Vec2,
    /// Euclidean inward unit normal.
    pub normal: Vec2,
    /// Signed curvature, positive where `Ω` is locally convex.
    pub curvature: f64,
}

impl DomainShape {
    fn polar_radius(&self, theta: f64) -> f64 {
        match self {
            DomainShape::Cassini { a, c, .. } => {
                let c2 = c * c;
                let cos2 = (2.0 * theta).cos();
                (c2 * cos2 + (c2 * c2 * cos2 * cos2 + a.powi(4) - c2 * c2).sqrt()).sqrt()
            }
            DomainShape::PerturbedDisk { radius, modes, .. } => {
                radius
                    * (1.0
                        + modes
                            .iter()
                            .map(|m| m.amplitude * (m.k as f64 * theta + m.phase).cos())
                            .sum::<f64>())
            }
            _ => unreachable!(),
        }
    }

    /// `(y, y', y'')` at parameter `θ`.
    fn derivatives(&self, theta: f64) -> (Vec2, Vec2, Vec2) {
        match self {
            DomainShape::Disk { radius, center } => {
                let (s, c) = theta.sin_cos();
                (
                    center + Vec2::new(c, s) * *radius,
                    Vec2::new(-s, c) * *radius,
                    Vec2::new(-c, -s) * *radius,
                )
            }
            DomainShape::Ellipse { a, b, center } => {
                let (s, c) = theta.sin_cos();
                (
                    center + Vec2::new(a * c, b * s),
                    Vec2::new(-a * s, b * c),
                    Vec2::new(-a * c, -b * s),
                )
            }
            DomainShape::PerturbedDisk {
                radius,
                modes,
                center,
            } => {
                let (mut r, mut r1, mut r2) = (1.0, 0.0, 0.0);
                for m in modes {
                    let k = m.k as f64;
                    let (s, c) = (k * theta + m.phase).sin_cos();
                    r += m.amplitude * c;
                    r1 -= m.amplitude * k * s;
                    r2 -= m.amplitude * k * k * c;
                }
                polar_derivatives(*center, theta, r * radius, r1 * radius, r2 * radius)
            }
            DomainShape::Cassini { center, .. } => {
                let h = FD_STEP;
                let f = |t: f64| self.polar_radius(t);
                let (fm2, fm1, f0, fp1, fp2) = (
                    f(theta - 2.0 * h),
                    f(theta - h),
                    f(theta),
                    f(theta + h),
                    f(theta + 2.0 * h),
                );
                let r1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
                let r2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
                polar_derivatives(*center, theta, f0, r1, r2)
            }
        }
    }

    fn position(&self, theta: f64) -> Vec2 {
        match self {
            DomainShape::Cassini { center, .. } | DomainShape::PerturbedDisk { center, .. } => {
                center + unit(theta) * self.polar_radius(theta)
            }
            _ => self.derivatives(theta).0,
        }
    }

    fn center(&self) -> Vec2 {
        match self {
            DomainShape::Disk { center, .. }
            | DomainShape::Ellipse { center, .. }
            | DomainShape::Cassini { center, .. }
            | DomainShape::PerturbedDisk { center, .. } => *center,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDomain(m));
        match self {
            DomainShape::Disk { radius, .. } if !(*radius > 0.0) => bad(format!("radius {radius}")),
            DomainShape::Ellipse { a, b, .. } if !(*a > 0.0 && *b > 0.0) => {
                bad(format!("semi-axes {a}, {b}"))
            }
            DomainShape::Cassini { a, c, .. } if !(*c >= 0.0 && *a > *c) => {
                bad(format!("cassini oval needs a > c >= 0, got a = {a}, c = {c}"))
            }
            DomainShape::PerturbedDisk { radius, modes, .. } => {
                let total: f64 = modes.iter().map(|m| m.amplitude.abs()).sum();
                if !(*radius > 0.0) || total >= 1.0 {
                    bad(format!(
                        "perturbed disk needs radius > 0 and total amplitude < 1 (got {total})"
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

fn polar_derivatives(center: Vec2, theta: f64, r: f64, r1: f64, r2: f64) -> (Vec2, Vec2, Vec2) {
    let er = unit(theta);
    let et = perp(er);
    (center + er * r, er * r1 + et * r, er * (r2 - r) + et * (2.0 * r1))
}

/// The boundary `∂Ω` with a uniform sampling in the curve parameter.
#[derive(Debug, Clone)]
pub struct DomainBoundary {
    shape: DomainShape,
    samples: Vec<CurvePoint>,
    polygon: Vec<Vec2>,
    min: Vec2,
    max: Vec2,
    diameter: f64,
}

impl DomainBoundary {
    pub fn new(shape: DomainShape, n_samples: usize) -> Result<Self> {
        shape.validate()?;
        if n_samples < 16 {
            return Err(Error::InvalidDomain(format!(
                "too few boundary samples: {n_samples}"
            )));
        }
        let mut b = DomainBoundary {
            shape,
            samples: Vec::new(),
            polygon: Vec::new(),
            min: Vec2::zeros(),
            max: Vec2::zeros(),
            diameter: 0.0,
        };
        b.samples = (0..n_samples)
            .map(|k| b.eval(2.0 * PI * k as f64 / n_samples as f64))
            .collect();
        // the membership polygon is denser than the sample set
        let dense = 4 * n_samples;
        b.polygon = (0..dense)
            .map(|k| b.shape.position(2.0 * PI * k as f64 / dense as f64))
            .collect();

        let area: f64 = (0..dense)
            .map(|i| {
                let p = b.polygon[i];
                let q = b.polygon[(i + 1) % dense];
                p.x * q.y - p.y * q.x
            })
            .sum::<f64>()
            * 0.5;
        if !(area > 0.0) {
            return Err(Error::InvalidDomain("boundary must wind counterclockwise".into()));
        }
        if b.samples
            .iter()
            .any(|s| !s.curvature.is_finite() || !(s.speed > 0.0))
        {
            return Err(Error::InvalidDomain("boundary is not regular".into()));
        }
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for p in &b.polygon {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        b.min = lo;
        b.max = hi;
        let mut diam: f64 = 0.0;
        let step = (dense / 512).max(1);
        for i in (0..dense).step_by(step) {
            for j in (i..dense).step_by(step) {
                diam = diam.max((b.polygon[i] - b.polygon[j]).norm());
            }
        }
        b.diameter = diam;
        Ok(b)
    }

    pub fn disk(radius: f64) -> Result<Self> {
        Self::new(
            DomainShape::Disk {
                radius,
                center: Vec2::zeros(),
            },
            BOUNDARY_SAMPLES,
        )
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn samples(&self) -> &[CurvePoint] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Parameter spacing of the sampling.
    pub fn step(&self) -> f64 {
        2.0 * PI / self.samples.len() as f64
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        (self.min, self.max)
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn center(&self) -> Vec2 {
        self.shape.center()
    }

    pub fn point(&self, theta: f64) -> Vec2 {
        self.shape.position(theta)
    }

    /// Full differential data at parameter `θ`.
    pub fn eval(&self, theta: f64) -> CurvePoint {
        let (p, d1, d2) = self.shape.derivatives(theta);
        let speed = d1.norm();
        let tangent = d1 / speed;
        CurvePoint {
            theta: theta.rem_euclid(2.0 * PI),
            point: p,
            speed,
            tangent,
            normal: perp(tangent),
            curvature: (d1.x * d2.y - d1.y * d2.x) / speed.powi(3),
        }
    }

    /// Even-odd membership test against the dense boundary polygon.
    pub fn contains(&self, x: Vec2) -> bool {
        let poly = &self.polygon;
        let n = poly.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (pi, pj) = (poly[i], poly[j]);
            if (pi.y > x.y) != (pj.y > x.y) {
                let xc = pj.x + (x.y - pj.y) * (pi.x - pj.x) / (pi.y - pj.y);
                if x.x < xc {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Sorted abscissae where the horizontal line at height `y` crosses the boundary polygon.
    pub fn row_crossings(&self, y: f64) -> Vec<f64> {
        let poly = &self.polygon;
        let n = poly.len();
        let mut xs = Vec::new();
        let mut j = n - 1;
        for i in 0..n {
            let (pi, pj) = (poly[i], poly[j]);
            if (pi.y > y) != (pj.y > y) {
                xs.push(pj.x + (y - pj.y) * (pi.x - pj.x) / (pi.y - pj.y));
            }
            j = i;
        }
        xs.sort_by(f64::total_cmp);
        xs
    }

    /// Euclidean distance to the boundary polygon.
    pub fn euclidean_distance(&self, x: Vec2) -> f64 {
        let poly = &self.polygon;
        let n = poly.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let ab = b - a;
            let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            best = best.min((a + ab * t - x).norm());
        }
        best
    }

    /// Enclosed area by the shoelace formula on the dense polygon.
    pub fn area(&self) -> f64 {
        let poly = &self.polygon;
        let n = poly.len();
        (0..n)
            .map(|i| {
                let p = poly[i];
                let q = poly[(i + 1) % n];
                p.x * q.y - p.y * q.x
            })
            .sum::<f64>()
            * 0.5
    }
}
