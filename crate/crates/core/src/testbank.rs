//! Smooth compactly supported test functions and weak divergence residuals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boundary::DomainBoundary;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{ScalarGrid, VectorGrid};

/// Default number of test functions.
pub const BANK_SIZE: usize = 20;
/// Default seed of the bank.
pub const BANK_SEED: u64 = 20_240_917;
/// Default gap between test-function supports and `∂Ω`.
pub const BANK_MARGIN: f64 = 0.02;

/// `∫_{-1}^{1} (1 - t²)^8 dt`
const PROFILE_SQ_INTEGRAL: f64 = 0.599_076_740_253_210_9;

/// Tensor bump `φ(x) = b((x - c)/s) b((y - c_y)/s)` with `b(t) = (1 - t²)⁴` on `|t| < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: Vec2,
    pub scale: f64,
}

#[inline]
fn profile(t: f64) -> (f64, f64) {
    if t.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - t * t;
    let q3 = q * q * q;
    (q3 * q, -8.0 * t * q3)
}

impl Bump {
    #[inline]
    pub fn value(&self, x: Vec2) -> f64 {
        let z = (x - self.center) / self.scale;
        profile(z.x).0 * profile(z.y).0
    }

    #[inline]
    pub fn gradient(&self, x: Vec2) -> Vec2 {
        let z = (x - self.center) / self.scale;
        let (bx, dbx) = profile(z.x);
        let (by, dby) = profile(z.y);
        Vec2::new(dbx * by, bx * dby) / self.scale
    }

    /// Exact `L²` norm.
    pub fn l2_norm(&self) -> f64 {
        self.scale * PROFILE_SQ_INTEGRAL
    }
}

/// A deterministic family of bumps supported inside `Ω` away from its boundary.
#[derive(Debug, Clone)]
pub struct TestBank {
    bumps: Vec<Bump>,
}

impl TestBank {
    /// Draws `count` bumps with centers uniform in the bounding box and scales between
    /// 10% and 30% of the larger half-width, keeping every support at least `margin`
    /// away from `∂Ω`.
    pub fn new(omega: &DomainBoundary, count: usize, seed: u64, margin: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = omega.bounding_box();
        let half = 0.5 * (hi - lo).x.max((hi - lo).y);
        let mut bumps = Vec::with_capacity(count);
        let mut tries = 0;
        while bumps.len() < count {
            tries += 1;
            if tries > 100_000 {
                return Err(Error::InvalidDomain(
                    "could not place test functions inside the domain".into(),
                ));
            }
            let c = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            let s = half * rng.gen_range(0.1..0.3);
            if omega.contains(c) && omega.euclidean_distance(c) > s * std::f64::consts::SQRT_2 + margin {
                bumps.push(Bump { center: c, scale: s });
            }
        }
        Ok(TestBank { bumps })
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    /// `max_φ |∫ F·Dφ - ∫ f φ| / ‖φ‖₂`, the weak residual of `-div F = f`.
    pub fn weak_residual(&self, flux: &VectorGrid, source: &ScalarGrid) -> f64 {
        let domain = flux.domain();
        let spec = domain.spec();
        let h2 = spec.h * spec.h;
        self.bumps
            .iter()
            .map(|b| {
                let mut acc = 0.0;
                for &k in domain.inside() {
                    let x = spec.point_at(k);
                    let z = (x - b.center) / b.scale;
                    if z.x.abs() >= 1.0 || z.y.abs() >= 1.0 {
                        continue;
                    }
                    acc += flux.values()[k].dot(&b.gradient(x)) - source.values()[k] * b.value(x);
                }
                (acc * h2).abs() / b.l2_norm()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDomain;
    use approx::assert_relative_eq;

    #[test]
    fn bump_gradient_matches_finite_differences() {
        let b = Bump {
            center: Vec2::new(0.1, -0.2),
            scale: 0.3,
        };
        let x = Vec2::new(0.2, -0.1);
        let h = 1e-6;
        let fd = Vec2::new(
            (b.value(x + Vec2::new(h, 0.0)) - b.value(x - Vec2::new(h, 0.0))) / (2.0 * h),
            (b.value(x + Vec2::new(0.0, h)) - b.value(x - Vec2::new(0.0, h))) / (2.0 * h),
        );
        assert_relative_eq!(b.gradient(x), fd, max_relative = 1e-6);
    }

    #[test]
    fn l2_norm_matches_quadrature() {
        let b = Bump {
            center: Vec2::zeros(),
            scale: 0.25,
        };
        let n = 800;
        let h = 0.5 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = Vec2::new(-0.25 + (i as f64 + 0.5) * h, -0.25 + (j as f64 + 0.5) * h);
                s += b.value(x).powi(2);
            }
        }
        assert_relative_eq!((s * h * h).sqrt(), b.l2_norm(), max_relative = 1e-6);
    }

    #[test]
    fn supports_stay_inside() {
        let omega = DomainBoundary::disk(1.0).unwrap();
        let bank = TestBank::new(&omega, BANK_SIZE, BANK_SEED, 0.05).unwrap();
        assert_eq!(bank.bumps().len(), BANK_SIZE);
        for b in bank.bumps() {
            assert!(b.center.norm() + b.scale * std::f64::consts::SQRT_2 < 0.95);
        }
    }

    #[test]
    fn exact_divergence_pair_has_small_residual() {
        // F = (x, y)/2 has -div F = -1
        let omega = DomainBoundary::disk(1.0).unwrap();
        let domain = GridDomain::new(&omega, 128).unwrap();
        let mut flux = VectorGrid::zeros(domain.clone());
        for &k in domain.inside() {
            flux.values_mut()[k] = domain.spec().point_at(k) * 0.5;
        }
        let source = ScalarGrid::sample(domain, &|_: Vec2| -1.0);
        let bank = TestBank::new(&omega, BANK_SIZE, BANK_SEED, 0.05).unwrap();
        let r = bank.weak_residual(&flux, &source);
        assert!(r < 1e-4, "{r}");
        let wrong = source.map(|_| 1.0);
        assert!(bank.weak_residual(&flux, &wrong) > 0.1);
    }
}
