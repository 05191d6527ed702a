//! Uniform Cartesian grids over the bounding box of `Ω` with an inside mask.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::boundary::DomainBoundary;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Cell-centered grid geometry: cell `(i, j)` has center `origin + h (i, j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub origin: Vec2,
    pub h: f64,
}

impl GridSpec {
    /// Square cells of size `max(width, height) / resolution`, centered on the bounding box.
    pub fn covering(boundary: &DomainBoundary, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidField(format!(
                "grid resolution {resolution} too small"
            )));
        }
        let (lo, hi) = boundary.bounding_box();
        let size = hi - lo;
        let h = size.x.max(size.y) / resolution as f64;
        let nx = ((size.x / h).round() as usize).max(1);
        let ny = ((size.y / h).round() as usize).max(1);
        let center = (lo + hi) * 0.5;
        let origin = center - Vec2::new((nx as f64 - 1.0) * 0.5 * h, (ny as f64 - 1.0) * 0.5 * h);
        Ok(GridSpec { nx, ny, origin, h })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 * self.h, j as f64 * self.h)
    }

    #[inline]
    pub fn point_at(&self, k: usize) -> Vec2 {
        let (i, j) = self.coords(k);
        self.point(i, j)
    }

    /// Fractional cell coordinates of `x`.
    pub fn locate(&self, x: Vec2) -> (f64, f64) {
        let r = (x - self.origin) / self.h;
        (r.x, r.y)
    }
}

/// A grid together with the cells lying inside `Ω`.
#[derive(Debug, Clone)]
pub struct GridDomain {
    spec: GridSpec,
    mask: Vec<bool>,
    inside: Vec<usize>,
}

impl GridDomain {
    pub fn new(boundary: &DomainBoundary, resolution: usize) -> Result<Arc<Self>> {
        let spec = GridSpec::covering(boundary, resolution)?;
        Ok(Arc::new(Self::with_spec(boundary, spec)))
    }

    /// Mask by scanline crossings of the boundary polygon, row by row.
    pub fn with_spec(boundary: &DomainBoundary, spec: GridSpec) -> Self {
        let mut mask = vec![false; spec.len()];
        for j in 0..spec.ny {
            let y = spec.point(0, j).y;
            let xs = boundary.row_crossings(y);
            for pair in xs.chunks_exact(2) {
                let (a, b) = (pair[0], pair[1]);
                let i0 = ((a - spec.origin.x) / spec.h).ceil().max(0.0) as usize;
                let i1 = ((b - spec.origin.x) / spec.h).floor();
                if i1 < 0.0 {
                    continue;
                }
                let i1 = (i1 as usize).min(spec.nx - 1);
                for i in i0..=i1 {
                    let x = spec.point(i, j).x;
                    if x > a && x < b {
                        mask[spec.index(i, j)] = true;
                    }
                }
            }
        }
        let inside = (0..spec.len()).filter(|&k| mask[k]).collect();
        GridDomain { spec, mask, inside }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn h(&self) -> f64 {
        self.spec.h
    }

    #[inline]
    pub fn is_inside(&self, k: usize) -> bool {
        self.mask[k]
    }

    #[inline]
    pub fn is_inside_ij(&self, i: isize, j: isize) -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < self.spec.nx
            && (j as usize) < self.spec.ny
            && self.mask[self.spec.index(i as usize, j as usize)]
    }

    /// Indices of inside cells in row-major order.
    pub fn inside(&self) -> &[usize] {
        &self.inside
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Inside cells whose four axis neighbors are also inside.
    pub fn has_full_stencil(&self, k: usize) -> bool {
        let (i, j) = self.spec.coords(k);
        let (i, j) = (i as isize, j as isize);
        self.is_inside_ij(i, j)
            && self.is_inside_ij(i - 1, j)
            && self.is_inside_ij(i + 1, j)
            && self.is_inside_ij(i, j - 1)
            && self.is_inside_ij(i, j + 1)
    }
}

/// Anything that can be sampled at a point of the plane.
pub trait ScalarField {
    fn eval(&self, x: Vec2) -> f64;
}

impl<F: Fn(Vec2) -> f64> ScalarField for F {
    fn eval(&self, x: Vec2) -> f64 {
        self(x)
    }
}

/// Values on a [`GridDomain`]; cells outside the mask hold 0.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn zeros(domain: Arc<GridDomain>) -> Self {
        let n = domain.spec.len();
        ScalarGrid {
            domain,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(domain: Arc<GridDomain>, mut values: Vec<f64>) -> Result<Self> {
        let spec = domain.spec;
        if values.len() != spec.len() {
            return Err(Error::ShapeMismatch {
                expected: (spec.nx, spec.ny),
                found: (values.len(), 1),
            });
        }
        for (k, v) in values.iter_mut().enumerate() {
            if !domain.mask[k] {
                *v = 0.0;
            } else if v.is_nan() {
                let p = spec.point_at(k);
                return Err(Error::InvalidField(format!("NaN at ({}, {})", p.x, p.y)));
            }
        }
        Ok(ScalarGrid { domain, values })
    }

    /// Samples `f` at the centers of inside cells.
    pub fn sample<F: ScalarField + ?Sized>(domain: Arc<GridDomain>, f: &F) -> Self {
        let mut g = Self::zeros(domain);
        for &k in &g.domain.inside {
            g.values[k] = f.eval(g.domain.spec.point_at(k));
        }
        g
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn spec(&self) -> &GridSpec {
        &self.domain.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.domain.spec.index(i, j)]
    }

    /// Applies `f` to every inside value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = Self::zeros(self.domain.clone());
        for &k in &self.domain.inside {
            out.values[k] = f(self.values[k]);
        }
        out
    }

    /// Combines two grids on the same domain cellwise.
    pub fn zip(&self, other: &ScalarGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.domain.spec, other.domain.spec);
        let mut out = Self::zeros(self.domain.clone());
        for &k in &self.domain.inside {
            out.values[k] = f(self.values[k], other.values[k]);
        }
        out
    }

    /// `h² Σ f(value)` over inside cells.
    pub fn integrate_with(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.domain.spec.h;
        self.domain.inside.iter().map(|&k| f(self.values[k])).sum::<f64>() * h * h
    }

    pub fn integral(&self) -> f64 {
        self.integrate_with(|v| v)
    }

    pub fn l2_norm(&self) -> f64 {
        self.integrate_with(|v| v * v).sqrt()
    }

    pub fn l2_distance(&self, other: &ScalarGrid) -> f64 {
        let h = self.domain.spec.h;
        let s: f64 = self
            .domain
            .inside
            .iter()
            .map(|&k| (self.values[k] - other.values[k]).powi(2))
            .sum();
        (s * h * h).sqrt()
    }

    pub fn max_abs_diff(&self, other: &ScalarGrid) -> f64 {
        self.domain
            .inside
            .iter()
            .map(|&k| (self.values[k] - other.values[k]).abs())
            .fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.domain
            .inside
            .iter()
            .map(|&k| self.values[k])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.domain
            .inside
            .iter()
            .map(|&k| self.values[k])
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean over inside cells.
    pub fn mean(&self) -> f64 {
        let n = self.domain.inside.len().max(1);
        self.domain.inside.iter().map(|&k| self.values[k]).sum::<f64>() / n as f64
    }

    /// Central-difference gradient at an inside cell; `None` if the stencil leaves `Ω`.
    pub fn gradient(&self, k: usize) -> Option<Vec2> {
        if !self.domain.has_full_stencil(k) {
            return None;
        }
        let nx = self.domain.spec.nx;
        let h2 = 2.0 * self.domain.spec.h;
        Some(Vec2::new(
            (self.values[k + 1] - self.values[k - 1]) / h2,
            (self.values[k + nx] - self.values[k - nx]) / h2,
        ))
    }

    /// Largest `u(x) - u(z) - rho0(x - z)` over pairs of inside 8-neighbors.
    pub fn lipschitz_excess(&self, rho0: impl Fn(Vec2) -> f64) -> f64 {
        self.neighbor_pairs_fold(|du, dx| du - rho0(dx))
    }

    /// Largest `(u(x) - u(z)) / rho0(x - z)` over pairs of inside 8-neighbors.
    pub fn lipschitz_ratio(&self, rho0: impl Fn(Vec2) -> f64) -> f64 {
        self.neighbor_pairs_fold(|du, dx| du / rho0(dx))
    }

    fn neighbor_pairs_fold(&self, f: impl Fn(f64, Vec2) -> f64) -> f64 {
        const OFFSETS: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (1, -1)];
        let spec = &self.domain.spec;
        let mut worst = f64::NEG_INFINITY;
        for &k in &self.domain.inside {
            let (i, j) = spec.coords(k);
            for &(di, dj) in &OFFSETS {
                let (i2, j2) = (i as isize + di, j as isize + dj);
                if !self.domain.is_inside_ij(i2, j2) {
                    continue;
                }
                let k2 = spec.index(i2 as usize, j2 as usize);
                let dx = Vec2::new(di as f64, dj as f64) * spec.h;
                let du = self.values[k2] - self.values[k];
                worst = worst.max(f(du, dx)).max(f(-du, -dx));
            }
        }
        worst
    }

    /// Bilinear interpolation using the inside corners only, with renormalized weights.
    pub fn interpolate(&self, x: Vec2) -> f64 {
        let spec = &self.domain.spec;
        let (fx, fy) = spec.locate(x);
        let (i0, j0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - i0, fy - j0);
        let (i0, j0) = (i0 as isize, j0 as isize);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (di, dj, w) in [
            (0, 0, (1.0 - tx) * (1.0 - ty)),
            (1, 0, tx * (1.0 - ty)),
            (0, 1, (1.0 - tx) * ty),
            (1, 1, tx * ty),
        ] {
            let (i, j) = (i0 + di, j0 + dj);
            if self.domain.is_inside_ij(i, j) {
                acc += w * self.values[spec.index(i as usize, j as usize)];
                wsum += w;
            }
        }
        if wsum > 1e-12 {
            return acc / wsum;
        }
        // nearest inside cell in a small window
        let (ic, jc) = (fx.round() as isize, fy.round() as isize);
        let mut best: Option<(f64, f64)> = None;
        for dj in -3..=3 {
            for di in -3..=3 {
                let (i, j) = (ic + di, jc + dj);
                if self.domain.is_inside_ij(i, j) {
                    let k = spec.index(i as usize, j as usize);
                    let dist = (spec.point_at(k) - x).norm_squared();
                    if best.is_none_or(|(b, _)| dist < b) {
                        best = Some((dist, self.values[k]));
                    }
                }
            }
        }
        best.map_or(0.0, |(_, v)| v)
    }

    /// Writes `x,y,value` for inside cells, row-major.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "value"])?;
        for &k in &self.domain.inside {
            let p = self.domain.spec.point_at(k);
            w.write_record([p.x.to_string(), p.y.to_string(), self.values[k].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `x,y,value` format back onto `domain`, which must match the writer's grid.
    pub fn read_csv<R: Read>(domain: Arc<GridDomain>, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
        };
        let (cx, cy, cv) = (column("x")?, column("y")?, column("value")?);
        let spec = domain.spec;
        let mut values = vec![0.0; spec.len()];
        let mut seen = vec![false; spec.len()];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut misplaced = false;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |c: usize, name: &str| -> Result<f64> {
                rec.get(c)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Format(format!("bad `{name}` on data row {}", line + 1)))
            };
            let (x, y, v) = (num(cx, "x")?, num(cy, "y")?, num(cv, "value")?);
            xs.push(x);
            ys.push(y);
            let (fi, fj) = spec.locate(Vec2::new(x, y));
            let (i, j) = (fi.round(), fj.round());
            if (fi - i).abs() > 1e-6 || (fj - j).abs() > 1e-6 || !domain.is_inside_ij(i as isize, j as isize)
            {
                misplaced = true;
                continue;
            }
            let k = spec.index(i as usize, j as usize);
            values[k] = v;
            seen[k] = true;
        }
        let complete = domain.inside.iter().all(|&k| seen[k]);
        if misplaced || !complete {
            return Err(Error::ShapeMismatch {
                expected: (spec.nx, spec.ny),
                found: (distinct_count(&mut xs), distinct_count(&mut ys)),
            });
        }
        Self::from_values(domain, values)
    }
}

fn distinct_count(v: &mut [f64]) -> usize {
    v.sort_by(f64::total_cmp);
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let mut count = 0;
    let mut last = f64::NAN;
    for &x in v.iter() {
        if !(x - last).abs().le(&(1e-9 * scale)) {
            count += 1;
            last = x;
        }
    }
    count
}

impl ScalarField for ScalarGrid {
    fn eval(&self, x: Vec2) -> f64 {
        self.interpolate(x)
    }
}

/// Vector values on a [`GridDomain`].
#[derive(Debug, Clone)]
pub struct VectorGrid {
    domain: Arc<GridDomain>,
    values: Vec<Vec2>,
}

impl VectorGrid {
    pub fn zeros(domain: Arc<GridDomain>) -> Self {
        let n = domain.spec.len();
        VectorGrid {
            domain,
            values: vec![Vec2::zeros(); n],
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[Vec2] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec2] {
        &mut self.values
    }

    /// Writes `x,y,ex,ey` for inside cells, row-major.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "ex", "ey"])?;
        for &k in &self.domain.inside {
            let p = self.domain.spec.point_at(k);
            let e = self.values[k];
            w.write_record([p.x.to_string(), p.y.to_string(), e.x.to_string(), e.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
