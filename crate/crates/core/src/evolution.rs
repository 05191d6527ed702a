//! Quasistatic evolution under piecewise monotone drives.

use rayon::prelude::*;

use crate::contour::{contour, Polyline};
use crate::critical_state::{dual_function, labels, positive_run, StepInput};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{ScalarField, ScalarGrid, VectorGrid};
use crate::minkowski::{DistanceField, Geometry, RayFan, Side, CUT_TOL};
use crate::testbank::TestBank;

/// Tolerance of the saturation-time root finder, relative to the piece length.
pub const TIME_TOL: f64 = 1e-12;
/// Minimal dissipation for which the electric field is formed.
pub const FIELD_THRESHOLD: f64 = 1e-12;
/// Admissibility slack of an initial field against `[-d⁻, d]`.
pub const ADMISSIBILITY_SLACK: f64 = 1e-9;
/// Relative jump in `H_s` tolerated at piece junctions.
pub const DRIVE_JUMP_TOL: f64 = 1e-9;
/// Default time samples per drive piece in hysteresis loops.
pub const LOOP_SAMPLES: usize = 64;
/// Field snapshots emitted along a hysteresis loop.
pub const LOOP_SNAPSHOTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
}

/// Monotone piecewise-cubic interpolant with Fritsch-Carlson tangents.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    t: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = t.len();
        if n < 2 || y.len() != n {
            return Err(Error::Config {
                key: "drive.samples".into(),
                msg: "need at least two (t, H) samples of equal length".into(),
            });
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config {
                key: "drive.samples".into(),
                msg: "sample times must increase strictly".into(),
            });
        }
        let delta: Vec<f64> = (0..n - 1)
            .map(|i| (y[i + 1] - y[i]) / (t[i + 1] - t[i]))
            .collect();
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            m[i] = if delta[i - 1] * delta[i] <= 0.0 {
                0.0
            } else {
                0.5 * (delta[i - 1] + delta[i])
            };
        }
        for i in 0..n - 1 {
            if delta[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
                continue;
            }
            let a = m[i] / delta[i];
            let b = m[i + 1] / delta[i];
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                m[i] = tau * a * delta[i];
                m[i + 1] = tau * b * delta[i];
            }
        }
        Ok(MonotoneCubic { t, y, m })
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.t.len();
        match self.t.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.t[i + 1] - self.t[i];
        let s = ((t - self.t[i]) / h).clamp(0.0, 1.0);
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[i]
            + (s3 - 2.0 * s2 + s) * h * self.m[i]
            + (-2.0 * s3 + 3.0 * s2) * self.y[i + 1]
            + (s3 - s2) * h * self.m[i + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.t[i + 1] - self.t[i];
        let s = ((t - self.t[i]) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        (6.0 * s2 - 6.0 * s) / h * self.y[i]
            + (3.0 * s2 - 4.0 * s + 1.0) * self.m[i]
            + (-6.0 * s2 + 6.0 * s) / h * self.y[i + 1]
            + (3.0 * s2 - 2.0 * s) * self.m[i + 1]
    }
}

#[derive(Debug, Clone)]
pub enum PieceShape {
    Linear { h0: f64, h1: f64 },
    Samples(MonotoneCubic),
}

/// One piece `[t0, t1]` of the external field `H_s`.
#[derive(Debug, Clone)]
pub struct DrivePiece {
    pub t0: f64,
    pub t1: f64,
    pub shape: PieceShape,
}

impl DrivePiece {
    pub fn linear(t0: f64, t1: f64, h0: f64, h1: f64) -> Result<Self> {
        check_span(t0, t1)?;
        Ok(DrivePiece {
            t0,
            t1,
            shape: PieceShape::Linear { h0, h1 },
        })
    }

    /// Samples `(t, H)` spanning `[t[0], t[last]]`.
    pub fn samples(t: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        let cubic = MonotoneCubic::new(t, h)?;
        let (t0, t1) = (cubic.t[0], *cubic.t.last().unwrap());
        check_span(t0, t1)?;
        Ok(DrivePiece {
            t0,
            t1,
            shape: PieceShape::Samples(cubic),
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        match &self.shape {
            PieceShape::Linear { h0, h1 } => {
                let s = ((t - self.t0) / (self.t1 - self.t0)).clamp(0.0, 1.0);
                h0 + (h1 - h0) * s
            }
            PieceShape::Samples(c) => c.value(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match &self.shape {
            PieceShape::Linear { h0, h1 } => (h1 - h0) / (self.t1 - self.t0),
            PieceShape::Samples(c) => c.derivative(t),
        }
    }

    /// Direction of the piece; `NonmonotonePiece` if its derivative changes sign.
    pub fn monotonicity(&self) -> Result<Monotonicity> {
        let signs: Vec<f64> = match &self.shape {
            PieceShape::Linear { h0, h1 } => vec![h1 - h0],
            PieceShape::Samples(c) => c.y.windows(2).map(|w| w[1] - w[0]).collect(),
        };
        let up = signs.iter().any(|&s| s > 0.0);
        let down = signs.iter().any(|&s| s < 0.0);
        match (up, down) {
            (true, true) => Err(Error::NonmonotonePiece {
                t0: self.t0,
                t1: self.t1,
            }),
            (true, false) => Ok(Monotonicity::Increasing),
            (false, true) => Ok(Monotonicity::Decreasing),
            (false, false) => Ok(Monotonicity::Constant),
        }
    }

    /// `max |H_s'|` over the piece.
    pub fn max_rate(&self) -> f64 {
        match &self.shape {
            PieceShape::Linear { .. } => self.derivative(self.t0).abs(),
            PieceShape::Samples(c) => {
                let mut best: f64 = 0.0;
                for w in c.t.windows(2) {
                    for i in 0..=64 {
                        let t = w[0] + (w[1] - w[0]) * i as f64 / 64.0;
                        best = best.max(c.derivative(t).abs());
                    }
                }
                best
            }
        }
    }
}

fn check_span(t0: f64, t1: f64) -> Result<()> {
    if t0.is_finite() && t1.is_finite() && t1 > t0 {
        Ok(())
    } else {
        Err(Error::Config {
            key: "drive".into(),
            msg: format!("piece [{t0}, {t1}] has no positive length"),
        })
    }
}

/// `H_s(t)` as contiguous pieces.
#[derive(Debug, Clone)]
pub struct DriveProfile {
    pieces: Vec<DrivePiece>,
}

impl DriveProfile {
    pub fn new(pieces: Vec<DrivePiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Config {
                key: "drive".into(),
                msg: "no pieces".into(),
            });
        }
        for w in pieces.windows(2) {
            let scale = 1.0 + w[0].t1.abs();
            if (w[0].t1 - w[1].t0).abs() > TIME_TOL * scale {
                return Err(Error::Config {
                    key: "drive".into(),
                    msg: format!("pieces are not contiguous at t = {}", w[0].t1),
                });
            }
            let (a, b) = (w[0].value(w[0].t1), w[1].value(w[1].t0));
            if (a - b).abs() > DRIVE_JUMP_TOL * (1.0 + a.abs()) {
                return Err(Error::Config {
                    key: "drive".into(),
                    msg: format!("drive jumps from {a} to {b} at t = {}", w[0].t1),
                });
            }
        }
        Ok(DriveProfile { pieces })
    }

    /// `H_s = rate · t` on `[0, t1]`.
    pub fn linear(t1: f64, rate: f64) -> Result<Self> {
        DriveProfile::new(vec![DrivePiece::linear(0.0, t1, 0.0, rate * t1)?])
    }

    /// Linear rise from 0 to `amplitude` on `[0, period]` and back on `[period, 2 period]`.
    pub fn up_down(period: f64, amplitude: f64) -> Result<Self> {
        DriveProfile::new(vec![
            DrivePiece::linear(0.0, period, 0.0, amplitude)?,
            DrivePiece::linear(period, 2.0 * period, amplitude, 0.0)?,
        ])
    }

    pub fn pieces(&self) -> &[DrivePiece] {
        &self.pieces
    }

    pub fn start(&self) -> f64 {
        self.pieces[0].t0
    }

    pub fn end(&self) -> f64 {
        self.pieces.last().unwrap().t1
    }

    /// Index of the piece containing `t`; junctions belong to the later piece.
    pub fn piece_at(&self, t: f64) -> usize {
        self.pieces
            .iter()
            .position(|p| t < p.t1)
            .unwrap_or(self.pieces.len() - 1)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.pieces[self.piece_at(t)].value(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.pieces[self.piece_at(t)].derivative(t)
    }

    pub fn max_rate(&self) -> f64 {
        self.pieces.iter().map(|p| p.max_rate()).fold(0.0, f64::max)
    }
}

/// `h_next = min(max(h_prev, c - d⁻), c + d)`.
pub fn discrete_step(field: &DistanceField, h_prev: &ScalarGrid, c_next: f64) -> ScalarGrid {
    let d = field.plus.distance.values();
    let dm = field.minus.distance.values();
    let mut out = h_prev.clone();
    for &k in h_prev.domain().inside() {
        let v = h_prev.values()[k];
        out.values_mut()[k] = v.max(c_next - dm[k]).min(c_next + d[k]);
    }
    out
}

/// The discrete states `h_0, ..., h_n` on the uniform partition of the drive's span.
pub fn discrete_path(
    field: &DistanceField,
    h0: &ScalarGrid,
    drive: &DriveProfile,
    n: usize,
) -> Vec<ScalarGrid> {
    let (a, b) = (drive.start(), drive.end());
    let mut out = Vec::with_capacity(n + 1);
    out.push(h0.clone());
    for i in 1..=n {
        let t = a + (b - a) * i as f64 / n as f64;
        let next = discrete_step(field, out.last().unwrap(), drive.value(t));
        out.push(next);
    }
    out
}

/// Dual function of one discrete step divided by the step length.
pub fn discrete_dissipation(
    geometry: &Geometry,
    fan: &RayFan,
    field: &DistanceField,
    h_prev: &ScalarGrid,
    c_next: f64,
    dt: f64,
    exact_prev: Option<&(dyn Fn(Vec2) -> f64 + Sync)>,
) -> Result<ScalarGrid> {
    let ubar = h_prev.map(|v| v - c_next);
    let shifted = exact_prev.map(|f| move |x: Vec2| f(x) - c_next);
    let mut input = StepInput::new(geometry, fan, field, &ubar)?;
    if let Some(g) = &shifted {
        input = input.with_exact(g);
    }
    let labels = labels(&input);
    Ok(dual_function(&input, &labels)?.v.map(|v| v / dt))
}

/// Initial state of the evolution.
#[derive(Debug, Clone)]
pub enum InitialField {
    /// `h0 ≡ H_s(start)`.
    Uniform,
    Grid(ScalarGrid),
}

/// A field known on the grid, and exactly when it is constant.
#[derive(Debug, Clone)]
struct State {
    grid: ScalarGrid,
    constant: Option<f64>,
}

impl ScalarField for State {
    fn eval(&self, x: Vec2) -> f64 {
        match self.constant {
            Some(c) => c,
            None => self.grid.interpolate(x),
        }
    }
}

/// Closed-form evolution of `h` and `w` driven by `H_s`.
pub struct Evolution<'a> {
    geometry: &'a Geometry,
    fan: &'a RayFan,
    field: &'a DistanceField,
    drive: DriveProfile,
    starts: Vec<State>,
}

impl<'a> Evolution<'a> {
    pub fn new(
        geometry: &'a Geometry,
        fan: &'a RayFan,
        field: &'a DistanceField,
        drive: DriveProfile,
        initial: InitialField,
    ) -> Result<Self> {
        let h_start = drive.value(drive.start());
        let domain = field.plus.distance.domain().clone();
        let first = match initial {
            InitialField::Uniform => State {
                grid: ScalarGrid::sample(domain, &|_: Vec2| h_start),
                constant: Some(h_start),
            },
            InitialField::Grid(g) => {
                let d = field.plus.distance.values();
                let dm = field.minus.distance.values();
                for &k in g.domain().inside() {
                    let r = g.values()[k] - h_start;
                    if r > d[k] + ADMISSIBILITY_SLACK || r < -dm[k] - ADMISSIBILITY_SLACK {
                        let x = g.spec().point_at(k);
                        return Err(Error::InvalidField(format!(
                            "initial field is not admissible at ({}, {}): h0 - H = {r}",
                            x.x, x.y
                        )));
                    }
                }
                State {
                    grid: g,
                    constant: None,
                }
            }
        };
        let mut evo = Evolution {
            geometry,
            fan,
            field,
            drive,
            starts: vec![first],
        };
        for k in 0..evo.drive.pieces().len() - 1 {
            let t1 = evo.drive.pieces()[k].t1;
            let next = evo.evolve_piece(k, t1)?;
            evo.starts.push(State {
                grid: next,
                constant: None,
            });
        }
        Ok(evo)
    }

    pub fn drive(&self) -> &DriveProfile {
        &self.drive
    }

    pub fn initial(&self) -> &ScalarGrid {
        &self.starts[0].grid
    }

    fn evolve_piece(&self, k: usize, t: f64) -> Result<ScalarGrid> {
        let piece = &self.drive.pieces()[k];
        let hs = piece.value(t);
        let h0 = &self.starts[k].grid;
        Ok(match piece.monotonicity()? {
            Monotonicity::Increasing => h0.zip(&self.field.minus.distance, |h, dm| h.max(hs - dm)),
            Monotonicity::Decreasing => h0.zip(&self.field.plus.distance, |h, d| h.min(hs + d)),
            Monotonicity::Constant => h0.clone(),
        })
    }

    /// `h(·, t)`: `max(h0, H_s - d⁻)` on rising pieces, `min(h0, H_s + d)` on falling ones.
    pub fn closed_form_field(&self, t: f64) -> Result<ScalarGrid> {
        self.evolve_piece(self.drive.piece_at(t), t)
    }

    /// `∂h/∂t = H_s'` on the active set, 0 elsewhere.
    pub fn field_rate(&self, t: f64) -> Result<ScalarGrid> {
        let k = self.drive.piece_at(t);
        let piece = &self.drive.pieces()[k];
        let (hs, rate) = (piece.value(t), piece.derivative(t));
        let h0 = &self.starts[k].grid;
        Ok(match piece.monotonicity()? {
            Monotonicity::Increasing => {
                h0.zip(
                    &self.field.minus.distance,
                    |h, dm| {
                        if h <= hs - dm {
                            rate
                        } else {
                            0.0
                        }
                    },
                )
            }
            Monotonicity::Decreasing => {
                h0.zip(
                    &self.field.plus.distance,
                    |h, d| {
                        if h >= hs + d {
                            rate
                        } else {
                            0.0
                        }
                    },
                )
            }
            Monotonicity::Constant => h0.map(|_| 0.0),
        })
    }

    /// Dissipated power `w(·, t)` as an integral of the Jacobian factor along each cell's
    /// ray up to the end of the active interval.
    pub fn dissipation_field(&self, t: f64) -> Result<ScalarGrid> {
        let k = self.drive.piece_at(t);
        let piece = &self.drive.pieces()[k];
        let (hs, rate) = (piece.value(t), piece.derivative(t));
        let (side, sign) = match piece.monotonicity()? {
            Monotonicity::Increasing => (Side::Minus, 1.0),
            Monotonicity::Decreasing => (Side::Plus, -1.0),
            Monotonicity::Constant => return Ok(self.starts[k].grid.map(|_| 0.0)),
        };
        let start = &self.starts[k];
        let sf = self.field.side(side);
        let fan = self.fan.side(side);
        let tol = CUT_TOL * self.geometry.omega().diameter();
        let domain = sf.distance.domain().clone();
        // active along the ray while sign (H_s - h0) - s ≥ 0
        let gap = |x: Vec2, s: f64| sign * (hs - start.eval(x)) - s;
        let vals: Vec<f64> = domain
            .inside()
            .par_iter()
            .map(|&k| {
                if sf.singular[k] {
                    return 0.0;
                }
                let d = sf.distance.values()[k];
                let Ok(ray) = self.geometry.ray_at(sf.theta[k], side) else {
                    return 0.0;
                };
                let cut = fan.cut_at(ray.theta).max(d);
                let end = match start.constant {
                    Some(c) => (sign * (hs - c)).min(cut),
                    None => {
                        if !(gap(ray.at(d), d) >= 0.0) {
                            return 0.0;
                        }
                        positive_run(|s| gap(ray.at(s), s) + f64::MIN_POSITIVE, d, cut, tol)
                            .last()
                            .map_or(d, |p| p.0)
                    }
                };
                if end <= d {
                    return 0.0;
                }
                sign * rate * jacobian_integral(ray.kappa, d, end)
            })
            .collect();
        let mut values = vec![0.0; domain.spec().len()];
        for (&k, v) in domain.inside().iter().zip(vals) {
            values[k] = v;
        }
        ScalarGrid::from_values(domain, values)
    }

    /// Weak residual of `-div(w Dρ(Dh)) = -∂h/∂t` at time `t`.
    pub fn faraday_residual(&self, t: f64, bank: &TestBank) -> Result<f64> {
        let h = self.closed_form_field(t)?;
        let w = self.dissipation_field(t)?;
        let e = electric_field(self.geometry, &h, &w);
        let source = self.field_rate(t)?.map(|r| -r);
        Ok(bank.weak_residual(&e, &source))
    }

    /// First time in piece `k` at which the field fully penetrates, if any.
    pub fn full_penetration_time(&self, k: usize) -> Result<Option<f64>> {
        let piece = &self.drive.pieces()[k];
        let start = &self.starts[k];
        let target = match piece.monotonicity()? {
            Monotonicity::Increasing => match start.constant {
                Some(c) => c + self.geometry.max_distance(self.fan, Side::Minus),
                None => start.grid.zip(&self.field.minus.distance, |h, dm| h + dm).max(),
            },
            Monotonicity::Decreasing => match start.constant {
                Some(c) => c - self.geometry.max_distance(self.fan, Side::Plus),
                None => start.grid.zip(&self.field.plus.distance, |h, d| h - d).min(),
            },
            Monotonicity::Constant => return Ok(None),
        };
        let reached = |t: f64| match piece.monotonicity() {
            Ok(Monotonicity::Increasing) => piece.value(t) >= target,
            _ => piece.value(t) <= target,
        };
        if !reached(piece.t1) {
            return Ok(None);
        }
        if reached(piece.t0) {
            return Ok(Some(piece.t0));
        }
        let (mut lo, mut hi) = (piece.t0, piece.t1);
        let tol = TIME_TOL * (piece.t1 - piece.t0);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if reached(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // linear pieces invert exactly
        if let PieceShape::Linear { h0, h1 } = piece.shape {
            let s = (target - h0) / (h1 - h0);
            return Ok(Some(piece.t0 + s * (piece.t1 - piece.t0)));
        }
        Ok(Some(hi))
    }

    /// The front `{d⁻ = H_s(t) - h0}` on a rising piece from a uniform state.
    pub fn penetration_front(&self, t: f64) -> Result<Vec<Polyline>> {
        let k = self.drive.piece_at(t);
        let piece = &self.drive.pieces()[k];
        let Some(c) = self.starts[k].constant else {
            return Err(Error::InvalidField(
                "front requires a uniform initial field".into(),
            ));
        };
        if piece.monotonicity()? != Monotonicity::Increasing {
            return Err(Error::InvalidField("front requires a rising drive".into()));
        }
        let level = piece.value(t) - c;
        if level == 0.0 {
            let mut line: Polyline = self.geometry.omega().samples().iter().map(|s| s.point).collect();
            line.push(line[0]);
            return Ok(vec![line]);
        }
        let dm = &self.field.minus.distance;
        if level < 0.0 || level >= dm.max() {
            return Err(Error::EmptyFront(level));
        }
        let lines = contour(dm, level);
        if lines.is_empty() {
            return Err(Error::EmptyFront(level));
        }
        Ok(lines)
    }

    /// Samples the whole drive: per time `(t, H_s, M)` with `M = mean(h - H_s)`.
    pub fn hysteresis_loop(&self, samples_per_piece: usize) -> Result<HysteresisLoop> {
        let n = samples_per_piece.max(1);
        let mut times = Vec::new();
        for p in self.drive.pieces() {
            for i in 0..n {
                times.push(p.t0 + (p.t1 - p.t0) * i as f64 / n as f64);
            }
        }
        times.push(self.drive.end());
        let mut rows = Vec::with_capacity(times.len());
        for &t in &times {
            let h = self.closed_form_field(t)?;
            let hs = self.drive.value(t);
            rows.push(LoopSample {
                t,
                hs,
                magnetization: h.mean() - hs,
            });
        }
        let (a, b) = (self.drive.start(), self.drive.end());
        let mut snapshots = Vec::with_capacity(LOOP_SNAPSHOTS);
        for i in 0..LOOP_SNAPSHOTS {
            let t = a + (b - a) * i as f64 / (LOOP_SNAPSHOTS - 1) as f64;
            snapshots.push((t, self.closed_form_field(t)?));
        }
        Ok(HysteresisLoop {
            rows,
            terminal: self.closed_form_field(b)?,
            snapshots,
        })
    }
}

/// `∫_d^b (1 - sκ)/(1 - dκ) ds`.
fn jacobian_integral(kappa: f64, d: f64, b: f64) -> f64 {
    let den = 1.0 - d * kappa;
    if den <= 0.0 {
        return 0.0;
    }
    ((b - d) - 0.5 * kappa * (b * b - d * d)) / den
}

#[derive(Debug, Clone, Copy)]
pub struct LoopSample {
    pub t: f64,
    pub hs: f64,
    pub magnetization: f64,
}

#[derive(Debug, Clone)]
pub struct HysteresisLoop {
    pub rows: Vec<LoopSample>,
    pub terminal: ScalarGrid,
    pub snapshots: Vec<(f64, ScalarGrid)>,
}

impl HysteresisLoop {
    /// Writes `t,Hs,M`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "Hs", "M"])?;
        for r in &self.rows {
            w.write_record([r.t.to_string(), r.hs.to_string(), r.magnetization.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `E = w Dρ(Dh)` where `w` and `Dh` are nonzero.
pub fn electric_field(geometry: &Geometry, h: &ScalarGrid, w: &ScalarGrid) -> VectorGrid {
    let body = geometry.body(Side::Plus);
    let mut e = VectorGrid::zeros(h.domain().clone());
    for &k in h.domain().inside() {
        let wk = w.values()[k];
        if wk <= FIELD_THRESHOLD {
            continue;
        }
        if let Some(g) = h.gradient(k) {
            if let Ok(p) = body.grad_gauge(g) {
                e.values_mut()[k] = p * wk;
            }
        }
    }
    e
}
