//! Power-law functionals `J_p` and their minimizers on the grid.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{ConvexBody, Vec2};
use crate::grid::ScalarGrid;

/// Armijo sufficient-decrease constant.
pub const ARMIJO_C: f64 = 1e-4;
/// Line-search step shrink factor.
pub const ARMIJO_SHRINK: f64 = 0.5;
/// Relative objective decrease over `STALL_WINDOW` iterations that counts as converged.
pub const STALL_TOL: f64 = 1e-9;
pub const STALL_WINDOW: usize = 10;
pub const MAX_ITERATIONS: usize = 20_000;
/// Shrink applied to the explicit minimizer to form the first iterate.
pub const WARM_START_SHRINK: f64 = 0.99;
/// L-BFGS memory.
pub const HISTORY: usize = 10;
/// Below this `ρ(Dv)` the integrand's gradient is taken as 0.
pub const RHO_FLOOR: f64 = 1e-12;
/// Length of the first trial step of a fresh L-BFGS memory.
pub const INITIAL_STEP: f64 = 1e-2;
/// Default exponent ladder.
pub const DEFAULT_EXPONENTS: [f64; 5] = [4.0, 8.0, 16.0, 32.0, 64.0];

/// Neighbor positions of each unknown in the compact inside-cell ordering.
#[derive(Debug, Clone)]
struct Stencil {
    left: Vec<Option<usize>>,
    right: Vec<Option<usize>>,
    down: Vec<Option<usize>>,
    up: Vec<Option<usize>>,
    h: f64,
}

impl Stencil {
    fn new(grid: &ScalarGrid) -> Self {
        let domain = grid.domain();
        let spec = domain.spec();
        let mut pos = vec![usize::MAX; spec.len()];
        for (n, &k) in domain.inside().iter().enumerate() {
            pos[k] = n;
        }
        let at = |i: isize, j: isize| -> Option<usize> {
            if domain.is_inside_ij(i, j) {
                Some(pos[spec.index(i as usize, j as usize)])
            } else {
                None
            }
        };
        let n = domain.inside().len();
        let mut s = Stencil {
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            down: Vec::with_capacity(n),
            up: Vec::with_capacity(n),
            h: spec.h,
        };
        for &k in domain.inside() {
            let (i, j) = spec.coords(k);
            let (i, j) = (i as isize, j as isize);
            s.left.push(at(i - 1, j));
            s.right.push(at(i + 1, j));
            s.down.push(at(i, j - 1));
            s.up.push(at(i, j + 1));
        }
        s
    }

    #[inline]
    fn gradient(&self, x: &[f64], n: usize) -> Vec2 {
        let v = |o: Option<usize>| o.map_or(0.0, |m| x[m]);
        let h2 = 2.0 * self.h;
        Vec2::new(
            (v(self.right[n]) - v(self.left[n])) / h2,
            (v(self.up[n]) - v(self.down[n])) / h2,
        )
    }
}

/// `J_p(v) = ∫ (1/p) ρ(Dv)^p + (v - ū)²` with `v = 0` outside `Ω`.
pub struct PowerLawProblem<'a> {
    p: f64,
    ubar: &'a ScalarGrid,
    body: &'a ConvexBody,
    stencil: Stencil,
    target: Vec<f64>,
}

/// Outcome of a minimization.
#[derive(Debug, Clone)]
pub struct Minimization {
    pub v: ScalarGrid,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative decrease over the last window when stopped.
    pub last_decrease: f64,
}

impl Minimization {
    /// `NonConvergence` if the iteration cap was reached.
    pub fn check(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
                residual: self.last_decrease,
            })
        }
    }
}

impl<'a> PowerLawProblem<'a> {
    pub fn new(p: f64, ubar: &'a ScalarGrid, body: &'a ConvexBody) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::Config {
                key: "gamma.exponents".into(),
                msg: format!("exponent {p} must be finite and at least 2"),
            });
        }
        let target = ubar.domain().inside().iter().map(|&k| ubar.values()[k]).collect();
        Ok(PowerLawProblem {
            p,
            ubar,
            body,
            stencil: Stencil::new(ubar),
            target,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn pack(&self, v: &ScalarGrid) -> Vec<f64> {
        v.domain().inside().iter().map(|&k| v.values()[k]).collect()
    }

    fn unpack(&self, x: &[f64]) -> ScalarGrid {
        let mut g = ScalarGrid::zeros(self.ubar.domain().clone());
        for (&k, &val) in self.ubar.domain().inside().iter().zip(x) {
            g.values_mut()[k] = val;
        }
        g
    }

    /// Grid quadrature of `J_p`.
    pub fn evaluate(&self, v: &ScalarGrid) -> Result<f64> {
        let mask = v.domain().mask();
        let outside = v
            .values()
            .iter()
            .zip(mask)
            .filter(|(_, &m)| !m)
            .map(|(x, _)| x.abs())
            .fold(0.0, f64::max);
        if outside > 0.0 {
            return Err(Error::BoundaryViolation(outside));
        }
        let j = self.value(&self.pack(v));
        Ok(if j.is_nan() { f64::INFINITY } else { j })
    }

    fn value(&self, x: &[f64]) -> f64 {
        let h2 = self.stencil.h * self.stencil.h;
        let mut s = 0.0;
        for n in 0..x.len() {
            let r = self.body.gauge(self.stencil.gradient(x, n));
            let e = x[n] - self.target[n];
            s += r.powf(self.p) / self.p + e * e;
        }
        s * h2
    }

    /// Objective and its exact gradient with respect to the inside values.
    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let st = &self.stencil;
        let h2 = st.h * st.h;
        let n = x.len();
        let mut q = vec![Vec2::zeros(); n];
        let mut s = 0.0;
        for m in 0..n {
            let g = st.gradient(x, m);
            let r = self.body.gauge(g);
            let e = x[m] - self.target[m];
            s += r.powf(self.p) / self.p + e * e;
            if r > RHO_FLOOR {
                if let Ok(dr) = self.body.grad_gauge(g) {
                    q[m] = dr * r.powf(self.p - 1.0);
                }
            }
        }
        let inv = 1.0 / (2.0 * st.h);
        let mut grad = vec![0.0; n];
        for m in 0..n {
            let qq = |o: Option<usize>| o.map_or(Vec2::zeros(), |j| q[j]);
            let flux = (qq(st.left[m]).x - qq(st.right[m]).x + qq(st.down[m]).y - qq(st.up[m]).y) * inv;
            grad[m] = h2 * (flux + 2.0 * (x[m] - self.target[m]));
        }
        (s * h2, grad)
    }

    /// L-BFGS with Armijo backtracking from `start`.
    pub fn minimize(&self, start: &ScalarGrid) -> Result<Minimization> {
        let mut x = self.pack(start);
        let (mut f, mut g) = self.value_and_gradient(&x);
        if !f.is_finite() {
            return Err(Error::InvalidField(
                "power-law objective is not finite at the start".into(),
            ));
        }
        let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);
        let mut history = vec![f];
        let mut iterations = 0;
        let mut converged = false;
        let mut last_decrease = f64::INFINITY;
        while iterations < MAX_ITERATIONS {
            let mut d = two_loop(&g, &mem);
            let mut slope = dot(&d, &g);
            if !(slope < 0.0) {
                mem.clear();
                d = g.iter().map(|v| -v).collect();
                slope = -dot(&g, &g);
            }
            if slope == 0.0 {
                converged = true;
                break;
            }
            let mut alpha = if mem.is_empty() {
                INITIAL_STEP / norm(&g).max(1e-300)
            } else {
                1.0
            };
            let mut accepted = None;
            for _ in 0..80 {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                let ft = self.value(&trial);
                if ft.is_finite() && ft <= f + ARMIJO_C * alpha * slope && ft < f {
                    accepted = Some((trial, ft));
                    break;
                }
                alpha *= ARMIJO_SHRINK;
            }
            let Some((xn, _)) = accepted else {
                if mem.is_empty() {
                    // no descent along the gradient at working precision
                    converged = true;
                    break;
                }
                mem.clear();
                continue;
            };
            let (fn_, gn) = self.value_and_gradient(&xn);
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-300 {
                if mem.len() == HISTORY {
                    mem.pop_front();
                }
                mem.push_back((s, y, 1.0 / sy));
            }
            x = xn;
            f = fn_;
            g = gn;
            iterations += 1;
            history.push(f);
            if history.len() > STALL_WINDOW {
                let old = history[history.len() - 1 - STALL_WINDOW];
                last_decrease = (old - f) / f.abs().max(1e-300);
                if last_decrease < STALL_TOL {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            log::warn!("p = {}: stopped after {iterations} iterations", self.p);
        }
        Ok(Minimization {
            v: self.unpack(&x),
            objective: f,
            iterations,
            converged,
            last_decrease,
        })
    }

    /// `max ρ(D_h v)` over inside cells.
    pub fn max_gauge_of_gradient(&self, v: &ScalarGrid) -> f64 {
        let x = self.pack(v);
        (0..x.len())
            .map(|n| self.body.gauge(self.stencil.gradient(&x, n)))
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn two_loop(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q
}

/// One row of the Γ-convergence report.
#[derive(Debug, Clone)]
pub struct GammaRow {
    pub p: f64,
    /// `‖u_p - u‖₂ / ‖u‖₂`
    pub gap_l2: f64,
    pub jp: f64,
    /// `J(u) = ∫ (u - ū)²`
    pub j: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative decrease over the last stall window.
    pub last_decrease: f64,
    pub max_rho_du: f64,
    /// `J(u) ≤ J_p(u_p) + ‖u - u_p‖₂`
    pub liminf_ok: bool,
}

/// Minimizes `J_p` along an exponent ladder, each solve started from the better of the
/// shrunk explicit minimizer and the previous solution.
pub fn gamma_convergence_report(
    ubar: &ScalarGrid,
    u: &ScalarGrid,
    body: &ConvexBody,
    exponents: &[f64],
) -> Result<(Vec<GammaRow>, Vec<ScalarGrid>)> {
    let shrunk = u.map(|x| WARM_START_SHRINK * x);
    let j = u.zip(ubar, |a, b| (a - b) * (a - b)).integral();
    let unorm = u.l2_norm().max(1e-300);
    let mut rows = Vec::with_capacity(exponents.len());
    let mut solutions: Vec<ScalarGrid> = Vec::with_capacity(exponents.len());
    for &p in exponents {
        let problem = PowerLawProblem::new(p, ubar, body)?;
        let start = match solutions.last() {
            Some(prev) if problem.evaluate(prev)? < problem.evaluate(&shrunk)? => prev.clone(),
            _ => shrunk.clone(),
        };
        let m = problem.minimize(&start)?;
        let dist = m.v.l2_distance(u);
        rows.push(GammaRow {
            p,
            gap_l2: dist / unorm,
            jp: m.objective,
            j,
            iterations: m.iterations,
            converged: m.converged,
            last_decrease: m.last_decrease,
            max_rho_du: problem.max_gauge_of_gradient(&m.v),
            liminf_ok: j <= m.objective + dist,
        });
        solutions.push(m.v);
    }
    Ok((rows, solutions))
}

/// Writes `p,gap_l2,Jp,J,iterations,max_rho_Du`.
pub fn write_report<W: Write>(rows: &[GammaRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "gap_l2", "Jp", "J", "iterations", "max_rho_Du"])?;
    for r in rows {
        w.write_record([
            r.p.to_string(),
            r.gap_l2.to_string(),
            r.jp.to_string(),
            r.j.to_string(),
            r.iterations.to_string(),
            r.max_rho_du.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
