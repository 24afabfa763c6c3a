//! Discounted cell problem `delta v + (|p + Dv|^2 - 1)^2 - V = 0`.
//!
//! The equation is discretized by a monotone Lax-Friedrichs scheme on either
//! a periodic grid or a box whose ghost nodes copy their neighbour. In one
//! dimension the fixed point is reached by pseudo-transient Newton
//! continuation on the tridiagonal Jacobian; two-dimensional solves use
//! explicit pseudo-time iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{EnsembleKind, EnsembleSpec, PotentialField};
use crate::grid::{dot, norm, Grid, Point};

/// `(|q|^2 - 1)^2`.
pub fn hamiltonian(q: &Point) -> f64 {
    (dot(q, q) - 1.0).powi(2)
}

/// Gradient of [`hamiltonian`].
pub fn hamiltonian_gradient(q: &Point) -> Point {
    let s = 4.0 * (dot(q, q) - 1.0);
    [s * q[0], s * q[1]]
}

/// `max_{|q| <= r} |DH(q)|`.
pub fn max_slope(r: f64) -> f64 {
    let interior = if r >= 1.0 / 3f64.sqrt() {
        8.0 / (3.0 * 3f64.sqrt())
    } else {
        4.0 * r * (1.0 - r * r)
    };
    interior.max(4.0 * r * (r * r - 1.0))
}

/// A priori bound `|p + Dv|^2 <= 1 + (H(p) + vbar)^{1/2}` from the equation
/// and the comparison bounds.
pub fn gradient_bound(p: &Point, vbar: f64) -> f64 {
    (1.0 + (hamiltonian(p) + vbar).sqrt()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellMethod {
    Newton,
    PseudoTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    /// Relative stopping tolerance; the residual target is
    /// `delta * tol * (1 + H(p) + vbar)`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Force explicit pseudo-time even where Newton is available.
    pub explicit: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iterations: 200_000,
            explicit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSolution {
    pub p: Point,
    pub delta: f64,
    pub grid: Grid,
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub method: CellMethod,
    /// Residual after every Newton step, or every 100th explicit step.
    pub history: Vec<f64>,
    /// Grid extrema of the potential used by the solve.
    pub vmin: f64,
    pub vmax: f64,
}

impl CellSolution {
    /// `-delta v(0)`.
    pub fn minus_delta_v0(&self) -> f64 {
        -self.delta * self.grid.interpolate(&self.values, &[0.0, 0.0])
    }

    /// Comparison bounds `[-(H(p) - min V)/delta, -(H(p) - max V)/delta]`.
    pub fn bounds(&self) -> (f64, f64) {
        let h = hamiltonian(&self.p);
        (-(h - self.vmin) / self.delta, -(h - self.vmax) / self.delta)
    }

    /// Largest excursion of `v` outside [`CellSolution::bounds`].
    pub fn bounds_violation(&self) -> f64 {
        let (lo, hi) = self.bounds();
        self.values
            .iter()
            .map(|v| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Largest one-sided difference quotient.
    pub fn max_gradient(&self) -> f64 {
        let h = self.grid.spacing;
        (0..self.values.len())
            .flat_map(|i| {
                self.grid
                    .neighbors(i)
                    .map(move |(_, j, _)| (self.values[j] - self.values[i]).abs() / h)
            })
            .fold(0.0, f64::max)
    }
}

/// Neighbour table `[-x, +x, -y, +y]`; box ghosts point back at the node.
fn stencil(grid: &Grid) -> Vec<[usize; 4]> {
    (0..grid.len())
        .map(|i| {
            let mut nb = [i; 4];
            for (axis, j, s) in grid.neighbors(i) {
                nb[2 * axis + usize::from(s > 0)] = j;
            }
            nb
        })
        .collect()
}

struct Scheme<'a> {
    p: Point,
    delta: f64,
    alpha: f64,
    h: f64,
    dim: usize,
    potential: &'a [f64],
    nb: Vec<[usize; 4]>,
}

impl Scheme<'_> {
    fn gradient(&self, v: &[f64], i: usize) -> Point {
        let nb = &self.nb[i];
        let mut q = self.p;
        for axis in 0..self.dim {
            q[axis] += (v[nb[2 * axis + 1]] - v[nb[2 * axis]]) / (2.0 * self.h);
        }
        q
    }

    fn residual(&self, v: &[f64], out: &mut [f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..v.len() {
            let nb = &self.nb[i];
            let q = self.gradient(v, i);
            let mut lap = 0.0;
            for axis in 0..self.dim {
                lap += v[nb[2 * axis + 1]] - 2.0 * v[i] + v[nb[2 * axis]];
            }
            let f = self.delta * v[i] + hamiltonian(&q) - self.potential[i] - self.alpha * lap / (2.0 * self.h);
            out[i] = f;
            worst = worst.max(f.abs());
        }
        worst
    }

    fn observed_slope(&self, v: &[f64]) -> f64 {
        (0..v.len())
            .map(|i| norm(&hamiltonian_gradient(&self.gradient(v, i))))
            .fold(0.0, f64::max)
    }
}

/// Thomas algorithm for `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i`.
fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    x
}

/// Cyclic system: `a_0` couples row 0 to `x_{n-1}`, `c_{n-1}` couples the
/// last row to `x_0`. Sherman-Morrison on top of Thomas.
fn solve_cyclic(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let (beta, alpha) = (a[0], c[n - 1]);
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let mut aa = a.to_vec();
    aa[0] = 0.0;
    let mut cc = c.to_vec();
    cc[n - 1] = 0.0;
    let x = solve_tridiagonal(&aa, &bb, &cc, d);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(&aa, &bb, &cc, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

/// Solve the discounted cell problem on the grid of `field`.
pub fn solve_cell(field: &PotentialField, p: &Point, delta: f64, opts: &CellOptions) -> Result<CellSolution> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if !field.normalized {
        return Err(Error::NotNormalized);
    }
    let grid = field.grid;
    let (vmin, vmax) = (field.min(), field.max());
    let hp = hamiltonian(p);
    let target = delta * opts.tol * (1.0 + hp + field.vbar);
    let mut alpha = max_slope(gradient_bound(p, field.vbar));
    let mid = -(hp - 0.5 * (vmin + vmax)) / delta;
    let mut values = vec![mid; grid.len()];

    // Raise alpha and re-solve if the discrete gradients leave the a priori ball.
    for _ in 0..6 {
        let scheme = Scheme {
            p: *p,
            delta,
            alpha,
            h: grid.spacing,
            dim: grid.dim,
            potential: &field.values,
            nb: stencil(&grid),
        };
        let newton = grid.dim == 1 && grid.n >= 3 && !opts.explicit;
        let (iterations, residual, history, method) = if newton {
            let (it, res, hist) = newton_1d(&scheme, &mut values, grid.periodic, target, opts.max_iterations)?;
            (it, res, hist, CellMethod::Newton)
        } else {
            let (it, res, hist) = pseudo_time(&scheme, &mut values, target, opts.max_iterations)?;
            (it, res, hist, CellMethod::PseudoTime)
        };
        let slope = scheme.observed_slope(&values);
        if slope <= alpha * (1.0 + 1e-9) {
            return Ok(CellSolution {
                p: *p,
                delta,
                grid,
                values,
                residual,
                iterations,
                alpha,
                method,
                history,
                vmin,
                vmax,
            });
        }
        alpha = 1.1 * slope;
    }
    Err(Error::GradientOutOfRange {
        gradient: vec![alpha],
    })
}

fn pseudo_time(s: &Scheme, v: &mut [f64], target: f64, cap: usize) -> Result<(usize, f64, Vec<f64>)> {
    let tau = 0.4 * s.h / (2.0 * s.dim as f64 * s.alpha + s.delta * s.h);
    let mut f = vec![0.0; v.len()];
    let mut history = Vec::new();
    for it in 0..cap {
        let r = s.residual(v, &mut f);
        if it % 100 == 0 {
            history.push(r);
        }
        if r <= target {
            return Ok((it, r, history));
        }
        for (vi, fi) in v.iter_mut().zip(&f) {
            *vi -= tau * fi;
        }
    }
    let r = s.residual(v, &mut f);
    Err(Error::NonConvergence {
        iterations: cap,
        residual: r,
        history,
    })
}

/// Pseudo-transient continuation: implicit Euler steps in pseudo-time with a
/// step that doubles on success and halves on failure, so the iteration
/// becomes Newton's method near the solution.
fn newton_1d(s: &Scheme, v: &mut [f64], periodic: bool, target: f64, cap: usize) -> Result<(usize, f64, Vec<f64>)> {
    let n = v.len();
    let h = s.h;
    let mut f = vec![0.0; n];
    let mut trial_f = vec![0.0; n];
    let mut r = s.residual(v, &mut f);
    let mut history = vec![r];
    let mut dt = h / s.alpha;
    let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let cap = cap.min(10_000);
    for it in 0..cap {
        if r <= target {
            return Ok((it, r, history));
        }
        for i in 0..n {
            let q = s.gradient(v, i);
            let hq = hamiltonian_gradient(&q)[0] / (2.0 * h);
            let diff = s.alpha / (2.0 * h);
            a[i] = -hq - diff;
            c[i] = hq - diff;
            b[i] = s.delta + 2.0 * diff + 1.0 / dt;
        }
        if !periodic {
            b[0] += a[0];
            a[0] = 0.0;
            b[n - 1] += c[n - 1];
            c[n - 1] = 0.0;
        }
        let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
        let step = if periodic {
            solve_cyclic(&a, &b, &c, &rhs)
        } else {
            solve_tridiagonal(&a, &b, &c, &rhs)
        };
        let trial: Vec<f64> = v.iter().zip(&step).map(|(x, d)| x + d).collect();
        let rt = s.residual(&trial, &mut trial_f);
        if rt.is_finite() && rt < r {
            v.copy_from_slice(&trial);
            std::mem::swap(&mut f, &mut trial_f);
            r = rt;
            dt = (dt * 2.0).min(1e12);
            history.push(r);
        } else {
            dt *= 0.25;
            if dt < 1e-14 {
                break;
            }
        }
    }
    // Continuation stalled; finish explicitly from the current iterate.
    let (it, r, hist) = pseudo_time(s, v, target, cap.max(200_000))?;
    history.extend(hist);
    Ok((cap + it, r, history))
}

/// Grid for a cell solve: one period for shifted periodic ensembles, a box
/// of half-extent `scale / delta` otherwise.
pub fn cell_grid(spec: &EnsembleSpec, delta: f64, spacing: f64, scale: f64) -> Result<Grid> {
    match spec.kind {
        EnsembleKind::ShiftedPeriodic { period, .. } => {
            let cells = (period / spacing).round();
            Grid::new(spec.dimension, period / cells, period / 2.0, true)
        }
        _ => {
            let cells = (scale / delta / spacing).ceil();
            Grid::new(spec.dimension, spacing, cells * spacing, false)
        }
    }
}

/// Default box scale `2 (1 + (vbar + 1)^{1/2})`.
pub fn default_scale(vbar: f64) -> f64 {
    2.0 * (1.0 + (vbar + 1.0).sqrt())
}

/// `max |delta v_p - delta v_q| / |p - q|`; zero when `p == q`.
pub fn check_p_continuity(
    field: &PotentialField,
    p: &Point,
    q: &Point,
    delta: f64,
    opts: &CellOptions,
) -> Result<f64> {
    let d = norm(&[p[0] - q[0], p[1] - q[1]]);
    if d == 0.0 {
        return Ok(0.0);
    }
    let a = solve_cell(field, p, delta, opts)?;
    let b = solve_cell(field, q, delta, opts)?;
    Ok(a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| delta * (x - y).abs())
        .fold(0.0, f64::max)
        / d)
}
