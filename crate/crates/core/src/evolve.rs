//! Time-dependent problems: the oscillatory equation
//! `u_t + (|Du|^2 - 1)^2 - V(x / eps) = 0` and the homogenized equation
//! `u_t + Hbar(Du) = 0`, both advanced by forward-Euler Lax-Friedrichs on a
//! box. Ghost nodes beyond the box copy their neighbour plus the increment
//! of the initial data, which keeps the scheme monotone and reproduces
//! plane waves exactly.

use serde::{Deserialize, Serialize};

use crate::cell::{hamiltonian, hamiltonian_gradient, max_slope};
use crate::effham::EffectiveHamiltonian;
use crate::error::{Error, Result};
use crate::field::{EnsembleSpec, Realization};
use crate::grid::{dot, norm, Grid, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialData {
    Constant { c: f64 },
    /// `p . x`
    Linear { p: Point },
    /// `p . x + c`
    Affine { p: Point, c: f64 },
    /// `min(p . x, -p . x)`
    Tent { p: Point },
}

impl InitialData {
    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            InitialData::Constant { c } => *c,
            InitialData::Linear { p } => dot(p, x),
            InitialData::Affine { p, c } => dot(p, x) + c,
            InitialData::Tent { p } => -dot(p, x).abs(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            InitialData::Constant { .. } => 0.0,
            InitialData::Linear { p } | InitialData::Affine { p, .. } | InitialData::Tent { p } => norm(p),
        }
    }

    pub fn id(&self) -> String {
        match self {
            InitialData::Constant { c } => format!("constant({c})"),
            InitialData::Linear { p } => format!("linear({},{})", p[0], p[1]),
            InitialData::Affine { p, c } => format!("affine({},{},{c})", p[0], p[1]),
            InitialData::Tent { p } => format!("tent({},{})", p[0], p[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub spacing: f64,
    pub final_time: f64,
    /// Times at which the solution is stored; `final_time` is always added.
    pub slices: Vec<f64>,
    /// Radius of the ball on which errors are measured.
    pub k: f64,
    /// Extra width added to the box beyond `k + T alpha`.
    pub margin: f64,
    /// `tau = cfl * h / (2 d alpha)`; monotone for `cfl <= 2`.
    pub cfl: f64,
    /// Smallest admissible `eps / h`.
    pub min_resolution: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            spacing: 1.0 / 256.0,
            final_time: 1.0,
            slices: vec![0.0, 0.5, 1.0],
            k: 1.0,
            margin: 0.5,
            cfl: 0.4,
            min_resolution: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    /// Zero for homogenized runs.
    pub epsilon: f64,
    pub initial: InitialData,
    pub grid: Grid,
    pub times: Vec<f64>,
    pub slices: Vec<Vec<f64>>,
    pub alpha: f64,
    pub steps: usize,
    pub k: f64,
    /// `sup |u - reference|` over `B_k x [0, T]` at every time step.
    pub error_vs_reference: Option<f64>,
}

impl EvolutionResult {
    pub fn nodes_in_ball(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid.len()).filter(|&i| norm(&self.grid.point(i)) <= self.k + 1e-12)
    }
}

type Reference<'a> = &'a (dyn Fn(&Point, f64) -> f64 + Sync);

fn build_grid(dim: usize, opts: &EvolveOptions, alpha: f64) -> Result<Grid> {
    if !(opts.spacing > 0.0) {
        return Err(Error::NonPositiveSpacing(opts.spacing));
    }
    if !(opts.cfl > 0.0 && opts.cfl <= 2.0) {
        return Err(Error::CflViolation(format!(
            "cfl factor {} outside (0, 2] breaks monotonicity",
            opts.cfl
        )));
    }
    let half = opts.k + opts.final_time * alpha + opts.margin;
    let cells = (half / opts.spacing).ceil();
    Grid::new(dim, opts.spacing, cells * opts.spacing, false)
}

/// Neighbours `[-x, +x, -y, +y]`; `None` beyond the box.
fn stencil(grid: &Grid) -> Vec<[Option<usize>; 4]> {
    (0..grid.len())
        .map(|i| {
            let mut nb = [None; 4];
            for (axis, j, s) in grid.neighbors(i) {
                nb[2 * axis + usize::from(s > 0)] = Some(j);
            }
            nb
        })
        .collect()
}

/// Increments `g(x_ghost) - g(x)` toward every missing neighbour.
fn ghost_offsets(grid: &Grid, nb: &[[Option<usize>; 4]], g: &dyn Fn(&Point) -> f64) -> Vec<[f64; 4]> {
    let h = grid.spacing;
    (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            let mut off = [0.0; 4];
            for (slot, o) in off.iter_mut().enumerate().take(2 * grid.dim) {
                if nb[i][slot].is_none() {
                    let mut y = x;
                    y[slot / 2] += if slot % 2 == 1 { h } else { -h };
                    *o = g(&y) - g(&x);
                }
            }
            off
        })
        .collect()
}

/// Axis values `(u_-, u_+)`, closing the box with the ghost increments.
#[inline]
fn ghosted(u: &[f64], i: usize, nb: &[Option<usize>; 4], off: &[f64; 4], axis: usize) -> (f64, f64) {
    let m = nb[2 * axis].map_or(u[i] + off[2 * axis], |j| u[j]);
    let p = nb[2 * axis + 1].map_or(u[i] + off[2 * axis + 1], |j| u[j]);
    (m, p)
}

struct March<'a> {
    grid: Grid,
    alpha: f64,
    cfl: f64,
    k: f64,
    /// Hamiltonian at node `i` for gradient `q`.
    ham: &'a (dyn Fn(usize, &Point) -> Result<f64> + Sync),
    /// Initial data, used for the boundary closure.
    data: &'a (dyn Fn(&Point) -> f64 + Sync),
}

impl March<'_> {
    fn run(
        &self,
        u0: Vec<f64>,
        final_time: f64,
        slice_times: &[f64],
        reference: Option<Reference>,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize, Option<f64>)> {
        let grid = self.grid;
        let nb = stencil(&grid);
        let off = ghost_offsets(&grid, &nb, self.data);
        let h = grid.spacing;
        let dim = grid.dim;
        let tau_max = self.cfl * h / (2.0 * dim as f64 * self.alpha);
        let ball: Vec<usize> = (0..grid.len())
            .filter(|&i| norm(&grid.point(i)) <= self.k + 1e-12)
            .collect();
        let points: Vec<Point> = (0..grid.len()).map(|i| grid.point(i)).collect();
        let track = |u: &[f64], t: f64, worst: &mut f64| {
            if let Some(r) = reference {
                for &i in &ball {
                    *worst = worst.max((u[i] - r(&points[i], t)).abs());
                }
            }
        };

        let mut times: Vec<f64> = slice_times
            .iter()
            .copied()
            .filter(|&t| (0.0..=final_time).contains(&t))
            .chain(std::iter::once(final_time))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

        let mut u = u0;
        let mut next = vec![0.0; u.len()];
        let mut worst = 0.0;
        let mut t = 0.0;
        let mut steps = 0;
        let mut slices = Vec::with_capacity(times.len());
        track(&u, 0.0, &mut worst);
        for &target in &times {
            let span = target - t;
            let n = (span / tau_max - 1e-9).ceil().max(0.0) as usize;
            let tau = if n > 0 { span / n as f64 } else { 0.0 };
            for _ in 0..n {
                for i in 0..u.len() {
                    let mut q = [0.0; 2];
                    let mut lap = 0.0;
                    for (axis, qa) in q.iter_mut().enumerate().take(dim) {
                        let (um, up) = ghosted(&u, i, &nb[i], &off[i], axis);
                        *qa = (up - um) / (2.0 * h);
                        lap += up - 2.0 * u[i] + um;
                    }
                    let hv = (self.ham)(i, &q)?;
                    next[i] = u[i] - tau * (hv - self.alpha * lap / (2.0 * h));
                }
                std::mem::swap(&mut u, &mut next);
                t += tau;
                steps += 1;
                track(&u, t, &mut worst);
            }
            t = target;
            slices.push(u.clone());
        }
        Ok((times, slices, steps, reference.map(|_| worst)))
    }
}

/// Bound on `|Du|` for data of Lipschitz constant `lip`: the time derivative
/// is bounded by `M = max(max_{|q| <= lip} H(q), vbar)`, so
/// `H(Du) <= vbar + M`.
pub fn gradient_bound(lip: f64, vbar: f64) -> f64 {
    let h_lip = if lip >= 1.0 {
        hamiltonian(&[lip, 0.0])
    } else {
        1.0
    };
    let m = h_lip.max(vbar);
    lip.max((1.0 + (vbar + m).sqrt()).sqrt())
}

/// Oscillatory problem for realization `index` of `spec`, with the potential
/// shifted by the ensemble's essential infimum.
pub fn solve_oscillatory(
    spec: &EnsembleSpec,
    index: u64,
    epsilon: f64,
    g: &InitialData,
    opts: &EvolveOptions,
    reference: Option<Reference>,
) -> Result<EvolutionResult> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if opts.spacing * opts.min_resolution > epsilon * (1.0 + 1e-12) {
        return Err(Error::UnderResolved {
            epsilon,
            spacing: opts.spacing,
        });
    }
    let (vlow, vhigh) = spec.essential_bounds();
    let vbar = vhigh - vlow;
    let alpha = max_slope(gradient_bound(g.lipschitz(), vbar));
    let grid = build_grid(spec.dimension, opts, alpha)?;
    let realization: Realization = spec.realization(index, grid.half_extent / epsilon + 1.0)?;
    let potential: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            realization.eval(&[x[0] / epsilon, x[1] / epsilon]) - vlow
        })
        .collect();
    let ham = |i: usize, q: &Point| -> Result<f64> { Ok(hamiltonian(q) - potential[i]) };
    let u0 = (0..grid.len()).map(|i| g.eval(&grid.point(i))).collect();
    let march = March {
        grid,
        alpha,
        cfl: opts.cfl,
        k: opts.k,
        ham: &ham,
        data: &|x: &Point| g.eval(x),
    };
    let (times, slices, steps, err) = march.run(u0, opts.final_time, &opts.slices, reference)?;
    Ok(EvolutionResult {
        epsilon,
        initial: *g,
        grid,
        times,
        slices,
        alpha,
        steps,
        k: opts.k,
        error_vs_reference: err,
    })
}

/// Linear (1D) or bilinear (2D) interpolant of a table tabulated on
/// [`crate::effham::p_grid_1d`] or [`crate::effham::p_grid_2d`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbarInterpolant {
    pub dim: usize,
    pub vbar: f64,
    pub pmax: f64,
    pub n: usize,
    pub values: Vec<f64>,
}

impl HbarInterpolant {
    pub fn from_table(table: &EffectiveHamiltonian) -> Result<Self> {
        let dim = table.dim;
        let total = table.points.len();
        let n = if dim == 1 {
            total
        } else {
            (total as f64).sqrt().round() as usize
        };
        let bad = || Error::Mismatch("table is not on a uniform square p-grid".into());
        if n < 2 || (dim == 2 && n * n != total) {
            return Err(bad());
        }
        let pmax = -table.points[0].p[0];
        let step = 2.0 * pmax / (n - 1) as f64;
        for (k, h) in table.points.iter().enumerate() {
            let (i, j) = (k % n, k / n);
            let expect = [-pmax + step * i as f64, if dim == 2 { -pmax + step * j as f64 } else { 0.0 }];
            if (h.p[0] - expect[0]).abs() > 1e-9 || (h.p[1] - expect[1]).abs() > 1e-9 {
                return Err(bad());
            }
            if !h.value.is_finite() {
                return Err(Error::Mismatch(format!("non-finite Hbar at {:?}", h.p)));
            }
        }
        Ok(Self {
            dim,
            vbar: table.constants.vbar,
            pmax,
            n,
            values: table.values(),
        })
    }

    fn step(&self) -> f64 {
        2.0 * self.pmax / (self.n - 1) as f64
    }

    pub fn eval(&self, q: &Point) -> Result<f64> {
        let d = self.step();
        let locate = |x: f64| -> Option<(usize, f64)> {
            let t = (x + self.pmax) / d;
            if !(-1e-9..=(self.n - 1) as f64 + 1e-9).contains(&t) {
                return None;
            }
            let t = t.clamp(0.0, (self.n - 1) as f64);
            let i = (t.floor() as usize).min(self.n - 2);
            Some((i, t - i as f64))
        };
        let out = || Error::GradientOutOfRange {
            gradient: q[..self.dim].to_vec(),
        };
        let (i, wx) = locate(q[0]).ok_or_else(out)?;
        if self.dim == 1 {
            return Ok((1.0 - wx) * self.values[i] + wx * self.values[i + 1]);
        }
        let (j, wy) = locate(q[1]).ok_or_else(out)?;
        let at = |a: usize, b: usize| self.values[a + self.n * b];
        Ok((1.0 - wy) * ((1.0 - wx) * at(i, j) + wx * at(i + 1, j)) + wy * ((1.0 - wx) * at(i, j + 1) + wx * at(i + 1, j + 1)))
    }

    fn node(&self, i: usize, j: usize) -> Point {
        let d = self.step();
        [-self.pmax + d * i as f64, if self.dim == 2 { -self.pmax + d * j as f64 } else { 0.0 }]
    }

    /// Largest finite-difference slope along either axis over table cells
    /// touching the ball `|q| <= radius`.
    pub fn slope_bound(&self, radius: f64) -> f64 {
        let d = self.step();
        let n = self.n;
        let reach = radius + d * std::f64::consts::SQRT_2;
        let rows = if self.dim == 1 { 1 } else { n };
        let mut worst: f64 = 0.0;
        for j in 0..rows {
            for i in 0..n {
                if norm(&self.node(i, j)) > reach {
                    continue;
                }
                let v = self.values[i + n * j];
                if i + 1 < n {
                    worst = worst.max((self.values[i + 1 + n * j] - v).abs() / d);
                }
                if self.dim == 2 && j + 1 < n {
                    worst = worst.max((self.values[i + n * (j + 1)] - v).abs() / d);
                }
            }
        }
        worst
    }

    /// Gradient bound for data of Lipschitz constant `lip`, from the lower
    /// bound `Hbar >= (|q|^2 - 1)^2 - vbar` and the table values on `|q| <= lip`.
    pub fn gradient_bound(&self, lip: f64) -> f64 {
        let d = self.step();
        let rows = if self.dim == 1 { 1 } else { self.n };
        let mut m: f64 = 0.0;
        for j in 0..rows {
            for i in 0..self.n {
                if norm(&self.node(i, j)) <= lip + d * std::f64::consts::SQRT_2 {
                    m = m.max(self.values[i + self.n * j].abs());
                }
            }
        }
        lip.max((1.0 + (m + self.vbar).sqrt()).sqrt())
    }
}

/// Homogenized problem with `Hbar` read from the tabulated interpolant.
pub fn solve_homogenized(
    table: &HbarInterpolant,
    g: &InitialData,
    opts: &EvolveOptions,
    reference: Option<Reference>,
) -> Result<EvolutionResult> {
    let lip = g.lipschitz();
    if lip > table.pmax {
        return Err(Error::GradientOutOfRange { gradient: vec![lip] });
    }
    let alpha = table.slope_bound(table.gradient_bound(lip)).max(1e-12);
    let grid = build_grid(table.dim, opts, alpha)?;
    let ham = |_: usize, q: &Point| table.eval(q);
    let u0 = (0..grid.len()).map(|i| g.eval(&grid.point(i))).collect();
    let march = March {
        grid,
        alpha,
        cfl: opts.cfl,
        k: opts.k,
        ham: &ham,
        data: &|x: &Point| g.eval(x),
    };
    let (times, slices, steps, err) = march.run(u0, opts.final_time, &opts.slices, reference)?;
    Ok(EvolutionResult {
        epsilon: 0.0,
        initial: *g,
        grid,
        times,
        slices,
        alpha,
        steps,
        k: opts.k,
        error_vs_reference: err,
    })
}

/// `sup |u_a - u_b|` over stored slices and nodes with `|x| <= k`.
pub fn compare(a: &EvolutionResult, b: &EvolutionResult, k: f64) -> Result<f64> {
    let same_times = a.times.len() == b.times.len()
        && a.times.iter().zip(&b.times).all(|(x, y)| (x - y).abs() < 1e-12);
    if !same_times {
        return Err(Error::Mismatch("results have different time slices".into()));
    }
    let mut worst: f64 = 0.0;
    for (sa, sb) in a.slices.iter().zip(&b.slices) {
        for i in 0..a.grid.len() {
            let x = a.grid.point(i);
            if norm(&x) > k + 1e-12 {
                continue;
            }
            let j = b
                .grid
                .nearest_node(&x)
                .filter(|&j| {
                    let y = b.grid.point(j);
                    (y[0] - x[0]).abs() < 1e-9 && (y[1] - x[1]).abs() < 1e-9
                })
                .ok_or_else(|| Error::Mismatch("grids do not share nodes on B_k".into()))?;
            worst = worst.max((sa[i] - sb[j]).abs());
        }
    }
    Ok(worst)
}

/// `min_{s in [-1, 1]} (s p . x - t H(s p))`: the solution for tent data,
/// by brute force over `samples` points of the segment.
pub fn tent_reference(ham: &dyn Fn(&Point) -> f64, p: &Point, x: &Point, t: f64, samples: usize) -> f64 {
    (0..=samples)
        .map(|k| {
            let s = -1.0 + 2.0 * k as f64 / samples as f64;
            let q = [s * p[0], s * p[1]];
            dot(&q, x) - t * ham(&q)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Observed `max |DH|` over central gradients of a stored slice.
pub fn observed_slope(result: &EvolutionResult, slice: usize) -> f64 {
    let u = &result.slices[slice];
    let nb = stencil(&result.grid);
    let g = result.initial;
    let off = ghost_offsets(&result.grid, &nb, &|x: &Point| g.eval(x));
    let h = result.grid.spacing;
    (0..u.len())
        .map(|i| {
            let mut q = [0.0; 2];
            for (axis, qa) in q.iter_mut().enumerate().take(result.grid.dim) {
                let (um, up) = ghosted(u, i, &nb[i], &off[i], axis);
                *qa = (up - um) / (2.0 * h);
            }
            norm(&hamiltonian_gradient(&q))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effham::{p_grid_1d, p_grid_2d, tabulate, EffectiveHamiltonian, EffConstants, HbarPoint, Region};
    use crate::metric::ParamPair;
    use proptest::prelude::*;

    fn quartic_table(dim: usize, pmax: f64, n: usize) -> HbarInterpolant {
        let grid = if dim == 1 { p_grid_1d(pmax, n) } else { p_grid_2d(pmax, n) };
        let points = grid
            .iter()
            .map(|p| HbarPoint {
                p: *p,
                value: hamiltonian(p),
                region: Region::K1,
                hbar_minus: 0.0,
                hbar_plus: None,
                tangency: ParamPair { mu: 0.0, sigma: 1.0 },
                flagged: false,
            })
            .collect();
        let table = EffectiveHamiltonian {
            dim,
            constants: EffConstants::new(0.0).unwrap(),
            tol_mu: 1e-3,
            points,
        };
        HbarInterpolant::from_table(&table).unwrap()
    }

    fn small() -> EvolveOptions {
        EvolveOptions {
            spacing: 1.0 / 64.0,
            final_time: 0.5,
            slices: vec![0.0, 0.25],
            k: 0.5,
            margin: 0.25,
            ..EvolveOptions::default()
        }
    }

    #[test]
    fn plane_waves_are_exact_without_potential() {
        let spec = EnsembleSpec::constant(1, 0.0);
        for p in [0.0, 0.5, 1.0, 1.5] {
            let g = InitialData::Linear { p: [p, 0.0] };
            let c = hamiltonian(&[p, 0.0]);
            let exact = move |x: &Point, t: f64| p * x[0] - t * c;
            let r = solve_oscillatory(&spec, 0, 0.125, &g, &small(), Some(&exact)).unwrap();
            assert!(r.error_vs_reference.unwrap() < 1e-12, "p {p}");
        }
        let spec2 = EnsembleSpec::constant(2, 0.0);
        let g = InitialData::Constant { c: 2.0 };
        let exact = |_: &Point, t: f64| 2.0 - t;
        let r = solve_oscillatory(&spec2, 0, 0.25, &g, &EvolveOptions { spacing: 1.0 / 32.0, ..small() }, Some(&exact)).unwrap();
        assert!(r.error_vs_reference.unwrap() < 1e-12);
    }

    #[test]
    fn homogenized_plane_waves_from_table() {
        // End to end: table built from flat-potential shapes.
        let spec = EnsembleSpec::constant(1, 0.0);
        let opts = crate::shape::ShapeOptions {
            spacing: 0.05,
            radii: vec![1.0],
            realizations: 1,
            directions: 2,
            margin: 0.5,
            richardson: false,
        };
        let provider = crate::shape::EnsembleShapes::new(spec, opts, 1e-3, 1e-2);
        let table = tabulate(&p_grid_1d(2.5, 101), &provider).unwrap();
        let interp = HbarInterpolant::from_table(&table).unwrap();
        for p in [0.5, 1.0, 1.5] {
            let hb = interp.eval(&[p, 0.0]).unwrap();
            assert!((hb - hamiltonian(&[p, 0.0])).abs() < 2e-3);
            let exact = move |x: &Point, t: f64| p * x[0] - t * hb;
            let r = solve_homogenized(&interp, &InitialData::Linear { p: [p, 0.0] }, &small(), Some(&exact)).unwrap();
            assert!(r.error_vs_reference.unwrap() < 1e-10, "p {p}");
        }
        let stationary = solve_homogenized(&interp, &InitialData::Linear { p: [1.0, 0.0] }, &small(), None).unwrap();
        let moved = stationary.slices.last().unwrap();
        let start = &stationary.slices[0];
        let drift = moved.iter().zip(start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift < 2e-3, "{drift}");
    }

    #[test]
    fn tent_matches_segment_infimum() {
        for dim in [1, 2] {
            let table = quartic_table(dim, 2.0, 81);
            let p = [0.8, if dim == 2 { 0.3 } else { 0.0 }];
            let g = InitialData::Tent { p };
            let ham = |q: &Point| table.eval(q).unwrap();
            let h = if dim == 1 { 1.0 / 256.0 } else { 1.0 / 32.0 };
            let r = solve_homogenized(&table, &g, &EvolveOptions { spacing: h, ..small() }, None).unwrap();
            let mut err: f64 = 0.0;
            for (t, u) in r.times.iter().zip(&r.slices) {
                for i in r.nodes_in_ball() {
                    let x = r.grid.point(i);
                    err = err.max((u[i] - tent_reference(&ham, &p, &x, *t, 4000)).abs());
                }
            }
            // First-order monotone scheme at a kink: O(h) with a modest constant.
            assert!(err < 12.0 * h, "dim {dim}: {err}");
        }
    }

    #[test]
    fn table_interpolant_guards_range() {
        let t = quartic_table(2, 1.0, 11);
        assert!(matches!(t.eval(&[1.5, 0.0]), Err(Error::GradientOutOfRange { .. })));
        assert!((t.eval(&[0.2, -0.4]).unwrap() - hamiltonian(&[0.2, -0.4])).abs() < 0.05);
        let g = InitialData::Linear { p: [1.2, 0.0] };
        assert!(matches!(
            solve_homogenized(&t, &g, &small(), None),
            Err(Error::GradientOutOfRange { .. })
        ));
    }

    #[test]
    fn errors() {
        let spec = EnsembleSpec::cosine(1, 0.2, 1.0, 1);
        let g = InitialData::Constant { c: 0.0 };
        assert!(matches!(
            solve_oscillatory(&spec, 0, 1.0 / 32.0, &g, &small(), None),
            Err(Error::UnderResolved { .. })
        ));
        assert!(matches!(
            solve_oscillatory(&spec, 0, 0.5, &g, &EvolveOptions { cfl: 3.0, ..small() }, None),
            Err(Error::CflViolation(_))
        ));
        let a = solve_oscillatory(&spec, 0, 0.5, &g, &small(), None).unwrap();
        let b = solve_oscillatory(&spec, 0, 0.5, &g, &EvolveOptions { slices: vec![0.1], ..small() }, None).unwrap();
        assert!(matches!(compare(&a, &b, 0.5), Err(Error::Mismatch(_))));
        assert_eq!(compare(&a, &a, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn constants_commute() {
        let spec = EnsembleSpec::cosine(1, 0.2, 1.0, 4);
        let g = InitialData::Tent { p: [0.7, 0.0] };
        let a = solve_oscillatory(&spec, 0, 0.25, &g, &small(), None).unwrap();
        // Shift by a dyadic constant so the arithmetic stays exact.
        let shifted_grid = a.grid;
        let u0: Vec<f64> = (0..shifted_grid.len()).map(|i| g.eval(&shifted_grid.point(i)) + 0.5).collect();
        let (vlow, _) = spec.essential_bounds();
        let realization = spec.realization(0, shifted_grid.half_extent / 0.25 + 1.0).unwrap();
        let pot: Vec<f64> = (0..shifted_grid.len())
            .map(|i| {
                let x = shifted_grid.point(i);
                realization.eval(&[x[0] / 0.25, 0.0]) - vlow
            })
            .collect();
        let ham = |i: usize, q: &Point| -> Result<f64> { Ok(hamiltonian(q) - pot[i]) };
        let march = March {
            grid: shifted_grid,
            alpha: a.alpha,
            cfl: 0.4,
            k: 0.5,
            ham: &ham,
            data: &|x: &Point| g.eval(x) + 0.5,
        };
        let (_, slices, _, _) = march.run(u0, 0.5, &[0.0, 0.25], None).unwrap();
        for (sa, sb) in a.slices.iter().zip(&slices) {
            let d = sa.iter().zip(sb).map(|(x, y)| (y - x - 0.5).abs()).fold(0.0, f64::max);
            assert!(d < 1e-12, "{d}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn scheme_is_monotone(seed in 0u64..1000, amp in 0.0f64..0.3, freq in 0.5f64..3.0, phase in 0.0f64..6.3) {
            let spec = EnsembleSpec::cosine(1, 0.2, 1.0, seed);
            let grid = build_grid(1, &small(), max_slope(1.5)).unwrap();
            let base: Vec<f64> = (0..grid.len()).map(|i| -0.6 * grid.point(i)[0].abs()).collect();
            let upper: Vec<f64> = base
                .iter()
                .enumerate()
                .map(|(i, b)| b + amp * (1.0 + (freq * grid.point(i)[0] + phase).sin()))
                .collect();
            let realization = spec.realization(0, grid.half_extent * 4.0 + 1.0).unwrap();
            let pot: Vec<f64> = (0..grid.len()).map(|i| realization.eval(&[grid.point(i)[0] * 4.0, 0.0])).collect();
            let ham = |i: usize, q: &Point| -> Result<f64> { Ok(hamiltonian(q) - pot[i]) };
            // Data gradients stay below 1.5, where |DH| <= 7.5.
            let data = |x: &Point| -0.6 * x[0].abs();
            let march = March { grid, alpha: max_slope(1.5), cfl: 0.4, k: 0.5, ham: &ham, data: &data };
            let (_, lo, _, _) = march.run(base, 0.2, &[], None).unwrap();
            let (_, hi, _, _) = march.run(upper, 0.2, &[], None).unwrap();
            for (a, b) in lo.last().unwrap().iter().zip(hi.last().unwrap()) {
                prop_assert!(a <= b);
            }
        }
    }
}
