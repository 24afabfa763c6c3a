//! Maximal subsolutions of `|Du|^2 = 1 + sigma sqrt(mu + V)` with a point source.
//!
//! The maximal subsolution vanishing at `z` is the geodesic distance from `z`
//! with local cost `sqrt(1 + sigma sqrt(mu + V))`. In one dimension that is a
//! cumulative integral, done with composite Simpson on every grid interval.
//! In two dimensions it is computed by first-order upwind fast marching on the
//! factored unknown `tau = m / |y - z|`, which is exact for constant costs and
//! removes the point-source singularity from the error.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PotentialField;
use crate::grid::{norm, sub, Grid, Point};
use crate::rng;

/// Below this value the local cost is treated as degenerate and flagged.
pub const SPEED_FLOOR: f64 = 1e-10;

/// Slack on the admissibility inequality to absorb rounding at the boundary
/// `sigma (mu + vbar)^{1/2} = -1`.
pub const ADMISSIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPair {
    pub mu: f64,
    pub sigma: f64,
}

impl ParamPair {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu >= 0.0) || !(-1.0..=1.0).contains(&sigma) {
            return Err(Error::InvalidArgument(format!(
                "need mu >= 0 and sigma in [-1, 1], got ({mu}, {sigma})"
            )));
        }
        Ok(Self { mu, sigma })
    }

    /// `sigma (mu + vbar)^{1/2} >= -1`.
    pub fn is_admissible(&self, vbar: f64) -> bool {
        self.sigma * (self.mu + vbar).max(0.0).sqrt() >= -1.0 - ADMISSIBILITY_SLACK
    }

    /// Cone slopes `(lower, upper)` bounding `m(y, z) / |y - z|`.
    pub fn cone_slopes(&self, vbar: f64) -> (f64, f64) {
        let at_low = (1.0 + self.sigma * self.mu.sqrt()).max(0.0).sqrt();
        let at_high = (1.0 + self.sigma * (self.mu + vbar).sqrt()).max(0.0).sqrt();
        if self.sigma <= 0.0 {
            (at_high, at_low)
        } else {
            (at_low, at_high)
        }
    }

    /// Lipschitz constant `(1 + max(sigma, 0)(mu + vbar)^{1/2})^{1/2}`.
    pub fn lipschitz(&self, vbar: f64) -> f64 {
        (1.0 + self.sigma.max(0.0) * (self.mu + vbar).sqrt()).sqrt()
    }
}

/// `1 + sigma sqrt(mu + v)`; negative only for inadmissible pairs.
pub fn local_speed_squared(v: f64, params: &ParamPair) -> f64 {
    1.0 + params.sigma * (params.mu + v).max(0.0).sqrt()
}

pub fn speed_squared(field: &PotentialField, params: &ParamPair, node: usize) -> f64 {
    local_speed_squared(field.values[node], params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricStatus {
    Finite,
    /// No subsolution exists; the maximal subsolution is identically `-inf`.
    NegInfinity,
}

#[derive(Debug, Clone)]
pub struct MetricField {
    pub params: ParamPair,
    pub grid: Grid,
    pub source: usize,
    pub source_point: Point,
    pub values: Vec<f64>,
    /// Values with `|y - z| <= trust_radius` are certified.
    pub trust_radius: f64,
    pub status: MetricStatus,
    /// Nodes where the local cost fell below [`SPEED_FLOOR`].
    pub degenerate_nodes: usize,
    factor: Vec<f64>,
}

impl MetricField {
    pub fn is_finite(&self) -> bool {
        self.status == MetricStatus::Finite
    }

    /// `m(y, z)` at an arbitrary point, interpolating the factor `m / |y - z|`
    /// multilinearly and rescaling by the exact distance.
    pub fn value_at(&self, y: &Point) -> f64 {
        if !self.is_finite() {
            return f64::NEG_INFINITY;
        }
        let r = norm(&sub(y, &self.source_point));
        if r == 0.0 {
            return 0.0;
        }
        r * self.grid.interpolate(&self.factor, y)
    }

    pub fn in_trust(&self, y: &Point) -> bool {
        norm(&sub(y, &self.source_point)) <= self.trust_radius + 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// The certified radius is the distance to the box boundary divided by
    /// `1 + margin`.
    pub margin: f64,
    /// Simpson subintervals per grid interval (one-dimensional solver).
    pub simpson_subdivisions: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            margin: 0.5,
            simpson_subdivisions: 8,
        }
    }
}

pub fn solve_metric(field: &PotentialField, params: &ParamPair, source: usize) -> Result<MetricField> {
    solve_metric_with(field, params, source, &MetricOptions::default())
}

pub fn solve_metric_with(
    field: &PotentialField,
    params: &ParamPair,
    source: usize,
    opts: &MetricOptions,
) -> Result<MetricField> {
    if !field.normalized {
        return Err(Error::NotNormalized);
    }
    let grid = field.grid;
    if source >= grid.len() {
        return Err(Error::SourceOutsideGrid(source));
    }
    let z = grid.point(source);
    let trust_radius = box_distance(&grid, &z) / (1.0 + opts.margin);
    if !params.is_admissible(field.vbar) {
        return Ok(MetricField {
            params: *params,
            grid,
            source,
            source_point: z,
            values: vec![f64::NEG_INFINITY; grid.len()],
            trust_radius,
            status: MetricStatus::NegInfinity,
            degenerate_nodes: 0,
            factor: vec![f64::NEG_INFINITY; grid.len()],
        });
    }
    let cost: Vec<f64> = field
        .values
        .iter()
        .map(|&v| local_speed_squared(v, params).max(0.0).sqrt())
        .collect();
    let degenerate_nodes = field
        .values
        .iter()
        .filter(|&&v| local_speed_squared(v, params) < SPEED_FLOOR)
        .count();
    let values = if grid.dim == 1 {
        cumulative_1d(field, params, source, opts.simpson_subdivisions.max(1))
    } else {
        factored_fast_marching(&grid, &cost, source)
    };
    let factor = values
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let r = norm(&sub(&grid.point(k), &z));
            if r == 0.0 {
                cost[source]
            } else {
                m / r
            }
        })
        .collect();
    Ok(MetricField {
        params: *params,
        grid,
        source,
        source_point: z,
        values,
        trust_radius,
        status: MetricStatus::Finite,
        degenerate_nodes,
        factor,
    })
}

fn box_distance(grid: &Grid, z: &Point) -> f64 {
    let r = grid.half_extent;
    let mut d = r - z[0].abs();
    if grid.dim == 2 {
        d = d.min(r - z[1].abs());
    }
    d.max(0.0)
}

fn cumulative_1d(field: &PotentialField, params: &ParamPair, source: usize, sub_n: usize) -> Vec<f64> {
    let grid = field.grid;
    let cost = |x: f64| local_speed_squared(field.eval(&[x, 0.0]), params).max(0.0).sqrt();
    // Simpson needs an even panel count.
    let panels = (sub_n + sub_n % 2).max(2);
    let simpson = |a: f64, b: f64| -> f64 {
        let n = panels;
        let step = (b - a) / n as f64;
        let mut acc = cost(a) + cost(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * cost(a + k as f64 * step);
        }
        acc * step / 3.0
    };
    let n = grid.n;
    let mut m = vec![0.0; n];
    for i in source + 1..n {
        m[i] = m[i - 1] + simpson(grid.coord(i - 1), grid.coord(i));
    }
    for i in (0..source).rev() {
        m[i] = m[i + 1] + simpson(grid.coord(i), grid.coord(i + 1));
    }
    m
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    time: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    // Min-heap on arrival time, ties broken by the smaller node index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// First-order upwind fast marching for `|DT| = cost` on the factored unknown
/// `tau = T / |y - z|`. Neighbours never wrap, even on periodic grids.
fn factored_fast_marching(grid: &Grid, cost: &[f64], source: usize) -> Vec<f64> {
    let n = grid.n;
    let h = grid.spacing;
    let len = grid.len();
    let z = grid.point(source);
    let mut time = vec![f64::INFINITY; len];
    let mut tau = vec![0.0; len];
    let mut accepted = vec![false; len];
    let mut heap = BinaryHeap::new();

    time[source] = 0.0;
    tau[source] = cost[source];
    heap.push(HeapEntry {
        time: 0.0,
        node: source,
    });

    let axis_neighbor = |i: usize, j: usize, axis: usize, s: i8| -> Option<usize> {
        let (ii, jj) = match (axis, s) {
            (0, -1) => (i.checked_sub(1)?, j),
            (0, _) => ((i + 1 < n).then_some(i + 1)?, j),
            (_, -1) => (i, j.checked_sub(1)?),
            (_, _) => (i, (j + 1 < n).then_some(j + 1)?),
        };
        Some(ii + n * jj)
    };

    while let Some(HeapEntry { time: t, node }) = heap.pop() {
        if accepted[node] || t > time[node] {
            continue;
        }
        accepted[node] = true;
        let (i, j) = (node % n, node / n);
        for axis in 0..2 {
            for s in [-1i8, 1] {
                let Some(nb) = axis_neighbor(i, j, axis, s) else { continue };
                if accepted[nb] {
                    continue;
                }
                let (t_new, tau_new) =
                    update_node(grid, cost, &time, &tau, &accepted, nb, &z, h, &axis_neighbor);
                if t_new < time[nb] {
                    time[nb] = t_new;
                    tau[nb] = tau_new;
                    heap.push(HeapEntry {
                        time: t_new,
                        node: nb,
                    });
                }
            }
        }
    }
    time
}

#[allow(clippy::too_many_arguments)]
fn update_node(
    grid: &Grid,
    cost: &[f64],
    time: &[f64],
    tau: &[f64],
    accepted: &[bool],
    node: usize,
    z: &Point,
    h: f64,
    axis_neighbor: &dyn Fn(usize, usize, usize, i8) -> Option<usize>,
) -> (f64, f64) {
    let n = grid.n;
    let (i, j) = (node % n, node / n);
    let y = grid.point(node);
    let d = sub(&y, z);
    let r = norm(&d);
    let alpha = [d[0] / r, d[1] / r];
    let c = h / r;
    let f = cost[node] * c;

    // Upwind neighbour per axis: (tau, s, T) where s = +1 for the lower side.
    let mut upwind: [Option<(f64, f64, f64)>; 2] = [None, None];
    for (axis, slot) in upwind.iter_mut().enumerate() {
        for s in [-1i8, 1] {
            let Some(nb) = axis_neighbor(i, j, axis, s) else { continue };
            if !accepted[nb] {
                continue;
            }
            let sign = -(s as f64);
            if slot.is_none_or(|(_, _, t)| time[nb] < t) {
                *slot = Some((tau[nb], sign, time[nb]));
            }
        }
    }

    let mut best = (f64::INFINITY, 0.0);
    let consider = |best: &mut (f64, f64), tau_y: f64| {
        let t = r * tau_y;
        if t < best.0 {
            *best = (t, tau_y);
        }
    };

    // a_k tau - b_k is the scaled axis-k derivative of T.
    let coeffs = |axis: usize, (tk, s, _): (f64, f64, f64)| (alpha[axis] * c + s, s * tk);
    let valid = |tau_y: f64, axis: usize, nb: (f64, f64, f64)| -> bool {
        let (a, b) = coeffs(axis, nb);
        nb.1 * (a * tau_y - b) >= -1e-12 && r * tau_y >= nb.2 - 1e-12
    };

    if let (Some(u0), Some(u1)) = (upwind[0], upwind[1]) {
        let (a0, b0) = coeffs(0, u0);
        let (a1, b1) = coeffs(1, u1);
        if let Some(t) = larger_root(a0 * a0 + a1 * a1, a0 * b0 + a1 * b1, b0 * b0 + b1 * b1 - f * f) {
            if valid(t, 0, u0) && valid(t, 1, u1) {
                consider(&mut best, t);
            }
        }
    }
    // One-sided updates take `T` flat across the other axis. Freezing the
    // factor there instead can undercut the true value when it varies.
    for axis in 0..grid.dim {
        let Some(u) = upwind[axis] else { continue };
        let (a, b) = coeffs(axis, u);
        if let Some(t) = larger_root(a * a, a * b, b * b - f * f) {
            if valid(t, axis, u) {
                consider(&mut best, t);
            }
        }
    }
    if best.0.is_infinite() {
        // Degenerate cost: fall back to trapezoidal travel along an axis edge.
        for (axis, u) in upwind.iter().enumerate().take(grid.dim) {
            let Some((_, s, t_nb)) = *u else { continue };
            let nb = axis_neighbor(i, j, axis, if s > 0.0 { -1 } else { 1 }).unwrap();
            let t = t_nb + 0.5 * h * (cost[node] + cost[nb]);
            consider(&mut best, t / r);
        }
    }
    best
}

/// Larger root of `A x^2 - 2 B x + C = 0`.
fn larger_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a <= 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    Some((b + disc.sqrt()) / a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheckOptions {
    pub pairs: usize,
    pub triples: usize,
    pub aux_sources: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for PropertyCheckOptions {
    fn default() -> Self {
        Self {
            pairs: 200,
            triples: 200,
            aux_sources: 20,
            seed: 0,
            tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    /// Max of `|m(y; z) - m(z; y)|` over sampled pairs.
    pub symmetry_defect: f64,
    /// Max positive part of `m(y,z) - m(y,x) - m(x,z)` over sampled triples.
    pub subadditivity_defect: f64,
    /// Max violation of the cone bounds over trusted nodes of every solve.
    pub cone_violation: f64,
    pub pairs_checked: usize,
    pub triples_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Symmetry, subadditivity and cone bounds for `m`, using extra solves from
/// sampled auxiliary sources inside the trust region of `m`.
pub fn check_subsolution_properties(
    m: &MetricField,
    field: &PotentialField,
    opts: &PropertyCheckOptions,
) -> Result<PropertyReport> {
    if !m.is_finite() {
        return Err(Error::InvalidArgument("property check needs a finite metric".into()));
    }
    let grid = field.grid;
    let mut r = rng::stream(opts.seed, "metric-property-check", m.source as u64);
    let pick_node = |radius: f64, center: &Point, r: &mut rand_chacha::ChaCha8Rng| -> usize {
        loop {
            let mut p = [0.0; 2];
            for (k, c) in p.iter_mut().enumerate().take(grid.dim) {
                *c = center[k] + radius * (2.0 * r.random::<f64>() - 1.0);
            }
            if let Some(idx) = grid.nearest_node(&p) {
                if norm(&sub(&grid.point(idx), center)) <= radius {
                    return idx;
                }
            }
        }
    };

    let mut solves = vec![m.clone()];
    let mut seen = vec![m.source];
    while solves.len() < opts.aux_sources + 1 {
        let node = pick_node(0.5 * m.trust_radius, &m.source_point, &mut r);
        if seen.contains(&node) {
            continue;
        }
        seen.push(node);
        solves.push(solve_metric(field, &m.params, node)?);
    }

    let mut symmetry: f64 = 0.0;
    let mut pairs = 0;
    'outer: for a in 0..solves.len() {
        for b in a + 1..solves.len() {
            if pairs >= opts.pairs {
                break 'outer;
            }
            let (ma, mb) = (&solves[a], &solves[b]);
            if !ma.in_trust(&mb.source_point) || !mb.in_trust(&ma.source_point) {
                continue;
            }
            symmetry = symmetry.max((ma.values[mb.source] - mb.values[ma.source]).abs());
            pairs += 1;
        }
    }

    let mut subadd: f64 = 0.0;
    let mut triples = 0;
    let mut attempts = 0;
    while triples < opts.triples && attempts < 50 * opts.triples.max(1) {
        attempts += 1;
        let zi = r.random_range(0..solves.len());
        let xi = r.random_range(0..solves.len());
        if zi == xi {
            continue;
        }
        let (mz, mx) = (&solves[zi], &solves[xi]);
        let y = if triples % 2 == 0 {
            // x at the midpoint of y and z, the tight case for a flat potential.
            let p = [
                2.0 * mx.source_point[0] - mz.source_point[0],
                2.0 * mx.source_point[1] - mz.source_point[1],
            ];
            match grid.nearest_node(&p) {
                Some(k) => k,
                None => continue,
            }
        } else {
            pick_node(m.trust_radius, &m.source_point, &mut r)
        };
        let yp = grid.point(y);
        if !mz.in_trust(&yp) || !mx.in_trust(&yp) || !mz.in_trust(&mx.source_point) {
            continue;
        }
        let defect = mz.values[y] - mx.values[y] - mz.values[mx.source];
        subadd = subadd.max(defect);
        triples += 1;
    }

    let (lo, hi) = m.params.cone_slopes(field.vbar);
    let mut cone: f64 = 0.0;
    for s in &solves {
        cone = cone.max(cone_violation(s, lo, hi));
    }

    let passed = symmetry <= opts.tolerance && subadd <= opts.tolerance && cone <= opts.tolerance;
    Ok(PropertyReport {
        symmetry_defect: symmetry,
        subadditivity_defect: subadd.max(0.0),
        cone_violation: cone,
        pairs_checked: pairs,
        triples_checked: triples,
        tolerance: opts.tolerance,
        passed,
    })
}

/// Largest amount by which trusted nodes leave the cone `lo |y-z| <= m <= hi |y-z|`.
pub fn cone_violation(m: &MetricField, lo: f64, hi: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, &v) in m.values.iter().enumerate() {
        let p = m.grid.point(k);
        if !m.in_trust(&p) {
            continue;
        }
        let r = norm(&sub(&p, &m.source_point));
        worst = worst.max(lo * r - v).max(v - hi * r);
    }
    worst
}
