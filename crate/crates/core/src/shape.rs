//! Limit shapes `mbar(e) = lim m(R e, 0) / R` estimated from metric solves.
//!
//! A [`ShapeFunction`] stores directional samples at unit vectors; values at
//! other points follow from positive homogeneity and, in two dimensions, from
//! piecewise-linear interpolation in angle. Shapes are produced by
//! [`estimate_shape`] and served to the effective-Hamiltonian code through the
//! [`ShapeProvider`] trait.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use parking_lot::RwLock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{normalize, sample_realization, EnsembleSpec};
use crate::grid::{norm, Grid, Point};
use crate::metric::{solve_metric_with, MetricOptions, MetricStatus, ParamPair};

/// Unit directions: `±1` in one dimension, `n` uniform angles in two.
pub fn unit_directions(dim: usize, n: usize) -> Vec<Point> {
    if dim == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                [t.cos(), t.sin()]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunction {
    pub params: ParamPair,
    pub dim: usize,
    pub status: MetricStatus,
    pub directions: Vec<Point>,
    pub values: Vec<f64>,
    /// Standard error across realizations (zero for a single realization).
    pub stderr: Vec<f64>,
    pub radii_used: Vec<f64>,
    /// Mean of `m(R e, 0) / R` per radius (outer) and direction (inner).
    pub ladder: Vec<Vec<f64>>,
    pub realizations: usize,
    pub seed: u64,
}

impl ShapeFunction {
    /// A shape with the same value in every direction.
    pub fn isotropic(params: ParamPair, dim: usize, n_dir: usize, value: f64) -> Self {
        let directions = unit_directions(dim, n_dir);
        let k = directions.len();
        Self {
            params,
            dim,
            status: MetricStatus::Finite,
            directions,
            values: vec![value; k],
            stderr: vec![0.0; k],
            radii_used: vec![],
            ladder: vec![],
            realizations: 0,
            seed: 0,
        }
    }

    pub fn neg_infinity(params: ParamPair, dim: usize, n_dir: usize) -> Self {
        let directions = unit_directions(dim, n_dir);
        let k = directions.len();
        Self {
            params,
            dim,
            status: MetricStatus::NegInfinity,
            directions,
            values: vec![f64::NEG_INFINITY; k],
            stderr: vec![0.0; k],
            radii_used: vec![],
            ladder: vec![],
            realizations: 0,
            seed: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.status == MetricStatus::Finite
    }

    /// Directional value at angle `theta` (two dimensions).
    pub fn at_angle(&self, theta: f64) -> f64 {
        let n = self.values.len();
        let t = (theta / (2.0 * PI) * n as f64).rem_euclid(n as f64);
        let i0 = (t.floor() as usize).min(n - 1);
        let w = t - i0 as f64;
        (1.0 - w) * self.values[i0] + w * self.values[(i0 + 1) % n]
    }

    /// `mbar(y)`, extended from the unit samples by positive homogeneity.
    pub fn eval(&self, y: &Point) -> f64 {
        if !self.is_finite() {
            return f64::NEG_INFINITY;
        }
        if self.dim == 1 {
            return if y[0] >= 0.0 {
                self.values[0] * y[0]
            } else {
                -self.values[1] * y[0]
            };
        }
        let r = norm(y);
        if r == 0.0 {
            return 0.0;
        }
        r * self.at_angle(y[1].atan2(y[0]))
    }

    /// Max `|mbar(e) - mbar(-e)|` over stored directions.
    pub fn evenness_defect(&self) -> f64 {
        let n = self.values.len();
        if self.dim == 1 {
            return (self.values[0] - self.values[1]).abs();
        }
        if n % 2 != 0 {
            return (0..n)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    (self.values[i] - self.at_angle(t + PI)).abs()
                })
                .fold(0.0, f64::max);
        }
        (0..n)
            .map(|i| (self.values[i] - self.values[(i + n / 2) % n]).abs())
            .fold(0.0, f64::max)
    }

    /// Max of `mbar(a + b) - mbar(a) - mbar(b)` over pairs of unit vectors on
    /// a uniform angular grid of `samples` angles.
    pub fn convexity_defect(&self, samples: usize) -> f64 {
        if self.dim == 1 {
            // a = 1, b = -1 and same-sign pairs are exact; the only check is
            // mbar(0) = 0 <= mbar(1) + mbar(-1).
            return (-(self.values[0] + self.values[1])).max(0.0);
        }
        let angles: Vec<f64> = (0..samples).map(|i| 2.0 * PI * i as f64 / samples as f64).collect();
        let mut worst = f64::NEG_INFINITY;
        for &ta in &angles {
            for &tb in &angles {
                let a = [ta.cos(), ta.sin()];
                let b = [tb.cos(), tb.sin()];
                let s = [a[0] + b[0], a[1] + b[1]];
                worst = worst.max(self.eval(&s) - self.eval(&a) - self.eval(&b));
            }
        }
        worst
    }

    /// Max `|mbar(e) - mbar'(e)|` over shared directions.
    pub fn max_difference(&self, other: &ShapeFunction) -> Result<f64> {
        same_directions(self, other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn same_directions(a: &ShapeFunction, b: &ShapeFunction) -> Result<()> {
    let same = a.dim == b.dim
        && a.directions.len() == b.directions.len()
        && a
            .directions
            .iter()
            .zip(&b.directions)
            .all(|(x, y)| (x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
    if same {
        Ok(())
    } else {
        Err(Error::Mismatch("shapes use different direction sets".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeOptions {
    /// Grid spacing of the metric solves.
    pub spacing: f64,
    /// Increasing radii; the last one gives the estimate.
    pub radii: Vec<f64>,
    pub realizations: usize,
    /// Direction count in two dimensions (one dimension always uses `±1`).
    pub directions: usize,
    /// Solve box half-extent is `(1 + margin) * max radius`.
    pub margin: f64,
    /// Two-point extrapolation `(R2 v2 - R1 v1) / (R2 - R1)` on the last two
    /// radii, assuming an `O(1/R)` bias.
    pub richardson: bool,
}

impl ShapeOptions {
    /// Radii `{25, 50, 100}` correlation lengths, 8 realizations for random
    /// ensembles and 1 for shifted periodic ones.
    pub fn defaults_for(spec: &EnsembleSpec, spacing: f64) -> Self {
        let l = spec.correlation_length();
        let periodic = matches!(spec.kind, crate::field::EnsembleKind::ShiftedPeriodic { .. });
        let constant = matches!(spec.kind, crate::field::EnsembleKind::Constant { .. });
        Self {
            spacing,
            radii: vec![25.0 * l, 50.0 * l, 100.0 * l],
            realizations: if periodic || constant { 1 } else { 8 },
            directions: 32,
            margin: 0.5,
            richardson: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::ZeroSamples);
        }
        if self.radii.is_empty() || self.radii.windows(2).any(|w| w[0] >= w[1]) || self.radii[0] <= 0.0 {
            return Err(Error::InvalidArgument("radii must be positive and increasing".into()));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::NonPositiveSpacing(self.spacing));
        }
        Ok(())
    }
}

/// Normalized essential supremum of the ensemble, `sup V - inf V`.
pub fn ensemble_vbar(spec: &EnsembleSpec) -> f64 {
    let (lo, hi) = spec.essential_bounds();
    hi - lo
}

/// Average `m(R e, 0) / R` over realizations, for every radius and direction.
pub fn estimate_shape(spec: &EnsembleSpec, params: &ParamPair, opts: &ShapeOptions) -> Result<ShapeFunction> {
    spec.validate()?;
    opts.validate()?;
    let dim = spec.dimension;
    let directions = unit_directions(dim, opts.directions);
    if !params.is_admissible(ensemble_vbar(spec)) {
        return Ok(ShapeFunction::neg_infinity(*params, dim, opts.directions));
    }
    let r_max = *opts.radii.last().unwrap();
    let cells = ((1.0 + opts.margin) * r_max / opts.spacing).ceil();
    let grid = Grid::new(dim, opts.spacing, cells * opts.spacing, false)?;
    let origin = grid
        .nearest_node(&[0.0, 0.0])
        .ok_or_else(|| Error::InvalidGrid("origin is not a node".into()))?;
    let metric_opts = MetricOptions {
        margin: opts.margin,
        ..MetricOptions::default()
    };

    // samples[realization][radius][direction]
    let samples: Vec<Vec<Vec<f64>>> = (0..opts.realizations as u64)
        .into_par_iter()
        .map(|idx| -> Result<Vec<Vec<f64>>> {
            let field = normalize(&sample_realization(spec, idx, &grid)?);
            let m = solve_metric_with(&field, params, origin, &metric_opts)?;
            Ok(opts
                .radii
                .iter()
                .map(|&r| {
                    directions
                        .iter()
                        .map(|e| m.value_at(&[r * e[0], r * e[1]]) / r)
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let n = samples.len() as f64;
    let nr = opts.radii.len();
    let nd = directions.len();
    let mut ladder = vec![vec![0.0; nd]; nr];
    for s in &samples {
        for (k, row) in s.iter().enumerate() {
            for (d, v) in row.iter().enumerate() {
                ladder[k][d] += v / n;
            }
        }
    }
    let last = nr - 1;
    let stderr: Vec<f64> = (0..nd)
        .map(|d| {
            if samples.len() < 2 {
                return 0.0;
            }
            let mean = ladder[last][d];
            let var = samples.iter().map(|s| (s[last][d] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    let values = if opts.richardson && nr >= 2 {
        let (r1, r2) = (opts.radii[nr - 2], opts.radii[nr - 1]);
        (0..nd)
            .map(|d| (r2 * ladder[nr - 1][d] - r1 * ladder[nr - 2][d]) / (r2 - r1))
            .collect()
    } else {
        ladder[last].clone()
    };
    Ok(ShapeFunction {
        params: *params,
        dim,
        status: MetricStatus::Finite,
        directions,
        values,
        stderr,
        radii_used: opts.radii.clone(),
        ladder,
        realizations: opts.realizations,
        seed: spec.seed,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Pairs compared with equal `mu` and ordered `sigma`.
    pub sigma_pairs: usize,
    /// Pairs compared with equal `sigma` and ordered `sigma * mu`.
    pub mu_pairs: usize,
    /// Largest direction-wise violation (`lower - upper`, positive = broken).
    pub max_violation: f64,
    /// Smallest direction-wise gap over pairs with strictly ordered `sigma * mu`.
    pub min_strict_gap: Option<f64>,
    pub passed: bool,
}

/// Direction-wise ordering of shapes along `sigma` at fixed `mu` and along
/// `sigma * mu` at fixed `sigma`. Ordering is asserted exactly.
pub fn check_shape_monotonicity(shapes: &[ShapeFunction]) -> Result<MonotonicityReport> {
    let mut rep = MonotonicityReport {
        passed: true,
        ..Default::default()
    };
    let finite: Vec<&ShapeFunction> = shapes.iter().filter(|s| s.is_finite()).collect();
    for w in finite.windows(2) {
        same_directions(w[0], w[1])?;
    }
    for (i, a) in finite.iter().enumerate() {
        for b in finite.iter().skip(i + 1) {
            let (pa, pb) = (a.params, b.params);
            let ordered = if pa.mu == pb.mu && pa.sigma != pb.sigma {
                rep.sigma_pairs += 1;
                Some(if pa.sigma < pb.sigma { (a, b) } else { (b, a) })
            } else if pa.sigma == pb.sigma && pa.sigma * pa.mu != pb.sigma * pb.mu {
                rep.mu_pairs += 1;
                Some(if pa.sigma * pa.mu < pb.sigma * pb.mu { (a, b) } else { (b, a) })
            } else {
                None
            };
            let Some((lo, hi)) = ordered else { continue };
            let gap = lo
                .values
                .iter()
                .zip(&hi.values)
                .map(|(l, h)| h - l)
                .fold(f64::INFINITY, f64::min);
            rep.max_violation = rep.max_violation.max(-gap);
            if lo.params.sigma * lo.params.mu < hi.params.sigma * hi.params.mu {
                rep.min_strict_gap = Some(rep.min_strict_gap.map_or(gap, |g: f64| g.min(gap)));
            }
        }
    }
    rep.passed = rep.max_violation <= 0.0;
    Ok(rep)
}

/// Finite-difference ratio `max_e |mbar_{q'}(e) - mbar_q(e)| / step` for a
/// parameter step along `(dmu, dsigma)`.
pub fn continuity_ratio(
    provider: &dyn ShapeProvider,
    base: &ParamPair,
    direction: (f64, f64),
    step: f64,
) -> Result<f64> {
    let q = ParamPair::new(base.mu + step * direction.0, base.sigma + step * direction.1)?;
    let a = provider.shape(base)?;
    let b = provider.shape(&q)?;
    Ok(a.max_difference(&b)? / step)
}

/// Source of limit shapes for the effective-Hamiltonian construction.
pub trait ShapeProvider: Sync {
    fn dimension(&self) -> usize;
    /// Normalized essential supremum of the potential.
    fn vbar(&self) -> f64;
    fn shape(&self, params: &ParamPair) -> Result<Arc<ShapeFunction>>;
    /// Cache key resolution in `mu`; zero for providers that do not quantize.
    fn mu_step(&self) -> f64 {
        0.0
    }
    /// Shape at exactly `params`, bypassing any quantization.
    fn shape_exact(&self, params: &ParamPair) -> Result<Arc<ShapeFunction>> {
        self.shape(params)
    }
}

/// Shapes estimated on demand and cached per `(mu, sigma)` quantized to a
/// lattice of steps `(mu_step, sigma_step)`.
pub struct EnsembleShapes {
    spec: EnsembleSpec,
    opts: ShapeOptions,
    vbar: f64,
    mu_step: f64,
    sigma_step: f64,
    cache: RwLock<HashMap<(i64, i64), Arc<ShapeFunction>>>,
}

impl EnsembleShapes {
    pub fn new(spec: EnsembleSpec, opts: ShapeOptions, mu_step: f64, sigma_step: f64) -> Self {
        let vbar = ensemble_vbar(&spec);
        Self {
            spec,
            opts,
            vbar,
            mu_step,
            sigma_step,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn options(&self) -> &ShapeOptions {
        &self.opts
    }

    pub fn cached(&self) -> usize {
        self.cache.read().len()
    }

    /// All cached shapes, ordered by key.
    pub fn snapshot(&self) -> Vec<Arc<ShapeFunction>> {
        let cache = self.cache.read();
        let mut keys: Vec<_> = cache.keys().copied().collect();
        keys.sort();
        keys.into_iter().map(|k| cache[&k].clone()).collect()
    }
}

impl ShapeProvider for EnsembleShapes {
    fn dimension(&self) -> usize {
        self.spec.dimension
    }

    fn vbar(&self) -> f64 {
        self.vbar
    }

    fn mu_step(&self) -> f64 {
        self.mu_step
    }

    fn shape_exact(&self, params: &ParamPair) -> Result<Arc<ShapeFunction>> {
        Ok(Arc::new(estimate_shape(&self.spec, params, &self.opts)?))
    }

    fn shape(&self, params: &ParamPair) -> Result<Arc<ShapeFunction>> {
        let key = (
            (params.mu / self.mu_step).round() as i64,
            (params.sigma / self.sigma_step).round() as i64,
        );
        if let Some(s) = self.cache.read().get(&key) {
            return Ok(s.clone());
        }
        let mut q = ParamPair {
            mu: key.0 as f64 * self.mu_step,
            sigma: (key.1 as f64 * self.sigma_step).clamp(-1.0, 1.0),
        };
        if !q.is_admissible(self.vbar) && params.is_admissible(self.vbar) {
            q = *params;
        }
        let shape = Arc::new(estimate_shape(&self.spec, &q, &self.opts)?);
        // Single writer per key: a concurrent insert of the same key wins.
        let mut cache = self.cache.write();
        Ok(cache.entry(key).or_insert(shape).clone())
    }
}

/// Shapes on the three path branches (`sigma = -1`, `mu = 0`, `sigma = +1`)
/// precomputed on a lattice and interpolated in between.
///
/// Along `sigma = ±1` the lattice is uniform in `s = sqrt(mu)` and along
/// `mu = 0` uniform in `sigma`; `mbar^2` is interpolated linearly, which is
/// exact for a constant potential and preserves monotone ordering. Queries
/// off the branches, or beyond the lattice, go to the exact provider.
pub struct LatticeShapes<P: ShapeProvider> {
    exact: P,
    minus: Vec<(f64, Arc<ShapeFunction>)>,
    zero: Vec<(f64, Arc<ShapeFunction>)>,
    plus: Vec<(f64, Arc<ShapeFunction>)>,
}

impl<P: ShapeProvider> LatticeShapes<P> {
    /// `points` lattice nodes per branch; the `sigma = +1` branch covers
    /// `mu` up to `mu_max`.
    pub fn build(exact: P, points: usize, mu_max: f64) -> Result<Self> {
        let points = points.max(2);
        let vbar = exact.vbar();
        let kappa = 1.0 - vbar;
        let lin = |a: f64, b: f64| -> Vec<f64> {
            (0..points)
                .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
                .collect()
        };
        let fetch = |mu: f64, sigma: f64| exact.shape_exact(&ParamPair { mu, sigma });
        let minus = if kappa >= 0.0 {
            lin(0.0, kappa.sqrt())
                .into_iter()
                .map(|s| Ok((s, fetch(s * s, -1.0)?)))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![]
        };
        let sigma_lo = if kappa >= 0.0 { -1.0 } else { -1.0 / vbar.sqrt() };
        let zero = lin(sigma_lo, 1.0)
            .into_iter()
            .map(|sg| Ok((sg, fetch(0.0, sg)?)))
            .collect::<Result<Vec<_>>>()?;
        let plus = lin(0.0, mu_max.max(0.0).sqrt())
            .into_iter()
            .map(|s| Ok((s, fetch(s * s, 1.0)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            exact,
            minus,
            zero,
            plus,
        })
    }

    pub fn exact(&self) -> &P {
        &self.exact
    }

    fn interpolate(branch: &[(f64, Arc<ShapeFunction>)], x: f64, params: &ParamPair) -> Option<ShapeFunction> {
        if branch.len() < 2 {
            return None;
        }
        let (lo, hi) = (branch[0].0, branch[branch.len() - 1].0);
        if x < lo - 1e-12 || x > hi + 1e-12 {
            return None;
        }
        let k = branch
            .windows(2)
            .position(|w| x <= w[1].0 + 1e-15)
            .unwrap_or(branch.len() - 2);
        let (x0, a) = (&branch[k].0, &branch[k].1);
        let (x1, b) = (&branch[k + 1].0, &branch[k + 1].1);
        let w = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        if !a.is_finite() || !b.is_finite() {
            return None;
        }
        let mut out = (**a).clone();
        out.params = *params;
        for d in 0..out.values.len() {
            let sq = (1.0 - w) * a.values[d].powi(2) + w * b.values[d].powi(2);
            out.values[d] = sq.max(0.0).sqrt();
            out.stderr[d] = (1.0 - w) * a.stderr[d] + w * b.stderr[d];
        }
        out.ladder.clear();
        Some(out)
    }
}

impl<P: ShapeProvider> ShapeProvider for LatticeShapes<P> {
    fn dimension(&self) -> usize {
        self.exact.dimension()
    }

    fn vbar(&self) -> f64 {
        self.exact.vbar()
    }

    fn shape(&self, params: &ParamPair) -> Result<Arc<ShapeFunction>> {
        let hit = if params.sigma == -1.0 {
            Self::interpolate(&self.minus, params.mu.sqrt(), params)
        } else if params.mu == 0.0 {
            Self::interpolate(&self.zero, params.sigma, params)
        } else if params.sigma == 1.0 {
            Self::interpolate(&self.plus, params.mu.sqrt(), params)
        } else {
            None
        };
        match hit {
            Some(s) => Ok(Arc::new(s)),
            None => self.exact.shape(params),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{EnsembleSpec, Profile};

    fn flat_opts(spacing: f64) -> ShapeOptions {
        ShapeOptions {
            spacing,
            radii: vec![0.5, 1.0],
            realizations: 1,
            directions: 32,
            margin: 0.5,
            richardson: false,
        }
    }

    #[test]
    fn flat_shapes_are_exact_cones() {
        for dim in [1, 2] {
            let spec = EnsembleSpec::constant(dim, 0.0);
            for (mu, sigma) in [(0.25, -1.0), (0.0, 1.0), (0.81, 1.0), (0.4, 0.3)] {
                let p = ParamPair::new(mu, sigma).unwrap();
                let s = estimate_shape(&spec, &p, &flat_opts(1.0 / 32.0)).unwrap();
                let exact = (1.0 + sigma * f64::sqrt(mu)).sqrt();
                for row in &s.ladder {
                    for v in row {
                        assert!((v - exact).abs() < 1e-12, "dim {dim} ({mu},{sigma}) {v} vs {exact}");
                    }
                }
            }
        }
    }

    #[test]
    fn sigma_zero_shape_is_one() {
        let spec = EnsembleSpec::bumps(2, 0.5, 0.5, 0.5, 1);
        let opts = ShapeOptions {
            radii: vec![2.0, 4.0],
            realizations: 2,
            ..flat_opts(0.125)
        };
        let s = estimate_shape(&spec, &ParamPair::new(0.3, 0.0).unwrap(), &opts).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn periodic_shape_matches_cell_average() {
        // Oracle: the 1D limit is the period average of the cost; midpoint
        // rule with 2^16 points on the kink-free interval (0, 1).
        let n = 1 << 16;
        let oracle: f64 = (0..n)
            .map(|k| {
                let x = (k as f64 + 0.5) / n as f64;
                let v = Profile::Cosine { amplitude: 0.2 }.eval(1, &[x, 0.0]);
                (1.0 + v.sqrt()).sqrt()
            })
            .sum::<f64>()
            / n as f64;
        let spec = EnsembleSpec::cosine(1, 0.2, 1.0, 3);
        let mut opts = ShapeOptions::defaults_for(&spec, 1.0 / 64.0);
        opts.realizations = 1;
        let s = estimate_shape(&spec, &ParamPair::new(0.0, 1.0).unwrap(), &opts).unwrap();
        for v in &s.values {
            assert!((v - oracle).abs() < 1e-3, "{v} vs {oracle}");
        }
    }

    #[test]
    fn inadmissible_shape_is_sentinel() {
        let spec = EnsembleSpec::cosine(1, 0.2, 1.0, 3);
        let s = estimate_shape(&spec, &ParamPair::new(0.7, -1.0).unwrap(), &flat_opts(0.05)).unwrap();
        assert!(!s.is_finite());
        assert!(s.eval(&[1.0, 0.0]).is_infinite());
    }

    #[test]
    fn interpolation_in_angle_and_homogeneity() {
        let mut s = ShapeFunction::isotropic(ParamPair::new(0.0, 1.0).unwrap(), 2, 4, 1.0);
        s.values = vec![1.0, 2.0, 1.0, 2.0];
        assert!((s.eval(&[3.0, 0.0]) - 3.0).abs() < 1e-12);
        assert!((s.at_angle(PI / 4.0) - 1.5).abs() < 1e-12);
        assert!((s.eval(&[0.0, -2.0]) - 4.0).abs() < 1e-12);
        assert_eq!(s.evenness_defect(), 0.0);
    }

    #[test]
    fn monotonicity_report_orders_flat_shapes() {
        let mk = |mu: f64, sigma: f64| {
            let v = (1.0 + sigma * f64::sqrt(mu)).sqrt();
            ShapeFunction::isotropic(ParamPair::new(mu, sigma).unwrap(), 2, 8, v)
        };
        let shapes = vec![mk(0.25, -1.0), mk(0.25, 0.0), mk(0.25, 1.0), mk(0.0, -1.0), mk(0.5, 1.0)];
        let rep = check_shape_monotonicity(&shapes).unwrap();
        assert!(rep.passed);
        assert!(rep.sigma_pairs >= 3 && rep.mu_pairs >= 2);
        assert!(rep.min_strict_gap.unwrap() > 0.0);

        let mut bad = shapes.clone();
        bad[0].values[3] = 2.0;
        assert!(!check_shape_monotonicity(&bad).unwrap().passed);

        let odd = vec![mk(0.0, 1.0), ShapeFunction::isotropic(ParamPair::new(0.0, -1.0).unwrap(), 2, 6, 1.0)];
        assert!(check_shape_monotonicity(&odd).is_err());
    }

    #[test]
    fn lattice_is_exact_for_flat_potential() {
        let spec = EnsembleSpec::constant(2, 0.0);
        let exact = EnsembleShapes::new(spec, flat_opts(1.0 / 16.0), 1e-3, 1e-2);
        let lattice = LatticeShapes::build(exact, 5, 4.0).unwrap();
        for (mu, sigma) in [(0.37, -1.0), (0.0, -0.42), (2.9, 1.0)] {
            let s = lattice.shape(&ParamPair::new(mu, sigma).unwrap()).unwrap();
            let exact = (1.0 + sigma * f64::sqrt(mu)).sqrt();
            assert!(s.values.iter().all(|v| (v - exact).abs() < 1e-12));
        }
    }
}
