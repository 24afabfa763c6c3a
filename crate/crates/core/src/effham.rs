//! Effective Hamiltonian assembled from limit shapes.
//!
//! `Hbar^-(p)` is the largest `mu` on the `sigma = -1` branch whose shape lies
//! above the plane `p . y`, `Hbar^+(p)` the smallest `mu` on the `sigma = +1`
//! branch doing so, and `Hbar = Hbar^-` when finite, `Hbar^+` otherwise.
//! Region labels come from a walk along the parameter path
//! `(mu*, sigma*) -> (0, sigma*) -> (0, 1) -> (inf, 1)`, which visits shapes in
//! increasing order.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, norm, Point};
use crate::metric::ParamPair;
use crate::shape::{ShapeFunction, ShapeProvider};

/// Bisection tolerance in `mu`.
pub const TOL_MU: f64 = 1e-3;
/// Path step along the `mu = 0` segment.
pub const SIGMA_STEP: f64 = 1e-2;
pub const MAX_BISECTIONS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffConstants {
    pub vbar: f64,
    pub kappa: f64,
    pub mu_star: f64,
    pub sigma_star: f64,
}

impl EffConstants {
    pub fn new(vbar: f64) -> Result<Self> {
        if !(vbar >= 0.0) || !vbar.is_finite() {
            return Err(Error::InvalidArgument(format!("vbar must be finite and >= 0, got {vbar}")));
        }
        let kappa = 1.0 - vbar;
        let (mu_star, sigma_star) = if kappa >= 0.0 {
            (kappa, -1.0)
        } else {
            (0.0, -1.0 / vbar.sqrt())
        };
        Ok(Self {
            vbar,
            kappa,
            mu_star,
            sigma_star,
        })
    }

    pub fn start(&self) -> ParamPair {
        ParamPair {
            mu: self.mu_star,
            sigma: self.sigma_star,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    K1,
    K2,
    K3,
    K4,
}

impl Region {
    pub fn label(&self) -> &'static str {
        match self {
            Region::K1 => "K1",
            Region::K2 => "K2",
            Region::K3 => "K3",
            Region::K4 => "K4",
        }
    }
}

/// `min_{|e| = 1} (mbar(e) - p . e)`.
///
/// In two dimensions the minimum is taken over the piecewise-linear-in-angle
/// interpolant, in closed form on every segment. Infinite shapes give `-inf`.
pub fn support_gap(shape: &ShapeFunction, p: &Point) -> f64 {
    if !shape.is_finite() {
        return f64::NEG_INFINITY;
    }
    let v = &shape.values;
    if shape.dim == 1 {
        return (v[0] - p[0]).min(v[1] + p[0]);
    }
    let pn = norm(p);
    if pn == 0.0 {
        return v.iter().copied().fold(f64::INFINITY, f64::min);
    }
    let phi = p[1].atan2(p[0]);
    let n = v.len();
    let width = 2.0 * PI / n as f64;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let t0 = width * i as f64;
        best = best.min(v[i] - pn * (t0 - phi).cos());
        let slope = (v[(i + 1) % n] - v[i]) / width;
        let ratio = -slope / pn;
        if ratio.abs() <= 1.0 {
            // Interior critical point with cos(theta - phi) >= 0 is the minimum.
            let delta = ratio.asin();
            let t = (phi + delta - t0).rem_euclid(2.0 * PI);
            if t <= width {
                best = best.min(v[i] + slope * t - pn * delta.cos());
            }
        }
    }
    best
}

fn gap_at(provider: &dyn ShapeProvider, p: &Point, mu: f64, sigma: f64) -> Result<f64> {
    Ok(gap_with_mu(provider, p, mu, sigma)?.0)
}

/// Gap together with the `mu` the provider actually used (it may quantize).
fn gap_with_mu(provider: &dyn ShapeProvider, p: &Point, mu: f64, sigma: f64) -> Result<(f64, f64)> {
    let shape = provider.shape(&ParamPair { mu, sigma })?;
    Ok((support_gap(&shape, p), shape.params.mu))
}

/// Root of a monotone gap on `[lo, hi]` with `g(lo)` and `g(hi)` of opposite
/// sign. Bisection down to `TOL_MU`, then a secant step on the final bracket.
fn bracket_root(
    provider: &dyn ShapeProvider,
    p: &Point,
    sigma: f64,
    mut lo: (f64, f64),
    mut hi: (f64, f64),
) -> Result<f64> {
    // Entries are (mu, gap); `lo` keeps the sign of the starting lower end.
    let lo_sign = lo.1 >= 0.0;
    for _ in 0..MAX_BISECTIONS {
        if (hi.0 - lo.0).abs() <= TOL_MU {
            break;
        }
        let (g, mu) = gap_with_mu(provider, p, 0.5 * (lo.0 + hi.0), sigma)?;
        if mu <= lo.0 || mu >= hi.0 {
            break;
        }
        if (g >= 0.0) == lo_sign {
            lo = (mu, g);
        } else {
            hi = (mu, g);
        }
    }
    let denom = lo.1 - hi.1;
    let t = if denom != 0.0 && denom.is_finite() {
        (lo.1 / denom).clamp(0.0, 1.0)
    } else {
        0.5
    };
    Ok(lo.0 + t * (hi.0 - lo.0))
}

/// `sup{mu in [0, mu*] : mbar_{mu,-1} >= p . y}`, or `-inf` when empty.
pub fn hbar_minus(p: &Point, provider: &dyn ShapeProvider) -> Result<f64> {
    let c = EffConstants::new(provider.vbar())?;
    if c.kappa < 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let lo = gap_with_mu(provider, p, 0.0, -1.0)?;
    if lo.0 < 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let hi = gap_with_mu(provider, p, c.mu_star, -1.0)?;
    if hi.0 >= 0.0 {
        return Ok(c.mu_star);
    }
    bracket_root(provider, p, -1.0, (lo.1, lo.0), (hi.1, hi.0))
}

/// Bracket top for the `sigma = +1` bisection.
pub fn plus_bracket(p: &Point, vbar: f64) -> f64 {
    (dot(p, p) - 1.0).powi(2) + vbar + 1.0
}

/// `inf{mu >= 0 : mbar_{mu,+1} >= p . y}`.
pub fn hbar_plus(p: &Point, provider: &dyn ShapeProvider) -> Result<f64> {
    let lo = gap_with_mu(provider, p, 0.0, 1.0)?;
    if lo.0 >= 0.0 {
        return Ok(0.0);
    }
    let top = plus_bracket(p, provider.vbar());
    let hi = gap_with_mu(provider, p, top, 1.0)?;
    if hi.0 < 0.0 {
        return Err(Error::BracketFailure { mu_hi: top, gap: hi.0 });
    }
    bracket_root(provider, p, 1.0, (lo.1, lo.0), (hi.1, hi.0))
}

/// Lattice of the parameter path, indexed from the start `(mu*, sigma*)`.
struct PathLattice {
    c: EffConstants,
    /// Points on `sigma = -1` with `mu > 0`, starting at `mu*`.
    n_a: usize,
    /// Points on `mu = 0` from `sigma*` to `1`.
    n_b: usize,
}

impl PathLattice {
    fn new(c: EffConstants) -> Self {
        let n_a = if c.mu_star > 0.0 {
            ((c.mu_star / TOL_MU) * (1.0 - 1e-12)).ceil() as usize
        } else {
            0
        };
        let span = 1.0 - c.sigma_star;
        let n_b = ((span / SIGMA_STEP) * (1.0 - 1e-12)).ceil() as usize + 1;
        Self { c, n_a, n_b }
    }

    fn point(&self, idx: usize) -> (ParamPair, Region) {
        if idx < self.n_a {
            let mu = self.c.mu_star - idx as f64 * TOL_MU;
            (ParamPair { mu, sigma: -1.0 }, Region::K2)
        } else if idx < self.n_a + self.n_b {
            let k = idx - self.n_a;
            let sigma = if k + 1 == self.n_b {
                1.0
            } else {
                self.c.sigma_star + k as f64 * SIGMA_STEP
            };
            (ParamPair { mu: 0.0, sigma }, Region::K3)
        } else {
            let k = idx - self.n_a - self.n_b + 1;
            (
                ParamPair {
                    mu: k as f64 * TOL_MU,
                    sigma: 1.0,
                },
                Region::K4,
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbarPoint {
    pub p: Point,
    pub value: f64,
    pub region: Region,
    pub hbar_minus: f64,
    pub hbar_plus: Option<f64>,
    /// Parameters of the first supporting shape on the path.
    pub tangency: ParamPair,
    /// Walk and bisection disagree beyond `2 * TOL_MU`.
    pub flagged: bool,
}

/// Value and region label of `Hbar` at `p`.
pub fn hbar(p: &Point, provider: &dyn ShapeProvider) -> Result<HbarPoint> {
    let c = EffConstants::new(provider.vbar())?;
    let minus = hbar_minus(p, provider)?;
    let plus = if minus.is_finite() {
        None
    } else {
        Some(hbar_plus(p, provider)?)
    };
    let value = plus.unwrap_or(minus);

    let path = PathLattice::new(c);
    let gap = |idx: usize| -> Result<f64> {
        let (q, _) = path.point(idx);
        gap_at(provider, p, q.mu, q.sigma)
    };
    let (region, tangency) = if gap(1)? > 0.0 {
        (Region::K1, c.start())
    } else {
        // Exponential then binary search for the first index with gap >= 0;
        // the gap is nondecreasing along the path.
        let mu_cap = plus_bracket(p, c.vbar);
        let max_idx = path.n_a + path.n_b + (mu_cap / TOL_MU).ceil() as usize;
        let mut lo = 1;
        let mut hi = 2;
        while gap(hi)? < 0.0 {
            lo = hi;
            if hi >= max_idx {
                let (q, _) = path.point(hi);
                return Err(Error::BracketFailure {
                    mu_hi: q.mu,
                    gap: gap(hi)?,
                });
            }
            hi = (2 * hi).min(max_idx);
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if gap(mid)? >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let first = if gap(lo)? >= 0.0 { lo } else { hi };
        let (q, r) = path.point(first);
        (r, q)
    };
    let expected = match region {
        Region::K1 => c.mu_star,
        Region::K3 => 0.0,
        Region::K2 | Region::K4 => tangency.mu,
    };
    let flagged = (value - expected).abs() > 2.0 * TOL_MU || !value.is_finite();
    Ok(HbarPoint {
        p: *p,
        value,
        region,
        hbar_minus: minus,
        hbar_plus: plus,
        tangency,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveHamiltonian {
    pub dim: usize,
    pub constants: EffConstants,
    pub tol_mu: f64,
    pub points: Vec<HbarPoint>,
}

impl EffectiveHamiltonian {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|h| h.value).collect()
    }

    pub fn flagged(&self) -> usize {
        self.points.iter().filter(|h| h.flagged).count()
    }

    pub fn with_region(&self, r: Region) -> impl Iterator<Item = &HbarPoint> {
        self.points.iter().filter(move |h| h.region == r)
    }
}

/// Evaluate `Hbar` at every node, in parallel.
pub fn tabulate(p_grid: &[Point], provider: &dyn ShapeProvider) -> Result<EffectiveHamiltonian> {
    let constants = EffConstants::new(provider.vbar())?;
    let points = p_grid
        .par_iter()
        .map(|p| hbar(p, provider))
        .collect::<Result<Vec<_>>>()?;
    Ok(EffectiveHamiltonian {
        dim: provider.dimension(),
        constants,
        tol_mu: TOL_MU,
        points,
    })
}

/// `n` uniform momenta on `[-pmax, pmax]` (one dimension).
pub fn p_grid_1d(pmax: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| [-pmax + 2.0 * pmax * i as f64 / (n - 1).max(1) as f64, 0.0])
        .collect()
}

/// `n x n` uniform momenta on `[-pmax, pmax]^2`.
pub fn p_grid_2d(pmax: f64, n: usize) -> Vec<Point> {
    let axis = p_grid_1d(pmax, n);
    axis.iter()
        .flat_map(|b| axis.iter().map(move |a| [a[0], b[0]]))
        .collect()
}

/// Momenta `r e` for the given radii along `n_dir` uniform directions.
pub fn p_rays(radii: &[f64], n_dir: usize) -> Vec<Point> {
    (0..n_dir)
        .flat_map(|k| {
            let t = 2.0 * PI * k as f64 / n_dir as f64;
            radii.iter().map(move |r| [r * t.cos(), r * t.sin()])
        })
        .collect()
}

pub fn quartic(p: &Point) -> f64 {
    (dot(p, p) - 1.0).powi(2)
}

/// Largest violation of `(|p|^2-1)^2 - vbar <= Hbar <= (|p|^2-1)^2`.
pub fn sandwich_violation(table: &EffectiveHamiltonian) -> f64 {
    let vbar = table.constants.vbar;
    table
        .points
        .iter()
        .map(|h| {
            let q = quartic(&h.p);
            (q - vbar - h.value).max(h.value - q).max(0.0)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatReport {
    pub k1_nodes: usize,
    /// `max - min` of `Hbar` over K1 nodes.
    pub k1_spread: f64,
    /// `max |Hbar - mu*|` over K1 nodes.
    pub k1_offset: f64,
    pub k3_nodes: usize,
    /// `max |Hbar|` over K3 nodes.
    pub k3_max: f64,
}

pub fn flat_regions(table: &EffectiveHamiltonian) -> FlatReport {
    let k1: Vec<f64> = table.with_region(Region::K1).map(|h| h.value).collect();
    let k3: Vec<f64> = table.with_region(Region::K3).map(|h| h.value).collect();
    let max = k1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = k1.iter().copied().fold(f64::INFINITY, f64::min);
    FlatReport {
        k1_nodes: k1.len(),
        k1_spread: if k1.is_empty() { 0.0 } else { max - min },
        k1_offset: k1
            .iter()
            .map(|v| (v - table.constants.mu_star).abs())
            .fold(0.0, f64::max),
        k3_nodes: k3.len(),
        k3_max: k3.iter().map(|v| v.abs()).fold(0.0, f64::max),
    }
}

/// Largest `|Hbar(p) - Hbar(-p)|` over nodes whose reflection is also a node.
pub fn evenness_defect(table: &EffectiveHamiltonian) -> f64 {
    let key = |p: &Point| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
    let index: std::collections::HashMap<_, f64> =
        table.points.iter().map(|h| (key(&h.p), h.value)).collect();
    table
        .points
        .iter()
        .filter_map(|h| index.get(&key(&[-h.p[0], -h.p[1]])).map(|v| (v - h.value).abs()))
        .fold(0.0, f64::max)
}

/// Smallest `Hbar(2e) - Hbar(1.2e)` over `n_dir` directions.
pub fn coercivity_margin(provider: &dyn ShapeProvider, n_dir: usize) -> Result<f64> {
    let dirs: Vec<Point> = if provider.dimension() == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        p_rays(&[1.0], n_dir)
    };
    let mut worst = f64::INFINITY;
    for e in dirs {
        let far = hbar(&[2.0 * e[0], 2.0 * e[1]], provider)?.value;
        let near = hbar(&[1.2 * e[0], 1.2 * e[1]], provider)?.value;
        worst = worst.min(far - near);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    /// K4 nodes not beyond every K3 node along their direction.
    pub misordered: usize,
    /// Largest `|p|` over K1, K2 and K3 nodes.
    pub bounded_radius: f64,
    pub passed: bool,
}

/// Along every direction present in the table, K4 nodes lie beyond all K3
/// nodes and K1..K3 stay inside `|p|^2 <= 1 + sqrt(1 + vbar)`.
pub fn partition_check(table: &EffectiveHamiltonian) -> PartitionReport {
    let angle_key = |p: &Point| (p[1].atan2(p[0]) * 1e8).round() as i64;
    let mut k3_max: std::collections::HashMap<i64, f64> = Default::default();
    let mut bounded_radius: f64 = 0.0;
    for h in &table.points {
        let r = norm(&h.p);
        if h.region != Region::K4 {
            bounded_radius = bounded_radius.max(r);
        }
        if h.region == Region::K3 && r > 0.0 {
            let e = k3_max.entry(angle_key(&h.p)).or_insert(0.0);
            *e = e.max(r);
        }
    }
    let misordered = table
        .points
        .iter()
        .filter(|h| h.region == Region::K4)
        .filter(|h| k3_max.get(&angle_key(&h.p)).is_some_and(|&m| norm(&h.p) <= m))
        .count();
    let limit = (1.0 + (1.0 + table.constants.vbar).sqrt()).sqrt();
    PartitionReport {
        misordered,
        bounded_radius,
        passed: misordered == 0 && bounded_radius <= limit + 1e-9,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableComparison {
    pub max_value_change: f64,
    /// Label changes at nodes whose values in both tables are farther than
    /// the band from every region boundary value (`0` and `mu*`).
    pub label_changes_off_boundary: usize,
    pub label_changes: usize,
}

/// Compare two tables on the same grid (e.g. two direction counts).
pub fn compare_tables(a: &EffectiveHamiltonian, b: &EffectiveHamiltonian, band: f64) -> Result<TableComparison> {
    if a.points.len() != b.points.len() {
        return Err(Error::Mismatch("tables have different p-grids".into()));
    }
    let mu_star = a.constants.mu_star;
    let near_boundary = |v: f64| v.abs() <= band || (v - mu_star).abs() <= band;
    let mut out = TableComparison {
        max_value_change: 0.0,
        label_changes_off_boundary: 0,
        label_changes: 0,
    };
    for (x, y) in a.points.iter().zip(&b.points) {
        if x.p != y.p {
            return Err(Error::Mismatch("tables have different p-grids".into()));
        }
        out.max_value_change = out.max_value_change.max((x.value - y.value).abs());
        if x.region != y.region {
            out.label_changes += 1;
            if !near_boundary(x.value) && !near_boundary(y.value) {
                out.label_changes_off_boundary += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricStatus;
    use std::sync::Arc;

    /// Closed-form shapes for a constant potential, isotropic in every
    /// dimension.
    struct Flat {
        dim: usize,
        n_dir: usize,
    }

    impl ShapeProvider for Flat {
        fn dimension(&self) -> usize {
            self.dim
        }
        fn vbar(&self) -> f64 {
            0.0
        }
        fn shape(&self, q: &ParamPair) -> Result<Arc<ShapeFunction>> {
            if !q.is_admissible(0.0) {
                return Ok(Arc::new(ShapeFunction::neg_infinity(*q, self.dim, self.n_dir)));
            }
            let v = (1.0 + q.sigma * q.mu.sqrt()).max(0.0).sqrt();
            Ok(Arc::new(ShapeFunction::isotropic(*q, self.dim, self.n_dir, v)))
        }
    }

    /// One-dimensional shapes of `0.2 (1 - cos 2 pi x)`: the period average of
    /// `(1 + sigma sqrt(mu + V))^{1/2}` by the midpoint rule.
    struct Cosine1d;

    impl ShapeProvider for Cosine1d {
        fn dimension(&self) -> usize {
            1
        }
        fn vbar(&self) -> f64 {
            0.4
        }
        fn shape(&self, q: &ParamPair) -> Result<Arc<ShapeFunction>> {
            if !q.is_admissible(0.4) {
                return Ok(Arc::new(ShapeFunction::neg_infinity(*q, 1, 2)));
            }
            let n = 4096;
            let avg = (0..n)
                .map(|k| {
                    let x = (k as f64 + 0.5) / n as f64;
                    let v = 0.2 * (1.0 - (2.0 * PI * x).cos());
                    (1.0 + q.sigma * (q.mu + v).sqrt()).max(0.0).sqrt()
                })
                .sum::<f64>()
                / n as f64;
            Ok(Arc::new(ShapeFunction::isotropic(*q, 1, 2, avg)))
        }
    }

    #[test]
    fn constants() {
        let c = EffConstants::new(0.4).unwrap();
        assert!((c.kappa - 0.6).abs() < 1e-15 && c.sigma_star == -1.0 && c.mu_star == c.kappa);
        let d = EffConstants::new(2.25).unwrap();
        assert_eq!(d.mu_star, 0.0);
        assert!((d.sigma_star * (d.mu_star + d.vbar).sqrt() + 1.0).abs() < 1e-10);
        assert!(EffConstants::new(-1.0).is_err());
    }

    #[test]
    fn support_gap_examples() {
        let one = ShapeFunction::isotropic(ParamPair::new(0.0, 1.0).unwrap(), 2, 32, 1.0);
        assert!((support_gap(&one, &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        // Off-direction momentum: exact because the interpolant is minimized
        // in closed form.
        let t: f64 = 0.3;
        assert!(support_gap(&one, &[t.cos(), t.sin()]).abs() < 1e-14);
        let s = ShapeFunction::isotropic(ParamPair::new(0.25, -1.0).unwrap(), 2, 32, 0.5f64.sqrt());
        let g = support_gap(&s, &[0.8 * t.cos(), 0.8 * t.sin()]);
        assert!((g - (0.5f64.sqrt() - 0.8)).abs() < 1e-14);
        assert!((g + 0.0929).abs() < 1e-4);
        let inf = ShapeFunction::neg_infinity(ParamPair::new(0.0, 1.0).unwrap(), 2, 8);
        assert!(support_gap(&inf, &[0.0, 0.0]) == f64::NEG_INFINITY);
        assert_eq!(inf.status, MetricStatus::NegInfinity);
    }

    #[test]
    fn support_gap_matches_dense_sampling() {
        let mut s = ShapeFunction::isotropic(ParamPair::new(0.0, 1.0).unwrap(), 2, 8, 1.0);
        s.values = vec![1.0, 1.3, 0.9, 1.1, 1.0, 1.3, 0.9, 1.1];
        for p in [[0.4, 0.7], [-1.1, 0.2], [0.0, -0.9]] {
            let dense = (0..200_000)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / 200_000.0;
                    s.at_angle(t) - p[0] * t.cos() - p[1] * t.sin()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((support_gap(&s, &p) - dense).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_potential_values_and_regions() {
        for dim in [1, 2] {
            let f = Flat { dim, n_dir: 32 };
            let t: f64 = if dim == 1 { 0.0 } else { 1.1 };
            let at = |r: f64| [r * t.cos(), r * t.sin()];
            assert!((hbar_minus(&at(0.8), &f).unwrap() - 0.1296).abs() <= TOL_MU);
            assert_eq!(hbar_minus(&at(1.2), &f).unwrap(), f64::NEG_INFINITY);
            assert!((hbar_plus(&at(1.2), &f).unwrap() - 0.1936).abs() <= TOL_MU);
            assert_eq!(hbar_plus(&at(0.7), &f).unwrap(), 0.0);

            let h0 = hbar(&at(0.0), &f).unwrap();
            assert_eq!((h0.value, h0.region), (1.0, Region::K1));
            let h1 = hbar(&at(1.0), &f).unwrap();
            assert_eq!(h1.region, Region::K3);
            assert!(h1.value.abs() <= TOL_MU);
            assert_eq!(hbar(&at(0.8), &f).unwrap().region, Region::K2);
            assert_eq!(hbar(&at(1.5), &f).unwrap().region, Region::K4);
            assert!([h0, h1].iter().all(|h| !h.flagged));
        }
    }

    #[test]
    fn flat_table_matches_quartic() {
        let f = Flat { dim: 2, n_dir: 32 };
        let table = tabulate(&p_grid_2d(2.0, 17), &f).unwrap();
        let err = table
            .points
            .iter()
            .map(|h| (h.value - quartic(&h.p)).abs())
            .fold(0.0, f64::max);
        assert!(err <= TOL_MU, "{err}");
        assert_eq!(table.flagged(), 0);
        assert!(partition_check(&table).passed);
        assert!(evenness_defect(&table) <= TOL_MU);
        assert!(tabulate(&[], &f).unwrap().points.is_empty());
    }

    #[test]
    fn periodic_hilltop_is_kappa() {
        let h = hbar(&[0.0, 0.0], &Cosine1d).unwrap();
        assert_eq!(h.region, Region::K1);
        assert!((h.value - 0.6).abs() < 1e-12);
    }

    #[test]
    fn periodic_regions_appear_in_order() {
        let table = tabulate(&p_grid_1d(1.6, 81), &Cosine1d).unwrap();
        let positive: Vec<_> = table.points.iter().filter(|h| h.p[0] >= 0.0).collect();
        let labels: Vec<Region> = positive.iter().map(|h| h.region).collect();
        assert!(labels.windows(2).all(|w| w[0] <= w[1]), "{labels:?}");
        for r in [Region::K1, Region::K2, Region::K3, Region::K4] {
            assert!(labels.contains(&r), "missing {r:?}");
        }
        assert!(sandwich_violation(&table) <= TOL_MU);
        let flat = flat_regions(&table);
        assert!(flat.k1_spread <= 1e-12 && flat.k1_offset <= 1e-12 && flat.k3_max <= TOL_MU);
        assert!(coercivity_margin(&Cosine1d, 0).unwrap() > 0.0);
        assert_eq!(table.flagged(), 0);
    }

    #[test]
    fn periodic_matches_independent_bisection() {
        // Oracle: plain bisection on the period average, written independently
        // of the path walk.
        let avg = |mu: f64, sigma: f64| Cosine1d.shape(&ParamPair { mu, sigma }).unwrap().values[0];
        let oracle = |p: f64| -> f64 {
            if avg(0.0, -1.0) >= p {
                if avg(0.6, -1.0) >= p {
                    return 0.6;
                }
                let (mut a, mut b) = (0.0, 0.6);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if avg(m, -1.0) >= p { a = m } else { b = m }
                }
                a
            } else {
                let (mut a, mut b) = (0.0, 50.0);
                if avg(0.0, 1.0) >= p {
                    return 0.0;
                }
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if avg(m, 1.0) >= p { b = m } else { a = m }
                }
                b
            }
        };
        for p in [0.3, 0.7, 0.85, 0.95, 1.1, 1.4, 2.0] {
            let h = hbar(&[p, 0.0], &Cosine1d).unwrap();
            assert!((h.value - oracle(p)).abs() <= TOL_MU, "p {p}: {} vs {}", h.value, oracle(p));
            let q = (p * p - 1.0f64).powi(2);
            assert!(h.value >= q - 0.4 - TOL_MU && h.value <= q + TOL_MU);
        }
    }

    #[test]
    fn table_comparison() {
        let a = tabulate(&p_grid_1d(2.0, 9), &Flat { dim: 1, n_dir: 2 }).unwrap();
        let c = compare_tables(&a, &a, 0.02).unwrap();
        assert_eq!((c.max_value_change, c.label_changes), (0.0, 0));
        let b = tabulate(&p_grid_1d(2.0, 7), &Flat { dim: 1, n_dir: 2 }).unwrap();
        assert!(compare_tables(&a, &b, 0.02).is_err());
    }
}
