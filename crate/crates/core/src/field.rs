//! Random potential ensembles and their sampled realizations.
//!
//! An [`EnsembleSpec`] names a stationary, ergodic law for the potential `V`.
//! Realizations are generated constructively: shifted periodic profiles draw a
//! uniform shift over one period, Poisson bump fields draw an independent
//! Poisson count per unit lattice cell. Every draw comes from a stream keyed
//! by `(seed, purpose, realization index)`, so realizations are reproducible
//! and independent of the window they are materialized on.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::rng;

/// Closed-form periodic profiles on the unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Profile {
    /// `a (1 - cos 2πx)` in one dimension and
    /// `a/2 (2 - cos 2πx - cos 2πy)` in two. Range `[0, 2a]`, mean `a`.
    Cosine { amplitude: f64 },
}

impl Profile {
    /// Value at a point given in units of the period.
    pub fn eval(&self, dim: usize, x: &Point) -> f64 {
        match *self {
            Profile::Cosine { amplitude } => {
                if dim == 1 {
                    amplitude * (1.0 - (2.0 * PI * x[0]).cos())
                } else {
                    0.5 * amplitude
                        * (2.0 - (2.0 * PI * x[0]).cos() - (2.0 * PI * x[1]).cos())
                }
            }
        }
    }

    pub fn min(&self) -> f64 {
        0.0
    }

    pub fn max(&self) -> f64 {
        match *self {
            Profile::Cosine { amplitude } => 2.0 * amplitude,
        }
    }

    /// Average over one period.
    pub fn mean(&self) -> f64 {
        match *self {
            Profile::Cosine { amplitude } => amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnsembleKind {
    Constant {
        level: f64,
    },
    ShiftedPeriodic {
        profile: Profile,
        period: f64,
    },
    /// Poisson centres with `intensity` points per unit volume, each carrying
    /// the bump `height (1 - (r/radius)^2)^2`; overlapping stacks are clipped
    /// at the ensemble bound.
    PoissonBumps {
        intensity: f64,
        radius: f64,
        height: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub dimension: usize,
    /// Uniform sup-norm bound `K0`.
    pub bound: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn constant(dimension: usize, level: f64) -> Self {
        Self {
            kind: EnsembleKind::Constant { level },
            dimension,
            bound: level.abs(),
            seed: 0,
        }
    }

    pub fn cosine(dimension: usize, amplitude: f64, period: f64, seed: u64) -> Self {
        Self {
            kind: EnsembleKind::ShiftedPeriodic {
                profile: Profile::Cosine { amplitude },
                period,
            },
            dimension,
            bound: 2.0 * amplitude,
            seed,
        }
    }

    pub fn bumps(dimension: usize, intensity: f64, radius: f64, height: f64, seed: u64) -> Self {
        Self {
            kind: EnsembleKind::PoissonBumps {
                intensity,
                radius,
                height,
            },
            dimension,
            bound: height,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::UnsupportedDimension(self.dimension));
        }
        if !(self.bound >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bound K0 must be nonnegative, got {}",
                self.bound
            )));
        }
        match &self.kind {
            EnsembleKind::Constant { level } => {
                if level.abs() > self.bound {
                    return Err(Error::InvalidArgument(format!(
                        "constant level {level} exceeds bound {}",
                        self.bound
                    )));
                }
            }
            EnsembleKind::ShiftedPeriodic { profile, period } => {
                if !(*period > 0.0) {
                    return Err(Error::InvalidArgument("period must be positive".into()));
                }
                let Profile::Cosine { amplitude } = profile;
                if *amplitude < 0.0 || profile.max() > self.bound + 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "profile range [0, {}] exceeds bound {}",
                        profile.max(),
                        self.bound
                    )));
                }
            }
            EnsembleKind::PoissonBumps {
                intensity,
                radius,
                height,
            } => {
                if *intensity < 0.0 || !(*radius > 0.0) || *height < 0.0 {
                    return Err(Error::InvalidArgument(
                        "bump ensemble needs intensity >= 0, radius > 0, height >= 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Almost-sure essential infimum and supremum of the law.
    ///
    /// For Poisson bumps with positive intensity arbitrarily deep overlaps
    /// occur somewhere, so the clipped supremum is `min(K0, stack)`, which
    /// equals `K0` whenever a single bump or a finite stack reaches it.
    pub fn essential_bounds(&self) -> (f64, f64) {
        match &self.kind {
            EnsembleKind::Constant { level } => (*level, *level),
            EnsembleKind::ShiftedPeriodic { profile, .. } => (profile.min(), profile.max()),
            EnsembleKind::PoissonBumps {
                intensity, height, ..
            } => {
                if *intensity == 0.0 || *height == 0.0 {
                    (0.0, 0.0)
                } else {
                    (0.0, self.bound)
                }
            }
        }
    }

    /// Natural length scale: period, bump diameter, or 1 for constants.
    pub fn correlation_length(&self) -> f64 {
        match &self.kind {
            EnsembleKind::Constant { .. } => 1.0,
            EnsembleKind::ShiftedPeriodic { period, .. } => *period,
            EnsembleKind::PoissonBumps { radius, .. } => 2.0 * radius,
        }
    }

    /// Materialize realization `index` on the window `[-window, window]^d`.
    pub fn realization(&self, index: u64, window: f64) -> Result<Realization> {
        self.validate()?;
        let dim = self.dimension;
        Ok(match &self.kind {
            EnsembleKind::Constant { level } => Realization::Constant { level: *level },
            EnsembleKind::ShiftedPeriodic { profile, period } => {
                let mut r = rng::stream(self.seed, "periodic-shift", index);
                let mut shift = [0.0; 2];
                for s in shift.iter_mut().take(dim) {
                    *s = r.random::<f64>() * period;
                }
                Realization::Periodic {
                    dim,
                    profile: *profile,
                    period: *period,
                    shift,
                }
            }
            EnsembleKind::PoissonBumps {
                intensity,
                radius,
                height,
            } => Realization::Bumps(BumpField::generate(
                self.seed, index, dim, *intensity, *radius, *height, self.bound, window,
            )),
        })
    }
}

/// One draw of the potential, evaluable anywhere.
#[derive(Debug, Clone)]
pub enum Realization {
    Constant {
        level: f64,
    },
    Periodic {
        dim: usize,
        profile: Profile,
        period: f64,
        shift: Point,
    },
    Bumps(BumpField),
}

impl Realization {
    /// A periodic realization with an explicit shift.
    pub fn periodic(dim: usize, profile: Profile, period: f64, shift: Point) -> Self {
        Realization::Periodic {
            dim,
            profile,
            period,
            shift,
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Realization::Constant { level } => *level,
            Realization::Periodic {
                dim,
                profile,
                period,
                shift,
            } => {
                let y = [(x[0] + shift[0]) / period, (x[1] + shift[1]) / period];
                profile.eval(*dim, &y)
            }
            Realization::Bumps(b) => b.eval(x),
        }
    }
}

/// Poisson bump field materialized on a window. Centres are drawn per unit
/// lattice cell so the same realization index gives the same bumps on any
/// window that covers them.
#[derive(Debug, Clone)]
pub struct BumpField {
    dim: usize,
    radius: f64,
    height: f64,
    clip: f64,
    window: f64,
    centers: Vec<Point>,
    bins: HashMap<(i64, i64), Vec<usize>>,
}

impl BumpField {
    #[allow(clippy::too_many_arguments)]
    fn generate(
        seed: u64,
        index: u64,
        dim: usize,
        intensity: f64,
        radius: f64,
        height: f64,
        clip: f64,
        window: f64,
    ) -> Self {
        let reach = window + radius;
        let lo = (-reach).floor() as i64;
        let hi = reach.ceil() as i64;
        let poisson = (intensity > 0.0).then(|| Poisson::new(intensity).expect("intensity > 0"));
        let mut centers = Vec::new();
        let mut bins: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let jrange = if dim == 2 { lo..hi } else { 0..1 };
        for j in jrange {
            for i in lo..hi {
                let Some(dist) = &poisson else { continue };
                let mut r = rng::cell_stream(seed, "poisson-bumps", index, (i, j));
                let count = dist.sample(&mut r) as usize;
                for _ in 0..count {
                    let x = i as f64 + r.random::<f64>();
                    let y = if dim == 2 { j as f64 + r.random::<f64>() } else { 0.0 };
                    bins.entry((i, j)).or_default().push(centers.len());
                    centers.push([x, y]);
                }
            }
        }
        Self {
            dim,
            radius,
            height,
            clip,
            window,
            centers,
            bins,
        }
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let w = self.window;
        let p = [x[0].clamp(-w, w), if self.dim == 2 { x[1].clamp(-w, w) } else { 0.0 }];
        let reach = self.radius.ceil() as i64;
        let (ci, cj) = (p[0].floor() as i64, p[1].floor() as i64);
        let r2 = self.radius * self.radius;
        let mut total = 0.0;
        let jr = if self.dim == 2 { cj - reach..=cj + reach } else { 0..=0 };
        for j in jr {
            for i in ci - reach..=ci + reach {
                let Some(ids) = self.bins.get(&(i, j)) else { continue };
                for &k in ids {
                    let c = &self.centers[k];
                    let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                    if d2 < r2 {
                        let t = 1.0 - d2 / r2;
                        total += self.height * t * t;
                    }
                }
            }
        }
        total.min(self.clip)
    }
}

/// A realization sampled on grid nodes, with its recorded extrema.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Estimated essential supremum; after normalization this is `sup - inf`.
    pub vbar: f64,
    /// Estimated essential infimum before normalization.
    pub vlow: f64,
    pub normalized: bool,
    offset: f64,
    source: Option<Arc<Realization>>,
}

impl PotentialField {
    /// Field known only through its node values.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let (lo, hi) = extrema(&values);
        Ok(Self {
            grid,
            values,
            vbar: hi,
            vlow: lo,
            normalized: false,
            offset: 0.0,
            source: None,
        })
    }

    pub fn from_realization(realization: Arc<Realization>, grid: Grid) -> Self {
        let values: Vec<f64> = (0..grid.len()).map(|k| realization.eval(&grid.point(k))).collect();
        let (lo, hi) = extrema(&values);
        Self {
            grid,
            values,
            vbar: hi,
            vlow: lo,
            normalized: false,
            offset: 0.0,
            source: Some(realization),
        }
    }

    pub fn realization(&self) -> Option<&Arc<Realization>> {
        self.source.as_ref()
    }

    /// Value anywhere: the underlying realization when known (shifted by the
    /// normalization offset), multilinear interpolation otherwise.
    pub fn eval(&self, x: &Point) -> f64 {
        match &self.source {
            Some(r) => r.eval(x) - self.offset,
            None => self.grid.interpolate(&self.values, x),
        }
    }

    pub fn min(&self) -> f64 {
        extrema(&self.values).0
    }

    pub fn max(&self) -> f64 {
        extrema(&self.values).1
    }
}

fn extrema(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Sample realization 0 of `spec` on `grid`.
pub fn sample_potential(spec: &EnsembleSpec, grid: &Grid) -> Result<PotentialField> {
    sample_realization(spec, 0, grid)
}

/// Sample realization `index` of `spec` on `grid`.
pub fn sample_realization(spec: &EnsembleSpec, index: u64, grid: &Grid) -> Result<PotentialField> {
    if grid.dim != spec.dimension {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension,
            got: grid.dim,
        });
    }
    let r = spec.realization(index, grid.half_extent)?;
    Ok(PotentialField::from_realization(Arc::new(r), *grid))
}

/// Shift so the grid minimum is zero. Idempotent.
pub fn normalize(field: &PotentialField) -> PotentialField {
    if field.normalized {
        return field.clone();
    }
    let (lo, hi) = extrema(&field.values);
    PotentialField {
        grid: field.grid,
        values: field.values.iter().map(|v| v - lo).collect(),
        vbar: hi - lo,
        vlow: lo,
        normalized: true,
        offset: field.offset + lo,
        source: field.source.clone(),
    }
}

/// Sampled extrema over nested boxes for one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsEstimate {
    pub radius: f64,
    /// Minimum over realizations of the box minimum.
    pub vlow: f64,
    /// Maximum over realizations of the box maximum.
    pub vbar: f64,
    pub vlow_mean: f64,
    pub vbar_mean: f64,
    /// `(min, max)` per realization.
    pub per_realization: Vec<(f64, f64)>,
}

/// Estimate essential inf/sup as grid extrema over boxes of growing radius.
///
/// All radii share one grid spacing and the boxes are nested, so per
/// realization the minimum is nonincreasing and the maximum nondecreasing.
pub fn estimate_bounds(
    spec: &EnsembleSpec,
    box_radii: &[f64],
    samples: usize,
    spacing: f64,
) -> Result<Vec<BoundsEstimate>> {
    if samples == 0 {
        return Err(Error::ZeroSamples);
    }
    if box_radii.is_empty() || box_radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("radii must be nonempty and increasing".into()));
    }
    let r_max = *box_radii.last().unwrap();
    let big = Grid::new(spec.dimension, spacing, r_max, false)?;
    let dim = spec.dimension;
    let mut per: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(samples); box_radii.len()];
    for s in 0..samples {
        let field = sample_realization(spec, s as u64, &big)?;
        for (k, &radius) in box_radii.iter().enumerate() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (idx, &v) in field.values.iter().enumerate() {
                let p = field.grid.point(idx);
                let inside = p[0].abs() <= radius + 1e-12
                    && (dim == 1 || p[1].abs() <= radius + 1e-12);
                if inside {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            per[k].push((lo, hi));
        }
    }
    Ok(box_radii
        .iter()
        .zip(per)
        .map(|(&radius, per_realization)| {
            let n = per_realization.len() as f64;
            BoundsEstimate {
                radius,
                vlow: per_realization.iter().map(|x| x.0).fold(f64::INFINITY, f64::min),
                vbar: per_realization.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max),
                vlow_mean: per_realization.iter().map(|x| x.0).sum::<f64>() / n,
                vbar_mean: per_realization.iter().map(|x| x.1).sum::<f64>() / n,
                per_realization,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cosine_1d() -> EnsembleSpec {
        EnsembleSpec::cosine(1, 0.2, 1.0, 11)
    }

    #[test]
    fn constant_zero_field() {
        let g = Grid::new(2, 0.25, 2.0, false).unwrap();
        let f = sample_potential(&EnsembleSpec::constant(2, 0.0), &g).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert_eq!(normalize(&f).vbar, 0.0);
    }

    #[test]
    fn periodic_extrema_within_node_sampling_error() {
        let h = 1.0 / 64.0;
        let g = Grid::new(1, h, 4.0, false).unwrap();
        let f = normalize(&sample_potential(&cosine_1d(), &g).unwrap());
        // Extrema are quadratic, so node sampling misses them by at most
        // 0.2 * (2π)^2 / 2 * (h/2)^2.
        let slack = 0.2 * (2.0 * PI).powi(2) / 2.0 * (h / 2.0).powi(2);
        assert_eq!(f.min(), 0.0);
        assert!((f.max() - 0.4).abs() <= 2.0 * slack, "max {}", f.max());
        assert!((f.vbar - 0.4).abs() <= 2.0 * slack);
        assert!(f.vlow >= 0.0 && f.vlow <= slack);
    }

    #[test]
    fn empty_point_process_gives_zero_field() {
        let g = Grid::new(2, 0.25, 3.0, false).unwrap();
        let f = sample_potential(&EnsembleSpec::bumps(2, 0.0, 0.5, 0.5, 3), &g).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_examples() {
        let g = Grid::new(1, 1.0, 1.0, false).unwrap();
        let f = PotentialField::from_values(g, vec![3.0, 3.0, 3.0]).unwrap();
        let n = normalize(&f);
        assert_eq!(n.values, vec![0.0; 3]);
        assert_eq!(n.vbar, 0.0);

        let f = PotentialField::from_values(g, vec![1.0, 2.0, 5.0]).unwrap();
        let n = normalize(&f);
        assert_eq!(n.values, vec![0.0, 1.0, 4.0]);
        assert_eq!(n.vbar, 4.0);
        assert_eq!(n.vlow, 1.0);
        assert!(n.normalized);
        let nn = normalize(&n);
        assert_eq!(nn.values, n.values);
        assert_eq!(nn.vbar, n.vbar);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = Grid::new(2, 0.5, 1.0, false).unwrap();
        assert!(matches!(
            sample_potential(&cosine_1d(), &g),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn estimate_bounds_constant_and_periodic() {
        let est = estimate_bounds(&EnsembleSpec::constant(1, 0.7), &[1.0, 2.0], 3, 0.125).unwrap();
        for e in &est {
            assert_eq!((e.vlow, e.vbar), (0.7, 0.7));
        }
        let est = estimate_bounds(&cosine_1d(), &[1.0, 2.0, 4.0], 5, 1.0 / 64.0).unwrap();
        for e in &est {
            assert!(e.vlow < 1e-3 && (e.vbar - 0.4).abs() < 1e-3, "{e:?}");
        }
        assert!(matches!(
            estimate_bounds(&cosine_1d(), &[1.0], 0, 0.1),
            Err(Error::ZeroSamples)
        ));
    }

    #[test]
    fn bump_bounds_widen_and_plateau() {
        let spec = EnsembleSpec::bumps(2, 0.3, 0.5, 0.5, 5);
        let radii = [1.0, 2.0, 4.0, 8.0];
        let est = estimate_bounds(&spec, &radii, 4, 1.0 / 16.0).unwrap();
        for s in 0..4 {
            for w in est.windows(2) {
                assert!(w[1].per_realization[s].0 <= w[0].per_realization[s].0);
                assert!(w[1].per_realization[s].1 >= w[0].per_realization[s].1);
            }
        }
        // Bump height equals K0, so the plateau is K0 up to node sampling of
        // the peak: (1 - (h/r)^2/2)^2 at worst, roughly a 1.6% deficit here.
        let top = est.last().unwrap();
        assert!(top.vbar <= 0.5 && top.vbar > 0.49, "{top:?}");
        assert_eq!(top.vlow, 0.0);
    }

    #[test]
    fn realizations_respect_bound() {
        let spec = EnsembleSpec::bumps(2, 2.0, 0.6, 0.4, 9);
        let spec = EnsembleSpec { bound: 0.5, ..spec };
        let g = Grid::new(2, 0.1, 3.0, false).unwrap();
        for s in 0..3 {
            let f = sample_realization(&spec, s, &g).unwrap();
            assert!(f.values.iter().all(|v| v.abs() <= 0.5));
            // Dense overlaps must reach the clip somewhere.
            assert!(f.max() == 0.5);
        }
    }

    #[test]
    fn window_independence_of_bumps() {
        let spec = EnsembleSpec::bumps(2, 0.5, 0.5, 0.5, 21);
        let small = spec.realization(3, 2.0).unwrap();
        let large = spec.realization(3, 6.0).unwrap();
        for p in [[0.1, 0.2], [-1.7, 1.3], [1.99, -0.4]] {
            assert_eq!(small.eval(&p), large.eval(&p));
        }
    }

    #[test]
    fn deterministic_fields() {
        let spec = EnsembleSpec::bumps(2, 0.4, 0.5, 0.5, 77);
        let g = Grid::new(2, 0.125, 2.0, false).unwrap();
        let a = sample_potential(&spec, &g).unwrap();
        let b = sample_potential(&spec, &g).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn shift_distribution_matches_period_average() {
        let mut values = Vec::new();
        for seed in 0..2000u64 {
            let r = cosine_1d().with_seed(seed).realization(0, 1.0).unwrap();
            values.push(r.eval(&[0.0, 0.0]));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 0.2).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn validate_rejects_profiles_above_bound() {
        let mut spec = cosine_1d();
        spec.bound = 0.3;
        assert!(spec.validate().is_err());
        let spec = EnsembleSpec::constant(3, 0.0);
        assert!(matches!(spec.validate(), Err(Error::UnsupportedDimension(3))));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(vals in proptest::collection::vec(-5.0f64..5.0, 5)) {
            let g = Grid::new(1, 0.5, 1.0, false).unwrap();
            let f = PotentialField::from_values(g, vals).unwrap();
            let once = normalize(&f);
            let twice = normalize(&once);
            prop_assert_eq!(&once.values, &twice.values);
            prop_assert_eq!(once.vbar, twice.vbar);
            prop_assert!(once.min() == 0.0);
        }

        #[test]
        fn periodic_fields_bounded(seed in 0u64..500, x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let spec = EnsembleSpec::cosine(2, 0.25, 1.0, seed);
            let r = spec.realization(0, 10.0).unwrap();
            let v = r.eval(&[x, y]);
            prop_assert!(v.abs() <= spec.bound + 1e-12);
        }
    }
}
