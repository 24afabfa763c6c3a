//! Uniform Cartesian grids in one or two dimensions.
//!
//! Nodes sit at `x_i = -R + i*h` along every axis. A non-periodic grid has
//! `2R/h + 1` nodes per axis and includes both box faces; a periodic grid has
//! `2R/h` nodes and identifies `-R` with `R`. Node indices are row-major with
//! the first axis fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the plane. One-dimensional quantities keep the second
/// coordinate at zero.
pub type Point = [f64; 2];

pub fn norm(p: &Point) -> f64 {
    p[0].hypot(p[1])
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub spacing: f64,
    pub half_extent: f64,
    pub periodic: bool,
    /// Node count per axis.
    pub n: usize,
}

impl Grid {
    pub fn new(dim: usize, spacing: f64, half_extent: f64, periodic: bool) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::NonPositiveSpacing(spacing));
        }
        if !(half_extent > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half-extent must be positive, got {half_extent}"
            )));
        }
        let cells = 2.0 * half_extent / spacing;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * cells.max(1.0) || rounded < 1.0 {
            return Err(Error::InvalidGrid(format!(
                "spacing {spacing} does not divide 2R = {}",
                2.0 * half_extent
            )));
        }
        let cells = rounded as usize;
        let n = if periodic { cells } else { cells + 1 };
        Ok(Self {
            dim,
            spacing,
            half_extent,
            periodic,
            n,
        })
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_extent + i as f64 * self.spacing
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n * j
    }

    /// Per-axis indices of node `idx`.
    pub fn axes(&self, idx: usize) -> (usize, usize) {
        if self.dim == 1 {
            (idx, 0)
        } else {
            (idx % self.n, idx / self.n)
        }
    }

    pub fn point(&self, idx: usize) -> Point {
        let (i, j) = self.axes(idx);
        if self.dim == 1 {
            [self.coord(i), 0.0]
        } else {
            [self.coord(i), self.coord(j)]
        }
    }

    /// Node closest to `p`, or `None` when `p` lies outside a non-periodic box.
    pub fn nearest_node(&self, p: &Point) -> Option<usize> {
        let axis = |x: f64| -> Option<usize> {
            let t = ((x + self.half_extent) / self.spacing).round();
            if self.periodic {
                Some(t.rem_euclid(self.n as f64) as usize)
            } else if t < 0.0 || t > (self.n - 1) as f64 {
                None
            } else {
                Some(t as usize)
            }
        };
        let i = axis(p[0])?;
        let j = if self.dim == 2 { axis(p[1])? } else { 0 };
        Some(self.index(i, j))
    }

    /// Distance from `p` to the nearest face of a non-periodic box
    /// (infinite for periodic grids).
    pub fn distance_to_boundary(&self, p: &Point) -> f64 {
        if self.periodic {
            return f64::INFINITY;
        }
        let r = self.half_extent;
        let mut d = r - p[0].abs();
        if self.dim == 2 {
            d = d.min(r - p[1].abs());
        }
        d
    }

    /// Multilinear interpolation of node values. Points outside a
    /// non-periodic box are clamped onto it; periodic grids wrap.
    pub fn interpolate(&self, values: &[f64], p: &Point) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let locate = |x: f64| -> (usize, usize, f64) {
            let t = (x + self.half_extent) / self.spacing;
            if self.periodic {
                let n = self.n as f64;
                let t = t.rem_euclid(n);
                let i0 = (t.floor() as usize).min(self.n - 1);
                let w = t - i0 as f64;
                (i0, (i0 + 1) % self.n, w)
            } else {
                let max = (self.n - 1) as f64;
                let t = t.clamp(0.0, max);
                let i0 = (t.floor() as usize).min(self.n.saturating_sub(2));
                let w = t - i0 as f64;
                (i0, (i0 + 1).min(self.n - 1), w)
            }
        };
        let (i0, i1, wx) = locate(p[0]);
        if self.dim == 1 {
            return values[i0] * (1.0 - wx) + values[i1] * wx;
        }
        let (j0, j1, wy) = locate(p[1]);
        let v00 = values[self.index(i0, j0)];
        let v10 = values[self.index(i1, j0)];
        let v01 = values[self.index(i0, j1)];
        let v11 = values[self.index(i1, j1)];
        (v00 * (1.0 - wx) + v10 * wx) * (1.0 - wy) + (v01 * (1.0 - wx) + v11 * wx) * wy
    }

    /// Axis neighbours of a node: `(axis, neighbour, offset sign)`.
    /// Non-periodic grids omit neighbours beyond the box.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        let (i, j) = self.axes(idx);
        let n = self.n;
        let periodic = self.periodic;
        let step = move |k: usize, s: i8| -> Option<usize> {
            match (s, periodic) {
                (-1, true) => Some((k + n - 1) % n),
                (1, true) => Some((k + 1) % n),
                (-1, false) => k.checked_sub(1),
                (_, _) => (k + 1 < n).then_some(k + 1),
            }
        };
        let dim = self.dim;
        (0..dim).flat_map(move |axis| {
            [-1i8, 1].into_iter().filter_map(move |s| {
                if axis == 0 {
                    step(i, s).map(|ii| (0, self.index(ii, j), s))
                } else {
                    step(j, s).map(|jj| (1, self.index(i, jj), s))
                }
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts() {
        let g = Grid::new(1, 0.25, 1.0, false).unwrap();
        assert_eq!(g.n, 9);
        assert_eq!(g.coord(0), -1.0);
        assert_eq!(g.coord(8), 1.0);
        let p = Grid::new(2, 0.25, 1.0, true).unwrap();
        assert_eq!(p.n, 8);
        assert_eq!(p.len(), 64);
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(matches!(
            Grid::new(1, 0.0, 1.0, false),
            Err(Error::NonPositiveSpacing(_))
        ));
        assert!(matches!(
            Grid::new(1, 0.3, 1.0, false),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            Grid::new(3, 0.5, 1.0, false),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn interpolation_is_exact_on_affine_data() {
        let g = Grid::new(2, 0.5, 2.0, false).unwrap();
        let vals: Vec<f64> = (0..g.len())
            .map(|k| {
                let p = g.point(k);
                1.0 + 2.0 * p[0] - 3.0 * p[1]
            })
            .collect();
        let q = [0.3, -1.1];
        assert!((g.interpolate(&vals, &q) - (1.0 + 0.6 + 3.3)).abs() < 1e-12);
    }

    #[test]
    fn periodic_neighbors_wrap() {
        let g = Grid::new(1, 0.5, 1.0, true).unwrap();
        let nb: Vec<_> = g.neighbors(0).collect();
        assert_eq!(nb, vec![(0, 3, -1), (0, 1, 1)]);
    }

    #[test]
    fn nearest_node_round_trips() {
        let g = Grid::new(2, 0.125, 1.0, false).unwrap();
        for k in [0, 17, 200, g.len() - 1] {
            assert_eq!(g.nearest_node(&g.point(k)), Some(k));
        }
        assert_eq!(g.nearest_node(&[1.5, 0.0]), None);
    }
}
