//! Regular 2-D sample grids and scalar fields over them.

use std::fmt::Write as _;

use crate::afu::linspace_at;
use crate::error::{Error, Result};

/// A `resolution x resolution` lattice over `[x_min, x_max] x [y_min, y_max]`.
/// Row `i` follows the second coordinate, column `j` the first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: usize,
}

impl GridSpec {
    pub fn new(x: (f64, f64), y: (f64, f64), resolution: usize) -> Result<Self> {
        for (lo, hi) in [x, y] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Range { min: lo, max: hi });
            }
        }
        if resolution < 2 {
            return Err(Error::TooFewPoints {
                min: 2,
                got: resolution,
            });
        }
        Ok(Self {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            resolution,
        })
    }

    pub fn square(min: f64, max: f64, resolution: usize) -> Result<Self> {
        Self::new((min, max), (min, max), resolution)
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, j: usize) -> f64 {
        linspace_at(self.x_min, self.x_max, self.resolution, j)
    }

    pub fn y(&self, i: usize) -> f64 {
        linspace_at(self.y_min, self.y_max, self.resolution, i)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.resolution - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.resolution - 1) as f64
    }

    /// `(i, j, x0, x1)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        let r = self.resolution;
        (0..r).flat_map(move |i| (0..r).map(move |j| (i, j, self.x(j), self.y(i))))
    }

    /// Flattened `x0, x1` pairs in row-major order.
    pub fn points(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len());
        for (_, _, x0, x1) in self.iter() {
            out.push(x0);
            out.push(x1);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape {
                op: "grid field",
                left: vec![values.len()],
                right: vec![spec.resolution, spec.resolution],
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("grid field".into()));
        }
        Ok(Self { spec, values })
    }

    /// Sample `f(x0, x1)` at every grid point.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = spec.iter().map(|(_, _, x0, x1)| f(x0, x1)).collect();
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.resolution + j]
    }

    /// Mean absolute 5-point Laplacian over interior points.
    ///
    /// Second differences within a few ulps of the field's largest magnitude
    /// are rounding noise and count as zero, so affine fields score exactly 0.
    pub fn roughness(&self) -> f64 {
        let r = self.spec.resolution;
        if r < 3 {
            return 0.0;
        }
        let (hx2, hy2) = (self.spec.dx().powi(2), self.spec.dy().powi(2));
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let noise = 64.0 * f64::EPSILON * scale;
        let second = |a: f64, c: f64, b: f64| {
            let d = a + b - 2.0 * c;
            if d.abs() <= noise {
                0.0
            } else {
                d
            }
        };
        let mut total = 0.0;
        for i in 1..r - 1 {
            for j in 1..r - 1 {
                let c = self.at(i, j);
                let lx = second(self.at(i, j - 1), c, self.at(i, j + 1)) / hx2;
                let ly = second(self.at(i - 1, j), c, self.at(i + 1, j)) / hy2;
                total += (lx + ly).abs();
            }
        }
        total / ((r - 2) * (r - 2)) as f64
    }

    /// CSV with header `x0,x1,score`, row-major.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x0,x1,score\n");
        for ((_, _, x0, x1), v) in self.spec.iter().zip(&self.values) {
            let _ = writeln!(out, "{x0},{x1},{v}");
        }
        out
    }
}
