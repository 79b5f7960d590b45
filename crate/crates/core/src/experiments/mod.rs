//! Experiment drivers: the XOR toy run, the smoothness comparison and the
//! MNIST run. Each writes its figure data under the configured output
//! directory, with file names prefixed by `<name>_s<seed>_`.

pub mod contour;
pub mod grid;
pub mod mnist;
pub mod report;
pub mod smoothness;
pub mod toy;
pub mod train;

pub use contour::{boundary_extract, Polyline};
pub use grid::{GridField, GridSpec};
pub use mnist::{load_mnist_dir, resolve_mnist_dir, run_mnist, run_mnist_on, MNIST_DIR_ENV};
pub use report::RunReport;
pub use smoothness::{smoothness_analysis, smoothness_fields};
pub use toy::run_toy;
pub use train::{accuracy, train, EpochRecord, OptimizerKind, TrainHistory, TrainSettings};

use crate::afu::Afu;
use crate::config::OutputGrid;
use crate::error::Result;

/// The `z` of the smallest sampled value; the first one on ties.
pub fn curve_argmin(points: &[(f64, f64)]) -> Option<f64> {
    points
        .iter()
        .fold(None, |best: Option<(f64, f64)>, &(z, g)| match best {
            Some((_, bg)) if bg <= g => best,
            _ => Some((z, g)),
        })
        .map(|(z, _)| z)
}

/// True when the samples never decrease or never increase.
pub fn curve_is_monotone(points: &[(f64, f64)]) -> bool {
    let up = points.windows(2).all(|w| w[1].1 >= w[0].1);
    let down = points.windows(2).all(|w| w[1].1 <= w[0].1);
    up || down
}

pub(crate) fn afu_curve(afu: &Afu, grid: &OutputGrid) -> Result<Vec<(f64, f64)>> {
    afu.sample(grid.curve_min, grid.curve_max, grid.curve_points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_and_monotonicity() {
        let bowl: Vec<(f64, f64)> = (-5..=5)
            .map(|z| (z as f64, (z as f64 - 1.0).powi(2)))
            .collect();
        assert_eq!(curve_argmin(&bowl), Some(1.0));
        assert!(!curve_is_monotone(&bowl));
        let line: Vec<(f64, f64)> = (0..5).map(|z| (z as f64, 2.0)).collect();
        assert!(curve_is_monotone(&line));
        assert_eq!(curve_argmin(&line), Some(0.0));
        assert_eq!(curve_argmin(&[]), None);
    }
}
