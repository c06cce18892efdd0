//! Gaussian kernel density estimate on a uniform grid.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::Scalar;

pub const DEFAULT_BANDWIDTH: f64 = 0.6;
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Evaluation grid: `points` abscissae spanning `range`, or
/// `[min - 4h, max + 4h]` when no range is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeGrid {
    pub points: usize,
    pub range: Option<(f64, f64)>,
}

impl Default for KdeGrid {
    fn default() -> Self {
        Self { points: DEFAULT_GRID_POINTS, range: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve<T> {
    pub grid: Vec<T>,
    pub density: Vec<T>,
    pub bandwidth: T,
}

/// `f(x) = 1/(n h) * sum phi((x - v_i) / h)`.
pub fn kde_at<T: Scalar>(values: &[T], bandwidth: T, x: T) -> T {
    let norm = T::one() / (T::of_usize(values.len()) * bandwidth * (T::of(2.0) * T::PI()).sqrt());
    let half = T::of(0.5);
    values
        .iter()
        .map(|&v| {
            let z = (x - v) / bandwidth;
            (-half * z * z).exp()
        })
        .sum::<T>()
        * norm
}

pub fn kde<T: Scalar>(values: &[T], bandwidth: T, grid: &KdeGrid) -> Result<KdeCurve<T>, MetricsError> {
    if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
        return Err(MetricsError::Bandwidth(bandwidth.as_f64()));
    }
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    if grid.points < 2 {
        return Err(MetricsError::Domain(format!("KDE grid needs at least 2 points, got {}", grid.points)));
    }
    let (lo, hi) = match grid.range {
        Some((lo, hi)) if lo < hi => (T::of(lo), T::of(hi)),
        Some((lo, hi)) => return Err(MetricsError::Domain(format!("empty KDE range [{lo}, {hi}]"))),
        None => {
            let min = values.iter().copied().fold(T::infinity(), T::min);
            let max = values.iter().copied().fold(T::neg_infinity(), T::max);
            let pad = T::of(4.0) * bandwidth;
            (min - pad, max + pad)
        }
    };
    let step = (hi - lo) / T::of_usize(grid.points - 1);
    let xs: Vec<T> = (0..grid.points).map(|i| if i + 1 == grid.points { hi } else { lo + step * T::of_usize(i) }).collect();
    let density = xs.iter().map(|&x| kde_at(values, bandwidth, x)).collect();
    Ok(KdeCurve { grid: xs, density, bandwidth })
}

/// Trapezoidal integral of `y` over `x`.
pub fn trapezoid<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| (xw[1] - xw[0]) * (yw[0] + yw[1]) * T::of(0.5)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_point_peak() {
        let peak = 1.0 / (0.6 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((kde_at(&[0.8], 0.6, 0.8) - peak).abs() < 1e-12);
        assert!((peak - 0.664_90).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_bandwidth() {
        assert_eq!(kde(&[0.5], 0.0, &KdeGrid::default()), Err(MetricsError::Bandwidth(0.0)));
        assert!(kde::<f64>(&[], 0.6, &KdeGrid::default()).is_err());
    }

    #[test]
    fn f32_curve() {
        let c = kde(&[0.7f32, 0.75, 0.8], 0.6, &KdeGrid::default()).unwrap();
        assert!((trapezoid(&c.grid, &c.density) - 1.0).abs() < 1e-2);
    }

    proptest! {
        #[test]
        fn density_is_nonnegative_with_unit_mass(values in prop::collection::vec(0.0f64..1.0, 1..20), h in 0.01f64..2.0) {
            let c = kde(&values, h, &KdeGrid::default()).unwrap();
            prop_assert_eq!(c.grid.len(), DEFAULT_GRID_POINTS);
            prop_assert!(c.density.iter().all(|&d| d >= 0.0));
            prop_assert!((trapezoid(&c.grid, &c.density) - 1.0).abs() < 1e-2);
        }
    }
}
