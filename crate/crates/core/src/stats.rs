//! Small statistics helpers shared by diagnostics and tests.

use ndarray::Array2;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divisor n-1).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Linearly interpolated quantile, q in [0, 1].
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    assert!(!xs.is_empty(), "quantile of empty slice");
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Five-number summary for box plots: min, q1, median, q3, max.
pub fn box_stats(xs: &[f64]) -> [f64; 5] {
    [
        quantile(xs, 0.0),
        quantile(xs, 0.25),
        quantile(xs, 0.5),
        quantile(xs, 0.75),
        quantile(xs, 1.0),
    ]
}

/// Two-point correlation of a raster at integer lag along a direction given
/// in degrees (0 = +x). The lag vector is rounded to whole cells; pairs with
/// an endpoint off the grid are skipped.
pub fn directional_correlation(raster: &Array2<f64>, angle_deg: f64, lag_cells: usize) -> f64 {
    let (ny, nx) = raster.dim();
    let theta = angle_deg.to_radians();
    let dx = (lag_cells as f64 * theta.cos()).round() as isize;
    let dy = (lag_cells as f64 * theta.sin()).round() as isize;
    let m = mean(raster.as_slice().expect("standard layout"));
    let mut num = 0.0;
    let mut den = 0.0;
    let mut count = 0usize;
    for iy in 0..ny as isize {
        for ix in 0..nx as isize {
            let (jx, jy) = (ix + dx, iy + dy);
            if jx < 0 || jy < 0 || jx >= nx as isize || jy >= ny as isize {
                continue;
            }
            let a = raster[[iy as usize, ix as usize]] - m;
            let b = raster[[jy as usize, jx as usize]] - m;
            num += a * b;
            den += a * a;
            count += 1;
        }
    }
    if count == 0 || den == 0.0 {
        return 0.0;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn quantiles_of_known_sequence() {
        let xs = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(median(&xs), 3.0);
        assert_eq!(quantile(&xs, 1.0), 5.0);
        assert!((quantile(&xs, 0.25) - 2.0).abs() < 1e-12);
        assert_eq!(box_stats(&xs), [1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn std_matches_hand_computation() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert!((std_dev(&xs) - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn stripes_correlate_along_their_axis() {
        // horizontal stripes: perfectly correlated along x, alternating along y
        let r = Array2::from_shape_fn((16, 16), |(iy, _)| if iy % 2 == 0 { 1.0 } else { -1.0 });
        let along = directional_correlation(&r, 0.0, 4);
        let across = directional_correlation(&r, 90.0, 3);
        assert!(along > 0.99);
        assert!(across < 0.0);
    }
}
