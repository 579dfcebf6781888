//! Two-sample and spread statistics for evaluation.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Energy distance `2·E‖X−Y‖ − E‖X−X'‖ − E‖Y−Y'‖` between two row-batch
/// samples. Zero iff the empirical distributions coincide; summation order
/// is fixed (ascending indices) so results are reproducible.
pub fn energy_distance(x: &Tensor, y: &Tensor) -> Result<f64> {
    let (n, d) = match *x.shape() {
        [n, d] => (n, d),
        _ => return Err(Error::Shape("energy_distance expects row batches".into())),
    };
    let (m, d2) = match *y.shape() {
        [m, d2] => (m, d2),
        _ => return Err(Error::Shape("energy_distance expects row batches".into())),
    };
    if d != d2 {
        return Err(Error::Dimension(format!(
            "samples have widths {d} and {d2}"
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("empty sample".into()));
    }

    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..m {
            cross += euclidean(x.row(i), y.row(j));
        }
    }
    cross /= (n * m) as f64;

    let mut within_x = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            within_x += euclidean(x.row(i), x.row(j));
        }
    }
    within_x *= 2.0 / (n * n) as f64;

    let mut within_y = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            within_y += euclidean(y.row(i), y.row(j));
        }
    }
    within_y *= 2.0 / (m * m) as f64;

    Ok(2.0 * cross - within_x - within_y)
}

/// Total standard deviation of a row batch: the square root of the summed
/// per-coordinate variances (population convention).
pub fn total_std(x: &Tensor) -> Result<f64> {
    let (n, d) = match *x.shape() {
        [n, d] => (n, d),
        _ => return Err(Error::Shape("total_std expects a row batch".into())),
    };
    if n == 0 {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = 0.0;
    for i in 0..n {
        for (m, v) in mean.iter().zip(x.row(i)) {
            var += (v - m) * (v - m);
        }
    }
    Ok((var / n as f64).sqrt())
}

/// Mean of per-row L1 distances between two equal-shape row batches.
pub fn mean_row_l1(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape("mean_row_l1: shapes differ".into()));
    }
    let n = a.rows().unwrap_or(1) as f64;
    let total: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(total / n)
}
