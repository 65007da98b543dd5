//! Savitzky-Golay smoothing with polynomial edge fitting.

use super::DegradeError;

/// Solves a small dense system in place by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Weights `c` such that `sum_j c[j] * y[j]` is the value at `at` of the
/// least-squares polynomial of degree `order` through samples at offsets
/// `-half..=half`.
pub fn weights(window: usize, order: usize, at: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let offsets: Vec<f64> = (0..window).map(|j| j as f64 - half).collect();
    let terms = order + 1;
    // Normal equations: (A^T A) z = e(at), then c = A z.
    let gram: Vec<Vec<f64>> = (0..terms)
        .map(|r| {
            (0..terms)
                .map(|c| offsets.iter().map(|t| t.powi((r + c) as i32)).sum())
                .collect()
        })
        .collect();
    let basis: Vec<f64> = (0..terms).map(|k| at.powi(k as i32)).collect();
    let z = solve(gram, basis).expect("window > order gives a non-singular Gram matrix");
    offsets
        .iter()
        .map(|t| {
            z.iter()
                .enumerate()
                .map(|(k, zk)| zk * t.powi(k as i32))
                .sum()
        })
        .collect()
}

pub fn check_params(len: usize, window: usize, order: usize) -> Result<(), DegradeError> {
    if window.is_multiple_of(2) {
        return Err(DegradeError::Parameter(format!(
            "window {window} must be odd"
        )));
    }
    if window <= order {
        return Err(DegradeError::Parameter(format!(
            "window {window} must exceed polynomial order {order}"
        )));
    }
    if window > len {
        return Err(DegradeError::Parameter(format!(
            "window {window} exceeds series length {len}"
        )));
    }
    Ok(())
}

/// Filters one series. Interior samples use the centred window; the first and
/// last `window / 2` samples are evaluated on the polynomial fitted to the
/// first or last full window.
pub fn filter(series: &[f64], window: usize, order: usize) -> Result<Vec<f64>, DegradeError> {
    check_params(series.len(), window, order)?;
    let n = series.len();
    let half = window / 2;
    let dot = |c: &[f64], start: usize| -> f64 {
        c.iter()
            .zip(&series[start..start + window])
            .map(|(a, b)| a * b)
            .sum()
    };

    let centre = weights(window, order, 0.0);
    let mut out = vec![0.0; n];
    for i in half..n - half {
        out[i] = dot(&centre, i - half);
    }
    for i in 0..half {
        let at = i as f64 - half as f64;
        out[i] = dot(&weights(window, order, at), 0);
        out[n - 1 - i] = dot(&weights(window, order, -at), n - window);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_point_quadratic_weights() {
        // Classic tabulated smoothing coefficients (-3, 12, 17, 12, -3) / 35.
        let w = weights(5, 2, 0.0);
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn window_three_order_two_is_identity() {
        let s = [0.3, -1.0, 4.0, 2.5, 0.0, 7.0];
        let out = filter(&s, 3, 2).unwrap();
        for (a, b) in out.iter().zip(s) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let s = [0.0; 6];
        assert!(filter(&s, 4, 2).is_err());
        assert!(filter(&s, 3, 3).is_err());
        assert!(filter(&s, 7, 2).is_err());
    }
}
