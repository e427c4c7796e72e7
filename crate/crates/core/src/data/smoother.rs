use crate::error::{Error, Result};

fn median(window: &mut [f64]) -> f64 {
    window.sort_by(f64::total_cmp);
    let n = window.len();
    if n % 2 == 1 {
        window[n / 2]
    } else {
        0.5 * (window[n / 2 - 1] + window[n / 2])
    }
}

/// Running median with odd `span`; the `span / 2` values at each end are
/// copied unchanged.
pub fn running_median(x: &[f64], span: usize) -> Vec<f64> {
    assert!(span % 2 == 1, "span must be odd");
    let half = span / 2;
    let mut out = x.to_vec();
    if x.len() < span {
        return out;
    }
    let mut buf = vec![0.0; span];
    for i in half..x.len() - half {
        buf.copy_from_slice(&x[i - half..=i + half]);
        out[i] = median(&mut buf);
    }
    out
}

/// Running median of 4 recentred by a running median of 2; two values at
/// each end are copied.
pub fn running_median_even(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = x.to_vec();
    if n < 5 {
        return out;
    }
    // m4[j] sits between samples j+1 and j+2
    let m4: Vec<f64> = x.windows(4).map(|w| median(&mut w.to_vec())).collect();
    for i in 2..n - 2 {
        out[i] = 0.5 * (m4[i - 2] + m4[i - 1]);
    }
    out
}

/// Hanning weights (¼, ½, ¼); endpoints copied.
pub fn hanning(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    for i in 1..x.len().saturating_sub(1) {
        out[i] = 0.25 * x[i - 1] + 0.5 * x[i] + 0.25 * x[i + 1];
    }
    out
}

/// One pass of 4253H.
pub fn smooth_4253h(x: &[f64]) -> Vec<f64> {
    let s = running_median_even(x);
    let s = running_median(&s, 5);
    let s = running_median(&s, 3);
    hanning(&s)
}

/// 4253H followed by the same smoother on the residuals, added back.
/// Series shorter than 5 are returned unchanged.
pub fn smooth_4253h_twice(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::invalid("cannot smooth an empty series"));
    }
    if x.len() < 5 {
        return Ok(x.to_vec());
    }
    let rough = smooth_4253h(x);
    let residual: Vec<f64> = x.iter().zip(&rough).map(|(a, b)| a - b).collect();
    let fix = smooth_4253h(&residual);
    Ok(rough.iter().zip(&fix).map(|(a, b)| a + b).collect())
}
