use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    /// First converged episode (0-based), if any.
    pub episode: Option<usize>,
    pub threshold: f64,
    pub plateau: f64,
}

/// Mean of `curve[i..i + window]`, truncated at the end of the curve.
pub fn forward_mean(curve: &[f64], window: usize) -> Vec<f64> {
    (0..curve.len())
        .map(|i| {
            let end = (i + window).min(curve.len());
            curve[i..end].iter().sum::<f64>() / (end - i) as f64
        })
        .collect()
}

/// Episodes-to-threshold of a reward curve.
///
/// The plateau is the mean of the last `window` episodes and the threshold is
/// `plateau - (1 - theta) |plateau|`. The detected episode is the first one
/// whose own value and forward window mean both reach the threshold.
pub fn episodes_to_threshold(curve: &[f64], window: usize, theta: f64) -> Result<Threshold> {
    if curve.is_empty() || window == 0 {
        return arg("convergence needs a nonempty curve and window >= 1");
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return arg("reward curve contains non-finite values");
    }
    let tail = &curve[curve.len().saturating_sub(window)..];
    let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
    let threshold = plateau - (1.0 - theta) * plateau.abs();
    let smoothed = forward_mean(curve, window);
    let episode = (0..curve.len()).find(|&i| curve[i] >= threshold && smoothed[i] >= threshold);
    Ok(Threshold { episode, threshold, plateau })
}
