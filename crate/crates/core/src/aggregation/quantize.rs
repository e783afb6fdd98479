use serde::{Deserialize, Serialize};

use super::AggregateError;

pub const N_BINS: usize = 10;

/// z for the two-sided 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantKind {
    Probability,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub kind: QuantKind,
    /// `N_BINS + 1` boundaries.
    pub edges: Vec<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl QuantizationSpec {
    pub fn probability() -> Self {
        Self {
            kind: QuantKind::Probability,
            edges: (0..=N_BINS).map(|i| i as f64 / N_BINS as f64).collect(),
            lower_bound: 0.0,
            upper_bound: 1.0,
        }
    }

    /// Bounds at `max(min, mean - 1.96 sd)` and `min(max, mean + 1.96 sd)`
    /// with population sd, split into uniform bins.
    pub fn continuous(values: &[f64]) -> Result<Self, AggregateError> {
        if values.is_empty() {
            return Err(AggregateError::EmptyInput);
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(AggregateError::NotFinite(*v));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = min.max(mean - Z_95 * sd);
        let hi = max.min(mean + Z_95 * sd);
        let width = (hi - lo) / N_BINS as f64;
        let mut edges: Vec<f64> = (0..N_BINS).map(|i| lo + i as f64 * width).collect();
        edges.push(hi);
        Ok(Self {
            kind: QuantKind::Continuous,
            edges,
            lower_bound: lo,
            upper_bound: hi,
        })
    }

    /// Bin of `v`: the number of interior edges at or below it. Values
    /// outside the bounds fall into the extreme bins; a zero-width range
    /// puts everything in bin 0.
    pub fn bin(&self, v: f64) -> usize {
        if self.upper_bound <= self.lower_bound {
            return 0;
        }
        self.edges[1..N_BINS].partition_point(|&e| e <= v)
    }

    /// Display label of each bin, `[lo, hi)` with the last one closed.
    pub fn labels(&self) -> Vec<String> {
        (0..N_BINS)
            .map(|i| {
                let close = if i + 1 == N_BINS { ']' } else { ')' };
                format!("[{}, {}{close}", fmt_edge(self.edges[i]), fmt_edge(self.edges[i + 1]))
            })
            .collect()
    }
}

fn fmt_edge(e: f64) -> String {
    let r = (e * 1e4).round() / 1e4;
    if r == 0.0 {
        "0".to_string()
    } else {
        r.to_string()
    }
}

/// Builds the quantization for `values` and assigns each one a bin.
pub fn quantize(values: &[f64], kind: QuantKind) -> Result<(QuantizationSpec, Vec<usize>), AggregateError> {
    if values.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    let spec = match kind {
        QuantKind::Probability => {
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(AggregateError::NotProbability(*v));
            }
            QuantizationSpec::probability()
        }
        QuantKind::Continuous => QuantizationSpec::continuous(values)?,
    };
    let bins = values.iter().map(|&v| spec.bin(v)).collect();
    Ok((spec, bins))
}
