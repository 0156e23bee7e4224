//! Linear softmax identity classifier used as a saliency objective.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            iterations: 500,
            l2: 1e-3,
        }
    }
}

/// `logits = W x + b`, one row of `W` per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearProbe {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                self.bias[c]
                    + self.weights[c * self.dim..(c + 1) * self.dim]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Gradient of logit `class` with respect to the input.
    pub fn logit_gradient(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let l = self.logits(x);
        (0..l.len()).fold(0, |best, c| if l[c] > l[best] { c } else { best })
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Full-batch gradient descent on mean cross-entropy plus `l2/2 * |W|^2`,
/// starting from zero weights; deterministic.
pub fn train_probe(xs: &[Vec<f64>], labels: &[usize], classes: usize, cfg: &ProbeConfig) -> LinearProbe {
    let dim = xs.first().map_or(0, Vec::len);
    let mut probe = LinearProbe {
        classes,
        dim,
        weights: vec![0.0; classes * dim],
        bias: vec![0.0; classes],
    };
    let n = xs.len().max(1) as f64;
    for _ in 0..cfg.iterations {
        let mut gw: Vec<f64> = probe.weights.iter().map(|w| cfg.l2 * w).collect();
        let mut gb = vec![0.0; classes];
        for (x, &y) in xs.iter().zip(labels) {
            let p = softmax(&probe.logits(x));
            for c in 0..classes {
                let d = (p[c] - if c == y { 1.0 } else { 0.0 }) / n;
                gb[c] += d;
                for (g, v) in gw[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                    *g += d * v;
                }
            }
        }
        for (w, g) in probe.weights.iter_mut().zip(&gw) {
            *w -= cfg.learning_rate * g;
        }
        for (b, g) in probe.bias.iter_mut().zip(&gb) {
            *b -= cfg.learning_rate * g;
        }
    }
    probe
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_clusters() {
        let xs = vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0], vec![0.1, 0.9]];
        let labels = [0, 0, 1, 1];
        let p = train_probe(&xs, &labels, 2, &ProbeConfig::default());
        for (x, &y) in xs.iter().zip(&labels) {
            assert_eq!(p.predict(x), y);
        }
    }
}
