//! Mutual-information attention over decision variables.
//!
//! Densities are estimated with equal-width histograms over each sample's
//! observed range; logarithms are natural (nats).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::parallel;
use crate::problems::Population;

/// Default bin count: `⌈√N⌉`.
pub fn default_bins(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(2)
}

/// Equal-width bin index of every sample. A constant sample collapses to a
/// single bin. Returns the indices and the number of bins actually used.
pub fn bin_indices(samples: &[f64], bins: usize) -> (Vec<usize>, usize) {
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let width = hi - lo;
    if !(width > 0.0) {
        return (vec![0; samples.len()], 1);
    }
    let idx = samples
        .iter()
        .map(|&v| (((v - lo) / width * bins as f64).floor() as usize).min(bins - 1))
        .collect();
    (idx, bins)
}

/// Joint and marginal histogram counts of a sample pair.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    pub x_bins: usize,
    pub y_bins: usize,
    /// Row-major `x_bins × y_bins` counts.
    pub joint: Vec<u64>,
    pub x_marginal: Vec<u64>,
    pub y_marginal: Vec<u64>,
    pub n: u64,
}

impl JointHistogram {
    pub fn new(x: &[f64], y: &[f64], bins: usize) -> Self {
        let (xi, xb) = bin_indices(x, bins);
        let (yi, yb) = bin_indices(y, bins);
        let mut joint = vec![0u64; xb * yb];
        let mut x_marginal = vec![0u64; xb];
        let mut y_marginal = vec![0u64; yb];
        for (&a, &b) in xi.iter().zip(&yi) {
            joint[a * yb + b] += 1;
            x_marginal[a] += 1;
            y_marginal[b] += 1;
        }
        Self {
            x_bins: xb,
            y_bins: yb,
            joint,
            x_marginal,
            y_marginal,
            n: x.len() as u64,
        }
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut terms: Vec<f64> = Vec::with_capacity(self.joint.len());
        for a in 0..self.x_bins {
            for b in 0..self.y_bins {
                let c = self.joint[a * self.y_bins + b];
                if c == 0 {
                    continue;
                }
                let c = c as f64;
                let pxy = c / n;
                let denom = self.x_marginal[a] as f64 * self.y_marginal[b] as f64;
                terms.push(pxy * (c * n / denom).ln());
            }
        }
        // Summing in sorted order makes the result invariant to transposition.
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    }

    pub fn x_entropy(&self) -> f64 {
        entropy(&self.x_marginal, self.n)
    }

    pub fn y_entropy(&self) -> f64 {
        entropy(&self.y_marginal, self.n)
    }
}

fn entropy(counts: &[u64], n: u64) -> f64 {
    let n = n as f64;
    let mut terms: Vec<f64> = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn check_samples(x: &[f64], y: &[f64], bins: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} and {} samples",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::param("N", "at least two samples are required"));
    }
    if bins < 2 {
        return Err(Error::param("bins", "at least two bins are required"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::param("samples", "non-finite sample"));
    }
    Ok(())
}

/// Histogram estimate of `I(x; y)` in nats.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    check_samples(x, y, bins)?;
    Ok(JointHistogram::new(x, y, bins).mutual_information())
}

/// `I(x; y) / √(H(x) H(y))`, or 0 when either entropy vanishes.
pub fn normalized_mi(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    check_samples(x, y, bins)?;
    Ok(nmi_of(&JointHistogram::new(x, y, bins)))
}

fn nmi_of(h: &JointHistogram) -> f64 {
    let hx = h.x_entropy();
    let hy = h.y_entropy();
    if hx <= 0.0 || hy <= 0.0 {
        return 0.0;
    }
    (h.mutual_information() / (hx * hy).sqrt()).clamp(0.0, 1.0)
}

/// Attention over the decision variables of one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub step: usize,
    /// Softmax of `avg_nmi`; lies on the simplex.
    pub w: Vec<f64>,
    /// Per-variable NMI averaged over objectives.
    pub avg_nmi: Vec<f64>,
    /// Mean NMI over all (variable, objective) pairs.
    pub signature: f64,
}

impl AttentionWeights {
    /// Uniform weights `1/d`, used when attention is switched off.
    pub fn uniform(step: usize, d: usize, signature: f64) -> Self {
        Self {
            step,
            w: vec![1.0 / d as f64; d],
            avg_nmi: vec![0.0; d],
            signature,
        }
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// NMI of every (decision column, objective column) pair, as a `d × m` matrix.
pub fn nmi_matrix(decisions: &Matrix, objectives: &Matrix, bins: usize) -> Result<Matrix> {
    if decisions.rows() != objectives.rows() {
        return Err(Error::ShapeMismatch("decision/objective row counts".into()));
    }
    if decisions.rows() < 2 {
        return Err(Error::param("N", "at least two samples are required"));
    }
    if bins < 2 {
        return Err(Error::param("bins", "at least two bins are required"));
    }
    if let Some((row, col)) = decisions.find_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    if objectives.find_non_finite().is_some() {
        return Err(Error::param("objectives", "non-finite objective value"));
    }
    let m = objectives.cols();
    let obj_cols: Vec<Vec<f64>> = (0..m).map(|j| objectives.column(j)).collect();
    let rows = parallel::map_indexed(decisions.cols(), |i| {
        let x = decisions.column(i);
        obj_cols
            .iter()
            .map(|y| nmi_of(&JointHistogram::new(&x, y, bins)))
            .collect::<Vec<f64>>()
    });
    Ok(Matrix::from_rows(&rows).unwrap_or_else(|| Matrix::zeros(0, m)))
}

/// Mean NMI over all (variable, objective) pairs.
pub fn nmi_signature(decisions: &Matrix, objectives: &Matrix, bins: usize) -> Result<f64> {
    let nmi = nmi_matrix(decisions, objectives, bins)?;
    let s = nmi.as_slice();
    Ok(s.iter().sum::<f64>() / s.len().max(1) as f64)
}

/// Attention weights of a population with objectives, default bin count.
pub fn compute_attention(pop: &Population) -> Result<AttentionWeights> {
    compute_attention_with_bins(pop, default_bins(pop.size()))
}

pub fn compute_attention_with_bins(pop: &Population, bins: usize) -> Result<AttentionWeights> {
    let objectives = pop.objectives()?;
    let nmi = nmi_matrix(&pop.decisions, objectives, bins)?;
    let m = nmi.cols() as f64;
    let avg_nmi: Vec<f64> = nmi.iter_rows().map(|r| r.iter().sum::<f64>() / m).collect();
    let signature = nmi.as_slice().iter().sum::<f64>() / nmi.as_slice().len().max(1) as f64;
    Ok(AttentionWeights {
        step: pop.step,
        w: softmax(&avg_nmi),
        avg_nmi,
        signature,
    })
}

/// Scales decision column `i` by `w[i]`. Objectives are dropped.
pub fn apply_attention(pop: &Population, w: &[f64]) -> Result<Population> {
    if w.len() != pop.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} decision variables",
            w.len(),
            pop.dim()
        )));
    }
    let mut decisions = pop.decisions.clone();
    for r in 0..decisions.rows() {
        for (v, wi) in decisions.row_mut(r).iter_mut().zip(w) {
            *v *= wi;
        }
    }
    Ok(Population {
        step: pop.step,
        decisions,
        objectives: None,
        space: pop.space,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Space;
    use rand::Rng;

    fn uniform(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::seed::stream(seed, "mi-test", 0);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    /// Per-sample binning oracle, independent of `bin_indices`.
    fn brute_counts(x: &[f64], y: &[f64], bins: usize) -> Vec<u64> {
        let bin = |s: &[f64], v: f64| -> (usize, usize) {
            let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi == lo {
                return (0, 1);
            }
            // Locate the bin by scanning edges.
            let mut k = 0;
            while k + 1 < bins && v >= lo + (hi - lo) * (k + 1) as f64 / bins as f64 {
                k += 1;
            }
            (k, bins)
        };
        let yb = bin(y, y[0]).1;
        let xb = bin(x, x[0]).1;
        let mut c = vec![0u64; xb * yb];
        for (&a, &b) in x.iter().zip(y) {
            c[bin(x, a).0 * yb + bin(y, b).0] += 1;
        }
        c
    }

    #[test]
    fn histogram_matches_brute_force_binning() {
        for seed in 0..50u64 {
            let n = 2 + (seed as usize * 7) % 63;
            let bins = 2 + (seed as usize % 3);
            // Quantized samples to exercise bin edges.
            let x: Vec<f64> = uniform(n, seed).iter().map(|v| (v * 8.0).floor() / 8.0).collect();
            let y = uniform(n, seed + 1000);
            let h = JointHistogram::new(&x, &y, bins);
            assert_eq!(h.joint, brute_counts(&x, &y, bins), "seed {seed}");
        }
    }

    #[test]
    fn constant_sample_has_no_information() {
        let x = vec![3.0; 100];
        let y = uniform(100, 1);
        assert_eq!(mutual_information(&x, &y, 10).unwrap(), 0.0);
        assert_eq!(normalized_mi(&y, &x, 10).unwrap(), 0.0);
    }

    #[test]
    fn identical_samples() {
        let x = uniform(1000, 2);
        let i = mutual_information(&x, &x, 4).unwrap();
        assert!((i - 4f64.ln()).abs() < 0.05, "I = {i}");
        assert!((normalized_mi(&x, &x, 10).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn independent_samples() {
        for s in 0..10 {
            let x = uniform(1000, s);
            let y = uniform(1000, s + 500);
            assert!(mutual_information(&x, &y, 4).unwrap() < 0.05);
            assert!(normalized_mi(&x, &y, 4).unwrap() < 0.05);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(mutual_information(&[1.0], &[1.0], 4).is_err());
        assert!(mutual_information(&[1.0, 2.0], &[1.0, 2.0], 1).is_err());
        assert!(mutual_information(&[1.0, 2.0], &[1.0], 4).is_err());
        assert!(mutual_information(&[1.0, f64::NAN], &[1.0, 2.0], 4).is_err());
    }

    #[test]
    fn softmax_hand_values() {
        let w = softmax(&[0.0, 2f64.ln()]);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(softmax(&[0.3; 4]), vec![0.25; 4]);
    }

    fn pop_with_objectives(n: usize, seed: u64) -> Population {
        let a = uniform(n, seed);
        let b = uniform(n, seed + 1);
        let rows: Vec<[f64; 3]> = (0..n).map(|i| [a[i], b[i], 0.5]).collect();
        let obj: Vec<[f64; 2]> = (0..n).map(|i| [a[i], 1.0 - a[i] + 0.1 * b[i]]).collect();
        Population::new(4, Matrix::from_rows(&rows).unwrap(), Space::Raw)
            .with_objectives(Matrix::from_rows(&obj).unwrap())
            .unwrap()
    }

    #[test]
    fn attention_on_simplex_and_constant_column_lowest() {
        let pop = pop_with_objectives(100, 3);
        let att = compute_attention(&pop).unwrap();
        assert!((att.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(att.avg_nmi[2], 0.0);
        assert!(att.w[2] <= att.w[0] && att.w[2] <= att.w[1]);
        assert!(att.avg_nmi[0] > att.avg_nmi[1]);
        assert_eq!(att.step, 4);
    }

    #[test]
    fn apply_attention_scales_columns() {
        let pop = pop_with_objectives(10, 1);
        let once = apply_attention(&pop, &[0.25, 0.25, 0.25]).unwrap();
        assert!(once.objectives.is_none());
        for (a, b) in once.decisions.as_slice().iter().zip(pop.decisions.as_slice()) {
            assert_eq!(*a, b * 0.25);
        }
        let e1 = apply_attention(&pop, &[1.0, 0.0, 0.0]).unwrap();
        assert!(e1.decisions.iter_rows().all(|r| r[1] == 0.0 && r[2] == 0.0));
        let w = [0.5, 0.3, 0.2];
        let twice = apply_attention(&apply_attention(&pop, &w).unwrap(), &w).unwrap();
        for r in 0..10 {
            for c in 0..3 {
                let expect = pop.decisions.get(r, c) * w[c] * w[c];
                assert!((twice.decisions.get(r, c) - expect).abs() < 1e-15);
            }
        }
        assert!(apply_attention(&pop, &[1.0]).is_err());
    }
}
