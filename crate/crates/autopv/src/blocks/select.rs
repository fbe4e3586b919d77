use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesFrame;

/// Result of feature selection: which columns survive and their scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMask {
    pub keep: Vec<bool>,
    pub scores: Vec<f64>,
}

impl FeatureMask {
    pub fn keep_all(d: usize) -> Self {
        Self {
            keep: vec![true; d],
            scores: vec![1.0; d],
        }
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.keep
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// Pearson correlation of two equal-length slices; 0 if either has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

fn column(frame: &TimeSeriesFrame, j: usize) -> Vec<f64> {
    (0..frame.n_rows()).map(|r| frame.value(r, j)).collect()
}

/// Keep feature j iff |corr(feature_j, target)| >= threshold; target always kept.
pub fn pearson_select(frame: &TimeSeriesFrame, threshold: f64) -> FeatureMask {
    let d = frame.n_features();
    let tgt = frame.target_index();
    let target = column(frame, tgt);
    let mut keep = vec![false; d];
    let mut scores = vec![0.0; d];
    for j in 0..d {
        if j == tgt {
            keep[j] = true;
            scores[j] = 1.0;
            continue;
        }
        let r = pearson(&column(frame, j), &target).abs();
        scores[j] = r;
        keep[j] = r >= threshold;
    }
    FeatureMask { keep, scores }
}

/// Greedy minimum-redundancy maximum-relevance selection.
///
/// Each step scores every candidate as |corr(f, target)| minus its mean
/// absolute correlation with already-selected features, min-max normalizes
/// the scores over the candidates, and adds the best candidate while its
/// normalized score stays >= threshold. A degenerate step (all raw scores
/// equal) normalizes to 1 when the shared score is positive, else 0.
pub fn mrmr_select(frame: &TimeSeriesFrame, threshold: f64) -> FeatureMask {
    let d = frame.n_features();
    let tgt = frame.target_index();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| column(frame, j)).collect();
    let relevance: Vec<f64> = (0..d).map(|j| pearson(&cols[j], &cols[tgt]).abs()).collect();

    let mut selected: Vec<usize> = Vec::new();
    let mut candidates: Vec<usize> = (0..d).filter(|&j| j != tgt).collect();
    while !candidates.is_empty() {
        let raw: Vec<f64> = candidates
            .iter()
            .map(|&f| {
                let redundancy = if selected.is_empty() {
                    0.0
                } else {
                    selected
                        .iter()
                        .map(|&s| pearson(&cols[f], &cols[s]).abs())
                        .sum::<f64>()
                        / selected.len() as f64
                };
                relevance[f] - redundancy
            })
            .collect();
        let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let best = raw
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap();
        let normalized = if hi - lo <= 0.0 {
            if raw[best] > 1e-12 {
                1.0
            } else {
                0.0
            }
        } else {
            (raw[best] - lo) / (hi - lo)
        };
        if normalized < threshold {
            break;
        }
        selected.push(candidates.remove(best));
    }

    let mut keep = vec![false; d];
    keep[tgt] = true;
    for &j in &selected {
        keep[j] = true;
    }
    let mut scores = relevance;
    scores[tgt] = 1.0;
    FeatureMask { keep, scores }
}
