//! Rank metrics for binary scores: AUC and the Kolmogorov-Smirnov distance.
//!
//! Labels are `true` for defaulters. Both functions return NaN when one of
//! the classes is empty.

fn sorted_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Probability that a random defaulter outscores a random non-defaulter,
/// ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return f64::NAN;
    }
    let order = sorted_order(scores);
    // Walk tie groups: each positive beats every negative below its group
    // and half of the negatives inside it.
    let mut wins = 0.0f64;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        wins += pos as f64 * neg_below as f64 + 0.5 * pos as f64 * neg as f64;
        neg_below += neg;
        i = j;
    }
    wins / (n_pos as f64 * n_neg as f64)
}

/// `max_t |F_D(t) − F_ND(t)|` over the empirical score distributions.
pub fn ks(scores: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return f64::NAN;
    }
    let order = sorted_order(scores);
    let (mut pos, mut neg) = (0usize, 0usize);
    let mut best = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        let gap = (pos as f64 / n_pos as f64 - neg as f64 / n_neg as f64).abs();
        best = best.max(gap);
        i = j;
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Metric {
    Auc,
    Ks,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Auc, Metric::Ks];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Auc => "AUC",
            Metric::Ks => "KS",
        }
    }

    pub fn compute(self, scores: &[f64], labels: &[bool]) -> f64 {
        match self {
            Metric::Auc => auc(scores, labels),
            Metric::Ks => ks(scores, labels),
        }
    }
}
