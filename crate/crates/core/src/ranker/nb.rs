use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tfidf::DocVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Relevant,
    Irrelevant,
}

impl Label {
    fn class(self) -> usize {
        match self {
            Label::Relevant => 0,
            Label::Irrelevant => 1,
        }
    }
}

/// Default smoothing used by the reference active-learning setup.
pub const DEFAULT_ALPHA: f64 = 3.822;

/// Multinomial Naive Bayes over two classes; index 0 is relevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub class_log_prior: [f64; 2],
    pub feature_log_prob: [Vec<f64>; 2],
    pub alpha: f64,
}

/// Fits class priors from label counts and per-class feature likelihoods
/// `(sum of weights of t in c + alpha) / (sum of all weights in c + alpha * |V|)`.
pub fn train_nb(vectors: &[DocVector], labels: &[Label], alpha: f64, n_features: usize) -> Result<NbModel> {
    if vectors.len() != labels.len() {
        return Err(Error::Training(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Training(format!("alpha must be positive, got {alpha}")));
    }
    if n_features == 0 {
        return Err(Error::Training("no features".into()));
    }
    let mut class_count = [0usize; 2];
    let mut feature_sum = [vec![0.0; n_features], vec![0.0; n_features]];
    for (v, label) in vectors.iter().zip(labels) {
        let c = label.class();
        class_count[c] += 1;
        for &(i, w) in &v.entries {
            if i >= n_features {
                return Err(Error::Training(format!("feature index {i} out of range")));
            }
            feature_sum[c][i] += w;
        }
    }
    if class_count.contains(&0) {
        return Err(Error::Training(
            "both relevant and irrelevant examples are required".into(),
        ));
    }
    let total = labels.len() as f64;
    let class_log_prior = class_count.map(|n| (n as f64 / total).ln());
    let feature_log_prob = feature_sum.map(|sums| {
        let denom = (sums.iter().sum::<f64>() + alpha * n_features as f64).ln();
        sums.iter().map(|s| (s + alpha).ln() - denom).collect()
    });
    Ok(NbModel {
        class_log_prior,
        feature_log_prob,
        alpha,
    })
}

impl NbModel {
    pub fn n_features(&self) -> usize {
        self.feature_log_prob[0].len()
    }

    fn joint_log_likelihood(&self, v: &DocVector) -> [f64; 2] {
        let mut jll = self.class_log_prior;
        for (c, slot) in jll.iter_mut().enumerate() {
            for &(i, w) in &v.entries {
                *slot += w * self.feature_log_prob[c][i];
            }
        }
        jll
    }

    /// `(P(relevant | v), P(irrelevant | v))` via log-sum-exp.
    pub fn posterior(&self, v: &DocVector) -> (f64, f64) {
        let [r, i] = self.joint_log_likelihood(v);
        let m = r.max(i);
        let lse = m + ((r - m).exp() + (i - m).exp()).ln();
        ((r - lse).exp().clamp(0.0, 1.0), (i - lse).exp().clamp(0.0, 1.0))
    }

    pub fn predict_proba(&self, vectors: &[DocVector]) -> Vec<f64> {
        vectors.iter().map(|v| self.posterior(v).0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(entries: &[(usize, f64)]) -> DocVector {
        DocVector::new(entries.to_vec())
    }

    #[test]
    fn single_class_is_an_error() {
        let err = train_nb(&[v(&[(0, 1.0)])], &[Label::Relevant], 1.0, 1).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }

    #[test]
    fn large_alpha_gives_uniform_likelihoods() {
        let m = train_nb(
            &[v(&[(0, 1.0)]), v(&[(1, 1.0)])],
            &[Label::Relevant, Label::Irrelevant],
            1e12,
            2,
        )
        .unwrap();
        assert!((m.class_log_prior[0].exp() - 0.5).abs() < 1e-15);
        for c in 0..2 {
            for lp in &m.feature_log_prob[c] {
                assert!((lp.exp() - 0.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn likelihoods_sum_to_one() {
        let m = train_nb(
            &[v(&[(0, 0.6), (2, 0.8)]), v(&[(1, 1.0)]), v(&[(0, 0.3)])],
            &[Label::Relevant, Label::Irrelevant, Label::Irrelevant],
            0.5,
            3,
        )
        .unwrap();
        for c in 0..2 {
            let s: f64 = m.feature_log_prob[c].iter().map(|l| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_vector_scores_at_prior() {
        let m = train_nb(
            &[v(&[(0, 1.0)]), v(&[(1, 1.0)]), v(&[(1, 1.0)])],
            &[Label::Relevant, Label::Irrelevant, Label::Irrelevant],
            1.0,
            2,
        )
        .unwrap();
        let (p, q) = m.posterior(&DocVector::default());
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        assert!((p + q - 1.0).abs() < 1e-12);
    }
}
