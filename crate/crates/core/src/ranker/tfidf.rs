use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase, split on non-alphanumeric characters, keep tokens of two or
/// more characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().nth(1).is_some())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermStats {
    pub index: usize,
    pub document_frequency: usize,
}

/// Sorted term dictionary with document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: BTreeMap<String, TermStats>,
    idf: Vec<f64>,
    total_documents: usize,
}

impl Vocabulary {
    /// Fits over all `texts`; indices follow lexicographic term order.
    pub fn fit<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            let mut tokens = tokenize(text.as_ref());
            tokens.sort_unstable();
            tokens.dedup();
            for t in tokens {
                *df.entry(t).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(Error::Training("empty vocabulary: no tokens in any text".into()));
        }
        let n = texts.len() as f64;
        let mut idf = Vec::with_capacity(df.len());
        let terms = df
            .into_iter()
            .enumerate()
            .map(|(index, (term, document_frequency))| {
                idf.push(((1.0 + n) / (1.0 + document_frequency as f64)).ln() + 1.0);
                (
                    term,
                    TermStats {
                        index,
                        document_frequency,
                    },
                )
            })
            .collect();
        Ok(Vocabulary {
            terms,
            idf,
            total_documents: texts.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total_documents(&self) -> usize {
        self.total_documents
    }

    pub fn get(&self, term: &str) -> Option<TermStats> {
        self.terms.get(term).copied()
    }

    /// `ln((1 + N) / (1 + df)) + 1`
    pub fn idf(&self, index: usize) -> f64 {
        self.idf[index]
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, TermStats)> {
        self.terms.iter().map(|(t, s)| (t.as_str(), *s))
    }

    /// Raw in-vocabulary term counts, ascending index; unseen terms dropped.
    pub fn term_counts(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in tokenize(text) {
            if let Some(stats) = self.terms.get(&token) {
                *counts.entry(stats.index).or_default() += 1.0;
            }
        }
        counts.into_iter().collect()
    }

    /// count × idf, then L2-normalised. Empty input stays a zero vector.
    pub fn weigh(&self, counts: &[(usize, f64)]) -> DocVector {
        let mut entries: Vec<(usize, f64)> = counts
            .iter()
            .filter(|(_, c)| *c > 0.0)
            .map(|&(i, c)| (i, c * self.idf[i]))
            .collect();
        entries.sort_by_key(|(i, _)| *i);
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut entries {
                *w /= norm;
            }
        }
        DocVector { entries }
    }

    pub fn transform(&self, text: &str) -> DocVector {
        self.weigh(&self.term_counts(text))
    }

    pub fn transform_all<S: AsRef<str>>(&self, texts: &[S]) -> Vec<DocVector> {
        texts.iter().map(|t| self.transform(t.as_ref())).collect()
    }
}

/// Sparse row: `(column, weight)` with strictly ascending columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub entries: Vec<(usize, f64)>,
}

impl DocVector {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|(i, _)| *i);
        DocVector { entries }
    }

    /// True for documents with no in-vocabulary terms.
    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|(_, w)| *w == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}
