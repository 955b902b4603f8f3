//! Per-element empirical distributions.
//!
//! An attacker operating under full disclosure knows a representative
//! distribution for every embedding element. We model each element with an
//! equal-width histogram fitted on a development corpus and sample initial
//! solver guesses from it: pick a bin by probability, then a uniform value
//! within the bin.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Equal-width histogram over one element. A constant column degenerates to
/// a single point bin (`edges == [x, x]`) that always samples `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    probs: Vec<f64>,
}

impl Histogram {
    /// Fits `bins` equal-width bins spanning `[min, max]` of `values`.
    pub fn fit(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Estimation(
                "cannot fit a histogram to no values".into(),
            ));
        }
        if bins == 0 {
            return Err(Error::Estimation("bins must be >= 1".into()));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            return Ok(Self {
                edges: vec![min, max],
                probs: vec![1.0],
            });
        }
        let width = (max - min) / bins as f64;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let mut idx = ((v - min) / width) as usize;
            if idx >= bins {
                idx = bins - 1; // v == max lands in the last bin
            }
            counts[idx] += 1;
        }
        let total = values.len() as f64;
        let edges = (0..=bins)
            .map(|i| {
                if i == bins {
                    max
                } else {
                    min + width * i as f64
                }
            })
            .collect();
        let probs = counts.into_iter().map(|c| c as f64 / total).collect();
        Ok(Self { edges, probs })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Outer support `[min, max]`.
    pub fn support(&self) -> (f64, f64) {
        (self.edges[0], *self.edges.last().unwrap())
    }

    /// Draws a bin by probability, then a uniform value within its edges.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut bin = self.probs.len() - 1;
        for (i, p) in self.probs.iter().enumerate() {
            cum += p;
            if u < cum {
                bin = i;
                break;
            }
        }
        let (lo, hi) = (self.edges[bin], self.edges[bin + 1]);
        if lo == hi {
            return lo;
        }
        lo + rng.random::<f64>() * (hi - lo)
    }
}

/// One histogram per embedding element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDistributions {
    per_element: Vec<Histogram>,
}

impl ElementDistributions {
    /// Fits per-element histograms over a corpus.
    pub fn estimate(corpus: &Corpus, bins: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Estimation(
                "cannot estimate element distributions from an empty corpus".into(),
            ));
        }
        let dim = corpus.dim();
        let mut per_element = Vec::with_capacity(dim);
        let mut column = Vec::with_capacity(corpus.len());
        for i in 0..dim {
            column.clear();
            column.extend(corpus.embeddings().iter().map(|e| e.values[i]));
            per_element.push(Histogram::fit(&column, bins)?);
        }
        Ok(Self { per_element })
    }

    pub fn dim(&self) -> usize {
        self.per_element.len()
    }

    pub fn element(&self, index: usize) -> Result<&Histogram> {
        self.per_element.get(index).ok_or(Error::OutOfRange {
            index,
            dim: self.per_element.len(),
        })
    }

    /// Samples one value for element `index`.
    pub fn sample_element(&self, index: usize, rng: &mut impl Rng) -> Result<f64> {
        Ok(self.element(index)?.sample(rng))
    }

    /// Samples one full vector, one independent draw per element.
    pub fn sample_vector(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.per_element.iter().map(|h| h.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Embedding;
    use crate::rng::substream;

    fn corpus_from_columns(rows: Vec<Vec<f64>>) -> Corpus {
        let embeddings = rows
            .into_iter()
            .enumerate()
            .map(|(i, values)| Embedding::new(format!("s{i:02}"), "e0", values))
            .collect();
        Corpus::new(embeddings).unwrap()
    }

    #[test]
    fn constant_column_becomes_point_bin() {
        let corpus = corpus_from_columns(vec![vec![0.5, 1.0], vec![0.5, 2.0], vec![0.5, 3.0]]);
        let dists = ElementDistributions::estimate(&corpus, 10).unwrap();
        let h = dists.element(0).unwrap();
        assert_eq!(h.probabilities(), &[1.0]);
        assert_eq!(h.support(), (0.5, 0.5));
        let mut rng = substream(1, 0, 0);
        assert_eq!(h.sample(&mut rng), 0.5);
    }

    #[test]
    fn two_value_two_bin_histogram_is_even() {
        let corpus = corpus_from_columns(vec![vec![0.0], vec![1.0]]);
        let dists = ElementDistributions::estimate(&corpus, 2).unwrap();
        let h = dists.element(0).unwrap();
        assert_eq!(h.probabilities(), &[0.5, 0.5]);
        assert_eq!(h.edges(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let cfg = crate::corpus::SyntheticConfig {
            n_subjects: 6,
            samples_per_subject: 5,
            dim: 16,
            between_class_std: 1.0,
            within_class_std: 0.2,
            unit_normalize: false,
            seed: 9,
        };
        let corpus = crate::corpus::generate_synthetic_corpus(&cfg).unwrap();
        let dists = ElementDistributions::estimate(&corpus, 13).unwrap();
        for i in 0..dists.dim() {
            let sum: f64 = dists.element(i).unwrap().probabilities().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sampling_respects_bin_frequencies() {
        let corpus = corpus_from_columns(vec![vec![0.0], vec![1.0]]);
        let dists = ElementDistributions::estimate(&corpus, 2).unwrap();
        let mut rng = substream(7, 0, 0);
        let n = 10_000;
        let mut low = 0usize;
        for _ in 0..n {
            let v = dists.sample_element(0, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&v));
            if v < 0.5 {
                low += 1;
            }
        }
        let frac = low as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.02, "low-bin fraction {frac}");
    }

    #[test]
    fn samples_stay_within_support() {
        let corpus = corpus_from_columns(vec![vec![-3.0], vec![2.0], vec![0.5], vec![1.5]]);
        let dists = ElementDistributions::estimate(&corpus, 7).unwrap();
        let (lo, hi) = dists.element(0).unwrap().support();
        let mut rng = substream(3, 0, 0);
        for _ in 0..1000 {
            let v = dists.sample_element(0, &mut rng).unwrap();
            assert!(v >= lo && v <= hi);
        }
    }

    #[test]
    fn out_of_range_index_errors() {
        let corpus = corpus_from_columns(vec![vec![0.0], vec![1.0]]);
        let dists = ElementDistributions::estimate(&corpus, 2).unwrap();
        assert!(matches!(
            dists.element(5),
            Err(Error::OutOfRange { index: 5, dim: 1 })
        ));
    }

    #[test]
    fn empty_corpus_is_an_estimation_error() {
        let corpus = Corpus::empty(4).unwrap();
        assert!(matches!(
            ElementDistributions::estimate(&corpus, 3),
            Err(Error::Estimation(_))
        ));
    }
}
