//! Label vocabulary, sample records and the synthetic multi-label generator.
//!
//! Class `c` has Zipf weight `1 / (c + 1)^s`, so class 0 is the most frequent
//! by construction. Each class owns a unit-norm prototype vector. A sample
//! places every present label's prototype in a random subset of grid cells
//! (its "object size"); the global feature is the normalized size-weighted sum
//! of prototypes, i.e. what global pooling of the grid would see.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },
    #[error("duplicate class name {0:?}")]
    DuplicateName(String),
}

/// Class names plus the start and end tokens.
///
/// Real classes occupy indices `0..n_classes`; the start token is
/// `n_classes` and the end token `n_classes + 1`, so the decoder's output size
/// is `n_classes + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVocabulary {
    names: Vec<String>,
    frequencies: Vec<u64>,
}

impl LabelVocabulary {
    pub fn new(names: Vec<String>, frequencies: Vec<u64>) -> Result<Self, DataError> {
        if names.len() != frequencies.len() {
            return Err(DataError::InvalidConfig(format!(
                "{} names but {} frequencies",
                names.len(),
                frequencies.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(DataError::DuplicateName(n.clone()));
            }
        }
        Ok(Self { names, frequencies })
    }

    pub fn n_classes(&self) -> usize {
        self.names.len()
    }

    /// Output alphabet size including both tokens.
    pub fn size(&self) -> usize {
        self.names.len() + 2
    }

    pub fn start_token(&self) -> usize {
        self.names.len()
    }

    pub fn end_token(&self) -> usize {
        self.names.len() + 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    pub fn frequency(&self, class: usize) -> u64 {
        self.frequencies[class]
    }

    pub fn name(&self, index: usize) -> &str {
        if index == self.start_token() {
            "<start>"
        } else if index == self.end_token() {
            "<end>"
        } else {
            &self.names[index]
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        match name {
            "<start>" => Some(self.start_token()),
            "<end>" => Some(self.end_token()),
            _ => self.names.iter().position(|n| n == name),
        }
    }

    /// Recounts frequencies from a sample collection.
    pub fn recount(&mut self, samples: &[SampleRecord]) {
        self.frequencies.iter_mut().for_each(|f| *f = 0);
        for s in samples {
            for &l in &s.labels {
                self.frequencies[l] += 1;
            }
        }
    }
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub global_feature: Vec<f64>,
    /// One vector per grid cell, each `global_feature.len()` long.
    pub spatial_features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl SampleRecord {
    /// Labels non-empty, unique, real classes; spatial cells match the feature width.
    pub fn validate(&self, n_classes: usize) -> Result<(), String> {
        if self.labels.is_empty() {
            return Err("empty label set".into());
        }
        let mut seen = BTreeSet::new();
        for &l in &self.labels {
            if l >= n_classes {
                return Err(format!("label {l} outside vocabulary of {n_classes} classes"));
            }
            if !seen.insert(l) {
                return Err(format!("duplicate label {l}"));
            }
        }
        let dim = self.global_feature.len();
        if self.spatial_features.iter().any(|c| c.len() != dim) {
            return Err("spatial cell width differs from global feature".into());
        }
        if self
            .global_feature
            .iter()
            .chain(self.spatial_features.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err("non-finite feature".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_classes: usize,
    pub n_samples: usize,
    pub zipf_exponent: f64,
    /// `(a, b, strength)`: when `a` is present and `b` is not, add `b` with
    /// probability `strength`.
    pub correlation_pairs: Vec<(usize, usize, f64)>,
    pub labels_per_sample: (usize, usize),
    pub feature_dim: usize,
    /// Grid side; the spatial map has `grid_size²` cells.
    pub grid_size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    /// The reference dataset: 20 classes, 5000 samples, seed 42.
    fn default() -> Self {
        Self {
            n_classes: 20,
            n_samples: 5000,
            zipf_exponent: 1.1,
            correlation_pairs: vec![(0, 5, 0.6), (2, 7, 0.8), (4, 11, 0.7)],
            labels_per_sample: (1, 4),
            feature_dim: 32,
            grid_size: 4,
            noise_sigma: 0.05,
            seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        let (lo, hi) = self.labels_per_sample;
        if self.n_classes == 0 {
            return bad("n_classes must be >= 1".into());
        }
        if lo < 1 || hi < lo {
            return bad(format!("labels_per_sample ({lo}, {hi}) needs 1 <= min <= max"));
        }
        if hi > self.n_classes {
            return bad(format!(
                "max labels per sample {hi} exceeds n_classes {}",
                self.n_classes
            ));
        }
        if self.feature_dim == 0 || self.grid_size == 0 {
            return bad("feature_dim and grid_size must be >= 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be finite and >= 0", self.noise_sigma));
        }
        if !self.zipf_exponent.is_finite() || self.zipf_exponent < 0.0 {
            return bad(format!("zipf_exponent {} must be >= 0", self.zipf_exponent));
        }
        for &(a, b, s) in &self.correlation_pairs {
            if a >= self.n_classes || b >= self.n_classes || a == b {
                return bad(format!("correlation pair ({a}, {b}) invalid"));
            }
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("correlation strength {s} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

const NAMES: [&str; 40] = [
    "person", "car", "chair", "cup", "dog", "bottle", "bicycle", "bench", "umbrella", "truck",
    "horse", "book", "clock", "vase", "bird", "laptop", "kite", "apple", "zebra", "oven",
    "train", "sink", "bowl", "tie", "boat", "knife", "sheep", "pizza", "mouse", "bed",
    "cat", "donut", "spoon", "toilet", "cake", "couch", "bus", "fork", "giraffe", "tv",
];

/// Default class name for index `i`: object-like names in a non-alphabetical
/// rank order, suffixed once the list is exhausted.
pub fn class_name(i: usize) -> String {
    let base = NAMES[i % NAMES.len()];
    if i < NAMES.len() {
        String::from(base)
    } else {
        format!("{base}_{}", i / NAMES.len())
    }
}

/// Draws a vocabulary and a sample collection; deterministic per seed.
pub fn generate(
    config: &GeneratorConfig,
) -> Result<(LabelVocabulary, Vec<SampleRecord>), DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.feature_dim;
    let cells = config.grid_size * config.grid_size;

    let prototypes: Vec<Vec<f64>> = (0..config.n_classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            normalized(v)
        })
        .collect();
    let weights: Vec<f64> = (0..config.n_classes)
        .map(|c| libm::pow((c + 1) as f64, -config.zipf_exponent))
        .collect();

    let mut samples = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        let labels = sample_labels(config, &weights, &mut rng);

        let mut spatial = vec![vec![0.0; dim]; cells];
        let mut pooled = vec![0.0; dim];
        let mut cell_ids: Vec<usize> = (0..cells).collect();
        let max_size = (cells / 2).max(1);
        for &l in &labels {
            let size = rng.random_range(1..=max_size);
            cell_ids.shuffle(&mut rng);
            for &cell in &cell_ids[..size] {
                add_into(&mut spatial[cell], &prototypes[l], 1.0);
            }
            add_into(&mut pooled, &prototypes[l], size as f64);
        }
        let mut global = normalized(pooled);
        if config.noise_sigma > 0.0 {
            for x in global.iter_mut().chain(spatial.iter_mut().flatten()) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += config.noise_sigma * z;
            }
        }
        samples.push(SampleRecord {
            global_feature: global,
            spatial_features: spatial,
            labels,
        });
    }

    let names = (0..config.n_classes).map(class_name).collect();
    let mut vocab = LabelVocabulary::new(names, vec![0; config.n_classes])?;
    vocab.recount(&samples);
    Ok((vocab, samples))
}

fn sample_labels(config: &GeneratorConfig, weights: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (lo, hi) = config.labels_per_sample;
    let k = rng.random_range(lo..=hi);

    // Weighted draw without replacement.
    let mut present = vec![false; config.n_classes];
    let mut marginal = Vec::with_capacity(k);
    let mut remaining: f64 = weights.iter().sum();
    for _ in 0..k {
        let mut target = rng.random::<f64>() * remaining;
        let mut pick = None;
        for (c, &w) in weights.iter().enumerate() {
            if present[c] {
                continue;
            }
            pick = Some(c);
            if target < w {
                break;
            }
            target -= w;
        }
        let c = pick.expect("k <= n_classes leaves a class to draw");
        present[c] = true;
        remaining -= weights[c];
        marginal.push(c);
    }

    // Pairwise conditional boosts, then clip back to the upper bound by
    // dropping marginal draws not involved in a boost.
    let mut protected = vec![false; config.n_classes];
    let mut boosted = Vec::new();
    for &(a, b, s) in &config.correlation_pairs {
        let roll = rng.random::<f64>();
        if present[a] && !present[b] && roll < s {
            present[b] = true;
            protected[a] = true;
            protected[b] = true;
            boosted.push(b);
        }
    }
    let mut labels = marginal;
    labels.extend(boosted);
    while labels.len() > hi {
        let drop = labels
            .iter()
            .rposition(|&l| !protected[l])
            .unwrap_or(labels.len() - 1);
        labels.remove(drop);
    }
    labels
}

fn add_into(acc: &mut [f64], v: &[f64], scale: f64) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_label_config() -> GeneratorConfig {
        GeneratorConfig {
            n_classes: 6,
            n_samples: 60,
            labels_per_sample: (1, 1),
            correlation_pairs: vec![],
            noise_sigma: 0.0,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn single_label_noise_free_feature_is_prototype() {
        let cfg = single_label_config();
        let (_, samples) = generate(&cfg).unwrap();
        // Samples sharing a label share the exact feature.
        for a in &samples {
            for b in &samples {
                if a.labels == b.labels {
                    for (x, y) in a.global_feature.iter().zip(&b.global_feature) {
                        assert!((x - y).abs() < 1e-12);
                    }
                }
            }
            let norm: f64 = a.global_feature.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_prototype_recovers_single_labels() {
        let cfg = single_label_config();
        let (_, samples) = generate(&cfg).unwrap();
        let mut protos: Vec<Option<Vec<f64>>> = vec![None; cfg.n_classes];
        for s in &samples {
            protos[s.labels[0]].get_or_insert_with(|| s.global_feature.clone());
        }
        for s in &samples {
            let best = (0..cfg.n_classes)
                .filter_map(|c| protos[c].as_ref().map(|p| (c, p)))
                .map(|(c, p)| {
                    let d: f64 = p.iter().zip(&s.global_feature).map(|(a, b)| (a - b) * (a - b)).sum();
                    (c, d)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            assert_eq!(best, s.labels[0]);
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let cfg = GeneratorConfig {
            n_samples: 300,
            ..GeneratorConfig::default()
        };
        let (v1, s1) = generate(&cfg).unwrap();
        let (v2, s2) = generate(&cfg).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(s1, s2);
        let mut counts = vec![0u64; cfg.n_classes];
        for s in &s1 {
            s.validate(cfg.n_classes).unwrap();
            assert!(s.labels.len() <= cfg.labels_per_sample.1);
            assert_eq!(s.spatial_features.len(), 16);
            s.labels.iter().for_each(|&l| counts[l] += 1);
        }
        assert_eq!(v1.frequencies(), &counts[..]);
    }

    #[test]
    fn rejects_infeasible_configs() {
        let too_many = GeneratorConfig {
            n_classes: 3,
            labels_per_sample: (1, 4),
            ..GeneratorConfig::default()
        };
        assert!(matches!(generate(&too_many), Err(DataError::InvalidConfig(_))));
        let bad_strength = GeneratorConfig {
            correlation_pairs: vec![(0, 1, 1.5)],
            ..GeneratorConfig::default()
        };
        assert!(bad_strength.validate().is_err());
        let bad_noise = GeneratorConfig {
            noise_sigma: -1.0,
            ..GeneratorConfig::default()
        };
        assert!(bad_noise.validate().is_err());
    }

    #[test]
    fn vocabulary_tokens() {
        let v = LabelVocabulary::new(vec!["a".into(), "b".into()], vec![1, 2]).unwrap();
        assert_eq!(v.size(), 4);
        assert_eq!(v.start_token(), 2);
        assert_eq!(v.end_token(), 3);
        assert_eq!(v.name(3), "<end>");
        assert_eq!(v.index_of("b"), Some(1));
        assert!(LabelVocabulary::new(vec!["a".into(), "a".into()], vec![0, 0]).is_err());
    }
}
