//! Labelled datasets, the XOR toy generator, MNIST IDX ingestion, and seeded
//! subsetting and batching.

mod idx;
mod toy;

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::tensor::Tensor;

pub use idx::{
    encode_idx_images, encode_idx_labels, load_mnist_idx, parse_idx_images, parse_idx_labels,
    IdxImages, IMAGE_MAGIC, LABEL_MAGIC,
};
pub use toy::{gen_xor_toy, ToyConfig, TOY_CENTERS};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: i64,
}

/// Label encoding of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelDomain {
    /// Binary labels in {-1, +1}.
    Signed,
    /// Class indices `0..C`.
    Classes(usize),
}

impl LabelDomain {
    pub fn num_classes(self) -> usize {
        match self {
            LabelDomain::Signed => 2,
            LabelDomain::Classes(c) => c,
        }
    }

    pub fn contains(self, label: i64) -> bool {
        match self {
            LabelDomain::Signed => label == 1 || label == -1,
            LabelDomain::Classes(c) => label >= 0 && (label as usize) < c,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    domain: LabelDomain,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, domain: LabelDomain, feature_dim: usize) -> Result<Self> {
        for s in &samples {
            if s.features.len() != feature_dim {
                return Err(Error::Shape {
                    op: "dataset",
                    left: vec![s.features.len()],
                    right: vec![feature_dim],
                });
            }
            if !s.features.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("sample features".into()));
            }
            if !domain.contains(s.label) {
                return Err(Error::Label {
                    label: s.label,
                    reason: format!("outside label domain {domain:?}"),
                });
            }
        }
        Ok(Self {
            samples,
            domain,
            feature_dim,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn domain(&self) -> LabelDomain {
        self.domain
    }

    pub fn num_classes(&self) -> usize {
        self.domain.num_classes()
    }

    /// `[indices.len(), feature_dim]` matrix of the selected samples.
    pub fn features_matrix(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.feature_dim);
        for &i in indices {
            data.extend_from_slice(&self.samples[i].features);
        }
        Tensor::matrix(indices.len(), self.feature_dim, data)
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<i64> {
        indices.iter().map(|&i| self.samples[i].label).collect()
    }

    /// `n` samples drawn uniformly without replacement; order follows the
    /// seeded permutation.
    pub fn subset(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n > self.len() {
            return Err(Error::Size {
                requested: n,
                available: self.len(),
            });
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut seeded(seed));
        let samples = order[..n]
            .iter()
            .map(|&i| self.samples[i].clone())
            .collect();
        Ok(Dataset {
            samples,
            domain: self.domain,
            feature_dim: self.feature_dim,
        })
    }

    /// Index batches covering every sample once, in a seeded order. The last
    /// batch may be short.
    pub fn batches(&self, batch_size: usize, shuffle_seed: u64) -> Result<Vec<Vec<usize>>> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut seeded(shuffle_seed));
        Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
    }

    /// CSV with header `x0,x1,...,label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.feature_dim {
            let _ = write!(out, "x{j},");
        }
        out.push_str("label\n");
        for s in &self.samples {
            for v in &s.features {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", s.label);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn numbered(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample {
                features: vec![i as f64],
                label: 0,
            })
            .collect();
        Dataset::new(samples, LabelDomain::Classes(1), 1).unwrap()
    }

    #[test]
    fn full_subset_is_a_permutation() {
        let ds = numbered(50);
        let sub = ds.subset(50, 3).unwrap();
        let mut ids: Vec<usize> = sub
            .samples()
            .iter()
            .map(|s| s.features[0] as usize)
            .collect();
        assert_ne!(ids, (0..50).collect::<Vec<_>>());
        ids.sort();
        assert_eq!(ids, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_subset_rejected() {
        assert!(matches!(numbered(5).subset(6, 0), Err(Error::Size { .. })));
    }

    #[test]
    fn batch_counts() {
        let b = numbered(2000).batches(32, 0).unwrap();
        assert_eq!(b.len(), 63);
        assert!(b[..62].iter().all(|x| x.len() == 32));
        assert_eq!(b[62].len(), 16);
        assert!(numbered(3).batches(0, 0).is_err());
    }

    #[test]
    fn same_seed_same_order() {
        let ds = numbered(100);
        assert_eq!(ds.batches(7, 11).unwrap(), ds.batches(7, 11).unwrap());
        assert_eq!(ds.subset(30, 5).unwrap(), ds.subset(30, 5).unwrap());
        assert_ne!(ds.batches(7, 11).unwrap(), ds.batches(7, 12).unwrap());
    }

    #[test]
    fn dataset_validates_labels_and_widths() {
        let bad_label = vec![Sample {
            features: vec![0.0],
            label: 0,
        }];
        assert!(Dataset::new(bad_label, LabelDomain::Signed, 1).is_err());
        let bad_width = vec![Sample {
            features: vec![0.0, 1.0],
            label: 1,
        }];
        assert!(Dataset::new(bad_width, LabelDomain::Signed, 1).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let ds = Dataset::new(
            vec![Sample {
                features: vec![0.5, -1.0],
                label: -1,
            }],
            LabelDomain::Signed,
            2,
        )
        .unwrap();
        assert_eq!(ds.to_csv(), "x0,x1,label\n0.5,-1,-1\n");
    }

    proptest! {
        #[test]
        fn batches_cover_each_sample_once(n in 1usize..300, size in 1usize..64, seed in any::<u64>()) {
            let mut seen: Vec<usize> = numbered(n).batches(size, seed).unwrap().concat();
            seen.sort();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }
}
