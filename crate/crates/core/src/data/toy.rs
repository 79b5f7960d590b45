use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, LabelDomain, Sample};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Cluster centres and their labels, in generation order.
pub const TOY_CENTERS: [((f64, f64), i64); 4] = [
    ((-1.0, -1.0), 1),
    ((1.0, 1.0), 1),
    ((-1.0, 1.0), -1),
    ((1.0, -1.0), -1),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub n_per_cluster: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_per_cluster: 500,
            sigma: 0.5,
            seed: 0,
        }
    }
}

/// Four isotropic Gaussian clusters in an XOR arrangement: `n_per_cluster`
/// points around each of [`TOY_CENTERS`].
pub fn gen_xor_toy(cfg: &ToyConfig) -> Result<Dataset> {
    if !(cfg.sigma > 0.0) || !cfg.sigma.is_finite() {
        return Err(Error::Config(format!(
            "toy sigma must be positive, got {}",
            cfg.sigma
        )));
    }
    if cfg.n_per_cluster == 0 {
        return Err(Error::Config("toy clusters need at least one point".into()));
    }
    let mut rng = seeded(cfg.seed);
    let mut samples = Vec::with_capacity(4 * cfg.n_per_cluster);
    for ((cx, cy), label) in TOY_CENTERS {
        for _ in 0..cfg.n_per_cluster {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            samples.push(Sample {
                features: vec![cx + cfg.sigma * dx, cy + cfg.sigma * dy],
                label,
            });
        }
    }
    Dataset::new(samples, LabelDomain::Signed, 2)
}
