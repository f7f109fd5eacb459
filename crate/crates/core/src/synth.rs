//! Synthetic domain-shift benchmark generator and the reference NBNN
//! oracle.
//!
//! The generator draws per-class isotropic Gaussian descriptor clouds
//! for a target domain and a shifted/scaled copy for a source domain,
//! at sizes small enough that the explicit-loop oracle can verify the
//! whole classification pipeline. The oracle is deliberately naive: no
//! index, no shared kernels, just the definition.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataset::{ClassId, Descriptor, DescriptorBag, DomainDataset};
use crate::nbnn::DistanceVariant;
use crate::rng::{mix_str, mix_str_n, SeedStream};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("auto-placed means need n_classes <= dim, got {classes} classes in dim {dim}")]
    TooManyClasses { classes: u32, dim: usize },
    #[error("class {0} has an empty pool")]
    EmptyPool(ClassId),
}

/// Recipe for one synthetic source/target pair.
///
/// Target descriptors of class `c` are drawn from an isotropic
/// Gaussian at `mu_c` with scale `sigma`; source descriptors from a
/// Gaussian at `kappa * mu_c + delta` (plus an optional per-class
/// offset) with scale `kappa * sigma`. Class means are placed pairwise
/// `mean_separation * sigma` apart along random orthonormal
/// directions. Everything is a pure function of the spec.
#[derive(Clone, Debug)]
pub struct ShiftSpec {
    pub n_classes: u32,
    pub dim: usize,
    pub sigma: f64,
    /// Pairwise distance between class means, in units of sigma.
    pub mean_separation: f64,
    /// Norm of the source marginal-shift vector, in units of sigma.
    /// The direction is drawn from the seed.
    pub delta_norm: f64,
    /// Source scale multiplier.
    pub kappa: f64,
    /// Optional label-conditional source offsets (one vector per class,
    /// in data units).
    pub class_offsets: Option<Vec<Vec<f64>>>,
    pub descriptors_per_image: usize,
    pub source_images_per_class: usize,
    pub target_labeled_per_class: usize,
    pub target_test_per_class: usize,
    pub seed: u64,
}

impl ShiftSpec {
    /// Defaults mirroring the scarce-target protocol: 20 source and 3
    /// labeled target images per class, 50 descriptors per image.
    pub fn new(n_classes: u32, dim: usize, seed: u64) -> Self {
        ShiftSpec {
            n_classes,
            dim,
            sigma: 1.0,
            mean_separation: 4.0,
            delta_norm: 0.0,
            kappa: 1.0,
            class_offsets: None,
            descriptors_per_image: 50,
            source_images_per_class: 20,
            target_labeled_per_class: 3,
            target_test_per_class: 30,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_classes < 2 {
            return Err(SynthError::InvalidSpec("need at least 2 classes".into()));
        }
        if self.dim == 0 {
            return Err(SynthError::InvalidSpec("dim must be >= 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(SynthError::InvalidSpec("sigma must be positive and finite".into()));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(SynthError::InvalidSpec("kappa must be positive and finite".into()));
        }
        if !(self.mean_separation.is_finite() && self.mean_separation >= 0.0) {
            return Err(SynthError::InvalidSpec("mean_separation must be finite and >= 0".into()));
        }
        if !(self.delta_norm.is_finite() && self.delta_norm >= 0.0) {
            return Err(SynthError::InvalidSpec("delta_norm must be finite and >= 0".into()));
        }
        if self.descriptors_per_image == 0 {
            return Err(SynthError::InvalidSpec("descriptors_per_image must be >= 1".into()));
        }
        if let Some(offsets) = &self.class_offsets {
            if offsets.len() != self.n_classes as usize {
                return Err(SynthError::InvalidSpec("class_offsets must have one vector per class".into()));
            }
            if offsets.iter().any(|o| o.len() != self.dim) {
                return Err(SynthError::InvalidSpec("class_offsets vectors must match dim".into()));
            }
            if offsets.iter().flatten().any(|v| !v.is_finite()) {
                return Err(SynthError::InvalidSpec("class_offsets must be finite".into()));
            }
        }
        if self.n_classes as usize > self.dim {
            return Err(SynthError::TooManyClasses { classes: self.n_classes, dim: self.dim });
        }
        Ok(())
    }
}

/// Output of [`gen_pair`]: a source domain, the scarce labeled target
/// split, and the disjoint target test split, plus the generator's
/// internal geometry for diagnostics.
#[derive(Clone, Debug)]
pub struct SynthPair {
    pub source: DomainDataset,
    pub target_labeled: DomainDataset,
    pub target_test: DomainDataset,
    pub means: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
}

/// C random orthonormal directions in `dim` dimensions (Gram-Schmidt on
/// Gaussian draws).
fn orthonormal_directions(c: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeedStream::new(seed);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(c);
    while dirs.len() < c {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.next_gauss()).collect();
        for d in &dirs {
            let dot: f64 = v.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
            for (vi, di) in v.iter_mut().zip(d.iter()) {
                *vi -= dot * di;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue; // degenerate draw, resample
        }
        for vi in &mut v {
            *vi /= norm;
        }
        dirs.push(v);
    }
    dirs
}

/// Generates a seeded source/target pair under the spec's shift.
pub fn gen_pair(spec: &ShiftSpec) -> Result<SynthPair, SynthError> {
    spec.validate()?;
    let c = spec.n_classes as usize;
    let dim = spec.dim;
    let label_set: Vec<ClassId> = (1..=spec.n_classes).collect();

    // pairwise distance s between points a*e_i and a*e_j on orthonormal
    // directions is a*sqrt(2), so a = s / sqrt(2)
    let radius = spec.mean_separation * spec.sigma / std::f64::consts::SQRT_2;
    let dirs = orthonormal_directions(c, dim, mix_str(spec.seed, "means"));
    let means: Vec<Vec<f64>> = dirs.iter().map(|d| d.iter().map(|x| x * radius).collect()).collect();

    let delta: Vec<f64> = if spec.delta_norm > 0.0 {
        let mut rng = SeedStream::new(mix_str(spec.seed, "delta"));
        let mut v: Vec<f64> = (0..dim).map(|_| rng.next_gauss()).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = spec.delta_norm * spec.sigma / norm.max(1e-300);
        for vi in &mut v {
            *vi *= scale;
        }
        v
    } else {
        vec![0.0; dim]
    };

    let mut source = DomainDataset::new("source", label_set.clone(), dim);
    let mut target_labeled = DomainDataset::new("target_labeled", label_set.clone(), dim);
    let mut target_test = DomainDataset::new("target_test", label_set, dim);

    for (ci, mean) in means.iter().enumerate() {
        let class_id = ci as ClassId + 1;

        // per-(domain, class) streams so parallel generation over
        // classes would reproduce the sequential output
        let mut tgt_rng = SeedStream::new(mix_str_n(spec.seed, "target", class_id as u64));
        let n_target = spec.target_labeled_per_class + spec.target_test_per_class;
        for img in 0..n_target {
            let bag = gaussian_bag(
                &mut tgt_rng,
                mean,
                spec.sigma,
                spec.descriptors_per_image,
                class_id,
                "target",
                &format!("t{class_id:02}_{img:04}"),
            );
            if img < spec.target_labeled_per_class {
                target_labeled.bags.push(bag);
            } else {
                target_test.bags.push(bag);
            }
        }

        let mut src_mean: Vec<f64> =
            mean.iter().zip(delta.iter()).map(|(m, d)| spec.kappa * m + d).collect();
        if let Some(offsets) = &spec.class_offsets {
            for (s, o) in src_mean.iter_mut().zip(offsets[ci].iter()) {
                *s += o;
            }
        }
        let src_sigma = spec.kappa * spec.sigma;
        let mut src_rng = SeedStream::new(mix_str_n(spec.seed, "source", class_id as u64));
        for img in 0..spec.source_images_per_class {
            source.bags.push(gaussian_bag(
                &mut src_rng,
                &src_mean,
                src_sigma,
                spec.descriptors_per_image,
                class_id,
                "source",
                &format!("s{class_id:02}_{img:04}"),
            ));
        }
    }
    // domain tags track the dataset they live in
    for bag in &mut target_labeled.bags {
        bag.domain = "target_labeled".into();
    }
    for bag in &mut target_test.bags {
        bag.domain = "target_test".into();
    }
    Ok(SynthPair { source, target_labeled, target_test, means, delta })
}

fn gaussian_bag(
    rng: &mut SeedStream,
    mean: &[f64],
    sigma: f64,
    n: usize,
    label: ClassId,
    domain: &str,
    image_id: &str,
) -> DescriptorBag {
    let descriptors = (0..n)
        .map(|_| {
            Descriptor::new(mean.iter().map(|m| (m + sigma * rng.next_gauss()) as f32).collect())
        })
        .collect();
    DescriptorBag::new(descriptors, label, domain, image_id)
}

/// One oracle prediction with the full per-class distance profile.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePrediction {
    pub predicted: ClassId,
    pub distances: Vec<(ClassId, f64)>,
}

/// Reference NBNN: explicit loops straight from the definition.
///
/// For every bag, for every class, sums each descriptor's distance to
/// its nearest neighbor in the class pool; predicts the class with the
/// minimal sum, ties to the smallest class id. Complexity is
/// O(bags * descriptors * classes * pool); intended for small
/// verification instances only.
pub fn oracle_nbnn(
    bags: &[DescriptorBag],
    pools: &BTreeMap<ClassId, Vec<Descriptor>>,
    variant: DistanceVariant,
) -> Result<Vec<OraclePrediction>, SynthError> {
    for (class, pool) in pools {
        if pool.is_empty() {
            return Err(SynthError::EmptyPool(*class));
        }
    }
    let mut out = Vec::with_capacity(bags.len());
    for bag in bags {
        let mut distances: Vec<(ClassId, f64)> = Vec::with_capacity(pools.len());
        // BTreeMap iteration is ascending in class id, which is exactly
        // the tie order we need
        for (&class, pool) in pools {
            let mut total = 0.0f64;
            for descriptor in &bag.descriptors {
                let mut best = f64::INFINITY;
                for p in pool {
                    let mut d = 0.0f64;
                    for (a, b) in descriptor.values.iter().zip(p.values.iter()) {
                        let diff = *a as f64 - *b as f64;
                        d += diff * diff;
                    }
                    if d < best {
                        best = d;
                    }
                }
                total += match variant {
                    DistanceVariant::L2Sq => best,
                    DistanceVariant::L2 => best.sqrt(),
                };
            }
            distances.push((class, total));
        }
        let mut predicted = distances[0].0;
        let mut best = distances[0].1;
        for &(class, d) in &distances[1..] {
            if d < best {
                best = d;
                predicted = class;
            }
        }
        out.push(OraclePrediction { predicted, distances });
    }
    Ok(out)
}

/// Convenience: flattens a dataset into plain per-class descriptor
/// lists for the oracle (no provenance, no index).
pub fn plain_pools(ds: &DomainDataset) -> BTreeMap<ClassId, Vec<Descriptor>> {
    let mut pools: BTreeMap<ClassId, Vec<Descriptor>> = BTreeMap::new();
    for bag in &ds.bags {
        pools.entry(bag.label).or_default().extend(bag.descriptors.iter().cloned());
    }
    pools
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_pair_counts_match_spec() {
        let mut spec = ShiftSpec::new(10, 64, 7);
        spec.descriptors_per_image = 50;
        let pair = gen_pair(&spec).unwrap();
        assert_eq!(pair.source.descriptor_count(), 10 * 20 * 50);
        assert_eq!(pair.target_labeled.descriptor_count(), 10 * 3 * 50);
        assert_eq!(pair.target_test.descriptor_count(), 10 * 30 * 50);
        assert!(crate::dataset::validate_dataset(&pair.source).is_empty());
        assert!(crate::dataset::validate_dataset(&pair.target_labeled).is_empty());
        assert!(crate::dataset::validate_dataset(&pair.target_test).is_empty());
    }

    #[test]
    fn gen_pair_is_deterministic() {
        let spec = ShiftSpec::new(4, 8, 99);
        let a = gen_pair(&spec).unwrap();
        let b = gen_pair(&spec).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.target_labeled, b.target_labeled);
        assert_eq!(a.target_test, b.target_test);
        let other = gen_pair(&ShiftSpec::new(4, 8, 100)).unwrap();
        assert_ne!(a.source, other.source);
    }

    #[test]
    fn zero_shift_means_identical_distributions() {
        let spec = ShiftSpec::new(3, 6, 5);
        let pair = gen_pair(&spec).unwrap();
        assert!(pair.delta.iter().all(|&d| d == 0.0));
        // kappa = 1, delta = 0: source class means equal target means,
        // verified through the empirical mean of a large-ish sample
        for class in 1..=3u32 {
            let src: Vec<&Descriptor> = pair
                .source
                .bags
                .iter()
                .filter(|b| b.label == class)
                .flat_map(|b| b.descriptors.iter())
                .collect();
            let mean_est: Vec<f64> = (0..6)
                .map(|d| src.iter().map(|x| x.values[d] as f64).sum::<f64>() / src.len() as f64)
                .collect();
            for (est, truth) in mean_est.iter().zip(pair.means[class as usize - 1].iter()) {
                assert!((est - truth).abs() < 0.15, "est {est} truth {truth}");
            }
        }
    }

    #[test]
    fn labeled_and_test_splits_are_disjoint_by_image_id() {
        let pair = gen_pair(&ShiftSpec::new(3, 4, 1)).unwrap();
        let labeled: std::collections::HashSet<_> =
            pair.target_labeled.bags.iter().map(|b| b.image_id.clone()).collect();
        assert!(pair.target_test.bags.iter().all(|b| !labeled.contains(&b.image_id)));
    }

    #[test]
    fn class_means_are_separated_as_requested() {
        let spec = ShiftSpec::new(5, 16, 3);
        let pair = gen_pair(&spec).unwrap();
        for i in 0..5 {
            for j in (i + 1)..5 {
                let d2: f64 = pair.means[i]
                    .iter()
                    .zip(pair.means[j].iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                assert!((d2.sqrt() - 4.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spec_validation_rejects_bad_inputs() {
        assert!(gen_pair(&ShiftSpec::new(1, 4, 0)).is_err());
        let mut s = ShiftSpec::new(3, 2, 0);
        assert!(matches!(gen_pair(&s), Err(SynthError::TooManyClasses { .. })));
        s = ShiftSpec::new(2, 4, 0);
        s.sigma = 0.0;
        assert!(gen_pair(&s).is_err());
    }

    #[test]
    fn oracle_single_class_always_predicts_it() {
        let pair = gen_pair(&ShiftSpec::new(2, 4, 8)).unwrap();
        let mut pools = plain_pools(&pair.target_labeled);
        pools.remove(&2);
        let preds = oracle_nbnn(&pair.target_test.bags, &pools, DistanceVariant::L2Sq).unwrap();
        assert!(preds.iter().all(|p| p.predicted == 1));
    }

    #[test]
    fn oracle_zero_distance_for_bag_inside_pool() {
        let mut spec = ShiftSpec::new(2, 4, 11);
        spec.target_labeled_per_class = 2;
        let pair = gen_pair(&spec).unwrap();
        let pools = plain_pools(&pair.target_labeled);
        let bag = &pair.target_labeled.bags[0];
        let preds = oracle_nbnn(std::slice::from_ref(bag), &pools, DistanceVariant::L2Sq).unwrap();
        assert_eq!(preds[0].predicted, bag.label);
        let positive = preds[0]
            .distances
            .iter()
            .find(|(c, _)| *c == bag.label)
            .map(|(_, d)| *d)
            .unwrap();
        assert_eq!(positive, 0.0);
    }

    #[test]
    fn oracle_rejects_empty_pool() {
        let pair = gen_pair(&ShiftSpec::new(2, 4, 8)).unwrap();
        let mut pools = plain_pools(&pair.target_labeled);
        pools.insert(2, Vec::new());
        assert!(matches!(
            oracle_nbnn(&pair.target_test.bags, &pools, DistanceVariant::L2Sq),
            Err(SynthError::EmptyPool(2))
        ));
    }
}
