//! Core data model: descriptors, per-image descriptor bags, domain
//! datasets, and per-class pools.
//!
//! Types are plain data with public fields; well-formedness is checked
//! by [`validate_dataset`], which reports violations as values rather
//! than failing. Anything that consumes a dataset for computation
//! (pooling, index builds, classification) rejects invalid input up
//! front.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Dense class identifier. Datasets map external label names to ids via
/// their manifest; internally classes are small integers so per-class
/// state can live in flat arrays.
pub type ClassId = u32;

/// A single local feature vector. Stored as `f32` (matching the on-disk
/// format); all distance arithmetic promotes to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f32>,
}

impl Descriptor {
    pub fn new(values: Vec<f32>) -> Self {
        Descriptor { values }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// All descriptors extracted from one image, with its label and origin.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorBag {
    pub descriptors: Vec<Descriptor>,
    pub label: ClassId,
    /// Name of the domain (dataset) the image came from.
    pub domain: String,
    /// Identifier of the source image. Augmented variants of one image
    /// share its id so split logic keeps them on one side.
    pub image_id: String,
}

impl DescriptorBag {
    pub fn new(
        descriptors: Vec<Descriptor>,
        label: ClassId,
        domain: impl Into<String>,
        image_id: impl Into<String>,
    ) -> Self {
        DescriptorBag { descriptors, label, domain: domain.into(), image_id: image_id.into() }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

/// A named collection of descriptor bags sharing one label set.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    pub name: String,
    /// Strictly increasing list of class ids every bag label must
    /// belong to.
    pub label_set: Vec<ClassId>,
    /// Descriptor dimensionality shared by every bag.
    pub dim: usize,
    pub bags: Vec<DescriptorBag>,
}

impl DomainDataset {
    pub fn new(name: impl Into<String>, label_set: Vec<ClassId>, dim: usize) -> Self {
        DomainDataset { name: name.into(), label_set, dim, bags: Vec::new() }
    }

    pub fn descriptor_count(&self) -> usize {
        self.bags.iter().map(|b| b.len()).sum()
    }

    /// Ids of bags, deduplicated, in first-appearance order.
    pub fn image_ids(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for bag in &self.bags {
            if seen.insert(bag.image_id.as_str()) {
                out.push(bag.image_id.as_str());
            }
        }
        out
    }
}

/// One well-formedness defect found by [`validate_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// `label_set` is not strictly increasing.
    UnsortedLabelSet,
    /// A bag has no descriptors.
    EmptyBag { image_id: String },
    /// A bag's label is not in the dataset's label set.
    UnknownLabel { image_id: String, label: ClassId },
    /// A descriptor's length differs from the dataset dimension.
    DimMismatch { image_id: String, expected: usize, got: usize },
    /// A descriptor contains NaN or infinite entries.
    NonFinite { image_id: String, descriptor: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnsortedLabelSet => write!(f, "label set is not strictly increasing"),
            Violation::EmptyBag { image_id } => write!(f, "bag '{image_id}' has no descriptors"),
            Violation::UnknownLabel { image_id, label } => {
                write!(f, "bag '{image_id}' has label {label} outside the label set")
            }
            Violation::DimMismatch { image_id, expected, got } => {
                write!(f, "bag '{image_id}' has a descriptor of dim {got}, dataset dim is {expected}")
            }
            Violation::NonFinite { image_id, descriptor } => {
                write!(f, "bag '{image_id}' descriptor #{descriptor} has a non-finite value")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset '{name}' is invalid: {}", format_violations(.violations))]
    Invalid { name: String, violations: Vec<Violation> },
}

fn format_violations(violations: &[Violation]) -> String {
    let mut parts: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
    if violations.len() > 5 {
        parts.push(format!("... and {} more", violations.len() - 5));
    }
    parts.join("; ")
}

/// Checks every dataset invariant and returns the violations found.
/// An empty list means the dataset is well-formed.
pub fn validate_dataset(ds: &DomainDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if !ds.label_set.windows(2).all(|w| w[0] < w[1]) {
        out.push(Violation::UnsortedLabelSet);
    }
    for bag in &ds.bags {
        if bag.is_empty() {
            out.push(Violation::EmptyBag { image_id: bag.image_id.clone() });
        }
        if !ds.label_set.contains(&bag.label) {
            out.push(Violation::UnknownLabel { image_id: bag.image_id.clone(), label: bag.label });
        }
        for (i, d) in bag.descriptors.iter().enumerate() {
            if d.dim() != ds.dim {
                out.push(Violation::DimMismatch {
                    image_id: bag.image_id.clone(),
                    expected: ds.dim,
                    got: d.dim(),
                });
                // one dim report per bag is enough
                break;
            }
            if !d.is_finite() {
                out.push(Violation::NonFinite { image_id: bag.image_id.clone(), descriptor: i });
                break;
            }
        }
    }
    out
}

/// Returns `Ok(())` when the dataset is well-formed, the violation
/// report otherwise.
pub fn ensure_valid(ds: &DomainDataset) -> Result<(), DatasetError> {
    let violations = validate_dataset(ds);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(DatasetError::Invalid { name: ds.name.clone(), violations })
    }
}

/// Label-set equality as sets; symmetric by construction.
pub fn label_sets_equal(a: &[ClassId], b: &[ClassId]) -> bool {
    let mut sa: Vec<ClassId> = a.to_vec();
    let mut sb: Vec<ClassId> = b.to_vec();
    sa.sort_unstable();
    sa.dedup();
    sb.sort_unstable();
    sb.dedup();
    sa == sb
}

/// Flat per-class descriptor pool with origin bookkeeping.
///
/// `runs` compresses provenance: consecutive descriptors from the same
/// origin domain form one `(origin, count)` run, so every pooled
/// descriptor carries exactly one origin tag without a per-descriptor
/// string.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassPool {
    pub descriptors: Vec<Descriptor>,
    pub runs: Vec<(String, usize)>,
}

impl ClassPool {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Appends descriptors under one origin tag.
    pub fn extend_from(&mut self, origin: &str, descriptors: impl IntoIterator<Item = Descriptor>) {
        let before = self.descriptors.len();
        self.descriptors.extend(descriptors);
        let added = self.descriptors.len() - before;
        if added == 0 {
            return;
        }
        match self.runs.last_mut() {
            Some((name, count)) if name == origin => *count += added,
            _ => self.runs.push((origin.to_string(), added)),
        }
    }

    /// Total descriptors carrying the given origin tag.
    pub fn count_for(&self, origin: &str) -> usize {
        self.runs.iter().filter(|(n, _)| n == origin).map(|(_, c)| c).sum()
    }

    /// Origin tag of descriptor `i`.
    pub fn origin_of(&self, i: usize) -> Option<&str> {
        let mut offset = 0;
        for (name, count) in &self.runs {
            offset += count;
            if i < offset {
                return Some(name);
            }
        }
        None
    }

    /// Sum of run lengths; must always equal `len()`.
    pub fn run_total(&self) -> usize {
        self.runs.iter().map(|(_, c)| c).sum()
    }
}

/// Flattens a dataset into per-class pools tagged with the dataset name.
///
/// Every descriptor of every bag appears exactly once under its bag's
/// label; classes with no descriptors are absent from the map.
pub fn pool_by_class(ds: &DomainDataset) -> Result<BTreeMap<ClassId, ClassPool>, DatasetError> {
    ensure_valid(ds)?;
    let mut pools: BTreeMap<ClassId, ClassPool> = BTreeMap::new();
    for bag in &ds.bags {
        pools
            .entry(bag.label)
            .or_default()
            .extend_from(&ds.name, bag.descriptors.iter().cloned());
    }
    Ok(pools)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn desc(values: &[f32]) -> Descriptor {
        Descriptor::new(values.to_vec())
    }

    fn two_class_dataset() -> DomainDataset {
        let mut ds = DomainDataset::new("toy", vec![1, 2], 2);
        ds.bags.push(DescriptorBag::new(vec![desc(&[0.0, 0.0]), desc(&[1.0, 0.0])], 1, "toy", "a"));
        ds.bags.push(DescriptorBag::new(vec![desc(&[5.0, 5.0])], 2, "toy", "b"));
        ds
    }

    #[test]
    fn well_formed_dataset_has_no_violations() {
        assert!(validate_dataset(&two_class_dataset()).is_empty());
    }

    #[test]
    fn dim_mismatch_is_reported() {
        let mut ds = two_class_dataset();
        ds.bags.push(DescriptorBag::new(vec![desc(&[1.0, 2.0, 3.0])], 1, "toy", "c"));
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::DimMismatch { expected: 2, got: 3, .. }));
    }

    #[test]
    fn unknown_label_is_reported() {
        let mut ds = two_class_dataset();
        ds.bags.push(DescriptorBag::new(vec![desc(&[1.0, 2.0])], 9, "toy", "c"));
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::UnknownLabel { label: 9, .. }));
    }

    #[test]
    fn empty_bag_and_non_finite_are_reported() {
        let mut ds = two_class_dataset();
        ds.bags.push(DescriptorBag::new(vec![], 1, "toy", "empty"));
        ds.bags.push(DescriptorBag::new(vec![desc(&[f32::NAN, 0.0])], 1, "toy", "nan"));
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn pool_by_class_preserves_counts() {
        let mut ds = DomainDataset::new("toy", vec![1], 2);
        ds.bags.push(DescriptorBag::new(vec![desc(&[0.0, 0.0]); 3], 1, "toy", "a"));
        ds.bags.push(DescriptorBag::new(vec![desc(&[1.0, 1.0]); 5], 1, "toy", "b"));
        let pools = pool_by_class(&ds).unwrap();
        assert_eq!(pools[&1].len(), 8);
        assert_eq!(pools[&1].count_for("toy"), 8);
        assert_eq!(pools[&1].run_total(), 8);
    }

    #[test]
    fn pool_by_class_omits_bagless_classes() {
        let ds = DomainDataset::new("toy", vec![1, 2], 2);
        let mut ds = ds;
        ds.bags.push(DescriptorBag::new(vec![desc(&[0.0, 0.0])], 1, "toy", "a"));
        let pools = pool_by_class(&ds).unwrap();
        assert!(pools.contains_key(&1));
        assert!(!pools.contains_key(&2));
    }

    #[test]
    fn pool_by_class_rejects_invalid() {
        let mut ds = two_class_dataset();
        ds.bags.push(DescriptorBag::new(vec![], 1, "toy", "empty"));
        assert!(pool_by_class(&ds).is_err());
    }

    #[test]
    fn conservation_over_classes() {
        let ds = two_class_dataset();
        let pools = pool_by_class(&ds).unwrap();
        let pooled: usize = pools.values().map(|p| p.len()).sum();
        assert_eq!(pooled, ds.descriptor_count());
    }

    #[test]
    fn label_set_equality_is_symmetric() {
        let a = vec![1, 2, 3];
        let b = vec![3, 2, 1];
        let c = vec![1, 2];
        assert!(label_sets_equal(&a, &b));
        assert!(label_sets_equal(&b, &a));
        assert!(!label_sets_equal(&a, &c));
        assert!(!label_sets_equal(&c, &a));
    }

    #[test]
    fn origin_lookup_follows_runs() {
        let mut pool = ClassPool::default();
        pool.extend_from("target", vec![desc(&[0.0]), desc(&[1.0])]);
        pool.extend_from("src_a", vec![desc(&[2.0])]);
        pool.extend_from("src_a", vec![desc(&[3.0])]);
        assert_eq!(pool.runs.len(), 2);
        assert_eq!(pool.origin_of(0), Some("target"));
        assert_eq!(pool.origin_of(1), Some("target"));
        assert_eq!(pool.origin_of(2), Some("src_a"));
        assert_eq!(pool.origin_of(3), Some("src_a"));
        assert_eq!(pool.origin_of(4), None);
        assert_eq!(pool.count_for("src_a"), 2);
    }
}
