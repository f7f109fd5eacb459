//! Naive Bayes Nearest Neighbor (NBNN) classification with
//! learning-free, instance-transfer domain adaptation.
//!
//! An NBNN classifier keeps one descriptor pool per class (the support
//! set) and scores an image by summing, over its local descriptors, the
//! squared distance to each descriptor's nearest neighbor in that pool;
//! the predicted class minimizes the sum. Adaptation enriches scarce
//! target-domain pools by merging in a seeded random fraction of the
//! source-domain descriptors, optionally after 10-crop/flip data
//! augmentation of the images on either side.
//!
//! Module map:
//!
//! - [`dataset`]: descriptors, bags, domain datasets, per-class pools
//! - [`io`]: binary/CSV descriptor files and dataset manifests
//! - [`nn`]: exact nearest-neighbor search (brute oracle + kd-tree)
//! - [`nbnn`]: image-to-class distances and the classifier
//! - [`features`]: image loading, resize, 10-crop augmentation, dense
//!   64-d gradient descriptors
//! - [`adaptation`]: seeded source sampling and adapted classifiers
//! - [`synth`]: synthetic domain-shift benchmark generator and the
//!   reference NBNN oracle
//! - [`harness`]: split protocols, seeded multi-trial experiments,
//!   fraction sweeps, reports

pub mod adaptation;
pub mod dataset;
pub mod features;
pub mod harness;
pub mod io;
pub mod nbnn;
pub mod nn;
pub mod rng;
pub mod synth;

pub use dataset::{ClassId, Descriptor, DescriptorBag, DomainDataset};
pub use nbnn::{Classifier, DistanceVariant};
pub use nn::Backend;
