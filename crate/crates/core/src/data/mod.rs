//! Label files, datasets and their on-disk formats, subject-exclusive
//! folds, attribute co-occurrence and synthetic data.

mod cooccur;
mod dataset;
mod labels;
mod split;
mod synth;

pub use cooccur::{binary_attributes, cooccurrence, phi, phi_from_counts, Cooccurrence};
pub use dataset::{
    load_dataset, load_dataset_with, resize_nearest, write_dataset, DImage, Dataset, InputKind, Manifest,
};
pub use labels::{parse_labels, serialize_labels, LabelRecord};
pub use split::{assign_folds, split_subject_exclusive, train_test};
pub use synth::{synth_generate, SynthLayout, SyntheticSpec};
