//! Synthetic data generation, preprocessing, and dataset assembly.

pub mod dataset;
pub mod preproc;
pub mod synth;

pub use dataset::{
    assign_halves, split_subjects, Dataset, DatasetManifest, Half, SampleRef, Split, SubjectMeta,
    SynthConfig, View,
};
pub use preproc::{
    epoch_windows, fir_bandpass, fir_bandpass_default, remove_mean, rereference, resample,
    EPOCH_SAMPLES,
};
pub use synth::{leadfield, mastoid_proxies, spread_subset, subject_source, synth_montage, synth_recording};
