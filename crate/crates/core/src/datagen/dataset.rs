//! Dataset assembly: subject-level splits, the dense/sparse/mixed views, and
//! the on-disk directory format (`manifest.json` + `epochs.bin` + montage
//! CSVs).

use crate::datagen::preproc::{self, EPOCH_SAMPLES};
use crate::datagen::synth;
use crate::error::{Error, Result};
use crate::montage::Montage;
use crate::par;
use crate::rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Which montage a subject contributes to the mixed view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub id: u32,
    pub label: u8,
    pub split: Split,
    pub half: Half,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    /// Montage id -> CSV filename within the dataset directory.
    pub montages: BTreeMap<String, String>,
    /// Names of the dense sensors retained by the sparse montage.
    pub sparse_names: Vec<String>,
    pub subjects: Vec<SubjectMeta>,
    pub epochs_per_subject: usize,
    /// Rate of the stored epochs (after the preprocessing chain).
    pub sample_rate: f64,
    /// Rate the raw recordings were synthesized at.
    pub generation_rate: f64,
    pub snr_db: f64,
    pub dense_channels: usize,
    pub samples_per_epoch: usize,
    /// Payload layout of `epochs.bin`.
    pub dtype: String,
    pub byte_order: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub subjects: usize,
    pub dense_channels: usize,
    pub sparse_channels: usize,
    pub epochs_per_subject: usize,
    pub generation_rate: f64,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 200,
            dense_channels: 32,
            sparse_channels: 8,
            epochs_per_subject: 10,
            generation_rate: 500.0,
            snr_db: 0.0,
            seed: 0,
        }
    }
}

/// A generated dataset held in memory. `epochs` stores the dense data as
/// little-endian f32 in `[sample][channel][time]` order, samples following
/// the manifest's subject order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub dense: Montage,
    pub sparse: Montage,
    /// Row indices of the sparse sensors within the dense montage.
    pub sparse_indices: Vec<usize>,
    pub epochs: Vec<f32>,
}

/// Class-stratified subject-level split at the 60:30:10 ratio.
///
/// Subjects are shuffled within each class and interleaved across classes, so
/// every split's class balance is within one subject of even.
pub fn split_subjects(labels: &[u8], seed: u64) -> Result<Vec<Split>> {
    let n = labels.len();
    let mut class0: Vec<usize> = (0..n).filter(|&i| labels[i] == 0).collect();
    let mut class1: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    if class0.is_empty() || class1.is_empty() {
        return Err(Error::Config(
            "split_subjects: both classes must be present".to_string(),
        ));
    }
    let shuffle = |v: &mut Vec<usize>, tag: u64| {
        let mut r = rng::stream(seed, "split-shuffle", &[tag]);
        use rand::Rng;
        for i in (1..v.len()).rev() {
            v.swap(i, r.gen_range(0..=i));
        }
    };
    shuffle(&mut class0, 0);
    shuffle(&mut class1, 1);

    let n_train = (0.6 * n as f64).round() as usize;
    let n_val = (0.3 * n as f64).round() as usize;
    let n_test = n.saturating_sub(n_train + n_val);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Config(format!(
            "split_subjects: {n} subjects is too few for a 60:30:10 split"
        )));
    }

    // interleave classes so any contiguous range stays balanced within one
    let mut order = Vec::with_capacity(n);
    let mut it0 = class0.into_iter();
    let mut it1 = class1.into_iter();
    loop {
        match (it0.next(), it1.next()) {
            (None, None) => break,
            (a, b) => {
                if let Some(i) = a {
                    order.push(i);
                }
                if let Some(i) = b {
                    order.push(i);
                }
            }
        }
    }

    let mut out = vec![Split::Test; n];
    for (pos, &subj) in order.iter().enumerate() {
        out[subj] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    Ok(out)
}

/// Halve each (split, class) group into dense and sparse contributors,
/// class-balanced, seeded. Even positions go dense.
pub fn assign_halves(splits: &[Split], labels: &[u8], seed: u64) -> Vec<Half> {
    let n = splits.len();
    let mut halves = vec![Half::Dense; n];
    for (gi, &split) in [Split::Train, Split::Validation, Split::Test].iter().enumerate() {
        for label in 0..2u8 {
            let mut members: Vec<usize> = (0..n)
                .filter(|&i| splits[i] == split && labels[i] == label)
                .collect();
            let mut r = rng::stream(seed, "half-shuffle", &[gi as u64, label as u64]);
            use rand::Rng;
            for i in (1..members.len()).rev() {
                members.swap(i, r.gen_range(0..=i));
            }
            for (pos, &subj) in members.iter().enumerate() {
                halves[subj] = if pos % 2 == 0 { Half::Dense } else { Half::Sparse };
            }
        }
    }
    halves
}

impl Dataset {
    /// Synthesize, preprocess, and assemble a full dataset.
    pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
        if cfg.subjects < 2 {
            return Err(Error::Config("need at least 2 subjects".to_string()));
        }
        if cfg.sparse_channels > cfg.dense_channels || cfg.sparse_channels == 0 {
            return Err(Error::Config(
                "sparse channel count must be in 1..=dense".to_string(),
            ));
        }
        let dense = synth::synth_montage(cfg.dense_channels, cfg.seed)?;
        let sparse_names = synth::spread_subset(&dense, cfg.sparse_channels);
        let sparse = dense.subsample(&sparse_names)?;
        let sparse_indices = dense.indices_of(&sparse_names)?;

        let labels: Vec<u8> = (0..cfg.subjects).map(|i| (i % 2) as u8).collect();
        let splits = split_subjects(&labels, cfg.seed)?;
        let halves = assign_halves(&splits, &labels, cfg.seed);
        let subjects: Vec<SubjectMeta> = (0..cfg.subjects)
            .map(|i| SubjectMeta {
                id: i as u32,
                label: labels[i],
                split: splits[i],
                half: halves[i],
            })
            .collect();

        // per-subject raw length: enough post-chain epochs plus filter slack
        let taps = preproc::bandpass_taps_len(cfg.generation_rate);
        let needed = (cfg.epochs_per_subject * EPOCH_SAMPLES) as f64 * cfg.generation_rate / 128.0;
        let gen_len = (needed.ceil() as usize + cfg.generation_rate as usize).max(taps + 128);

        let ref_indices = synth::mastoid_proxies(&dense);
        let per_subject: Vec<Result<Vec<f32>>> = par::map_indexed(cfg.subjects, |si| {
            let meta = &subjects[si];
            let subject_seed = rng::derive(cfg.seed, "subject", &[meta.id as u64]);
            let raw = synth::synth_recording(
                &dense,
                meta.label,
                subject_seed,
                gen_len,
                cfg.generation_rate,
                cfg.snr_db,
            );
            preprocess_subject(&raw, &ref_indices, cfg.generation_rate, cfg.epochs_per_subject)
        });

        let mut epochs =
            Vec::with_capacity(cfg.subjects * cfg.epochs_per_subject * cfg.dense_channels * EPOCH_SAMPLES);
        for r in per_subject {
            epochs.extend(r?);
        }

        let manifest = DatasetManifest {
            schema_version: 1,
            montages: BTreeMap::from([
                ("dense".to_string(), "montage_dense.csv".to_string()),
                ("sparse".to_string(), "montage_sparse.csv".to_string()),
            ]),
            sparse_names,
            subjects,
            epochs_per_subject: cfg.epochs_per_subject,
            sample_rate: 128.0,
            generation_rate: cfg.generation_rate,
            snr_db: cfg.snr_db,
            dense_channels: cfg.dense_channels,
            samples_per_epoch: EPOCH_SAMPLES,
            dtype: "f32".to_string(),
            byte_order: "little".to_string(),
            seed: cfg.seed,
        };
        Ok(Dataset {
            manifest,
            dense,
            sparse,
            sparse_indices,
            epochs,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.manifest.subjects.len() * self.manifest.epochs_per_subject
    }

    fn epoch_offset(&self, sample_idx: usize) -> usize {
        sample_idx * self.manifest.dense_channels * self.manifest.samples_per_epoch
    }

    /// Materialize one sample as `[C, T]` f64, with the sparse row subset
    /// applied when the sample belongs to the sparse montage.
    pub fn materialize(&self, s: &SampleRef) -> Tensor {
        let t = self.manifest.samples_per_epoch;
        let c_dense = self.manifest.dense_channels;
        let base = self.epoch_offset(s.sample_idx);
        match s.half {
            Half::Dense => {
                let data: Vec<f64> = self.epochs[base..base + c_dense * t]
                    .iter()
                    .map(|&v| v as f64)
                    .collect();
                Tensor::from_vec(&[c_dense, t], data).unwrap()
            }
            Half::Sparse => {
                let mut data = Vec::with_capacity(self.sparse_indices.len() * t);
                for &row in &self.sparse_indices {
                    data.extend(
                        self.epochs[base + row * t..base + (row + 1) * t]
                            .iter()
                            .map(|&v| v as f64),
                    );
                }
                Tensor::from_vec(&[self.sparse_indices.len(), t], data).unwrap()
            }
        }
    }

    /// Samples of one dataset view, in manifest order.
    pub fn view(&self, view: View, split: Split) -> Vec<SampleRef> {
        let e = self.manifest.epochs_per_subject;
        let mut out = Vec::new();
        for (si, subj) in self.manifest.subjects.iter().enumerate() {
            if subj.split != split {
                continue;
            }
            let half = match view {
                View::Dense => Half::Dense,
                View::Sparse => Half::Sparse,
                View::Mixed => subj.half,
            };
            for epoch in 0..e {
                out.push(SampleRef {
                    sample_idx: si * e + epoch,
                    subject: subj.id,
                    label: subj.label,
                    half,
                });
            }
        }
        out
    }

    pub fn montage_for(&self, half: Half) -> &Montage {
        match half {
            Half::Dense => &self.dense,
            Half::Sparse => &self.sparse,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("montage_dense.csv"), self.dense.to_csv())?;
        std::fs::write(dir.join("montage_sparse.csv"), self.sparse.to_csv())?;
        let manifest = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(dir.join("manifest.json"), manifest)?;
        let mut payload = Vec::with_capacity(self.epochs.len() * 4);
        for v in &self.epochs {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(dir.join("epochs.bin"))?;
        f.write_all(&payload)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.dtype != "f32" || manifest.byte_order != "little" {
            return Err(Error::Data(format!(
                "unsupported payload encoding {}/{}",
                manifest.dtype, manifest.byte_order
            )));
        }
        let dense_file = manifest
            .montages
            .get("dense")
            .ok_or_else(|| Error::Data("manifest lacks dense montage".to_string()))?;
        let sparse_file = manifest
            .montages
            .get("sparse")
            .ok_or_else(|| Error::Data("manifest lacks sparse montage".to_string()))?;
        let dense = Montage::load_csv(&dir.join(dense_file), crate::montage::DEFAULT_MARGIN)?;
        let sparse = Montage::load_csv(&dir.join(sparse_file), crate::montage::DEFAULT_MARGIN)?;
        let sparse_indices = dense.indices_of(&manifest.sparse_names)?;

        let mut raw = Vec::new();
        std::fs::File::open(dir.join("epochs.bin"))?.read_to_end(&mut raw)?;
        let expected = manifest.subjects.len()
            * manifest.epochs_per_subject
            * manifest.dense_channels
            * manifest.samples_per_epoch
            * 4;
        if raw.len() != expected {
            return Err(Error::Data(format!(
                "epochs.bin holds {} bytes, manifest implies {expected}",
                raw.len()
            )));
        }
        let epochs: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Dataset {
            manifest,
            dense,
            sparse,
            sparse_indices,
            epochs,
        })
    }
}

/// Run the preprocessing chain on one subject's raw recording and flatten the
/// first `epochs_per_subject` epochs to f32.
fn preprocess_subject(
    raw: &Tensor,
    ref_indices: &[usize],
    rate: f64,
    epochs_per_subject: usize,
) -> Result<Vec<f32>> {
    let reref = preproc::rereference(raw, ref_indices)?;
    let c = reref.shape()[0];
    // band-pass each channel at the generation rate, then resample to 128 Hz
    let (p, q) = if rate == 128.0 { (1, 1) } else { (32, 125) };
    if (rate * p as f64 / q as f64 - 128.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "generation rate {rate} cannot be resampled to 128 Hz by 32/125"
        )));
    }
    let rows: Vec<Result<Vec<f64>>> = par::map_indexed(c, |ch| {
        let filtered = preproc::fir_bandpass_default(reref.row(ch), rate)?;
        preproc::resample(&filtered, p, q)
    });
    let mut resampled_rows = Vec::with_capacity(c);
    for r in rows {
        resampled_rows.push(r?);
    }
    let t_new = resampled_rows[0].len();
    let mut joined = Tensor::zeros(&[c, t_new]);
    for (ch, row) in resampled_rows.iter().enumerate() {
        joined.row_mut(ch).copy_from_slice(row);
    }
    let epochs = preproc::epoch_windows(&joined, EPOCH_SAMPLES)?;
    if epochs.len() < epochs_per_subject {
        return Err(Error::Data(format!(
            "subject recording yields {} epochs, need {epochs_per_subject}",
            epochs.len()
        )));
    }
    let mut out = Vec::with_capacity(epochs_per_subject * c * EPOCH_SAMPLES);
    for epoch in epochs.iter().take(epochs_per_subject) {
        let centered = preproc::remove_mean(epoch);
        out.extend(centered.data().iter().map(|&v| v as f32));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Dense,
    Sparse,
    Mixed,
}

impl View {
    pub fn parse(s: &str) -> Result<View> {
        match s {
            "dense" => Ok(View::Dense),
            "sparse" => Ok(View::Sparse),
            "mixed" => Ok(View::Mixed),
            other => Err(Error::Config(format!("unknown view `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            View::Dense => "dense",
            View::Sparse => "sparse",
            View::Mixed => "mixed",
        }
    }
}

/// One epoch sample within a dataset view.
#[derive(Debug, Clone, Copy)]
pub struct SampleRef {
    pub sample_idx: usize,
    pub subject: u32,
    pub label: u8,
    pub half: Half,
}
