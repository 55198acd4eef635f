//! The training loop: montage-homogeneous batches, Adamax updates, per-epoch
//! validation, and deterministic metrics.

use crate::attention::{
    sample_drop_region, sample_drop_regions_per_output, score_table, DropRegion, ScoreTable,
};
use crate::datagen::{Dataset, Half, SampleRef, Split, View};
use crate::error::{Error, Result};
use crate::nn::{self, adamax_step, AdamaxHyper, AdamaxState};
use crate::par;
use crate::rng;
use crate::rvgg::{build_rvgg, GradSet, Mode, Model, ModelSpec};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

fn default_batch() -> usize {
    70
}
fn default_epochs() -> usize {
    15
}
fn default_d1() -> usize {
    16
}
fn default_k() -> usize {
    32
}
fn default_scale() -> usize {
    4
}
fn default_true() -> bool {
    true
}
fn default_view() -> String {
    "mixed".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Dataset directory produced by `synth`.
    pub data_dir: String,
    /// Training view: `dense`, `sparse`, or `mixed`.
    #[serde(default = "default_view")]
    pub train_view: String,
    #[serde(default = "default_true")]
    pub attention: bool,
    #[serde(default = "default_d1")]
    pub d1: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_scale")]
    pub scale: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: AdamaxHyper,
    /// Keep the bias of the 1x1 mixing convolution.
    #[serde(default = "default_true")]
    pub mix_bias: bool,
    /// Spatial dropout during training (attention models only).
    #[serde(default = "default_true")]
    pub spatial_drop: bool,
    /// Sample one drop region per output channel instead of one per batch.
    #[serde(default)]
    pub drop_per_output: bool,
}

impl TrainConfig {
    pub fn defaults(data_dir: &str) -> TrainConfig {
        serde_json::from_value(serde_json::json!({ "data_dir": data_dir })).unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub schema_version: u32,
    pub seed: u64,
    pub train_view: String,
    pub attention: bool,
    pub steps: u64,
    pub epochs: Vec<EpochMetrics>,
    /// Final test accuracy per compatible test view.
    pub test_accuracy: BTreeMap<String, f64>,
    /// Measured but intentionally not serialized: metrics files must be
    /// byte-identical across reruns of the same seed.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Model plus optimizer state; drives one update per call to [`Trainer::step`].
pub struct Trainer {
    pub model: Model,
    pub hyper: AdamaxHyper,
    states: Vec<AdamaxState>,
    pub t: u64,
}

impl Trainer {
    pub fn new(model: Model, hyper: AdamaxHyper) -> Trainer {
        let states = model
            .param_views()
            .iter()
            .map(|(_, p)| AdamaxState::for_param(p))
            .collect();
        Trainer {
            model,
            hyper,
            states,
            t: 0,
        }
    }

    /// One optimizer step on a montage-homogeneous batch. Per-sample work is
    /// data-parallel; gradients reduce in sample order so runs reproduce
    /// bit-for-bit. Returns summed loss and correct count.
    pub fn step(
        &mut self,
        xs: &[Tensor],
        labels: &[u8],
        table: Option<&Arc<ScoreTable>>,
        drops: &[DropRegion],
        seed: u64,
        step_no: u64,
    ) -> Result<(f64, usize)> {
        if xs.is_empty() || xs.len() != labels.len() {
            return Err(Error::Config("empty or mismatched batch".to_string()));
        }
        let model = &self.model;
        let results: Vec<Result<(f64, bool, GradSet)>> = par::map_indexed(xs.len(), |i| {
            let mut rng = rng::stream(seed, "sample-dropout", &[step_no, i as u64]);
            let (logits, cache) =
                model.forward_sample(&xs[i], table, drops, Mode::Train, &mut rng)?;
            let (loss, dlogits) = nn::softmax_cross_entropy(&logits, labels[i] as usize)?;
            let pred = (logits.data()[1] > logits.data()[0]) as u8;
            let grads = model.backward_sample(&cache, &dlogits, Mode::Train)?;
            Ok((loss, pred == labels[i], grads))
        });

        let mut total = GradSet::zeros_like(&self.model);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for r in results {
            let (loss, ok, grads) = r?;
            loss_sum += loss;
            correct += ok as usize;
            total.add_assign(&grads);
        }
        total.scale(1.0 / xs.len() as f64);

        self.t += 1;
        let t = self.t;
        for (((name, param), grad), state) in self
            .model
            .param_views_mut()
            .into_iter()
            .zip(&total.tensors)
            .zip(&mut self.states)
        {
            adamax_step(&name, param, grad, state, &self.hyper, t)?;
        }
        Ok((loss_sum, correct))
    }
}

/// Montage-homogeneous batches for one epoch: shuffle within each montage
/// group, cut full batches (dropping the partial tail per group), then
/// shuffle the interleaved batch order. Returns index lists into `samples`.
pub fn plan_epoch_batches(
    samples: &[SampleRef],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<usize>> {
    use rand::Rng;
    let mut batches = Vec::new();
    for (gi, half) in [Half::Dense, Half::Sparse].iter().enumerate() {
        let mut idx: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].half == *half)
            .collect();
        let mut r = rng::stream(seed, "epoch-shuffle", &[epoch as u64, gi as u64]);
        for i in (1..idx.len()).rev() {
            idx.swap(i, r.gen_range(0..=i));
        }
        for chunk in idx.chunks_exact(batch_size) {
            batches.push(chunk.to_vec());
        }
    }
    let mut r = rng::stream(seed, "batch-order", &[epoch as u64]);
    for i in (1..batches.len()).rev() {
        batches.swap(i, r.gen_range(0..=i));
    }
    batches
}

fn make_drops(
    cfg: &TrainConfig,
    coords: &[[f64; 2]],
    seed: u64,
    step_no: u64,
) -> Vec<DropRegion> {
    if !cfg.attention || !cfg.spatial_drop {
        return vec![DropRegion::disabled()];
    }
    let mut r = rng::stream(seed, "spatial-drop", &[step_no]);
    if cfg.drop_per_output {
        sample_drop_regions_per_output(coords, cfg.d1, &mut r)
    } else {
        vec![sample_drop_region(coords, &mut r)]
    }
}

/// Forward-only pass over a sample list; returns (mean loss, accuracy,
/// per-montage counts). Dropout and spatial dropout are off.
fn eval_samples(
    model: &Model,
    ds: &Dataset,
    samples: &[SampleRef],
) -> Result<(f64, f64, BTreeMap<String, (usize, usize)>)> {
    if samples.is_empty() {
        return Err(Error::Config("evaluation set is empty".to_string()));
    }
    let mut tables: BTreeMap<&'static str, Arc<ScoreTable>> = BTreeMap::new();
    if let Some(params) = &model.attention {
        for half in [Half::Dense, Half::Sparse] {
            let key = half_name(half);
            if samples.iter().any(|s| s.half == half) {
                tables.insert(
                    key,
                    Arc::new(score_table(params, ds.montage_for(half).layout2d())?),
                );
            }
        }
    } else {
        for s in samples {
            let c = match s.half {
                Half::Dense => ds.dense.len(),
                Half::Sparse => ds.sparse.len(),
            };
            if c != model.spec.input_channels {
                return Err(Error::Config(format!(
                    "model expects {} input channels but the set contains {c}-channel samples",
                    model.spec.input_channels
                )));
            }
        }
    }
    let disabled = [DropRegion::disabled()];
    let results: Vec<Result<(f64, bool)>> = par::map_slice(samples, |s| {
        let x = ds.materialize(s);
        let table = tables.get(half_name(s.half));
        let mut nil = rng::stream(0, "eval", &[]);
        let (logits, _) = model.forward_sample(&x, table, &disabled, Mode::Eval, &mut nil)?;
        let (loss, _) = nn::softmax_cross_entropy(&logits, s.label as usize)?;
        let pred = (logits.data()[1] > logits.data()[0]) as u8;
        Ok((loss, pred == s.label))
    });
    let mut loss_sum = 0.0;
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut correct = 0usize;
    for (s, r) in samples.iter().zip(results) {
        let (loss, ok) = r?;
        loss_sum += loss;
        correct += ok as usize;
        let e = per.entry(half_name(s.half).to_string()).or_insert((0, 0));
        e.0 += ok as usize;
        e.1 += 1;
    }
    Ok((
        loss_sum / samples.len() as f64,
        correct as f64 / samples.len() as f64,
        per,
    ))
}

fn half_name(h: Half) -> &'static str {
    match h {
        Half::Dense => "dense",
        Half::Sparse => "sparse",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub loss: f64,
    pub total: usize,
    /// Per-montage (correct, total) behind the headline accuracy.
    pub per_montage: BTreeMap<String, (usize, usize)>,
}

/// Accuracy of a trained model over one view of a dataset split.
pub fn evaluate(model: &Model, ds: &Dataset, view: View, split: Split) -> Result<EvalResult> {
    let samples = ds.view(view, split);
    let (loss, accuracy, per_montage) = eval_samples(model, ds, &samples)?;
    Ok(EvalResult {
        accuracy,
        loss,
        total: samples.len(),
        per_montage,
    })
}

/// Views a model can be evaluated on: all three with attention, otherwise
/// only the montage whose channel count matches the trunk input.
pub fn compatible_views(model: &Model, ds: &Dataset) -> Vec<View> {
    if model.attention.is_some() {
        vec![View::Dense, View::Sparse, View::Mixed]
    } else if model.spec.input_channels == ds.dense.len() {
        vec![View::Dense]
    } else if model.spec.input_channels == ds.sparse.len() {
        vec![View::Sparse]
    } else {
        vec![]
    }
}

/// Fixed-epoch training per the configuration; no early stopping.
pub fn train(cfg: &TrainConfig, ds: &Dataset) -> Result<(Model, RunMetrics)> {
    let start = Instant::now();
    if cfg.batch_size < 1 || cfg.epochs < 1 {
        return Err(Error::Config("batch_size and epochs must be >= 1".to_string()));
    }
    let view = View::parse(&cfg.train_view)?;
    if !cfg.attention && view == View::Mixed {
        return Err(Error::Config(
            "a model without attention cannot train on mixed montages".to_string(),
        ));
    }
    let t_len = ds.manifest.samples_per_epoch;
    let spec = if cfg.attention {
        ModelSpec {
            mix_bias: cfg.mix_bias,
            ..ModelSpec::with_attention(cfg.d1, cfg.k, t_len, cfg.scale)
        }
    } else {
        let c = match view {
            View::Dense => ds.dense.len(),
            View::Sparse => ds.sparse.len(),
            View::Mixed => unreachable!(),
        };
        ModelSpec::rvgg(c, t_len, cfg.scale)
    };
    let mut trainer = Trainer::new(build_rvgg(&spec, cfg.seed)?, cfg.optimizer);

    let train_samples = ds.view(view, Split::Train);
    let val_samples = ds.view(view, Split::Validation);
    if train_samples.len() < cfg.batch_size {
        return Err(Error::Config(format!(
            "{} training samples cannot fill a batch of {}",
            train_samples.len(),
            cfg.batch_size
        )));
    }

    let mut epochs_out = Vec::with_capacity(cfg.epochs);
    let mut step_no: u64 = 0;
    for epoch in 1..=cfg.epochs {
        let batches = plan_epoch_batches(&train_samples, cfg.batch_size, cfg.seed, epoch);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for batch in &batches {
            step_no += 1;
            let half = train_samples[batch[0]].half;
            debug_assert!(batch.iter().all(|&i| train_samples[i].half == half));
            let montage = ds.montage_for(half);
            let table = match &trainer.model.attention {
                Some(params) => Some(Arc::new(score_table(params, montage.layout2d())?)),
                None => None,
            };
            let drops = make_drops(cfg, montage.layout2d(), cfg.seed, step_no);
            let xs: Vec<Tensor> = batch
                .iter()
                .map(|&i| ds.materialize(&train_samples[i]))
                .collect();
            let labels: Vec<u8> = batch.iter().map(|&i| train_samples[i].label).collect();
            let (l, c) = trainer.step(&xs, &labels, table.as_ref(), &drops, cfg.seed, step_no)?;
            loss_sum += l;
            correct += c;
            seen += batch.len();
        }
        let (val_loss, val_acc, _) = eval_samples(&trainer.model, ds, &val_samples)?;
        epochs_out.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            val_loss,
            val_accuracy: val_acc,
        });
        log::info!(
            "seed {} view {} epoch {epoch}: train acc {:.3} val acc {:.3}",
            cfg.seed,
            cfg.train_view,
            epochs_out.last().unwrap().train_accuracy,
            val_acc
        );
    }

    let mut test_accuracy = BTreeMap::new();
    for v in compatible_views(&trainer.model, ds) {
        let r = evaluate(&trainer.model, ds, v, Split::Test)?;
        test_accuracy.insert(v.name().to_string(), r.accuracy);
    }

    let metrics = RunMetrics {
        schema_version: 1,
        seed: cfg.seed,
        train_view: cfg.train_view.clone(),
        attention: cfg.attention,
        steps: step_no,
        epochs: epochs_out,
        test_accuracy,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((trainer.model, metrics))
}
