//! The experiment matrix: attention models trained on dense, sparse, and
//! mixed views, no-attention baselines on the homogeneous views, each
//! repeated over seeds and evaluated on every compatible test view.

use crate::datagen::{Dataset, Split, View};
use crate::error::{Error, Result};
use crate::stats::{mean, sample_std, welch_t_test};
use crate::train::{evaluate, train, RunMetrics, TrainConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;

pub const TRAIN_VIEWS: [View; 3] = [View::Dense, View::Sparse, View::Mixed];
pub const TEST_VIEWS: [View; 3] = [View::Dense, View::Sparse, View::Mixed];

#[derive(Debug, Clone, Serialize)]
pub struct CellStats {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl CellStats {
    fn from_values(per_seed: Vec<f64>) -> CellStats {
        let m = mean(&per_seed);
        let s = sample_std(&per_seed);
        CellStats {
            per_seed,
            mean: m,
            std: s,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WelchSummary {
    pub t: f64,
    pub p: f64,
    pub dof: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixReport {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    /// `attention[train_view][test_view]` accuracy statistics.
    pub attention: BTreeMap<String, BTreeMap<String, CellStats>>,
    /// No-attention baselines evaluated on their own view.
    pub ablation: BTreeMap<String, CellStats>,
    /// Key pairwise comparisons across seeds.
    pub welch: BTreeMap<String, WelchSummary>,
}

impl MatrixReport {
    /// Accuracy table formatted in the style of the published experiment
    /// grids, percentages with per-seed standard deviation.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let fmt = |c: &CellStats| format!("{:.1} ({:.1})", 100.0 * c.mean, 100.0 * c.std);
        let _ = writeln!(out, "attention models: rows = test view, columns = train view");
        let _ = writeln!(
            out,
            "{:<14}{:>16}{:>16}{:>16}",
            "test \\ train", "dense", "sparse", "mixed"
        );
        for test in TEST_VIEWS {
            let _ = write!(out, "{:<14}", test.name());
            for tr in TRAIN_VIEWS {
                let cell = &self.attention[tr.name()][test.name()];
                let _ = write!(out, "{:>16}", fmt(cell));
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "no-attention baselines (trained and tested on one view):");
        for (view, cell) in &self.ablation {
            let _ = writeln!(out, "  {:<8}{}", view, fmt(cell));
        }
        for (name, w) in &self.welch {
            let _ = writeln!(out, "welch {:<44} t = {:+.3}, p = {:.4}", name, w.t, w.p);
        }
        out
    }
}

/// Per-run metrics emitted alongside the aggregated report.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixRun {
    pub train_view: String,
    pub attention: bool,
    pub seed: u64,
    pub metrics: RunMetrics,
}

pub struct MatrixOutcome {
    pub report: MatrixReport,
    pub runs: Vec<MatrixRun>,
}

/// Train and evaluate the full grid. `base.seed` is ignored; each listed seed
/// reinitializes the weights while the dataset stays fixed.
pub fn run_matrix(base: &TrainConfig, ds: &Dataset, seeds: &[u64]) -> Result<MatrixOutcome> {
    if seeds.len() < 2 {
        return Err(Error::Config(
            "run_matrix needs at least 2 seeds for standard deviations".to_string(),
        ));
    }
    let mut runs = Vec::new();
    let mut attention_cells: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let mut ablation_cells: BTreeMap<String, Vec<f64>> = BTreeMap::new();

    for &seed in seeds {
        for view in TRAIN_VIEWS {
            let cfg = TrainConfig {
                train_view: view.name().to_string(),
                attention: true,
                seed,
                ..base.clone()
            };
            let (model, metrics) = train(&cfg, ds)?;
            for test in TEST_VIEWS {
                let acc = evaluate(&model, ds, test, Split::Test)?.accuracy;
                attention_cells
                    .entry(view.name().to_string())
                    .or_default()
                    .entry(test.name().to_string())
                    .or_default()
                    .push(acc);
            }
            runs.push(MatrixRun {
                train_view: view.name().to_string(),
                attention: true,
                seed,
                metrics,
            });
        }
        for view in [View::Dense, View::Sparse] {
            let cfg = TrainConfig {
                train_view: view.name().to_string(),
                attention: false,
                seed,
                ..base.clone()
            };
            let (model, metrics) = train(&cfg, ds)?;
            let acc = evaluate(&model, ds, view, Split::Test)?.accuracy;
            ablation_cells
                .entry(view.name().to_string())
                .or_default()
                .push(acc);
            runs.push(MatrixRun {
                train_view: view.name().to_string(),
                attention: false,
                seed,
                metrics,
            });
        }
    }

    let attention: BTreeMap<String, BTreeMap<String, CellStats>> = attention_cells
        .into_iter()
        .map(|(k, inner)| {
            (
                k,
                inner
                    .into_iter()
                    .map(|(tk, v)| (tk, CellStats::from_values(v)))
                    .collect(),
            )
        })
        .collect();
    let ablation: BTreeMap<String, CellStats> = ablation_cells
        .into_iter()
        .map(|(k, v)| (k, CellStats::from_values(v)))
        .collect();

    let mut welch = BTreeMap::new();
    let pairs: [(&str, &[f64], &[f64]); 3] = [
        (
            "attention_vs_none_on_dense",
            &attention["dense"]["dense"].per_seed,
            &ablation["dense"].per_seed,
        ),
        (
            "mixed_vs_dense_on_sparse_test",
            &attention["mixed"]["sparse"].per_seed,
            &attention["dense"]["sparse"].per_seed,
        ),
        (
            "attention_vs_none_on_sparse",
            &attention["sparse"]["sparse"].per_seed,
            &ablation["sparse"].per_seed,
        ),
    ];
    for (name, a, b) in pairs {
        match welch_t_test(a, b) {
            Ok(r) => {
                welch.insert(
                    name.to_string(),
                    WelchSummary {
                        t: r.t,
                        p: r.p,
                        dof: r.dof,
                    },
                );
            }
            Err(e) => log::warn!("welch test {name} skipped: {e}"),
        }
    }

    Ok(MatrixOutcome {
        report: MatrixReport {
            schema_version: 1,
            seeds: seeds.to_vec(),
            attention,
            ablation,
            welch,
        },
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::SynthConfig;
    use crate::nn::AdamaxHyper;

    #[test]
    fn tiny_matrix_has_full_shape() {
        let ds = Dataset::generate(&SynthConfig {
            subjects: 10,
            dense_channels: 8,
            sparse_channels: 3,
            epochs_per_subject: 2,
            generation_rate: 128.0,
            snr_db: 0.0,
            seed: 31,
        })
        .unwrap();
        let base = TrainConfig {
            data_dir: String::new(),
            train_view: "mixed".to_string(),
            attention: true,
            d1: 4,
            k: 4,
            scale: 8,
            batch_size: 4,
            epochs: 1,
            seed: 0,
            optimizer: AdamaxHyper::default(),
            mix_bias: true,
            spatial_drop: true,
            drop_per_output: false,
        };
        let out = run_matrix(&base, &ds, &[0, 1]).unwrap();
        let rep = &out.report;
        assert_eq!(rep.attention.len(), 3);
        for inner in rep.attention.values() {
            assert_eq!(inner.len(), 3);
            for cell in inner.values() {
                assert_eq!(cell.per_seed.len(), 2);
                assert!(cell.per_seed.iter().all(|&a| (0.0..=1.0).contains(&a)));
            }
        }
        assert_eq!(rep.ablation.len(), 2);
        for cell in rep.ablation.values() {
            assert_eq!(cell.per_seed.len(), 2);
        }
        // 3 attention + 2 ablation runs per seed
        assert_eq!(out.runs.len(), 10);
        let txt = rep.render();
        assert!(txt.contains("dense") && txt.contains("mixed"));

        assert!(run_matrix(&base, &ds, &[0]).is_err());
    }
}
