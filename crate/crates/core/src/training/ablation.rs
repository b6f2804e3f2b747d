//! Single-factor sweeps over architecture, loss and module switches.

use super::config::TrainConfig;
use super::eval::{evaluate_model, EvalConfig};
use super::train::{train, TrainOutputs};
use crate::data::SamplePair;
use crate::error::{invalid, Result};
use crate::metrics::MetricsRecord;
use crate::model::{CtaMode, VariableBranch};

/// Which factor a sweep varies; everything else stays at the base config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    /// Number of capturing units, inclusive range.
    Cus { min: usize, max: usize },
    /// Capturing-unit depth, i.e. the layer the trough point is read from.
    Trough { min: usize, max: usize },
    /// Auxiliary loss terms: full, no boundary, no attention map, neither.
    Loss,
    /// Full model, attention off, plain cross attention, standard-conv branch.
    Module,
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Cus { .. } => "cus",
            AblationAxis::Trough { .. } => "trough",
            AblationAxis::Loss => "loss",
            AblationAxis::Module => "module",
        }
    }

    /// Parses an axis name; `min`/`max` fall back to 1..=5 for `cus` and
    /// 2..=4 for `trough` and are ignored otherwise.
    pub fn parse(name: &str, min: Option<usize>, max: Option<usize>) -> Result<Self> {
        let axis = match name {
            "cus" => AblationAxis::Cus {
                min: min.unwrap_or(1),
                max: max.unwrap_or(5),
            },
            "trough" | "depth" => AblationAxis::Trough {
                min: min.unwrap_or(2),
                max: max.unwrap_or(4),
            },
            "loss" => AblationAxis::Loss,
            "module" => AblationAxis::Module,
            other => return Err(invalid("ablation", format!("unknown axis `{other}`"))),
        };
        match axis {
            AblationAxis::Cus { min, max } | AblationAxis::Trough { min, max } if min > max => {
                Err(invalid("ablation", format!("empty range {min}..={max}")))
            }
            _ => Ok(axis),
        }
    }
}

/// One row of a sweep before it is run.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationVariant {
    pub label: String,
    pub config: TrainConfig,
}

/// Expands `axis` into labelled configs derived from `base`.
pub fn ablation_variants(base: &TrainConfig, axis: AblationAxis) -> Result<Vec<AblationVariant>> {
    let with = |label: String, edit: &dyn Fn(&mut TrainConfig)| {
        let mut config = base.clone();
        edit(&mut config);
        AblationVariant { label, config }
    };
    let variants: Vec<AblationVariant> = match axis {
        AblationAxis::Cus { min, max } => (min..=max)
            .map(|n| {
                let label = if n == 1 { "1 CU".to_string() } else { format!("{n} CUs") };
                with(label, &|c| c.model.n_cus = n)
            })
            .collect(),
        AblationAxis::Trough { min, max } => (min..=max)
            .map(|d| with(format!("depth {d}"), &|c| c.model.depth = d))
            .collect(),
        AblationAxis::Loss => vec![
            with("full".into(), &|c| {
                c.loss.bc_off = false;
                c.loss.am_off = false;
            }),
            with("w/o BC".into(), &|c| {
                c.loss.bc_off = true;
                c.loss.am_off = false;
            }),
            with("w/o AM".into(), &|c| {
                c.loss.bc_off = false;
                c.loss.am_off = true;
            }),
            with("w/o BC+AM".into(), &|c| {
                c.loss.bc_off = true;
                c.loss.am_off = true;
            }),
        ],
        AblationAxis::Module => vec![
            with("full".into(), &|c| {
                c.model.cta_mode = CtaMode::Transpose;
                c.model.variable = VariableBranch::Fourier;
            }),
            with("CTA off".into(), &|c| {
                c.model.cta_mode = CtaMode::Off;
                c.model.variable = VariableBranch::Fourier;
            }),
            with("CA".into(), &|c| {
                c.model.cta_mode = CtaMode::Plain;
                c.model.variable = VariableBranch::Fourier;
            }),
            with("SCC".into(), &|c| {
                c.model.cta_mode = CtaMode::Transpose;
                c.model.variable = VariableBranch::StandardConv;
            }),
        ],
    };
    for v in &variants {
        v.config.validate()?;
    }
    Ok(variants)
}

/// Metrics of one variant trained with one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRun {
    pub label: String,
    pub seed: u64,
    pub record: MetricsRecord,
}

/// Seed-averaged metrics per variant, in sweep order.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub rows: Vec<(String, MetricsRecord)>,
    pub runs: Vec<AblationRun>,
}

impl AblationTable {
    pub fn mean(&self, label: &str) -> Option<&MetricsRecord> {
        self.rows.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }

    /// Header `label,iou,mae,ber`; one line per variant.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,iou,mae,ber\n");
        for (label, r) in &self.rows {
            s.push_str(&format!("{label},{},{},{}\n", r.iou, r.mae, r.ber));
        }
        s
    }

    /// Header `label,seed,iou,mae,ber`; one line per training run.
    pub fn runs_csv(&self) -> String {
        let mut s = String::from("label,seed,iou,mae,ber\n");
        for r in &self.runs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.label, r.seed, r.record.iou, r.record.mae, r.record.ber
            ));
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!(
            "| {} | IoU (%) | MAE | BER |\n|---|---:|---:|---:|\n",
            self.axis.name()
        );
        for (label, r) in &self.rows {
            s.push_str(&format!(
                "| {label} | {:.2} | {:.4} | {:.2} |\n",
                100.0 * r.iou,
                r.mae,
                r.ber
            ));
        }
        s
    }
}

/// Trains every variant of `axis` once per seed on `train_set` and scores it on
/// `eval_set`. The seed replaces `base.seed`; the data are shared.
pub fn ablate(
    base: &TrainConfig,
    axis: AblationAxis,
    seeds: &[u64],
    train_set: &[SamplePair],
    eval_set: &[SamplePair],
) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(invalid("ablation", "at least one seed is required"));
    }
    let eval_cfg = EvalConfig {
        batch_size: base.batch_size,
        ..EvalConfig::default()
    };
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for variant in ablation_variants(base, axis)? {
        let mut sum = MetricsRecord::default();
        for &seed in seeds {
            let mut cfg = variant.config.clone();
            cfg.seed = seed;
            let run = train(&cfg, train_set, &TrainOutputs::default())?;
            let report = evaluate_model(&run.net, &run.checkpoint.store, eval_set, &eval_cfg, None)?;
            sum.iou += report.record.iou;
            sum.mae += report.record.mae;
            sum.ber += report.record.ber;
            runs.push(AblationRun {
                label: variant.label.clone(),
                seed,
                record: report.record,
            });
        }
        let k = seeds.len() as f64;
        rows.push((
            variant.label,
            MetricsRecord {
                iou: sum.iou / k,
                mae: sum.mae / k,
                ber: sum.ber / k,
            },
        ));
    }
    Ok(AblationTable { axis, rows, runs })
}
