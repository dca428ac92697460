//! Metrics and analyses: attack success rate, transferability matrices,
//! defense robustness, low-frequency accuracy sweeps, hyperparameter
//! ablations, and spectral energy CDFs of perturbations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use thiserror::Error;

use crate::attack::{self, AttackConfig, AttackError, AttackResult};
use crate::defense::{self, DefenseError};
use crate::model::{self, Classifier, ModelError};
use crate::pointcloud::{LabeledDataset, PointCloud};
use crate::spectral::{self, BandwidthMode, SpectralBasis, SpectralError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {clean} clean clouds vs {adv} adversarial")]
    LengthMismatch { clean: usize, adv: usize },
    #[error("need at least {needed} models, got {got}")]
    TooFewModels { needed: usize, got: usize },
    #[error("empty value list for sweep")]
    EmptySweep,
    #[error("unlabeled cloud at index {0}")]
    Unlabeled(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Attack-success-rate report. `asr` is `None` when no clean cloud is
/// classified correctly (the metric is undefined, not zero).
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub asr: Option<f64>,
    /// |S|: clean clouds the model classifies correctly.
    pub n_correct_clean: usize,
    /// |S_adv|: adversarial counterparts of S that were evaluated.
    pub n_attacked: usize,
    /// |T|: members of S_adv the model misclassifies.
    pub n_fooled: usize,
    /// Per class: (class index, |S| members, |T| members).
    pub per_class: Vec<(usize, usize, usize)>,
    pub metadata: Vec<(String, String)>,
}

impl EvalReport {
    fn from_counts(per_class: Vec<(usize, usize, usize)>) -> EvalReport {
        let n_correct_clean: usize = per_class.iter().map(|c| c.1).sum();
        let n_fooled: usize = per_class.iter().map(|c| c.2).sum();
        EvalReport {
            asr: if n_correct_clean > 0 {
                Some(n_fooled as f64 / n_correct_clean as f64)
            } else {
                None
            },
            n_correct_clean,
            n_attacked: n_correct_clean,
            n_fooled,
            per_class,
            metadata: Vec::new(),
        }
    }
}

/// ASR = |T| / |S_adv|: the fraction of adversarial counterparts of
/// correctly-classified clean clouds that the model misclassifies.
pub fn asr(
    model: &Classifier,
    clean: &LabeledDataset,
    adversarial: &[PointCloud],
) -> Result<EvalReport> {
    if clean.len() != adversarial.len() {
        return Err(EvalError::LengthMismatch { clean: clean.len(), adv: adversarial.len() });
    }
    let n_classes = clean.class_names.len().max(
        clean
            .clouds
            .iter()
            .filter_map(|c| c.label)
            .max()
            .map_or(0, |m| m + 1),
    );
    let mut per_class = vec![(0usize, 0usize, 0usize); n_classes];
    for (i, c) in per_class.iter_mut().enumerate() {
        c.0 = i;
    }
    for (i, (cloud, adv)) in clean.clouds.iter().zip(adversarial).enumerate() {
        let label = cloud.label.ok_or(EvalError::Unlabeled(i))?;
        if model::predict(model, cloud)? != label {
            continue;
        }
        per_class[label].1 += 1;
        if model::predict(model, adv)? != label {
            per_class[label].2 += 1;
        }
    }
    Ok(EvalReport::from_counts(per_class))
}

/// Transferability matrix: entry (i, j) is the ASR of adversarial clouds
/// crafted against model i, measured on model j, with the correctly-classified
/// set S derived from model j's clean predictions.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub asr: Vec<Vec<Option<f64>>>,
    /// Reports underlying each entry, row-major.
    pub reports: Vec<Vec<EvalReport>>,
}

impl TransferMatrix {
    /// Mean ASR over the non-victim columns of `victim_row`.
    pub fn mean_transfer(&self, victim_row: usize) -> Option<f64> {
        let row = &self.asr[victim_row];
        let values: Vec<f64> = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != victim_row)
            .filter_map(|(_, v)| *v)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

fn adversarial_clouds(results: &[attack::Result<AttackResult>], clean: &LabeledDataset) -> Vec<PointCloud> {
    // A failed per-cloud attack degrades to the clean cloud (no perturbation).
    results
        .iter()
        .zip(&clean.clouds)
        .map(|(r, c)| match r {
            Ok(res) => res.adversarial.clone(),
            Err(_) => c.clone(),
        })
        .collect()
}

pub fn transfer_matrix(
    models: &[Classifier],
    dataset: &LabeledDataset,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<TransferMatrix> {
    if models.is_empty() {
        return Err(EvalError::TooFewModels { needed: 1, got: 0 });
    }
    let mut matrix = Vec::new();
    let mut reports = Vec::new();
    for victim in models {
        let results = attack::attack_batch(victim, dataset, cfg, seed);
        let advs = adversarial_clouds(&results, dataset);
        let mut row = Vec::new();
        let mut row_reports = Vec::new();
        for eval_model in models {
            let report = asr(eval_model, dataset, &advs)?;
            row.push(report.asr);
            row_reports.push(report);
        }
        matrix.push(row);
        reports.push(row_reports);
    }
    Ok(TransferMatrix { asr: matrix, reports })
}

/// Which defense to apply before classification.
#[derive(Debug, Clone, Copy)]
pub enum DefenseKind {
    Srs { keep: usize },
    Sor { k: usize, alpha: f64 },
}

pub fn apply_defense(cloud: &PointCloud, kind: DefenseKind, seed: u64) -> Result<PointCloud> {
    Ok(match kind {
        DefenseKind::Srs { keep } => defense::srs(cloud, keep.min(cloud.len()), seed)?,
        DefenseKind::Sor { k, alpha } => defense::sor(cloud, k, alpha)?,
    })
}

/// ASR after passing each adversarial cloud through the defense transform.
/// S is still defined on the undefended clean clouds.
pub fn defense_eval(
    model: &Classifier,
    clean: &LabeledDataset,
    adversarial: &[PointCloud],
    kind: DefenseKind,
    seed: u64,
) -> Result<EvalReport> {
    if clean.len() != adversarial.len() {
        return Err(EvalError::LengthMismatch { clean: clean.len(), adv: adversarial.len() });
    }
    let defended: Vec<PointCloud> = adversarial
        .iter()
        .enumerate()
        .map(|(i, adv)| apply_defense(adv, kind, seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    let mut report = asr(model, clean, &defended)?;
    report.metadata.push((
        "defense".into(),
        match kind {
            DefenseKind::Srs { keep } => format!("srs keep={keep}"),
            DefenseKind::Sor { k, alpha } => format!("sor k={k} alpha={alpha}"),
        },
    ));
    Ok(report)
}

/// Accuracy of the model on low-passed clouds for each m, plus the
/// original-cloud accuracy. The basis is computed once per cloud.
#[derive(Debug, Clone)]
pub struct LfcSweep {
    pub rows: Vec<(usize, f64)>,
    pub original_accuracy: f64,
}

pub fn lfc_accuracy_sweep(
    model: &Classifier,
    dataset: &LabeledDataset,
    ms: &[usize],
    k: usize,
) -> Result<LfcSweep> {
    if ms.is_empty() {
        return Err(EvalError::EmptySweep);
    }
    let bases: Vec<SpectralBasis> = dataset
        .clouds
        .par_iter()
        .map(|c| spectral::basis_of_cloud(c, k, BandwidthMode::Auto))
        .collect::<std::result::Result<_, _>>()?;
    let mut rows = Vec::new();
    for &m in ms {
        let mut correct = 0usize;
        for (cloud, basis) in dataset.clouds.iter().zip(&bases) {
            let (lfc, _) = spectral::lfc_split_with_basis(cloud, m.min(cloud.len()), basis)?;
            let label = cloud.label.ok_or(EvalError::Unlabeled(0))?;
            if model::predict(model, &lfc)? == label {
                correct += 1;
            }
        }
        rows.push((m, correct as f64 / dataset.len() as f64));
    }
    Ok(LfcSweep { rows, original_accuracy: model::accuracy(model, dataset)? })
}

/// Averaged cumulative spectral energy distribution of perturbations.
#[derive(Debug, Clone)]
pub struct SpectralCdf {
    pub cumulative: Array1<f64>,
    pub n_samples: usize,
    pub n_skipped: usize,
}

/// Per sample, the spectral weight at frequency index i is the squared
/// projection of the perturbation onto eigenvector i, summed over the three
/// coordinate axes and normalized to total 1; the output averages the
/// per-sample cumulative sums. Zero perturbations are skipped and counted.
pub fn spectral_cdf(perturbations: &[(Array2<f64>, &SpectralBasis)]) -> Result<SpectralCdf> {
    let n = perturbations
        .first()
        .map(|(_, b)| b.n())
        .ok_or(EvalError::EmptySweep)?;
    let mut acc = Array1::<f64>::zeros(n);
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (delta, basis) in perturbations {
        if delta.nrows() != n || basis.n() != n {
            return Err(EvalError::LengthMismatch { clean: n, adv: delta.nrows() });
        }
        let coeffs = basis.eigenvectors.t().dot(delta); // N x 3
        let weights: Array1<f64> = coeffs.map_axis(ndarray::Axis(1), |row| row.dot(&row));
        let total = weights.sum();
        if total <= 0.0 {
            skipped += 1;
            continue;
        }
        let mut cum = 0.0;
        for (i, w) in weights.iter().enumerate() {
            cum += w / total;
            acc[i] += cum;
        }
        used += 1;
    }
    if used > 0 {
        acc /= used as f64;
    }
    Ok(SpectralCdf { cumulative: acc, n_samples: used, n_skipped: skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    M,
    Gamma,
    EpsInf,
}

/// One row of an ablation sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub white_box_asr: Option<f64>,
    pub mean_transfer_asr: Option<f64>,
}

/// Run one attack campaign per parameter value against models[0] and measure
/// white-box ASR plus mean transfer ASR over the remaining models.
pub fn ablation_sweep(
    parameter: SweepParameter,
    values: &[f64],
    base_cfg: &AttackConfig,
    models: &[Classifier],
    dataset: &LabeledDataset,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(EvalError::EmptySweep);
    }
    if models.is_empty() {
        return Err(EvalError::TooFewModels { needed: 1, got: 0 });
    }
    let mut rows = Vec::new();
    for &value in values {
        let mut cfg = base_cfg.clone();
        match parameter {
            SweepParameter::M => cfg.m = value.round() as usize,
            SweepParameter::Gamma => cfg.gamma = value,
            SweepParameter::EpsInf => cfg.eps_inf = value,
        }
        let results = attack::attack_batch(&models[0], dataset, &cfg, seed);
        let advs = adversarial_clouds(&results, dataset);
        let white = asr(&models[0], dataset, &advs)?.asr;
        let mut transfer = Vec::new();
        for other in &models[1..] {
            if let Some(v) = asr(other, dataset, &advs)?.asr {
                transfer.push(v);
            }
        }
        rows.push(SweepRow {
            value,
            white_box_asr: white,
            mean_transfer_asr: if transfer.is_empty() {
                None
            } else {
                Some(transfer.iter().sum::<f64>() / transfer.len() as f64)
            },
        });
    }
    Ok(rows)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
    move |e| EvalError::Io { path: path.to_path_buf(), source: e }
}

/// Write a CSV table.
pub fn write_csv(
    path: impl AsRef<Path>,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(w, "{header}").map_err(io_err(path))?;
    for row in rows {
        writeln!(w, "{row}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Write a key=value summary file, one pair per line.
pub fn write_kv_summary(
    path: impl AsRef<Path>,
    pairs: &[(String, String)],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for (k, v) in pairs {
        writeln!(w, "{k}={v}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// CDF as a two-column CSV (index, cumulative).
pub fn write_cdf_csv(cdf: &SpectralCdf, path: impl AsRef<Path>) -> Result<()> {
    write_csv(
        path,
        "index,cumulative",
        cdf.cumulative
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{i},{c}")),
    )
}
