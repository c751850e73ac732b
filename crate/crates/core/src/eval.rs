//! Experiment protocol: stratified shuffle splits, confusion counts,
//! precision/recall/F1, repeated train-and-evaluate runs and the anomaly-share
//! sweep.
//!
//! Metrics with a zero denominator are reported as 0 and flagged as undefined.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::baseline::{knn_classify, DtwConfig};
use crate::error::{Error, Result};
use crate::imaging::TransformKind;
use crate::inject::{build_labeled_dataset, AnomalyKind, InjectionPlan};
use crate::nn::{count_flops, count_params, default_class_weights, tec, Network, NetworkConfig, Sample, Tensor, TrainConfig, DEFAULT_FLOPS_PER_WATT};
use crate::seed;
use crate::traces::{LabeledDataset, RssiRange, Trace};

/// One-vs-rest outcome counts of a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Per-class counts from true and predicted class indices.
pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Vec<ConfusionCounts>> {
    if truth.len() != predicted.len() {
        return Err(Error::param(
            "eval",
            format!("{} labels but {} predictions", truth.len(), predicted.len()),
        ));
    }
    if let Some(&c) = truth.iter().chain(predicted).find(|&&c| c >= classes) {
        return Err(Error::param("eval", format!("class {c} outside 0..{classes}")));
    }
    let mut counts = vec![ConfusionCounts::default(); classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        for (c, k) in counts.iter_mut().enumerate() {
            match (t == c, p == c) {
                (true, true) => k.tp += 1,
                (false, true) => k.fp += 1,
                (true, false) => k.fn_ += 1,
                (false, false) => k.tn += 1,
            }
        }
    }
    Ok(counts)
}

/// Precision, recall and F1 of one class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// TP + FP was 0.
    pub precision_undefined: bool,
    /// TP + FN was 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassMetrics {
    pub per_class: Vec<ClassScore>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn class_score(c: &ConfusionCounts) -> ClassScore {
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassScore {
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
    }
}

pub fn precision_recall_f1(counts: &[ConfusionCounts]) -> ClassMetrics {
    let per_class: Vec<ClassScore> = counts.iter().map(class_score).collect();
    let n = per_class.len().max(1) as f64;
    ClassMetrics {
        macro_precision: per_class.iter().map(|s| s.precision).sum::<f64>() / n,
        macro_recall: per_class.iter().map(|s| s.recall).sum::<f64>() / n,
        macro_f1: per_class.iter().map(|s| s.f1).sum::<f64>() / n,
        per_class,
    }
}

/// Stratified shuffle split of sample indices by label. Each class is
/// permuted from its own seeded stream and its first `round(ratio * n_c)`
/// members go to train, clamped so that a class with at least two members
/// lands in both parts. A class with a single member goes to train. Both index
/// lists are returned in ascending order.
pub fn shuffle_split(labels: &[usize], ratio: f64, seed_value: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if labels.is_empty() {
        return Err(Error::param("eval", "cannot split an empty dataset"));
    }
    check_ratio(ratio)?;
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let n = members.len();
        if n == 0 {
            continue;
        }
        if n == 1 {
            log::warn!("class {c} has a single sample; it goes to the training part");
            train.push(members[0]);
            continue;
        }
        members.shuffle(&mut seed::rng_indexed(seed_value, "split", c as u64));
        let cut = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(Error::param("eval", format!("split ratio {ratio} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    /// The convolutional network on transformed images.
    Cnn,
    /// k-nearest neighbours under DTW on the raw traces.
    Knn { k: usize, dtw: DtwConfig },
}

/// Training hyperparameters of the network classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnSettings {
    pub filters: [usize; 4],
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
}

impl Default for CnnSettings {
    fn default() -> Self {
        CnnSettings {
            filters: [128, 64, 32, 16],
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 32,
            momentum: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub transform: TransformKind,
    pub classifier: ClassifierKind,
    pub split_ratio: f64,
    pub repeats: usize,
    pub seed: u64,
    /// Loss weight per label class; `None` weights the no-anomaly class 0.1
    /// and every other class 1.0.
    pub class_weights: Option<Vec<f64>>,
    /// Anomaly shares visited by [`anomaly_share_sweep`].
    pub anomaly_shares: Vec<f64>,
    /// Repeated splits per share in the sweep.
    pub sweep_folds: usize,
    /// Anomaly versus no anomaly instead of the five kinds.
    pub binary: bool,
    pub cnn: CnnSettings,
    pub range: RssiRange,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            transform: TransformKind::Rp,
            classifier: ClassifierKind::Cnn,
            split_ratio: 0.8,
            repeats: 10,
            seed: 0,
            class_weights: None,
            anomaly_shares: vec![0.01, 0.03, 0.10, 0.20, 0.33, 0.50],
            sweep_folds: 5,
            binary: false,
            cnn: CnnSettings::default(),
            range: RssiRange::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn label_classes(&self) -> usize {
        if self.binary {
            2
        } else {
            AnomalyKind::ALL.len()
        }
    }

    /// Label class of a trace kind.
    pub fn class_of(&self, kind: AnomalyKind) -> usize {
        if self.binary {
            kind.is_anomaly() as usize
        } else {
            kind.index()
        }
    }

    pub fn class_names(&self) -> Vec<&'static str> {
        if self.binary {
            vec!["None", "Anomaly"]
        } else {
            AnomalyKind::ALL.iter().map(|k| k.name()).collect()
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.class_weights
            .clone()
            .unwrap_or_else(|| default_class_weights(self.label_classes()))
    }

    pub fn network_config(&self, input_size: usize) -> NetworkConfig {
        let outputs = if self.binary { 1 } else { AnomalyKind::ALL.len() };
        NetworkConfig::with_filters(input_size, outputs, self.cnn.filters)
    }

    pub fn validate(&self) -> Result<()> {
        check_ratio(self.split_ratio)?;
        if self.repeats == 0 {
            return Err(Error::param("eval", "repeats must be at least 1"));
        }
        if self.sweep_folds == 0 {
            return Err(Error::param("eval", "sweep folds must be at least 1"));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.label_classes() {
                return Err(Error::param(
                    "eval",
                    format!("{} class weights for {} classes", w.len(), self.label_classes()),
                ));
            }
        }
        if let Some(s) = self.anomaly_shares.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return Err(Error::param("eval", format!("anomaly share {s} outside (0, 1]")));
        }
        Ok(())
    }
}

/// Affine map applied to every image cell before it reaches the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    /// Mean and inverse standard deviation over all cells of `images`. A
    /// constant collection gets scale 1.
    pub fn fit<'a>(images: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for img in images {
            for &v in img {
                n += 1;
                sum += v;
                sq += v * v;
            }
        }
        if n == 0 {
            return Standardizer { mean: 0.0, scale: 1.0 };
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        Standardizer { mean, scale }
    }

    pub fn apply(&self, cells: &[f64]) -> Vec<f64> {
        cells.iter().map(|v| (v - self.mean) * self.scale).collect()
    }

    pub fn to_kv(&self) -> String {
        format!("mean = {:e}\nscale = {:e}\n", self.mean, self.scale)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let map = crate::kv::parse(text)?;
        let get = |k: &str| {
            crate::kv::field::<f64>(&map, k, "eval")?
                .ok_or_else(|| Error::param("eval", format!("standardizer is missing `{k}`")))
        };
        Ok(Standardizer {
            mean: get("mean")?,
            scale: get("scale")?,
        })
    }
}

/// Transforms every trace into a raw image.
pub fn transform_all(traces: &[Trace], kind: TransformKind, range: RssiRange) -> Result<Vec<Vec<f64>>> {
    traces
        .iter()
        .map(|t| kind.apply(&t.values, range).map(|m| m.cells))
        .collect()
}

/// Standardized network inputs.
pub fn to_tensors(images: &[Vec<f64>], size: usize, norm: &Standardizer) -> Result<Vec<Tensor>> {
    images
        .iter()
        .map(|cells| Tensor::from_image(size, norm.apply(cells)))
        .collect()
}

/// Trains a network on the given traces. Returns the model, the standardizer
/// fitted on the training images and the per-epoch loss.
pub fn train_cnn(traces: &[Trace], config: &ExperimentConfig, seed_value: u64) -> Result<(Network, Standardizer, Vec<f64>)> {
    let first = traces
        .first()
        .ok_or_else(|| Error::param("eval", "no training traces"))?;
    let size = first.len();
    let images = transform_all(traces, config.transform, config.range)?;
    let norm = Standardizer::fit(images.iter().map(Vec::as_slice));
    let samples = to_tensors(&images, size, &norm)?
        .into_iter()
        .zip(traces)
        .map(|(image, t)| Sample {
            image,
            class: config.class_of(t.label),
        })
        .collect::<Vec<_>>();
    let mut net = Network::initialized(config.network_config(size), seed::derive_seed(seed_value, "init"))?;
    let cfg = TrainConfig {
        epochs: config.cnn.epochs,
        learning_rate: config.cnn.learning_rate,
        batch_size: config.cnn.batch_size,
        momentum: config.cnn.momentum,
        seed: seed::derive_seed(seed_value, "shuffle"),
        class_weights: config.weights(),
    };
    let history = net.train(&samples, &cfg)?;
    Ok((net, norm, history))
}

/// Predicted label classes of a trained network.
pub fn predict_cnn(net: &Network, norm: &Standardizer, traces: &[Trace], config: &ExperimentConfig) -> Result<Vec<usize>> {
    let Some(first) = traces.first() else {
        return Ok(Vec::new());
    };
    let images = transform_all(traces, config.transform, config.range)?;
    let tensors = to_tensors(&images, first.len(), norm)?;
    net.predict_all(&tensors)
}

fn predict_knn(train: &[&Trace], test: &[&Trace], k: usize, dtw: &DtwConfig, config: &ExperimentConfig) -> Result<Vec<usize>> {
    let reference: Vec<(&[f64], AnomalyKind)> = train.iter().map(|t| (t.values.as_slice(), t.label)).collect();
    test.iter()
        .map(|t| knn_classify(&reference, &t.values, k, dtw).map(|kind| config.class_of(kind)))
        .collect()
}

/// Outcome of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatResult {
    pub counts: Vec<ConfusionCounts>,
    pub metrics: ClassMetrics,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub class_names: Vec<&'static str>,
    pub transform: TransformKind,
    pub classifier: ClassifierKind,
    pub repeats: Vec<RepeatResult>,
    pub macro_f1_mean: f64,
    /// Sample standard deviation across repeats (0 for a single repeat).
    pub macro_f1_std: f64,
    /// Per class: mean and standard deviation of F1.
    pub class_f1: Vec<(f64, f64)>,
    /// Network size and cost; `None` for the nearest-neighbour classifier.
    pub params: Option<u64>,
    pub flops: Option<u64>,
    pub tec_joules: Option<f64>,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_repeat(dataset: &LabeledDataset, config: &ExperimentConfig, repeat: usize) -> Result<RepeatResult> {
    let labels: Vec<usize> = dataset.traces.iter().map(|t| config.class_of(t.label)).collect();
    let (train_idx, test_idx) = shuffle_split(&labels, config.split_ratio, seed::derive_indexed(config.seed, "repeat-split", repeat as u64))?;
    let train: Vec<&Trace> = train_idx.iter().map(|&i| &dataset.traces[i]).collect();
    let test: Vec<&Trace> = test_idx.iter().map(|&i| &dataset.traces[i]).collect();
    let predicted = match config.classifier {
        ClassifierKind::Cnn => {
            let train_owned: Vec<Trace> = train.iter().map(|&t| t.clone()).collect();
            let test_owned: Vec<Trace> = test.iter().map(|&t| t.clone()).collect();
            let (net, norm, history) = train_cnn(&train_owned, config, seed::derive_indexed(config.seed, "repeat-train", repeat as u64))?;
            log::info!(
                "repeat {repeat}: final training loss {:.6}",
                history.last().copied().unwrap_or(f64::NAN)
            );
            predict_cnn(&net, &norm, &test_owned, config)?
        }
        ClassifierKind::Knn { k, dtw } => predict_knn(&train, &test, k, &dtw, config)?,
    };
    let truth: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
    let counts = confusion(&truth, &predicted, config.label_classes())?;
    let metrics = precision_recall_f1(&counts);
    Ok(RepeatResult {
        counts,
        metrics,
        train_size: train.len(),
        test_size: test.len(),
    })
}

/// Repeats split, train and evaluate `config.repeats` times. Repeat `r` draws
/// its split and its model seed from `(config.seed, r)`, so each repeat can be
/// reproduced on its own.
pub fn run_experiment(dataset: &LabeledDataset, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::param("eval", "dataset is empty"));
    }
    let repeats = (0..config.repeats)
        .map(|r| {
            run_repeat(dataset, config, r).map_err(|e| Error::Repeat {
                repeat: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let macro_f1: Vec<f64> = repeats.iter().map(|r| r.metrics.macro_f1).collect();
    let (macro_f1_mean, macro_f1_std) = mean_std(&macro_f1);
    let class_f1 = (0..config.label_classes())
        .map(|c| mean_std(&repeats.iter().map(|r| r.metrics.per_class[c].f1).collect::<Vec<_>>()))
        .collect();
    let (params, flops, tec_joules) = match config.classifier {
        ClassifierKind::Cnn => {
            let net = config.network_config(dataset.trace_length);
            let flops = count_flops(&net)?;
            (Some(count_params(&net)?), Some(flops), Some(tec(flops, DEFAULT_FLOPS_PER_WATT)?))
        }
        ClassifierKind::Knn { .. } => (None, None, None),
    };
    Ok(ExperimentReport {
        class_names: config.class_names(),
        transform: config.transform,
        classifier: config.classifier,
        repeats,
        macro_f1_mean,
        macro_f1_std,
        class_f1,
        params,
        flops,
        tec_joules,
    })
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "na".to_string(), |v| v.to_string())
}

impl ExperimentReport {
    fn classifier_name(&self) -> String {
        match self.classifier {
            ClassifierKind::Cnn => format!("cnn on {}", self.transform),
            ClassifierKind::Knn { k, dtw } => match dtw.window {
                Some(w) => format!("{k}-nn dtw window {w}"),
                None => format!("{k}-nn dtw"),
            },
        }
    }

    /// Plain-text table: one block per repeat, then the averages.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "classifier: {}", self.classifier_name());
        let _ = writeln!(s, "repeats: {}", self.repeats.len());
        for (r, rep) in self.repeats.iter().enumerate() {
            let _ = writeln!(s, "\nrepeat {r} (train {}, test {})", rep.train_size, rep.test_size);
            let _ = writeln!(s, "{:<10} {:>9} {:>9} {:>9} {:>6}", "class", "precision", "recall", "f1", "support");
            for (name, (score, counts)) in self.class_names.iter().zip(rep.metrics.per_class.iter().zip(&rep.counts)) {
                let flag = if score.precision_undefined || score.recall_undefined { " *" } else { "" };
                let _ = writeln!(
                    s,
                    "{name:<10} {:>9.4} {:>9.4} {:>9.4} {:>6}{flag}",
                    score.precision,
                    score.recall,
                    score.f1,
                    counts.tp + counts.fn_
                );
            }
            let _ = writeln!(s, "{:<10} {:>9.4} {:>9.4} {:>9.4}", "macro", rep.metrics.macro_precision, rep.metrics.macro_recall, rep.metrics.macro_f1);
        }
        let _ = writeln!(s, "\nf1 across repeats (mean ± std)");
        for (name, (m, sd)) in self.class_names.iter().zip(&self.class_f1) {
            let _ = writeln!(s, "{name:<10} {m:.4} ± {sd:.4}");
        }
        let _ = writeln!(s, "{:<10} {:.4} ± {:.4}", "macro", self.macro_f1_mean, self.macro_f1_std);
        let _ = writeln!(s, "\nparameters: {}", opt(self.params));
        let _ = writeln!(s, "flops: {}", opt(self.flops));
        let _ = writeln!(s, "tec_joules: {}", opt(self.tec_joules.map(|j| format!("{j:.6}"))));
        if self.repeats.iter().any(|r| r.metrics.per_class.iter().any(|c| c.precision_undefined || c.recall_undefined)) {
            let _ = writeln!(s, "\n* a zero denominator was reported as 0");
        }
        s
    }

    /// CSV twin: `repeat,class,precision,recall,f1` rows, a blank line, then
    /// the summary header and row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("repeat,class,precision,recall,f1\n");
        for (r, rep) in self.repeats.iter().enumerate() {
            for (name, score) in self.class_names.iter().zip(&rep.metrics.per_class) {
                let _ = writeln!(s, "{r},{name},{:.6},{:.6},{:.6}", score.precision, score.recall, score.f1);
            }
        }
        s.push_str("\nmacro_f1_mean,macro_f1_std,params,flops,tec_joules\n");
        let _ = writeln!(
            s,
            "{:.6},{:.6},{},{},{}",
            self.macro_f1_mean,
            self.macro_f1_std,
            opt(self.params),
            opt(self.flops),
            opt(self.tec_joules.map(|j| format!("{j:.6}")))
        );
        s
    }
}

/// Mean macro-F1 at one anomaly share.
#[derive(Debug, Clone, PartialEq)]
pub struct SharePoint {
    pub share: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub folds: usize,
}

/// Rebuilds the labeled dataset from `base` at every share of
/// `config.anomaly_shares` and evaluates it over `config.sweep_folds` repeated
/// splits. A share that would inject no trace is skipped with a warning.
pub fn anomaly_share_sweep(base: &[Trace], plan: &InjectionPlan, config: &ExperimentConfig) -> Result<Vec<SharePoint>> {
    config.validate()?;
    if base.is_empty() {
        return Err(Error::param("eval", "base corpus is empty"));
    }
    let mut out = Vec::with_capacity(config.anomaly_shares.len());
    for &share in &config.anomaly_shares {
        if (share * base.len() as f64 + 1e-9).floor() < 1.0 {
            log::warn!("share {share} injects no anomaly into {} base traces; skipped", base.len());
            continue;
        }
        let plan = InjectionPlan {
            affected_fraction: share,
            ..plan.clone()
        };
        let dataset = build_labeled_dataset(base, &plan)?;
        let cfg = ExperimentConfig {
            repeats: config.sweep_folds,
            ..config.clone()
        };
        let report = run_experiment(&dataset, &cfg)?;
        log::info!("share {share}: macro-F1 {:.4}", report.macro_f1_mean);
        out.push(SharePoint {
            share,
            mean_f1: report.macro_f1_mean,
            std_f1: report.macro_f1_std,
            folds: cfg.repeats,
        });
    }
    Ok(out)
}

/// CSV of a sweep: `share,mean_f1,std_f1,folds`.
pub fn sweep_csv(points: &[SharePoint]) -> String {
    let mut s = String::from("share,mean_f1,std_f1,folds\n");
    for p in points {
        let _ = writeln!(s, "{},{:.6},{:.6},{}", p.share, p.mean_f1, p.std_f1, p.folds);
    }
    s
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::traces::generate_synthetic_normal;

    fn counts(tp: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn: 0 }
    }

    #[test]
    fn worked_metrics() {
        let s = class_score(&counts(90, 10, 10));
        assert!((s.precision - 0.9).abs() < 1e-12);
        assert!((s.recall - 0.9).abs() < 1e-12);
        assert!((s.f1 - 0.9).abs() < 1e-12);
        assert!(!s.precision_undefined);

        let s = class_score(&counts(0, 0, 5));
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert!(s.precision_undefined);
        assert!(!s.recall_undefined);
    }

    #[test]
    fn confusion_totals() {
        let truth = [0, 1, 2, 2, 1, 0];
        let pred = [0, 2, 2, 1, 1, 0];
        let c = confusion(&truth, &pred, 3).unwrap();
        assert!(c.iter().all(|k| k.total() == 6));
        assert_eq!(c[0], ConfusionCounts { tp: 2, fp: 0, fn_: 0, tn: 4 });
        assert_eq!(c[2], ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 3 });
        assert!(confusion(&[0], &[3], 3).is_err());
        assert!(confusion(&[0, 1], &[0], 3).is_err());
    }

    #[test]
    fn split_sizes() {
        let (train, test) = shuffle_split(&[0; 10], 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(shuffle_split(&[0; 10], 0.8, 1).unwrap(), (train, test));

        let labels = [0, 0, 0, 1, 2, 2];
        let (train, test) = shuffle_split(&labels, 0.8, 3).unwrap();
        assert!(train.iter().any(|&i| labels[i] == 1));
        assert!(!test.iter().any(|&i| labels[i] == 1));
        for c in [0, 2] {
            assert!(train.iter().any(|&i| labels[i] == c));
            assert!(test.iter().any(|&i| labels[i] == c));
        }
        assert!(shuffle_split(&[], 0.8, 0).is_err());
        assert!(shuffle_split(&[0, 1], 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500) {
            let s = class_score(&counts(tp, fp, fn_));
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            prop_assert!((s.f1 - f).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&s.f1));
        }

        #[test]
        fn macro_f1_between_extremes(truth in prop::collection::vec(0usize..5, 1..60), seed in 0u64..1000) {
            let mut pred = truth.clone();
            pred.shuffle(&mut seed::rng_for(seed, "test"));
            let m = precision_recall_f1(&confusion(&truth, &pred, 5).unwrap());
            let lo = m.per_class.iter().map(|s| s.f1).fold(f64::INFINITY, f64::min);
            let hi = m.per_class.iter().map(|s| s.f1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m.macro_f1 >= lo - 1e-12 && m.macro_f1 <= hi + 1e-12);
        }

        #[test]
        fn metrics_ignore_order(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..60), seed in 0u64..1000) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut seed::rng_for(seed, "test"));
            let (ts, ps): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
            prop_assert_eq!(confusion(&t, &p, 5).unwrap(), confusion(&ts, &ps, 5).unwrap());
        }

        #[test]
        fn split_partitions(labels in prop::collection::vec(0usize..4, 1..80), ratio in 0.05f64..0.95, seed in 0u64..1000) {
            let (train, test) = shuffle_split(&labels, ratio, seed).unwrap();
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for c in 0..4 {
                let n = labels.iter().filter(|&&l| l == c).count();
                let k = train.iter().filter(|&&i| labels[i] == c).count();
                if n >= 2 {
                    prop_assert!(k >= 1 && k < n);
                    prop_assert!((k as f64 - ratio * n as f64).abs() <= 1.0);
                }
            }
        }
    }

    fn toy_dataset() -> LabeledDataset {
        let base = generate_synthetic_normal(20, 16, 60.0, 1.0, 5).unwrap();
        let plan = InjectionPlan {
            affected_fraction: 0.5,
            ..InjectionPlan::scaled_to(16)
        };
        build_labeled_dataset(&base.traces, &plan).unwrap()
    }

    #[test]
    fn knn_report_schema_and_reproducibility() {
        let data = toy_dataset();
        let cfg = ExperimentConfig {
            classifier: ClassifierKind::Knn {
                k: 1,
                dtw: DtwConfig::default(),
            },
            repeats: 2,
            seed: 9,
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&data, &cfg).unwrap();
        let b = run_experiment(&data, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.repeats.len(), 2);
        assert!(a.repeats.iter().all(|r| r.metrics.per_class.len() == 5));
        assert_eq!(a.to_csv().lines().filter(|l| l.starts_with("0,")).count(), 5);
        assert!(a.to_csv().contains("na,na,na"));
        let binary = run_experiment(&data, &ExperimentConfig { binary: true, ..cfg }).unwrap();
        assert!(binary.repeats.iter().all(|r| r.metrics.per_class.len() == 2));
    }

    #[test]
    fn separable_toy_set_scores_one() {
        // Constant traces at two distant levels: trivially separable.
        let mut traces = Vec::new();
        for i in 0..20 {
            let kind = if i % 2 == 0 { AnomalyKind::NoAnomaly } else { AnomalyKind::SuddenD };
            let level = if kind == AnomalyKind::NoAnomaly { 80.0 } else { 5.0 };
            let mut t = Trace::new(format!("t{i}"), vec![level; 8]);
            t.label = kind;
            traces.push(t);
        }
        let data = LabeledDataset::new(traces, 8, 0, crate::traces::Provenance::Ingested).unwrap();
        let cfg = ExperimentConfig {
            classifier: ClassifierKind::Knn {
                k: 1,
                dtw: DtwConfig::default(),
            },
            binary: true,
            repeats: 1,
            ..ExperimentConfig::default()
        };
        assert_eq!(run_experiment(&data, &cfg).unwrap().macro_f1_mean, 1.0);
    }

    #[test]
    fn sweep_skips_empty_shares() {
        let base = generate_synthetic_normal(20, 16, 60.0, 1.0, 5).unwrap();
        let cfg = ExperimentConfig {
            classifier: ClassifierKind::Knn {
                k: 1,
                dtw: DtwConfig::default(),
            },
            anomaly_shares: vec![0.01, 0.5],
            sweep_folds: 1,
            ..ExperimentConfig::default()
        };
        let points = anomaly_share_sweep(&base.traces, &InjectionPlan::scaled_to(16), &cfg).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].share, 0.5);
        let single = anomaly_share_sweep(&base.traces, &InjectionPlan::scaled_to(16), &ExperimentConfig { anomaly_shares: vec![0.5], ..cfg }).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn config_checks() {
        assert!(ExperimentConfig { repeats: 0, ..ExperimentConfig::default() }.validate().is_err());
        assert!(ExperimentConfig { split_ratio: 0.0, ..ExperimentConfig::default() }.validate().is_err());
        assert!(ExperimentConfig { class_weights: Some(vec![1.0]), ..ExperimentConfig::default() }.validate().is_err());
        let s = Standardizer { mean: 1.5, scale: 0.25 };
        assert_eq!(Standardizer::from_kv(&s.to_kv()).unwrap(), s);
    }

    #[test]
    fn cnn_repeat_errors_carry_index() {
        let data = toy_dataset();
        let cfg = ExperimentConfig {
            cnn: CnnSettings {
                filters: [2, 2, 2, 2],
                epochs: 1,
                batch_size: 0,
                ..CnnSettings::default()
            },
            repeats: 1,
            ..ExperimentConfig::default()
        };
        match run_experiment(&data, &cfg) {
            Err(Error::Repeat { repeat: 0, source }) => assert_eq!(source.module(), "nn"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
