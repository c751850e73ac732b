use std::fmt::Write as _;
use std::path::Path;

use super::store::{self, ModelMeta};
use super::{BaselineMethod, Cli, Command, EvalArgs, ExplainArgs, GenerateArgs, IngestArgs, InjectArgs, KnnArgs, ModelArgs, ProtocolArgs, ReportArgs, SweepArgs, TrainArgs, TransformArgs};
use crate::baseline::DtwConfig;
use crate::error::{Error, Result};
use crate::eval::{self, ClassifierKind, CnnSettings, ExperimentConfig, ExperimentReport};
use crate::explain::{guided_backprop, render_saliency, ClassTarget};
use crate::imaging::{export_image, recurrence_plot, ImageFormat, TransformKind};
use crate::inject::{build_labeled_dataset, InjectionPlan};
use crate::nn::{layer_costs, tec, NetworkConfig, Tensor};
use crate::seed;
use crate::traces::{filter_by_loss, generate_synthetic_normal, parse_trace_file, LabeledDataset, LossFilter, Provenance, RssiRange};

pub fn run(cli: &Cli) -> Result<String> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Generate(a) => generate(a, cli.seed, out),
        Command::Ingest(a) => ingest(a, cli.seed, out),
        Command::Inject(a) => inject(a, cli.seed, out),
        Command::Transform(a) => transform(a, out),
        Command::Train(a) => train(a, cli.seed, out),
        Command::Eval(a) => evaluate(a, cli.seed, out),
        Command::Sweep(a) => sweep(a, cli.seed, out),
        Command::Baseline {
            method: BaselineMethod::Knn(a),
        } => knn(a, cli.seed, out),
        Command::Explain(a) => explain(a, out),
        Command::Report(a) => report(a, out),
    }
}

fn list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::param("cli", format!("bad {what} entry `{}`", s.trim())))
        })
        .collect()
}

fn filters(text: &str) -> Result<[usize; 4]> {
    let v: Vec<usize> = list(text, "filters")?;
    v.try_into()
        .map_err(|v: Vec<usize>| Error::param("cli", format!("expected 4 filter counts, got {}", v.len())))
}

fn experiment(seed_value: u64, model: &ModelArgs, protocol: Option<&ProtocolArgs>) -> Result<ExperimentConfig> {
    let classifier = match protocol.map(|p| p.classifier.as_str()) {
        None | Some("cnn") => ClassifierKind::Cnn,
        Some("knn") => {
            let p = protocol.expect("matched Some");
            ClassifierKind::Knn {
                k: p.k,
                dtw: DtwConfig { window: p.window },
            }
        }
        Some(other) => return Err(Error::param("cli", format!("unknown classifier `{other}`"))),
    };
    let class_weights = model
        .class_weights
        .as_deref()
        .map(|w| list(w, "class weight"))
        .transpose()?;
    let cfg = ExperimentConfig {
        transform: model.transform.parse()?,
        classifier,
        split_ratio: protocol.map_or(0.8, |p| p.ratio),
        seed: seed_value,
        class_weights,
        binary: model.binary,
        cnn: CnnSettings {
            filters: filters(&model.filters)?,
            epochs: model.epochs,
            learning_rate: model.lr,
            batch_size: model.batch,
            momentum: model.momentum,
        },
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn generate(a: &GenerateArgs, seed_value: u64, out: &Path) -> Result<String> {
    let data = generate_synthetic_normal(a.count, a.length, a.mean, a.stddev, seed::derive_seed(seed_value, "generate"))?;
    store::write_dataset(out, &data)?;
    Ok(format!("generate: {} traces of length {} in {}", data.len(), a.length, out.display()))
}

fn ingest(a: &IngestArgs, seed_value: u64, out: &Path) -> Result<String> {
    let keep: LossFilter = a.keep.parse()?;
    let files = store::list_files(&a.input)?;
    let mut traces = Vec::with_capacity(files.len());
    for path in &files {
        let mut t = parse_trace_file(&store::read_string(path)?, a.length).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        if t.id.is_empty() {
            t.id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        traces.push(t);
    }
    let read = traces.len();
    let kept = filter_by_loss(traces, keep);
    let data = LabeledDataset::new(kept, a.length, seed_value, Provenance::Ingested)?;
    store::write_dataset(out, &data)?;
    Ok(format!("ingest: kept {} of {read} traces in {}", data.len(), out.display()))
}

fn load_plan(path: Option<&Path>, length: usize, seed_value: u64) -> Result<InjectionPlan> {
    let base = InjectionPlan {
        seed: seed::derive_seed(seed_value, "inject"),
        ..InjectionPlan::scaled_to(length)
    };
    match path {
        Some(p) => InjectionPlan::from_kv(&store::read_string(p)?, base),
        None => Ok(base),
    }
}

fn inject(a: &InjectArgs, seed_value: u64, out: &Path) -> Result<String> {
    let base = store::read_dataset(&a.input)?;
    let mut plan = load_plan(a.plan.as_deref(), base.trace_length, seed_value)?;
    if let Some(f) = a.fraction {
        plan.affected_fraction = f;
    }
    let data = build_labeled_dataset(&base.traces, &plan)?;
    store::write_dataset(out, &data)?;
    store::write(&out.join("plan.txt"), plan.to_kv())?;
    let counts = data.class_counts();
    Ok(format!(
        "inject: {} traces (SuddenD {}, SuddenR {}, InstaD {}, SlowD {}, None {}) in {}",
        data.len(),
        counts[0],
        counts[1],
        counts[2],
        counts[3],
        counts[4],
        out.display()
    ))
}

fn transform(a: &TransformArgs, out: &Path) -> Result<String> {
    let kind: TransformKind = a.kind.parse()?;
    let format: ImageFormat = a.format.parse()?;
    if a.epsilon.is_some() && kind != TransformKind::Rp {
        return Err(Error::param("cli", "--epsilon applies to the rp transform only"));
    }
    let data = store::read_dataset(&a.input)?;
    let range = RssiRange::default();
    for t in &data.traces {
        let image = match a.epsilon {
            Some(eps) => recurrence_plot(&t.values, Some(eps), true)?,
            None => kind.apply(&t.values, range)?,
        };
        let name = format!("{}.{}", t.id, format.extension());
        store::write(&out.join("images").join(name), export_image(&image, format))?;
    }
    Ok(format!("transform: {} {kind} images in {}", data.len(), out.join("images").display()))
}

fn train(a: &TrainArgs, seed_value: u64, out: &Path) -> Result<String> {
    let cfg = experiment(seed_value, &a.model, None)?;
    let data = store::read_dataset(&a.input)?;
    let (net, norm, history) = eval::train_cnn(&data.traces, &cfg, seed_value)?;
    let meta = ModelMeta {
        transform: cfg.transform,
        binary: cfg.binary,
        norm,
    };
    store::write_model(out, &net, &meta)?;
    let mut loss = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(loss, "{i},{l:.9}");
    }
    store::write(&out.join("loss.csv"), loss)?;
    Ok(format!(
        "train: {} samples, {} epochs, final loss {:.6}, model in {}",
        data.len(),
        history.len(),
        history.last().copied().unwrap_or(f64::NAN),
        out.display()
    ))
}

fn write_report(out: &Path, stem: &str, report: &ExperimentReport) -> Result<()> {
    store::write(&out.join(format!("{stem}.txt")), report.to_text())?;
    store::write(&out.join(format!("{stem}.csv")), report.to_csv())
}

fn evaluate(a: &EvalArgs, seed_value: u64, out: &Path) -> Result<String> {
    let cfg = ExperimentConfig {
        repeats: a.repeats,
        ..experiment(seed_value, &a.model, Some(&a.protocol))?
    };
    cfg.validate()?;
    let data = store::read_dataset(&a.input)?;
    let report = eval::run_experiment(&data, &cfg)?;
    write_report(out, "report", &report)?;
    Ok(format!(
        "eval: macro-F1 {:.4} ± {:.4} over {} repeats, report in {}",
        report.macro_f1_mean,
        report.macro_f1_std,
        report.repeats.len(),
        out.display()
    ))
}

fn sweep(a: &SweepArgs, seed_value: u64, out: &Path) -> Result<String> {
    let base = store::read_dataset(&a.input)?;
    let plan = load_plan(a.plan.as_deref(), base.trace_length, seed_value)?;
    let cfg = ExperimentConfig {
        anomaly_shares: list(&a.shares, "share")?,
        sweep_folds: a.folds,
        ..experiment(seed_value, &a.model, Some(&a.protocol))?
    };
    cfg.validate()?;
    let points = eval::anomaly_share_sweep(&base.traces, &plan, &cfg)?;
    store::write(&out.join("sweep.csv"), eval::sweep_csv(&points))?;
    Ok(format!("sweep: {} shares evaluated, table in {}", points.len(), out.join("sweep.csv").display()))
}

fn knn(a: &KnnArgs, seed_value: u64, out: &Path) -> Result<String> {
    let cfg = ExperimentConfig {
        classifier: ClassifierKind::Knn {
            k: a.k,
            dtw: DtwConfig { window: a.window },
        },
        repeats: a.repeats,
        split_ratio: a.ratio,
        binary: a.binary,
        seed: seed_value,
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    let data = store::read_dataset(&a.input)?;
    let report = eval::run_experiment(&data, &cfg)?;
    write_report(out, "baseline", &report)?;
    Ok(format!(
        "baseline knn: macro-F1 {:.4} ± {:.4} over {} repeats, report in {}",
        report.macro_f1_mean,
        report.macro_f1_std,
        report.repeats.len(),
        out.display()
    ))
}

fn explain(a: &ExplainArgs, out: &Path) -> Result<String> {
    let (net, meta) = store::read_model(&a.model)?;
    let target: ClassTarget = a.class.parse()?;
    let format: ImageFormat = a.format.parse()?;
    let data = store::read_dataset(&a.input)?;
    let take = a.limit.unwrap_or(data.len()).min(data.len());
    let range = RssiRange::default();
    let mut classes = String::from("id,target_class\n");
    for t in &data.traces[..take] {
        let image = meta.transform.apply(&t.values, range)?;
        let tensor = Tensor::from_image(image.size, meta.norm.apply(&image.cells))?;
        let map = guided_backprop(&net, &tensor, target, &t.id)?;
        let name = format!("{}.{}", t.id, format.extension());
        store::write(&out.join("saliency").join(name), render_saliency(&map, format))?;
        let _ = writeln!(classes, "{},{}", t.id, map.target_class);
    }
    store::write(&out.join("saliency.csv"), classes)?;
    Ok(format!("explain: {take} saliency maps in {}", out.join("saliency").display()))
}

fn report(a: &ReportArgs, out: &Path) -> Result<String> {
    let config = match &a.model {
        Some(dir) => store::read_model(dir)?.0.config,
        None => {
            let config = NetworkConfig::with_filters(a.input_size, if a.binary { 1 } else { 5 }, filters(&a.filters)?);
            config.validate()?;
            config
        }
    };
    let costs = layer_costs(&config)?;
    let mut s = String::new();
    let _ = writeln!(s, "input {}x{}, {} outputs", config.input_size, config.input_size, config.num_classes);
    let _ = writeln!(s, "{:<6} {:<8} {:>14} {:>12} {:>16}", "layer", "kind", "output", "params", "flops");
    for c in &costs {
        let _ = writeln!(s, "{:<6} {:<8} {:>14} {:>12} {:>16}", c.index, c.kind, c.output.to_string(), c.params, c.flops);
    }
    let params: u64 = costs.iter().map(|c| c.params).sum();
    let flops: u64 = costs.iter().map(|c| c.flops).sum();
    let joules = tec(flops, a.flops_per_watt)?;
    let _ = writeln!(s, "total params {params}");
    let _ = writeln!(s, "total flops {flops}");
    let _ = writeln!(s, "tec_joules {joules:.6} at {} FLOPS/W", a.flops_per_watt);
    store::write(&out.join("resources.txt"), s)?;
    Ok(format!("report: {params} parameters, {flops} FLOPs, {joules:.4} J per prediction"))
}
