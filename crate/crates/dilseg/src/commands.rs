//! Implementations of the CLI subcommands.

use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use dilseg_core::arch::{ModelKind, NetSpec};
use dilseg_core::metrics::{evaluate, mean_std, wilcoxon_one_tailed, Class, MetricReport};
use dilseg_core::phantom::{generate, split, PhantomConfig, Sample, SplitKind, DEFAULT_RATIOS};
use dilseg_core::rfield::{compose_rf, gridding_coverage, network_layers, reachable_offsets, Accounting, RfLayer};
use dilseg_core::train::{predict as predict_labels, EpochStats, TrainConfig, Trainer};
use dilseg_core::{Shape, Tensor};

use crate::checkpoint::Checkpoint;
use crate::cli::{AccountingArg, EvalArgs, GridArgs, PhantomArgs, PredictArgs, RfArgs, SplitArg, TrainArgs};
use crate::config::ConfigFile;
use crate::container::{read_file, write_file, Container};
use crate::dataset::{load_dataset, write_dataset};
use crate::pgm;

/// Invalid combination of arguments, reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const PHANTOM_KEYS: &[&str] = &[
    "count",
    "size",
    "seed",
    "ratios",
    "max_tumors",
    "noise_sigma",
    "bias_amplitude",
    "blur_passes",
    "attached_probability",
];

pub fn phantom(a: &PhantomArgs, out: &mut dyn Write) -> Result<()> {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(k) = file.unknown_keys(PHANTOM_KEYS).first() {
        return Err(usage(format!("unknown phantom config key {:?}", k)));
    }
    let count = a.count.or(file.get("count")?).unwrap_or(60);
    let mut cfg = match a.size.or(file.get("size")?) {
        Some(size) => PhantomConfig::for_size(size),
        None => PhantomConfig::default(),
    };
    cfg.seed = a.seed.or(file.get("seed")?).unwrap_or(cfg.seed);
    if let Some(m) = a.max_tumors.or(file.get("max_tumors")?) {
        cfg.tumor_count = (0, m);
    }
    cfg.noise_sigma = file.get("noise_sigma")?.unwrap_or(cfg.noise_sigma);
    cfg.bias_amplitude = file.get("bias_amplitude")?.unwrap_or(cfg.bias_amplitude);
    cfg.blur_passes = file.get("blur_passes")?.unwrap_or(cfg.blur_passes);
    cfg.attached_probability = file.get("attached_probability")?.unwrap_or(cfg.attached_probability);
    let ratios = match (a.ratios, file.get_str("ratios")) {
        (Some(r), _) => r,
        (None, Some(text)) => {
            let v: Vec<u64> = text
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| usage(format!("invalid ratios {:?}", text)))?;
            <[u64; 3]>::try_from(v).map_err(|_| usage("ratios need three entries"))?
        }
        (None, None) => DEFAULT_RATIOS,
    };
    let samples = generate(&cfg, count)?;
    let parts = split(count, ratios, cfg.seed)?;
    let mut tags = vec![SplitKind::Train; count];
    for (kind, ids) in SplitKind::ALL.iter().zip(&parts) {
        for &i in ids {
            tags[i] = *kind;
        }
    }
    write_dataset(&a.out, &samples, &tags, a.pgm)?;
    writeln!(
        out,
        "wrote {} samples ({}x{}) to {}: train {}, val {}, test {}",
        count,
        cfg.size,
        cfg.size,
        a.out.display(),
        parts[0].len(),
        parts[1].len(),
        parts[2].len()
    )?;
    Ok(())
}

/// Settings of a training run after merging flags, config file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub spec: NetSpec,
    pub train: TrainConfig,
    pub epochs: u32,
    pub resume: Option<PathBuf>,
}

const TRAIN_KEYS: &[&str] =
    &["data", "out", "model", "epochs", "batch_size", "lr", "seed", "base_width", "patience", "factor", "resume"];

impl RunConfig {
    pub fn from_args(a: &TrainArgs) -> Result<Self> {
        let file = match &a.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        if let Some(k) = file.unknown_keys(TRAIN_KEYS).first() {
            return Err(usage(format!("unknown train config key {:?}", k)));
        }
        let path = |flag: &Option<PathBuf>, key: &str| flag.clone().or_else(|| file.get_str(key).map(PathBuf::from));
        let data = path(&a.data, "data").ok_or_else(|| usage("missing --data"))?;
        let out = path(&a.out, "out").ok_or_else(|| usage("missing --out"))?;
        let kind = match (a.model, file.get_str("model")) {
            (Some(k), _) => k,
            (None, Some(name)) => name.parse::<ModelKind>().map_err(|e| usage(e.to_string()))?,
            (None, None) => ModelKind::UnetProgressive,
        };
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            batch_size: a.batch_size.or(file.get("batch_size")?).unwrap_or(defaults.batch_size),
            lr: a.lr.or(file.get("lr")?).unwrap_or(defaults.lr),
            seed: a.seed.or(file.get("seed")?).unwrap_or(defaults.seed),
            patience: a.patience.or(file.get("patience")?).unwrap_or(defaults.patience),
            factor: a.factor.or(file.get("factor")?).unwrap_or(defaults.factor),
        };
        train.validate().map_err(|e| usage(e.to_string()))?;
        let base_width = a.base_width.or(file.get("base_width")?).unwrap_or(32);
        let spec = NetSpec::new(kind).with_base_width(base_width);
        spec.validate().map_err(|e| usage(e.to_string()))?;
        Ok(RunConfig {
            data,
            out,
            spec,
            train,
            epochs: a.epochs.or(file.get("epochs")?).unwrap_or(40),
            resume: path(&a.resume, "resume"),
        })
    }
}

pub const LOG_FILE: &str = "train.log";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LOG_HEADER: &str =
    "epoch\ttrain_loss\tdsc_background\tdsc_lumen\tdsc_wall\tdsc_tumor\tval_mean_dsc\tlr\tnext_lr\tevent";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{:.6}", x))
}

pub fn log_line(s: &EpochStats) -> String {
    let mut events = Vec::new();
    if s.improved {
        events.push("best");
    }
    if s.next_lr < s.lr {
        events.push("lr_reduced");
    }
    format!(
        "{}\t{:.6}\t{}\t{}\t{}\t{}\t{:.6}\t{:e}\t{:e}\t{}",
        s.epoch,
        s.train_loss,
        fmt_opt(s.val_dsc[0]),
        fmt_opt(s.val_dsc[1]),
        fmt_opt(s.val_dsc[2]),
        fmt_opt(s.val_dsc[3]),
        s.val_mean_dsc,
        s.lr,
        s.next_lr,
        if events.is_empty() { "-".to_string() } else { events.join(",") }
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs_run: u32,
    pub final_epoch: u32,
    pub best_dsc: Option<f64>,
    pub last: PathBuf,
    pub best: PathBuf,
    pub log: PathBuf,
}

/// Trains on the `train` split, validating on `val` after every epoch.
/// Writes the tab-separated log and the last and best checkpoints to
/// `cfg.out`. On a training fault the previous `last.ckpt` is kept.
pub fn train_run(cfg: &RunConfig, progress: &mut dyn Write) -> Result<TrainSummary> {
    let data = load_dataset(&cfg.data).with_context(|| format!("loading dataset {}", cfg.data.display()))?;
    let train = data.split(SplitKind::Train);
    let val = data.split(SplitKind::Val);
    if train.is_empty() {
        bail!("dataset {} has no training samples", cfg.data.display());
    }
    if val.is_empty() {
        bail!("dataset {} has no validation samples", cfg.data.display());
    }
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut trainer = match &cfg.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.spec != cfg.spec {
                bail!("checkpoint {} holds {}, not the requested {}", p.display(), ck.spec.kind, cfg.spec.kind);
            }
            ck.into_trainer()?
        }
        None => Trainer::<f32>::new(&cfg.spec, &cfg.train)?,
    };
    let log_path = cfg.out.join(LOG_FILE);
    let mut log = if cfg.resume.is_some() && log_path.exists() {
        OpenOptions::new().append(true).open(&log_path)?
    } else {
        let mut f = fs::File::create(&log_path)?;
        writeln!(f, "{}", LOG_HEADER)?;
        f
    };
    let last = cfg.out.join(LAST_CHECKPOINT);
    let best = cfg.out.join(BEST_CHECKPOINT);
    let start = trainer.epoch;
    while trainer.epoch < cfg.epochs {
        let stats = trainer.run_epoch(&train, &val).map_err(|e| {
            anyhow::Error::new(e).context(format!("epoch {} failed; {} holds the last good state", trainer.epoch + 1, last.display()))
        })?;
        let line = log_line(&stats);
        writeln!(log, "{}", line)?;
        log.flush()?;
        writeln!(progress, "{}", line)?;
        let ck = Checkpoint::from_trainer(&mut trainer);
        ck.save(&last)?;
        if stats.improved {
            ck.save(&best)?;
        }
    }
    if !best.exists() {
        Checkpoint::from_trainer(&mut trainer).save(&best)?;
    }
    if !last.exists() {
        Checkpoint::from_trainer(&mut trainer).save(&last)?;
    }
    Ok(TrainSummary {
        epochs_run: trainer.epoch - start,
        final_epoch: trainer.epoch,
        best_dsc: trainer.best_dsc,
        last,
        best,
        log: log_path,
    })
}

pub fn train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::from_args(a)?;
    let mut sink = std::io::sink();
    let progress: &mut dyn Write = if a.quiet { &mut sink } else { out };
    if !a.quiet {
        writeln!(progress, "{}", LOG_HEADER)?;
    }
    let summary = train_run(&cfg, progress)?;
    writeln!(
        out,
        "trained {} for {} epoch(s) (now at epoch {}); best validation DSC {}; checkpoints in {}",
        cfg.spec.kind,
        summary.epochs_run,
        summary.final_epoch,
        summary.best_dsc.map_or("n/a".to_string(), |b| format!("{:.4}", b)),
        cfg.out.display()
    )?;
    Ok(())
}

/// Per-sample metrics and inference times of one model on a split.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub name: String,
    pub ids: Vec<usize>,
    pub reports: Vec<MetricReport>,
    /// Milliseconds per slice; empty when no model was run.
    pub times_ms: Vec<f64>,
}

fn split_kind(s: SplitArg) -> SplitKind {
    match s {
        SplitArg::Train => SplitKind::Train,
        SplitArg::Val => SplitKind::Val,
        SplitArg::Test => SplitKind::Test,
    }
}

/// Runs `ck` over `samples`, timing each slice after one warm-up pass.
pub fn eval_checkpoint(ck: Checkpoint, samples: &[Sample]) -> Result<EvalResult> {
    let name = ck.spec.kind.to_string();
    let trainer = ck.into_trainer()?;
    let model = &trainer.model;
    if let Some(first) = samples.first() {
        predict_labels(model, &first.image)?;
    }
    let mut reports = Vec::with_capacity(samples.len());
    let mut times = Vec::with_capacity(samples.len());
    for s in samples {
        let t0 = Instant::now();
        let (mut pred, _) = predict_labels(model, &s.image)?;
        times.push(t0.elapsed().as_secs_f64() * 1e3);
        pred.set_spacing(s.labels.spacing())?;
        reports.push(evaluate(&pred, &s.labels)?);
    }
    Ok(EvalResult { name, ids: samples.iter().map(|s| s.index).collect(), reports, times_ms: times })
}

pub fn eval_truth(samples: &[Sample]) -> Result<EvalResult> {
    let reports = samples.iter().map(|s| evaluate(&s.labels, &s.labels)).collect::<dilseg_core::Result<Vec<_>>>()?;
    Ok(EvalResult {
        name: "ground truth".into(),
        ids: samples.iter().map(|s| s.index).collect(),
        reports,
        times_ms: Vec::new(),
    })
}

fn mean_pm(v: &[Option<f64>]) -> String {
    match mean_std(v) {
        Some((m, s)) => format!("{:.4} ± {:.4}", m, s),
        None => "undefined".to_string(),
    }
}

pub fn write_summary(r: &EvalResult, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "model: {} ({} slices)", r.name, r.reports.len())?;
    writeln!(out, "{:<8} {:>20} {:>22} {:>6}", "class", "DSC", "ASSD (mm)", "n")?;
    for c in Class::FOREGROUND {
        let dsc: Vec<Option<f64>> = r.reports.iter().map(|m| m.dsc(c)).collect();
        let assd: Vec<Option<f64>> = r.reports.iter().map(|m| m.assd(c)).collect();
        let n = dsc.iter().flatten().count();
        let flag = if n == 0 { "  (class absent everywhere)" } else { "" };
        writeln!(out, "{:<8} {:>20} {:>22} {:>6}{}", c.name(), mean_pm(&dsc), mean_pm(&assd), n, flag)?;
    }
    if !r.times_ms.is_empty() {
        let t: Vec<Option<f64>> = r.times_ms.iter().map(|&v| Some(v)).collect();
        let (m, s) = mean_std(&t).expect("non-empty timings");
        writeln!(out, "inference: {:.4} ± {:.4} ms per slice ({} slices, after warm-up)", m, s, r.times_ms.len())?;
    }
    Ok(())
}

fn paired(a: &EvalResult, b: &EvalResult, f: impl Fn(&MetricReport) -> Option<f64>) -> (Vec<f64>, Vec<f64>) {
    a.reports.iter().zip(&b.reports).filter_map(|(x, y)| Some((f(x)?, f(y)?))).unzip()
}

fn wilcoxon_text(x: &[f64], y: &[f64]) -> String {
    match wilcoxon_one_tailed(x, y) {
        Ok(Some(r)) => format!("p = {:.4} (W+ = {}, n = {}, {})", r.p_value, r.w_plus, r.n, if r.exact { "exact" } else { "normal approx." }),
        Ok(None) => "undefined (all differences zero)".to_string(),
        Err(e) => format!("not computed ({})", e),
    }
}

/// One-tailed paired tests: DSC of `a` greater than `b`, ASSD of `a` lower.
pub fn write_comparison(a: &EvalResult, b: &EvalResult, out: &mut dyn Write) -> Result<()> {
    if a.ids != b.ids {
        bail!("compared results cover different samples");
    }
    writeln!(out, "paired one-tailed Wilcoxon signed-rank, {} vs {}:", a.name, b.name)?;
    for c in Class::FOREGROUND {
        let (x, y) = paired(a, b, |m| m.dsc(c));
        writeln!(out, "  {:<6} DSC  {} > {}: {}", c.name(), a.name, b.name, wilcoxon_text(&x, &y))?;
        let (x, y) = paired(a, b, |m| m.assd(c));
        writeln!(out, "  {:<6} ASSD {} < {}: {}", c.name(), a.name, b.name, wilcoxon_text(&y, &x))?;
    }
    if !a.times_ms.is_empty() && !b.times_ms.is_empty() {
        let ma = a.times_ms.iter().sum::<f64>() / a.times_ms.len() as f64;
        let mb = b.times_ms.iter().sum::<f64>() / b.times_ms.len() as f64;
        writeln!(out, "time ratio {} / {}: {:.3}", a.name, b.name, ma / mb)?;
    }
    Ok(())
}

pub fn write_csv(r: &EvalResult, path: &Path) -> Result<()> {
    let mut text = String::from("patient_id,class,dsc,assd_mm\n");
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{:.6}", x));
    for (id, m) in r.ids.iter().zip(&r.reports) {
        for c in Class::FOREGROUND {
            text.push_str(&format!("{:04},{},{},{}\n", id, c.name(), cell(m.dsc(c)), cell(m.assd(c))));
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let kind = split_kind(a.split);
    let samples = data.split(kind);
    if samples.is_empty() {
        bail!("split {} of {} is empty", kind.name(), a.data.display());
    }
    writeln!(out, "split: {} ({} slices)", kind.name(), samples.len())?;
    let first = if a.truth_as_prediction { eval_truth(&samples)? } else { eval_checkpoint(Checkpoint::load(&a.checkpoint)?, &samples)? };
    write_summary(&first, out)?;
    if let Some(csv) = &a.csv {
        write_csv(&first, csv)?;
    }
    if let Some(other) = &a.compare {
        let mut second = eval_checkpoint(Checkpoint::load(other)?, &samples)?;
        if second.name == first.name {
            second.name = format!("{} [{}]", second.name, other.display());
        }
        write_summary(&second, out)?;
        write_comparison(&first, &second, out)?;
    }
    Ok(())
}

pub fn predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let trainer = ck.into_trainer()?;
    let image = read_file(&a.image)?.into_tensor()?;
    let s = image.shape();
    if s.n() != 1 || s.c() != 1 {
        bail!("expected a single-channel image, got extents {}", s);
    }
    let (labels, probs) = predict_labels(&trainer.model, &image)?;
    let prefix = a.out.to_string_lossy().to_string();
    write_file(Path::new(&format!("{}_lbl.dls", prefix)), &Container::from_labels(&labels))?;
    let plane = s.plane();
    for c in Class::ALL {
        let k = c.code() as usize;
        let t = Tensor::from_vec(Shape::new(1, 1, s.h(), s.w())?, probs.data()[k * plane..(k + 1) * plane].to_vec())?;
        write_file(Path::new(&format!("{}_prob_{}.dls", prefix, c.name())), &Container::from_tensor(&t))?;
    }
    if a.pgm {
        pgm::write_labels(Path::new(&format!("{}_lbl.pgm", prefix)), &labels)?;
    }
    let counts: Vec<String> = Class::ALL.iter().map(|&c| format!("{} {}", c.name(), labels.count(c))).collect();
    writeln!(out, "wrote {}_lbl.dls and 4 probability maps; pixels: {}", prefix, counts.join(", "))?;
    Ok(())
}

fn accounting(a: AccountingArg) -> Accounting {
    match a {
        AccountingArg::Encoder => Accounting::Encoder,
        AccountingArg::Bridge => Accounting::EncoderBridge,
        AccountingArg::Full => Accounting::EncoderBridgeResidual,
    }
}

fn write_layer_table(layers: &[RfLayer], out: &mut dyn Write) -> Result<f64> {
    let report = compose_rf(layers)?;
    writeln!(out, "{:<18} {:>3} {:>3} {:>3} {:>6} {:>8} {:>6}", "layer", "k", "D", "s", "k_eff", "RF", "jump")?;
    for l in &report.layers {
        let (k, d, s) = match l.kind {
            dilseg_core::rfield::RfKind::Window { kernel, dilation, stride } => (kernel, dilation, stride),
            dilseg_core::rfield::RfKind::Upsample2x => (0, 0, 0),
        };
        writeln!(
            out,
            "{:<18} {:>3} {:>3} {:>3} {:>6} {:>8} {:>6}",
            l.label,
            k,
            d,
            s,
            l.effective_kernel.map_or("-".into(), |e| e.to_string()),
            l.receptive_field,
            l.jump
        )?;
    }
    Ok(report.receptive_field)
}

pub fn rf(a: &RfArgs, out: &mut dyn Write) -> Result<()> {
    let spec = NetSpec::new(a.model);
    let chosen = a.accounting.map_or(Accounting::HEADLINE, accounting);
    writeln!(out, "model: {}", a.model)?;
    writeln!(out, "layers: {}", chosen.describe())?;
    let layers = network_layers(&spec, chosen)?;
    write_layer_table(&layers, out)?;
    // stride-1 runs inside each encoder block
    let mut run: Vec<RfLayer> = Vec::new();
    let mut block = String::new();
    let flush = |run: &mut Vec<RfLayer>, block: &str, out: &mut dyn Write| -> Result<()> {
        if !run.is_empty() {
            let c = gridding_coverage(run)?;
            writeln!(out, "coverage {:<8} {}/{} ({:.4})", block, c.contributing, c.window, c.density())?;
            run.clear();
        }
        Ok(())
    };
    for l in &layers {
        let stride1 = matches!(l.kind, dilseg_core::rfield::RfKind::Window { stride: 1, .. });
        let prefix = l.label.split('.').next().unwrap_or("").to_string();
        if !stride1 || prefix != block {
            flush(&mut run, &block, out)?;
            block = prefix;
        }
        if stride1 {
            run.push(l.clone());
        }
    }
    flush(&mut run, &block, out)?;
    for acc in Accounting::ALL {
        let rf = compose_rf(&network_layers(&spec, acc)?)?.receptive_field;
        let mark = if acc == Accounting::HEADLINE { "  <- headline" } else { "" };
        writeln!(out, "RF {:<42} {:>6} px{}", acc.describe(), rf, mark)?;
    }
    let headline = compose_rf(&network_layers(&spec, Accounting::HEADLINE)?)?.receptive_field;
    writeln!(out, "headline RF: {} px ({})", headline, Accounting::HEADLINE.describe())?;
    Ok(())
}

pub fn grid(a: &GridArgs, out: &mut dyn Write) -> Result<()> {
    if a.dilations.is_empty() {
        return Err(usage("--dilations needs at least one rate"));
    }
    if a.kernel == 0 || a.dilations.contains(&0) {
        return Err(usage("kernel and dilations must be positive"));
    }
    let layers: Vec<RfLayer> =
        a.dilations.iter().enumerate().map(|(i, &d)| RfLayer::conv(format!("layer{}", i + 1), a.kernel, d, 1)).collect();
    let report = compose_rf(&layers)?;
    let c = gridding_coverage(&layers)?;
    let rates: Vec<String> = a.dilations.iter().map(|d| d.to_string()).collect();
    writeln!(out, "kernel {} dilations ({})", a.kernel, rates.join(","))?;
    writeln!(out, "receptive field: {} px", report.receptive_field)?;
    writeln!(out, "coverage: {}/{} ({:.4})", c.contributing, c.window, c.density())?;
    if a.map {
        let reach = reachable_offsets(&layers)?;
        for &r in &reach {
            let row: String = reach.iter().map(|&q| if r && q { '#' } else { '.' }).collect();
            writeln!(out, "{}", row)?;
        }
    }
    Ok(())
}
