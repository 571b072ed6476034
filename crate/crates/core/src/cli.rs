//! Command-line front end: predict, train, ablate, verify-moments, sweep.
//!
//! Settings come from an optional TOML file (`[net]`, `[sgd]`, `[data]`,
//! `[run]`, unknown keys rejected) and are then overridden by flags.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::analysis::{
    check_moment_oracles, default_a_grid, write_moments_csv, MomentMode, MomentReport,
    PropagationReport,
};
use crate::data::{
    cifar10_train_files, generate_synthetic, load_cifar10_binary, truncate, BatchIter, Dataset,
    SyntheticSpec, DEFAULT_RADIUS,
};
use crate::error::{Error, Result};
use crate::layers::DEFAULT_EPSILON;
use crate::numerics::SeededRng;
use crate::probes::{
    check_profile_shape, detect_explosion, fmt_f64, Explosion, ExplosionCause, ProfileShape, VarRow,
    VarTrace,
};
use crate::resnet::{build_network, NetSpec, Variant};
use crate::training::{evaluate_accuracy, probe_at, train, SgdConfig, TrainOutcome, DEFAULT_LR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_EXPLOSION: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "resgrad", version, about = "Gradient-variance probes for BN residual networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write moment tables and per-block variance predictions.
    Predict(CommonArgs),
    /// Train one variant and record variance traces.
    Train(CommonArgs),
    /// Train Model-1/2/3 from a shared seed.
    Ablate(CommonArgs),
    /// Compare quadrature and Monte Carlo ReLU moments.
    VerifyMoments(CommonArgs),
    /// Variance profiles across batch sizes and init scales.
    Sweep(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Synthetic,
    Cifar10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Paper,
    Oracle,
}

impl From<ModeArg> for MomentMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Paper => MomentMode::PaperFormula,
            ModeArg::Oracle => MomentMode::Oracle,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub variant: Option<u8>,
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    #[arg(long, value_name = "PATH")]
    pub cifar_dir: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub steps: Option<usize>,
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub scales: usize,
    pub blocks_per_scale: usize,
    pub base_width: usize,
    pub growth: usize,
    pub init_scale: f64,
    pub epsilon: f64,
    pub variant: u8,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            scales: 3,
            blocks_per_scale: 5,
            base_width: 16,
            growth: 2,
            init_scale: 1.0,
            epsilon: DEFAULT_EPSILON,
            variant: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub probe_every: usize,
}

impl Default for SgdSection {
    fn default() -> Self {
        SgdSection {
            learning_rate: DEFAULT_LR,
            batch_size: 128,
            steps: 2000,
            probe_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dataset: DatasetKind,
    pub cifar_dir: Option<PathBuf>,
    /// Use only the first N CIFAR-10 records (0 keeps all).
    pub cifar_limit: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub per_class: usize,
    pub radius: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dataset: DatasetKind::Synthetic,
            cifar_dir: None,
            cifar_limit: 0,
            num_classes: 10,
            input_dim: 64,
            per_class: 500,
            radius: DEFAULT_RADIUS,
            sigma: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub mode: String,
    pub out: PathBuf,
    /// Variants trained by `ablate`.
    pub variants: Vec<u8>,
    pub sweep_batch_sizes: Vec<usize>,
    pub sweep_init_scales: Vec<f64>,
    /// Batches averaged for an initialization profile.
    pub profile_batches: usize,
    pub mc_samples: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            mode: "oracle".into(),
            out: PathBuf::from("out"),
            variants: vec![1, 2, 3],
            sweep_batch_sizes: vec![32, 64, 128],
            sweep_init_scales: vec![0.1, 1.0],
            profile_batches: 8,
            mc_samples: 1_000_000,
        }
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub net: NetSection,
    pub sgd: SgdSection,
    pub data: DataSection,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Config file (if any) with flag overrides applied.
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = args.seed {
            cfg.run.seed = s;
        }
        if let Some(o) = &args.out {
            cfg.run.out = o.clone();
        }
        if let Some(m) = args.mode {
            cfg.run.mode = MomentMode::from(m).name().to_string();
        }
        if let Some(v) = args.variant {
            cfg.net.variant = v;
            cfg.run.variants = vec![v];
        }
        if let Some(d) = args.dataset {
            cfg.data.dataset = d;
        }
        if let Some(d) = &args.cifar_dir {
            cfg.data.cifar_dir = Some(d.clone());
        }
        if let Some(s) = args.steps {
            cfg.sgd.steps = s;
            cfg.sgd.probe_every = cfg.sgd.probe_every.min(s.max(1));
        }
        if let Some(b) = args.batch_size {
            cfg.sgd.batch_size = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mode()?;
        Variant::from_model_number(self.net.variant).map_err(|e| Error::Config(e.to_string()))?;
        for v in &self.run.variants {
            Variant::from_model_number(*v).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.net_spec(self.variant()?)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.sgd_config().validate()?;
        if self.data.dataset == DatasetKind::Cifar10 && self.data.cifar_dir.is_none() {
            return Err(Error::Config("cifar10 dataset needs --cifar-dir".into()));
        }
        if self.run.profile_batches == 0 || self.run.mc_samples < 2 {
            return Err(Error::Config(
                "profile_batches and mc_samples must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn mode(&self) -> Result<MomentMode> {
        self.run.mode.parse().map_err(|e: Error| Error::Config(e.to_string()))
    }

    pub fn variant(&self) -> Result<Variant> {
        Variant::from_model_number(self.net.variant).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn input_dim(&self) -> usize {
        match self.data.dataset {
            DatasetKind::Synthetic => self.data.input_dim,
            DatasetKind::Cifar10 => crate::data::CIFAR_PIXELS,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self.data.dataset {
            DatasetKind::Synthetic => self.data.num_classes,
            DatasetKind::Cifar10 => crate::data::CIFAR_CLASSES,
        }
    }

    pub fn net_spec(&self, variant: Variant) -> NetSpec {
        let n = &self.net;
        let mut spec = NetSpec::uniform(n.scales, n.blocks_per_scale, n.base_width, n.growth);
        spec.variant = variant;
        spec.init_scale = n.init_scale;
        spec.epsilon = n.epsilon;
        spec.input_dim = self.input_dim();
        spec.num_classes = self.num_classes();
        spec
    }

    pub fn sgd_config(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.sgd.learning_rate,
            batch_size: self.sgd.batch_size,
            total_steps: self.sgd.steps,
            probe_every: self.sgd.probe_every,
            seed: self.run.seed,
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            num_classes: self.data.num_classes,
            input_dim: self.data.input_dim,
            radius: self.data.radius,
            sigma: self.data.sigma,
            per_class: self.data.per_class,
            seed: self.data.seed,
        }
    }

    /// The configured dataset, standardized per feature.
    pub fn load_dataset(&self) -> Result<Dataset> {
        match self.data.dataset {
            DatasetKind::Synthetic => {
                let mut ds = generate_synthetic(&self.synthetic_spec())?;
                ds.normalize()?;
                Ok(ds)
            }
            DatasetKind::Cifar10 => {
                let dir = self.data.cifar_dir.as_ref().expect("validated");
                let ds = load_cifar10_binary(&cifar10_train_files(dir))?;
                Ok(if self.data.cifar_limit > 0 {
                    truncate(&ds, self.data.cifar_limit)
                } else {
                    ds
                })
            }
        }
    }
}

/// What a command produced, besides its files.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandReport {
    pub exit_code: i32,
    pub lines: Vec<String>,
}

impl CommandReport {
    fn ok(lines: Vec<String>) -> Self {
        CommandReport {
            exit_code: EXIT_OK,
            lines,
        }
    }
}

/// Parses `args` (program name first), runs the command, prints its report
/// and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(report) => {
            for l in &report.lines {
                println!("{l}");
            }
            report.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

pub fn execute(cmd: &Command) -> Result<CommandReport> {
    match cmd {
        Command::Predict(a) => cmd_predict(&RunConfig::resolve(a)?),
        Command::Train(a) => cmd_train(&RunConfig::resolve(a)?),
        Command::Ablate(a) => cmd_ablate(&RunConfig::resolve(a)?),
        Command::VerifyMoments(a) => cmd_verify_moments(&RunConfig::resolve(a)?),
        Command::Sweep(a) => cmd_sweep(&RunConfig::resolve(a)?),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// moments.csv over a = 0, 0.25, ..., 2 in both modes, and prediction.csv
/// for the configured network at initialization (a = 0).
pub fn cmd_predict(cfg: &RunConfig) -> Result<CommandReport> {
    let out = &cfg.run.out;
    let reports: Vec<MomentReport> = MomentMode::ALL
        .iter()
        .flat_map(|&m| default_a_grid().into_iter().map(move |a| MomentReport::new(a, m)))
        .collect();
    write_moments_csv(&reports, create(out, "moments.csv")?)?;

    let mode = cfg.mode()?;
    let spec = cfg.net_spec(cfg.variant()?);
    let model = build_network(&spec, &mut SeededRng::new(cfg.run.seed))?;
    let report = PropagationReport::for_model(&model, 0.0, mode)?;
    report.write_csv(&spec, create(out, "prediction.csv")?)?;
    Ok(CommandReport::ok(vec![format!(
        "wrote moments.csv ({} rows) and prediction.csv ({} blocks, {mode} mode) to {}",
        reports.len(),
        spec.total_blocks(),
        out.display()
    )]))
}

pub const SUMMARY_HEADER: [&str; 3] = ["variant", "final_train_accuracy", "explosion"];

/// Files and summary of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub variant: Variant,
    pub outcome: TrainOutcome,
    /// Accuracy over the whole training set; NaN after an explosion.
    pub final_accuracy: f64,
}

fn write_summary(results: &[RunResult], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in results {
        out.write_record([
            r.variant.model_number().to_string(),
            fmt_f64(r.final_accuracy),
            u8::from(r.outcome.exploded()).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads summary.csv rows as (variant, final accuracy, exploded).
pub fn read_summary(r: impl std::io::Read) -> Result<Vec<(u8, f64, bool)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let (v, acc, e): (u8, f64, u8) = rec?;
        rows.push((v, acc, e != 0));
    }
    Ok(rows)
}

fn write_run_files(dir: &Path, r: &RunResult) -> Result<()> {
    r.outcome.trace.write_csv(create(dir, "variance_trace.csv")?)?;
    let mut acc = csv::Writer::from_writer(create(dir, "accuracy.csv")?);
    acc.write_record(["step", "loss", "train_accuracy"])?;
    for rec in &r.outcome.records {
        acc.write_record([
            rec.step.to_string(),
            fmt_f64(rec.loss),
            fmt_f64(rec.train_accuracy),
        ])?;
    }
    acc.flush()?;
    let mut a = csv::Writer::from_writer(create(dir, "a_stats.csv")?);
    a.write_record(["step", "block_index", "layer", "mean_abs_a", "excluded"])?;
    for s in &r.outcome.a_stats {
        a.write_record([
            s.step.to_string(),
            s.block_index.to_string(),
            s.layer.clone(),
            fmt_f64(s.mean_abs_a),
            s.excluded.to_string(),
        ])?;
    }
    a.flush()?;
    write_summary(std::slice::from_ref(r), create(dir, "summary.csv")?)
}

/// Trains one variant on an already loaded dataset.
pub fn run_variant(cfg: &RunConfig, data: &Dataset, variant: Variant) -> Result<RunResult> {
    let spec = cfg.net_spec(variant);
    let mut model = build_network(&spec, &mut SeededRng::new(cfg.run.seed))?;
    let sgd = cfg.sgd_config();
    let outcome = train(&mut model, data, &sgd)?;
    let final_accuracy = if outcome.exploded() {
        f64::NAN
    } else {
        evaluate_accuracy(&model, data, sgd.batch_size)?
    };
    Ok(RunResult {
        variant,
        outcome,
        final_accuracy,
    })
}

fn run_lines(r: &RunResult) -> Vec<String> {
    let mut lines = vec![match r.outcome.exploded_at {
        Some(step) => format!("{}: explosion at step {step}", r.variant),
        None => format!(
            "{}: {} steps, final train accuracy {:.4}",
            r.variant,
            r.outcome.records.len(),
            r.final_accuracy
        ),
    }];
    match detect_explosion(&r.outcome.trace) {
        Some(Explosion {
            step,
            block_index,
            cause: ExplosionCause::Spread(ratio),
        }) => lines.push(format!(
            "{}: gradient variance spread {ratio:.3e}x across blocks (step {step}, block {block_index})",
            r.variant
        )),
        Some(e) => lines.push(format!(
            "{}: non-finite gradient at step {} block {}",
            r.variant, e.step, e.block_index
        )),
        None => {}
    }
    lines
}

/// variance_trace.csv, accuracy.csv, a_stats.csv and summary.csv for the
/// configured variant; exit code 2 when training exploded.
pub fn cmd_train(cfg: &RunConfig) -> Result<CommandReport> {
    let data = cfg.load_dataset()?;
    let r = run_variant(cfg, &data, cfg.variant()?)?;
    write_run_files(&cfg.run.out, &r)?;
    Ok(CommandReport {
        exit_code: if r.outcome.exploded() { EXIT_EXPLOSION } else { EXIT_OK },
        lines: run_lines(&r),
    })
}

/// One subdirectory per variant (`model-N/`, same files as `train`) and a
/// combined summary.csv; exit code 2 when any run exploded.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<CommandReport> {
    let data = cfg.load_dataset()?;
    let mut results = Vec::new();
    let mut lines = Vec::new();
    for &v in &cfg.run.variants {
        let variant = Variant::from_model_number(v)?;
        let r = run_variant(cfg, &data, variant)?;
        write_run_files(&cfg.run.out.join(variant.to_string()), &r)?;
        lines.extend(run_lines(&r));
        results.push(r);
    }
    write_summary(&results, create(&cfg.run.out, "summary.csv")?)?;
    let exploded = results.iter().any(|r| r.outcome.exploded());
    Ok(CommandReport {
        exit_code: if exploded { EXIT_EXPLOSION } else { EXIT_OK },
        lines,
    })
}

/// Points where the moment oracles are compared.
pub const VERIFY_GRID: [f64; 6] = [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0];
/// Agreement threshold in Monte Carlo standard errors.
pub const VERIFY_Z: f64 = 4.0;

/// verify_moments.csv; exit code 3 when quadrature and Monte Carlo disagree.
pub fn cmd_verify_moments(cfg: &RunConfig) -> Result<CommandReport> {
    let checks = check_moment_oracles(&VERIFY_GRID, cfg.run.mc_samples, cfg.run.seed);
    let mut w = csv::Writer::from_writer(create(&cfg.run.out, "verify_moments.csv")?);
    w.write_record([
        "a", "paper_e_y", "paper_e_y2", "quad_e_y", "quad_e_y2", "mc_e_y", "mc_se_y", "mc_e_y2",
        "mc_se_y2", "max_z", "agree",
    ])?;
    let mut lines = vec![format!(
        "{:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>6}",
        "a", "paper E2", "quad E", "quad E2", "mc E", "mc E2", "z"
    )];
    for c in &checks {
        w.write_record([
            fmt_f64(c.a),
            fmt_f64(c.paper.0),
            fmt_f64(c.paper.1),
            fmt_f64(c.quadrature.0),
            fmt_f64(c.quadrature.1),
            fmt_f64(c.mc.e_y),
            fmt_f64(c.mc.se_y),
            fmt_f64(c.mc.e_y2),
            fmt_f64(c.mc.se_y2),
            fmt_f64(c.max_z),
            u8::from(c.agrees(VERIFY_Z)).to_string(),
        ])?;
        lines.push(format!(
            "{:>5.2} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>6.2}",
            c.a, c.paper.1, c.quadrature.0, c.quadrature.1, c.mc.e_y, c.mc.e_y2, c.max_z
        ));
    }
    w.flush()?;
    let ok = checks.iter().all(|c| c.agrees(VERIFY_Z));
    lines.push(if ok {
        "quadrature and Monte Carlo agree everywhere".into()
    } else {
        "quadrature and Monte Carlo DISAGREE".into()
    });
    Ok(CommandReport {
        exit_code: if ok { EXIT_OK } else { EXIT_ORACLE },
        lines,
    })
}

/// Mean gradient variance per block at initialization, averaged over
/// `batches` mini-batches of `batch_size`.
pub fn init_profile(
    spec: &NetSpec,
    data: &Dataset,
    batch_size: usize,
    batches: usize,
    seed: u64,
) -> Result<Vec<VarRow>> {
    let model = build_network(spec, &mut SeededRng::new(seed))?;
    let mut iter = BatchIter::new(data.len(), batch_size, SeededRng::new(seed).derive(2))?;
    let mut acc: Option<Vec<VarRow>> = None;
    for _ in 0..batches {
        let (x, y) = data.select(&iter.next_indices());
        let rows = probe_at(&model, &x, &y, 0)?
            .ok_or_else(|| Error::InvalidArgument("non-finite loss at initialization".into()))?;
        match &mut acc {
            None => acc = Some(rows),
            Some(a) => {
                for (t, r) in a.iter_mut().zip(rows) {
                    t.mean_grad_variance += r.mean_grad_variance;
                    t.grad_l2 += r.grad_l2;
                }
            }
        }
    }
    let mut rows = acc.unwrap_or_default();
    for r in &mut rows {
        r.mean_grad_variance /= batches as f64;
        r.grad_l2 /= batches as f64;
    }
    Ok(rows)
}

/// One setting of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub batch_size: usize,
    pub init_scale: f64,
    pub shape: ProfileShape,
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(";")
}

/// Initialization profile (step 0 rows) plus, when steps > 0, a training
/// trace for every batch size and init scale; sweep_summary.csv holds the
/// shape checks of the initialization profiles.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<CommandReport> {
    let data = cfg.load_dataset()?;
    let results = run_sweep(cfg, &data, true)?;
    let mut w = csv::Writer::from_writer(create(&cfg.run.out, "sweep_summary.csv")?);
    w.write_record([
        "batch_size",
        "init_scale",
        "growth_ok",
        "dip_ok",
        "within_ratios",
        "boundary_ratios",
    ])?;
    let mut lines = Vec::new();
    for r in &results {
        let within: Vec<f64> = r.shape.within_ratios.iter().flatten().copied().collect();
        w.write_record([
            r.batch_size.to_string(),
            fmt_f64(r.init_scale),
            u8::from(r.shape.growth_ok).to_string(),
            u8::from(r.shape.dip_ok).to_string(),
            fmt_list(&within),
            fmt_list(&r.shape.boundary_ratios),
        ])?;
        lines.push(format!(
            "batch {:>4} init x{:<4} growth {} dip {} boundary ratios [{}]",
            r.batch_size,
            r.init_scale,
            r.shape.growth_ok,
            r.shape.dip_ok,
            fmt_list(&r.shape.boundary_ratios)
        ));
    }
    w.flush()?;
    Ok(CommandReport::ok(lines))
}

/// Runs every sweep setting; `write` controls whether traces go to disk.
pub fn run_sweep(cfg: &RunConfig, data: &Dataset, write: bool) -> Result<Vec<SweepResult>> {
    let variant = cfg.variant()?;
    let mut results = Vec::new();
    for &bs in &cfg.run.sweep_batch_sizes {
        for &scale in &cfg.run.sweep_init_scales {
            let mut setting = cfg.clone();
            setting.sgd.batch_size = bs;
            setting.net.init_scale = scale;
            setting.validate()?;
            let spec = setting.net_spec(variant);
            let rows = init_profile(&spec, data, bs, cfg.run.profile_batches, cfg.run.seed)?;
            let shape = check_profile_shape(&rows);
            if write {
                let mut trace = VarTrace::new();
                trace.extend(rows);
                if setting.sgd.steps > 0 {
                    trace.extend(run_variant(&setting, data, variant)?.outcome.trace.rows);
                }
                let dir = cfg.run.out.join(format!("bs{bs}_init{scale}"));
                trace.write_csv(create(&dir, "variance_trace.csv")?)?;
            }
            results.push(SweepResult {
                batch_size: bs,
                init_scale: scale,
                shape,
            });
        }
    }
    Ok(results)
}
