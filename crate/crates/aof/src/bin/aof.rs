//! Command-line pipelines: dataset generation, training, attacks, defenses,
//! and evaluation, each writing its outputs plus a run manifest under a
//! single output directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use aof::attack::{self, AttackConfig, AttackMode, AttackVariant};
use aof::eval::{self, DefenseKind, SweepParameter};
use aof::model::{self, Classifier, Dims, TrainConfig};
use aof::pointcloud::{self, LabeledDataset, PointCloud};
use aof::spectral;

#[derive(Parser)]
#[command(name = "aof", version, about = "Frequency-domain adversarial attacks on point clouds")]
struct Cli {
    /// Worker threads for batch stages (0 = available parallelism).
    #[arg(long, global = true, default_value_t = 0, env = "AOF_THREADS")]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or import datasets.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train a classifier on a dataset manifest.
    Train(TrainArgs),
    /// Run an attack campaign over a dataset.
    Attack(AttackArgs),
    /// Apply a defense transform to clouds.
    Defend(DefendArgs),
    /// Metrics: ASR, transferability, sweeps, spectral CDFs.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Frequency-domain operations on a single cloud.
    Spectral {
        #[command(subcommand)]
        command: SpectralCommand,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Generate the synthetic 5-class shape dataset.
    Gen(DatasetGenArgs),
    /// Sample OFF meshes into point clouds.
    ImportOff(ImportOffArgs),
}

#[derive(Args)]
struct DatasetGenArgs {
    /// Number of shape classes (only 5 is supported).
    #[arg(long, default_value_t = 5, env = "AOF_CLASSES")]
    classes: usize,
    #[arg(long = "per-class", env = "AOF_PER_CLASS")]
    per_class: usize,
    #[arg(long, default_value_t = 256, env = "AOF_POINTS")]
    points: usize,
    #[arg(long, default_value_t = 0, env = "AOF_SEED")]
    seed: u64,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct ImportOffArgs {
    /// Directory of OFF files; immediate subdirectories name classes.
    #[arg(long = "in", env = "AOF_IN")]
    input: PathBuf,
    #[arg(long, default_value_t = 256, env = "AOF_POINTS")]
    points: usize,
    #[arg(long, default_value_t = 0, env = "AOF_SEED")]
    seed: u64,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest CSV.
    #[arg(long, env = "AOF_DATA")]
    data: PathBuf,
    /// Hidden layer widths h1,h2,h3.
    #[arg(long, default_value = "64,128,64", env = "AOF_DIMS")]
    dims: String,
    #[arg(long, default_value_t = 30, env = "AOF_EPOCHS")]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3, env = "AOF_LR")]
    lr: f64,
    #[arg(long, default_value_t = 16, env = "AOF_BATCH_SIZE")]
    batch_size: usize,
    #[arg(long, default_value_t = 0, env = "AOF_SEED")]
    seed: u64,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct AttackFlags {
    /// Low-frequency eigenvector count (clamped to N).
    #[arg(long, default_value_t = 100, env = "AOF_M")]
    m: usize,
    #[arg(long, default_value_t = 0.25, env = "AOF_GAMMA")]
    gamma: f64,
    #[arg(long, default_value_t = 30.0, env = "AOF_KAPPA")]
    kappa: f64,
    #[arg(long = "eps-inf", default_value_t = 0.18, env = "AOF_EPS_INF")]
    eps_inf: f64,
    #[arg(long = "iters", default_value_t = 200, env = "AOF_ITERS")]
    n_iter: usize,
    #[arg(long = "inits", default_value_t = 2, env = "AOF_INITS")]
    s: usize,
    #[arg(long, default_value_t = 0.01, env = "AOF_LR")]
    lr: f64,
    #[arg(long, default_value_t = 10, env = "AOF_K")]
    k: usize,
    /// untargeted, or targeted:<class>.
    #[arg(long, default_value = "untargeted", env = "AOF_MODE")]
    mode: String,
    /// aof or baseline.
    #[arg(long, default_value = "aof", env = "AOF_VARIANT")]
    variant: String,
}

impl AttackFlags {
    fn to_config(&self) -> Result<AttackConfig> {
        let mode = if self.mode == "untargeted" {
            AttackMode::Untargeted
        } else if let Some(class) = self.mode.strip_prefix("targeted:") {
            AttackMode::Targeted(class.parse().context("bad targeted class")?)
        } else {
            bail!("--mode must be untargeted or targeted:<class>");
        };
        let variant = match self.variant.as_str() {
            "aof" => AttackVariant::Aof,
            "baseline" => AttackVariant::BaselineFullSpectrum,
            other => bail!("--variant must be aof or baseline, got {other}"),
        };
        let cfg = AttackConfig {
            m: self.m,
            k: self.k,
            gamma: self.gamma,
            kappa: self.kappa,
            eps_inf: self.eps_inf,
            n_iter: self.n_iter,
            s: self.s,
            learning_rate: self.lr,
            mode,
            variant,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, env = "AOF_MODEL")]
    model: PathBuf,
    #[arg(long, env = "AOF_DATA")]
    data: PathBuf,
    /// Which split of the dataset to attack.
    #[arg(long, default_value = "test", env = "AOF_SPLIT")]
    split: String,
    #[command(flatten)]
    flags: AttackFlags,
    #[arg(long, default_value_t = 0, env = "AOF_SEED")]
    seed: u64,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct DefendArgs {
    /// srs or sor.
    #[arg(long, env = "AOF_METHOD")]
    method: String,
    #[arg(long, env = "AOF_DATA")]
    data: PathBuf,
    /// SRS: points to keep (0 = ceil(N/2)).
    #[arg(long, default_value_t = 0, env = "AOF_KEEP")]
    keep: usize,
    /// SOR: neighbor count.
    #[arg(long, default_value_t = 2, env = "AOF_K")]
    k: usize,
    /// SOR: standard-deviation multiplier.
    #[arg(long, default_value_t = 1.1, env = "AOF_ALPHA")]
    alpha: f64,
    #[arg(long, default_value_t = 0, env = "AOF_SEED")]
    seed: u64,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// ASR of an attack output directory against a model.
    Asr(EvalAsrArgs),
    /// Accuracy on low-passed clouds for a list of m values.
    LfcSweep(LfcSweepArgs),
    /// Attack crafted on each model, evaluated on every model.
    Transfer(TransferArgs),
    /// Sweep m, gamma, or eps-inf.
    Ablation(AblationArgs),
    /// Averaged cumulative spectral energy of perturbations.
    Cdf(CdfArgs),
}

#[derive(Args)]
struct EvalAsrArgs {
    #[arg(long, env = "AOF_MODEL")]
    model: PathBuf,
    #[arg(long, env = "AOF_DATA")]
    data: PathBuf,
    #[arg(long, default_value = "test", env = "AOF_SPLIT")]
    split: String,
    /// Directory of <name>_adv.xyz files from an attack run.
    #[arg(long, env = "AOF_ADV")]
    adv: PathBuf,
    /// Optional defense: none, srs, sor.
    #[arg(long, default_value = "none", env = "AOF_DEFENSE")]
    defense: String,
    #[arg(long, default_value_t = 0, env = "AOF_KEEP")]
    keep: usize,
    #[arg(long, default_value_t = 2, env = "AOF_K")]
    k: usize,
    #[arg(long, default_value_t = 1.1, env = "AOF_ALPHA")]
    alpha: f64,
    #[arg(long, default_value_t = 0, env = "AOF_SEED")]
    seed: u64,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct LfcSweepArgs {
    #[arg(long, env = "AOF_MODEL")]
    model: PathBuf,
    #[arg(long, env = "AOF_DATA")]
    data: PathBuf,
    #[arg(long, default_value = "test", env = "AOF_SPLIT")]
    split: String,
    /// Comma-separated m values.
    #[arg(long, env = "AOF_MS")]
    ms: String,
    #[arg(long, default_value_t = 10, env = "AOF_K")]
    k: usize,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    /// Comma-separated model files; the first is also a victim.
    #[arg(long, env = "AOF_MODELS")]
    models: String,
    #[arg(long, env = "AOF_DATA")]
    data: PathBuf,
    #[arg(long, default_value = "test", env = "AOF_SPLIT")]
    split: String,
    #[command(flatten)]
    flags: AttackFlags,
    #[arg(long, default_value_t = 0, env = "AOF_SEED")]
    seed: u64,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct AblationArgs {
    /// m, gamma, or eps-inf.
    #[arg(long, env = "AOF_PARAM")]
    param: String,
    /// Comma-separated values.
    #[arg(long, env = "AOF_VALUES")]
    values: String,
    #[arg(long, env = "AOF_MODELS")]
    models: String,
    #[arg(long, env = "AOF_DATA")]
    data: PathBuf,
    #[arg(long, default_value = "test", env = "AOF_SPLIT")]
    split: String,
    #[command(flatten)]
    flags: AttackFlags,
    #[arg(long, default_value_t = 0, env = "AOF_SEED")]
    seed: u64,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct CdfArgs {
    #[arg(long, env = "AOF_DATA")]
    data: PathBuf,
    #[arg(long, default_value = "test", env = "AOF_SPLIT")]
    split: String,
    #[arg(long, env = "AOF_ADV")]
    adv: PathBuf,
    #[arg(long, default_value_t = 10, env = "AOF_K")]
    k: usize,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SpectralCommand {
    /// Low/high frequency split of one XYZ file.
    Split(SpectralSplitArgs),
}

#[derive(Args)]
struct SpectralSplitArgs {
    #[arg(long = "in", env = "AOF_IN")]
    input: PathBuf,
    #[arg(long, env = "AOF_M")]
    m: usize,
    #[arg(long, default_value_t = 10, env = "AOF_K")]
    k: usize,
    /// Also write the eigenbasis as a binary dump.
    #[arg(long = "dump-basis")]
    dump_basis: bool,
    #[arg(long, env = "AOF_OUT")]
    out: PathBuf,
}

struct RunManifest {
    command: String,
    pairs: Vec<(String, String)>,
    started: Instant,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            pairs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn put(&mut self, key: &str, value: impl ToString) {
        self.pairs.push((key.to_string(), value.to_string()));
    }

    fn write(&self, out_dir: &Path, status: &str) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        let mut pairs = vec![
            ("command".to_string(), self.command.clone()),
            ("tool_version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("status".to_string(), status.to_string()),
            (
                "wall_clock_seconds".to_string(),
                format!("{:.3}", self.started.elapsed().as_secs_f64()),
            ),
        ];
        pairs.extend(self.pairs.clone());
        eval::write_kv_summary(out_dir.join("run_manifest.txt"), &pairs)?;
        Ok(())
    }
}

fn load_split(manifest: &Path, split: &str) -> Result<LabeledDataset> {
    let ds = pointcloud::load_dataset(manifest)?;
    Ok(match split {
        "train" => ds.train_set(),
        "test" => ds.test_set(),
        "all" => ds,
        other => bail!("--split must be train, test, or all, got {other}"),
    })
}

fn load_models(list: &str) -> Result<Vec<Classifier>> {
    list.split(',')
        .map(|p| model::load_model(p.trim()).map_err(Into::into))
        .collect()
}

fn parse_list<T: std::str::FromStr>(list: &str, what: &str) -> Result<Vec<T>> {
    list.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| anyhow::anyhow!("cannot parse {what} value {v:?}"))
        })
        .collect()
}

/// Load `<name>_adv.xyz` counterparts for every cloud of the dataset,
/// falling back to the clean cloud when the file is missing.
fn load_adversarial(ds: &LabeledDataset, adv_dir: &Path) -> Result<(Vec<PointCloud>, usize)> {
    let mut out = Vec::new();
    let mut missing = 0usize;
    for (i, cloud) in ds.clouds.iter().enumerate() {
        let name = cloud.name.clone().unwrap_or_else(|| format!("cloud_{i:05}"));
        let path = adv_dir.join(format!("{name}_adv.xyz"));
        if path.exists() {
            out.push(pointcloud::load_xyz(&path)?.with_label(cloud.label.unwrap_or(0)));
        } else {
            missing += 1;
            out.push(cloud.clone());
        }
    }
    Ok((out, missing))
}

fn fmt_asr(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => "undefined".to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Dataset { command } => match command {
            DatasetCommand::Gen(args) => dataset_gen(args),
            DatasetCommand::ImportOff(args) => dataset_import_off(args),
        },
        Command::Train(args) => train(args),
        Command::Attack(args) => attack_cmd(args),
        Command::Defend(args) => defend(args),
        Command::Eval { command } => match command {
            EvalCommand::Asr(args) => eval_asr(args),
            EvalCommand::LfcSweep(args) => eval_lfc_sweep(args),
            EvalCommand::Transfer(args) => eval_transfer(args),
            EvalCommand::Ablation(args) => eval_ablation(args),
            EvalCommand::Cdf(args) => eval_cdf(args),
        },
        Command::Spectral { command } => match command {
            SpectralCommand::Split(args) => spectral_split(args),
        },
    }
}

fn dataset_gen(args: DatasetGenArgs) -> Result<()> {
    let mut manifest = RunManifest::new("dataset gen");
    manifest.put("classes", args.classes);
    manifest.put("per_class", args.per_class);
    manifest.put("points", args.points);
    manifest.put("seed", args.seed);
    if args.classes != 5 {
        manifest.write(&args.out, "error")?;
        bail!("only --classes 5 is supported by the synthetic generator");
    }
    let result = (|| -> Result<()> {
        let ds = pointcloud::generate_shape_dataset(args.per_class, args.points, args.seed)?;
        let path = pointcloud::save_dataset(&ds, &args.out)?;
        println!("wrote {} clouds, manifest {}", ds.len(), path.display());
        Ok(())
    })();
    manifest.write(&args.out, if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn dataset_import_off(args: ImportOffArgs) -> Result<()> {
    use std::fmt::Write as _;
    let mut manifest = RunManifest::new("dataset import-off");
    manifest.put("in", args.input.display());
    manifest.put("points", args.points);
    manifest.put("seed", args.seed);
    let result = (|| -> Result<()> {
        // Class subdirectories sorted by name; loose OFF files get class 0.
        let mut entries: Vec<(PathBuf, String)> = Vec::new();
        let mut class_names: Vec<String> = Vec::new();
        let walk = |dir: &Path, class: &str, entries: &mut Vec<(PathBuf, String)>| -> Result<()> {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "off"))
                .collect();
            files.sort();
            for f in files {
                entries.push((f, class.to_string()));
            }
            Ok(())
        };
        let mut subdirs: Vec<PathBuf> = std::fs::read_dir(&args.input)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        if subdirs.is_empty() {
            class_names.push("default".to_string());
            walk(&args.input, "default", &mut entries)?;
        } else {
            for d in &subdirs {
                let name = d.file_name().unwrap().to_string_lossy().into_owned();
                class_names.push(name.clone());
                walk(d, &name, &mut entries)?;
            }
        }
        if entries.is_empty() {
            bail!("no OFF files under {}", args.input.display());
        }
        std::fs::create_dir_all(&args.out)?;
        let mut csv = String::from("path,label,split\n");
        for (i, (path, class)) in entries.iter().enumerate() {
            let label = class_names.iter().position(|c| c == class).unwrap();
            let cloud = pointcloud::load_off_and_sample(
                path,
                args.points,
                args.seed.wrapping_add(i as u64),
            )?;
            let stem = path.file_stem().unwrap().to_string_lossy();
            let rel = format!("{class}_{stem}.xyz");
            pointcloud::save_xyz(&cloud, args.out.join(&rel))?;
            writeln!(csv, "{rel},{label},test").unwrap();
        }
        std::fs::write(args.out.join("manifest.csv"), csv)?;
        println!("imported {} meshes", entries.len());
        Ok(())
    })();
    manifest.write(&args.out, if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn parse_dims(dims: &str, n_classes: usize) -> Result<Dims> {
    let parts: Vec<usize> = parse_list(dims, "dims")?;
    if parts.len() != 3 {
        bail!("--dims must be h1,h2,h3");
    }
    Ok(Dims::new(parts[0], parts[1], parts[2], n_classes))
}

fn train(args: TrainArgs) -> Result<()> {
    let out_dir = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let mut manifest = RunManifest::new("train");
    manifest.put("data", args.data.display());
    manifest.put("dims", &args.dims);
    manifest.put("epochs", args.epochs);
    manifest.put("lr", args.lr);
    manifest.put("seed", args.seed);
    let result = (|| -> Result<()> {
        let ds = pointcloud::load_dataset(&args.data)?;
        let dims = parse_dims(&args.dims, ds.class_names.len())?;
        let cfg = TrainConfig {
            learning_rate: args.lr,
            epochs: args.epochs,
            batch_size: args.batch_size,
            seed: args.seed,
            weight_decay: 0.0,
        };
        let (classifier, report) = model::train(&ds, &cfg, dims)?;
        model::save_model(&classifier, &args.out)?;
        println!("train accuracy {:.4}", report.final_train_accuracy);
        if let Some(acc) = report.final_test_accuracy {
            println!("test accuracy {acc:.4}");
        }
        Ok(())
    })();
    manifest.write(&out_dir, if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn attack_cmd(args: AttackArgs) -> Result<()> {
    let mut manifest = RunManifest::new("attack");
    manifest.put("model", args.model.display());
    manifest.put("data", args.data.display());
    manifest.put("split", &args.split);
    manifest.put("variant", &args.flags.variant);
    manifest.put("m", args.flags.m);
    manifest.put("gamma", args.flags.gamma);
    manifest.put("kappa", args.flags.kappa);
    manifest.put("eps_inf", args.flags.eps_inf);
    manifest.put("iters", args.flags.n_iter);
    manifest.put("inits", args.flags.s);
    manifest.put("lr", args.flags.lr);
    manifest.put("k", args.flags.k);
    manifest.put("mode", &args.flags.mode);
    manifest.put("seed", args.seed);
    let result = (|| -> Result<()> {
        let cfg = args.flags.to_config()?;
        let victim = model::load_model(&args.model)?;
        let ds = load_split(&args.data, &args.split)?;
        let results = attack::attack_batch(&victim, &ds, &cfg, args.seed);
        let failures = results.iter().filter(|r| r.is_err()).count();
        let csv = attack::write_attack_results(&results, &ds, &args.out)?;
        let successes = results
            .iter()
            .filter(|r| r.as_ref().map(|x| x.success).unwrap_or(false))
            .count();
        println!(
            "attacked {} clouds: {} successes, {} errors; results {}",
            ds.len(),
            successes,
            failures,
            csv.display()
        );
        if failures > 0 {
            eprintln!("warning: {failures} per-cloud failures recorded in the CSV");
        }
        Ok(())
    })();
    manifest.write(&args.out, if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn defend(args: DefendArgs) -> Result<()> {
    let mut manifest = RunManifest::new("defend");
    manifest.put("method", &args.method);
    manifest.put("data", args.data.display());
    manifest.put("seed", args.seed);
    let result = (|| -> Result<()> {
        let ds = pointcloud::load_dataset(&args.data)?;
        std::fs::create_dir_all(&args.out)?;
        let mut rows = Vec::new();
        for (i, cloud) in ds.clouds.iter().enumerate() {
            let kind = match args.method.as_str() {
                "srs" => DefenseKind::Srs {
                    keep: if args.keep == 0 { cloud.len().div_ceil(2) } else { args.keep },
                },
                "sor" => DefenseKind::Sor { k: args.k, alpha: args.alpha },
                other => bail!("--method must be srs or sor, got {other}"),
            };
            let defended = eval::apply_defense(cloud, kind, args.seed.wrapping_add(i as u64))?;
            let name = cloud.name.clone().unwrap_or_else(|| format!("cloud_{i:05}"));
            pointcloud::save_xyz(&defended, args.out.join(format!("{name}_defended.xyz")))?;
            rows.push(format!("{name},{},{}", cloud.len(), defended.len()));
        }
        eval::write_csv(args.out.join("defend.csv"), "cloud_name,n_in,n_out", rows)?;
        println!("defended {} clouds", ds.len());
        Ok(())
    })();
    manifest.write(&args.out, if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn eval_asr(args: EvalAsrArgs) -> Result<()> {
    let mut manifest = RunManifest::new("eval asr");
    manifest.put("model", args.model.display());
    manifest.put("data", args.data.display());
    manifest.put("adv", args.adv.display());
    manifest.put("defense", &args.defense);
    manifest.put("seed", args.seed);
    let result = (|| -> Result<()> {
        let classifier = model::load_model(&args.model)?;
        let ds = load_split(&args.data, &args.split)?;
        let (advs, missing) = load_adversarial(&ds, &args.adv)?;
        if missing > 0 {
            eprintln!("warning: {missing} adversarial files missing, clean clouds substituted");
        }
        let report = match args.defense.as_str() {
            "none" => eval::asr(&classifier, &ds, &advs)?,
            "srs" => {
                let keep = if args.keep == 0 {
                    ds.clouds.first().map_or(1, |c| c.len().div_ceil(2))
                } else {
                    args.keep
                };
                eval::defense_eval(&classifier, &ds, &advs, DefenseKind::Srs { keep }, args.seed)?
            }
            "sor" => eval::defense_eval(
                &classifier,
                &ds,
                &advs,
                DefenseKind::Sor { k: args.k, alpha: args.alpha },
                args.seed,
            )?,
            other => bail!("--defense must be none, srs, or sor, got {other}"),
        };
        std::fs::create_dir_all(&args.out)?;
        eval::write_csv(
            args.out.join("asr_per_class.csv"),
            "class,n_correct_clean,n_fooled",
            report
                .per_class
                .iter()
                .map(|(c, s, t)| format!("{c},{s},{t}")),
        )?;
        let mut pairs = vec![
            ("asr".to_string(), fmt_asr(report.asr)),
            ("n_correct_clean".to_string(), report.n_correct_clean.to_string()),
            ("n_attacked".to_string(), report.n_attacked.to_string()),
            ("n_fooled".to_string(), report.n_fooled.to_string()),
            ("seed".to_string(), args.seed.to_string()),
        ];
        pairs.extend(report.metadata.clone());
        eval::write_kv_summary(args.out.join("summary.txt"), &pairs)?;
        println!("ASR {}", fmt_asr(report.asr));
        Ok(())
    })();
    manifest.write(&args.out, if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn eval_lfc_sweep(args: LfcSweepArgs) -> Result<()> {
    let mut manifest = RunManifest::new("eval lfc-sweep");
    manifest.put("model", args.model.display());
    manifest.put("data", args.data.display());
    manifest.put("ms", &args.ms);
    manifest.put("k", args.k);
    let result = (|| -> Result<()> {
        let classifier = model::load_model(&args.model)?;
        let ds = load_split(&args.data, &args.split)?;
        let ms: Vec<usize> = parse_list(&args.ms, "m")?;
        let sweep = eval::lfc_accuracy_sweep(&classifier, &ds, &ms, args.k)?;
        std::fs::create_dir_all(&args.out)?;
        eval::write_csv(
            args.out.join("lfc_sweep.csv"),
            "m,accuracy",
            sweep
                .rows
                .iter()
                .map(|(m, a)| format!("{m},{a}"))
                .chain(std::iter::once(format!("original,{}", sweep.original_accuracy))),
        )?;
        for (m, a) in &sweep.rows {
            println!("m={m} accuracy={a:.4}");
        }
        println!("original accuracy={:.4}", sweep.original_accuracy);
        Ok(())
    })();
    manifest.write(&args.out, if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn eval_transfer(args: TransferArgs) -> Result<()> {
    let mut manifest = RunManifest::new("eval transfer");
    manifest.put("models", &args.models);
    manifest.put("data", args.data.display());
    manifest.put("seed", args.seed);
    let result = (|| -> Result<()> {
        let cfg = args.flags.to_config()?;
        let models = load_models(&args.models)?;
        let ds = load_split(&args.data, &args.split)?;
        let tm = eval::transfer_matrix(&models, &ds, &cfg, args.seed)?;
        std::fs::create_dir_all(&args.out)?;
        eval::write_csv(
            args.out.join("transfer.csv"),
            "victim,eval_model,asr",
            tm.asr.iter().enumerate().flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(move |(j, v)| format!("{i},{j},{}", fmt_asr(*v)))
                    .collect::<Vec<_>>()
            }),
        )?;
        for (i, row) in tm.asr.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                println!("victim {i} -> model {j}: {}", fmt_asr(*v));
            }
        }
        Ok(())
    })();
    manifest.write(&args.out, if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn eval_ablation(args: AblationArgs) -> Result<()> {
    let mut manifest = RunManifest::new("eval ablation");
    manifest.put("param", &args.param);
    manifest.put("values", &args.values);
    manifest.put("models", &args.models);
    manifest.put("seed", args.seed);
    let result = (|| -> Result<()> {
        let parameter = match args.param.as_str() {
            "m" => SweepParameter::M,
            "gamma" => SweepParameter::Gamma,
            "eps-inf" => SweepParameter::EpsInf,
            other => bail!("--param must be m, gamma, or eps-inf, got {other}"),
        };
        let values: Vec<f64> = parse_list(&args.values, "sweep")?;
        let cfg = args.flags.to_config()?;
        let models = load_models(&args.models)?;
        let ds = load_split(&args.data, &args.split)?;
        let rows = eval::ablation_sweep(parameter, &values, &cfg, &models, &ds, args.seed)?;
        std::fs::create_dir_all(&args.out)?;
        eval::write_csv(
            args.out.join("ablation.csv"),
            "value,white_box_asr,mean_transfer_asr",
            rows.iter().map(|r| {
                format!("{},{},{}", r.value, fmt_asr(r.white_box_asr), fmt_asr(r.mean_transfer_asr))
            }),
        )?;
        for r in &rows {
            println!(
                "{}={} white-box {} transfer {}",
                args.param,
                r.value,
                fmt_asr(r.white_box_asr),
                fmt_asr(r.mean_transfer_asr)
            );
        }
        Ok(())
    })();
    manifest.write(&args.out, if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn eval_cdf(args: CdfArgs) -> Result<()> {
    let mut manifest = RunManifest::new("eval cdf");
    manifest.put("data", args.data.display());
    manifest.put("adv", args.adv.display());
    manifest.put("k", args.k);
    let result = (|| -> Result<()> {
        let ds = load_split(&args.data, &args.split)?;
        let (advs, missing) = load_adversarial(&ds, &args.adv)?;
        if missing > 0 {
            eprintln!("warning: {missing} adversarial files missing");
        }
        let mut bases = Vec::new();
        let mut deltas = Vec::new();
        for (cloud, adv) in ds.clouds.iter().zip(&advs) {
            if cloud.len() != adv.len() {
                bail!("adversarial cloud size differs from clean for {:?}", cloud.name);
            }
            bases.push(spectral::basis_of_cloud(
                cloud,
                args.k,
                spectral::BandwidthMode::Auto,
            )?);
            deltas.push(&adv.points - &cloud.points);
        }
        let pairs: Vec<_> = deltas.into_iter().zip(bases.iter()).collect();
        let cdf = eval::spectral_cdf(&pairs)?;
        std::fs::create_dir_all(&args.out)?;
        eval::write_cdf_csv(&cdf, args.out.join("cdf.csv"))?;
        println!("averaged CDF over {} samples ({} skipped)", cdf.n_samples, cdf.n_skipped);
        Ok(())
    })();
    manifest.write(&args.out, if result.is_ok() { "ok" } else { "error" })?;
    result
}

fn spectral_split(args: SpectralSplitArgs) -> Result<()> {
    let mut manifest = RunManifest::new("spectral split");
    manifest.put("in", args.input.display());
    manifest.put("m", args.m);
    manifest.put("k", args.k);
    let result = (|| -> Result<()> {
        let cloud = pointcloud::load_xyz(&args.input)?;
        let m = args.m.min(cloud.len());
        let (lfc, hfc, basis) = spectral::lfc_split(&cloud, m, args.k)?;
        std::fs::create_dir_all(&args.out)?;
        let stem = args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cloud".to_string());
        pointcloud::save_xyz(&lfc, args.out.join(format!("{stem}_lfc.xyz")))?;
        pointcloud::save_xyz(&hfc, args.out.join(format!("{stem}_hfc.xyz")))?;
        if args.dump_basis {
            spectral::dump_basis(&basis, args.out.join(format!("{stem}_basis.bin")))?;
        }
        println!("split {} points at m={m}", cloud.len());
        Ok(())
    })();
    manifest.write(&args.out, if result.is_ok() { "ok" } else { "error" })?;
    result
}
