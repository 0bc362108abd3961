use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use outfitrank::coldstart::{dataset_profiles, read_cold_profiles, write_cold_profiles, ColdStartConfig, Strategy};
use outfitrank::datagen::{audit, generate_world, load_dataset, save_dataset, Dataset, NegativeMode, Split, WorldConfig};
use outfitrank::encoder::{load_checkpoint, save_checkpoint};
use outfitrank::harness::{
    build_teacher_cache, coldstart_eval, evaluate_model, export_embeddings, read_teacher_means, run_sweep,
    train_student, train_teacher, write_teacher_means, ColdStartSettings, ExperimentReport, Mode, RunConfig,
    SweepAxis,
};
use outfitrank::metrics::write_metrics_tsv;
use outfitrank::objectives::TeacherCache;
use outfitrank::{Error, Model, Result};

#[derive(Parser)]
#[command(name = "outfitrank", version, about = "Personalized outfit ranking with teacher distillation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world with planted user styles.
    Gen(GenArgs),
    /// Train the teacher with the N-pair loss.
    TrainTeacher(RunArgs),
    /// Compute each user's positive boundary from a teacher checkpoint.
    Cache(CacheArgs),
    /// Train a student (bpr, npair, fnd, fnd_cl).
    TrainStudent(StudentArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Score cold users through their known-user neighbourhood.
    Coldstart(ColdArgs),
    /// Write user embeddings and outfit representations.
    Export(ExportArgs),
    /// Train once per grid value along one axis.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the cold users' profiles here.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    cold_users: Option<usize>,
    /// Comma-separated category names.
    #[arg(long)]
    categories: Option<String>,
    #[arg(long)]
    items_per_category: Option<usize>,
    #[arg(long)]
    d_in: Option<usize>,
    #[arg(long)]
    style_dim: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    prototype_scale: Option<f64>,
    #[arg(long)]
    positives_per_user: Option<usize>,
    #[arg(long)]
    cold_profile_size: Option<usize>,
    #[arg(long)]
    preference_temperature: Option<f64>,
    #[arg(long)]
    variable_size: bool,
    #[arg(long)]
    min_size: Option<usize>,
    #[arg(long)]
    max_size: Option<usize>,
}

/// Every run-config key as a flag; flags override `--config`.
#[derive(Args, Clone)]
struct RunArgs {
    /// Flat `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    tau_fnd: Option<String>,
    #[arg(long)]
    tau_cl: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    tier: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    heads: Option<String>,
    #[arg(long)]
    sab_count: Option<String>,
    #[arg(long)]
    augment: Option<String>,
    #[arg(long)]
    replace_k: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    hard_negatives: Option<String>,
    #[arg(long)]
    negative_pool: Option<String>,
    #[arg(long)]
    teacher: Option<String>,
    #[arg(long)]
    eval_ratio: Option<String>,
    #[arg(long)]
    eval_seed: Option<String>,
    #[arg(long)]
    ae_epochs: Option<String>,
    #[arg(long)]
    ae_latent: Option<String>,
    #[arg(long)]
    signal_override: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

impl RunArgs {
    fn flags(&self) -> [(&'static str, &Option<String>); 27] {
        [
            ("dataset", &self.dataset),
            ("mode", &self.mode),
            ("loss", &self.loss),
            ("tau_fnd", &self.tau_fnd),
            ("tau_cl", &self.tau_cl),
            ("alpha", &self.alpha),
            ("lambda", &self.lambda),
            ("tier", &self.tier),
            ("d", &self.d),
            ("heads", &self.heads),
            ("sab_count", &self.sab_count),
            ("augment", &self.augment),
            ("replace_k", &self.replace_k),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("momentum", &self.momentum),
            ("seed", &self.seed),
            ("hard_negatives", &self.hard_negatives),
            ("negative_pool", &self.negative_pool),
            ("teacher", &self.teacher),
            ("eval_ratio", &self.eval_ratio),
            ("eval_seed", &self.eval_seed),
            ("ae_epochs", &self.ae_epochs),
            ("ae_latent", &self.ae_latent),
            ("signal_override", &self.signal_override),
            ("out_dir", &self.out_dir),
        ]
    }

    /// Defaults, then the config file, then flags.
    fn resolve(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = base;
        if let Some(path) = &self.config {
            cfg.apply_text(&fs::read_to_string(path)?)?;
        }
        for (key, value) in self.flags() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct StudentArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Boundaries written by `cache`; recomputed from the teacher when absent.
    #[arg(long)]
    means: Option<PathBuf>,
}

#[derive(Args)]
struct CacheArgs {
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// standard or hard
    #[arg(long, default_value = "standard")]
    mode: String,
    #[arg(long, default_value_t = 10)]
    ratio: usize,
    #[arg(long, default_value_t = 7)]
    eval_seed: u64,
    /// Per-user metrics table; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ColdArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Cold-profile file; the dataset's cold users are used when absent.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// avg or w-avg
    #[arg(long, default_value = "w-avg")]
    strategy: String,
    #[arg(long, default_value_t = 0.2)]
    tau_wavg: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "standard")]
    mode: String,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// alpha, augment, tier or batch_size
    #[arg(long)]
    axis: String,
    /// Grid values (repeatable); the axis default grid when absent.
    #[arg(long = "value")]
    values: Vec<String>,
    #[arg(long)]
    means: Option<PathBuf>,
}

fn dataset_of(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset given (--dataset or `dataset =`)".into()))?;
    load_dataset(path)
}

fn out_dir_of(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn finish(report: &ExperimentReport, dir: &Path, stem: &str) -> Result<()> {
    report.save(dir, stem)?;
    print!("{}", report.to_table());
    Ok(())
}

fn teacher_cache(cfg: &RunConfig, dataset: &Dataset, means: Option<&Path>) -> Result<Option<TeacherCache<f32>>> {
    let Some(path) = &cfg.teacher else {
        return Ok(None);
    };
    let teacher: Model = load_checkpoint(path)?;
    let cache = match means {
        Some(m) => TeacherCache::new(teacher, read_teacher_means(BufReader::new(File::open(m)?))?)?,
        None => build_teacher_cache(teacher, dataset)?,
    };
    Ok(Some(cache))
}

fn gen(a: GenArgs) -> Result<()> {
    let mut w = WorldConfig {
        seed: a.seed,
        variable_size: a.variable_size,
        ..WorldConfig::default()
    };
    macro_rules! over {
        ($($f:ident),+) => { $(if let Some(v) = a.$f { w.$f = v; })+ };
    }
    over!(users, cold_users, items_per_category, d_in, style_dim, noise, prototype_scale, positives_per_user,
        cold_profile_size, preference_temperature, min_size, max_size);
    if let Some(c) = &a.categories {
        w.categories = c.split(',').map(|s| s.trim().to_string()).collect();
    }
    let ds = generate_world(&w)?;
    let report = audit(&ds);
    if !report.passed() {
        return Err(Error::Input(format!("generated world failed its audit: {:?}", report.violations)));
    }
    save_dataset(&ds, &a.out)?;
    if let Some(p) = &a.profiles {
        let mut f = BufWriter::new(File::create(p)?);
        write_cold_profiles(&dataset_profiles(&ds), &mut f)?;
        f.flush()?;
    }
    println!(
        "wrote {}: {} items, {} outfits, {} users, {} cold users; audit passed",
        a.out.display(),
        ds.items.len(),
        ds.outfits.len(),
        ds.users.len(),
        ds.cold_users.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::TrainTeacher(a) => {
            let cfg = a.resolve(RunConfig::default())?;
            let ds = dataset_of(&cfg)?;
            let dir = out_dir_of(&cfg);
            fs::create_dir_all(&dir)?;
            let out = train_teacher(&cfg, &ds)?;
            save_checkpoint(&out.model, &dir.join("teacher.ckpt"))?;
            finish(&out.report, &dir, "teacher_report")
        }
        Command::Cache(a) => {
            let ds = load_dataset(&a.dataset)?;
            let cache = build_teacher_cache(load_checkpoint(&a.teacher)?, &ds)?;
            let mut f = BufWriter::new(File::create(&a.out)?);
            write_teacher_means(&cache, &mut f)?;
            f.flush()?;
            let known = (0..ds.user_count()).filter(|&u| cache.has_user(u)).count();
            println!("wrote {} ({known} of {} users have a boundary)", a.out.display(), ds.user_count());
            Ok(())
        }
        Command::TrainStudent(a) => {
            let cfg = a.run.resolve(RunConfig::student(outfitrank::harness::LossKind::Fnd))?;
            let ds = dataset_of(&cfg)?;
            let cache = teacher_cache(&cfg, &ds, a.means.as_deref())?;
            let dir = out_dir_of(&cfg);
            fs::create_dir_all(&dir)?;
            let out = train_student(&cfg, &ds, cache.as_ref(), None)?;
            save_checkpoint(&out.model, &dir.join("student.ckpt"))?;
            finish(&out.report, &dir, "student_report")
        }
        Command::Eval(a) => {
            let ds = load_dataset(&a.dataset)?;
            let model: Model = load_checkpoint(&a.checkpoint)?;
            let split: Split = a.split.parse()?;
            let mode: NegativeMode = a.mode.parse()?;
            let e = evaluate_model(&model, &ds, split, mode, a.ratio, a.eval_seed)?;
            match &a.out {
                Some(p) => {
                    let mut f = BufWriter::new(File::create(p)?);
                    write_metrics_tsv(&e, &mut f)?;
                    f.flush()?;
                }
                None => write_metrics_tsv(&e, &mut std::io::stdout().lock())?,
            }
            eprintln!("{split} {mode}: auc {:.4} ndcg {:.4} over {} users", e.mean_auc, e.mean_ndcg, e.per_user.len());
            Ok(())
        }
        Command::Coldstart(a) => {
            let ds = load_dataset(&a.dataset)?;
            let model: Model = load_checkpoint(&a.checkpoint)?;
            let profiles = match &a.profiles {
                Some(p) => read_cold_profiles(BufReader::new(File::open(p)?))?,
                None => dataset_profiles(&ds),
            };
            let strategy: Strategy = a.strategy.parse()?;
            let settings = ColdStartSettings {
                k: a.k,
                cold: ColdStartConfig {
                    delta: a.delta,
                    tau_wavg: a.tau_wavg,
                    strategy,
                },
                repetitions: a.repetitions,
                seed: a.seed,
                ratio: 10,
                mode: a.mode.parse()?,
            };
            let out = coldstart_eval(&model, &ds, &profiles, &settings)?;
            let mut cfg = RunConfig::default();
            cfg.dataset = Some(a.dataset.clone());
            cfg.seed = a.seed;
            cfg.tier = model.config.tier;
            let mut report = ExperimentReport::new(format!("coldstart k={} {strategy}", a.k), cfg);
            report.note("checkpoint", a.checkpoint.display());
            report.note("strategy", strategy);
            report.note("k", a.k);
            report.note("tau_wavg", a.tau_wavg);
            report.note("delta", a.delta);
            for (i, (auc, ndcg)) in out.per_rep_auc.iter().zip(&out.per_rep_ndcg).enumerate() {
                report.set_metric(&format!("rep{i}_auc"), *auc);
                report.set_metric(&format!("rep{i}_ndcg"), *ndcg);
            }
            report.set_metric("mean_auc", out.mean_auc);
            report.set_metric("mean_ndcg", out.mean_ndcg);
            report.note("neighbors_min", out.min_neighbors);
            report.note("neighbors_max", out.max_neighbors);
            let dir = a.out_dir.unwrap_or_else(|| PathBuf::from("."));
            finish(&report, &dir, &format!("coldstart_k{}_{strategy}", a.k))
        }
        Command::Export(a) => {
            let ds = load_dataset(&a.dataset)?;
            let model: Model = load_checkpoint(&a.checkpoint)?;
            let mut f = BufWriter::new(File::create(&a.out)?);
            let rows = export_embeddings(&model, &ds, &mut f)?;
            f.flush()?;
            println!("wrote {rows} rows of dimension {} to {}", model.d(), a.out.display());
            Ok(())
        }
        Command::Sweep(a) => {
            let axis: SweepAxis = a.axis.parse()?;
            let cfg = a.run.resolve(RunConfig::student(outfitrank::harness::LossKind::Fnd))?;
            let ds = dataset_of(&cfg)?;
            let cache = if cfg.mode == Mode::Student {
                teacher_cache(&cfg, &ds, a.means.as_deref())?
            } else {
                None
            };
            let values = if a.values.is_empty() { axis.default_values() } else { a.values };
            let result = run_sweep(&cfg, &ds, axis, &values, cache.as_ref())?;
            let table = result.to_table();
            let dir = out_dir_of(&cfg);
            fs::create_dir_all(&dir)?;
            fs::write(dir.join(format!("sweep_{axis}.txt")), &table)?;
            print!("{table}");
            if let Some((label, _)) = result.best() {
                println!("best by val_auc: {label}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
