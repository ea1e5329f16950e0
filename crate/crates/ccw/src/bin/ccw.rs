//! Command-line pipeline: ingest -> co-cluster -> select-k -> train ->
//! evaluate -> report, with per-stage subcommands and full run provenance.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use ccw::config::{KSpec, RunConfig};
use ccw::corpus::{load_dataset, InteractionDataset, LoadWarnings};
use ccw::report::Manifest;
use ccw::spectral::{read_assignments, spectral_cocluster, write_assignments, CoClustering};
use ccw::wrapper::Mode;
use ccw::{Error, Real, Result};

#[derive(Parser)]
#[command(
    name = "ccw",
    about = "Co-clustering wrapper for embedding-based collaborative filtering",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a config file.
    Pipeline(PipelineArgs),
    /// Parse and validate a dataset, then write it back in normalized form.
    Ingest(IngestArgs),
    /// Spectrally co-cluster the interaction graph at a fixed k.
    Cocluster(CoclusterArgs),
    /// Sweep k over a range and pick the variance-ratio plateau.
    SelectK(SelectKArgs),
    /// Train a model against an existing cluster file.
    Train(TrainArgs),
    /// Evaluate a checkpoint; refuses a mismatched cluster file.
    Evaluate(EvaluateArgs),
    /// Train and evaluate several fusion modes into a comparison report.
    Report(ReportArgs),
    /// Generate a planted-block synthetic dataset.
    Synth(SynthArgs),
}

/// Config-file overrides shared by config-driven subcommands. Flags win over
/// file values.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Number of clusters, or "auto".
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Clustering seeds averaged in the VR curve.
    #[arg(long)]
    cluster_seeds: Option<usize>,
    /// Base model family: plain-mf or propagated-l<N>.
    #[arg(long)]
    variant: Option<String>,
    /// Embedding dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Fusion mode: base-only, equal-weight, or with-lic.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<Real>,
    #[arg(long)]
    lambda: Option<Real>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    overwrite: bool,
    #[arg(long)]
    master_seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(p) = &self.train {
            cfg.data.train = p.clone();
        }
        if let Some(p) = &self.test {
            cfg.data.test = p.clone();
        }
        if let Some(k) = &self.k {
            cfg.cluster.k = match k.parse::<usize>() {
                Ok(n) => KSpec::Fixed(n),
                Err(_) => KSpec::Auto(k.clone()),
            };
        }
        if let Some(v) = self.k_min {
            cfg.cluster.k_min = Some(v);
        }
        if let Some(v) = self.k_max {
            cfg.cluster.k_max = Some(v);
        }
        if let Some(v) = self.epsilon {
            cfg.cluster.epsilon = v;
        }
        if let Some(v) = self.cluster_seeds {
            cfg.cluster.seeds = v;
        }
        if let Some(v) = &self.variant {
            cfg.model.variant = v.clone();
        }
        if let Some(v) = self.d {
            cfg.model.d = v;
        }
        if let Some(v) = &self.mode {
            cfg.model.mode = v.clone();
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.lambda {
            cfg.train.lambda = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.eval_every {
            cfg.train.eval_every = v;
        }
        if let Some(v) = self.patience {
            cfg.train.early_stop_patience = v;
        }
        if let Some(p) = &self.out {
            cfg.output.dir = p.clone();
        }
        if self.overwrite {
            cfg.output.overwrite = true;
        }
        if let Some(v) = self.master_seed {
            cfg.run.master_seed = v;
        }
        Ok(())
    }
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML config; see README for the section layout.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Directory receiving normalized train.txt/test.txt and stats.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CoclusterArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cluster assignment file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectKArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    kmin: usize,
    #[arg(long)]
    kmax: usize,
    /// Number of clustering seeds averaged per k.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 0.02)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    /// Directory receiving vr_curve.csv and vr_curve.svg (optional).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Existing cluster assignment file; clustered here when omitted.
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
    /// JSON report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated fusion modes to compare.
    #[arg(long, default_value = "base-only,equal-weight,with-lic")]
    modes: String,
    /// Number of benchmark seeds.
    #[arg(long, default_value_t = 3)]
    bench_seeds: usize,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    #[arg(long, default_value_t = 100)]
    users_per_block: usize,
    #[arg(long, default_value_t = 100)]
    items_per_block: usize,
    /// Within-block interaction density.
    #[arg(long, default_value_t = 0.3)]
    density: f64,
    /// Fraction of edges rewired across blocks.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving train.txt, test.txt, and labels.txt.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Cocluster(a) => cmd_cocluster(a),
        Command::SelectK(a) => cmd_select_k(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn resolve_config(path: &Option<PathBuf>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_logged(train: &Path, test: &Path) -> Result<InteractionDataset> {
    let (ds, warnings) = load_dataset(train, test)?;
    log_warnings(&warnings);
    log::info!(
        "dataset: {} users, {} items, {} train / {} test interactions, density {:.5}",
        ds.num_users(),
        ds.num_items(),
        ds.train_edges().len(),
        ds.test_edges().len(),
        ds.train_density()
    );
    Ok(ds)
}

fn log_warnings(w: &LoadWarnings) {
    if w.duplicate_edges_dropped > 0 {
        log::warn!("dropped {} duplicate interactions", w.duplicate_edges_dropped);
    }
    if w.empty_test_lines_skipped > 0 {
        log::warn!("skipped {} empty test lines", w.empty_test_lines_skipped);
    }
}

/// VR sweep shared by `select-k` and the pipeline's auto-k stage.
fn sweep_k(
    ds: &InteractionDataset,
    k_min: usize,
    k_max: usize,
    num_seeds: usize,
    epsilon: f64,
    master_seed: u64,
) -> Result<(usize, bool, ccw::VarianceRatioCurve)> {
    let seeds: Vec<u64> = (0..num_seeds)
        .map(|i| ccw::report::derive_seed(master_seed, &format!("vr/{i}")))
        .collect();
    let curve = ccw::clusterqual::vr_curve(ds, k_min, k_max, &seeds)?;
    let (k, plateau) = ccw::clusterqual::select_k(&curve, epsilon)?;
    if plateau {
        log::info!("selected k = {k} (plateau at epsilon = {epsilon})");
    } else {
        log::warn!("no plateau below epsilon = {epsilon}; falling back to largest k = {k}");
    }
    Ok((k, plateau, curve))
}

fn write_curve_artifacts(
    dir: &Path,
    curve: &ccw::VarianceRatioCurve,
    manifest: Option<&mut Manifest>,
) -> Result<()> {
    let csv_path = dir.join("vr_curve.csv");
    std::fs::write(&csv_path, ccw::clusterqual::curve_to_csv(curve))?;
    let xs: Vec<f64> = curve.ks.iter().map(|&k| k as f64).collect();
    let svg = ccw::report::line_plot_svg(
        "Variance ratio by cluster count",
        "k",
        "variance ratio",
        &xs,
        &curve.mean_vr,
        &curve.std_vr,
    );
    let svg_path = dir.join("vr_curve.svg");
    std::fs::write(&svg_path, svg)?;
    if let Some(m) = manifest {
        m.record_file(dir, &csv_path)?;
        m.record_file(dir, &svg_path)?;
    }
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let cfg = resolve_config(&args.config, &args.overrides)?;
    cfg.prepare_output_dir()?;
    let out = cfg.output.dir.clone();
    let resolved = cfg.to_toml();
    std::fs::write(out.join("config.toml"), &resolved)?;
    let mut manifest = Manifest::new(
        cfg.run.master_seed,
        ccw::report::sha256_hex(resolved.as_bytes()),
    );
    manifest.record_file(&out, &out.join("config.toml"))?;

    // ingest
    let ds = load_logged(&cfg.data.train, &cfg.data.test)?;
    manifest.note("dataset.train", cfg.data.train.display());
    manifest.note("dataset.test", cfg.data.test.display());
    manifest.note("dataset.users", ds.num_users());
    manifest.note("dataset.items", ds.num_items());

    // select-k (when auto) and co-clustering
    let k = match cfg.fixed_k()? {
        Some(k) => k,
        None => {
            let seed = manifest.record_seed("select-k");
            let (k, plateau, curve) = sweep_k(
                &ds,
                cfg.cluster.k_min.expect("validated"),
                cfg.cluster.k_max.expect("validated"),
                cfg.cluster.seeds,
                cfg.cluster.epsilon,
                seed,
            )?;
            write_curve_artifacts(&out, &curve, Some(&mut manifest))?;
            manifest.note("select_k.plateau", plateau);
            k
        }
    };
    manifest.note("cluster.k", k);

    let cluster_seed = manifest.record_seed("cluster");
    let cc = spectral_cocluster(&ds.incidence_matrix(), k, cluster_seed)?;
    let cluster_path = out.join("cluster.txt");
    write_assignments(&cluster_path, &cc)?;
    manifest.record_file(&out, &cluster_path)?;
    manifest.note(
        "cluster.block_density",
        format!("{:.4}", ccw::spectral::block_density_stat(&ds.incidence_matrix(), &cc)),
    );

    // train
    let model_seed = manifest.record_seed("model");
    let train_seed = manifest.record_seed("train");
    let (model, warnings) = ccw::wrapper::assemble_ccw::<Real>(
        &ds,
        cc,
        cfg.variant()?,
        cfg.model.d,
        cfg.mode()?,
        model_seed,
    )?;
    for (i, w) in warnings.iter().enumerate() {
        log::warn!("{w}");
        manifest.note(&format!("assemble.warning.{i}"), w);
    }
    let mut tcfg = cfg.train.clone();
    tcfg.seed = train_seed;
    let trained = ccw::train::train_ccw(model, &ds, &tcfg)?;
    let epochs_path = out.join("epochs.csv");
    std::fs::write(&epochs_path, ccw::train::history_to_csv(&trained.history))?;
    manifest.record_file(&out, &epochs_path)?;
    let ckpt_path = out.join("checkpoint.ccw");
    ccw::wrapper::save_bundle_to_path(&trained.model, &ckpt_path)?;
    manifest.record_file(&out, &ckpt_path)?;

    // evaluate
    let mut report = ccw::evalkit::evaluate(&trained.model, &ds, 20)?;
    report.metadata = Some(serde_json::json!({
        "dataset": cfg.data.train.display().to_string(),
        "mode": cfg.model.mode,
        "variant": cfg.model.variant,
        "k": k,
        "master_seed": cfg.run.master_seed,
        "config_hash": manifest.config_hash,
    }));
    let eval_path = out.join("eval.json");
    std::fs::write(
        &eval_path,
        serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Validation(format!("report serialization: {e}")))?,
    )?;
    manifest.record_file(&out, &eval_path)?;
    manifest.note("eval.recall@20", report.recall);
    manifest.note("eval.ndcg@20", report.ndcg);

    manifest.write(&out.join("manifest.json"))?;
    println!(
        "k={k} recall@20={} ndcg@20={} ({} users evaluated); artifacts in {}",
        report.recall,
        report.ndcg,
        report.users_evaluated,
        out.display()
    );
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let ds = load_logged(&args.train, &args.test)?;
    std::fs::create_dir_all(&args.out)?;
    ds.write(&args.out.join("train.txt"), &args.out.join("test.txt"))?;
    let stats = serde_json::json!({
        "users": ds.num_users(),
        "items": ds.num_items(),
        "train_interactions": ds.train_edges().len(),
        "test_interactions": ds.test_edges().len(),
        "train_density": ds.train_density(),
    });
    std::fs::write(
        args.out.join("stats.json"),
        serde_json::to_string_pretty(&stats).expect("json"),
    )?;
    println!("normalized dataset written to {}", args.out.display());
    Ok(())
}

fn cmd_cocluster(args: CoclusterArgs) -> Result<()> {
    let ds = load_logged(&args.train, &args.test)?;
    let cc = spectral_cocluster(&ds.incidence_matrix(), args.k, args.seed)?;
    write_assignments(&args.out, &cc)?;
    println!(
        "k={} seed={} block density {:.4}; assignments written to {}",
        args.k,
        args.seed,
        ccw::spectral::block_density_stat(&ds.incidence_matrix(), &cc),
        args.out.display()
    );
    Ok(())
}

fn cmd_select_k(args: SelectKArgs) -> Result<()> {
    let ds = load_logged(&args.train, &args.test)?;
    let (k, plateau, curve) = sweep_k(
        &ds,
        args.kmin,
        args.kmax,
        args.seeds,
        args.epsilon,
        args.master_seed,
    )?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        write_curve_artifacts(dir, &curve, None)?;
    }
    println!("selected k = {k} (plateau: {plateau})");
    Ok(())
}

/// Load or freshly compute a clustering for `train`/`report`.
fn clustering_for(
    cfg: &RunConfig,
    ds: &InteractionDataset,
    clusters: &Option<PathBuf>,
) -> Result<CoClustering> {
    if let Some(path) = clusters {
        let cc = read_assignments(path)?;
        if cc.num_users() != ds.num_users() || cc.num_items() != ds.num_items() {
            return Err(Error::Validation(format!(
                "cluster file {} covers {}x{} nodes but the dataset has {}x{}",
                path.display(),
                cc.num_users(),
                cc.num_items(),
                ds.num_users(),
                ds.num_items()
            )));
        }
        return Ok(cc);
    }
    let k = match cfg.fixed_k()? {
        Some(k) => k,
        None => {
            sweep_k(
                ds,
                cfg.cluster.k_min.expect("validated"),
                cfg.cluster.k_max.expect("validated"),
                cfg.cluster.seeds,
                cfg.cluster.epsilon,
                ccw::report::derive_seed(cfg.run.master_seed, "select-k"),
            )?
            .0
        }
    };
    spectral_cocluster(
        &ds.incidence_matrix(),
        k,
        ccw::report::derive_seed(cfg.run.master_seed, "cluster"),
    )
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&args.config, &args.overrides)?;
    cfg.prepare_output_dir()?;
    let out = cfg.output.dir.clone();
    let ds = load_logged(&cfg.data.train, &cfg.data.test)?;
    let cc = clustering_for(&cfg, &ds, &args.clusters)?;
    if args.clusters.is_none() {
        write_assignments(&out.join("cluster.txt"), &cc)?;
    }
    let (model, warnings) = ccw::wrapper::assemble_ccw::<Real>(
        &ds,
        cc,
        cfg.variant()?,
        cfg.model.d,
        cfg.mode()?,
        ccw::report::derive_seed(cfg.run.master_seed, "model"),
    )?;
    for w in warnings {
        log::warn!("{w}");
    }
    let mut tcfg = cfg.train.clone();
    tcfg.seed = ccw::report::derive_seed(cfg.run.master_seed, "train");
    let trained = ccw::train::train_ccw(model, &ds, &tcfg)?;
    std::fs::write(
        out.join("epochs.csv"),
        ccw::train::history_to_csv(&trained.history),
    )?;
    ccw::wrapper::save_bundle_to_path(&trained.model, &out.join("checkpoint.ccw"))?;
    println!("checkpoint and epoch log written to {}", out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let ds = load_logged(&args.train, &args.test)?;
    let cc = read_assignments(&args.clusters)?;
    let mut f = std::io::BufReader::new(std::fs::File::open(&args.checkpoint)?);
    let model = ccw::wrapper::load_bundle::<Real>(&mut f, &ds, cc)?;
    let mut report = ccw::evalkit::evaluate(&model, &ds, args.top_k)?;
    report.metadata = Some(serde_json::json!({
        "dataset": args.train.display().to_string(),
        "checkpoint": args.checkpoint.display().to_string(),
        "mode": model.mode.to_string(),
        "k": model.k(),
    }));
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Validation(format!("report serialization: {e}")))?;
    match &args.out {
        Some(p) => std::fs::write(p, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let cfg = resolve_config(&args.config, &args.overrides)?;
    cfg.prepare_output_dir()?;
    let out = cfg.output.dir.clone();
    let ds = load_logged(&cfg.data.train, &cfg.data.test)?;
    let cc = clustering_for(&cfg, &ds, &None)?;
    let modes: Vec<Mode> = args
        .modes
        .split(',')
        .map(|s| Mode::from_str(s.trim()))
        .collect::<Result<_>>()?;
    if modes.is_empty() {
        return Err(Error::Argument("no modes given".into()));
    }
    let seeds: Vec<u64> = (0..args.bench_seeds.max(1))
        .map(|i| ccw::report::derive_seed(cfg.run.master_seed, &format!("bench/{i}")))
        .collect();
    let table = ccw::evalkit::benchmark(
        &ds,
        &cc,
        cfg.variant()?,
        cfg.model.d,
        &modes,
        &seeds,
        &cfg.train,
        20,
    )?;
    std::fs::write(out.join("benchmark.csv"), table.to_csv())?;
    let svg = ccw::report::bar_chart_svg(
        &format!("{} with k = {} clusters", table.variant, table.k),
        &table.chart_groups(),
    );
    std::fs::write(out.join("benchmark.svg"), svg)?;
    for (mode, recall, ndcg) in table.mode_means() {
        println!("{mode}: recall@20 {recall:.4}  ndcg@20 {ndcg:.4}");
    }
    println!("table and chart written to {}", out.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let synth = ccw::synth::generate_planted(&ccw::synth::SynthConfig {
        blocks: args.blocks,
        users_per_block: args.users_per_block,
        items_per_block: args.items_per_block,
        within_density: args.density,
        noise_fraction: args.noise,
        test_fraction: args.test_fraction,
        seed: args.seed,
    })?;
    std::fs::create_dir_all(&args.out)?;
    synth
        .dataset
        .write(&args.out.join("train.txt"), &args.out.join("test.txt"))?;
    let mut labels = String::new();
    for (u, &c) in synth.user_labels.iter().enumerate() {
        labels.push_str(&format!("user {u} {c}\n"));
    }
    for (i, &c) in synth.item_labels.iter().enumerate() {
        labels.push_str(&format!("item {i} {c}\n"));
    }
    std::fs::write(args.out.join("labels.txt"), labels)?;
    println!(
        "planted dataset ({} blocks, {} users, {} items) written to {}",
        args.blocks,
        synth.dataset.num_users(),
        synth.dataset.num_items(),
        args.out.display()
    );
    Ok(())
}
