use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use sparc::eval::{
    alignment_table, encode_dataset, jaccard_alignment, probe_eval, retrieval_matrix,
    retrieval_r_at_1, retrieval_table, split_ids, ActivationStats, EvalSet, EvalSplit,
    LatentCodes, ProbeConfig, Table, DEFAULT_TOP_N, SIMILARITY,
};
use sparc::model::Checkpoint;
use sparc::store::BatchRange;
use sparc::synth::{generate, SynthConfig};
use sparc::train::{run_sweep, sweep_csv, train, SweepAxis, METRICS_FILE};
use sparc::{Result, SelectionMode, SparcError, StoreHandle, TrainConfig};

const EFFECTIVE_CONFIG: &str = "effective_config.json";

#[derive(Parser)]
#[command(name = "sparc", version, about = "Multi-stream sparse autoencoders with Global TopK")]
struct Cli {
    /// Worker threads for parallel evaluation (falls back to SPARC_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a feature store.
    Train(TrainArgs),
    /// Generate a synthetic store with planted shared codes.
    SynthGen(SynthArgs),
    /// Activation-pattern and dead-latent analysis.
    EvalPatterns(EvalArgs),
    /// Concept alignment by generalized Jaccard over taxonomy depths.
    EvalAlignment(AlignmentArgs),
    /// 1D logistic probes on single latents.
    EvalProbes(ProbeArgs),
    /// Cross-stream retrieval R@1.
    EvalRetrieval(RetrievalArgs),
    /// Train one model per value of a hyperparameter.
    Sweep(SweepArgs),
    /// Validate a store and/or checkpoint and print a summary.
    Inspect(InspectArgs),
}

#[derive(Args, Clone)]
struct TrainOverrides {
    #[arg(long = "L")]
    latent_dim: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<SelectionMode>,
    #[arg(long)]
    auxk_gamma: Option<f64>,
    #[arg(long)]
    auxk_k: Option<usize>,
    #[arg(long)]
    dead_steps_threshold: Option<u64>,
    #[arg(long)]
    train_ratio: Option<f64>,
}

impl TrainOverrides {
    fn entries(&self) -> Vec<(&'static str, Value)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("L", self.latent_dim.map(Value::from));
        put("k", self.k.map(Value::from));
        put("lambda", self.lambda.map(Value::from));
        put("lr", self.lr.map(Value::from));
        put("epochs", self.epochs.map(Value::from));
        put("batch_size", self.batch_size.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("mode", self.mode.map(|m| Value::from(m.to_string())));
        put("auxk_gamma", self.auxk_gamma.map(Value::from));
        put("auxk_k", self.auxk_k.map(Value::from));
        put("dead_steps_threshold", self.dead_steps_threshold.map(Value::from));
        put("train_ratio", self.train_ratio.map(Value::from));
        out
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Store manifest.
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Flat JSON training config; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_std: Option<f64>,
    /// Comma-separated stream dims.
    #[arg(long, value_delimiter = ',')]
    stream_dims: Option<Vec<usize>>,
    #[arg(long)]
    true_latents: Option<usize>,
    #[arg(long)]
    true_sparsity: Option<usize>,
    #[arg(long)]
    n_label_classes: Option<usize>,
}

#[derive(Args, Clone)]
struct EvalArgs {
    /// Checkpoint file or directory.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// Output directory; defaults to `<checkpoint dir>/eval`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Must match the checkpoint.
    #[arg(long)]
    mode: Option<SelectionMode>,
    /// Must match the checkpoint.
    #[arg(long)]
    k: Option<usize>,
    /// val, train or all.
    #[arg(long, default_value = "val")]
    split: EvalSplit,
    /// Use only the first N evaluation samples.
    #[arg(long)]
    max_samples: Option<usize>,
}

#[derive(Args)]
struct AlignmentArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Taxonomy depth(s); defaults to every depth from 0 to the leaves.
    #[arg(long, value_delimiter = ',')]
    depth: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    top_n: usize,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// JSON probe settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RetrievalArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Query stream; with --reference computes a single pair.
    #[arg(long, requires = "reference")]
    query: Option<String>,
    #[arg(long, requires = "query")]
    reference: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// L, k, lambda or lr.
    #[arg(long)]
    axis: SweepAxis,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "global,local")]
    modes: Vec<SelectionMode>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long, required_unless_present = "checkpoint")]
    store: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn merged_json(config: Option<&Path>, overrides: Vec<(&'static str, Value)>) -> Result<Value> {
    let mut map = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| SparcError::Config(format!("{}: {e}", path.display())))?;
            match serde_json::from_str(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(SparcError::Config(format!("{}: expected a JSON object", path.display()))),
                Err(e) => return Err(SparcError::Config(format!("{}: {e}", path.display()))),
            }
        }
        None => Map::new(),
    };
    for (k, v) in overrides {
        map.insert(k.to_string(), v);
    }
    Ok(Value::Object(map))
}

fn train_config(config: Option<&Path>, overrides: &TrainOverrides) -> Result<TrainConfig> {
    let value = merged_json(config, overrides.entries())?;
    let cfg: TrainConfig = serde_json::from_value(value).map_err(|e| SparcError::Config(format!("train config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SparcError::Config(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(|e| SparcError::Config(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| SparcError::Config(format!("{}: {e}", path.display())))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = train_config(args.config.as_deref(), &args.overrides)?;
    let store = StoreHandle::open(&args.store)?;
    write_json(&args.out, EFFECTIVE_CONFIG, &cfg)?;
    let out = train(&store, &cfg, Some(&args.out))?;
    println!(
        "trained {} steps: validation self-NMSE {:.6} -> {:.6}, cross-NMSE {:.6} -> {:.6}",
        out.steps,
        out.initial.mean_self(),
        out.last.mean_self(),
        out.initial.mean_cross(),
        out.last.mean_cross()
    );
    println!("wrote {} and {}", args.out.join("checkpoint.json").display(), args.out.join(METRICS_FILE).display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut overrides = Vec::new();
    let mut put = |k: &'static str, v: Option<Value>| {
        if let Some(v) = v {
            overrides.push((k, v));
        }
    };
    put("n_samples", args.n_samples.map(Value::from));
    put("seed", args.seed.map(Value::from));
    put("noise_std", args.noise_std.map(Value::from));
    put("stream_dims", args.stream_dims.map(Value::from));
    put("true_latents", args.true_latents.map(Value::from));
    put("true_sparsity", args.true_sparsity.map(Value::from));
    put("n_label_classes", args.n_label_classes.map(Value::from));
    let value = merged_json(args.config.as_deref(), overrides)?;
    let cfg: SynthConfig = serde_json::from_value(value).map_err(|e| SparcError::Config(format!("synth config: {e}")))?;
    cfg.validate()?;
    let out = generate(&cfg, &args.out)?;
    write_json(&args.out, EFFECTIVE_CONFIG, &cfg)?;
    println!(
        "wrote {} samples x {} streams to {}",
        out.manifest.sample_count,
        out.manifest.streams.len(),
        out.manifest_path.display()
    );
    Ok(())
}

struct Loaded {
    eval: EvalSet,
    codes: LatentCodes,
    out: PathBuf,
    record: Map<String, Value>,
}

fn load_eval(args: &EvalArgs) -> Result<Loaded> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let header = &checkpoint.header;
    if let Some(mode) = args.mode {
        if mode != header.mode {
            return Err(SparcError::Config(format!(
                "--mode {mode} does not match the checkpoint's training mode {}",
                header.mode
            )));
        }
    }
    if let Some(k) = args.k {
        if k != header.k {
            return Err(SparcError::Config(format!("--k {k} does not match the checkpoint's k = {}", header.k)));
        }
    }
    let store = StoreHandle::open(&args.store)?;
    checkpoint.params.check_streams(&store.stream_names())?;
    let ids = split_ids(&store, &checkpoint, args.split)?;
    let mut eval = EvalSet::load(&store, &ids)?;
    if let Some(n) = args.max_samples {
        eval.truncate(n);
    }
    let codes = encode_dataset(&checkpoint.params, &eval.data, header.mode, header.k)?;
    let out = args.out.clone().unwrap_or_else(|| {
        let dir = if args.checkpoint.is_dir() {
            args.checkpoint.clone()
        } else {
            args.checkpoint.parent().map(Path::to_path_buf).unwrap_or_default()
        };
        dir.join("eval")
    });
    let mut record = Map::new();
    record.insert("checkpoint".into(), json!(args.checkpoint));
    record.insert("store".into(), json!(args.store));
    record.insert("mode".into(), json!(header.mode));
    record.insert("k".into(), json!(header.k));
    record.insert("split".into(), json!(args.split.to_string()));
    record.insert("eval_samples".into(), json!(codes.len()));
    Ok(Loaded {
        eval,
        codes,
        out,
        record,
    })
}

fn emit(table: &Table, out: &Path, stem: &str) -> Result<()> {
    table.write(out, stem)?;
    print!("{}", table.to_text());
    Ok(())
}

fn cmd_patterns(args: EvalArgs) -> Result<()> {
    let l = load_eval(&args)?;
    let summary = ActivationStats::from_codes(&l.codes).summary();
    write_json(&l.out, EFFECTIVE_CONFIG, &l.record)?;
    emit(&summary.table(), &l.out, "patterns")
}

fn labels_of(l: &Loaded) -> Result<&Vec<Vec<String>>> {
    l.eval
        .labels
        .as_ref()
        .ok_or_else(|| SparcError::Config("the store has no labels file".into()))
}

fn cmd_alignment(args: AlignmentArgs) -> Result<()> {
    let mut l = load_eval(&args.eval)?;
    let labels = labels_of(&l)?;
    let store = StoreHandle::open(&args.eval.store)?;
    let taxonomy = store.taxonomy()?;
    let depths: Vec<Option<usize>> = match (&taxonomy, args.depth.is_empty()) {
        (Some(t), true) => (0..=t.max_depth()).map(Some).collect(),
        (None, true) => vec![None],
        (None, false) => return Err(SparcError::Config("--depth needs a store with a taxonomy".into())),
        (Some(_), false) => args.depth.iter().copied().map(Some).collect(),
    };
    let reports = depths
        .iter()
        .map(|&d| jaccard_alignment(&l.codes, labels, taxonomy.as_ref(), d, args.top_n))
        .collect::<Result<Vec<_>>>()?;
    l.record.insert("depths".into(), json!(depths));
    l.record.insert("top_n".into(), json!(args.top_n));
    write_json(&l.out, EFFECTIVE_CONFIG, &l.record)?;
    let mut detail = Table::new("", ["depth", "latent", "stream_a", "stream_b", "jaccard"]);
    for r in &reports {
        for &(j, s, t, v) in &r.per_latent {
            detail.push([
                r.depth.map_or("leaf".into(), |d| d.to_string()),
                j.to_string(),
                l.codes.streams[s].clone(),
                l.codes.streams[t].clone(),
                v.to_string(),
            ]);
        }
    }
    std::fs::write(l.out.join("alignment_per_latent.csv"), detail.to_csv())
        .map_err(|e| SparcError::Config(e.to_string()))?;
    emit(&alignment_table(&reports), &l.out, "alignment")?;
    for r in &reports {
        println!(
            "mean Jaccard at depth {}: {:.6}",
            r.depth.map_or("leaf".into(), |d| d.to_string()),
            r.mean
        );
    }
    Ok(())
}

fn cmd_probes(args: ProbeArgs) -> Result<()> {
    let mut l = load_eval(&args.eval)?;
    let cfg: ProbeConfig = match &args.config {
        Some(p) => serde_json::from_value(merged_json(Some(p), Vec::new())?)
            .map_err(|e| SparcError::Config(format!("probe config: {e}")))?,
        None => ProbeConfig::default(),
    };
    let report = probe_eval(&l.codes, labels_of(&l)?, &cfg);
    l.record.insert("probe".into(), json!(cfg));
    write_json(&l.out, EFFECTIVE_CONFIG, &l.record)?;
    emit(&report.table(), &l.out, "probes")?;
    println!("mean best-probe loss: {:.6}", report.overall_mean());
    Ok(())
}

fn cmd_retrieval(args: RetrievalArgs) -> Result<()> {
    let mut l = load_eval(&args.eval)?;
    let results = match (&args.query, &args.reference) {
        (Some(q), Some(r)) => {
            let find = |name: &str| {
                l.codes
                    .stream_index(name)
                    .ok_or_else(|| SparcError::Config(format!("unknown stream `{name}`")))
            };
            vec![retrieval_r_at_1(&l.codes, find(q)?, find(r)?)]
        }
        _ => retrieval_matrix(&l.codes),
    };
    l.record.insert("similarity".into(), json!(SIMILARITY));
    write_json(&l.out, EFFECTIVE_CONFIG, &l.record)?;
    emit(&retrieval_table(&results), &l.out, "retrieval")
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let base = train_config(args.config.as_deref(), &args.overrides)?;
    let store = StoreHandle::open(&args.store)?;
    write_json(
        &args.out,
        EFFECTIVE_CONFIG,
        &json!({
            "base": base,
            "axis": args.axis.to_string(),
            "values": args.values,
            "modes": args.modes,
        }),
    )?;
    let rows = run_sweep(&store, &base, args.axis, &args.values, &args.modes)?;
    let csv = sweep_csv(&rows);
    let path = args.out.join("sweep.csv");
    std::fs::write(&path, &csv).map_err(|e| SparcError::Config(format!("{}: {e}", path.display())))?;
    print!("{csv}");
    Ok(())
}

fn inspect_store(path: &Path, warnings: &mut Vec<String>) -> Result<StoreHandle> {
    let store = StoreHandle::open(path)?;
    let m = store.manifest();
    println!("store {}: version {}, {} samples", path.display(), m.version, m.sample_count);
    let n = store.sample_count();
    let chunk = 4096;
    let mut stats = vec![(0usize, 0usize, 0.0f64); store.streams().len()];
    for start in (0..n).step_by(chunk) {
        let batch = store.read_batch(BatchRange::new(start, (start + chunk).min(n)))?;
        for (s, x) in batch.data.iter().enumerate() {
            for row in x.rows() {
                let bad = row.iter().filter(|v| !v.is_finite()).count();
                stats[s].0 += bad;
                let sq: f64 = row.iter().map(|v| v * v).sum();
                if sq == 0.0 {
                    stats[s].1 += 1;
                }
                if bad == 0 {
                    stats[s].2 += sq.sqrt();
                }
            }
        }
    }
    for (spec, (bad, zero, norm_sum)) in store.streams().iter().zip(stats) {
        println!(
            "  stream {}: dim {}, file {}, mean row norm {:.6}",
            spec.name,
            spec.dim,
            spec.data_file.display(),
            norm_sum / n.max(1) as f64
        );
        if bad > 0 {
            warnings.push(format!("stream {} has {bad} non-finite values", spec.name));
        }
        if zero > 0 {
            warnings.push(format!("stream {} has {zero} all-zero rows", spec.name));
        }
    }
    if let Some(labels) = store.labels()? {
        let empty = labels.per_sample.iter().filter(|l| l.is_empty()).count();
        println!(
            "  labels: {} distinct, {empty} samples without labels",
            labels.vocabulary().len()
        );
    }
    if let Some(t) = store.taxonomy()? {
        println!("  taxonomy: {} nodes, root {}, max depth {}", t.len(), t.root(), t.max_depth());
    }
    Ok(store)
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let mut warnings = Vec::new();
    let store = args.store.as_deref().map(|p| inspect_store(p, &mut warnings)).transpose()?;
    if let Some(path) = &args.checkpoint {
        let ckpt = Checkpoint::load(path)?;
        let h = &ckpt.header;
        println!(
            "checkpoint {}: format {} v{}, L {}, k {}, mode {}",
            path.display(),
            h.format,
            h.version,
            h.latent_dim,
            h.k,
            h.mode
        );
        for p in &ckpt.params.streams {
            let finite = [&p.w_enc, &p.w_dec].iter().all(|a| a.iter().all(|v| v.is_finite()))
                && p.b_pre.iter().chain(p.b_lat.iter()).all(|v| v.is_finite());
            println!(
                "  stream {}: dim {}, max |norm(d_j) - 1| {:.3e}",
                p.name,
                p.dim(),
                p.max_norm_deviation()
            );
            if !finite {
                warnings.push(format!("stream {} has non-finite parameters", p.name));
            }
            if p.max_norm_deviation() > 1e-5 {
                warnings.push(format!("stream {} decoder columns are not unit norm", p.name));
            }
        }
        if let Some(steps) = h.metadata.get("steps") {
            println!("  trained steps: {steps}");
        }
        if let Some(store) = &store {
            ckpt.params.check_streams(&store.stream_names())?;
            println!("  checkpoint streams match the store");
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!("warnings: {}", warnings.len());
    Ok(())
}

fn init_threads(flag: Option<usize>) -> std::result::Result<(), String> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("SPARC_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| format!("SPARC_THREADS={v} is not a count"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::SynthGen(a) => cmd_synth(a),
        Command::EvalPatterns(a) => cmd_patterns(a),
        Command::EvalAlignment(a) => cmd_alignment(a),
        Command::EvalProbes(a) => cmd_probes(a),
        Command::EvalRetrieval(a) => cmd_retrieval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
