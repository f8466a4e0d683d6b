mod manifest;
mod table;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;

use selqa_core::experiment::{
    run_generalizable, run_selective, train_per_dataset, train_router, write_risk_coverage_csv, GammaScope, Scorer,
    SelectiveModels,
};
use selqa_core::features::{build_training_set, write_feature_csv, FeatureMode};
use selqa_core::forest::{load_forest, save_forest, FeaturesPerSplit, ForestConfig, RandomForest};
use selqa_core::qa::{load_benchmark, save_benchmark, Benchmark, ExpertId, Split};
use selqa_core::router::{route_split, Models, RoutedRecord, Strategy};
use selqa_core::simulator::{default_config, generate_benchmark, SimConfig};
use selqa_core::study::study_pool;

use manifest::{absolute, RunManifest};
use table::{pct, Table};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<selqa_core::Error> for CliError {
    fn from(e: selqa_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

#[derive(Parser)]
#[command(name = "selqa", version, about = "Route questions across four QA experts and answer selectively")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark of expert logs.
    Simulate {
        /// TOML or JSON simulator config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a router on the train split.
    Train {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long, default_value = "full")]
        mode: FeatureMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model file, or a directory of per-dataset models with --per-dataset-router.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long)]
        per_dataset_router: bool,
        /// Also write the training matrix as CSV.
        #[arg(long)]
        features_csv: Option<PathBuf>,
    },
    /// Route every question of a split and write one JSON line per question.
    Route {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-dataset EM and macro-average for each strategy.
    EvalGen {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated strategy names; defaults to the full comparison.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<Strategy>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Risk-coverage AUC, Cov@80, Cov@90 and effective reliability per scorer.
    EvalSelective {
        #[arg(long)]
        bench: PathBuf,
        /// Full-mode router (file or per-dataset directory).
        #[arg(long)]
        model: PathBuf,
        /// Router trained without agreement features.
        #[arg(long)]
        no_agreement_model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = Scorer::ALL.map(|s| s.to_string()))]
        scorers: Vec<String>,
        #[arg(long, default_value = "global")]
        gamma_scope: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the annotation study over HTTP.
    Serve {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = selqa_core::study::DEFAULT_TRIALS)]
        trials: usize,
    },
}

#[derive(Args, Clone)]
struct ForestArgs {
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 12)]
    max_depth: usize,
    #[arg(long, default_value_t = 2)]
    min_leaf: usize,
    /// "sqrt" or a count.
    #[arg(long, default_value = "sqrt")]
    features_per_split: String,
    #[arg(long)]
    no_bootstrap: bool,
}

impl ForestArgs {
    fn config(&self, seed: u64) -> Result<ForestConfig> {
        let features_per_split = match self.features_per_split.as_str() {
            "sqrt" => FeaturesPerSplit::Sqrt,
            n => FeaturesPerSplit::Count(
                n.parse()
                    .map_err(|_| invalid(format!("--features-per-split must be `sqrt` or a count, got `{n}`")))?,
            ),
        };
        Ok(ForestConfig {
            n_trees: self.trees,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            features_per_split,
            bootstrap: !self.no_bootstrap,
            seed,
        })
    }
}

/// A pooled router or one router per dataset.
enum Loaded {
    Pooled(RandomForest),
    PerDataset(IndexMap<String, RandomForest>),
}

impl Loaded {
    fn models(&self) -> Models<'_> {
        match self {
            Loaded::Pooled(f) => Models::Pooled(f),
            Loaded::PerDataset(m) => Models::PerDataset(m),
        }
    }

    fn modes(&self) -> Vec<FeatureMode> {
        match self {
            Loaded::Pooled(f) => vec![f.mode],
            Loaded::PerDataset(m) => m.values().map(|f| f.mode).collect(),
        }
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(invalid(format!("{what} `{}` does not exist", path.display())))
    }
}

fn load_models(path: &Path, bench: &Benchmark) -> Result<Loaded> {
    require(path, "model")?;
    if !path.is_dir() {
        return Ok(Loaded::Pooled(load_forest(path)?));
    }
    let mut m = IndexMap::new();
    for d in &bench.datasets {
        let p = path.join(format!("{}.bin", d.id));
        require(&p, "per-dataset model")?;
        m.insert(d.id.clone(), load_forest(&p)?);
    }
    Ok(Loaded::PerDataset(m))
}

fn expect_mode(l: &Loaded, mode: FeatureMode, flag: &str) -> Result<()> {
    match l.modes().into_iter().find(|m| *m != mode) {
        Some(found) => Err(invalid(format!("{flag} must be a {mode} router, got {found}"))),
        None => Ok(()),
    }
}

fn bench_at(path: &Path, manifest: &mut RunManifest) -> Result<Benchmark> {
    require(path, "benchmark")?;
    manifest.input(path)?;
    Ok(load_benchmark(path)?)
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(selqa_core::Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn manifest_beside(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn default_strategies() -> Vec<Strategy> {
    let mut v = Strategy::comparison();
    v.extend([Strategy::Random { seed: 0 }, Strategy::QTypeOracle]);
    v
}

fn simulate(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Result<()> {
    let mut manifest = RunManifest::new("simulate", &out);
    let mut cfg = match &config {
        Some(p) => {
            require(p, "config")?;
            manifest.input(p)?;
            manifest.config_paths.push(absolute(p));
            SimConfig::from_file(p)?
        }
        None => default_config(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    manifest.seeds.push(cfg.seed);
    let bench = generate_benchmark(&cfg)?;
    fs::create_dir_all(&out)?;
    let files = save_benchmark(&bench, &out)?;
    write_json(&out.join("sim_config.json"), &cfg)?;
    manifest.write(&out.join("manifest.json"))?;
    let mut t = Table::new(["dataset", "type", "train", "dev", "test"]);
    for d in &bench.datasets {
        t.row([
            d.id.clone(),
            d.reasoning_type.map_or("mixed".into(), |r| r.to_string()),
            d.train.len().to_string(),
            d.dev.len().to_string(),
            d.test.len().to_string(),
        ]);
    }
    print!("{}", t.render());
    println!("wrote {} log files to {}", files.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    bench_path: PathBuf,
    mode: FeatureMode,
    seed: u64,
    out: PathBuf,
    forest: ForestArgs,
    per_dataset: bool,
    features_csv: Option<PathBuf>,
) -> Result<()> {
    let config = forest.config(seed)?;
    config.validate(selqa_core::features::feature_schema(mode).len())?;
    let mut manifest = RunManifest::new("train", &out);
    let bench = bench_at(&bench_path, &mut manifest)?;
    manifest.seeds.push(seed);
    manifest.feature_mode = Some(mode.to_string());
    if let Some(csv) = &features_csv {
        let data = build_training_set(&bench, Split::Train, mode)?;
        write_feature_csv(&data, mode, BufWriter::new(File::create(csv)?))?;
    }
    if per_dataset {
        let models = train_per_dataset(&bench, mode, &config)?;
        fs::create_dir_all(&out)?;
        for (id, f) in &models {
            save_forest(f, out.join(format!("{id}.bin")))?;
        }
        manifest.write(&out.join("manifest.json"))?;
        println!("trained {} {mode} routers into {}", models.len(), out.display());
    } else {
        let f = train_router(&bench, mode, &config)?;
        if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        save_forest(&f, &out)?;
        manifest.write(&manifest_beside(&out))?;
        println!(
            "trained {mode} router: {} trees, {} features, {} examples -> {}",
            f.trees.len(),
            f.n_features,
            4 * bench.len(Split::Train),
            out.display()
        );
    }
    Ok(())
}

fn route(bench_path: PathBuf, model: Option<PathBuf>, strategy: Strategy, split: Split, out: PathBuf) -> Result<()> {
    let mut manifest = RunManifest::new("route", &out);
    let bench = bench_at(&bench_path, &mut manifest)?;
    if strategy.needs_forest() && model.is_none() {
        return Err(invalid(format!("strategy `{strategy}` needs --model")));
    }
    let loaded = match &model {
        Some(p) => {
            manifest.input(p)?;
            manifest.model_paths.push(absolute(p));
            Some(load_models(p, &bench)?)
        }
        None => None,
    };
    let models = loaded.as_ref().map_or(Models::None, Loaded::models);
    manifest.strategies.push(strategy.to_string());
    let rows = route_split(&bench, split, strategy, models)?;
    let mut w = BufWriter::new(File::create(&out)?);
    let mut hits = 0;
    for (r, correct) in &rows {
        hits += usize::from(*correct);
        serde_json::to_writer(&mut w, &RoutedRecord::new(r, *correct)).map_err(selqa_core::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    manifest.write(&manifest_beside(&out))?;
    let mut t = Table::new(["strategy", "split", "questions", "EM"]);
    t.row([
        strategy.to_string(),
        split.to_string(),
        rows.len().to_string(),
        pct(hits as f64 / rows.len().max(1) as f64),
    ]);
    print!("{}", t.render());
    Ok(())
}

fn eval_gen(bench_path: PathBuf, model: Option<PathBuf>, strategies: Option<Vec<Strategy>>, out: PathBuf) -> Result<()> {
    let mut manifest = RunManifest::new("eval-gen", &out);
    let bench = bench_at(&bench_path, &mut manifest)?;
    let strategies = strategies.unwrap_or_else(default_strategies);
    if strategies.iter().any(|s| s.needs_forest()) && model.is_none() {
        return Err(invalid("strategy `mope` needs --model"));
    }
    let loaded = match &model {
        Some(p) => {
            manifest.input(p)?;
            manifest.model_paths.push(absolute(p));
            Some(load_models(p, &bench)?)
        }
        None => None,
    };
    manifest.strategies = strategies.iter().map(|s| s.to_string()).collect();
    let reports = run_generalizable(&bench, &strategies, loaded.as_ref().map_or(Models::None, Loaded::models))?;
    fs::create_dir_all(&out)?;
    write_json(&out.join("eval_gen.json"), &reports)?;
    manifest.write(&out.join("manifest.json"))?;

    let ids: Vec<&String> = reports[0].per_dataset_em.keys().collect();
    let mut header = vec!["system".to_string()];
    header.extend(ids.iter().map(|s| s.to_string()));
    header.push("macro".into());
    let mut t = Table::new(header);
    for r in &reports {
        let mut row = vec![r.strategy.clone()];
        row.extend(r.per_dataset_em.values().map(|&v| pct(v)));
        row.push(pct(r.macro_average));
        t.row(row);
    }
    print!("{}", t.render());
    Ok(())
}

fn eval_selective(
    bench_path: PathBuf,
    model: PathBuf,
    no_agreement_model: Option<PathBuf>,
    scorers: Vec<String>,
    gamma_scope: String,
    out: PathBuf,
) -> Result<()> {
    let scorers: Vec<Scorer> = scorers
        .iter()
        .map(|s| s.parse::<Scorer>().map_err(|e| invalid(e.to_string())))
        .collect::<Result<_>>()?;
    let scope = match gamma_scope.as_str() {
        "global" => GammaScope::Global,
        "per_dataset" | "per-dataset" => GammaScope::PerDataset,
        other => return Err(invalid(format!("--gamma-scope must be global or per-dataset, got `{other}`"))),
    };
    if scorers.contains(&Scorer::RfNoAgreement) && no_agreement_model.is_none() {
        return Err(invalid("scorer `rf_no_agreement` needs --no-agreement-model"));
    }
    let mut manifest = RunManifest::new("eval-selective", &out);
    let bench = bench_at(&bench_path, &mut manifest)?;
    manifest.input(&model)?;
    manifest.model_paths.push(absolute(&model));
    let full = load_models(&model, &bench)?;
    expect_mode(&full, FeatureMode::Full, "--model")?;
    let noagr = match &no_agreement_model {
        Some(p) => {
            manifest.input(p)?;
            manifest.model_paths.push(absolute(p));
            let l = load_models(p, &bench)?;
            expect_mode(&l, FeatureMode::NoAgreement, "--no-agreement-model")?;
            Some(l)
        }
        None => None,
    };
    manifest.strategies = scorers.iter().map(|s| s.to_string()).collect();
    let models = SelectiveModels {
        full: full.models(),
        no_agreement: noagr.as_ref().map_or(Models::None, Loaded::models),
    };
    let run = run_selective(&bench, &scorers, models, scope)?;
    fs::create_dir_all(&out)?;
    write_json(&out.join("selective.json"), &run.reports)?;
    write_risk_coverage_csv(BufWriter::new(File::create(out.join("risk_coverage.csv"))?), &run)?;
    manifest.write(&out.join("manifest.json"))?;

    let mut t = Table::new(["scorer", "AUC", "Cov@80", "Cov@90", "ER", "gamma"]);
    for r in &run.reports {
        t.row([
            r.scorer.to_string(),
            pct(r.auc),
            pct(r.cov_at_80),
            pct(r.cov_at_90),
            pct(r.er),
            r.gamma.map_or("per-dataset".into(), |g| format!("{g:.4}")),
        ]);
    }
    print!("{}", t.render());
    Ok(())
}

fn serve(bench_path: PathBuf, model: PathBuf, host: IpAddr, port: u16, store: PathBuf, trials: usize) -> Result<()> {
    require(&bench_path, "benchmark")?;
    require(&model, "model")?;
    let bench = load_benchmark(&bench_path)?;
    let forest = load_forest(&model)?;
    let pool = study_pool(&bench, &forest)?;
    if pool.len() < trials {
        return Err(invalid(format!("{} test questions available, sessions need {trials}", pool.len())));
    }
    let store = selqa_annotate::Store::open(&store)?;
    println!("{} sessions loaded from {}", store.len(), store.root().map_or(String::new(), |p| p.display().to_string()));
    let mut state = selqa_annotate::AppState::new(store, pool);
    state.n_trials = trials;
    let addr = SocketAddr::new(host, port);
    println!("listening on http://{addr} with {} experts", ExpertId::ALL.len());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(selqa_annotate::serve(addr, state))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => simulate(config, out, seed),
        Command::Train {
            bench,
            mode,
            seed,
            out,
            forest,
            per_dataset_router,
            features_csv,
        } => train(bench, mode, seed, out, forest, per_dataset_router, features_csv),
        Command::Route {
            bench,
            model,
            strategy,
            split,
            out,
        } => route(bench, model, strategy, split, out),
        Command::EvalGen {
            bench,
            model,
            strategies,
            out,
        } => eval_gen(bench, model, strategies, out),
        Command::EvalSelective {
            bench,
            model,
            no_agreement_model,
            scorers,
            gamma_scope,
            out,
        } => eval_selective(bench, model, no_agreement_model, scorers, gamma_scope, out),
        Command::Serve {
            bench,
            model,
            port,
            host,
            store,
            trials,
        } => serve(bench, model, host, port, store, trials),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
