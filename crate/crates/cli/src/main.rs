use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pivotrec_core::dataset::parse_type_overrides;
use pivotrec_core::pivot::{canonicalize, materialize, AggFn};
use pivotrec_core::recommend::{recommend, RecommendConfig, RecommendError};
use pivotrec_core::scoring::{score_grid, ScoringParams};
use pivotrec_core::semantics::{RemoteConfig, SemanticOracle};
use pivotrec_server::{build_embedder, build_oracle, ingest, CacheFileMode, ServerConfig};
use serde_json::json;
use tracing_subscriber::filter::LevelFilter;

#[derive(Parser)]
#[command(
    name = "pivotrec",
    version,
    about = "Diverse pivot-table recommendations from CSV data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recommend a diverse batch of pivot tables.
    Recommend(RecommendArgs),
    /// Score one pivot table and print every intermediate.
    Score(ScoreArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Rule,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Markdown,
}

#[derive(Args)]
struct InputArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// JSON type overrides: {"attribute", "data_type"} or an array of them.
    #[arg(long)]
    types: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum, default_value = "rule")]
    oracle: OracleKind,
    /// Endpoint of the remote oracle (with --oracle remote).
    #[arg(long, env = "PIVOTREC_ORACLE_ENDPOINT")]
    oracle_endpoint: Option<String>,
    #[arg(long, env = "PIVOTREC_ORACLE_TOKEN", hide_env_values = true)]
    oracle_token: Option<String>,
    /// Remote encoder endpoint; the offline baseline is used otherwise.
    #[arg(long, env = "PIVOTREC_EMBEDDING_ENDPOINT")]
    embedding_endpoint: Option<String>,
    /// Load this cache file and append every new oracle answer to it.
    #[arg(long, conflicts_with = "replay_cache")]
    record_cache: Option<PathBuf>,
    /// Answer from this cache file; new answers are not written back.
    #[arg(long)]
    replay_cache: Option<PathBuf>,
}

#[derive(Args)]
struct ScoringArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    tau_rho: f64,
    #[arg(long, default_value_t = 2.0)]
    tau_pi: f64,
    #[arg(long, default_value_t = 4.0)]
    tau_outlier: f64,
    #[arg(long, default_value_t = 16.0)]
    tau_c: f64,
    #[arg(long, default_value_t = 0.03)]
    z: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
}

impl ScoringArgs {
    fn params(&self) -> ScoringParams {
        ScoringParams {
            tau_rho: self.tau_rho,
            tau_pi: self.tau_pi,
            tau_outlier: self.tau_outlier,
            tau_c: self.tau_c,
            z: self.z,
            lambda: self.lambda,
            alpha: self.alpha,
        }
    }
}

#[derive(Args)]
struct RecommendArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.25)]
    theta: f64,
    /// Comma-separated attributes every recommendation must stay within.
    #[arg(long, value_delimiter = ',')]
    focus: Option<Vec<String>>,
    #[arg(long, default_value_t = 3)]
    g_max: usize,
    #[arg(long, default_value_t = 0.4)]
    p_agg_min: f64,
    #[arg(long, default_value_t = 256, conflicts_with = "no_cell_max")]
    cell_max: u64,
    /// Disable the estimated-cell-count prune.
    #[arg(long)]
    no_cell_max: bool,
    #[arg(long, default_value_t = 5000, conflicts_with = "no_pool_cap")]
    pool_cap: usize,
    #[arg(long)]
    no_pool_cap: bool,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long = "fn", value_parser = parse_agg)]
    func: AggFn,
    #[arg(long)]
    attr: String,
    /// Comma-separated grouping attributes.
    #[arg(long = "group", value_delimiter = ',', required = true)]
    groups: Vec<String>,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct ServeArgs {
    /// TOML configuration; PIVOTREC_* variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
}

fn parse_agg(s: &str) -> Result<AggFn, String> {
    AggFn::parse(s).ok_or_else(|| format!("unknown aggregate function `{s}`"))
}

/// A failure carrying the exit code and an error code in the service's vocabulary.
struct Failure {
    exit: u8,
    code: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            exit: 2,
            code: "bad_request",
            message: message.into(),
        }
    }

    fn runtime(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            exit: 1,
            code,
            message: message.into(),
        }
    }
}

fn oracle_from(args: &OracleArgs) -> Result<Arc<dyn SemanticOracle>, Failure> {
    let remote = match args.oracle {
        OracleKind::Rule => None,
        OracleKind::Remote => {
            let endpoint = args
                .oracle_endpoint
                .clone()
                .ok_or_else(|| Failure::usage("--oracle remote needs --oracle-endpoint"))?;
            let mut cfg = RemoteConfig::new(endpoint);
            cfg.token = args.oracle_token.clone();
            Some(cfg)
        }
    };
    let cache = match (&args.record_cache, &args.replay_cache) {
        (Some(p), _) => Some((p.as_path(), CacheFileMode::Record)),
        (None, Some(p)) => Some((p.as_path(), CacheFileMode::Replay)),
        (None, None) => None,
    };
    build_oracle(remote.as_ref(), cache).map_err(|e| Failure::runtime("internal", e.to_string()))
}

fn load(input: &InputArgs, oracle: &dyn SemanticOracle) -> Result<pivotrec_core::dataset::Dataset, Failure> {
    let csv = std::fs::read(&input.input)
        .map_err(|e| Failure::runtime("not_found", format!("cannot read {}: {e}", input.input.display())))?;
    let overrides = match &input.types {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::runtime("not_found", format!("cannot read {}: {e}", path.display())))?;
            parse_type_overrides(&text).map_err(|e| Failure::usage(e.to_string()))?
        }
        None => Vec::new(),
    };
    let (dataset, _) =
        ingest(&csv, &overrides, oracle).map_err(|e| Failure::runtime("bad_request", e.to_string()))?;
    Ok(dataset)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    let written = match out {
        Some(path) => std::fs::write(path, bytes),
        None => std::io::stdout().write_all(bytes),
    };
    written.map_err(|e| Failure::runtime("internal", format!("cannot write output: {e}")))
}

fn embedding_config(endpoint: &Option<String>) -> Option<pivotrec_core::embedding::RemoteEmbedderConfig> {
    endpoint
        .clone()
        .map(|endpoint| pivotrec_core::embedding::RemoteEmbedderConfig {
            endpoint,
            token: None,
            timeout_ms: 10_000,
            max_in_flight: 4,
        })
}

fn cmd_recommend(args: RecommendArgs) -> Result<(), Failure> {
    let config = RecommendConfig {
        k: args.k,
        theta: args.theta,
        focus_attrs: args.focus.clone(),
        g_max: args.g_max,
        p_agg_min: args.p_agg_min,
        cell_max: (!args.no_cell_max).then_some(args.cell_max),
        pool_cap: (!args.no_pool_cap).then_some(args.pool_cap),
        scoring: args.scoring.params(),
    };
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let oracle = oracle_from(&args.oracle)?;
    let embedder = build_embedder(embedding_config(&args.oracle.embedding_endpoint).as_ref());
    let csv = std::fs::read(&args.input.input).map_err(|e| {
        Failure::runtime(
            "not_found",
            format!("cannot read {}: {e}", args.input.input.display()),
        )
    })?;
    let overrides = match &args.input.types {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::runtime("not_found", format!("cannot read {}: {e}", path.display())))?;
            parse_type_overrides(&text).map_err(|e| Failure::usage(e.to_string()))?
        }
        None => Vec::new(),
    };
    let (dataset, profile) =
        ingest(&csv, &overrides, &*oracle).map_err(|e| Failure::runtime("bad_request", e.to_string()))?;
    let batch = recommend(
        &dataset,
        &profile,
        &config,
        &BTreeSet::new(),
        &*oracle,
        &*embedder,
    )
    .map_err(|e| match e {
        RecommendError::Config(c) => Failure::usage(c.to_string()),
        RecommendError::PoolTooLarge { .. } => Failure::runtime("infeasible", e.to_string()),
        other => Failure::runtime("internal", other.to_string()),
    })?;
    let bytes = match args.format {
        Format::Json => batch.to_json_bytes(),
        Format::Markdown => batch.to_markdown().into_bytes(),
    };
    emit(args.out.as_deref(), &bytes)
}

fn cmd_score(args: ScoreArgs) -> Result<(), Failure> {
    let params = args.scoring.params();
    params.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let spec =
        canonicalize(args.func, &args.attr, &args.groups).map_err(|e| Failure::usage(e.to_string()))?;
    let oracle = oracle_from(&args.oracle)?;
    let dataset = load(&args.input, &*oracle)?;
    let grid = materialize(&dataset, &spec).map_err(|e| Failure::usage(e.to_string()))?;
    let scored = score_grid(&dataset, &grid, &*oracle, &params).map_err(|e| Failure::usage(e.to_string()))?;
    let bytes = match args.format {
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(&json!({
                "spec": scored.spec,
                "query": scored.spec.canonical_query(),
                "grid": grid,
                "scores": scored.scores,
                "details": scored.details,
            }))
            .expect("scorecards serialize");
            v.push(b'\n');
            v
        }
        Format::Markdown => {
            let mut text = format!("# {}\n\n{}\n", spec.canonical_query(), grid.to_markdown());
            let card = serde_json::to_value(scored.scores).expect("scorecards serialize");
            for (name, value) in card.as_object().expect("scorecards are objects") {
                text.push_str(&format!("- {name}: {:.4}\n", value.as_f64().unwrap_or(f64::NAN)));
            }
            text.into_bytes()
        }
    };
    emit(None, &bytes)
}

fn cmd_serve(args: ServeArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => ServerConfig::load(path).map_err(|e| Failure::usage(e.to_string()))?,
        None => ServerConfig::default(),
    };
    config
        .apply_env(|k| std::env::var(k).ok())
        .map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::runtime("internal", e.to_string()))?;
    runtime
        .block_on(pivotrec_server::serve(config))
        .map_err(|e| Failure::runtime("internal", e))
}

fn main() -> ExitCode {
    let level = std::env::var("PIVOTREC_LOG")
        .ok()
        .and_then(|v| v.parse::<LevelFilter>().ok())
        .unwrap_or(LevelFilter::WARN);
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Recommend(args) => cmd_recommend(args),
        Command::Score(args) => cmd_score(args),
        Command::Serve(args) => cmd_serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "code": f.code, "message": f.message }));
            ExitCode::from(f.exit)
        }
    }
}
