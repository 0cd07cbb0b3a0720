use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cluster_shapley::hierarchy::Linkage;
use cluster_shapley::pipeline::run;
use cluster_shapley::{
    annotate, load_dataset, load_embedding, load_explanation, pca_or_fallback, save_explanation,
    AnnotationSpec, ArtifactError, ClusterAssignment, DataError, Dataset, Embedding, ExplainConfig,
    LassoPolygon, RunConfig, Standardize, SummaryConfig,
};
use cluster_shapley_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "cluster-shapley", version, about = "Explain clusters in 2-D layouts with Shapley values")]
struct Cli {
    /// Caps the number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute or import a 2-D embedding and write it as headerless x,y CSV.
    Embed(EmbedArgs),
    /// Assign rows to clusters and write the assignment as JSON.
    Annotate(AnnotateArgs),
    /// Explain every cluster and write the artifact.
    Explain(ExplainArgs),
    /// Print a cluster's ranking and the heatmap orders; write its detail JSON.
    Report(ReportArgs),
    /// Re-check every invariant of a stored artifact.
    Verify(VerifyArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Delimited file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Column holding ground-truth labels; removed from the features.
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, Failure> {
        if !self.delimiter.is_ascii() {
            return Err(Failure::usage("--delimiter must be a single ASCII character"));
        }
        Ok(load_dataset(&self.input, self.label_column.as_deref(), self.delimiter as u8)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedMethod {
    Pca,
    File,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = EmbedMethod::Pca)]
    method: EmbedMethod,
    /// Coordinates to import with `--method file`.
    #[arg(long, required_if_eq("method", "file"))]
    coords: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnnotateMethod {
    Labeled,
    Kmeans,
    Agglomerative,
    Manual,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkageArg {
    Average,
    Complete,
    Ward,
}

impl From<LinkageArg> for Linkage {
    fn from(l: LinkageArg) -> Self {
        match l {
            LinkageArg::Average => Linkage::Average,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Ward => Linkage::Ward,
        }
    }
}

#[derive(Args)]
struct AnnotateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Headerless x,y CSV; PCA is used when omitted.
    #[arg(long)]
    embedding: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AnnotateMethod::Labeled)]
    method: AnnotateMethod,
    #[arg(long, required_if_eq_any([("method", "kmeans"), ("method", "agglomerative")]))]
    k: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = LinkageArg::Average)]
    linkage: LinkageArg,
    /// JSON array of `{"cluster_id": int, "vertices": [[x, y], ...]}`.
    #[arg(long)]
    polygons: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StandardizeArg {
    None,
    Zscore,
    Minmax,
}

impl From<StandardizeArg> for Standardize {
    fn from(s: StandardizeArg) -> Self {
        match s {
            StandardizeArg::None => Standardize::None,
            StandardizeArg::Zscore => Standardize::Zscore,
            StandardizeArg::Minmax => Standardize::Minmax,
        }
    }
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Headerless x,y CSV; PCA is used when omitted.
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// Assignment JSON from `annotate`; ground-truth labels when omitted.
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Share of each cluster held out and explained.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    /// Coalitions per explained row (default: min(2^m - 2, 2m + 2048)).
    #[arg(long)]
    budget: Option<usize>,
    /// Background rows drawn from the training split.
    #[arg(long, default_value_t = 100)]
    background: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = StandardizeArg::None)]
    standardize: StandardizeArg,
    #[arg(long, default_value_t = SummaryConfig::default().histogram_bins)]
    histogram_bins: usize,
    #[arg(long, default_value_t = SummaryConfig::default().kde_bins)]
    kde_bins: usize,
    #[arg(long, default_value = "artifact.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    artifact: PathBuf,
    #[arg(long, default_value_t = 0)]
    cluster: usize,
    /// Detail JSON path (default: `<artifact>.cluster<c>.json`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    artifact: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// TOML file with bind, artifact_dir, budget, background and seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    artifact_dir: Option<PathBuf>,
}

/// A failed command: the name printed on stderr and the exit code.
struct Failure {
    name: String,
    message: String,
    code: u8,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { name: "Usage".into(), message: message.into(), code: 2 }
    }
}

impl<E: Into<cluster_shapley::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        Self { name: e.name().into(), message: e.to_string(), code: 1 }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| ArtifactError::IoError(format!("{}: {e}", path.display())).into())
}

fn embedding_for(d: &Dataset, path: Option<&Path>) -> Result<Embedding, Failure> {
    match path {
        Some(p) => Ok(load_embedding(p, d)?),
        None => {
            let (e, degenerate) = pca_or_fallback(d)?;
            if degenerate {
                eprintln!("warning: {}", DataError::DegenerateData);
            }
            Ok(e)
        }
    }
}

fn read_assignment(path: &Path) -> Result<ClusterAssignment, Failure> {
    let bytes = std::fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_slice(&bytes).map_err(|e| {
        Failure::from(cluster_shapley::AnnotationError::InvalidAssignment(e.to_string()))
    })
}

fn embed(args: &EmbedArgs) -> Result<(), Failure> {
    let d = args.data.load()?;
    let e = match args.method {
        EmbedMethod::Pca => embedding_for(&d, None)?,
        EmbedMethod::File => load_embedding(args.coords.as_deref().expect("required by clap"), &d)?,
    };
    write_file(&args.output, e.to_csv().as_bytes())?;
    println!("wrote {} points to {}", e.len(), args.output.display());
    Ok(())
}

fn annotate_cmd(args: &AnnotateArgs) -> Result<(), Failure> {
    let d = args.data.load()?;
    let spec = match args.method {
        AnnotateMethod::Labeled => AnnotationSpec::Labeled,
        AnnotateMethod::Kmeans => AnnotationSpec::Kmeans { k: args.k.expect("required by clap"), seed: args.seed },
        AnnotateMethod::Agglomerative => AnnotationSpec::Agglomerative {
            k: args.k.expect("required by clap"),
            linkage: args.linkage.into(),
        },
        AnnotateMethod::Manual => {
            let polygons: Vec<LassoPolygon> = match &args.polygons {
                Some(p) => {
                    let bytes = std::fs::read(p).map_err(|e| DataError::Io {
                        path: p.display().to_string(),
                        message: e.to_string(),
                    })?;
                    serde_json::from_slice(&bytes).map_err(|e| DataError::ParseError {
                        row: 0,
                        col: 0,
                        message: e.to_string(),
                    })?
                }
                None => Vec::new(),
            };
            AnnotationSpec::Manual { polygons }
        }
    };
    let e = match args.method {
        AnnotateMethod::Labeled => None,
        _ => Some(embedding_for(&d, args.embedding.as_deref())?),
    };
    let a = annotate(&d, e.as_ref(), &spec)?;
    let mut bytes = serde_json::to_vec_pretty(&a).expect("assignment serializes");
    bytes.push(b'\n');
    write_file(&args.output, &bytes)?;
    println!("k = {}, sizes = {:?}", a.k(), a.sizes());
    Ok(())
}

fn explain(args: &ExplainArgs) -> Result<(), Failure> {
    let d = args.data.load()?;
    let e = embedding_for(&d, args.embedding.as_deref())?;
    let a = match &args.assignment {
        Some(p) => read_assignment(p)?,
        None => annotate(&d, None, &AnnotationSpec::Labeled)?,
    };
    let cfg = RunConfig {
        explain: ExplainConfig {
            fraction: args.fraction,
            seed: args.seed,
            budget: args.budget,
            background: args.background,
        },
        standardize: args.standardize.into(),
        summaries: SummaryConfig {
            histogram_bins: args.histogram_bins,
            kde_bins: args.kde_bins,
            ..SummaryConfig::default()
        },
    };
    let artifact = run(&d, &e, &a, &cfg, None)?;
    save_explanation(&artifact, &args.out)?;
    println!(
        "explanation {} ({} rows, {} clusters) written to {}",
        artifact.id(),
        artifact.explanation.test_indices.len(),
        artifact.k(),
        args.out.display()
    );
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let artifact = load_explanation(&args.artifact)?;
    let view = artifact
        .cluster_view(args.cluster)
        .ok_or(cluster_shapley::ModelError::BadCluster(args.cluster))?;
    println!("cluster {} of {} (explanation {})", args.cluster, artifact.k(), artifact.id());
    for (rank, &j) in view.summary.ranking.iter().enumerate() {
        let f = view
            .importance
            .features
            .iter()
            .find(|f| f.feature_index == j)
            .expect("ranking covers importance features");
        println!("{:>3}. {}  mean|phi|={:.6}  share={:.4}", rank + 1, f.feature, f.mean_abs, f.share);
    }
    let hm = &artifact.summaries.heatmap;
    let rows: Vec<String> = hm.row_order.iter().map(|c| c.to_string()).collect();
    let cols: Vec<&str> = hm.col_order.iter().map(|&i| hm.features[i].as_str()).collect();
    println!("heatmap rows: {}", rows.join(" "));
    println!("heatmap cols: {}", cols.join(" | "));

    let out = args.out.clone().unwrap_or_else(|| {
        let stem = args.artifact.with_extension("");
        PathBuf::from(format!("{}.cluster{}.json", stem.display(), args.cluster))
    });
    let mut bytes = serde_json::to_vec_pretty(&view).expect("view serializes");
    bytes.push(b'\n');
    write_file(&out, &bytes)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    let artifact = load_explanation(&args.artifact)?;
    println!("ok {} ({} rows, {} clusters)", artifact.id(), artifact.explanation.test_indices.len(), artifact.k());
    Ok(())
}

fn serve(args: &ServeArgs) -> Result<(), Failure> {
    let mut cfg = ServiceConfig::load(args.config.as_deref())
        .map_err(|e| Failure { name: "ConfigError".into(), message: e.to_string(), code: 1 })?;
    if let Some(b) = &args.bind {
        cfg.bind = b.clone();
    }
    if let Some(d) = &args.artifact_dir {
        cfg.artifact_dir = d.clone();
    }
    let io = |e: std::io::Error| Failure { name: "IoError".into(), message: e.to_string(), code: 1 };
    let rt = tokio::runtime::Runtime::new().map_err(io)?;
    rt.block_on(cluster_shapley_service::serve(cfg)).map_err(io)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let _ = tracing_subscriber::fmt()
        .with_max_level(tracing_subscriber::filter::LevelFilter::INFO)
        .with_writer(std::io::stderr)
        .try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: Usage: --threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("pool set once");
    }
    let start = Instant::now();
    let result = match &cli.command {
        Command::Embed(a) => embed(a),
        Command::Annotate(a) => annotate_cmd(a),
        Command::Explain(a) => explain(a),
        Command::Report(a) => report(a),
        Command::Verify(a) => verify(a),
        Command::Serve(a) => serve(a),
    };
    eprintln!("elapsed: {:.6}s", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.name, f.message);
            ExitCode::from(f.code)
        }
    }
}
