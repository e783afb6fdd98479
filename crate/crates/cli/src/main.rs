use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sigaudit_client::Client;
use sigaudit_core::aggregation::DEFAULT_K;
use sigaudit_core::api::{PatchSource, QueryService, SummaryQuery};
use sigaudit_core::extractors::{extract_directory, ExtractOptions, FaceBoxes};
use sigaudit_core::patches::DEFAULT_PAGE_SIZE;
use sigaudit_core::report::{
    build_report, render_chart, validate_bundle, Aggregate, FileKind, ReportBundle, ReportParams,
};
use sigaudit_core::signal_model::{Dataset, Ingestor, Schema, SignalManifestEntry, Strictness};
use sigaudit_core::synth::{synthetic_entries, SynthSpec};
use sigaudit_server::{check_bind, DEFAULT_BIND, DEFAULT_CACHE_ENTRIES};

#[derive(Parser)]
#[command(name = "sigaudit", version, about = "Aggregated audits of image datasets from model signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute native signals (metadata, luminance, ITA) for a directory of images.
    Extract(ExtractArgs),
    /// Validate manifests against the schema and write the merged manifest.
    Ingest(IngestArgs),
    /// Build, validate and write a report bundle.
    Report(ReportArgs),
    /// Render every aggregate of a report bundle to SVG.
    Render(RenderArgs),
    /// Serve read-only aggregate queries over HTTP.
    Serve(ServeArgs),
    /// Generate a synthetic manifest from a spec.
    Synth(SynthArgs),
    /// Query a running service.
    Query(QueryArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Attribute configuration (TOML); the built-in attribute set otherwise.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Default threshold override, `attribute=value`; repeatable.
    #[arg(long = "threshold", value_name = "ATTR=T", value_parser = parse_threshold)]
    thresholds: Vec<(String, f64)>,
}

#[derive(Args)]
struct DataArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Signal manifest (JSON lines); repeatable.
    #[arg(long = "manifest", required = true)]
    manifests: Vec<PathBuf>,
    /// Skip malformed entries instead of aborting.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct ExtractArgs {
    /// Image directory, walked recursively.
    #[arg(long)]
    images: PathBuf,
    /// Manifest holding face boxes; ITA is computed inside them.
    #[arg(long)]
    faces: Option<PathBuf>,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Merged, validated manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Report parameters (TOML).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Smallest count shown; overrides the parameter file.
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Report bundle directory.
    #[arg(long)]
    report: PathBuf,
    /// Defaults to `<report>/charts`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = DEFAULT_BIND)]
    bind: String,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: u64,
    /// Enable the face-crop endpoint. Only for non-sensitive data.
    #[arg(long, requires = "images")]
    trusted: bool,
    /// Image root for trusted mode; sample ids are paths below it.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
    page_size: usize,
    /// Allow trusted mode on a non-loopback address.
    #[arg(long)]
    allow_remote_trusted: bool,
    #[arg(long, default_value_t = DEFAULT_CACHE_ENTRIES)]
    cache_entries: usize,
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    server: String,
    /// Also render the aggregate to this SVG file.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(subcommand)]
    endpoint: Endpoint,
}

#[derive(Subcommand)]
enum Endpoint {
    Info,
    Attributes,
    /// Body: JSON text or `@file`.
    Summary { body: Option<String> },
    Distribution { body: String },
    Boxplot { body: String },
    Cooccurrence { body: String },
    Npmi { body: String },
    Patches { body: String },
}

fn parse_threshold(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected ATTR=T")?;
    let t: f64 = v.trim().parse().map_err(|e| format!("{v:?}: {e}"))?;
    Ok((k.trim().to_string(), t))
}

fn load_schema(a: &SchemaArgs) -> Result<Arc<Schema>> {
    let schema = match &a.schema {
        Some(p) => Schema::from_config_file(p).with_context(|| format!("loading {}", p.display()))?,
        None => Schema::builtin(),
    };
    let overrides: BTreeMap<String, f64> = a.thresholds.iter().cloned().collect();
    Ok(Arc::new(schema.with_thresholds(&overrides)?))
}

fn load_dataset(a: &DataArgs) -> Result<Dataset> {
    let schema = load_schema(&a.schema)?;
    let strictness = if a.lenient { Strictness::Skip } else { Strictness::Abort };
    let mut ing = Ingestor::new(schema, strictness);
    for p in &a.manifests {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        ing.read(BufReader::new(f), &p.display().to_string())?;
    }
    let outcome = ing.finish()?;
    let r = &outcome.report;
    eprintln!(
        "ingested {} samples, {} individuals ({} lines, {} accepted, {} skipped)",
        outcome.dataset.len(),
        outcome.dataset.individual_count(),
        r.lines_read,
        r.entries_accepted,
        r.skipped.len()
    );
    for e in r.skipped.iter().take(20) {
        eprintln!("  skipped: {e}");
    }
    Ok(outcome.dataset)
}

fn write_entries(path: &Path, entries: &[SignalManifestEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_entries(path: &Path) -> Result<Vec<SignalManifestEntry>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn extract(a: ExtractArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let faces = match &a.faces {
        Some(p) => FaceBoxes::from_entries(&read_entries(p)?, schema.face_attribute()),
        None => FaceBoxes::default(),
    };
    let out = extract_directory(&a.images, &faces, &ExtractOptions::default())?;
    write_entries(&a.out, &out.entries)?;
    eprintln!(
        "{} images, {} entries, {} undecodable, {} faces without skin",
        out.images,
        out.entries.len(),
        out.failures.len(),
        out.faces_without_skin
    );
    for (f, why) in out.failures.iter().take(20) {
        eprintln!("  {f}: {why}");
    }
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    if let Some(out) = &a.out {
        let mut w = BufWriter::new(File::create(out)?);
        ds.write_manifest(&mut w)?;
        w.flush()?;
    }
    println!("{}", ds.digest());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let mut params = match &a.params {
        Some(p) => ReportParams::from_file(p)?,
        None => ReportParams::default(),
    };
    if let Some(k) = a.k {
        params.k = k;
    }
    let bundle = build_report(&ds, &params)?;
    let ids: BTreeSet<String> = ds.samples().iter().map(|s| s.sample_id.clone()).collect();
    let summary = validate_bundle(&bundle, Some(&ids))?;
    bundle.write_to(&a.out)?;
    eprintln!(
        "wrote {} files to {} ({} count cells, {} suppressed)",
        summary.files,
        a.out.display(),
        summary.count_cells,
        summary.suppressed_cells
    );
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let bundle = ReportBundle::read_from(&a.report)?;
    validate_bundle(&bundle, None)?;
    let out = a.out.unwrap_or_else(|| a.report.join("charts"));
    let mut n = 0;
    for f in bundle.manifest()?.files {
        if f.kind == FileKind::Summary {
            continue;
        }
        let agg = Aggregate::parse(f.kind, bundle.get(&f.path).expect("validated"))?;
        let path = out.join(Path::new(&f.path).with_extension("svg"));
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, render_chart(&agg)?)?;
        n += 1;
    }
    eprintln!("rendered {n} charts to {}", out.display());
    Ok(())
}

async fn serve(a: ServeArgs) -> Result<()> {
    let addr: std::net::SocketAddr = a.bind.parse().with_context(|| format!("bind address {:?}", a.bind))?;
    check_bind(addr, a.trusted, a.allow_remote_trusted)?;
    let ds = load_dataset(&a.data)?;
    let patches = match (a.trusted, a.images) {
        (true, Some(root)) => Some(PatchSource {
            image_root: root,
            page_size: a.page_size,
        }),
        _ => None,
    };
    let service = QueryService::new(Arc::new(ds), a.name, a.k, patches)?;
    if service.trusted() {
        tracing::warn!("trusted mode: the patch endpoint returns image crops and sample ids");
    }
    let app = sigaudit_server::router(service, a.cache_entries);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    sigaudit_server::serve(listener, app).await?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let mut spec = SynthSpec::from_file(&a.spec)?;
    if let Some(n) = a.samples {
        spec.samples = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let entries = synthetic_entries(&spec, &schema)?;
    write_entries(&a.out, &entries)?;
    eprintln!("{} samples, {} entries", spec.samples, entries.len());
    Ok(())
}

fn body<Q: serde::de::DeserializeOwned>(text: &str) -> Result<Q> {
    let raw = match text.strip_prefix('@') {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {p}"))?,
        None => text.to_string(),
    };
    serde_json::from_str(&raw).context("query body")
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

async fn query(a: QueryArgs) -> Result<()> {
    let c = Client::new(a.server);
    let agg = match a.endpoint {
        Endpoint::Info => return print(&c.info().await?),
        Endpoint::Attributes => return print(&c.attributes().await?),
        Endpoint::Summary { body: b } => {
            let q: SummaryQuery = b.as_deref().map(body).transpose()?.unwrap_or_default();
            return print(&c.summary(&q).await?);
        }
        Endpoint::Patches { body: b } => return print(&c.patches(&body(&b)?).await?),
        Endpoint::Distribution { body: b } => Aggregate::Distribution(c.distribution(&body(&b)?).await?),
        Endpoint::Boxplot { body: b } => Aggregate::Boxplot(c.boxplot(&body(&b)?).await?),
        Endpoint::Cooccurrence { body: b } => Aggregate::Cooccurrence(c.cooccurrence(&body(&b)?).await?),
        Endpoint::Npmi { body: b } => Aggregate::Npmi(c.npmi(&body(&b)?).await?),
    };
    match &agg {
        Aggregate::Distribution(x) => print(x)?,
        Aggregate::Boxplot(x) => print(x)?,
        Aggregate::Cooccurrence(x) => print(x)?,
        Aggregate::Npmi(x) => print(x)?,
        Aggregate::Summary(x) => print(x)?,
    }
    if let Some(p) = a.svg {
        std::fs::write(&p, render_chart(&agg)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(a) => extract(a),
        Command::Ingest(a) => ingest(a),
        Command::Report(a) => report(a),
        Command::Render(a) => render(a),
        Command::Synth(a) => synth(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(serve(a)),
        Command::Query(a) => tokio::runtime::Runtime::new()?.block_on(query(a)),
    }
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        if let Some(api) = e.downcast_ref::<sigaudit_client::ClientError>().and_then(|c| c.api_error()) {
            if let Some(valid) = &api.valid_attributes {
                eprintln!("valid attributes: {}", valid.join(", "));
            }
        }
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_parse() {
        assert_eq!(parse_threshold("nsfw=0.4").unwrap(), ("nsfw".into(), 0.4));
        assert!(parse_threshold("nsfw").is_err());
        assert!(parse_threshold("nsfw=x").is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
