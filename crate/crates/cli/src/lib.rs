//! `uidkit` command-line driver. Every subcommand is a thin wrapper over one
//! library call; `run` is the whole program minus process plumbing.

pub mod service;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use uidkit_core::learn::train;
use uidkit_core::{classify_image, decode_image, uid, Algorithm, Error, ExportFormat, Linkage, PixelRect, Project, TrainedClassifier};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "uidkit", version, about = "Universal Image Distance feature extraction and learning")]
struct Cli {
    /// Project directory.
    #[arg(long, global = true, default_value = ".")]
    project: PathBuf,
    /// Machine-readable output on stdout and stderr.
    #[arg(long, global = true)]
    json: bool,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create an empty project (no-op on an existing one).
    Init,
    /// Add image files to the corpus.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Set labels for a target from a CSV of `image,label` rows.
    Label { target: String, csv: PathBuf },
    #[command(subcommand)]
    Category(CategoryCommand),
    #[command(subcommand)]
    Proto(ProtoCommand),
    /// UID between two image files.
    Uid { a: PathBuf, b: PathBuf },
    /// Extract feature vectors for the whole corpus.
    Extract {
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        audit: bool,
    },
    /// Write a dataset as CSV, ARFF or JSON.
    Export {
        dataset: String,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Stratified cross-validation against the ZeroR baseline.
    Cv {
        dataset: String,
        #[command(flatten)]
        algo: AlgoArgs,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// k-means clustering of a dataset.
    Kmeans {
        dataset: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a classifier on a whole dataset and save it as a model file.
    Train {
        dataset: String,
        #[command(flatten)]
        algo: AlgoArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Classify an image file with a saved model.
    Classify {
        image: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: SocketAddr,
    },
}

#[derive(Args, Debug)]
struct AlgoArgs {
    /// zero_r, naive_bayes or knn.
    #[arg(long, default_value = "naive_bayes")]
    algo: String,
    /// Neighbours for knn.
    #[arg(long, default_value_t = 1)]
    k: usize,
}

impl AlgoArgs {
    fn algorithm(&self) -> Result<Algorithm, Error> {
        Algorithm::parse(&self.algo, self.k)
    }
}

#[derive(Subcommand, Debug)]
enum CategoryCommand {
    Add { name: String },
    List,
    Remove { name: String },
}

#[derive(Subcommand, Debug)]
enum ProtoCommand {
    /// Crop a prototype out of a corpus image.
    Add {
        image: String,
        /// `L,T,W,H` in pixels from the top-left corner.
        #[arg(long, value_parser = parse_rect)]
        rect: PixelRect,
        /// Created when missing.
        #[arg(long)]
        category: String,
    },
    List,
    Remove { id: String },
    /// Compute and store the prototype distance matrix.
    Matrix,
    /// Cluster the stored matrix and check the cut for purity.
    Dendrogram {
        #[arg(long)]
        cut: Option<usize>,
        #[arg(long, default_value = "average")]
        linkage: String,
    },
}

pub fn parse_rect(s: &str) -> Result<PixelRect, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [l, t, w, h] = parts[..] else {
        return Err(format!("expected L,T,W,H, got `{s}`"));
    };
    let n = |v: &str| v.parse::<u32>().map_err(|e| format!("`{v}`: {e}"));
    Ok(PixelRect::new(n(l)?, n(t)?, n(w)?, n(h)?))
}

/// A classifier bound to the prototype set its features came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub dataset_id: String,
    pub prototype_fingerprint: String,
    pub categories: Vec<String>,
    pub classifier: TrainedClassifier,
}

struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::validation(e.to_string())
        } else {
            Failure {
                code: 2,
                kind: "computation",
                message: e.to_string(),
            }
        }
    }
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            kind: "validation",
            message: message.into(),
        }
    }

    fn io(context: &Path, e: std::io::Error) -> Self {
        Failure::validation(format!("{}: {e}", context.display()))
    }
}

type CmdResult = Result<i32, Failure>;

struct Ctx<'a> {
    project: PathBuf,
    json: bool,
    color: bool,
    out: &'a mut (dyn Write + Send),
    err: &'a mut (dyn Write + Send),
}

impl Ctx<'_> {
    fn open(&self) -> Result<Project, Failure> {
        Ok(Project::open(&self.project)?)
    }

    /// `text` in human mode, `value` pretty-printed with `--json`.
    fn emit(&mut self, text: &str, value: &impl Serialize) -> Result<(), Failure> {
        let r = if self.json {
            let s = serde_json::to_string_pretty(value).map_err(|e| Failure::from(Error::from(e)))?;
            writeln!(self.out, "{s}")
        } else {
            write!(self.out, "{text}")
        };
        r.map_err(|e| Failure::io(Path::new("stdout"), e))
    }

    fn paint(&self, s: &str, green: bool) -> String {
        if self.color {
            format!("\x1b[{}m{s}\x1b[0m", if green { 32 } else { 31 })
        } else {
            s.to_string()
        }
    }
}

/// Run with colors when stdout is a terminal and `NO_COLOR` is unset.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let color = std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stdout().is_terminal();
    run_with_color(args, out, err, color)
}

/// Parse `args` (including the program name) and execute. Returns the exit
/// code: 0 success, 1 validation error, 2 computation failure.
pub fn run_with_color<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send), color: bool) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = if color { e.render().ansi().to_string() } else { e.render().to_string() };
            let _ = if e.use_stderr() { write!(err, "{rendered}") } else { write!(out, "{rendered}") };
            return code;
        }
    };
    let mut ctx = Ctx {
        project: cli.project,
        json: cli.json,
        color,
        out,
        err,
    };
    let outcome = match (cli.threads, &cli.command) {
        (Some(0), _) => Err(Failure::validation("--threads must be at least 1")),
        (Some(n), Command::Serve { .. }) => {
            // Jobs run on their own threads and use the global pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            dispatch(&mut ctx, cli.command)
        }
        (Some(n), _) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&mut ctx, cli.command)),
            Err(e) => Err(Failure {
                code: 2,
                kind: "computation",
                message: e.to_string(),
            }),
        },
        (None, _) => dispatch(&mut ctx, cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            let _ = if ctx.json {
                writeln!(ctx.err, "{}", json!({ "error": { "kind": f.kind, "message": f.message } }))
            } else {
                writeln!(ctx.err, "error: {}", f.message)
            };
            f.code
        }
    }
}

fn dispatch(ctx: &mut Ctx<'_>, command: Command) -> CmdResult {
    match command {
        Command::Init => {
            let p = Project::open_or_init(&ctx.project)?;
            let root = p.root().display().to_string();
            ctx.emit(&format!("initialized {root}\n"), &json!({ "root": root }))?;
            Ok(0)
        }
        Command::Ingest { files } => {
            let mut p = ctx.open()?;
            let report = p.ingest_images(&files)?;
            let mut text = String::new();
            for (id, path) in report.ids.iter().zip(files.iter().filter(|f| !report.failures.iter().any(|x| Path::new(&x.path) == *f))) {
                text.push_str(&format!("{id}\t{}\n", path.display()));
            }
            ctx.emit(&text, &report)?;
            if !ctx.json {
                for f in &report.failures {
                    let _ = writeln!(ctx.err, "skipped {}: {}", f.path, f.message);
                }
            }
            Ok(if report.failures.is_empty() { 0 } else { 1 })
        }
        Command::Label { target, csv } => {
            let mut p = ctx.open()?;
            let labels = read_label_csv(&p, &csv)?;
            p.set_labels(&target, &labels)?;
            let n = labels.len();
            ctx.emit(&format!("labeled {n} images for `{target}`\n"), &json!({ "target": target, "labeled": n }))?;
            Ok(0)
        }
        Command::Category(c) => category(ctx, c),
        Command::Proto(c) => proto(ctx, c),
        Command::Uid { a, b } => {
            let load = |path: &Path| -> Result<_, Failure> {
                let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
                decode_image(&bytes).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
            };
            let v = uid(&load(&a)?, &load(&b)?)?;
            let text = format!(
                "uid {}\nc(X) {}\nc(Y) {}\nc(XY) {}\n",
                v.value, v.left_complexity, v.right_complexity, v.joint_complexity
            );
            ctx.emit(&text, &v)?;
            Ok(0)
        }
        Command::Extract { target, audit } => {
            let p = ctx.open()?;
            let id = p.extract(target.as_deref(), audit, &|_, _| {})?;
            ctx.emit(&format!("{id}\n"), &json!({ "dataset_id": id }))?;
            Ok(0)
        }
        Command::Export { dataset, format, output } => {
            let format: ExportFormat = format.parse()?;
            let body = ctx.open()?.dataset(&dataset)?.export(format)?;
            match output {
                Some(path) => {
                    std::fs::write(&path, &body).map_err(|e| Failure::io(&path, e))?;
                    let shown = path.display().to_string();
                    ctx.emit(&format!("wrote {shown}\n"), &json!({ "output": shown }))?;
                }
                None => ctx.out.write_all(body.as_bytes()).map_err(|e| Failure::io(Path::new("stdout"), e))?,
            }
            Ok(0)
        }
        Command::Cv { dataset, algo, folds, seed } => {
            let algorithm = algo.algorithm()?;
            let (id, report) = ctx.open()?.run_cv(&dataset, algorithm, folds, seed)?;
            let text = format!("{}report {id}\n", report.render_table());
            ctx.emit(&text, &json!({ "report_id": id, "report": report }))?;
            Ok(0)
        }
        Command::Kmeans { dataset, k, seed } => {
            let (id, report) = ctx.open()?.run_kmeans(&dataset, k, seed)?;
            let text = format!("{}report {id}\n", report.render_table());
            ctx.emit(&text, &json!({ "report_id": id, "report": report }))?;
            Ok(0)
        }
        Command::Train { dataset, algo, output } => {
            let algorithm = algo.algorithm()?;
            let p = ctx.open()?;
            let d = p.dataset(&dataset)?;
            if !d.is_labeled() {
                return Err(Error::MissingLabels(
                    d.rows.iter().filter(|r| r.label.is_none()).map(|r| r.image_id.clone()).collect(),
                )
                .into());
            }
            let model = ModelFile {
                format_version: MODEL_FORMAT_VERSION,
                dataset_id: dataset,
                prototype_fingerprint: p.prototype_fingerprint(),
                categories: d.categories.clone(),
                classifier: train(algorithm, &d.rows)?,
            };
            let s = serde_json::to_string_pretty(&model).map_err(|e| Failure::from(Error::from(e)))?;
            std::fs::write(&output, s + "\n").map_err(|e| Failure::io(&output, e))?;
            let shown = output.display().to_string();
            ctx.emit(&format!("wrote {shown}\n"), &json!({ "output": shown }))?;
            Ok(0)
        }
        Command::Classify { image, model } => {
            let p = ctx.open()?;
            let model = read_model(&model)?;
            if model.prototype_fingerprint != p.prototype_fingerprint() {
                return Err(Failure::validation(
                    "model was trained on a different prototype set than the project's current one",
                ));
            }
            let bytes = std::fs::read(&image).map_err(|e| Failure::io(&image, e))?;
            let img = decode_image(&bytes).map_err(|e| Failure::validation(format!("{}: {e}", image.display())))?;
            let label = classify_image(&img, p.prototypes(), &model.classifier)?;
            ctx.emit(&format!("{label}\n"), &json!({ "label": label }))?;
            Ok(0)
        }
        Command::Serve { bind } => {
            let p = ctx.open()?;
            let _ = writeln!(ctx.err, "listening on http://{bind}");
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| Failure::from(Error::from(e)))?;
            rt.block_on(service::serve(p, bind)).map_err(|e| Failure::from(Error::from(e)))?;
            Ok(0)
        }
    }
}

fn category(ctx: &mut Ctx<'_>, c: CategoryCommand) -> CmdResult {
    let mut p = ctx.open()?;
    match c {
        CategoryCommand::Add { name } => {
            p.add_category(&name)?;
            ctx.emit(&format!("added category {}\n", name.trim()), &json!({ "name": name.trim() }))?;
        }
        CategoryCommand::List => {
            let ps = p.prototypes();
            let rows: Vec<_> = ps
                .categories()
                .iter()
                .map(|c| (c.index, c.name.clone(), ps.in_category(c.index).count()))
                .collect();
            let text: String = rows.iter().map(|(i, n, k)| format!("{i}\t{n}\t{k}\n")).collect();
            let value: Vec<_> = rows
                .iter()
                .map(|(i, n, k)| json!({ "index": i, "name": n, "prototypes": k }))
                .collect();
            ctx.emit(&text, &value)?;
        }
        CategoryCommand::Remove { name } => {
            p.remove_category(&name)?;
            ctx.emit(&format!("removed category {name}\n"), &json!({ "removed": name }))?;
        }
    }
    Ok(0)
}

fn proto(ctx: &mut Ctx<'_>, c: ProtoCommand) -> CmdResult {
    let mut p = ctx.open()?;
    match c {
        ProtoCommand::Add { image, rect, category } => {
            if p.prototypes().category_index(category.trim()).is_none() {
                p.add_category(&category)?;
            }
            let id = p.add_prototype(category.trim(), &image, rect)?;
            ctx.emit(&format!("{id}\n"), &json!({ "id": id }))?;
        }
        ProtoCommand::List => {
            let ps = p.prototypes();
            let mut text = String::new();
            let mut value = Vec::new();
            for proto in ps.ordered() {
                let cat = &ps.categories()[proto.category].name;
                let r = proto.rect;
                text.push_str(&format!(
                    "{}\t{cat}\t{}\t{},{},{},{}\t{}\n",
                    proto.id,
                    proto.source_id,
                    r.left,
                    r.top,
                    r.width,
                    r.height,
                    proto.complexity()
                ));
                value.push(json!({
                    "id": proto.id, "category": cat, "source_id": proto.source_id,
                    "rect": r, "complexity": proto.complexity(),
                }));
            }
            ctx.emit(&text, &value)?;
        }
        ProtoCommand::Remove { id } => {
            p.remove_prototype(&id)?;
            ctx.emit(&format!("removed {id}\n"), &json!({ "removed": id }))?;
        }
        ProtoCommand::Matrix => {
            let m = p.compute_matrix()?;
            let n = m.order();
            let mut text = String::new();
            text.push_str(&format!("\t{}\n", m.labels.join("\t")));
            for k in 0..n {
                let row: Vec<String> = (0..n).map(|l| format!("{:.4}", m.get(k, l))).collect();
                text.push_str(&format!("{}\t{}\n", m.labels[k], row.join("\t")));
            }
            ctx.emit(&text, &m)?;
        }
        ProtoCommand::Dendrogram { cut, linkage } => {
            let linkage: Linkage = linkage.parse()?;
            let report = p.dendrogram(cut, linkage)?;
            let verdict = if report.purity.pure { "PURE" } else { "IMPURE" };
            let mut text = format!("{}\n{}\n", report.newick, ctx.paint(verdict, report.purity.pure));
            for (i, c) in report.purity.clusters.iter().enumerate() {
                text.push_str(&format!(
                    "cluster {i} [{}]: {}\n",
                    c.majority.as_deref().unwrap_or("-"),
                    c.members.join(" ")
                ));
            }
            if !report.purity.offending.is_empty() {
                text.push_str(&format!("reconsider: {}\n", report.purity.offending.join(" ")));
            }
            ctx.emit(&text, &report)?;
            return Ok(if report.purity.pure { 0 } else { 1 });
        }
    }
    Ok(0)
}

/// `image,label` rows; `image` is an image id or the file name given at
/// ingestion. A first row naming no known image is taken as a header.
fn read_label_csv(p: &Project, path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let by_name: BTreeMap<&str, &str> = p
        .manifest()
        .images
        .iter()
        .filter_map(|(id, e)| e.name.as_deref().map(|n| (n, id.as_str())))
        .collect();
    let resolve = |key: &str| -> Option<String> {
        if p.manifest().images.contains_key(key) {
            return Some(key.to_string());
        }
        let base = Path::new(key).file_name().and_then(|s| s.to_str()).unwrap_or(key);
        by_name.get(key).or_else(|| by_name.get(base)).map(|s| s.to_string())
    };
    let mut labels = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
        if rec.len() < 2 {
            return Err(Failure::validation(format!("{}:{}: expected `image,label`", path.display(), line + 1)));
        }
        match resolve(&rec[0]) {
            Some(id) => {
                labels.insert(id, rec[1].to_string());
            }
            None if line == 0 => continue,
            None => {
                return Err(Error::UnknownId {
                    kind: "image",
                    id: rec[0].to_string(),
                }
                .into())
            }
        }
    }
    Ok(labels)
}

fn read_model(path: &Path) -> Result<ModelFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let model: ModelFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Failure::validation(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))?;
    if model.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: model.format_version,
            expected: MODEL_FORMAT_VERSION,
        }
        .into());
    }
    Ok(model)
}
