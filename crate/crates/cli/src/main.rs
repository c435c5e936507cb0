//! `clickseg`: the workbench command line.
//!
//! Every failure ends with a single JSON object on stderr,
//! `{"error": message, "kind": tag}`, and a nonzero exit code
//! (2 for usage errors, 1 otherwise).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clickseg::bench::{
    plot_svg, run_protocol, BenchSample, Dataset, ExternalSegmenter, NetSegmenter, OracleStub, ProtocolConfig,
    Segmenter, ZeroStub,
};
use clickseg::clicks::place_click;
use clickseg::guided::{guided_filter_image, GuidedParams};
use clickseg::imgcore::{binarize, load_image, load_mask, load_soft_mask};
use clickseg::metrics::BenchmarkReport;
use clickseg::net::{load_checkpoint, save_checkpoint, MicroSegNet, NetConfig};
use clickseg::synth::{
    builtin, generate_manifest, list_assets, manifest_from_jsonl, manifest_to_jsonl, AssetLibrary, ManifestEntry,
    SynthConfig,
};
use clickseg::train::{TrainConfig, TrainMode, TrainSample, Trainer};

#[derive(Parser)]
#[command(name = "clickseg", version, about = "Click-driven interactive segmentation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the click protocol on a dataset and write a report.
    Bench(BenchArgs),
    /// Train a network on a composite manifest.
    Train(TrainArgs),
    /// Draw a composite manifest, or export the built-in asset pack.
    Synthgen(SynthgenArgs),
    /// Refine a soft mask with the guided filter.
    Refine(RefineArgs),
    /// Print the next simulated click for a prediction.
    SimulateClicks(SimulateArgs),
    /// Start the annotation server.
    Serve(ServeArgs),
    /// Plot mean IoU per click for one or more reports.
    ReportPlot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stub {
    Oracle,
    Zero,
}

#[derive(Args)]
struct DataSource {
    /// Dataset directory with `images/<id>.png` and `masks/<id>.png`.
    #[arg(long, conflicts_with = "manifest")]
    dataset: Option<PathBuf>,
    /// Composite manifest (JSON lines) rendered on the fly.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Base directory for relative asset paths in the manifest.
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Composite side length.
    #[arg(long, default_value_t = 96)]
    crop: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataSource,
    /// Network checkpoint.
    #[arg(long, conflicts_with_all = ["external", "stub"])]
    ckpt: Option<PathBuf>,
    /// External segmenter program speaking the JSON-lines adapter protocol.
    #[arg(long, conflicts_with = "stub")]
    external: Option<PathBuf>,
    /// Argument passed to the external program (repeatable).
    #[arg(long = "external-arg", allow_hyphen_values = true)]
    external_args: Vec<String>,
    /// Built-in reference segmenter.
    #[arg(long, value_enum)]
    stub: Option<Stub>,
    #[arg(long, default_value_t = 20)]
    clicks: usize,
    /// Guided refinement of network output; defaults to the checkpoint's setting.
    #[arg(long, value_enum)]
    guided: Option<Toggle>,
    /// Method tag stored in the report.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-click curves as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, default_value_t = 96)]
    crop: usize,
    #[arg(long, default_value = "iterative")]
    mode: String,
    /// Clicks per image in iterative mode.
    #[arg(long, default_value_t = 4)]
    clicks: usize,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lr: Option<f64>,
    /// Start from this checkpoint instead of a fresh network.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Width multiplier of a fresh network.
    #[arg(long, default_value_t = 0.25)]
    width: f64,
    /// Train on the composites as rendered, without crops or color jitter.
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthgenArgs {
    /// Foreground directory of RGBA PNGs, or `builtin`.
    #[arg(long, required_unless_present_any = ["toy", "export_pack"])]
    fg: Option<String>,
    /// Background directory, or `builtin`.
    #[arg(long, required_unless_present_any = ["toy", "export_pack"])]
    bg: Option<String>,
    #[arg(long, required_unless_present_any = ["toy", "export_pack"])]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 96)]
    crop: usize,
    /// Manifest path, or the output directory with `--toy`.
    #[arg(long, required_unless_present = "export_pack")]
    out: Option<PathBuf>,
    /// Also render the composites as a dataset directory.
    #[arg(long)]
    render: Option<PathBuf>,
    /// Write the toy split (`train.jsonl`, `heldout.jsonl`) into `--out`.
    #[arg(long, conflicts_with_all = ["fg", "bg", "n", "export_pack"])]
    toy: bool,
    /// Write the built-in pack as `fg/` and `bg/` PNGs under this directory.
    #[arg(long, conflicts_with_all = ["fg", "bg", "n"])]
    export_pack: Option<PathBuf>,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    guide: PathBuf,
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Current prediction; binarized at 0.5.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Pixels outside this mask are ignored.
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Ordinal of the click.
    #[arg(long, default_value_t = 1)]
    k: u32,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Port; 0 picks a free one.
    #[arg(long, default_value_t = 8008)]
    port: u16,
    #[arg(long, value_enum, default_value = "off")]
    guided: Toggle,
    /// Static UI directory served at `/`.
    #[arg(long)]
    ui: Option<PathBuf>,
    /// Model replicas shared by all sessions.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = clickseg_serve::DEFAULT_MAX_SIDE)]
    max_side: usize,
    #[arg(long, default_value_t = clickseg_serve::DEFAULT_HISTORY_CAP)]
    history: usize,
}

#[derive(Args)]
struct PlotArgs {
    /// Report JSON files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }
}

impl From<clickseg::Error> for CliError {
    fn from(e: clickseg::Error) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::new("io", format!("{}: {e}", path.display()))
}

type CliResult<T = ()> = Result<T, CliError>;

fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

fn read_manifest(path: &Path) -> CliResult<Vec<ManifestEntry>> {
    let entries = manifest_from_jsonl(&read_to_string(path)?)?;
    if entries.is_empty() {
        return Err(CliError::new("invalid_argument", format!("{} has no entries", path.display())));
    }
    Ok(entries)
}

fn render_dataset(entries: &[ManifestEntry], lib: &AssetLibrary, crop: usize) -> CliResult<Dataset> {
    let samples = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let s = lib.render(e, crop)?;
            Ok(BenchSample {
                id: e.sample_id(i),
                image: s.image,
                gt: s.mask,
                valid: None,
            })
        })
        .collect::<CliResult<_>>()?;
    Ok(Dataset { samples })
}

fn load_data(src: &DataSource) -> CliResult<Dataset> {
    match (&src.dataset, &src.manifest) {
        (Some(dir), _) => Ok(Dataset::load(dir)?),
        (None, Some(m)) => render_dataset(&read_manifest(m)?, &AssetLibrary::new(src.assets.clone()), src.crop),
        (None, None) => Err(CliError::new("usage", "one of --dataset or --manifest is required")),
    }
}

fn bench(args: BenchArgs) -> CliResult {
    if args.ckpt.is_none() && args.external.is_none() && args.stub.is_none() {
        return Err(CliError::new("usage", "one of --ckpt, --external or --stub is required"));
    }
    let data = load_data(&args.data)?;
    if data.samples.is_empty() {
        return Err(CliError::new("invalid_argument", "dataset is empty"));
    }
    let (segmenter, method, guided): (Box<dyn Segmenter>, String, bool) = match (&args.ckpt, &args.external, args.stub) {
        (Some(ckpt), _, _) => {
            let mut net: MicroSegNet<f32> = load_checkpoint(ckpt)?;
            match args.guided {
                Some(Toggle::On) => net.config_mut().guided = Some(net.config().guided.unwrap_or_default()),
                Some(Toggle::Off) => net.config_mut().guided = None,
                None => {}
            }
            let guided = net.config().guided.is_some();
            let tag = ckpt.file_stem().map_or("clickseg".into(), |s| s.to_string_lossy().into_owned());
            (Box::new(NetSegmenter { net }), tag, guided)
        }
        (None, Some(program), _) => {
            let tag = program.file_stem().map_or("external".into(), |s| s.to_string_lossy().into_owned());
            (Box::new(ExternalSegmenter::spawn(program, &args.external_args)?), tag, false)
        }
        (None, None, Some(Stub::Oracle)) => (Box::new(OracleStub::new(&data)), "oracle".into(), false),
        (None, None, Some(Stub::Zero)) => (Box::new(ZeroStub), "zero".into(), false),
        (None, None, None) => unreachable!("checked above"),
    };
    let cfg = ProtocolConfig {
        method: args.method.unwrap_or(method),
        max_clicks: args.clicks,
        guided,
        seed: args.seed,
        ..ProtocolConfig::default()
    };
    let report = run_protocol(segmenter.as_ref(), &data, &cfg)?;
    write_file(&args.out, report.to_json())?;
    if let Some(csv) = &args.csv {
        write_file(csv, report.curves_csv())?;
    }
    println!(
        "{}",
        serde_json::json!({
            "method": report.config.method,
            "images": report.images.len(),
            "auc": report.auc.mean,
            "out": args.out,
        })
    );
    Ok(())
}

fn train(args: TrainArgs) -> CliResult {
    let mode: TrainMode = args.mode.parse()?;
    let lib = AssetLibrary::new(args.assets.clone());
    let samples: Vec<TrainSample> = render_dataset(&read_manifest(&args.manifest)?, &lib, args.crop)?
        .samples
        .into_iter()
        .map(|s| TrainSample {
            id: s.id,
            image: s.image,
            gt: s.gt,
        })
        .collect();
    let net = match &args.resume {
        Some(path) => load_checkpoint(path)?,
        None => MicroSegNet::<f32>::new(NetConfig {
            width_multiplier: args.width,
            init_seed: args.seed,
            ..NetConfig::default()
        }),
    };
    let mut config = TrainConfig {
        clicks_per_image: args.clicks,
        seed: args.seed,
        mode,
        ..TrainConfig::default()
    }
    .with_epochs(args.epochs);
    if let Some(lr) = args.lr {
        config.lr = lr;
    }
    if args.no_augment {
        config.augment = None;
    } else if let Some(a) = config.augment.as_mut() {
        a.crop = a.crop.min(args.crop);
    }
    let mut trainer = Trainer::new(net, config)?;
    let stdout = std::io::stdout();
    let mut log_err = None;
    trainer.run(&samples, &mut |rec| {
        let mut out = stdout.lock();
        if let Err(e) = serde_json::to_writer(&mut out, rec).map_err(std::io::Error::from).and_then(|_| writeln!(out)) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(CliError::new("io", format!("progress log: {e}")));
    }
    save_checkpoint(&trainer.net, &args.out)?;
    println!("{}", serde_json::json!({ "done": true, "epochs": trainer.epoch(), "out": args.out }));
    Ok(())
}

fn asset_ids(spec: &str, kind: &str) -> CliResult<Vec<String>> {
    if spec == "builtin" {
        let f = if kind == "fg" { builtin::fg_id } else { builtin::bg_id };
        return Ok((0..builtin::PACK_SIZE).map(f).collect());
    }
    let files = list_assets(Path::new(spec))?;
    if files.is_empty() {
        return Err(CliError::new("invalid_argument", format!("no PNG/PNM assets in {spec}")));
    }
    Ok(files.into_iter().map(|p| p.to_string_lossy().into_owned()).collect())
}

fn synthgen(args: SynthgenArgs) -> CliResult {
    if let Some(dir) = &args.export_pack {
        builtin::export(&dir.join("fg"), &dir.join("bg"))?;
        println!("{}", serde_json::json!({ "exported": builtin::PACK_SIZE, "out": dir }));
        return Ok(());
    }
    let out = args.out.as_ref().expect("clap requires --out");
    let lib = AssetLibrary::default();
    if args.toy {
        let (train, heldout) = builtin::toy_split(args.seed)?;
        write_file(&out.join("train.jsonl"), manifest_to_jsonl(&train))?;
        write_file(&out.join("heldout.jsonl"), manifest_to_jsonl(&heldout))?;
        if let Some(dir) = &args.render {
            render_dataset(&heldout, &lib, args.crop)?.save(dir)?;
        }
        println!("{}", serde_json::json!({ "train": train.len(), "heldout": heldout.len(), "out": out }));
        return Ok(());
    }
    let (fg, bg, n) = match (&args.fg, &args.bg, args.n) {
        (Some(fg), Some(bg), Some(n)) => (fg, bg, n),
        _ => return Err(CliError::new("usage", "--fg, --bg and --n are required")),
    };
    let config = SynthConfig {
        crop: args.crop,
        ..SynthConfig::default()
    };
    let entries = generate_manifest(&lib, &asset_ids(fg, "fg")?, &asset_ids(bg, "bg")?, n, args.seed, &config)?;
    write_file(out, manifest_to_jsonl(&entries))?;
    if let Some(dir) = &args.render {
        render_dataset(&entries, &lib, args.crop)?.save(dir)?;
    }
    println!("{}", serde_json::json!({ "entries": entries.len(), "out": out }));
    Ok(())
}

fn refine(args: RefineArgs) -> CliResult {
    let guide = load_image(&args.guide)?;
    let input = load_soft_mask(&args.input)?;
    let refined = guided_filter_image(&guide, &input, GuidedParams { radius: args.r, eps: args.eps })?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    refined.save_png(&args.out)?;
    Ok(())
}

fn simulate_clicks(args: SimulateArgs) -> CliResult {
    let pred = binarize(&load_soft_mask(&args.pred)?, 0.5);
    let gt = load_mask(&args.gt)?;
    let valid = args.valid.as_deref().map(load_mask).transpose()?;
    let placed = place_click(&pred, &gt, valid.as_ref())?;
    println!("{}", serde_json::to_string(&placed.click.with_ordinal(args.k)).expect("click serializes"));
    Ok(())
}

fn serve(args: ServeArgs) -> CliResult {
    let mut net: MicroSegNet<f32> = load_checkpoint(&args.ckpt)?;
    // Refinement is a per-session setting in the server.
    let ckpt_guided = net.config_mut().guided.take();
    let guided = match args.guided {
        Toggle::On => Some(ckpt_guided.unwrap_or_default()),
        Toggle::Off => None,
    };
    let models: Vec<Box<dyn Segmenter + Send>> = (0..args.workers.max(1))
        .map(|_| Box::new(NetSegmenter { net: net.clone() }) as Box<dyn Segmenter + Send>)
        .collect();
    let config = clickseg_serve::ServerConfig {
        guided,
        max_side: args.max_side,
        history_cap: args.history,
        ui_dir: args.ui,
    };
    let state = clickseg_serve::AppState::new(config, clickseg_serve::ModelPool::new(models));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new("io", e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| CliError::new("io", format!("bind {}:{}: {e}", args.host, args.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::new("io", e.to_string()))?;
        println!("{}", serde_json::json!({ "listening": addr.to_string() }));
        std::io::stdout().flush().ok();
        clickseg_serve::serve(listener, state)
            .await
            .map_err(|e| CliError::new("io", e.to_string()))
    })
}

fn report_plot(args: PlotArgs) -> CliResult {
    let reports = args
        .reports
        .iter()
        .map(|p| Ok(BenchmarkReport::from_json(&read_to_string(p)?)?))
        .collect::<CliResult<Vec<_>>>()?;
    write_file(&args.out, plot_svg(&reports))
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Bench(a) => bench(a),
        Command::Train(a) => train(a),
        Command::Synthgen(a) => synthgen(a),
        Command::Refine(a) => refine(a),
        Command::SimulateClicks(a) => simulate_clicks(a),
        Command::Serve(a) => serve(a),
        Command::ReportPlot(a) => report_plot(a),
    }
}

fn fail(e: CliError, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": e.message, "kind": e.kind }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CliError::new("usage", e.render().to_string().trim_end()), 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e, 1),
    }
}
