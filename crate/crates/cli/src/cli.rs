//! Command-line definitions and their implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cogbench_core::analysis::{compare_runs, emit_report, score};
use cogbench_core::dataset::{
    export_sft, generate_dataset, read_manifest, rerender_dataset, DatasetSpec, EntrySpec, Split,
    TaskSource,
};
use cogbench_core::prompt::EvalMode;
use cogbench_core::stimuli::{load_asset_pack, synth_asset_pack, CanvasConfig};
use cogbench_core::ScoreTable;
use cogbench_harness::{
    load_results, outcomes, run_eval, ChatModel, EvalConfig, HttpChatModel, ModelEndpoint, Models, RetryPolicy, Retrying,
};
use serde::{Deserialize, Serialize};

use crate::service;
use crate::session::{session_report, Store};

/// Version accepted in endpoint config files.
pub const ENDPOINT_CONFIG_VERSION: u32 = 1;

/// First seed of the fine-tuning preset, far from the evaluation presets.
pub const FINETUNE_SEED_START: u64 = 1 << 32;

#[derive(Debug, Parser)]
#[command(name = "cogbench", version, about = "Procedural vision-language cognitive tasks: generate, evaluate, score")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stimulus asset packs.
    #[command(subcommand)]
    Assets(AssetsCommand),
    /// Generate a dataset from a spec file or a preset.
    Generate(GenerateArgs),
    /// Render an existing dataset's frames again, e.g. at another size.
    Render(RenderArgs),
    /// Run a dataset against a chat-completions endpoint.
    Eval(EvalArgs),
    /// Score one or more result directories.
    Score(ScoreArgs),
    /// Per-row accuracy change from a base run to a variant run.
    Compare(CompareArgs),
    /// Write supervised fine-tuning records for a dataset.
    ExportSft(ExportSftArgs),
    /// Serve the human-baseline API (and UI, if given).
    Serve(ServeArgs),
    /// Score human-baseline sessions.
    SessionReport(SessionReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum AssetsCommand {
    /// Write a synthetic asset pack (flat-colour sprites, 8 categories x 8 objects).
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Views rendered per object.
        #[arg(long, default_value_t = 4)]
        views: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Every named kind, for one subject's session (22 kinds x trials-per-task).
    HumanBaseline,
    /// Every named kind, evaluation split.
    AllKinds,
    /// Randomly parameterised composite tasks, training split.
    Finetune,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Asset pack directory.
    #[arg(long)]
    pub pack: PathBuf,
    /// Dataset output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset spec (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Trials per task (presets only).
    #[arg(long, default_value_t = 5)]
    pub trials_per_task: usize,
    /// Distinct tasks per kind (presets only).
    #[arg(long, default_value_t = 1)]
    pub tasks_per_kind: usize,
    /// First seed (presets only). Defaults to 0, or 2^32 for the fine-tuning preset.
    #[arg(long)]
    pub seed_start: Option<u64>,
    /// Override the split (presets only).
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Dataset id (presets only). Defaults to the preset name.
    #[arg(long)]
    pub id: Option<String>,
    /// Frame width in pixels.
    #[arg(long)]
    pub width: Option<u32>,
    /// Frame height in pixels.
    #[arg(long)]
    pub height: Option<u32>,
    /// Existing datasets whose seed ranges must not overlap this one across splits.
    #[arg(long = "disjoint-from")]
    pub disjoint_from: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Eval,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Eval => Split::Eval,
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// The pack the dataset was generated with.
    #[arg(long)]
    pub pack: PathBuf,
    /// Output directory. Defaults to rendering in place.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Base,
    Pc,
    Sc,
    #[value(name = "sc-i")]
    ScI,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> EvalMode {
        match m {
            ModeArg::Base => EvalMode::Base,
            ModeArg::Pc => EvalMode::Pc,
            ModeArg::Sc => EvalMode::Sc,
            ModeArg::ScI => EvalMode::ScI,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Result directory; existing error-free results are kept (resume).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "base")]
    pub mode: ModeArg,
    /// Endpoint config file (JSON). Replaces the endpoint flags below.
    #[arg(long, conflicts_with_all = ["base_url", "model"])]
    pub config: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible API, e.g. https://api.openai.com/v1.
    #[arg(long, required_unless_present = "config")]
    pub base_url: Option<String>,
    #[arg(long, required_unless_present = "config")]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long, default_value_t = 1024)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f32,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    /// Retries per request on rate limits, timeouts and server errors.
    #[arg(long, default_value_t = 5)]
    pub max_retries: u32,
    /// Model that captions frames in SC and SC-I modes. Defaults to the answering model.
    #[arg(long)]
    pub captioner_model: Option<String>,
    /// Model that extracts the final answer from responses. Without it a
    /// text match is used.
    #[arg(long)]
    pub extractor_model: Option<String>,
    /// Base URL for the extractor. Defaults to --base-url.
    #[arg(long)]
    pub extractor_base_url: Option<String>,
    /// API key variable for the extractor. Defaults to --api-key-env.
    #[arg(long)]
    pub extractor_api_key_env: Option<String>,
    /// Trials in flight at once.
    #[arg(long, default_value_t = 8)]
    pub parallelism: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Result directory, optionally `name=dir`. Repeat to put several runs in one report.
    #[arg(long, required = true)]
    pub results: Vec<String>,
    /// Report directory (CSV and Markdown).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "scores")]
    pub stem: String,
    /// Drop errored trials instead of counting them wrong.
    #[arg(long)]
    pub exclude_errors: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub variant: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "compare")]
    pub stem: String,
    #[arg(long)]
    pub exclude_errors: bool,
}

#[derive(Debug, Args)]
pub struct ExportSftArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output JSON file; very large exports are split into numbered shards.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory holding datasets, one subdirectory each.
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Session log directory. Defaults to <data-dir>/sessions.
    #[arg(long)]
    pub sessions: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Built UI assets to serve at /.
    #[arg(long)]
    pub ui: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SessionReportArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Defaults to <data-dir>/sessions.
    #[arg(long)]
    pub sessions: Option<PathBuf>,
    /// Sessions to pool. Repeatable; defaults to all.
    #[arg(long)]
    pub id: Vec<String>,
    /// Also pool sessions that are not finished.
    #[arg(long)]
    pub include_partial: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "human")]
    pub stem: String,
}

/// Model endpoints for `eval --config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub version: u32,
    pub answer: ModelEndpoint,
    #[serde(default)]
    pub captioner: Option<ModelEndpoint>,
    #[serde(default)]
    pub extractor: Option<ModelEndpoint>,
}

impl EndpointConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: EndpointConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.version != ENDPOINT_CONFIG_VERSION {
            bail!("{}: config version {} is not supported (expected {ENDPOINT_CONFIG_VERSION})", path.display(), cfg.version);
        }
        Ok(cfg)
    }

    fn from_flags(a: &EvalArgs) -> Result<Self> {
        let (Some(base), Some(model)) = (&a.base_url, &a.model) else {
            bail!("--base-url and --model are required without --config");
        };
        let mut answer = ModelEndpoint::new(base.clone(), model.clone());
        answer.api_key_env = a.api_key_env.clone();
        answer.max_tokens = a.max_tokens;
        answer.caption_max_tokens = a.max_tokens;
        answer.temperature = a.temperature;
        answer.timeout_secs = a.timeout_secs;
        answer.max_retries = a.max_retries;
        let captioner = a.captioner_model.as_ref().map(|m| ModelEndpoint { model: m.clone(), ..answer.clone() });
        let extractor = a.extractor_model.as_ref().map(|m| ModelEndpoint {
            model: m.clone(),
            base_url: a.extractor_base_url.clone().unwrap_or_else(|| base.clone()),
            api_key_env: a.extractor_api_key_env.clone().or_else(|| a.api_key_env.clone()),
            max_tokens: 64,
            ..answer.clone()
        });
        Ok(EndpointConfig { version: ENDPOINT_CONFIG_VERSION, answer, captioner, extractor })
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Assets(AssetsCommand::Synth { out, seed, views }) => {
            let pack = synth_asset_pack(seed, &out, views).context("writing asset pack")?;
            println!("wrote {} images to {} (digest {})", pack.image_count(), out.display(), pack.digest());
        }
        Command::Generate(a) => generate(a)?,
        Command::Render(a) => {
            let pack = load_asset_pack(&a.pack).context("loading asset pack")?;
            let mut canvas = read_manifest(&a.dataset).context("reading dataset manifest")?.canvas;
            apply_size(&mut canvas, a.width, a.height);
            let out = a.out.unwrap_or_else(|| a.dataset.clone());
            let m = rerender_dataset(&a.dataset, &pack, &canvas, &out).context("rendering")?;
            println!("rendered {} trials at {}x{} into {}", m.trial_count, canvas.width, canvas.height, out.display());
        }
        Command::Eval(a) => eval(a)?,
        Command::Score(a) => {
            let mut runs = Vec::new();
            for r in &a.results {
                let (name, dir) = match r.split_once('=') {
                    Some((n, d)) => (n.to_string(), PathBuf::from(d)),
                    None => (run_name(Path::new(r)), PathBuf::from(r)),
                };
                runs.push((name, score_dir(&dir, a.exclude_errors)?));
            }
            let tables: Vec<(&str, &ScoreTable)> = runs.iter().map(|(n, t)| (n.as_str(), t)).collect();
            let files = emit_report(&a.out, &a.stem, &tables, &[])?;
            for (name, t) in &runs {
                print_table(name, t);
            }
            print_files(&files);
        }
        Command::Compare(a) => {
            let base = score_dir(&a.base, a.exclude_errors)?;
            let variant = score_dir(&a.variant, a.exclude_errors)?;
            let delta = compare_runs(&base, &variant)?;
            let (bn, vn) = (run_name(&a.base), run_name(&a.variant));
            let dn = format!("{vn} - {bn}");
            let files = emit_report(&a.out, &a.stem, &[(&bn, &base), (&vn, &variant)], &[(&dn, &delta)])?;
            for r in &delta.rows {
                println!("{:<16} {}", r.label, r.display());
            }
            print_files(&files);
        }
        Command::ExportSft(a) => {
            let files = export_sft(&a.dataset, &a.out).context("exporting")?;
            print_files(&files);
        }
        Command::Serve(a) => {
            let sessions = a.sessions.unwrap_or_else(|| a.data_dir.join("sessions"));
            let store = Arc::new(Store::open(&a.data_dir, &sessions)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(store, &a.addr, a.ui)).with_context(|| format!("serving on {}", a.addr))?;
        }
        Command::SessionReport(a) => {
            let sessions = a.sessions.unwrap_or_else(|| a.data_dir.join("sessions"));
            let (table, n) = session_report(&a.data_dir, &sessions, &a.id, a.include_partial)?;
            let files = emit_report(&a.out, &a.stem, &[("human", &table)], &[])?;
            println!("{n} answers");
            print_table("human", &table);
            print_files(&files);
        }
    }
    Ok(())
}

fn apply_size(c: &mut CanvasConfig, width: Option<u32>, height: Option<u32>) {
    if let Some(w) = width {
        c.width = w;
    }
    if let Some(h) = height {
        c.height = h;
    }
}

pub fn preset_spec(a: &GenerateArgs, preset: Preset) -> DatasetSpec {
    let name = match preset {
        Preset::HumanBaseline => "human-baseline",
        Preset::AllKinds => "all-kinds",
        Preset::Finetune => "finetune",
    };
    let id = a.id.clone().unwrap_or_else(|| name.to_string());
    match preset {
        Preset::HumanBaseline | Preset::AllKinds => {
            let split = a.split.map(Split::from).unwrap_or(Split::Eval);
            DatasetSpec::all_kinds(&id, split, a.tasks_per_kind, a.trials_per_task, a.seed_start.unwrap_or(0))
        }
        Preset::Finetune => DatasetSpec {
            id,
            split: a.split.map(Split::from).unwrap_or(Split::Train),
            seed_start: a.seed_start.unwrap_or(FINETUNE_SEED_START),
            entries: vec![EntrySpec { source: TaskSource::finetune(), n_tasks: a.tasks_per_kind, n_trials: a.trials_per_task }],
            canvas: CanvasConfig::default(),
        },
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut spec = match (&a.spec, a.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<DatasetSpec>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(p)) => preset_spec(&a, p),
        (None, None) => bail!("either --spec or --preset is required"),
    };
    apply_size(&mut spec.canvas, a.width, a.height);
    spec.validate()?;
    let range = spec.seed_range()?;
    for d in &a.disjoint_from {
        let m = read_manifest(d).with_context(|| format!("reading manifest of {}", d.display()))?;
        if m.split != spec.split && m.seed_range.overlaps(&range) {
            bail!("seeds {}..{} overlap dataset `{}` ({}..{}) from the other split", range.start, range.end, m.id, m.seed_range.start, m.seed_range.end);
        }
    }
    let pack = load_asset_pack(&a.pack).context("loading asset pack")?;
    let m = generate_dataset(&spec, &pack, &a.out).context("generating dataset")?;
    println!("wrote {} trials to {} (manifest {})", m.trial_count, a.out.display(), m.digest());
    Ok(())
}

fn http_model(ep: &ModelEndpoint) -> Result<Retrying<HttpChatModel>> {
    ep.validate()?;
    let model = HttpChatModel::new(ep.clone()).with_context(|| format!("setting up endpoint for {}", ep.model))?;
    Ok(Retrying::new(model, RetryPolicy::with_max_retries(ep.max_retries)))
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg_file = match &a.config {
        Some(p) => EndpointConfig::load(p)?,
        None => EndpointConfig::from_flags(&a)?,
    };
    let answer = http_model(&cfg_file.answer)?;
    let captioner = cfg_file.captioner.as_ref().map(http_model).transpose()?;
    let extractor = cfg_file.extractor.as_ref().map(http_model).transpose()?;
    let models = Models {
        answer: &answer,
        captioner: captioner.as_ref().map(|m| m as &dyn ChatModel),
        extractor: extractor.as_ref().map(|m| m as &dyn ChatModel),
    };
    let mut cfg = EvalConfig::new(a.mode.into());
    cfg.parallelism = a.parallelism;
    cfg.max_tokens = cfg_file.answer.max_tokens;
    cfg.caption_max_tokens = cfg_file.captioner.as_ref().unwrap_or(&cfg_file.answer).caption_max_tokens;
    cfg.temperature = cfg_file.answer.temperature;
    let s = run_eval(&a.dataset, &a.out, models, &cfg)?;
    println!(
        "{} {}: {}/{} correct ({:.2}%), {} errored, {} unscorable, {} requested",
        s.model,
        s.mode,
        s.correct,
        s.total,
        100.0 * s.accuracy,
        s.errored,
        s.unscorable,
        s.requested
    );
    Ok(())
}

fn run_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string())
}

fn score_dir(dir: &Path, exclude_errors: bool) -> Result<ScoreTable> {
    let results = load_results(dir)?;
    let table = score(outcomes(&results, exclude_errors)).with_context(|| format!("scoring {}", dir.display()))?;
    Ok(table)
}

fn print_table(name: &str, t: &ScoreTable) {
    println!("{name}");
    for c in t.rows() {
        println!("  {:<16} {:>14}  (n={})", c.label, c.display(), c.n);
    }
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}
