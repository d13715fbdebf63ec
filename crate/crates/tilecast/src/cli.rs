//! Batch front door: scene generation, graph building, sidecar codec,
//! experiment grids, and report summarization as subcommands of one thin
//! binary. Every command is deterministic given its inputs and seeds.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or input validation.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::semantics::{
    build_graph, decode_meta_sequence, encode_meta_sequence, CooccurrenceCounts, SemanticChunkMeta,
    SimilarityFile, META_BYTES,
};
use crate::sim::summary::{summarize, Report, DEFAULT_RESAMPLES};
use crate::sim::{run_session, PolicyKind, SaliencyMap, SessionMetrics, SimConfig};
use crate::traces::synth::{generate_network_trace, generate_synthetic, SyntheticSceneSpec};
use crate::traces::{parse_head_trace, parse_network_trace, HeadTrace, NetworkTrace};

#[derive(Debug, Parser)]
#[command(
    name = "tilecast",
    version,
    about = "Viewport-adaptive tile streaming toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the seed of the invoked command (scene seed for `generate`,
    /// report seed for `run`/`summarize`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory or file, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Bound on parallel grid arms for `run`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic head trace, chunk sidecars, and a saliency file
    /// from a scene spec.
    Generate(GenerateArgs),
    /// Build an association graph from co-occurrence and similarity files.
    Graph(GraphArgs),
    /// Encode or decode chunk sidecars.
    Meta(MetaArgs),
    /// Run an experiment grid and write per-run logs plus a paired report.
    Run(RunArgs),
    /// Recompute a report from previously written per-run metrics.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Scene spec JSON.
    #[arg(long)]
    scene: PathBuf,
    /// Trace length in seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Head-trace sample rate in Hz.
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
}

#[derive(Debug, Args)]
struct GraphArgs {
    /// Co-occurrence counts CSV (class-name header row and column).
    #[arg(long)]
    cooccur: PathBuf,
    /// Pairwise similarity CSV (same shape).
    #[arg(long)]
    similarity: PathBuf,
    /// Similarity weight λ in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Outgoing edges kept per class.
    #[arg(long, default_value_t = 4)]
    top_k: usize,
}

#[derive(Debug, Args)]
struct MetaArgs {
    #[command(subcommand)]
    action: MetaAction,
}

#[derive(Debug, Subcommand)]
enum MetaAction {
    /// JSON sidecar array -> concatenated 304-byte records.
    Encode {
        #[arg(long)]
        input: PathBuf,
        /// Print bytes/chunk and bitrate overhead.
        #[arg(long)]
        stats: bool,
    },
    /// Concatenated 304-byte records -> JSON sidecar array.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        stats: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    /// Directory previously produced by `run` (per-arm metrics subdirs).
    #[arg(long)]
    runs: PathBuf,
    /// Baseline arm name for paired deltas.
    #[arg(long)]
    baseline: String,
}

/// Parse argv and dispatch; returns the process exit code.
pub fn main_entry() -> u8 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

enum CliError {
    /// Bad arguments or invalid input files.
    Usage(anyhow::Error),
    /// The inputs were valid but the work failed.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    /// Bare `?` on input reading/parsing counts as a usage error.
    fn from(e: anyhow::Error) -> Self {
        CliError::Usage(e)
    }
}

fn usage<T>(r: anyhow::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::Usage)
}

fn runtime<T>(r: anyhow::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::Runtime)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let out = cli.out.clone();
    match cli.command {
        Command::Generate(args) => cmd_generate(&args, cli.seed, out),
        Command::Graph(args) => cmd_graph(&args, out),
        Command::Meta(args) => cmd_meta(&args, out),
        Command::Run(args) => cmd_run(&args, cli.seed, out, cli.jobs),
        Command::Summarize(args) => cmd_summarize(&args, cli.seed, out),
    }
}

fn read_to_string(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_generate(
    args: &GenerateArgs,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let text = usage(read_to_string(&args.scene))?;
    let mut spec = usage(SyntheticSceneSpec::from_json(&text).map_err(|e| anyhow!(e)))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if !(args.duration > 0.0 && args.rate > 0.0) {
        return Err(CliError::Usage(anyhow!(
            "duration ({}) and rate ({}) must be positive",
            args.duration,
            args.rate
        )));
    }
    let (head, metas) =
        runtime(generate_synthetic(&spec, args.duration, args.rate).map_err(|e| anyhow!(e)))?;
    let dir = out_dir(out);
    let head_path = dir.join("head_trace.csv");
    let metas_path = dir.join("metas.bin");
    let saliency_path = dir.join("saliency.csv");
    let manifest_path = dir.join("manifest.json");

    runtime(write_file(&head_path, head.to_csv().as_bytes()))?;
    let blob = runtime(encode_meta_sequence(&metas).map_err(|e| anyhow!(e)))?;
    runtime(write_file(&metas_path, &blob))?;
    runtime(write_file(
        &saliency_path,
        saliency_from_metas(&metas).as_bytes(),
    ))?;

    let manifest = serde_json::json!({
        "scene": args.scene.display().to_string(),
        "seed": spec.seed,
        "duration_s": args.duration,
        "rate_hz": args.rate,
        "samples": head.samples.len(),
        "chunks": metas.len(),
        "files": {
            "head_trace": "head_trace.csv",
            "metas": "metas.bin",
            "saliency": "saliency.csv",
        },
    });
    runtime(write_file(
        &manifest_path,
        (serde_json::to_string_pretty(&manifest).expect("manifest json") + "\n").as_bytes(),
    ))?;
    println!(
        "generated {} samples, {} chunks into {}",
        head.samples.len(),
        metas.len(),
        dir.display()
    );
    Ok(())
}

/// Per-tile saliency stand-in derived from the tile maps: a tile's score is
/// the number of classes present in it.
fn saliency_from_metas(metas: &[SemanticChunkMeta]) -> String {
    let mut out = String::from("chunk,tile_id,score\n");
    for (c, meta) in metas.iter().enumerate() {
        for (tile, &mask) in meta.tile_map.iter().enumerate() {
            out.push_str(&format!("{c},{tile},{}\n", mask.count_ones()));
        }
    }
    out
}

fn cmd_graph(args: &GraphArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let cooccur = usage(
        CooccurrenceCounts::parse_csv(&read_to_string(&args.cooccur)?).map_err(|e| anyhow!(e)),
    )?;
    let sim = usage(
        SimilarityFile::parse_csv(&read_to_string(&args.similarity)?).map_err(|e| anyhow!(e)),
    )?;
    let graph =
        usage(build_graph(&cooccur, &sim, args.lambda, args.top_k).map_err(|e| anyhow!(e)))?;
    let json = graph.to_json(&sim.0.vocab);
    let path = out.unwrap_or_else(|| PathBuf::from("graph.json"));
    runtime(write_file(
        &path,
        (serde_json::to_string_pretty(&json).expect("graph json") + "\n").as_bytes(),
    ))?;
    println!(
        "graph with {} classes written to {}",
        sim.0.vocab.len(),
        path.display()
    );
    Ok(())
}

fn codec_stats_line(chunks: usize) -> String {
    let kbps = META_BYTES as f64 * 8.0 / 1000.0;
    let pct = META_BYTES as f64 * 8.0 / 15.0e6 * 100.0;
    format!("{chunks} chunks, {META_BYTES} B/chunk, {kbps} Kbps, {pct:.3}% of a 15 Mbps stream")
}

fn cmd_meta(args: &MetaArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    match &args.action {
        MetaAction::Encode { input, stats } => {
            let text = usage(read_to_string(input))?;
            let metas: Vec<SemanticChunkMeta> =
                usage(serde_json::from_str(&text).context("parsing sidecar json"))?;
            let blob = usage(encode_meta_sequence(&metas).map_err(|e| anyhow!(e)))?;
            let path = out.unwrap_or_else(|| PathBuf::from("metas.bin"));
            runtime(write_file(&path, &blob))?;
            if *stats {
                println!("{}", codec_stats_line(metas.len()));
            }
            println!("{} bytes written to {}", blob.len(), path.display());
        }
        MetaAction::Decode { input, stats } => {
            let bytes =
                usage(fs::read(input).with_context(|| format!("reading {}", input.display())))?;
            let metas = usage(decode_meta_sequence(&bytes).map_err(|e| anyhow!(e)))?;
            let path = out.unwrap_or_else(|| PathBuf::from("metas.json"));
            runtime(write_file(
                &path,
                (serde_json::to_string_pretty(&metas).expect("meta json") + "\n").as_bytes(),
            ))?;
            if *stats {
                println!("{}", codec_stats_line(metas.len()));
            }
            println!("{} chunks written to {}", metas.len(), path.display());
        }
    }
    Ok(())
}

/// One experiment arm: a named policy plus optional per-arm overrides of the
/// shared config.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ArmSpec {
    pub name: String,
    pub policy: PolicyKind,
    #[serde(default)]
    pub fixed_margin_deg: Option<f64>,
    #[serde(default)]
    pub alpha_target: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub top_k_tiles: Option<usize>,
    #[serde(default)]
    pub sigma_min_deg: Option<f64>,
}

impl ArmSpec {
    fn apply(&self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        cfg.policy = self.policy;
        if let Some(v) = self.fixed_margin_deg {
            cfg.fixed_margin_deg = v;
        }
        if let Some(v) = self.alpha_target {
            cfg.alpha_target = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.top_k_tiles {
            cfg.top_k_tiles = v;
        }
        if let Some(v) = self.sigma_min_deg {
            cfg.sigma_min_deg = v;
        }
        cfg
    }
}

/// Link capacity source for synthetic experiments.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetSpec {
    File {
        file: PathBuf,
    },
    Constant {
        mbps: f64,
    },
    Random {
        min_mbps: f64,
        max_mbps: f64,
        step_s: f64,
    },
}

/// One input session in file mode.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TraceInput {
    pub head: PathBuf,
    pub net: PathBuf,
    pub metas: PathBuf,
    #[serde(default)]
    pub saliency: Option<PathBuf>,
}

/// Experiment grid: a shared config, arms, seeds, and either a scene spec
/// (synthetic mode) or explicit trace files.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub config: SimConfig,
    pub arms: Vec<ArmSpec>,
    pub baseline: String,
    #[serde(default)]
    pub scene: Option<PathBuf>,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default)]
    pub net: Option<NetSpec>,
    #[serde(default)]
    pub traces: Vec<TraceInput>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub saliency: Option<PathBuf>,
    #[serde(default = "default_report_seed")]
    pub report_seed: u64,
}

fn default_duration() -> f64 {
    120.0
}
fn default_rate() -> f64 {
    100.0
}
fn default_report_seed() -> u64 {
    7
}

struct PreparedRun {
    trace_id: String,
    seed: u64,
    head: HeadTrace,
    net: NetworkTrace,
    metas: Vec<SemanticChunkMeta>,
    saliency: Option<SaliencyMap>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let spec: Self = serde_json::from_str(text).context("parsing experiment spec")?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.arms.is_empty() {
            bail!("experiment needs at least one arm");
        }
        if !self.arms.iter().any(|a| a.name == self.baseline) {
            bail!("baseline `{}` is not one of the arms", self.baseline);
        }
        let mut names: Vec<&str> = self.arms.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.arms.len() {
            bail!("arm names must be unique");
        }
        match (&self.scene, self.traces.is_empty()) {
            (Some(_), true) if self.seeds.len() >= 2 => {}
            (Some(_), true) => bail!("synthetic mode needs at least 2 seeds for paired reports"),
            (None, false) => {}
            (Some(_), false) => bail!("give either a scene or trace files, not both"),
            (None, true) => bail!("give a scene spec or trace files"),
        }
        let wants_saliency = self.arms.iter().any(|a| a.policy == PolicyKind::SaliencyTopk);
        if wants_saliency
            && self.scene.is_none()
            && self.saliency.is_none()
            && self.traces.iter().any(|t| t.saliency.is_none())
        {
            bail!("a saliency_topk arm needs a saliency file for every trace");
        }
        // Referenced files must exist at validation time.
        let mut referenced: Vec<&PathBuf> = Vec::new();
        if let Some(s) = &self.scene {
            referenced.push(s);
        }
        if let Some(NetSpec::File { file }) = &self.net {
            referenced.push(file);
        }
        if let Some(s) = &self.saliency {
            referenced.push(s);
        }
        for t in &self.traces {
            referenced.extend([&t.head, &t.net, &t.metas]);
            if let Some(s) = &t.saliency {
                referenced.push(s);
            }
        }
        for path in referenced {
            if !path.exists() {
                bail!("referenced file does not exist: {}", path.display());
            }
        }
        Ok(())
    }

    fn prepare_runs(&self) -> anyhow::Result<Vec<PreparedRun>> {
        let mut runs = Vec::new();
        if let Some(scene_path) = &self.scene {
            let mut scene = SyntheticSceneSpec::from_json(&read_to_string(scene_path)?)
                .map_err(|e| anyhow!(e))?;
            let shared_saliency = match &self.saliency {
                Some(p) => {
                    Some(SaliencyMap::parse_csv(&read_to_string(p)?).map_err(|e| anyhow!(e))?)
                }
                None => None,
            };
            for &seed in &self.seeds {
                scene.seed = seed;
                let (head, metas) = generate_synthetic(&scene, self.duration_s, self.rate_hz)
                    .map_err(|e| anyhow!(e))?;
                let net = match &self.net {
                    Some(NetSpec::File { file }) => {
                        parse_network_trace(&read_to_string(file)?).map_err(|e| anyhow!(e))?
                    }
                    Some(NetSpec::Constant { mbps }) => NetworkTrace::constant(*mbps),
                    Some(NetSpec::Random {
                        min_mbps,
                        max_mbps,
                        step_s,
                    }) => {
                        generate_network_trace(*min_mbps, *max_mbps, *step_s, self.duration_s, seed)
                            .map_err(|e| anyhow!(e))?
                    }
                    None => NetworkTrace::constant(15.0),
                };
                // In synthetic mode the saliency baseline reads the scene's
                // own tile maps unless a file is supplied.
                let saliency = match &shared_saliency {
                    Some(s) => Some(s.clone()),
                    None => Some(
                        SaliencyMap::parse_csv(&saliency_from_metas(&metas))
                            .map_err(|e| anyhow!(e))?,
                    ),
                };
                runs.push(PreparedRun {
                    trace_id: head.session.clone(),
                    seed,
                    head,
                    net,
                    metas,
                    saliency,
                });
            }
        } else {
            for input in &self.traces {
                let mut head =
                    parse_head_trace(&read_to_string(&input.head)?).map_err(|e| anyhow!(e))?;
                let stem = input
                    .head
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "trace".into());
                head.session = stem.clone();
                let net =
                    parse_network_trace(&read_to_string(&input.net)?).map_err(|e| anyhow!(e))?;
                let bytes = fs::read(&input.metas)
                    .with_context(|| format!("reading {}", input.metas.display()))?;
                let metas = decode_meta_sequence(&bytes).map_err(|e| anyhow!(e))?;
                let saliency = match input.saliency.as_ref().or(self.saliency.as_ref()) {
                    Some(p) => {
                        Some(SaliencyMap::parse_csv(&read_to_string(p)?).map_err(|e| anyhow!(e))?)
                    }
                    None => None,
                };
                runs.push(PreparedRun {
                    trace_id: stem,
                    seed: 0,
                    head,
                    net,
                    metas,
                    saliency,
                });
            }
        }
        Ok(runs)
    }
}

/// Run the whole grid; used by both the CLI and the acceptance suite.
pub fn run_experiment(
    spec: &ExperimentSpec,
    jobs: Option<usize>,
) -> anyhow::Result<Vec<SessionMetrics>> {
    use rayon::prelude::*;

    let prepared = spec.prepare_runs()?;
    let mut tasks: Vec<(usize, usize)> = Vec::new();
    for arm_idx in 0..spec.arms.len() {
        for run_idx in 0..prepared.len() {
            tasks.push((arm_idx, run_idx));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("building thread pool")?;
    let results: Vec<anyhow::Result<SessionMetrics>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(arm_idx, run_idx)| {
                let arm = &spec.arms[arm_idx];
                let run = &prepared[run_idx];
                let mut cfg = arm.apply(&spec.config);
                cfg.seed = run.seed;
                let mut metrics =
                    run_session(&cfg, &run.head, &run.net, &run.metas, run.saliency.as_ref())
                        .with_context(|| {
                            format!("arm `{}` on trace `{}`", arm.name, run.trace_id)
                        })?;
                metrics.arm = arm.name.clone();
                metrics.trace_id = run.trace_id.clone();
                Ok(metrics)
            })
            .collect()
    });
    results.into_iter().collect()
}

fn cmd_run(
    args: &RunArgs,
    seed: Option<u64>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    let mut spec = usage(ExperimentSpec::from_json(&read_to_string(&args.spec)?))?;
    if let Some(s) = seed {
        spec.report_seed = s;
    }
    let runs = runtime(run_experiment(&spec, jobs))?;
    let report = runtime(
        summarize(&runs, &spec.baseline, DEFAULT_RESAMPLES, spec.report_seed)
            .map_err(|e| anyhow!(e)),
    )?;

    let dir = out_dir(out);
    for m in &runs {
        let base = dir.join(&m.arm);
        runtime(write_file(
            &base.join(format!("{}.metrics.json", m.trace_id)),
            (serde_json::to_string_pretty(m).expect("metrics json") + "\n").as_bytes(),
        ))?;
        runtime(write_file(
            &base.join(format!("{}.chunks.csv", m.trace_id)),
            m.chunk_log_csv().as_bytes(),
        ))?;
    }
    runtime(write_report(&dir.join("report.json"), &report))?;
    println!(
        "{} runs across {} arms; report at {}",
        runs.len(),
        spec.arms.len(),
        dir.join("report.json").display()
    );
    Ok(())
}

fn write_report(path: &Path, report: &Report) -> anyhow::Result<()> {
    write_file(
        path,
        (serde_json::to_string_pretty(report).expect("report json") + "\n").as_bytes(),
    )
}

fn cmd_summarize(
    args: &SummarizeArgs,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut runs: Vec<SessionMetrics> = Vec::new();
    let mut arm_dirs: Vec<PathBuf> = usage(
        fs::read_dir(&args.runs)
            .with_context(|| format!("reading {}", args.runs.display()))
            .map(|rd| {
                rd.filter_map(|e| e.ok())
                    .map(|e| e.path())
                    .filter(|p| p.is_dir())
                    .collect()
            }),
    )?;
    arm_dirs.sort();
    for arm_dir in arm_dirs {
        let mut files: Vec<PathBuf> = fs::read_dir(&arm_dir)
            .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()).collect())
            .unwrap_or_default();
        files.sort();
        for file in files {
            if file.extension().and_then(|e| e.to_str()) == Some("json")
                && file.to_string_lossy().ends_with(".metrics.json")
            {
                let m: SessionMetrics = usage(
                    serde_json::from_str(&read_to_string(&file)?)
                        .with_context(|| format!("parsing {}", file.display())),
                )?;
                runs.push(m);
            }
        }
    }
    if runs.is_empty() {
        return Err(CliError::Usage(anyhow!(
            "no *.metrics.json found under {}",
            args.runs.display()
        )));
    }
    let report_seed = seed.unwrap_or_else(default_report_seed);
    let report = runtime(
        summarize(&runs, &args.baseline, DEFAULT_RESAMPLES, report_seed).map_err(|e| anyhow!(e)),
    )?;
    let path = out.unwrap_or_else(|| args.runs.join("report.json"));
    runtime(write_report(&path, &report))?;
    println!("report over {} runs at {}", runs.len(), path.display());
    Ok(())
}
