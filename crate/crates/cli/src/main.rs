//! `rlt`: run-length video tokenizer command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rlt_core::bench::{run_bench, BenchOptions};
use rlt_core::io::{
    derived_path, load_video, probe_channels, read_frame_pipe, read_packed, read_tokens, write_packed, write_tokens,
};
use rlt_core::refmodel::{count_flops, ModelSpec, ToyTransformer};
use rlt_core::stats::{analyze, sweep_tau, tokenize_clips, FileClip, DEFAULT_TAU_GRID};
use rlt_core::testkit::{gen_video, SyntheticKind, SyntheticSpec};
use rlt_core::viz::{render_overlay, save_overlay, OverlayStyle};
use rlt_core::{
    pack, pack_with_ids, unpack, DiffMetric, MaskForm, NormalizationParams, PackedBatch, Result, RltError, Threshold,
    TokenSequence, TokenizerRegistry, TokenizerSettings, TubeletConfig, VideoDims,
};

/// Exit status when packed and per-example logits disagree.
const EXIT_EQUIVALENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "rlt", version, about = "Run-length tokenization for video transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize videos (RLTV1 files or image directories) into RLTT1 files.
    Tokenize(TokenizeArgs),
    /// Pack RLTT1 files into one RLTP1 batch.
    Pack(PackArgs),
    /// Split an RLTP1 batch back into RLTT1 files.
    Unpack(UnpackArgs),
    /// Per-video and aggregate token reduction.
    Stats(StatsArgs),
    /// Mean token count and reduction over a grid of thresholds.
    Sweep(SweepArgs),
    /// Render frames with pruned tubelets grayed out.
    Viz(VizArgs),
    /// Run the toy transformer on packed and unpacked inputs and compare.
    Refdemo(RefdemoArgs),
    /// Time tokenization against a toy forward pass.
    Bench(BenchArgs),
    /// List the registered tokenizer strategies.
    Strategies,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormKind {
    /// ImageNet mean/std (3 channels)
    Imagenet,
    /// No normalization
    None,
    /// Values from --mean and --std
    Custom,
}

#[derive(Args, Clone)]
struct TokenizerArgs {
    /// Difference threshold; tubelets below it are pruned
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    tau: f64,
    /// Patch difference reduction
    #[arg(long, default_value = "mean", value_parser = ["mean", "sum"])]
    metric: String,
    /// Spatial patch size in pixels (square unless --patch-y is given)
    #[arg(long, default_value_t = 16)]
    patch: usize,
    /// Patch height, if different from --patch
    #[arg(long)]
    patch_y: Option<usize>,
    /// Frames per tubelet
    #[arg(long, default_value_t = 2)]
    tubelet: usize,
    #[arg(long, value_enum, default_value_t = NormKind::Imagenet)]
    norm: NormKind,
    /// Per-channel means for --norm custom, comma separated
    #[arg(long, value_delimiter = ',')]
    mean: Vec<f32>,
    /// Per-channel standard deviations for --norm custom, comma separated
    #[arg(long, value_delimiter = ',')]
    std: Vec<f32>,
    /// Tokenizer strategy (see `rlt strategies`)
    #[arg(long, default_value = "rlt")]
    strategy: String,
    /// Fraction of tokens dropped by the random strategies
    #[arg(long, default_value_t = 0.0)]
    mask_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// File-name glob for image directories
    #[arg(long, default_value = "*.png")]
    pattern: String,
}

impl TokenizerArgs {
    fn config(&self) -> TubeletConfig {
        TubeletConfig::new(self.patch, self.patch_y.unwrap_or(self.patch), self.tubelet)
    }

    fn norm(&self, channels: usize) -> Result<NormalizationParams> {
        match self.norm {
            NormKind::Imagenet => Ok(NormalizationParams::imagenet()),
            NormKind::None => Ok(NormalizationParams::identity(channels)),
            NormKind::Custom => {
                if self.mean.is_empty() || self.std.is_empty() {
                    return Err(RltError::usage("--norm custom needs --mean and --std"));
                }
                NormalizationParams::new(self.mean.clone(), self.std.clone())
            }
        }
    }

    fn settings(&self, channels: usize) -> Result<TokenizerSettings> {
        let config = self.config();
        if config.patch_x == 0 || config.patch_y == 0 || config.tubelet_t == 0 {
            return Err(RltError::Config {
                axis: if config.tubelet_t == 0 { "t" } else { "x" },
                message: "tubelet sizes must be positive".into(),
            });
        }
        Ok(TokenizerSettings {
            config,
            norm: self.norm(channels)?,
            tau: Threshold::new(self.tau)?,
            metric: self.metric.parse::<DiffMetric>()?,
            strategy: self.strategy.clone(),
            mask_ratio: self.mask_ratio,
            seed: self.seed,
            source_u8: false,
        })
    }

    /// Settings for a set of inputs; `--norm none` takes its channel count
    /// from the first input.
    fn settings_for(&self, inputs: &[PathBuf]) -> Result<TokenizerSettings> {
        let channels = match (self.norm, inputs.first()) {
            (NormKind::None, Some(p)) => probe_channels(p)?,
            _ => 3,
        };
        self.settings(channels)
    }
}

fn echo(command: &str, s: &TokenizerSettings) {
    let c = s.config;
    let norm = if s.norm == NormalizationParams::imagenet() {
        "imagenet".to_string()
    } else if s.norm == NormalizationParams::identity(s.norm.channels()) {
        "none".to_string()
    } else {
        format!("mean={:?} std={:?}", s.norm.mean(), s.norm.std())
    };
    eprintln!(
        "# rlt {command}: patch {}x{}x{} tau {} metric {} norm {norm} strategy {} mask_ratio {} seed {}",
        c.patch_x,
        c.patch_y,
        c.tubelet_t,
        s.tau.value(),
        s.metric,
        s.strategy,
        s.mask_ratio,
        s.seed
    );
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn clips(inputs: &[PathBuf], pattern: &str) -> Vec<FileClip> {
    inputs
        .iter()
        .map(|path| FileClip {
            path: path.clone(),
            pattern: pattern.to_string(),
        })
        .collect()
}

#[derive(Args)]
struct TokenizeArgs {
    /// RLTV1 files or image directories; `-` reads rgb24 frames from stdin
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    tok: TokenizerArgs,
    /// Output directory for `<stem>.rltt1` files
    #[arg(short, long, default_value = ".")]
    output: PathBuf,
    /// Dimensions CxTxHxW of frames read from stdin
    #[arg(long)]
    pipe_dims: Option<String>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

fn parse_dims(s: &str) -> Result<VideoDims> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| RltError::usage(format!("expected CxTxHxW, got {s:?}")))?;
    match parts[..] {
        [c, t, h, w] => Ok(VideoDims::new(c, t, h, w)),
        _ => Err(RltError::usage(format!("expected CxTxHxW, got {s:?}"))),
    }
}

fn summary(name: &str, seq: &TokenSequence) -> String {
    let g = seq.grid();
    format!(
        "{name}: N_P {} -> N_P' {} (reduction {:.4}) grid {}x{}x{}",
        seq.full_count(),
        seq.len(),
        rlt_core::rlt::reduction_ratio(seq),
        g.grid_x,
        g.grid_y,
        g.grid_t
    )
}

fn cmd_tokenize(a: TokenizeArgs) -> Result<ExitCode> {
    std::fs::create_dir_all(&a.output)?;
    if a.inputs.iter().any(|p| p.as_os_str() == "-") {
        if a.inputs.len() != 1 {
            return Err(RltError::usage("stdin input cannot be combined with files"));
        }
        let dims = parse_dims(
            a.pipe_dims
                .as_deref()
                .ok_or_else(|| RltError::usage("reading stdin needs --pipe-dims CxTxHxW"))?,
        )?;
        let mut settings = a.tok.settings(dims.channels)?;
        settings.source_u8 = true;
        echo("tokenize", &settings);
        let video = read_frame_pipe(std::io::stdin().lock(), dims)?;
        let seq = TokenizerRegistry::with_builtins().tokenize(&video, &settings)?;
        let path = a.output.join("stdin.rltt1");
        write_tokens(&path, &seq)?;
        println!("{}", summary("-", &seq));
        return Ok(ExitCode::SUCCESS);
    }
    let settings = a.tok.settings_for(&a.inputs)?;
    echo("tokenize", &settings);
    let registry = TokenizerRegistry::with_builtins();
    let results = tokenize_clips(&clips(&a.inputs, &a.tok.pattern), &registry, &settings, a.workers)?;
    let mut code = ExitCode::SUCCESS;
    for (input, r) in a.inputs.iter().zip(results) {
        match r {
            Ok(seq) => {
                write_tokens(&derived_path(&a.output, input, ".rltt1"), &seq)?;
                println!("{}", summary(&input.display().to_string(), &seq));
            }
            Err(e) => {
                eprintln!("error: {}: {e}", input.display());
                code = ExitCode::from(if e.is_config() { 2 } else { 1 });
            }
        }
    }
    Ok(code)
}

#[derive(Args)]
struct PackArgs {
    /// RLTT1 files, packed in the given order
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output RLTP1 file
    #[arg(short, long)]
    output: PathBuf,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn print_batch(batch: &PackedBatch) {
    let st = batch.stats();
    println!(
        "examples {} tokens {} boundaries {:?} min {} max {} mean {:.2} std {:.2}",
        st.examples,
        st.total_tokens,
        batch.boundaries(),
        st.min_tokens,
        st.max_tokens,
        st.mean_tokens,
        st.std_tokens
    );
}

fn cmd_pack(a: PackArgs) -> Result<ExitCode> {
    let seqs = a.inputs.iter().map(|p| read_tokens(p)).collect::<Result<Vec<_>>>()?;
    echo("pack", seqs[0].settings());
    let ids: Vec<String> = a.inputs.iter().map(|p| stem(p)).collect();
    let batch = pack_with_ids(&seqs, &ids)?;
    write_packed(&a.output, &batch)?;
    print_batch(&batch);
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
struct UnpackArgs {
    /// RLTP1 file
    input: PathBuf,
    /// Output directory for `<source id>.rltt1` files
    #[arg(short, long, default_value = ".")]
    output: PathBuf,
}

fn cmd_unpack(a: UnpackArgs) -> Result<ExitCode> {
    let batch = read_packed(&a.input)?;
    echo("unpack", &batch.segments()[0].meta.settings);
    std::fs::create_dir_all(&a.output)?;
    for (seg, seq) in batch.segments().iter().zip(unpack(&batch)?) {
        let name: String = seg
            .source_id
            .chars()
            .map(|c| {
                if c.is_alphanumeric() || "-_.+".contains(c) {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        let path = a.output.join(format!("{name}.rltt1"));
        write_tokens(&path, &seq)?;
        println!("{} -> {} ({} tokens)", seg.source_id, path.display(), seq.len());
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
struct StatsArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    tok: TokenizerArgs,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// JSON lines instead of a table
    #[arg(long)]
    json: bool,
    /// Also write the report to this file
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    print!("{text}");
    if let Some(path) = output {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<ExitCode> {
    let settings = a.tok.settings_for(&a.inputs)?;
    echo("stats", &settings);
    let report = analyze(&clips(&a.inputs, &a.tok.pattern), &settings, a.workers)?;
    let text = if a.json {
        report.to_json_lines()
    } else {
        report.to_table()
    };
    emit(&text, a.output.as_deref())?;
    Ok(if report.records.is_empty() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(Args)]
struct SweepArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    tok: TokenizerArgs,
    /// Ascending thresholds, comma separated; `inf` allowed
    #[arg(long, value_delimiter = ',')]
    taus: Vec<String>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    #[arg(long)]
    json: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_tau(s: &str) -> Result<Threshold> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| RltError::usage(format!("bad threshold {s:?}")))?;
    Threshold::try_from(v)
}

fn cmd_sweep(a: SweepArgs) -> Result<ExitCode> {
    let settings = a.tok.settings_for(&a.inputs)?;
    echo("sweep", &settings);
    let taus = if a.taus.is_empty() {
        DEFAULT_TAU_GRID
            .iter()
            .map(|&t| Threshold::new(t))
            .collect::<Result<Vec<_>>>()?
    } else {
        a.taus.iter().map(|s| parse_tau(s)).collect::<Result<Vec<_>>>()?
    };
    let report = sweep_tau(&clips(&a.inputs, &a.tok.pattern), &settings, &taus, a.workers)?;
    for s in &report.skipped {
        eprintln!("skipped {}: {}", s.id, s.reason);
    }
    let text = if a.json {
        report.to_json_lines()
    } else {
        report.to_table()
    };
    emit(&text, a.output.as_deref())?;
    Ok(if report.clips.is_empty() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(Args)]
struct VizArgs {
    /// RLTV1 file or image directory
    input: PathBuf,
    /// Existing RLTT1 file for this video; tokenized on the fly if omitted
    #[arg(long)]
    tokens: Option<PathBuf>,
    #[command(flatten)]
    tok: TokenizerArgs,
    /// Output directory for frame_NNNN.png
    #[arg(short, long)]
    output: PathBuf,
    /// Fill value for pruned tubelets, 0 to 1
    #[arg(long, default_value_t = 0.5)]
    gray: f32,
}

fn cmd_viz(a: VizArgs) -> Result<ExitCode> {
    let (video, source_u8) = load_video(&a.input, &a.tok.pattern)?;
    let seq = match &a.tokens {
        Some(path) => read_tokens(path)?,
        None => {
            let mut settings = a.tok.settings(video.dims().channels)?;
            settings.source_u8 = source_u8;
            TokenizerRegistry::with_builtins().tokenize(&video, &settings)?
        }
    };
    echo("viz", seq.settings());
    let frames = render_overlay(&video, &seq, OverlayStyle { gray: a.gray })?;
    let paths = save_overlay(&frames, &a.output)?;
    let grayed: usize = frames.iter().map(|f| f.grayed_count()).sum();
    let total: usize = frames.iter().map(|f| f.grayed.len()).sum();
    println!(
        "{} frames -> {} ({:.2}% of pixels pruned)",
        paths.len(),
        a.output.display(),
        100.0 * grayed as f64 / total as f64
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
struct RefdemoArgs {
    /// Videos of one size; synthetic clips are generated when empty
    inputs: Vec<PathBuf>,
    /// Use an existing RLTP1 batch instead of tokenizing
    #[arg(long, conflicts_with = "inputs")]
    packed: Option<PathBuf>,
    #[command(flatten)]
    tok: TokenizerArgs,
    /// Number of synthetic clips
    #[arg(long, default_value_t = 4)]
    batch: usize,
    /// Seed for the model weights
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    /// Maximum allowed per-logit deviation
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f32,
}

fn synthetic_batch(a: &RefdemoArgs, settings: &TokenizerSettings) -> Result<Vec<TokenSequence>> {
    if a.batch == 0 {
        return Err(RltError::usage("--batch must be at least 1"));
    }
    let c = settings.config;
    let dims = VideoDims::new(settings.norm.channels(), 4 * c.tubelet_t, 4 * c.patch_y, 4 * c.patch_x);
    let registry = TokenizerRegistry::with_builtins();
    (0..a.batch)
        .map(|i| {
            let kind = match i % 3 {
                0 => SyntheticKind::PatchJitter {
                    block: c.patch_x,
                    amplitude: 0.2,
                },
                1 => SyntheticKind::TwoSegmentStatic,
                _ => SyntheticKind::Noise,
            };
            let video = gen_video(&SyntheticSpec::new(kind, dims, a.tok.seed.wrapping_add(i as u64)));
            registry.tokenize(&video, settings)
        })
        .collect()
}

fn cmd_refdemo(a: RefdemoArgs) -> Result<ExitCode> {
    let batch = if let Some(path) = &a.packed {
        read_packed(path)?
    } else {
        let settings = a.tok.settings_for(&a.inputs)?;
        let seqs = if a.inputs.is_empty() {
            synthetic_batch(&a, &settings)?
        } else {
            let registry = TokenizerRegistry::with_builtins();
            tokenize_clips(&clips(&a.inputs, &a.tok.pattern), &registry, &settings, 1)?
                .into_iter()
                .collect::<Result<Vec<_>>>()?
        };
        pack(&seqs)?
    };
    echo("refdemo", &batch.segments()[0].meta.settings);
    let seqs = unpack(&batch)?;
    let grid = seqs[0].grid();
    if seqs.iter().any(|s| s.grid() != grid) {
        return Err(RltError::usage("refdemo needs every example to share one tubelet grid"));
    }
    let spec = ModelSpec::for_sequence(&seqs[0], a.model_seed);
    let model = ToyTransformer::new(spec)?;
    let mut worst = 0.0f32;
    for form in [MaskForm::Compact, MaskForm::Dense] {
        let packed = model.forward_packed(&batch, form)?;
        for (i, seq) in seqs.iter().enumerate() {
            let single = model.forward_single(seq)?;
            let dev = packed
                .row(i)
                .iter()
                .zip(&single)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f32, f32::max);
            worst = worst.max(dev);
            if form == MaskForm::Compact {
                let top = single
                    .iter()
                    .enumerate()
                    .max_by(|x, y| x.1.total_cmp(y.1))
                    .map_or(0, |(k, _)| k);
                println!(
                    "example {i} ({}): {} tokens, class {top}, logits {:?}",
                    batch.segments()[i].source_id,
                    seq.len(),
                    single.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
                );
            }
        }
    }
    let lengths = batch.segment_lengths();
    let longest = lengths.iter().copied().max().unwrap_or(0);
    let packed_flops = count_flops(&lengths, &spec).total();
    let padded_flops = count_flops(&vec![longest; lengths.len()], &spec).total();
    let full: Vec<usize> = seqs.iter().map(TokenSequence::full_count).collect();
    let standard_flops = count_flops(&full, &spec).total();
    println!(
        "flops: packed {packed_flops}, padded {padded_flops}, standard tokenization {standard_flops} ({:.1}% saved)",
        100.0 * (1.0 - packed_flops as f64 / standard_flops as f64)
    );
    println!(
        "max per-logit deviation packed vs single: {worst:e} (tolerance {:e})",
        a.tolerance
    );
    if worst > a.tolerance || !worst.is_finite() {
        eprintln!("error: packed forward differs from per-example forward");
        return Ok(ExitCode::from(EXIT_EQUIVALENCE));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
struct BenchArgs {
    /// Videos to time; synthetic clips at --sizes are used when empty
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    tok: TokenizerArgs,
    /// Square frame sizes for synthetic clips
    #[arg(long, value_delimiter = ',', default_values_t = [112, 224, 448])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    /// Skip the toy forward pass
    #[arg(long)]
    no_forward: bool,
    #[arg(long)]
    json: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let settings = a.tok.settings_for(&a.inputs)?;
    echo("bench", &settings);
    let opts = BenchOptions {
        sizes: a.sizes.clone(),
        channels: settings.norm.channels(),
        frames: a.frames,
        runs: a.runs,
        warmup: a.warmup,
        seed: a.tok.seed,
        settings: settings.clone(),
        with_forward: !a.no_forward,
    };
    let report = if a.inputs.is_empty() {
        run_bench(&opts)?
    } else {
        let entries = a
            .inputs
            .iter()
            .map(|p| rlt_core::bench::bench_video(&load_video(p, &a.tok.pattern)?.0, &opts))
            .collect::<Result<Vec<_>>>()?;
        rlt_core::bench::BenchReport {
            strategy: settings.strategy.clone(),
            tau: settings.tau.value(),
            metric: settings.metric.name().into(),
            entries,
        }
    };
    let text = if a.json {
        report.to_json() + "\n"
    } else {
        report.to_table()
    };
    emit(&text, a.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_strategies() -> Result<ExitCode> {
    let registry = TokenizerRegistry::with_builtins();
    for t in registry.iter() {
        println!("{:<12} {}", t.name(), t.description());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tokenize(a) => cmd_tokenize(a),
        Command::Pack(a) => cmd_pack(a),
        Command::Unpack(a) => cmd_unpack(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Viz(a) => cmd_viz(a),
        Command::Refdemo(a) => cmd_refdemo(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Strategies => cmd_strategies(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
