use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use tqcodec::analyzer::{self, BudgetReport, GraphRole};
use tqcodec::bitstream::{self, BitstreamHeader};
use tqcodec::codec::{codebook_store, codebooks_from_store, fit_codebooks, Codec, FitOptions};
use tqcodec::dsp::{load_wav, save_wav, BitDepth};
use tqcodec::metrics;
use tqcodec::nn::{self, NetworkGraph, WeightStore};
use tqcodec::quant::{KMeansOptions, ResidualQuantizer};
use tqcodec::{CodecConfig, Error, Mode, Result};

#[derive(Parser)]
#[command(name = "tqcodec", version, about = "Subband neural music codec toolkit")]
struct Cli {
    /// Seed for random weights, random codebooks and codebook fitting.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Codec configuration file (TOML); command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Suppress log messages (results and errors are still printed).
    #[arg(long, global = true)]
    quiet: bool,
    /// Print results as JSON on stdout.
    #[arg(long, global = true)]
    json_output: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    #[arg(long)]
    mode: Option<Mode>,
    /// Number of quantizer stages.
    #[arg(long)]
    nq: Option<usize>,
}

#[derive(Args, Clone)]
struct Assets {
    /// Network weights (TQCW file); defaults to seeded random weights.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Fitted codebooks (TQCW file from `tqcodec fit`).
    #[arg(long)]
    codebooks: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Depth {
    #[value(name = "16")]
    Pcm16,
    #[value(name = "24")]
    Pcm24,
    F32,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum GraphChoice {
    /// The networks of the configured mode.
    Config,
    /// DAC-style reference topology.
    DacLike,
    /// A graph with no layers.
    Empty,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a WAV file into a TQC1 stream.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        assets: Assets,
    },
    /// Decode a TQC1 stream into a WAV file.
    Decode {
        input: PathBuf,
        output: PathBuf,
        /// Decode through the streaming path, N frames at a time.
        #[arg(long, value_name = "N")]
        streaming_chunk: Option<usize>,
        #[arg(long, value_enum, default_value = "f32")]
        bit_depth: Depth,
        #[command(flatten)]
        assets: Assets,
    },
    /// Compare a degraded WAV file against a reference.
    Metrics {
        reference: PathBuf,
        degraded: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Report MACs per second and receptive fields against the decode budget.
    Analyze {
        #[arg(long, value_enum, default_value = "config")]
        graph: GraphChoice,
        #[command(flatten)]
        overrides: Overrides,
        /// Decode-time ceiling in GMACs per second.
        #[arg(long, default_value_t = analyzer::DEFAULT_CEILING_GMACS)]
        ceiling: f64,
    },
    /// Fit codebooks on a directory of WAV files.
    Fit {
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Fit SimVQ stages (frozen base, fitted projection).
        #[arg(long)]
        simvq: bool,
        /// k-means iterations per stage.
        #[arg(long, default_value_t = 50)]
        iters: usize,
        /// Subsample training frames down to this many (0 keeps all).
        #[arg(long, default_value_t = 0)]
        max_vectors: usize,
        /// Network weights used to compute latents in network modes.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

struct Ctx {
    seed: u64,
    json: bool,
    config: Option<PathBuf>,
}

impl Ctx {
    fn resolve(&self, overrides: Option<&Overrides>) -> Result<CodecConfig> {
        let mut cfg = match &self.config {
            Some(p) => CodecConfig::from_toml(&std::fs::read_to_string(p)?)?,
            None => CodecConfig::default(),
        };
        if let Some(o) = overrides {
            if let Some(m) = o.mode {
                cfg.mode = m;
            }
            if let Some(n) = o.nq {
                cfg.num_quantizers = n;
            }
        }
        cfg.validate()?;
        info!("resolved config (seed {}):\n{}", self.seed, cfg.to_toml());
        Ok(cfg)
    }

    fn emit(&self, text: &str, value: serde_json::Value) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(&value).expect("json value"));
        } else {
            println!("{text}");
        }
    }
}

fn load_assets(assets: &Assets, cfg: &CodecConfig) -> Result<(Option<WeightStore>, Option<ResidualQuantizer>)> {
    let weights = assets.weights.as_ref().map(WeightStore::load).transpose()?;
    let codebooks = match &assets.codebooks {
        Some(p) => Some(codebooks_from_store(&WeightStore::load(p)?, cfg)?),
        None => None,
    };
    Ok((weights, codebooks))
}

fn cmd_encode(ctx: &Ctx, input: &Path, output: &Path, o: &Overrides, assets: &Assets) -> Result<()> {
    let cfg = ctx.resolve(Some(o))?;
    let (weights, codebooks) = load_assets(assets, &cfg)?;
    let codec = Codec::new(cfg, weights.as_ref(), codebooks, ctx.seed)?;
    let audio = load_wav(input)?;
    let stream = codec.encode(&audio)?;
    std::fs::write(output, &stream)?;
    let r = codec.report(&audio, &stream);
    ctx.emit(
        &format!(
            "wrote {} ({} bytes): {} channel(s), {} frames per channel, nominal {} bps per channel, measured {:.1} bps per channel",
            output.display(),
            r.stream_bytes,
            r.channels,
            r.frames,
            r.nominal_bps,
            r.measured_bps
        ),
        json!({ "output": output, "report": r }),
    );
    Ok(())
}

fn cmd_decode(ctx: &Ctx, input: &Path, output: &Path, chunk: Option<usize>, depth: Depth, assets: &Assets) -> Result<()> {
    let bytes = std::fs::read(input)?;
    let header = BitstreamHeader::parse(&bytes)?;
    let mut cfg = ctx.resolve(None)?;
    cfg.mode = header.mode;
    cfg.num_quantizers = usize::from(header.num_quantizers);
    cfg.validate()?;
    let (weights, codebooks) = load_assets(assets, &cfg)?;
    let codec = Codec::new(cfg, weights.as_ref(), codebooks, ctx.seed)?;
    let audio = match chunk {
        Some(n) => codec.decode_streaming(&bytes, n)?,
        None => codec.decode(&bytes)?,
    };
    let depth = match depth {
        Depth::Pcm16 => BitDepth::Pcm16,
        Depth::Pcm24 => BitDepth::Pcm24,
        Depth::F32 => BitDepth::Float32,
    };
    save_wav(&audio, output, depth)?;
    ctx.emit(
        &format!(
            "wrote {}: {} channel(s), {} samples at {} Hz ({} mode, {} stages{})",
            output.display(),
            audio.num_channels(),
            audio.len(),
            audio.sample_rate(),
            header.mode.name(),
            header.num_quantizers,
            chunk.map_or(String::new(), |n| format!(", streaming in {n}-frame chunks"))
        ),
        json!({ "output": output, "header": header, "samples": audio.len(), "streaming_chunk": chunk }),
    );
    Ok(())
}

fn cmd_metrics(ctx: &Ctx, reference: &Path, degraded: &Path, output: Option<&Path>) -> Result<()> {
    let report = metrics::evaluate(&load_wav(reference)?, &load_wav(degraded)?)?;
    let text = report.to_text();
    if let Some(p) = output {
        let body = if ctx.json {
            serde_json::to_string_pretty(&report).expect("report serializes")
        } else {
            text.clone() + "\n"
        };
        std::fs::write(p, body)?;
    }
    ctx.emit(&text, serde_json::to_value(&report).expect("report serializes"));
    Ok(())
}

fn analysis_graphs(cfg: &CodecConfig, choice: GraphChoice) -> Result<(Vec<(NetworkGraph, GraphRole)>, Option<NetworkGraph>)> {
    Ok(match choice {
        GraphChoice::Empty => (vec![(NetworkGraph::new("empty", 1, 1, vec![])?, GraphRole::Decoder)], None),
        GraphChoice::DacLike => (
            vec![
                (nn::dac_like_encoder()?, GraphRole::Encoder),
                (nn::dac_like_decoder()?, GraphRole::Decoder),
            ],
            Some(nn::dac_like_end_to_end()?),
        ),
        GraphChoice::Config => match cfg.mode {
            Mode::Seanet => (
                vec![
                    (nn::build_encoder(cfg)?, GraphRole::Encoder),
                    (nn::build_decoder(cfg)?, GraphRole::Decoder),
                ],
                Some(nn::build_end_to_end(cfg)?),
            ),
            Mode::SubbandSeanet | Mode::PqmfDirect => {
                let g = nn::build_subband_graphs(cfg)?;
                let mut list = vec![
                    (g.core_encoder.clone(), GraphRole::Encoder),
                    (g.core_decoder.clone(), GraphRole::Decoder),
                ];
                list.extend(g.side_encoders.iter().cloned().map(|s| (s, GraphRole::Encoder)));
                list.extend(g.side_decoders.iter().cloned().map(|s| (s, GraphRole::Decoder)));
                (list, Some(g.core_encoder.then(&g.core_decoder, "core")?))
            }
        },
    })
}

fn cmd_analyze(ctx: &Ctx, choice: GraphChoice, o: &Overrides, ceiling: f64) -> Result<()> {
    let cfg = ctx.resolve(Some(o))?;
    let (graphs, e2e) = analysis_graphs(&cfg, choice)?;
    let reports: Vec<(BudgetReport, GraphRole)> = graphs
        .iter()
        .map(|(g, role)| (analyzer::count_macs(g, cfg.sample_rate), *role))
        .collect();
    let mut verdicts = analyzer::compare_budget(&reports, ceiling);
    // subband decoders run together, so the budget applies to their sum
    if choice == GraphChoice::Config && cfg.mode != Mode::Seanet {
        let total: f64 = reports
            .iter()
            .filter(|(_, r)| *r == GraphRole::Decoder)
            .map(|(r, _)| r.gmacs())
            .sum();
        verdicts.push(analyzer::BudgetVerdict {
            graph: "all decoders".into(),
            role: GraphRole::Decoder,
            gmacs: total,
            ceiling_gmacs: ceiling,
            pass: Some(total <= ceiling),
        });
    }
    let e2e_rf = e2e.as_ref().map(analyzer::receptive_field);
    let mut text: String = reports.iter().map(|(r, _)| r.to_table() + "\n").collect();
    if let (Some(g), Some(rf)) = (&e2e, &e2e_rf) {
        text += &format!(
            "end-to-end {}: receptive field {} samples{}\n\n",
            g.name,
            rf.samples,
            if rf.stateful { " (convolutional path; LSTM state not counted)" } else { "" }
        );
    }
    text += &analyzer::verdict_table(&verdicts);
    let reports_json: Vec<_> = reports.iter().map(|(r, _)| r).collect();
    ctx.emit(
        text.trim_end(),
        json!({ "sample_rate": cfg.sample_rate, "reports": reports_json, "end_to_end_rf": e2e_rf, "verdicts": verdicts }),
    );
    Ok(())
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Fitting(format!("no .wav files in {}", dir.display())));
    }
    Ok(files)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    ctx: &Ctx,
    corpus: &Path,
    output: &Path,
    o: &Overrides,
    simvq: bool,
    iters: usize,
    max_vectors: usize,
    weights: Option<&Path>,
) -> Result<()> {
    let cfg = ctx.resolve(Some(o))?;
    let files = wav_files(corpus)?;
    let audio = files.iter().map(load_wav).collect::<Result<Vec<_>>>()?;
    let weights = weights.map(WeightStore::load).transpose()?;
    let opts = FitOptions {
        kmeans: KMeansOptions {
            max_iters: iters,
            seed: ctx.seed,
            ..KMeansOptions::default()
        },
        simvq,
        max_vectors,
        ..FitOptions::default()
    };
    info!("fitting {} stages on {} file(s)", cfg.num_quantizers, files.len());
    let rq = fit_codebooks(&cfg, weights.as_ref(), &audio, &opts)?;
    codebook_store(&rq, &cfg).save(output)?;
    ctx.emit(
        &format!(
            "wrote {}: {} {} stages of {} x {} ({} bps per channel)",
            output.display(),
            rq.num_stages(),
            if simvq { "SimVQ" } else { "k-means" },
            rq.codebook_size(),
            rq.dim(),
            bitstream::bitrate_for(&cfg)
        ),
        json!({
            "output": output,
            "files": files,
            "stages": rq.num_stages(),
            "codebook_size": rq.codebook_size(),
            "dim": rq.dim(),
            "simvq": simvq,
            "bitrate_bps": bitstream::bitrate_for(&cfg),
        }),
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        json: cli.json_output,
        config: cli.config,
    };
    match &cli.command {
        Command::Encode {
            input,
            output,
            overrides,
            assets,
        } => cmd_encode(&ctx, input, output, overrides, assets),
        Command::Decode {
            input,
            output,
            streaming_chunk,
            bit_depth,
            assets,
        } => cmd_decode(&ctx, input, output, *streaming_chunk, *bit_depth, assets),
        Command::Metrics {
            reference,
            degraded,
            output,
        } => cmd_metrics(&ctx, reference, degraded, output.as_deref()),
        Command::Analyze {
            graph,
            overrides,
            ceiling,
        } => cmd_analyze(&ctx, *graph, overrides, *ceiling),
        Command::Fit {
            corpus,
            output,
            overrides,
            simvq,
            iters,
            max_vectors,
            weights,
        } => cmd_fit(&ctx, corpus, output, overrides, *simvq, *iters, *max_vectors, weights.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_target(false)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class() as u8)
        }
    }
}
