//! Command-line frontend: generate corpora, extract traces from frames,
//! label frames, estimate heart rate, and benchmark methods.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use facepulse::bench::{baseline_green, parse_methods, run_bench, write_report, MethodId};
use facepulse::config::{read_kv_file, PipelineConfig};
use facepulse::error::{Error, Result};
use facepulse::ingest::{read_landmark_csv, read_trace_csv, write_trace_csv, SessionTrace};
use facepulse::labeler::label_frames;
use facepulse::roi_grid::{extract_trace, face_rect};
use facepulse::spectral::{estimate_session, estimate_session_argmax, HrSeries};
use facepulse::synth::{make_corpus, SynthConfig};

#[derive(Parser)]
#[command(
    name = "facepulse",
    version,
    about = "Adaptive heart-rate estimation from facial-video pulse traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark corpus.
    Synth {
        /// Generator config (`key=value`; see the synth module keys, plus
        /// `n_sessions`).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for traces, ground truths and `corpus.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a session trace from PPM frames plus a landmark track.
    Extract {
        /// Directory holding `frame_%06d.ppm` images.
        #[arg(long)]
        frames: PathBuf,
        /// Landmark CSV matching the frame files.
        #[arg(long)]
        landmarks: PathBuf,
        /// Number of sub-ROIs the face box is divided into.
        #[arg(long = "n-subrois", default_value_t = 40)]
        n_subrois: usize,
        /// Output trace CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional pipeline config (`roi_margin`, `roi_rect`, ...).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Label each frame of a trace (prints CSV to stdout).
    Label {
        /// Session trace CSV.
        #[arg(long)]
        trace: PathBuf,
        /// Optional pipeline config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Estimate per-window heart rate from a trace.
    Estimate {
        /// Session trace CSV.
        #[arg(long)]
        trace: PathBuf,
        /// Method: a (green baseline), d (adaptive), e (adaptive+tracking).
        #[arg(long, default_value = "e")]
        method: String,
        /// Output results CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional pipeline config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run methods over a corpus and write a comparison report.
    Bench {
        /// Corpus directory (holding `corpus.csv`).
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated method letters.
        #[arg(long, default_value = "a,d,e")]
        methods: String,
        /// Output report CSV.
        #[arg(long)]
        report: PathBuf,
        /// Optional pipeline config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Loads the pipeline config, layering the optional file over defaults.
fn load_pipeline(path: Option<&Path>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = path {
        cfg.apply_file(path)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_estimate_method(
    trace: &SessionTrace,
    method: MethodId,
    cfg: &PipelineConfig,
) -> Result<HrSeries> {
    match method {
        MethodId::GreenBaseline => baseline_green(trace, cfg),
        MethodId::AdaptiveNoTrack => estimate_session_argmax(trace, cfg),
        MethodId::AdaptiveTracked => estimate_session(trace, cfg),
    }
}

/// Writes per-window estimates as `window,t_start_sec,label,hr_bpm,source`.
fn write_results_csv(series: &HrSeries, path: &Path) -> Result<()> {
    let mut out = String::from("window,t_start_sec,label,hr_bpm,source\n");
    for e in &series.estimates {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.window_index, e.t_start_sec, e.label, e.hr_bpm, e.source
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::IoFailure {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out } => {
            let mut cfg = SynthConfig::default();
            let mut n_sessions = 20usize;
            for (key, value) in read_kv_file(&config)? {
                if key == "n_sessions" {
                    n_sessions = value.parse().map_err(|_| {
                        Error::ConfigInvalid(format!("invalid n_sessions {value:?}"))
                    })?;
                } else if !cfg.apply_kv(&key, &value)? {
                    return Err(Error::ConfigInvalid(format!(
                        "unknown generator key {key:?} in {}",
                        config.display()
                    )));
                }
            }
            let manifest = make_corpus(n_sessions, &cfg, &out)?;
            println!(
                "wrote {} session(s) and corpus.csv to {}",
                manifest.sessions.len(),
                out.display()
            );
        }
        Command::Extract {
            frames,
            landmarks,
            n_subrois,
            out,
            config,
        } => {
            let cfg = load_pipeline(config.as_deref())?;
            let track = read_landmark_csv(&landmarks)?;
            let trace = extract_trace(&frames, &track, n_subrois, cfg.roi_rect, cfg.roi_margin)?;
            write_trace_csv(&trace, &out)?;
            println!(
                "wrote {} frames x {} sub-ROIs to {}",
                trace.n_frames(),
                trace.n_subrois,
                out.display()
            );
        }
        Command::Label { trace, config } => {
            let cfg = load_pipeline(config.as_deref())?;
            let trace = read_trace_csv(&trace)?;
            if trace.frames.is_empty() {
                return Err(Error::TraceTooShort {
                    frames: 0,
                    needed: 1,
                });
            }
            let rect = match cfg.roi_rect {
                Some(rect) => rect,
                None => face_rect(&trace.frames[0], cfg.roi_margin)?,
            };
            let track = label_frames(&trace, &cfg.resolved_labeler(&rect))?;
            println!("frame,label,rigid_score,nonrigid_score");
            for (t, label) in track.labels.iter().enumerate() {
                println!(
                    "{t},{label},{},{}",
                    track.rigid_scores[t], track.nonrigid_scores[t]
                );
            }
        }
        Command::Estimate {
            trace,
            method,
            out,
            config,
        } => {
            let cfg = load_pipeline(config.as_deref())?;
            let method: MethodId = method.parse()?;
            let trace = read_trace_csv(&trace)?;
            let series = run_estimate_method(&trace, method, &cfg)?;
            write_results_csv(&series, &out)?;
            println!(
                "method {method}: wrote {} window estimate(s) to {}",
                series.len(),
                out.display()
            );
        }
        Command::Bench {
            corpus,
            methods,
            report,
            config,
        } => {
            let cfg = load_pipeline(config.as_deref())?;
            let methods = parse_methods(&methods)?;
            let result = run_bench(&corpus, &methods, &cfg)?;
            write_report(&result, &report)?;
            for m in &result.methods {
                println!(
                    "method {}: rmse={:.3} bpm, sde={:.3} bpm over {} windows",
                    m.method,
                    m.rmse_bpm,
                    m.sde_bpm,
                    m.n_windows()
                );
            }
            println!("report written to {}", report.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors; everything else is
            // an input problem.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
