//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use dataforge_core::audio::{
    coarse_concat, detect_speech, normalize_amplitude, speaker_concat, standardize, AudioClip, Fragment, Segment,
    VadParams, COARSE_TARGET_S, SPEAKER_CAP_S, TARGET_PEAK_DB,
};
use dataforge_core::grpo::{
    advantages, clipped_surrogate, fuse, group_advantages, is_homogeneous, laughter_reward, regularize, ClipRange,
    ClipSchedule, FusionWeights, LaughterLexicon, RewardVector,
};
use dataforge_core::phoneme::{
    g2p, inference_hybridize, per, text_units, train_augment, AugmentParams, BaseDict, Lexicon,
};
use dataforge_core::punct::{duration_stats, optimize_punctuation, threshold_for, ThresholdMode};
use dataforge_core::qa::{
    double_check_filter, edit_distance, error_rate, text_normalize, EditOps, QaGate, TableBackend,
};
use dataforge_core::text::Lang;
use dataforge_core::vocab::{partition_vocab, ratio_check, speech_token_count, RatioBounds};

use crate::formats::{
    bundled_base_dict, bundled_lexicon, format_vocab, parse_alignment, parse_base_dict, parse_json, parse_lexicon,
    parse_vocab, read_text, to_jsonl, write_text,
};
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::train::GrpoConfig;
use crate::wav::{read_clip, read_wav, write_wav, WavFormat};
use crate::{corpus, Error, DEFAULT_SEED};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub const SEED_ENV: &str = "DATAFORGE_SEED";

#[derive(Debug, Parser)]
#[command(name = "dataforge", version, about = "Speech-data curation and alignment toolkit")]
pub struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Random seed; DATAFORGE_SEED takes precedence.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the curation DAG.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Word or character error rate between two line-paired files.
    Wer {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long, default_value = "zh")]
        lang: Lang,
    },
    /// Two-recognizer retention gate.
    #[command(subcommand)]
    Qa(QaCmd),
    /// Repair punctuation from character alignments.
    Punct {
        #[arg(long)]
        alignment: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long, default_value = "zh")]
        lang: Lang,
        /// Use mean + 2.6 * std instead of the variance.
        #[arg(long)]
        use_std: bool,
    },
    /// Lexicon G2P, hybrid input, augmentation and PER.
    #[command(subcommand)]
    Phoneme(PhonemeCmd),
    /// Vocabulary pruning and the length-ratio check.
    #[command(subcommand)]
    Vocab(VocabCmd),
    /// Multi-reward GRPO on the toy policy.
    #[command(subcommand)]
    Grpo(GrpoCmd),
    /// WAV standardization, VAD, normalization and concatenation.
    #[command(subcommand)]
    Audio(AudioCmd),
    /// Synthetic demo corpus.
    #[command(subcommand)]
    Corpus(CorpusCmd),
}

#[derive(Debug, Subcommand)]
pub enum PipelineCmd {
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run workers as threads over TCP instead of the deterministic scheduler.
        #[arg(long)]
        threaded: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum QaCmd {
    Filter {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        hyp_a: String,
        #[arg(long)]
        hyp_b: String,
        #[arg(long, default_value = "zh")]
        lang: Lang,
        #[arg(long, default_value_t = dataforge_core::qa::RETENTION_THRESHOLD)]
        threshold: f64,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct DictArgs {
    /// Lexicon TSV; the bundled lexicon when omitted.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Base dictionary TSV; the bundled dictionary when omitted.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long, default_value = "zh")]
    pub lang: Lang,
}

#[derive(Debug, Subcommand)]
pub enum PhonemeCmd {
    /// Inference-time hybrid sequence: lexicon words become phonemes.
    Hybridize {
        #[command(flatten)]
        dict: DictArgs,
        #[arg(long)]
        text: String,
    },
    /// Training-time random phoneme substitution.
    Augment {
        #[command(flatten)]
        dict: DictArgs,
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 0.2)]
        p: f64,
        #[arg(long, default_value_t = 0.5)]
        max_ratio: f64,
    },
    G2p {
        #[command(flatten)]
        dict: DictArgs,
        #[arg(long)]
        text: String,
    },
    /// Phoneme error rate between space-separated sequences.
    Per {
        #[arg(long = "ref")]
        reference: String,
        #[arg(long)]
        hyp: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum VocabCmd {
    Prune {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Speech-to-text token ratio gate.
    Ratio {
        #[arg(long)]
        text_tokens: usize,
        #[arg(long)]
        duration: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum GrpoCmd {
    /// Train the bigram policy on the synthetic task; stats as JSONL.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Temperature and clip range over training.
    Schedule {
        /// Final `T,eps_high,eps_low`.
        #[arg(long = "final", default_value = "3,1,0.4")]
        last: String,
        #[arg(long, default_value_t = 10)]
        total: u64,
        #[arg(long)]
        step: Option<u64>,
    },
    /// Regularized rewards and advantages of one group.
    Advantages {
        /// JSON array of reward vectors.
        #[arg(long)]
        rewards: PathBuf,
        /// `cer,sim,emo,laugh`.
        #[arg(long, default_value = "1,1,1,2")]
        weights: String,
        #[arg(long)]
        exclude_sim: bool,
    },
    Surrogate {
        #[arg(long)]
        ratio: f64,
        #[arg(long)]
        advantage: f64,
        #[arg(long, default_value_t = 0.2)]
        eps_low: f64,
        #[arg(long, default_value_t = 0.3)]
        eps_high: f64,
    },
    Laughter {
        #[arg(long)]
        text: String,
        /// The laughter detector fired.
        #[arg(long)]
        detected: bool,
        /// Transcript of the detected span.
        #[arg(long, default_value = "")]
        asr: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConcatMode {
    Coarse,
    Speaker,
}

#[derive(Debug, Subcommand)]
pub enum AudioCmd {
    Standardize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16_000)]
        rate: u32,
    },
    Vad {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        frame_ms: f64,
        #[arg(long, default_value_t = 0.01)]
        threshold: f64,
        #[arg(long, default_value_t = 200.0)]
        min_gap_ms: f64,
    },
    Normalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = TARGET_PEAK_DB, allow_negative_numbers = true)]
        db: f64,
    },
    Concat {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "speaker")]
        mode: ConcatMode,
        #[arg(long, default_value = "speaker")]
        speaker: String,
        /// Cap (speaker mode) or target (coarse mode) in seconds.
        #[arg(long)]
        seconds: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Write the bundled synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Library operations and the subcommand reaching each.
pub const OPERATIONS: &[(&str, &[&str])] = &[
    ("standardize", &["audio", "standardize"]),
    ("detect_speech", &["audio", "vad"]),
    ("coarse_concat", &["audio", "concat"]),
    ("normalize_amplitude", &["audio", "normalize"]),
    ("speaker_concat", &["audio", "concat"]),
    ("edit_distance", &["wer"]),
    ("text_error_rate", &["wer"]),
    ("double_check_filter", &["qa", "filter"]),
    ("duration_stats", &["punct"]),
    ("punct_threshold", &["punct"]),
    ("optimize_punctuation", &["punct"]),
    ("prune_vocab", &["vocab", "prune"]),
    ("speech_token_count", &["vocab", "ratio"]),
    ("ratio_check", &["vocab", "ratio"]),
    ("g2p", &["phoneme", "g2p"]),
    ("inference_hybridize", &["phoneme", "hybridize"]),
    ("train_augment", &["phoneme", "augment"]),
    ("per", &["phoneme", "per"]),
    ("regularize_dim", &["grpo", "advantages"]),
    ("fuse", &["grpo", "advantages"]),
    ("group_advantages", &["grpo", "advantages"]),
    ("is_homogeneous", &["grpo", "advantages"]),
    ("clipped_surrogate", &["grpo", "surrogate"]),
    ("schedule_at", &["grpo", "schedule"]),
    ("laughter_reward", &["grpo", "laughter"]),
    ("dynamic_sample", &["grpo", "train"]),
    ("rollout", &["grpo", "train"]),
    ("grpo_step", &["grpo", "train"]),
    ("submit_manifest", &["pipeline", "run"]),
    ("assign", &["pipeline", "run"]),
    ("heartbeat", &["pipeline", "run"]),
    ("expire", &["pipeline", "run"]),
    ("record_result", &["pipeline", "run"]),
    ("run_pipeline", &["pipeline", "run"]),
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn data<E: Into<Error>>(e: E) -> CliError {
    CliError::Data(e.into())
}

/// `DATAFORGE_SEED`, then `--seed`, then `fallback`.
pub fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(flag.unwrap_or(fallback)),
    }
}

fn parse_floats<const N: usize>(s: &str, what: &str) -> Result<[f64; N], CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("{what}: expected {N} comma-separated numbers, got {s:?}")))?;
    parts
        .try_into()
        .map_err(|_| CliError::Usage(format!("{what}: expected {N} comma-separated numbers, got {s:?}")))
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(value).expect("output serializes");
    writeln!(out, "{s}").map_err(stdout_err)
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::Data(Error::Io {
        path: "<stdout>".into(),
        source,
    })
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(stdout_err)?
    };
}

fn load_dicts(args: &DictArgs) -> Result<(Lexicon, BaseDict), CliError> {
    let lexicon = match &args.lexicon {
        Some(p) => {
            parse_lexicon(&read_text(p)?, &p.display().to_string())
                .map_err(data)?
                .lexicon
        }
        None => bundled_lexicon(),
    };
    let base = match &args.base {
        Some(p) => parse_base_dict(&read_text(p)?, &p.display().to_string()).map_err(data)?,
        None => bundled_base_dict(),
    };
    Ok((lexicon, base))
}

fn mono(path: &Path) -> Result<AudioClip, CliError> {
    let raw = read_wav(path)?;
    let rate = raw.sample_rate;
    standardize(&raw, rate).map_err(data)
}

/// Parses `args` and runs the command, writing to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let json = cli.json;
    match cli.command {
        Command::Pipeline(PipelineCmd::Run {
            manifest,
            config,
            workers,
            out: out_dir,
            threaded,
        }) => {
            let mut cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            cfg.seed = resolve_seed(cli.seed, cfg.seed)?;
            if let Some(n) = workers {
                cfg.workers = n;
            }
            if cfg.workers == 0 {
                return Err(CliError::Usage("--workers must be at least 1".into()));
            }
            let report = run_pipeline(&manifest, &cfg, &out_dir, threaded)?;
            if json {
                print_json(out, &report)?;
            } else {
                let s = report.summary;
                say!(out, "done {}  failed {}  open {}", s.done, s.failed, s.open);
                say!(out, "kept {}  dropped {}", s.kept, s.dropped);
                for id in &report.dropped {
                    say!(out, "dropped\t{id}");
                }
                say!(out, "manifest\t{}", out_dir.join("manifest.jsonl").display());
            }
        }
        Command::Wer { reference, hyp, lang } => {
            let r = read_text(&reference)?;
            let h = read_text(&hyp)?;
            let (rl, hl): (Vec<&str>, Vec<&str>) = (r.lines().collect(), h.lines().collect());
            if rl.len() != hl.len() {
                return Err(data(Error::Data(format!(
                    "line counts differ: {} reference vs {} hypothesis",
                    rl.len(),
                    hl.len()
                ))));
            }
            let mut total = EditOps::default();
            for (a, b) in rl.iter().zip(&hl) {
                let ops = edit_distance(&text_normalize(a, lang), &text_normalize(b, lang));
                total.substitutions += ops.substitutions;
                total.deletions += ops.deletions;
                total.insertions += ops.insertions;
                total.ref_len += ops.ref_len;
            }
            let rate = error_rate(&total).map_err(data)?;
            if json {
                print_json(
                    out,
                    &json!({
                        "rate": rate,
                        "substitutions": total.substitutions,
                        "deletions": total.deletions,
                        "insertions": total.insertions,
                        "ref_len": total.ref_len,
                    }),
                )?;
            } else {
                say!(out, "{rate:.4}");
            }
        }
        Command::Qa(QaCmd::Filter {
            audio,
            text,
            hyp_a,
            hyp_b,
            lang,
            threshold,
        }) => {
            let clip = mono(&audio)?;
            let a = TableBackend::new("asr_a").with(clip.source_id(), hyp_a);
            let b = TableBackend::new("asr_b").with(clip.source_id(), hyp_b);
            let gate = QaGate {
                threshold,
                ..QaGate::default()
            };
            let v = double_check_filter(&text, &clip, [&a, &b], lang, &gate).map_err(data)?;
            if json {
                print_json(out, &v)?;
            } else {
                say!(
                    out,
                    "rates {:.4} {:.4}  {}",
                    v.rates[0],
                    v.rates[1],
                    if v.kept { "kept" } else { "dropped" }
                );
            }
        }
        Command::Punct {
            alignment,
            text,
            lang,
            use_std,
        } => {
            let aligns = parse_alignment(&read_text(&alignment)?, &alignment.display().to_string()).map_err(data)?;
            let stats = duration_stats(&aligns).map_err(data)?;
            let mode = if use_std {
                ThresholdMode::StdDev
            } else {
                ThresholdMode::Variance
            };
            let threshold = threshold_for(&stats, mode);
            let fixed = optimize_punctuation(&text, &aligns, threshold, lang).map_err(data)?;
            if json {
                print_json(out, &json!({"text": fixed, "threshold_s": threshold, "stats": stats}))?;
            } else {
                say!(out, "{fixed}");
            }
        }
        Command::Phoneme(cmd) => phoneme(cmd, cli.seed, json, out)?,
        Command::Vocab(VocabCmd::Prune { input, out: path }) => {
            let entries = parse_vocab(&read_text(&input)?, &input.display().to_string()).map_err(data)?;
            let report = partition_vocab(&entries);
            write_text(&path, &format_vocab(&report.kept))?;
            if json {
                let removed: Vec<_> = report
                    .removed
                    .iter()
                    .map(|e| json!({"token_id": e.token_id(), "surface": e.surface()}))
                    .collect();
                print_json(out, &json!({"kept": report.kept.len(), "removed": removed}))?;
            } else {
                say!(out, "kept {}  removed {}", report.kept.len(), report.removed.len());
                for e in &report.removed {
                    say!(out, "removed\t{}\t{}", e.token_id(), e.surface());
                }
            }
        }
        Command::Vocab(VocabCmd::Ratio { text_tokens, duration }) => {
            let speech = speech_token_count(duration).map_err(data)?;
            let v = ratio_check(text_tokens, speech, &RatioBounds::default()).map_err(data)?;
            if json {
                print_json(
                    out,
                    &json!({"speech_tokens": speech, "ratio": v.ratio, "accepted": v.accepted}),
                )?;
            } else {
                say!(
                    out,
                    "speech tokens {speech}  ratio {:.4}  {}",
                    v.ratio,
                    if v.accepted { "accepted" } else { "rejected" }
                );
            }
        }
        Command::Grpo(cmd) => grpo(cmd, cli.seed, json, out)?,
        Command::Audio(cmd) => audio(cmd, json, out)?,
        Command::Corpus(CorpusCmd::Synth { out: dir }) => {
            let entries = corpus::synthesize(&dir)?;
            if json {
                print_json(out, &entries)?;
            } else {
                say!(out, "wrote {} entries to {}", entries.len(), dir.display());
            }
        }
    }
    Ok(())
}

fn phoneme(cmd: PhonemeCmd, seed: Option<u64>, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        PhonemeCmd::Hybridize { dict, text } => {
            let (lexicon, base) = load_dicts(&dict)?;
            let seq = inference_hybridize(&text, dict.lang, &lexicon, &base);
            if json {
                print_json(out, &seq)?;
            } else {
                say!(out, "{}", seq.render_bracketed());
            }
        }
        PhonemeCmd::Augment {
            dict,
            text,
            p,
            max_ratio,
        } => {
            let (lexicon, base) = load_dicts(&dict)?;
            let seed = resolve_seed(seed, DEFAULT_SEED)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = AugmentParams { p, max_ratio };
            let aug = train_augment(&text, dict.lang, &mut rng, &params, &lexicon, &base).map_err(data)?;
            if json {
                print_json(
                    out,
                    &json!({
                        "triggered": aug.triggered,
                        "ratio": aug.ratio,
                        "eligible": aug.eligible,
                        "replaced": aug.replaced,
                        "units": aug.sequence,
                    }),
                )?;
            } else {
                say!(out, "{}", aug.sequence.render_bracketed());
                say!(
                    out,
                    "triggered {}  replaced {}/{}",
                    aug.triggered,
                    aug.replaced,
                    aug.eligible
                );
            }
        }
        PhonemeCmd::G2p { dict, text } => {
            let (lexicon, base) = load_dicts(&dict)?;
            let units = text_units(&text, dict.lang);
            let prons = g2p(&units, &lexicon, &base);
            if json {
                let rows: Vec<_> = units
                    .iter()
                    .zip(&prons)
                    .map(|(u, p)| json!({"unit": u.text, "phonemes": p.phonemes, "source": format!("{:?}", p.source)}))
                    .collect();
                print_json(out, &rows)?;
            } else {
                for (u, p) in units.iter().zip(&prons) {
                    if !p.phonemes.is_empty() {
                        say!(out, "{}\t{}", u.text, p.phonemes.join(" "));
                    }
                }
            }
        }
        PhonemeCmd::Per { reference, hyp } => {
            let r: Vec<&str> = reference.split_whitespace().collect();
            let h: Vec<&str> = hyp.split_whitespace().collect();
            let rate = per(&r, &h).map_err(data)?;
            if json {
                print_json(out, &json!({"per": rate}))?;
            } else {
                say!(out, "{rate:.4}");
            }
        }
    }
    Ok(())
}

fn grpo(cmd: GrpoCmd, seed: Option<u64>, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        GrpoCmd::Train {
            config,
            steps,
            out: path,
        } => {
            let mut cfg = match config {
                Some(p) => parse_json::<GrpoConfig>(&read_text(&p)?, &p.display().to_string()).map_err(data)?,
                None => GrpoConfig::default(),
            };
            cfg.seed = resolve_seed(seed, cfg.seed)?;
            if let Some(n) = steps {
                cfg.total_steps = n;
            }
            let (records, _) = crate::train::run(&cfg)?;
            let lines = to_jsonl(&records);
            match path {
                Some(p) => {
                    write_text(&p, &lines)?;
                    let last = records.last();
                    say!(
                        out,
                        "{} steps  final mean reward {:.4}",
                        records.len(),
                        last.map_or(0.0, |r| r.mean_reward)
                    );
                }
                None => write!(out, "{lines}").map_err(stdout_err)?,
            }
        }
        GrpoCmd::Schedule { last, total, step } => {
            let [t, h, l] = parse_floats::<3>(&last, "--final")?;
            let sched = ClipSchedule::from_initial((t, h, l), total).map_err(data)?;
            let steps: Vec<u64> = match step {
                Some(s) => vec![s],
                None => (0..=total).collect(),
            };
            let mut rows = Vec::new();
            for s in steps {
                let p = sched.at(s).map_err(data)?;
                rows.push(
                    json!({"step": s, "T": p.temperature, "eps_h": p.clip.eps_high(), "eps_l": p.clip.eps_low()}),
                );
            }
            if json {
                print_json(out, &rows)?;
            } else {
                say!(out, "step\tT\teps_h\teps_l");
                for r in &rows {
                    say!(
                        out,
                        "{}\t{:.4}\t{:.4}\t{:.4}",
                        r["step"],
                        r["T"].as_f64().unwrap_or_default(),
                        r["eps_h"].as_f64().unwrap_or_default(),
                        r["eps_l"].as_f64().unwrap_or_default()
                    );
                }
            }
        }
        GrpoCmd::Advantages {
            rewards,
            weights,
            exclude_sim,
        } => {
            let group: Vec<RewardVector> =
                parse_json(&read_text(&rewards)?, &rewards.display().to_string()).map_err(data)?;
            if group.len() < 2 {
                return Err(data(Error::Data("a group needs at least two reward vectors".into())));
            }
            for r in &group {
                r.validate().map_err(data)?;
            }
            let [cer, sim, emo, laugh] = parse_floats::<4>(&weights, "--weights")?;
            let w = FusionWeights { cer, sim, emo, laugh };
            w.validate().map_err(data)?;
            let effective = if exclude_sim { w.without_sim() } else { w };
            let reg = regularize(&group);
            let fused = fuse(&reg, &effective);
            let adv = group_advantages(&fused);
            debug_assert_eq!(adv, advantages(&group, &effective));
            let homogeneous = is_homogeneous(
                &dataforge_core::grpo::RolloutGroup {
                    prompt_id: String::new(),
                    rollouts: group
                        .iter()
                        .map(|r| dataforge_core::grpo::Rollout {
                            actions: vec![],
                            behavior_logprobs: vec![],
                            rewards: *r,
                        })
                        .collect(),
                },
                &w,
                exclude_sim,
            );
            if json {
                print_json(
                    out,
                    &json!({
                        "cer": reg.cer, "sim": reg.sim, "emo": reg.emo, "laugh": reg.laugh,
                        "fused": fused, "advantages": adv, "homogeneous": homogeneous,
                    }),
                )?;
            } else {
                say!(out, "i\tfused\tadvantage");
                for (i, (f, a)) in fused.iter().zip(&adv).enumerate() {
                    say!(out, "{i}\t{f:.4}\t{a:.4}");
                }
                say!(out, "homogeneous {homogeneous}");
            }
        }
        GrpoCmd::Surrogate {
            ratio,
            advantage,
            eps_low,
            eps_high,
        } => {
            if ratio.is_nan() || ratio <= 0.0 {
                return Err(CliError::Usage("--ratio must be positive".into()));
            }
            let range = ClipRange::new(eps_low, eps_high).map_err(data)?;
            let v = clipped_surrogate(ratio, advantage, &range);
            if json {
                print_json(
                    out,
                    &json!({"value": v, "lower": range.lower(), "upper": range.upper()}),
                )?;
            } else {
                say!(out, "{v}");
            }
        }
        GrpoCmd::Laughter { text, detected, asr } => {
            let segs: Vec<Segment> = if detected {
                vec![Segment::new(0.0, 1.0).map_err(data)?]
            } else {
                vec![]
            };
            let r = laughter_reward(&text, &LaughterLexicon::default(), &segs, &asr);
            if json {
                print_json(out, &json!({"laugh": r}))?;
            } else {
                match r.value() {
                    Some(v) => say!(out, "{v}"),
                    None => say!(out, "n/a"),
                }
            }
        }
    }
    Ok(())
}

fn audio(cmd: AudioCmd, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        AudioCmd::Standardize { input, out: path, rate } => {
            let raw = read_wav(&input)?;
            let clip = standardize(&raw, rate).map_err(data)?;
            write_wav(&path, &clip, WavFormat::Float32)?;
            if json {
                print_json(
                    out,
                    &json!({"samples": clip.len(), "sample_rate": rate, "duration_s": clip.duration_s()}),
                )?;
            } else {
                say!(
                    out,
                    "{} samples at {} Hz ({:.3} s)",
                    clip.len(),
                    rate,
                    clip.duration_s()
                );
            }
        }
        AudioCmd::Vad {
            input,
            frame_ms,
            threshold,
            min_gap_ms,
        } => {
            let clip = mono(&input)?;
            let params = VadParams {
                frame_ms,
                energy_threshold: threshold,
                min_gap_ms,
            };
            let segs = detect_speech(&clip, &params).map_err(data)?;
            if json {
                print_json(out, &segs)?;
            } else {
                for s in &segs {
                    say!(out, "{:.3}\t{:.3}", s.start_s, s.end_s);
                }
            }
        }
        AudioCmd::Normalize { input, out: path, db } => {
            let clip = read_clip(&input)?;
            let n = normalize_amplitude(&clip, db).map_err(data)?;
            write_wav(&path, &n, WavFormat::Float32)?;
            if json {
                print_json(out, &json!({"peak_before": clip.peak(), "peak_after": n.peak()}))?;
            } else {
                say!(out, "peak {:.6} -> {:.6}", clip.peak(), n.peak());
            }
        }
        AudioCmd::Concat {
            inputs,
            out_dir,
            mode,
            speaker,
            seconds,
        } => {
            let clips = inputs.iter().map(|p| mono(p)).collect::<Result<Vec<_>, _>>()?;
            let outputs: Vec<AudioClip> = match mode {
                ConcatMode::Coarse => {
                    let spans = clips
                        .iter()
                        .map(|c| Ok((c, Segment::new(0.0, c.duration_s())?)))
                        .collect::<Result<Vec<_>, dataforge_core::audio::AudioError>>()
                        .map_err(data)?;
                    coarse_concat(&spans, seconds.unwrap_or(COARSE_TARGET_S)).map_err(data)?
                }
                ConcatMode::Speaker => {
                    let frags = clips
                        .iter()
                        .map(|c| Fragment::new(c, Segment::new(0.0, c.duration_s())?, speaker.as_str()))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(data)?;
                    speaker_concat(&frags, seconds.unwrap_or(SPEAKER_CAP_S))
                        .map_err(data)?
                        .into_iter()
                        .map(|s| s.clip)
                        .collect()
                }
            };
            let mut written = Vec::new();
            for (k, c) in outputs.iter().enumerate() {
                let p = out_dir.join(format!("{k}.wav"));
                write_wav(&p, c, WavFormat::Float32)?;
                written.push(json!({"path": p.display().to_string(), "duration_s": c.duration_s()}));
            }
            if json {
                print_json(out, &written)?;
            } else {
                for w in &written {
                    say!(
                        out,
                        "{}\t{:.3}",
                        w["path"].as_str().unwrap_or_default(),
                        w["duration_s"].as_f64().unwrap_or_default()
                    );
                }
            }
        }
    }
    Ok(())
}

/// Full entry point: parse, run, map failures to exit codes.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match run(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
