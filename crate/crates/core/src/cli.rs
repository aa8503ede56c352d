//! Command-line front end. Every subcommand writes only below its `--out` path
//! and leaves a `manifest.json` recording the materialized config and timings.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, CurveOptions};
use crate::data::{self, read_wav, write_wav, WavEncoding};
use crate::dsp::{self, WORKING_RATE};
use crate::encoder::{self, FreezePolicy, LayerStack, ToyEncoder};
use crate::enhancer::{self, Enhancer, FeatureSource, InferenceMode, TrainConfig};
use crate::error::{ensure, Error, Result};
use crate::fusion::{self, Composition};
use crate::metrics::{self, EvalItem, MetricOptions};
use crate::{fsutil, gradsuite};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisOptions {
    /// Utterances sampled for the averaged curve.
    pub samples: usize,
    pub drop_last: usize,
    pub per_sample_normalization: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            samples: 200,
            drop_last: 0,
            per_sample_normalization: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthOptions {
    pub utterances: usize,
    pub samples: usize,
    pub snrs: Vec<f64>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            utterances: enhancer::SMOKE_TRAIN + enhancer::SMOKE_TEST,
            samples: enhancer::SMOKE_LEN,
            snrs: enhancer::SMOKE_SNRS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

/// Settings for any subcommand. Unknown keys are rejected; `seed` replaces `train.seed`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub train: TrainConfig,
    pub inference: InferenceMode,
    pub metrics: MetricOptions,
    pub analysis: AnalysisOptions,
    pub synth: SynthOptions,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => fsutil::read_json(p).map_err(|e| match e {
                Error::Json(j) => Error::InvalidInput(format!("{}: {j}", p.display())),
                other => other,
            })?,
            None => RunConfig::default(),
        };
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    fn set_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.train.seed = self.seed;
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    args: Vec<String>,
    config: &'a RunConfig,
    seed: u64,
    git_describe: Option<String>,
    started_unix_secs: u64,
    timings_secs: BTreeMap<String, f64>,
    outputs: Vec<String>,
}

fn git_describe() -> Option<String> {
    let out = Command::new("git").args(["describe", "--always", "--dirty", "--tags"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

/// Phase timer and output list for one run.
struct Run {
    command: &'static str,
    args: Vec<String>,
    started: SystemTime,
    phase: Instant,
    timings: BTreeMap<String, f64>,
    outputs: Vec<String>,
}

impl Run {
    fn new(command: &'static str, args: &[OsString]) -> Self {
        Self {
            command,
            args: args.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
            started: SystemTime::now(),
            phase: Instant::now(),
            timings: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        self.timings.insert(name.to_string(), self.phase.elapsed().as_secs_f64());
        self.phase = Instant::now();
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    fn finish(mut self, cfg: &RunConfig, manifest_path: &Path) -> Result<()> {
        self.lap("final");
        let manifest = RunManifest {
            command: self.command,
            args: self.args,
            config: cfg,
            seed: cfg.seed,
            git_describe: git_describe(),
            started_unix_secs: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            timings_secs: self.timings,
            outputs: self.outputs,
        };
        fsutil::write_json(manifest_path, &manifest)
    }
}

#[derive(Debug, Parser)]
#[command(name = "sslse", version, about = "Speech enhancement with fused latent and spectrogram features")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Resample a corpus to 16 kHz and check pair lengths.
    Prepare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic clean/noisy corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Clean speech WAVs; synthetic speech when omitted.
        #[arg(long, requires = "noise_dir")]
        clean_dir: Option<PathBuf>,
        #[arg(long, requires = "clean_dir")]
        noise_dir: Option<PathBuf>,
        #[arg(long)]
        utterances: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        /// Comma-separated SNRs in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snrs: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write `.ssle` layer stacks for a corpus or re-validate existing files.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "passthrough")]
        corpus: Option<PathBuf>,
        /// Directory of `.ssle` files to validate and copy.
        #[arg(long)]
        passthrough: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the enhancer.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_parser = parse_composition)]
        composition: Option<Composition>,
        #[arg(long, value_parser = parse_policy)]
        policy: Option<FreezePolicy>,
        /// Noisy-utterance `.ssle` files to use instead of the toy encoder.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance noisy WAVs with a trained model.
    Enhance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// A WAV file, a directory of WAVs, or a corpus with `noisy/`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Split utterances into windows of this many samples.
        #[arg(long)]
        window_samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Layer-wise clean/noisy distance curve and its correlation with layer weights.
    AnalyzeCn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        clean_emb: PathBuf,
        #[arg(long)]
        noisy_emb: PathBuf,
        /// `weights.json` written by `train`.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        drop_last: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        per_sample_normalization: bool,
        /// Output CSV path; the JSON summary and manifest go next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Objective scores of degraded WAVs against clean references.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        degraded: PathBuf,
        /// External PESQ command with `{clean}` and `{degraded}` placeholders.
        #[arg(long)]
        pesq_command: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every feature composition and score each on a test corpus.
    ReproTable {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        test_corpus: Option<PathBuf>,
        #[arg(long, value_parser = parse_policy)]
        policy: Option<FreezePolicy>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_composition(s: &str) -> std::result::Result<Composition, String> {
    s.parse().map_err(|_| "expected one of ll, ws, ll+log1p, ws+log1p".to_string())
}

fn parse_policy(s: &str) -> std::result::Result<FreezePolicy, String> {
    s.parse().map_err(|_| "expected one of frozen, pf, ef, tfs".to_string())
}

fn required(value: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    value
        .or_else(|| fallback.clone())
        .ok_or_else(|| Error::InvalidInput(format!("--{what} is required (or set it under `paths` in the config)")))
}

/// Parse `argv` (including the program name) and run. Returns the process exit code:
/// 0 on success, 1 on a domain error, 2 on a usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\n{}", usage_for(&argv));
            }
            return e.exit_code();
        }
    };
    match run(cli.command, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Usage line of the subcommand named in `argv`, or of the whole tool.
fn usage_for(argv: &[OsString]) -> clap::builder::StyledStr {
    let mut cmd = Cli::command();
    let name = argv.get(1).and_then(|a| a.to_str()).map(str::to_owned);
    match name.and_then(|n| cmd.find_subcommand_mut(&n).map(|s| s.render_usage())) {
        Some(u) => u,
        None => cmd.render_usage(),
    }
}

fn run(cmd: Cmd, argv: &[OsString]) -> Result<()> {
    match cmd {
        Cmd::Prepare { common, corpus, out } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            cfg.set_seed(common.seed);
            let mut r = Run::new("prepare", argv);
            let corpus = required(corpus, &cfg.paths.corpus, "corpus")?;
            let pairs = data::load_corpus(&corpus)?;
            r.lap("load");
            let pairs = pairs
                .into_iter()
                .map(|p| {
                    let clean = dsp::resample(&p.clean, WORKING_RATE)?;
                    let noisy = dsp::resample(&p.noisy, WORKING_RATE)?;
                    let mut q = data::UtterancePair::new(p.id, clean, noisy)?;
                    q.snr_db = p.snr_db;
                    Ok(q)
                })
                .collect::<Result<Vec<_>>>()?;
            r.lap("resample");
            data::write_corpus(&pairs, &out)?;
            r.output(&out.join("manifest.json"));
            println!("prepared {} pairs in {}", pairs.len(), out.display());
            r.finish(&cfg, &out.join(MANIFEST_FILE))
        }
        Cmd::Synth {
            common,
            clean_dir,
            noise_dir,
            utterances,
            samples,
            snrs,
            out,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            cfg.set_seed(common.seed);
            if let Some(n) = utterances {
                cfg.synth.utterances = n;
            }
            if let Some(n) = samples {
                cfg.synth.samples = n;
            }
            if let Some(s) = snrs {
                cfg.synth.snrs = s;
            }
            let mut r = Run::new("synth", argv);
            let pairs = match (clean_dir, noise_dir) {
                (Some(c), Some(n)) => data::synth_corpus(&c, &n, &cfg.synth.snrs, cfg.seed)?,
                _ => data::toy_corpus(cfg.synth.utterances, cfg.synth.samples, &cfg.synth.snrs, cfg.seed)?,
            };
            r.lap("synthesize");
            // the corpus manifest lives next to the run manifest under a different name
            let corpus_dir = out.clone();
            data::write_corpus(&pairs, &corpus_dir)?;
            r.output(&corpus_dir.join("manifest.json"));
            println!("wrote {} pairs to {}", pairs.len(), out.display());
            r.finish(&cfg, &out.join("run.json"))
        }
        Cmd::Embed {
            common,
            corpus,
            passthrough,
            out,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            cfg.set_seed(common.seed);
            let mut r = Run::new("embed", argv);
            let mut count = 0;
            if let Some(src) = passthrough {
                for (id, stack) in encoder::read_embedding_dir(&src)? {
                    encoder::write_embedding_file(&stack, &out.join(format!("{id}.ssle")))?;
                    count += 1;
                }
            } else {
                let corpus = required(corpus, &cfg.paths.corpus, "corpus")?;
                let pairs = data::load_corpus(&corpus)?;
                let enc = ToyEncoder::new(cfg.train.encoder.clone(), cfg.seed)?;
                r.lap("load");
                for p in &pairs {
                    for (side, wav) in [("clean", &p.clean), ("noisy", &p.noisy)] {
                        let stack = enc.forward(wav)?;
                        encoder::write_embedding_file(&stack, &out.join(side).join(format!("{}.ssle", p.id)))?;
                    }
                    count += 1;
                }
                enc_summary(&out, &enc)?;
            }
            r.lap("embed");
            r.output(&out);
            println!("wrote {count} embeddings under {}", out.display());
            r.finish(&cfg, &out.join(MANIFEST_FILE))
        }
        Cmd::Train {
            common,
            corpus,
            composition,
            policy,
            embeddings,
            max_steps,
            lr,
            hidden,
            batch_size,
            out,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            cfg.set_seed(common.seed);
            let t = &mut cfg.train;
            if let Some(c) = composition {
                t.composition = c;
            }
            if let Some(p) = policy {
                t.policy = p;
            }
            if let Some(v) = max_steps {
                t.max_steps = v;
            }
            if let Some(v) = lr {
                t.lr = v;
            }
            if let Some(v) = hidden {
                t.hidden = v;
            }
            if let Some(v) = batch_size {
                t.batch_size = v;
            }
            let mut r = Run::new("train", argv);
            let corpus = required(corpus, &cfg.paths.corpus, "corpus")?;
            let pairs = data::load_corpus(&corpus)?;
            let embeddings = embeddings.or_else(|| cfg.paths.embeddings.clone());
            r.lap("load");
            train_to(&pairs, &cfg.train, embeddings.as_deref(), &out, &mut r)?;
            r.finish(&cfg, &out.join(MANIFEST_FILE))
        }
        Cmd::Enhance {
            common,
            model,
            input,
            embeddings,
            window_samples,
            out,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            cfg.set_seed(common.seed);
            if let Some(w) = window_samples {
                cfg.inference = InferenceMode::Tiled { window_samples: w };
            }
            let mut r = Run::new("enhance", argv);
            let sys = Enhancer::load(&model)?;
            let inputs = noisy_inputs(&input)?;
            let stacks = embeddings.map(|d| encoder::read_embedding_dir(&d)).transpose()?;
            r.lap("load");
            for (id, path) in &inputs {
                let noisy = read_wav(path)?;
                let emb = lookup(stacks.as_ref(), id)?;
                let y = sys.enhance(&noisy, emb, cfg.inference)?;
                let dest = out.join(format!("{id}.wav"));
                write_wav(&y, &dest, WavEncoding::Float32)?;
                r.output(&dest);
            }
            r.lap("enhance");
            println!("enhanced {} files into {}", inputs.len(), out.display());
            r.finish(&cfg, &out.join(MANIFEST_FILE))
        }
        Cmd::AnalyzeCn {
            common,
            clean_emb,
            noisy_emb,
            weights,
            drop_last,
            samples,
            per_sample_normalization,
            out,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            cfg.set_seed(common.seed);
            if let Some(d) = drop_last {
                cfg.analysis.drop_last = d;
            }
            if let Some(n) = samples {
                cfg.analysis.samples = n;
            }
            cfg.analysis.per_sample_normalization |= per_sample_normalization;
            let mut r = Run::new("analyze-cn", argv);
            let clean = encoder::read_embedding_dir(&clean_emb)?;
            let mut noisy = encoder::read_embedding_dir(&noisy_emb)?;
            let ids: Vec<String> = clean.keys().filter(|k| noisy.contains_key(*k)).cloned().collect();
            ensure!(!ids.is_empty(), InvalidInput, "no utterance has both clean and noisy embeddings");
            let chosen = analysis::sample_ids(&ids, cfg.analysis.samples, cfg.seed);
            let pairs = chosen
                .iter()
                .map(|id| paired_stacks(clean[id].clone(), noisy.remove(id).expect("id in both")))
                .collect::<Result<Vec<_>>>()?;
            r.lap("load");
            let curve = analysis::average_curve(
                &pairs,
                CurveOptions {
                    per_sample_normalization: cfg.analysis.per_sample_normalization,
                },
            )?;
            let w = weights.map(|p| fusion::read_weights_json(&p)).transpose()?;
            let json = out.with_extension("json");
            let summary = analysis::write_curve(&curve, w.as_deref(), cfg.analysis.drop_last, &out, &json)?;
            r.lap("analyze");
            r.output(&out);
            r.output(&json);
            if curve.constant {
                eprintln!("warning: the distance curve is constant; normalized values are all zero");
            }
            if let Some(why) = &summary.pearson_undefined {
                eprintln!("warning: pearson correlation undefined ({why})");
            }
            match summary.pearson {
                Some(p) => println!("{} layers, {} samples, pearson {p:.4}", curve.num_layers(), curve.n_samples),
                None => println!("{} layers, {} samples", curve.num_layers(), curve.n_samples),
            }
            let stem = out.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            r.finish(&cfg, &out.with_file_name(format!("{stem}.manifest.json")))
        }
        Cmd::Evaluate {
            common,
            clean,
            degraded,
            pesq_command,
            out,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            cfg.set_seed(common.seed);
            if pesq_command.is_some() {
                cfg.metrics.pesq_command = pesq_command;
            }
            let mut r = Run::new("evaluate", argv);
            let items = eval_items(&clean, &degraded)?;
            let adapter = cfg.metrics.adapter()?;
            let report = metrics::evaluate_files(&items, &cfg.metrics, &adapter)?;
            r.lap("score");
            report.write(&out.join("scores.csv"), &out.join("means.json"))?;
            r.output(&out.join("scores.csv"));
            r.output(&out.join("means.json"));
            let m = &report.means;
            println!(
                "{} utterances: stoi {:.4} segsnr {:.3} llr {:.4} wss {:.3}",
                items.len(),
                m.stoi,
                m.segsnr,
                m.llr,
                m.wss
            );
            r.finish(&cfg, &out.join(MANIFEST_FILE))
        }
        Cmd::Gradcheck { common, seeds, out } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            cfg.set_seed(common.seed);
            let mut r = Run::new("gradcheck", argv);
            let results = gradsuite::run_suite(seeds)?;
            r.lap("check");
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["case", "seeds", "worst_rel_error", "passed"])?;
            for c in &results {
                w.write_record([
                    c.case.clone(),
                    c.seeds.to_string(),
                    format!("{:e}", c.worst_rel_error),
                    c.passed().to_string(),
                ])?;
                println!("{:<20} {:.2e}", c.case, c.worst_rel_error);
            }
            let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
            fsutil::write_atomic(&out.join("gradcheck.csv"), &bytes)?;
            r.output(&out.join("gradcheck.csv"));
            let failed: Vec<&str> = results.iter().filter(|c| !c.passed()).map(|c| c.case.as_str()).collect();
            r.finish(&cfg, &out.join(MANIFEST_FILE))?;
            ensure!(
                failed.is_empty(),
                Numerical,
                "gradient check above {:e}: {}",
                gradsuite::TOLERANCE,
                failed.join(", ")
            );
            Ok(())
        }
        Cmd::ReproTable {
            common,
            corpus,
            test_corpus,
            policy,
            max_steps,
            out,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            cfg.set_seed(common.seed);
            if let Some(p) = policy {
                cfg.train.policy = p;
            }
            if let Some(v) = max_steps {
                cfg.train.max_steps = v;
            }
            let mut r = Run::new("repro-table", argv);
            let train_pairs = data::load_corpus(&required(corpus, &cfg.paths.corpus, "corpus")?)?;
            let test_dir = required(test_corpus, &cfg.paths.test_corpus, "test-corpus")?;
            let test_pairs = data::load_corpus(&test_dir)?;
            r.lap("load");
            let adapter = cfg.metrics.adapter()?;
            let mut rows = Vec::new();
            let noisy_items: Vec<EvalItem> = test_pairs
                .iter()
                .map(|p| EvalItem {
                    id: p.id.clone(),
                    clean: test_dir.join("clean").join(format!("{}.wav", p.id)),
                    degraded: test_dir.join("noisy").join(format!("{}.wav", p.id)),
                })
                .collect();
            let noisy_ok = noisy_items.iter().all(|i| i.clean.exists() && i.degraded.exists());
            if noisy_ok {
                let rep = metrics::evaluate_files(&noisy_items, &cfg.metrics, &adapter)?;
                rows.push(("noisy".to_string(), rep.means));
            }
            for comp in Composition::ALL {
                let mut tc = cfg.train.clone();
                tc.composition = comp;
                let dir = out.join("runs").join(comp.as_str());
                let sys = train_to(&train_pairs, &tc, None, &dir, &mut r)?;
                let enhanced_dir = dir.join("enhanced");
                let mut items = Vec::new();
                for p in &test_pairs {
                    let y = sys.enhance(&p.noisy, None, cfg.inference)?;
                    let clean_path = enhanced_dir.join("clean").join(format!("{}.wav", p.id));
                    let deg_path = enhanced_dir.join(format!("{}.wav", p.id));
                    write_wav(&p.clean, &clean_path, WavEncoding::Float32)?;
                    write_wav(&y, &deg_path, WavEncoding::Float32)?;
                    items.push(EvalItem {
                        id: p.id.clone(),
                        clean: clean_path,
                        degraded: deg_path,
                    });
                }
                let rep = metrics::evaluate_files(&items, &cfg.metrics, &adapter)?;
                r.lap(&format!("{comp}"));
                rows.push((comp.to_string(), rep.means));
            }
            let table = out.join("table.csv");
            fsutil::write_atomic(&table, &table_csv(&rows)?)?;
            r.output(&table);
            for (name, m) in &rows {
                println!("{name:<10} stoi {:.4} segsnr {:.3} llr {:.4} wss {:.3}", m.stoi, m.segsnr, m.llr, m.wss);
            }
            r.finish(&cfg, &out.join(MANIFEST_FILE))
        }
    }
}

fn enc_summary(out: &Path, enc: &ToyEncoder) -> Result<()> {
    fsutil::write_json(&out.join("encoder.json"), &enc.config)
}

fn paired_stacks(clean: LayerStack, noisy: LayerStack) -> Result<(LayerStack, LayerStack)> {
    // edge padding can leave the two exports a frame apart
    let frames = clean.frames().min(noisy.frames());
    Ok((clean.truncated(frames)?, noisy.truncated(frames)?))
}

fn lookup<'a>(stacks: Option<&'a BTreeMap<String, LayerStack>>, id: &str) -> Result<Option<&'a LayerStack>> {
    match stacks {
        None => Ok(None),
        Some(m) => m
            .get(id)
            .map(Some)
            .ok_or_else(|| Error::InvalidInput(format!("no embedding for `{id}`"))),
    }
}

fn noisy_inputs(input: &Path) -> Result<Vec<(String, PathBuf)>> {
    let files = if input.is_file() {
        vec![input.to_path_buf()]
    } else if input.join("noisy").is_dir() {
        data::wav_files(&input.join("noisy"))?
    } else {
        data::wav_files(input)?
    };
    ensure!(!files.is_empty(), InvalidInput, "no WAV files at {}", input.display());
    Ok(files.into_iter().map(|p| (data::stem(&p), p)).collect())
}

fn eval_items(clean: &Path, degraded: &Path) -> Result<Vec<EvalItem>> {
    let mut items = Vec::new();
    for c in data::wav_files(clean)? {
        let id = data::stem(&c);
        let d = degraded.join(format!("{id}.wav"));
        if d.exists() {
            items.push(EvalItem { id, clean: c, degraded: d });
        }
    }
    ensure!(
        !items.is_empty(),
        InvalidInput,
        "no file names shared between {} and {}",
        clean.display(),
        degraded.display()
    );
    Ok(items)
}

fn train_to(
    pairs: &[data::UtterancePair],
    cfg: &TrainConfig,
    embeddings: Option<&Path>,
    out: &Path,
    r: &mut Run,
) -> Result<Enhancer> {
    let stacks = embeddings.map(encoder::read_embedding_dir).transpose()?;
    let source = match &stacks {
        Some(m) => FeatureSource::Embeddings(m),
        None => FeatureSource::Toy(ToyEncoder::new(cfg.encoder.clone(), cfg.seed)?),
    };
    let outcome = enhancer::train(pairs, cfg, source)?;
    r.lap(&format!("train:{}", out.display()));
    outcome.best.save(&out.join("model"))?;
    outcome.best.layer_weights()?.write_json(&out.join("weights.json"))?;
    enhancer::write_log_csv(&outcome.log, &out.join("loss.csv"))?;
    fsutil::write_json(&out.join("split.json"), &outcome.split)?;
    fsutil::write_json(
        &out.join("summary.json"),
        &serde_json::json!({
            "initial_val": outcome.initial_val,
            "best_val": outcome.best_val,
            "best_step": outcome.best_step,
            "steps": outcome.steps,
        }),
    )?;
    for f in ["model", "weights.json", "loss.csv", "split.json", "summary.json"] {
        r.output(&out.join(f));
    }
    println!(
        "{}: val loss {:.4} -> {:.4} (best at step {} of {})",
        out.display(),
        outcome.initial_val,
        outcome.best_val,
        outcome.best_step,
        outcome.steps
    );
    Ok(outcome.best)
}

fn table_csv(rows: &[(String, metrics::Scores)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["system", "pesq", "csig", "cbak", "covl", "stoi", "segsnr", "llr", "wss"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (name, m) in rows {
        w.write_record([
            name.clone(),
            opt(m.pesq),
            opt(m.csig),
            opt(m.cbak),
            opt(m.covl),
            m.stoi.to_string(),
            m.segsnr.to_string(),
            m.llr.to_string(),
            m.wss.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
}
