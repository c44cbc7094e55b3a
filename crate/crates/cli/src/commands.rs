//! Subcommand definitions and implementations.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ecm_core::classifier::{annotate_corpus, evaluate_classifier, train_classifier, EmotionClassifier, LexiconClassifier, RecurrentClassifier};
use ecm_core::corpus::synthetic::{generate_classifier_sentences, generate_synthetic_corpus, SyntheticConfig, TemplateBank};
use ecm_core::corpus::{load_corpus, load_sentences, save_corpus, save_sentences, split, EmotionLexicon, RawDialogue};
use ecm_core::evaluation::{ablation_suite, eip_matrix, evaluate, render_ablation_table, render_report_text};
use ecm_core::model::{EcmConfig, EcmModel};
use ecm_core::pipeline::{encode_split, prepare, PreparedData};
use ecm_core::training::{train, TrainConfig};

use crate::api::{decode_config, parse_emotion, respond, respond_all};
use crate::config::{files, RunConfig};
use crate::service::{self, AppState, LoadedModel};

#[derive(Debug, Parser)]
#[command(name = "ecm", version, about = "Emotion-conditioned conversation generation: data, training, evaluation and serving")]
pub struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `workdir` from the configuration.
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes the synthetic dialogue corpus and classifier sentences.
    GenData(GenData),
    /// Trains the neural emotion classifier and compares it with the lexicon classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Labels every response of a corpus with an emotion classifier.
    Annotate(AnnotateArgs),
    /// Trains the plain seq2seq model used to initialise the emotion models.
    Pretrain(PretrainArgs),
    /// Finetunes an emotion model from the pretrained checkpoint.
    Train(TrainArgs),
    /// Perplexity and emotion accuracy on the test split.
    Evaluate(EvaluateArgs),
    /// Emotion interaction pattern matrix of an annotated corpus.
    Eip(EipArgs),
    /// Generates responses for posts given as arguments or read from stdin.
    #[command(alias = "generate")]
    Chat(ChatArgs),
    /// Runs the HTTP chat service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenData {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Output directory; the work directory by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    pub sentences: Option<PathBuf>,
    #[arg(long)]
    pub held_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Annotator {
    Neural,
    Lexicon,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "neural")]
    pub with: Annotator,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch checkpoints go here.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    /// All three mechanisms on.
    Ecm,
    /// Emotion category embedding only.
    Emb,
    Seq2seq,
    NoEmb,
    NoImem,
    NoEmem,
}

impl Variant {
    pub fn apply(self, cfg: EcmConfig) -> EcmConfig {
        match self {
            Variant::Ecm => cfg.with_flags(true, true, true),
            Variant::Emb => cfg.with_flags(true, false, false),
            Variant::Seq2seq => cfg.with_flags(false, false, false),
            Variant::NoEmb => cfg.with_flags(false, true, true),
            Variant::NoImem => cfg.with_flags(true, false, true),
            Variant::NoEmem => cfg.with_flags(true, true, false),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Annotated corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Mechanisms to enable; when unset the `[model]` flags apply.
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, env = "ECM_CHECKPOINT")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Neural classifier for the secondary accuracy column; skipped when the file is missing.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Trains the four ablation configurations from the pretrained checkpoint instead.
    #[arg(long)]
    pub ablation: bool,
    /// Aligned text instead of JSON.
    #[arg(long)]
    pub text: bool,
}

#[derive(Debug, Args)]
pub struct EipArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Labels posts; the lexicon classifier when unset and no classifier checkpoint exists.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Also writes the matrix as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub text: bool,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long, env = "ECM_CHECKPOINT")]
    pub model: Option<PathBuf>,
    /// Category name, or `all` for one response per category.
    #[arg(long, default_value = "all")]
    pub emotion: String,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Includes the per-token decode trace.
    #[arg(long)]
    pub trace: bool,
    /// Posts; one per line from stdin when none are given.
    pub posts: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "ECM_CHECKPOINT")]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Allowed CORS origin; any origin when unset.
    #[arg(long)]
    pub cors_origin: Option<String>,
}

fn lexicon(cfg: &RunConfig) -> Result<EmotionLexicon> {
    Ok(match &cfg.lexicon {
        Some(p) => EmotionLexicon::load(p)?,
        None => EmotionLexicon::builtin(),
    })
}

fn or_file(p: &Option<PathBuf>, cfg: &RunConfig, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| cfg.file(name))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn print_json(out: &mut dyn Write, v: &Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn sentence_split(n: usize) -> usize {
    (n / 5).max(1)
}

pub fn gen_data(cfg: &RunConfig, args: &GenData, out: &mut dyn Write) -> Result<()> {
    let dir = args.out.clone().unwrap_or_else(|| cfg.workdir.clone());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let lex = lexicon(cfg)?;
    let bank = TemplateBank::default();
    let seed = args.seed.unwrap_or(cfg.data.seed);
    let syn = SyntheticConfig { seed, n_pairs: args.pairs.unwrap_or(cfg.data.pairs), empathy: cfg.data.empathy, ..Default::default() };
    let corpus = generate_synthetic_corpus(&syn, &bank, &lex)?;
    let unlabeled: Vec<RawDialogue> = corpus.dialogues().into_iter().map(|d| RawDialogue { emotion: None, ..d }).collect();
    save_corpus(&dir.join(files::DIALOGUES), &unlabeled)?;
    let n = cfg.data.classifier_sentences;
    save_sentences(&dir.join(files::SENTENCES), &generate_classifier_sentences(seed.wrapping_add(1), n, &bank, &lex)?)?;
    save_sentences(&dir.join(files::HELD_OUT), &generate_classifier_sentences(seed.wrapping_add(2), sentence_split(n), &bank, &lex)?)?;
    let counts: serde_json::Map<String, Value> =
        ecm_core::corpus::EmotionCategory::ALL.iter().map(|c| (c.name().to_string(), json!(corpus.counts[c.index()]))).collect();
    print_json(out, &json!({ "dir": dir.display().to_string(), "pairs": unlabeled.len(), "generator_counts": counts }))
}

pub fn train_classifier_cmd(cfg: &RunConfig, args: &TrainClassifierArgs, out: &mut dyn Write) -> Result<()> {
    let train = load_sentences(&or_file(&args.sentences, cfg, files::SENTENCES))?;
    let held = load_sentences(&or_file(&args.held_out, cfg, files::HELD_OUT))?;
    let (clf, report) = train_classifier(&train, &held, &cfg.classifier)?;
    let lexicon_report = evaluate_classifier(&LexiconClassifier { lexicon: lexicon(cfg)? }, &held);
    let path = or_file(&args.out, cfg, files::CLASSIFIER);
    ensure_parent(&path)?;
    clf.save(&path)?;
    print_json(out, &json!({ "checkpoint": path.display().to_string(), "neural": report, "lexicon": lexicon_report }))
}

fn load_classifier(cfg: &RunConfig, path: &Option<PathBuf>, required: bool) -> Result<Option<RecurrentClassifier>> {
    let p = or_file(path, cfg, files::CLASSIFIER);
    if !p.exists() && !required && path.is_none() {
        return Ok(None);
    }
    Ok(Some(RecurrentClassifier::load(&p).with_context(|| format!("loading classifier {}", p.display()))?))
}

pub fn annotate(cfg: &RunConfig, args: &AnnotateArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load_corpus(&or_file(&args.corpus, cfg, files::DIALOGUES))?;
    let (labeled, table) = match args.with {
        Annotator::Neural => {
            let clf = load_classifier(cfg, &args.classifier, true)?.expect("required");
            annotate_corpus(&corpus, &clf)
        }
        Annotator::Lexicon => annotate_corpus(&corpus, &LexiconClassifier { lexicon: lexicon(cfg)? }),
    };
    let path = or_file(&args.out, cfg, files::ANNOTATED);
    ensure_parent(&path)?;
    save_corpus(&path, &labeled)?;
    write!(out, "{}", table.render_text())?;
    Ok(())
}

fn train_config(base: &TrainConfig, log: PathBuf, checkpoint_dir: &Option<PathBuf>) -> TrainConfig {
    TrainConfig { log_path: Some(log), checkpoint_dir: checkpoint_dir.clone().or_else(|| base.checkpoint_dir.clone()), ..base.clone() }
}

fn log_summary(log: &ecm_core::training::TrainLog) -> Value {
    json!({ "epochs": log.entries.len(), "best_val_ppl": log.best_val_ppl(), "last": log.entries.last() })
}

pub fn pretrain(cfg: &RunConfig, args: &PretrainArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load_corpus(&or_file(&args.corpus, cfg, files::DIALOGUES))?;
    let data = prepare(&corpus, &lexicon(cfg)?, cfg.data.max_vocab, cfg.model.max_len, cfg.data.split, cfg.data.seed)?;
    let model_cfg = cfg.model.clone().with_flags(false, false, false).for_vocab(&data.vocab);
    let mut model = EcmModel::<f32>::new(model_cfg, data.vocab.clone(), cfg.pretrain.seed)?;
    let path = or_file(&args.out, cfg, files::PRETRAINED);
    ensure_parent(&path)?;
    let log = train(&mut model, &data.train, &data.valid, &train_config(&cfg.pretrain, cfg.file(files::PRETRAIN_LOG), &args.checkpoint_dir))?;
    model.save(&path)?;
    print_json(out, &json!({ "checkpoint": path.display().to_string(), "vocab": data.vocab.len(), "train": data.train.len(), "log": log_summary(&log) }))
}

/// Splits `corpus` as `pretrain` did and encodes it with `model`'s vocabulary.
fn split_for(cfg: &RunConfig, corpus: &[RawDialogue], vocab: &ecm_core::corpus::Vocab, max_len: usize) -> Result<PreparedData> {
    let raw = split(corpus, cfg.data.split, cfg.data.seed)?;
    Ok(encode_split(vocab.clone(), raw, max_len))
}

fn check_labeled(data: &PreparedData) -> Result<()> {
    if data.train.iter().chain(&data.valid).any(|e| e.emotion.is_none()) {
        bail!("corpus has unlabeled responses; run `ecm annotate` first");
    }
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig, args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let base = EcmModel::<f32>::load(&or_file(&args.pretrained, cfg, files::PRETRAINED))?;
    let corpus = load_corpus(&or_file(&args.corpus, cfg, files::ANNOTATED))?;
    let data = split_for(cfg, &corpus, base.vocab(), base.config().max_len)?;
    let model_cfg = cfg.model.clone().for_vocab(base.vocab());
    let model_cfg = match args.variant {
        Some(v) => v.apply(model_cfg),
        None => model_cfg,
    };
    if model_cfg.needs_emotion() {
        check_labeled(&data)?;
    }
    let (mut model, copied) = EcmModel::from_pretrained(&base, model_cfg, cfg.train.seed.wrapping_add(1))?;
    let path = or_file(&args.out, cfg, files::MODEL);
    ensure_parent(&path)?;
    let log = train(&mut model, &data.train, &data.valid, &train_config(&cfg.train, cfg.file(files::TRAIN_LOG), &args.checkpoint_dir))?;
    model.save(&path)?;
    print_json(out, &json!({ "checkpoint": path.display().to_string(), "copied": copied.len(), "log": log_summary(&log) }))
}

pub fn evaluate_cmd(cfg: &RunConfig, args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load_corpus(&or_file(&args.corpus, cfg, files::ANNOTATED))?;
    let scorer = LexiconClassifier { lexicon: lexicon(cfg)? };
    if args.ablation {
        let base = EcmModel::<f32>::load(&cfg.file(files::PRETRAINED))?;
        let data = split_for(cfg, &corpus, base.vocab(), base.config().max_len)?;
        check_labeled(&data)?;
        let full = cfg.model.clone().for_vocab(base.vocab());
        let rows = ablation_suite(&base, &full, &data.train, &data.valid, &data.test, &cfg.train, &scorer, &cfg.decode, cfg.eval.max_posts, cfg.train.seed)?;
        return if args.text { Ok(write!(out, "{}", render_ablation_table(&rows))?) } else { print_json(out, &serde_json::to_value(&rows)?) };
    }
    let model = EcmModel::<f32>::load(&or_file(&args.model, cfg, files::MODEL))?;
    let data = split_for(cfg, &corpus, model.vocab(), model.config().max_len)?;
    if data.test.is_empty() {
        bail!("test split is empty");
    }
    let neural = load_classifier(cfg, &args.classifier, false)?;
    let report = evaluate(&model, &data.test, &scorer, neural.as_ref().map(|c| c as &dyn EmotionClassifier), &cfg.decode, cfg.eval.max_posts)?;
    if args.text {
        write!(out, "{}", render_report_text("model", &report))?;
        Ok(())
    } else {
        print_json(out, &serde_json::to_value(&report)?)
    }
}

pub fn eip(cfg: &RunConfig, args: &EipArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load_corpus(&or_file(&args.corpus, cfg, files::ANNOTATED))?;
    let lex = LexiconClassifier { lexicon: lexicon(cfg)? };
    let neural = load_classifier(cfg, &args.classifier, false)?;
    let clf: &dyn EmotionClassifier = match &neural {
        Some(c) => c,
        None => &lex,
    };
    let pairs: Vec<_> = corpus.iter().map(|d| (clf.classify(&d.post), d.emotion.unwrap_or_else(|| clf.classify(&d.response)))).collect();
    let m = eip_matrix(&pairs);
    if let Some(p) = &args.csv {
        ensure_parent(p)?;
        std::fs::write(p, m.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    if args.text {
        write!(out, "{}", m.render_text())?;
        Ok(())
    } else {
        let empty: Vec<&str> = m.empty_rows().iter().map(|c| c.name()).collect();
        print_json(out, &json!({ "values": m.values, "support": m.support, "empty_rows": empty, "pairs": pairs.len() }))
    }
}

pub fn chat(cfg: &RunConfig, args: &ChatArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let model = EcmModel::<f32>::load(&or_file(&args.model, cfg, files::MODEL))?;
    let dc = decode_config(&cfg.decode, args.beam, args.max_len)?;
    let all = args.emotion.eq_ignore_ascii_case("all");
    let emotion = if all { None } else { Some(parse_emotion(&args.emotion)?) };
    let mut handle = |post: &str| -> Result<()> {
        let v = match emotion {
            None => serde_json::to_value(respond_all(&model, post, &dc, args.trace)?)?,
            Some(e) => serde_json::to_value(respond(&model, post, &[e], &dc, args.trace)?.remove(0))?,
        };
        writeln!(out, "{}", serde_json::to_string(&json!({ "post": post, "result": v }))?)?;
        Ok(())
    };
    if args.posts.is_empty() {
        for line in input.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                handle(&line)?;
            }
        }
    } else {
        for p in &args.posts {
            handle(p)?;
        }
    }
    Ok(())
}

pub fn serve_cmd(cfg: &RunConfig, args: &ServeArgs) -> Result<()> {
    let path = or_file(&args.model, cfg, files::MODEL);
    let loaded = if path.exists() {
        Some(LoadedModel { model: EcmModel::<f32>::load(&path)?, checkpoint: path })
    } else {
        eprintln!("checkpoint {} not found; serving without a model", path.display());
        None
    };
    let state = AppState::new(loaded, cfg.decode.clone());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(state, &args.bind, args.cors_origin.as_deref()))
}

pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(w) = cli.workdir {
        cfg.workdir = w;
    }
    match &cli.command {
        Command::GenData(a) => gen_data(&cfg, a, out),
        Command::TrainClassifier(a) => train_classifier_cmd(&cfg, a, out),
        Command::Annotate(a) => annotate(&cfg, a, out),
        Command::Pretrain(a) => pretrain(&cfg, a, out),
        Command::Train(a) => train_cmd(&cfg, a, out),
        Command::Evaluate(a) => evaluate_cmd(&cfg, a, out),
        Command::Eip(a) => eip(&cfg, a, out),
        Command::Chat(a) => chat(&cfg, a, input, out),
        Command::Serve(a) => serve_cmd(&cfg, a),
    }
}
