use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser as ClapParser, Subcommand, ValueEnum};

use speechparse_core::corpus::{
    assemble_examples, check_frame_count, compute_energy_features, max_total_energy, speaker_side_of,
    validate_alignments, Utterance, FBANK_BANDS,
};
use speechparse_core::metrics::{
    disfluency_stratum, length_stratum, sentence_counts, stratified_report, bootstrap_counts, EvalReport,
};
use speechparse_core::model::{parse_kv, ModelConfig};
use speechparse_core::prosody::DurationLexicon;
use speechparse_core::synth::{gen_synthetic, Grammar, SynthConfig};
use speechparse_core::train::{parse_utterance, train, TrainConfig, TrainSet};
use speechparse_core::treeops::{flatten_edits, linearize};
use speechparse_core::{Matrix, Tree};

use crate::data::{self, LEXICON_FILE};
use crate::formats::{
    read_alignments, read_frame_table, read_lexicon, read_sentences, read_treebank, write_alignments,
    write_attachments, write_frame_table, write_lexicon, write_treebank,
};
use crate::{checkpoint, parse_file, write_file, Error, Result};

const PITCH_FEATURES: usize = 3;
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const TIMING_FILE: &str = "timing.tsv";
pub const RUN_CONFIG_FILE: &str = "train.cfg";
pub const GRAMMAR_FILE: &str = "grammar.txt";

#[derive(ClapParser)]
#[command(name = "speechparse", version, about = "Constituency parsing of conversational speech")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Combine pitch tracks and filterbank energies into 6-column frame features.
    Featurize(FeaturizeArgs),
    /// Print trees as linearized symbol sequences.
    Linearize(LinearizeArgs),
    /// Train a parser on a data directory.
    Train(TrainArgs),
    /// Parse sentences with a trained model.
    Decode(DecodeArgs),
    /// Bracket precision, recall and F1 of predicted trees.
    Score(ScoreArgs),
    /// Per-length, per-fluency and per-sentence tables.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic corpus with pause-coupled attachments.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FeaturizeArgs {
    /// `id  frame  nccf  log_pitch  delta_log_pitch` rows
    #[arg(long)]
    pitch: PathBuf,
    /// `id  frame  40 band energies` rows
    #[arg(long)]
    fbank: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also estimate a duration lexicon from these trees and alignments
    #[arg(long, requires_all = ["alignments", "lexicon"])]
    trees: Option<PathBuf>,
    #[arg(long)]
    alignments: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct LinearizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key=value file with model and training settings
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override one setting, e.g. `--set features=pause,duration`
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_setting)]
    set: Vec<(String, String)>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "train")]
    train_split: String,
    /// Skipped when its trees file does not exist
    #[arg(long, default_value = "dev")]
    dev_split: String,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Treebank or token file; defaults to the split's trees under --data
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Text-only model for sentences without acoustics
    #[arg(long)]
    text_model: Option<PathBuf>,
    /// Directory holding alignments and frames for the input
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Write linearized symbol strings instead of trees
    #[arg(long)]
    linear: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strata {
    Length,
    Disfluency,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Flatten EDITED nodes before scoring
    #[arg(long)]
    flat: bool,
    #[arg(long, value_enum)]
    strata: Option<Strata>,
    /// Second system, tested against --pred with a paired bootstrap
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Directory for length.tsv, fluency.tsv and sentences.tsv
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    flat: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    sentences: usize,
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long, value_enum, default_value = "on")]
    coupling: Switch,
    #[arg(long)]
    ambiguous_only: bool,
    /// Emit each ambiguous sentence with both attachments
    #[arg(long)]
    mirror: bool,
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long)]
    disfluency_rate: Option<f64>,
    #[arg(long)]
    background_pause_rate: Option<f64>,
}

fn parse_setting(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected KEY=VALUE, found `{s}`")),
    }
}

/// Runs the command line on `args` (program name first) and returns the
/// exit code: 0 on success, 1 on failure, 2 on bad usage.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    let result = match cli.command {
        Command::Featurize(a) => featurize(a, err),
        Command::Linearize(a) => linearize_cmd(a, out),
        Command::Train(a) => train_cmd(a, err),
        Command::Decode(a) => decode(a, out, err),
        Command::Score(a) => score(a, out),
        Command::Analyze(a) => analyze(a),
        Command::Synth(a) => synth(a, err),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn note(err: &mut dyn Write, msg: std::fmt::Arguments<'_>) {
    let _ = writeln!(err, "{msg}");
}

fn featurize(a: FeaturizeArgs, err: &mut dyn Write) -> Result<()> {
    let pitch = parse_file(&a.pitch, |t| read_frame_table(t, PITCH_FEATURES))?;
    let fbank = parse_file(&a.fbank, |t| read_frame_table(t, FBANK_BANDS))?;
    let mut speaker_max: BTreeMap<String, f64> = BTreeMap::new();
    for (id, m) in &fbank {
        let e = speaker_max.entry(speaker_side_of(id)).or_insert(0.0);
        *e = e.max(max_total_energy(m));
    }
    let mut frames = BTreeMap::new();
    for (id, p) in &pitch {
        let at = |source| Error::Core {
            path: a.fbank.clone(),
            source,
        };
        let fb = fbank.get(id).ok_or_else(|| {
            at(speechparse_core::Error::Data {
                record: id.clone(),
                message: "no filterbank rows".into(),
            })
        })?;
        if fb.rows() != p.rows() {
            return Err(at(speechparse_core::Error::Data {
                record: id.clone(),
                message: format!("{} pitch frames but {} filterbank frames", p.rows(), fb.rows()),
            }));
        }
        let energy = compute_energy_features(fb, speaker_max[&speaker_side_of(id)]).map_err(at)?;
        let rows: Vec<Vec<f64>> = p
            .iter_rows()
            .zip(energy.iter_rows())
            .map(|(p, e)| p.iter().chain(e).copied().collect())
            .collect();
        frames.insert(id.clone(), Matrix::from_rows(PITCH_FEATURES + 3, &rows)?);
    }
    write_file(&a.out, write_frame_table(&frames).as_bytes())?;
    note(err, format_args!("wrote frames for {} utterances", frames.len()));

    if let (Some(trees), Some(al), Some(lex)) = (&a.trees, &a.alignments, &a.lexicon) {
        let trees = parse_file(trees, |t| read_treebank(t, true))?;
        let alignments = parse_file(al, read_alignments)?;
        let examples = assemble_examples(trees, &alignments, &BTreeMap::new())?;
        let lexicon = DurationLexicon::estimate(&examples);
        write_file(lex, write_lexicon(&lexicon).as_bytes())?;
        note(err, format_args!("estimated durations for {} words", lexicon.word_means.len()));
    }
    Ok(())
}

fn linearize_cmd(a: LinearizeArgs, out: &mut dyn Write) -> Result<()> {
    let trees = parse_file(&a.input, |t| read_treebank(t, true))?;
    let mut text = String::new();
    for (id, t) in &trees {
        let _ = writeln!(text, "{id}\t{}", linearize(t));
    }
    emit(out, a.out.as_deref(), &text)
}

fn known_keys() -> BTreeSet<String> {
    let mut keys: BTreeSet<String> = parse_kv(&ModelConfig::default().to_kv())
        .expect("default config")
        .into_keys()
        .collect();
    keys.extend(parse_kv(&TrainConfig::default().to_kv()).expect("default config").into_keys());
    keys.extend(["target_dev_f1".to_string(), "max_grad_norm".to_string()]);
    keys
}

/// Settings from the config file, then `--set`, then `--seed`.
fn run_settings(a: &TrainArgs) -> Result<BTreeMap<String, String>> {
    let mut kv = match &a.config {
        Some(path) => parse_file(path, parse_kv)?,
        None => BTreeMap::new(),
    };
    kv.extend(a.set.iter().cloned());
    if let Some(seed) = a.seed {
        kv.insert("seed".into(), seed.to_string());
    }
    let known = known_keys();
    if let Some(bad) = kv.keys().find(|k| !known.contains(*k)) {
        return Err(speechparse_core::Error::Config {
            field: bad.clone(),
            message: "unknown setting".into(),
        }
        .into());
    }
    Ok(kv)
}

fn train_cmd(a: TrainArgs, err: &mut dyn Write) -> Result<()> {
    let kv = run_settings(&a)?;
    let model_config = ModelConfig::from_kv(&kv)?;
    let train_config = TrainConfig::from_kv(&kv)?;
    let train_set = data::load_split(&a.data, &a.train_split)?;
    let dev_set = if data::trees_path(&a.data, &a.dev_split).exists() {
        data::load_split(&a.data, &a.dev_split)?
    } else {
        log::info!("no `{}` split, keeping the last epoch", a.dev_split);
        Vec::new()
    };
    let lexicon = data::load_lexicon(&a.data, &train_set)?;
    let start = Instant::now();
    let clock = move || start.elapsed().as_secs_f64();
    let (parser, log) = train(
        TrainSet {
            train: &train_set,
            dev: &dev_set,
            lexicon: &lexicon,
        },
        model_config,
        &train_config,
        &clock,
    )?;
    checkpoint::save(&a.out, &parser)?;
    write_file(&a.out.join(LEXICON_FILE), write_lexicon(&lexicon).as_bytes())?;
    let record = format!("{}{}", parser.config.to_kv(), train_config.to_kv());
    write_file(&a.out.join(RUN_CONFIG_FILE), record.as_bytes())?;
    // wall-clock goes in its own file so reruns leave the log byte-identical
    let timing = timing_tsv(&log.epoch_seconds);
    let log = speechparse_core::train::TrainLog {
        epoch_seconds: Vec::new(),
        ..log
    };
    write_file(&a.out.join(TRAIN_LOG_FILE), log.to_tsv().as_bytes())?;
    write_file(&a.out.join(TIMING_FILE), timing.as_bytes())?;
    let best = log.dev_f1.get(log.best_epoch.wrapping_sub(1)).copied();
    match best {
        Some(f1) => note(err, format_args!("best dev F1 {f1:.2} at epoch {}, {} updates", log.best_epoch, log.updates)),
        None => note(err, format_args!("trained {} epochs, {} updates", log.epoch_losses.len(), log.updates)),
    }
    Ok(())
}

fn timing_tsv(seconds: &[f64]) -> String {
    let mut s = String::from("epoch\tseconds\n");
    for (e, t) in seconds.iter().enumerate() {
        let _ = writeln!(s, "{}\t{t:.3}", e + 1);
    }
    s
}

fn model_lexicon(model_dir: &Path, data_dir: Option<&Path>) -> Result<DurationLexicon> {
    for dir in std::iter::once(model_dir).chain(data_dir) {
        let path = dir.join(LEXICON_FILE);
        if path.exists() {
            return parse_file(&path, read_lexicon);
        }
    }
    log::warn!("no {LEXICON_FILE} found, durations use the default word mean");
    Ok(DurationLexicon::default())
}

fn decode(a: DecodeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let model = checkpoint::load(&a.model)?;
    let text_model = a.text_model.as_deref().map(checkpoint::load).transpose()?;
    let lexicon = model_lexicon(&a.model, a.data.as_deref())?;
    let input = match (&a.input, &a.data) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => data::trees_path(d, &a.split),
        (None, None) => {
            return Err(speechparse_core::Error::Config {
                field: "input".into(),
                message: "give --input or --data".into(),
            }
            .into())
        }
    };
    let sentences = parse_file(&input, read_sentences)?;
    let (mut alignments, mut frames) = match &a.data {
        Some(d) => data::load_acoustics(d, &a.split)?,
        None => Default::default(),
    };
    let mut trees = Vec::with_capacity(sentences.len());
    let (mut backoff, mut repaired) = (0, 0);
    for (id, tokens) in sentences {
        let al = alignments.remove(&id);
        let fr = al.as_ref().and_then(|_| frames.remove(&id));
        if let Some(al) = &al {
            check_utterance(&id, tokens.len(), al, fr.as_ref())?;
        }
        let utt = Utterance {
            speaker_side: speaker_side_of(&id),
            id,
            tokens,
            alignments: al,
            frames: fr,
        };
        let parsed = parse_utterance(&model, text_model.as_ref(), &utt, &lexicon)?;
        backoff += usize::from(parsed.backoff);
        repaired += usize::from(parsed.repaired);
        trees.push((utt.id, parsed.tree));
    }
    let text = if a.linear {
        trees.iter().map(|(id, t)| format!("{id}\t{}\n", linearize(t))).collect()
    } else {
        write_treebank(&trees)
    };
    emit(out, a.out.as_deref(), &text)?;
    note(
        err,
        format_args!("parsed {} sentences, {backoff} text-only, {repaired} repaired", trees.len()),
    );
    Ok(())
}

fn check_utterance(id: &str, tokens: usize, al: &[(f64, f64)], frames: Option<&Matrix>) -> Result<()> {
    validate_alignments(id, al)?;
    if al.len() != tokens {
        return Err(speechparse_core::Error::Data {
            record: id.to_string(),
            message: format!("{} alignments for {tokens} tokens", al.len()),
        }
        .into());
    }
    if let Some(f) = frames {
        check_frame_count(id, f.rows(), al.last().map_or(0.0, |a| a.1))?;
    }
    Ok(())
}

/// Gold and predicted trees paired by position; ids must agree.
fn load_pair(gold: &Path, pred: &Path, flat: bool) -> Result<(Vec<String>, Vec<Tree>, Vec<Tree>)> {
    let g = parse_file(gold, |t| read_treebank(t, true))?;
    let p = parse_file(pred, |t| read_treebank(t, true))?;
    let pairing = |index: usize, message: String| Error::Core {
        path: pred.to_path_buf(),
        source: speechparse_core::Error::Pairing { index, message },
    };
    if g.len() != p.len() {
        return Err(pairing(g.len().min(p.len()), format!("{} gold trees, {} predicted", g.len(), p.len())));
    }
    if let Some(i) = g.iter().zip(&p).position(|(a, b)| a.0 != b.0) {
        return Err(pairing(i, format!("gold id `{}`, predicted id `{}`", g[i].0, p[i].0)));
    }
    let flatten = |t: Tree| if flat { flatten_edits(&t) } else { t };
    let ids = g.iter().map(|(id, _)| id.clone()).collect();
    let g = g.into_iter().map(|(_, t)| flatten(t)).collect();
    let p = p.into_iter().map(|(_, t)| flatten(t)).collect();
    Ok((ids, g, p))
}

fn report_rows(system: &str, report: &EvalReport, out: &mut String) {
    let mut row = |stratum: &str, r: &EvalReport| {
        let _ = writeln!(
            out,
            "{system}\t{stratum}\t{}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}",
            r.sentences, r.matched, r.gold_total, r.pred_total, r.precision, r.recall, r.f1
        );
    };
    row("all", report);
    for (name, r) in &report.strata {
        row(name, r);
    }
}

const REPORT_HEADER: &str = "system\tstratum\tsentences\tmatched\tgold\tpred\tprecision\trecall\tf1\n";

fn stratify(gold: &[Tree], pred: &[Tree], strata: Option<Strata>) -> Result<EvalReport> {
    let report = match strata {
        None => stratified_report(gold, pred, |_| String::new()).map(|mut r| {
            r.strata.clear();
            r
        })?,
        Some(Strata::Length) => stratified_report(gold, pred, length_stratum)?,
        Some(Strata::Disfluency) => stratified_report(gold, pred, disfluency_stratum)?,
    };
    Ok(report)
}

fn score(a: ScoreArgs, out: &mut dyn Write) -> Result<()> {
    let (_, gold, pred) = load_pair(&a.gold, &a.pred, a.flat)?;
    let mut text = String::from(REPORT_HEADER);
    report_rows("a", &stratify(&gold, &pred, a.strata)?, &mut text);
    if let Some(path) = &a.compare {
        let (_, _, other) = load_pair(&a.gold, path, a.flat)?;
        report_rows("b", &stratify(&gold, &other, a.strata)?, &mut text);
        let ca = sentence_counts(&gold, &pred)?;
        let cb = sentence_counts(&gold, &other)?;
        let p = bootstrap_counts(&ca, &cb, a.draws, a.seed)?;
        let _ = write!(text, "\ntest\tdraws\tseed\tp_value\nbootstrap\t{}\t{}\t{p}\n", a.draws, a.seed);
    }
    emit(out, None, &text)
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let (ids, gold, pred) = load_pair(&a.gold, &a.pred, a.flat)?;
    for (file, strata) in [("length.tsv", Strata::Length), ("fluency.tsv", Strata::Disfluency)] {
        let mut text = String::from(REPORT_HEADER);
        report_rows("a", &stratify(&gold, &pred, Some(strata))?, &mut text);
        write_file(&a.out.join(file), text.as_bytes())?;
    }
    let counts = sentence_counts(&gold, &pred)?;
    let mut text = String::from("id\ttokens\tlength\tfluency\tmatched\tgold\tpred\tf1\n");
    for ((id, g), c) in ids.iter().zip(&gold).zip(&counts) {
        let _ = writeln!(
            text,
            "{id}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.2}",
            g.leaf_count(),
            length_stratum(g),
            disfluency_stratum(g),
            c.matched,
            c.gold,
            c.pred,
            c.prf().2
        );
    }
    write_file(&a.out.join("sentences.tsv"), text.as_bytes())
}

fn synth(a: SynthArgs, err: &mut dyn Write) -> Result<()> {
    let grammar = match &a.grammar {
        Some(path) => parse_file(path, |t| t.parse::<Grammar>())?,
        None => Grammar::default(),
    };
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        sentences: a.sentences,
        coupling: matches!(a.coupling, Switch::On),
        ambiguous_only: a.ambiguous_only,
        mirror_pairs: a.mirror,
        disfluency_rate: a.disfluency_rate.unwrap_or(defaults.disfluency_rate),
        background_pause_rate: a.background_pause_rate.unwrap_or(defaults.background_pause_rate),
        ..defaults
    };
    let examples = gen_synthetic(&grammar, &config, a.seed)?;
    let trees: Vec<(String, Tree)> = examples
        .iter()
        .map(|e| (e.utterance.id.clone(), e.gold.clone()))
        .collect();
    let frames: BTreeMap<String, Matrix> = examples
        .iter()
        .filter_map(|e| Some((e.utterance.id.clone(), e.utterance.frames.clone()?)))
        .collect();
    let dir = &a.out;
    write_file(&data::trees_path(dir, &a.split), write_treebank(&trees).as_bytes())?;
    write_file(&data::alignments_path(dir, &a.split), write_alignments(&examples).as_bytes())?;
    write_file(&data::frames_path(dir, &a.split), write_frame_table(&frames).as_bytes())?;
    write_file(&data::attachments_path(dir, &a.split), write_attachments(&examples).as_bytes())?;
    write_file(&dir.join(LEXICON_FILE), write_lexicon(&grammar.lexicon()).as_bytes())?;
    write_file(&dir.join(GRAMMAR_FILE), grammar.to_string().as_bytes())?;
    note(err, format_args!("wrote {} sentences to {}", examples.len(), dir.display()));
    Ok(())
}
