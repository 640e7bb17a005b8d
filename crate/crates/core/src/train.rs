//! Training loop, greedy decoding and sentence parsing.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdamConfig, AdamState, Grads, Graph, ParamStore};
use crate::corpus::{Example, Utterance};
use crate::error::{config_err, Error, Result};
use crate::metrics::{parseval, EvalReport};
use crate::model::{parse_field, ModelConfig, Parser, SentenceInput, SymbolVocab, WordVocab};
use crate::prosody::DurationLexicon;
use crate::tree::Tree;
use crate::treeops::{delinearize, linearize, repair, LinearParse, Symbol};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    /// Number of earlier interval losses the newest one is compared with.
    pub loss_window: usize,
    /// Updates per loss interval.
    pub loss_check_interval: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Epochs without a dev F1 improvement before stopping.
    pub early_stop_patience: usize,
    /// Stop as soon as dev F1 reaches this value.
    pub target_dev_f1: Option<f64>,
    /// Rescale each batch gradient to at most this global norm. Off by default.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr0: 0.001,
            decay_factor: 0.9,
            loss_window: 3,
            loss_check_interval: 500,
            max_epochs: 50,
            seed: 1,
            early_stop_patience: 5,
            target_dev_f1: None,
            max_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("batch_size", self.batch_size),
            ("loss_window", self.loss_window),
            ("loss_check_interval", self.loss_check_interval),
            ("max_epochs", self.max_epochs),
            ("early_stop_patience", self.early_stop_patience),
        ] {
            if v == 0 {
                return Err(config_err(field, "must be positive"));
            }
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(config_err("lr0", "must be positive"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(config_err("decay_factor", "must be in (0, 1)"));
        }
        if self.max_grad_norm.is_some_and(|n| !(n > 0.0)) {
            return Err(config_err("max_grad_norm", "must be positive"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = alloc::format!(
            "batch_size={}\nlr0={}\ndecay_factor={}\nloss_window={}\nloss_check_interval={}\n\
             max_epochs={}\nseed={}\nearly_stop_patience={}\n",
            self.batch_size,
            self.lr0,
            self.decay_factor,
            self.loss_window,
            self.loss_check_interval,
            self.max_epochs,
            self.seed,
            self.early_stop_patience,
        );
        if let Some(t) = self.target_dev_f1 {
            s.push_str(&alloc::format!("target_dev_f1={t}\n"));
        }
        if let Some(n) = self.max_grad_norm {
            s.push_str(&alloc::format!("max_grad_norm={n}\n"));
        }
        s
    }

    /// Overrides defaults with the recognized keys of `kv`.
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        for (key, value) in kv {
            match key.as_str() {
                "batch_size" => c.batch_size = parse_field(key, value)?,
                "lr0" => c.lr0 = parse_field(key, value)?,
                "decay_factor" => c.decay_factor = parse_field(key, value)?,
                "loss_window" => c.loss_window = parse_field(key, value)?,
                "loss_check_interval" => c.loss_check_interval = parse_field(key, value)?,
                "max_epochs" => c.max_epochs = parse_field(key, value)?,
                "seed" => c.seed = parse_field(key, value)?,
                "early_stop_patience" => c.early_stop_patience = parse_field(key, value)?,
                "target_dev_f1" => c.target_dev_f1 = Some(parse_field(key, value)?),
                "max_grad_norm" => c.max_grad_norm = Some(parse_field(key, value)?),
                _ => {}
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Learning rate after an interval with mean loss `newest`: decayed when it
/// exceeds every one of the last `loss_window` interval losses in
/// `previous`, unchanged otherwise or while fewer are available.
pub fn lr_update(previous: &[f64], newest: f64, current_lr: f64, config: &TrainConfig) -> f64 {
    let w = config.loss_window;
    if previous.len() < w {
        return current_lr;
    }
    let worst = previous[previous.len() - w..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if newest > worst {
        current_lr * config.decay_factor
    } else {
        current_lr
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// `(update, mean sentence loss)` per loss interval.
    pub interval_losses: Vec<(usize, f64)>,
    /// `(update, lr)` at the start and after every decay.
    pub lr_history: Vec<(usize, f64)>,
    /// Mean sentence loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Dev F1 after each epoch.
    pub dev_f1: Vec<f64>,
    /// Seconds since the start, after each epoch, as reported by the clock.
    pub epoch_seconds: Vec<f64>,
    pub best_epoch: usize,
    pub updates: usize,
}

impl TrainLog {
    /// Tab-separated rows: `kind  index  value`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("kind\tindex\tvalue\n");
        let mut row = |kind: &str, i: usize, v: f64| out.push_str(&alloc::format!("{kind}\t{i}\t{v}\n"));
        for &(u, l) in &self.interval_losses {
            row("interval_loss", u, l);
        }
        for &(u, lr) in &self.lr_history {
            row("lr", u, lr);
        }
        for (e, &l) in self.epoch_losses.iter().enumerate() {
            row("epoch_loss", e + 1, l);
        }
        for (e, &f) in self.dev_f1.iter().enumerate() {
            row("dev_f1", e + 1, f);
        }
        for (e, &s) in self.epoch_seconds.iter().enumerate() {
            row("seconds", e + 1, s);
        }
        out
    }
}

/// Everything needed to start training.
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub train: &'a [Example],
    pub dev: &'a [Example],
    pub lexicon: &'a DurationLexicon,
}

/// Loss and inputs of one training sentence.
struct Prepared {
    input: SentenceInput,
    targets: Vec<usize>,
}

/// Vocabularies from the training trees.
pub fn build_vocabularies(train: &[&Example]) -> (WordVocab, SymbolVocab) {
    let words = WordVocab::build(train.iter().flat_map(|e| e.tokens().iter().map(String::as_str)));
    let parses: Vec<LinearParse> = train.iter().map(|e| linearize(&e.gold)).collect();
    (words, SymbolVocab::from_parses(&parses))
}

/// Trains a parser and returns the parameters with the best dev F1 (the last
/// ones when there is no dev set). Models with acoustic features skip
/// training examples without acoustics.
pub fn train(
    data: TrainSet<'_>,
    model_config: ModelConfig,
    config: &TrainConfig,
    clock: &dyn Fn() -> f64,
) -> Result<(Parser, TrainLog)> {
    config.validate()?;
    model_config.validate()?;
    let prosodic = model_config.features.any();
    let usable: Vec<&Example> = data
        .train
        .iter()
        .filter(|e| !prosodic || e.has_acoustics)
        .collect();
    if usable.is_empty() {
        return Err(Error::Training("no usable training examples".into()));
    }
    let (words, symbols) = build_vocabularies(&usable);
    let mut parser = Parser::new(model_config, words, symbols, config.seed)?;
    let prepared: Vec<Prepared> = usable
        .iter()
        .map(|e| {
            Ok(Prepared {
                input: parser.example_input(e, data.lexicon)?,
                targets: parser.symbols.encode(&linearize(&e.gold))?,
            })
        })
        .collect::<Result<_>>()?;
    let dev: Vec<&Example> = data.dev.iter().filter(|e| !prosodic || e.has_acoustics).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e00);
    let mut adam = AdamState::new(&parser.params, config.lr0, AdamConfig::default());
    let mut grads = Grads::zeros_like(&parser.params);
    let mut log = TrainLog {
        lr_history: alloc::vec![(0, config.lr0)],
        ..TrainLog::default()
    };
    let start = clock();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut stale = 0;
    let mut interval_sum = 0.0;
    let mut interval_count = 0usize;
    let mut previous: Vec<f64> = Vec::new();

    for epoch in 0..config.max_epochs {
        let batches = make_batches(&prepared, config.batch_size, &mut rng);
        let mut epoch_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            grads.zero();
            let mut batch_loss = 0.0;
            for &i in batch {
                let p = &prepared[i];
                let mut g = Graph::new(&parser.params);
                let loss = parser.sequence_loss(&mut g, &p.input, &p.targets, true, &mut rng)?;
                let value = g.scalar(loss);
                if !value.is_finite() {
                    return Err(Error::Training(alloc::format!(
                        "non-finite loss {value} in epoch {} batch {b} (sentence {i})",
                        epoch + 1
                    )));
                }
                g.backward(loss);
                g.accumulate_param_grads(&mut grads);
                batch_loss += value;
            }
            grads.scale(1.0 / batch.len() as f64);
            if let Some(max) = config.max_grad_norm {
                let norm = grads.global_norm();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            adam.step(&mut parser.params, &grads)?;
            log.updates += 1;
            epoch_sum += batch_loss;
            interval_sum += batch_loss;
            interval_count += batch.len();
            if log.updates % config.loss_check_interval == 0 {
                let newest = interval_sum / interval_count as f64;
                log.interval_losses.push((log.updates, newest));
                let lr = lr_update(&previous, newest, adam.lr, config);
                if lr != adam.lr {
                    log::info!("update {}: loss {newest:.4}, learning rate {lr:.3e}", log.updates);
                    adam.lr = lr;
                    log.lr_history.push((log.updates, lr));
                }
                previous.push(newest);
                interval_sum = 0.0;
                interval_count = 0;
            }
        }
        log.epoch_losses.push(epoch_sum / prepared.len() as f64);
        log.epoch_seconds.push(clock() - start);
        if dev.is_empty() {
            log::info!("epoch {}: loss {:.4}", epoch + 1, log.epoch_losses[epoch]);
            log.best_epoch = epoch + 1;
            continue;
        }
        let f1 = evaluate(&parser, None, dev.iter().copied(), data.lexicon)?.f1;
        log.dev_f1.push(f1);
        log::info!("epoch {}: loss {:.4}, dev F1 {f1:.2}", epoch + 1, log.epoch_losses[epoch]);
        if best.as_ref().map_or(true, |(b, _)| f1 > *b) {
            best = Some((f1, parser.params.clone()));
            log.best_epoch = epoch + 1;
            stale = 0;
        } else {
            stale += 1;
        }
        if config.target_dev_f1.is_some_and(|t| f1 >= t) {
            break;
        }
        if stale >= config.early_stop_patience {
            log::info!("no dev improvement for {stale} epochs, stopping");
            break;
        }
    }
    if let Some((_, params)) = best {
        parser.params = params;
    }
    Ok((parser, log))
}

/// Shuffles, groups sentences of similar length, and shuffles the batches.
fn make_batches(prepared: &[Prepared], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| prepared[i].input.len());
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

/// Default decoding cap for a sentence of `tokens` words.
pub fn default_max_len(tokens: usize) -> usize {
    4 * tokens + 8
}

/// Greedy symbol sequence, without start and end markers.
pub fn greedy_decode(model: &Parser, input: &SentenceInput, max_len: usize) -> Result<Vec<Symbol>> {
    let ids = model.greedy_ids(input, max_len)?;
    Ok(ids.into_iter().filter_map(|id| model.symbols.symbol(id)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub tree: Tree,
    /// Parsed by the text-only model for lack of acoustics.
    pub backoff: bool,
    /// The decoder output needed repair.
    pub repaired: bool,
}

/// Decodes `tokens` from prepared inputs and merges them into a tree.
pub fn decode_tree<S: AsRef<str>>(model: &Parser, input: &SentenceInput, tokens: &[S]) -> Result<(Tree, bool)> {
    let raw = greedy_decode(model, input, default_max_len(tokens.len()))?;
    let parse = repair(&raw, tokens.len());
    let repaired = parse.symbols != raw;
    Ok((delinearize(&parse, tokens)?, repaired))
}

/// Parses an example, falling back to `text_model` when `model` needs
/// acoustics the example lacks.
pub fn parse_sentence(
    model: &Parser,
    text_model: Option<&Parser>,
    example: &Example,
    lexicon: &DurationLexicon,
) -> Result<Parsed> {
    route(model, text_model, example.tokens(), model.example_input(example, lexicon))
}

/// [`parse_sentence`] for an utterance without a gold tree.
pub fn parse_utterance(
    model: &Parser,
    text_model: Option<&Parser>,
    utt: &Utterance,
    lexicon: &DurationLexicon,
) -> Result<Parsed> {
    route(model, text_model, &utt.tokens, model.utterance_input(utt, lexicon))
}

fn route(model: &Parser, text_model: Option<&Parser>, tokens: &[String], input: Result<SentenceInput>) -> Result<Parsed> {
    let (chosen, input, backoff) = match input {
        Ok(input) => (model, input, false),
        Err(Error::Backoff(id)) => {
            let text = text_model
                .or((!model.config.features.any()).then_some(model))
                .ok_or(Error::Backoff(id))?;
            (text, text.text_input(tokens), true)
        }
        Err(e) => return Err(e),
    };
    let (tree, repaired) = decode_tree(chosen, &input, tokens)?;
    Ok(Parsed { tree, backoff, repaired })
}

/// Parses and scores examples against their gold trees.
pub fn evaluate<'a>(
    model: &Parser,
    text_model: Option<&Parser>,
    examples: impl IntoIterator<Item = &'a Example>,
    lexicon: &DurationLexicon,
) -> Result<EvalReport> {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    let mut backoff = 0;
    for ex in examples {
        let parsed = parse_sentence(model, text_model, ex, lexicon)?;
        backoff += usize::from(parsed.backoff);
        gold.push(ex.gold.clone());
        pred.push(parsed.tree);
    }
    let mut report = parseval(&gold, &pred)?;
    report.backoff_count = backoff;
    Ok(report)
}

/// Parses every example; returns the trees and how many used the backoff.
pub fn parse_all(
    model: &Parser,
    text_model: Option<&Parser>,
    examples: &[Example],
    lexicon: &DurationLexicon,
) -> Result<(Vec<Tree>, usize)> {
    let mut trees = Vec::with_capacity(examples.len());
    let mut backoff = 0;
    for ex in examples {
        let parsed = parse_sentence(model, text_model, ex, lexicon)?;
        backoff += usize::from(parsed.backoff);
        trees.push(parsed.tree);
    }
    Ok((trees, backoff))
}

/// Mean sentence loss with dropout off.
pub fn mean_loss(model: &Parser, examples: &[Example], lexicon: &DurationLexicon) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no examples".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for ex in examples {
        let input = model.example_input(ex, lexicon)?;
        let targets = model.symbols.encode(&linearize(&ex.gold))?;
        let mut g = Graph::new(&model.params);
        let loss = model.sequence_loss(&mut g, &input, &targets, false, &mut rng)?;
        total += g.scalar(loss);
    }
    Ok(total / examples.len() as f64)
}
