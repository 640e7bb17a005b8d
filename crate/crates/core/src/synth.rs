//! Synthetic corpora with attachment ambiguities that only pauses resolve.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{expected_frames, Attachment, AttachmentSite, Example, Utterance, FRAME_FEATURES};
use crate::error::{config_err, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::BracketSet;
use crate::prosody::{DurationLexicon, MIN_WORD_COUNT};
use crate::tree::Tree;
use crate::treeops::EDITED;

const MAX_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Rhs {
    Seq(Vec<String>),
    /// `head object modifier`, realized either as `(P head object modifier)`
    /// (high) or `(P head (O object modifier))` (low).
    Attach {
        head: String,
        object: String,
        modifier: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Production {
    pub weight: f64,
    pub rhs: Rhs,
}

/// A small PCFG. Symbol names map to tree labels by dropping everything from
/// the first `_`, so `NP_obj` and `NP_subj` are both `NP`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    pub start: String,
    pub rules: BTreeMap<String, Vec<Production>>,
    /// Pre-terminal symbol → `(word, mean duration in seconds)`.
    pub words: BTreeMap<String, Vec<(String, f64)>>,
}

fn tree_label(symbol: &str) -> &str {
    symbol.split('_').next().unwrap_or(symbol)
}

const DEFAULT_GRAMMAR: &str = "\
start S
rule 1 S -> NP_subj VP
rule 1 NP_subj -> PRP
rule 0.25 VP -> VBD_t NP_obj
rule 0.1 VP -> VBD_i
rule 0.05 VP -> VBD_i ADVP
attach 0.6 VP -> VBD_t NP_obj PP
rule 0.7 NP_obj -> DT NN
rule 0.3 NP_obj -> DT JJ NN
rule 1 PP -> IN NP_pobj
rule 1 NP_pobj -> DT NN_p
rule 1 ADVP -> RB
word PRP i 0.12
word PRP you 0.15
word PRP we 0.14
word PRP they 0.18
word PRP she 0.17
word VBD_t saw 0.25
word VBD_t watched 0.32
word VBD_t hit 0.2
word VBD_t met 0.22
word VBD_t found 0.3
word VBD_t painted 0.38
word VBD_i slept 0.3
word VBD_i laughed 0.33
word VBD_i left 0.25
word DT the 0.08
word DT a 0.06
word DT that 0.15
word JJ old 0.26
word JJ big 0.24
word JJ small 0.3
word JJ red 0.22
word NN man 0.28
word NN dog 0.26
word NN girl 0.3
word NN cat 0.27
word NN boy 0.25
word NN woman 0.34
word NN_p telescope 0.5
word NN_p hat 0.24
word NN_p stick 0.28
word NN_p bag 0.26
word NN_p camera 0.42
word IN with 0.15
word IN near 0.2
word IN by 0.14
word RB quickly 0.4
word RB again 0.33
word RB today 0.36
";

impl Default for Grammar {
    /// Subject, verb, object and an optional prepositional phrase that can
    /// attach to either the verb phrase or the object.
    fn default() -> Self {
        DEFAULT_GRAMMAR.parse().expect("built-in grammar is valid")
    }
}

impl core::str::FromStr for Grammar {
    type Err = Error;

    /// Line format:
    /// `start S`, `rule <w> A -> B C`, `attach <w> A -> H O M`,
    /// `word <TAG> <word> <mean seconds>`; `#` starts a comment.
    fn from_str(text: &str) -> Result<Grammar> {
        let mut start = None;
        let mut rules: BTreeMap<String, Vec<Production>> = BTreeMap::new();
        let mut words: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Parse { line: line_no, message };
            let fields: Vec<&str> = line.split('#').next().unwrap_or("").split_whitespace().collect();
            let Some((&kind, rest)) = fields.split_first() else { continue };
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
            match kind {
                "start" if rest.len() == 1 => start = Some(rest[0].to_string()),
                "rule" | "attach" if rest.len() >= 4 && rest[2] == "->" => {
                    let weight = num(rest[0])?;
                    let lhs = rest[1].to_string();
                    let rhs: Vec<String> = rest[3..].iter().map(|s| s.to_string()).collect();
                    let rhs = if kind == "rule" {
                        Rhs::Seq(rhs)
                    } else if rhs.len() == 3 {
                        Rhs::Attach {
                            head: rhs[0].clone(),
                            object: rhs[1].clone(),
                            modifier: rhs[2].clone(),
                        }
                    } else {
                        return Err(err("attach needs exactly head, object and modifier".into()));
                    };
                    rules.entry(lhs).or_default().push(Production { weight, rhs });
                }
                "word" if rest.len() == 3 => {
                    let mean = num(rest[2])?;
                    words.entry(rest[0].to_string()).or_default().push((rest[1].to_string(), mean));
                }
                _ => return Err(err(format!("cannot read `{}`", line.trim()))),
            }
        }
        let grammar = Grammar {
            start: start.ok_or_else(|| config_err("start", "grammar has no start symbol"))?,
            rules,
            words,
        };
        grammar.validate()?;
        Ok(grammar)
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "start {}", self.start)?;
        for (lhs, prods) in &self.rules {
            for p in prods {
                match &p.rhs {
                    Rhs::Seq(rhs) => writeln!(f, "rule {} {lhs} -> {}", p.weight, rhs.join(" "))?,
                    Rhs::Attach { head, object, modifier } => {
                        writeln!(f, "attach {} {lhs} -> {head} {object} {modifier}", p.weight)?
                    }
                }
            }
        }
        for (tag, ws) in &self.words {
            for (w, mean) in ws {
                writeln!(f, "word {tag} {w} {mean}")?;
            }
        }
        Ok(())
    }
}

impl Grammar {
    pub fn validate(&self) -> Result<()> {
        if self.words.values().all(Vec::is_empty) {
            return Err(config_err("words", "grammar has no terminals"));
        }
        let defined = |s: &str| self.rules.contains_key(s) || self.words.contains_key(s);
        if !defined(&self.start) {
            return Err(config_err("start", format!("undefined start symbol `{}`", self.start)));
        }
        for (lhs, prods) in &self.rules {
            if self.words.contains_key(lhs) {
                return Err(config_err("rules", format!("`{lhs}` is both a phrase and a word class")));
            }
            let total: f64 = prods.iter().map(|p| p.weight).sum();
            if prods.iter().any(|p| !(p.weight >= 0.0 && p.weight.is_finite())) || !(total > 0.0) {
                return Err(config_err("rules", format!("weights of `{lhs}` must be nonnegative with a positive sum")));
            }
            for p in prods {
                let syms: Vec<&String> = match &p.rhs {
                    Rhs::Seq(s) => s.iter().collect(),
                    Rhs::Attach { head, object, modifier } => vec![head, object, modifier],
                };
                if syms.is_empty() {
                    return Err(config_err("rules", format!("empty production for `{lhs}`")));
                }
                if let Some(s) = syms.into_iter().find(|s| !defined(s)) {
                    return Err(config_err("rules", format!("undefined symbol `{s}` in `{lhs}`")));
                }
            }
        }
        for (tag, ws) in &self.words {
            if let Some((w, m)) = ws.iter().find(|(_, m)| !(*m > 0.0 && m.is_finite())) {
                return Err(config_err("words", format!("`{w}` ({tag}) has mean duration {m}")));
            }
        }
        Ok(())
    }

    /// Word means from the grammar, counted as well attested.
    pub fn lexicon(&self) -> DurationLexicon {
        let mut lex = DurationLexicon::default();
        for ws in self.words.values() {
            for (w, m) in ws {
                lex.word_means.insert(w.clone(), (*m, MIN_WORD_COUNT));
            }
        }
        lex
    }

    fn has_attach(&self) -> bool {
        self.rules
            .values()
            .flatten()
            .any(|p| p.weight > 0.0 && matches!(p.rhs, Rhs::Attach { .. }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sentences: usize,
    /// Pause after the object exactly when the modifier attaches high.
    pub coupling: bool,
    /// Keep only sentences with an ambiguous attachment.
    pub ambiguous_only: bool,
    /// Emit each ambiguous sentence twice, high then low, with the same
    /// words and the same random acoustics apart from the coupled pause.
    pub mirror_pairs: bool,
    /// Probability of a repeated, EDITED copy of the subject.
    pub disfluency_rate: f64,
    /// Probability of a long pause at any other word boundary.
    pub background_pause_rate: f64,
    /// Relative spread of word durations around their means.
    pub duration_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 200,
            coupling: true,
            ambiguous_only: false,
            mirror_pairs: false,
            disfluency_rate: 0.1,
            background_pause_rate: 0.1,
            duration_jitter: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, p) in [
            ("disfluency_rate", self.disfluency_rate),
            ("background_pause_rate", self.background_pause_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(config_err(field, "must be a probability"));
            }
        }
        if !(0.0..1.0).contains(&self.duration_jitter) {
            return Err(config_err("duration_jitter", "must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Range of coupled and long background pauses, inside the (0.2, 1] bucket.
pub const LONG_PAUSE: (f64, f64) = (0.3, 0.8);
/// Range of short pauses, inside the (0, 0.05] bucket.
const SHORT_PAUSE: (f64, f64) = (0.01, 0.05);
const SHORT_PAUSE_RATE: f64 = 0.2;

struct Sentence {
    tree: Tree,
    /// Child-index path to the node built by the first attach production.
    site: Option<Vec<usize>>,
}

fn expand<R: Rng>(g: &Grammar, symbol: &str, rng: &mut R, depth: usize, path: &mut Vec<usize>, site: &mut Option<Vec<usize>>) -> Result<Tree> {
    if depth > MAX_DEPTH {
        return Err(config_err("rules", "derivation too deep; is the grammar recursive without exit?"));
    }
    if let Some(ws) = g.words.get(symbol) {
        let (w, _) = &ws[rng.gen_range(0..ws.len())];
        return Ok(Tree::preterminal(tree_label(symbol), w));
    }
    let prods = &g.rules[symbol];
    let dist = WeightedIndex::new(prods.iter().map(|p| p.weight))
        .map_err(|e| config_err("rules", format!("`{symbol}`: {e}")))?;
    let prod = &prods[dist.sample(rng)];
    let syms: Vec<&String> = match &prod.rhs {
        Rhs::Seq(s) => s.iter().collect(),
        Rhs::Attach { head, object, modifier } => {
            if site.is_none() {
                *site = Some(path.clone());
            }
            vec![head, object, modifier]
        }
    };
    let mut children = Vec::with_capacity(syms.len());
    for (i, s) in syms.into_iter().enumerate() {
        path.push(i);
        children.push(expand(g, s, rng, depth + 1, path, site)?);
        path.pop();
    }
    Ok(Tree::node(tree_label(symbol), children))
}

fn node_at_mut<'a>(tree: &'a mut Tree, path: &[usize]) -> &'a mut Tree {
    match (path.split_first(), tree) {
        (None, t) => t,
        (Some((&i, rest)), Tree::Node { children, .. }) => node_at_mut(&mut children[i], rest),
        (Some(_), leaf) => leaf,
    }
}

/// Rewrites the high-attachment node at `path` into its low form.
fn lower(tree: &mut Tree, path: &[usize]) {
    if let Tree::Node { children, .. } = node_at_mut(tree, path) {
        let modifier = children.pop().expect("attach node has three children");
        let object = children.pop().expect("attach node has three children");
        let label = object.label().to_string();
        children.push(Tree::node(label, vec![object, modifier]));
    }
}

/// Object and modifier spans of the attach node at `path`.
fn site_spans(tree: &Tree, path: &[usize], kind: Attachment) -> AttachmentSite {
    let mut start = 0;
    let mut node = tree;
    for &i in path {
        let children = node.children();
        start += children[..i].iter().map(Tree::leaf_count).sum::<usize>();
        node = &children[i];
    }
    let children = node.children();
    let head = children[0].leaf_count();
    let (object, modifier) = match kind {
        Attachment::High => (children[1].leaf_count(), children[2].leaf_count()),
        Attachment::Low => {
            let inner = children[1].children();
            (inner[0].leaf_count(), inner[1].leaf_count())
        }
    };
    let o = start + head;
    AttachmentSite {
        object: (o, o + object),
        modifier: (o + object, o + object + modifier),
        kind,
    }
}

/// Random draws shared by both members of a mirrored pair.
struct Draws {
    jitter: Vec<f64>,
    gaps: Vec<f64>,
    coupled_gap: f64,
    noise_seed: u64,
}

fn draw<R: Rng>(n: usize, config: &SynthConfig, rng: &mut R) -> Draws {
    let jitter = (0..n).map(|_| rng.gen_range(-1.0..=1.0) * config.duration_jitter).collect();
    let gaps = (0..n.saturating_sub(1))
        .map(|_| {
            let u: f64 = rng.gen();
            if u < config.background_pause_rate {
                rng.gen_range(LONG_PAUSE.0..LONG_PAUSE.1)
            } else if u < config.background_pause_rate + SHORT_PAUSE_RATE {
                rng.gen_range(SHORT_PAUSE.0..SHORT_PAUSE.1)
            } else {
                0.0
            }
        })
        .collect();
    Draws {
        jitter,
        gaps,
        coupled_gap: rng.gen_range(LONG_PAUSE.0..LONG_PAUSE.1),
        noise_seed: rng.gen(),
    }
}

fn realize(
    id: String,
    tree: Tree,
    site: Option<AttachmentSite>,
    draws: &Draws,
    lexicon: &DurationLexicon,
    coupling: bool,
) -> Result<Example> {
    let tokens: Vec<String> = tree.leaves().iter().map(|s| s.to_string()).collect();
    let mut gaps = draws.gaps.clone();
    if let (true, Some(s)) = (coupling, site) {
        if s.object.1 < tokens.len() {
            gaps[s.object.1 - 1] = match s.kind {
                Attachment::High => draws.coupled_gap,
                Attachment::Low => 0.0,
            };
        }
    }
    let mut alignments = Vec::with_capacity(tokens.len());
    let mut t = 0.0;
    for (i, tok) in tokens.iter().enumerate() {
        let (mean, _) = lexicon.mean_duration(tok);
        let end = t + mean * (1.0 + draws.jitter[i]);
        alignments.push((t, end));
        t = end + gaps.get(i).copied().unwrap_or(0.0);
    }
    let frames = synth_frames(&alignments, draws.noise_seed);
    let utterance = Utterance {
        id,
        tokens,
        alignments: Some(alignments),
        frames: Some(frames),
        speaker_side: "synth_A".to_string(),
    };
    let mut ex = Example::new(utterance, tree)?;
    ex.attachment = site;
    Ok(ex)
}

/// Pitch, voicing, pitch slope and three energies: a falling contour over
/// voiced words, low energy in silences.
fn synth_frames(alignments: &[(f64, f64)], seed: u64) -> Matrix {
    let end = alignments.last().map_or(0.0, |a| a.1);
    let rows = expected_frames(end);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::zeros(rows, FRAME_FEATURES);
    let mut word = 0;
    for r in 0..rows {
        let t = (r as f64 + 0.5) * crate::corpus::HOP_SECONDS;
        while word < alignments.len() && alignments[word].1 < t {
            word += 1;
        }
        let voiced = word < alignments.len() && alignments[word].0 <= t;
        let noise = rng.gen_range(-0.05..0.05);
        let row = m.row_mut(r);
        if voiced {
            let progress = t / end.max(1e-9);
            row[0] = 0.6 - 0.4 * progress + noise;
            row[1] = 0.9;
            row[2] = -0.4 / end.max(1e-9) * crate::corpus::HOP_SECONDS;
            row[3] = -1.0 + noise;
            row[4] = libm::log(0.6);
            row[5] = libm::log(0.4);
        } else {
            row[1] = 0.05;
            row[3] = -6.0 + noise;
            row[4] = libm::log(0.5);
            row[5] = libm::log(0.5);
        }
    }
    m
}

/// Generates `config.sentences` examples from `grammar`. Ambiguous sentences
/// alternate between high and low attachment and carry their
/// [`AttachmentSite`].
pub fn gen_synthetic(grammar: &Grammar, config: &SynthConfig, seed: u64) -> Result<Vec<Example>> {
    grammar.validate()?;
    config.validate()?;
    if config.ambiguous_only && !grammar.has_attach() {
        return Err(config_err("rules", "ambiguous sentences requested but no attach production"));
    }
    let lexicon = grammar.lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(config.sentences);
    let mut next_high = true;
    let mut tries = 0usize;
    while out.len() < config.sentences {
        tries += 1;
        if tries > 1000 * (config.sentences + 1) {
            return Err(config_err("rules", "could not generate enough ambiguous sentences"));
        }
        let mut path = Vec::new();
        let mut site = None;
        let tree = expand(grammar, &grammar.start, &mut rng, 0, &mut path, &mut site)?;
        let mut s = Sentence { tree, site };
        if config.ambiguous_only && s.site.is_none() {
            continue;
        }
        if rng.gen::<f64>() < config.disfluency_rate {
            insert_repetition(&mut s);
        }
        let n = s.tree.leaf_count();
        let draws = draw(n, config, &mut rng);
        let kinds: Vec<Attachment> = match (&s.site, config.mirror_pairs) {
            (None, _) => vec![Attachment::High],
            (Some(_), true) => vec![Attachment::High, Attachment::Low],
            (Some(_), false) => {
                let k = if next_high { Attachment::High } else { Attachment::Low };
                next_high = !next_high;
                vec![k]
            }
        };
        for kind in kinds {
            if out.len() == config.sentences {
                break;
            }
            let mut tree = s.tree.clone();
            let site = s.site.as_ref().map(|path| {
                if kind == Attachment::Low {
                    lower(&mut tree, path);
                }
                site_spans(&tree, path, kind)
            });
            let id = format!("synth{seed}_{:05}", out.len());
            out.push(realize(id, tree, site, &draws, &lexicon, config.coupling)?);
        }
    }
    Ok(out)
}

/// Repeats the first constituent under an EDITED node: `i i saw …`.
fn insert_repetition(s: &mut Sentence) {
    if let Tree::Node { children, .. } = &mut s.tree {
        if children.len() < 2 {
            return;
        }
        let copy = Tree::node(EDITED, vec![children[0].clone()]);
        children.insert(0, copy);
        if let Some(path) = &mut s.site {
            if let Some(first) = path.first_mut() {
                *first += 1;
            }
        }
    }
}

/// Low when some predicted constituent covers exactly object and modifier.
pub fn attachment_decision(pred: &Tree, site: &AttachmentSite) -> Attachment {
    let span = (site.object.0, site.modifier.1);
    if BracketSet::of(pred).brackets.iter().any(|(_, s, e)| (*s, *e) == span) {
        Attachment::Low
    } else {
        Attachment::High
    }
}

/// `(correct, total)` attachment decisions over the examples with a site.
pub fn attachment_accuracy(examples: &[Example], pred: &[Tree]) -> Result<(usize, usize)> {
    if examples.len() != pred.len() {
        return Err(Error::Pairing {
            index: examples.len().min(pred.len()),
            message: "examples and predictions differ in number".into(),
        });
    }
    let mut correct = 0;
    let mut total = 0;
    for (ex, p) in examples.iter().zip(pred) {
        if let Some(site) = &ex.attachment {
            total += 1;
            correct += usize::from(attachment_decision(p, site) == site.kind);
        }
    }
    Ok((correct, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prosody::{build_prosodic_inputs, PauseCategory};
    use crate::tree::parse_bracketed;
    use crate::treeops::contains_edit;

    fn pause_after_object(ex: &Example) -> PauseCategory {
        let site = ex.attachment.unwrap();
        let inputs = build_prosodic_inputs(ex, &Grammar::default().lexicon(), 0.0, 1).unwrap();
        inputs[site.object.1 - 1].pause_post
    }

    #[test]
    fn deterministic_for_a_seed() {
        let g = Grammar::default();
        let c = SynthConfig::default();
        let a = gen_synthetic(&g, &c, 1).unwrap();
        let b = gen_synthetic(&g, &c, 1).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic(&g, &c, 2).unwrap());
        assert!(a.iter().all(|e| e.has_acoustics && e.gold.validate().is_ok()));
        assert!(a.iter().any(|e| contains_edit(&e.gold)));
    }

    #[test]
    fn coupled_pause_marks_high_attachment() {
        let g = Grammar::default();
        let c = SynthConfig {
            ambiguous_only: true,
            ..SynthConfig::default()
        };
        let exs = gen_synthetic(&g, &c, 3).unwrap();
        let mut kinds = [0, 0];
        for ex in &exs {
            let site = ex.attachment.unwrap();
            let pause = pause_after_object(ex);
            match site.kind {
                Attachment::High => {
                    kinds[0] += 1;
                    assert_eq!(pause, PauseCategory::UpTo1s);
                }
                Attachment::Low => {
                    kinds[1] += 1;
                    assert_eq!(pause, PauseCategory::Off);
                }
            }
            assert_eq!(attachment_decision(&ex.gold, &site), site.kind);
        }
        assert_eq!(kinds, [100, 100]);
    }

    #[test]
    fn uncoupled_pauses_ignore_attachment() {
        let g = Grammar::default();
        let c = SynthConfig {
            sentences: 400,
            coupling: false,
            ambiguous_only: true,
            mirror_pairs: true,
            ..SynthConfig::default()
        };
        let exs = gen_synthetic(&g, &c, 4).unwrap();
        for pair in exs.chunks(2) {
            assert_eq!(pair[0].tokens(), pair[1].tokens());
            assert_eq!(pair[0].utterance.alignments, pair[1].utterance.alignments);
            assert_eq!(pair[0].utterance.frames, pair[1].utterance.frames);
            assert_ne!(pair[0].gold, pair[1].gold);
        }
        let long = exs.iter().filter(|e| pause_after_object(e) == PauseCategory::UpTo1s).count();
        let rate = long as f64 / exs.len() as f64;
        assert!((rate - c.background_pause_rate).abs() < 0.05, "{rate}");
    }

    #[test]
    fn mirrored_pairs_share_words() {
        let c = SynthConfig {
            sentences: 10,
            ambiguous_only: true,
            mirror_pairs: true,
            ..SynthConfig::default()
        };
        let exs = gen_synthetic(&Grammar::default(), &c, 5).unwrap();
        for pair in exs.chunks(2) {
            assert_eq!(pair[0].tokens(), pair[1].tokens());
            assert_eq!(pair[0].attachment.unwrap().kind, Attachment::High);
            assert_eq!(pair[1].attachment.unwrap().kind, Attachment::Low);
            assert_eq!(pause_after_object(&pair[1]), PauseCategory::Off);
        }
    }

    #[test]
    fn lowering_and_spans() {
        let mut t = parse_bracketed("(S (NP (PRP i)) (VP (VBD saw) (NP (DT the) (NN man)) (PP (IN with) (NP (DT a) (NN hat)))))", 1).unwrap();
        let site = site_spans(&t, &[1], Attachment::High);
        assert_eq!((site.object, site.modifier), ((2, 4), (4, 7)));
        lower(&mut t, &[1]);
        assert_eq!(
            t.to_string(),
            "(S (NP (PRP i)) (VP (VBD saw) (NP (NP (DT the) (NN man)) (PP (IN with) (NP (DT a) (NN hat))))))"
        );
        assert_eq!(site_spans(&t, &[1], Attachment::Low).object, (2, 4));
        assert_eq!(attachment_decision(&t, &site), Attachment::Low);
    }

    #[test]
    fn grammar_text_roundtrip_and_errors() {
        let g = Grammar::default();
        assert_eq!(g.to_string().parse::<Grammar>().unwrap(), g);
        assert!(matches!("start S\nrule 1 S -> A\n".parse::<Grammar>(), Err(Error::Config { .. })));
        assert!(matches!("start S\nrule x S -> A\n".parse::<Grammar>(), Err(Error::Parse { line: 2, .. })));
        assert!(matches!("start S\nrule 1 S -> B\nword A a 0.1\n".parse::<Grammar>(), Err(Error::Config { .. })));
        let text_only = "start S\nrule 1 S -> A\nword A a 0.1\n".parse::<Grammar>().unwrap();
        let c = SynthConfig { ambiguous_only: true, ..SynthConfig::default() };
        assert!(gen_synthetic(&text_only, &c, 1).is_err());
    }
}
