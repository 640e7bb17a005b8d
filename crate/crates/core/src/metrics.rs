//! Labeled-bracket scoring and significance testing.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tree::Tree;
use crate::treeops::{contains_edit, flatten_edits};

/// Multiset of labeled spans `(label, start, end)`, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BracketSet {
    pub brackets: Vec<(String, usize, usize)>,
}

impl BracketSet {
    /// One bracket per internal node that is not a pre-terminal, the root
    /// included.
    pub fn of(tree: &Tree) -> BracketSet {
        let mut brackets = Vec::new();
        tree.visit_spans(&mut |node, start, end| {
            if !node.is_leaf() && !node.is_preterminal() {
                brackets.push((node.label().to_string(), start, end));
            }
        });
        brackets.sort();
        BracketSet { brackets }
    }

    pub fn len(&self) -> usize {
        self.brackets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.brackets.is_empty()
    }

    /// Size of the multiset intersection.
    pub fn matched(&self, other: &BracketSet) -> usize {
        let (a, b) = (&self.brackets, &other.brackets);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Bracket counts of one sentence pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub matched: usize,
    pub gold: usize,
    pub pred: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.matched += other.matched;
        self.gold += other.gold;
        self.pred += other.pred;
    }

    /// `(precision, recall, f1)` in percent.
    pub fn prf(self) -> (f64, f64, f64) {
        let p = if self.pred == 0 { 0.0 } else { 100.0 * self.matched as f64 / self.pred as f64 };
        let r = if self.gold == 0 { 0.0 } else { 100.0 * self.matched as f64 / self.gold as f64 };
        (p, r, f1_of(p, r))
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Corpus-level scores, micro-averaged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub matched: usize,
    pub gold_total: usize,
    pub pred_total: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub sentences: usize,
    /// F1 of each sentence, in input order.
    pub sentence_f1: Vec<f64>,
    pub strata: BTreeMap<String, EvalReport>,
    /// Sentences parsed with the text-only fallback.
    pub backoff_count: usize,
}

impl EvalReport {
    pub fn from_counts(per_sentence: &[Counts]) -> EvalReport {
        let mut total = Counts::default();
        for c in per_sentence {
            total.add(*c);
        }
        let (precision, recall, f1) = total.prf();
        EvalReport {
            matched: total.matched,
            gold_total: total.gold,
            pred_total: total.pred,
            precision,
            recall,
            f1,
            sentences: per_sentence.len(),
            sentence_f1: per_sentence.iter().map(|c| c.prf().2).collect(),
            strata: BTreeMap::new(),
            backoff_count: 0,
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            matched: self.matched,
            gold: self.gold_total,
            pred: self.pred_total,
        }
    }
}

/// Bracket counts per sentence pair; fails on unequal lengths or leaf counts.
pub fn sentence_counts(gold: &[Tree], pred: &[Tree]) -> Result<Vec<Counts>> {
    if gold.len() != pred.len() {
        return Err(Error::Pairing {
            index: gold.len().min(pred.len()),
            message: format!("{} gold trees but {} predicted", gold.len(), pred.len()),
        });
    }
    gold.iter()
        .zip(pred)
        .enumerate()
        .map(|(i, (g, p))| {
            let (gl, pl) = (g.leaf_count(), p.leaf_count());
            if gl != pl {
                return Err(Error::Pairing {
                    index: i,
                    message: format!("gold has {gl} leaves, prediction has {pl}"),
                });
            }
            let (gb, pb) = (BracketSet::of(g), BracketSet::of(p));
            Ok(Counts {
                matched: gb.matched(&pb),
                gold: gb.len(),
                pred: pb.len(),
            })
        })
        .collect()
}

pub fn parseval(gold: &[Tree], pred: &[Tree]) -> Result<EvalReport> {
    Ok(EvalReport::from_counts(&sentence_counts(gold, pred)?))
}

/// Parseval after flattening every EDITED node in both lists.
pub fn flat_f1(gold: &[Tree], pred: &[Tree]) -> Result<EvalReport> {
    let g: Vec<Tree> = gold.iter().map(flatten_edits).collect();
    let p: Vec<Tree> = pred.iter().map(flatten_edits).collect();
    parseval(&g, &p)
}

/// `"disfluent"` if the gold tree has an EDITED node, else `"fluent"`.
pub fn disfluency_stratum(gold: &Tree) -> String {
    if contains_edit(gold) { "disfluent" } else { "fluent" }.to_string()
}

/// Length buckets of width five, `"01-05"` through `"36-40"`, then `"41+"`.
pub fn length_stratum(gold: &Tree) -> String {
    let n = gold.leaf_count();
    if n > 40 {
        return "41+".to_string();
    }
    let lo = (n.max(1) - 1) / 5 * 5 + 1;
    format!("{lo:02}-{:02}", lo + 4)
}

/// Overall report with one sub-report per stratum.
pub fn stratified_report<F>(gold: &[Tree], pred: &[Tree], stratifier: F) -> Result<EvalReport>
where
    F: Fn(&Tree) -> String,
{
    let counts = sentence_counts(gold, pred)?;
    let mut groups: BTreeMap<String, Vec<Counts>> = BTreeMap::new();
    for (g, c) in gold.iter().zip(&counts) {
        groups.entry(stratifier(g)).or_default().push(*c);
    }
    let mut report = EvalReport::from_counts(&counts);
    report.strata = groups
        .into_iter()
        .map(|(k, v)| (k, EvalReport::from_counts(&v)))
        .collect();
    Ok(report)
}

/// Paired bootstrap: the fraction of `draws` resamples of the sentence
/// indices in which system `b` does not beat system `a` on F1. Small values
/// mean `b` is significantly better.
pub fn bootstrap_pvalue(gold: &[Tree], pred_a: &[Tree], pred_b: &[Tree], draws: usize, seed: u64) -> Result<f64> {
    let a = sentence_counts(gold, pred_a)?;
    let b = sentence_counts(gold, pred_b)?;
    bootstrap_counts(&a, &b, draws, seed)
}

/// [`bootstrap_pvalue`] over precomputed per-sentence counts.
pub fn bootstrap_counts(a: &[Counts], b: &[Counts], draws: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Pairing {
            index: a.len().min(b.len()),
            message: "systems scored on different numbers of sentences".into(),
        });
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one draw".into()));
    }
    let n = a.len();
    if n == 0 {
        return Ok(1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut not_better = 0usize;
    for _ in 0..draws {
        let (mut ca, mut cb) = (Counts::default(), Counts::default());
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            ca.add(a[i]);
            cb.add(b[i]);
        }
        if cb.prf().2 <= ca.prf().2 {
            not_better += 1;
        }
    }
    Ok(not_better as f64 / draws as f64)
}
