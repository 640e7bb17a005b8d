//! Word-level acoustic-prosodic inputs: pause categories, normalized word
//! duration, and word-aligned frame slices for the acoustic CNN.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::corpus::{Alignment, Example, Utterance, FRAME_FEATURES, HOP_SECONDS};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Upper clip of the duration feature.
pub const MAX_DURATION_RATIO: f64 = 5.0;
/// Minimum training count for using a word's own sample mean.
pub const MIN_WORD_COUNT: usize = 15;
/// Default context added on each side of a word's frames, in seconds.
pub const DEFAULT_CONTEXT_SECONDS: f64 = 0.25;
/// Mean word duration used when the lexicon is empty.
const DEFAULT_WORD_SECONDS: f64 = 0.25;
/// Guard against `x / 0.01` landing just off an integer.
const FRAME_EPS: f64 = 1e-9;

/// Inter-word pause category. The discriminant is the embedding row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PauseCategory {
    Off = 0,
    NotAvailable = 1,
    /// 0 < p ≤ 0.05 s
    UpTo50ms = 2,
    /// 0.05 < p ≤ 0.2 s
    UpTo200ms = 3,
    /// 0.2 < p ≤ 1 s
    UpTo1s = 4,
    /// p > 1 s
    Over1s = 5,
}

impl PauseCategory {
    pub const COUNT: usize = 6;
    pub const ALL: [PauseCategory; 6] = [
        PauseCategory::Off,
        PauseCategory::NotAvailable,
        PauseCategory::UpTo50ms,
        PauseCategory::UpTo200ms,
        PauseCategory::UpTo1s,
        PauseCategory::Over1s,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PauseCategory::Off => "OFF",
            PauseCategory::NotAvailable => "NOT_AVAILABLE",
            PauseCategory::UpTo50ms => "P_LE_005",
            PauseCategory::UpTo200ms => "P_LE_02",
            PauseCategory::UpTo1s => "P_LE_1",
            PauseCategory::Over1s => "P_GT_1",
        }
    }
}

impl fmt::Display for PauseCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PauseCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PauseCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Format(alloc::format!("unknown pause category `{s}`")))
    }
}

/// Buckets an inter-word silence; `None` means the gap is unknown.
pub fn bucket_pause(gap: Option<f64>) -> Result<PauseCategory> {
    let Some(gap) = gap else {
        return Ok(PauseCategory::NotAvailable);
    };
    if gap.is_nan() || gap < 0.0 {
        return Err(Error::Domain(alloc::format!("negative pause {gap}")));
    }
    Ok(if gap == 0.0 {
        PauseCategory::Off
    } else if gap <= 0.05 {
        PauseCategory::UpTo50ms
    } else if gap <= 0.2 {
        PauseCategory::UpTo200ms
    } else if gap <= 1.0 {
        PauseCategory::UpTo1s
    } else {
        PauseCategory::Over1s
    })
}

/// Word and phone duration means.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DurationLexicon {
    /// word → (sample mean seconds, training count)
    pub word_means: BTreeMap<String, (f64, usize)>,
    pub phoneme_means: BTreeMap<String, f64>,
    pub pronunciations: BTreeMap<String, Vec<String>>,
}

/// Where a word's mean duration came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanSource {
    Sample,
    Phonemes,
    /// Sample mean from fewer than [`MIN_WORD_COUNT`] tokens, used because
    /// the word has no usable pronunciation.
    SparseSample,
    Global,
}

impl DurationLexicon {
    /// Sample means and counts from the aligned examples.
    pub fn estimate<'a>(examples: impl IntoIterator<Item = &'a Example>) -> DurationLexicon {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for ex in examples {
            let Some(al) = &ex.utterance.alignments else { continue };
            for (tok, (s, e)) in ex.utterance.tokens.iter().zip(al) {
                let entry = sums.entry(tok.clone()).or_insert((0.0, 0));
                entry.0 += e - s;
                entry.1 += 1;
            }
        }
        let word_means = sums
            .into_iter()
            .filter(|(_, (sum, _))| *sum > 0.0)
            .map(|(w, (sum, n))| (w, (sum / n as f64, n)))
            .collect();
        DurationLexicon {
            word_means,
            ..Default::default()
        }
    }

    /// Mean over all word sample means.
    pub fn global_mean(&self) -> f64 {
        if self.word_means.is_empty() {
            return DEFAULT_WORD_SECONDS;
        }
        self.word_means.values().map(|(m, _)| m).sum::<f64>() / self.word_means.len() as f64
    }

    fn phoneme_sum(&self, word: &str) -> Option<f64> {
        let pron = self.pronunciations.get(word)?;
        if pron.is_empty() {
            return None;
        }
        pron.iter()
            .map(|p| self.phoneme_means.get(p).copied())
            .sum::<Option<f64>>()
    }

    /// Mean duration of `word`: its sample mean when seen at least
    /// [`MIN_WORD_COUNT`] times, otherwise the sum of its phone means.
    pub fn mean_duration(&self, word: &str) -> (f64, MeanSource) {
        let sample = self.word_means.get(word).copied();
        if let Some((mean, n)) = sample {
            if n >= MIN_WORD_COUNT {
                return (mean, MeanSource::Sample);
            }
        }
        if let Some(sum) = self.phoneme_sum(word) {
            return (sum, MeanSource::Phonemes);
        }
        if let Some((mean, _)) = sample {
            return (mean, MeanSource::SparseSample);
        }
        (self.global_mean(), MeanSource::Global)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, name: &str, v: f64| {
            Err(Error::Data {
                record: alloc::format!("{what} {name}"),
                message: alloc::format!("mean duration must be positive, got {v}"),
            })
        };
        for (w, (m, _)) in &self.word_means {
            if !(*m > 0.0) {
                return bad("word", w, *m);
            }
        }
        for (p, m) in &self.phoneme_means {
            if !(*m > 0.0) {
                return bad("phone", p, *m);
            }
        }
        Ok(())
    }
}

/// Actual duration over the word's mean duration, clipped at 5.
pub fn duration_feature(word: &str, actual: f64, lexicon: &DurationLexicon) -> Result<f64> {
    if !(actual > 0.0 && actual.is_finite()) {
        return Err(Error::Domain(alloc::format!(
            "duration of `{word}` must be positive, got {actual}"
        )));
    }
    let (mean, source) = lexicon.mean_duration(word);
    if source == MeanSource::Global {
        log::warn!("`{word}` not in duration lexicon, using global mean {mean:.4} s");
    }
    Ok((actual / mean).min(MAX_DURATION_RATIO))
}

/// Frames covering `[start - context, end + context]`, clamped to the
/// utterance. Slices shorter than `min_rows` are zero-padded on both sides
/// (extra row on the right) up to `min_rows`.
pub fn word_frame_slice(frames: &Matrix, alignment: Alignment, context: f64, min_rows: usize) -> Matrix {
    let (start, end) = alignment;
    let total = frames.rows() as i64;
    let lo = libm::floor((start - context) / HOP_SECONDS + FRAME_EPS) as i64;
    let hi = libm::ceil((end + context) / HOP_SECONDS - FRAME_EPS) as i64;
    let lo = lo.clamp(0, total) as usize;
    let hi = hi.clamp(0, total) as usize;
    let len = hi.saturating_sub(lo);
    let cols = frames.cols().max(FRAME_FEATURES);
    let target = len.max(min_rows).max(1);
    let left = (target - len) / 2;
    let mut out = Matrix::zeros(target, cols);
    for r in 0..len {
        out.row_mut(left + r)[..frames.cols()].copy_from_slice(frames.row(lo + r));
    }
    out
}

/// Per-word prosodic inputs to the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodicInput {
    pub pause_pre: PauseCategory,
    pub pause_post: PauseCategory,
    /// Duration ratio in (0, 5].
    pub delta: f64,
    /// Word-aligned `[L × 6]` frame slice, already padded.
    pub frames: Matrix,
}

/// One [`ProsodicInput`] per token. Examples without acoustics yield
/// [`Error::Backoff`].
pub fn build_prosodic_inputs(
    example: &Example,
    lexicon: &DurationLexicon,
    context: f64,
    min_rows: usize,
) -> Result<Vec<ProsodicInput>> {
    if !example.has_acoustics {
        return Err(Error::Backoff(example.utterance.id.clone()));
    }
    utterance_prosody(&example.utterance, lexicon, context, min_rows)
}

/// [`build_prosodic_inputs`] for an utterance without a gold tree.
pub fn utterance_prosody(
    utt: &Utterance,
    lexicon: &DurationLexicon,
    context: f64,
    min_rows: usize,
) -> Result<Vec<ProsodicInput>> {
    let Some(alignments) = &utt.alignments else {
        return Err(Error::Backoff(utt.id.clone()));
    };
    let n = utt.tokens.len();
    let mut pauses = Vec::with_capacity(n + 1);
    pauses.push(PauseCategory::NotAvailable);
    for pair in alignments.windows(2) {
        let gap = pair[1].0 - pair[0].1;
        if gap < 0.0 {
            log::debug!("{}: overlapping words, treating gap {gap} as no pause", utt.id);
        }
        pauses.push(bucket_pause(Some(gap.max(0.0)))?);
    }
    pauses.push(PauseCategory::NotAvailable);

    let empty;
    let frames = match &utt.frames {
        Some(f) => f,
        None => {
            empty = Matrix::zeros(0, FRAME_FEATURES);
            &empty
        }
    };
    utt.tokens
        .iter()
        .zip(alignments)
        .enumerate()
        .map(|(i, (tok, &(s, e)))| {
            // Zero-length alignments get one frame of duration.
            let actual = (e - s).max(HOP_SECONDS);
            Ok(ProsodicInput {
                pause_pre: pauses[i],
                pause_post: pauses[i + 1],
                delta: duration_feature(tok, actual, lexicon)?,
                frames: word_frame_slice(frames, (s, e), context, min_rows),
            })
        })
        .collect()
}
