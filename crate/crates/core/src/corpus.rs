//! Utterances, aligned training examples, and energy features.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tree::Tree;

/// Frame hop in seconds.
pub const HOP_SECONDS: f64 = 0.01;
/// Per-frame f0/energy features: NCCF, POV-weighted log-pitch, delta
/// log-pitch, E_total, E_low, E_high.
pub const FRAME_FEATURES: usize = 6;
/// Allowed difference between the frame count and the aligned duration.
pub const FRAME_TOLERANCE: usize = 2;
/// Mel bands expected by [`compute_energy_features`].
pub const FBANK_BANDS: usize = 40;

/// Word-level start and end time in seconds.
pub type Alignment = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<String>,
    pub alignments: Option<Vec<Alignment>>,
    pub frames: Option<Matrix>,
    pub speaker_side: String,
}

/// Location of an ambiguous attachment: the object span and the modifier
/// span that follows it, and whether the modifier attaches to the verb
/// phrase (high) or to the object noun phrase (low).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttachmentSite {
    pub object: (usize, usize),
    pub modifier: (usize, usize),
    pub kind: Attachment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attachment {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub utterance: Utterance,
    pub gold: Tree,
    pub has_acoustics: bool,
    /// Set for synthetic sentences with an ambiguous attachment.
    pub attachment: Option<AttachmentSite>,
}

impl Example {
    /// Pairs an utterance with its gold tree. `has_acoustics` follows the
    /// presence of alignments.
    pub fn new(utterance: Utterance, gold: Tree) -> Result<Example> {
        let leaves = gold.leaf_count();
        if leaves != utterance.tokens.len() {
            return Err(Error::Data {
                record: utterance.id.clone(),
                message: alloc::format!(
                    "tree has {leaves} leaves but utterance has {} tokens",
                    utterance.tokens.len()
                ),
            });
        }
        if let Some(al) = &utterance.alignments {
            validate_alignments(&utterance.id, al)?;
            if al.len() != leaves {
                return Err(Error::Data {
                    record: utterance.id.clone(),
                    message: alloc::format!("{} alignments for {leaves} tokens", al.len()),
                });
            }
            if let Some(frames) = &utterance.frames {
                check_frame_count(&utterance.id, frames.rows(), al.last().map_or(0.0, |a| a.1))?;
            }
        }
        let has_acoustics = utterance.alignments.is_some();
        Ok(Example {
            utterance,
            gold,
            has_acoustics,
            attachment: None,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.utterance.tokens
    }
}

/// Times must be nonnegative with `start <= end` and non-decreasing starts.
pub fn validate_alignments(id: &str, alignments: &[Alignment]) -> Result<()> {
    let mut prev_start = f64::NEG_INFINITY;
    for (i, &(start, end)) in alignments.iter().enumerate() {
        let bad = |message: &str| Error::Data {
            record: alloc::format!("{id}[{i}]"),
            message: message.to_string(),
        };
        if !(start.is_finite() && end.is_finite()) {
            return Err(bad("non-finite time"));
        }
        if start < 0.0 || end < 0.0 {
            return Err(bad("negative time"));
        }
        if end < start {
            return Err(bad("end time before start time"));
        }
        if start < prev_start {
            return Err(bad("start times decrease"));
        }
        prev_start = start;
    }
    Ok(())
}

/// Frame count expected for audio ending at `end_seconds`.
pub fn expected_frames(end_seconds: f64) -> usize {
    libm::round(end_seconds / HOP_SECONDS) as usize
}

/// The frame matrix must match the aligned duration within
/// [`FRAME_TOLERANCE`] frames.
pub fn check_frame_count(id: &str, rows: usize, end_seconds: f64) -> Result<()> {
    let expected = expected_frames(end_seconds);
    if rows.abs_diff(expected) > FRAME_TOLERANCE {
        return Err(Error::Data {
            record: id.to_string(),
            message: alloc::format!(
                "{rows} frames for {end_seconds:.3} s of speech (expected {expected} ± {FRAME_TOLERANCE})"
            ),
        });
    }
    Ok(())
}

/// Builds examples from trees and whatever acoustic data exists for them.
/// Trees without alignments become text-only (backoff) examples; frames
/// without alignments are ignored.
pub fn assemble_examples(
    trees: Vec<(String, Tree)>,
    alignments: &BTreeMap<String, Vec<Alignment>>,
    frames: &BTreeMap<String, Matrix>,
) -> Result<Vec<Example>> {
    trees
        .into_iter()
        .map(|(id, gold)| {
            let tokens: Vec<String> = gold.leaves().into_iter().map(String::from).collect();
            let al = alignments.get(&id).cloned();
            let fr = al.as_ref().and_then(|_| frames.get(&id).cloned());
            if al.is_none() {
                log::debug!("{id}: no alignments, text-only backoff");
            }
            Example::new(
                Utterance {
                    speaker_side: speaker_side_of(&id),
                    id,
                    tokens,
                    alignments: al,
                    frames: fr,
                },
                gold,
            )
        })
        .collect()
}

/// Conversation side from ids like `sw2005_A_0012`; the whole id otherwise.
pub fn speaker_side_of(id: &str) -> String {
    let mut parts = id.splitn(3, '_');
    match (parts.next(), parts.next()) {
        (Some(conv), Some(side)) if side.len() == 1 => alloc::format!("{conv}_{side}"),
        _ => id.to_string(),
    }
}

/// Maps 40 mel filterbank energies per frame to `[E_total, E_low, E_high]`:
/// log of total energy over the speaker maximum, and log of the lower and
/// upper 20-band energies over the frame total.
pub fn compute_energy_features(fbank: &Matrix, speaker_max_total: f64) -> Result<Matrix> {
    if fbank.cols() != FBANK_BANDS {
        return Err(Error::Format(alloc::format!(
            "filterbank has {} bands, expected {FBANK_BANDS}",
            fbank.cols()
        )));
    }
    if !(speaker_max_total > 0.0 && speaker_max_total.is_finite()) {
        return Err(Error::Domain(alloc::format!(
            "speaker max energy must be positive, got {speaker_max_total}"
        )));
    }
    let half = FBANK_BANDS / 2;
    let mut out = Matrix::zeros(fbank.rows(), 3);
    for (t, row) in fbank.iter_rows().enumerate() {
        if let Some(b) = row.iter().position(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::Domain(alloc::format!(
                "frame {t} band {b} has nonpositive energy {}",
                row[b]
            )));
        }
        let low: f64 = row[..half].iter().sum();
        let high: f64 = row[half..].iter().sum();
        let total = low + high;
        let o = out.row_mut(t);
        o[0] = libm::log(total / speaker_max_total);
        o[1] = libm::log(low / total);
        o[2] = libm::log(high / total);
    }
    Ok(out)
}

/// Largest per-frame total energy, the normalizer for one speaker side.
pub fn max_total_energy(fbank: &Matrix) -> f64 {
    fbank
        .iter_rows()
        .map(|r| r.iter().sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}
