//! Data directories. A split `name` is stored as `name.trees`, with optional
//! `name.alignments.tsv`, `name.frames.tsv` and `name.attachments.tsv`
//! beside it; `lexicon.tsv` is shared by all splits.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use speechparse_core::corpus::{assemble_examples, Alignment, Example, FRAME_FEATURES};
use speechparse_core::prosody::DurationLexicon;
use speechparse_core::Matrix;

use crate::formats::{read_alignments, read_attachments, read_frame_table, read_lexicon, read_treebank};
use crate::{parse_file, Result};

pub const LEXICON_FILE: &str = "lexicon.tsv";

pub fn trees_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.trees"))
}

pub fn alignments_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.alignments.tsv"))
}

pub fn frames_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.frames.tsv"))
}

pub fn attachments_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.attachments.tsv"))
}

/// Alignments and frames of a split; empty maps for absent files.
pub fn load_acoustics(
    dir: &Path,
    split: &str,
) -> Result<(BTreeMap<String, Vec<Alignment>>, BTreeMap<String, Matrix>)> {
    let al_path = alignments_path(dir, split);
    let alignments = if al_path.exists() {
        parse_file(&al_path, read_alignments)?
    } else {
        log::info!("{}: not found, split is text-only", al_path.display());
        BTreeMap::new()
    };
    let fr_path = frames_path(dir, split);
    let frames = if fr_path.exists() {
        parse_file(&fr_path, |t| read_frame_table(t, FRAME_FEATURES))?
    } else {
        BTreeMap::new()
    };
    Ok((alignments, frames))
}

pub fn load_split(dir: &Path, split: &str) -> Result<Vec<Example>> {
    let tree_path = trees_path(dir, split);
    let trees = parse_file(&tree_path, |t| read_treebank(t, true))?;
    let (alignments, frames) = load_acoustics(dir, split)?;
    let mut examples = assemble_examples(trees, &alignments, &frames).map_err(|source| crate::Error::Core {
        path: tree_path.clone(),
        source,
    })?;
    let att_path = attachments_path(dir, split);
    if att_path.exists() {
        let sites = parse_file(&att_path, read_attachments)?;
        for ex in &mut examples {
            ex.attachment = sites.get(&ex.utterance.id).copied();
        }
    }
    Ok(examples)
}

/// `lexicon.tsv` from the data directory, or estimated from `examples`.
pub fn load_lexicon(dir: &Path, examples: &[Example]) -> Result<DurationLexicon> {
    let path = dir.join(LEXICON_FILE);
    if path.exists() {
        parse_file(&path, read_lexicon)
    } else {
        log::info!("{}: not found, estimating word durations", path.display());
        Ok(DurationLexicon::estimate(examples))
    }
}
