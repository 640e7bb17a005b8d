//! Line-oriented text formats for trees, timings, frames and lexicons.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use speechparse_core::corpus::{Alignment, Attachment, AttachmentSite, Example};
use speechparse_core::prosody::DurationLexicon;
use speechparse_core::tree::parse_bracketed;
use speechparse_core::{Error, Matrix, Result, Tree};

/// Ids of trees given without one: `s00001`, `s00002`, …
pub fn default_id(index: usize) -> String {
    format!("s{:05}", index + 1)
}

fn split_id(line: &str) -> (Option<&str>, &str) {
    match line.split_once('\t') {
        Some((id, rest)) => (Some(id.trim()), rest),
        None => (None, line),
    }
}

/// One tree per line, optionally preceded by `id<TAB>`. Blank lines are
/// skipped. With `preprocess`, trees are lower-cased and stripped of
/// function tags, punctuation and empty elements; trees left empty are
/// dropped with a warning.
pub fn read_treebank(text: &str, preprocess: bool) -> Result<Vec<(String, Tree)>> {
    let mut out = Vec::new();
    let mut index = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = split_id(line);
        let id = id.map(str::to_string).unwrap_or_else(|| default_id(index));
        index += 1;
        let tree = parse_bracketed(body, i + 1)?;
        let tree = if preprocess {
            match tree.preprocess() {
                Some(t) => t,
                None => {
                    log::warn!("line {}: tree `{id}` is empty after preprocessing, skipped", i + 1);
                    continue;
                }
            }
        } else {
            tree
        };
        out.push((id, tree));
    }
    Ok(out)
}

pub fn write_treebank(trees: &[(String, Tree)]) -> String {
    let mut out = String::new();
    for (id, t) in trees {
        let _ = writeln!(out, "{id}\t{t}");
    }
    out
}

/// Sentences to decode: treebank lines (their leaves are used) or lines of
/// space-separated tokens, either optionally preceded by `id<TAB>`.
pub fn read_sentences(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = split_id(line);
        let id = id.map(str::to_string).unwrap_or_else(|| default_id(out.len()));
        let tokens: Vec<String> = if body.trim_start().starts_with('(') {
            let tree = parse_bracketed(body, i + 1)?;
            let tree = tree.preprocess().ok_or(Error::EmptyTree { line: i + 1 })?;
            tree.leaves().into_iter().map(String::from).collect()
        } else {
            body.split_whitespace().map(str::to_lowercase).collect()
        };
        if tokens.is_empty() {
            return Err(Error::EmptyTree { line: i + 1 });
        }
        out.push((id, tokens));
    }
    Ok(out)
}

fn fields(line: &str, n: usize, line_no: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != n {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected {n} tab-separated fields, found {}", f.len()),
        });
    }
    Ok(f)
}

fn number<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse `{s}` as a number"),
    })
}

/// Rows within an id must be numbered 0, 1, 2, … in order.
fn check_index(id: &str, expected: usize, found: usize, line: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Parse {
            line,
            message: format!("{id}: expected index {expected}, found {found}"),
        });
    }
    Ok(())
}

/// `id  token_index  start_s  end_s`.
pub fn read_alignments(text: &str) -> Result<BTreeMap<String, Vec<Alignment>>> {
    let mut out: BTreeMap<String, Vec<Alignment>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line, 4, i + 1)?;
        let rows = out.entry(f[0].to_string()).or_default();
        check_index(f[0], rows.len(), number(f[1], i + 1)?, i + 1)?;
        rows.push((number(f[2], i + 1)?, number(f[3], i + 1)?));
    }
    Ok(out)
}

pub fn write_alignments(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        if let Some(al) = &ex.utterance.alignments {
            for (k, (s, e)) in al.iter().enumerate() {
                let _ = writeln!(out, "{}\t{k}\t{s}\t{e}", ex.utterance.id);
            }
        }
    }
    out
}

/// `id  frame_index  v1 … v_width`: frames, filterbanks or pitch tracks.
pub fn read_frame_table(text: &str, width: usize) -> Result<BTreeMap<String, Matrix>> {
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line, width + 2, i + 1)?;
        let n = counts.entry(f[0].to_string()).or_default();
        check_index(f[0], *n, number(f[1], i + 1)?, i + 1)?;
        *n += 1;
        let data = rows.entry(f[0].to_string()).or_default();
        for v in &f[2..] {
            data.push(number(v, i + 1)?);
        }
    }
    rows.into_iter()
        .map(|(id, data)| {
            let n = data.len() / width;
            Ok((id, Matrix::from_vec(n, width, data)?))
        })
        .collect()
}

pub fn write_frame_table(tables: &BTreeMap<String, Matrix>) -> String {
    let mut out = String::new();
    for (id, m) in tables {
        for (t, row) in m.iter_rows().enumerate() {
            let _ = write!(out, "{id}\t{t}");
            for v in row {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
    }
    out
}

/// `word  mean_s  count`, `#phone  phone  mean_s`, `#pron  word  p1 p2 …`.
pub fn read_lexicon(text: &str) -> Result<DurationLexicon> {
    let mut lex = DurationLexicon::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        match f[0] {
            "#phone" => {
                let f = fields(line, 3, i + 1)?;
                lex.phoneme_means.insert(f[1].to_string(), number(f[2], i + 1)?);
            }
            "#pron" => {
                let f = fields(line, 3, i + 1)?;
                let phones = f[2].split_whitespace().map(String::from).collect();
                lex.pronunciations.insert(f[1].to_string(), phones);
            }
            _ => {
                let f = fields(line, 3, i + 1)?;
                lex.word_means
                    .insert(f[0].to_string(), (number(f[1], i + 1)?, number(f[2], i + 1)?));
            }
        }
    }
    lex.validate()?;
    Ok(lex)
}

pub fn write_lexicon(lex: &DurationLexicon) -> String {
    let mut out = String::new();
    for (w, (mean, n)) in &lex.word_means {
        let _ = writeln!(out, "{w}\t{mean}\t{n}");
    }
    for (p, mean) in &lex.phoneme_means {
        let _ = writeln!(out, "#phone\t{p}\t{mean}");
    }
    for (w, phones) in &lex.pronunciations {
        let _ = writeln!(out, "#pron\t{w}\t{}", phones.join(" "));
    }
    out
}

/// `id  object_start  object_end  modifier_start  modifier_end  high|low`.
pub fn write_attachments(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        if let Some(s) = &ex.attachment {
            let kind = match s.kind {
                Attachment::High => "high",
                Attachment::Low => "low",
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{kind}",
                ex.utterance.id, s.object.0, s.object.1, s.modifier.0, s.modifier.1
            );
        }
    }
    out
}

pub fn read_attachments(text: &str) -> Result<BTreeMap<String, AttachmentSite>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line, 6, i + 1)?;
        let kind = match f[5] {
            "high" => Attachment::High,
            "low" => Attachment::Low,
            other => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("attachment must be high or low, found `{other}`"),
                })
            }
        };
        let n = |k: usize| number::<usize>(f[k], i + 1);
        out.insert(
            f[0].to_string(),
            AttachmentSite {
                object: (n(1)?, n(2)?),
                modifier: (n(3)?, n(4)?),
                kind,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn treebank_ids_and_preprocessing() {
        let text = "a1\t(S (NP-SBJ (PRP I)) (VP (VBD Ran)) (. .))\n\n( (S (-NONE- *)) )\n(S (XX b))\n";
        let trees = read_treebank(text, true).unwrap();
        assert_eq!(trees.len(), 2);
        assert_eq!(trees[0].0, "a1");
        assert_eq!(trees[0].1.to_string(), "(S (NP (PRP i)) (VP (VBD ran)))");
        assert_eq!(trees[1].0, "s00003");
        let raw = read_treebank(text, false).unwrap();
        assert_eq!(raw.len(), 3);
        assert_eq!(read_treebank(&write_treebank(&raw), false).unwrap(), raw);
        assert!(matches!(read_treebank("(S (XX a)\n", false), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn sentences_from_trees_or_tokens() {
        let s = read_sentences("x\t(S (NP (PRP I)) (VP (VBD ran)))\nWe saw it\n").unwrap();
        assert_eq!(s[0], ("x".to_string(), vec!["i".to_string(), "ran".to_string()]));
        assert_eq!(s[1].0, "s00002");
        assert_eq!(s[1].1, ["we", "saw", "it"]);
    }

    #[test]
    fn alignment_rows_must_be_in_order() {
        let al = read_alignments("u\t0\t0.0\t0.3\nu\t1\t0.42\t0.6\nv\t0\t0\t1\n").unwrap();
        assert_eq!(al["u"], [(0.0, 0.3), (0.42, 0.6)]);
        assert!(matches!(read_alignments("u\t1\t0\t1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_alignments("u\t0\t0\n"), Err(Error::Parse { .. })));
        assert!(matches!(read_alignments("u\t0\tzero\t1\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn frame_tables_roundtrip() {
        let text = "u\t0\t1\t2\t3\nu\t1\t4\t5\t6\n";
        let t = read_frame_table(text, 3).unwrap();
        assert_eq!(t["u"].rows(), 2);
        assert_eq!(t["u"].row(1), [4.0, 5.0, 6.0]);
        assert_eq!(write_frame_table(&t), text);
        assert!(read_frame_table(text, 2).is_err());
    }

    #[test]
    fn lexicon_roundtrip() {
        let text = "uh\t0.3\t20\n#phone\tah\t0.1\n#pron\tuh\tah ah\n";
        let lex = read_lexicon(text).unwrap();
        assert_eq!(lex.word_means["uh"], (0.3, 20));
        assert_eq!(lex.pronunciations["uh"], ["ah", "ah"]);
        assert_eq!(write_lexicon(&lex), text);
        assert!(matches!(read_lexicon("uh\t0\t3\n"), Err(Error::Data { .. })));
    }

    #[test]
    fn attachments_roundtrip() {
        let a = read_attachments("x\t2\t4\t4\t7\tlow\n").unwrap();
        assert_eq!(a["x"].modifier, (4, 7));
        assert_eq!(a["x"].kind, Attachment::Low);
        assert!(read_attachments("x\t2\t4\t4\t7\tmiddle\n").is_err());
    }
}
