//! Labeled ordered constituency trees and the bracketed text format.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// A constituency tree. Leaves carry tokens; internal nodes carry a label and
/// at least one child.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tree {
    Leaf(String),
    Node { label: String, children: Vec<Tree> },
}

/// POS tags whose leaves are removed during preprocessing.
pub const PUNCTUATION_TAGS: &[&str] = &[
    ",", ".", ":", "``", "''", "-LRB-", "-RRB-", "-LCB-", "-RCB-", "HYPH", "NFP",
];

/// Tag of empty elements (traces), removed alongside punctuation.
pub const EMPTY_ELEMENT_TAG: &str = "-NONE-";

impl Tree {
    pub fn leaf(token: impl Into<String>) -> Tree {
        Tree::Leaf(token.into())
    }

    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Tree {
        Tree::Node {
            label: label.into(),
            children,
        }
    }

    /// `(tag token)`.
    pub fn preterminal(tag: impl Into<String>, token: impl Into<String>) -> Tree {
        Tree::node(tag, alloc::vec![Tree::leaf(token)])
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Tree::Leaf(_))
    }

    /// A node whose single child is a leaf.
    pub fn is_preterminal(&self) -> bool {
        match self {
            Tree::Node { children, .. } => children.len() == 1 && children[0].is_leaf(),
            Tree::Leaf(_) => false,
        }
    }

    /// Label of an internal node, or the token of a leaf.
    pub fn label(&self) -> &str {
        match self {
            Tree::Leaf(token) => token,
            Tree::Node { label, .. } => label,
        }
    }

    pub fn children(&self) -> &[Tree] {
        match self {
            Tree::Leaf(_) => &[],
            Tree::Node { children, .. } => children,
        }
    }

    pub fn token(&self) -> Option<&str> {
        match self {
            Tree::Leaf(token) => Some(token),
            Tree::Node { .. } => None,
        }
    }

    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Tree::Leaf(token) => out.push(token),
            Tree::Node { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Node { children, .. } => children.iter().map(Tree::leaf_count).sum(),
        }
    }

    /// Calls `f(node, start, end)` for every node in pre-order with its
    /// half-open token span.
    pub fn visit_spans<'a, F: FnMut(&'a Tree, usize, usize)>(&'a self, f: &mut F) {
        self.visit_from(0, f);
    }

    fn visit_from<'a, F: FnMut(&'a Tree, usize, usize)>(&'a self, start: usize, f: &mut F) -> usize {
        match self {
            Tree::Leaf(_) => {
                f(self, start, start + 1);
                start + 1
            }
            Tree::Node { children, .. } => {
                let end = start + self.leaf_count();
                f(self, start, end);
                let mut pos = start;
                for child in children {
                    pos = child.visit_from(pos, f);
                }
                end
            }
        }
    }

    /// Span of the root, `[0, leaf_count)`.
    pub fn span(&self) -> (usize, usize) {
        (0, self.leaf_count())
    }

    /// Checks structural invariants: internal nodes have children and the
    /// tree has at least one leaf.
    pub fn validate(&self) -> Result<()> {
        match self {
            Tree::Leaf(_) => Ok(()),
            Tree::Node { label, children } => {
                if children.is_empty() {
                    return Err(Error::Contract(alloc::format!(
                        "node `{label}` has no children"
                    )));
                }
                children.iter().try_for_each(Tree::validate)
            }
        }
    }

    /// Any node satisfying `pred`.
    pub fn any_node<F: Fn(&Tree) -> bool + Copy>(&self, pred: F) -> bool {
        pred(self) || self.children().iter().any(|c| c.any_node(pred))
    }

    /// Lower-cases tokens, strips function tags, and removes punctuation and
    /// empty-element leaves, pruning constituents left without children.
    /// Returns `None` when nothing remains.
    pub fn preprocess(&self) -> Option<Tree> {
        match self {
            Tree::Leaf(token) => Some(Tree::Leaf(token.to_lowercase())),
            Tree::Node { label, children } => {
                if self.is_preterminal()
                    && (PUNCTUATION_TAGS.contains(&label.as_str()) || label == EMPTY_ELEMENT_TAG)
                {
                    return None;
                }
                let kept: Vec<Tree> = children.iter().filter_map(Tree::preprocess).collect();
                if kept.is_empty() {
                    None
                } else {
                    Some(Tree::node(strip_function_tags(label), kept))
                }
            }
        }
    }
}

/// `NP-SBJ-1` → `NP`, `PP=2` → `PP`; labels starting with `-` are kept whole.
pub fn strip_function_tags(label: &str) -> String {
    if label.starts_with('-') {
        return label.to_owned();
    }
    match label.find(['-', '=']) {
        Some(0) | None => label.to_owned(),
        Some(i) => label[..i].to_owned(),
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tree::Leaf(token) => f.write_str(token),
            Tree::Node { label, children } => {
                write!(f, "({label}")?;
                for child in children {
                    write!(f, " {child}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        let boundary = ch == '(' || ch == ')' || ch.is_whitespace();
        if boundary {
            if let Some(s) = start.take() {
                out.push(Tok::Atom(&text[s..i]));
            }
            match ch {
                '(' => out.push(Tok::Open),
                ')' => out.push(Tok::Close),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok::Atom(&text[s..]));
    }
    out
}

/// Parses one bracketed tree, e.g. `(S (NP (PRP i)) (VP (VBP know)))`.
/// `line` is only used in error messages. A wrapping root without a label,
/// as in `( (S ...) )`, is removed.
pub fn parse_bracketed(text: &str, line: usize) -> Result<Tree> {
    let toks = tokenize(text);
    if toks.is_empty() {
        return Err(Error::EmptyTree { line });
    }
    let mut pos = 0;
    let tree = parse_node(&toks, &mut pos, line)?;
    if pos != toks.len() {
        return Err(Error::Parse {
            line,
            message: "trailing input after tree".to_string(),
        });
    }
    let tree = match tree {
        Tree::Node { label, mut children } if label.is_empty() && children.len() == 1 && !children[0].is_leaf() => {
            children.pop().unwrap()
        }
        Tree::Node { label, .. } if label.is_empty() => {
            return Err(Error::Parse {
                line,
                message: "root node has no label".to_string(),
            })
        }
        other => other,
    };
    Ok(tree)
}

fn unbalanced(line: usize) -> Error {
    Error::Parse {
        line,
        message: "unbalanced brackets".to_string(),
    }
}

fn parse_node(toks: &[Tok<'_>], pos: &mut usize, line: usize) -> Result<Tree> {
    match toks.get(*pos) {
        Some(Tok::Open) => *pos += 1,
        Some(Tok::Close) => return Err(unbalanced(line)),
        Some(Tok::Atom(a)) => {
            return Err(Error::Parse {
                line,
                message: alloc::format!("expected `(` but found `{a}`"),
            })
        }
        None => return Err(unbalanced(line)),
    }
    let label = match toks.get(*pos) {
        Some(Tok::Atom(a)) => {
            *pos += 1;
            (*a).to_owned()
        }
        _ => String::new(),
    };
    let mut children = Vec::new();
    loop {
        match toks.get(*pos) {
            Some(Tok::Close) => {
                *pos += 1;
                break;
            }
            Some(Tok::Open) => children.push(parse_node(toks, pos, line)?),
            Some(Tok::Atom(a)) => {
                children.push(Tree::leaf(*a));
                *pos += 1;
            }
            None => return Err(unbalanced(line)),
        }
    }
    if children.is_empty() {
        return Err(Error::EmptyTree { line });
    }
    Ok(Tree::Node { label, children })
}
