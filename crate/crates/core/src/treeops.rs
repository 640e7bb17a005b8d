//! Linearized parse sequences and tree transformations used around the
//! decoder: linearization, repair of invalid decoder output, and flattening
//! of EDITED (disfluency) constituents.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::tree::Tree;

/// Label of reparandum constituents.
pub const EDITED: &str = "EDITED";
/// Normalized pre-terminal tag.
pub const XX: &str = "XX";
/// Label of the fallback root produced by [`repair`].
pub const FALLBACK_ROOT: &str = "S";

/// One symbol of a linearized parse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    /// `(L`
    Open(String),
    /// `)`
    Close,
    /// Pre-terminal placeholder `XX`.
    Xx,
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Open(label) => write!(f, "({label}"),
            Symbol::Close => f.write_str(")"),
            Symbol::Xx => f.write_str(XX),
        }
    }
}

impl FromStr for Symbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Symbol> {
        match s {
            ")" => Ok(Symbol::Close),
            XX => Ok(Symbol::Xx),
            _ if s.len() > 1 && s.starts_with('(') && !s[1..].contains(['(', ')']) => {
                Ok(Symbol::Open(s[1..].to_string()))
            }
            _ => Err(Error::Vocabulary(s.to_string())),
        }
    }
}

/// A linearized parse such as `(S (NP XX ) (VP XX ) )`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LinearParse {
    pub symbols: Vec<Symbol>,
}

impl LinearParse {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        LinearParse { symbols }
    }

    pub fn xx_count(&self) -> usize {
        self.symbols.iter().filter(|s| **s == Symbol::Xx).count()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Checks that the sequence describes exactly one tree over
    /// `num_tokens` words: balanced, a single bracketed root, no empty
    /// constituents, and one `XX` per token.
    pub fn validate(&self, num_tokens: usize) -> Result<()> {
        let invalid = |m: &str| Err(Error::Contract(alloc::format!("invalid parse `{self}`: {m}")));
        if self.symbols.is_empty() {
            return invalid("empty");
        }
        if !matches!(self.symbols[0], Symbol::Open(_)) {
            return invalid("root is not a bracket");
        }
        let mut depth = 0usize;
        for (i, sym) in self.symbols.iter().enumerate() {
            match sym {
                Symbol::Open(_) => depth += 1,
                Symbol::Close => {
                    if depth == 0 {
                        return invalid("unmatched `)`");
                    }
                    if matches!(self.symbols[i - 1], Symbol::Open(_)) {
                        return invalid("empty constituent");
                    }
                    depth -= 1;
                    if depth == 0 && i + 1 != self.symbols.len() {
                        return invalid("more than one root");
                    }
                }
                Symbol::Xx => {}
            }
        }
        if depth != 0 {
            return invalid("unclosed `(`");
        }
        let xx = self.xx_count();
        if xx != num_tokens {
            return Err(Error::Contract(alloc::format!(
                "parse has {xx} pre-terminals for {num_tokens} tokens"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for LinearParse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, sym) in self.symbols.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{sym}")?;
        }
        Ok(())
    }
}

impl FromStr for LinearParse {
    type Err = Error;

    fn from_str(s: &str) -> Result<LinearParse> {
        s.split_whitespace()
            .map(Symbol::from_str)
            .collect::<Result<Vec<_>>>()
            .map(LinearParse::new)
    }
}

/// Depth-first emission of brackets with pre-terminals replaced by `XX` and
/// terminals omitted.
pub fn linearize(tree: &Tree) -> LinearParse {
    let mut symbols = Vec::new();
    emit(tree, &mut symbols);
    LinearParse { symbols }
}

fn emit(tree: &Tree, out: &mut Vec<Symbol>) {
    if tree.is_leaf() || tree.is_preterminal() {
        out.push(Symbol::Xx);
        return;
    }
    out.push(Symbol::Open(tree.label().to_string()));
    for child in tree.children() {
        emit(child, out);
    }
    out.push(Symbol::Close);
}

/// Merges `tokens` into a valid linearized parse: the i-th `XX` becomes
/// `(XX tokens[i])`. The parse must already be valid; see [`repair`].
pub fn delinearize<S: AsRef<str>>(parse: &LinearParse, tokens: &[S]) -> Result<Tree> {
    parse.validate(tokens.len())?;
    let mut stack: Vec<(String, Vec<Tree>)> = Vec::new();
    let mut words = tokens.iter();
    let mut root = None;
    for sym in &parse.symbols {
        match sym {
            Symbol::Open(label) => stack.push((label.clone(), Vec::new())),
            Symbol::Xx => {
                let word = words.next().expect("validated token count");
                stack
                    .last_mut()
                    .expect("validated root bracket")
                    .1
                    .push(Tree::preterminal(XX, word.as_ref()));
            }
            Symbol::Close => {
                let (label, children) = stack.pop().expect("validated balance");
                let node = Tree::node(label, children);
                match stack.last_mut() {
                    Some(parent) => parent.1.push(node),
                    None => root = Some(node),
                }
            }
        }
    }
    Ok(root.expect("validated root bracket"))
}

/// Turns any symbol sequence into a valid parse with exactly `num_tokens`
/// pre-terminals.
///
/// Brackets are fixed first: unmatched `)` are dropped and unclosed `(L` are
/// closed at the end. Empty constituents are removed and a forest is wrapped
/// in a single root. Then the `XX` count is fixed: missing ones are inserted
/// before the final `)`, surplus ones are deleted starting from the end. An
/// empty result becomes the flat parse `(S XX … XX )`.
pub fn repair(raw: &[Symbol], num_tokens: usize) -> LinearParse {
    if num_tokens == 0 {
        return LinearParse::default();
    }

    let mut depth = 0usize;
    let mut symbols: Vec<Symbol> = Vec::with_capacity(raw.len() + 4);
    for sym in raw {
        match sym {
            Symbol::Open(_) => depth += 1,
            Symbol::Close if depth == 0 => continue,
            Symbol::Close => depth -= 1,
            Symbol::Xx => {}
        }
        symbols.push(sym.clone());
    }
    symbols.extend(core::iter::repeat(Symbol::Close).take(depth));
    let mut symbols = drop_empty_constituents(symbols);
    if symbols.is_empty() {
        return flat_parse(num_tokens);
    }
    if !single_bracketed_root(&symbols) {
        symbols.insert(0, Symbol::Open(FALLBACK_ROOT.to_string()));
        symbols.push(Symbol::Close);
    }

    let xx = symbols.iter().filter(|s| **s == Symbol::Xx).count();
    if xx < num_tokens {
        let last = symbols.len() - 1;
        symbols.splice(last..last, core::iter::repeat(Symbol::Xx).take(num_tokens - xx));
    } else if xx > num_tokens {
        let mut surplus = xx - num_tokens;
        for i in (0..symbols.len()).rev() {
            if surplus == 0 {
                break;
            }
            if symbols[i] == Symbol::Xx {
                symbols.remove(i);
                surplus -= 1;
            }
        }
        symbols = drop_empty_constituents(symbols);
    }
    LinearParse { symbols }
}

/// `(S XX … XX )`.
pub fn flat_parse(num_tokens: usize) -> LinearParse {
    let mut symbols = Vec::with_capacity(num_tokens + 2);
    symbols.push(Symbol::Open(FALLBACK_ROOT.to_string()));
    symbols.extend(core::iter::repeat(Symbol::Xx).take(num_tokens));
    symbols.push(Symbol::Close);
    LinearParse { symbols }
}

/// Removes `(L )` pairs, including ones that become empty after an inner
/// pair is removed. Input must be balanced.
fn drop_empty_constituents(symbols: Vec<Symbol>) -> Vec<Symbol> {
    let mut out: Vec<Symbol> = Vec::with_capacity(symbols.len());
    for sym in symbols {
        if sym == Symbol::Close && matches!(out.last(), Some(Symbol::Open(_))) {
            out.pop();
        } else {
            out.push(sym);
        }
    }
    out
}

fn single_bracketed_root(symbols: &[Symbol]) -> bool {
    if !matches!(symbols.first(), Some(Symbol::Open(_))) {
        return false;
    }
    let mut depth = 0usize;
    for (i, sym) in symbols.iter().enumerate() {
        match sym {
            Symbol::Open(_) => depth += 1,
            Symbol::Close => {
                depth -= 1;
                if depth == 0 {
                    return i + 1 == symbols.len();
                }
            }
            Symbol::Xx => {}
        }
    }
    false
}

/// Collapses everything under EDITED nodes so that their leaves become
/// immediate `(XX token)` children. The outermost EDITED absorbs nested ones.
pub fn flatten_edits(tree: &Tree) -> Tree {
    match tree {
        Tree::Leaf(_) => tree.clone(),
        Tree::Node { label, .. } if label == EDITED => Tree::node(
            label.clone(),
            tree.leaves().into_iter().map(|w| Tree::preterminal(XX, w)).collect(),
        ),
        Tree::Node { label, children } => {
            Tree::node(label.clone(), children.iter().map(flatten_edits).collect())
        }
    }
}

/// True iff some node is labeled EDITED.
pub fn contains_edit(tree: &Tree) -> bool {
    tree.any_node(|n| !n.is_leaf() && n.label() == EDITED)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::parse_bracketed;
    use alloc::vec;
    use proptest::prelude::*;

    fn lp(s: &str) -> LinearParse {
        s.parse().unwrap()
    }

    fn t(s: &str) -> Tree {
        parse_bracketed(s, 1).unwrap()
    }

    #[test]
    fn linearize_examples() {
        assert_eq!(
            linearize(&t("(S (NP (PRP i)) (VP (VBP know)))")).to_string(),
            "(S (NP XX ) (VP XX ) )"
        );
        assert_eq!(linearize(&t("(INTJ (UH uh))")).to_string(), "(INTJ XX )");
        assert_eq!(
            linearize(&t("(S (EDITED (NP (PRP i))) (NP (PRP i)) (VP (VBP know)))")).to_string(),
            "(S (EDITED (NP XX ) ) (NP XX ) (VP XX ) )"
        );
    }

    #[test]
    fn delinearize_examples() {
        let tree = delinearize(&lp("(S XX XX )"), &["i", "know"]).unwrap();
        assert_eq!(tree.to_string(), "(S (XX i) (XX know))");

        let gold = t("(S (NP (PRP i)) (VP (VBP know)))");
        let back = delinearize(&linearize(&gold), &gold.leaves()).unwrap();
        assert_eq!(back.to_string(), "(S (NP (XX i)) (VP (XX know)))");

        assert!(matches!(
            delinearize(&lp("(S XX )"), &["i", "know"]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn repair_examples() {
        let open = [Symbol::Open("S".into()), Symbol::Open("NP".into()), Symbol::Xx];
        assert_eq!(repair(&open, 1), lp("(S (NP XX ) )"));
        assert_eq!(repair(&lp("(S XX XX XX )").symbols, 2), lp("(S XX XX )"));
        assert_eq!(repair(&[], 3), lp("(S XX XX XX )"));
    }

    #[test]
    fn repair_handles_leading_closes_forests_and_empties() {
        assert_eq!(repair(&lp(") ) (S XX )").symbols, 1), lp("(S XX )"));
        assert_eq!(repair(&lp("(NP XX ) (VP XX )").symbols, 2), lp("(S (NP XX ) (VP XX ) )"));
        assert_eq!(repair(&lp("XX XX").symbols, 2), lp("(S XX XX )"));
        assert_eq!(repair(&lp("(S (NP ) XX )").symbols, 1), lp("(S XX )"));
        assert_eq!(repair(&lp("(S XX )").symbols, 3), lp("(S XX XX XX )"));
        assert_eq!(repair(&lp("(S (A XX ) (B XX ) )").symbols, 1), lp("(S (A XX ) )"));
        assert_eq!(repair(&lp(") ) )").symbols, 2), lp("(S XX XX )"));
    }

    #[test]
    fn flatten_examples() {
        assert_eq!(
            flatten_edits(&t("(EDITED (NP (PRP i) (VBP am)))")).to_string(),
            "(EDITED (XX i) (XX am))"
        );
        let fluent = t("(S (NP (PRP i)) (VP (VBP know)))");
        assert_eq!(flatten_edits(&fluent), fluent);
        assert_eq!(
            flatten_edits(&t("(EDITED (EDITED (XX a)) (XX b))")).to_string(),
            "(EDITED (XX a) (XX b))"
        );
    }

    #[test]
    fn contains_edit_examples() {
        assert!(!contains_edit(&t("(S (XX hi))")));
        assert!(contains_edit(&t("(S (EDITED (XX i)) (XX i))")));
    }

    #[test]
    fn symbol_text_roundtrip() {
        let p = lp("(S (NP XX ) (VP XX ) )");
        assert_eq!(p.symbols.len(), 8);
        assert!("(S [x ]".parse::<LinearParse>().is_err());
    }

    fn arb_tree() -> impl Strategy<Value = Tree> {
        let leaf = "[a-z]{1,3}".prop_map(|w| Tree::preterminal("XX", w));
        leaf.prop_recursive(4, 24, 4, |inner| {
            (prop::sample::select(vec!["S", "NP", "VP", "PP", EDITED]), prop::collection::vec(inner, 1..4))
                .prop_map(|(l, c)| Tree::node(l, c))
        })
        .prop_map(|t| if t.is_preterminal() { Tree::node("S", vec![t]) } else { t })
    }

    fn arb_symbol() -> impl Strategy<Value = Symbol> {
        prop_oneof![
            Just(Symbol::Close),
            Just(Symbol::Xx),
            prop::sample::select(vec!["S", "NP", "VP"]).prop_map(|l| Symbol::Open(l.into())),
        ]
    }

    proptest! {
        #[test]
        fn linearize_delinearize_is_idempotent(tree in arb_tree()) {
            let lin = linearize(&tree);
            let back = delinearize(&lin, &tree.leaves()).unwrap();
            prop_assert_eq!(linearize(&back), lin);
        }

        #[test]
        fn repair_is_total(raw in prop::collection::vec(arb_symbol(), 0..30), n in 1usize..12) {
            let fixed = repair(&raw, n);
            prop_assert!(fixed.validate(n).is_ok(), "{} for {}", fixed, n);
        }

        #[test]
        fn repair_is_identity_on_valid(tree in arb_tree()) {
            let lin = linearize(&tree);
            prop_assert_eq!(repair(&lin.symbols, tree.leaf_count()), lin);
        }

        #[test]
        fn flatten_preserves_leaves(tree in arb_tree()) {
            let flat = flatten_edits(&tree);
            prop_assert_eq!(flat.leaves(), tree.leaves());
        }
    }
}
