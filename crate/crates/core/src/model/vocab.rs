use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::treeops::{LinearParse, Symbol, XX};

pub const UNK: &str = "<unk>";

/// Input word vocabulary; id 0 is the unknown word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl WordVocab {
    /// Sorted vocabulary of the given tokens plus `<unk>`.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> WordVocab {
        let set: BTreeSet<&str> = tokens.into_iter().filter(|t| *t != UNK).collect();
        let mut words = Vec::with_capacity(set.len() + 1);
        words.push(UNK.to_string());
        words.extend(set.into_iter().map(String::from));
        WordVocab::from_words(words)
    }

    /// Vocabulary in the given id order; the first word must be `<unk>`.
    pub fn from_words(words: Vec<String>) -> WordVocab {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        WordVocab { words, index }
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Closed output vocabulary: start, end, `)`, `XX`, then one `(L` per label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolVocab {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl SymbolVocab {
    pub const START: usize = 0;
    pub const END: usize = 1;
    pub const CLOSE: usize = 2;
    pub const XX: usize = 3;
    const FIXED: usize = 4;

    pub fn new<'a>(labels: impl IntoIterator<Item = &'a str>) -> SymbolVocab {
        let set: BTreeSet<&str> = labels.into_iter().collect();
        let labels: Vec<String> = set.into_iter().map(String::from).collect();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i + Self::FIXED))
            .collect();
        SymbolVocab { labels, index }
    }

    /// Labels of all `(L` symbols in the given parses.
    pub fn from_parses<'a>(parses: impl IntoIterator<Item = &'a LinearParse>) -> SymbolVocab {
        let mut labels = BTreeSet::new();
        for p in parses {
            for s in &p.symbols {
                if let Symbol::Open(l) = s {
                    labels.insert(l.as_str());
                }
            }
        }
        SymbolVocab::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len() + Self::FIXED
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, sym: &Symbol) -> Result<usize> {
        match sym {
            Symbol::Close => Ok(Self::CLOSE),
            Symbol::Xx => Ok(Self::XX),
            Symbol::Open(l) => self
                .index
                .get(l)
                .copied()
                .ok_or_else(|| Error::Vocabulary(alloc::format!("({l}"))),
        }
    }

    /// Parse symbol for an output id; `None` for start and end.
    pub fn symbol(&self, id: usize) -> Option<Symbol> {
        match id {
            Self::START | Self::END => None,
            Self::CLOSE => Some(Symbol::Close),
            Self::XX => Some(Symbol::Xx),
            _ => self.labels.get(id - Self::FIXED).map(|l| Symbol::Open(l.clone())),
        }
    }

    pub fn name(&self, id: usize) -> String {
        match id {
            Self::START => "<s>".to_string(),
            Self::END => "</s>".to_string(),
            Self::XX => XX.to_string(),
            _ => self.symbol(id).map(|s| s.to_string()).unwrap_or_default(),
        }
    }

    /// Target ids for teacher forcing: the parse followed by the end marker.
    pub fn encode(&self, parse: &LinearParse) -> Result<Vec<usize>> {
        let mut ids = parse.symbols.iter().map(|s| self.id(s)).collect::<Result<Vec<_>>>()?;
        ids.push(Self::END);
        Ok(ids)
    }
}
