//! Deterministic lexicon-first part-of-speech tagging.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

const DEFAULT_PREPOSITIONS: &str = include_str!("../../data/prepositions.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosTag {
    Noun,
    Verb,
    Gerund,
    Preposition,
    Other,
}

impl PosTag {
    pub fn is_object(self) -> bool {
        self == PosTag::Noun
    }

    pub fn is_relation(self) -> bool {
        matches!(self, PosTag::Verb | PosTag::Gerund | PosTag::Preposition)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "noun",
            PosTag::Verb => "verb",
            PosTag::Gerund => "gerund",
            PosTag::Preposition => "preposition",
            PosTag::Other => "other",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "noun" => PosTag::Noun,
            "verb" => PosTag::Verb,
            "gerund" => PosTag::Gerund,
            "preposition" => PosTag::Preposition,
            "other" => PosTag::Other,
            _ => return Err(Error::Invalid(format!("unknown tag {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaggedWord {
    pub surface: String,
    pub tag: PosTag,
}

impl TaggedWord {
    pub fn new(surface: impl Into<String>, tag: PosTag) -> Self {
        Self {
            surface: surface.into(),
            tag,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, PosTag>,
    prepositions: HashSet<String>,
}

impl Lexicon {
    /// A lexicon with the shipped preposition list and no entries.
    pub fn new() -> Self {
        Self {
            entries: HashMap::new(),
            prepositions: DEFAULT_PREPOSITIONS.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect(),
        }
    }

    pub fn insert(&mut self, word: impl Into<String>, tag: PosTag) {
        self.entries.insert(word.into().to_lowercase(), tag);
    }

    pub fn with_entries<'a>(entries: impl IntoIterator<Item = (&'a str, PosTag)>) -> Self {
        let mut lex = Self::new();
        for (w, t) in entries {
            lex.insert(w, t);
        }
        lex
    }

    /// Parses `word<TAB>tag` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| Error::Invalid(format!("lexicon line {}: expected word<TAB>tag", i + 1)))?;
            let tag: PosTag = tag
                .trim()
                .parse()
                .map_err(|e| Error::Invalid(format!("lexicon line {}: {e}", i + 1)))?;
            lex.insert(word.trim(), tag);
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Invalid(m) => Error::Record {
                path: path.to_path_buf(),
                line: 0,
                message: m,
            },
            e => e,
        })
    }

    /// Replaces the closed preposition list.
    pub fn set_prepositions(&mut self, words: impl IntoIterator<Item = String>) {
        self.prepositions = words.into_iter().map(|w| w.to_lowercase()).collect();
    }

    pub fn tag(&self, token: &str) -> PosTag {
        if let Some(&t) = self.entries.get(token) {
            t
        } else if self.prepositions.contains(token) {
            PosTag::Preposition
        } else if token.len() > 4 && token.ends_with("ing") {
            PosTag::Gerund
        } else {
            PosTag::Noun
        }
    }
}

pub fn pos_tag(sentence: &str, lexicon: &Lexicon) -> Vec<TaggedWord> {
    text::words(sentence)
        .into_iter()
        .map(|w| {
            let tag = lexicon.tag(&w);
            TaggedWord { surface: w, tag }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use PosTag::*;

    #[test]
    fn riding_example() {
        let lex = Lexicon::with_entries([("man", Noun), ("bike", Noun), ("riding", Gerund), ("a", Other)]);
        let tags: Vec<PosTag> = pos_tag("a man riding a bike", &lex).into_iter().map(|t| t.tag).collect();
        assert_eq!(tags, [Other, Noun, Gerund, Other, Noun]);
    }

    #[test]
    fn fallbacks() {
        let lex = Lexicon::new();
        assert!(pos_tag("", &lex).is_empty());
        assert_eq!(lex.tag("glorping"), Gerund);
        assert_eq!(lex.tag("king"), Noun); // too short for the suffix rule
        assert_eq!(lex.tag("under"), Preposition);
        assert_eq!(lex.tag("zebra"), Noun);
    }

    #[test]
    fn lexicon_wins_over_closed_list() {
        let lex = Lexicon::with_entries([("like", Verb)]);
        assert_eq!(lex.tag("like"), Verb);
    }

    #[test]
    fn punctuation_and_case_are_normalized() {
        let lex = Lexicon::new();
        let t = pos_tag("Dogs, on the GRASS.", &lex);
        let s: Vec<&str> = t.iter().map(|w| w.surface.as_str()).collect();
        assert_eq!(s, ["dogs", "on", "the", "grass"]);
    }

    #[test]
    fn parse_rejects_bad_lines() {
        assert!(Lexicon::parse("dog\tnoun\ncat noun\n").is_err());
        assert!(Lexicon::parse("dog\tadjective\n").is_err());
        let lex = Lexicon::parse("Dog\tnoun\n\nrun\tverb\n").unwrap();
        assert_eq!(lex.tag("dog"), Noun);
        assert_eq!(lex.tag("run"), Verb);
    }
}
