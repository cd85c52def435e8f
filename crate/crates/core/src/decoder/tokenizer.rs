//! Word-level tokenizer built from a caption corpus.
//!
//! Text is split on whitespace and punctuation is peeled off into its own
//! tokens. Case is preserved so template text ("Its caption is") survives a
//! round trip; captions are lowercased upstream by [`crate::text`].

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::store::records::{read_lines, write_lines};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const NULL: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<null>"];

/// Surface form of the null slot filler; it encodes to [`NULL`].
pub const NULL_WORD: &str = "null";

const ATTACHED_PUNCT: [&str; 6] = [",", ".", ":", ";", "!", "?"];

/// Splits text into tokenizer pieces.
pub fn pieces(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let start = chunk.find(|c: char| !c.is_ascii_punctuation()).unwrap_or(chunk.len());
        let end = chunk.rfind(|c: char| !c.is_ascii_punctuation()).map_or(start, |i| i + 1);
        for (i, _) in chunk[..start].char_indices() {
            out.push(&chunk[i..i + 1]);
        }
        if end > start {
            out.push(&chunk[start..end]);
        }
        for (i, _) in chunk[end..].char_indices() {
            out.push(&chunk[end + i..end + i + 1]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Tokenizer {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Invalid(format!("vocab must start with {SPECIALS:?}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocab entry {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Vocabulary = specials, then every distinct piece of `texts` in sorted order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set = BTreeSet::new();
        for t in texts {
            for p in pieces(t) {
                if p != NULL_WORD && !SPECIALS.contains(&p) {
                    set.insert(p.to_owned());
                }
            }
        }
        let tokens = SPECIALS.iter().map(|s| s.to_string()).chain(set).collect();
        Self::from_tokens(tokens).expect("specials are distinct")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tokens(read_lines(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_lines(path, &self.tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        if token == NULL_WORD {
            return Some(NULL);
        }
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        pieces(text)
            .into_iter()
            .map(|p| self.id(p).ok_or_else(|| Error::UnknownToken(p.to_owned())))
            .collect()
    }

    /// Inverse of [`encode`](Self::encode) on canonical text; `<pad>`,
    /// `<bos>` and `<eos>` are dropped.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let piece = match id {
                PAD | BOS | EOS => continue,
                NULL => NULL_WORD,
                _ => self.token(id).ok_or(Error::BadTokenId(id))?,
            };
            if !out.is_empty() && !ATTACHED_PUNCT.contains(&piece) {
                out.push(' ');
            }
            out.push_str(piece);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pieces_split_punctuation() {
        assert_eq!(pieces("objects: man, bike. Its"), ["objects", ":", "man", ",", "bike", ".", "Its"]);
        assert_eq!(pieces("(a)"), ["(", "a", ")"]);
        assert_eq!(pieces("..."), [".", ".", "."]);
        assert!(pieces("  ").is_empty());
    }

    #[test]
    fn specials_first_and_null_maps_to_special() {
        let tok = Tokenizer::build(["a man null", "a dog"]);
        assert_eq!(tok.token(0), Some("<pad>"));
        assert_eq!(tok.token(3), Some("<null>"));
        assert_eq!(tok.encode("null").unwrap(), [NULL]);
        assert_eq!(tok.len(), 4 + 3);
    }

    #[test]
    fn roundtrip_and_unknown() {
        let text = "a photo contains objects: man, null, and the relations are on. Its caption is";
        let tok = Tokenizer::build([text]);
        let ids = tok.encode(text).unwrap();
        assert_eq!(tok.decode(&ids).unwrap(), text);
        assert!(matches!(tok.encode("zebra"), Err(Error::UnknownToken(w)) if w == "zebra"));
        assert!(matches!(tok.decode(&[999]), Err(Error::BadTokenId(999))));
    }

    #[test]
    fn vocab_file_roundtrip() {
        let tok = Tokenizer::build(["a b c", "d"]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        tok.save(&p).unwrap();
        assert_eq!(Tokenizer::load(&p).unwrap(), tok);
        std::fs::write(&p, "<bos>\n<pad>\n").unwrap();
        assert!(Tokenizer::load(&p).is_err());
    }
}
