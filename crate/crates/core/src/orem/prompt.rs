//! Prompt templates with fixed object and relation slots.

use serde::{Deserialize, Serialize};

use super::extract::WordSets;
use crate::decoder::tokenizer::{Tokenizer, NULL_WORD};
use crate::error::{Error, Result};

pub const OBJECT_SLOTS: usize = 6;
pub const RELATION_SLOTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Template {
    /// `o1, ..., o6. r1, r2, r3.`
    WordList = 1,
    /// `a photo of o1, ..., o6. A photo contains the relations of r1, r2, r3. Its caption is`
    PhotoOf = 2,
    /// `a photo contains objects: o1, ..., o6, and the relations are r1, r2, r3. Its caption is`
    #[default]
    ContainsObjects = 3,
}

impl TryFrom<u8> for Template {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Template::WordList),
            2 => Ok(Template::PhotoOf),
            3 => Ok(Template::ContainsObjects),
            _ => Err(Error::Config(format!("template id {v} not in 1..=3"))),
        }
    }
}

impl From<Template> for u8 {
    fn from(t: Template) -> u8 {
        t as u8
    }
}

impl Template {
    pub fn render(self, wo: &[String], wr: &[String]) -> Result<String> {
        if wo.len() > OBJECT_SLOTS || wr.len() > RELATION_SLOTS {
            return Err(Error::OversizedSlots {
                objects: wo.len(),
                relations: wr.len(),
                max_objects: OBJECT_SLOTS,
                max_relations: RELATION_SLOTS,
            });
        }
        let fill = |words: &[String], n: usize| -> String {
            (0..n)
                .map(|i| words.get(i).map_or(NULL_WORD, String::as_str))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let objs = fill(wo, OBJECT_SLOTS);
        let rels = fill(wr, RELATION_SLOTS);
        Ok(match self {
            Template::WordList => format!("{objs}. {rels}."),
            Template::PhotoOf => {
                format!("a photo of {objs}. A photo contains the relations of {rels}. Its caption is")
            }
            Template::ContainsObjects => {
                format!("a photo contains objects: {objs}, and the relations are {rels}. Its caption is")
            }
        })
    }

    /// Literal template text, for seeding a tokenizer vocabulary.
    pub fn all_literals() -> String {
        [Template::WordList, Template::PhotoOf, Template::ContainsObjects]
            .iter()
            .map(|t| t.render(&[], &[]).expect("empty slots fit"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub word_sets: WordSets,
    pub template_id: Template,
    pub rendered: String,
    pub token_ids: Vec<usize>,
}

pub fn assemble_prompt(word_sets: WordSets, template: Template, tokenizer: &Tokenizer) -> Result<PromptBundle> {
    let rendered = template.render(&word_sets.wo, &word_sets.wr)?;
    let token_ids = tokenizer.encode(&rendered)?;
    Ok(PromptBundle {
        word_sets,
        template_id: template,
        rendered,
        token_ids,
    })
}
