//! Prompt templates turning a relation instance into a single-mask text.
//!
//! Rendered text uses backend-agnostic placeholders (`[CLS]`, `[MASK]`,
//! `[SEP]`); backends map them to their own special tokens.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, RelationInstance};

pub const CLS: &str = "[CLS]";
pub const MASK: &str = "[MASK]";
pub const SEP: &str = "[SEP]";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("instance {instance} contains reserved placeholder {placeholder}")]
    ReservedPlaceholder {
        instance: String,
        placeholder: &'static str,
    },
    #[error("unknown template {0:?} (expected p, p-empty, p1, p2 or p3)")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    #[serde(rename = "p")]
    P,
    #[serde(rename = "p-empty")]
    PEmpty,
    #[serde(rename = "p1")]
    P1,
    #[serde(rename = "p2")]
    P2,
    #[serde(rename = "p3")]
    P3,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [Self::P, Self::PEmpty, Self::P1, Self::P2, Self::P3];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::P => "p",
            Self::PEmpty => "p-empty",
            Self::P1 => "p1",
            Self::P2 => "p2",
            Self::P3 => "p3",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Cls,
    Sentence,
    HeadMention,
    TailMention,
    Mask,
    Sep,
    Literal(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn new(id: TemplateId) -> Self {
        use Segment::*;
        let noun_body = [
            HeadMention,
            Literal("is the"),
            Mask,
            Literal("of"),
            TailMention,
        ];
        let mut segments = vec![Cls];
        match id {
            TemplateId::P => segments.extend([Sentence, HeadMention, Mask, TailMention]),
            TemplateId::PEmpty => segments.extend([HeadMention, Mask, TailMention]),
            TemplateId::P1 => {
                segments.push(Sentence);
                segments.extend(noun_body);
            }
            TemplateId::P2 => {
                segments.extend([Sentence, Literal("In this sentence,")]);
                segments.extend(noun_body);
            }
            TemplateId::P3 => {
                segments.extend([Sentence, Literal("We deduce that")]);
                segments.extend(noun_body);
            }
        }
        segments.extend([Literal("."), Sep]);
        Self { id, segments }
    }

    pub fn render(&self, inst: &RelationInstance) -> Result<RenderedPrompt, PromptError> {
        let sentence = inst.sentence();
        for text in [&sentence, &inst.head.mention_text, &inst.tail.mention_text] {
            for placeholder in [CLS, MASK, SEP] {
                if text.contains(placeholder) {
                    return Err(PromptError::ReservedPlaceholder {
                        instance: inst.instance_id.clone(),
                        placeholder,
                    });
                }
            }
        }

        let mut text = String::new();
        let mut mask_offset = 0;
        for segment in &self.segments {
            let piece: &str = match segment {
                Segment::Cls => CLS,
                Segment::Sentence => &sentence,
                Segment::HeadMention => &inst.head.mention_text,
                Segment::TailMention => &inst.tail.mention_text,
                Segment::Mask => MASK,
                Segment::Sep => SEP,
                Segment::Literal(s) => s,
            };
            // punctuation literals attach to the preceding piece
            let attach = matches!(segment, Segment::Literal(s) if s.starts_with(['.', ',']));
            if !text.is_empty() && !attach {
                text.push(' ');
            }
            if *segment == Segment::Mask {
                mask_offset = text.len();
            }
            text.push_str(piece);
        }

        Ok(RenderedPrompt {
            text,
            mask_offset,
            source_instance_id: inst.instance_id.clone(),
            template_id: self.id,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    /// Byte offset of the mask placeholder in `text`.
    pub mask_offset: usize,
    pub source_instance_id: String,
    pub template_id: TemplateId,
}

impl RenderedPrompt {
    pub fn mask_count(&self) -> usize {
        self.text.matches(MASK).count()
    }

    /// One JSONL audit line: instance_id, template_id, text.
    pub fn to_jsonl(&self) -> String {
        serde_json::json!({
            "instance_id": self.source_instance_id,
            "template_id": self.template_id,
            "text": self.text,
        })
        .to_string()
    }
}

pub fn render(template: &PromptTemplate, inst: &RelationInstance) -> Result<RenderedPrompt, PromptError> {
    template.render(inst)
}

pub fn render_all(
    template: &PromptTemplate,
    dataset: &Dataset,
) -> Result<Vec<RenderedPrompt>, PromptError> {
    dataset
        .instances
        .iter()
        .map(|inst| template.render(inst))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntitySpan, TokenSpan};

    fn queen() -> RelationInstance {
        let tokens: Vec<String> = "Queen Elizabeth II was married to Prince Philip."
            .split(' ')
            .map(String::from)
            .collect();
        RelationInstance {
            instance_id: "q".into(),
            head: EntitySpan {
                mention_text: "Queen Elizabeth II".into(),
                kb_id: None,
                token_spans: vec![TokenSpan::new(0, 2)],
            },
            tail: EntitySpan {
                mention_text: "Prince Philip".into(),
                kb_id: None,
                token_spans: vec![TokenSpan::new(6, 7)],
            },
            tokens,
            gold_relation: Some("spouse".into()),
        }
    }

    fn text(id: TemplateId) -> String {
        PromptTemplate::new(id).render(&queen()).unwrap().text
    }

    #[test]
    fn verb_prompt() {
        assert_eq!(
            text(TemplateId::P),
            "[CLS] Queen Elizabeth II was married to Prince Philip. Queen Elizabeth II [MASK] Prince Philip. [SEP]"
        );
    }

    #[test]
    fn empty_prompt_drops_sentence() {
        assert_eq!(
            text(TemplateId::PEmpty),
            "[CLS] Queen Elizabeth II [MASK] Prince Philip. [SEP]"
        );
    }

    #[test]
    fn noun_prompts() {
        let s = "[CLS] Queen Elizabeth II was married to Prince Philip.";
        assert_eq!(
            text(TemplateId::P1),
            format!("{s} Queen Elizabeth II is the [MASK] of Prince Philip. [SEP]")
        );
        assert_eq!(
            text(TemplateId::P2),
            format!("{s} In this sentence, Queen Elizabeth II is the [MASK] of Prince Philip. [SEP]")
        );
        assert_eq!(
            text(TemplateId::P3),
            format!("{s} We deduce that Queen Elizabeth II is the [MASK] of Prince Philip. [SEP]")
        );
    }

    #[test]
    fn mask_offset_points_at_mask() {
        for id in TemplateId::ALL {
            let p = PromptTemplate::new(id).render(&queen()).unwrap();
            assert_eq!(p.mask_count(), 1);
            assert_eq!(&p.text[p.mask_offset..p.mask_offset + MASK.len()], MASK);
        }
    }

    #[test]
    fn template_structure() {
        for id in TemplateId::ALL {
            let t = PromptTemplate::new(id);
            assert_eq!(t.segments.first(), Some(&Segment::Cls));
            assert_eq!(t.segments.last(), Some(&Segment::Sep));
            assert_eq!(t.segments.iter().filter(|s| **s == Segment::Mask).count(), 1);
            assert_eq!(id.as_str().parse::<TemplateId>().unwrap(), id);
        }
    }

    #[test]
    fn reserved_placeholder_rejected() {
        let mut inst = queen();
        inst.tokens[3] = "[MASK]".into();
        assert!(matches!(
            PromptTemplate::new(TemplateId::P).render(&inst),
            Err(PromptError::ReservedPlaceholder { .. })
        ));
    }

    #[test]
    fn jsonl_line() {
        let p = PromptTemplate::new(TemplateId::PEmpty).render(&queen()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&p.to_jsonl()).unwrap();
        assert_eq!(v["instance_id"], "q");
        assert_eq!(v["template_id"], "p-empty");
    }
}
