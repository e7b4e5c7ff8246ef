//! Provider-neutral chat messages and the answer prompt for a stored trial.

use std::fs;

use base64::Engine as _;
use cogbench_core::dataset::StoredTrial;
use cogbench_core::prompt::{prompt_parts, EvalMode, PromptError, PromptPart, PromptStyle};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{io_err, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Part {
    Text { text: String },
    Image { media_type: String, base64: String },
}

impl Part {
    pub fn text(t: impl Into<String>) -> Self {
        Part::Text { text: t.into() }
    }

    pub fn png(bytes: &[u8]) -> Self {
        Part::Image { media_type: "image/png".into(), base64: base64::engine::general_purpose::STANDARD.encode(bytes) }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, Part::Image { .. })
    }

    fn wire(&self) -> Value {
        match self {
            Part::Text { text } => json!({"type": "text", "text": text}),
            Part::Image { media_type, base64 } => {
                json!({"type": "image_url", "image_url": {"url": format!("data:{media_type};base64,{base64}")}})
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub parts: Vec<Part>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSeq {
    pub turns: Vec<Turn>,
}

impl MessageSeq {
    pub fn user(parts: Vec<Part>) -> Self {
        MessageSeq { turns: vec![Turn { role: Role::User, parts }] }
    }

    /// At least one user turn, images only in user turns.
    pub fn is_well_formed(&self) -> bool {
        self.turns.iter().any(|t| t.role == Role::User)
            && self.turns.iter().all(|t| t.role == Role::User || !t.parts.iter().any(Part::is_image))
    }

    pub fn image_count(&self) -> usize {
        self.turns.iter().flat_map(|t| &t.parts).filter(|p| p.is_image()).count()
    }

    /// All text parts joined, images omitted.
    pub fn text(&self) -> String {
        self.turns
            .iter()
            .flat_map(|t| &t.parts)
            .filter_map(|p| match p {
                Part::Text { text } => Some(text.as_str()),
                Part::Image { .. } => None,
            })
            .collect()
    }

    /// Chat-completions `messages` array.
    pub fn wire(&self) -> Value {
        Value::Array(
            self.turns
                .iter()
                .map(|t| json!({"role": t.role, "content": t.parts.iter().map(Part::wire).collect::<Vec<_>>()}))
                .collect(),
        )
    }
}

/// The answer request for `stored` under `mode`. PC uses the trial's stored
/// ground-truth captions; SC and SC-I need `self_captions`.
pub fn build_prompt(stored: &StoredTrial, mode: EvalMode, self_captions: Option<&[String]>) -> Result<MessageSeq, HarnessError> {
    let t = &stored.trial;
    let captions = match mode {
        EvalMode::Base => None,
        EvalMode::Pc => Some(t.captions().ok_or(PromptError::MissingCaptions(mode))?),
        EvalMode::Sc | EvalMode::ScI => Some(self_captions.ok_or(PromptError::MissingCaptions(mode))?),
    };
    let parts = prompt_parts(&t.instruction, &t.possible, stored.frames.len(), mode, captions, PromptStyle::Eval)?;
    let mut out = Vec::with_capacity(parts.len());
    for p in parts {
        out.push(match p {
            PromptPart::Text(s) => Part::Text { text: s },
            PromptPart::Frame(i) => {
                let path = &stored.frames[i];
                Part::png(&fs::read(path).map_err(io_err(path))?)
            }
        });
    }
    Ok(MessageSeq::user(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format_uses_data_urls() {
        let m = MessageSeq::user(vec![Part::text("hi"), Part::png(&[1, 2, 3])]);
        let w = m.wire();
        assert_eq!(w[0]["role"], "user");
        assert_eq!(w[0]["content"][0], json!({"type": "text", "text": "hi"}));
        assert_eq!(w[0]["content"][1]["image_url"]["url"], "data:image/png;base64,AQID");
        assert!(m.is_well_formed());
        let bad = MessageSeq { turns: vec![Turn { role: Role::Assistant, parts: vec![Part::png(&[0])] }] };
        assert!(!bad.is_well_formed());
    }
}
