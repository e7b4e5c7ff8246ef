//! Prompt text for answering a trial, as an ordered list of text and frame
//! parts. The harness turns frame parts into image payloads; SFT export turns
//! them into `<image>` placeholders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::language::{caption_body, format_answer_list};
use crate::task::AnswerSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvalMode {
    /// Frames as images.
    #[serde(rename = "base")]
    Base,
    /// Ground-truth captions instead of images.
    #[serde(rename = "pc")]
    Pc,
    /// The model's own captions instead of images.
    #[serde(rename = "sc")]
    Sc,
    /// Each image followed by the model's own caption of it.
    #[serde(rename = "sc_i")]
    ScI,
}

impl EvalMode {
    pub const ALL: [EvalMode; 4] = [EvalMode::Base, EvalMode::Pc, EvalMode::Sc, EvalMode::ScI];

    pub fn label(self) -> &'static str {
        match self {
            EvalMode::Base => "Base",
            EvalMode::Pc => "PC",
            EvalMode::Sc => "SC",
            EvalMode::ScI => "SC-I",
        }
    }

    pub fn needs_self_captions(self) -> bool {
        matches!(self, EvalMode::Sc | EvalMode::ScI)
    }

    pub fn shows_images(self) -> bool {
        matches!(self, EvalMode::Base | EvalMode::ScI)
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown evaluation mode `{0}` (expected base, pc, sc or sc-i)")]
pub struct UnknownMode(pub String);

impl FromStr for EvalMode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "base" => Ok(EvalMode::Base),
            "pc" => Ok(EvalMode::Pc),
            "sc" => Ok(EvalMode::Sc),
            "sc_i" | "sci" => Ok(EvalMode::ScI),
            _ => Err(UnknownMode(s.to_string())),
        }
    }
}

/// Evaluation prompts end with a reasoning cue; fine-tuning prompts ask for
/// the bare answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptStyle {
    Eval,
    Sft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptPart {
    Text(String),
    /// Zero-based frame index.
    Frame(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{0} mode needs captions but none were supplied")]
    MissingCaptions(EvalMode),
    #[error("expected {expected} captions, got {got}")]
    CaptionCountMismatch { expected: usize, got: usize },
}

pub const EVAL_SUFFIX: &str =
    " Think step-by-step, analyze each frame and provide your answer here:\nAnswers:\nLet's think step by step.";
pub const SFT_SUFFIX: &str = " Provide your answer here: ";

/// The task description paragraph. `images` selects between frames shown as
/// images and frames described by captions.
pub fn intro(images: bool) -> String {
    let what = if images { "frame images" } else { "frames described by captions" };
    format!(
        "In this task, we will show you a series of {what}. Each frame will either be blank (delay frame) or \
         contain one or more 3D objects. The objects will always be from one of eight categories: benches, boats, \
         cars, chairs, couches, lighting, planes, and tables. For each category, there are eight unique objects \
         that could be used in the task. Any object sampled will be displayed as an image taken from a random \
         viewing angle. The objects will be placed in one of four locations: top left, top right, bottom left, and \
         bottom right. If there are multiple objects on a single frame, only one of them would be specified in the \
         task instruction by either its location or its category. A written instruction will be provided. Your \
         goal is to follow the instructions and answer the question contained in the instructions. Answers will \
         always be one of the following: true, false, bottom right, bottom left, top left, top right, benches, \
         boats, cars, chairs, couches, lighting, planes, tables."
    )
}

pub fn question(possible: &AnswerSet, style: PromptStyle) -> String {
    let suffix = match style {
        PromptStyle::Eval => EVAL_SUFFIX,
        PromptStyle::Sft => SFT_SUFFIX,
    };
    format!("What is the correct answer to this task? {}.{suffix}", format_answer_list(possible))
}

/// Assembles the single user turn. `captions` are required for every mode but
/// Base: ground truth for PC, the model's own for SC and SC-I.
pub fn prompt_parts(
    instruction: &str,
    possible: &AnswerSet,
    frames: usize,
    mode: EvalMode,
    captions: Option<&[String]>,
    style: PromptStyle,
) -> Result<Vec<PromptPart>, PromptError> {
    let captions = match (mode, captions) {
        (EvalMode::Base, _) => None,
        (_, None) => return Err(PromptError::MissingCaptions(mode)),
        (_, Some(c)) if c.len() != frames => {
            return Err(PromptError::CaptionCountMismatch { expected: frames, got: c.len() })
        }
        (_, Some(c)) => Some(c),
    };
    let head = format!(
        "{}\n\nPlease solve the following task:\nTask instruction: {instruction}\n\n",
        intro(mode.shows_images())
    );
    let q = question(possible, style);
    let line = |i: usize, c: &String| format!("Frame {}: {}", i + 1, caption_body(c));
    let mut parts = Vec::new();
    match (mode, captions) {
        (EvalMode::Base, _) => {
            parts.push(PromptPart::Text(head + "Here are the corresponding frames: "));
            parts.extend((0..frames).map(PromptPart::Frame));
            parts.push(PromptPart::Text(format!("\n\n{q}")));
        }
        (EvalMode::ScI, Some(caps)) => {
            parts.push(PromptPart::Text(head + "Here are the frames, each followed by its caption:"));
            for (i, c) in caps.iter().enumerate() {
                parts.push(PromptPart::Frame(i));
                parts.push(PromptPart::Text(line(i, c)));
            }
            parts.push(PromptPart::Text(q));
        }
        (_, Some(caps)) => {
            let lines: Vec<String> = caps.iter().enumerate().map(|(i, c)| line(i, c)).collect();
            parts.push(PromptPart::Text(format!("{head}Here are the frame captions:\n{}\n\n{q}", lines.join("\n"))));
        }
        (_, None) => unreachable!(),
    }
    Ok(parts)
}

/// Flattens parts to one string, writing `placeholder` for every frame.
pub fn flatten(parts: &[PromptPart], placeholder: &str) -> String {
    parts
        .iter()
        .map(|p| match p {
            PromptPart::Text(t) => t.as_str(),
            PromptPart::Frame(_) => placeholder,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::AnswerType;

    fn locs() -> AnswerSet {
        AnswerSet::of_type(AnswerType::Location)
    }

    fn caps(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("Frame {}: delay frame", i + 1)).collect()
    }

    fn frames(parts: &[PromptPart]) -> usize {
        parts.iter().filter(|p| matches!(p, PromptPart::Frame(_))).count()
    }

    #[test]
    fn base_has_one_frame_part_per_frame() {
        let p = prompt_parts("x?", &locs(), 9, EvalMode::Base, None, PromptStyle::Eval).unwrap();
        assert_eq!(frames(&p), 9);
        let text = flatten(&p, "");
        assert!(!text.contains("Frame 1:"));
        assert!(text.ends_with("Let's think step by step."));
        assert!(text.contains("(bottom right, bottom left, top left, top right). Think step-by-step"));
    }

    #[test]
    fn caption_modes() {
        let c = caps(9);
        let pc = prompt_parts("x?", &locs(), 9, EvalMode::Pc, Some(&c), PromptStyle::Eval).unwrap();
        let sc = prompt_parts("x?", &locs(), 9, EvalMode::Sc, Some(&c), PromptStyle::Eval).unwrap();
        assert_eq!(pc, sc);
        assert_eq!(frames(&pc), 0);
        let text = flatten(&pc, "");
        assert_eq!((1..=9).filter(|i| text.contains(&format!("Frame {i}: delay frame"))).count(), 9);
        assert!(text.contains("Here are the frame captions:\nFrame 1: delay frame\n"));
        assert!(text.starts_with("In this task, we will show you a series of frames described by captions."));
    }

    #[test]
    fn interleaved_pattern() {
        let c = caps(3);
        let p = prompt_parts("x?", &locs(), 3, EvalMode::ScI, Some(&c), PromptStyle::Eval).unwrap();
        let shape: Vec<char> = p.iter().map(|p| if matches!(p, PromptPart::Frame(_)) { 'I' } else { 'T' }).collect();
        assert_eq!(shape.iter().collect::<String>(), "TITITITT");
    }

    #[test]
    fn caption_errors() {
        assert_eq!(
            prompt_parts("x?", &locs(), 2, EvalMode::Pc, None, PromptStyle::Eval),
            Err(PromptError::MissingCaptions(EvalMode::Pc))
        );
        assert_eq!(
            prompt_parts("x?", &locs(), 2, EvalMode::Sc, Some(&caps(3)), PromptStyle::Eval),
            Err(PromptError::CaptionCountMismatch { expected: 2, got: 3 })
        );
    }

    #[test]
    fn sft_style_matches_placeholder_layout() {
        let p = prompt_parts("x?", &locs(), 2, EvalMode::Base, None, PromptStyle::Sft).unwrap();
        let text = flatten(&p, "<image>");
        assert!(text.contains("Here are the corresponding frames: <image><image>\n\nWhat is the correct answer"));
        assert!(text.ends_with("top right). Provide your answer here: "));
    }

    #[test]
    fn mode_names_parse() {
        for m in EvalMode::ALL {
            assert_eq!(m.label().parse::<EvalMode>().unwrap(), m);
        }
        assert!("vision".parse::<EvalMode>().is_err());
    }
}
