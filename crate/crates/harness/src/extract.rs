//! Final-answer extraction from free-form model output.

use cogbench_core::language::format_answer_list;
use cogbench_core::task::{Answer, AnswerSet};

use crate::client::{ChatModel, ChatRequest};
use crate::message::{MessageSeq, Part};

/// Sent to the extractor model. `{answers}` and `{response}` are filled in.
pub const EXTRACTION_PROMPT: &str = "Below is a response to a visual reasoning question. Extract the final answer \
the response gives. Reply with exactly one item from this list of possible answers and nothing else: {answers}. \
If the response gives no answer from the list, reply with none.\n\nResponse:\n{response}";

const EXTRACTOR_MAX_TOKENS: u32 = 16;

/// The extractor's verdict is used only if it names exactly one possible
/// answer; anything else falls back to [`fallback_extract`].
pub fn extract_answer(response: &str, possible: &AnswerSet, extractor: Option<&dyn ChatModel>) -> Option<Answer> {
    if let Some(model) = extractor {
        let prompt = EXTRACTION_PROMPT
            .replace("{answers}", &format_answer_list(possible))
            .replace("{response}", response);
        let req = ChatRequest { messages: MessageSeq::user(vec![Part::text(prompt)]), max_tokens: EXTRACTOR_MAX_TOKENS, temperature: 0.0 };
        match model.complete(&req) {
            Ok(r) => {
                let said = r.text.trim().trim_end_matches('.').trim();
                let hits: Vec<Answer> = possible.iter().filter(|a| a.as_str().eq_ignore_ascii_case(said)).collect();
                if let [a] = hits[..] {
                    return Some(a);
                }
                log::debug!("extractor said `{said}`, falling back");
            }
            Err(e) => log::warn!("extractor failed, falling back: {e}"),
        }
    }
    fallback_extract(response, possible)
}

fn is_word(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Last whole-token occurrence of any possible answer, case-insensitive.
/// Longer answers claim their span first, so "top right" wins over a
/// shorter answer found inside it.
pub fn fallback_extract(response: &str, possible: &AnswerSet) -> Option<Answer> {
    let hay = response.to_ascii_lowercase();
    let bytes = hay.as_bytes();
    let mut answers = possible.to_vec();
    answers.sort_by_key(|a| std::cmp::Reverse(a.as_str().len()));
    let mut claimed = vec![false; bytes.len()];
    let mut best: Option<(usize, Answer)> = None;
    for a in answers {
        let needle = a.as_str();
        for (start, _) in hay.match_indices(needle) {
            let end = start + needle.len();
            let bounded = (start == 0 || !is_word(bytes[start - 1])) && (end == bytes.len() || !is_word(bytes[end]));
            if !bounded || claimed[start..end].iter().any(|&c| c) {
                continue;
            }
            claimed[start..end].iter_mut().for_each(|c| *c = true);
            if best.is_none_or(|(s, _)| start > s) {
                best = Some((start, a));
            }
        }
    }
    best.map(|(_, a)| a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{ChatResponse, EndpointError};
    use cogbench_core::task::{AnswerType, Category, Location};

    fn locs() -> AnswerSet {
        AnswerSet::of_type(AnswerType::Location)
    }

    fn bools() -> AnswerSet {
        AnswerSet::of_type(AnswerType::Bool)
    }

    #[test]
    fn fallback_rules() {
        assert_eq!(fallback_extract("…so the answer is top right.", &locs()), Some(Answer::Loc(Location::TopRight)));
        assert_eq!(fallback_extract("It could be true… no, false.", &bools()), Some(Answer::Bool(false)));
        assert_eq!(fallback_extract("I cannot tell.", &AnswerSet::full()), None);
        assert_eq!(fallback_extract("TRUE", &bools()), Some(Answer::Bool(true)));
        // not a whole token
        assert_eq!(fallback_extract("untrue", &bools()), None);
        assert_eq!(fallback_extract("boatshed", &AnswerSet::full()), None);
        // answers outside the offered set are ignored
        assert_eq!(fallback_extract("cars, then true", &locs()), None);
        assert_eq!(fallback_extract("planes or cars", &AnswerSet::full()), Some(Answer::Cat(Category::Cars)));
    }

    struct Says(&'static str);

    impl ChatModel for Says {
        fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, EndpointError> {
            assert!(req.messages.text().contains("(true, false)"));
            if self.0 == "!" {
                return Err(EndpointError::Transport("down".into()));
            }
            Ok(ChatResponse { text: self.0.into(), ..Default::default() })
        }

        fn name(&self) -> &str {
            "says"
        }
    }

    #[test]
    fn extractor_is_trusted_only_inside_the_set() {
        let text = "maybe true, finally false";
        assert_eq!(extract_answer(text, &bools(), Some(&Says(" True.\n"))), Some(Answer::Bool(true)));
        assert_eq!(extract_answer(text, &bools(), Some(&Says("top left"))), Some(Answer::Bool(false)));
        assert_eq!(extract_answer(text, &bools(), Some(&Says("none"))), Some(Answer::Bool(false)));
        assert_eq!(extract_answer(text, &bools(), Some(&Says("!"))), Some(Answer::Bool(false)));
        assert_eq!(extract_answer(text, &bools(), None), Some(Answer::Bool(false)));
    }
}
