//! Offline models for tests and dry runs. They read the prompt the harness
//! builds, so they only work with prompts from [`crate::build_prompt`].

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cogbench_core::dataset::{list_trials, read_trial};
use cogbench_core::language::{caption_body, parse_instruction, Clause, Connective, Query, SELF_CAPTION_PROMPT};
use cogbench_core::task::{Answer, AnswerSet, AttributeKind, Category, Location};
use sha2::{Digest, Sha256};

use crate::client::{ChatModel, ChatRequest, ChatResponse, EndpointError};
use crate::message::Part;
use crate::HarnessError;

fn reply(text: String) -> Result<ChatResponse, EndpointError> {
    Ok(ChatResponse { text, ..Default::default() })
}

fn text_parts(req: &ChatRequest) -> Vec<&str> {
    req.messages
        .turns
        .iter()
        .flat_map(|t| &t.parts)
        .filter_map(|p| match p {
            Part::Text { text } => Some(text.as_str()),
            Part::Image { .. } => None,
        })
        .collect()
}

/// The answer list from the closing question.
pub fn offered_answers(prompt: &str) -> Option<AnswerSet> {
    let start = prompt.rfind("What is the correct answer to this task? (")? + "What is the correct answer to this task? (".len();
    let end = start + prompt[start..].find(").")?;
    prompt[start..end].split(", ").map(|s| s.parse::<Answer>().ok()).collect()
}

/// Picks uniformly among the offered answers, independently per request.
/// The pick hashes the whole request (images included) and how many times
/// that exact request was seen before, so it does not depend on the order
/// of distinct requests, and repeated identical trials still get fresh draws.
pub struct UniformRandom {
    pub seed: u64,
    seen: Mutex<HashMap<Vec<u8>, u64>>,
}

impl UniformRandom {
    pub fn new(seed: u64) -> Self {
        UniformRandom { seed, seen: Mutex::new(HashMap::new()) }
    }
}

impl ChatModel for UniformRandom {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, EndpointError> {
        let text = req.messages.text();
        let Some(set) = offered_answers(&text) else {
            return reply("I cannot tell.".into());
        };
        let key = Sha256::digest(serde_json::to_vec(&req.messages).expect("serializable")).to_vec();
        let repeat = {
            let mut seen = self.seen.lock().unwrap();
            let n = seen.entry(key.clone()).or_insert(0);
            *n += 1;
            *n - 1
        };
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(&key);
        h.update(repeat.to_le_bytes());
        let d = h.finalize();
        let x = u64::from_le_bytes(d[..8].try_into().unwrap());
        let answers = set.to_vec();
        reply(format!("Hard to say. I will go with: {}", answers[(x % answers.len() as u64) as usize]))
    }

    fn name(&self) -> &str {
        "uniform-random"
    }
}

type Obj = (Category, Location);

fn parse_caption(body: &str) -> Option<Vec<Obj>> {
    if body.trim() == "delay frame" {
        return Some(Vec::new());
    }
    body.split("; ")
        .map(|phrase| {
            let rest = phrase.trim().strip_prefix("A ")?;
            let (cat, loc) = rest.split_once(" located at the ")?;
            Some((cat.parse().ok()?, loc.trim_end_matches('.').parse().ok()?))
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Val {
    Bool(bool),
    Loc(Location),
    Cat(Category),
}

fn attr(o: Obj, kind: AttributeKind) -> Option<Val> {
    match kind {
        AttributeKind::Location => Some(Val::Loc(o.1)),
        AttributeKind::Category => Some(Val::Cat(o.0)),
        // captions do not tell objects of one category apart
        AttributeKind::Identity => None,
    }
}

fn eval(q: &Query, objs: &HashMap<u32, Obj>) -> Option<Val> {
    Some(match q {
        Query::Attr { kind, object } => attr(*objs.get(object)?, *kind)?,
        Query::Compare { kind, negate, a, b } => {
            let same = attr(*objs.get(a)?, *kind)? == attr(*objs.get(b)?, *kind)?;
            Val::Bool(same != *negate)
        }
        Query::Chain { first, rest } => {
            let Val::Bool(mut acc) = eval(first, objs)? else { return None };
            for (conn, q) in rest {
                let Val::Bool(v) = eval(q, objs)? else { return None };
                acc = match conn {
                    Connective::And => acc && v,
                    Connective::Or => acc || v,
                };
            }
            Val::Bool(acc)
        }
        Query::Switch { cond, then, otherwise } => match eval(cond, objs)? {
            Val::Bool(true) => eval(then, objs)?,
            Val::Bool(false) => eval(otherwise, objs)?,
            _ => return None,
        },
    })
}

/// Solves caption-based prompts (PC, SC, SC-I) exactly by parsing the
/// instruction and the frame captions. Image-only prompts get no answer.
pub struct PerfectReasoner;

impl PerfectReasoner {
    pub fn solve(req: &ChatRequest) -> Option<Answer> {
        let parts = text_parts(req);
        let all: String = parts.concat();
        let start = all.find("Task instruction: ")? + "Task instruction: ".len();
        let instruction = parse_instruction(&all[start..start + all[start..].find("\n\n")?]).ok()?;
        let mut frames: Vec<Vec<Obj>> = Vec::new();
        for line in parts.iter().flat_map(|p| p.lines()) {
            let body = caption_body(line);
            if body.len() != line.len() {
                frames.push(parse_caption(body)?);
            }
        }
        let mut objs = HashMap::new();
        let mut position = 0;
        for c in &instruction.clauses {
            let (ordinal, found) = match *c {
                Clause::Delay => continue,
                Clause::Observe { object, frame } => (object, frames.get(frame)?.clone()),
                Clause::ObserveCategory { category, frame } => {
                    (position + 1, frames.get(frame)?.iter().copied().filter(|o| o.0 == category).collect())
                }
                Clause::ObserveLocation { location, frame } => {
                    (position + 1, frames.get(frame)?.iter().copied().filter(|o| o.1 == location).collect())
                }
            };
            position += 1;
            let [o] = found[..] else { return None };
            objs.insert(ordinal, o);
        }
        Some(match eval(&instruction.query, &objs)? {
            Val::Bool(b) => Answer::Bool(b),
            Val::Loc(l) => Answer::Loc(l),
            Val::Cat(c) => Answer::Cat(c),
        })
    }
}

impl ChatModel for PerfectReasoner {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, EndpointError> {
        reply(match Self::solve(req) {
            Some(a) => format!("Going frame by frame, the final answer is {a}."),
            None => "I cannot tell.".into(),
        })
    }

    fn name(&self) -> &str {
        "perfect-reasoner"
    }
}

/// Answers caption requests with the ground-truth caption of the pictured
/// frame (looked up by image bytes); forwards everything else to `inner`.
pub struct GroundTruthCaptioner<M> {
    by_image: HashMap<Vec<u8>, String>,
    inner: M,
}

impl<M: ChatModel> GroundTruthCaptioner<M> {
    pub fn from_dataset(root: &Path, inner: M) -> Result<Self, HarnessError> {
        let mut by_image = HashMap::new();
        for dir in list_trials(root)? {
            let s = read_trial(&dir)?;
            let caps = s.trial.captions().unwrap_or_default();
            for (path, cap) in s.frames.iter().zip(caps) {
                let png = fs::read(path).map_err(crate::io_err(path))?;
                by_image.insert(image_key(&Part::png(&png)), caption_body(cap).to_string());
            }
        }
        Ok(GroundTruthCaptioner { by_image, inner })
    }
}

fn image_key(p: &Part) -> Vec<u8> {
    match p {
        Part::Image { base64, .. } => Sha256::digest(base64.as_bytes()).to_vec(),
        Part::Text { .. } => Vec::new(),
    }
}

impl<M: ChatModel> ChatModel for GroundTruthCaptioner<M> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, EndpointError> {
        let parts: Vec<&Part> = req.messages.turns.iter().flat_map(|t| &t.parts).collect();
        if let [Part::Text { text }, img @ Part::Image { .. }] = parts[..] {
            if text == SELF_CAPTION_PROMPT {
                return match self.by_image.get(&image_key(img)) {
                    Some(c) => reply(c.clone()),
                    None => Err(EndpointError::Decode("unknown frame image".into())),
                };
            }
        }
        self.inner.complete(req)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// Wraps a model, keeping every request and the peak number of concurrent
/// calls.
pub struct Recording<M> {
    pub inner: M,
    pub requests: Mutex<Vec<ChatRequest>>,
    in_flight: AtomicUsize,
    pub peak: AtomicUsize,
}

impl<M> Recording<M> {
    pub fn new(inner: M) -> Self {
        Recording { inner, requests: Mutex::new(Vec::new()), in_flight: AtomicUsize::new(0), peak: AtomicUsize::new(0) }
    }

    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl<M: ChatModel> ChatModel for Recording<M> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, EndpointError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::yield_now();
        let r = self.inner.complete(req);
        self.requests.lock().unwrap().push(req.clone());
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        r
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
