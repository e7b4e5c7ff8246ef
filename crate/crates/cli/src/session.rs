//! Human-baseline sessions: a shuffled trial queue per subject, persisted as
//! an append-only JSON-lines event log that is fsynced before every
//! acknowledgement.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use cogbench_core::analysis::{score, AnalysisError};
use cogbench_core::dataset::{list_trials, read_trial, DatasetError, StoredTrial};
use cogbench_core::ScoreTable;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SESSION_LOG_VERSION: u32 = 1;
const LOG_EXT: &str = "jsonl";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("no session `{0}`")]
    UnknownSession(String),
    #[error("session is complete")]
    SessionComplete,
    #[error("session is not complete yet")]
    SessionActive,
    #[error("trial `{got}` is not the current trial")]
    StaleTrial { got: String },
    #[error("`{0}` is not one of this trial's possible answers")]
    InvalidAnswer(String),
    #[error("no dataset `{0}`")]
    UnknownDataset(String),
    #[error("no trial `{0}`")]
    UnknownTrial(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("no answers to report")]
    NoData,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Corrupt { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io { path: path.to_path_buf(), source }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        version: u32,
        session_id: String,
        subject: String,
        dataset: String,
        seed: u64,
        queue: Vec<String>,
        at_ms: u64,
    },
    Served {
        cursor: usize,
        trial_ref: String,
        at_ms: u64,
    },
    Answered {
        cursor: usize,
        trial_ref: String,
        answer: String,
        rt_ms: u64,
        at_ms: u64,
    },
}

/// Trials of one dataset, keyed by API trial reference
/// `<dataset>~<task>~<trial id>`.
pub struct DatasetIndex {
    pub name: String,
    pub trials: HashMap<String, StoredTrial>,
    /// References in dataset order.
    pub order: Vec<String>,
}

pub fn trial_ref(dataset: &str, task: &str, id: u64) -> String {
    format!("{dataset}~{task}~{id}")
}

/// The dataset part of a trial reference.
pub fn ref_dataset(r: &str) -> Option<&str> {
    let (d, rest) = r.split_once('~')?;
    let (_, id) = rest.rsplit_once('~')?;
    id.parse::<u64>().ok().map(|_| d)
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl DatasetIndex {
    pub fn load(name: &str, root: &Path) -> Result<Self, SessionError> {
        let mut trials = HashMap::new();
        let mut order = Vec::new();
        for dir in list_trials(root)? {
            let s = read_trial(&dir)?;
            let r = trial_ref(name, &s.trial.task, s.trial.id);
            order.push(r.clone());
            trials.insert(r, s);
        }
        Ok(DatasetIndex { name: name.to_string(), trials, order })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Recorded {
    pub trial_ref: String,
    pub answer: String,
    pub rt_ms: u64,
    pub at_ms: u64,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub subject: String,
    pub dataset: String,
    pub seed: u64,
    pub queue: Vec<String>,
    pub answers: Vec<Recorded>,
    last_served: Option<usize>,
    log: PathBuf,
}

impl Session {
    pub fn cursor(&self) -> usize {
        self.answers.len()
    }

    pub fn is_complete(&self) -> bool {
        self.cursor() == self.queue.len()
    }

    fn append(&self, e: &Event) -> Result<(), SessionError> {
        let mut f = OpenOptions::new().append(true).create(true).open(&self.log).map_err(io_err(&self.log))?;
        let mut line = serde_json::to_vec(e).expect("serializable");
        line.push(b'\n');
        f.write_all(&line).map_err(io_err(&self.log))?;
        f.sync_data().map_err(io_err(&self.log))
    }

    /// Replays a log. A torn final line (a write that was never
    /// acknowledged) is cut off; anything else malformed is an error.
    pub fn replay(path: &Path) -> Result<Session, SessionError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let corrupt = |line: usize, message: String| SessionError::Corrupt { path: path.to_path_buf(), line, message };
        let mut lines: Vec<&str> = text.split_inclusive('\n').collect();
        if let Some(torn) = lines.pop_if(|l| !l.ends_with('\n')) {
            log::warn!("{}: dropping unterminated last line", path.display());
            let keep = text.len() - torn.len();
            let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
            f.set_len(keep as u64).map_err(io_err(path))?;
            f.sync_data().map_err(io_err(path))?;
        }
        let mut session: Option<Session> = None;
        for (i, line) in lines.iter().enumerate() {
            let e: Event = serde_json::from_str(line).map_err(|err| corrupt(i + 1, err.to_string()))?;
            match (e, session.as_mut()) {
                (Event::Created { session_id, subject, dataset, seed, queue, .. }, None) => {
                    session = Some(Session {
                        id: session_id,
                        subject,
                        dataset,
                        seed,
                        queue,
                        answers: Vec::new(),
                        last_served: None,
                        log: path.to_path_buf(),
                    })
                }
                (Event::Served { cursor, .. }, Some(s)) => s.last_served = Some(cursor),
                (Event::Answered { cursor, trial_ref, answer, rt_ms, at_ms }, Some(s)) => {
                    if cursor != s.cursor() || s.queue.get(cursor) != Some(&trial_ref) {
                        return Err(corrupt(i + 1, format!("answer for cursor {cursor} out of order")));
                    }
                    s.answers.push(Recorded { trial_ref, answer, rt_ms, at_ms });
                }
                (_, _) => return Err(corrupt(i + 1, "events must start with exactly one `created`".into())),
            }
        }
        session.ok_or_else(|| corrupt(0, "empty log".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub answered: usize,
    pub total: usize,
}

/// What a subject sees for one trial. Carries no answer and no generation
/// metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialView {
    pub session_id: String,
    pub trial_ref: String,
    /// 1-based position in the queue.
    pub number: usize,
    pub total: usize,
    pub instruction: String,
    pub frames: Vec<String>,
    pub possible_answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
    pub progress: Progress,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub total: usize,
}

/// All sessions plus the datasets they draw from. Sessions are locked one
/// at a time, so each log has a single writer.
pub struct Store {
    data_dir: PathBuf,
    sessions_dir: PathBuf,
    datasets: Mutex<HashMap<String, Arc<DatasetIndex>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl Store {
    /// Loads every session log under `sessions_dir`.
    pub fn open(data_dir: &Path, sessions_dir: &Path) -> Result<Self, SessionError> {
        fs::create_dir_all(sessions_dir).map_err(io_err(sessions_dir))?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(sessions_dir).map_err(io_err(sessions_dir))? {
            let path = entry.map_err(io_err(sessions_dir))?.path();
            if path.extension().is_some_and(|e| e == LOG_EXT) {
                let s = Session::replay(&path)?;
                sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        Ok(Store {
            data_dir: data_dir.to_path_buf(),
            sessions_dir: sessions_dir.to_path_buf(),
            datasets: Mutex::new(HashMap::new()),
            sessions: Mutex::new(sessions),
        })
    }

    pub fn dataset(&self, name: &str) -> Result<Arc<DatasetIndex>, SessionError> {
        if !valid_name(name) {
            return Err(SessionError::UnknownDataset(name.to_string()));
        }
        if let Some(d) = self.datasets.lock().unwrap().get(name) {
            return Ok(d.clone());
        }
        let root = self.data_dir.join(name);
        if !root.is_dir() {
            return Err(SessionError::UnknownDataset(name.to_string()));
        }
        let idx = Arc::new(DatasetIndex::load(name, &root)?);
        Ok(self.datasets.lock().unwrap().entry(name.to_string()).or_insert(idx).clone())
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Starts a session over every trial of `dataset`, shuffled by `seed`.
    pub fn create(&self, subject: &str, dataset: &str, seed: u64) -> Result<Created, SessionError> {
        let idx = self.dataset(dataset)?;
        if idx.order.is_empty() {
            return Err(SessionError::BadRequest(format!("dataset `{dataset}` has no trials")));
        }
        let mut queue = idx.order.clone();
        queue.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let id = uuid::Uuid::new_v4().simple().to_string();
        let log = self.sessions_dir.join(format!("{id}.{LOG_EXT}"));
        let session = Session {
            id: id.clone(),
            subject: subject.to_string(),
            dataset: dataset.to_string(),
            seed,
            queue: queue.clone(),
            answers: Vec::new(),
            last_served: None,
            log,
        };
        session.append(&Event::Created {
            version: SESSION_LOG_VERSION,
            session_id: id.clone(),
            subject: subject.to_string(),
            dataset: dataset.to_string(),
            seed,
            queue,
            at_ms: now_ms(),
        })?;
        let total = session.queue.len();
        self.sessions.lock().unwrap().insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(Created { session_id: id, total })
    }

    /// The trial at the cursor; does not advance.
    pub fn next(&self, id: &str) -> Result<TrialView, SessionError> {
        let handle = self.session(id)?;
        let mut s = handle.lock().unwrap();
        if s.is_complete() {
            return Err(SessionError::SessionComplete);
        }
        let idx = self.dataset(&s.dataset)?;
        let cursor = s.cursor();
        let r = s.queue[cursor].clone();
        let stored = idx.trials.get(&r).ok_or_else(|| SessionError::UnknownTrial(r.clone()))?;
        if s.last_served != Some(cursor) {
            s.append(&Event::Served { cursor, trial_ref: r.clone(), at_ms: now_ms() })?;
            s.last_served = Some(cursor);
        }
        Ok(TrialView {
            session_id: s.id.clone(),
            number: cursor + 1,
            total: s.queue.len(),
            instruction: stored.trial.instruction.clone(),
            frames: (0..stored.frames.len()).map(|i| format!("/api/frames/{r}/{i}")).collect(),
            possible_answers: stored.trial.possible.iter().map(|a| a.to_string()).collect(),
            trial_ref: r,
        })
    }

    /// Records `answer` for the current trial. Re-sending the answer that
    /// was just recorded returns the same acknowledgement without recording
    /// it twice.
    pub fn submit(&self, id: &str, trial_ref: &str, answer: &str, rt_ms: u64) -> Result<Ack, SessionError> {
        let handle = self.session(id)?;
        let mut s = handle.lock().unwrap();
        let ack = |s: &Session| Ack {
            ok: true,
            progress: Progress { answered: s.cursor(), total: s.queue.len() },
            complete: s.is_complete(),
        };
        if let Some(last) = s.answers.last() {
            if last.trial_ref == trial_ref {
                return if last.answer.eq_ignore_ascii_case(answer.trim()) {
                    Ok(ack(&s))
                } else {
                    Err(SessionError::StaleTrial { got: trial_ref.to_string() })
                };
            }
        }
        let cursor = s.cursor();
        if s.queue.get(cursor).map(String::as_str) != Some(trial_ref) {
            return Err(SessionError::StaleTrial { got: trial_ref.to_string() });
        }
        let idx = self.dataset(&s.dataset)?;
        let stored = idx.trials.get(trial_ref).ok_or_else(|| SessionError::UnknownTrial(trial_ref.to_string()))?;
        let chosen = stored.trial.possible.find(answer).ok_or_else(|| SessionError::InvalidAnswer(answer.to_string()))?;
        let at_ms = now_ms();
        s.append(&Event::Answered { cursor, trial_ref: trial_ref.to_string(), answer: chosen.to_string(), rt_ms, at_ms })?;
        s.answers.push(Recorded { trial_ref: trial_ref.to_string(), answer: chosen.to_string(), rt_ms, at_ms });
        Ok(ack(&s))
    }

    /// (task, correct) for every answer of the session.
    pub fn outcomes(&self, id: &str) -> Result<Vec<(String, bool)>, SessionError> {
        let handle = self.session(id)?;
        let s = handle.lock().unwrap();
        let idx = self.dataset(&s.dataset)?;
        s.answers
            .iter()
            .map(|a| {
                let t = &idx.trials.get(&a.trial_ref).ok_or_else(|| SessionError::UnknownTrial(a.trial_ref.clone()))?.trial;
                Ok((t.task.clone(), t.answer.as_str() == a.answer))
            })
            .collect()
    }

    pub fn is_complete(&self, id: &str) -> Result<bool, SessionError> {
        Ok(self.session(id)?.lock().unwrap().is_complete())
    }

    /// Score table for one finished session.
    pub fn report(&self, id: &str) -> Result<ScoreTable, SessionError> {
        if !self.is_complete(id)? {
            return Err(SessionError::SessionActive);
        }
        to_table(self.outcomes(id)?)
    }

    pub fn frame(&self, trial_ref: &str, index: usize) -> Result<Vec<u8>, SessionError> {
        let unknown = || SessionError::UnknownTrial(trial_ref.to_string());
        let idx = self.dataset(ref_dataset(trial_ref).ok_or_else(unknown)?)?;
        let path = idx.trials.get(trial_ref).and_then(|s| s.frames.get(index)).ok_or_else(unknown)?;
        fs::read(path).map_err(io_err(path))
    }
}

fn to_table(outcomes: Vec<(String, bool)>) -> Result<ScoreTable, SessionError> {
    score(outcomes).map_err(|e| match e {
        AnalysisError::EmptyResults => SessionError::NoData,
        other => SessionError::BadRequest(other.to_string()),
    })
}

/// Pools answers of the given sessions (all of them when `ids` is empty)
/// into one score table. Unfinished sessions are skipped unless
/// `include_partial`. Returns the table and the number of answers pooled.
pub fn session_report(
    data_dir: &Path,
    sessions_dir: &Path,
    ids: &[String],
    include_partial: bool,
) -> Result<(ScoreTable, usize), SessionError> {
    let store = Store::open(data_dir, sessions_dir)?;
    let ids = if ids.is_empty() { store.session_ids() } else { ids.to_vec() };
    let mut all = Vec::new();
    for id in &ids {
        if !include_partial && !store.is_complete(id)? {
            log::warn!("skipping unfinished session {id}");
            continue;
        }
        all.extend(store.outcomes(id)?);
    }
    let n = all.len();
    Ok((to_table(all)?, n))
}
