//! Session storage: one directory per session holding `session.json`
//! and an append-only `judgments.jsonl`.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use selqa_core::study::{check_judgment, Judgment, JudgmentError, Session};

const SESSION_FILE: &str = "session.json";
const JUDGMENT_LOG: &str = "judgments.jsonl";

#[derive(Debug, Default)]
struct Log {
    judgments: Vec<Judgment>,
    judged: HashSet<String>,
    file: Option<File>,
}

#[derive(Debug)]
pub struct Entry {
    pub session: Session,
    log: Mutex<Log>,
}

impl Entry {
    pub fn judgments(&self) -> Vec<Judgment> {
        self.log.lock().expect("log lock").judgments.clone()
    }

    pub fn judged(&self) -> HashSet<String> {
        self.log.lock().expect("log lock").judged.clone()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error(transparent)]
    Rejected(#[from] JudgmentError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Sessions in memory, mirrored to disk when a root directory is set.
#[derive(Debug, Default)]
pub struct Store {
    root: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Entry>>>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store::default()
    }

    /// Opens (creating if needed) a store directory and reloads every
    /// session in it. A torn last line in a judgment log is dropped.
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut sessions = HashMap::new();
        for dir in fs::read_dir(&root)? {
            let dir = dir?.path();
            let meta = dir.join(SESSION_FILE);
            if !meta.is_file() {
                continue;
            }
            let session: Session = serde_json::from_slice(&fs::read(&meta)?).map_err(invalid)?;
            let mut log = Log::default();
            let path = dir.join(JUDGMENT_LOG);
            if path.is_file() {
                let bytes = fs::read(&path)?;
                let mut good = 0;
                for line in bytes.split_inclusive(|&b| b == b'\n') {
                    let complete = line.ends_with(b"\n");
                    match serde_json::from_slice::<Judgment>(line) {
                        Ok(j) if complete => {
                            log.judged.insert(j.trial_id.clone());
                            log.judgments.push(j);
                            good += line.len();
                        }
                        _ if good + line.len() == bytes.len() => break,
                        Ok(_) => unreachable!("only the last line can lack a newline"),
                        Err(e) => return Err(invalid(e)),
                    }
                }
                if good < bytes.len() {
                    OpenOptions::new().write(true).open(&path)?.set_len(good as u64)?;
                }
            }
            log.file = Some(append(&path)?);
            sessions.insert(
                session.id.clone(),
                Arc::new(Entry {
                    session,
                    log: Mutex::new(log),
                }),
            );
        }
        Ok(Store {
            root: Some(root),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn get(&self, id: &str) -> Option<Arc<Entry>> {
        self.sessions.read().expect("session map").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, session: Session) -> io::Result<Arc<Entry>> {
        let mut log = Log::default();
        if let Some(root) = &self.root {
            let dir = root.join(&session.id);
            fs::create_dir_all(&dir)?;
            let tmp = dir.join("session.json.tmp");
            fs::write(&tmp, serde_json::to_vec_pretty(&session).map_err(invalid)?)?;
            fs::rename(&tmp, dir.join(SESSION_FILE))?;
            log.file = Some(append(&dir.join(JUDGMENT_LOG))?);
        }
        let entry = Arc::new(Entry {
            session,
            log: Mutex::new(log),
        });
        self.sessions
            .write()
            .expect("session map")
            .insert(entry.session.id.clone(), entry.clone());
        Ok(entry)
    }

    /// Validates and durably appends one judgment. Returns how many trials
    /// remain unjudged.
    pub fn submit(&self, entry: &Entry, j: Judgment) -> Result<usize, SubmitError> {
        let mut log = entry.log.lock().expect("log lock");
        check_judgment(&entry.session, &log.judged, &j)?;
        if let Some(f) = log.file.as_mut() {
            let mut line = serde_json::to_vec(&j).map_err(invalid)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        log.judged.insert(j.trial_id.clone());
        log.judgments.push(j);
        Ok(entry.session.trials.len() - log.judged.len())
    }
}

fn append(path: &Path) -> io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}

fn invalid(e: serde_json::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}
