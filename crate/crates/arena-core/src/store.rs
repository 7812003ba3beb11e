//! Append-only event log: the single source of truth for a run.
//!
//! Every durable fact (registered video, persona, question, battle, bench
//! score) is one line in `events.log`: an 8-hex-char SHA-256 prefix, a space,
//! and a JSON envelope. Lines are written with a single flushed write each,
//! so a crash can tear at most the final line; replay accepts a torn tail but
//! treats any earlier damage as corruption. Writers hold an advisory lock on
//! the storage root, which the kernel releases even on SIGKILL.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read as _, Seek, SeekFrom, Write as _};
use std::os::unix::io::AsRawFd;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{ComplexityScores, FaultAnalysis, JudgeVerdict, Persona, QuestionSpec, Winner};
use crate::media::{VideoId, VideoMeta};
use crate::rating::{BattleOutcome, ModelId, Verdict};
use crate::short_hash;

pub const LOG_FILE: &str = "events.log";
pub const LOCK_FILE: &str = ".lock";
const SCHEMA_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt record at byte offset {offset} (line {line}): {detail}")]
    CorruptRecord {
        offset: u64,
        line: usize,
        detail: String,
    },
    #[error("unsupported schema version {0}")]
    UnsupportedVersion(u32),
    #[error("storage root {0} is locked by another process")]
    LockHeld(String),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// One finished, judged battle as persisted. `model_a` is the contestant the
/// judge saw as "A", so position assignment is recoverable from the record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BattleRecord {
    pub battle_id: String,
    pub video_id: VideoId,
    pub question_id: String,
    pub model_a: ModelId,
    pub model_b: ModelId,
    pub response_a: String,
    pub response_b: String,
    pub verdict: JudgeVerdict,
    pub segment_tags: BTreeSet<String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub examiner_model: ModelId,
    pub judge_model: ModelId,
    pub engine_version: String,
}

impl BattleRecord {
    /// The rating-layer view of this battle.
    pub fn outcome(&self) -> BattleOutcome {
        let verdict = match self.verdict.winner {
            Winner::A => Verdict::AWins,
            Winner::B => Verdict::BWins,
            Winner::Tie => Verdict::Tie,
        };
        BattleOutcome::new(self.model_a.clone(), self.model_b.clone(), verdict)
            .expect("recorded battles never pair a model with itself")
            .with_tags(self.segment_tags.iter().cloned())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    VideoRegistered { meta: VideoMeta },
    PersonaCreated { persona: Persona },
    QuestionCreated { question: QuestionSpec },
    QuestionRated { question_id: String, complexity: ComplexityScores },
    BattleRecorded { record: Box<BattleRecord> },
    BattleFailed {
        battle_id: String,
        video_id: VideoId,
        question_id: String,
        contestant_1: ModelId,
        contestant_2: ModelId,
        stage: String,
        cause: String,
    },
    FaultsAnalyzed { analysis: FaultAnalysis },
    EvolutionExhausted { question_id: String, attempts: u32 },
    BenchItemScored {
        model_id: ModelId,
        item_id: String,
        vs_selected: f64,
        vs_rejected: f64,
    },
    BenchItemFailed {
        model_id: ModelId,
        item_id: String,
        cause: String,
    },
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    v: u32,
    event: Event,
}

fn encode_line(event: &Event) -> Result<String, StoreError> {
    let body = serde_json::to_string(&Envelope {
        v: SCHEMA_VERSION,
        event: event.clone(),
    })?;
    Ok(format!("{} {body}\n", short_hash(&body, CHECKSUM_LEN)))
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Exclusive advisory lock on a storage root. Held for the lifetime of the
/// value; the kernel drops it when the process dies, however it dies.
#[derive(Debug)]
pub struct StorageLock {
    _file: File,
    pub path: PathBuf,
}

impl StorageLock {
    pub fn acquire(root: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let path = root.join(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        let rc = unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX | libc::LOCK_NB) };
        if rc != 0 {
            return Err(StoreError::LockHeld(root.display().to_string()));
        }
        Ok(StorageLock { _file: file, path })
    }
}

/// The single serialized writer for a storage root.
#[derive(Debug)]
pub struct EventLogWriter {
    file: File,
    path: PathBuf,
    _lock: StorageLock,
}

impl EventLogWriter {
    /// Opens (creating if needed) the log under `root`, taking the root lock.
    /// An unterminated final fragment left by a crash is truncated away so
    /// the next append starts a fresh line.
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let lock = StorageLock::acquire(root)?;
        let path = root.join(LOG_FILE);
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        truncate_torn_tail(&mut file).map_err(|e| io_err(&path, e))?;
        Ok(EventLogWriter {
            file,
            path,
            _lock: lock,
        })
    }

    /// Appends one event as a single flushed write.
    pub fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        let line = encode_line(event)?;
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| io_err(&self.path, e))
    }
}

/// Drops everything after the last newline. Content validity is not checked
/// here; a terminated-but-corrupt record must fail the read loudly rather
/// than be silently discarded.
fn truncate_torn_tail(file: &mut File) -> std::io::Result<()> {
    let len = file.metadata()?.len();
    let mut keep = 0u64;
    let mut scan_end = len;
    let mut buf = vec![0u8; 8192];
    'scan: while scan_end > 0 {
        let start = scan_end.saturating_sub(buf.len() as u64);
        let n = (scan_end - start) as usize;
        file.seek(SeekFrom::Start(start))?;
        file.read_exact(&mut buf[..n])?;
        for i in (0..n).rev() {
            if buf[i] == b'\n' {
                keep = start + i as u64 + 1;
                break 'scan;
            }
        }
        scan_end = start;
    }
    if keep < len {
        file.set_len(keep)?;
    }
    Ok(())
}

/// A fully validated read of the log.
#[derive(Debug)]
pub struct LogRead {
    pub events: Vec<Event>,
    /// A final unterminated or invalid trailing fragment was dropped.
    pub torn_tail: bool,
}

/// Reads and verifies every record. A missing file reads as empty. Only the
/// final, newline-less fragment may be invalid; anything else is corruption.
pub fn read_log(root: &Path) -> Result<LogRead, StoreError> {
    let path = root.join(LOG_FILE);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(LogRead {
                events: Vec::new(),
                torn_tail: false,
            })
        }
        Err(e) => return Err(io_err(&path, e)),
    };
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut offset: u64 = 0;
    let mut line_no = 0usize;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let read = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| io_err(&path, e))?;
        if read == 0 {
            return Ok(LogRead {
                events,
                torn_tail: false,
            });
        }
        line_no += 1;
        let terminated = buf.last() == Some(&b'\n');
        match decode_line(&buf) {
            Ok(event) => events.push(event),
            Err(detail) if !terminated => {
                // A crash mid-append tears exactly the last line.
                let _ = detail;
                return Ok(LogRead {
                    events,
                    torn_tail: true,
                });
            }
            Err(detail) => {
                return Err(StoreError::CorruptRecord {
                    offset,
                    line: line_no,
                    detail,
                })
            }
        }
        offset += read as u64;
    }
}

fn decode_line(raw: &[u8]) -> Result<Event, String> {
    let text = std::str::from_utf8(raw).map_err(|e| e.to_string())?;
    let text = text.strip_suffix('\n').unwrap_or(text);
    let (checksum, body) = text
        .split_once(' ')
        .ok_or_else(|| "missing checksum field".to_string())?;
    if checksum.len() != CHECKSUM_LEN {
        return Err(format!("checksum field has length {}", checksum.len()));
    }
    if short_hash(body, CHECKSUM_LEN) != checksum {
        return Err("checksum mismatch".into());
    }
    let envelope: Envelope = serde_json::from_str(body).map_err(|e| e.to_string())?;
    if envelope.v != SCHEMA_VERSION {
        return Err(format!("unsupported schema version {}", envelope.v));
    }
    Ok(envelope.event)
}

/// A battle that failed a stage permanently, as reconstructed from the log.
#[derive(Debug, Clone)]
pub struct FailedBattle {
    pub video_id: VideoId,
    pub question_id: String,
    pub contestant_1: ModelId,
    pub contestant_2: ModelId,
    pub stage: String,
    pub cause: String,
}

/// Everything the log says happened, indexed for the pipeline.
#[derive(Debug, Default)]
pub struct ReplayState {
    pub videos: BTreeMap<VideoId, VideoMeta>,
    pub personas: BTreeMap<String, Persona>,
    pub questions: BTreeMap<String, QuestionSpec>,
    pub battles: BTreeMap<String, BattleRecord>,
    pub failed: BTreeMap<String, FailedBattle>,
    pub analyses: BTreeMap<String, FaultAnalysis>,
    pub exhausted: BTreeSet<String>,
    /// (model_id, item_id, vs_selected, vs_rejected) per scored bench item.
    pub bench_scored: Vec<(ModelId, String, f64, f64)>,
    pub bench_failed: Vec<(ModelId, String, String)>,
    pub torn_tail: bool,
}

impl ReplayState {
    pub fn from_events(events: Vec<Event>) -> Self {
        let mut state = ReplayState::default();
        for event in events {
            match event {
                Event::VideoRegistered { meta } => {
                    state.videos.insert(meta.video_id.clone(), meta);
                }
                Event::PersonaCreated { persona } => {
                    state.personas.insert(persona.persona_id.clone(), persona);
                }
                Event::QuestionCreated { question } => {
                    state.questions.insert(question.question_id.clone(), question);
                }
                Event::QuestionRated {
                    question_id,
                    complexity,
                } => {
                    if let Some(q) = state.questions.get_mut(&question_id) {
                        q.complexity = Some(complexity);
                    }
                }
                Event::BattleRecorded { record } => {
                    state.battles.entry(record.battle_id.clone()).or_insert(*record);
                }
                Event::BattleFailed {
                    battle_id,
                    video_id,
                    question_id,
                    contestant_1,
                    contestant_2,
                    stage,
                    cause,
                } => {
                    state.failed.insert(
                        battle_id,
                        FailedBattle {
                            video_id,
                            question_id,
                            contestant_1,
                            contestant_2,
                            stage,
                            cause,
                        },
                    );
                }
                Event::FaultsAnalyzed { analysis } => {
                    state.analyses.insert(analysis.battle_id.clone(), analysis);
                }
                Event::EvolutionExhausted { question_id, .. } => {
                    state.exhausted.insert(question_id);
                }
                Event::BenchItemScored {
                    model_id,
                    item_id,
                    vs_selected,
                    vs_rejected,
                } => {
                    state.bench_scored.push((model_id, item_id, vs_selected, vs_rejected));
                }
                Event::BenchItemFailed {
                    model_id,
                    item_id,
                    cause,
                } => {
                    state.bench_failed.push((model_id, item_id, cause));
                }
            }
        }
        state
    }

    /// The rating inputs: one outcome per recorded battle, ordered by
    /// battle_id so downstream fits never depend on log order.
    pub fn outcomes(&self) -> Vec<BattleOutcome> {
        self.battles.values().map(BattleRecord::outcome).collect()
    }
}

/// Reads, verifies, and folds the log into state.
pub fn replay(root: &Path) -> Result<ReplayState, StoreError> {
    let read = read_log(root)?;
    let mut state = ReplayState::from_events(read.events);
    state.torn_tail = read.torn_tail;
    Ok(state)
}
