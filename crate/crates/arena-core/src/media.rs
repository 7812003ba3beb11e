//! Video registry: manifest ingest, duration buckets, uniform frame
//! sampling, and subtitle loading.
//!
//! The engine never decodes video. It consumes directories of pre-extracted
//! frame images (sorted by filename) produced by an external decoder; the
//! README documents the command template.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VideoId = String;

/// The ten content categories a video may carry.
pub const CATEGORIES: [&str; 10] = [
    "Movie",
    "Life Vlogs",
    "Geography",
    "History",
    "News Programs",
    "Art",
    "STEM",
    "Computer Science",
    "Cooking Recipes",
    "Travel Guides",
];

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("duration must be positive, got {0}")]
    NonpositiveDuration(f64),
    #[error("video {video_id}: frame directory {dir} is missing or empty")]
    MissingFrames { video_id: VideoId, dir: String },
    #[error("video {video_id}: category {category:?} is not one of the known categories")]
    BadCategory { video_id: VideoId, category: String },
    #[error("duplicate video id {0}")]
    DuplicateVideoId(VideoId),
    #[error("manifest line {line}: {detail}")]
    MalformedRow { line: usize, detail: String },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Duration bucket. Bounds are lower-exclusive, upper-inclusive; durations in
/// the gaps between the four ranges map to `Unbucketed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationBucket {
    B8To15,
    B15To60,
    B180To600,
    B900To3600,
    Unbucketed,
}

impl DurationBucket {
    /// The four real buckets in ascending duration order.
    pub const BUCKETS: [DurationBucket; 4] = [
        DurationBucket::B8To15,
        DurationBucket::B15To60,
        DurationBucket::B180To600,
        DurationBucket::B900To3600,
    ];

    /// Segment tag used on battle records, e.g. `bucket:8-15s`.
    pub fn tag(&self) -> Option<String> {
        self.label().map(|l| format!("bucket:{l}"))
    }

    pub fn label(&self) -> Option<&'static str> {
        match self {
            DurationBucket::B8To15 => Some("8-15s"),
            DurationBucket::B15To60 => Some("15-60s"),
            DurationBucket::B180To600 => Some("180-600s"),
            DurationBucket::B900To3600 => Some("900-3600s"),
            DurationBucket::Unbucketed => None,
        }
    }
}

impl fmt::Display for DurationBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label().unwrap_or("unbucketed"))
    }
}

/// Maps a positive duration to its bucket.
pub fn classify_bucket(duration_s: f64) -> Result<DurationBucket, MediaError> {
    if !(duration_s > 0.0) {
        return Err(MediaError::NonpositiveDuration(duration_s));
    }
    Ok(if duration_s > 8.0 && duration_s <= 15.0 {
        DurationBucket::B8To15
    } else if duration_s > 15.0 && duration_s <= 60.0 {
        DurationBucket::B15To60
    } else if duration_s > 180.0 && duration_s <= 600.0 {
        DurationBucket::B180To600
    } else if duration_s > 900.0 && duration_s <= 3600.0 {
        DurationBucket::B900To3600
    } else {
        DurationBucket::Unbucketed
    })
}

/// Uniform frame sampling: `min(frame_count, budget)` strictly increasing
/// indices with `index_k = floor(k * frame_count / n)`, always starting at 0.
pub fn uniform_sample(frame_count: usize, budget: usize) -> Vec<usize> {
    assert!(frame_count >= 1 && budget >= 1, "frame_count and budget must be >= 1");
    let n = frame_count.min(budget);
    (0..n).map(|k| k * frame_count / n).collect()
}

/// One registered video.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: VideoId,
    pub frame_dir: PathBuf,
    pub frame_count: usize,
    pub duration_s: f64,
    pub category: String,
    pub bucket: DurationBucket,
    pub subtitles: Option<PathBuf>,
}

/// One manifest row as written on disk (line-delimited JSON).
#[derive(Debug, Deserialize)]
struct ManifestRow {
    video_id: String,
    frame_dir: PathBuf,
    duration_s: f64,
    category: String,
    #[serde(default)]
    subtitles: Option<PathBuf>,
}

/// Reads and validates a manifest, producing the video registry. Rows are
/// line-delimited JSON; relative paths resolve against the manifest's
/// directory. Ingesting the same manifest twice yields an identical registry.
pub fn ingest_manifest(manifest: &Path) -> Result<Vec<VideoMeta>, MediaError> {
    let file = fs::File::open(manifest).map_err(|source| MediaError::Io {
        path: manifest.display().to_string(),
        source,
    })?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut registry = Vec::new();

    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| MediaError::Io {
            path: manifest.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(&line).map_err(|e| MediaError::MalformedRow {
            line: line_no,
            detail: e.to_string(),
        })?;
        if !seen.insert(row.video_id.clone()) {
            return Err(MediaError::DuplicateVideoId(row.video_id));
        }
        if !CATEGORIES.contains(&row.category.as_str()) {
            return Err(MediaError::BadCategory {
                video_id: row.video_id,
                category: row.category,
            });
        }
        let bucket = classify_bucket(row.duration_s)?;
        let frame_dir = resolve(base, &row.frame_dir);
        let frame_count = count_frames(&frame_dir);
        if frame_count == 0 {
            return Err(MediaError::MissingFrames {
                video_id: row.video_id,
                dir: frame_dir.display().to_string(),
            });
        }
        registry.push(VideoMeta {
            video_id: row.video_id,
            frame_dir,
            frame_count,
            duration_s: row.duration_s,
            category: row.category,
            bucket,
            subtitles: row.subtitles.map(|p| resolve(base, &p)),
        });
    }
    Ok(registry)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn count_frames(dir: &Path) -> usize {
    list_frames(dir).len()
}

/// All frame files in the directory, sorted by filename. Filename order is
/// the temporal order.
pub fn list_frames(dir: &Path) -> Vec<PathBuf> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut frames: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    frames.sort();
    frames
}

/// The frame paths a request with the given budget should carry, in
/// temporal order.
pub fn sample_frames(video: &VideoMeta, budget: usize) -> Vec<PathBuf> {
    let frames = list_frames(&video.frame_dir);
    if frames.is_empty() {
        return Vec::new();
    }
    uniform_sample(frames.len(), budget)
        .into_iter()
        .map(|i| frames[i].clone())
        .collect()
}

/// Loads the video's subtitles as plain text, flattening SRT/VTT cue
/// structure (indices, timestamps, headers) down to the spoken lines.
pub fn load_subtitles(video: &VideoMeta) -> Result<Option<String>, MediaError> {
    let Some(path) = &video.subtitles else {
        return Ok(None);
    };
    let raw = fs::read_to_string(path).map_err(|source| MediaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let text = match ext.as_str() {
        "srt" | "vtt" => flatten_cues(&raw),
        _ => raw.trim().to_string(),
    };
    Ok(if text.is_empty() { None } else { Some(text) })
}

fn flatten_cues(raw: &str) -> String {
    raw.lines()
        .map(str::trim)
        .filter(|line| {
            !line.is_empty()
                && !line.contains("-->")
                && !line.chars().all(|c| c.is_ascii_digit())
                && *line != "WEBVTT"
        })
        .collect::<Vec<_>>()
        .join("\n")
}
