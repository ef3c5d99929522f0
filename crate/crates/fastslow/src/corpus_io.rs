//! Corpus files and evaluation manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fastslow_core::world::WorldError;
use fastslow_core::{generate_corpus, Corpus, CorpusSpec, QAItem, SyntheticVideo};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("manifest names unknown item {0:?}")]
    UnknownItem(String),
    #[error("manifest selects no items")]
    Empty,
}

/// QA manifest of a corpus directory: video record order plus every item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaManifest {
    pub videos: Vec<String>,
    pub items: Vec<QAItem>,
}

pub const QA_MANIFEST: &str = "qa.json";
pub const VIDEO_DIR: &str = "videos";

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Format { path: path.into(), message: e.to_string() })
}

fn write_text(path: &Path, text: &str) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io { path: path.into(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("corpus records serialize");
    s.push('\n');
    s
}

fn video_file(dir: &Path, id: &str) -> Result<PathBuf, CorpusError> {
    // ids become file names
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\']) {
        return Err(CorpusError::Format {
            path: dir.into(),
            message: format!("video id {id:?} is not a valid file name"),
        });
    }
    Ok(dir.join(VIDEO_DIR).join(format!("{id}.json")))
}

/// Loads a corpus directory (`qa.json` plus `videos/<id>.json`) or a single
/// JSON file holding `{videos, items}`.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let corpus = if path.is_dir() {
        let m: QaManifest = read_json(&path.join(QA_MANIFEST))?;
        let videos = m
            .videos
            .iter()
            .map(|id| {
                let f = video_file(path, id)?;
                let v: SyntheticVideo = read_json(&f)?;
                if v.id != *id {
                    return Err(CorpusError::Format { path: f, message: format!("record is for video {:?}", v.id) });
                }
                Ok(v)
            })
            .collect::<Result<_, _>>()?;
        Corpus { videos, items: m.items }
    } else {
        read_json(path)?
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Writes a single JSON file when `path` ends in `.json`, otherwise a corpus
/// directory with one record file per video.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "json") {
        return write_text(path, &pretty(corpus));
    }
    for v in &corpus.videos {
        write_text(&video_file(path, &v.id)?, &pretty(v))?;
    }
    let m = QaManifest { videos: corpus.videos.iter().map(|v| v.id.clone()).collect(), items: corpus.items.clone() };
    write_text(&path.join(QA_MANIFEST), &pretty(&m))
}

/// Where a corpus comes from: a file, or deterministic generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct CorpusSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<CorpusSpec>,
    /// Generation seed; the global `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
}

impl CorpusSource {
    pub fn generated(seed: u64, spec: CorpusSpec) -> Self {
        CorpusSource { path: None, generate: Some(spec), seed }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        CorpusSource { path: Some(path.into()), generate: None, seed: 0 }
    }

    /// Paths are resolved against `base` when relative.
    pub fn load(&self, base: Option<&Path>) -> Result<Corpus, CorpusError> {
        match (&self.path, &self.generate) {
            (Some(p), _) => load_corpus(resolve(base, p)),
            (None, Some(spec)) => Ok(generate_corpus(self.seed, spec)?),
            (None, None) => {
                Err(CorpusError::Format { path: PathBuf::new(), message: "corpus needs `path` or `generate`".into() })
            }
        }
    }
}

pub fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

/// Which items of a corpus a command runs on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Overrides the configured corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusSource>,
    /// Explicit item ids, in order; all items when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

impl Manifest {
    /// Reads a JSON or TOML manifest (by extension; JSON otherwise).
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
        let fmt = |message: String| CorpusError::Format { path: path.into(), message };
        let mut m: Manifest = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| fmt(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| fmt(e.to_string()))?
        };
        // relative corpus paths are relative to the manifest
        if let Some(CorpusSource { path: Some(p), .. }) = &mut m.corpus {
            *p = resolve(path.parent(), p);
        }
        Ok(m)
    }

    pub fn select(&self, corpus: &Corpus) -> Result<Vec<QAItem>, CorpusError> {
        let mut items: Vec<QAItem> = match &self.items {
            Some(ids) => ids
                .iter()
                .map(|id| corpus.item(id).cloned().ok_or_else(|| CorpusError::UnknownItem(id.clone())))
                .collect::<Result<_, _>>()?,
            None => corpus.items.clone(),
        };
        if let Some(n) = self.limit {
            items.truncate(n);
        }
        if items.is_empty() {
            return Err(CorpusError::Empty);
        }
        Ok(items)
    }
}
