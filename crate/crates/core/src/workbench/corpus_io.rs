//! On-disk corpus layout:
//!
//! ```text
//! <dir>/corpus.toml           CorpusInfo
//! <dir>/<split>/<id>.feats    tensor file holding one "features" tensor
//! <dir>/<split>/<id>.ali      reference alignment, one line
//! <dir>/<split>/<id>.lat      optional lattice
//! <dir>/<split>/manifest.txt  "<id> <speaker>" per line, written last
//! ```
//!
//! A split without a manifest is treated as incomplete.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Split, Utterance};
use super::tensor_file::TensorFile;
use crate::error::{Error, Result};
use crate::losses::SoftTargets;
use crate::sequence::{Lattice, ReferenceAlignment};

const MANIFEST: &str = "manifest.txt";
const INFO: &str = "corpus.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub num_states: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn split_dir(dir: &Path, split: Split) -> PathBuf {
    dir.join(split.name())
}

pub fn write_corpus(corpus: &Corpus, seed: u64, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let info = CorpusInfo {
        num_states: corpus.num_states,
        feature_dim: corpus.feature_dim,
        seed,
    };
    let text = toml::to_string(&info).map_err(|e| Error::invalid(e.to_string()))?;
    write_text(&dir.join(INFO), &text)?;
    for split in Split::ALL {
        write_split(dir, split, corpus.split(split))?;
    }
    Ok(())
}

fn write_split(dir: &Path, split: Split, utts: &[Utterance]) -> Result<()> {
    let sdir = split_dir(dir, split);
    fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
    let manifest_path = sdir.join(MANIFEST);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }
    let mut manifest = String::new();
    for u in utts {
        if u.alignment.len() != u.num_frames() {
            return Err(Error::invalid(format!("{}: alignment length mismatch", u.id)));
        }
        let mut f = TensorFile::new()
            .with_meta("kind", "features")
            .with_meta("speaker", u.speaker);
        f.push("features", u.features.clone());
        f.save(sdir.join(format!("{}.feats", u.id)))?;
        write_text(&sdir.join(format!("{}.ali", u.id)), &u.alignment.to_text())?;
        if let Some(lat) = &u.lattice {
            write_text(&sdir.join(format!("{}.lat", u.id)), &lat.to_text())?;
        }
        manifest.push_str(&format!("{} {}\n", u.id, u.speaker));
    }
    write_text(&manifest_path, &manifest)
}

/// Adds (or replaces) lattice files for the given utterances of an existing split.
pub fn write_lattices(dir: impl AsRef<Path>, split: Split, utts: &[Utterance]) -> Result<()> {
    let sdir = split_dir(dir.as_ref(), split);
    for u in utts {
        let lat = u
            .lattice
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{} has no lattice", u.id)))?;
        write_text(&sdir.join(format!("{}.lat", u.id)), &lat.to_text())?;
    }
    Ok(())
}

pub fn read_corpus_info(dir: impl AsRef<Path>) -> Result<CorpusInfo> {
    let path = dir.as_ref().join(INFO);
    toml::from_str(&read_text(&path)?).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn read_split(dir: impl AsRef<Path>, split: Split) -> Result<Vec<Utterance>> {
    let sdir = split_dir(dir.as_ref(), split);
    let manifest_path = sdir.join(MANIFEST);
    let manifest = read_text(&manifest_path)?;
    let mut out = Vec::new();
    for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        let (Some(id), Some(spk), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::format(&manifest_path, format!("bad line {line:?}")));
        };
        let speaker = spk
            .parse()
            .map_err(|_| Error::format(&manifest_path, format!("bad speaker id {spk:?}")))?;
        let feats_path = sdir.join(format!("{id}.feats"));
        let feats = TensorFile::load(&feats_path)?;
        let features = feats
            .get("features")
            .ok_or_else(|| Error::format(&feats_path, "missing features tensor"))?
            .clone();
        let ali_path = sdir.join(format!("{id}.ali"));
        let alignment = ReferenceAlignment::from_text(&read_text(&ali_path)?)
            .map_err(|e| Error::format(&ali_path, e.to_string()))?;
        if alignment.len() != features.rows() {
            return Err(Error::format(&ali_path, "alignment length does not match features"));
        }
        let lat_path = sdir.join(format!("{id}.lat"));
        let lattice = if lat_path.exists() {
            let lat = Lattice::from_text(&read_text(&lat_path)?)
                .map_err(|e| Error::format(&lat_path, e.to_string()))?;
            Some(lat)
        } else {
            None
        };
        out.push(Utterance {
            id: id.to_string(),
            speaker,
            features,
            alignment,
            lattice,
        });
    }
    Ok(out)
}

pub fn save_soft_targets(targets: &SoftTargets, path: impl AsRef<Path>) -> Result<()> {
    let mut f = TensorFile::new()
        .with_meta("kind", "soft_targets")
        .with_meta("temperature", targets.temperature);
    f.push("posteriors", targets.posteriors.clone());
    f.save(path)
}

pub fn load_soft_targets(path: impl AsRef<Path>) -> Result<SoftTargets> {
    let path = path.as_ref();
    let f = TensorFile::load(path)?;
    if f.meta("kind") != Some("soft_targets") {
        return Err(Error::format(path, "not a soft-target file"));
    }
    let temperature = f
        .meta("temperature")
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::format(path, "missing temperature"))?;
    let posteriors = f
        .get("posteriors")
        .ok_or_else(|| Error::format(path, "missing posteriors tensor"))?
        .clone();
    SoftTargets::new(posteriors, temperature).map_err(|e| Error::format(path, e.to_string()))
}
