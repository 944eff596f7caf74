//! On-disk corpus: `manifest.toml`, `protocols/{split}.txt`, `wav/{split}/{utt}.wav`.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use fadel_core::synth::PlannedUtterance;
use fadel_core::{CorpusManifest, Split, TrialRecord};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};
use crate::{protocol, wav};

pub const MANIFEST_FILE: &str = "manifest.toml";

pub fn parse_manifest(text: &str) -> Result<CorpusManifest> {
    let m: CorpusManifest = toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    m.validate()?;
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    parse_manifest(&fs::read_to_string(path).at(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn manifest_to_toml(m: &CorpusManifest) -> String {
    toml::to_string(m).expect("manifest is always representable as TOML")
}

fn protocol_path(root: &Path, split: Split) -> PathBuf {
    root.join("protocols").join(format!("{}.txt", split.name()))
}

fn wav_path(root: &Path, split: Split, utt: &str) -> PathBuf {
    root.join("wav").join(split.name()).join(format!("{utt}.wav"))
}

fn workers() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

fn render_split(m: &CorpusManifest, root: &Path, plan: &[PlannedUtterance]) -> Result<()> {
    let n = workers().min(plan.len()).max(1);
    thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .map(|w| {
                s.spawn(move || -> Result<()> {
                    for p in plan.iter().skip(w).step_by(n) {
                        let audio = m.render(p)?;
                        wav::write(&wav_path(root, p.split, &p.record.utterance), &audio, m.sample_rate)?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles.into_iter().try_for_each(|h| h.join().expect("render worker panicked"))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateSummary {
    pub root: PathBuf,
    pub counts: Vec<(Split, usize)>,
}

fn is_replaceable(dir: &Path) -> Result<bool> {
    if !dir.exists() {
        return Ok(true);
    }
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(true);
    }
    Ok(dir.is_dir() && fs::read_dir(dir).at(dir)?.next().is_none())
}

/// Renders the corpus into a staging directory next to `out`, then moves it
/// into place. On failure nothing is left at `out`.
pub fn generate(m: &CorpusManifest, out: &Path) -> Result<GenerateSummary> {
    m.validate()?;
    if !is_replaceable(out)? {
        return Err(Error::Config(format!("{} exists and is not a corpus directory", out.display())));
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).at(&parent)?;
    let staging = tempfile::Builder::new().prefix(".fadel-corpus-").tempdir_in(&parent).at(&parent)?;
    let root = staging.path();
    let mut counts = Vec::new();
    for split in Split::ALL {
        let plan = m.plan(split)?;
        let dir = root.join("wav").join(split.name());
        fs::create_dir_all(&dir).at(&dir)?;
        render_split(m, root, &plan)?;
        let records: Vec<TrialRecord> = plan.into_iter().map(|p| p.record).collect();
        let proto = protocol_path(root, split);
        fs::create_dir_all(proto.parent().unwrap()).at(&proto)?;
        fs::write(&proto, protocol::format_protocol(&records)).at(&proto)?;
        counts.push((split, records.len()));
    }
    let mpath = root.join(MANIFEST_FILE);
    fs::write(&mpath, manifest_to_toml(m)).at(&mpath)?;
    if out.exists() {
        fs::remove_dir_all(out).at(out)?;
    }
    let staged = staging.keep();
    fs::rename(&staged, out).at(out)?;
    Ok(GenerateSummary { root: out.to_path_buf(), counts })
}

/// A generated corpus opened for reading.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
}

impl Corpus {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest = load_manifest(&root.join(MANIFEST_FILE))?;
        Ok(Self { root: root.to_path_buf(), manifest })
    }

    pub fn protocol_path(&self, split: Split) -> PathBuf {
        protocol_path(&self.root, split)
    }

    pub fn wav_path(&self, split: Split, utt: &str) -> PathBuf {
        wav_path(&self.root, split, utt)
    }

    pub fn trials(&self, split: Split) -> Result<Vec<TrialRecord>> {
        protocol::read_protocol(&self.protocol_path(split))
    }

    /// SHA-256 over the manifest and the three protocol files.
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        let mut files = vec![self.root.join(MANIFEST_FILE)];
        files.extend(Split::ALL.iter().map(|&s| self.protocol_path(s)));
        for f in files {
            let bytes = fs::read(&f).at(&f)?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}
