use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{decode, encode, item_seed, Encoding, IoError};
use crate::geom::HandModel;
use crate::scene::ObjectModel;
use crate::synth::{synth_chain, synthesize, Skill, SkillInputs, SynthConfig, Trajectory};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "hopkit-manifest";
const ERROR_LOG: &str = "errors.jsonl";

pub fn file_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory.
    pub file: String,
    pub skills: Vec<Skill>,
    pub object: Option<String>,
    pub seed: u64,
    pub frames: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub root_seed: u64,
    pub hand_model: String,
    pub object: String,
    pub skills: Vec<Skill>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, IoError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| IoError::file(&path, e))?;
    let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| IoError::Manifest(e.to_string()))?;
    if m.format != MANIFEST_FORMAT {
        return Err(IoError::Manifest(format!("unexpected format {:?}", m.format)));
    }
    let mut seen = BTreeSet::new();
    for e in &m.entries {
        if !seen.insert(&e.file) {
            return Err(IoError::Manifest(format!("duplicate entry {:?}", e.file)));
        }
    }
    Ok(m)
}

#[derive(Clone, Debug)]
pub struct BatchRequest {
    /// One skill synthesizes clips directly; several are chained.
    pub skills: Vec<Skill>,
    pub count: usize,
    pub root_seed: u64,
    pub encoding: Encoding,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct BatchOutcome {
    pub manifest: DatasetManifest,
    pub failures: Vec<BatchFailure>,
}

fn item_name(skills: &[Skill], i: usize, enc: Encoding) -> String {
    let name: Vec<&str> = skills.iter().map(|s| s.name()).collect();
    format!("{}_{i:06}.{}", name.join("-"), enc.extension())
}

fn synth_item(
    req: &BatchRequest,
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    seed: u64,
) -> Result<Trajectory, String> {
    let t = if let [skill] = req.skills[..] {
        synthesize(skill, cfg, inputs, seed).map_err(|e| e.to_string())?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = synth_chain(cfg, inputs, &req.skills, &mut rng).map_err(|e| e.to_string())?;
        t.meta.seed = Some(seed);
        t
    };
    let obj = t.meta.object.as_ref().map(|_| inputs.object);
    if let Some(v) = t.violations(inputs.hand, obj, cfg.max_wrist_speed).first() {
        return Err(format!("synthesized clip fails validation: {v}"));
    }
    Ok(t)
}

/// Synthesizes `req.count` clips into `out_dir` in parallel and writes the
/// manifest. Item `i` always uses [`item_seed`]`(root, i)`, so the output does
/// not depend on the number of workers. Failed items are listed in the outcome
/// and in `errors.jsonl`; the manifest holds the successful ones.
pub fn synth_batch(
    req: &BatchRequest,
    cfg: &SynthConfig,
    inputs: &SkillInputs<'_>,
    out_dir: &Path,
) -> Result<BatchOutcome, IoError> {
    cfg.validate()?;
    if req.skills.is_empty() {
        return Err(IoError::Synth(crate::synth::SynthError::Empty));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| IoError::file(out_dir, e))?;
    let results: Vec<Result<ManifestEntry, BatchFailure>> = (0..req.count)
        .into_par_iter()
        .map(|i| {
            let seed = item_seed(req.root_seed, i as u64);
            let fail = |error: String| BatchFailure { index: i, seed, error };
            let t = synth_item(req, cfg, inputs, seed).map_err(fail)?;
            let bytes = encode(&t, req.encoding);
            let file = item_name(&req.skills, i, req.encoding);
            let path = out_dir.join(&file);
            std::fs::write(&path, &bytes).map_err(|e| fail(IoError::file(&path, e).to_string()))?;
            Ok(ManifestEntry {
                file,
                skills: t.meta.skills.clone(),
                object: t.meta.object.clone(),
                seed,
                frames: t.len(),
                sha256: file_sha256(&bytes),
            })
        })
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(e) => entries.push(e),
            Err(f) => failures.push(f),
        }
    }
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        root_seed: req.root_seed,
        hand_model: inputs.hand.id().to_string(),
        object: inputs.object.id.clone(),
        skills: req.skills.clone(),
        entries,
    };
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_json()).map_err(|e| IoError::file(&path, e))?;
    let log = out_dir.join(ERROR_LOG);
    if failures.is_empty() {
        if log.exists() {
            std::fs::remove_file(&log).map_err(|e| IoError::file(&log, e))?;
        }
    } else {
        let lines: String = failures
            .iter()
            .map(|f| serde_json::to_string(f).unwrap() + "\n")
            .collect();
        std::fs::write(&log, lines).map_err(|e| IoError::file(&log, e))?;
    }
    Ok(BatchOutcome { manifest, failures })
}

/// Hand and object models used to check trajectories, looked up by the ids in
/// their metadata. Built-in models are used when nothing matching was supplied.
#[derive(Clone, Debug, Default)]
pub struct ModelSource {
    pub hands: Vec<HandModel>,
    pub objects: Vec<ObjectModel>,
}

impl ModelSource {
    pub fn hand(&self, id: &str) -> Result<HandModel, IoError> {
        self.hands
            .iter()
            .find(|h| h.id() == id)
            .cloned()
            .or_else(|| HandModel::builtin(id))
            .ok_or_else(|| IoError::UnknownModel {
                what: "hand model",
                name: id.into(),
            })
    }

    /// The object at the trajectory's scale.
    pub fn object(&self, id: &str, scale: f64) -> Result<ObjectModel, IoError> {
        let base = self
            .objects
            .iter()
            .find(|o| o.id == id)
            .cloned()
            .or_else(|| ObjectModel::builtin(id))
            .ok_or_else(|| IoError::UnknownModel {
                what: "object",
                name: id.into(),
            })?;
        if scale == base.scale() {
            Ok(base)
        } else {
            Ok(base.apply_scale(scale / base.scale())?)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportIssue {
    pub frame: Option<usize>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileReport {
    pub path: String,
    pub ok: bool,
    pub frames: Option<usize>,
    pub issues: Vec<ReportIssue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub files: Vec<FileReport>,
}

pub fn validate_trajectory(
    t: &Trajectory,
    models: &ModelSource,
    max_wrist_speed: f64,
) -> Result<Vec<ReportIssue>, IoError> {
    let hand = models.hand(&t.meta.hand_model)?;
    let obj = match &t.meta.object {
        Some(id) => Some(models.object(id, t.meta.scale)?),
        None => None,
    };
    Ok(t.violations(&hand, obj.as_ref(), max_wrist_speed)
        .into_iter()
        .map(|v| ReportIssue {
            frame: v.frame,
            message: v.message,
        })
        .collect())
}

fn validate_bytes(bytes: &[u8], models: &ModelSource, max_wrist_speed: f64) -> (Option<usize>, Vec<ReportIssue>) {
    let issue = |frame, message| vec![ReportIssue { frame, message }];
    match decode(bytes) {
        Ok(t) => match validate_trajectory(&t, models, max_wrist_speed) {
            Ok(issues) => (Some(t.len()), issues),
            Err(e) => (Some(t.len()), issue(None, e.to_string())),
        },
        Err(IoError::Frame { index, message }) => (None, issue(Some(index), message)),
        Err(e) => (None, issue(None, e.to_string())),
    }
}

fn is_trajectory_file(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name != MANIFEST_FILE && matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "htraj"))
}

/// Validates one file, or every trajectory file in a directory (checking the
/// manifest's checksums when one is present).
pub fn validate_path(path: &Path, models: &ModelSource, max_wrist_speed: f64) -> Result<ValidationReport, IoError> {
    let mut files: Vec<PathBuf> = Vec::new();
    let mut expected: std::collections::BTreeMap<PathBuf, String> = Default::default();
    let mut reports = Vec::new();
    if path.is_dir() {
        let rd = std::fs::read_dir(path).map_err(|e| IoError::file(path, e))?;
        for entry in rd {
            let p = entry.map_err(|e| IoError::file(path, e))?.path();
            if p.is_file() && is_trajectory_file(&p) {
                files.push(p);
            }
        }
        files.sort();
        if path.join(MANIFEST_FILE).exists() {
            match read_manifest(path) {
                Ok(m) => {
                    for e in m.entries {
                        let p = path.join(&e.file);
                        if !p.exists() {
                            reports.push(FileReport {
                                path: p.display().to_string(),
                                ok: false,
                                frames: None,
                                issues: vec![ReportIssue {
                                    frame: None,
                                    message: "listed in the manifest but missing".into(),
                                }],
                            });
                        }
                        expected.insert(p, e.sha256);
                    }
                }
                Err(e) => reports.push(FileReport {
                    path: path.join(MANIFEST_FILE).display().to_string(),
                    ok: false,
                    frames: None,
                    issues: vec![ReportIssue {
                        frame: None,
                        message: e.to_string(),
                    }],
                }),
            }
        }
    } else {
        files.push(path.to_path_buf());
    }
    let checked: Vec<FileReport> = files
        .par_iter()
        .map(|p| {
            let bytes = match std::fs::read(p) {
                Ok(b) => b,
                Err(e) => {
                    return FileReport {
                        path: p.display().to_string(),
                        ok: false,
                        frames: None,
                        issues: vec![ReportIssue {
                            frame: None,
                            message: e.to_string(),
                        }],
                    }
                }
            };
            let (frames, mut issues) = validate_bytes(&bytes, models, max_wrist_speed);
            if let Some(sum) = expected.get(p) {
                if *sum != file_sha256(&bytes) {
                    issues.push(ReportIssue {
                        frame: None,
                        message: "checksum does not match the manifest".into(),
                    });
                }
            }
            FileReport {
                path: p.display().to_string(),
                ok: issues.is_empty(),
                frames,
                issues,
            }
        })
        .collect();
    reports.extend(checked);
    Ok(ValidationReport {
        ok: reports.iter().all(|r| r.ok),
        files: reports,
    })
}
