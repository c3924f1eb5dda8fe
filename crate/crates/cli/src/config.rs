//! Effective run configuration: defaults, then an optional JSON file, then
//! environment variables (paths only), then flags.

use serde::{Deserialize, Serialize};
use sgqa_core::balancer::BalanceConfig;
use sgqa_core::geometry::Ratio;
use sgqa_core::lexicon::LexiconPaths;
use sgqa_core::question::EngineConfig;
use sgqa_core::scene_graph::PreprocessConfig;
use sgqa_core::synth::SynthConfig;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    /// Keep only templates whose id starts with one of these.
    pub template_filter: Vec<String>,
    pub lexicon: LexiconPaths,
    pub iou_threshold: f64,
    pub containment_threshold: f64,
    pub max_features: usize,
    pub perturb_ratio: f64,
    pub max_tokens: usize,
    pub max_perturb_attempts: usize,
    pub balance: BalanceConfig,
    pub synth: SynthConfig,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Self {
            input: None,
            output: None,
            report: None,
            templates: None,
            template_filter: Vec::new(),
            lexicon: LexiconPaths::default(),
            iou_threshold: 0.7,
            containment_threshold: 0.8,
            max_features: engine.max_features,
            perturb_ratio: engine.perturb_ratio,
            max_tokens: engine.max_tokens,
            max_perturb_attempts: engine.max_perturb_attempts,
            balance: BalanceConfig::default(),
            synth: SynthConfig::default(),
            seed: 0,
            jobs: 1,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Every problem with the configuration, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        for (name, v) in [("iou_threshold", self.iou_threshold), ("containment_threshold", self.containment_threshold)] {
            if !(v > 0.0 && v <= 1.0) {
                errors.push(format!("{name} {v} is outside (0, 1]"));
            }
        }
        if self.max_features == 0 {
            errors.push("max_features must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.perturb_ratio) {
            errors.push(format!("perturb_ratio {} is outside [0, 1]", self.perturb_ratio));
        }
        if self.max_tokens == 0 {
            errors.push("max_tokens must be positive".into());
        }
        if self.max_perturb_attempts == 0 {
            errors.push("max_perturb_attempts must be positive".into());
        }
        if self.jobs == 0 {
            errors.push("jobs must be at least 1".into());
        }
        errors.extend(self.balance.validate().into_iter().map(|e| format!("balance.{e}")));
        let s = &self.synth;
        if s.min_objects == 0 || s.min_objects > s.max_objects {
            errors.push(format!("synth object range {}..={} is empty", s.min_objects, s.max_objects));
        }
        if s.width < 11 || s.height < 11 {
            errors.push("synth canvas must be at least 11x11".into());
        }
        let paths = [
            ("templates", &self.templates),
            ("lexicon.attributes", &self.lexicon.attributes),
            ("lexicon.contradictions", &self.lexicon.contradictions),
            ("lexicon.taxonomy", &self.lexicon.taxonomy),
            ("lexicon.relation_inverses", &self.lexicon.relation_inverses),
            ("lexicon.outliers", &self.lexicon.outliers),
        ];
        for (name, p) in paths {
            if let Some(p) = p {
                if !p.exists() {
                    errors.push(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        errors
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            iou_threshold: Ratio::from_f64(self.iou_threshold).expect("validated"),
            containment_threshold: Ratio::from_f64(self.containment_threshold).expect("validated"),
        }
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            max_tokens: self.max_tokens,
            max_features: self.max_features,
            perturb_ratio: self.perturb_ratio,
            max_perturb_attempts: self.max_perturb_attempts,
        }
    }

    /// SHA-256 over the settings that influence output. Paths are replaced
    /// by the contents they point to, and the worker count is left out, so
    /// the hash is stable across machines, directories and `--jobs`.
    pub fn hash(&self) -> String {
        let file_digest = |p: &Option<PathBuf>| p.as_ref().map(|p| digest_path(p));
        let doc = serde_json::json!({
            "input": file_digest(&self.input),
            "templates": file_digest(&self.templates),
            "template_filter": self.template_filter,
            "lexicon": {
                "attributes": file_digest(&self.lexicon.attributes),
                "contradictions": file_digest(&self.lexicon.contradictions),
                "taxonomy": file_digest(&self.lexicon.taxonomy),
                "relation_inverses": file_digest(&self.lexicon.relation_inverses),
                "outliers": file_digest(&self.lexicon.outliers),
            },
            "iou_threshold": self.iou_threshold,
            "containment_threshold": self.containment_threshold,
            "max_features": self.max_features,
            "perturb_ratio": self.perturb_ratio,
            "max_tokens": self.max_tokens,
            "max_perturb_attempts": self.max_perturb_attempts,
            "balance": self.balance,
            "synth": self.synth,
            "seed": self.seed,
        });
        hex(&Sha256::digest(doc.to_string().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a file, or of a directory's files in name order.
pub fn digest_path(p: &Path) -> String {
    let mut h = Sha256::new();
    if p.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(p)
            .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        files.sort();
        for f in files.into_iter().filter(|f| f.is_file()) {
            h.update(f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
            h.update(std::fs::read(&f).unwrap_or_default());
        }
    } else {
        h.update(std::fs::read(p).unwrap_or_default());
    }
    hex(&h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_errors_reported() {
        let cfg = PipelineConfig {
            iou_threshold: 0.0,
            containment_threshold: 1.5,
            jobs: 0,
            perturb_ratio: 2.0,
            ..Default::default()
        };
        let errors = cfg.validate();
        assert_eq!(errors.len(), 4, "{errors:?}");
    }

    #[test]
    fn hash_ignores_jobs() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { jobs: 8, ..Default::default() };
        let c = PipelineConfig { seed: 1, ..Default::default() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 3, "bogus": 1}"#).unwrap();
        assert!(PipelineConfig::from_file(&p).unwrap_err().contains("bogus"));
        std::fs::write(&p, r#"{"seed": 3, "balance": {"max_answer_share": 0.4}}"#).unwrap();
        let cfg = PipelineConfig::from_file(&p).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.balance.max_answer_share, 0.4);
        assert_eq!(cfg.balance.marginal_tolerance, 0.2);
    }
}
