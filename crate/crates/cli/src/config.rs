//! JSON configuration shared by the CLI and the gateway. Every field is
//! optional; flags override config values.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use srpg_core::{
    BackendConfig, DetectionPolicy, GuardConfig, GuardPipeline, HttpBackend, InjectionBank,
    MockBackend, MockMode, PiiDetector, PromptConfig, ReconstructionBackend, Reconstructor,
    TemplateBank, UnitLexicon, Weights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendKind {
    Deterministic,
    Mock,
    Http,
}

impl BackendKind {
    pub fn label(self) -> &'static str {
        match self {
            BackendKind::Deterministic => "deterministic",
            BackendKind::Mock => "mock",
            BackendKind::Http => "http",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Paths to data files; bundled defaults are used when absent.
    pub gazetteer: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub injection_bank: Option<PathBuf>,
    pub prompt_template: Option<PathBuf>,
    pub unit_lexicon: Option<Vec<String>>,
    #[serde(default)]
    pub guard: Option<GuardConfig>,
    #[serde(default)]
    pub llm: Option<BackendConfig>,
    /// Mode for `--backend mock`.
    pub mock_mode: Option<String>,
    #[serde(default)]
    pub weights: Option<Weights>,
    #[serde(default)]
    pub gateway: Option<GatewayConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: Option<String>,
    /// When false (default), request logs carry only hashes of the text.
    #[serde(default)]
    pub log_raw: bool,
    #[serde(default = "default_max_body")]
    pub max_body_bytes: usize,
    pub upstream: Option<String>,
    pub default_method: Option<String>,
    /// Reconstruction backend for the gateway: deterministic (default),
    /// mock, or http.
    pub backend: Option<String>,
}

fn default_max_body() -> usize {
    32 * 1024
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen: None,
            log_raw: false,
            max_body_bytes: default_max_body(),
            upstream: None,
            default_method: None,
            backend: None,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let raw = std::fs::read_to_string(p)
                    .map_err(|e| format!("failed to read config {}: {e}", p.display()))?;
                serde_json::from_str(&raw)
                    .map_err(|e| format!("invalid config {}: {e}", p.display()))
            }
        }
    }

    pub fn template_bank(&self, flag: Option<&Path>) -> Result<TemplateBank, String> {
        match flag.or(self.templates.as_deref()) {
            Some(p) => TemplateBank::from_file(p).map_err(|e| e.to_string()),
            None => Ok(TemplateBank::bundled()),
        }
    }

    pub fn injection_bank(&self) -> Result<InjectionBank, String> {
        match self.injection_bank.as_deref() {
            Some(p) => InjectionBank::from_file(p).map_err(|e| e.to_string()),
            None => Ok(InjectionBank::bundled()),
        }
    }

    pub fn detector(&self) -> Result<PiiDetector, String> {
        let gazetteer = match self.gazetteer.as_deref() {
            Some(p) => srpg_core::load_gazetteer(p).map_err(|e| e.to_string())?,
            None => srpg_core::detector::bundled_gazetteer(),
        };
        let mut detector = PiiDetector::new(gazetteer, DetectionPolicy::strict());
        if let Some(units) = &self.unit_lexicon {
            detector = detector.with_units(UnitLexicon::new(units.clone()));
        }
        Ok(detector)
    }

    pub fn weights(&self, flag: Option<&Path>) -> Result<Weights, String> {
        if let Some(p) = flag {
            let raw = std::fs::read_to_string(p)
                .map_err(|e| format!("failed to read weights {}: {e}", p.display()))?;
            return serde_json::from_str(&raw)
                .map_err(|e| format!("invalid weights {}: {e}", p.display()));
        }
        Ok(self.weights.clone().unwrap_or_default())
    }

    pub fn prompt(&self) -> Result<PromptConfig, String> {
        match self.prompt_template.as_deref() {
            Some(p) => PromptConfig::from_file(p).map_err(|e| e.to_string()),
            None => Ok(PromptConfig::bundled()),
        }
    }

    pub fn mock_mode(&self) -> Result<MockMode, String> {
        match self.mock_mode.as_deref() {
            Some(raw) => raw.parse(),
            None => Ok(MockMode::Faithful),
        }
    }

    /// Assemble the full pipeline for a backend choice.
    pub fn pipeline(&self, backend: BackendKind) -> Result<GuardPipeline, String> {
        let detector = self.detector()?;
        let reconstructor = Reconstructor::new(detector.clone(), Default::default());
        let guard_config = self.guard.clone().unwrap_or_default();
        let reconstruction = match backend {
            BackendKind::Deterministic => ReconstructionBackend::Deterministic,
            BackendKind::Mock => ReconstructionBackend::Llm {
                backend: Arc::new(MockBackend::new(self.mock_mode()?)),
                prompt: self.prompt()?,
            },
            BackendKind::Http => {
                let config = self.llm.clone().unwrap_or_default();
                ReconstructionBackend::Llm {
                    backend: Arc::new(HttpBackend::new(config).map_err(|e| e.to_string())?),
                    prompt: self.prompt()?,
                }
            }
        };
        Ok(GuardPipeline::new(detector, reconstructor, reconstruction, guard_config))
    }

    pub fn gateway(&self) -> GatewayConfig {
        self.gateway.clone().unwrap_or_default()
    }
}
