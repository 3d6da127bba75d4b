//! Run configuration: domain defaults, a JSON file on top, flags on top of that.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use symwm_core::execute::ExecConfig;
use symwm_core::selection::{ObjectiveConfig, SelectionConfig};
use symwm_core::SamplerConfig;
use symwm_sim::DomainName;
use symwm_vlm::GatewayConfig;

use crate::pipeline::{NoiseConfig, PipelineConfig, ProposalConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: unsupported schema_version {found} (expected {CONFIG_SCHEMA_VERSION})")]
    SchemaVersion { path: String, found: u32 },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("{0}")]
    Io(String),
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

/// Where atom labels come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelerConfig {
    GroundTruth,
    /// Ground truth with each non-goal atom flipped with probability
    /// `flip_rate`; `seed` defaults to the run seed.
    Noisy {
        flip_rate: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Vlm {
        #[serde(default)]
        gateway: GatewayConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cache_dir: Option<PathBuf>,
        #[serde(default = "yes")]
        double_check: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub domain: String,
    pub seeds: Vec<u64>,
    pub n_demo: usize,
    pub j_thresh: f64,
    pub h_pre_frac: f64,
    pub h_data_frac: f64,
    pub objective: ObjectiveConfig,
    pub exec: ExecConfig,
    /// Test tasks per seed.
    pub n_tasks: usize,
    pub labeler: LabelerConfig,
    pub proposal: ProposalConfig,
    pub feature_grammar: bool,
    pub sampler: SamplerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
}

/// The file form: everything optional except the version.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    schema_version: u32,
    domain: Option<String>,
    seeds: Option<Vec<u64>>,
    n_demo: Option<usize>,
    j_thresh: Option<f64>,
    h_pre_frac: Option<f64>,
    h_data_frac: Option<f64>,
    objective: Option<ObjectiveConfig>,
    exec: Option<ExecConfig>,
    n_tasks: Option<usize>,
    labeler: Option<LabelerConfig>,
    proposal: Option<ProposalConfig>,
    feature_grammar: Option<bool>,
    sampler: Option<SamplerConfig>,
    dataset: Option<PathBuf>,
    output_dir: Option<PathBuf>,
}

/// Command-line overrides applied after the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub domain: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub n_demo: Option<usize>,
    pub j_thresh: Option<f64>,
    pub h_pre_frac: Option<f64>,
    pub h_data_frac: Option<f64>,
    pub n_tasks: Option<usize>,
    pub node_budget: Option<usize>,
    pub labeler: Option<LabelerConfig>,
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// The domain's standard hyperparameters with five seeds.
    pub fn for_domain(domain: DomainName) -> Self {
        let p = PipelineConfig::for_domain(domain, 0);
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            domain: domain.name().to_string(),
            seeds: (0..5).collect(),
            n_demo: p.n_demo,
            j_thresh: p.selection.j_thresh,
            h_pre_frac: p.selection.learn.h_pre_frac,
            h_data_frac: p.selection.learn.h_data_frac,
            objective: p.selection.objective,
            exec: ExecConfig::default(),
            n_tasks: 10,
            labeler: LabelerConfig::GroundTruth,
            proposal: p.proposal,
            feature_grammar: p.feature_grammar,
            sampler: p.sampler,
            dataset: None,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn domain(&self) -> Result<DomainName, ConfigError> {
        self.domain.parse().map_err(|e: symwm_sim::SimError| invalid("domain", e.to_string()))
    }

    /// Parses a config file's text; `path` is only used in messages.
    pub fn from_json(text: &str, path: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if file.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                path: path.to_string(),
                found: file.schema_version,
            });
        }
        let domain_name = file.domain.clone().unwrap_or_else(|| DomainName::MoreStacks.name().to_string());
        let domain: DomainName = domain_name
            .parse()
            .map_err(|e: symwm_sim::SimError| invalid("domain", e.to_string()))?;
        let mut c = Self::for_domain(domain);
        macro_rules! take {
            ($($f:ident),*) => {$(if let Some(v) = file.$f { c.$f = v; })*};
        }
        take!(seeds, n_demo, j_thresh, h_pre_frac, h_data_frac, objective, exec, n_tasks, labeler, proposal, feature_grammar, sampler, output_dir);
        c.dataset = file.dataset;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Applies overrides. A new domain resets the domain-dependent defaults
    /// unless they were overridden too.
    pub fn apply(mut self, o: &Overrides) -> Result<Self, ConfigError> {
        if let Some(d) = &o.domain {
            let domain: DomainName = d.parse().map_err(|e: symwm_sim::SimError| invalid("domain", e.to_string()))?;
            if domain.name() != self.domain {
                let fresh = Self::for_domain(domain);
                self.domain = fresh.domain;
                self.n_demo = fresh.n_demo;
                self.j_thresh = fresh.j_thresh;
                self.h_pre_frac = fresh.h_pre_frac;
                self.h_data_frac = fresh.h_data_frac;
                self.feature_grammar = fresh.feature_grammar;
            }
        }
        macro_rules! take {
            ($($f:ident),*) => {$(if let Some(v) = &o.$f { self.$f = v.clone(); })*};
        }
        take!(seeds, n_demo, j_thresh, h_pre_frac, h_data_frac, n_tasks, labeler, output_dir);
        if let Some(b) = o.node_budget {
            self.objective.node_budget = b;
            self.exec.node_budget = b;
        }
        if o.dataset.is_some() {
            self.dataset = o.dataset.clone();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.domain()?;
        let frac = |field: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(field, format!("{v} is outside [0, 1]")))
            }
        };
        frac("h_pre_frac", self.h_pre_frac)?;
        frac("h_data_frac", self.h_data_frac)?;
        if !self.j_thresh.is_finite() || self.j_thresh < 0.0 {
            return Err(invalid("j_thresh", format!("{} must be finite and non-negative", self.j_thresh)));
        }
        if self.n_demo == 0 && self.dataset.is_none() {
            return Err(invalid("n_demo", "at least one demonstration is needed"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "no seeds given"));
        }
        if self.objective.node_budget == 0 || self.exec.node_budget == 0 {
            return Err(invalid("node_budget", "must be positive"));
        }
        if !(self.sampler.sigma_min > 0.0) || self.sampler.k == 0 || self.sampler.max_attempts == 0 {
            return Err(invalid("sampler", "sigma_min, k and max_attempts must be positive"));
        }
        match &self.labeler {
            LabelerConfig::Noisy { flip_rate, .. } => frac("labeler.flip_rate", *flip_rate),
            LabelerConfig::Vlm { gateway, .. } => symwm_vlm::gateway::validate_endpoint(&gateway.base_url)
                .map_err(|e| invalid("labeler.gateway.base_url", e.to_string())),
            LabelerConfig::GroundTruth => Ok(()),
        }
    }

    /// Learning settings for one seed.
    pub fn pipeline(&self, seed: u64) -> PipelineConfig {
        let mut selection = SelectionConfig::default();
        selection.j_thresh = self.j_thresh;
        selection.learn.h_pre_frac = self.h_pre_frac;
        selection.learn.h_data_frac = self.h_data_frac;
        selection.objective = self.objective;
        let noise = match &self.labeler {
            LabelerConfig::Noisy { flip_rate, seed: s } => Some(NoiseConfig {
                flip_rate: *flip_rate,
                seed: s.unwrap_or(seed),
            }),
            _ => None,
        };
        PipelineConfig {
            n_demo: self.n_demo,
            seed,
            proposal: self.proposal,
            feature_grammar: self.feature_grammar,
            selection,
            noise,
            sampler: self.sampler,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}
