//! Run configuration and manifests.
//!
//! A run config is a TOML document:
//!
//! ```toml
//! seed = 1
//!
//! [simulation]          # simulate only
//! n = 6
//! timepoints = 8
//! reporters_per_component = 4
//! replicates = 3
//! alpha = 0.1
//! beta = 0.1
//! lambda_true = 0.5
//! initial_flip_fraction = 0.1
//!
//! [sampler]
//! iterations = 12000
//! burn_in = 2000
//! proposal_sd = 0.65
//! lambda_init = 0.5
//! init = "greedy"       # or "empty"
//! snapshot_every = 100
//! chains = 20
//! cutoff = 0.5
//!
//! [data]
//! dataset = "noisy.txt"
//! mode = "binary"
//! attachments = "attachments.csv"
//! traces = ["trace_0.csv", "trace_1.csv"]
//! expected = "expected.txt"
//! truth = "truth.txt"
//!
//! [diagnostics]
//! coverage = 0.95
//! window = 1000
//! stride = 500
//! ```
//!
//! Every command writes a manifest: the fully resolved config plus a
//! `[provenance]` table. A manifest is itself a valid config (provenance is
//! ignored on input), so re-running from it reproduces the run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sampler::{Initialization, SamplerConfig};
use crate::simulator::SimConfig;
use crate::transition::Smoothness;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Binary,
    Probability,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Binary => "binary",
            Mode::Probability => "probability",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    #[default]
    Greedy,
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal_sd: f64,
    pub lambda_init: f64,
    pub init: InitKind,
    pub snapshot_every: usize,
    pub chains: usize,
    pub cutoff: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        SamplerSection {
            iterations: s.iterations,
            burn_in: s.burn_in,
            proposal_sd: s.proposal_sd,
            lambda_init: s.lambda_init,
            init: InitKind::Greedy,
            snapshot_every: s.snapshot_every,
            chains: 20,
            cutoff: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attachments: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub coverage: f64,
    /// Running `√R̂` window; defaults to 10% of the retained samples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    /// Defaults to half the window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            coverage: 0.95,
            window: None,
            stride: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub outputs: Vec<String>,
    /// SHA-256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<toml::Value>,
}

fn default_seed() -> u64 {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: default_seed(),
            simulation: None,
            sampler: SamplerSection::default(),
            data: DataSection::default(),
            diagnostics: DiagnosticsSection::default(),
            provenance: None,
        }
    }
}

/// A config problem tied to a `[section] key`, located in the source text
/// when there is one.
struct FieldError {
    section: &'static str,
    key: &'static str,
    message: String,
}

fn field_err(section: &'static str, key: &'static str, message: impl Into<String>) -> FieldError {
    FieldError {
        section,
        key,
        message: message.into(),
    }
}

/// 1-based line of `key = …` inside `[section]` (`""` for the top level).
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header_line = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    /// Parses a config or manifest. Syntax and type errors carry the line
    /// reported by the TOML parser.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().trim().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = crate::io::read_text(path)?;
        Ok((RunConfig::parse(path, &text)?, text))
    }

    /// Checks value ranges. `source` is the text the config was parsed
    /// from, used to point at the offending line; keys listed in
    /// `overridden` came from the command line and get no line.
    pub fn validate(&self, source: Option<(&Path, &str)>, overridden: &[&str]) -> Result<()> {
        let Err(fe) = self.check() else {
            return Ok(());
        };
        let qualified = if fe.section.is_empty() {
            fe.key.to_string()
        } else {
            format!("{}.{}", fe.section, fe.key)
        };
        let from_flag = overridden.contains(&qualified.as_str());
        let (path, line) = match source {
            Some((p, text)) if !from_flag => (p.to_path_buf(), locate(text, fe.section, fe.key)),
            Some((p, _)) => (p.to_path_buf(), None),
            None => (Path::new("<command line>").to_path_buf(), None),
        };
        Err(Error::Config {
            path,
            line,
            message: format!("{qualified}: {}", fe.message),
        })
    }

    fn check(&self) -> std::result::Result<(), FieldError> {
        if let Some(sim) = &self.simulation {
            let sec = "simulation";
            if !(2..=crate::graph::MAX_COMPONENTS).contains(&sim.n) {
                return Err(field_err(sec, "n", format!("must lie in 2..=64, got {}", sim.n)));
            }
            for (key, v) in [
                ("timepoints", sim.timepoints),
                ("reporters_per_component", sim.reporters_per_component),
                ("replicates", sim.replicates),
            ] {
                if v == 0 {
                    return Err(field_err(sec, key, "must be at least 1"));
                }
            }
            for (key, v) in [("alpha", sim.alpha), ("beta", sim.beta)] {
                if !(0.0..1.0).contains(&v) {
                    return Err(field_err(sec, key, format!("must lie in [0, 1), got {v}")));
                }
            }
            if !(sim.lambda_true > 0.0 && sim.lambda_true < 1.0) {
                return Err(field_err(
                    sec,
                    "lambda_true",
                    format!("must lie in (0, 1), got {}", sim.lambda_true),
                ));
            }
            if !(sim.initial_flip_fraction > 0.0 && sim.initial_flip_fraction <= 1.0) {
                return Err(field_err(
                    sec,
                    "initial_flip_fraction",
                    format!("must lie in (0, 1], got {}", sim.initial_flip_fraction),
                ));
            }
        }
        let s = &self.sampler;
        let sec = "sampler";
        if s.iterations == 0 {
            return Err(field_err(sec, "iterations", "must be positive"));
        }
        if s.burn_in >= s.iterations {
            return Err(field_err(
                sec,
                "burn_in",
                format!("must be smaller than iterations ({}), got {}", s.iterations, s.burn_in),
            ));
        }
        if !(s.proposal_sd > 0.0 && s.proposal_sd.is_finite()) {
            return Err(field_err(
                sec,
                "proposal_sd",
                format!("must be positive, got {}", s.proposal_sd),
            ));
        }
        if Smoothness::from_lambda(s.lambda_init).is_err() {
            return Err(field_err(
                sec,
                "lambda_init",
                format!("must lie in (0, 1), got {}", s.lambda_init),
            ));
        }
        if s.chains == 0 {
            return Err(field_err(sec, "chains", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&s.cutoff) {
            return Err(field_err(
                sec,
                "cutoff",
                format!("must lie in [0, 1], got {}", s.cutoff),
            ));
        }
        let d = &self.diagnostics;
        if !(d.coverage > 0.0 && d.coverage < 1.0) {
            return Err(field_err(
                "diagnostics",
                "coverage",
                format!("must lie in (0, 1), got {}", d.coverage),
            ));
        }
        if d.window.is_some_and(|w| w < 2) {
            return Err(field_err("diagnostics", "window", "must be at least 2"));
        }
        if d.stride == Some(0) {
            return Err(field_err("diagnostics", "stride", "must be positive"));
        }
        Ok(())
    }

    /// Config without provenance, serialised in a fixed field order.
    pub fn canonical(&self) -> Result<String> {
        let mut c = self.clone();
        c.provenance = None;
        toml::to_string(&c).map_err(|e| Error::invalid(format!("cannot serialise config: {e}")))
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.canonical()?.as_bytes()))
    }

    pub fn simulation_config(&self) -> Option<SimConfig> {
        self.simulation.clone().map(|s| SimConfig { seed: self.seed, ..s })
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let s = &self.sampler;
        SamplerConfig {
            iterations: s.iterations,
            burn_in: s.burn_in,
            proposal_sd: s.proposal_sd,
            seed: self.seed,
            init: match s.init {
                InitKind::Greedy => Initialization::GreedyNem,
                InitKind::Empty => Initialization::Empty,
            },
            lambda_init: s.lambda_init,
            snapshot_every: s.snapshot_every,
        }
    }

    /// The manifest document: resolved config plus provenance.
    pub fn manifest(&self, command: &str, outputs: Vec<String>, inputs: BTreeMap<String, String>) -> Result<String> {
        let prov = Provenance {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config_hash: self.hash()?,
            outputs,
            inputs,
        };
        #[derive(Serialize)]
        struct Wrapper<'a> {
            provenance: &'a Provenance,
        }
        let mut doc = self.canonical()?;
        let table = toml::to_string(&Wrapper { provenance: &prov })
            .map_err(|e| Error::invalid(format!("cannot serialise provenance: {e}")))?;
        doc.push('\n');
        doc.push_str(&table);
        Ok(doc)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
