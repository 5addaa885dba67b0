//! TOML run configuration. Command-line flags win over file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lexsimp_core::providers::{ProviderDescriptor, ProviderKind, TransportKind};
use lexsimp_core::CefrLevel;
use serde::Deserialize;

use crate::Cli;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pairs: Option<PathBuf>,
    pub alignments: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub simplified: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub generative: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub split_fraction: Option<f64>,
    pub k: Option<usize>,
    pub cefr_threshold: Option<String>,
    pub cefr_default: Option<String>,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub require_gloss: bool,
    pub variant: Option<String>,
    #[serde(default)]
    pub providers: Providers,
    #[serde(default)]
    pub encoders: Vec<toml::Table>,
    #[serde(skip)]
    base: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    pub morphology: Option<toml::Table>,
    pub mlm: Option<toml::Table>,
}

/// An encoder with the baseline used to rescale its scores (0 leaves them raw).
#[derive(Debug, Clone)]
pub struct EncoderEntry {
    pub descriptor: ProviderDescriptor,
    pub baseline: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    /// Resolves a path from the file against the config directory.
    pub fn path(&self, value: &Option<PathBuf>) -> Option<PathBuf> {
        value.as_ref().map(|p| self.base.join(p))
    }

    pub fn level(&self, value: &Option<String>, key: &str) -> anyhow::Result<Option<CefrLevel>> {
        value
            .as_deref()
            .map(|s| s.parse().with_context(|| format!("config key `{key}`")))
            .transpose()
    }

    pub fn morphology(&self) -> anyhow::Result<Option<ProviderDescriptor>> {
        self.providers
            .morphology
            .as_ref()
            .map(|t| self.descriptor(t.clone(), "morphology", ProviderKind::Morphology))
            .transpose()
    }

    pub fn mlm(&self) -> anyhow::Result<Option<ProviderDescriptor>> {
        self.providers
            .mlm
            .as_ref()
            .map(|t| self.descriptor(t.clone(), "mlm", ProviderKind::Mlm))
            .transpose()
    }

    pub fn encoders(&self) -> anyhow::Result<Vec<EncoderEntry>> {
        self.encoders
            .iter()
            .enumerate()
            .map(|(i, table)| {
                let mut table = table.clone();
                let baseline = match table.remove("baseline") {
                    None => 0.0,
                    Some(toml::Value::Float(b)) => b,
                    Some(toml::Value::Integer(b)) => b as f64,
                    Some(other) => bail!("encoder {}: baseline must be a number, got {other}", i + 1),
                };
                let descriptor = self.descriptor(table, &format!("encoder-{}", i + 1), ProviderKind::Encoder)?;
                Ok(EncoderEntry { descriptor, baseline })
            })
            .collect()
    }

    /// Fills in `id` and `kind` when omitted and resolves a relative fixture path.
    fn descriptor(&self, mut table: toml::Table, default_id: &str, kind: ProviderKind) -> anyhow::Result<ProviderDescriptor> {
        table
            .entry("id")
            .or_insert_with(|| toml::Value::String(default_id.to_string()));
        let kind_name = serde_json::to_value(kind)?.as_str().unwrap_or_default().to_string();
        table.entry("kind").or_insert(toml::Value::String(kind_name));
        let mut desc: ProviderDescriptor = toml::Value::Table(table)
            .try_into()
            .with_context(|| format!("provider `{default_id}`"))?;
        if desc.kind != kind {
            bail!("provider `{}` is configured as {:?}, expected {kind:?}", desc.id, desc.kind);
        }
        if desc.transport == TransportKind::Fixture {
            desc.fixture = desc.fixture.map(|p| self.base.join(p));
        }
        Ok(desc)
    }
}

/// Options shared by every subcommand after merging flags over the file.
#[derive(Debug, Clone)]
pub struct Global {
    pub jobs: usize,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
}

impl Global {
    pub fn resolve(cli: &Cli, config: &RunConfig) -> Self {
        Self {
            jobs: cli.jobs.or(config.jobs).unwrap_or(1).max(1),
            seed: cli.seed.or(config.seed),
            output_dir: cli
                .output_dir
                .clone()
                .or_else(|| config.path(&config.output_dir))
                .unwrap_or_else(|| PathBuf::from(".")),
        }
    }
}

/// Flag value if given, else the config value resolved against its directory.
pub fn pick_path(flag: &Option<PathBuf>, config: &RunConfig, value: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    match flag.clone().or_else(|| config.path(value)) {
        Some(p) => Ok(p),
        None => bail!("no {what} given (flag or config)"),
    }
}
