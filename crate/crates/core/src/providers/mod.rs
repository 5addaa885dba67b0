//! External capability interfaces: morphology, masked LM, token encoder and
//! generator.
//!
//! Every kind speaks the same JSON wire protocol:
//!
//! | route       | request                                   | response                                   |
//! |-------------|-------------------------------------------|--------------------------------------------|
//! | `/analyze`  | `{"tokens":[..]}`                         | `{"analyses":[{diacritized,lemma,pos,number,glosses}]}` |
//! | `/mlm_topk` | `{"original":[..],"masked":[..],"k":n}`   | `{"candidates":[{surface,probability}]}`    |
//! | `/embed`    | `{"tokens":[..]}`                         | `{"vectors":[[..]]}`                        |
//! | `/generate` | `{"text":".."}`                           | `{"text":".."}`                             |
//!
//! A provider is reached either over HTTP or through a fixture file that
//! replays recorded request/response pairs (see [`FixtureChannel`]). All
//! response validation happens in the typed clients, so both transports are
//! held to the same protocol.

mod channel;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::evaluation::TokenEmbeddings;
use crate::substitution::MlmQuery;

pub use channel::{canonical_key, open_channel, Channel, FixtureChannel, HttpChannel, Route};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("provider `{provider_id}`: transport failure: {message}")]
    Transport { provider_id: String, message: String },
    #[error("provider `{provider_id}`: protocol violation: {message}")]
    Protocol { provider_id: String, message: String },
    #[error("provider `{provider_id}`: no fixture response for request {key}")]
    FixtureMiss { provider_id: String, key: String },
    #[error("provider `{provider_id}`: bad fixture file: {message}")]
    Fixture { provider_id: String, message: String },
    #[error("provider `{provider_id}`: invalid descriptor: {message}")]
    Descriptor { provider_id: String, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Morphology,
    Mlm,
    Encoder,
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Fixture,
    Http,
}

fn default_in_flight() -> usize {
    1
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_unk() -> String {
    "[UNK]".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub id: String,
    pub kind: ProviderKind,
    pub transport: TransportKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default, alias = "path")]
    pub fixture: Option<PathBuf>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub bearer_token: Option<String>,
    /// Literal the masked LM uses for unknown tokens.
    #[serde(default = "default_unk")]
    pub unk_token: String,
}

impl ProviderDescriptor {
    pub fn fixture(id: impl Into<String>, kind: ProviderKind, path: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            kind,
            transport: TransportKind::Fixture,
            endpoint: None,
            fixture: Some(path.into()),
            max_in_flight: 1,
            timeout_ms: default_timeout_ms(),
            bearer_token: None,
            unk_token: default_unk(),
        }
    }

    pub fn http(id: impl Into<String>, kind: ProviderKind, endpoint: impl Into<String>) -> Self {
        Self {
            transport: TransportKind::Http,
            endpoint: Some(endpoint.into()),
            fixture: None,
            ..Self::fixture(id, kind, "")
        }
    }

    /// Name of the environment variable overriding the endpoint:
    /// `PROVIDER_<ID>_URL` with the id upper-cased and non-alphanumerics
    /// replaced by `_`.
    pub fn endpoint_env_var(&self) -> String {
        let id: String = self
            .id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() {
                    c.to_ascii_uppercase()
                } else {
                    '_'
                }
            })
            .collect();
        format!("PROVIDER_{id}_URL")
    }

    pub fn resolved_endpoint(&self) -> Option<String> {
        std::env::var(self.endpoint_env_var())
            .ok()
            .filter(|s| !s.is_empty())
            .or_else(|| self.endpoint.clone())
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let fail = |message: String| {
            Err(ProviderError::Descriptor {
                provider_id: self.id.clone(),
                message,
            })
        };
        if self.max_in_flight == 0 {
            return fail("max_in_flight must be at least 1".into());
        }
        match self.transport {
            TransportKind::Fixture => match &self.fixture {
                Some(p) if p.is_file() => Ok(()),
                Some(p) => fail(format!("fixture file {} does not exist", p.display())),
                None => fail("fixture transport requires a fixture path".into()),
            },
            TransportKind::Http => {
                let Some(endpoint) = self.resolved_endpoint() else {
                    return fail("HTTP transport requires an endpoint".into());
                };
                match url::Url::parse(&endpoint) {
                    Ok(u) if matches!(u.scheme(), "http" | "https") && u.has_host() => Ok(()),
                    _ => fail(format!("endpoint `{endpoint}` is not an absolute http(s) URL")),
                }
            }
        }
    }

    fn expect_kind(&self, kind: ProviderKind) -> Result<(), ProviderError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(ProviderError::Descriptor {
                provider_id: self.id.clone(),
                message: format!("expected a {kind:?} provider, found {:?}", self.kind),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GramNumber {
    Singular,
    Dual,
    Plural,
    #[default]
    Unspecified,
}

impl GramNumber {
    /// `Unspecified` on either side matches anything.
    pub fn agrees_with(self, other: GramNumber) -> bool {
        self == other || self == GramNumber::Unspecified || other == GramNumber::Unspecified
    }

    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "singular" | "s" | "sg" => Some(GramNumber::Singular),
            "dual" | "d" | "du" => Some(GramNumber::Dual),
            "plural" | "p" | "pl" => Some(GramNumber::Plural),
            "unspecified" | "na" | "u" | "" => Some(GramNumber::Unspecified),
            _ => None,
        }
    }
}

/// Morphological features of one token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphAnalysis {
    pub diacritized: String,
    pub lemma: String,
    pub pos: String,
    pub number: GramNumber,
    pub glosses: Vec<String>,
}

impl MorphAnalysis {
    /// Record used for tokens the analyzer does not know.
    pub fn unknown() -> Self {
        Self {
            diacritized: String::new(),
            lemma: String::new(),
            pos: "UNK".into(),
            number: GramNumber::Unspecified,
            glosses: Vec::new(),
        }
    }

    fn from_wire(value: &Value) -> Result<Self, String> {
        let obj = value.as_object().ok_or("analysis is not an object")?;
        let string = |key: &str, default: &str| -> Result<String, String> {
            match obj.get(key) {
                None | Some(Value::Null) => Ok(default.to_string()),
                Some(Value::String(s)) => Ok(s.clone()),
                Some(other) => Err(format!("field `{key}` is not a string: {other}")),
            }
        };
        let number_raw = string("number", "unspecified")?;
        let number = GramNumber::parse(&number_raw)
            .ok_or_else(|| format!("unknown number feature `{number_raw}`"))?;
        let glosses = match obj.get("glosses") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|g| g.as_str().map(str::to_string).ok_or("gloss is not a string"))
                .collect::<Result<_, _>>()?,
            Some(_) => return Err("field `glosses` is not an array".into()),
        };
        let pos = string("pos", "UNK")?;
        Ok(Self {
            diacritized: string("diacritized", "")?,
            lemma: string("lemma", "")?,
            pos: if pos.is_empty() { "UNK".into() } else { pos },
            number,
            glosses,
        })
    }
}

/// One masked-LM prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmRow {
    pub surface: String,
    pub probability: f64,
}

/// Output of a generator. `incomplete` is set when the model produced no
/// text, as a hint for manual error labeling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    pub incomplete: bool,
}

pub trait MorphologyProvider: Send + Sync {
    fn id(&self) -> &str;
    /// One record per input token, in order.
    fn analyze(&self, tokens: &[String]) -> Result<Vec<MorphAnalysis>, ProviderError>;
}

pub trait MaskedLmProvider: Send + Sync {
    fn id(&self) -> &str;
    fn unknown_token(&self) -> &str {
        "[UNK]"
    }
    /// At most `k` rows, probabilities in `[0, 1]` and non-increasing.
    fn top_k(&self, query: &MlmQuery, k: usize) -> Result<Vec<MlmRow>, ProviderError>;
}

pub trait EncoderProvider: Send + Sync {
    fn id(&self) -> &str;
    fn embed_tokens(&self, tokens: &[String]) -> Result<TokenEmbeddings, ProviderError>;
}

pub trait GeneratorProvider: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, text: &str) -> Result<Generation, ProviderError>;
}

fn protocol(id: &str, message: impl Into<String>) -> ProviderError {
    ProviderError::Protocol {
        provider_id: id.to_string(),
        message: message.into(),
    }
}

fn field<'a>(id: &str, value: &'a Value, key: &str) -> Result<&'a Vec<Value>, ProviderError> {
    value
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| protocol(id, format!("response lacks array `{key}`")))
}

/// Checks masked-LM rows: at most `k`, finite probabilities in `[0, 1]`,
/// non-increasing.
pub fn validate_mlm_rows(id: &str, rows: &[MlmRow], k: usize) -> Result<(), ProviderError> {
    if rows.len() > k {
        return Err(protocol(id, format!("{} rows returned for k={k}", rows.len())));
    }
    for row in rows {
        if !row.probability.is_finite() || !(0.0..=1.0).contains(&row.probability) {
            return Err(protocol(
                id,
                format!("probability {} of `{}` outside [0, 1]", row.probability, row.surface),
            ));
        }
    }
    if let Some(w) = rows.windows(2).find(|w| w[1].probability > w[0].probability) {
        return Err(protocol(
            id,
            format!(
                "probabilities increase from {} to {}",
                w[0].probability, w[1].probability
            ),
        ));
    }
    Ok(())
}

/// Checks one vector per token with a shared dimension and finite entries.
pub fn validate_matrix(id: &str, matrix: &[Vec<f64>], tokens: usize) -> Result<(), ProviderError> {
    if matrix.len() != tokens {
        return Err(protocol(
            id,
            format!("{} vectors returned for {tokens} tokens", matrix.len()),
        ));
    }
    if let Some(first) = matrix.first() {
        if let Some(bad) = matrix.iter().find(|v| v.len() != first.len()) {
            return Err(protocol(
                id,
                format!("ragged vectors of dimension {} and {}", first.len(), bad.len()),
            ));
        }
    }
    if matrix.iter().flatten().any(|x| !x.is_finite()) {
        return Err(protocol(id, "non-finite vector component"));
    }
    Ok(())
}

pub struct MorphologyClient {
    desc: ProviderDescriptor,
    channel: Box<dyn Channel>,
}

impl MorphologyClient {
    pub fn open(desc: ProviderDescriptor) -> Result<Self, ProviderError> {
        desc.expect_kind(ProviderKind::Morphology)?;
        let channel = open_channel(&desc)?;
        Ok(Self { desc, channel })
    }

    pub fn with_channel(desc: ProviderDescriptor, channel: Box<dyn Channel>) -> Self {
        Self { desc, channel }
    }

    fn request(&self, tokens: &[String]) -> Result<Vec<MorphAnalysis>, ProviderError> {
        let response = self.channel.call(Route::Analyze, &json!({ "tokens": tokens }))?;
        let id = &self.desc.id;
        let analyses: Vec<MorphAnalysis> = field(id, &response, "analyses")?
            .iter()
            .map(|a| MorphAnalysis::from_wire(a).map_err(|m| protocol(id, m)))
            .collect::<Result<_, _>>()?;
        if analyses.len() != tokens.len() {
            return Err(protocol(
                id,
                format!("{} analyses returned for {} tokens", analyses.len(), tokens.len()),
            ));
        }
        Ok(analyses)
    }
}

impl MorphologyProvider for MorphologyClient {
    fn id(&self) -> &str {
        &self.desc.id
    }

    /// Fixture files may record whole sentences or single words; a sentence
    /// miss falls back to per-word lookups, and words missing from the
    /// fixture get [`MorphAnalysis::unknown`].
    fn analyze(&self, tokens: &[String]) -> Result<Vec<MorphAnalysis>, ProviderError> {
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        match self.request(tokens) {
            Err(ProviderError::FixtureMiss { .. }) => tokens
                .iter()
                .map(|t| match self.request(std::slice::from_ref(t)) {
                    Ok(mut one) => Ok(one.remove(0)),
                    Err(ProviderError::FixtureMiss { .. }) => Ok(MorphAnalysis::unknown()),
                    Err(e) => Err(e),
                })
                .collect(),
            other => other,
        }
    }
}

pub struct MlmClient {
    desc: ProviderDescriptor,
    channel: Box<dyn Channel>,
}

impl MlmClient {
    pub fn open(desc: ProviderDescriptor) -> Result<Self, ProviderError> {
        desc.expect_kind(ProviderKind::Mlm)?;
        let channel = open_channel(&desc)?;
        Ok(Self { desc, channel })
    }

    pub fn with_channel(desc: ProviderDescriptor, channel: Box<dyn Channel>) -> Self {
        Self { desc, channel }
    }
}

impl MaskedLmProvider for MlmClient {
    fn id(&self) -> &str {
        &self.desc.id
    }

    fn unknown_token(&self) -> &str {
        &self.desc.unk_token
    }

    fn top_k(&self, query: &MlmQuery, k: usize) -> Result<Vec<MlmRow>, ProviderError> {
        if k == 0 {
            return Err(ProviderError::Argument("k must be at least 1".into()));
        }
        let request = json!({ "original": query.original, "masked": query.masked, "k": k });
        let response = self.channel.call(Route::MlmTopK, &request)?;
        let id = &self.desc.id;
        let rows: Vec<MlmRow> = field(id, &response, "candidates")?
            .iter()
            .map(|row| {
                let surface = row.get("surface").and_then(Value::as_str);
                let probability = row.get("probability").and_then(Value::as_f64);
                match (surface, probability) {
                    (Some(s), Some(p)) => Ok(MlmRow {
                        surface: s.to_string(),
                        probability: p,
                    }),
                    _ => Err(protocol(id, format!("malformed candidate row {row}"))),
                }
            })
            .collect::<Result<_, _>>()?;
        validate_mlm_rows(id, &rows, k)?;
        Ok(rows)
    }
}

pub struct EncoderClient {
    desc: ProviderDescriptor,
    channel: Box<dyn Channel>,
}

impl EncoderClient {
    pub fn open(desc: ProviderDescriptor) -> Result<Self, ProviderError> {
        desc.expect_kind(ProviderKind::Encoder)?;
        let channel = open_channel(&desc)?;
        Ok(Self { desc, channel })
    }

    pub fn with_channel(desc: ProviderDescriptor, channel: Box<dyn Channel>) -> Self {
        Self { desc, channel }
    }
}

impl EncoderProvider for EncoderClient {
    fn id(&self) -> &str {
        &self.desc.id
    }

    fn embed_tokens(&self, tokens: &[String]) -> Result<TokenEmbeddings, ProviderError> {
        if tokens.is_empty() {
            return Ok(TokenEmbeddings::new(Vec::new()));
        }
        let response = self.channel.call(Route::Embed, &json!({ "tokens": tokens }))?;
        let id = &self.desc.id;
        let matrix: Vec<Vec<f64>> = field(id, &response, "vectors")?
            .iter()
            .map(|v| {
                v.as_array()
                    .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
                    .ok_or_else(|| protocol(id, "vector is not an array of numbers"))
            })
            .collect::<Result<_, _>>()?;
        validate_matrix(id, &matrix, tokens.len())?;
        Ok(TokenEmbeddings::new(matrix))
    }
}

pub struct GeneratorClient {
    desc: ProviderDescriptor,
    channel: Box<dyn Channel>,
}

impl GeneratorClient {
    pub fn open(desc: ProviderDescriptor) -> Result<Self, ProviderError> {
        desc.expect_kind(ProviderKind::Generator)?;
        let channel = open_channel(&desc)?;
        Ok(Self { desc, channel })
    }

    pub fn with_channel(desc: ProviderDescriptor, channel: Box<dyn Channel>) -> Self {
        Self { desc, channel }
    }
}

impl GeneratorProvider for GeneratorClient {
    fn id(&self) -> &str {
        &self.desc.id
    }

    fn generate(&self, text: &str) -> Result<Generation, ProviderError> {
        let response = self.channel.call(Route::Generate, &json!({ "text": text }))?;
        let generated = response
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| protocol(&self.desc.id, "response lacks string `text`"))?;
        Ok(Generation {
            incomplete: generated.trim().is_empty(),
            text: generated.to_string(),
        })
    }
}
