use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::remote::RemoteConfig;
use super::SourceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Pseudo,
    RemoteHttp,
    MeasurementFile,
    Pool,
    Mock,
}

impl SourceKind {
    fn allowed_params(self) -> &'static [&'static str] {
        match self {
            SourceKind::Pseudo => &["seed"],
            SourceKind::Mock => &["seed", "p", "extract"],
            SourceKind::RemoteHttp => &[
                "endpoint",
                "max_words",
                "retries",
                "backoff_ms",
                "api_key_header",
                "extract",
            ],
            SourceKind::MeasurementFile => &["path", "extract"],
            SourceKind::Pool => &["path"],
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Pseudo => "pseudo",
            SourceKind::RemoteHttp => "remote-http",
            SourceKind::MeasurementFile => "measurement-file",
            SourceKind::Pool => "pool",
            SourceKind::Mock => "mock",
        })
    }
}

impl FromStr for SourceKind {
    type Err = SourceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pseudo" => Ok(SourceKind::Pseudo),
            "remote-http" | "remote" => Ok(SourceKind::RemoteHttp),
            "measurement-file" | "file" => Ok(SourceKind::MeasurementFile),
            "pool" => Ok(SourceKind::Pool),
            "mock" => Ok(SourceKind::Mock),
            other => Err(SourceError::InvalidDescriptor(format!("unknown source kind {other:?}"))),
        }
    }
}

/// Identity, kind and configuration of a uniform-randomness provider.
///
/// | kind               | params                                                        |
/// |--------------------|---------------------------------------------------------------|
/// | `pseudo`           | `seed`                                                        |
/// | `mock`             | `seed`, `p` (probability of a 1), `extract`                   |
/// | `remote-http`      | `endpoint`, `max_words`, `retries`, `backoff_ms`, `api_key_header`, `extract` |
/// | `measurement-file` | `path`, `extract`                                             |
/// | `pool`             | `path`                                                        |
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSourceDescriptor {
    pub id: String,
    pub kind: SourceKind,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl RandomSourceDescriptor {
    pub fn new<I, K, V>(id: impl Into<String>, kind: SourceKind, params: I) -> Result<Self, SourceError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let descriptor = Self {
            id: id.into(),
            kind,
            params: params.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        };
        descriptor.validate()?;
        Ok(descriptor)
    }

    pub fn pseudo(id: impl Into<String>, seed: u64) -> Self {
        Self::new(id, SourceKind::Pseudo, [("seed", seed.to_string())]).expect("pseudo descriptor is always valid")
    }

    pub fn pool(id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        let path = path.into().to_string_lossy().into_owned();
        Self::new(id, SourceKind::Pool, [("path", path)]).expect("pool descriptor is always valid")
    }

    pub fn mock(id: impl Into<String>, seed: u64, p: f64) -> Result<Self, SourceError> {
        Self::new(id, SourceKind::Mock, [("seed", seed.to_string()), ("p", p.to_string())])
    }

    /// Parses `kind:key=value,key=value`; the whole text becomes the id.
    pub fn parse_inline(text: &str) -> Result<Self, SourceError> {
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        let kind: SourceKind = kind.trim().parse()?;
        let mut params = BTreeMap::new();
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| SourceError::InvalidDescriptor(format!("expected key=value, got {pair:?}")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::new(text, kind, params)
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if self.id.trim().is_empty() {
            return Err(SourceError::InvalidDescriptor("id must not be empty".into()));
        }
        let allowed = self.kind.allowed_params();
        if let Some(unknown) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(SourceError::InvalidDescriptor(format!(
                "parameter {unknown:?} is not valid for {} sources",
                self.kind
            )));
        }
        self.seed()?;
        self.extract()?;
        match self.kind {
            SourceKind::Mock => {
                self.bias()?;
            }
            SourceKind::RemoteHttp => {
                self.remote_config()?;
            }
            SourceKind::MeasurementFile | SourceKind::Pool => {
                self.path()?;
            }
            SourceKind::Pseudo => {}
        }
        Ok(())
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, SourceError> {
        self.params
            .get(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|_| SourceError::InvalidDescriptor(format!("cannot parse {key}={raw:?}")))
            })
            .transpose()
    }

    pub fn seed(&self) -> Result<u64, SourceError> {
        Ok(self.parsed("seed")?.unwrap_or(0))
    }

    /// Probability of a 1 bit for mock sources.
    pub fn bias(&self) -> Result<f64, SourceError> {
        let p: f64 = self.parsed("p")?.unwrap_or(0.5);
        if !(0.0..=1.0).contains(&p) {
            return Err(SourceError::BiasOutOfRange(p));
        }
        Ok(p)
    }

    pub fn extract(&self) -> Result<bool, SourceError> {
        Ok(self.parsed("extract")?.unwrap_or(false))
    }

    pub fn path(&self) -> Result<PathBuf, SourceError> {
        self.params
            .get("path")
            .filter(|p| !p.is_empty())
            .map(PathBuf::from)
            .ok_or_else(|| SourceError::InvalidDescriptor(format!("{} source needs a path", self.kind)))
    }

    pub fn remote_config(&self) -> Result<RemoteConfig, SourceError> {
        let endpoint = self
            .params
            .get("endpoint")
            .filter(|e| e.starts_with("http://") || e.starts_with("https://"))
            .ok_or_else(|| SourceError::InvalidDescriptor("remote-http source needs an http(s) endpoint".into()))?
            .clone();
        let defaults = RemoteConfig::new(endpoint);
        let max_words: usize = self.parsed("max_words")?.unwrap_or(defaults.max_words);
        if max_words == 0 {
            return Err(SourceError::InvalidDescriptor("max_words must be positive".into()));
        }
        Ok(RemoteConfig {
            max_words,
            retries: self.parsed("retries")?.unwrap_or(defaults.retries),
            backoff: self
                .parsed("backoff_ms")?
                .map(Duration::from_millis)
                .unwrap_or(defaults.backoff),
            api_key_header: self
                .params
                .get("api_key_header")
                .cloned()
                .unwrap_or(defaults.api_key_header),
            ..defaults
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_parse() {
        let d = RandomSourceDescriptor::parse_inline("mock:seed=3,p=0.6,extract=true").unwrap();
        assert_eq!(d.kind, SourceKind::Mock);
        assert_eq!(d.seed().unwrap(), 3);
        assert_eq!(d.bias().unwrap(), 0.6);
        assert!(d.extract().unwrap());
        assert_eq!(d.id, "mock:seed=3,p=0.6,extract=true");
    }

    #[test]
    fn bias_out_of_range_rejected() {
        let err = RandomSourceDescriptor::mock("m", 1, 1.5).unwrap_err();
        assert!(matches!(err, SourceError::BiasOutOfRange(p) if p == 1.5));
    }

    #[test]
    fn unknown_param_rejected() {
        let err = RandomSourceDescriptor::parse_inline("pseudo:p=0.5").unwrap_err();
        assert!(matches!(err, SourceError::InvalidDescriptor(_)));
    }

    #[test]
    fn remote_needs_endpoint() {
        assert!(RandomSourceDescriptor::parse_inline("remote-http:max_words=10").is_err());
        let d =
            RandomSourceDescriptor::parse_inline("remote-http:endpoint=https://example.org/api,max_words=100").unwrap();
        let cfg = d.remote_config().unwrap();
        assert_eq!(cfg.max_words, 100);
        assert_eq!(cfg.retries, 3);
        assert_eq!(cfg.backoff, Duration::from_millis(500));
    }

    #[test]
    fn json_round_trip() {
        let d = RandomSourceDescriptor::pseudo("p", 9);
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains("\"kind\":\"pseudo\""));
        let back: RandomSourceDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }
}
