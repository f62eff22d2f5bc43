//! Service configuration, read from TOML.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! tokens = "tokens.toml"          # required
//! schema = "metamodel.toml"       # optional, built-in default otherwise
//! stopwords = "stopwords_fr.txt"  # optional, built-in default otherwise
//! data_dir = "data"               # optional; enables snapshots
//! snapshot_interval_secs = 300
//!
//! [weights]
//! text = 0.6
//! tag = 0.3
//! prior = 0.1
//!
//! [[priors]]
//! source = "FaitTechnique"
//! link_type = "concerns"
//! target = "FicheTechnique"
//! prior = 0.9
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::HashMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use rexkb_core::suggest::SuggesterConfig;
use rexkb_core::{
    Actor, ActorId, ElementType, EngineConfig, LinkType, MetaModel, Role, Stopwords, Weights,
};

pub const SNAPSHOT_FILE: &str = "kb.snapshot";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_bind")]
    bind: SocketAddr,
    tokens: PathBuf,
    schema: Option<PathBuf>,
    stopwords: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    #[serde(default = "default_interval")]
    snapshot_interval_secs: u64,
    #[serde(default)]
    weights: Option<Weights>,
    #[serde(default)]
    priors: Vec<RawPrior>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    source: ElementType,
    link_type: LinkType,
    target: ElementType,
    prior: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTokens {
    #[serde(default)]
    token: Vec<TokenEntry>,
}

/// One bearer token and the actor it authenticates.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenEntry {
    pub token: String,
    pub id: String,
    pub name: String,
    pub role: Role,
}

fn default_bind() -> SocketAddr {
    "127.0.0.1:8080".parse().unwrap()
}

fn default_interval() -> u64 {
    300
}

/// Bearer token → actor.
#[derive(Debug, Clone, Default)]
pub struct TokenMap {
    by_token: HashMap<String, ActorId>,
    actors: Vec<Actor>,
}

impl TokenMap {
    pub fn new(entries: impl IntoIterator<Item = TokenEntry>) -> anyhow::Result<Self> {
        let mut map = Self::default();
        for e in entries {
            if e.token.trim().is_empty() {
                bail!("empty token for actor {}", e.id);
            }
            if map
                .by_token
                .insert(e.token.clone(), e.id.as_str().into())
                .is_some()
            {
                bail!("token for actor {} is not unique", e.id);
            }
            map.actors.push(Actor {
                id: e.id.into(),
                name: e.name,
                role: e.role,
            });
        }
        Ok(map)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let raw: RawTokens = toml::from_str(text).context("invalid token file")?;
        Self::new(raw.token)
    }

    pub fn actor_for(&self, token: &str) -> Option<&ActorId> {
        self.by_token.get(token)
    }

    pub fn actors(&self) -> &[Actor] {
        &self.actors
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub engine: EngineConfig,
    pub tokens: TokenMap,
    pub data_dir: Option<PathBuf>,
    pub snapshot_interval_secs: u64,
}

impl ServerConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> anyhow::Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };

        let tokens_path = resolve(&raw.tokens);
        let tokens = TokenMap::parse(
            &fs::read_to_string(&tokens_path)
                .with_context(|| format!("reading token file {}", tokens_path.display()))?,
        )?;
        let metamodel = match &raw.schema {
            Some(p) => MetaModel::load(&resolve(p))?,
            None => MetaModel::default(),
        };
        let stopwords = match &raw.stopwords {
            Some(p) => Stopwords::load(&resolve(p))?,
            None => Stopwords::default(),
        };
        let mut suggester = SuggesterConfig::default();
        if let Some(w) = raw.weights {
            suggester.weights = w;
        }
        for p in raw.priors {
            if !metamodel
                .schema
                .link_type_allowed(p.source, p.link_type, p.target)
            {
                bail!(
                    "prior given for a triple outside the schema: {} {} {}",
                    p.source,
                    p.link_type,
                    p.target
                );
            }
            suggester
                .priors
                .insert((p.source, p.link_type, p.target), p.prior);
        }
        suggester.validate()?;
        Ok(Self {
            bind: raw.bind,
            engine: EngineConfig {
                metamodel,
                stopwords,
                suggester,
            },
            tokens,
            data_dir: raw.data_dir.map(|p| resolve(&p)),
            snapshot_interval_secs: raw.snapshot_interval_secs,
        })
    }

    pub fn snapshot_path(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join(SNAPSHOT_FILE))
    }
}
