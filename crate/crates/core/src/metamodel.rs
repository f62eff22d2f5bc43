//! Meta-model schema (allowed link triples) and the role matrix, both loaded
//! once from a declarative TOML file and immutable afterwards.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

use crate::error::{KbError, Result};
use crate::model::{Action, Decision, ElementType, LinkType, Role};

pub const DEFAULT_METAMODEL: &str = include_str!("../config/metamodel.toml");

pub type Triple = (ElementType, LinkType, ElementType);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaModelSchema {
    triples: BTreeSet<Triple>,
}

impl MetaModelSchema {
    pub fn new(triples: impl IntoIterator<Item = Triple>) -> Self {
        Self {
            triples: triples.into_iter().collect(),
        }
    }

    pub fn link_type_allowed(
        &self,
        source_type: ElementType,
        link_type: LinkType,
        target_type: ElementType,
    ) -> bool {
        self.triples
            .contains(&(source_type, link_type, target_type))
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    /// Allowed (link_type, target_type) pairs leaving `source_type`.
    pub fn outgoing(
        &self,
        source_type: ElementType,
    ) -> impl Iterator<Item = (LinkType, ElementType)> + '_ {
        self.triples
            .iter()
            .filter(move |(s, _, _)| *s == source_type)
            .map(|(_, l, t)| (*l, *t))
    }
}

/// Free function form of [`MetaModelSchema::link_type_allowed`].
pub fn link_type_allowed(
    schema: &MetaModelSchema,
    source_type: ElementType,
    link_type: LinkType,
    target_type: ElementType,
) -> bool {
    schema.link_type_allowed(source_type, link_type, target_type)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleMatrix {
    grants: HashMap<(Role, Action), BTreeSet<ElementType>>,
}

impl RoleMatrix {
    pub fn decide(&self, role: Role, action: Action, element_type: ElementType) -> Decision {
        match self.grants.get(&(role, action)) {
            Some(types) if types.contains(&element_type) => Decision::Allow,
            _ => Decision::Deny,
        }
    }

    pub fn allows(&self, role: Role, action: Action, element_type: ElementType) -> bool {
        self.decide(role, action, element_type) == Decision::Allow
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaModel {
    pub schema: MetaModelSchema,
    pub roles: RoleMatrix,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTriple {
    source: String,
    link: String,
    target: String,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrants {
    #[serde(default)]
    read: Vec<String>,
    #[serde(default)]
    write: Vec<String>,
    #[serde(default)]
    validate: Vec<String>,
    #[serde(default)]
    admin: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetaModel {
    schema: Vec<RawTriple>,
    roles: BTreeMap<String, RawGrants>,
}

fn parse_types(list: &[String]) -> Result<BTreeSet<ElementType>> {
    let mut out = BTreeSet::new();
    for entry in list {
        if entry == "*" {
            out.extend(ElementType::ALL);
        } else {
            out.insert(
                entry
                    .parse()
                    .map_err(|e: KbError| KbError::Config(e.to_string()))?,
            );
        }
    }
    Ok(out)
}

impl MetaModel {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawMetaModel =
            toml::from_str(text).map_err(|e| KbError::Config(format!("metamodel: {e}")))?;
        let mut triples = BTreeSet::new();
        for t in &raw.schema {
            let conv = |e: KbError| KbError::Config(e.to_string());
            triples.insert((
                t.source.parse().map_err(conv)?,
                t.link.parse().map_err(conv)?,
                t.target.parse().map_err(conv)?,
            ));
        }
        let mut grants = HashMap::new();
        for (name, g) in &raw.roles {
            let role = match name.as_str() {
                "Reader" => Role::Reader,
                "Specialist" => Role::Specialist,
                "Expert" => Role::Expert,
                "Admin" => Role::Admin,
                other => return Err(KbError::Config(format!("unknown role '{other}'"))),
            };
            grants.insert((role, Action::Read), parse_types(&g.read)?);
            grants.insert((role, Action::Write), parse_types(&g.write)?);
            grants.insert((role, Action::Validate), parse_types(&g.validate)?);
            grants.insert((role, Action::Admin), parse_types(&g.admin)?);
        }
        Ok(MetaModel {
            schema: MetaModelSchema { triples },
            roles: RoleMatrix { grants },
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KbError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

impl Default for MetaModel {
    fn default() -> Self {
        MetaModel::from_toml(DEFAULT_METAMODEL).expect("shipped metamodel parses")
    }
}
