//! Domain types shared by every module: identifiers, the closed element
//! type system, actors and roles, knowledge elements and links.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{KbError, Result};

pub type Timestamp = DateTime<Utc>;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a knowledge element.
    ElementId
);
string_id!(
    /// Identifier of an ontology item.
    ItemId
);
string_id!(
    /// Identifier of a link.
    LinkId
);
string_id!(
    /// Identifier of an actor.
    ActorId
);

/// The seven element models. The set is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementType {
    Fondamental,
    ActiviteProcessus,
    FicheTechnique,
    SourceDocumentaire,
    RexPathologie,
    FaitTechnique,
    AvisConcepteur,
}

impl ElementType {
    pub const ALL: [ElementType; 7] = [
        ElementType::Fondamental,
        ElementType::ActiviteProcessus,
        ElementType::FicheTechnique,
        ElementType::SourceDocumentaire,
        ElementType::RexPathologie,
        ElementType::FaitTechnique,
        ElementType::AvisConcepteur,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementType::Fondamental => "Fondamental",
            ElementType::ActiviteProcessus => "ActiviteProcessus",
            ElementType::FicheTechnique => "FicheTechnique",
            ElementType::SourceDocumentaire => "SourceDocumentaire",
            ElementType::RexPathologie => "RexPathologie",
            ElementType::FaitTechnique => "FaitTechnique",
            ElementType::AvisConcepteur => "AvisConcepteur",
        }
    }

    /// Section names an element of this type may carry, in display order.
    pub fn template(self) -> &'static [&'static str] {
        match self {
            ElementType::Fondamental => &["Principe", "Références"],
            ElementType::ActiviteProcessus => &["Description", "Entrées", "Sorties"],
            ElementType::FicheTechnique => &["Description", "Caractéristiques"],
            ElementType::SourceDocumentaire => &["Référence externe", "Résumé"],
            ElementType::RexPathologie => &["État de l'art", "Synthèse"],
            ElementType::FaitTechnique => &["Description événement", "Contexte", "Criticité"],
            ElementType::AvisConcepteur => &["Diagnostic", "Prescription"],
        }
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ElementType {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self> {
        ElementType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| KbError::InvalidArgument(format!("unknown element type '{s}'")))
    }
}

/// Typed, directed relation between two elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkType {
    Concerns,
    During,
    BasedOn,
    SubjectOf,
    ConsolidatedIn,
    ReferencedIn,
}

impl LinkType {
    pub const ALL: [LinkType; 6] = [
        LinkType::Concerns,
        LinkType::During,
        LinkType::BasedOn,
        LinkType::SubjectOf,
        LinkType::ConsolidatedIn,
        LinkType::ReferencedIn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkType::Concerns => "concerns",
            LinkType::During => "during",
            LinkType::BasedOn => "based_on",
            LinkType::SubjectOf => "subject_of",
            LinkType::ConsolidatedIn => "consolidated_in",
            LinkType::ReferencedIn => "referenced_in",
        }
    }
}

impl fmt::Display for LinkType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkType {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self> {
        LinkType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| KbError::InvalidArgument(format!("unknown link type '{s}'")))
    }
}

/// Actor roles, ordered from least to most privileged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Reader,
    Specialist,
    Expert,
    Admin,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Reader, Role::Specialist, Role::Expert, Role::Admin];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Read,
    Write,
    Validate,
    Admin,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Read, Action::Write, Action::Validate, Action::Admin];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContentStatus {
    Draft,
    Validated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub body: String,
}

impl Section {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            body: body.into(),
        }
    }
}

/// Checks `sections` against the template of `element_type` and returns them
/// in template order. Unknown or repeated section names are rejected; template
/// sections may be left out.
pub fn normalize_sections(
    element_type: ElementType,
    sections: Vec<Section>,
) -> Result<Vec<Section>> {
    let template = element_type.template();
    let mut slots: Vec<Option<Section>> = vec![None; template.len()];
    for section in sections {
        let Some(pos) = template.iter().position(|name| *name == section.name) else {
            return Err(KbError::TemplateViolation {
                element_type,
                message: format!("unexpected section '{}'", section.name),
            });
        };
        if slots[pos].is_some() {
            return Err(KbError::TemplateViolation {
                element_type,
                message: format!("section '{}' given twice", section.name),
            });
        }
        slots[pos] = Some(section);
    }
    Ok(slots.into_iter().flatten().collect())
}

/// A typed knowledge fiche.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeElement {
    pub id: ElementId,
    pub element_type: ElementType,
    pub title: String,
    pub sections: Vec<Section>,
    pub tags: BTreeSet<ItemId>,
    pub content_status: ContentStatus,
    pub author: ActorId,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    #[serde(default)]
    pub validated_by: Option<ActorId>,
    #[serde(default)]
    pub validated_at: Option<Timestamp>,
}

impl KnowledgeElement {
    /// Text fed to the similarity index: the title followed by every section body.
    pub fn indexed_text(&self) -> String {
        let mut text = self.title.clone();
        for section in &self.sections {
            text.push('\n');
            text.push_str(&section.body);
        }
        text
    }
}

/// Input for creating an element.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDraft {
    pub title: String,
    #[serde(default)]
    pub sections: Vec<Section>,
    #[serde(default)]
    pub tags: BTreeSet<ItemId>,
}

impl ElementDraft {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn section(mut self, name: impl Into<String>, body: impl Into<String>) -> Self {
        self.sections.push(Section::new(name, body));
        self
    }

    pub fn tag(mut self, item: impl Into<ItemId>) -> Self {
        self.tags.insert(item.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyItem {
    pub id: ItemId,
    pub label: String,
    pub parent: Option<ItemId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkStatus {
    Proposed,
    Validated,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkDecision {
    Validate,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub source: ElementId,
    pub target: ElementId,
    pub link_type: LinkType,
    pub status: LinkStatus,
    pub proposer: ActorId,
    pub validator: Option<ActorId>,
    pub decided_at: Option<Timestamp>,
}

impl Link {
    /// Validated/Rejected links carry a validator and decision time; proposed ones carry neither.
    pub fn audit_consistent(&self) -> bool {
        match self.status {
            LinkStatus::Proposed => self.validator.is_none() && self.decided_at.is_none(),
            LinkStatus::Validated | LinkStatus::Rejected => {
                self.validator.is_some() && self.decided_at.is_some()
            }
        }
    }
}
