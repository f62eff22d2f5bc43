//! Typed, directed links between elements with a proposed / validated /
//! rejected lifecycle. Only one copy of each edge is stored; inverse
//! traversal is a query-time direction flag.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::{ElementId, Link, LinkId, LinkStatus, LinkType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Direction {
    #[default]
    Out,
    In,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NeighborFilter {
    #[serde(default)]
    pub link_types: Option<BTreeSet<LinkType>>,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub include_proposed: bool,
}

impl NeighborFilter {
    pub fn out(link_type: LinkType) -> Self {
        Self {
            link_types: Some([link_type].into()),
            direction: Direction::Out,
            include_proposed: false,
        }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_proposed(mut self, include: bool) -> Self {
        self.include_proposed = include;
        self
    }

    fn accepts(&self, link: &Link) -> bool {
        let status_ok = match link.status {
            LinkStatus::Validated => true,
            LinkStatus::Proposed => self.include_proposed,
            LinkStatus::Rejected => false,
        };
        status_ok
            && self
                .link_types
                .as_ref()
                .is_none_or(|types| types.contains(&link.link_type))
    }
}

/// A link together with the element on its other end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbor {
    pub link: Link,
    pub element: ElementId,
}

type EdgeKey = (ElementId, ElementId, LinkType);

#[derive(Debug, Clone, Default)]
pub struct LinkStore {
    links: BTreeMap<LinkId, Link>,
    outgoing: HashMap<ElementId, BTreeSet<LinkId>>,
    incoming: HashMap<ElementId, BTreeSet<LinkId>>,
    /// Proposed or Validated links by edge.
    active: HashMap<EdgeKey, LinkId>,
}

impl LinkStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn get(&self, id: &LinkId) -> Option<&Link> {
        self.links.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }

    /// The Proposed or Validated link for this edge, if any.
    pub fn active_link(
        &self,
        source: &ElementId,
        target: &ElementId,
        link_type: LinkType,
    ) -> Option<&LinkId> {
        self.active
            .get(&(source.clone(), target.clone(), link_type))
    }

    /// Inserts or replaces a link, keeping every derived index in step.
    pub(crate) fn put(&mut self, link: Link) {
        if let Some(old) = self.links.get(&link.id).cloned() {
            self.unindex(&old);
        }
        self.outgoing
            .entry(link.source.clone())
            .or_default()
            .insert(link.id.clone());
        self.incoming
            .entry(link.target.clone())
            .or_default()
            .insert(link.id.clone());
        if link.status != LinkStatus::Rejected {
            self.active.insert(
                (link.source.clone(), link.target.clone(), link.link_type),
                link.id.clone(),
            );
        }
        self.links.insert(link.id.clone(), link);
    }

    pub(crate) fn remove(&mut self, id: &LinkId) {
        if let Some(old) = self.links.remove(id) {
            self.unindex(&old);
        }
    }

    fn unindex(&mut self, link: &Link) {
        if let Some(set) = self.outgoing.get_mut(&link.source) {
            set.remove(&link.id);
        }
        if let Some(set) = self.incoming.get_mut(&link.target) {
            set.remove(&link.id);
        }
        let key = (link.source.clone(), link.target.clone(), link.link_type);
        if self.active.get(&key) == Some(&link.id) {
            self.active.remove(&key);
        }
    }

    /// Links touching `element` that pass `filter`, sorted by neighbor id then link id.
    pub fn neighbors(&self, element: &ElementId, filter: &NeighborFilter) -> Vec<Neighbor> {
        let mut out = Vec::new();
        let mut collect = |ids: Option<&BTreeSet<LinkId>>, outward: bool| {
            for id in ids.into_iter().flatten() {
                let link = &self.links[id];
                if filter.accepts(link) {
                    let other = if outward { &link.target } else { &link.source };
                    out.push(Neighbor {
                        link: link.clone(),
                        element: other.clone(),
                    });
                }
            }
        };
        if matches!(filter.direction, Direction::Out | Direction::Both) {
            collect(self.outgoing.get(element), true);
        }
        if matches!(filter.direction, Direction::In | Direction::Both) {
            collect(self.incoming.get(element), false);
        }
        out.sort_by(|a, b| {
            a.element
                .cmp(&b.element)
                .then_with(|| a.link.id.cmp(&b.link.id))
        });
        out
    }

    /// Targets of validated `link_type` links leaving `element`.
    pub fn validated_targets(
        &self,
        element: &ElementId,
        link_type: LinkType,
    ) -> BTreeSet<ElementId> {
        self.neighbors(element, &NeighborFilter::out(link_type))
            .into_iter()
            .map(|n| n.element)
            .collect()
    }

    /// Sources of validated `link_type` links entering `element`.
    pub fn validated_sources(
        &self,
        element: &ElementId,
        link_type: LinkType,
    ) -> BTreeSet<ElementId> {
        self.neighbors(
            element,
            &NeighborFilter::out(link_type).with_direction(Direction::In),
        )
        .into_iter()
        .map(|n| n.element)
        .collect()
    }
}

/// Analysis context of one technical fact, gathered over validated links only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaitDossier {
    pub fait: ElementId,
    pub equipment: Vec<ElementId>,
    pub activities: Vec<ElementId>,
    pub fundamentals: Vec<ElementId>,
    pub prior_advisories: Vec<ElementId>,
    pub pathologies: Vec<ElementId>,
    pub sources: Vec<ElementId>,
}

impl FaitDossier {
    pub fn all_ids(&self) -> impl Iterator<Item = &ElementId> {
        self.equipment
            .iter()
            .chain(&self.activities)
            .chain(&self.fundamentals)
            .chain(&self.prior_advisories)
            .chain(&self.pathologies)
            .chain(&self.sources)
    }
}

fn targets_of_all(
    store: &LinkStore,
    from: &BTreeSet<ElementId>,
    link_type: LinkType,
) -> BTreeSet<ElementId> {
    from.iter()
        .flat_map(|id| store.validated_targets(id, link_type))
        .collect()
}

/// Walks the fixed dossier paths from `fait`:
/// equipment via `concerns`, activities via `during`, fundamentals via the
/// equipment's `based_on`, advisories via `subject_of`, pathologies via the
/// advisories' `consolidated_in`, sources via `referenced_in` from the
/// advisories and pathologies.
pub fn assemble(store: &LinkStore, fait: &ElementId) -> FaitDossier {
    let equipment = store.validated_targets(fait, LinkType::Concerns);
    let activities = store.validated_targets(fait, LinkType::During);
    let fundamentals = targets_of_all(store, &equipment, LinkType::BasedOn);
    let advisories = store.validated_targets(fait, LinkType::SubjectOf);
    let pathologies = targets_of_all(store, &advisories, LinkType::ConsolidatedIn);
    let mut sources = targets_of_all(store, &advisories, LinkType::ReferencedIn);
    sources.extend(targets_of_all(store, &pathologies, LinkType::ReferencedIn));
    FaitDossier {
        fait: fait.clone(),
        equipment: equipment.into_iter().collect(),
        activities: activities.into_iter().collect(),
        fundamentals: fundamentals.into_iter().collect(),
        prior_advisories: advisories.into_iter().collect(),
        pathologies: pathologies.into_iter().collect(),
        sources: sources.into_iter().collect(),
    }
}
