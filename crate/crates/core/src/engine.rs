//! Knowledge-base engine: owns the committed state and serializes every
//! mutation through a single-writer commit point.
//!
//! Mutations run inside a [`Txn`] that records an undo entry for each change.
//! If an operation fails part-way, the undo log is replayed in reverse so
//! readers never see a partial element, link, index update or workflow move.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::audit::{AuditEvent, Clock};
use crate::error::{KbError, Result};
use crate::index::{Hit, SimIndex};
use crate::links::{self, FaitDossier, LinkStore, Neighbor, NeighborFilter};
use crate::metamodel::MetaModel;
use crate::model::{
    normalize_sections, Action, Actor, ActorId, ContentStatus, Decision, ElementDraft, ElementId,
    ElementType, ItemId, KnowledgeElement, Link, LinkDecision, LinkId, LinkStatus, LinkType,
    OntologyItem, Role, Timestamp,
};
use crate::ontology::Ontology;
use crate::suggest::{self, SuggesterConfig, Suggestion, Weights};
use crate::text::{Stopwords, Tokenizer};
use crate::workflow::{
    FaitState, HistoryEntry, SimilarEvent, TimeWindow, TransferMetrics, WorkflowState,
};

/// Number of similar events recorded when an analysis starts.
pub const ANALYSIS_SNAPSHOT_K: usize = 10;

#[derive(Debug, Clone, Default)]
pub struct EngineConfig {
    pub metamodel: MetaModel,
    pub stopwords: Stopwords,
    pub suggester: SuggesterConfig,
}

/// Committed knowledge-base content.
#[derive(Debug)]
pub struct KbState {
    pub(crate) ontology: Ontology,
    pub(crate) elements: BTreeMap<ElementId, KnowledgeElement>,
    pub(crate) by_type: HashMap<ElementType, BTreeSet<ElementId>>,
    pub(crate) links: LinkStore,
    pub(crate) workflow: BTreeMap<ElementId, FaitState>,
    pub(crate) index: SimIndex,
    pub(crate) audit: Vec<AuditEvent>,
    pub(crate) next_id: u64,
}

impl KbState {
    pub(crate) fn new(tokenizer: Arc<Tokenizer>) -> Self {
        Self {
            ontology: Ontology::new(),
            elements: BTreeMap::new(),
            by_type: HashMap::new(),
            links: LinkStore::new(),
            workflow: BTreeMap::new(),
            index: SimIndex::new(tokenizer),
            audit: Vec::new(),
            next_id: 1,
        }
    }

    pub fn element(&self, id: &ElementId) -> Option<&KnowledgeElement> {
        self.elements.get(id)
    }

    pub fn elements(&self) -> impl Iterator<Item = &KnowledgeElement> {
        self.elements.values()
    }

    pub fn ids_of_type(&self, t: ElementType) -> impl Iterator<Item = &ElementId> {
        self.by_type.get(&t).into_iter().flatten()
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn links(&self) -> &LinkStore {
        &self.links
    }

    pub fn index(&self) -> &SimIndex {
        &self.index
    }

    pub fn workflow_states(&self) -> impl Iterator<Item = &FaitState> {
        self.workflow.values()
    }

    pub fn fait_state(&self, fait: &ElementId) -> Option<&FaitState> {
        self.workflow.get(fait)
    }

    pub fn audit_log(&self) -> &[AuditEvent] {
        &self.audit
    }

    fn require_element(&self, id: &ElementId) -> Result<&KnowledgeElement> {
        self.elements
            .get(id)
            .ok_or_else(|| KbError::not_found("element", id.as_str()))
    }

    fn require_type(&self, id: &ElementId, expected: ElementType) -> Result<&KnowledgeElement> {
        let el = self.require_element(id)?;
        if el.element_type != expected {
            return Err(KbError::WrongType {
                id: id.to_string(),
                expected: expected.to_string(),
                actual: el.element_type,
            });
        }
        Ok(el)
    }

    fn fresh_id(&mut self, prefix: &str, taken: impl Fn(&Self, &str) -> bool) -> String {
        loop {
            let candidate = format!("{prefix}-{:06}", self.next_id);
            self.next_id += 1;
            if !taken(self, &candidate) {
                return candidate;
            }
        }
    }

    pub(crate) fn new_element_id(&mut self) -> ElementId {
        ElementId(self.fresh_id("el", |s, id| s.elements.contains_key(&ElementId::from(id))))
    }

    pub(crate) fn new_item_id(&mut self) -> ItemId {
        ItemId(self.fresh_id("ont", |s, id| s.ontology.contains(&ItemId::from(id))))
    }

    pub(crate) fn new_link_id(&mut self) -> LinkId {
        LinkId(self.fresh_id("lnk", |s, id| s.links.get(&LinkId::from(id)).is_some()))
    }

    /// Similar past facts for `fait`, excluding itself, each with its
    /// validated advisories.
    pub fn similar_events(&self, fait: &ElementId, k: usize) -> Result<Vec<SimilarEvent>> {
        let el = self.require_type(fait, ElementType::FaitTechnique)?;
        if k == 0 {
            return Err(KbError::InvalidArgument("k must be at least 1".into()));
        }
        let only_faits: BTreeSet<_> = [ElementType::FaitTechnique].into();
        let hits = self
            .index
            .query(&el.indexed_text(), k + 1, Some(&only_faits))?;
        Ok(hits
            .into_iter()
            .filter(|h| &h.doc_id != fait)
            .take(k)
            .map(|h| SimilarEvent {
                advisories: self
                    .links
                    .validated_targets(&h.doc_id, LinkType::SubjectOf)
                    .into_iter()
                    .collect(),
                fait: h.doc_id,
                score: h.score,
            })
            .collect())
    }

    pub fn dossier(&self, fait: &ElementId) -> Result<FaitDossier> {
        self.require_type(fait, ElementType::FaitTechnique)?;
        Ok(links::assemble(&self.links, fait))
    }

    pub fn stats(&self) -> KbStats {
        let mut stats = KbStats::default();
        for t in ElementType::ALL {
            stats
                .elements
                .insert(t, self.by_type.get(&t).map_or(0, |s| s.len()));
        }
        for status in ["Proposed", "Validated", "Rejected"] {
            stats.links.insert(status.to_string(), 0);
        }
        for link in self.links.iter() {
            *stats.links.entry(format!("{:?}", link.status)).or_default() += 1;
        }
        for s in WorkflowState::ALL {
            stats.workflow.insert(s, 0);
        }
        for st in self.workflow.values() {
            *stats.workflow.entry(st.state).or_default() += 1;
        }
        stats.ontology_items = self.ontology.len();
        stats
    }
}

/// Counts per element type, link status and workflow state.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KbStats {
    pub elements: BTreeMap<ElementType, usize>,
    pub links: BTreeMap<String, usize>,
    pub workflow: BTreeMap<WorkflowState, usize>,
    pub ontology_items: usize,
}

enum Undo {
    Element(ElementId, Option<KnowledgeElement>),
    Item(ItemId),
    Link(LinkId, Option<Link>),
    Workflow(ElementId, Option<FaitState>),
    AuditLen(usize),
}

/// A write transaction over [`KbState`].
pub(crate) struct Txn<'a> {
    pub(crate) st: &'a mut KbState,
    clock: &'a Clock,
    undo: Vec<Undo>,
    steps: usize,
    fail_at: Option<usize>,
}

impl<'a> Txn<'a> {
    fn new(st: &'a mut KbState, clock: &'a Clock, fail_at: Option<usize>) -> Self {
        Self {
            st,
            clock,
            undo: Vec::new(),
            steps: 0,
            fail_at,
        }
    }

    pub(crate) fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn step(&mut self) -> Result<()> {
        if self.fail_at == Some(self.steps) {
            return Err(KbError::InjectedFault(self.steps));
        }
        self.steps += 1;
        Ok(())
    }

    /// Stores an element and keeps the similarity index in step with it.
    pub(crate) fn put_element(&mut self, el: KnowledgeElement) -> Result<()> {
        self.step()?;
        let prev = self.st.elements.get(&el.id).cloned();
        let text_changed = prev
            .as_ref()
            .is_none_or(|p| p.indexed_text() != el.indexed_text());
        if text_changed {
            self.st
                .index
                .upsert_document(el.id.clone(), el.element_type, &el.indexed_text());
        }
        self.st
            .by_type
            .entry(el.element_type)
            .or_default()
            .insert(el.id.clone());
        self.undo.push(Undo::Element(el.id.clone(), prev));
        self.st.elements.insert(el.id.clone(), el);
        Ok(())
    }

    pub(crate) fn put_item(&mut self, item: OntologyItem) -> Result<()> {
        self.step()?;
        let id = item.id.clone();
        self.st.ontology.insert(item)?;
        self.undo.push(Undo::Item(id));
        Ok(())
    }

    pub(crate) fn put_link(&mut self, link: Link) -> Result<()> {
        self.step()?;
        let prev = self.st.links.get(&link.id).cloned();
        self.undo.push(Undo::Link(link.id.clone(), prev));
        self.st.links.put(link);
        Ok(())
    }

    pub(crate) fn put_workflow(&mut self, state: FaitState) -> Result<()> {
        self.step()?;
        let prev = self.st.workflow.get(&state.fait).cloned();
        self.undo.push(Undo::Workflow(state.fait.clone(), prev));
        self.st.workflow.insert(state.fait.clone(), state);
        Ok(())
    }

    pub(crate) fn audit(
        &mut self,
        actor: &ActorId,
        operation: &str,
        ids: Vec<String>,
        enrichment: u32,
        absorption: u32,
    ) {
        self.undo.push(Undo::AuditLen(self.st.audit.len()));
        let seq = self.st.audit.last().map_or(1, |e| e.seq + 1);
        let at = self.now();
        self.st.audit.push(AuditEvent {
            seq,
            at,
            actor: actor.clone(),
            operation: operation.to_string(),
            ids,
            enrichment,
            absorption,
        });
    }

    fn rollback(self) {
        let st = self.st;
        for undo in self.undo.into_iter().rev() {
            match undo {
                Undo::Element(id, prev) => {
                    let current = st.elements.remove(&id);
                    match prev {
                        Some(old) => {
                            if current
                                .as_ref()
                                .is_none_or(|c| c.indexed_text() != old.indexed_text())
                            {
                                st.index.upsert_document(
                                    id.clone(),
                                    old.element_type,
                                    &old.indexed_text(),
                                );
                            }
                            st.elements.insert(id, old);
                        }
                        None => {
                            if let Some(c) = current {
                                if let Some(set) = st.by_type.get_mut(&c.element_type) {
                                    set.remove(&id);
                                }
                            }
                            let _ = st.index.remove_document(&id);
                        }
                    }
                }
                Undo::Item(id) => st.ontology.remove(&id),
                Undo::Link(id, prev) => match prev {
                    Some(old) => st.links.put(old),
                    None => st.links.remove(&id),
                },
                Undo::Workflow(id, prev) => match prev {
                    Some(old) => {
                        st.workflow.insert(id, old);
                    }
                    None => {
                        st.workflow.remove(&id);
                    }
                },
                Undo::AuditLen(len) => st.audit.truncate(len),
            }
        }
    }
}

/// Where consolidated advisories go.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathologieTarget {
    Existing(ElementId),
    New(ElementDraft),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consolidation {
    pub pathologie: KnowledgeElement,
    pub links: Vec<Link>,
    pub faits: Vec<FaitState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvisIssued {
    pub avis: KnowledgeElement,
    pub link: Link,
    pub fait: FaitState,
}

pub struct Engine {
    config: EngineConfig,
    tokenizer: Arc<Tokenizer>,
    actors: RwLock<BTreeMap<ActorId, Actor>>,
    pub(crate) state: RwLock<KbState>,
    /// Timestamps of element and dossier reads.
    pub(crate) reads: Mutex<Vec<Timestamp>>,
    pub(crate) clock: Clock,
    fault: Mutex<Option<usize>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").finish_non_exhaustive()
    }
}

impl Default for Engine {
    fn default() -> Self {
        Self::new(EngineConfig::default())
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Self::with_clock(config, Clock::system())
    }

    pub fn with_clock(config: EngineConfig, clock: Clock) -> Self {
        let tokenizer = Arc::new(Tokenizer::new(config.stopwords.clone()));
        Self {
            state: RwLock::new(KbState::new(tokenizer.clone())),
            tokenizer,
            config,
            actors: RwLock::new(BTreeMap::new()),
            reads: Mutex::new(Vec::new()),
            clock,
            fault: Mutex::new(None),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &Arc<Tokenizer> {
        &self.tokenizer
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Runs `f` against the committed state under a read lock.
    pub fn with_state<T>(&self, f: impl FnOnce(&KbState) -> T) -> T {
        f(&self.state.read())
    }

    pub(crate) fn write<T>(&self, op: impl FnOnce(&mut Txn<'_>) -> Result<T>) -> Result<T> {
        let mut guard = self.state.write();
        let fail_at = self.fault.lock().take();
        let mut txn = Txn::new(&mut guard, &self.clock, fail_at);
        match op(&mut txn) {
            Ok(value) => Ok(value),
            Err(err) => {
                txn.rollback();
                Err(err)
            }
        }
    }

    /// Makes the next write transaction fail with `InjectedFault` once it has
    /// performed `steps` mutations. Testing hook for atomicity checks.
    #[doc(hidden)]
    pub fn arm_fault(&self, steps: usize) {
        *self.fault.lock() = Some(steps);
    }

    #[doc(hidden)]
    pub fn disarm_fault(&self) {
        self.fault.lock().take();
    }

    // ---- actors and access ----

    pub fn register_actor(&self, actor: Actor) {
        self.actors.write().insert(actor.id.clone(), actor);
    }

    pub fn actor(&self, id: &ActorId) -> Result<Actor> {
        self.actors
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| KbError::UnknownActor(id.to_string()))
    }

    pub fn actors(&self) -> Vec<Actor> {
        self.actors.read().values().cloned().collect()
    }

    /// Pure role-matrix decision for `actor`.
    pub fn check_access(
        &self,
        actor: &ActorId,
        action: Action,
        element_type: ElementType,
    ) -> Result<Decision> {
        let actor = self.actor(actor)?;
        Ok(self
            .config
            .metamodel
            .roles
            .decide(actor.role, action, element_type))
    }

    fn require_access(
        &self,
        actor: &ActorId,
        action: Action,
        element_type: ElementType,
    ) -> Result<Actor> {
        let a = self.actor(actor)?;
        if self
            .config
            .metamodel
            .roles
            .allows(a.role, action, element_type)
        {
            Ok(a)
        } else {
            Err(KbError::PermissionDenied(format!(
                "{} ({}) may not {:?} {}",
                a.id, a.role, action, element_type
            )))
        }
    }

    fn require_role(&self, actor: &ActorId, min: Role, what: &str) -> Result<Actor> {
        let a = self.actor(actor)?;
        if a.role >= min {
            Ok(a)
        } else {
            Err(KbError::PermissionDenied(format!(
                "{} ({}) may not {what}; requires {min} or above",
                a.id, a.role
            )))
        }
    }

    pub fn require_admin(&self, actor: &ActorId) -> Result<Actor> {
        let a = self.actor(actor)?;
        if ElementType::ALL.iter().all(|t| {
            self.config
                .metamodel
                .roles
                .allows(a.role, Action::Admin, *t)
        }) {
            Ok(a)
        } else {
            Err(KbError::PermissionDenied(format!(
                "{} ({}) is not an administrator",
                a.id, a.role
            )))
        }
    }

    pub fn link_type_allowed(
        &self,
        source: ElementType,
        link_type: LinkType,
        target: ElementType,
    ) -> bool {
        self.config
            .metamodel
            .schema
            .link_type_allowed(source, link_type, target)
    }

    // ---- elements ----

    fn build_element(
        &self,
        st: &mut KbState,
        author: &ActorId,
        element_type: ElementType,
        draft: ElementDraft,
        now: Timestamp,
    ) -> Result<KnowledgeElement> {
        if draft.title.trim().is_empty() {
            return Err(KbError::EmptyTitle);
        }
        let sections = normalize_sections(element_type, draft.sections)?;
        if let Some(tag) = draft.tags.iter().find(|t| !st.ontology.contains(t)) {
            return Err(KbError::UnknownTag(tag.to_string()));
        }
        Ok(KnowledgeElement {
            id: st.new_element_id(),
            element_type,
            title: draft.title,
            sections,
            tags: draft.tags,
            content_status: ContentStatus::Draft,
            author: author.clone(),
            created_at: now,
            updated_at: now,
            validated_by: None,
            validated_at: None,
        })
    }

    pub fn create_element(
        &self,
        actor: &ActorId,
        element_type: ElementType,
        draft: ElementDraft,
    ) -> Result<KnowledgeElement> {
        self.require_access(actor, Action::Write, element_type)?;
        self.write(|txn| {
            let now = txn.now();
            let el = self.build_element(txn.st, actor, element_type, draft, now)?;
            txn.put_element(el.clone())?;
            txn.audit(actor, "create_element", vec![el.id.to_string()], 0, 0);
            Ok(el)
        })
    }

    /// Element lookup that does not count as a knowledge transmission.
    pub fn element(&self, id: &ElementId) -> Result<KnowledgeElement> {
        self.with_state(|st| st.require_element(id).cloned())
    }

    /// Element lookup on behalf of a user; counted as a transmission.
    pub fn read_element(&self, id: &ElementId) -> Result<KnowledgeElement> {
        let el = self.element(id)?;
        self.record_read();
        Ok(el)
    }

    fn record_read(&self) {
        let at = self.clock.now();
        self.reads.lock().push(at);
    }

    pub fn validate_element(&self, actor: &ActorId, id: &ElementId) -> Result<KnowledgeElement> {
        self.actor(actor)?;
        let element_type = self.element(id)?.element_type;
        self.require_access(actor, Action::Validate, element_type)?;
        self.write(|txn| {
            let mut el = txn.st.require_element(id)?.clone();
            if el.content_status == ContentStatus::Validated {
                return Err(KbError::AlreadyValidated(id.to_string()));
            }
            let now = txn.now();
            el.content_status = ContentStatus::Validated;
            el.validated_by = Some(actor.clone());
            el.validated_at = Some(now);
            el.updated_at = now.max(el.updated_at);
            txn.put_element(el.clone())?;
            txn.audit(actor, "validate_element", vec![id.to_string()], 1, 0);
            Ok(el)
        })
    }

    // ---- ontology ----

    pub fn add_ontology_item(
        &self,
        actor: &ActorId,
        label: &str,
        parent: Option<ItemId>,
    ) -> Result<OntologyItem> {
        self.require_role(actor, Role::Expert, "edit the ontology")?;
        self.write(|txn| {
            let item = OntologyItem {
                id: txn.st.new_item_id(),
                label: label.to_string(),
                parent,
            };
            txn.st.ontology.check_insert(&item)?;
            txn.put_item(item.clone())?;
            txn.audit(actor, "add_ontology_item", vec![item.id.to_string()], 0, 0);
            Ok(item)
        })
    }

    pub fn ontology_item(&self, id: &ItemId) -> Result<OntologyItem> {
        self.with_state(|st| {
            st.ontology
                .get(id)
                .cloned()
                .ok_or_else(|| KbError::not_found("ontology item", id.as_str()))
        })
    }

    pub fn ontology_ancestors(&self, id: &ItemId) -> Result<Vec<ItemId>> {
        self.with_state(|st| st.ontology.ancestors(id))
    }

    // ---- links ----

    pub fn propose_link(
        &self,
        actor: &ActorId,
        source: &ElementId,
        target: &ElementId,
        link_type: LinkType,
    ) -> Result<Link> {
        self.actor(actor)?;
        self.write(|txn| {
            let src_type = txn.st.require_element(source)?.element_type;
            let tgt_type = txn.st.require_element(target)?.element_type;
            self.require_access(actor, Action::Write, src_type)?;
            if !self.link_type_allowed(src_type, link_type, tgt_type) {
                return Err(KbError::SchemaViolation {
                    source_type: src_type,
                    link_type,
                    target_type: tgt_type,
                });
            }
            if txn
                .st
                .links
                .active_link(source, target, link_type)
                .is_some()
            {
                return Err(KbError::DuplicateLink {
                    source_id: source.to_string(),
                    target_id: target.to_string(),
                    link_type,
                });
            }
            let absorbed = txn
                .st
                .workflow
                .get(source)
                .filter(|s| s.state == WorkflowState::UnderAnalysis)
                .and_then(|s| s.similar_snapshot())
                .is_some_and(|snap| {
                    snap.iter()
                        .any(|ev| &ev.fait == target || ev.advisories.contains(target))
                });
            let link = Link {
                id: txn.st.new_link_id(),
                source: source.clone(),
                target: target.clone(),
                link_type,
                status: LinkStatus::Proposed,
                proposer: actor.clone(),
                validator: None,
                decided_at: None,
            };
            txn.put_link(link.clone())?;
            txn.audit(
                actor,
                "propose_link",
                vec![link.id.to_string(), source.to_string(), target.to_string()],
                0,
                u32::from(absorbed),
            );
            Ok(link)
        })
    }

    pub fn link(&self, id: &LinkId) -> Result<Link> {
        self.with_state(|st| {
            st.links
                .get(id)
                .cloned()
                .ok_or_else(|| KbError::not_found("link", id.as_str()))
        })
    }

    pub fn decide_link(
        &self,
        actor: &ActorId,
        id: &LinkId,
        decision: LinkDecision,
    ) -> Result<Link> {
        self.actor(actor)?;
        self.write(|txn| {
            let mut link = txn
                .st
                .links
                .get(id)
                .cloned()
                .ok_or_else(|| KbError::not_found("link", id.as_str()))?;
            let src_type = txn.st.require_element(&link.source)?.element_type;
            self.require_access(actor, Action::Validate, src_type)?;
            if link.status != LinkStatus::Proposed {
                return Err(KbError::AlreadyDecided(id.to_string()));
            }
            link.status = match decision {
                LinkDecision::Validate => LinkStatus::Validated,
                LinkDecision::Reject => LinkStatus::Rejected,
            };
            link.validator = Some(actor.clone());
            link.decided_at = Some(txn.now());
            txn.put_link(link.clone())?;
            let enrichment = u32::from(decision == LinkDecision::Validate);
            txn.audit(actor, "decide_link", vec![id.to_string()], enrichment, 0);
            Ok(link)
        })
    }

    pub fn neighbors(&self, element: &ElementId, filter: &NeighborFilter) -> Result<Vec<Neighbor>> {
        self.with_state(|st| {
            st.require_element(element)?;
            Ok(st.links.neighbors(element, filter))
        })
    }

    /// Dossier read on behalf of a user; counted as a transmission.
    pub fn assemble_dossier(&self, fait: &ElementId) -> Result<FaitDossier> {
        let dossier = self.with_state(|st| st.dossier(fait))?;
        self.record_read();
        Ok(dossier)
    }

    // ---- retrieval ----

    pub fn search(
        &self,
        text: &str,
        k: usize,
        type_filter: Option<&BTreeSet<ElementType>>,
    ) -> Result<Vec<Hit>> {
        self.with_state(|st| st.index.query(text, k, type_filter))
    }

    pub fn similar_events(&self, fait: &ElementId, k: usize) -> Result<Vec<SimilarEvent>> {
        self.with_state(|st| st.similar_events(fait, k))
    }

    pub fn suggest_links(
        &self,
        element: &ElementId,
        k: usize,
        weights: Option<Weights>,
    ) -> Result<Vec<Suggestion>> {
        self.with_state(|st| {
            suggest::suggest_links(
                st,
                &self.config.metamodel.schema,
                &self.config.suggester,
                element,
                k,
                weights,
            )
        })
    }

    // ---- workflow ----

    pub fn declare_fait(
        &self,
        actor: &ActorId,
        draft: ElementDraft,
    ) -> Result<(KnowledgeElement, FaitState)> {
        self.require_access(actor, Action::Write, ElementType::FaitTechnique)?;
        self.write(|txn| {
            let now = txn.now();
            let el = self.build_element(txn.st, actor, ElementType::FaitTechnique, draft, now)?;
            txn.put_element(el.clone())?;
            let state = FaitState::declared(el.id.clone(), actor.clone(), now);
            txn.put_workflow(state.clone())?;
            txn.audit(actor, "declare_fait", vec![el.id.to_string()], 0, 0);
            Ok((el, state))
        })
    }

    pub fn fait_state(&self, fait: &ElementId) -> Result<FaitState> {
        self.with_state(|st| {
            st.workflow
                .get(fait)
                .cloned()
                .ok_or_else(|| KbError::not_found("workflow state", fait.as_str()))
        })
    }

    fn current_state(st: &KbState, fait: &ElementId) -> Result<FaitState> {
        st.require_type(fait, ElementType::FaitTechnique)?;
        st.workflow
            .get(fait)
            .cloned()
            .ok_or_else(|| KbError::not_found("workflow state", fait.as_str()))
    }

    pub fn start_analysis(&self, actor: &ActorId, fait: &ElementId) -> Result<FaitState> {
        self.require_role(actor, Role::Specialist, "start an analysis")?;
        self.write(|txn| {
            let mut state = Self::current_state(txn.st, fait)?;
            state.ensure_can_advance(WorkflowState::UnderAnalysis)?;
            let snapshot = txn.st.similar_events(fait, ANALYSIS_SNAPSHOT_K)?;
            let now = txn.now();
            state.state = WorkflowState::UnderAnalysis;
            state.analyst = Some(actor.clone());
            state.history.push(HistoryEntry {
                state: WorkflowState::UnderAnalysis,
                actor: actor.clone(),
                at: now,
                similar: Some(snapshot),
            });
            txn.put_workflow(state.clone())?;
            txn.audit(actor, "start_analysis", vec![fait.to_string()], 0, 0);
            Ok(state)
        })
    }

    pub fn issue_avis(
        &self,
        actor: &ActorId,
        fait: &ElementId,
        draft: ElementDraft,
    ) -> Result<AvisIssued> {
        self.require_role(actor, Role::Expert, "issue an advisory")?;
        self.require_access(actor, Action::Write, ElementType::AvisConcepteur)?;
        self.write(|txn| {
            let mut state = Self::current_state(txn.st, fait)?;
            state.ensure_can_advance(WorkflowState::AvisIssued)?;
            let now = txn.now();
            let mut avis =
                self.build_element(txn.st, actor, ElementType::AvisConcepteur, draft, now)?;
            avis.content_status = ContentStatus::Validated;
            avis.validated_by = Some(actor.clone());
            avis.validated_at = Some(now);
            txn.put_element(avis.clone())?;
            let link = Link {
                id: txn.st.new_link_id(),
                source: fait.clone(),
                target: avis.id.clone(),
                link_type: LinkType::SubjectOf,
                status: LinkStatus::Validated,
                proposer: actor.clone(),
                validator: Some(actor.clone()),
                decided_at: Some(now),
            };
            txn.put_link(link.clone())?;
            state.advance(WorkflowState::AvisIssued, actor.clone(), now)?;
            txn.put_workflow(state.clone())?;
            txn.audit(
                actor,
                "issue_avis",
                vec![fait.to_string(), avis.id.to_string(), link.id.to_string()],
                2,
                0,
            );
            Ok(AvisIssued {
                avis,
                link,
                fait: state,
            })
        })
    }

    pub fn consolidate(
        &self,
        actor: &ActorId,
        avis_ids: &[ElementId],
        target: PathologieTarget,
    ) -> Result<Consolidation> {
        self.require_role(actor, Role::Expert, "consolidate advisories")?;
        if avis_ids.is_empty() {
            return Err(KbError::InvalidArgument(
                "no advisory to consolidate".into(),
            ));
        }
        self.write(|txn| {
            let avis_set: BTreeSet<ElementId> = avis_ids.iter().cloned().collect();
            for avis in &avis_set {
                txn.st.require_type(avis, ElementType::AvisConcepteur)?;
            }
            let mut faits = BTreeSet::new();
            for avis in &avis_set {
                faits.extend(txn.st.links.validated_sources(avis, LinkType::SubjectOf));
            }
            let mut states = Vec::new();
            for fait in &faits {
                if let Some(state) = txn.st.workflow.get(fait) {
                    state.ensure_can_advance(WorkflowState::Consolidated)?;
                    states.push(state.clone());
                }
            }

            let now = txn.now();
            let mut enrichment = 0;
            let pathologie = match target {
                PathologieTarget::Existing(id) => txn
                    .st
                    .require_type(&id, ElementType::RexPathologie)?
                    .clone(),
                PathologieTarget::New(draft) => {
                    self.require_access(actor, Action::Write, ElementType::RexPathologie)?;
                    let mut el =
                        self.build_element(txn.st, actor, ElementType::RexPathologie, draft, now)?;
                    el.content_status = ContentStatus::Validated;
                    el.validated_by = Some(actor.clone());
                    el.validated_at = Some(now);
                    txn.put_element(el.clone())?;
                    enrichment += 1;
                    el
                }
            };

            let mut links = Vec::new();
            for avis in &avis_set {
                if txn
                    .st
                    .links
                    .active_link(avis, &pathologie.id, LinkType::ConsolidatedIn)
                    .is_some()
                {
                    return Err(KbError::DuplicateLink {
                        source_id: avis.to_string(),
                        target_id: pathologie.id.to_string(),
                        link_type: LinkType::ConsolidatedIn,
                    });
                }
                let link = Link {
                    id: txn.st.new_link_id(),
                    source: avis.clone(),
                    target: pathologie.id.clone(),
                    link_type: LinkType::ConsolidatedIn,
                    status: LinkStatus::Validated,
                    proposer: actor.clone(),
                    validator: Some(actor.clone()),
                    decided_at: Some(now),
                };
                txn.put_link(link.clone())?;
                enrichment += 1;
                links.push(link);
            }

            let mut moved = Vec::new();
            for mut state in states {
                state.advance(WorkflowState::Consolidated, actor.clone(), now)?;
                txn.put_workflow(state.clone())?;
                moved.push(state);
            }

            let mut ids = vec![pathologie.id.to_string()];
            ids.extend(avis_set.iter().map(|a| a.to_string()));
            txn.audit(actor, "consolidate", ids, enrichment, 0);
            Ok(Consolidation {
                pathologie,
                links,
                faits: moved,
            })
        })
    }

    /// Transmission, absorption & use, and enrichment within `window`.
    pub fn transfer_metrics(&self, window: TimeWindow) -> TransferMetrics {
        let mut m = TransferMetrics {
            transmission: self
                .reads
                .lock()
                .iter()
                .filter(|at| window.contains(**at))
                .count() as u64,
            ..Default::default()
        };
        self.with_state(|st| {
            for ev in st.audit.iter().filter(|e| window.contains(e.at)) {
                m.absorption_use += u64::from(ev.absorption);
                m.enrichment += u64::from(ev.enrichment);
            }
        });
        m
    }

    pub fn audit_log(&self) -> Vec<AuditEvent> {
        self.with_state(|st| st.audit.clone())
    }

    pub fn stats(&self) -> KbStats {
        self.with_state(|st| st.stats())
    }
}
