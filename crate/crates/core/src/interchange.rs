//! JSON Lines interchange: bulk import and deterministic export.
//!
//! One record per line, each an object with a format version `"v"` and a
//! `"kind"` of `ontology_item`, `element`, `link` or `workflow_state`; the
//! remaining fields mirror the domain type. Records are validated before any
//! mutation and committed one by one, so a bad line never affects its
//! neighbours. Re-importing a record whose id already holds identical content
//! is accepted as a no-op; different content is a conflict.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, KbState, Txn};
use crate::error::{KbError, Result};
use crate::model::{
    normalize_sections, ActorId, ContentStatus, ElementType, KnowledgeElement, Link, LinkStatus,
    OntologyItem,
};
use crate::workflow::FaitState;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    OntologyItem(OntologyItem),
    Element(KnowledgeElement),
    Link(Link),
    WorkflowState(FaitState),
}

impl Record {
    pub fn kind(&self) -> &'static str {
        match self {
            Record::OntologyItem(_) => "ontology_item",
            Record::Element(_) => "element",
            Record::Link(_) => "link",
            Record::WorkflowState(_) => "workflow_state",
        }
    }
}

pub const RECORD_KINDS: [&str; 4] = ["ontology_item", "element", "link", "workflow_state"];

/// A record with its format version, as written on one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    #[serde(flatten)]
    pub record: Record,
}

impl Envelope {
    pub fn new(record: Record) -> Self {
        Self {
            v: FORMAT_VERSION,
            record,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    /// Parses one line, checking the version before the payload.
    pub fn parse(line: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| KbError::Malformed(e.to_string()))?;
        match value.get("v").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(KbError::VersionMismatch(format!(
                    "record version {v}, supported {FORMAT_VERSION}"
                )))
            }
            None => return Err(KbError::Malformed("missing numeric \"v\" field".into())),
        }
        serde_json::from_value(value).map_err(|e| KbError::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub accepted: BTreeMap<String, usize>,
    pub rejected: Vec<Rejection>,
    pub duration_ms: u64,
}

impl ImportReport {
    fn new() -> Self {
        Self {
            accepted: RECORD_KINDS.iter().map(|k| (k.to_string(), 0)).collect(),
            rejected: Vec::new(),
            duration_ms: 0,
        }
    }

    pub fn total_accepted(&self) -> usize {
        self.accepted.values().sum()
    }

    pub fn duration(&self) -> Duration {
        Duration::from_millis(self.duration_ms)
    }
}

fn unknown_ref(what: &str, id: impl std::fmt::Display) -> KbError {
    KbError::UnknownReference(format!("{what} '{id}'"))
}

/// Outcome of validating one record against the current state.
enum Plan {
    AlreadyPresent,
    Insert(Record),
}

fn plan_item(st: &KbState, item: OntologyItem) -> Result<Plan> {
    if let Some(existing) = st.ontology.get(&item.id) {
        return if *existing == item {
            Ok(Plan::AlreadyPresent)
        } else {
            Err(KbError::Conflict(item.id.to_string()))
        };
    }
    if let Some(parent) = &item.parent {
        if !st.ontology.contains(parent) {
            return Err(unknown_ref("ontology item", parent));
        }
    }
    st.ontology.check_insert(&item)?;
    Ok(Plan::Insert(Record::OntologyItem(item)))
}

fn plan_element(st: &KbState, mut el: KnowledgeElement) -> Result<Plan> {
    if el.id.as_str().is_empty() {
        return Err(KbError::Malformed("element id is empty".into()));
    }
    if el.title.trim().is_empty() {
        return Err(KbError::EmptyTitle);
    }
    el.sections = normalize_sections(el.element_type, el.sections)?;
    if let Some(tag) = el.tags.iter().find(|t| !st.ontology.contains(t)) {
        return Err(unknown_ref("ontology item", tag));
    }
    if el.updated_at < el.created_at {
        return Err(KbError::Malformed("updated_at precedes created_at".into()));
    }
    if el.content_status == ContentStatus::Draft
        && (el.validated_by.is_some() || el.validated_at.is_some())
    {
        return Err(KbError::Malformed(
            "draft element carries validation fields".into(),
        ));
    }
    if let Some(existing) = st.element(&el.id) {
        return if *existing == el {
            Ok(Plan::AlreadyPresent)
        } else {
            Err(KbError::Conflict(el.id.to_string()))
        };
    }
    Ok(Plan::Insert(Record::Element(el)))
}

fn plan_link(engine: &Engine, st: &KbState, link: Link) -> Result<Plan> {
    if let Some(existing) = st.links.get(&link.id) {
        return if *existing == link {
            Ok(Plan::AlreadyPresent)
        } else {
            Err(KbError::Conflict(link.id.to_string()))
        };
    }
    let src = st
        .element(&link.source)
        .ok_or_else(|| unknown_ref("element", &link.source))?;
    let tgt = st
        .element(&link.target)
        .ok_or_else(|| unknown_ref("element", &link.target))?;
    if !engine.link_type_allowed(src.element_type, link.link_type, tgt.element_type) {
        return Err(KbError::SchemaViolation {
            source_type: src.element_type,
            link_type: link.link_type,
            target_type: tgt.element_type,
        });
    }
    if !link.audit_consistent() {
        return Err(KbError::Malformed(
            "validator/decided_at must be set exactly when the link is decided".into(),
        ));
    }
    if link.status != LinkStatus::Rejected
        && st
            .links
            .active_link(&link.source, &link.target, link.link_type)
            .is_some()
    {
        return Err(KbError::DuplicateLink {
            source_id: link.source.to_string(),
            target_id: link.target.to_string(),
            link_type: link.link_type,
        });
    }
    Ok(Plan::Insert(Record::Link(link)))
}

fn plan_workflow(st: &KbState, state: FaitState) -> Result<Plan> {
    let el = st
        .element(&state.fait)
        .ok_or_else(|| unknown_ref("element", &state.fait))?;
    if el.element_type != ElementType::FaitTechnique {
        return Err(KbError::WrongType {
            id: state.fait.to_string(),
            expected: ElementType::FaitTechnique.to_string(),
            actual: el.element_type,
        });
    }
    if !state.is_consistent() {
        return Err(KbError::Malformed(
            "workflow history does not follow the allowed transitions".into(),
        ));
    }
    if let Some(existing) = st.fait_state(&state.fait) {
        return if *existing == state {
            Ok(Plan::AlreadyPresent)
        } else {
            Err(KbError::Conflict(state.fait.to_string()))
        };
    }
    Ok(Plan::Insert(Record::WorkflowState(state)))
}

fn import_one(
    engine: &Engine,
    txn: &mut Txn<'_>,
    actor: &ActorId,
    line: &str,
) -> Result<&'static str> {
    let envelope = Envelope::parse(line)?;
    let kind = envelope.record.kind();
    let plan = match envelope.record {
        Record::OntologyItem(item) => plan_item(txn.st, item)?,
        Record::Element(el) => plan_element(txn.st, el)?,
        Record::Link(link) => plan_link(engine, txn.st, link)?,
        Record::WorkflowState(state) => plan_workflow(txn.st, state)?,
    };
    let Plan::Insert(record) = plan else {
        return Ok(kind);
    };
    let id = match record {
        Record::OntologyItem(item) => {
            let id = item.id.to_string();
            txn.put_item(item)?;
            id
        }
        Record::Element(el) => {
            let id = el.id.to_string();
            txn.put_element(el)?;
            id
        }
        Record::Link(link) => {
            let id = link.id.to_string();
            txn.put_link(link)?;
            id
        }
        Record::WorkflowState(state) => {
            let id = state.fait.to_string();
            txn.put_workflow(state)?;
            id
        }
    };
    txn.audit(actor, "import", vec![kind.to_string(), id], 0, 0);
    Ok(kind)
}

impl Engine {
    /// Imports JSON Lines records. Requires an administrator.
    ///
    /// Blank lines are ignored; every other line is either accepted or
    /// reported as rejected with its 1-based line number. Each record is its
    /// own transaction, so readers are served between records.
    pub fn bulk_import(&self, actor: &ActorId, input: impl BufRead) -> Result<ImportReport> {
        self.require_admin(actor)?;
        let started = Instant::now();
        let mut report = ImportReport::new();
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let outcome = match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => self.write(|txn| import_one(self, txn, actor, &l)),
                Err(e) => Err(KbError::Malformed(format!("unreadable line: {e}"))),
            };
            match outcome {
                Ok(kind) => *report.accepted.entry(kind.to_string()).or_default() += 1,
                Err(err) => report.rejected.push(Rejection {
                    line: line_no,
                    code: err.code().to_string(),
                    message: err.to_string(),
                }),
            }
        }
        report.duration_ms = started.elapsed().as_millis() as u64;
        Ok(report)
    }

    /// All records in import order: ontology items (parents before children),
    /// elements, links, workflow states; each group sorted by id.
    pub fn export_records(&self, actor: &ActorId) -> Result<Vec<Envelope>> {
        self.require_admin(actor)?;
        Ok(self.with_state(collect_records))
    }

    /// Writes the export as JSON Lines.
    pub fn export(&self, actor: &ActorId, mut out: impl Write) -> Result<()> {
        for env in self.export_records(actor)? {
            out.write_all(env.to_line().as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn export_string(&self, actor: &ActorId) -> Result<String> {
        let mut buf = Vec::new();
        self.export(actor, &mut buf)?;
        Ok(String::from_utf8(buf).expect("json is utf-8"))
    }
}

pub(crate) fn collect_records(st: &KbState) -> Vec<Envelope> {
    let mut items: Vec<&OntologyItem> = st.ontology.items().collect();
    items.sort_by_cached_key(|i| (st.ontology.depth(&i.id), i.id.clone()));
    let mut out: Vec<Envelope> = items
        .into_iter()
        .map(|i| Envelope::new(Record::OntologyItem(i.clone())))
        .collect();
    out.extend(
        st.elements()
            .map(|e| Envelope::new(Record::Element(e.clone()))),
    );
    out.extend(
        st.links
            .iter()
            .map(|l| Envelope::new(Record::Link(l.clone()))),
    );
    out.extend(
        st.workflow_states()
            .map(|w| Envelope::new(Record::WorkflowState(w.clone()))),
    );
    out
}
