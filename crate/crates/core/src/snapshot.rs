//! Durable snapshots of the whole knowledge base.
//!
//! Layout: a one-line JSON header (`format`, `version`, `index_version`,
//! `checksum`) followed by a one-line JSON body. The checksum is the SHA-256
//! of the body bytes. Files are written to a temporary sibling, synced, then
//! renamed over the target, so a reader sees either the old or the new file.
//!
//! The similarity index travels with the snapshot; when the stored index was
//! built with a different analyzer (`index_version` differs) it is rebuilt
//! from element text instead.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::AuditEvent;
use crate::engine::{Engine, KbState};
use crate::error::{KbError, Result};
use crate::index::{IndexDump, SimIndex};
use crate::interchange::{collect_records, Envelope, Record};
use crate::model::Timestamp;

pub const SNAPSHOT_FORMAT: &str = "rexkb-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    index_version: String,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct Body {
    records: Vec<Envelope>,
    audit: Vec<AuditEvent>,
    reads: Vec<Timestamp>,
    index: IndexDump,
    next_id: u64,
}

fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Engine {
    /// Identifies the analyzer an index was built with.
    pub fn index_version(&self) -> String {
        format!("tfidf-1:{}", self.tokenizer().stopwords().fingerprint())
    }

    /// Writes the full state to `path` atomically.
    pub fn snapshot(&self, path: &Path) -> Result<()> {
        let body = self.with_state(|st| Body {
            records: collect_records(st),
            audit: st.audit.clone(),
            reads: self.reads.lock().clone(),
            index: st.index.dump(),
            next_id: st.next_id,
        });
        let body = serde_json::to_vec(&body).map_err(|e| KbError::Io(e.to_string()))?;
        let header = Header {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            index_version: self.index_version(),
            checksum: checksum(&body),
        };

        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&serde_json::to_vec(&header).map_err(|e| KbError::Io(e.to_string()))?)?;
            f.write_all(b"\n")?;
            f.write_all(&body)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    /// Replaces the state with the snapshot at `path`. On any error the
    /// current state is left untouched.
    pub fn load(&self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let split = bytes
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| KbError::Io("snapshot has no header line".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..split])
            .map_err(|e| KbError::Io(format!("unreadable snapshot header: {e}")))?;
        if header.format != SNAPSHOT_FORMAT {
            return Err(KbError::Io(format!(
                "not a snapshot file (format '{}')",
                header.format
            )));
        }
        if header.version != SNAPSHOT_VERSION {
            return Err(KbError::VersionMismatch(format!(
                "snapshot version {}, supported {SNAPSHOT_VERSION}",
                header.version
            )));
        }
        let mut body_bytes = &bytes[split + 1..];
        if body_bytes.last() == Some(&b'\n') {
            body_bytes = &body_bytes[..body_bytes.len() - 1];
        }
        if checksum(body_bytes) != header.checksum {
            return Err(KbError::Io(
                "snapshot checksum mismatch (corrupted file)".into(),
            ));
        }
        let body: Body = serde_json::from_slice(body_bytes)
            .map_err(|e| KbError::Io(format!("unreadable snapshot body: {e}")))?;

        let reuse_index = header.index_version == self.index_version();
        let state = self.state_from_body(body.records, body.index, reuse_index, body.next_id)?;

        let mut latest: Option<Timestamp> = body.reads.iter().max().copied();
        for ev in &body.audit {
            latest = latest.max(Some(ev.at));
        }
        for el in state.elements() {
            latest = latest.max(Some(el.updated_at));
        }
        let mut state = state;
        state.audit = body.audit;

        *self.state.write() = state;
        *self.reads.lock() = body.reads;
        if let Some(at) = latest {
            self.clock.advance_past(at);
        }
        Ok(())
    }

    fn state_from_body(
        &self,
        records: Vec<Envelope>,
        index: IndexDump,
        reuse_index: bool,
        next_id: u64,
    ) -> Result<KbState> {
        let mut st = KbState::new(self.tokenizer().clone());
        for env in records {
            match env.record {
                Record::OntologyItem(item) => st
                    .ontology
                    .insert(item)
                    .map_err(|e| KbError::Io(format!("inconsistent snapshot: {e}")))?,
                Record::Element(el) => {
                    st.by_type
                        .entry(el.element_type)
                        .or_default()
                        .insert(el.id.clone());
                    st.elements.insert(el.id.clone(), el);
                }
                Record::Link(link) => st.links.put(link),
                Record::WorkflowState(state) => {
                    st.workflow.insert(state.fait.clone(), state);
                }
            }
        }
        let restored = if reuse_index {
            SimIndex::restore(self.tokenizer().clone(), index)
                .ok()
                .filter(|idx| idx.doc_ids().into_iter().eq(st.elements.keys().cloned()))
        } else {
            None
        };
        st.index = match restored {
            Some(idx) => idx,
            None => rebuild_index(self, &st)?,
        };
        st.next_id = next_id.max(1);
        Ok(st)
    }
}

pub(crate) fn rebuild_index(engine: &Engine, st: &KbState) -> Result<SimIndex> {
    SimIndex::rebuild(
        engine.tokenizer().clone(),
        st.elements()
            .map(|e| (e.id.clone(), e.element_type, e.indexed_text())),
    )
}
