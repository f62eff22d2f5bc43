//! Incremental TF-IDF index answering cosine-ranked nearest-document queries.
//!
//! Weights: `tf = 1 + ln(count)`, `idf = ln((1 + N) / (1 + df)) + 1`. Because
//! idf depends on the current document count, document norms are not stored
//! with the postings; they are computed lazily per query and cached until the
//! next mutation. An upsert or removal therefore only touches the postings of
//! the document's own terms.
//!
//! All floating point sums run in ascending term order, so the scores of an
//! index built incrementally are bit-identical to those of a rebuilt index
//! holding the same documents.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{KbError, Result};
use crate::model::{ElementId, ElementType};
use crate::text::Tokenizer;

type Slot = u32;
type TermId = u32;

#[derive(Debug, Clone)]
struct DocEntry {
    id: ElementId,
    kind: ElementType,
    /// (term, raw count), sorted by term text.
    terms: Vec<(TermId, u32)>,
}

/// One ranked query result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: ElementId,
    pub score: f64,
}

/// Sparse tf-idf vector of one indexed document, as of the current corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentVector {
    pub doc_id: ElementId,
    pub term_weights: BTreeMap<String, f64>,
    pub norm: f64,
}

/// Serializable content of an index: every document with its term counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexDump {
    pub docs: Vec<DumpedDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpedDoc {
    pub id: ElementId,
    pub kind: ElementType,
    pub terms: Vec<(String, u32)>,
}

pub fn tf(count: u32) -> f64 {
    1.0 + (count as f64).ln()
}

pub fn idf(doc_count: usize, df: usize) -> f64 {
    ((1.0 + doc_count as f64) / (1.0 + df as f64)).ln() + 1.0
}

#[derive(Default)]
struct NormCache {
    norms: HashMap<Slot, f64>,
}

pub struct SimIndex {
    tokenizer: Arc<Tokenizer>,
    slots: Vec<Option<DocEntry>>,
    free_slots: Vec<Slot>,
    slot_of: HashMap<ElementId, Slot>,
    term_ids: HashMap<String, TermId>,
    term_names: Vec<String>,
    postings: Vec<HashMap<Slot, u32>>,
    norm_cache: RwLock<NormCache>,
}

impl std::fmt::Debug for SimIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimIndex")
            .field("doc_count", &self.doc_count())
            .field("vocabulary", &self.vocabulary_len())
            .finish()
    }
}

impl SimIndex {
    pub fn new(tokenizer: Arc<Tokenizer>) -> Self {
        Self {
            tokenizer,
            slots: Vec::new(),
            free_slots: Vec::new(),
            slot_of: HashMap::new(),
            term_ids: HashMap::new(),
            term_names: Vec::new(),
            postings: Vec::new(),
            norm_cache: RwLock::new(NormCache::default()),
        }
    }

    /// Batch construction; equivalent to upserting every document in any order.
    pub fn rebuild(
        tokenizer: Arc<Tokenizer>,
        corpus: impl IntoIterator<Item = (ElementId, ElementType, String)>,
    ) -> Result<Self> {
        let mut index = Self::new(tokenizer);
        for (id, kind, text) in corpus {
            if index.contains(&id) {
                return Err(KbError::DuplicateDocId(id.to_string()));
            }
            index.upsert_document(id, kind, &text);
        }
        Ok(index)
    }

    pub fn tokenizer(&self) -> &Arc<Tokenizer> {
        &self.tokenizer
    }

    pub fn doc_count(&self) -> usize {
        self.slot_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_of.is_empty()
    }

    pub fn contains(&self, id: &ElementId) -> bool {
        self.slot_of.contains_key(id)
    }

    /// Number of terms with at least one posting.
    pub fn vocabulary_len(&self) -> usize {
        self.postings.iter().filter(|p| !p.is_empty()).count()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.term_ids
            .get(term)
            .map(|&t| self.postings[t as usize].len())
            .unwrap_or(0)
    }

    /// Documents whose postings hold `term`, sorted by id.
    pub fn postings(&self, term: &str) -> Vec<(ElementId, u32)> {
        let Some(&t) = self.term_ids.get(term) else {
            return Vec::new();
        };
        let mut out: Vec<_> = self.postings[t as usize]
            .iter()
            .map(|(&slot, &count)| (self.entry(slot).id.clone(), count))
            .collect();
        out.sort();
        out
    }

    /// Terms that currently have postings, sorted.
    pub fn terms(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .term_names
            .iter()
            .enumerate()
            .filter(|(t, _)| !self.postings[*t].is_empty())
            .map(|(_, name)| name.as_str())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn doc_ids(&self) -> Vec<ElementId> {
        let mut ids: Vec<_> = self.slot_of.keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn doc_kind(&self, id: &ElementId) -> Option<ElementType> {
        self.slot_of.get(id).map(|&s| self.entry(s).kind)
    }

    /// Raw term counts of an indexed document, sorted by term.
    pub fn term_counts(&self, id: &ElementId) -> Option<Vec<(String, u32)>> {
        let slot = *self.slot_of.get(id)?;
        Some(
            self.entry(slot)
                .terms
                .iter()
                .map(|&(t, c)| (self.term_names[t as usize].clone(), c))
                .collect(),
        )
    }

    pub fn document_vector(&self, id: &ElementId) -> Option<DocumentVector> {
        let slot = *self.slot_of.get(id)?;
        let n = self.doc_count();
        let mut term_weights = BTreeMap::new();
        for &(t, c) in &self.entry(slot).terms {
            let w = tf(c) * idf(n, self.postings[t as usize].len());
            term_weights.insert(self.term_names[t as usize].clone(), w);
        }
        Some(DocumentVector {
            doc_id: id.clone(),
            norm: self.norm(slot),
            term_weights,
        })
    }

    fn entry(&self, slot: Slot) -> &DocEntry {
        self.slots[slot as usize]
            .as_ref()
            .expect("slot referenced by postings is live")
    }

    fn intern(&mut self, term: &str) -> TermId {
        if let Some(&t) = self.term_ids.get(term) {
            return t;
        }
        let t = self.term_names.len() as TermId;
        self.term_names.push(term.to_string());
        self.term_ids.insert(term.to_string(), t);
        self.postings.push(HashMap::new());
        t
    }

    fn invalidate(&mut self) {
        self.norm_cache.get_mut().norms.clear();
    }

    /// Inserts or replaces a document. A replaced document is fully retracted
    /// first. The index is queryable immediately afterwards.
    pub fn upsert_document(&mut self, id: ElementId, kind: ElementType, text: &str) {
        let counts = count_terms(&self.tokenizer.tokenize(text));
        self.insert_counts(id, kind, counts);
    }

    fn insert_counts(&mut self, id: ElementId, kind: ElementType, counts: BTreeMap<String, u32>) {
        if self.slot_of.contains_key(&id) {
            self.retract(&id);
        }
        let slot = match self.free_slots.pop() {
            Some(s) => s,
            None => {
                self.slots.push(None);
                (self.slots.len() - 1) as Slot
            }
        };
        // BTreeMap iteration keeps the terms sorted by text.
        let mut terms = Vec::with_capacity(counts.len());
        for (term, count) in counts {
            let t = self.intern(&term);
            self.postings[t as usize].insert(slot, count);
            terms.push((t, count));
        }
        self.slots[slot as usize] = Some(DocEntry {
            id: id.clone(),
            kind,
            terms,
        });
        self.slot_of.insert(id, slot);
        self.invalidate();
    }

    fn retract(&mut self, id: &ElementId) -> bool {
        let Some(slot) = self.slot_of.remove(id) else {
            return false;
        };
        let entry = self.slots[slot as usize].take().expect("live slot");
        for (t, _) in entry.terms {
            self.postings[t as usize].remove(&slot);
        }
        self.free_slots.push(slot);
        self.invalidate();
        true
    }

    pub fn remove_document(&mut self, id: &ElementId) -> Result<()> {
        if self.retract(id) {
            Ok(())
        } else {
            Err(KbError::not_found("indexed document", id.as_str()))
        }
    }

    fn norm(&self, slot: Slot) -> f64 {
        if let Some(&n) = self.norm_cache.read().norms.get(&slot) {
            return n;
        }
        let n_docs = self.doc_count();
        let mut sum = 0.0;
        for &(t, c) in &self.entry(slot).terms {
            let w = tf(c) * idf(n_docs, self.postings[t as usize].len());
            sum += w * w;
        }
        let norm = sum.sqrt();
        self.norm_cache.write().norms.insert(slot, norm);
        norm
    }

    /// Cosine score of `text` against every document sharing at least one
    /// term with it. Documents with a zero score are not returned.
    pub fn score_all(&self, text: &str) -> Vec<Hit> {
        self.score_slots(text, None)
            .into_iter()
            .map(|(slot, score)| Hit {
                doc_id: self.entry(slot).id.clone(),
                score,
            })
            .collect()
    }

    fn score_slots(&self, text: &str, filter: Option<&BTreeSet<ElementType>>) -> Vec<(Slot, f64)> {
        let n = self.doc_count();
        if n == 0 {
            return Vec::new();
        }
        let counts = count_terms(&self.tokenizer.tokenize(text));
        let mut q_norm_sq = 0.0;
        let mut q_terms = Vec::with_capacity(counts.len());
        for (term, count) in &counts {
            let df = self.document_frequency(term);
            let w = tf(*count) * idf(n, df);
            q_norm_sq += w * w;
            if df > 0 {
                q_terms.push((self.term_ids[term.as_str()], w));
            }
        }
        if q_terms.is_empty() {
            return Vec::new();
        }
        let q_norm = q_norm_sq.sqrt();

        let mut dots: HashMap<Slot, f64> = HashMap::new();
        for (t, qw) in q_terms {
            let postings = &self.postings[t as usize];
            let term_idf = idf(n, postings.len());
            for (&slot, &c) in postings {
                *dots.entry(slot).or_insert(0.0) += qw * tf(c) * term_idf;
            }
        }

        dots.into_iter()
            .filter(|(slot, _)| filter.is_none_or(|f| f.contains(&self.entry(*slot).kind)))
            .filter_map(|(slot, dot)| {
                let d_norm = self.norm(slot);
                let score = dot / (q_norm * d_norm);
                (score > 0.0).then_some((slot, score))
            })
            .collect()
    }

    /// Top-`k` documents by cosine similarity to `text`, descending score,
    /// ties broken by ascending id. Zero-score documents are omitted.
    pub fn query(
        &self,
        text: &str,
        k: usize,
        type_filter: Option<&BTreeSet<ElementType>>,
    ) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(KbError::InvalidArgument("k must be at least 1".into()));
        }
        let scored = self.score_slots(text, type_filter);
        let mut hits: Vec<Hit> = scored
            .into_iter()
            .map(|(slot, score)| Hit {
                doc_id: self.entry(slot).id.clone(),
                score,
            })
            .collect();
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, rank_order);
            hits.truncate(k);
        }
        hits.sort_by(rank_order);
        Ok(hits)
    }

    pub fn dump(&self) -> IndexDump {
        let docs = self
            .doc_ids()
            .into_iter()
            .map(|id| DumpedDoc {
                kind: self.doc_kind(&id).expect("indexed"),
                terms: self.term_counts(&id).expect("indexed"),
                id,
            })
            .collect();
        IndexDump { docs }
    }

    pub fn restore(tokenizer: Arc<Tokenizer>, dump: IndexDump) -> Result<Self> {
        let mut index = Self::new(tokenizer);
        for doc in dump.docs {
            if index.contains(&doc.id) {
                return Err(KbError::DuplicateDocId(doc.id.to_string()));
            }
            index.insert_counts(doc.id, doc.kind, doc.terms.into_iter().collect());
        }
        Ok(index)
    }
}

/// Descending score, then ascending id.
pub fn rank_order(a: &Hit, b: &Hit) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

fn count_terms(tokens: &[String]) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Stopwords;

    fn index() -> SimIndex {
        SimIndex::new(Arc::new(Tokenizer::default()))
    }

    fn id(s: &str) -> ElementId {
        ElementId::from(s)
    }

    const T: ElementType = ElementType::FaitTechnique;

    #[test]
    fn empty_index_queries_return_nothing() {
        let idx = index();
        assert!(idx.query("alarme", 5, None).unwrap().is_empty());
        assert_eq!(
            idx.query("alarme", 0, None).unwrap_err().code(),
            "INVALID_ARGUMENT"
        );
    }

    #[test]
    fn upsert_counts_and_is_idempotent() {
        let mut idx = index();
        idx.upsert_document(id("a"), T, "Alarme sur circuit AUGM24");
        assert_eq!(idx.doc_count(), 1);
        let before = idx.dump();
        idx.upsert_document(id("a"), T, "Alarme sur circuit AUGM24");
        assert_eq!(idx.doc_count(), 1);
        assert_eq!(idx.dump(), before);
        assert_eq!(idx.document_frequency("alarme"), 1);
    }

    #[test]
    fn remove_retracts_everything() {
        let mut idx = index();
        idx.upsert_document(id("a"), T, "Corrosion des métaux");
        idx.remove_document(&id("a")).unwrap();
        assert_eq!(idx.doc_count(), 0);
        assert_eq!(idx.vocabulary_len(), 0);
        assert!(idx.query("corrosion metaux", 3, None).unwrap().is_empty());
        assert_eq!(
            idx.remove_document(&id("a")).unwrap_err().code(),
            "NOT_FOUND"
        );
    }

    #[test]
    fn replacing_a_document_retracts_old_terms() {
        let mut idx = index();
        idx.upsert_document(id("a"), T, "vanne fuite");
        idx.upsert_document(id("a"), T, "pompe vibration");
        assert_eq!(idx.document_frequency("vanne"), 0);
        assert_eq!(idx.document_frequency("pompe"), 1);
        assert!(idx.query("vanne", 3, None).unwrap().is_empty());
    }

    #[test]
    fn exact_text_is_top_one_with_unit_score() {
        let mut idx = index();
        idx.upsert_document(id("a"), T, "Alarme sur circuit AUGM24");
        idx.upsert_document(id("b"), T, "Corrosion des métaux");
        idx.upsert_document(id("c"), T, "Alarme pompe primaire");
        let hits = idx.query("Alarme sur circuit AUGM24", 3, None).unwrap();
        assert_eq!(hits[0].doc_id, id("a"));
        assert!((hits[0].score - 1.0).abs() < 1e-9);
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn type_filter_restricts_candidates() {
        let mut idx = index();
        idx.upsert_document(id("a"), ElementType::FaitTechnique, "pompe");
        idx.upsert_document(id("b"), ElementType::FicheTechnique, "pompe");
        let only: BTreeSet<_> = [ElementType::FicheTechnique].into();
        let hits = idx.query("pompe", 5, Some(&only)).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, id("b"));
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let mut idx = index();
        idx.upsert_document(id("b"), T, "pompe");
        idx.upsert_document(id("a"), T, "pompe");
        idx.upsert_document(id("c"), T, "vanne");
        let hits = idx.query("pompe", 5, None).unwrap();
        assert_eq!(hits[0].doc_id, id("a"));
        assert_eq!(hits[1].doc_id, id("b"));
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn rebuild_rejects_duplicates() {
        let tk = Arc::new(Tokenizer::new(Stopwords::empty()));
        assert!(SimIndex::rebuild(tk.clone(), Vec::new())
            .unwrap()
            .is_empty());
        let err = SimIndex::rebuild(
            tk,
            vec![(id("a"), T, "x y".into()), (id("a"), T, "z".into())],
        )
        .unwrap_err();
        assert_eq!(err.code(), "DUPLICATE_DOC_ID");
    }

    #[test]
    fn document_vector_norm_matches_weights() {
        let mut idx = index();
        idx.upsert_document(id("a"), T, "pompe pompe vanne");
        idx.upsert_document(id("b"), T, "vanne");
        let v = idx.document_vector(&id("a")).unwrap();
        let len: f64 = v.term_weights.values().map(|w| w * w).sum::<f64>().sqrt();
        assert!((len - v.norm).abs() < 1e-9);
        assert!(v.term_weights.values().all(|w| *w >= 0.0));
    }

    #[test]
    fn dump_restore_preserves_scores() {
        let mut idx = index();
        idx.upsert_document(id("a"), T, "pompe primaire fuite");
        idx.upsert_document(id("b"), T, "vanne fuite");
        let restored = SimIndex::restore(idx.tokenizer().clone(), idx.dump()).unwrap();
        assert_eq!(
            idx.query("fuite pompe", 5, None).unwrap(),
            restored.query("fuite pompe", 5, None).unwrap()
        );
    }
}
