//! Rebuilds the similarity index from element text and checks that the
//! incrementally maintained index answered queries identically.

use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::Result;
use crate::index::SimIndex;
use crate::snapshot::rebuild_index;

/// Results compared per sampled query.
pub const REINDEX_TOP_K: usize = 10;
pub const SCORE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReindexReport {
    pub documents: usize,
    pub queries: usize,
    pub mismatches: Vec<String>,
    pub equivalent: bool,
}

/// Deterministic query sample: element titles spread over the corpus, and
/// pairs of indexed terms.
pub fn sample_queries(index: &SimIndex, titles: &[String], count: usize) -> Vec<String> {
    let terms = index.terms();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        if i % 2 == 0 && !titles.is_empty() {
            out.push(titles[(i / 2 * 7919) % titles.len()].clone());
        } else if !terms.is_empty() {
            let a = terms[(i * 104_729) % terms.len()];
            let b = terms[(i * 1_299_709 + 1) % terms.len()];
            out.push(format!("{a} {b}"));
        } else if !titles.is_empty() {
            out.push(titles[i % titles.len()].clone());
        }
    }
    out
}

/// Compares two indexes on `queries`: same ids in the same order, scores
/// within [`SCORE_TOLERANCE`]. Returns a description of each difference.
pub fn compare_indexes(a: &SimIndex, b: &SimIndex, queries: &[String]) -> Result<Vec<String>> {
    let mut mismatches = Vec::new();
    for q in queries {
        let left = a.query(q, REINDEX_TOP_K, None)?;
        let right = b.query(q, REINDEX_TOP_K, None)?;
        let same = left.len() == right.len()
            && left
                .iter()
                .zip(&right)
                .all(|(x, y)| x.doc_id == y.doc_id && (x.score - y.score).abs() <= SCORE_TOLERANCE);
        if !same {
            mismatches.push(format!("query '{q}'"));
        }
    }
    Ok(mismatches)
}

impl Engine {
    /// Rebuilds the index from element text, compares it with the live index
    /// on `sample` queries, then installs the rebuilt index.
    pub fn reindex(&self, sample: usize) -> Result<ReindexReport> {
        let mut st = self.state.write();
        let rebuilt = rebuild_index(self, &st)?;
        let titles: Vec<String> = st.elements().map(|e| e.title.clone()).collect();
        let queries = sample_queries(&st.index, &titles, sample);
        let mismatches = compare_indexes(&st.index, &rebuilt, &queries)?;
        let report = ReindexReport {
            documents: rebuilt.doc_count(),
            queries: queries.len(),
            equivalent: mismatches.is_empty() && rebuilt.doc_count() == st.index.doc_count(),
            mismatches,
        };
        st.index = rebuilt;
        Ok(report)
    }
}
