//! Brute-force oracles.
//!
//! The TF-IDF oracle builds dense vectors over the full vocabulary of an
//! explicit corpus on every call: no postings, no caches, no incremental
//! state. The suggestion oracle scores every (target, link type) pair by
//! enumeration, walking parent pointers for tag closures.

use std::collections::{BTreeMap, BTreeSet};

use rexkb_core::{ElementId, ElementType, Hit, ItemId, LinkType, Tokenizer};

/// Scores closer than this are treated as ties when comparing rankings.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct OracleDoc {
    pub id: ElementId,
    pub kind: ElementType,
    pub text: String,
}

impl OracleDoc {
    pub fn new(id: impl Into<ElementId>, kind: ElementType, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind,
            text: text.into(),
        }
    }
}

/// Cosine score of `query` against every document of `corpus`, zero scores dropped,
/// sorted by descending score then ascending id.
pub fn tfidf_scores(
    tokenizer: &Tokenizer,
    corpus: &[OracleDoc],
    query: &str,
    type_filter: Option<&BTreeSet<ElementType>>,
) -> Vec<(ElementId, f64)> {
    let docs: Vec<Vec<String>> = corpus.iter().map(|d| tokenizer.tokenize(&d.text)).collect();
    let q_tokens = tokenizer.tokenize(query);

    let mut vocab: BTreeSet<&str> = BTreeSet::new();
    for tokens in &docs {
        vocab.extend(tokens.iter().map(String::as_str));
    }
    vocab.extend(q_tokens.iter().map(String::as_str));
    let vocab: Vec<&str> = vocab.into_iter().collect();

    let count =
        |tokens: &[String], term: &str| tokens.iter().filter(|t| t.as_str() == term).count();
    let n = corpus.len() as f64;
    let idf: Vec<f64> = vocab
        .iter()
        .map(|term| {
            let df = docs.iter().filter(|tokens| count(tokens, term) > 0).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    let weigh = |tokens: &[String]| -> Vec<f64> {
        vocab
            .iter()
            .zip(&idf)
            .map(|(term, idf)| {
                let c = count(tokens, term);
                if c == 0 {
                    0.0
                } else {
                    (1.0 + (c as f64).ln()) * idf
                }
            })
            .collect()
    };

    let q = weigh(&q_tokens);
    let q_norm = q.iter().map(|w| w * w).sum::<f64>().sqrt();
    let mut out = Vec::new();
    for (doc, tokens) in corpus.iter().zip(&docs) {
        if type_filter.is_some_and(|f| !f.contains(&doc.kind)) {
            continue;
        }
        let d = weigh(tokens);
        let d_norm = d.iter().map(|w| w * w).sum::<f64>().sqrt();
        let dot: f64 = q.iter().zip(&d).map(|(a, b)| a * b).sum();
        if q_norm == 0.0 || d_norm == 0.0 {
            continue;
        }
        let score = dot / (q_norm * d_norm);
        if score > 0.0 {
            out.push((doc.id.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

/// Checks `actual` (top-`k`) against the full oracle ranking.
///
/// Ids must appear in the oracle's order. The only permitted difference is
/// the relative order of documents whose oracle scores are within
/// [`TIE_EPS`] of each other; scores must agree within `tol`.
pub fn compare_ranking(
    actual: &[Hit],
    oracle: &[(ElementId, f64)],
    k: usize,
    tol: f64,
) -> Result<(), String> {
    let expected_len = oracle.len().min(k);
    if actual.len() != expected_len {
        return Err(format!(
            "expected {expected_len} results, got {}",
            actual.len()
        ));
    }
    let oracle_score: BTreeMap<&ElementId, f64> = oracle.iter().map(|(id, s)| (id, *s)).collect();
    let mut seen = BTreeSet::new();
    for (i, hit) in actual.iter().enumerate() {
        if !seen.insert(&hit.doc_id) {
            return Err(format!("duplicate result {}", hit.doc_id));
        }
        let (exp_id, exp_score) = &oracle[i];
        if (hit.score - exp_score).abs() > tol {
            return Err(format!(
                "rank {}: score {} vs oracle {} ({} vs {})",
                i + 1,
                hit.score,
                exp_score,
                hit.doc_id,
                exp_id
            ));
        }
        if &hit.doc_id != exp_id {
            let Some(own) = oracle_score.get(&hit.doc_id) else {
                return Err(format!("rank {}: {} absent from oracle", i + 1, hit.doc_id));
            };
            if (own - exp_score).abs() > TIE_EPS {
                return Err(format!(
                    "rank {}: got {} (oracle score {own}), expected {exp_id} ({exp_score})",
                    i + 1,
                    hit.doc_id
                ));
            }
        }
    }
    Ok(())
}

/// Everything the exhaustive suggestion oracle needs, spelled out explicitly.
#[derive(Debug, Clone)]
pub struct SuggestWorld {
    pub docs: Vec<OracleDoc>,
    pub tags: BTreeMap<ElementId, BTreeSet<ItemId>>,
    pub parents: BTreeMap<ItemId, Option<ItemId>>,
    /// (source, target, link type) of Proposed or Validated links.
    pub active_links: BTreeSet<(ElementId, ElementId, LinkType)>,
    pub schema: Vec<(ElementType, LinkType, ElementType)>,
    pub priors: BTreeMap<(ElementType, LinkType, ElementType), f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSuggestion {
    pub target: ElementId,
    pub link_type: LinkType,
    pub score: f64,
    pub text: f64,
    pub tag: f64,
    pub prior: f64,
}

/// The default schema, written out by hand.
pub fn default_schema() -> Vec<(ElementType, LinkType, ElementType)> {
    use ElementType::*;
    vec![
        (FaitTechnique, LinkType::Concerns, FicheTechnique),
        (FaitTechnique, LinkType::During, ActiviteProcessus),
        (FicheTechnique, LinkType::BasedOn, Fondamental),
        (FaitTechnique, LinkType::SubjectOf, AvisConcepteur),
        (AvisConcepteur, LinkType::ConsolidatedIn, RexPathologie),
        (RexPathologie, LinkType::ReferencedIn, SourceDocumentaire),
        (AvisConcepteur, LinkType::ReferencedIn, SourceDocumentaire),
    ]
}

impl SuggestWorld {
    fn closure(&self, id: &ElementId) -> BTreeSet<ItemId> {
        let mut out = BTreeSet::new();
        for tag in self.tags.get(id).into_iter().flatten() {
            let mut cursor = Some(tag.clone());
            while let Some(item) = cursor {
                if !out.insert(item.clone()) {
                    break;
                }
                cursor = self.parents.get(&item).cloned().flatten();
            }
        }
        out
    }

    fn jaccard(a: &BTreeSet<ItemId>, b: &BTreeSet<ItemId>) -> f64 {
        let union: BTreeSet<_> = a.union(b).collect();
        if union.is_empty() {
            return 0.0;
        }
        a.intersection(b).count() as f64 / union.len() as f64
    }

    /// Scores every admissible pair and returns the top `k`.
    pub fn suggest(
        &self,
        tokenizer: &Tokenizer,
        source: &ElementId,
        k: usize,
        weights: (f64, f64, f64),
    ) -> Vec<OracleSuggestion> {
        let sum = weights.0 + weights.1 + weights.2;
        let (a, b, g) = (weights.0 / sum, weights.1 / sum, weights.2 / sum);
        let src = self
            .docs
            .iter()
            .find(|d| &d.id == source)
            .expect("source doc");
        let text_scores: BTreeMap<ElementId, f64> =
            tfidf_scores(tokenizer, &self.docs, &src.text, None)
                .into_iter()
                .collect();
        let src_tags = self.closure(source);

        let mut out = Vec::new();
        for target in &self.docs {
            if &target.id == source {
                continue;
            }
            for lt in LinkType::ALL {
                let triple = (src.kind, lt, target.kind);
                if !self.schema.contains(&triple) {
                    continue;
                }
                if self
                    .active_links
                    .contains(&(source.clone(), target.id.clone(), lt))
                {
                    continue;
                }
                let text = text_scores.get(&target.id).copied().unwrap_or(0.0).min(1.0);
                let tag = Self::jaccard(&src_tags, &self.closure(&target.id));
                let prior = self.priors.get(&triple).copied().unwrap_or(1.0);
                out.push(OracleSuggestion {
                    target: target.id.clone(),
                    link_type: lt,
                    score: a * text + b * tag + g * prior,
                    text,
                    tag,
                    prior,
                });
            }
        }
        out.sort_by(|x, y| {
            y.score
                .partial_cmp(&x.score)
                .unwrap()
                .then_with(|| x.target.cmp(&y.target))
                .then_with(|| x.link_type.as_str().cmp(y.link_type.as_str()))
        });
        out.truncate(k);
        out
    }
}
