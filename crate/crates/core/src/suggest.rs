//! Link suggestions: every schema-allowed (target, link type) pair leaving an
//! element, scored as a weighted blend of text similarity, ontology tag
//! overlap and a per-triple prior.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::engine::KbState;
use crate::error::{KbError, Result};
use crate::metamodel::{MetaModelSchema, Triple};
use crate::model::{ElementId, ItemId, LinkType};
use crate::ontology::Ontology;

/// Blend weights for text, tag and prior scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub text: f64,
    pub tag: f64,
    pub prior: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            text: 0.6,
            tag: 0.3,
            prior: 0.1,
        }
    }
}

impl Weights {
    pub fn new(text: f64, tag: f64, prior: f64) -> Self {
        Self { text, tag, prior }
    }

    /// Rescales to sum 1. Weights must be finite, non-negative, and not all zero.
    pub fn normalized(self) -> Result<Self> {
        let parts = [self.text, self.tag, self.prior];
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(KbError::InvalidWeights(format!(
                "weights must be finite and non-negative, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if sum <= 0.0 {
            return Err(KbError::InvalidWeights("weights sum to zero".into()));
        }
        Ok(Self {
            text: self.text / sum,
            tag: self.tag / sum,
            prior: self.prior / sum,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuggesterConfig {
    pub weights: Weights,
    /// Prior per schema triple; triples not listed get 1.0.
    pub priors: BTreeMap<Triple, f64>,
}

impl SuggesterConfig {
    pub fn prior(&self, triple: &Triple) -> f64 {
        self.priors.get(triple).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.normalized()?;
        for (triple, p) in &self.priors {
            if !(0.0..=1.0).contains(p) {
                return Err(KbError::Config(format!(
                    "prior for {triple:?} must be in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub text_score: f64,
    pub tag_score: f64,
    pub type_prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub candidate_target: ElementId,
    pub link_type: LinkType,
    pub score: f64,
    pub breakdown: ScoreBreakdown,
    pub rank: usize,
}

/// Jaccard index of two sets; 0 when both are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard overlap of the two tag sets after adding every ontology ancestor.
pub fn tag_score(ontology: &Ontology, a: &BTreeSet<ItemId>, b: &BTreeSet<ItemId>) -> f64 {
    jaccard(&ontology.ancestor_closure(a), &ontology.ancestor_closure(b))
}

pub(crate) fn suggest_links(
    state: &KbState,
    schema: &MetaModelSchema,
    config: &SuggesterConfig,
    element: &ElementId,
    k: usize,
    weights: Option<Weights>,
) -> Result<Vec<Suggestion>> {
    let source = state
        .element(element)
        .ok_or_else(|| KbError::not_found("element", element.as_str()))?;
    if k == 0 {
        return Err(KbError::InvalidArgument("k must be at least 1".into()));
    }
    let w = weights.unwrap_or(config.weights).normalized()?;

    let outgoing: Vec<(LinkType, _)> = schema.outgoing(source.element_type).collect();
    if outgoing.is_empty() {
        return Ok(Vec::new());
    }

    let text_scores: HashMap<ElementId, f64> = state
        .index
        .score_all(&source.indexed_text())
        .into_iter()
        .map(|h| (h.doc_id, h.score.min(1.0)))
        .collect();
    let source_tags = state.ontology.ancestor_closure(&source.tags);

    let mut out = Vec::new();
    for (link_type, target_type) in outgoing {
        let prior = config.prior(&(source.element_type, link_type, target_type));
        for target_id in state.ids_of_type(target_type) {
            if target_id == element
                || state
                    .links
                    .active_link(element, target_id, link_type)
                    .is_some()
            {
                continue;
            }
            let target = state.element(target_id).expect("typed id is stored");
            let text_score = text_scores.get(target_id).copied().unwrap_or(0.0);
            let tag = jaccard(&source_tags, &state.ontology.ancestor_closure(&target.tags));
            let score = w.text * text_score + w.tag * tag + w.prior * prior;
            out.push(Suggestion {
                candidate_target: target_id.clone(),
                link_type,
                score: score.clamp(0.0, 1.0),
                breakdown: ScoreBreakdown {
                    text_score,
                    tag_score: tag,
                    type_prior: prior,
                },
                rank: 0,
            });
        }
    }
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.candidate_target.cmp(&b.candidate_target))
            .then_with(|| a.link_type.as_str().cmp(b.link_type.as_str()))
    });
    out.truncate(k);
    for (i, s) in out.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_rescaled() {
        let w = Weights::new(2.0, 1.0, 1.0).normalized().unwrap();
        assert!((w.text - 0.5).abs() < 1e-15);
        assert!((w.text + w.tag + w.prior - 1.0).abs() < 1e-15);
        assert_eq!(
            Weights::new(-0.1, 0.6, 0.5)
                .normalized()
                .unwrap_err()
                .code(),
            "INVALID_WEIGHTS"
        );
        assert!(Weights::new(0.0, 0.0, 0.0).normalized().is_err());
        assert!(Weights::new(f64::NAN, 1.0, 0.0).normalized().is_err());
    }

    #[test]
    fn jaccard_basics() {
        let a: BTreeSet<u8> = [1, 2, 3].into();
        let b: BTreeSet<u8> = [2, 3, 4].into();
        assert!((jaccard(&a, &b) - 0.5).abs() < 1e-15);
        assert_eq!(jaccard(&a, &b), jaccard(&b, &a));
        assert_eq!(jaccard::<u8>(&BTreeSet::new(), &BTreeSet::new()), 0.0);
        assert_eq!(jaccard(&a, &a), 1.0);
    }

    #[test]
    fn priors_must_be_unit_interval() {
        let mut cfg = SuggesterConfig::default();
        use crate::model::ElementType::*;
        cfg.priors
            .insert((FaitTechnique, LinkType::Concerns, FicheTechnique), 1.5);
        assert!(cfg.validate().is_err());
        assert_eq!(
            SuggesterConfig::default().prior(&(FaitTechnique, LinkType::Concerns, FicheTechnique)),
            1.0
        );
    }
}
