//! Criterion-level checks shared by the crate tests (small sizes) and the
//! acceptance gate (full sizes). Each returns a one-line summary on success.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use rexkb_core::suggest::SuggesterConfig;
use rexkb_core::{
    Direction, ElementDraft, ElementId, ElementType, Engine, EngineConfig, FaitState, Hit,
    LinkDecision, LinkStatus, LinkType, NeighborFilter, PathologieTarget, SimIndex, TimeWindow,
    Tokenizer, TransferMetrics, Weights, WorkflowState,
};

use crate::fixtures::{actor, draft, engine, standard_actors, ADMIN, EXPERT, READER, SPECIALIST};
use crate::gen::{rng, sentence, vocabulary, TestRng};
use crate::oracle::{compare_ranking, default_schema, tfidf_scores, OracleDoc, SuggestWorld};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    }};
}

const SCORE_TOL: f64 = 1e-9;

fn random_type(rng: &mut TestRng) -> ElementType {
    *ElementType::ALL.choose(rng).unwrap()
}

fn compare_hits(label: &str, a: &[Hit], b: &[Hit]) -> Result<(), String> {
    ensure!(
        a.len() == b.len(),
        "{label}: {} vs {} results",
        a.len(),
        b.len()
    );
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        ensure!(
            x.doc_id == y.doc_id,
            "{label}: rank {} differs ({} vs {})",
            i + 1,
            x.doc_id,
            y.doc_id
        );
        ensure!(
            (x.score - y.score).abs() <= SCORE_TOL,
            "{label}: score at rank {} differs ({} vs {})",
            i + 1,
            x.score,
            y.score
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- index

/// Random upserts and removals applied incrementally, then compared with a
/// full rebuild over the surviving documents.
pub fn index_equivalence(seed: u64, operations: usize, queries: usize) -> Outcome {
    let started = Instant::now();
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 400);
    let tokenizer = Arc::new(Tokenizer::default());
    let mut index = SimIndex::new(tokenizer.clone());
    let mut live: BTreeMap<ElementId, (ElementType, String)> = BTreeMap::new();
    let pool = (operations / 3).max(10);
    let (mut upserts, mut removals) = (0, 0);

    for _ in 0..operations {
        let id = ElementId::from(format!("doc-{:05}", rng.gen_range(0..pool)));
        if live.contains_key(&id) && rng.gen_bool(0.3) {
            index.remove_document(&id).map_err(|e| e.to_string())?;
            live.remove(&id);
            removals += 1;
        } else {
            let kind = random_type(&mut rng);
            let len = rng.gen_range(1..40);
            let text = sentence(&mut rng, &vocab, len);
            index.upsert_document(id.clone(), kind, &text);
            live.insert(id, (kind, text));
            upserts += 1;
        }
        // interleave reads so cached norms are exercised across mutations
        if rng.gen_bool(0.05) {
            let q = sentence(&mut rng, &vocab, 3);
            index.query(&q, 10, None).map_err(|e| e.to_string())?;
        }
    }

    let rebuilt = SimIndex::rebuild(
        tokenizer,
        live.iter().map(|(id, (k, t))| (id.clone(), *k, t.clone())),
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        rebuilt.doc_count() == index.doc_count(),
        "document counts differ"
    );
    for term in rebuilt.terms() {
        ensure!(
            rebuilt.document_frequency(term) == index.document_frequency(term),
            "df({term}) differs"
        );
    }
    ensure!(
        rebuilt.vocabulary_len() == index.vocabulary_len(),
        "vocabulary sizes differ"
    );

    for qi in 0..queries {
        let len = rng.gen_range(1..8);
        let q = sentence(&mut rng, &vocab, len);
        let filter = rng
            .gen_bool(0.2)
            .then(|| BTreeSet::from([random_type(&mut rng)]));
        let a = index
            .query(&q, 10, filter.as_ref())
            .map_err(|e| e.to_string())?;
        let b = rebuilt
            .query(&q, 10, filter.as_ref())
            .map_err(|e| e.to_string())?;
        compare_hits(&format!("query {qi}"), &a, &b)?;
    }
    let elapsed = started.elapsed();
    ensure!(
        elapsed < Duration::from_secs(60),
        "took {elapsed:?}, limit 60 s"
    );
    Ok(format!(
        "{upserts} upserts, {removals} removals, {queries} queries identical in {elapsed:.2?}"
    ))
}

/// `query` against the dense brute-force oracle on small random corpora.
pub fn oracle_equivalence(seed: u64, corpora: usize, max_docs: usize) -> Outcome {
    let mut rng = rng(seed);
    let tokenizer = Arc::new(Tokenizer::default());
    let mut checked = 0;
    for c in 0..corpora {
        // a small vocabulary forces term overlap and exact ties
        let size = rng.gen_range(5..60);
        let vocab = vocabulary(&mut rng, size);
        let n = rng.gen_range(1..=max_docs);
        let corpus: Vec<OracleDoc> = (0..n)
            .map(|i| {
                let len = rng.gen_range(0..25);
                OracleDoc::new(
                    format!("c{c}-d{i:02}"),
                    random_type(&mut rng),
                    sentence(&mut rng, &vocab, len),
                )
            })
            .collect();
        let index = SimIndex::rebuild(
            tokenizer.clone(),
            corpus
                .iter()
                .map(|d| (d.id.clone(), d.kind, d.text.clone())),
        )
        .map_err(|e| e.to_string())?;
        for q in 0..10 {
            let len = rng.gen_range(1..6);
            let mut query = sentence(&mut rng, &vocab, len);
            if q % 4 == 0 {
                query.push_str(" inconnuxyz");
            }
            if q % 5 == 0 {
                query = corpus.choose(&mut rng).unwrap().text.clone();
            }
            let filter = (q % 3 == 0).then(|| {
                let mut f = BTreeSet::from([random_type(&mut rng)]);
                f.insert(random_type(&mut rng));
                f
            });
            let k = rng.gen_range(1..=n + 3);
            let expected = tfidf_scores(&tokenizer, &corpus, &query, filter.as_ref());
            let actual = index
                .query(&query, k, filter.as_ref())
                .map_err(|e| e.to_string())?;
            compare_ranking(&actual, &expected, k, SCORE_TOL)
                .map_err(|e| format!("corpus {c}, query {query:?}: {e}"))?;
            checked += 1;
        }
    }
    Ok(format!(
        "{corpora} corpora, {checked} queries match the oracle"
    ))
}

/// Every document with at least one indexed term ranks first for its own
/// text with score 1. Documents with identical term counts tie at 1; the
/// lowest id of such a group is first.
pub fn self_retrieval(seed: u64, docs: usize) -> Outcome {
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 2000);
    let tokenizer = Arc::new(Tokenizer::default());
    let corpus: Vec<(ElementId, ElementType, String)> = (0..docs)
        .map(|i| {
            let len = rng.gen_range(0..30);
            let text = if i % 97 == 0 {
                "de la et le des".to_string()
            } else {
                sentence(&mut rng, &vocab, len)
            };
            (format!("el-{i:06}").into(), random_type(&mut rng), text)
        })
        .collect();
    let index = SimIndex::rebuild(tokenizer.clone(), corpus.clone()).map_err(|e| e.to_string())?;
    let mut checked = 0;
    let mut skipped = 0;
    for (id, _, text) in &corpus {
        if tokenizer.tokenize(text).is_empty() {
            skipped += 1;
            continue;
        }
        let hits = index.query(text, 1, None).map_err(|e| e.to_string())?;
        let top = hits.first().ok_or_else(|| format!("{id}: no result"))?;
        ensure!(
            (top.score - 1.0).abs() <= SCORE_TOL,
            "{id}: top score {}",
            top.score
        );
        if &top.doc_id != id {
            let same = index.term_counts(&top.doc_id) == index.term_counts(id);
            ensure!(same && top.doc_id < *id, "{id}: top-1 is {}", top.doc_id);
        }
        checked += 1;
    }
    Ok(format!(
        "{checked} documents self-retrieved, {skipped} stopword-only skipped"
    ))
}

// ---------------------------------------------------------------- suggester

pub fn small_ontology(kb: &Engine) -> Vec<rexkb_core::ItemId> {
    let ex = actor(EXPERT);
    let root = kb.add_ontology_item(&ex, "Matériaux", None).unwrap().id;
    let corr = kb
        .add_ontology_item(&ex, "Corrosion", Some(root.clone()))
        .unwrap()
        .id;
    let fat = kb
        .add_ontology_item(&ex, "Fatigue", Some(root.clone()))
        .unwrap()
        .id;
    let pit = kb
        .add_ontology_item(&ex, "Piqûres", Some(corr.clone()))
        .unwrap()
        .id;
    let proc_ = kb.add_ontology_item(&ex, "Procédés", None).unwrap().id;
    let weld = kb
        .add_ontology_item(&ex, "Soudage", Some(proc_.clone()))
        .unwrap()
        .id;
    vec![root, corr, fat, pit, proc_, weld]
}

/// Random graphs of typed elements with random links; every suggestion must
/// be schema-allowed, must not duplicate an active link and must be unique.
pub fn schema_safety(seed: u64, total_elements: usize, per_kb: usize) -> Outcome {
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 300);
    let mut created = 0;
    let mut calls = 0;
    let mut suggestions = 0;
    let mut kb_no = 0;
    while created < total_elements {
        kb_no += 1;
        let kb = engine();
        let items = small_ontology(&kb);
        let n = per_kb.min(total_elements - created);
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            let t = random_type(&mut rng);
            let mut d = draft(
                t,
                &sentence(&mut rng, &vocab, 4),
                &sentence(&mut rng, &vocab, 12),
            );
            for _ in 0..rng.gen_range(0..3) {
                d = d.tag(items.choose(&mut rng).unwrap().clone());
            }
            ids.push(
                kb.create_element(&actor(EXPERT), t, d)
                    .map_err(|e| e.to_string())?
                    .id,
            );
        }
        created += n;
        for _ in 0..n * 2 {
            let s = ids.choose(&mut rng).unwrap();
            let t = ids.choose(&mut rng).unwrap();
            let lt = *LinkType::ALL.choose(&mut rng).unwrap();
            if let Ok(link) = kb.propose_link(&actor(EXPERT), s, t, lt) {
                match rng.gen_range(0..3) {
                    0 => {}
                    1 => drop(kb.decide_link(&actor(EXPERT), &link.id, LinkDecision::Validate)),
                    _ => drop(kb.decide_link(&actor(EXPERT), &link.id, LinkDecision::Reject)),
                }
            }
        }
        for id in &ids {
            let weights = rng
                .gen_bool(0.5)
                .then(|| Weights::new(rng.gen(), rng.gen(), rng.gen::<f64>() + 0.01));
            let k = rng.gen_range(1..=n * 6);
            let out = kb
                .suggest_links(id, k, weights)
                .map_err(|e| e.to_string())?;
            calls += 1;
            suggestions += out.len();
            kb.with_state(|st| -> Result<(), String> {
                let src = st.element(id).unwrap().element_type;
                let mut seen = BTreeSet::new();
                for s in &out {
                    let tgt = st.element(&s.candidate_target).unwrap().element_type;
                    ensure!(
                        kb.link_type_allowed(src, s.link_type, tgt),
                        "kb {kb_no}: {id} -{}-> {} violates the schema",
                        s.link_type,
                        s.candidate_target
                    );
                    ensure!(
                        st.links()
                            .active_link(id, &s.candidate_target, s.link_type)
                            .is_none(),
                        "kb {kb_no}: {id} -{}-> {} duplicates an active link",
                        s.link_type,
                        s.candidate_target
                    );
                    ensure!(
                        seen.insert((s.candidate_target.clone(), s.link_type)),
                        "kb {kb_no}: duplicate suggestion"
                    );
                    ensure!(
                        (0.0..=1.0).contains(&s.score),
                        "score {} out of range",
                        s.score
                    );
                }
                Ok(())
            })?;
        }
    }
    Ok(format!(
        "{created} elements in {kb_no} knowledge bases, {calls} suggest calls, {suggestions} suggestions checked"
    ))
}

/// A hand-built six-element knowledge base. Returns the engine and the
/// element ids in creation order.
pub fn six_element_kb(variant: usize) -> (Engine, Vec<ElementId>) {
    use ElementType::*;
    let mut config = EngineConfig::default();
    if variant % 2 == 1 {
        let mut s = SuggesterConfig::default();
        s.priors
            .insert((FaitTechnique, LinkType::Concerns, FicheTechnique), 0.8);
        s.priors
            .insert((FaitTechnique, LinkType::SubjectOf, AvisConcepteur), 0.25);
        s.priors
            .insert((FicheTechnique, LinkType::BasedOn, Fondamental), 0.5);
        config.suggester = s;
    }
    let kb = Engine::with_clock(
        config,
        rexkb_core::audit::Clock::manual(crate::gen::fixed_time()),
    );
    for a in standard_actors() {
        kb.register_actor(a);
    }
    let items = small_ontology(&kb);
    let ex = actor(EXPERT);
    let specs: [(ElementType, &str, &str, &[usize]); 6] = match variant % 3 {
        0 => [
            (
                FaitTechnique,
                "Fuite sur vanne de régulation",
                "fuite goutte à goutte vanne corrodée",
                &[3],
            ),
            (
                FicheTechnique,
                "Vanne de régulation",
                "corps de vanne acier inoxydable corrosion",
                &[1],
            ),
            (
                FicheTechnique,
                "Pompe primaire",
                "pompe centrifuge vibrations palier",
                &[2],
            ),
            (
                ActiviteProcessus,
                "Maintenance préventive",
                "remplacement joints vanne",
                &[],
            ),
            (
                AvisConcepteur,
                "Avis sur la corrosion des vannes",
                "corrosion piqûres inox vanne",
                &[3, 5],
            ),
            (
                Fondamental,
                "Corrosion par piqûres",
                "piqûres chlorures inox",
                &[3],
            ),
        ],
        1 => [
            (
                FaitTechnique,
                "Alarme sur circuit AUGM24",
                "alarme intempestive circuit",
                &[],
            ),
            (
                FaitTechnique,
                "Alarme circuit AUGM25",
                "alarme circuit intempestive répétée",
                &[],
            ),
            (
                FicheTechnique,
                "Architecture du contrôle-commande",
                "automates circuit alarme",
                &[4],
            ),
            (
                ActiviteProcessus,
                "Essais périodiques",
                "essais circuit alarme",
                &[4],
            ),
            (
                AvisConcepteur,
                "Avis sur les alarmes",
                "alarme circuit filtrage",
                &[5],
            ),
            (
                SourceDocumentaire,
                "Procédure TA-6253301A",
                "procédure alarme",
                &[],
            ),
        ],
        _ => [
            (
                AvisConcepteur,
                "Possibilité de déroger à AB.SB.TC02 pour l'IPER",
                "dérogation soudure",
                &[5],
            ),
            (
                RexPathologie,
                "Phénomènes vibratoires",
                "vibrations fatigue soudure",
                &[2, 5],
            ),
            (
                RexPathologie,
                "Corrosion sous contrainte",
                "corrosion fissuration",
                &[1],
            ),
            (
                SourceDocumentaire,
                "Norme de soudage",
                "soudure procédé qualification",
                &[5],
            ),
            (
                SourceDocumentaire,
                "Retour d'expérience vibrations",
                "vibrations fatigue",
                &[2],
            ),
            (
                FaitTechnique,
                "Fissure de soudure",
                "soudure fissurée vibrations",
                &[2, 5],
            ),
        ],
    };
    let mut ids = Vec::new();
    for (t, title, body, tags) in specs {
        let mut d = draft(t, title, body);
        for i in tags {
            d = d.tag(items[*i].clone());
        }
        ids.push(kb.create_element(&ex, t, d).unwrap().id);
    }
    // one active and one rejected link, so exclusion rules are exercised
    let (s, t, lt) = match variant % 3 {
        0 => (0, 1, LinkType::Concerns),
        1 => (0, 2, LinkType::Concerns),
        _ => (0, 3, LinkType::ReferencedIn),
    };
    kb.propose_link(&ex, &ids[s], &ids[t], lt).unwrap();
    let (s, t, lt) = match variant % 3 {
        0 => (0, 3, LinkType::During),
        1 => (1, 3, LinkType::During),
        _ => (0, 1, LinkType::ConsolidatedIn),
    };
    let l = kb.propose_link(&ex, &ids[s], &ids[t], lt).unwrap();
    kb.decide_link(&ex, &l.id, LinkDecision::Reject).unwrap();
    (kb, ids)
}

/// Exhaustive oracle world read from the engine's raw data.
pub fn world_of(kb: &Engine) -> SuggestWorld {
    kb.with_state(|st| {
        let docs = st
            .elements()
            .map(|e| OracleDoc::new(e.id.clone(), e.element_type, e.indexed_text()))
            .collect();
        let tags = st
            .elements()
            .map(|e| (e.id.clone(), e.tags.clone()))
            .collect();
        let parents = st
            .ontology()
            .items()
            .map(|i| (i.id.clone(), i.parent.clone()))
            .collect();
        let active_links = st
            .links()
            .iter()
            .filter(|l| l.status != LinkStatus::Rejected)
            .map(|l| (l.source.clone(), l.target.clone(), l.link_type))
            .collect();
        SuggestWorld {
            docs,
            tags,
            parents,
            active_links,
            schema: default_schema(),
            priors: kb.config().suggester.priors.clone(),
        }
    })
}

/// `suggest_links` against exhaustive enumeration for random weight triples.
pub fn suggester_oracle(seed: u64, triples: usize) -> Outcome {
    let mut rng = rng(seed);
    let tokenizer = Tokenizer::default();
    let mut compared = 0;
    for variant in 0..6 {
        let (kb, ids) = six_element_kb(variant);
        let world = world_of(&kb);
        for _ in 0..triples {
            let mut w = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            if rng.gen_bool(0.15) {
                // a zero component is legal as long as the sum is positive
                w.1 = 0.0;
            }
            w.0 += 1e-3;
            for id in &ids {
                let k = rng.gen_range(1..=12);
                let actual = kb
                    .suggest_links(id, k, Some(Weights::new(w.0, w.1, w.2)))
                    .map_err(|e| e.to_string())?;
                let expected = world.suggest(&tokenizer, id, k, w);
                ensure!(
                    actual.len() == expected.len(),
                    "kb {variant}, {id}, weights {w:?}: {} vs {} suggestions",
                    actual.len(),
                    expected.len()
                );
                for (a, e) in actual.iter().zip(&expected) {
                    let same_pair = a.candidate_target == e.target && a.link_type == e.link_type;
                    ensure!(
                        (a.score - e.score).abs() <= SCORE_TOL,
                        "kb {variant}, {id}, rank {}: score {} vs oracle {}",
                        a.rank,
                        a.score,
                        e.score
                    );
                    // pairs may only swap places inside an exact tie
                    ensure!(
                        same_pair
                            || expected.iter().any(|x| x.target == a.candidate_target
                                && x.link_type == a.link_type
                                && (x.score - e.score).abs() <= 1e-12),
                        "kb {variant}, {id}, rank {}: got {} {}, oracle {} {}",
                        a.rank,
                        a.candidate_target,
                        a.link_type,
                        e.target,
                        e.link_type
                    );
                    if same_pair {
                        ensure!(
                            (a.breakdown.text_score - e.text).abs() <= SCORE_TOL
                                && (a.breakdown.tag_score - e.tag).abs() <= SCORE_TOL
                                && (a.breakdown.type_prior - e.prior).abs() <= SCORE_TOL,
                            "kb {variant}, {id}: breakdown differs"
                        );
                    }
                }
                compared += 1;
            }
        }
    }
    Ok(format!(
        "{compared} suggestion lists match exhaustive enumeration"
    ))
}

// ---------------------------------------------------------------- link graph

/// Random graphs of at least `min_links` links; default traversals and
/// dossiers only ever expose validated links.
pub fn validation_gate(seed: u64, min_links: usize) -> Outcome {
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 100);
    let kb = engine();
    let mut ids = Vec::new();
    for _ in 0..(min_links / 4).max(20) {
        let t = random_type(&mut rng);
        let title = sentence(&mut rng, &vocab, 3);
        ids.push(
            kb.create_element(&actor(EXPERT), t, draft(t, &title, &title))
                .unwrap()
                .id,
        );
    }
    let schema = default_schema();
    let mut attempts = 0;
    while kb.with_state(|st| st.links().len()) < min_links {
        attempts += 1;
        ensure!(
            attempts < min_links * 200,
            "could not build {min_links} links"
        );
        let s = ids.choose(&mut rng).unwrap();
        let st = kb.element(s).unwrap().element_type;
        let allowed: Vec<_> = schema.iter().filter(|t| t.0 == st).collect();
        let Some(&&(_, lt, tt)) = allowed.choose(&mut rng) else {
            continue;
        };
        let targets: Vec<_> = ids
            .iter()
            .filter(|i| kb.element(i).unwrap().element_type == tt)
            .collect();
        let Some(t) = targets.choose(&mut rng) else {
            continue;
        };
        let Ok(link) = kb.propose_link(&actor(EXPERT), s, t, lt) else {
            continue;
        };
        match rng.gen_range(0..3) {
            0 => {}
            1 => drop(
                kb.decide_link(&actor(EXPERT), &link.id, LinkDecision::Validate)
                    .unwrap(),
            ),
            _ => drop(
                kb.decide_link(&actor(EXPERT), &link.id, LinkDecision::Reject)
                    .unwrap(),
            ),
        }
    }
    let links: Vec<_> = kb.with_state(|st| st.links().iter().cloned().collect());
    let validated: BTreeSet<_> = links
        .iter()
        .filter(|l| l.status == LinkStatus::Validated)
        .map(|l| l.id.clone())
        .collect();
    let mut exposed = 0;
    for id in &ids {
        for dir in [Direction::Out, Direction::In, Direction::Both] {
            for n in kb
                .neighbors(id, &NeighborFilter::default().with_direction(dir))
                .map_err(|e| e.to_string())?
            {
                ensure!(
                    validated.contains(&n.link.id),
                    "{} exposed by neighbors",
                    n.link.id
                );
                exposed += 1;
            }
        }
        if kb.element(id).unwrap().element_type == ElementType::FaitTechnique {
            let d = kb.assemble_dossier(id).map_err(|e| e.to_string())?;
            // every member must be reachable along validated links only
            let reach = |from: &BTreeSet<ElementId>, lt: LinkType| -> BTreeSet<ElementId> {
                links
                    .iter()
                    .filter(|l| {
                        l.status == LinkStatus::Validated
                            && l.link_type == lt
                            && from.contains(&l.source)
                    })
                    .map(|l| l.target.clone())
                    .collect()
            };
            let fait = BTreeSet::from([id.clone()]);
            let equipment = reach(&fait, LinkType::Concerns);
            let advisories = reach(&fait, LinkType::SubjectOf);
            let pathologies = reach(&advisories, LinkType::ConsolidatedIn);
            let mut sources = reach(&advisories, LinkType::ReferencedIn);
            sources.extend(reach(&pathologies, LinkType::ReferencedIn));
            let set = |v: &[ElementId]| v.iter().cloned().collect::<BTreeSet<_>>();
            ensure!(set(&d.equipment) == equipment, "{id}: equipment differs");
            ensure!(
                set(&d.activities) == reach(&fait, LinkType::During),
                "{id}: activities differ"
            );
            ensure!(
                set(&d.fundamentals) == reach(&equipment, LinkType::BasedOn),
                "{id}: fundamentals differ"
            );
            ensure!(
                set(&d.prior_advisories) == advisories,
                "{id}: advisories differ"
            );
            ensure!(
                set(&d.pathologies) == pathologies,
                "{id}: pathologies differ"
            );
            ensure!(set(&d.sources) == sources, "{id}: sources differ");
        }
    }
    Ok(format!(
        "{} links ({} validated), {exposed} neighbor entries checked",
        links.len(),
        validated.len()
    ))
}

// ---------------------------------------------------------------- workflow

/// Full observable state, used to check that rejected calls change nothing.
pub fn fingerprint(kb: &Engine) -> String {
    let export = kb.export_string(&actor(ADMIN)).expect("admin export");
    let (audit, index) = kb.with_state(|st| (st.audit_log().len(), st.index().dump()));
    format!("{export}\n{audit}\n{index:?}")
}

fn check_invariants(
    kb: &Engine,
    before: &BTreeMap<ElementId, WorkflowState>,
) -> Result<BTreeMap<ElementId, WorkflowState>, String> {
    kb.with_state(|st| {
        let mut now = BTreeMap::new();
        for fs in st.workflow_states() {
            check_fait(st, fs)?;
            if let Some(prev) = before.get(&fs.fait) {
                ensure!(
                    fs.state == *prev || prev.next() == Some(fs.state),
                    "{} jumped from {prev} to {}",
                    fs.fait,
                    fs.state
                );
            } else {
                ensure!(
                    fs.state == WorkflowState::Declared,
                    "{} appeared as {}",
                    fs.fait,
                    fs.state
                );
            }
            now.insert(fs.fait.clone(), fs.state);
        }
        ensure!(
            before.keys().all(|k| now.contains_key(k)),
            "a workflow state disappeared"
        );
        for l in st.links().iter() {
            let s = st
                .element(&l.source)
                .ok_or("dangling link source")?
                .element_type;
            let t = st
                .element(&l.target)
                .ok_or("dangling link target")?
                .element_type;
            ensure!(
                kb.link_type_allowed(s, l.link_type, t),
                "{} violates the schema",
                l.id
            );
            ensure!(l.audit_consistent(), "{} audit fields inconsistent", l.id);
        }
        ensure!(
            st.index().doc_count() == st.elements().count()
                && st.elements().all(|e| st.index().contains(&e.id)),
            "index out of step with elements"
        );
        Ok(now)
    })
}

fn check_fait(st: &rexkb_core::KbState, fs: &FaitState) -> Result<(), String> {
    let el = st
        .element(&fs.fait)
        .ok_or("workflow state without element")?;
    ensure!(
        el.element_type == ElementType::FaitTechnique,
        "{} is not a fact",
        fs.fait
    );
    ensure!(fs.is_consistent(), "{} history inconsistent", fs.fait);
    if fs.state >= WorkflowState::UnderAnalysis {
        ensure!(fs.analyst.is_some(), "{} has no analyst", fs.fait);
        ensure!(
            fs.similar_snapshot().is_some(),
            "{} has no snapshot",
            fs.fait
        );
    }
    let advisories = st.links().validated_targets(&fs.fait, LinkType::SubjectOf);
    if fs.state >= WorkflowState::AvisIssued {
        ensure!(
            !advisories.is_empty(),
            "{} issued without advisory",
            fs.fait
        );
    }
    if fs.state == WorkflowState::Consolidated {
        ensure!(
            advisories.iter().any(|a| !st
                .links()
                .validated_targets(a, LinkType::ConsolidatedIn)
                .is_empty()),
            "{} consolidated without pathology",
            fs.fait
        );
    }
    Ok(())
}

/// Random workflow action sequences with injected faults. After every call
/// the invariants hold; failed calls leave the state byte-identical.
pub fn workflow_soundness(seed: u64, sequences: usize, steps: usize) -> Outcome {
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 60);
    let actors = [READER, SPECIALIST, EXPERT, ADMIN, "intruder"];
    let (mut ok, mut rejected, mut faults) = (0usize, 0usize, 0usize);
    for seq in 0..sequences {
        let kb = engine();
        let mut states = BTreeMap::new();
        for step in 0..steps {
            let ids: Vec<ElementId> =
                kb.with_state(|st| st.elements().map(|e| e.id.clone()).collect());
            let links: Vec<_> =
                kb.with_state(|st| st.links().iter().map(|l| l.id.clone()).collect());
            let pick = |rng: &mut TestRng| -> ElementId {
                if ids.is_empty() || rng.gen_bool(0.05) {
                    "el-999999".into()
                } else {
                    ids.choose(rng).unwrap().clone()
                }
            };
            let who = actor(if rng.gen_bool(0.8) {
                [SPECIALIST, EXPERT, ADMIN].choose(&mut rng).unwrap()
            } else {
                actors.choose(&mut rng).unwrap()
            });
            let text = sentence(&mut rng, &vocab, 5);
            let armed = rng.gen_bool(0.15);
            if armed {
                kb.arm_fault(rng.gen_range(0..4));
            }
            let before = fingerprint(&kb);
            let action = rng.gen_range(0..9);
            let result: Result<(), rexkb_core::KbError> = match action {
                0 | 1 => kb
                    .declare_fait(&who, draft(ElementType::FaitTechnique, &text, &text))
                    .map(drop),
                2 => kb.start_analysis(&who, &pick(&mut rng)).map(drop),
                3 => kb
                    .issue_avis(
                        &who,
                        &pick(&mut rng),
                        draft(ElementType::AvisConcepteur, &text, &text),
                    )
                    .map(drop),
                4 => {
                    let avis: Vec<ElementId> = kb.with_state(|st| {
                        st.ids_of_type(ElementType::AvisConcepteur)
                            .cloned()
                            .collect()
                    });
                    let count = rng.gen_range(0..3);
                    let mut chosen: Vec<ElementId> =
                        avis.choose_multiple(&mut rng, count).cloned().collect();
                    if rng.gen_bool(0.1) {
                        chosen.push(pick(&mut rng));
                    }
                    let target = if rng.gen_bool(0.7) {
                        PathologieTarget::New(draft(ElementType::RexPathologie, &text, &text))
                    } else {
                        PathologieTarget::Existing(pick(&mut rng))
                    };
                    kb.consolidate(&who, &chosen, target).map(drop)
                }
                5 => kb
                    .propose_link(
                        &who,
                        &pick(&mut rng),
                        &pick(&mut rng),
                        *LinkType::ALL.choose(&mut rng).unwrap(),
                    )
                    .map(drop),
                6 => match links.choose(&mut rng) {
                    Some(l) => {
                        let d = if rng.gen_bool(0.6) {
                            LinkDecision::Validate
                        } else {
                            LinkDecision::Reject
                        };
                        kb.decide_link(&who, l, d).map(drop)
                    }
                    None => Ok(()),
                },
                7 => kb.validate_element(&who, &pick(&mut rng)).map(drop),
                _ => kb
                    .create_element(&who, random_type(&mut rng), ElementDraft::new(text.clone()))
                    .map(drop),
            };
            match &result {
                Ok(()) => ok += 1,
                Err(e) => {
                    rejected += 1;
                    if e.code() == "INJECTED_FAULT" {
                        faults += 1;
                    }
                    ensure!(
                        fingerprint(&kb) == before,
                        "sequence {seq}, step {step}: rejected action {action} ({}) changed the state",
                        e.code()
                    );
                }
            }
            // a fault armed for a call rejected before writing would leak into the next one
            if armed {
                kb.disarm_fault();
            }
            states = check_invariants(&kb, &states)
                .map_err(|e| format!("sequence {seq}, step {step}: {e}"))?;
        }
    }
    ensure!(faults > 0, "no injected fault ever fired");
    Ok(format!(
        "{sequences} sequences, {ok} accepted and {rejected} rejected calls ({faults} injected faults)"
    ))
}

// ---------------------------------------------------------------- metrics

/// Counter increments expected after each scripted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub transmission: u64,
    pub absorption_use: u64,
    pub enrichment: u64,
}

impl Tally {
    const fn new(transmission: u64, absorption_use: u64, enrichment: u64) -> Self {
        Self {
            transmission,
            absorption_use,
            enrichment,
        }
    }
}

/// The scripted scenario and its hand-counted event log.
pub fn transfer_metrics_script() -> Outcome {
    let kb = engine();
    let (sp, ex) = (actor(SPECIALIST), actor(EXPERT));
    let fait = |title: &str| {
        draft(
            ElementType::FaitTechnique,
            title,
            "vibrations anormales pompe primaire palier",
        )
    };
    let mut log: Vec<(&str, Tally, TransferMetrics)> = Vec::new();
    let mut mark = |label: &'static str, tally: Tally| {
        log.push((label, tally, kb.transfer_metrics(TimeWindow::all())));
    };

    let (f1, _) = kb
        .declare_fait(&sp, fait("Vibrations pompe primaire"))
        .unwrap();
    mark("declare F1", Tally::new(0, 0, 0));
    kb.start_analysis(&sp, &f1.id).unwrap();
    mark("analyse F1", Tally::new(0, 0, 0));
    let a1 = kb
        .issue_avis(
            &ex,
            &f1.id,
            draft(
                ElementType::AvisConcepteur,
                "Avis vibrations",
                "équilibrer la roue",
            ),
        )
        .unwrap()
        .avis;
    mark("issue A1 (avis + subject_of link)", Tally::new(0, 0, 2));
    let (f2, _) = kb
        .declare_fait(&sp, fait("Vibrations pompe secondaire"))
        .unwrap();
    mark("declare F2", Tally::new(0, 0, 0));
    let st = kb.start_analysis(&sp, &f2.id).unwrap();
    let snapshot = st.similar_snapshot().unwrap();
    if !snapshot
        .iter()
        .any(|e| e.fait == f1.id && e.advisories.contains(&a1.id))
    {
        return Err("F1 and its advisory are missing from F2's similar events".into());
    }
    mark("analyse F2", Tally::new(0, 0, 0));
    // Reading the snapshot surfaced A1; re-using it counts as absorption.
    let l = kb
        .propose_link(&sp, &f2.id, &a1.id, LinkType::SubjectOf)
        .unwrap();
    mark("propose F2 subject_of A1", Tally::new(0, 1, 0));
    kb.decide_link(&ex, &l.id, LinkDecision::Validate).unwrap();
    mark("validate link", Tally::new(0, 0, 1));
    kb.assemble_dossier(&f2.id).unwrap();
    mark("dossier F2", Tally::new(1, 0, 0));
    kb.read_element(&a1.id).unwrap();
    mark("read A1", Tally::new(1, 0, 0));
    kb.element(&a1.id).unwrap();
    kb.similar_events(&f2.id, 5).unwrap();
    mark("internal lookups", Tally::new(0, 0, 0));
    let pompe = kb
        .create_element(
            &sp,
            ElementType::FicheTechnique,
            draft(ElementType::FicheTechnique, "Pompe primaire", "pompe"),
        )
        .unwrap();
    mark("create fiche", Tally::new(0, 0, 0));
    kb.propose_link(&sp, &f2.id, &pompe.id, LinkType::Concerns)
        .unwrap();
    mark(
        "propose F2 concerns fiche (not surfaced)",
        Tally::new(0, 0, 0),
    );
    kb.validate_element(&ex, &pompe.id).unwrap();
    mark("validate fiche", Tally::new(0, 0, 1));
    let a2 = kb
        .issue_avis(
            &ex,
            &f2.id,
            draft(
                ElementType::AvisConcepteur,
                "Avis F2",
                "surveiller le palier",
            ),
        )
        .unwrap()
        .avis;
    mark("issue A2", Tally::new(0, 0, 2));
    let rejected = kb.consolidate(
        &sp,
        std::slice::from_ref(&a1.id),
        PathologieTarget::New(ElementDraft::new("x")),
    );
    if rejected.is_ok() {
        return Err("specialist consolidation was accepted".into());
    }
    mark("rejected consolidation", Tally::new(0, 0, 0));
    let c = kb
        .consolidate(
            &ex,
            &[a1.id.clone(), a2.id.clone()],
            PathologieTarget::New(draft(
                ElementType::RexPathologie,
                "Phénomènes vibratoires",
                "vibrations",
            )),
        )
        .unwrap();
    if c.faits.len() != 2 {
        return Err(format!("{} facts consolidated, expected 2", c.faits.len()));
    }
    mark("consolidate (pathology + 2 links)", Tally::new(0, 0, 3));

    let mut expected = Tally::default();
    for (label, tally, actual) in &log {
        expected.transmission += tally.transmission;
        expected.absorption_use += tally.absorption_use;
        expected.enrichment += tally.enrichment;
        let got = Tally::new(
            actual.transmission,
            actual.absorption_use,
            actual.enrichment,
        );
        if got != expected {
            return Err(format!("after {label}: expected {expected:?}, got {got:?}"));
        }
    }
    // per-event windows see exactly that event's increments
    let events = kb.audit_log();
    for ev in &events {
        let w = TimeWindow {
            from: Some(ev.at),
            to: Some(ev.at),
        };
        let m = kb.transfer_metrics(w);
        if m.enrichment != u64::from(ev.enrichment) || m.absorption_use != u64::from(ev.absorption)
        {
            return Err(format!(
                "window at event {} disagrees with its counters",
                ev.seq
            ));
        }
    }
    Ok(format!(
        "transmission {}, absorption {}, enrichment {} over {} steps",
        expected.transmission,
        expected.absorption_use,
        expected.enrichment,
        log.len()
    ))
}

// ---------------------------------------------------------------- scale

#[derive(Debug, Clone)]
pub struct ScaleReport {
    pub import: Duration,
    pub p95: Duration,
    pub summary: String,
}

/// Bulk import, similar-query latency, and export→import round trip.
pub fn scale(seed: u64, elements: usize, queries: usize) -> Result<ScaleReport, String> {
    use crate::gen::synthetic_elements_jsonl;
    let jsonl = synthetic_elements_jsonl(seed, elements);
    let kb = engine();
    let admin = actor(ADMIN);
    let started = Instant::now();
    let report = kb
        .bulk_import(&admin, jsonl.as_bytes())
        .map_err(|e| e.to_string())?;
    let import = started.elapsed();
    ensure!(
        report.rejected.is_empty(),
        "import rejected {:?}",
        report.rejected.first()
    );
    ensure!(
        report.accepted["element"] == elements,
        "accepted {:?}",
        report.accepted
    );

    // some graph structure so the round trip covers links and workflow too
    let mut rng = rng(seed ^ 0x5ca1e);
    let faits: Vec<ElementId> = kb.with_state(|st| {
        st.ids_of_type(ElementType::FaitTechnique)
            .cloned()
            .collect()
    });
    let fiches: Vec<ElementId> = kb.with_state(|st| {
        st.ids_of_type(ElementType::FicheTechnique)
            .cloned()
            .collect()
    });
    for f in faits.iter().take(200) {
        let t = fiches.choose(&mut rng).unwrap();
        let l = kb
            .propose_link(&actor(EXPERT), f, t, LinkType::Concerns)
            .map_err(|e| e.to_string())?;
        if rng.gen_bool(0.5) {
            kb.decide_link(&actor(EXPERT), &l.id, LinkDecision::Validate)
                .map_err(|e| e.to_string())?;
        }
    }
    for i in 0..20 {
        let (el, _) = kb
            .declare_fait(
                &actor(SPECIALIST),
                draft(
                    ElementType::FaitTechnique,
                    &format!("Nouveau fait {i}"),
                    "vibrations",
                ),
            )
            .map_err(|e| e.to_string())?;
        kb.start_analysis(&actor(SPECIALIST), &el.id)
            .map_err(|e| e.to_string())?;
    }

    let titles: Vec<(ElementId, String)> = kb.with_state(|st| {
        st.elements()
            .map(|e| (e.id.clone(), e.indexed_text()))
            .collect()
    });
    let sample: Vec<&(ElementId, String)> = titles.choose_multiple(&mut rng, queries).collect();
    let mut latencies = Vec::with_capacity(queries);
    for (_, text) in &sample {
        let t = Instant::now();
        let hits = kb.search(text, 10, None).map_err(|e| e.to_string())?;
        latencies.push(t.elapsed());
        ensure!(!hits.is_empty(), "no hit for an indexed text");
    }
    let mut similar = Vec::with_capacity(queries);
    for f in faits.choose_multiple(&mut rng, queries) {
        let t = Instant::now();
        kb.similar_events(f, 10).map_err(|e| e.to_string())?;
        similar.push(t.elapsed());
    }
    let p95 = percentile_95(&mut latencies).max(percentile_95(&mut similar));

    let exported = kb.export_string(&admin).map_err(|e| e.to_string())?;
    let copy = engine();
    let r2 = copy
        .bulk_import(&admin, exported.as_bytes())
        .map_err(|e| e.to_string())?;
    ensure!(
        r2.rejected.is_empty(),
        "re-import rejected {:?}",
        r2.rejected.first()
    );
    ensure!(
        copy.export_string(&admin).map_err(|e| e.to_string())? == exported,
        "re-export differs"
    );
    ensure!(copy.stats() == kb.stats(), "stats differ after round trip");
    for (id, text) in sample.iter().take(50) {
        let a = kb.search(text, 10, None).map_err(|e| e.to_string())?;
        let b = copy.search(text, 10, None).map_err(|e| e.to_string())?;
        compare_hits("round-trip search", &a, &b)?;
        let a = kb.suggest_links(id, 10, None).map_err(|e| e.to_string())?;
        let b = copy
            .suggest_links(id, 10, None)
            .map_err(|e| e.to_string())?;
        ensure!(a == b, "suggestions for {id} differ after round trip");
    }
    for f in faits.iter().take(50) {
        ensure!(
            kb.dossier_unrecorded(f)? == copy.dossier_unrecorded(f)?,
            "dossier of {f} differs after round trip"
        );
        ensure!(
            kb.similar_events(f, 10).map_err(|e| e.to_string())?
                == copy.similar_events(f, 10).map_err(|e| e.to_string())?,
            "similar events of {f} differ after round trip"
        );
    }
    Ok(ScaleReport {
        import,
        p95,
        summary: format!(
            "{elements} elements imported in {import:.2?}, top-10 search/similar p95 {p95:.2?} over {queries} queries each, round trip identical"
        ),
    })
}

fn percentile_95(samples: &mut [Duration]) -> Duration {
    samples.sort();
    samples
        .get((samples.len() * 95).div_ceil(100).saturating_sub(1))
        .copied()
        .unwrap_or_default()
}

trait DossierExt {
    fn dossier_unrecorded(&self, fait: &ElementId) -> Result<rexkb_core::FaitDossier, String>;
}

impl DossierExt for Engine {
    fn dossier_unrecorded(&self, fait: &ElementId) -> Result<rexkb_core::FaitDossier, String> {
        self.with_state(|st| st.dossier(fait))
            .map_err(|e| e.to_string())
    }
}
