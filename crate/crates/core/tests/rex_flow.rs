use proptest::prelude::*;
use rexkb_core::{
    ElementDraft, ElementType, LinkStatus, LinkType, PathologieTarget, TimeWindow, WorkflowState,
};
use rexkb_testkit::fixtures::{actor, draft, engine, ADMIN, EXPERT, READER, SPECIALIST};
use rexkb_testkit::scenarios::{self, fingerprint};

fn fait(title: &str) -> ElementDraft {
    draft(
        ElementType::FaitTechnique,
        title,
        "vibrations anormales sur la pompe",
    )
}

fn avis(title: &str) -> ElementDraft {
    draft(
        ElementType::AvisConcepteur,
        title,
        "analyse et recommandation",
    )
}

#[test]
fn declare_then_analyse_then_issue() {
    let kb = engine();
    let (el, st) = kb
        .declare_fait(&actor(SPECIALIST), fait("Vibrations pompe"))
        .unwrap();
    assert_eq!(el.element_type, ElementType::FaitTechnique);
    assert_eq!(st.state, WorkflowState::Declared);
    assert_eq!(st.history.len(), 1);

    let st = kb.start_analysis(&actor(SPECIALIST), &el.id).unwrap();
    assert_eq!(st.state, WorkflowState::UnderAnalysis);
    assert_eq!(st.analyst, Some(actor(SPECIALIST)));
    assert_eq!(st.similar_snapshot().unwrap(), &[]);

    let issued = kb
        .issue_avis(
            &actor(EXPERT),
            &el.id,
            avis("Possibilité de déroger à AB.SB.TC02 pour l'IPER"),
        )
        .unwrap();
    assert_eq!(issued.fait.state, WorkflowState::AvisIssued);
    assert_eq!(issued.link.link_type, LinkType::SubjectOf);
    assert_eq!(issued.link.status, LinkStatus::Validated);
    assert_eq!(issued.link.source, el.id);
    assert_eq!(issued.link.target, issued.avis.id);
    assert!(issued.fait.is_consistent());
    assert_eq!(kb.fait_state(&el.id).unwrap(), issued.fait);
}

#[test]
fn similar_events_are_snapshotted_at_analysis_start() {
    let kb = engine();
    let (f1, _) = kb
        .declare_fait(&actor(SPECIALIST), fait("Vibrations pompe primaire"))
        .unwrap();
    kb.start_analysis(&actor(SPECIALIST), &f1.id).unwrap();
    let a1 = kb
        .issue_avis(&actor(EXPERT), &f1.id, avis("Avis"))
        .unwrap()
        .avis;
    let (f2, _) = kb
        .declare_fait(&actor(SPECIALIST), fait("Vibrations pompe secondaire"))
        .unwrap();
    let st = kb.start_analysis(&actor(SPECIALIST), &f2.id).unwrap();
    let snap = st.similar_snapshot().unwrap();
    assert_eq!(snap.len(), 1);
    assert_eq!(snap[0].fait, f1.id);
    assert_eq!(snap[0].advisories, vec![a1.id]);
    assert!(snap[0].score > 0.0);
    // later facts do not change a stored snapshot
    kb.declare_fait(&actor(SPECIALIST), fait("Vibrations pompe tertiaire"))
        .unwrap();
    assert_eq!(
        kb.fait_state(&f2.id).unwrap().similar_snapshot().unwrap(),
        snap
    );
}

#[test]
fn illegal_transitions_are_rejected() {
    let kb = engine();
    let (el, _) = kb.declare_fait(&actor(SPECIALIST), fait("Fuite")).unwrap();
    let before = fingerprint(&kb);
    assert_eq!(
        kb.issue_avis(&actor(EXPERT), &el.id, avis("Trop tôt"))
            .unwrap_err()
            .code(),
        "ILLEGAL_TRANSITION"
    );
    assert_eq!(fingerprint(&kb), before);
    kb.start_analysis(&actor(SPECIALIST), &el.id).unwrap();
    assert_eq!(
        kb.start_analysis(&actor(SPECIALIST), &el.id)
            .unwrap_err()
            .code(),
        "ILLEGAL_TRANSITION"
    );
    assert_eq!(
        kb.start_analysis(&actor(READER), &el.id)
            .unwrap_err()
            .code(),
        "PERMISSION_DENIED"
    );
    assert_eq!(
        kb.issue_avis(&actor(SPECIALIST), &el.id, avis("x"))
            .unwrap_err()
            .code(),
        "PERMISSION_DENIED"
    );
    let fiche = kb
        .create_element(
            &actor(EXPERT),
            ElementType::FicheTechnique,
            ElementDraft::new("Pompe"),
        )
        .unwrap();
    assert_eq!(
        kb.start_analysis(&actor(EXPERT), &fiche.id)
            .unwrap_err()
            .code(),
        "WRONG_TYPE"
    );
    assert_eq!(
        kb.start_analysis(&actor(EXPERT), &"el-999999".into())
            .unwrap_err()
            .code(),
        "NOT_FOUND"
    );
}

#[test]
fn consolidation_moves_every_affected_fact() {
    let kb = engine();
    let mut avis_ids = Vec::new();
    let mut faits = Vec::new();
    for title in ["Vibrations pompe A", "Vibrations pompe B"] {
        let (el, _) = kb.declare_fait(&actor(SPECIALIST), fait(title)).unwrap();
        kb.start_analysis(&actor(SPECIALIST), &el.id).unwrap();
        avis_ids.push(
            kb.issue_avis(&actor(EXPERT), &el.id, avis(title))
                .unwrap()
                .avis
                .id,
        );
        faits.push(el.id);
    }
    let c = kb
        .consolidate(
            &actor(EXPERT),
            &avis_ids,
            PathologieTarget::New(draft(
                ElementType::RexPathologie,
                "Phénomènes vibratoires",
                "synthèse",
            )),
        )
        .unwrap();
    assert_eq!(c.pathologie.element_type, ElementType::RexPathologie);
    assert_eq!(c.links.len(), 2);
    assert!(c
        .links
        .iter()
        .all(|l| l.link_type == LinkType::ConsolidatedIn && l.status == LinkStatus::Validated));
    for f in &faits {
        assert_eq!(kb.fait_state(f).unwrap().state, WorkflowState::Consolidated);
        assert_eq!(
            kb.with_state(|st| st.dossier(f).unwrap().pathologies),
            vec![c.pathologie.id.clone()]
        );
    }
    // re-consolidating into the same pathology is a duplicate link
    let err = kb
        .consolidate(
            &actor(ADMIN),
            &avis_ids[..1],
            PathologieTarget::Existing(c.pathologie.id.clone()),
        )
        .unwrap_err();
    assert!(
        matches!(err.code(), "DUPLICATE_LINK" | "ILLEGAL_TRANSITION"),
        "{}",
        err.code()
    );
}

#[test]
fn consolidation_requires_issued_advisories() {
    let kb = engine();
    let (el, _) = kb.declare_fait(&actor(SPECIALIST), fait("Fuite")).unwrap();
    kb.start_analysis(&actor(SPECIALIST), &el.id).unwrap();
    let a = kb
        .issue_avis(&actor(EXPERT), &el.id, avis("Avis"))
        .unwrap()
        .avis;
    let patho = kb
        .create_element(
            &actor(EXPERT),
            ElementType::RexPathologie,
            ElementDraft::new("Corrosion sous contrainte"),
        )
        .unwrap();
    assert_eq!(
        kb.consolidate(
            &actor(EXPERT),
            &[],
            PathologieTarget::Existing(patho.id.clone())
        )
        .unwrap_err()
        .code(),
        "INVALID_ARGUMENT"
    );
    assert_eq!(
        kb.consolidate(
            &actor(EXPERT),
            std::slice::from_ref(&el.id),
            PathologieTarget::Existing(patho.id.clone())
        )
        .unwrap_err()
        .code(),
        "WRONG_TYPE"
    );
    assert_eq!(
        kb.consolidate(
            &actor(SPECIALIST),
            std::slice::from_ref(&a.id),
            PathologieTarget::Existing(patho.id.clone())
        )
        .unwrap_err()
        .code(),
        "PERMISSION_DENIED"
    );
    let c = kb
        .consolidate(
            &actor(EXPERT),
            std::slice::from_ref(&a.id),
            PathologieTarget::Existing(patho.id.clone()),
        )
        .unwrap();
    assert_eq!(c.faits.len(), 1);
    assert_eq!(c.pathologie.id, patho.id);
}

#[test]
fn composite_operations_are_atomic_under_injected_faults() {
    for steps in 0..3 {
        let kb = engine();
        let (el, _) = kb.declare_fait(&actor(SPECIALIST), fait("Fuite")).unwrap();
        kb.start_analysis(&actor(SPECIALIST), &el.id).unwrap();
        let before = fingerprint(&kb);
        kb.arm_fault(steps);
        let err = kb
            .issue_avis(&actor(EXPERT), &el.id, avis("Avis"))
            .unwrap_err();
        assert_eq!(err.code(), "INJECTED_FAULT");
        assert_eq!(fingerprint(&kb), before, "fault after {steps} steps");
        // the fault is one-shot
        kb.issue_avis(&actor(EXPERT), &el.id, avis("Avis")).unwrap();
    }

    for steps in 0..5 {
        let kb = engine();
        let mut ids = Vec::new();
        for t in ["A", "B"] {
            let (el, _) = kb.declare_fait(&actor(SPECIALIST), fait(t)).unwrap();
            kb.start_analysis(&actor(SPECIALIST), &el.id).unwrap();
            ids.push(
                kb.issue_avis(&actor(EXPERT), &el.id, avis(t))
                    .unwrap()
                    .avis
                    .id,
            );
        }
        let before = fingerprint(&kb);
        kb.arm_fault(steps);
        let err = kb
            .consolidate(
                &actor(EXPERT),
                &ids,
                PathologieTarget::New(ElementDraft::new("Pathologie")),
            )
            .unwrap_err();
        assert_eq!(err.code(), "INJECTED_FAULT");
        assert_eq!(fingerprint(&kb), before, "fault after {steps} steps");
        let search = kb.search("pathologie", 5, None).unwrap();
        assert!(search.is_empty(), "a rolled-back element is still indexed");
    }
}

#[test]
fn workflow_soundness_small() {
    scenarios::workflow_soundness(7, 200, 12).unwrap();
}

#[test]
fn transfer_metrics_script() {
    scenarios::transfer_metrics_script().unwrap();
}

#[test]
fn empty_window_counts_nothing() {
    let kb = engine();
    let (el, _) = kb.declare_fait(&actor(SPECIALIST), fait("Fuite")).unwrap();
    kb.read_element(&el.id).unwrap();
    let later = kb.now() + chrono::Duration::days(1);
    let m = kb.transfer_metrics(TimeWindow {
        from: Some(later),
        to: None,
    });
    assert_eq!(m, Default::default());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nested_windows_count_no_more(a in 0i64..40, b in 0i64..40, c in 0i64..40, d in 0i64..40) {
        let kb = engine();
        let start = kb.now();
        for i in 0..4 {
            let (el, _) = kb.declare_fait(&actor(SPECIALIST), fait(&format!("Fuite {i} vanne"))).unwrap();
            kb.read_element(&el.id).unwrap();
            kb.start_analysis(&actor(SPECIALIST), &el.id).unwrap();
            kb.issue_avis(&actor(EXPERT), &el.id, avis("Avis")).unwrap();
        }
        let mut bounds = [a, b, c, d];
        bounds.sort();
        let at = |s: i64| start + chrono::Duration::seconds(s);
        let outer = TimeWindow { from: Some(at(bounds[0])), to: Some(at(bounds[3])) };
        let inner = TimeWindow { from: Some(at(bounds[1])), to: Some(at(bounds[2])) };
        let (mo, mi) = (kb.transfer_metrics(outer), kb.transfer_metrics(inner));
        let all = kb.transfer_metrics(TimeWindow::all());
        prop_assert!(mi.transmission <= mo.transmission && mo.transmission <= all.transmission);
        prop_assert!(mi.enrichment <= mo.enrichment && mo.enrichment <= all.enrichment);
        prop_assert!(mi.absorption_use <= mo.absorption_use);
        prop_assert_eq!(all.transmission, 4);
        prop_assert_eq!(all.enrichment, 8);
    }
}
