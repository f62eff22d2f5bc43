use rexkb_core::{Action, ContentStatus, Decision, ElementDraft, ElementType, ItemId, Section};
use rexkb_testkit::fixtures::{actor, draft, engine, ADMIN, EXPERT, READER, SPECIALIST};

#[test]
fn create_element_stores_a_draft() {
    let kb = engine();
    let el = kb
        .create_element(
            &actor(EXPERT),
            ElementType::FaitTechnique,
            draft(
                ElementType::FaitTechnique,
                "Alarme sur circuit AUGM24",
                "alarme",
            ),
        )
        .unwrap();
    assert_eq!(el.content_status, ContentStatus::Draft);
    assert_eq!(el.sections.len(), 3);
    assert!(el.updated_at >= el.created_at);
    assert_eq!(kb.element(&el.id).unwrap(), el);

    let fond = kb
        .create_element(
            &actor(EXPERT),
            ElementType::Fondamental,
            draft(
                ElementType::Fondamental,
                "Corrosion des métaux",
                "oxydation",
            ),
        )
        .unwrap();
    assert_eq!(fond.element_type, ElementType::Fondamental);
    // the element is searchable straight away
    let hits = kb.search("corrosion metaux", 5, None).unwrap();
    assert_eq!(hits[0].doc_id, fond.id);
}

#[test]
fn create_element_error_paths() {
    let kb = engine();
    let err = kb
        .create_element(
            &actor(EXPERT),
            ElementType::FaitTechnique,
            ElementDraft::new(""),
        )
        .unwrap_err();
    assert_eq!(err.code(), "EMPTY_TITLE");
    let err = kb
        .create_element(
            &actor(EXPERT),
            ElementType::FaitTechnique,
            ElementDraft::new("   "),
        )
        .unwrap_err();
    assert_eq!(err.code(), "EMPTY_TITLE");

    let err = kb
        .create_element(
            &actor(READER),
            ElementType::FaitTechnique,
            ElementDraft::new("x"),
        )
        .unwrap_err();
    assert_eq!(err.code(), "PERMISSION_DENIED");

    let err = kb
        .create_element(
            &actor(SPECIALIST),
            ElementType::AvisConcepteur,
            ElementDraft::new("avis"),
        )
        .unwrap_err();
    assert_eq!(err.code(), "PERMISSION_DENIED");

    let err = kb
        .create_element(
            &actor(EXPERT),
            ElementType::FaitTechnique,
            ElementDraft::new("x").tag("ghost"),
        )
        .unwrap_err();
    assert_eq!(err.code(), "UNKNOWN_TAG");

    let mut bad = ElementDraft::new("x");
    bad.sections.push(Section::new("Prescription", "y"));
    let err = kb
        .create_element(&actor(EXPERT), ElementType::FaitTechnique, bad)
        .unwrap_err();
    assert_eq!(err.code(), "TEMPLATE_VIOLATION");

    let err = kb
        .create_element(
            &actor("nobody"),
            ElementType::FaitTechnique,
            ElementDraft::new("x"),
        )
        .unwrap_err();
    assert_eq!(err.code(), "UNKNOWN_ACTOR");

    // failures leave nothing behind
    assert!(kb.with_state(|st| st.elements().count()) == 0);
    assert_eq!(kb.with_state(|st| st.index().doc_count()), 0);
}

#[test]
fn validate_element_lifecycle() {
    let kb = engine();
    let el = kb
        .create_element(
            &actor(SPECIALIST),
            ElementType::FicheTechnique,
            ElementDraft::new("Pompe"),
        )
        .unwrap();
    let err = kb.validate_element(&actor(SPECIALIST), &el.id).unwrap_err();
    assert_eq!(err.code(), "PERMISSION_DENIED");
    let v = kb.validate_element(&actor(EXPERT), &el.id).unwrap();
    assert_eq!(v.content_status, ContentStatus::Validated);
    assert_eq!(v.validated_by, Some(actor(EXPERT)));
    assert!(v.validated_at.is_some());
    assert!(v.updated_at >= v.created_at);
    let err = kb.validate_element(&actor(ADMIN), &el.id).unwrap_err();
    assert_eq!(err.code(), "ALREADY_VALIDATED");
    let err = kb
        .validate_element(&actor(EXPERT), &"el-999999".into())
        .unwrap_err();
    assert_eq!(err.code(), "NOT_FOUND");
}

#[test]
fn ontology_items_and_ancestors() {
    let kb = engine();
    let root = kb
        .add_ontology_item(&actor(EXPERT), "Matériaux", None)
        .unwrap();
    assert!(root.parent.is_none());
    let child = kb
        .add_ontology_item(&actor(EXPERT), "Corrosion", Some(root.id.clone()))
        .unwrap();
    let err = kb
        .add_ontology_item(&actor(EXPERT), "Corrosion", Some(root.id.clone()))
        .unwrap_err();
    assert_eq!(err.code(), "DUPLICATE_SIBLING_LABEL");
    let grand = kb
        .add_ontology_item(&actor(ADMIN), "Piqûres", Some(child.id.clone()))
        .unwrap();

    assert!(kb.ontology_ancestors(&root.id).unwrap().is_empty());
    assert_eq!(
        kb.ontology_ancestors(&child.id).unwrap(),
        vec![root.id.clone()]
    );
    assert_eq!(
        kb.ontology_ancestors(&grand.id).unwrap(),
        vec![child.id.clone(), root.id.clone()]
    );
    assert_eq!(
        kb.ontology_ancestors(&ItemId::from("nope"))
            .unwrap_err()
            .code(),
        "NOT_FOUND"
    );

    assert_eq!(
        kb.add_ontology_item(&actor(SPECIALIST), "X", None)
            .unwrap_err()
            .code(),
        "PERMISSION_DENIED"
    );
    assert_eq!(
        kb.add_ontology_item(&actor(EXPERT), "X", Some("ghost".into()))
            .unwrap_err()
            .code(),
        "UNKNOWN_PARENT"
    );
    assert_eq!(
        kb.add_ontology_item(&actor(EXPERT), "", None)
            .unwrap_err()
            .code(),
        "EMPTY_LABEL"
    );

    // tagging with a known item works
    kb.create_element(
        &actor(EXPERT),
        ElementType::Fondamental,
        ElementDraft::new("Corrosion des métaux").tag(child.id.clone()),
    )
    .unwrap();
}

#[test]
fn check_access_examples() {
    let kb = engine();
    for t in ElementType::ALL {
        assert_eq!(
            kb.check_access(&actor(ADMIN), Action::Admin, t).unwrap(),
            Decision::Allow
        );
        assert_eq!(
            kb.check_access(&actor(READER), Action::Read, t).unwrap(),
            Decision::Allow
        );
    }
    assert_eq!(
        kb.check_access(&actor(READER), Action::Write, ElementType::FaitTechnique)
            .unwrap(),
        Decision::Deny
    );
    assert_eq!(
        kb.check_access(
            &actor(SPECIALIST),
            Action::Write,
            ElementType::AvisConcepteur
        )
        .unwrap(),
        Decision::Deny
    );
    assert_eq!(
        kb.check_access(&actor("ghost"), Action::Read, ElementType::FaitTechnique)
            .unwrap_err()
            .code(),
        "UNKNOWN_ACTOR"
    );
}

#[test]
fn element_type_outside_enumeration_is_rejected_on_input() {
    let raw = r#"{"title":"x","sections":[],"tags":[]}"#;
    let _: ElementDraft = serde_json::from_str(raw).unwrap();
    assert!(serde_json::from_str::<ElementType>("\"Rapport\"").is_err());
    assert!("Rapport".parse::<ElementType>().is_err());
}
