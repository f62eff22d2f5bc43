//! Twin-engine harness: one engine behind the router, one driven directly,
//! both built from the same seeded fixture.

#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde::Serialize;
use serde_json::{json, Value};
use tower::ServiceExt;

use rexkb_core::interchange::{Envelope, Record};
use rexkb_core::{
    Direction, ElementType, Engine, LinkDecision, LinkType, NeighborFilter, PathologieTarget,
    TimeWindow, Weights,
};
use rexkb_server::{router, status_for, AppState, TokenEntry, TokenMap};
use rexkb_testkit::fixtures::{
    actor, draft, engine, worked_example, WorkedExample, ADMIN, EXPERT, READER, SPECIALIST,
};
use rexkb_testkit::gen::{fixed_time, synthetic_elements_jsonl};
use rexkb_testkit::scenarios::{fingerprint, small_ontology, Outcome};

pub const GHOST: &str = "ghost";

pub fn token(actor: &str) -> String {
    format!("tok-{actor}")
}

/// Tokens for the four fixture actors plus one whose actor is never registered.
pub fn tokens() -> TokenMap {
    let entry = |id: &str, role| TokenEntry {
        token: token(id),
        id: id.into(),
        name: id.into(),
        role,
    };
    use rexkb_core::Role::*;
    TokenMap::new([
        entry(READER, Reader),
        entry(SPECIALIST, Specialist),
        entry(EXPERT, Expert),
        entry(ADMIN, Admin),
        entry(GHOST, Reader),
    ])
    .unwrap()
}

/// Worked example, ontology, one fact through consolidation and one left
/// under analysis.
pub fn seeded() -> (Engine, WorkedExample) {
    let kb = engine();
    let ex = worked_example(&kb);
    let tags = small_ontology(&kb);
    let (sp, xp) = (actor(SPECIALIST), actor(EXPERT));
    kb.validate_element(&xp, &ex.fait).unwrap();
    let (f1, _) = kb
        .declare_fait(
            &sp,
            draft(
                ElementType::FaitTechnique,
                "Alarme circuit AUGM25",
                "alarme intempestive sur circuit auxiliaire",
            )
            .tag(tags[1].clone()),
        )
        .unwrap();
    kb.start_analysis(&sp, &f1.id).unwrap();
    let avis = kb
        .issue_avis(
            &xp,
            &f1.id,
            draft(
                ElementType::AvisConcepteur,
                "Avis alarme",
                "filtrer le signal",
            ),
        )
        .unwrap()
        .avis
        .id;
    kb.consolidate(
        &xp,
        &[avis],
        PathologieTarget::New(draft(
            ElementType::RexPathologie,
            "Alarmes intempestives",
            "synthèse",
        )),
    )
    .unwrap();
    let (f2, _) = kb
        .declare_fait(
            &sp,
            draft(
                ElementType::FaitTechnique,
                "Fuite vanne circuit",
                "fuite sur vanne du circuit primaire",
            ),
        )
        .unwrap();
    kb.start_analysis(&sp, &f2.id).unwrap();
    let l = kb
        .propose_link(&sp, &f2.id, &ex.equipment, LinkType::Concerns)
        .unwrap();
    kb.decide_link(&xp, &l.id, LinkDecision::Validate).unwrap();
    (kb, ex)
}

pub struct Twin {
    pub app: Router,
    pub served: Arc<Engine>,
    pub direct: Engine,
    pub ex: WorkedExample,
}

impl Twin {
    pub fn new() -> Self {
        let (served, ex) = seeded();
        let (direct, _) = seeded();
        let served = Arc::new(served);
        // built by hand so the ghost token stays unregistered
        let state = AppState {
            engine: served.clone(),
            tokens: Arc::new(tokens()),
        };
        Self {
            app: router(state),
            served,
            direct,
            ex,
        }
    }

    pub async fn raw(
        &self,
        method: &str,
        uri: &str,
        who: Option<&str>,
        body: Option<String>,
    ) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(who) = who {
            req = req.header("authorization", format!("Bearer {}", token(who)));
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b)),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn call(
        &self,
        method: &str,
        uri: &str,
        who: &str,
        body: Option<Value>,
    ) -> (StatusCode, Value) {
        let (status, bytes) = self
            .raw(method, uri, Some(who), body.map(|b| b.to_string()))
            .await;
        let value = serde_json::from_slice(&bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
        (status, value)
    }
}

fn env(r: Record) -> Value {
    serde_json::to_value(Envelope::new(r)).unwrap()
}

fn val<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap()
}

macro_rules! same {
    ($name:expr, $got:expr, $status:expr, $want:expr) => {{
        let (status, body) = $got;
        if status != $status {
            return Err(format!(
                "{}: status {} (want {}), body {}",
                $name, status, $status, body
            ));
        }
        let want = $want;
        if body != want {
            return Err(format!(
                "{}: response differs from engine\n  api:    {}\n  engine: {}",
                $name, body, want
            ));
        }
    }};
}

/// Every endpoint against the matching direct engine call, then both
/// engines compared whole.
pub async fn endpoint_equivalence() -> Outcome {
    let t = Twin::new();
    let d = &t.direct;
    let (sp, xp, ad) = (actor(SPECIALIST), actor(EXPERT), actor(ADMIN));
    let ok = StatusCode::OK;
    let created = StatusCode::CREATED;
    let mut checked = 0;

    // elements
    let new_el = draft(
        ElementType::FicheTechnique,
        "Pompe de circulation",
        "pompe centrifuge du circuit auxiliaire",
    );
    let made = d
        .create_element(&xp, ElementType::FicheTechnique, new_el.clone())
        .unwrap();
    let fiche = made.id.clone();
    same!(
        "POST /elements",
        t.call("POST", "/elements", EXPERT, Some(json!({"element_type": "FicheTechnique", "title": new_el.title, "sections": new_el.sections}))).await,
        created,
        env(Record::Element(made))
    );
    checked += 1;
    same!(
        "GET /elements/{id}",
        t.call("GET", &format!("/elements/{fiche}"), READER, None)
            .await,
        ok,
        env(Record::Element(d.read_element(&fiche).unwrap()))
    );
    same!(
        "POST /elements/{id}/validate",
        t.call("POST", &format!("/elements/{fiche}/validate"), EXPERT, None)
            .await,
        ok,
        env(Record::Element(d.validate_element(&xp, &fiche).unwrap()))
    );
    checked += 2;

    // ontology
    let parent = d.with_state(|st| st.ontology().items().next().unwrap().id.clone());
    let item = d
        .add_ontology_item(&xp, "Fissuration", Some(parent.clone()))
        .unwrap();
    let leaf = item.id.clone();
    same!(
        "POST /ontology",
        t.call(
            "POST",
            "/ontology",
            EXPERT,
            Some(json!({"label": "Fissuration", "parent": parent}))
        )
        .await,
        created,
        env(Record::OntologyItem(item))
    );
    same!(
        "GET /ontology/{id}/ancestors",
        t.call("GET", &format!("/ontology/{leaf}/ancestors"), READER, None)
            .await,
        ok,
        val(&d.ontology_ancestors(&leaf).unwrap())
    );
    checked += 2;

    // links
    let fait = t.ex.fait.clone();
    let proposed = d
        .propose_link(&sp, &fait, &fiche, LinkType::Concerns)
        .unwrap();
    let link = proposed.id.clone();
    same!(
        "POST /links",
        t.call(
            "POST",
            "/links",
            SPECIALIST,
            Some(json!({"source": fait, "target": fiche, "link_type": "concerns"}))
        )
        .await,
        created,
        env(Record::Link(proposed))
    );
    same!(
        "GET /elements/{id}/neighbors (proposed)",
        t.call(
            "GET",
            &format!("/elements/{fait}/neighbors?include_proposed=true&direction=both"),
            READER,
            None
        )
        .await,
        ok,
        val(&d
            .neighbors(
                &fait,
                &NeighborFilter {
                    direction: Direction::Both,
                    include_proposed: true,
                    ..Default::default()
                }
            )
            .unwrap())
    );
    same!(
        "POST /links/{id}/decision",
        t.call(
            "POST",
            &format!("/links/{link}/decision"),
            EXPERT,
            Some(json!({"decision": "Validate"}))
        )
        .await,
        ok,
        env(Record::Link(
            d.decide_link(&xp, &link, LinkDecision::Validate).unwrap()
        ))
    );
    same!(
        "GET /elements/{id}/neighbors",
        t.call("GET", &format!("/elements/{fait}/neighbors"), READER, None)
            .await,
        ok,
        val(&d.neighbors(&fait, &NeighborFilter::default()).unwrap())
    );
    same!(
        "GET /elements/{id}/neighbors (typed, in)",
        t.call(
            "GET",
            &format!("/elements/{fiche}/neighbors?link_types=concerns,during&direction=in"),
            READER,
            None
        )
        .await,
        ok,
        val(&d
            .neighbors(
                &fiche,
                &NeighborFilter {
                    link_types: Some([LinkType::Concerns, LinkType::During].into_iter().collect()),
                    direction: Direction::In,
                    include_proposed: false,
                }
            )
            .unwrap())
    );
    checked += 5;

    // retrieval
    same!(
        "GET /faits/{id}/dossier",
        t.call("GET", &format!("/faits/{fait}/dossier"), READER, None)
            .await,
        ok,
        val(&d.assemble_dossier(&fait).unwrap())
    );
    same!(
        "GET /faits/{id}/similar",
        t.call("GET", &format!("/faits/{fait}/similar?k=3"), READER, None)
            .await,
        ok,
        val(&d.similar_events(&fait, 3).unwrap())
    );
    same!(
        "GET /faits/{id}/similar (default k)",
        t.call("GET", &format!("/faits/{fait}/similar"), READER, None)
            .await,
        ok,
        val(&d.similar_events(&fait, 10).unwrap())
    );
    same!(
        "GET /elements/{id}/suggestions",
        t.call(
            "GET",
            &format!("/elements/{fait}/suggestions?k=5"),
            READER,
            None
        )
        .await,
        ok,
        val(&d.suggest_links(&fait, 5, None).unwrap())
    );
    let base = d.config().suggester.weights;
    same!(
        "GET /elements/{id}/suggestions (weights)",
        t.call(
            "GET",
            &format!("/elements/{fait}/suggestions?text=1&tag=1"),
            READER,
            None
        )
        .await,
        ok,
        val(&d
            .suggest_links(&fait, 10, Some(Weights::new(1.0, 1.0, base.prior)))
            .unwrap())
    );
    checked += 5;

    // workflow
    let decl = draft(
        ElementType::FaitTechnique,
        "Vibrations pompe",
        "vibrations anormales palier pompe",
    );
    let (el, st) = d.declare_fait(&sp, decl.clone()).unwrap();
    same!(
        "POST /faits",
        t.call("POST", "/faits", SPECIALIST, Some(val(&decl))).await,
        created,
        json!([
            env(Record::Element(el.clone())),
            env(Record::WorkflowState(st))
        ])
    );
    let f = el.id;
    same!(
        "POST /faits/{id}/start",
        t.call("POST", &format!("/faits/{f}/start"), SPECIALIST, None)
            .await,
        ok,
        env(Record::WorkflowState(d.start_analysis(&sp, &f).unwrap()))
    );
    let avis_draft = draft(
        ElementType::AvisConcepteur,
        "Avis vibrations",
        "équilibrer le rotor",
    );
    let issued = d.issue_avis(&xp, &f, avis_draft.clone()).unwrap();
    same!(
        "POST /faits/{id}/avis",
        t.call(
            "POST",
            &format!("/faits/{f}/avis"),
            EXPERT,
            Some(val(&avis_draft))
        )
        .await,
        created,
        json!([
            env(Record::Element(issued.avis.clone())),
            env(Record::Link(issued.link)),
            env(Record::WorkflowState(issued.fait))
        ])
    );
    let target = PathologieTarget::New(draft(
        ElementType::RexPathologie,
        "Balourd",
        "déséquilibre des machines tournantes",
    ));
    let out = d
        .consolidate(&xp, std::slice::from_ref(&issued.avis.id), target.clone())
        .unwrap();
    let mut want = vec![env(Record::Element(out.pathologie))];
    want.extend(out.links.into_iter().map(|l| env(Record::Link(l))));
    want.extend(out.faits.into_iter().map(|s| env(Record::WorkflowState(s))));
    same!(
        "POST /consolidations",
        t.call(
            "POST",
            "/consolidations",
            EXPERT,
            Some(json!({"avis": [issued.avis.id], "pathologie": target}))
        )
        .await,
        created,
        Value::Array(want)
    );
    checked += 4;

    // metrics
    let from = fixed_time();
    let to = d.now();
    let fmt = |ts: rexkb_core::Timestamp| ts.format("%Y-%m-%dT%H:%M:%S%.fZ").to_string();
    same!(
        "GET /metrics/transfer",
        t.call("GET", "/metrics/transfer", READER, None).await,
        ok,
        val(&d.transfer_metrics(TimeWindow::all()))
    );
    same!(
        "GET /metrics/transfer (window)",
        t.call(
            "GET",
            &format!("/metrics/transfer?from={}&to={}", fmt(from), fmt(to)),
            READER,
            None
        )
        .await,
        ok,
        val(&d.transfer_metrics(TimeWindow {
            from: Some(from),
            to: Some(to)
        }))
    );
    checked += 1;

    // admin
    let jsonl = synthetic_elements_jsonl(5, 20);
    let (status, bytes) = t
        .raw("POST", "/admin/import", Some(ADMIN), Some(jsonl.clone()))
        .await;
    let mut got: Value = serde_json::from_slice(&bytes).map_err(|e| format!("import body: {e}"))?;
    let mut want = val(&d.bulk_import(&ad, jsonl.as_bytes()).unwrap());
    got["duration_ms"] = 0.into();
    want["duration_ms"] = 0.into();
    same!("POST /admin/import", (status, got), ok, want);
    let (status, bytes) = t.raw("GET", "/admin/export", Some(ADMIN), None).await;
    same!(
        "GET /admin/export",
        (status, Value::String(String::from_utf8(bytes).unwrap())),
        ok,
        Value::String(d.export_string(&ad).unwrap())
    );
    checked += 2;

    // nothing reached the served engine except through the routes above
    if fingerprint(&t.served) != fingerprint(d) {
        return Err("served and direct engines diverged".into());
    }
    if t.served.transfer_metrics(TimeWindow::all()) != d.transfer_metrics(TimeWindow::all()) {
        return Err("read counters diverged".into());
    }
    Ok(format!(
        "{checked} endpoint checks match direct engine calls"
    ))
}

/// One request per reachable error code; each must leave state unchanged.
pub struct ErrorCase {
    pub name: &'static str,
    pub method: &'static str,
    pub uri: String,
    pub who: Option<&'static str>,
    pub body: Option<String>,
    pub status: u16,
    pub code: &'static str,
}

pub fn error_cases(t: &Twin) -> Vec<ErrorCase> {
    let ex = &t.ex;
    let (fait, equip, fund) = (
        ex.fait.to_string(),
        ex.equipment.to_string(),
        ex.fundamental.to_string(),
    );
    let (validated_link, decided) = t.served.with_state(|st| {
        let l = st.links().iter().next().unwrap();
        (l.id.to_string(), l.status)
    });
    assert_eq!(decided, rexkb_core::LinkStatus::Validated);
    let under_analysis = t
        .served
        .with_state(|st| {
            st.workflow_states()
                .find(|s| s.state == rexkb_core::WorkflowState::UnderAnalysis)
                .map(|s| s.fait.to_string())
        })
        .unwrap();
    let consolidated = t
        .served
        .with_state(|st| {
            st.workflow_states()
                .find(|s| s.state == rexkb_core::WorkflowState::Consolidated)
                .map(|s| s.fait.to_string())
        })
        .unwrap();
    let root = t
        .served
        .with_state(|st| st.ontology().items().next().unwrap().clone());
    let el = |body: Value| Some(body.to_string());
    let case = |name, method, uri: String, who, body, status, code| ErrorCase {
        name,
        method,
        uri,
        who,
        body,
        status,
        code,
    };
    vec![
        case(
            "no token",
            "GET",
            format!("/elements/{fait}"),
            None,
            None,
            401,
            "PERMISSION_DENIED",
        ),
        case(
            "unknown token",
            "GET",
            format!("/elements/{fait}"),
            Some("nobody"),
            None,
            401,
            "PERMISSION_DENIED",
        ),
        case(
            "role too low",
            "POST",
            "/elements".into(),
            Some(READER),
            el(json!({"element_type": "Fondamental", "title": "Fluage"})),
            403,
            "PERMISSION_DENIED",
        ),
        case(
            "import by non-admin",
            "POST",
            "/admin/import".into(),
            Some(EXPERT),
            Some(String::new()),
            403,
            "PERMISSION_DENIED",
        ),
        case(
            "export by non-admin",
            "GET",
            "/admin/export".into(),
            Some(EXPERT),
            None,
            403,
            "PERMISSION_DENIED",
        ),
        case(
            "token for unregistered actor",
            "POST",
            "/elements".into(),
            Some(GHOST),
            el(json!({"element_type": "Fondamental", "title": "Fluage"})),
            401,
            "UNKNOWN_ACTOR",
        ),
        case(
            "missing element",
            "GET",
            "/elements/el-999999".into(),
            Some(READER),
            None,
            404,
            "NOT_FOUND",
        ),
        case(
            "missing link",
            "POST",
            "/links/lnk-999999/decision".into(),
            Some(EXPERT),
            el(json!({"decision": "Reject"})),
            404,
            "NOT_FOUND",
        ),
        case(
            "unknown route",
            "GET",
            "/nowhere".into(),
            Some(READER),
            None,
            404,
            "NOT_FOUND",
        ),
        case(
            "unknown tag",
            "POST",
            "/elements".into(),
            Some(EXPERT),
            el(json!({"element_type": "Fondamental", "title": "Fluage", "tags": ["ont-999"]})),
            422,
            "UNKNOWN_TAG",
        ),
        case(
            "unknown parent",
            "POST",
            "/ontology".into(),
            Some(EXPERT),
            el(json!({"label": "X", "parent": "ont-999"})),
            422,
            "UNKNOWN_PARENT",
        ),
        case(
            "duplicate sibling",
            "POST",
            "/ontology".into(),
            Some(EXPERT),
            el(json!({"label": root.label})),
            422,
            "DUPLICATE_SIBLING_LABEL",
        ),
        case(
            "empty label",
            "POST",
            "/ontology".into(),
            Some(EXPERT),
            el(json!({"label": "  "})),
            422,
            "EMPTY_LABEL",
        ),
        case(
            "empty title",
            "POST",
            "/faits".into(),
            Some(SPECIALIST),
            el(json!({"title": ""})),
            422,
            "EMPTY_TITLE",
        ),
        case(
            "foreign section",
            "POST",
            "/elements".into(),
            Some(EXPERT),
            el(
                json!({"element_type": "Fondamental", "title": "Fluage", "sections": [{"name": "nope", "body": "x"}]}),
            ),
            422,
            "TEMPLATE_VIOLATION",
        ),
        case(
            "validate twice",
            "POST",
            format!("/elements/{fait}/validate"),
            Some(EXPERT),
            None,
            409,
            "ALREADY_VALIDATED",
        ),
        case(
            "disallowed triple",
            "POST",
            "/links".into(),
            Some(EXPERT),
            el(json!({"source": fund, "target": fait, "link_type": "concerns"})),
            422,
            "SCHEMA_VIOLATION",
        ),
        case(
            "duplicate link",
            "POST",
            "/links".into(),
            Some(EXPERT),
            el(json!({"source": fait, "target": equip, "link_type": "concerns"})),
            409,
            "DUPLICATE_LINK",
        ),
        case(
            "decide twice",
            "POST",
            format!("/links/{validated_link}/decision"),
            Some(EXPERT),
            el(json!({"decision": "Reject"})),
            409,
            "ALREADY_DECIDED",
        ),
        case(
            "dossier of a fiche",
            "GET",
            format!("/faits/{equip}/dossier"),
            Some(READER),
            None,
            422,
            "WRONG_TYPE",
        ),
        case(
            "start twice",
            "POST",
            format!("/faits/{under_analysis}/start"),
            Some(SPECIALIST),
            None,
            409,
            "ILLEGAL_TRANSITION",
        ),
        case(
            "advice after consolidation",
            "POST",
            format!("/faits/{consolidated}/avis"),
            Some(EXPERT),
            el(json!({"title": "Encore"})),
            409,
            "ILLEGAL_TRANSITION",
        ),
        case(
            "negative weight",
            "GET",
            format!("/elements/{fait}/suggestions?text=-1"),
            Some(READER),
            None,
            422,
            "INVALID_WEIGHTS",
        ),
        case(
            "zero k",
            "GET",
            format!("/faits/{fait}/similar?k=0"),
            Some(READER),
            None,
            422,
            "INVALID_ARGUMENT",
        ),
        case(
            "bad query type",
            "GET",
            format!("/faits/{fait}/similar?k=many"),
            Some(READER),
            None,
            422,
            "INVALID_ARGUMENT",
        ),
        case(
            "bad direction",
            "GET",
            format!("/elements/{fait}/neighbors?direction=up"),
            Some(READER),
            None,
            422,
            "INVALID_ARGUMENT",
        ),
        case(
            "unknown link type",
            "GET",
            format!("/elements/{fait}/neighbors?link_types=likes"),
            Some(READER),
            None,
            422,
            "INVALID_ARGUMENT",
        ),
        case(
            "not json",
            "POST",
            "/links".into(),
            Some(EXPERT),
            Some("{".into()),
            400,
            "MALFORMED",
        ),
        case(
            "wrong shape",
            "POST",
            "/links".into(),
            Some(EXPERT),
            el(json!({"source": 3})),
            400,
            "MALFORMED",
        ),
        case(
            "unknown decision",
            "POST",
            format!("/links/{validated_link}/decision"),
            Some(EXPERT),
            el(json!({"decision": "Maybe"})),
            400,
            "MALFORMED",
        ),
    ]
}

/// Codes that only surface inside an import report, never as a response status.
pub const REPORT_ONLY: [&str; 4] = [
    "UNKNOWN_REFERENCE",
    "CONFLICT",
    "VERSION_MISMATCH",
    "MALFORMED",
];

/// Runs the error table, an injected fault, and the per-line import codes.
pub async fn error_mapping() -> Outcome {
    let t = Twin::new();
    let before = fingerprint(&t.served);
    let cases = error_cases(&t);
    let mut seen = std::collections::BTreeSet::new();
    for c in &cases {
        let (status, bytes) = t.raw(c.method, &c.uri, c.who, c.body.clone()).await;
        let body: Value = serde_json::from_slice(&bytes)
            .map_err(|e| format!("{}: non-JSON error body ({e})", c.name))?;
        if status.as_u16() != c.status || body["code"] != c.code {
            return Err(format!(
                "{}: got {} {}, want {} {}",
                c.name, status, body["code"], c.status, c.code
            ));
        }
        if body["message"].as_str().is_none_or(str::is_empty) {
            return Err(format!("{}: missing message", c.name));
        }
        if c.code != "PERMISSION_DENIED" && status_for(c.code).as_u16() != c.status {
            return Err(format!("{}: table disagrees for {}", c.name, c.code));
        }
        seen.insert(c.code);
    }
    if fingerprint(&t.served) != before {
        return Err("a rejected request changed state".into());
    }

    // a fault in the middle of a composite write surfaces as 500 and rolls back
    let under = t
        .served
        .with_state(|st| {
            st.workflow_states()
                .find(|s| s.state == rexkb_core::WorkflowState::UnderAnalysis)
                .map(|s| s.fait.to_string())
        })
        .unwrap();
    t.served.arm_fault(1);
    let (status, body) = t
        .call(
            "POST",
            &format!("/faits/{under}/avis"),
            EXPERT,
            Some(json!({"title": "Avis"})),
        )
        .await;
    t.served.disarm_fault();
    if status != StatusCode::INTERNAL_SERVER_ERROR || body["code"] != "INJECTED_FAULT" {
        return Err(format!("injected fault: got {status} {body}"));
    }
    if fingerprint(&t.served) != before {
        return Err("injected fault left partial state".into());
    }
    seen.insert("INJECTED_FAULT");

    // per-line import codes
    let lines = [
        r#"{"v":1,"kind":"link","id":"lnk-x","source":"ghost","target":"ghost2","link_type":"concerns","status":"Proposed","proposer":"admin","validator":null,"decided_at":null}"#.to_string(),
        "not json".to_string(),
        r#"{"v":7,"kind":"element"}"#.to_string(),
        {
            let mut e = Envelope::new(Record::Element(t.served.element(&t.ex.fait).unwrap()));
            if let Record::Element(el) = &mut e.record {
                el.title.push_str(" bis");
            }
            e.to_line()
        },
    ];
    let (status, bytes) = t
        .raw("POST", "/admin/import", Some(ADMIN), Some(lines.join("\n")))
        .await;
    let report: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    let codes: Vec<&str> = report["rejected"]
        .as_array()
        .ok_or("import report without rejections")?
        .iter()
        .filter_map(|r| r["code"].as_str())
        .collect();
    if status != StatusCode::OK
        || codes
            != [
                "UNKNOWN_REFERENCE",
                "MALFORMED",
                "VERSION_MISMATCH",
                "CONFLICT",
            ]
    {
        return Err(format!("import codes: {status} {codes:?}"));
    }
    seen.extend(REPORT_ONLY);

    // every stable code has exactly one status, and the reachable ones were hit
    for (code, status) in status_table() {
        if status_for(code).as_u16() != status {
            return Err(format!(
                "{code} maps to {}, want {status}",
                status_for(code)
            ));
        }
    }
    let unreached: Vec<_> = status_table()
        .iter()
        .map(|(c, _)| *c)
        .filter(|c| !seen.contains(c) && !SERVER_ONLY.contains(c))
        .collect();
    if !unreached.is_empty() {
        return Err(format!("codes never exercised: {unreached:?}"));
    }
    Ok(format!(
        "{} error cases, {} codes exercised",
        cases.len() + 2,
        seen.len()
    ))
}

/// Codes no request can provoke on a healthy server: storage and startup
/// failures, and an index invariant the engine never lets through.
pub const SERVER_ONLY: [&str; 3] = ["IO_FAILURE", "CONFIG_ERROR", "DUPLICATE_DOC_ID"];

/// The full code → status table.
pub fn status_table() -> Vec<(&'static str, u16)> {
    use rexkb_core::KbError as E;
    let errors = [
        E::PermissionDenied(String::new()),
        E::UnknownActor(String::new()),
        E::not_found("element", ""),
        E::UnknownTag(String::new()),
        E::UnknownParent(String::new()),
        E::DuplicateSiblingLabel(String::new()),
        E::EmptyLabel,
        E::EmptyTitle,
        E::TemplateViolation {
            element_type: ElementType::Fondamental,
            message: String::new(),
        },
        E::AlreadyValidated(String::new()),
        E::SchemaViolation {
            source_type: ElementType::Fondamental,
            link_type: LinkType::Concerns,
            target_type: ElementType::Fondamental,
        },
        E::DuplicateLink {
            source_id: String::new(),
            target_id: String::new(),
            link_type: LinkType::Concerns,
        },
        E::AlreadyDecided(String::new()),
        E::WrongType {
            id: String::new(),
            expected: String::new(),
            actual: ElementType::Fondamental,
        },
        E::IllegalTransition {
            fait: String::new(),
            message: String::new(),
        },
        E::InvalidWeights(String::new()),
        E::InvalidArgument(String::new()),
        E::DuplicateDocId(String::new()),
        E::Conflict(String::new()),
        E::UnknownReference(String::new()),
        E::Malformed(String::new()),
        E::VersionMismatch(String::new()),
        E::Io(String::new()),
        E::Config(String::new()),
        E::InjectedFault(0),
    ];
    errors
        .iter()
        .map(|e| {
            let status = match e {
                E::NotFound { .. } => 404,
                E::PermissionDenied(_) => 403,
                E::UnknownActor(_) => 401,
                E::IllegalTransition { .. }
                | E::AlreadyValidated(_)
                | E::AlreadyDecided(_)
                | E::DuplicateLink { .. }
                | E::Conflict(_)
                | E::DuplicateDocId(_) => 409,
                E::Malformed(_) => 400,
                E::Io(_) | E::Config(_) | E::InjectedFault(_) => 500,
                _ => 422,
            };
            (e.code(), status)
        })
        .collect()
}
