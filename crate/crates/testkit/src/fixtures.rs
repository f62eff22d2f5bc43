//! Engines with the four standard actors, and the worked-example knowledge base.

use rexkb_core::audit::Clock;
use rexkb_core::{
    Actor, ActorId, ElementDraft, ElementId, ElementType, Engine, EngineConfig, LinkDecision,
    LinkType, Role,
};

use crate::gen::fixed_time;

pub const READER: &str = "reader";
pub const SPECIALIST: &str = "specialist";
pub const EXPERT: &str = "expert";
pub const ADMIN: &str = "admin";

pub fn actor(id: &str) -> ActorId {
    ActorId::from(id)
}

pub fn standard_actors() -> Vec<Actor> {
    [
        (READER, Role::Reader),
        (SPECIALIST, Role::Specialist),
        (EXPERT, Role::Expert),
        (ADMIN, Role::Admin),
    ]
    .into_iter()
    .map(|(id, role)| Actor {
        id: id.into(),
        name: format!("{role} user"),
        role,
    })
    .collect()
}

/// Engine with default configuration, a deterministic clock and the four actors.
pub fn engine() -> Engine {
    let engine = Engine::with_clock(EngineConfig::default(), Clock::manual(fixed_time()));
    for a in standard_actors() {
        engine.register_actor(a);
    }
    engine
}

/// A draft filling every template section of `element_type` with `body`.
pub fn draft(element_type: ElementType, title: &str, body: &str) -> ElementDraft {
    let mut d = ElementDraft::new(title);
    for name in element_type.template() {
        d = d.section(*name, body);
    }
    d
}

/// Ids of the worked-example knowledge base.
#[derive(Debug, Clone)]
pub struct WorkedExample {
    pub fait: ElementId,
    pub equipment: ElementId,
    pub activity: ElementId,
    pub fundamental: ElementId,
    pub source: ElementId,
}

/// A technical fact on a control system, during an activity, with the
/// equipment based on a fundamental; all links validated.
pub fn worked_example(engine: &Engine) -> WorkedExample {
    let expert = actor(EXPERT);
    let create = |t: ElementType, title: &str, body: &str| {
        engine
            .create_element(&expert, t, draft(t, title, body))
            .unwrap()
            .id
    };
    let fait = create(
        ElementType::FaitTechnique,
        "Alarme sur circuit AUGM24",
        "alarme intempestive relevée en salle de commande",
    );
    let equipment = create(
        ElementType::FicheTechnique,
        "Architecture du contrôle-commande",
        "automates redondants et réseau de terrain",
    );
    let activity = create(
        ElementType::ActiviteProcessus,
        "Essais périodiques",
        "campagne d'essais sur les circuits auxiliaires",
    );
    let fundamental = create(
        ElementType::Fondamental,
        "Corrosion des métaux",
        "oxydation électrochimique des alliages",
    );
    let source = create(
        ElementType::SourceDocumentaire,
        "Procédure TA-6253301A",
        "procédure de conduite référencée dans le PLM",
    );
    let link = |s: &ElementId, t: &ElementId, lt: LinkType| {
        let l = engine.propose_link(&expert, s, t, lt).unwrap();
        engine
            .decide_link(&expert, &l.id, LinkDecision::Validate)
            .unwrap();
    };
    link(&fait, &equipment, LinkType::Concerns);
    link(&fait, &activity, LinkType::During);
    link(&equipment, &fundamental, LinkType::BasedOn);
    WorkedExample {
        fait,
        equipment,
        activity,
        fundamental,
        source,
    }
}
