//! Operating-experience (REX) knowledge base engine.
//!
//! Typed knowledge elements organised by a closed meta-model, tagged with an
//! ontology, connected by expert-validated links, and searchable through an
//! incremental TF-IDF index. A four-state workflow drives each technical fact
//! from declaration to consolidation.

pub mod audit;
pub mod engine;
pub mod error;
pub mod index;
pub mod interchange;
pub mod links;
pub mod metamodel;
pub mod model;
pub mod ontology;
pub mod reindex;
pub mod snapshot;
pub mod suggest;
pub mod text;
pub mod workflow;

pub use engine::{
    AvisIssued, Consolidation, Engine, EngineConfig, KbState, KbStats, PathologieTarget,
};
pub use error::{KbError, Result};
pub use index::{Hit, SimIndex};
pub use interchange::{Envelope, ImportReport, Record};
pub use links::{Direction, FaitDossier, Neighbor, NeighborFilter};
pub use metamodel::{link_type_allowed, MetaModel, MetaModelSchema};
pub use model::*;
pub use suggest::{ScoreBreakdown, SuggesterConfig, Suggestion, Weights};
pub use text::{Stopwords, Tokenizer};
pub use workflow::{FaitState, SimilarEvent, TimeWindow, TransferMetrics, WorkflowState};
