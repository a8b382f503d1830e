//! Counterfactual two-agent conflict engine.
//!
//! A logged (or synthetic) conflict between an initiator and a responder is
//! re-simulated over a weighted lattice of responder brake reactions. Each
//! counterfactual is checked for contact, contacts are resolved with a
//! planar impulse model, and the resulting severities are summed by weight
//! into a per-scene severity distribution ("fractional collisions").
//!
//! Pipeline: [`scene`] ingestion and resampling, [`conflict`] analysis,
//! [`behavior`] counterfactual synthesis, [`crash`] contact and severity,
//! [`risk`] aggregation. [`synth`] generates annotated test corpora.

pub mod behavior;
pub mod config;
pub mod conflict;
pub mod crash;
pub mod geometry;
pub mod risk;
pub mod scene;
pub mod synth;

pub use behavior::{
    enumerate_cells, load_behavior_model, nrm_response, respond, synthesize_response,
    BehaviorError, BehaviorModel, CellParams, ParameterCell, ReactionParams,
};
pub use config::{load_engine_config, ConfigError, EngineConfig};
pub use conflict::{
    analyze_scene, assign_roles, classify_conflict, detect_por, ConflictAnalysis, ConflictError,
    ConflictThresholds, ConflictType, Provenance, RoleAssignment,
};
pub use crash::{
    collision_outcome, detect_collision, gt_outcome, solve_impulse, CollisionOutcome,
    ContactState, CrashConfig, SeverityLevel,
};
pub use risk::{
    aggregate_corpus, aggregate_match_test, evaluate_scene, qa_scene, relative_risk, run_scene,
    AggregateError, CorpusReport, EvalError, FractionalCollisionResult, QaReport, SceneEvaluation,
    SeverityPmf,
};
pub use scene::{
    parse_scene, resample_scene, resample_track, serialize_scene, validate_scene, AgentClass,
    AgentTrack, Annotations, ConflictScene, SceneError, TrajectorySample,
};
pub use synth::{generate_corpus, generate_scene, GenerateError, ScenarioFamily, SyntheticScenarioSpec};
