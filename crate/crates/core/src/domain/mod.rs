//! Domain definitions, grounding into problem instances, and session
//! sampling.

mod ground;
mod instance;
mod spec;
pub mod syntax;
mod validate;

pub use ground::{GroundAction, GroundFeature, GroundHypothesis, GroundModel, GroundRule};
pub use instance::{ground_instance, sample_session, Goal, ProblemInstance, SessionSpec, WorldState};
pub use spec::{
    domain_schema_json, ActionDecl, CausalRule, DomainSpec, FeatureDecl, KnowledgeStatus, MechanismTemplate,
    ObjectSampling, RenderStyle, RewardSpec, WeightedGoal, WorldConstraint, DEFAULT_HYPOTHESIS_CAP,
    WORLD_ENUMERATION_CAP,
};
pub use syntax::{ActionTerm, Atom, Edge, Literal, Trigger};
pub use validate::{validate_domain, validate_domain_with_cap, ValidationReport, Violation};
