//! Malicious scripts, black-box candidates and the attack harness.

pub mod candidates;
pub mod harness;
pub mod script;

pub use candidates::{candidate, CandidateImpl, RegisterRule, CANDIDATES};
pub use harness::{
    attack_search, invisible_to, record_solo_write, AttackConfig, AttackError, AttackOutcome, AttackReport, SoloWrite,
    StageLabel, StageRecord, StageResult, StepKind, TransformationStage, Witness, WriterStep,
};
pub use script::{Action, AdversaryScript};
