//! Question generation: templates, instantiation over clusters, perturbation
//! into unanswerable variants, and the per-question record.

mod engine;
mod perturb;
mod template;

pub use engine::{Binding, EngineConfig, Hop, ImageContext, ObjectRef, QuestionEngine, RefPath};
pub use perturb::PerturbationKind;
pub use template::{
    BindMode, FeatureSlot, SkeletonStep, SlotConstraint, Template, TemplateError, TemplateSet,
};

use crate::lexicon::AttributeCategory;
use crate::program::{Answer, Op, Program, StepResult};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Version of the JSONL record layout written by the engine.
pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningType {
    Query,
    Count,
    Compare,
    Verify,
    Choose,
}

impl ReasoningType {
    pub const ALL: [ReasoningType; 5] = [
        ReasoningType::Query,
        ReasoningType::Count,
        ReasoningType::Compare,
        ReasoningType::Verify,
        ReasoningType::Choose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningType::Query => "query",
            ReasoningType::Count => "count",
            ReasoningType::Compare => "compare",
            ReasoningType::Verify => "verify",
            ReasoningType::Choose => "choose",
        }
    }
}

impl fmt::Display for ReasoningType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether the seed cluster was formed by a shared attribute or a shared
/// relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtype {
    Attr,
    Rel,
}

impl Subtype {
    pub fn as_str(self) -> &'static str {
        match self {
            Subtype::Attr => "attr",
            Subtype::Rel => "rel",
        }
    }
}

/// The nine question categories. `compare.rel` is the combination left out.
pub fn is_supported_category(reasoning: ReasoningType, subtype: Subtype) -> bool {
    !(reasoning == ReasoningType::Compare && subtype == Subtype::Rel)
}

/// How object references are phrased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traversal {
    /// Bare names; the name must be unique in the image.
    #[default]
    None,
    /// One object with two relations to distinct neighbours.
    Star,
    /// A linear path of up to two relations.
    Chain,
}

/// Balancing labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Labels {
    /// Attribute value/category or relation name, e.g. `red`, `left of`.
    pub attr_rel_type: String,
    /// `<reasoning>.<subtype>`, e.g. `verify.rel`.
    pub res_type: String,
    pub answer_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub detail: String,
    /// Id of the answerable question this one was derived from.
    pub source: String,
}

/// One generated question with its program, execution trace and labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub image_id: String,
    pub template_id: String,
    pub reasoning_type: ReasoningType,
    pub subtype: Subtype,
    pub attribute: Option<AttributeCategory>,
    pub traversal: Traversal,
    pub text: String,
    pub program: Program,
    pub trace: Vec<StepResult>,
    pub answer: Answer,
    pub labels: Labels,
    pub n_hops: usize,
    pub n_objects: usize,
    pub length_tokens: usize,
    pub is_problematic: bool,
    pub perturbation: Option<Perturbation>,
    pub binding: Binding,
}

impl QuestionRecord {
    /// Object names mentioned by the program, ascending.
    pub fn mentioned_objects(&self) -> Vec<String> {
        self.program.mentioned_names().into_iter().map(str::to_string).collect()
    }
}

/// Whitespace token count.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Length of the longest chain of `relate` steps. Filters and other
/// pass-through steps keep the depth of their input; `and`/`or` take the
/// deeper arm, so each arm of a star is counted on its own.
pub fn count_hops(program: &Program) -> usize {
    let mut depth: BTreeMap<crate::program::Register, usize> = BTreeMap::new();
    let mut best = 0;
    for step in program.steps() {
        let from_inputs = step
            .op
            .inputs()
            .iter()
            .map(|r| depth.get(r).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        let d = match step.op {
            Op::Relate { .. } => from_inputs + 1,
            _ => from_inputs,
        };
        best = best.max(d);
        depth.insert(step.out, d);
    }
    best
}
