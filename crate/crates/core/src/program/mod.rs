//! The reasoning IR: straight-line programs over named registers.
//!
//! Each step writes one register and may read registers written by earlier
//! steps. Programs are type checked when constructed, so execution never
//! encounters an undefined register or an operand of the wrong kind.

mod exec;
mod semantic;
mod text;

pub use exec::{execute, Execution, Executor};
pub use semantic::{parse_semantic_string, render_semantic};
pub use text::{parse_pseudocode, render_program};

use crate::lexicon::AttributeCategory;
use crate::scene_graph::{Direction, ObjectId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// Canonical answer text for questions that do not match the image.
pub const PROBLEMATIC: &str = "the question itself is problematic";

/// Object name matching any object.
pub const WILDCARD: &str = "_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Register(pub u32);

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl FromStr for Register {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .strip_prefix('r')
            .and_then(|n| n.parse().ok())
            .map(Register)
            .ok_or_else(|| format!("`{s}` is not a register"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Select,
    FilterAttr,
    Relate,
    QueryAttr,
    CommonAttr,
    VerifyAttr,
    VerifyRel,
    Exist,
    Count,
    CompareAttr,
    ChooseAttr,
    And,
    Or,
}

impl OpKind {
    pub const ALL: [OpKind; 13] = [
        OpKind::Select,
        OpKind::FilterAttr,
        OpKind::Relate,
        OpKind::QueryAttr,
        OpKind::CommonAttr,
        OpKind::VerifyAttr,
        OpKind::VerifyRel,
        OpKind::Exist,
        OpKind::Count,
        OpKind::CompareAttr,
        OpKind::ChooseAttr,
        OpKind::And,
        OpKind::Or,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Select => "select",
            OpKind::FilterAttr => "filter_attr",
            OpKind::Relate => "relate",
            OpKind::QueryAttr => "query_attr",
            OpKind::CommonAttr => "common_attr",
            OpKind::VerifyAttr => "verify_attr",
            OpKind::VerifyRel => "verify_rel",
            OpKind::Exist => "exist",
            OpKind::Count => "count",
            OpKind::CompareAttr => "compare_attr",
            OpKind::ChooseAttr => "choose_attr",
            OpKind::And => "and",
            OpKind::Or => "or",
        }
    }

    /// Number of register operands.
    pub fn register_arity(self) -> usize {
        match self {
            OpKind::Select => 0,
            OpKind::CompareAttr | OpKind::And | OpKind::Or => 2,
            _ => 1,
        }
    }

    /// Number of literal (non-register) operands.
    pub fn literal_arity(self) -> usize {
        match self {
            OpKind::Select | OpKind::QueryAttr | OpKind::CommonAttr | OpKind::CompareAttr => 1,
            OpKind::FilterAttr | OpKind::VerifyAttr => 2,
            OpKind::Relate | OpKind::VerifyRel | OpKind::ChooseAttr => 3,
            OpKind::Exist | OpKind::Count | OpKind::And | OpKind::Or => 0,
        }
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown operator `{s}`"))
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One operator with its operands.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Select { name: String },
    FilterAttr { input: Register, category: AttributeCategory, value: String },
    Relate { input: Register, predicate: String, direction: Direction, name: String },
    QueryAttr { input: Register, category: AttributeCategory },
    CommonAttr { input: Register, category: AttributeCategory },
    VerifyAttr { input: Register, category: AttributeCategory, value: String },
    VerifyRel { input: Register, predicate: String, direction: Direction, name: String },
    Exist { input: Register },
    Count { input: Register },
    CompareAttr { left: Register, right: Register, category: AttributeCategory },
    ChooseAttr { input: Register, category: AttributeCategory, first: String, second: String },
    And { left: Register, right: Register },
    Or { left: Register, right: Register },
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Select { .. } => OpKind::Select,
            Op::FilterAttr { .. } => OpKind::FilterAttr,
            Op::Relate { .. } => OpKind::Relate,
            Op::QueryAttr { .. } => OpKind::QueryAttr,
            Op::CommonAttr { .. } => OpKind::CommonAttr,
            Op::VerifyAttr { .. } => OpKind::VerifyAttr,
            Op::VerifyRel { .. } => OpKind::VerifyRel,
            Op::Exist { .. } => OpKind::Exist,
            Op::Count { .. } => OpKind::Count,
            Op::CompareAttr { .. } => OpKind::CompareAttr,
            Op::ChooseAttr { .. } => OpKind::ChooseAttr,
            Op::And { .. } => OpKind::And,
            Op::Or { .. } => OpKind::Or,
        }
    }

    /// Registers read by this step, in argument order.
    pub fn inputs(&self) -> Vec<Register> {
        match self {
            Op::Select { .. } => vec![],
            Op::FilterAttr { input, .. }
            | Op::Relate { input, .. }
            | Op::QueryAttr { input, .. }
            | Op::CommonAttr { input, .. }
            | Op::VerifyAttr { input, .. }
            | Op::VerifyRel { input, .. }
            | Op::Exist { input }
            | Op::Count { input }
            | Op::ChooseAttr { input, .. } => vec![*input],
            Op::CompareAttr { left, right, .. } | Op::And { left, right } | Op::Or { left, right } => {
                vec![*left, *right]
            }
        }
    }

    /// Literal operands as strings, in argument order (registers excluded).
    pub fn literals(&self) -> Vec<String> {
        match self {
            Op::Select { name } => vec![name.clone()],
            Op::FilterAttr { category, value, .. } | Op::VerifyAttr { category, value, .. } => {
                vec![category.key().to_string(), value.clone()]
            }
            Op::Relate { predicate, direction, name, .. }
            | Op::VerifyRel { predicate, direction, name, .. } => {
                vec![predicate.clone(), direction.as_str().to_string(), name.clone()]
            }
            Op::QueryAttr { category, .. }
            | Op::CommonAttr { category, .. }
            | Op::CompareAttr { category, .. } => vec![category.key().to_string()],
            Op::ChooseAttr { category, first, second, .. } => {
                vec![category.key().to_string(), first.clone(), second.clone()]
            }
            Op::Exist { .. } | Op::Count { .. } | Op::And { .. } | Op::Or { .. } => vec![],
        }
    }

    /// Full argument list: registers first, then literals.
    pub fn args(&self) -> Vec<String> {
        self.inputs()
            .into_iter()
            .map(|r| r.to_string())
            .chain(self.literals())
            .collect()
    }

    /// Builds an operator from its registers and literal strings.
    pub fn build(kind: OpKind, registers: &[Register], literals: &[&str]) -> Result<Op, String> {
        if registers.len() != kind.register_arity() || literals.len() != kind.literal_arity() {
            return Err(format!(
                "{kind} takes {} register(s) and {} argument(s), got {} and {}",
                kind.register_arity(),
                kind.literal_arity(),
                registers.len(),
                literals.len()
            ));
        }
        let lit = |i: usize| -> Result<String, String> { check_literal(literals[i]) };
        let cat = |i: usize| -> Result<AttributeCategory, String> {
            literals[i].parse::<AttributeCategory>().map_err(|e| e.to_string())
        };
        let dir = |i: usize| -> Result<Direction, String> { literals[i].parse::<Direction>() };
        let r = |i: usize| registers[i];
        Ok(match kind {
            OpKind::Select => Op::Select { name: lit(0)? },
            OpKind::FilterAttr => Op::FilterAttr { input: r(0), category: cat(0)?, value: lit(1)? },
            OpKind::Relate => Op::Relate { input: r(0), predicate: lit(0)?, direction: dir(1)?, name: lit(2)? },
            OpKind::QueryAttr => Op::QueryAttr { input: r(0), category: cat(0)? },
            OpKind::CommonAttr => Op::CommonAttr { input: r(0), category: cat(0)? },
            OpKind::VerifyAttr => Op::VerifyAttr { input: r(0), category: cat(0)?, value: lit(1)? },
            OpKind::VerifyRel => Op::VerifyRel { input: r(0), predicate: lit(0)?, direction: dir(1)?, name: lit(2)? },
            OpKind::Exist => Op::Exist { input: r(0) },
            OpKind::Count => Op::Count { input: r(0) },
            OpKind::CompareAttr => Op::CompareAttr { left: r(0), right: r(1), category: cat(0)? },
            OpKind::ChooseAttr => Op::ChooseAttr { input: r(0), category: cat(0)?, first: lit(1)?, second: lit(2)? },
            OpKind::And => Op::And { left: r(0), right: r(1) },
            OpKind::Or => Op::Or { left: r(0), right: r(1) },
        })
    }
}

const FORBIDDEN: &[char] = &[',', '(', ')', '[', ']', '\n', '\r', '→', '='];

/// Literal operands must be nonempty, trimmed, and free of syntax characters
/// so that every textual format can carry them verbatim.
pub fn check_literal(s: &str) -> Result<String, String> {
    let t = s.trim();
    if t.is_empty() {
        return Err("empty argument".into());
    }
    if t.contains(FORBIDDEN) || t.contains("->") {
        return Err(format!("argument `{t}` contains a reserved character"));
    }
    Ok(t.to_string())
}

/// One line of a program: `out = op(args)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Step {
    pub out: Register,
    pub op: Op,
}

/// Kind of value a register holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Objects,
    Values,
    Number,
    Bool,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Objects => "object set",
            ValueKind::Values => "value set",
            ValueKind::Number => "number",
            ValueKind::Bool => "boolean",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("program has no steps")]
    Empty,
    #[error("step {step}: register {register} is written twice")]
    DuplicateRegister { step: usize, register: Register },
    #[error("step {step}: register {register} is not defined by an earlier step")]
    UndefinedRegister { step: usize, register: Register },
    #[error("step {step}: {op} expects {expected} in {register}, found {found}")]
    TypeMismatch {
        step: usize,
        op: OpKind,
        register: Register,
        expected: &'static str,
        found: ValueKind,
    },
    #[error("step {step}: {message}")]
    Invalid { step: usize, message: String },
    #[error("clause {clause}: {message}")]
    Parse { clause: usize, message: String },
}

/// A validated straight-line program. The last step's register holds the
/// answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    steps: Vec<Step>,
}

impl Program {
    pub fn new(steps: Vec<Step>) -> Result<Self, ProgramError> {
        let program = Self { steps };
        program.kinds()?;
        Ok(program)
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn into_steps(self) -> Vec<Step> {
        self.steps
    }

    /// Step index writing each register.
    pub fn register_index(&self) -> BTreeMap<Register, usize> {
        self.steps.iter().enumerate().map(|(i, s)| (s.out, i)).collect()
    }

    /// Type checks the program, returning the kind of every step's result.
    pub fn kinds(&self) -> Result<Vec<ValueKind>, ProgramError> {
        if self.steps.is_empty() {
            return Err(ProgramError::Empty);
        }
        let mut defined: BTreeMap<Register, ValueKind> = BTreeMap::new();
        let mut kinds = Vec::with_capacity(self.steps.len());
        for (i, step) in self.steps.iter().enumerate() {
            for lit in step.op.literals() {
                check_literal(&lit).map_err(|message| ProgramError::Invalid { step: i, message })?;
            }
            let input_kinds = step
                .op
                .inputs()
                .into_iter()
                .map(|r| {
                    defined
                        .get(&r)
                        .copied()
                        .map(|k| (r, k))
                        .ok_or(ProgramError::UndefinedRegister { step: i, register: r })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let kind = result_kind(i, step.op.kind(), &input_kinds)?;
            if defined.insert(step.out, kind).is_some() {
                return Err(ProgramError::DuplicateRegister { step: i, register: step.out });
            }
            kinds.push(kind);
        }
        Ok(kinds)
    }

    /// Distinct object names referenced by select/relate/verify_rel, wildcard
    /// excluded.
    pub fn mentioned_names(&self) -> BTreeSet<&str> {
        self.steps
            .iter()
            .filter_map(|s| match &s.op {
                Op::Select { name } | Op::Relate { name, .. } | Op::VerifyRel { name, .. } => {
                    Some(name.as_str())
                }
                _ => None,
            })
            .filter(|n| *n != WILDCARD)
            .collect()
    }
}

fn result_kind(
    step: usize,
    op: OpKind,
    inputs: &[(Register, ValueKind)],
) -> Result<ValueKind, ProgramError> {
    let expect = |idx: usize, want: ValueKind, label: &'static str| -> Result<(), ProgramError> {
        let (register, found) = inputs[idx];
        if found == want {
            Ok(())
        } else {
            Err(ProgramError::TypeMismatch { step, op, register, expected: label, found })
        }
    };
    use OpKind::*;
    match op {
        Select => Ok(ValueKind::Objects),
        FilterAttr | Relate => expect(0, ValueKind::Objects, "an object set").map(|_| ValueKind::Objects),
        QueryAttr | CommonAttr | ChooseAttr => {
            expect(0, ValueKind::Objects, "an object set").map(|_| ValueKind::Values)
        }
        VerifyAttr | VerifyRel | Exist => {
            expect(0, ValueKind::Objects, "an object set").map(|_| ValueKind::Bool)
        }
        Count => expect(0, ValueKind::Objects, "an object set").map(|_| ValueKind::Number),
        CompareAttr => {
            expect(0, ValueKind::Objects, "an object set")?;
            expect(1, ValueKind::Objects, "an object set")?;
            Ok(ValueKind::Bool)
        }
        And | Or => {
            let (_, left) = inputs[0];
            match left {
                ValueKind::Bool | ValueKind::Objects => {
                    let label = if left == ValueKind::Bool { "a boolean" } else { "an object set" };
                    expect(1, left, label).map(|_| left)
                }
                found => Err(ProgramError::TypeMismatch {
                    step,
                    op,
                    register: inputs[0].0,
                    expected: "a boolean or an object set",
                    found,
                }),
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawStep {
    op: String,
    args: Vec<String>,
    out: String,
}

impl Serialize for Program {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<RawStep> = self
            .steps
            .iter()
            .map(|s| RawStep {
                op: s.op.kind().name().to_string(),
                args: s.op.args(),
                out: s.out.to_string(),
            })
            .collect();
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Program {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<RawStep>::deserialize(deserializer)?;
        let mut steps = Vec::with_capacity(raw.len());
        for (i, r) in raw.into_iter().enumerate() {
            steps.push(step_from_parts(i, &r.op, &r.args, &r.out).map_err(serde::de::Error::custom)?);
        }
        Program::new(steps).map_err(serde::de::Error::custom)
    }
}

/// Builds a step from `op`, `args` (registers first) and `out`.
pub(crate) fn step_from_parts(
    index: usize,
    op: &str,
    args: &[String],
    out: &str,
) -> Result<Step, ProgramError> {
    let invalid = |message: String| ProgramError::Invalid { step: index, message };
    let kind: OpKind = op.trim().parse().map_err(invalid)?;
    let out: Register = out.parse().map_err(invalid)?;
    let n_regs = kind.register_arity();
    if args.len() != n_regs + kind.literal_arity() {
        return Err(invalid(format!(
            "{kind} takes {} argument(s), got {}",
            n_regs + kind.literal_arity(),
            args.len()
        )));
    }
    let registers = args[..n_regs]
        .iter()
        .map(|a| a.parse::<Register>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    let literals: Vec<&str> = args[n_regs..].iter().map(String::as_str).collect();
    let op = Op::build(kind, &registers, &literals).map_err(invalid)?;
    Ok(Step { out, op })
}

/// Value of one executed step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepResult {
    ObjectSet(BTreeSet<ObjectId>),
    Values(BTreeSet<String>),
    Number(u64),
    Bool(bool),
    None,
}

impl StepResult {
    pub fn is_none(&self) -> bool {
        matches!(self, StepResult::None)
    }
}

impl fmt::Display for StepResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepResult::ObjectSet(ids) => {
                let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
                write!(f, "objects[{}]", ids.join(", "))
            }
            StepResult::Values(vs) => {
                write!(f, "values[{}]", vs.iter().cloned().collect::<Vec<_>>().join(", "))
            }
            StepResult::Number(n) => write!(f, "{n}"),
            StepResult::Bool(b) => write!(f, "{}", if *b { "yes" } else { "no" }),
            StepResult::None => f.write_str("NONE"),
        }
    }
}

/// Final answer of a program.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    Value(String),
    /// Sorted ascending, at least two entries.
    ValueList(Vec<String>),
    Number(u64),
    YesNo(bool),
    Problematic,
}

impl Answer {
    /// Builds a value answer from any collection of strings.
    pub fn from_values<I: IntoIterator<Item = String>>(values: I) -> Answer {
        let mut vs: Vec<String> = values.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        match vs.len() {
            0 => Answer::Problematic,
            1 => Answer::Value(vs.pop().expect("one value")),
            _ => Answer::ValueList(vs),
        }
    }

    pub fn is_problematic(&self) -> bool {
        matches!(self, Answer::Problematic)
    }

    /// Text used for exact-match scoring and as the balancing answer label.
    pub fn render(&self) -> String {
        match self {
            Answer::Value(v) => v.clone(),
            Answer::ValueList(vs) => vs.join(", "),
            Answer::Number(n) => n.to_string(),
            Answer::YesNo(true) => "yes".into(),
            Answer::YesNo(false) => "no".into(),
            Answer::Problematic => PROBLEMATIC.into(),
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(out: u32, op: Op) -> Step {
        Step { out: Register(out), op }
    }

    #[test]
    fn empty_program_rejected() {
        assert_eq!(Program::new(vec![]), Err(ProgramError::Empty));
    }

    #[test]
    fn forward_reference_rejected() {
        let err = Program::new(vec![step(0, Op::Count { input: Register(1) })]).unwrap_err();
        assert_eq!(err, ProgramError::UndefinedRegister { step: 0, register: Register(1) });
    }

    #[test]
    fn duplicate_register_rejected() {
        let err = Program::new(vec![
            step(0, Op::Select { name: "a".into() }),
            step(0, Op::Select { name: "b".into() }),
        ])
        .unwrap_err();
        assert!(matches!(err, ProgramError::DuplicateRegister { step: 1, .. }));
    }

    #[test]
    fn type_mismatch_rejected() {
        let err = Program::new(vec![
            step(0, Op::Select { name: "a".into() }),
            step(1, Op::Count { input: Register(0) }),
            step(2, Op::Exist { input: Register(1) }),
        ])
        .unwrap_err();
        assert!(matches!(err, ProgramError::TypeMismatch { step: 2, found: ValueKind::Number, .. }));
        let err = Program::new(vec![
            step(0, Op::Select { name: "a".into() }),
            step(1, Op::Exist { input: Register(0) }),
            step(2, Op::And { left: Register(0), right: Register(1) }),
        ])
        .unwrap_err();
        assert!(matches!(err, ProgramError::TypeMismatch { step: 2, .. }));
    }

    #[test]
    fn reserved_characters_rejected() {
        assert!(Program::new(vec![step(0, Op::Select { name: "a, b".into() })]).is_err());
        assert!(Program::new(vec![step(0, Op::Select { name: " ".into() })]).is_err());
    }

    #[test]
    fn json_shape() {
        let p = Program::new(vec![
            step(0, Op::Select { name: "table".into() }),
            step(1, Op::Relate { input: Register(0), predicate: "on".into(), direction: Direction::Subject, name: "apple".into() }),
            step(2, Op::Exist { input: Register(1) }),
        ])
        .unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(
            json,
            r#"[{"op":"select","args":["table"],"out":"r0"},{"op":"relate","args":["r0","on","subject","apple"],"out":"r1"},{"op":"exist","args":["r1"],"out":"r2"}]"#
        );
        let back: Program = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Program>(r#"[{"op":"exist","args":["r4"],"out":"r0"}]"#).is_err());
        assert!(serde_json::from_str::<Program>(r#"[{"op":"select","args":[],"out":"r0"}]"#).is_err());
    }

    #[test]
    fn answers_render() {
        assert_eq!(Answer::Problematic.render(), "the question itself is problematic");
        assert_eq!(
            Answer::from_values(["b".to_string(), "a".to_string()]),
            Answer::ValueList(vec!["a".into(), "b".into()])
        );
        assert_eq!(Answer::YesNo(false).render(), "no");
        assert_eq!(Answer::Number(3).render(), "3");
    }
}
