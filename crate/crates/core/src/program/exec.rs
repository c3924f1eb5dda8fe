use super::{Answer, Op, Program, StepResult, WILDCARD};
use crate::lexicon::AttributeCategory;
use crate::scene_graph::{Direction, ObjectId, SceneGraph};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Trace and answer of one program run. `trace.len()` always equals the
/// number of program steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub trace: Vec<StepResult>,
    pub answer: Answer,
}

/// Runs programs against one graph. Building the executor indexes the graph
/// once so repeated runs stay cheap.
pub struct Executor<'g> {
    graph: &'g SceneGraph,
    by_name: BTreeMap<&'g str, Vec<ObjectId>>,
    /// target → (predicate, source)
    incoming: BTreeMap<ObjectId, Vec<(&'g str, ObjectId)>>,
}

impl<'g> Executor<'g> {
    pub fn new(graph: &'g SceneGraph) -> Self {
        let mut by_name: BTreeMap<&str, Vec<ObjectId>> = BTreeMap::new();
        let mut incoming: BTreeMap<ObjectId, Vec<(&str, ObjectId)>> = BTreeMap::new();
        for obj in graph.objects.values() {
            by_name.entry(obj.name.as_str()).or_default().push(obj.object_id);
            for rel in &obj.relations {
                incoming
                    .entry(rel.target)
                    .or_default()
                    .push((rel.predicate.as_str(), obj.object_id));
            }
        }
        Self { graph, by_name, incoming }
    }

    pub fn graph(&self) -> &'g SceneGraph {
        self.graph
    }

    pub fn run(&self, program: &Program) -> Execution {
        let index = program.register_index();
        let mut trace: Vec<StepResult> = Vec::with_capacity(program.len());
        let mut poisoned = false;
        for step in program.steps() {
            let result = if poisoned {
                StepResult::None
            } else {
                let get = |r| &trace[index[&r]];
                self.eval(&step.op, get)
            };
            poisoned |= result.is_none();
            trace.push(result);
        }
        let answer = self.answer_of(trace.last().expect("programs are nonempty"));
        Execution { trace, answer }
    }

    fn answer_of(&self, last: &StepResult) -> Answer {
        match last {
            StepResult::None => Answer::Problematic,
            StepResult::Bool(b) => Answer::YesNo(*b),
            StepResult::Number(n) => Answer::Number(*n),
            StepResult::Values(vs) => Answer::from_values(vs.iter().cloned()),
            StepResult::ObjectSet(ids) => Answer::from_values(
                ids.iter()
                    .filter_map(|id| self.graph.object(*id))
                    .map(|o| o.name.clone()),
            ),
        }
    }

    fn name_matches(&self, id: ObjectId, name: &str) -> bool {
        name == WILDCARD || self.graph.object(id).is_some_and(|o| o.name == name)
    }

    fn eval<'t>(&self, op: &Op, get: impl Fn(super::Register) -> &'t StepResult) -> StepResult {
        let objects = |r| match get(r) {
            StepResult::ObjectSet(s) => s,
            // Type checking guarantees object-set inputs once NONE is ruled out.
            other => unreachable!("expected object set, found {other:?}"),
        };
        match op {
            Op::Select { name } => {
                let ids: BTreeSet<ObjectId> = if name == WILDCARD {
                    self.graph.objects.keys().copied().collect()
                } else {
                    self.by_name.get(name.as_str()).into_iter().flatten().copied().collect()
                };
                non_empty(ids)
            }
            Op::FilterAttr { input, category, value } => non_empty(
                objects(*input)
                    .iter()
                    .copied()
                    .filter(|id| self.has_attr(*id, *category, value))
                    .collect(),
            ),
            Op::Relate { input, predicate, direction, name } => {
                non_empty(self.relate(objects(*input), predicate, *direction, name))
            }
            Op::QueryAttr { input, category } => {
                let vs = self.values_union(objects(*input), *category);
                if vs.is_empty() { StepResult::None } else { StepResult::Values(vs) }
            }
            Op::CommonAttr { input, category } => {
                let mut common: Option<BTreeSet<String>> = None;
                for id in objects(*input) {
                    let vs = self.values_of(*id, *category);
                    common = Some(match common {
                        None => vs,
                        Some(c) => c.intersection(&vs).cloned().collect(),
                    });
                }
                match common {
                    Some(c) if !c.is_empty() => StepResult::Values(c),
                    _ => StepResult::None,
                }
            }
            Op::VerifyAttr { input, category, value } => StepResult::Bool(
                objects(*input).iter().all(|id| self.has_attr(*id, *category, value)),
            ),
            Op::VerifyRel { input, predicate, direction, name } => StepResult::Bool(
                objects(*input)
                    .iter()
                    .all(|id| self.holds_relation(*id, predicate, *direction, name)),
            ),
            Op::Exist { input } => StepResult::Bool(!objects(*input).is_empty()),
            Op::Count { input } => StepResult::Number(objects(*input).len() as u64),
            Op::CompareAttr { left, right, category } => {
                let a = self.values_union(objects(*left), *category);
                let b = self.values_union(objects(*right), *category);
                if a.is_empty() || b.is_empty() {
                    StepResult::None
                } else {
                    StepResult::Bool(a == b)
                }
            }
            Op::ChooseAttr { input, category, first, second } => {
                let set = objects(*input);
                let all = |v: &str| set.iter().all(|id| self.has_attr(*id, *category, v));
                match (all(first), all(second)) {
                    (true, false) => StepResult::Values(BTreeSet::from([first.clone()])),
                    (false, true) => StepResult::Values(BTreeSet::from([second.clone()])),
                    _ => StepResult::None,
                }
            }
            Op::And { left, right } => match (get(*left), get(*right)) {
                (StepResult::Bool(a), StepResult::Bool(b)) => StepResult::Bool(*a && *b),
                (StepResult::ObjectSet(a), StepResult::ObjectSet(b)) => {
                    non_empty(a.intersection(b).copied().collect())
                }
                other => unreachable!("and over {other:?}"),
            },
            Op::Or { left, right } => match (get(*left), get(*right)) {
                (StepResult::Bool(a), StepResult::Bool(b)) => StepResult::Bool(*a || *b),
                (StepResult::ObjectSet(a), StepResult::ObjectSet(b)) => {
                    non_empty(a.union(b).copied().collect())
                }
                other => unreachable!("or over {other:?}"),
            },
        }
    }

    fn has_attr(&self, id: ObjectId, category: AttributeCategory, value: &str) -> bool {
        self.graph.object(id).is_some_and(|o| o.has_attribute(category, value))
    }

    fn values_of(&self, id: ObjectId, category: AttributeCategory) -> BTreeSet<String> {
        self.graph
            .object(id)
            .map(|o| o.values(category).map(str::to_string).collect())
            .unwrap_or_default()
    }

    fn values_union(&self, ids: &BTreeSet<ObjectId>, category: AttributeCategory) -> BTreeSet<String> {
        ids.iter().flat_map(|id| self.values_of(*id, category)).collect()
    }

    /// Objects named `name` that stand in `direction` of a `predicate` edge
    /// whose other end is in `anchors`.
    pub fn relate(
        &self,
        anchors: &BTreeSet<ObjectId>,
        predicate: &str,
        direction: Direction,
        name: &str,
    ) -> BTreeSet<ObjectId> {
        let mut found = BTreeSet::new();
        for &anchor in anchors {
            match direction {
                Direction::Subject => {
                    for &(p, source) in self.incoming.get(&anchor).into_iter().flatten() {
                        if p == predicate && self.name_matches(source, name) {
                            found.insert(source);
                        }
                    }
                }
                Direction::Object => {
                    let Some(node) = self.graph.object(anchor) else { continue };
                    for rel in &node.relations {
                        if rel.predicate == predicate && self.name_matches(rel.target, name) {
                            found.insert(rel.target);
                        }
                    }
                }
            }
        }
        found
    }

    fn holds_relation(&self, id: ObjectId, predicate: &str, direction: Direction, name: &str) -> bool {
        match direction {
            Direction::Subject => self.graph.object(id).is_some_and(|o| {
                o.relations
                    .iter()
                    .any(|r| r.predicate == predicate && self.name_matches(r.target, name))
            }),
            Direction::Object => self
                .incoming
                .get(&id)
                .into_iter()
                .flatten()
                .any(|&(p, source)| p == predicate && self.name_matches(source, name)),
        }
    }
}

fn non_empty(ids: BTreeSet<ObjectId>) -> StepResult {
    if ids.is_empty() {
        StepResult::None
    } else {
        StepResult::ObjectSet(ids)
    }
}

/// Runs `program` on `graph`.
pub fn execute(program: &Program, graph: &SceneGraph) -> Execution {
    Executor::new(graph).run(program)
}
