use super::perturb::PerturbationKind;
use super::template::{placeholders, BindMode, SlotConstraint, Template, TemplateSet};
use super::{count_hops, count_tokens, Labels, QuestionRecord, Traversal};
use crate::clustering::{
    build_hop_context, cluster_graph, Cluster, Feature, HopContext, HopEdge, DEFAULT_MAX_FEATURES,
};
use crate::lexicon::{AttributeCategory, Lexicon};
use crate::program::{Execution, Executor, Op, OpKind, Program, Register, Step, StepResult, WILDCARD};
use crate::rng::SeedStream;
use crate::scene_graph::{Direction, ObjectId, SceneGraph};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Questions must have strictly fewer whitespace tokens than this.
    pub max_tokens: usize,
    pub max_features: usize,
    /// Probability that an answerable question gets a perturbed sibling.
    pub perturb_ratio: f64,
    /// Candidate edits tried per perturbation strategy.
    pub max_perturb_attempts: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_tokens: 25,
            max_features: DEFAULT_MAX_FEATURES,
            perturb_ratio: 1.0 / 3.0,
            max_perturb_attempts: 8,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        if self.max_features == 0 {
            return Err("max_features must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.perturb_ratio) {
            return Err(format!("perturb_ratio {} is outside [0, 1]", self.perturb_ratio));
        }
        if self.max_perturb_attempts == 0 {
            return Err("max_perturb_attempts must be positive".into());
        }
        Ok(())
    }
}

/// One relation step of a reference. `direction` is the role of the nearer
/// object with respect to the object named `name`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub predicate: String,
    pub direction: Direction,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefPath {
    Plain,
    /// `hops[0]` relates the object to a neighbour, `hops[1]` relates that
    /// neighbour onwards.
    Chain(Vec<Hop>),
    /// Every hop relates the object itself to a different neighbour.
    Star(Vec<Hop>),
}

/// How a question names one object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectRef {
    /// `None` for objects that are not in the image.
    pub object: Option<ObjectId>,
    pub name: String,
    pub path: RefPath,
}

impl ObjectRef {
    pub fn plain(object: Option<ObjectId>, name: impl Into<String>) -> Self {
        Self { object, name: name.into(), path: RefPath::Plain }
    }
}

/// Everything a template is filled with. Text and program are both rendered
/// from this, so editing it keeps them in step.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Binding {
    pub focus: Option<AttributeCategory>,
    /// Cluster members.
    pub members: Vec<ObjectId>,
    /// Objects the question is about: all members, one, or a pair.
    pub subjects: Vec<ObjectId>,
    /// Cluster feature per slot.
    pub features: BTreeMap<String, Feature>,
    /// Derived fillers such as `alt`, `opt1` or `r.alt`.
    pub values: BTreeMap<String, String>,
    /// Member references keyed by `group`, `m`, `m1`, `m2`.
    pub refs: BTreeMap<String, Vec<ObjectRef>>,
}

/// Per-image indexes shared by every template.
pub struct ImageContext<'g> {
    graph: &'g SceneGraph,
    exec: Executor<'g>,
    hops: HopContext,
    clusters: Vec<Cluster>,
    refs: RefCell<HashMap<(ObjectId, Traversal), Option<ObjectRef>>>,
}

impl<'g> ImageContext<'g> {
    pub fn new(graph: &'g SceneGraph, max_features: usize) -> Self {
        Self {
            graph,
            exec: Executor::new(graph),
            hops: build_hop_context(graph),
            clusters: cluster_graph(graph, max_features),
            refs: RefCell::new(HashMap::new()),
        }
    }

    pub fn graph(&self) -> &'g SceneGraph {
        self.graph
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn run(&self, program: &Program) -> Execution {
        self.exec.run(program)
    }

    fn name(&self, id: ObjectId) -> &'g str {
        self.graph.object(id).map(|o| o.name.as_str()).unwrap_or(WILDCARD)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Surface,
    Program,
}

/// Steps under construction plus the object sets certain registers must
/// hold for the question to be unambiguous.
#[derive(Default)]
struct Assembler {
    steps: Vec<Step>,
    expect: Vec<(Register, BTreeSet<ObjectId>)>,
}

impl Assembler {
    fn push(&mut self, op: Op) -> Register {
        let out = Register(self.steps.len() as u32);
        self.steps.push(Step { out, op });
        out
    }

    fn reference(&mut self, r: &ObjectRef) -> Register {
        let out = match &r.path {
            RefPath::Plain => self.push(Op::Select { name: r.name.clone() }),
            RefPath::Chain(hops) => {
                let last = hops.len() - 1;
                let mut reg = self.push(Op::Select { name: hops[last].name.clone() });
                for k in (0..=last).rev() {
                    let name = if k == 0 { r.name.clone() } else { hops[k - 1].name.clone() };
                    reg = self.push(Op::Relate {
                        input: reg,
                        predicate: hops[k].predicate.clone(),
                        direction: hops[k].direction,
                        name,
                    });
                }
                reg
            }
            RefPath::Star(hops) => {
                let mut acc: Option<Register> = None;
                for h in hops {
                    let anchor = self.push(Op::Select { name: h.name.clone() });
                    let arm = self.push(Op::Relate {
                        input: anchor,
                        predicate: h.predicate.clone(),
                        direction: h.direction,
                        name: r.name.clone(),
                    });
                    acc = Some(match acc {
                        None => arm,
                        Some(prev) => self.push(Op::And { left: prev, right: arm }),
                    });
                }
                acc.expect("star refs have arms")
            }
        };
        if let Some(id) = r.object {
            self.expect.push((out, BTreeSet::from([id])));
        }
        out
    }

    fn group(&mut self, refs: &[ObjectRef]) -> Register {
        let mut acc: Option<Register> = None;
        for r in refs {
            let reg = self.reference(r);
            acc = Some(match acc {
                None => reg,
                Some(prev) => self.push(Op::Or { left: prev, right: reg }),
            });
        }
        acc.expect("groups are nonempty")
    }

    fn describe(&mut self, t: &Template, b: &Binding) -> Register {
        let mut acc: Option<Register> = None;
        for slot in &t.slots {
            if let Some(Feature::Rel { predicate, direction, target_name }) = b.features.get(&slot.name) {
                let anchor = self.push(Op::Select { name: target_name.clone() });
                let found = self.push(Op::Relate {
                    input: anchor,
                    predicate: predicate.clone(),
                    direction: *direction,
                    name: WILDCARD.into(),
                });
                acc = Some(match acc {
                    None => found,
                    Some(prev) => self.push(Op::And { left: prev, right: found }),
                });
            }
        }
        let mut reg = match acc {
            Some(r) => r,
            None => self.push(Op::Select { name: WILDCARD.into() }),
        };
        for slot in &t.slots {
            if let Some(Feature::Attr { category, value }) = b.features.get(&slot.name) {
                reg = self.push(Op::FilterAttr { input: reg, category: *category, value: value.clone() });
            }
        }
        self.expect.push((reg, b.members.iter().copied().collect()));
        reg
    }
}

/// Generates questions from templates and scene graphs.
pub struct QuestionEngine {
    templates: TemplateSet,
    lexicon: Lexicon,
    config: EngineConfig,
}

impl QuestionEngine {
    pub fn new(templates: TemplateSet, lexicon: Lexicon, config: EngineConfig) -> Result<Self, String> {
        config.validate()?;
        Ok(Self { templates, lexicon, config })
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// All answerable questions for one preprocessed graph, each followed by
    /// its perturbed sibling when one was drawn and found.
    pub fn generate_image(&self, g: &SceneGraph, seeds: &SeedStream) -> Vec<QuestionRecord> {
        let icx = ImageContext::new(g, self.config.max_features);
        let stream = seeds.split(&g.image_id);
        let mut rng = stream.rng_for("instantiate");
        let mut seen: HashSet<(String, String)> = HashSet::new();
        let mut counters: BTreeMap<String, usize> = BTreeMap::new();
        let mut base = Vec::new();
        for t in self.templates.templates() {
            for c in icx.clusters() {
                for mut q in self.instantiate(t, c, &icx, &mut rng) {
                    if !seen.insert((q.template_id.clone(), q.text.clone())) {
                        continue;
                    }
                    let n = counters.entry(t.template_id.clone()).or_default();
                    q.question_id = format!("{}/{}/{}", g.image_id, t.template_id, n);
                    *n += 1;
                    base.push(q);
                }
            }
        }

        let mut prng = stream.rng_for("perturb");
        let mut out = Vec::with_capacity(base.len() + base.len() / 2);
        for q in base {
            let perturbed = if prng.gen_bool(self.config.perturb_ratio) {
                let mut kinds = PerturbationKind::ALL.to_vec();
                kinds.shuffle(&mut prng);
                kinds.into_iter().find_map(|k| self.perturb(&q, &icx, k, &mut prng))
            } else {
                None
            };
            out.push(q);
            out.extend(perturbed);
        }
        out
    }

    /// Answerable questions from one template and cluster. Ids are left
    /// empty for the caller to assign.
    pub fn instantiate<R: Rng>(
        &self,
        t: &Template,
        c: &Cluster,
        icx: &ImageContext,
        rng: &mut R,
    ) -> Vec<QuestionRecord> {
        if c.members.len() < t.min_cluster_size || c.features.len() != t.slots.len() {
            return Vec::new();
        }
        let g = icx.graph;
        let keys = t.placeholders();
        let members: Vec<ObjectId> = c.members.iter().copied().collect();
        let mut out = Vec::new();
        for features in slot_assignments(t, c) {
            let ambiguous_target = features.values().any(|f| match f {
                Feature::Rel { target_name, .. } => g.name_count(target_name) != 1,
                Feature::Attr { .. } => false,
            });
            if ambiguous_target {
                continue;
            }
            let base = Binding {
                focus: t.attribute_focus,
                members: members.clone(),
                subjects: members.clone(),
                features,
                values: BTreeMap::new(),
                refs: BTreeMap::new(),
            };
            for mut b in self.member_bindings(t, &base, icx) {
                if !self.fill_values(&keys, &mut b, icx, rng) {
                    continue;
                }
                if let Some(q) = self.build(t, b, icx, true) {
                    out.push(q);
                }
            }
        }
        out
    }

    fn member_bindings(&self, t: &Template, base: &Binding, icx: &ImageContext) -> Vec<Binding> {
        let reference = |id| self.reference(icx, id, t.traversal);
        match t.bind {
            BindMode::None => vec![base.clone()],
            BindMode::Group => {
                let refs: Option<Vec<ObjectRef>> = base.members.iter().map(|&id| reference(id)).collect();
                refs.map(|refs| {
                    let mut b = base.clone();
                    b.refs.insert("group".into(), refs);
                    b
                })
                .into_iter()
                .collect()
            }
            BindMode::Each => base
                .members
                .iter()
                .filter_map(|&id| {
                    let r = reference(id)?;
                    let mut b = base.clone();
                    b.subjects = vec![id];
                    b.refs.insert("m".into(), vec![r]);
                    Some(b)
                })
                .collect(),
            BindMode::Pair => {
                let mut out = Vec::new();
                for (i, &x) in base.members.iter().enumerate() {
                    for &y in &base.members[i + 1..] {
                        let (Some(rx), Some(ry)) = (reference(x), reference(y)) else { continue };
                        let mut b = base.clone();
                        b.subjects = vec![x, y];
                        b.refs.insert("m1".into(), vec![rx]);
                        b.refs.insert("m2".into(), vec![ry]);
                        out.push(b);
                    }
                }
                out
            }
        }
    }

    /// A reference to `id` that resolves to exactly that object, or `None`
    /// if the traversal cannot produce one.
    pub fn reference(&self, icx: &ImageContext, id: ObjectId, traversal: Traversal) -> Option<ObjectRef> {
        if let Some(hit) = icx.refs.borrow().get(&(id, traversal)) {
            return hit.clone();
        }
        let found = self.find_reference(icx, id, traversal);
        icx.refs.borrow_mut().insert((id, traversal), found.clone());
        found
    }

    fn find_reference(&self, icx: &ImageContext, id: ObjectId, traversal: Traversal) -> Option<ObjectRef> {
        let g = icx.graph;
        let name = g.object(id)?.name.clone();
        let resolves = |r: &ObjectRef| {
            let mut a = Assembler::default();
            a.reference(r);
            let p = Program::new(a.steps).expect("reference fragments type check");
            icx.run(&p).trace.last() == Some(&StepResult::ObjectSet(BTreeSet::from([id])))
        };
        let hop = |e: &HopEdge| Hop {
            predicate: e.predicate.clone(),
            direction: e.direction,
            name: icx.name(e.neighbor).to_string(),
        };
        match traversal {
            Traversal::None => (g.name_count(&name) == 1).then(|| ObjectRef::plain(Some(id), name)),
            Traversal::Chain => {
                let first_edges = subject_first(icx.hops.neighbors(id));
                for e1 in &first_edges {
                    let b = e1.neighbor;
                    if icx.name(b) == name {
                        continue;
                    }
                    for e2 in subject_first(icx.hops.neighbors(b)) {
                        let c = e2.neighbor;
                        if c == id || icx.name(c) == icx.name(b) || icx.name(c) == name {
                            continue;
                        }
                        let hops = vec![hop(e1), hop(e2)];
                        if !self.phrasable(&hops) {
                            continue;
                        }
                        let r = ObjectRef { object: Some(id), name: name.clone(), path: RefPath::Chain(hops) };
                        if resolves(&r) {
                            return Some(r);
                        }
                    }
                }
                for e1 in &first_edges {
                    if icx.name(e1.neighbor) == name {
                        continue;
                    }
                    let hops = vec![hop(e1)];
                    if !self.phrasable(&hops) {
                        continue;
                    }
                    let r = ObjectRef { object: Some(id), name: name.clone(), path: RefPath::Chain(hops) };
                    if resolves(&r) {
                        return Some(r);
                    }
                }
                None
            }
            Traversal::Star => {
                let edges = subject_first(icx.hops.neighbors(id));
                for e1 in &edges {
                    for e2 in &edges {
                        if icx.name(e1.neighbor) == icx.name(e2.neighbor)
                            || icx.name(e1.neighbor) == name
                            || icx.name(e2.neighbor) == name
                        {
                            continue;
                        }
                        let hops = vec![hop(e1), hop(e2)];
                        if !self.phrasable(&hops) {
                            continue;
                        }
                        let r = ObjectRef { object: Some(id), name: name.clone(), path: RefPath::Star(hops) };
                        if resolves(&r) {
                            return Some(r);
                        }
                    }
                }
                None
            }
        }
    }

    /// A clause-style hop ("that the man is holding") only reads well last.
    fn phrasable(&self, hops: &[Hop]) -> bool {
        hops.iter().enumerate().all(|(i, h)| {
            i + 1 == hops.len()
                || h.direction == Direction::Subject
                || self.lexicon.inverses.inverse_of(&h.predicate).is_some()
        })
    }

    fn hop_phrase(&self, h: &Hop) -> String {
        match h.direction {
            Direction::Subject => format!("{} the {}", h.predicate, h.name),
            Direction::Object => match self.lexicon.inverses.inverse_of(&h.predicate) {
                Some(inv) => format!("{inv} the {}", h.name),
                None => format!("that the {} is {}", h.name, h.predicate),
            },
        }
    }

    pub fn reference_text(&self, r: &ObjectRef) -> String {
        match &r.path {
            RefPath::Plain => r.name.clone(),
            RefPath::Chain(hops) => {
                let mut s = r.name.clone();
                for h in hops {
                    s.push(' ');
                    s.push_str(&self.hop_phrase(h));
                }
                s
            }
            RefPath::Star(hops) => {
                let arms: Vec<String> = hops.iter().map(|h| self.hop_phrase(h)).collect();
                format!("{} {}", r.name, arms.join(" and "))
            }
        }
    }

    fn group_text(&self, refs: &[ObjectRef]) -> String {
        let texts: Vec<String> = refs.iter().map(|r| self.reference_text(r)).collect();
        match texts.len() {
            0 => String::new(),
            1 => texts[0].clone(),
            n => format!("{} and the {}", texts[..n - 1].join(", the "), texts[n - 1]),
        }
    }

    /// Draws `held`, `alt`, `opt1`/`opt2` and `<slot>.alt` when the template
    /// uses them. Returns false if one cannot be filled.
    fn fill_values<R: Rng>(&self, keys: &BTreeSet<String>, b: &mut Binding, icx: &ImageContext, rng: &mut R) -> bool {
        let g = icx.graph;
        let needs = |k: &str| keys.contains(k);
        let wants_opts = needs("opt1") || needs("opt2");
        if let Some(focus) = b.focus {
            if needs("held") || wants_opts {
                let mut common: Option<BTreeSet<&str>> = None;
                for id in &b.subjects {
                    let vs: BTreeSet<&str> = g.object(*id).map(|o| o.values(focus).collect()).unwrap_or_default();
                    common = Some(match common {
                        None => vs,
                        Some(c) => c.intersection(&vs).copied().collect(),
                    });
                }
                let common: Vec<&str> = common.unwrap_or_default().into_iter().collect();
                let Some(held) = common.choose(rng) else { return false };
                b.values.insert("held".into(), held.to_string());
            }
            if needs("alt") || wants_opts {
                let described = b
                    .subjects
                    .iter()
                    .all(|id| g.object(*id).is_some_and(|o| o.values(focus).next().is_some()));
                if !described {
                    return false;
                }
                let candidates: Vec<&str> = self
                    .lexicon
                    .attributes
                    .values(focus)
                    .filter(|v| {
                        b.subjects
                            .iter()
                            .all(|id| g.object(*id).is_some_and(|o| !o.has_attribute(focus, v)))
                    })
                    .collect();
                let Some(alt) = candidates.choose(rng) else { return false };
                b.values.insert("alt".into(), alt.to_string());
            }
            if wants_opts {
                let (held, alt) = (b.values["held"].clone(), b.values["alt"].clone());
                let (o1, o2) = if rng.gen_bool(0.5) { (held, alt) } else { (alt, held) };
                b.values.insert("opt1".into(), o1);
                b.values.insert("opt2".into(), o2);
            }
        }
        for key in keys {
            let Some(slot) = key.strip_suffix(".alt") else { continue };
            let Some(Feature::Rel { predicate, direction, target_name }) = b.features.get(slot) else {
                return false;
            };
            let holds = |p: &str| {
                let f = Feature::rel(p, *direction, target_name.clone());
                b.subjects.iter().any(|id| f.held_by(g, *id))
            };
            let inverse = self.lexicon.inverses.inverse_of(predicate).filter(|p| !holds(p));
            let chosen = match inverse {
                Some(p) => p.to_string(),
                None => {
                    let vocab: BTreeSet<&str> =
                        g.predicates().into_iter().chain(self.lexicon.inverses.predicates()).collect();
                    let candidates: Vec<&str> =
                        vocab.into_iter().filter(|p| p != predicate && !holds(p)).collect();
                    let Some(p) = candidates.choose(rng) else { return false };
                    p.to_string()
                }
            };
            b.values.insert(key.clone(), chosen);
        }
        true
    }

    fn resolve(&self, t: &Template, b: &Binding, key: &str, mode: Mode) -> Option<String> {
        let category_text = |c: AttributeCategory| match mode {
            Mode::Surface => c.display_name().to_string(),
            Mode::Program => c.key().to_string(),
        };
        match key {
            "focus" => return b.focus.map(category_text),
            "group" => return b.refs.get("group").map(|r| self.group_text(r)),
            "m" | "m1" | "m2" => return b.refs.get(key).and_then(|r| r.first()).map(|r| self.reference_text(r)),
            _ => {}
        }
        if let Some(v) = b.values.get(key) {
            return Some(v.clone());
        }
        let (slot, field) = match key.split_once('.') {
            Some((s, f)) => (s, Some(f)),
            None => (key, None),
        };
        t.slot(slot)?;
        match (b.features.get(slot)?, field) {
            (Feature::Attr { value, .. }, None) => Some(value.clone()),
            (Feature::Attr { category, .. }, Some("category")) => Some(category_text(*category)),
            (Feature::Rel { predicate, .. }, Some("predicate")) => Some(predicate.clone()),
            (Feature::Rel { target_name, .. }, Some("target")) => Some(target_name.clone()),
            (Feature::Rel { direction, .. }, Some("direction")) => Some(direction.as_str().to_string()),
            _ => None,
        }
    }

    fn fill(&self, t: &Template, b: &Binding, pattern: &str, mode: Mode) -> Option<String> {
        let mut out = pattern.to_string();
        for key in placeholders(pattern) {
            let v = self.resolve(t, b, &key, mode)?;
            out = out.replacen(&format!("{{{key}}}"), &v, 1);
        }
        Some(out)
    }

    fn assemble(&self, t: &Template, b: &Binding) -> Option<(Program, Vec<(Register, BTreeSet<ObjectId>)>)> {
        let mut a = Assembler::default();
        let mut named: BTreeMap<&str, Register> = BTreeMap::new();
        for step in &t.program {
            let reg = match step.op.strip_prefix('@') {
                Some("describe") => a.describe(t, b),
                Some("group") => a.group(b.refs.get("group")?),
                Some(m) => a.reference(b.refs.get(m)?.first()?),
                None => {
                    let kind: OpKind = step.op.parse().ok()?;
                    let mut regs = Vec::new();
                    let mut lits = Vec::new();
                    for arg in &step.args {
                        match arg.strip_prefix('%') {
                            Some(r) => regs.push(*named.get(r)?),
                            None => lits.push(self.fill(t, b, arg, Mode::Program)?),
                        }
                    }
                    let lits: Vec<&str> = lits.iter().map(String::as_str).collect();
                    a.push(Op::build(kind, &regs, &lits).ok()?)
                }
            };
            named.insert(step.out.as_str(), reg);
        }
        let program = Program::new(a.steps).ok()?;
        Some((program, a.expect))
    }

    /// Renders and executes a binding. With `answerable`, anything short of a
    /// clean, unambiguous execution is rejected.
    pub(crate) fn build(
        &self,
        t: &Template,
        b: Binding,
        icx: &ImageContext,
        answerable: bool,
    ) -> Option<QuestionRecord> {
        let text = normalize_text(&self.fill(t, &b, &t.surface, Mode::Surface)?);
        let length_tokens = count_tokens(&text);
        if length_tokens >= self.config.max_tokens {
            return None;
        }
        let (program, expect) = self.assemble(t, &b)?;
        let Execution { trace, answer } = icx.run(&program);
        if answerable {
            if trace.iter().any(StepResult::is_none) {
                return None;
            }
            let index = program.register_index();
            for (reg, ids) in &expect {
                match &trace[index[reg]] {
                    StepResult::ObjectSet(got) if got == ids => {}
                    _ => return None,
                }
            }
        }
        let labels = Labels {
            attr_rel_type: self.fill(t, &b, &t.label, Mode::Program)?,
            res_type: format!("{}.{}", t.reasoning_type, t.subtype.as_str()),
            answer_key: answer.render(),
        };
        Some(QuestionRecord {
            question_id: String::new(),
            image_id: icx.graph.image_id.clone(),
            template_id: t.template_id.clone(),
            reasoning_type: t.reasoning_type,
            subtype: t.subtype,
            attribute: t.attribute_focus,
            traversal: t.traversal,
            n_hops: count_hops(&program),
            n_objects: program.mentioned_names().len(),
            length_tokens,
            is_problematic: answer.is_problematic(),
            text,
            program,
            trace,
            answer,
            labels,
            perturbation: None,
            binding: b,
        })
    }
}

/// Edges where the object is the subject read more naturally, so they are
/// tried first.
fn subject_first(edges: &[HopEdge]) -> Vec<&HopEdge> {
    let mut v: Vec<&HopEdge> = edges.iter().collect();
    v.sort_by_key(|e| e.direction != Direction::Subject);
    v
}

fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn slot_matches(constraint: SlotConstraint, f: &Feature) -> bool {
    match (constraint, f) {
        (SlotConstraint::Attr(None), Feature::Attr { .. }) => true,
        (SlotConstraint::Attr(Some(c)), Feature::Attr { category, .. }) => *category == c,
        (SlotConstraint::AttrOther(focus), Feature::Attr { category, .. }) => *category != focus,
        (SlotConstraint::Rel(None), Feature::Rel { .. }) => true,
        (SlotConstraint::Rel(Some(d)), Feature::Rel { direction, .. }) => *direction == d,
        _ => false,
    }
}

/// Every bijection between template slots and cluster features that
/// satisfies the slot constraints. Interchangeable slots take features in
/// ascending order so each assignment appears once.
fn slot_assignments(t: &Template, c: &Cluster) -> Vec<BTreeMap<String, Feature>> {
    let features: Vec<&Feature> = c.features.iter().collect();
    let n = t.slots.len();
    let mut out = Vec::new();
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut used = vec![false; features.len()];
    fn rec(
        t: &Template,
        features: &[&Feature],
        chosen: &mut Vec<usize>,
        used: &mut [bool],
        out: &mut Vec<BTreeMap<String, Feature>>,
    ) {
        let i = chosen.len();
        if i == t.slots.len() {
            out.push(
                t.slots
                    .iter()
                    .zip(chosen.iter())
                    .map(|(s, &fi)| (s.name.clone(), features[fi].clone()))
                    .collect(),
            );
            return;
        }
        for fi in 0..features.len() {
            if used[fi] || !slot_matches(t.slots[i].constraint, features[fi]) {
                continue;
            }
            let out_of_order = (0..i).any(|j| t.slots[j].constraint == t.slots[i].constraint && chosen[j] > fi);
            if out_of_order {
                continue;
            }
            used[fi] = true;
            chosen.push(fi);
            rec(t, features, chosen, used, out);
            chosen.pop();
            used[fi] = false;
        }
    }
    if features.len() == n {
        rec(t, &features, &mut chosen, &mut used, &mut out);
    }
    out
}
