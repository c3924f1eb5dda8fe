//! Oracles and generators shared by the integration tests. Every oracle here
//! is written against the raw graph with plain loops and does not call into
//! the code it checks.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use sgqa_core::clustering::Feature;
use sgqa_core::geometry::BoundingBox;
use sgqa_core::lexicon::AttributeCategory;
use sgqa_core::program::{Answer, Op, Program, Register, Step, StepResult};
use sgqa_core::scene_graph::{Direction, ObjectId, ObjectNode, Relation, SceneGraph};
use std::collections::{BTreeMap, BTreeSet};

pub const NAMES: &[&str] = &["apple", "knife", "plate", "table", "cup"];
pub const PREDICATES: &[&str] = &["on", "near", "left of"];
pub const CATEGORIES: &[AttributeCategory] =
    &[AttributeCategory::Color, AttributeCategory::Material, AttributeCategory::Size];

pub fn values_for(c: AttributeCategory) -> &'static [&'static str] {
    match c {
        AttributeCategory::Color => &["red", "green", "white"],
        AttributeCategory::Material => &["wood", "metal"],
        _ => &["small", "large"],
    }
}

// ---------------------------------------------------------------------------
// IoU
// ---------------------------------------------------------------------------

/// Intersection and union measured by visiting every pixel.
pub fn pixel_areas(a: &BoundingBox, b: &BoundingBox) -> (u64, u64) {
    let inside = |bx: &BoundingBox, x: u32, y: u32| x >= bx.x && x < bx.x + bx.w && y >= bx.y && y < bx.y + bx.h;
    let xmax = (a.x + a.w).max(b.x + b.w);
    let ymax = (a.y + a.h).max(b.y + b.h);
    let (mut inter, mut union) = (0, 0);
    for y in 0..ymax {
        for x in 0..xmax {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += u64::from(ia && ib);
            union += u64::from(ia || ib);
        }
    }
    (inter, union)
}

/// `inter / union > num / den` by cross multiplication.
pub fn exceeds(inter: u64, union: u64, num: u64, den: u64) -> bool {
    inter * den > num * union
}

pub fn random_box<R: Rng>(rng: &mut R, max_side: u32, max_origin: u32) -> BoundingBox {
    BoundingBox::new(
        rng.gen_range(0..=max_origin),
        rng.gen_range(0..=max_origin),
        rng.gen_range(1..=max_side),
        rng.gen_range(1..=max_side),
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Graphs
// ---------------------------------------------------------------------------

pub fn node(id: u64, name: &str, bbox: BoundingBox) -> ObjectNode {
    ObjectNode {
        object_id: ObjectId(id),
        name: name.into(),
        hypernym_key: None,
        bbox,
        attributes: BTreeMap::new(),
        relations: Vec::new(),
    }
}

/// A small graph over [`NAMES`], [`PREDICATES`] and [`CATEGORIES`], dense
/// enough that shared features and relation matches are common.
pub fn random_graph<R: Rng>(rng: &mut R, image_id: &str, max_objects: usize) -> SceneGraph {
    let n = rng.gen_range(1..=max_objects);
    let mut g = SceneGraph::new(image_id);
    for i in 1..=n as u64 {
        let mut o = node(i, NAMES.choose(rng).unwrap(), random_box(rng, 40, 60));
        for &c in CATEGORIES {
            if rng.gen_bool(0.6) {
                let vs = values_for(c);
                let k = if rng.gen_bool(0.2) { 2 } else { 1 };
                for v in vs.choose_multiple(rng, k) {
                    o.attributes.entry(c).or_default().insert(v.to_string());
                }
            }
        }
        g.objects.insert(ObjectId(i), o);
    }
    let ids: Vec<u64> = (1..=n as u64).collect();
    for &s in &ids {
        for _ in 0..rng.gen_range(0..=2) {
            let t = *ids.choose(rng).unwrap();
            if t == s {
                continue;
            }
            let rel = Relation { predicate: PREDICATES.choose(rng).unwrap().to_string(), target: ObjectId(t) };
            let o = g.objects.get_mut(&ObjectId(s)).unwrap();
            if !o.relations.contains(&rel) {
                o.relations.push(rel);
            }
        }
    }
    for o in g.objects.values_mut() {
        o.relations.sort();
    }
    g
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

/// Every feature in the graph with the objects holding it, read off the raw
/// adjacency lists.
pub fn feature_holders(g: &SceneGraph) -> BTreeMap<Feature, BTreeSet<ObjectId>> {
    let mut out: BTreeMap<Feature, BTreeSet<ObjectId>> = BTreeMap::new();
    for o in g.objects.values() {
        for (c, vs) in &o.attributes {
            for v in vs {
                out.entry(Feature::attr(*c, v.clone())).or_default().insert(o.object_id);
            }
        }
    }
    for s in g.objects.values() {
        for r in &s.relations {
            let t = &g.objects[&r.target];
            out.entry(Feature::rel(&r.predicate, Direction::Subject, &t.name)).or_default().insert(s.object_id);
            out.entry(Feature::rel(&r.predicate, Direction::Object, &s.name)).or_default().insert(t.object_id);
        }
    }
    out
}

pub type ClusterSet = BTreeSet<(BTreeSet<Feature>, BTreeSet<ObjectId>)>;

pub fn oracle_base(g: &SceneGraph) -> ClusterSet {
    feature_holders(g)
        .into_iter()
        .filter(|(_, m)| m.len() >= 2)
        .map(|(f, m)| (BTreeSet::from([f]), m))
        .collect()
}

/// Pairwise closure computed the slow way: sweep all pairs until nothing new
/// appears.
pub fn oracle_closure(base: &ClusterSet, max_features: usize) -> ClusterSet {
    let mut all = base.clone();
    loop {
        let snapshot: Vec<_> = all.iter().cloned().collect();
        let mut grew = false;
        for (fa, ma) in &snapshot {
            for (fb, mb) in &snapshot {
                let f: BTreeSet<Feature> = fa.union(fb).cloned().collect();
                let m: BTreeSet<ObjectId> = ma.intersection(mb).copied().collect();
                if f.len() <= max_features && m.len() >= 2 && all.insert((f, m)) {
                    grew = true;
                }
            }
        }
        if !grew {
            return all;
        }
    }
}

// ---------------------------------------------------------------------------
// Programs
// ---------------------------------------------------------------------------

/// Straightforward interpreter: every operator rescans the whole graph, and
/// once any step has produced NONE every later step is NONE.
pub fn reference_execute(program: &Program, g: &SceneGraph) -> (Vec<StepResult>, Answer) {
    let mut regs: BTreeMap<Register, StepResult> = BTreeMap::new();
    let mut trace = Vec::new();
    let name_ok = |id: ObjectId, name: &str| name == "_" || g.objects[&id].name == name;
    let has = |id: ObjectId, c: AttributeCategory, v: &str| {
        g.objects[&id].attributes.get(&c).is_some_and(|vs| vs.contains(v))
    };
    let vals = |id: ObjectId, c: AttributeCategory| -> BTreeSet<String> {
        g.objects[&id].attributes.get(&c).cloned().unwrap_or_default()
    };
    let edge = |s: ObjectId, p: &str, t: ObjectId| {
        g.objects[&s].relations.iter().any(|r| r.predicate == p && r.target == t)
    };
    let objs = |set: BTreeSet<ObjectId>| if set.is_empty() { StepResult::None } else { StepResult::ObjectSet(set) };
    for step in program.steps() {
        let inputs: Vec<StepResult> = step.op.inputs().iter().map(|r| regs[r].clone()).collect();
        let result = if trace.iter().any(StepResult::is_none) {
            StepResult::None
        } else {
            let set = |i: usize| match &inputs[i] {
                StepResult::ObjectSet(s) => s.clone(),
                other => panic!("expected objects, got {other:?}"),
            };
            match &step.op {
                Op::Select { name } => objs(g.objects.keys().copied().filter(|&id| name_ok(id, name)).collect()),
                Op::FilterAttr { category, value, .. } => {
                    objs(set(0).into_iter().filter(|&id| has(id, *category, value)).collect())
                }
                Op::Relate { predicate, direction, name, .. } => {
                    let anchors = set(0);
                    let mut found = BTreeSet::new();
                    for &cand in g.objects.keys() {
                        if !name_ok(cand, name) {
                            continue;
                        }
                        let linked = anchors.iter().any(|&a| match direction {
                            Direction::Subject => edge(cand, predicate, a),
                            Direction::Object => edge(a, predicate, cand),
                        });
                        if linked {
                            found.insert(cand);
                        }
                    }
                    objs(found)
                }
                Op::QueryAttr { category, .. } => {
                    let vs: BTreeSet<String> = set(0).into_iter().flat_map(|id| vals(id, *category)).collect();
                    if vs.is_empty() { StepResult::None } else { StepResult::Values(vs) }
                }
                Op::CommonAttr { category, .. } => {
                    let members = set(0);
                    let mut all_values: BTreeSet<String> = BTreeSet::new();
                    for &id in &members {
                        all_values.extend(vals(id, *category));
                    }
                    let common: BTreeSet<String> =
                        all_values.into_iter().filter(|v| members.iter().all(|&id| has(id, *category, v))).collect();
                    if common.is_empty() { StepResult::None } else { StepResult::Values(common) }
                }
                Op::VerifyAttr { category, value, .. } => {
                    StepResult::Bool(set(0).into_iter().all(|id| has(id, *category, value)))
                }
                Op::VerifyRel { predicate, direction, name, .. } => StepResult::Bool(set(0).into_iter().all(|id| {
                    g.objects.keys().any(|&other| {
                        name_ok(other, name)
                            && match direction {
                                Direction::Subject => edge(id, predicate, other),
                                Direction::Object => edge(other, predicate, id),
                            }
                    })
                })),
                Op::Exist { .. } => StepResult::Bool(!set(0).is_empty()),
                Op::Count { .. } => StepResult::Number(set(0).len() as u64),
                Op::CompareAttr { category, .. } => {
                    let a: BTreeSet<String> = set(0).into_iter().flat_map(|id| vals(id, *category)).collect();
                    let b: BTreeSet<String> = set(1).into_iter().flat_map(|id| vals(id, *category)).collect();
                    if a.is_empty() || b.is_empty() { StepResult::None } else { StepResult::Bool(a == b) }
                }
                Op::ChooseAttr { category, first, second, .. } => {
                    let s = set(0);
                    let a = s.iter().all(|&id| has(id, *category, first));
                    let b = s.iter().all(|&id| has(id, *category, second));
                    match (a, b) {
                        (true, false) => StepResult::Values(BTreeSet::from([first.clone()])),
                        (false, true) => StepResult::Values(BTreeSet::from([second.clone()])),
                        _ => StepResult::None,
                    }
                }
                Op::And { .. } | Op::Or { .. } => {
                    let is_and = matches!(step.op, Op::And { .. });
                    match (&inputs[0], &inputs[1]) {
                        (StepResult::Bool(a), StepResult::Bool(b)) => {
                            StepResult::Bool(if is_and { *a && *b } else { *a || *b })
                        }
                        (StepResult::ObjectSet(a), StepResult::ObjectSet(b)) => objs(if is_and {
                            a.intersection(b).copied().collect()
                        } else {
                            a.union(b).copied().collect()
                        }),
                        other => panic!("bad and/or operands {other:?}"),
                    }
                }
            }
        };
        regs.insert(step.out, result.clone());
        trace.push(result);
    }
    let answer = match trace.last().unwrap() {
        StepResult::None => Answer::Problematic,
        StepResult::Bool(b) => Answer::YesNo(*b),
        StepResult::Number(n) => Answer::Number(*n),
        StepResult::Values(vs) => answer_from(vs.iter().cloned().collect()),
        StepResult::ObjectSet(ids) => answer_from(ids.iter().map(|id| g.objects[id].name.clone()).collect()),
    };
    (trace, answer)
}

fn answer_from(vs: BTreeSet<String>) -> Answer {
    let mut v: Vec<String> = vs.into_iter().collect();
    match v.len() {
        0 => Answer::Problematic,
        1 => Answer::Value(v.pop().unwrap()),
        _ => Answer::ValueList(v),
    }
}

/// After the first NONE every later step is NONE.
pub fn none_absorbed(trace: &[StepResult]) -> bool {
    match trace.iter().position(StepResult::is_none) {
        Some(i) => trace[i..].iter().all(StepResult::is_none),
        None => true,
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Objects,
    Bool,
    Other,
}

/// A well-typed random program of `1..=max_steps` steps whose step `i`
/// writes `r{i}`. Names, predicates and values come mostly from the fixture
/// vocabulary, with an occasional absent name to exercise NONE.
pub fn random_program<R: Rng>(rng: &mut R, max_steps: usize) -> Program {
    let n = rng.gen_range(1..=max_steps);
    let mut kinds: Vec<Kind> = Vec::new();
    let mut steps = Vec::new();
    let name = |rng: &mut R| -> String {
        match rng.gen_range(0..10) {
            0 => "_".into(),
            1 => "zebra".into(),
            _ => NAMES.choose(rng).unwrap().to_string(),
        }
    };
    let pick = |rng: &mut R, kinds: &[Kind], k: Kind| -> Option<Register> {
        let idx: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == k).collect();
        idx.choose(rng).map(|&i| Register(i as u32))
    };
    for i in 0..n {
        let cat = *CATEGORIES.choose(rng).unwrap();
        let val = values_for(cat).choose(rng).unwrap().to_string();
        let dir = if rng.gen_bool(0.5) { Direction::Subject } else { Direction::Object };
        let obj = pick(rng, &kinds, Kind::Objects);
        let obj2 = pick(rng, &kinds, Kind::Objects);
        let b1 = pick(rng, &kinds, Kind::Bool);
        let b2 = pick(rng, &kinds, Kind::Bool);
        let choice = if obj.is_none() { 0 } else { rng.gen_range(0..15) };
        let (op, kind) = match (choice, obj, obj2, b1, b2) {
            (1 | 2, Some(r), ..) => (Op::FilterAttr { input: r, category: cat, value: val }, Kind::Objects),
            (3 | 4, Some(r), ..) => (
                Op::Relate { input: r, predicate: PREDICATES.choose(rng).unwrap().to_string(), direction: dir, name: name(rng) },
                Kind::Objects,
            ),
            (5, Some(r), ..) => (Op::QueryAttr { input: r, category: cat }, Kind::Other),
            (6, Some(r), ..) => (Op::CommonAttr { input: r, category: cat }, Kind::Other),
            (7, Some(r), ..) => (Op::VerifyAttr { input: r, category: cat, value: val }, Kind::Bool),
            (8, Some(r), ..) => (
                Op::VerifyRel { input: r, predicate: PREDICATES.choose(rng).unwrap().to_string(), direction: dir, name: name(rng) },
                Kind::Bool,
            ),
            (9, Some(r), ..) => (Op::Exist { input: r }, Kind::Bool),
            (10, Some(r), ..) => (Op::Count { input: r }, Kind::Other),
            (11, Some(a), Some(b), ..) => (Op::CompareAttr { left: a, right: b, category: cat }, Kind::Bool),
            (12, Some(r), ..) => {
                let vs = values_for(cat);
                let mut two: Vec<&&str> = vs.choose_multiple(rng, 2).collect();
                two.shuffle(rng);
                (Op::ChooseAttr { input: r, category: cat, first: two[0].to_string(), second: two[1].to_string() }, Kind::Other)
            }
            (13, _, _, Some(a), Some(b)) => {
                if rng.gen_bool(0.5) { (Op::And { left: a, right: b }, Kind::Bool) } else { (Op::Or { left: a, right: b }, Kind::Bool) }
            }
            (14, Some(a), Some(b), ..) => {
                if rng.gen_bool(0.5) { (Op::And { left: a, right: b }, Kind::Objects) } else { (Op::Or { left: a, right: b }, Kind::Objects) }
            }
            _ => (Op::Select { name: name(rng) }, Kind::Objects),
        };
        kinds.push(kind);
        steps.push(Step { out: Register(i as u32), op });
    }
    Program::new(steps).expect("generator emits well-typed programs")
}

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

use sgqa_core::lexicon::Lexicon;
use sgqa_core::pipeline::{generate_corpus, preprocess_all};
use sgqa_core::question::{EngineConfig, QuestionEngine, QuestionRecord, TemplateSet};
use sgqa_core::rng::SeedStream;
use sgqa_core::scene_graph::PreprocessConfig;
use sgqa_core::synth::{synth_graphs, SynthConfig};

pub fn engine() -> QuestionEngine {
    QuestionEngine::new(TemplateSet::bundled(), Lexicon::bundled(), EngineConfig::default()).unwrap()
}

/// `count` synthetic graphs, cleaned.
pub fn clean_graphs(seed: u64, count: usize, config: &SynthConfig) -> Vec<SceneGraph> {
    let lex = Lexicon::bundled();
    let mut graphs = synth_graphs(seed, count, config, &lex);
    preprocess_all(&mut graphs, &PreprocessConfig::default(), &lex, 1).unwrap();
    graphs
}

pub fn generate(graphs: &[SceneGraph], engine: &QuestionEngine, seed: u64, jobs: usize) -> Vec<QuestionRecord> {
    let mut out = Vec::new();
    generate_corpus(graphs, engine, &PreprocessConfig::default(), &SeedStream::new(seed), jobs, |q| {
        out.push(q);
        Ok(())
    })
    .unwrap();
    out
}
