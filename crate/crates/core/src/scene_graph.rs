//! Scene graph model, JSON loading and the cleanup passes that run before
//! clustering.

use crate::geometry::{BoundingBox, Ratio};
use crate::lexicon::{
    normalize, AttributeCategory, AttributeLexicon, ContradictionLexicon, HypernymProvider,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u64);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which end of a directed relation an object sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// The object is the source: `object -predicate-> other`.
    Subject,
    /// The object is the target: `other -predicate-> object`.
    Object,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Subject => "subject",
            Direction::Object => "object",
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Direction::Subject => Direction::Object,
            Direction::Object => Direction::Subject,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "subject" | "s" => Ok(Direction::Subject),
            "object" | "o" => Ok(Direction::Object),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// Outgoing edge `owner -predicate-> target`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub predicate: String,
    pub target: ObjectId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectNode {
    pub object_id: ObjectId,
    pub name: String,
    pub hypernym_key: Option<String>,
    pub bbox: BoundingBox,
    pub attributes: BTreeMap<AttributeCategory, BTreeSet<String>>,
    /// Sorted and deduplicated.
    pub relations: Vec<Relation>,
}

impl ObjectNode {
    pub fn has_attribute(&self, category: AttributeCategory, value: &str) -> bool {
        self.attributes
            .get(&category)
            .is_some_and(|vs| vs.contains(value))
    }

    pub fn values(&self, category: AttributeCategory) -> impl Iterator<Item = &str> {
        self.attributes
            .get(&category)
            .into_iter()
            .flat_map(|vs| vs.iter().map(String::as_str))
    }

    fn normalize_relations(&mut self) {
        let own = self.object_id;
        self.relations.retain(|r| r.target != own);
        self.relations.sort();
        self.relations.dedup();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneGraph {
    pub image_id: String,
    pub objects: BTreeMap<ObjectId, ObjectNode>,
    pub preprocessed: bool,
}

impl SceneGraph {
    pub fn new(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            objects: BTreeMap::new(),
            preprocessed: false,
        }
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectNode> {
        self.objects.get(&id)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Number of objects carrying `name`.
    pub fn name_count(&self, name: &str) -> usize {
        self.objects.values().filter(|o| o.name == name).count()
    }

    pub fn names(&self) -> BTreeSet<&str> {
        self.objects.values().map(|o| o.name.as_str()).collect()
    }

    /// All predicates used in this graph.
    pub fn predicates(&self) -> BTreeSet<&str> {
        self.objects
            .values()
            .flat_map(|o| o.relations.iter().map(|r| r.predicate.as_str()))
            .collect()
    }

    /// Whether `subject -predicate-> object` is an edge.
    pub fn has_edge(&self, subject: ObjectId, predicate: &str, object: ObjectId) -> bool {
        self.objects.get(&subject).is_some_and(|o| {
            o.relations
                .iter()
                .any(|r| r.target == object && r.predicate == predicate)
        })
    }

    /// Drops edges whose target is missing; returns how many were dropped.
    pub fn drop_dangling_relations(&mut self) -> usize {
        let ids: BTreeSet<ObjectId> = self.objects.keys().copied().collect();
        let mut dropped = 0;
        for obj in self.objects.values_mut() {
            let before = obj.relations.len();
            obj.relations.retain(|r| ids.contains(&r.target));
            dropped += before - obj.relations.len();
        }
        dropped
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: schema error in image {}: field `{field}`: {message}", image_id.as_deref().unwrap_or("<unknown>"))]
    Schema {
        path: PathBuf,
        image_id: Option<String>,
        field: String,
        message: String,
    },
}

/// Counters collected while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub images: usize,
    pub objects: usize,
    pub dangling_relations: usize,
    pub self_loops: usize,
    pub unknown_attributes: usize,
}

impl LoadReport {
    fn absorb(&mut self, other: LoadReport) {
        self.images += other.images;
        self.objects += other.objects;
        self.dangling_relations += other.dangling_relations;
        self.self_loops += other.self_loops;
        self.unknown_attributes += other.unknown_attributes;
    }
}

#[derive(Debug, Deserialize)]
struct RawImage {
    image_id: String,
    objects: Vec<RawObject>,
    #[serde(default)]
    preprocessed: bool,
}

#[derive(Debug, Deserialize)]
struct RawObject {
    object_id: u64,
    name: String,
    #[serde(default)]
    synset: Option<String>,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    #[serde(default)]
    attributes: Vec<String>,
    #[serde(default)]
    relations: Vec<RawRelation>,
}

#[derive(Debug, Deserialize)]
struct RawRelation {
    predicate: String,
    object_id: u64,
}

const IMAGE_FIELDS: &[&str] = &["image_id", "objects"];
const OBJECT_FIELDS: &[&str] = &["object_id", "name", "x", "y", "w", "h"];
const RELATION_FIELDS: &[&str] = &["predicate", "object_id"];

/// Loads one JSON file, or every `*.json` file in a directory (sorted by file
/// name). Graphs come back sorted by `image_id` (stable).
pub fn load_scene_graphs(
    path: &Path,
    lexicon: &AttributeLexicon,
) -> Result<(Vec<SceneGraph>, LoadReport), LoadError> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|source| LoadError::Io {
                path: path.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut graphs = Vec::new();
    let mut report = LoadReport::default();
    for file in files {
        let text = std::fs::read_to_string(&file).map_err(|source| LoadError::Io {
            path: file.clone(),
            source,
        })?;
        let (mut gs, r) = parse_scene_graphs(&text, &file, lexicon)?;
        graphs.append(&mut gs);
        report.absorb(r);
    }
    graphs.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    if report.dangling_relations > 0 {
        log::warn!(
            "dropped {} relation(s) pointing to absent objects",
            report.dangling_relations
        );
    }
    Ok((graphs, report))
}

/// Parses the JSON text of one input file. `origin` is used in error messages.
pub fn parse_scene_graphs(
    text: &str,
    origin: &Path,
    lexicon: &AttributeLexicon,
) -> Result<(Vec<SceneGraph>, LoadReport), LoadError> {
    let value: Value = serde_json::from_str(text).map_err(|e| LoadError::Parse {
        path: origin.to_path_buf(),
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let schema = |image_id: Option<&str>, field: &str, message: &str| LoadError::Schema {
        path: origin.to_path_buf(),
        image_id: image_id.map(str::to_string),
        field: field.to_string(),
        message: message.to_string(),
    };
    let records = value
        .as_array()
        .ok_or_else(|| schema(None, "<root>", "expected an array of images"))?;

    let mut graphs = Vec::with_capacity(records.len());
    let mut report = LoadReport::default();
    for (i, record) in records.iter().enumerate() {
        let image_id = record.get("image_id").and_then(Value::as_str);
        check_fields(record, IMAGE_FIELDS, &format!("[{i}]"))
            .map_err(|f| schema(image_id, &f, "missing required field"))?;
        let image_id = image_id.ok_or_else(|| schema(None, "image_id", "expected a string"))?;
        if let Some(objects) = record["objects"].as_array() {
            for (j, obj) in objects.iter().enumerate() {
                check_fields(obj, OBJECT_FIELDS, &format!("objects[{j}]"))
                    .map_err(|f| schema(Some(image_id), &f, "missing required field"))?;
                if let Some(rels) = obj.get("relations").and_then(Value::as_array) {
                    for (k, rel) in rels.iter().enumerate() {
                        check_fields(rel, RELATION_FIELDS, &format!("objects[{j}].relations[{k}]"))
                            .map_err(|f| schema(Some(image_id), &f, "missing required field"))?;
                    }
                }
            }
        }
        let raw: RawImage = serde_json::from_value(record.clone())
            .map_err(|e| schema(Some(image_id), "<record>", &e.to_string()))?;
        let (graph, r) = build_graph(raw, lexicon).map_err(|(field, msg)| {
            schema(Some(image_id), &field, &msg)
        })?;
        report.absorb(r);
        graphs.push(graph);
    }
    Ok((graphs, report))
}

/// Returns the dotted path of the first missing field.
fn check_fields(value: &Value, fields: &[&str], prefix: &str) -> Result<(), String> {
    let Some(map) = value.as_object() else {
        return Err(prefix.to_string());
    };
    match fields.iter().find(|f| !map.contains_key(**f)) {
        Some(f) if prefix.starts_with('[') => Err((*f).to_string()),
        Some(f) => Err(format!("{prefix}.{f}")),
        None => Ok(()),
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn build_graph(
    raw: RawImage,
    lexicon: &AttributeLexicon,
) -> Result<(SceneGraph, LoadReport), (String, String)> {
    let mut report = LoadReport {
        images: 1,
        ..LoadReport::default()
    };
    let mut graph = SceneGraph::new(raw.image_id);
    graph.preprocessed = raw.preprocessed;
    for (j, obj) in raw.objects.into_iter().enumerate() {
        let id = ObjectId(obj.object_id);
        let name = normalize(&obj.name);
        if name.is_empty() {
            return Err((format!("objects[{j}].name"), "name must be nonempty".into()));
        }
        let bbox = BoundingBox::new(obj.x, obj.y, obj.w, obj.h).ok_or_else(|| {
            (
                format!("objects[{j}].w"),
                "bounding box must have positive width and height".to_string(),
            )
        })?;
        let mut attributes: BTreeMap<AttributeCategory, BTreeSet<String>> = BTreeMap::new();
        for value in obj.attributes {
            match lexicon.category_of(&value) {
                Some(c) => {
                    attributes.entry(c).or_default().insert(normalize(&value));
                }
                None => report.unknown_attributes += 1,
            }
        }
        let mut relations = Vec::with_capacity(obj.relations.len());
        for rel in obj.relations {
            if rel.object_id == obj.object_id {
                report.self_loops += 1;
                continue;
            }
            relations.push(Relation {
                predicate: normalize(&rel.predicate),
                target: ObjectId(rel.object_id),
            });
        }
        let mut node = ObjectNode {
            object_id: id,
            name,
            hypernym_key: obj.synset.map(|s| normalize(&s)),
            bbox,
            attributes,
            relations,
        };
        node.normalize_relations();
        if graph.objects.insert(id, node).is_some() {
            return Err((
                format!("objects[{j}].object_id"),
                format!("duplicate object_id {id}"),
            ));
        }
    }
    report.objects = graph.objects.len();
    report.dangling_relations = graph.drop_dangling_relations();
    Ok((graph, report))
}

#[derive(Serialize)]
struct OutImage<'a> {
    image_id: &'a str,
    preprocessed: bool,
    objects: Vec<OutObject<'a>>,
}

#[derive(Serialize)]
struct OutObject<'a> {
    object_id: u64,
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    synset: Option<&'a str>,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    attributes: Vec<&'a str>,
    relations: Vec<OutRelation<'a>>,
}

#[derive(Serialize)]
struct OutRelation<'a> {
    predicate: &'a str,
    object_id: u64,
}

/// Writes graphs in the input schema, one image per line inside a JSON array.
pub fn write_scene_graphs<W: Write>(graphs: &[SceneGraph], mut out: W) -> std::io::Result<()> {
    writeln!(out, "[")?;
    for (i, g) in graphs.iter().enumerate() {
        let image = OutImage {
            image_id: &g.image_id,
            preprocessed: g.preprocessed,
            objects: g
                .objects
                .values()
                .map(|o| OutObject {
                    object_id: o.object_id.0,
                    name: &o.name,
                    synset: o.hypernym_key.as_deref(),
                    x: o.bbox.x,
                    y: o.bbox.y,
                    w: o.bbox.w,
                    h: o.bbox.h,
                    attributes: o
                        .attributes
                        .values()
                        .flat_map(|vs| vs.iter().map(String::as_str))
                        .collect(),
                    relations: o
                        .relations
                        .iter()
                        .map(|r| OutRelation {
                            predicate: &r.predicate,
                            object_id: r.target.0,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &image)?;
        writeln!(out, "{}", if i + 1 < graphs.len() { "," } else { "" })?;
    }
    writeln!(out, "]")
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessConfig {
    /// Same-name boxes merge when IoU is strictly above this.
    pub iou_threshold: Ratio,
    /// A superclass box is dropped when it covers at least this share of a
    /// smaller box.
    pub containment_threshold: Ratio,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            iou_threshold: Ratio::new(7, 10).unwrap(),
            containment_threshold: Ratio::new(8, 10).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub contradictory_values_removed: usize,
    pub objects_merged: usize,
    pub containers_removed: usize,
    pub taxonomy_misses: usize,
}

/// For each object and category, deletes both members of every contradictory
/// pair that is present. Returns the number of values removed.
pub fn remove_contradictory_attributes(g: &mut SceneGraph, lexicon: &ContradictionLexicon) -> usize {
    let mut removed = 0;
    for obj in g.objects.values_mut() {
        for (&category, values) in obj.attributes.iter_mut() {
            let doomed: BTreeSet<String> = values
                .iter()
                .flat_map(|a| {
                    values
                        .iter()
                        .filter(move |b| a < *b)
                        .map(move |b| (a, b))
                })
                .filter(|(a, b)| lexicon.contradicts(category, a, b))
                .flat_map(|(a, b)| [a.clone(), b.clone()])
                .collect();
            removed += doomed.len();
            values.retain(|v| !doomed.contains(v));
        }
        obj.attributes.retain(|_, vs| !vs.is_empty());
    }
    removed
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Keeps the smaller index as root.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}

/// Merges same-name objects whose boxes overlap with IoU above the threshold,
/// transitively, until no such pair remains. Returns the number of objects
/// folded into survivors.
pub fn merge_duplicate_objects(
    g: &mut SceneGraph,
    iou_threshold: Ratio,
    contradictions: &ContradictionLexicon,
) -> usize {
    let mut merged_total = 0;
    loop {
        let ids: Vec<ObjectId> = g.objects.keys().copied().collect();
        let mut uf = UnionFind::new(ids.len());
        let mut any = false;
        for i in 0..ids.len() {
            for j in (i + 1)..ids.len() {
                let (a, b) = (&g.objects[&ids[i]], &g.objects[&ids[j]]);
                if a.name == b.name && a.bbox.iou_exceeds(&b.bbox, iou_threshold) {
                    any |= uf.union(i, j);
                }
            }
        }
        if !any {
            break;
        }
        // ids are ascending, so each root index is the group's smallest id.
        let mut remap: BTreeMap<ObjectId, ObjectId> = BTreeMap::new();
        for i in 0..ids.len() {
            let root = uf.find(i);
            if root != i {
                remap.insert(ids[i], ids[root]);
            }
        }
        for (&gone, &survivor) in &remap {
            let absorbed = g.objects.remove(&gone).expect("merged object exists");
            let keep = g.objects.get_mut(&survivor).expect("survivor exists");
            keep.bbox = keep.bbox.enclosing(&absorbed.bbox);
            if keep.hypernym_key.is_none() {
                keep.hypernym_key = absorbed.hypernym_key;
            }
            for (c, vs) in absorbed.attributes {
                keep.attributes.entry(c).or_default().extend(vs);
            }
            keep.relations.extend(absorbed.relations);
        }
        for obj in g.objects.values_mut() {
            for rel in obj.relations.iter_mut() {
                if let Some(&s) = remap.get(&rel.target) {
                    rel.target = s;
                }
            }
            obj.normalize_relations();
        }
        merged_total += remap.len();
    }
    if merged_total > 0 {
        remove_contradictory_attributes(g, contradictions);
    }
    merged_total
}

/// Removes a larger box that covers a smaller one (intersection over the
/// smaller area at or above the threshold) when the taxonomy says the larger
/// object's name is a superclass of the smaller's. Returns
/// `(removed, taxonomy_misses)`.
pub fn remove_superclass_containers(
    g: &mut SceneGraph,
    taxonomy: &dyn HypernymProvider,
    containment_threshold: Ratio,
) -> (usize, usize) {
    let mut doomed = BTreeSet::new();
    let mut misses = 0;
    for big in g.objects.values() {
        for small in g.objects.values() {
            if big.object_id == small.object_id || big.bbox.area() <= small.bbox.area() {
                continue;
            }
            let inter = big.bbox.intersection_area(&small.bbox);
            if !containment_threshold.le_fraction(inter, small.bbox.area()) {
                continue;
            }
            let verdict = taxonomy.is_hypernym(&big.name, &small.name).or_else(|miss| {
                match small.hypernym_key.as_deref() {
                    Some(key) => taxonomy.is_hypernym(&big.name, key),
                    None => Err(miss),
                }
            });
            match verdict {
                Ok(true) => {
                    doomed.insert(big.object_id);
                    break;
                }
                Ok(false) => {}
                Err(miss) => {
                    log::debug!("{}: {miss}; keeping `{}`", g.image_id, big.name);
                    misses += 1;
                }
            }
        }
    }
    for id in &doomed {
        g.objects.remove(id);
    }
    if !doomed.is_empty() {
        g.drop_dangling_relations();
    }
    (doomed.len(), misses)
}

/// Full cleanup: contradictions, duplicate merge, superclass containers.
/// Idempotent.
pub fn preprocess(
    g: &mut SceneGraph,
    config: &PreprocessConfig,
    contradictions: &ContradictionLexicon,
    taxonomy: &dyn HypernymProvider,
) -> PreprocessReport {
    let mut report = PreprocessReport {
        contradictory_values_removed: remove_contradictory_attributes(g, contradictions),
        ..PreprocessReport::default()
    };
    report.objects_merged = merge_duplicate_objects(g, config.iou_threshold, contradictions);
    let (removed, misses) =
        remove_superclass_containers(g, taxonomy, config.containment_threshold);
    report.containers_removed = removed;
    report.taxonomy_misses = misses;
    g.preprocessed = true;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{FlatTaxonomy, Lexicon};

    fn obj(id: u64, name: &str, bbox: (u32, u32, u32, u32)) -> ObjectNode {
        ObjectNode {
            object_id: ObjectId(id),
            name: name.into(),
            hypernym_key: None,
            bbox: BoundingBox::new(bbox.0, bbox.1, bbox.2, bbox.3).unwrap(),
            attributes: BTreeMap::new(),
            relations: vec![],
        }
    }

    fn graph(objects: Vec<ObjectNode>) -> SceneGraph {
        let mut g = SceneGraph::new("img");
        for o in objects {
            g.objects.insert(o.object_id, o);
        }
        g
    }

    fn with_attrs(mut o: ObjectNode, c: AttributeCategory, vs: &[&str]) -> ObjectNode {
        o.attributes
            .entry(c)
            .or_default()
            .extend(vs.iter().map(|v| v.to_string()));
        o
    }

    #[test]
    fn contradictory_pair_removed_conservatively() {
        let lex = ContradictionLexicon::new([
            (AttributeCategory::Color, "red", "green"),
            (AttributeCategory::Size, "large", "small"),
        ]);
        let o = with_attrs(obj(1, "ball", (0, 0, 5, 5)), AttributeCategory::Color, &["red", "green", "blue"]);
        let o = with_attrs(o, AttributeCategory::Size, &["large", "small"]);
        let o = with_attrs(o, AttributeCategory::Shape, &["round"]);
        let mut g = graph(vec![o]);
        assert_eq!(remove_contradictory_attributes(&mut g, &lex), 4);
        let ball = &g.objects[&ObjectId(1)];
        assert_eq!(ball.values(AttributeCategory::Color).collect::<Vec<_>>(), ["blue"]);
        assert_eq!(ball.values(AttributeCategory::Size).count(), 0);
        assert!(ball.has_attribute(AttributeCategory::Shape, "round"));
    }

    #[test]
    fn no_contradiction_is_identity() {
        let lex = Lexicon::bundled().contradictions;
        let o = with_attrs(obj(1, "ball", (0, 0, 5, 5)), AttributeCategory::Color, &["red", "white"]);
        let mut g = graph(vec![o]);
        let before = g.clone();
        assert_eq!(remove_contradictory_attributes(&mut g, &lex), 0);
        assert_eq!(g, before);
    }

    #[test]
    fn overlapping_windows_merge_into_enclosing_box() {
        let lex = ContradictionLexicon::default();
        let a = with_attrs(obj(4, "window", (0, 0, 10, 10)), AttributeCategory::Color, &["white"]);
        let b = with_attrs(obj(2, "window", (0, 0, 10, 8)), AttributeCategory::Shape, &["square"]);
        let mut wall = obj(7, "wall", (0, 0, 40, 40));
        wall.relations.push(Relation { predicate: "has".into(), target: ObjectId(4) });
        wall.relations.push(Relation { predicate: "has".into(), target: ObjectId(2) });
        let mut g = graph(vec![a, b, wall]);
        assert_eq!(merge_duplicate_objects(&mut g, Ratio::new(7, 10).unwrap(), &lex), 1);
        assert_eq!(g.len(), 2);
        let w = &g.objects[&ObjectId(2)];
        assert_eq!(w.bbox, BoundingBox::new(0, 0, 10, 10).unwrap());
        assert!(w.has_attribute(AttributeCategory::Color, "white"));
        assert!(w.has_attribute(AttributeCategory::Shape, "square"));
        assert_eq!(
            g.objects[&ObjectId(7)].relations,
            vec![Relation { predicate: "has".into(), target: ObjectId(2) }]
        );
    }

    #[test]
    fn disjoint_windows_stay_apart() {
        let mut g = graph(vec![
            obj(1, "window", (0, 0, 10, 10)),
            obj(2, "window", (20, 20, 10, 10)),
        ]);
        assert_eq!(merge_duplicate_objects(&mut g, Ratio::new(7, 10).unwrap(), &ContradictionLexicon::default()), 0);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn identical_boxes_merge_and_drop_self_loops() {
        let mut a = obj(1, "cup", (3, 3, 4, 4));
        a.relations.push(Relation { predicate: "near".into(), target: ObjectId(2) });
        let b = with_attrs(obj(2, "cup", (3, 3, 4, 4)), AttributeCategory::Color, &["red"]);
        let mut g = graph(vec![a, b]);
        merge_duplicate_objects(&mut g, Ratio::new(7, 10).unwrap(), &ContradictionLexicon::default());
        let cup = &g.objects[&ObjectId(1)];
        assert!(cup.relations.is_empty());
        assert!(cup.has_attribute(AttributeCategory::Color, "red"));
    }

    #[test]
    fn merged_attributes_are_rechecked() {
        let lex = ContradictionLexicon::new([(AttributeCategory::Color, "red", "green")]);
        let a = with_attrs(obj(1, "cup", (0, 0, 4, 4)), AttributeCategory::Color, &["red"]);
        let b = with_attrs(obj(2, "cup", (0, 0, 4, 4)), AttributeCategory::Color, &["green", "blue"]);
        let mut g = graph(vec![a, b]);
        merge_duplicate_objects(&mut g, Ratio::new(7, 10).unwrap(), &lex);
        assert_eq!(g.objects[&ObjectId(1)].values(AttributeCategory::Color).collect::<Vec<_>>(), ["blue"]);
    }

    #[test]
    fn merge_cascades_through_enclosing_box() {
        // a~b exceed the threshold; the merged box then overlaps c enough.
        let mut g = graph(vec![
            obj(1, "car", (0, 0, 10, 10)),
            obj(2, "car", (1, 0, 10, 10)),
            obj(3, "car", (0, 0, 11, 12)),
        ]);
        let b = |x, y, w, h| BoundingBox::new(x, y, w, h).unwrap();
        assert!(!b(0, 0, 10, 10).iou_exceeds(&b(0, 0, 11, 12), Ratio::new(8, 10).unwrap()));
        assert!(!b(1, 0, 10, 10).iou_exceeds(&b(0, 0, 11, 12), Ratio::new(8, 10).unwrap()));
        merge_duplicate_objects(&mut g, Ratio::new(8, 10).unwrap(), &ContradictionLexicon::default());
        assert_eq!(g.len(), 1);
    }

    fn fruit_taxonomy() -> FlatTaxonomy {
        Lexicon::bundled().taxonomy
    }

    #[test]
    fn superclass_container_removed() {
        let mut bowl = obj(9, "bowl", (100, 100, 5, 5));
        bowl.relations.push(Relation { predicate: "near".into(), target: ObjectId(1) });
        let mut g = graph(vec![
            obj(1, "fruits", (0, 0, 40, 20)),
            obj(2, "apple", (2, 2, 10, 10)),
            obj(3, "lime", (20, 2, 10, 10)),
            bowl,
        ]);
        let (removed, _) = remove_superclass_containers(&mut g, &fruit_taxonomy(), Ratio::new(8, 10).unwrap());
        assert_eq!(removed, 1);
        assert!(g.object(ObjectId(1)).is_none());
        assert!(g.objects[&ObjectId(9)].relations.is_empty());
    }

    #[test]
    fn part_of_container_is_kept() {
        let mut g = graph(vec![obj(1, "cat", (0, 0, 50, 50)), obj(2, "tail", (5, 5, 10, 3))]);
        let (removed, misses) = remove_superclass_containers(&mut g, &fruit_taxonomy(), Ratio::new(8, 10).unwrap());
        assert_eq!((removed, misses), (0, 0));
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn low_containment_keeps_both() {
        // apple 10x10, only 30 px covered by the fruits box
        let mut g = graph(vec![obj(1, "fruits", (7, 0, 40, 40)), obj(2, "apple", (0, 0, 10, 10))]);
        assert_eq!(BoundingBox::new(7, 0, 40, 40).unwrap().intersection_area(&BoundingBox::new(0, 0, 10, 10).unwrap()), 30);
        let (removed, _) = remove_superclass_containers(&mut g, &fruit_taxonomy(), Ratio::new(8, 10).unwrap());
        assert_eq!(removed, 0);
    }

    #[test]
    fn taxonomy_miss_keeps_object() {
        let mut g = graph(vec![obj(1, "gizmo", (0, 0, 50, 50)), obj(2, "widget", (5, 5, 10, 3))]);
        let (removed, misses) = remove_superclass_containers(&mut g, &fruit_taxonomy(), Ratio::new(8, 10).unwrap());
        assert_eq!((removed, misses), (0, 1));
    }

    const FIXTURE: &str = r#"[
      {"image_id": "k1", "objects": [
        {"object_id": 1, "name": "Apple", "x": 10, "y": 10, "w": 5, "h": 5,
         "attributes": ["red", "shiny"], "relations": [{"predicate": "on", "object_id": 4}]},
        {"object_id": 2, "name": "knife", "x": 20, "y": 10, "w": 8, "h": 2,
         "attributes": ["silver", "metal"], "relations": [{"predicate": "on", "object_id": 4}, {"predicate": "near", "object_id": 99}]},
        {"object_id": 3, "name": "plate", "x": 30, "y": 10, "w": 6, "h": 6, "extra": true,
         "attributes": ["white", "ceramic"], "relations": [{"predicate": "on", "object_id": 4}]},
        {"object_id": 4, "name": "table", "x": 0, "y": 0, "w": 60, "h": 40,
         "attributes": ["brown", "wood"]}
      ]},
      {"image_id": "a0", "objects": []}
    ]"#;

    #[test]
    fn loads_fixture_and_drops_dangling_edge() {
        let lex = Lexicon::bundled().attributes;
        let (graphs, report) = parse_scene_graphs(FIXTURE, Path::new("f.json"), &lex).unwrap();
        assert_eq!(graphs.len(), 2);
        let k1 = graphs.iter().find(|g| g.image_id == "k1").unwrap();
        assert_eq!(k1.len(), 4);
        assert!(!k1.preprocessed);
        assert_eq!(report.dangling_relations, 1);
        assert_eq!(report.unknown_attributes, 1);
        assert_eq!(k1.objects[&ObjectId(1)].name, "apple");
        let empty = graphs.iter().find(|g| g.image_id == "a0").unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn malformed_json_reports_offset() {
        let text = "[\n  {\"image_id\": \"x\",, }\n]";
        let err = parse_scene_graphs(text, Path::new("bad.json"), &AttributeLexicon::default()).unwrap_err();
        match err {
            LoadError::Parse { offset, .. } => assert_eq!(&text[offset..offset + 1], ","),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_names_field_and_image() {
        let text = r#"[{"image_id": "im7", "objects": [{"object_id": 1, "x": 0, "y": 0, "w": 1, "h": 1}]}]"#;
        let err = parse_scene_graphs(text, Path::new("m.json"), &AttributeLexicon::default()).unwrap_err();
        match err {
            LoadError::Schema { image_id, field, .. } => {
                assert_eq!(image_id.as_deref(), Some("im7"));
                assert_eq!(field, "objects[0].name");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"[{"objects": []}]"#;
        let err = parse_scene_graphs(text, Path::new("m.json"), &AttributeLexicon::default()).unwrap_err();
        assert!(matches!(err, LoadError::Schema { ref field, .. } if field == "image_id"));
    }

    #[test]
    fn written_graphs_reload_identically() {
        let lex = Lexicon::bundled();
        let (mut graphs, _) = parse_scene_graphs(FIXTURE, Path::new("f.json"), &lex.attributes).unwrap();
        for g in graphs.iter_mut() {
            preprocess(g, &PreprocessConfig::default(), &lex.contradictions, &lex.taxonomy);
        }
        let mut buf = Vec::new();
        write_scene_graphs(&graphs, &mut buf).unwrap();
        let (again, _) = parse_scene_graphs(std::str::from_utf8(&buf).unwrap(), Path::new("o.json"), &lex.attributes).unwrap();
        let mut sorted = graphs.clone();
        sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let mut again_sorted = again;
        again_sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        assert_eq!(sorted, again_sorted);
    }
}
