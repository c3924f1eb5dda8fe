//! Groups of objects sharing attributes and/or relations, and the per-object
//! neighbourhood index used for relational references.

use crate::lexicon::AttributeCategory;
use crate::scene_graph::{Direction, ObjectId, SceneGraph};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

/// Default cap on the number of features in a merged cluster.
pub const DEFAULT_MAX_FEATURES: usize = 4;

/// A property an object can share with others. Relations are keyed by the
/// *name* of the other endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Feature {
    Attr {
        category: AttributeCategory,
        value: String,
    },
    Rel {
        predicate: String,
        direction: Direction,
        target_name: String,
    },
}

impl Feature {
    pub fn attr(category: AttributeCategory, value: impl Into<String>) -> Self {
        Feature::Attr {
            category,
            value: value.into(),
        }
    }

    pub fn rel(predicate: impl Into<String>, direction: Direction, target_name: impl Into<String>) -> Self {
        Feature::Rel {
            predicate: predicate.into(),
            direction,
            target_name: target_name.into(),
        }
    }

    /// Whether `object` has this feature in `g`.
    pub fn held_by(&self, g: &SceneGraph, object: ObjectId) -> bool {
        let Some(node) = g.object(object) else {
            return false;
        };
        match self {
            Feature::Attr { category, value } => node.has_attribute(*category, value),
            Feature::Rel {
                predicate,
                direction: Direction::Subject,
                target_name,
            } => node.relations.iter().any(|r| {
                &r.predicate == predicate
                    && g.object(r.target).is_some_and(|t| &t.name == target_name)
            }),
            Feature::Rel {
                predicate,
                direction: Direction::Object,
                target_name,
            } => g.objects.values().any(|s| {
                &s.name == target_name
                    && s
                        .relations
                        .iter()
                        .any(|r| r.target == object && &r.predicate == predicate)
            }),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Attr { category, value } => write!(f, "{category}={value}"),
            Feature::Rel {
                predicate,
                direction,
                target_name,
            } => write!(f, "{predicate}/{direction}/{target_name}"),
        }
    }
}

/// Objects (at least two) that all possess every feature in `features`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cluster {
    pub features: BTreeSet<Feature>,
    pub members: BTreeSet<ObjectId>,
    pub image_id: String,
}

/// Every feature of every object, computed from the adjacency lists.
pub fn object_features(g: &SceneGraph) -> BTreeMap<ObjectId, BTreeSet<Feature>> {
    let mut out: BTreeMap<ObjectId, BTreeSet<Feature>> =
        g.objects.keys().map(|&id| (id, BTreeSet::new())).collect();
    for obj in g.objects.values() {
        let entry = out.get_mut(&obj.object_id).expect("object present");
        for (&category, values) in &obj.attributes {
            for v in values {
                entry.insert(Feature::attr(category, v.clone()));
            }
        }
        for rel in &obj.relations {
            let Some(target) = g.object(rel.target) else {
                continue;
            };
            out.get_mut(&obj.object_id)
                .expect("object present")
                .insert(Feature::rel(&rel.predicate, Direction::Subject, &target.name));
            out.get_mut(&rel.target)
                .expect("target present")
                .insert(Feature::rel(&rel.predicate, Direction::Object, &obj.name));
        }
    }
    out
}

/// One cluster per single feature held by two or more objects, in canonical
/// order.
pub fn build_base_clusters(g: &SceneGraph) -> Vec<Cluster> {
    let mut by_feature: BTreeMap<Feature, BTreeSet<ObjectId>> = BTreeMap::new();
    for (id, features) in object_features(g) {
        for f in features {
            by_feature.entry(f).or_default().insert(id);
        }
    }
    let mut clusters: Vec<Cluster> = by_feature
        .into_iter()
        .filter(|(_, members)| members.len() >= 2)
        .map(|(f, members)| Cluster {
            features: BTreeSet::from([f]),
            members,
            image_id: g.image_id.clone(),
        })
        .collect();
    clusters.sort();
    clusters
}

/// Closes `clusters` under pairwise merging: whenever two clusters share at
/// least two members (and the union of their features stays within
/// `max_features`), a cluster with the union of features and the
/// intersection of members is added. Input clusters are retained; one
/// cluster per feature set; canonical order.
pub fn merge_clusters(clusters: &[Cluster], max_features: usize) -> Vec<Cluster> {
    let image_id = clusters.first().map(|c| c.image_id.clone()).unwrap_or_default();
    let mut known: BTreeMap<BTreeSet<Feature>, BTreeSet<ObjectId>> = BTreeMap::new();
    for c in clusters {
        known
            .entry(c.features.clone())
            .and_modify(|m| *m = m.intersection(&c.members).copied().collect())
            .or_insert_with(|| c.members.clone());
    }
    // Every union of a subfamily of generators is reachable by adding one
    // generator at a time, so extending discovered sets by generators only
    // yields the full pairwise closure.
    let generators: Vec<(BTreeSet<Feature>, BTreeSet<ObjectId>)> =
        known.iter().map(|(f, m)| (f.clone(), m.clone())).collect();
    let mut queue: VecDeque<BTreeSet<Feature>> = known.keys().cloned().collect();
    while let Some(features) = queue.pop_front() {
        let members = known[&features].clone();
        for (gf, gm) in &generators {
            if gf.is_subset(&features) {
                continue;
            }
            let union: BTreeSet<Feature> = features.union(gf).cloned().collect();
            if union.len() > max_features || known.contains_key(&union) {
                continue;
            }
            let shared: BTreeSet<ObjectId> = members.intersection(gm).copied().collect();
            if shared.len() < 2 {
                continue;
            }
            known.insert(union.clone(), shared);
            queue.push_back(union);
        }
    }
    let mut out: Vec<Cluster> = known
        .into_iter()
        .map(|(features, members)| Cluster {
            features,
            members,
            image_id: image_id.clone(),
        })
        .collect();
    out.sort();
    out
}

/// Base clusters followed by the capped closure.
pub fn cluster_graph(g: &SceneGraph, max_features: usize) -> Vec<Cluster> {
    merge_clusters(&build_base_clusters(g), max_features)
}

/// One adjacency entry as seen from the owning object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HopEdge {
    pub predicate: String,
    pub direction: Direction,
    pub neighbor: ObjectId,
}

/// For each object, the objects related to it, sorted by
/// `(predicate, neighbor, direction)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopContext {
    pub edges: BTreeMap<ObjectId, Vec<HopEdge>>,
}

impl HopContext {
    pub fn neighbors(&self, id: ObjectId) -> &[HopEdge] {
        self.edges.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn build_hop_context(g: &SceneGraph) -> HopContext {
    let mut edges: BTreeMap<ObjectId, Vec<HopEdge>> =
        g.objects.keys().map(|&id| (id, Vec::new())).collect();
    for obj in g.objects.values() {
        for rel in &obj.relations {
            if !g.objects.contains_key(&rel.target) {
                continue;
            }
            edges.get_mut(&obj.object_id).expect("present").push(HopEdge {
                predicate: rel.predicate.clone(),
                direction: Direction::Subject,
                neighbor: rel.target,
            });
            edges.get_mut(&rel.target).expect("present").push(HopEdge {
                predicate: rel.predicate.clone(),
                direction: Direction::Object,
                neighbor: obj.object_id,
            });
        }
    }
    for list in edges.values_mut() {
        list.sort_by(|a, b| {
            (&a.predicate, a.neighbor, a.direction).cmp(&(&b.predicate, b.neighbor, b.direction))
        });
        list.dedup();
    }
    HopContext { edges }
}
