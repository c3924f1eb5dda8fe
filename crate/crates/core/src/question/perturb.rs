//! Edits to an answerable question's binding that make it contradict the
//! image. An edit is kept only if re-execution ends in NONE.

use super::engine::{Binding, ImageContext, ObjectRef, QuestionEngine, RefPath};
use super::{Perturbation, QuestionRecord};
use crate::clustering::Feature;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Add an object that does not occur in the image.
    OutlierExternal,
    /// Add an image object that shares none of the cluster's features.
    OutlierInternal,
    /// Replace a relation with its inverse or a sibling predicate.
    RelationFlip,
    /// Replace an attribute value with another value of its category.
    AttributeFlip,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 4] = [
        PerturbationKind::OutlierExternal,
        PerturbationKind::OutlierInternal,
        PerturbationKind::RelationFlip,
        PerturbationKind::AttributeFlip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::OutlierExternal => "outlier_external",
            PerturbationKind::OutlierInternal => "outlier_internal",
            PerturbationKind::RelationFlip => "relation_flip",
            PerturbationKind::AttributeFlip => "attribute_flip",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown perturbation `{s}`"))
    }
}

impl QuestionEngine {
    /// Applies `kind` to an answerable question. Returns `None` when the
    /// strategy does not apply or no candidate edit makes the question
    /// unanswerable.
    pub fn perturb<R: Rng>(
        &self,
        q: &QuestionRecord,
        icx: &ImageContext,
        kind: PerturbationKind,
        rng: &mut R,
    ) -> Option<QuestionRecord> {
        if q.perturbation.is_some() || q.is_problematic {
            return None;
        }
        let t = self.templates().get(&q.template_id)?;
        let candidates = match kind {
            PerturbationKind::OutlierExternal => self.external_outliers(q, icx, rng),
            PerturbationKind::OutlierInternal => internal_outliers(q, icx, rng),
            PerturbationKind::RelationFlip => self.relation_flips(q, icx, rng),
            PerturbationKind::AttributeFlip => self.attribute_flips(q, rng),
        };
        candidates
            .into_iter()
            .take(self.config().max_perturb_attempts)
            .find_map(|(binding, detail)| {
                let mut p = self.build(t, binding, icx, false)?;
                if !p.answer.is_problematic() {
                    return None;
                }
                p.question_id = format!("{}/p", q.question_id);
                p.perturbation = Some(Perturbation { kind, detail, source: q.question_id.clone() });
                Some(p)
            })
    }

    fn external_outliers<R: Rng>(
        &self,
        q: &QuestionRecord,
        icx: &ImageContext,
        rng: &mut R,
    ) -> Vec<(Binding, String)> {
        if !q.binding.refs.contains_key("group") {
            return Vec::new();
        }
        let present = icx.graph().names();
        let mut names: Vec<&String> =
            self.lexicon().outliers.iter().filter(|n| !present.contains(n.as_str())).collect();
        names.shuffle(rng);
        names
            .into_iter()
            .map(|name| {
                let b = insert_into_group(&q.binding, ObjectRef::plain(None, name.clone()), rng);
                (b, format!("added `{name}`, absent from the image"))
            })
            .collect()
    }

    fn relation_flips<R: Rng>(
        &self,
        q: &QuestionRecord,
        icx: &ImageContext,
        rng: &mut R,
    ) -> Vec<(Binding, String)> {
        #[derive(Clone)]
        enum Site {
            Slot(String),
            Hop { key: String, index: usize, hop: usize },
        }
        let b = &q.binding;
        let mut sites: Vec<(Site, String)> = Vec::new();
        for (slot, f) in &b.features {
            if let Feature::Rel { predicate, .. } = f {
                sites.push((Site::Slot(slot.clone()), predicate.clone()));
            }
        }
        for (key, refs) in &b.refs {
            for (index, r) in refs.iter().enumerate() {
                if let RefPath::Chain(hops) | RefPath::Star(hops) = &r.path {
                    for (hop, h) in hops.iter().enumerate() {
                        sites.push((Site::Hop { key: key.clone(), index, hop }, h.predicate.clone()));
                    }
                }
            }
        }
        sites.shuffle(rng);
        let vocab: BTreeSet<&str> = icx
            .graph()
            .predicates()
            .into_iter()
            .chain(self.lexicon().inverses.predicates())
            .collect();
        let mut out = Vec::new();
        for (site, original) in sites {
            let mut replacements: Vec<&str> = vocab.iter().copied().filter(|p| *p != original).collect();
            replacements.shuffle(rng);
            if let Some(inv) = self.lexicon().inverses.inverse_of(&original) {
                replacements.retain(|p| *p != inv);
                replacements.insert(0, inv);
            }
            for new in replacements {
                let mut nb = b.clone();
                match &site {
                    Site::Slot(slot) => {
                        if let Some(Feature::Rel { predicate, .. }) = nb.features.get_mut(slot) {
                            *predicate = new.to_string();
                        }
                    }
                    Site::Hop { key, index, hop } => {
                        let r = &mut nb.refs.get_mut(key).expect("site exists")[*index];
                        if let RefPath::Chain(hops) | RefPath::Star(hops) = &mut r.path {
                            hops[*hop].predicate = new.to_string();
                        }
                    }
                }
                out.push((nb, format!("`{original}` -> `{new}`")));
            }
        }
        out
    }

    fn attribute_flips<R: Rng>(&self, q: &QuestionRecord, rng: &mut R) -> Vec<(Binding, String)> {
        let b = &q.binding;
        let mut sites: Vec<(String, crate::lexicon::AttributeCategory, String)> = b
            .features
            .iter()
            .filter_map(|(slot, f)| match f {
                Feature::Attr { category, value } => Some((slot.clone(), *category, value.clone())),
                Feature::Rel { .. } => None,
            })
            .collect();
        sites.shuffle(rng);
        let mut out = Vec::new();
        for (slot, category, original) in sites {
            let mut values: Vec<&str> =
                self.lexicon().attributes.values(category).filter(|v| *v != original).collect();
            values.shuffle(rng);
            for v in values {
                let mut nb = b.clone();
                nb.features.insert(slot.clone(), Feature::attr(category, v));
                out.push((nb, format!("{}: `{original}` -> `{v}`", category.key())));
            }
        }
        out
    }
}

fn internal_outliers<R: Rng>(q: &QuestionRecord, icx: &ImageContext, rng: &mut R) -> Vec<(Binding, String)> {
    let b = &q.binding;
    let Some(group) = b.refs.get("group") else { return Vec::new() };
    let g = icx.graph();
    let named: BTreeSet<&str> = group.iter().map(|r| r.name.as_str()).collect();
    let mut candidates: Vec<_> = g
        .objects
        .values()
        .filter(|o| {
            !b.members.contains(&o.object_id)
                && g.name_count(&o.name) == 1
                && !named.contains(o.name.as_str())
                && b.features.values().all(|f| !f.held_by(g, o.object_id))
        })
        .collect();
    candidates.shuffle(rng);
    candidates
        .into_iter()
        .map(|o| {
            let nb = insert_into_group(b, ObjectRef::plain(Some(o.object_id), o.name.clone()), rng);
            (nb, format!("added `{}` ({}), which shares no cluster feature", o.name, o.object_id))
        })
        .collect()
}

fn insert_into_group<R: Rng>(b: &Binding, r: ObjectRef, rng: &mut R) -> Binding {
    let mut nb = b.clone();
    let group = nb.refs.get_mut("group").expect("group binding");
    let at = rng.gen_range(0..=group.len());
    group.insert(at, r);
    nb
}
