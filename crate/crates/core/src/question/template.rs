use super::{is_supported_category, ReasoningType, Subtype, Traversal};
use crate::lexicon::AttributeCategory;
use crate::program::OpKind;
use crate::scene_graph::Direction;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

const BUNDLED: &str = include_str!("../../data/templates/default.json");

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {source}")]
    Json {
        origin: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("template `{template_id}`: {message}")]
    Invalid { template_id: String, message: String },
}

/// Which members of the cluster a question names explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindMode {
    /// Members are only reached through the cluster description.
    #[default]
    None,
    /// All members are listed, e.g. "the apple and the knife".
    Group,
    /// One question per member.
    Each,
    /// One question per unordered pair of members.
    Pair,
}

/// Constraint on the cluster feature bound to a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotConstraint {
    /// An attribute feature, optionally of a fixed category.
    Attr(Option<AttributeCategory>),
    /// An attribute feature whose category differs from the focus.
    AttrOther(AttributeCategory),
    /// A relation feature, optionally with a fixed direction.
    Rel(Option<Direction>),
}

impl SlotConstraint {
    pub fn is_attr(self) -> bool {
        !matches!(self, SlotConstraint::Rel(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSlot {
    pub name: String,
    pub constraint: SlotConstraint,
}

/// One skeleton line. `op` is an IR operator or a macro (`@group`, `@m`,
/// `@m1`, `@m2`, `@describe`); arguments starting with `%` name earlier
/// outputs, everything else is a literal with `{placeholders}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonStep {
    pub op: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub out: String,
}

/// A concrete template with a resolved attribute focus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub template_id: String,
    pub reasoning_type: ReasoningType,
    pub subtype: Subtype,
    pub attribute_focus: Option<AttributeCategory>,
    pub traversal: Traversal,
    pub min_cluster_size: usize,
    pub slots: Vec<FeatureSlot>,
    pub bind: BindMode,
    pub surface: String,
    pub program: Vec<SkeletonStep>,
    pub label: String,
}

impl Template {
    pub fn slot(&self, name: &str) -> Option<&FeatureSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Placeholder keys used anywhere in the template.
    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = placeholders(&self.surface).into_iter().collect();
        out.extend(placeholders(&self.label));
        for step in &self.program {
            for a in &step.args {
                out.extend(placeholders(a));
            }
        }
        out
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateSpec {
    template_id: String,
    reasoning_type: ReasoningType,
    subtype: Subtype,
    #[serde(default)]
    attribute_focus: Option<FocusSpec>,
    #[serde(default)]
    traversal: Traversal,
    #[serde(default = "default_min_size")]
    min_cluster_size: usize,
    cluster: Vec<SlotSpec>,
    #[serde(default)]
    bind: BindMode,
    surface: String,
    program: Vec<SkeletonStep>,
    label: String,
}

fn default_min_size() -> usize {
    2
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FocusSpec {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotSpec {
    slot: String,
    #[serde(default)]
    attr: Option<String>,
    #[serde(default)]
    rel: Option<String>,
}

/// Extracts `{key}` placeholders in order of appearance.
pub(crate) fn placeholders(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                out.push(after[..end].to_string());
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

/// The loaded, expanded and validated template inventory.
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    templates: Vec<Template>,
}

impl TemplateSet {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED, "bundled templates").expect("bundled templates are valid")
    }

    /// Loads a JSON file, or every `*.json` file of a directory in name order.
    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let io = |source| TemplateError::Io { path: path.to_path_buf(), source };
        let files = if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(io)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            files.sort();
            files
        } else {
            vec![path.to_path_buf()]
        };
        let mut specs = Vec::new();
        for file in files {
            let text = std::fs::read_to_string(&file)
                .map_err(|source| TemplateError::Io { path: file.clone(), source })?;
            specs.extend(parse_specs(&text, &file.display().to_string())?);
        }
        Self::from_specs(specs)
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, TemplateError> {
        Self::from_specs(parse_specs(text, origin)?)
    }

    fn from_specs(specs: Vec<TemplateSpec>) -> Result<Self, TemplateError> {
        let mut templates = Vec::new();
        for spec in specs {
            templates.extend(expand(spec)?);
        }
        templates.sort_by(|a, b| a.template_id.cmp(&b.template_id));
        for w in templates.windows(2) {
            if w[0].template_id == w[1].template_id {
                return Err(TemplateError::Invalid {
                    template_id: w[0].template_id.clone(),
                    message: "duplicate template id".into(),
                });
            }
        }
        Ok(Self { templates })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn get(&self, template_id: &str) -> Option<&Template> {
        self.templates
            .binary_search_by(|t| t.template_id.as_str().cmp(template_id))
            .ok()
            .map(|i| &self.templates[i])
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Keeps only templates whose id starts with one of `prefixes`.
    pub fn retain_prefixes(&mut self, prefixes: &[String]) {
        if !prefixes.is_empty() {
            self.templates
                .retain(|t| prefixes.iter().any(|p| t.template_id.starts_with(p.as_str())));
        }
    }
}

fn parse_specs(text: &str, origin: &str) -> Result<Vec<TemplateSpec>, TemplateError> {
    serde_json::from_str(text).map_err(|source| TemplateError::Json { origin: origin.into(), source })
}

fn expand(spec: TemplateSpec) -> Result<Vec<Template>, TemplateError> {
    let invalid = |message: String| TemplateError::Invalid {
        template_id: spec.template_id.clone(),
        message,
    };
    let parse_cat = |s: &str| s.parse::<AttributeCategory>().map_err(|e| invalid(e.to_string()));
    let foci: Vec<(Option<AttributeCategory>, bool)> = match &spec.attribute_focus {
        None => vec![(None, false)],
        Some(FocusSpec::One(s)) if s == "*" => {
            AttributeCategory::ALL.iter().map(|c| (Some(*c), true)).collect()
        }
        Some(FocusSpec::One(s)) => vec![(Some(parse_cat(s)?), false)],
        Some(FocusSpec::Many(list)) => {
            if list.is_empty() {
                return Err(invalid("empty attribute_focus list".into()));
            }
            list.iter()
                .map(|s| parse_cat(s).map(|c| (Some(c), true)))
                .collect::<Result<_, _>>()?
        }
    };
    let mut out = Vec::with_capacity(foci.len());
    for (focus, suffix) in foci {
        let template_id = match (focus, suffix) {
            (Some(c), true) => format!("{}.{}", spec.template_id, c.key()),
            _ => spec.template_id.clone(),
        };
        let slots = spec
            .cluster
            .iter()
            .map(|s| resolve_slot(s, focus))
            .collect::<Result<Vec<_>, String>>()
            .map_err(invalid)?;
        let t = Template {
            template_id,
            reasoning_type: spec.reasoning_type,
            subtype: spec.subtype,
            attribute_focus: focus,
            traversal: spec.traversal,
            min_cluster_size: spec.min_cluster_size,
            slots,
            bind: spec.bind,
            surface: spec.surface.clone(),
            program: spec.program.clone(),
            label: spec.label.clone(),
        };
        validate(&t).map_err(|message| TemplateError::Invalid {
            template_id: t.template_id.clone(),
            message,
        })?;
        out.push(t);
    }
    Ok(out)
}

fn resolve_slot(spec: &SlotSpec, focus: Option<AttributeCategory>) -> Result<FeatureSlot, String> {
    let constraint = match (&spec.attr, &spec.rel) {
        (Some(a), None) => match a.as_str() {
            "*" => SlotConstraint::Attr(None),
            "focus" => SlotConstraint::Attr(Some(
                focus.ok_or_else(|| format!("slot `{}` uses the focus but none is set", spec.slot))?,
            )),
            "other" => SlotConstraint::AttrOther(
                focus.ok_or_else(|| format!("slot `{}` uses the focus but none is set", spec.slot))?,
            ),
            cat => SlotConstraint::Attr(Some(cat.parse().map_err(|e: crate::lexicon::UnknownCategory| e.to_string())?)),
        },
        (None, Some(r)) => match r.as_str() {
            "*" => SlotConstraint::Rel(None),
            d => SlotConstraint::Rel(Some(d.parse()?)),
        },
        _ => return Err(format!("slot `{}` needs exactly one of attr/rel", spec.slot)),
    };
    if spec.slot.is_empty() || !spec.slot.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("bad slot name `{}`", spec.slot));
    }
    Ok(FeatureSlot { name: spec.slot.clone(), constraint })
}

const MEMBER_KEYS: [&str; 4] = ["group", "m", "m1", "m2"];
const FOCUS_KEYS: [&str; 5] = ["focus", "alt", "held", "opt1", "opt2"];

/// Which part of the binding a placeholder draws from; `None` for keys that
/// only describe metadata (the focus category, slot categories).
fn source_of(t: &Template, key: &str) -> Result<Option<String>, String> {
    if MEMBER_KEYS.contains(&key) {
        return Ok(Some(key.to_string()));
    }
    match key {
        "focus" => {
            return if t.attribute_focus.is_some() { Ok(None) } else { Err("`{focus}` without a focus".into()) }
        }
        "alt" | "held" => {
            return if t.attribute_focus.is_some() {
                Ok(Some(key.to_string()))
            } else {
                Err(format!("`{{{key}}}` without a focus"))
            }
        }
        "opt1" | "opt2" => {
            return if t.attribute_focus.is_some() {
                Ok(Some("opts".to_string()))
            } else {
                Err(format!("`{{{key}}}` without a focus"))
            }
        }
        _ => {}
    }
    let (slot, field) = match key.split_once('.') {
        Some((s, f)) => (s, Some(f)),
        None => (key, None),
    };
    let s = t.slot(slot).ok_or_else(|| format!("unknown placeholder `{{{key}}}`"))?;
    match (s.constraint.is_attr(), field) {
        (true, None) => Ok(Some(slot.to_string())),
        (true, Some("category")) => Ok(None),
        (false, Some("predicate" | "target" | "direction")) => Ok(Some(slot.to_string())),
        (false, Some("alt")) => Ok(Some(format!("{slot}.alt"))),
        _ => Err(format!("unknown placeholder `{{{key}}}`")),
    }
}

fn validate(t: &Template) -> Result<(), String> {
    if !is_supported_category(t.reasoning_type, t.subtype) {
        return Err(format!("{}.{} is not a question category", t.reasoning_type, t.subtype.as_str()));
    }
    if t.min_cluster_size < 2 {
        return Err("min_cluster_size must be at least 2".into());
    }
    if t.slots.is_empty() {
        return Err("cluster pattern has no slots".into());
    }
    let names: BTreeSet<&str> = t.slots.iter().map(|s| s.name.as_str()).collect();
    if names.len() != t.slots.len() {
        return Err("duplicate slot name".into());
    }
    for n in &names {
        if MEMBER_KEYS.contains(n) || FOCUS_KEYS.contains(n) {
            return Err(format!("slot name `{n}` is reserved"));
        }
    }
    let has_rel = t.slots.iter().any(|s| !s.constraint.is_attr());
    if (t.subtype == Subtype::Rel) != has_rel {
        return Err("subtype must be rel exactly when the pattern has a relation slot".into());
    }

    let mut surface_sources = BTreeSet::new();
    for key in placeholders(&t.surface) {
        if let Some(s) = source_of(t, &key)? {
            surface_sources.insert(s);
        }
    }
    for key in placeholders(&t.label) {
        if MEMBER_KEYS.contains(&key.as_str()) {
            return Err("labels cannot name members".into());
        }
        source_of(t, &key)?;
    }

    let mut program_sources = BTreeSet::new();
    let mut outputs: BTreeMap<&str, usize> = BTreeMap::new();
    if t.program.is_empty() {
        return Err("empty program skeleton".into());
    }
    for (i, step) in t.program.iter().enumerate() {
        if let Some(mac) = step.op.strip_prefix('@') {
            if !step.args.is_empty() {
                return Err(format!("macro @{mac} takes no arguments"));
            }
            match mac {
                "describe" => {
                    for s in &t.slots {
                        program_sources.insert(s.name.clone());
                    }
                }
                m if MEMBER_KEYS.contains(&m) => {
                    program_sources.insert(m.to_string());
                }
                _ => return Err(format!("unknown macro @{mac}")),
            }
        } else {
            let kind: OpKind = step.op.parse()?;
            let regs = step.args.iter().filter(|a| a.starts_with('%')).count();
            if regs != kind.register_arity() || step.args.len() != regs + kind.literal_arity() {
                return Err(format!("step {i}: wrong arguments for {kind}"));
            }
            if step.args.iter().take(regs).any(|a| !a.starts_with('%')) {
                return Err(format!("step {i}: register arguments must come first"));
            }
            for a in &step.args {
                if let Some(r) = a.strip_prefix('%') {
                    if !outputs.contains_key(r) {
                        return Err(format!("step {i}: `%{r}` is not defined earlier"));
                    }
                } else {
                    for key in placeholders(a) {
                        if let Some(s) = source_of(t, &key)? {
                            program_sources.insert(s);
                        }
                    }
                }
            }
        }
        if outputs.insert(step.out.as_str(), i).is_some() {
            return Err(format!("step {i}: output `{}` defined twice", step.out));
        }
    }

    let member_keys: BTreeSet<&str> = surface_sources
        .iter()
        .chain(&program_sources)
        .filter(|s| MEMBER_KEYS.contains(&s.as_str()))
        .map(String::as_str)
        .collect();
    let expected: BTreeSet<&str> = match t.bind {
        BindMode::None => BTreeSet::new(),
        BindMode::Group => BTreeSet::from(["group"]),
        BindMode::Each => BTreeSet::from(["m"]),
        BindMode::Pair => BTreeSet::from(["m1", "m2"]),
    };
    if member_keys != expected {
        return Err(format!("bind mode {:?} does not match the member placeholders used", t.bind));
    }
    if surface_sources != program_sources {
        let only_text: Vec<_> = surface_sources.difference(&program_sources).collect();
        let only_prog: Vec<_> = program_sources.difference(&surface_sources).collect();
        return Err(format!(
            "surface and program disagree: text-only {only_text:?}, program-only {only_prog:?}"
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(json: &str) -> Result<TemplateSet, TemplateError> {
        TemplateSet::from_json(&format!("[{json}]"), "test")
    }

    #[test]
    fn bundled_templates_load() {
        let set = TemplateSet::bundled();
        assert!(set.len() > 100);
        let kinds: BTreeSet<(ReasoningType, Subtype)> =
            set.templates().iter().map(|t| (t.reasoning_type, t.subtype)).collect();
        assert_eq!(kinds.len(), 9);
        assert!(set.get("verify_attr_group.color").is_some());
    }

    #[test]
    fn star_focus_expands_per_category() {
        let set = one(
            r#"{"template_id":"q","reasoning_type":"query","subtype":"attr","attribute_focus":"*",
                "cluster":[{"slot":"a","attr":"focus"}],"bind":"group",
                "surface":"What {focus} do the {group} share?",
                "program":[{"op":"@group","out":"g"},{"op":"common_attr","args":["%g","{focus}"],"out":"x"}],
                "label":"{focus}"}"#,
        )
        .unwrap();
        assert_eq!(set.len(), AttributeCategory::ALL.len());
        assert_eq!(set.get("q.color").unwrap().attribute_focus, Some(AttributeCategory::Color));
    }

    #[test]
    fn surface_and_program_must_agree() {
        let err = one(
            r#"{"template_id":"v","reasoning_type":"verify","subtype":"attr","attribute_focus":"color",
                "cluster":[{"slot":"a","attr":"focus"}],"bind":"group",
                "surface":"Are the {group} all {a}?",
                "program":[{"op":"@group","out":"g"},{"op":"verify_attr","args":["%g","{focus}","red"],"out":"x"}],
                "label":"{a}"}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("disagree"), "{err}");
    }

    #[test]
    fn compare_rel_rejected() {
        let err = one(
            r#"{"template_id":"c","reasoning_type":"compare","subtype":"rel","attribute_focus":"color",
                "cluster":[{"slot":"r","rel":"subject"}],"bind":"pair",
                "surface":"Same {focus}: {m1} {m2} {r.predicate}?",
                "program":[{"op":"@m1","out":"x"},{"op":"@m2","out":"y"},{"op":"compare_attr","args":["%x","%y","{r.predicate}"],"out":"z"}],
                "label":"{focus}"}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("not a question category"));
    }

    #[test]
    fn undefined_register_rejected() {
        let err = one(
            r#"{"template_id":"c","reasoning_type":"count","subtype":"attr","attribute_focus":"color",
                "cluster":[{"slot":"a","attr":"focus"}],
                "surface":"How many {a} things?",
                "program":[{"op":"@describe","out":"d"},{"op":"count","args":["%e"],"out":"n"}],
                "label":"{a}"}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("not defined"));
    }

    #[test]
    fn placeholder_scan() {
        assert_eq!(placeholders("Is the {m} {r.predicate} the {r.target}?"), vec!["m", "r.predicate", "r.target"]);
    }
}
