//! Prompt templates and preference catalogs.
//!
//! Template syntax:
//!
//! * `{name}` substitutes a component (`instruction`, `preference`,
//!   `response`, `feedback`, `profession`);
//! * `{#preference}...{/preference}` renders its body only when a preference
//!   is in use, so boilerplate around the preference disappears with it;
//! * `{{` and `}}` are literal braces.
//!
//! Templates are validated per context kind at load time.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::backends::{AssembledPrompt, ContextKind};
use crate::error::{Error, Result};
use crate::ids::digest_hex;
use crate::types::{Candidate, Feedback, PromptRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Placeholder {
    Instruction,
    Preference,
    Response,
    Feedback,
    Profession,
}

impl Placeholder {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "instruction" => Placeholder::Instruction,
            "preference" => Placeholder::Preference,
            "response" => Placeholder::Response,
            "feedback" => Placeholder::Feedback,
            "profession" => Placeholder::Profession,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::Instruction => "instruction",
            Placeholder::Preference => "preference",
            Placeholder::Response => "response",
            Placeholder::Feedback => "feedback",
            Placeholder::Profession => "profession",
        }
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Var(Placeholder),
    Section(Placeholder, Vec<Segment>),
}

/// A parsed template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    source: String,
    segments: Vec<Segment>,
}

fn parse_segments(src: &str) -> std::result::Result<Vec<Segment>, String> {
    // stack of (open section, segments collected so far)
    let mut stack: Vec<(Option<Placeholder>, Vec<Segment>)> = vec![(None, Vec::new())];
    let mut text = String::new();
    let mut rest = src;
    let flush = |text: &mut String, stack: &mut Vec<(Option<Placeholder>, Vec<Segment>)>| {
        if !text.is_empty() {
            stack.last_mut().expect("root").1.push(Segment::Text(std::mem::take(text)));
        }
    };
    while let Some(pos) = rest.find(['{', '}']) {
        text.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(r) = tail.strip_prefix("{{") {
            text.push('{');
            rest = r;
            continue;
        }
        if let Some(r) = tail.strip_prefix("}}") {
            text.push('}');
            rest = r;
            continue;
        }
        if tail.starts_with('}') {
            return Err("unmatched '}'".into());
        }
        let close = tail.find('}').ok_or("unclosed '{'")?;
        let tag = &tail[1..close];
        rest = &tail[close + 1..];
        flush(&mut text, &mut stack);
        let (marker, name) = match tag.chars().next() {
            Some(c @ ('#' | '/')) => (Some(c), &tag[1..]),
            _ => (None, tag),
        };
        let ph = Placeholder::parse(name).ok_or_else(|| format!("unknown placeholder {{{tag}}}"))?;
        match marker {
            None => stack.last_mut().expect("root").1.push(Segment::Var(ph)),
            Some('#') => {
                if ph != Placeholder::Preference {
                    return Err(format!("only {{#preference}} sections are supported, got {{{tag}}}"));
                }
                stack.push((Some(ph), Vec::new()));
            }
            Some(_) => match stack.pop() {
                Some((Some(open), body)) if open == ph => {
                    stack.last_mut().ok_or("unbalanced sections")?.1.push(Segment::Section(ph, body));
                }
                _ => return Err(format!("unexpected {{/{name}}}")),
            },
        }
    }
    text.push_str(rest);
    flush(&mut text, &mut stack);
    if stack.len() != 1 {
        return Err("unclosed section".into());
    }
    Ok(stack.pop().expect("root").1)
}

fn count_vars(segs: &[Segment], out: &mut Vec<Placeholder>) {
    for s in segs {
        match s {
            Segment::Text(_) => {}
            Segment::Var(p) => out.push(*p),
            Segment::Section(_, body) => count_vars(body, out),
        }
    }
}

impl Template {
    pub fn parse(source: &str) -> std::result::Result<Self, String> {
        Ok(Self {
            source: source.to_string(),
            segments: parse_segments(source)?,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Placeholders used, with multiplicity.
    pub fn placeholders(&self) -> Vec<Placeholder> {
        let mut v = Vec::new();
        count_vars(&self.segments, &mut v);
        v
    }

    fn render_into(segs: &[Segment], values: &Values<'_>, out: &mut String) {
        for s in segs {
            match s {
                Segment::Text(t) => out.push_str(t),
                Segment::Var(p) => out.push_str(values.get(*p).unwrap_or("")),
                Segment::Section(p, body) => {
                    if values.get(*p).is_some() {
                        Self::render_into(body, values, out);
                    }
                }
            }
        }
    }

    fn render(&self, values: &Values<'_>) -> String {
        let mut out = String::with_capacity(self.source.len() * 2);
        Self::render_into(&self.segments, values, &mut out);
        out
    }
}

#[derive(Default)]
struct Values<'a> {
    instruction: Option<&'a str>,
    preference: Option<&'a str>,
    response: Option<&'a str>,
    feedback: Option<&'a str>,
    profession: Option<&'a str>,
}

impl<'a> Values<'a> {
    fn get(&self, p: Placeholder) -> Option<&'a str> {
        match p {
            Placeholder::Instruction => self.instruction,
            Placeholder::Preference => self.preference,
            Placeholder::Response => self.response,
            Placeholder::Feedback => self.feedback,
            Placeholder::Profession => self.profession,
        }
    }
}

/// Placeholders a kind must use and those it may use.
fn placeholder_rules(kind: ContextKind) -> (&'static [Placeholder], &'static [Placeholder]) {
    use Placeholder::*;
    match kind {
        ContextKind::Initial => (&[Instruction], &[Preference]),
        ContextKind::Feedback => (&[Instruction, Response], &[Preference]),
        ContextKind::RefineWithFeedback => (&[Instruction, Response, Feedback], &[Preference]),
        ContextKind::RefineWithoutFeedback => (&[Instruction, Response], &[Preference]),
        ContextKind::AnnotatePreference => (&[Instruction, Profession], &[]),
        ContextKind::RevisePreference => (&[Preference], &[Instruction, Profession]),
    }
}

fn validate(kind: ContextKind, t: &Template) -> Result<()> {
    let err = |message: String| Error::Template {
        kind: kind.to_string(),
        message,
    };
    let (required, optional) = placeholder_rules(kind);
    let used = t.placeholders();
    for p in &used {
        if !required.contains(p) && !optional.contains(p) {
            return Err(err(format!("placeholder {{{p}}} is not allowed")));
        }
    }
    for p in required {
        if !used.contains(p) {
            return Err(err(format!("missing required placeholder {{{p}}}")));
        }
    }
    let instructions = used
        .iter()
        .filter(|p| **p == Placeholder::Instruction)
        .count();
    if kind != ContextKind::RevisePreference && instructions != 1 {
        return Err(err(format!(
            "{{instruction}} must appear exactly once, found {instructions}"
        )));
    }
    Ok(())
}

fn load_template(kind: ContextKind, source: &str) -> Result<Template> {
    let source = source.strip_suffix('\n').unwrap_or(source);
    let t = Template::parse(source).map_err(|message| Error::Template {
        kind: kind.to_string(),
        message,
    })?;
    validate(kind, &t)?;
    Ok(t)
}

macro_rules! builtin {
    ($set:literal, $file:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/templates/", $set, "/", $file))
    };
}

/// The templates for every context kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub initial: Template,
    pub feedback: Template,
    pub refine_with_feedback: Template,
    pub refine_without_feedback: Template,
    pub annotate_preference: Template,
    /// Experimental generalization pass for annotated preferences.
    pub revise_preference: Template,
    pub system: Option<String>,
}

const KINDS: [ContextKind; 6] = [
    ContextKind::Initial,
    ContextKind::Feedback,
    ContextKind::RefineWithFeedback,
    ContextKind::RefineWithoutFeedback,
    ContextKind::AnnotatePreference,
    ContextKind::RevisePreference,
];

fn builtin_source(set: &str, kind: ContextKind) -> &'static str {
    match (set, kind) {
        ("summarization", ContextKind::Initial) => builtin!("summarization", "initial.txt"),
        ("summarization", ContextKind::Feedback) => builtin!("summarization", "feedback.txt"),
        ("summarization", ContextKind::RefineWithFeedback) => {
            builtin!("summarization", "refine_with_feedback.txt")
        }
        ("summarization", ContextKind::RefineWithoutFeedback) => {
            builtin!("summarization", "refine_without_feedback.txt")
        }
        (_, ContextKind::Initial) => builtin!("instruction", "initial.txt"),
        (_, ContextKind::Feedback) => builtin!("instruction", "feedback.txt"),
        (_, ContextKind::RefineWithFeedback) => builtin!("instruction", "refine_with_feedback.txt"),
        (_, ContextKind::RefineWithoutFeedback) => {
            builtin!("instruction", "refine_without_feedback.txt")
        }
        (_, ContextKind::AnnotatePreference) => builtin!("instruction", "annotate_preference.txt"),
        (_, ContextKind::RevisePreference) => builtin!("instruction", "revise_preference.txt"),
    }
}

impl TemplateSet {
    fn from_sources(mut source: impl FnMut(ContextKind) -> Result<String>) -> Result<Self> {
        let mut load = |k| load_template(k, &source(k)?);
        Ok(Self {
            initial: load(ContextKind::Initial)?,
            feedback: load(ContextKind::Feedback)?,
            refine_with_feedback: load(ContextKind::RefineWithFeedback)?,
            refine_without_feedback: load(ContextKind::RefineWithoutFeedback)?,
            annotate_preference: load(ContextKind::AnnotatePreference)?,
            revise_preference: load(ContextKind::RevisePreference)?,
            system: None,
        })
    }

    /// Built-in instruction-following templates.
    pub fn instruction_following() -> Self {
        Self::from_sources(|k| Ok(builtin_source("instruction", k).to_string()))
            .expect("built-in templates are valid")
    }

    /// Built-in keyword-focused summarization templates.
    pub fn summarization() -> Self {
        Self::from_sources(|k| Ok(builtin_source("summarization", k).to_string()))
            .expect("built-in templates are valid")
    }

    /// Loads `<kind>.txt` files from `dir`; kinds without a file fall back to
    /// the instruction-following defaults. An optional `system.txt` sets the
    /// system message.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "template directory not found"),
            ));
        }
        let mut set = Self::from_sources(|k| {
            let path = dir.join(format!("{}.txt", k.as_str()));
            if path.exists() {
                fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
            } else {
                Ok(builtin_source("instruction", k).to_string())
            }
        })?;
        let system = dir.join("system.txt");
        if system.exists() {
            let s = fs::read_to_string(&system).map_err(|e| Error::io(&system, e))?;
            set.system = Some(s.trim_end().to_string()).filter(|s| !s.is_empty());
        }
        Ok(set)
    }

    pub fn get(&self, kind: ContextKind) -> &Template {
        match kind {
            ContextKind::Initial => &self.initial,
            ContextKind::Feedback => &self.feedback,
            ContextKind::RefineWithFeedback => &self.refine_with_feedback,
            ContextKind::RefineWithoutFeedback => &self.refine_without_feedback,
            ContextKind::AnnotatePreference => &self.annotate_preference,
            ContextKind::RevisePreference => &self.revise_preference,
        }
    }

    /// Content hash over all templates and the system message.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        for k in KINDS {
            buf.extend_from_slice(k.as_str().as_bytes());
            buf.push(0);
            buf.extend_from_slice(self.get(k).source().as_bytes());
            buf.push(0);
        }
        if let Some(s) = &self.system {
            buf.extend_from_slice(s.as_bytes());
        }
        digest_hex(&buf)
    }

    fn finish(&self, kind: ContextKind, user: String) -> AssembledPrompt {
        AssembledPrompt {
            system: self.system.clone(),
            user,
            context_kind: kind,
        }
    }

    /// Renders the sampling contexts: initial, feedback and the two
    /// refinement kinds.
    pub fn assemble(
        &self,
        kind: ContextKind,
        record: &PromptRecord,
        parent: Option<&Candidate>,
        feedback: Option<&Feedback>,
        use_preference: bool,
    ) -> Result<AssembledPrompt> {
        let mut v = Values {
            instruction: Some(&record.instruction),
            preference: record.preference_text().filter(|_| use_preference),
            ..Values::default()
        };
        match kind {
            ContextKind::Initial => {}
            ContextKind::Feedback | ContextKind::RefineWithoutFeedback => {
                v.response = Some(&parent.ok_or(Error::MissingComponent("response"))?.text);
            }
            ContextKind::RefineWithFeedback => {
                v.response = Some(&parent.ok_or(Error::MissingComponent("response"))?.text);
                v.feedback = Some(&feedback.ok_or(Error::MissingComponent("feedback"))?.text);
            }
            ContextKind::AnnotatePreference | ContextKind::RevisePreference => {
                return Err(Error::Template {
                    kind: kind.to_string(),
                    message: "use assemble_annotation / assemble_revision".into(),
                })
            }
        }
        Ok(self.finish(kind, self.get(kind).render(&v)))
    }

    pub fn assemble_annotation(
        &self,
        record: &PromptRecord,
        profession: &str,
    ) -> Result<AssembledPrompt> {
        if profession.trim().is_empty() {
            return Err(Error::MissingComponent("profession"));
        }
        let v = Values {
            instruction: Some(&record.instruction),
            profession: Some(profession),
            ..Values::default()
        };
        Ok(self.finish(
            ContextKind::AnnotatePreference,
            self.annotate_preference.render(&v),
        ))
    }

    pub fn assemble_revision(
        &self,
        record: &PromptRecord,
        preference: &str,
        profession: Option<&str>,
    ) -> Result<AssembledPrompt> {
        if preference.trim().is_empty() {
            return Err(Error::MissingComponent("preference"));
        }
        let v = Values {
            instruction: Some(&record.instruction),
            preference: Some(preference),
            profession,
            ..Values::default()
        };
        Ok(self.finish(
            ContextKind::RevisePreference,
            self.revise_preference.render(&v),
        ))
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::instruction_following()
    }
}

/// Names of the built-in catalogs under `data/preferences`.
pub const BUILTIN_CATALOGS: [&str; 10] = [
    "common",
    "personalized_examples",
    "safe",
    "summarization",
    "conciseness",
    "thoroughness",
    "clarity",
    "professional_tone",
    "humorous_tone",
    "professions",
];

macro_rules! catalog {
    ($file:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/preferences/", $file, ".txt"))
    };
}

fn builtin_catalog_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "common" => catalog!("common"),
        "personalized_examples" => catalog!("personalized_examples"),
        "safe" => catalog!("safe"),
        "summarization" => catalog!("summarization"),
        "conciseness" => catalog!("conciseness"),
        "thoroughness" => catalog!("thoroughness"),
        "clarity" => catalog!("clarity"),
        "professional_tone" => catalog!("professional_tone"),
        "humorous_tone" => catalog!("humorous_tone"),
        "professions" => catalog!("professions"),
        _ => return None,
    })
}

/// Parses catalog text: a JSON array of strings, or one entry per line with
/// blank lines and `#` comments skipped.
pub fn parse_catalog(text: &str) -> Vec<String> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        if let Ok(v) = serde_json::from_str::<Vec<String>>(trimmed) {
            return v
                .into_iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
        }
    }
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn load_preference_catalog(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries = parse_catalog(&text);
    if entries.is_empty() {
        return Err(Error::EmptyCatalog(path.to_path_buf()));
    }
    Ok(entries)
}

pub fn builtin_catalog(name: &str) -> Result<Vec<String>> {
    let text = builtin_catalog_text(name)
        .ok_or_else(|| Error::Config(format!("no built-in catalog named {name:?}")))?;
    Ok(parse_catalog(text))
}

/// Distinct entries, in first-seen order.
pub fn dedup_catalog(entries: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    entries
        .iter()
        .filter(|e| seen.insert(e.as_str()))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> PromptRecord {
        PromptRecord::new("p1", "What is the capital of France?")
    }

    fn cand(text: &str) -> Candidate {
        Candidate {
            id: "c".into(),
            prompt_id: "p1".into(),
            layer: 0,
            index: 0,
            parent_id: None,
            feedback_id: None,
            text: text.into(),
            reward: Some(0.0),
            gen_calls_used: 1,
        }
    }

    fn fb(text: &str) -> Feedback {
        Feedback {
            id: "f".into(),
            prompt_id: "p1".into(),
            target_candidate_id: "c".into(),
            text: text.into(),
        }
    }

    #[test]
    fn initial_without_preference_has_no_preference_section() {
        let t = TemplateSet::default();
        let out = t
            .assemble(ContextKind::Initial, &record(), None, None, true)
            .unwrap();
        assert_eq!(out.user, "What is the capital of France?");
        assert_eq!(out.context_kind, ContextKind::Initial);
    }

    #[test]
    fn preference_goes_after_instruction() {
        let t = TemplateSet::default();
        let r = record().with_preference("I prefer short answers.");
        let out = t.assemble(ContextKind::Initial, &r, None, None, true).unwrap();
        assert_eq!(out.user, "What is the capital of France?\n\nI prefer short answers.");
        let off = t.assemble(ContextKind::Initial, &r, None, None, false).unwrap();
        assert!(!off.user.contains("I prefer"));
    }

    #[test]
    fn refine_with_feedback_contains_parent_and_feedback() {
        let t = TemplateSet::default();
        let out = t
            .assemble(
                ContextKind::RefineWithFeedback,
                &record(),
                Some(&cand("Paris, probably.")),
                Some(&fb("Be more confident.")),
                false,
            )
            .unwrap();
        assert!(out.user.contains("Paris, probably."));
        assert!(out.user.contains("Be more confident."));
    }

    #[test]
    fn feedback_template_elides_preference_boilerplate() {
        let t = TemplateSet::default();
        let c = cand("Paris.");
        let plain = t
            .assemble(ContextKind::Feedback, &record(), Some(&c), None, true)
            .unwrap();
        assert!(!plain.user.contains("stated preference"));
        let r = record().with_preference("I prefer humor.");
        let with = t.assemble(ContextKind::Feedback, &r, Some(&c), None, true).unwrap();
        assert!(with.user.contains("stated preference"));
        assert!(with.user.contains("I prefer humor."));
    }

    #[test]
    fn annotation_contains_profession_and_instruction() {
        let t = TemplateSet::default();
        let out = t.assemble_annotation(&record(), "Accountant").unwrap();
        assert!(out.user.contains("Accountant"));
        assert!(out.user.contains("What is the capital of France?"));
        assert_eq!(out.context_kind, ContextKind::AnnotatePreference);
    }

    #[test]
    fn missing_components_are_named() {
        let t = TemplateSet::default();
        let err = t
            .assemble(ContextKind::Feedback, &record(), None, None, true)
            .unwrap_err();
        assert!(err.to_string().contains("{response}"));
        let err = t
            .assemble(
                ContextKind::RefineWithFeedback,
                &record(),
                Some(&cand("x")),
                None,
                true,
            )
            .unwrap_err();
        assert!(err.to_string().contains("{feedback}"));
    }

    #[test]
    fn load_time_validation() {
        assert!(load_template(ContextKind::Initial, "{instruction} {mood}").is_err());
        assert!(load_template(ContextKind::Initial, "{response}").is_err());
        assert!(load_template(ContextKind::Initial, "{feedback} {instruction}").is_err());
        assert!(load_template(ContextKind::Initial, "{instruction}{instruction}").is_err());
        assert!(load_template(ContextKind::RefineWithFeedback, "{instruction} {response}").is_err());
        assert!(load_template(ContextKind::Initial, "{instruction}{#preference}x").is_err());
        assert!(load_template(ContextKind::Initial, "{#response}{instruction}{/response}").is_err());
        assert!(load_template(ContextKind::Initial, "{instruction} }").is_err());
        let t = load_template(ContextKind::Initial, "{{literal}} {instruction}").unwrap();
        let v = Values {
            instruction: Some("x"),
            ..Values::default()
        };
        assert_eq!(t.render(&v), "{literal} x");
    }

    #[test]
    fn load_dir_overrides_and_falls_back() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("initial.txt"), "Q: {instruction}\n").unwrap();
        fs::write(dir.path().join("system.txt"), "Be helpful.\n").unwrap();
        let t = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(t.initial.source(), "Q: {instruction}");
        assert_eq!(t.feedback, TemplateSet::default().feedback);
        assert_eq!(t.system.as_deref(), Some("Be helpful."));
        assert_ne!(t.digest(), TemplateSet::default().digest());

        fs::write(dir.path().join("feedback.txt"), "{instruction}").unwrap();
        assert!(TemplateSet::load_dir(dir.path()).is_err());
    }

    #[test]
    fn summarization_set_is_valid() {
        let s = TemplateSet::summarization();
        assert_ne!(s.feedback, TemplateSet::default().feedback);
        assert_eq!(s.annotate_preference, TemplateSet::default().annotate_preference);
    }

    #[test]
    fn builtin_catalogs() {
        let common = builtin_catalog("common").unwrap();
        assert!(common[0].contains("informative, precise, creative, detailed, relevant, and in-depth"));
        assert_eq!(builtin_catalog("safe").unwrap().len(), 5);
        assert_eq!(builtin_catalog("professions").unwrap().len(), 222);
        for cat in ["conciseness", "thoroughness", "clarity", "professional_tone", "humorous_tone"] {
            assert_eq!(builtin_catalog(cat).unwrap().len(), 3, "{cat}");
        }
        for name in BUILTIN_CATALOGS {
            assert!(!builtin_catalog(name).unwrap().is_empty());
        }
    }

    #[test]
    fn catalog_files() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.txt");
        fs::write(&empty, "\n# nothing\n\n").unwrap();
        assert!(matches!(load_preference_catalog(&empty), Err(Error::EmptyCatalog(_))));
        let json = dir.path().join("list.json");
        fs::write(&json, r#"["I prefer a", " I prefer b "]"#).unwrap();
        assert_eq!(load_preference_catalog(&json).unwrap(), ["I prefer a", "I prefer b"]);
    }
}
