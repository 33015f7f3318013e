//! Strict validation of stage payloads. Unknown keys are rejected, enum
//! values must match exactly, and optional fields may be missing or null.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::types::{
    ActorExtraction, ActorType, ArgumentStructure, Frame, FrameAssignment, Stage, Stance,
    SupportingArgument,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemaErrorKind {
    MalformedJson { message: String },
    MissingKey,
    UnknownKey,
    EnumViolation { value: String, allowed: Vec<String> },
    TypeViolation { expected: String },
    EmptyValue,
    DuplicateFrame,
    OutOfRange { value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaError {
    /// JSON path such as `actors[0].stance`; `$` for the document root.
    pub path: String,
    #[serde(flatten)]
    pub kind: SchemaErrorKind,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SchemaErrorKind::MalformedJson { message } => {
                write!(f, "{}: malformed JSON ({message})", self.path)
            }
            SchemaErrorKind::MissingKey => write!(f, "{}: missing required key", self.path),
            SchemaErrorKind::UnknownKey => write!(f, "{}: unknown key", self.path),
            SchemaErrorKind::EnumViolation { value, allowed } => write!(
                f,
                "{}: \"{value}\" is not one of {}",
                self.path,
                allowed.join("|")
            ),
            SchemaErrorKind::TypeViolation { expected } => {
                write!(f, "{}: expected {expected}", self.path)
            }
            SchemaErrorKind::EmptyValue => write!(f, "{}: must not be empty", self.path),
            SchemaErrorKind::DuplicateFrame => {
                write!(f, "{}: must differ from primary_frame", self.path)
            }
            SchemaErrorKind::OutOfRange { value } => {
                write!(f, "{}: {value} is outside [0, 1]", self.path)
            }
        }
    }
}

/// A validated stage output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StagePayload {
    Actors(Vec<ActorExtraction>),
    Frame(FrameAssignment),
    Argument(ArgumentStructure),
}

impl StagePayload {
    /// Canonical JSON for the payload, in the stage schema's shape.
    pub fn to_json(&self) -> Value {
        match self {
            StagePayload::Actors(a) => serde_json::json!({ "actors": a }),
            StagePayload::Frame(f) => serde_json::to_value(f).expect("plain data serializes"),
            StagePayload::Argument(a) => serde_json::to_value(a).expect("plain data serializes"),
        }
    }
}

struct Ctx {
    errors: Vec<SchemaError>,
}

fn join(path: &str, key: &str) -> String {
    if path == "$" {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Ctx {
    fn push(&mut self, path: impl Into<String>, kind: SchemaErrorKind) {
        self.errors.push(SchemaError {
            path: path.into(),
            kind,
        });
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match v {
            Value::Object(m) => Some(m),
            _ => {
                self.push(path, SchemaErrorKind::TypeViolation { expected: "object".into() });
                None
            }
        }
    }

    fn keys(&mut self, m: &Map<String, Value>, path: &str, allowed: &[&str]) {
        for k in m.keys() {
            if !allowed.contains(&k.as_str()) {
                self.push(join(path, k), SchemaErrorKind::UnknownKey);
            }
        }
    }

    /// Required non-empty string.
    fn required_str(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<String> {
        let p = join(path, key);
        match m.get(key) {
            None | Some(Value::Null) => {
                self.push(p, SchemaErrorKind::MissingKey);
                None
            }
            Some(Value::String(s)) if s.trim().is_empty() => {
                self.push(p, SchemaErrorKind::EmptyValue);
                None
            }
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.push(p, SchemaErrorKind::TypeViolation { expected: "string".into() });
                None
            }
        }
    }

    /// Optional string; missing or null reads as empty.
    fn optional_str(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<String> {
        match m.get(key) {
            None | Some(Value::Null) => Some(String::new()),
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.push(join(path, key), SchemaErrorKind::TypeViolation { expected: "string".into() });
                None
            }
        }
    }

    /// Optional list of non-empty strings; missing or null reads as empty.
    fn string_list(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<Vec<String>> {
        let p = join(path, key);
        match m.get(key) {
            None | Some(Value::Null) => Some(Vec::new()),
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                let before = self.errors.len();
                for (i, it) in items.iter().enumerate() {
                    match it {
                        Value::String(s) if s.trim().is_empty() => {
                            self.push(format!("{p}[{i}]"), SchemaErrorKind::EmptyValue)
                        }
                        Value::String(s) => out.push(s.clone()),
                        _ => self.push(
                            format!("{p}[{i}]"),
                            SchemaErrorKind::TypeViolation { expected: "string".into() },
                        ),
                    }
                }
                (self.errors.len() == before).then_some(out)
            }
            Some(_) => {
                self.push(p, SchemaErrorKind::TypeViolation { expected: "array".into() });
                None
            }
        }
    }

    fn enum_value<T: Copy>(
        &mut self,
        value: &Value,
        path: &str,
        parse: fn(&str) -> Option<T>,
        allowed: &[&str],
    ) -> Option<T> {
        match value {
            Value::String(s) => {
                let v = parse(s);
                if v.is_none() {
                    self.push(
                        path,
                        SchemaErrorKind::EnumViolation {
                            value: s.clone(),
                            allowed: allowed.iter().map(|a| a.to_string()).collect(),
                        },
                    );
                }
                v
            }
            _ => {
                self.push(path, SchemaErrorKind::TypeViolation { expected: "string".into() });
                None
            }
        }
    }
}

fn names<T: Copy>(all: &[T], f: fn(T) -> &'static str) -> Vec<&'static str> {
    all.iter().map(|&x| f(x)).collect()
}

const ORG_SUBTYPES: [&str; 2] = ["financial_institution", "ngo_advocacy"];

/// Accepts the five canonical actor types plus the short forms
/// `company|gov|indiv|org`; `org` must carry a `subtype`.
fn actor_type(ctx: &mut Ctx, m: &Map<String, Value>, path: &str) -> Option<ActorType> {
    let p = join(path, "actor_type");
    let mut allowed = names(ActorType::ALL, ActorType::as_str);
    allowed.extend(["gov", "indiv", "org"]);
    let raw = match m.get("actor_type") {
        None | Some(Value::Null) => {
            ctx.push(p, SchemaErrorKind::MissingKey);
            return None;
        }
        Some(v) => v,
    };
    let parsed = ctx.enum_value(
        raw,
        &p,
        |s| match s {
            "gov" => Some(Some(ActorType::Government)),
            "indiv" => Some(Some(ActorType::Individual)),
            "org" => Some(None),
            other => ActorType::parse(other).map(Some),
        },
        &allowed,
    )?;
    let subtype_path = join(path, "subtype");
    match (parsed, m.get("subtype")) {
        (Some(t), None) => Some(t),
        (Some(_), Some(_)) => {
            ctx.push(subtype_path, SchemaErrorKind::UnknownKey);
            None
        }
        (None, None | Some(Value::Null)) => {
            ctx.push(subtype_path, SchemaErrorKind::MissingKey);
            None
        }
        (None, Some(v)) => ctx.enum_value(
            v,
            &subtype_path,
            |s| match s {
                "financial_institution" => Some(ActorType::FinancialInstitution),
                "ngo_advocacy" => Some(ActorType::NgoAdvocacy),
                _ => None,
            },
            &ORG_SUBTYPES,
        ),
    }
}

fn actors(ctx: &mut Ctx, root: &Map<String, Value>) -> Option<Vec<ActorExtraction>> {
    ctx.keys(root, "$", &["actors"]);
    let items = match root.get("actors") {
        None | Some(Value::Null) => return Some(Vec::new()),
        Some(Value::Array(items)) => items,
        Some(_) => {
            ctx.push("actors", SchemaErrorKind::TypeViolation { expected: "array".into() });
            return None;
        }
    };
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let path = format!("actors[{i}]");
        let Some(m) = ctx.object(item, &path) else { continue };
        ctx.keys(
            m,
            &path,
            &["name", "actor_type", "subtype", "stance", "quote_text", "climate_relevance"],
        );
        let name = ctx.required_str(m, &path, "name");
        let actor_type = actor_type(ctx, m, &path);
        let stance = match m.get("stance") {
            None | Some(Value::Null) => {
                ctx.push(join(&path, "stance"), SchemaErrorKind::MissingKey);
                None
            }
            Some(v) => ctx.enum_value(
                v,
                &join(&path, "stance"),
                Stance::parse,
                &names(Stance::ALL, Stance::as_str),
            ),
        };
        let quote_text = ctx.required_str(m, &path, "quote_text");
        let climate_relevance = ctx.optional_str(m, &path, "climate_relevance");
        if let (Some(name), Some(actor_type), Some(stance), Some(quote_text), Some(climate_relevance)) =
            (name, actor_type, stance, quote_text, climate_relevance)
        {
            out.push(ActorExtraction {
                name,
                actor_type,
                stance,
                quote_text,
                climate_relevance,
            });
        }
    }
    Some(out)
}

fn frame_field(ctx: &mut Ctx, m: &Map<String, Value>, key: &str, required: bool) -> Option<Option<Frame>> {
    match m.get(key) {
        None | Some(Value::Null) if required => {
            ctx.push(key, SchemaErrorKind::MissingKey);
            None
        }
        None | Some(Value::Null) => Some(None),
        Some(v) => ctx
            .enum_value(v, key, Frame::parse, &names(Frame::ALL, Frame::as_str))
            .map(Some),
    }
}

fn frame(ctx: &mut Ctx, root: &Map<String, Value>) -> Option<FrameAssignment> {
    ctx.keys(
        root,
        "$",
        &["primary_frame", "secondary_frame", "justification", "climate_connection"],
    );
    let primary = frame_field(ctx, root, "primary_frame", true);
    let secondary = frame_field(ctx, root, "secondary_frame", false);
    let justification = ctx.optional_str(root, "$", "justification");
    let climate_connection = ctx.optional_str(root, "$", "climate_connection");
    if let (Some(Some(p)), Some(Some(s))) = (primary, secondary) {
        if p == s {
            ctx.push("secondary_frame", SchemaErrorKind::DuplicateFrame);
            return None;
        }
    }
    Some(FrameAssignment {
        primary_frame: primary??,
        secondary_frame: secondary?,
        justification: justification?,
        climate_connection: climate_connection?,
    })
}

fn argument(ctx: &mut Ctx, root: &Map<String, Value>) -> Option<ArgumentStructure> {
    ctx.keys(
        root,
        "$",
        &["claim", "evidence", "warrant", "impact", "supporting_arguments"],
    );
    let claim = ctx.required_str(root, "$", "claim");
    let evidence = ctx.string_list(root, "$", "evidence");
    let warrant = ctx.required_str(root, "$", "warrant");
    let impact = ctx.optional_str(root, "$", "impact");
    let supporting = match root.get("supporting_arguments") {
        None | Some(Value::Null) => Some(Vec::new()),
        Some(Value::Array(items)) => {
            let before = ctx.errors.len();
            let mut out = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let path = format!("supporting_arguments[{i}]");
                let Some(m) = ctx.object(item, &path) else { continue };
                ctx.keys(m, &path, &["claim", "evidence", "warrant"]);
                let c = ctx.required_str(m, &path, "claim");
                let e = ctx.string_list(m, &path, "evidence");
                let w = ctx.optional_str(m, &path, "warrant");
                if let (Some(claim), Some(evidence), Some(warrant)) = (c, e, w) {
                    out.push(SupportingArgument {
                        claim,
                        evidence,
                        warrant,
                    });
                }
            }
            (ctx.errors.len() == before).then_some(out)
        }
        Some(_) => {
            ctx.push(
                "supporting_arguments",
                SchemaErrorKind::TypeViolation { expected: "array".into() },
            );
            None
        }
    };
    Some(ArgumentStructure {
        claim: claim?,
        evidence: evidence?,
        warrant: warrant?,
        impact: impact?,
        supporting_arguments: supporting?,
    })
}

/// Strips a surrounding Markdown code fence, which chat models often add
/// despite instructions.
pub(crate) fn unfence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

pub fn validate_payload(stage: Stage, response_text: &str) -> Result<StagePayload, Vec<SchemaError>> {
    let value: Value = match serde_json::from_str(unfence(response_text)) {
        Ok(v) => v,
        Err(e) => {
            return Err(vec![SchemaError {
                path: "$".into(),
                kind: SchemaErrorKind::MalformedJson { message: e.to_string() },
            }])
        }
    };
    let mut ctx = Ctx { errors: Vec::new() };
    let Some(root) = ctx.object(&value, "$") else {
        return Err(ctx.errors);
    };
    let payload = match stage {
        Stage::ActorStance => actors(&mut ctx, root).map(StagePayload::Actors),
        Stage::Frame => frame(&mut ctx, root).map(StagePayload::Frame),
        Stage::Argument => argument(&mut ctx, root).map(StagePayload::Argument),
        Stage::DvfJudge => {
            ctx.push("$", SchemaErrorKind::TypeViolation { expected: "an extraction stage".into() });
            None
        }
    };
    match payload {
        Some(p) if ctx.errors.is_empty() => Ok(p),
        _ => Err(ctx.errors),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn err_paths(r: Result<StagePayload, Vec<SchemaError>>) -> Vec<(String, SchemaErrorKind)> {
        r.unwrap_err().into_iter().map(|e| (e.path, e.kind)).collect()
    }

    #[test]
    fn enum_violation_on_primary_frame() {
        let e = err_paths(validate_payload(
            Stage::Frame,
            r#"{"primary_frame": "Economic Growth", "secondary_frame": null, "justification": "x", "climate_connection": "y"}"#,
        ));
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].0, "primary_frame");
        assert!(matches!(&e[0].1, SchemaErrorKind::EnumViolation { value, .. } if value == "Economic Growth"));
    }

    #[test]
    fn empty_actor_list_is_valid() {
        assert_eq!(
            validate_payload(Stage::ActorStance, r#"{"actors": []}"#).unwrap(),
            StagePayload::Actors(vec![])
        );
        assert_eq!(
            validate_payload(Stage::ActorStance, r#"{"actors": null}"#).unwrap(),
            StagePayload::Actors(vec![])
        );
    }

    #[test]
    fn missing_warrant() {
        let e = err_paths(validate_payload(
            Stage::Argument,
            r#"{"claim": "c", "evidence": ["e"], "impact": "i", "supporting_arguments": []}"#,
        ));
        assert_eq!(e, vec![("warrant".to_string(), SchemaErrorKind::MissingKey)]);
    }

    #[test]
    fn malformed_json() {
        let e = err_paths(validate_payload(Stage::Frame, "{\"primary_frame\": "));
        assert_eq!(e[0].0, "$");
        assert!(matches!(e[0].1, SchemaErrorKind::MalformedJson { .. }));
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = err_paths(validate_payload(
            Stage::ActorStance,
            r#"{"actors": [{"name": "A", "actor_type": "company", "stance": "neutral", "quote_text": "q", "climate_relevance": "", "mood": "x"}]}"#,
        ));
        assert_eq!(e, vec![("actors[0].mood".to_string(), SchemaErrorKind::UnknownKey)]);
    }

    #[test]
    fn short_actor_types() {
        let ok = validate_payload(
            Stage::ActorStance,
            r#"{"actors": [
                {"name": "A", "actor_type": "gov", "stance": "neutral", "quote_text": "q"},
                {"name": "B", "actor_type": "org", "subtype": "ngo_advocacy", "stance": "mixed", "quote_text": "q"}
            ]}"#,
        )
        .unwrap();
        let StagePayload::Actors(a) = ok else { panic!() };
        assert_eq!(a[0].actor_type, ActorType::Government);
        assert_eq!(a[1].actor_type, ActorType::NgoAdvocacy);
        let e = err_paths(validate_payload(
            Stage::ActorStance,
            r#"{"actors": [{"name": "B", "actor_type": "org", "stance": "mixed", "quote_text": "q"}]}"#,
        ));
        assert_eq!(e, vec![("actors[0].subtype".to_string(), SchemaErrorKind::MissingKey)]);
    }

    #[test]
    fn secondary_must_differ() {
        let e = err_paths(validate_payload(
            Stage::Frame,
            r#"{"primary_frame": "economic_risk", "secondary_frame": "economic_risk"}"#,
        ));
        assert_eq!(e, vec![("secondary_frame".to_string(), SchemaErrorKind::DuplicateFrame)]);
    }

    #[test]
    fn type_violations_name_paths() {
        let e = err_paths(validate_payload(
            Stage::Argument,
            r#"{"claim": "c", "warrant": "w", "evidence": ["ok", 3], "supporting_arguments": [{"evidence": []}]}"#,
        ));
        let paths: Vec<&str> = e.iter().map(|x| x.0.as_str()).collect();
        assert_eq!(paths, ["evidence[1]", "supporting_arguments[0].claim"]);
    }

    #[test]
    fn fenced_payload_accepted() {
        let r = validate_payload(Stage::ActorStance, "```json\n{\"actors\": []}\n```");
        assert!(r.is_ok());
    }

    fn text() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z ,.]{0,20}"
    }

    prop_compose! {
        fn actor()(name in text(), t in 0usize..5, s in 0usize..4, q in text(), c in ".{0,10}") -> ActorExtraction {
            ActorExtraction {
                name,
                actor_type: ActorType::ALL[t],
                stance: Stance::ALL[s],
                quote_text: q,
                climate_relevance: c,
            }
        }
    }

    prop_compose! {
        fn argument_structure()(
            claim in text(),
            evidence in proptest::collection::vec(text(), 0..3),
            warrant in text(),
            impact in ".{0,10}",
            sup in proptest::collection::vec((text(), proptest::collection::vec(text(), 0..2), ".{0,8}"), 0..3),
        ) -> ArgumentStructure {
            ArgumentStructure {
                claim,
                evidence,
                warrant,
                impact,
                supporting_arguments: sup
                    .into_iter()
                    .map(|(claim, evidence, warrant)| SupportingArgument { claim, evidence, warrant })
                    .collect(),
            }
        }
    }

    proptest! {
        #[test]
        fn actors_round_trip(a in proptest::collection::vec(actor(), 0..4)) {
            let p = StagePayload::Actors(a);
            let text = p.to_json().to_string();
            prop_assert_eq!(validate_payload(Stage::ActorStance, &text).unwrap(), p);
        }

        #[test]
        fn frame_round_trip(p in 0usize..8, s in proptest::option::of(0usize..8), j in ".{0,12}", c in ".{0,12}") {
            let secondary = s.filter(|&s| s != p).map(|s| Frame::ALL[s]);
            let f = StagePayload::Frame(FrameAssignment {
                primary_frame: Frame::ALL[p],
                secondary_frame: secondary,
                justification: j,
                climate_connection: c,
            });
            let text = f.to_json().to_string();
            prop_assert_eq!(validate_payload(Stage::Frame, &text).unwrap(), f);
        }

        #[test]
        fn argument_round_trip(a in argument_structure()) {
            let p = StagePayload::Argument(a);
            let text = p.to_json().to_string();
            prop_assert_eq!(validate_payload(Stage::Argument, &text).unwrap(), p);
        }
    }
}
