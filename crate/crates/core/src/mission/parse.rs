use std::collections::BTreeSet;

use thiserror::Error;

use crate::runtime::{ActivationParameters, BehaviorConfig, BehaviorKind, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    AwaitFinish,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnFailure {
    Abort,
    Continue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionStep {
    pub line: usize,
    pub behavior: String,
    pub params: ActivationParameters,
    pub mode: StepMode,
    pub on_failure: OnFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Activate(MissionStep),
    /// Deactivates a behavior started earlier.
    Stop {
        line: usize,
        behavior: String,
    },
}

impl Directive {
    pub fn line(&self) -> usize {
        match self {
            Directive::Activate(s) => s.line,
            Directive::Stop { line, .. } => *line,
        }
    }

    pub fn behavior(&self) -> &str {
        match self {
            Directive::Activate(s) => &s.behavior,
            Directive::Stop { behavior, .. } => behavior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionGroup {
    pub name: String,
    pub members: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mission {
    pub directives: Vec<Directive>,
    pub groups: Vec<ExclusionGroup>,
}

impl Mission {
    /// Groups containing `behavior`.
    pub fn groups_of<'a>(&'a self, behavior: &'a str) -> impl Iterator<Item = &'a ExclusionGroup> {
        self.groups
            .iter()
            .filter(move |g| g.members.contains(behavior))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MissionError {
    #[error("line {line}, column {col}: {message}")]
    SyntaxError {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("line {line}: unknown behavior `{name}`")]
    UnknownBehavior { line: usize, name: String },
    #[error("line {line}: parameters do not fit {behavior}: {detail}")]
    SchemaMismatch {
        line: usize,
        behavior: String,
        detail: String,
    },
    #[error(
        "line {line}: {behavior} is recurrent and never finishes on its own; it cannot be awaited"
    )]
    InvalidMode { line: usize, behavior: String },
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Whitespace-separated tokens with their 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &line[s..]));
    }
    out.into_iter()
        .map(|(byte, tok)| (line[..byte].chars().count() + 1, tok))
        .collect()
}

/// Parses a mission file against the configurations of the registered
/// behaviors.
///
/// ```text
/// # comment
/// group motion: TAKE_OFF LAND FOLLOW_PATH
/// TAKE_OFF altitude=1.0
/// KEEP_HOVERING_WITH_PID_CONTROL background
/// GENERATE_PATH_WITH_OCCUPANCY_GRID x=3 y=4 continue-on-failure
/// stop KEEP_HOVERING_WITH_PID_CONTROL
/// ```
pub fn parse_mission(text: &str, behaviors: &[BehaviorConfig]) -> Result<Mission, MissionError> {
    let lookup = |line: usize, name: &str| {
        behaviors
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| MissionError::UnknownBehavior {
                line,
                name: name.to_string(),
            })
    };
    let mut mission = Mission::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks = tokens(content);
        let Some(&(col0, head)) = toks.first() else {
            continue;
        };
        let syntax = |col: usize, message: String| MissionError::SyntaxError { line, col, message };

        if head == "group" {
            let Some(&(col, name)) = toks.get(1) else {
                return Err(syntax(
                    col0 + head.len(),
                    "expected `group <name>: <behaviors>`".into(),
                ));
            };
            let Some(name) = name.strip_suffix(':') else {
                return Err(syntax(
                    col + name.len(),
                    "expected `:` after the group name".into(),
                ));
            };
            if !is_identifier(name) {
                return Err(syntax(col, format!("invalid group name `{name}`")));
            }
            if mission.groups.iter().any(|g| g.name == name) {
                return Err(syntax(col, format!("group `{name}` defined twice")));
            }
            let mut members = BTreeSet::new();
            for &(_, member) in &toks[2..] {
                lookup(line, member)?;
                members.insert(member.to_string());
            }
            if members.is_empty() {
                return Err(syntax(col + name.len() + 1, "group has no members".into()));
            }
            mission.groups.push(ExclusionGroup {
                name: name.to_string(),
                members,
            });
            continue;
        }

        if head == "stop" {
            let Some(&(_, behavior)) = toks.get(1) else {
                return Err(syntax(
                    col0 + head.len(),
                    "expected a behavior after `stop`".into(),
                ));
            };
            if let Some(&(col, extra)) = toks.get(2) {
                return Err(syntax(col, format!("unexpected `{extra}` after stop")));
            }
            lookup(line, behavior)?;
            mission.directives.push(Directive::Stop {
                line,
                behavior: behavior.to_string(),
            });
            continue;
        }

        if !is_identifier(head) {
            return Err(syntax(col0, format!("invalid behavior name `{head}`")));
        }
        let config = lookup(line, head)?;
        let schema = &config.parameter_schema;
        let mismatch = |detail: String| MissionError::SchemaMismatch {
            line,
            behavior: head.to_string(),
            detail,
        };
        let mut params = ActivationParameters::new();
        let (mut background, mut await_, mut cont) = (false, false, false);
        for &(col, tok) in &toks[1..] {
            match tok {
                "background" => background = true,
                "await" => await_ = true,
                "continue-on-failure" => cont = true,
                _ => {
                    let Some((key, value)) = tok.split_once('=') else {
                        return Err(syntax(
                            col,
                            format!("expected key=value or a flag, found `{tok}`"),
                        ));
                    };
                    if !is_identifier(key) {
                        return Err(syntax(col, format!("invalid parameter name `{key}`")));
                    }
                    if value.is_empty() {
                        return Err(syntax(
                            col + key.len() + 1,
                            format!("missing value for `{key}`"),
                        ));
                    }
                    if params.get(key).is_some() {
                        return Err(syntax(col, format!("parameter `{key}` given twice")));
                    }
                    let spec = schema
                        .spec(key)
                        .ok_or_else(|| mismatch(format!("unknown parameter `{key}`")))?;
                    let scalar = Scalar::parse_as(value, spec.ty)
                        .map_err(|e| mismatch(format!("parameter `{key}`: {e}")))?;
                    params.insert(key.to_string(), scalar);
                }
            }
        }
        if background && await_ {
            return Err(syntax(
                col0,
                "`background` and `await` exclude each other".into(),
            ));
        }
        params.validate(schema).map_err(mismatch)?;
        let mode = match (config.kind, background, await_) {
            (BehaviorKind::Recurrent, _, true) => {
                return Err(MissionError::InvalidMode {
                    line,
                    behavior: head.to_string(),
                })
            }
            (BehaviorKind::Recurrent, _, _) | (_, true, _) => StepMode::Background,
            _ => StepMode::AwaitFinish,
        };
        mission.directives.push(Directive::Activate(MissionStep {
            line,
            behavior: head.to_string(),
            params,
            mode,
            on_failure: if cont {
                OnFailure::Continue
            } else {
                OnFailure::Abort
            },
        }));
    }
    Ok(mission)
}
