use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bus::{TopicId, Value};

pub const FINISH_TOPIC: &str = "behavior_activation_finished";

pub fn finish_topic() -> TopicId {
    TopicId::new(FINISH_TOPIC).expect("static topic name")
}

/// Why an activation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminationCause {
    GoalAchieved,
    TimeOut,
    WrongProgress,
    SituationChange,
    ProcessFailure,
    Interrupted,
}

impl TerminationCause {
    pub const ALL: [TerminationCause; 6] = [
        TerminationCause::GoalAchieved,
        TerminationCause::TimeOut,
        TerminationCause::WrongProgress,
        TerminationCause::SituationChange,
        TerminationCause::ProcessFailure,
        TerminationCause::Interrupted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TerminationCause::GoalAchieved => "GOAL_ACHIEVED",
            TerminationCause::TimeOut => "TIME_OUT",
            TerminationCause::WrongProgress => "WRONG_PROGRESS",
            TerminationCause::SituationChange => "SITUATION_CHANGE",
            TerminationCause::ProcessFailure => "PROCESS_FAILURE",
            TerminationCause::Interrupted => "INTERRUPTED",
        }
    }
}

impl fmt::Display for TerminationCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerminationCause {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TerminationCause::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown termination cause `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BehaviorState {
    Unconfigured,
    Inactive,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BehaviorKind {
    /// Finishes on reaching a final state.
    GoalBased,
    /// Keeps an activity going until deactivated or a fault is detected.
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionLimit {
    Bounded(Duration),
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    Real,
    Integer,
    Text,
    Bool,
    /// Text holding `x,y[,z];x,y[,z];...`, at least one point.
    Waypoints,
}

impl ParamType {
    pub fn name(self) -> &'static str {
        match self {
            ParamType::Real => "real",
            ParamType::Integer => "integer",
            ParamType::Text => "text",
            ParamType::Bool => "bool",
            ParamType::Waypoints => "waypoints",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub key: String,
    pub ty: ParamType,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSchema {
    pub params: Vec<ParamSpec>,
}

impl ParamSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn required(mut self, key: &str, ty: ParamType) -> Self {
        self.params.push(ParamSpec {
            key: key.into(),
            ty,
            required: true,
        });
        self
    }

    pub fn optional(mut self, key: &str, ty: ParamType) -> Self {
        self.params.push(ParamSpec {
            key: key.into(),
            ty,
            required: false,
        });
        self
    }

    pub fn spec(&self, key: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.key == key)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorConfig {
    pub name: String,
    pub execution_frequency_hz: f64,
    pub maximum_execution_time: ExecutionLimit,
    pub kind: BehaviorKind,
    pub parameter_schema: ParamSchema,
}

pub const DEFAULT_FREQUENCY_HZ: f64 = 100.0;

impl BehaviorConfig {
    pub fn goal_based(name: &str, maximum_execution_time: Duration) -> Self {
        Self {
            name: name.into(),
            execution_frequency_hz: DEFAULT_FREQUENCY_HZ,
            maximum_execution_time: ExecutionLimit::Bounded(maximum_execution_time),
            kind: BehaviorKind::GoalBased,
            parameter_schema: ParamSchema::new(),
        }
    }

    pub fn recurrent(name: &str) -> Self {
        Self {
            name: name.into(),
            execution_frequency_hz: DEFAULT_FREQUENCY_HZ,
            maximum_execution_time: ExecutionLimit::Unbounded,
            kind: BehaviorKind::Recurrent,
            parameter_schema: ParamSchema::new(),
        }
    }

    pub fn with_schema(mut self, schema: ParamSchema) -> Self {
        self.parameter_schema = schema;
        self
    }

    pub fn with_frequency(mut self, hz: f64) -> Self {
        self.execution_frequency_hz = hz;
        self
    }

    pub fn with_max_time(mut self, limit: Duration) -> Self {
        self.maximum_execution_time = ExecutionLimit::Bounded(limit);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty()
            || self.name.contains(char::is_whitespace)
            || self.name.contains('/')
        {
            return Err(format!("invalid behavior name `{}`", self.name));
        }
        if !(self.execution_frequency_hz.is_finite() && self.execution_frequency_hz > 0.0) {
            return Err(format!(
                "{}: execution frequency must be positive, got {}",
                self.name, self.execution_frequency_hz
            ));
        }
        match (self.kind, self.maximum_execution_time) {
            (BehaviorKind::GoalBased, ExecutionLimit::Unbounded) => Err(format!(
                "{}: goal-based behaviors need a bounded maximum execution time",
                self.name
            )),
            (_, ExecutionLimit::Bounded(d)) if d.is_zero() => Err(format!(
                "{}: maximum execution time must be positive",
                self.name
            )),
            _ => Ok(()),
        }
    }

    /// Tick period in nanoseconds.
    pub fn period_ns(&self) -> f64 {
        1e9 / self.execution_frequency_hz
    }
}

/// Result of a situation check.
#[derive(Debug, Clone, PartialEq)]
pub struct SituationAssessment {
    pub ok: bool,
    pub performance: f64,
    pub reason: String,
}

impl SituationAssessment {
    pub fn optimal() -> Self {
        Self {
            ok: true,
            performance: 1.0,
            reason: String::new(),
        }
    }

    pub fn degraded(performance: f64) -> Self {
        Self {
            ok: true,
            performance: performance.clamp(0.0, 1.0),
            reason: String::new(),
        }
    }

    pub fn unsuitable(reason: impl Into<String>) -> Self {
        let reason = reason.into();
        Self {
            ok: false,
            performance: 0.0,
            reason: if reason.is_empty() {
                "situation not suitable".into()
            } else {
                reason
            },
        }
    }

    /// Clamps performance into range and fills in a reason when missing.
    pub fn normalized(mut self) -> Self {
        if !self.performance.is_finite() {
            self.performance = 0.0;
        }
        self.performance = self.performance.clamp(0.0, 1.0);
        if !self.ok && self.reason.is_empty() {
            self.reason = "situation not suitable".into();
        }
        self
    }

    pub fn to_value(&self) -> Value {
        Value::map([
            ("ok", self.ok.into()),
            ("performance", self.performance.into()),
            ("reason", self.reason.as_str().into()),
        ])
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        Some(Self {
            ok: v.get("ok")?.as_bool()?,
            performance: v.f64_field("performance")?,
            reason: v.str_field("reason")?.to_string(),
        })
    }
}

/// Published on `behavior_activation_finished` once per accepted activation.
#[derive(Debug, Clone, PartialEq)]
pub struct FinishNotice {
    pub behavior: String,
    pub cause: TerminationCause,
    pub stamp_us: u64,
    pub detail: String,
}

impl FinishNotice {
    pub fn to_value(&self) -> Value {
        Value::map([
            ("behavior", self.behavior.as_str().into()),
            ("cause", self.cause.as_str().into()),
            ("stamp_us", self.stamp_us.into()),
            ("detail", self.detail.as_str().into()),
        ])
    }

    pub fn from_value(v: &Value) -> Result<Self, String> {
        let field = |k: &str| v.get(k).ok_or_else(|| format!("finish notice lacks `{k}`"));
        Ok(Self {
            behavior: field("behavior")?
                .as_str()
                .ok_or("behavior must be a string")?
                .to_string(),
            cause: field("cause")?
                .as_str()
                .ok_or("cause must be a string")?
                .parse()?,
            stamp_us: field("stamp_us")?
                .as_i64()
                .filter(|s| *s >= 0)
                .ok_or("stamp_us must be a nonnegative integer")? as u64,
            detail: field("detail")?
                .as_str()
                .ok_or("detail must be a string")?
                .to_string(),
        })
    }
}

/// Per-behavior timing counters.
///
/// `t1_us` is the mean monitoring time per tick, `t2_ms` the accumulated
/// monitoring time and `t3_ms` the mean activation-management time
/// (on_activate + on_deactivate) per accepted activation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub behavior: String,
    pub a: u64,
    pub ticks: u64,
    pub t1_us: f64,
    pub t2_ms: f64,
    pub t3_ms: f64,
}
