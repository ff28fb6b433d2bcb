use std::collections::BTreeMap;
use std::fmt;

use crate::bus::Value;

use super::types::{ParamSchema, ParamType};

#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Text(String),
    Int(i64),
    Real(f64),
    Bool(bool),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Real(r) => Some(*r),
            Scalar::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Text(s) => Some(s),
            _ => None,
        }
    }

    fn to_value(&self) -> Value {
        match self {
            Scalar::Text(s) => Value::Str(s.clone()),
            Scalar::Int(i) => Value::Int(*i),
            Scalar::Real(r) => Value::Float(*r),
            Scalar::Bool(b) => Value::Bool(*b),
        }
    }

    fn from_value(v: &Value) -> Option<Self> {
        match v {
            Value::Str(s) => Some(Scalar::Text(s.clone())),
            Value::Int(i) => Some(Scalar::Int(*i)),
            Value::Float(f) => Some(Scalar::Real(*f)),
            Value::Bool(b) => Some(Scalar::Bool(*b)),
            _ => None,
        }
    }

    /// Parses mission-file text according to the declared type.
    pub fn parse_as(text: &str, ty: ParamType) -> Result<Self, String> {
        match ty {
            ParamType::Real => text
                .parse::<f64>()
                .ok()
                .filter(|r| r.is_finite())
                .map(Scalar::Real)
                .ok_or_else(|| format!("`{text}` is not a finite real")),
            ParamType::Integer => text
                .parse::<i64>()
                .map(Scalar::Int)
                .map_err(|_| format!("`{text}` is not an integer")),
            ParamType::Bool => match text {
                "true" => Ok(Scalar::Bool(true)),
                "false" => Ok(Scalar::Bool(false)),
                _ => Err(format!("`{text}` is not a boolean")),
            },
            ParamType::Text => Ok(Scalar::Text(text.to_string())),
            ParamType::Waypoints => {
                parse_waypoints(text)?;
                Ok(Scalar::Text(text.to_string()))
            }
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Text(s) => f.write_str(s),
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Real(r) => write!(f, "{r}"),
            Scalar::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// Key/value parameters given with an activation request.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivationParameters(BTreeMap<String, Scalar>);

impl ActivationParameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: Scalar) -> Self {
        self.0.insert(key.to_string(), value);
        self
    }

    pub fn real(self, key: &str, value: f64) -> Self {
        self.with(key, Scalar::Real(value))
    }

    pub fn text(self, key: &str, value: &str) -> Self {
        self.with(key, Scalar::Text(value.to_string()))
    }

    pub fn insert(&mut self, key: String, value: Scalar) {
        self.0.insert(key, value);
    }

    pub fn get(&self, key: &str) -> Option<&Scalar> {
        self.0.get(key)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Scalar::as_f64)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Scalar)> {
        self.0.iter()
    }

    pub fn to_value(&self) -> Value {
        Value::Map(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), v.to_value()))
                .collect(),
        )
    }

    pub fn from_value(v: &Value) -> Result<Self, String> {
        let map = v.as_map().ok_or("parameters must be a map")?;
        map.iter()
            .map(|(k, v)| {
                Scalar::from_value(v)
                    .map(|s| (k.clone(), s))
                    .ok_or_else(|| format!("parameter `{k}` is not a scalar"))
            })
            .collect::<Result<BTreeMap<_, _>, _>>()
            .map(Self)
    }

    /// Checks keys and types against `schema`. Unknown keys are errors.
    pub fn validate(&self, schema: &ParamSchema) -> Result<(), String> {
        for (key, value) in &self.0 {
            let spec = schema
                .spec(key)
                .ok_or_else(|| format!("unknown parameter `{key}`"))?;
            let ok = match (spec.ty, value) {
                (ParamType::Real, Scalar::Real(r)) => r.is_finite(),
                (ParamType::Real, Scalar::Int(_)) => true,
                (ParamType::Integer, Scalar::Int(_)) => true,
                (ParamType::Text, Scalar::Text(_)) => true,
                (ParamType::Bool, Scalar::Bool(_)) => true,
                (ParamType::Waypoints, Scalar::Text(t)) => {
                    parse_waypoints(t).map_err(|e| format!("parameter `{key}`: {e}"))?;
                    true
                }
                _ => false,
            };
            if !ok {
                return Err(format!(
                    "parameter `{key}` must be {}, got `{value}`",
                    spec.ty.name()
                ));
            }
        }
        for spec in schema.params.iter().filter(|p| p.required) {
            if !self.0.contains_key(&spec.key) {
                return Err(format!("missing required parameter `{}`", spec.key));
            }
        }
        Ok(())
    }
}

/// A waypoint as written in a parameter: `z` is optional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointSpec {
    pub x: f64,
    pub y: f64,
    pub z: Option<f64>,
}

/// Parses `x,y[,z];x,y[,z];...` (whitespace around numbers allowed).
pub fn parse_waypoints(text: &str) -> Result<Vec<WaypointSpec>, String> {
    let points: Vec<&str> = text
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if points.is_empty() {
        return Err("empty waypoint list".into());
    }
    points
        .iter()
        .map(|p| {
            let coords = p
                .split(',')
                .map(|c| c.trim().parse::<f64>().ok().filter(|f| f.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| format!("bad waypoint `{p}`"))?;
            match coords[..] {
                [x, y] => Ok(WaypointSpec { x, y, z: None }),
                [x, y, z] => Ok(WaypointSpec { x, y, z: Some(z) }),
                _ => Err(format!("waypoint `{p}` needs 2 or 3 coordinates")),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotate_schema() -> ParamSchema {
        ParamSchema::new().required("angle", ParamType::Real)
    }

    #[test]
    fn required_parameter_must_be_present() {
        let err = ActivationParameters::new()
            .validate(&rotate_schema())
            .unwrap_err();
        assert!(err.contains("angle"));
        assert!(ActivationParameters::new()
            .real("angle", 90.0)
            .validate(&rotate_schema())
            .is_ok());
    }

    #[test]
    fn unknown_keys_and_wrong_types_rejected() {
        let p = ActivationParameters::new()
            .real("angle", 90.0)
            .real("speed", 1.0);
        assert!(p.validate(&rotate_schema()).unwrap_err().contains("speed"));
        let p = ActivationParameters::new().text("angle", "ninety");
        assert!(p.validate(&rotate_schema()).is_err());
    }

    #[test]
    fn integers_are_accepted_as_reals() {
        let p = ActivationParameters::new().with("angle", Scalar::Int(90));
        assert!(p.validate(&rotate_schema()).is_ok());
        assert_eq!(p.get_f64("angle"), Some(90.0));
    }

    #[test]
    fn value_round_trip() {
        let p = ActivationParameters::new()
            .real("angle", 90.0)
            .text("path", "0,0;1,1");
        assert_eq!(ActivationParameters::from_value(&p.to_value()).unwrap(), p);
    }

    #[test]
    fn waypoint_text() {
        let w = parse_waypoints("1,0,1; 1,1 ;").unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].z, Some(1.0));
        assert_eq!(w[1].z, None);
        assert!(parse_waypoints("").is_err());
        assert!(parse_waypoints(" ; ").is_err());
        assert!(parse_waypoints("1").is_err());
        assert!(parse_waypoints("1,x").is_err());
    }
}
