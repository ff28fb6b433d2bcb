use std::time::Duration;

use crate::bus::{Bus, BusError, Value};

use super::manager::{service_id, ActivationReply, ActivationStatus};
use super::params::ActivationParameters;
use super::types::SituationAssessment;

pub const DEFAULT_CALL_TIMEOUT: Duration = Duration::from_secs(5);

/// Typed caller for one behavior's four services.
#[derive(Debug, Clone)]
pub struct BehaviorClient {
    bus: Bus,
    behavior: String,
    timeout: Duration,
}

fn malformed(what: &str, v: &Value) -> BusError {
    BusError::InvalidPayload(format!("malformed {what} reply: {v}"))
}

impl BehaviorClient {
    pub fn new(bus: &Bus, behavior: &str) -> Self {
        Self {
            bus: bus.clone(),
            behavior: behavior.to_string(),
            timeout: DEFAULT_CALL_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn behavior(&self) -> &str {
        &self.behavior
    }

    fn call(&self, service: &str, request: Value) -> Result<Value, BusError> {
        self.bus
            .call_service(&service_id(&self.behavior, service), request, self.timeout)
    }

    pub fn activate(&self, params: &ActivationParameters) -> Result<ActivationReply, BusError> {
        let reply = self.call("activate", Value::map([("params", params.to_value())]))?;
        ActivationReply::from_value(&reply).ok_or_else(|| malformed("activate", &reply))
    }

    pub fn deactivate(&self) -> Result<bool, BusError> {
        let reply = self.call("deactivate", Value::empty_map())?;
        reply
            .get("accepted")
            .and_then(Value::as_bool)
            .ok_or_else(|| malformed("deactivate", &reply))
    }

    pub fn check_activation(&self) -> Result<ActivationStatus, BusError> {
        let reply = self.call("check_activation", Value::empty_map())?;
        ActivationStatus::from_value(&reply).ok_or_else(|| malformed("check_activation", &reply))
    }

    pub fn check_situation(&self) -> Result<SituationAssessment, BusError> {
        let reply = self.call("check_situation", Value::empty_map())?;
        SituationAssessment::from_value(&reply).ok_or_else(|| malformed("check_situation", &reply))
    }
}
