//! Behavior execution managers.
//!
//! Each registered behavior gets a lifecycle state machine
//! (`Unconfigured → Inactive ⇄ Active`), four services on the bus
//! (`<name>/activate`, `<name>/deactivate`, `<name>/check_activation`,
//! `<name>/check_situation`) and a periodic tick that runs the monitoring
//! checks before each control step. Every accepted activation ends with
//! exactly one [`FinishNotice`] on `behavior_activation_finished`.

mod client;
mod manager;
mod params;
mod types;

pub use client::{BehaviorClient, DEFAULT_CALL_TIMEOUT};
pub use manager::{
    register_behavior, service_id, ActivationReply, ActivationStatus, BehaviorCallbacks,
    BehaviorHandle, CheckPhase, Context, DefaultCallbacks, LoopMode, RejectReason, RuntimeOptions,
    TickOutcome, SERVICE_NAMES,
};
pub use params::{parse_waypoints, ActivationParameters, Scalar, WaypointSpec};
pub use types::{
    finish_topic, BehaviorConfig, BehaviorKind, BehaviorState, ExecutionLimit, FinishNotice,
    MetricsRecord, ParamSchema, ParamSpec, ParamType, SituationAssessment, TerminationCause,
    DEFAULT_FREQUENCY_HZ, FINISH_TOPIC,
};

use thiserror::Error;

use crate::bus::{Bus, BusError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("behavior name `{0}` is already in use")]
    NameCollision(String),
    #[error("{behavior}: configure failed: {detail}")]
    ConfigureFailed { behavior: String, detail: String },
    #[error("invalid behavior configuration: {0}")]
    InvalidConfig(String),
    #[error("behavior `{0}` is not active")]
    NotActive(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// The set of behaviors sharing one bus, in registration order.
pub struct Runtime {
    bus: Bus,
    options: RuntimeOptions,
    behaviors: Vec<BehaviorHandle>,
}

impl Runtime {
    pub fn new(bus: Bus, options: RuntimeOptions) -> Self {
        Self {
            bus,
            options,
            behaviors: Vec::new(),
        }
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn options(&self) -> &RuntimeOptions {
        &self.options
    }

    pub fn register(
        &mut self,
        config: BehaviorConfig,
        callbacks: Box<dyn BehaviorCallbacks>,
    ) -> Result<BehaviorHandle, RuntimeError> {
        if self.get(&config.name).is_some() {
            return Err(RuntimeError::NameCollision(config.name));
        }
        let handle = register_behavior(config, callbacks, &self.bus, self.options.clone())?;
        self.behaviors.push(handle.clone());
        Ok(handle)
    }

    pub fn get(&self, name: &str) -> Option<&BehaviorHandle> {
        self.behaviors.iter().find(|b| b.name() == name)
    }

    pub fn behaviors(&self) -> &[BehaviorHandle] {
        &self.behaviors
    }

    /// Runs due ticks of every active behavior, in registration order.
    /// Does nothing in threaded mode.
    pub fn poll(&self, now_ns: u64) {
        if self.options.mode == LoopMode::Stepped {
            for behavior in &self.behaviors {
                behavior.poll(now_ns);
            }
        }
    }

    pub fn metrics(&self) -> Vec<MetricsRecord> {
        self.behaviors
            .iter()
            .map(BehaviorHandle::collect_metrics)
            .collect()
    }

    pub fn reset_metrics(&self) {
        self.behaviors
            .iter()
            .for_each(BehaviorHandle::reset_metrics);
    }

    pub fn active_behaviors(&self) -> Vec<String> {
        self.behaviors
            .iter()
            .filter(|b| b.is_active())
            .map(|b| b.name().to_string())
            .collect()
    }
}

#[cfg(test)]
mod tests;
