use crate::bus::TopicId;
use crate::runtime::{BehaviorCallbacks, BehaviorConfig, Context};

use super::monitors::{Heartbeat, Thresholds};
use super::{pose_heartbeat, CatalogEntry, SELF_LOCALIZE};

pub const ESTIMATED_POSE_TOPIC: &str = "self_localization/estimated_pose";

pub fn estimated_pose_topic() -> TopicId {
    TopicId::new(ESTIMATED_POSE_TOPIC).expect("static topic name")
}

/// Republishes ground truth as the pose estimate.
pub struct SelfLocalize {
    heartbeat: Heartbeat,
    out: TopicId,
}

pub fn self_localize(thresholds: Thresholds) -> CatalogEntry {
    CatalogEntry::new(
        BehaviorConfig::recurrent(SELF_LOCALIZE),
        SelfLocalize {
            heartbeat: pose_heartbeat(&thresholds),
            out: estimated_pose_topic(),
        },
    )
}

impl BehaviorCallbacks for SelfLocalize {
    fn on_activate(&mut self, ctx: &Context) -> Result<(), String> {
        self.heartbeat.start(ctx.bus, ctx.now_us());
        Ok(())
    }

    fn on_execute(&mut self, ctx: &Context) {
        if let Some(envelope) = self.heartbeat.take_latest() {
            if let Err(e) = ctx.bus.publish(&self.out, envelope.payload) {
                log::warn!("cannot republish pose: {e}");
            }
        }
    }

    fn on_deactivate(&mut self, _ctx: &Context) {
        self.heartbeat.stop();
    }

    fn check_processes(&mut self, ctx: &Context) -> Result<(), String> {
        self.heartbeat.check(ctx.now_us())
    }
}
