use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::bus::Subscription;
use crate::runtime::{
    BehaviorCallbacks, BehaviorConfig, CheckPhase, Context, ParamSchema, ParamType,
    SituationAssessment,
};
use crate::world::{grid_topic, Cell, OccupancyGrid, SimWorld};

use super::flight::DEFAULT_ALTITUDE;
use super::planner::{plan_path, PlanError, PlannedPath};
use super::{planned_path_topic, CatalogEntry, GENERATE_PATH};

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub grid: OccupancyGrid,
    pub start: Cell,
    pub goal: Cell,
}

pub type PlanOutcome = Result<Vec<Cell>, PlanError>;

/// Where path-planning requests are executed. `poll` must never block.
pub trait PlannerBackend: Send {
    fn submit(&mut self, request: PlanRequest);
    fn poll(&mut self) -> Option<PlanOutcome>;
    /// Forgets the outstanding request, if any.
    fn cancel(&mut self);
}

/// Plans synchronously on submit; the answer is ready at the next poll.
#[derive(Debug, Default)]
pub struct InlineBackend {
    ready: Option<PlanOutcome>,
}

impl PlannerBackend for InlineBackend {
    fn submit(&mut self, r: PlanRequest) {
        self.ready = Some(plan_path(&r.grid, r.start, r.goal));
    }

    fn poll(&mut self) -> Option<PlanOutcome> {
        self.ready.take()
    }

    fn cancel(&mut self) {
        self.ready = None;
    }
}

/// Plans on a worker thread per request.
#[derive(Debug, Default)]
pub struct ThreadedBackend {
    rx: Option<Receiver<PlanOutcome>>,
}

impl PlannerBackend for ThreadedBackend {
    fn submit(&mut self, r: PlanRequest) {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            // The receiver may be gone after a cancel.
            let _ = tx.send(plan_path(&r.grid, r.start, r.goal));
        });
        self.rx = Some(rx);
    }

    fn poll(&mut self) -> Option<PlanOutcome> {
        let rx = self.rx.as_ref()?;
        match rx.try_recv() {
            Ok(outcome) => {
                self.rx = None;
                Some(outcome)
            }
            Err(TryRecvError::Empty) => None,
            Err(TryRecvError::Disconnected) => {
                self.rx = None;
                None
            }
        }
    }

    fn cancel(&mut self) {
        self.rx = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub timeout: Duration,
    pub max_requests: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(1),
            max_requests: 3,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid retry policy: {0}")]
pub struct InvalidPolicy(&'static str);

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), InvalidPolicy> {
        if self.max_requests == 0 {
            return Err(InvalidPolicy("max_requests must be at least 1"));
        }
        if self.timeout.is_zero() {
            return Err(InvalidPolicy("timeout must be positive"));
        }
        Ok(())
    }
}

struct Outstanding {
    request: PlanRequest,
    sent_ns: u64,
    count: u32,
}

/// Plans a path from the current position to (`x`, `y`) on the latest
/// occupancy grid, re-issuing the request when the planner does not
/// answer in time.
pub struct GeneratePath {
    world: Arc<SimWorld>,
    policy: RetryPolicy,
    backend: Box<dyn PlannerBackend>,
    grids: Option<Subscription>,
    grid: Mutex<Option<OccupancyGrid>>,
    outstanding: Option<Outstanding>,
    /// A found path, or the reason there is none.
    outcome: Option<Result<(), String>>,
    altitude: f64,
}

pub fn generate_path(
    world: &Arc<SimWorld>,
    policy: RetryPolicy,
    backend: Box<dyn PlannerBackend>,
) -> CatalogEntry {
    CatalogEntry::new(
        BehaviorConfig::goal_based(GENERATE_PATH, Duration::from_secs(30)).with_schema(
            ParamSchema::new()
                .required("x", ParamType::Real)
                .required("y", ParamType::Real),
        ),
        GeneratePath {
            world: world.clone(),
            policy,
            backend,
            grids: None,
            grid: Mutex::new(None),
            outstanding: None,
            outcome: None,
            altitude: DEFAULT_ALTITUDE,
        },
    )
}

fn destination(ctx: &Context) -> Option<(f64, f64)> {
    Some((ctx.params.get_f64("x")?, ctx.params.get_f64("y")?))
}

impl GeneratePath {
    /// Latest grid received on the mapping topic.
    fn latest_grid(&self) -> Option<OccupancyGrid> {
        let mut cached = self.grid.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(sub) = &self.grids {
            for envelope in sub.drain() {
                match OccupancyGrid::from_value(&envelope.payload) {
                    Ok(g) => *cached = Some(g),
                    Err(e) => log::warn!("ignoring occupancy grid: {e}"),
                }
            }
        }
        cached.clone()
    }

    fn send(&mut self, request: PlanRequest, now_ns: u64, count: u32) {
        self.backend.submit(request.clone());
        self.outstanding = Some(Outstanding {
            request,
            sent_ns: now_ns,
            count,
        });
    }
}

impl BehaviorCallbacks for GeneratePath {
    fn on_configure(&mut self, ctx: &Context) -> Result<(), String> {
        self.policy.validate().map_err(|e| e.to_string())?;
        self.grids = Some(ctx.bus.subscribe(&grid_topic(), 4));
        Ok(())
    }

    fn on_activate(&mut self, ctx: &Context) -> Result<(), String> {
        let grid = self.latest_grid().ok_or("no occupancy grid")?;
        let (x, y) = destination(ctx).ok_or("missing destination")?;
        let state = self.world.snapshot();
        self.altitude = if state.is_flying() && state.pose.z > 0.1 {
            state.pose.z
        } else {
            DEFAULT_ALTITUDE
        };
        self.outcome = None;
        self.outstanding = None;
        let start = grid.cell_at(state.pose.x, state.pose.y);
        let goal = grid.cell_at(x, y);
        match (start, goal) {
            (Some(start), Some(goal)) => {
                self.send(PlanRequest { grid, start, goal }, ctx.now_ns, 1)
            }
            (None, _) => self.outcome = Some(Err("no path: start is outside the grid".into())),
            (_, None) => {
                self.outcome = Some(Err("no path: destination is outside the grid".into()))
            }
        }
        Ok(())
    }

    fn on_execute(&mut self, ctx: &Context) {
        if self.outcome.is_some() || self.outstanding.is_none() {
            return;
        }
        let Some(outcome) = self.backend.poll() else {
            return;
        };
        let request = self
            .outstanding
            .take()
            .expect("outstanding request")
            .request;
        self.outcome = Some(match outcome {
            Ok(cells) => {
                let path = PlannedPath::from_cells(&request.grid, cells, self.altitude);
                if let Err(e) = ctx.bus.publish(&planned_path_topic(), path.to_value()) {
                    log::warn!("cannot publish planned path: {e}");
                }
                Ok(())
            }
            Err(PlanError::NoPath) => Err("no path".into()),
            Err(e) => Err(format!("no path: {e}")),
        });
    }

    fn on_deactivate(&mut self, _ctx: &Context) {
        self.backend.cancel();
        self.outstanding = None;
    }

    fn check_situation(&self, ctx: &Context) -> SituationAssessment {
        let Some(grid) = self.latest_grid() else {
            return SituationAssessment::unsuitable("no occupancy grid");
        };
        if ctx.phase == CheckPhase::Monitoring {
            if let Some(goal) = destination(ctx).and_then(|(x, y)| grid.cell_at(x, y)) {
                if !grid.is_free(goal) {
                    return SituationAssessment::unsuitable(format!(
                        "destination cell {goal} is now occupied"
                    ));
                }
            }
        }
        SituationAssessment::optimal()
    }

    fn check_goal(&mut self, _ctx: &Context) -> bool {
        matches!(self.outcome, Some(Ok(_)))
    }

    fn check_progress(&mut self, _ctx: &Context) -> Result<(), String> {
        match &self.outcome {
            Some(Err(detail)) => Err(detail.clone()),
            _ => Ok(()),
        }
    }

    fn check_processes(&mut self, ctx: &Context) -> Result<(), String> {
        let Some(out) = &self.outstanding else {
            return Ok(());
        };
        if ctx.now_ns.saturating_sub(out.sent_ns) < self.policy.timeout.as_nanos() as u64 {
            return Ok(());
        }
        self.backend.cancel();
        let count = out.count;
        if count >= self.policy.max_requests {
            self.outstanding = None;
            return Err(format!("planner did not answer {count} requests"));
        }
        let request = self
            .outstanding
            .take()
            .expect("outstanding request")
            .request;
        log::debug!("planner timed out, sending request {}", count + 1);
        self.send(request, ctx.now_ns, count + 1);
        Ok(())
    }
}
