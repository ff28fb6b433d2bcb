use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub output_limit: f64,
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 1.2,
            ki: 0.1,
            kd: 0.3,
            output_limit: 2.0,
            integral_limit: 1.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid PID gains: {0}")]
pub struct InvalidGains(String);

impl PidGains {
    pub fn validate(&self) -> Result<(), InvalidGains> {
        let all = [
            self.kp,
            self.ki,
            self.kd,
            self.output_limit,
            self.integral_limit,
        ];
        if !all.iter().all(|g| g.is_finite()) {
            return Err(InvalidGains("gains must be finite".into()));
        }
        if self.kp < 0.0 || self.ki < 0.0 || self.kd < 0.0 {
            return Err(InvalidGains("gains must be nonnegative".into()));
        }
        if self.output_limit <= 0.0 || self.integral_limit <= 0.0 {
            return Err(InvalidGains("limits must be positive".into()));
        }
        Ok(())
    }
}

/// Controller memory between steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

/// One controller update. The derivative term is zero on the first sample.
pub fn pid_step(gains: &PidGains, error: f64, dt: f64, state: PidState) -> (f64, PidState) {
    debug_assert!(dt > 0.0);
    let integral = (state.integral + error * dt).clamp(-gains.integral_limit, gains.integral_limit);
    let derivative = state.prev_error.map_or(0.0, |prev| (error - prev) / dt);
    let raw = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    let output = raw.clamp(-gains.output_limit, gains.output_limit);
    (
        output,
        PidState {
            integral,
            prev_error: Some(error),
        },
    )
}

/// A controller bundled with its memory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pid {
    pub gains: PidGains,
    pub state: PidState,
}

impl Pid {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            state: PidState::default(),
        }
    }

    pub fn update(&mut self, error: f64, dt: f64) -> f64 {
        let (out, next) = pid_step(&self.gains, error, dt, self.state);
        self.state = next;
        out
    }

    pub fn reset(&mut self) {
        self.state = PidState::default();
    }
}
