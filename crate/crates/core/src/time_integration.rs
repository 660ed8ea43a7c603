//! Newton solver, backward-Euler stepping and the iteration-count
//! step-size controller.

use log::{debug, info, warn};
use thiserror::Error;

use crate::config::{NewtonConfig, NewtonStrategy, TimeConfig};
use crate::hdg::{HdgError, HdgSystem, Increment, StepInput, SystemState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeError {
    #[error("time step underflow at t = {time}: dt = {dt} < dt_min = {dt_min}")]
    DtUnderflow { time: f64, dt: f64, dt_min: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("Newton did not converge at step {step} (t = {time}), residual {residual:e}")]
    NewtonFailure { step: usize, time: f64, residual: f64 },
    #[error("invalid time settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Hdg(#[from] HdgError),
}

/// Why a Newton iterate could not be evaluated or improved.
#[derive(Debug, Clone, PartialEq)]
pub enum NewtonFailure {
    /// Model evaluation broke down (pole, singular local block, NaN).
    Evaluation(String),
    LinearSolve(String),
}

/// Residual/Jacobian provider for [`newton_solve`].
pub trait NewtonSystem {
    type State: Clone;
    type Direction;

    fn residual_norm(&self, state: &Self::State) -> Result<f64, NewtonFailure>;
    /// Solves `J δ = -R` at `state`.
    fn direction(&self, state: &Self::State) -> Result<Self::Direction, NewtonFailure>;
    fn apply(&self, state: &Self::State, direction: &Self::Direction, alpha: f64) -> Self::State;
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult<S> {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub state: S,
    /// Residual norm before the first and after every iteration.
    pub history: Vec<f64>,
}

const MIN_STEP_LENGTH: f64 = 1.0 / 1048576.0;

pub fn newton_solve<S: NewtonSystem>(
    system: &S,
    initial: S::State,
    config: &NewtonConfig,
) -> Result<NewtonResult<S::State>, TimeError> {
    let failed = |state: S::State, iterations: usize, norm: f64, history: Vec<f64>| NewtonResult {
        converged: false,
        iterations,
        final_residual_norm: norm,
        state,
        history,
    };
    let mut state = initial;
    let mut norm = match system.residual_norm(&state) {
        Ok(n) => n,
        Err(e) => {
            debug!("initial residual failed: {e:?}");
            return Ok(failed(state, 0, f64::INFINITY, vec![]));
        }
    };
    let mut history = vec![norm];
    let mut iterations = 0;
    while norm >= config.eps_abs {
        if iterations == config.max_iterations {
            return Ok(failed(state, iterations, norm, history));
        }
        let dir = match system.direction(&state) {
            Ok(d) => d,
            Err(NewtonFailure::LinearSolve(msg)) => return Err(TimeError::LinearSolveFailure(msg)),
            Err(NewtonFailure::Evaluation(msg)) => {
                debug!("Newton direction failed: {msg}");
                return Ok(failed(state, iterations, norm, history));
            }
        };
        iterations += 1;
        match config.strategy {
            NewtonStrategy::Damped(alpha) => {
                let next = system.apply(&state, &dir, alpha);
                match system.residual_norm(&next) {
                    Ok(n) if n.is_finite() => {
                        state = next;
                        norm = n;
                    }
                    _ => return Ok(failed(state, iterations, norm, history)),
                }
            }
            NewtonStrategy::LineSearch => {
                let mut alpha = 1.0;
                loop {
                    let next = system.apply(&state, &dir, alpha);
                    if let Ok(n) = system.residual_norm(&next) {
                        if n < norm {
                            state = next;
                            norm = n;
                            break;
                        }
                    }
                    alpha *= 0.5;
                    if alpha < MIN_STEP_LENGTH {
                        return Ok(failed(state, iterations, norm, history));
                    }
                }
            }
        }
        history.push(norm);
    }
    Ok(NewtonResult { converged: true, iterations, final_residual_norm: norm, state, history })
}

/// Step-size rule driven by the Newton iteration count.
///
/// Returns the next step size and whether the current step must be retried.
pub fn adapt_dt(dt: f64, newton_iterations: usize, failed: bool) -> (f64, bool) {
    if failed {
        return (0.5 * dt, true);
    }
    let factor = match newton_iterations {
        0..=8 => 1.2,
        9..=14 => 1.0,
        _ => 0.8,
    };
    (factor * dt, false)
}

/// [`adapt_dt`] with the result clamped to `[dt_min, dt_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtController {
    pub dt_min: f64,
    pub dt_max: f64,
}

impl DtController {
    pub fn from_config(time: &TimeConfig) -> Self {
        DtController { dt_min: time.dt_min, dt_max: time.dt_max }
    }

    pub fn adapt(&self, dt: f64, newton_iterations: usize, failed: bool, time: f64) -> Result<(f64, bool), TimeError> {
        let (next, retry) = adapt_dt(dt, newton_iterations, failed);
        if failed && next < self.dt_min {
            return Err(TimeError::DtUnderflow { time, dt: next, dt_min: self.dt_min });
        }
        Ok((next.clamp(self.dt_min, self.dt_max), retry))
    }
}

/// Nonlinear system of one backward-Euler step.
pub struct BackwardEulerStep<'a> {
    pub system: &'a HdgSystem,
    pub prev: &'a SystemState,
    pub dt: f64,
    pub t_next: f64,
}

impl BackwardEulerStep<'_> {
    fn input(&self) -> StepInput<'_> {
        StepInput { prev: self.prev, dt: self.dt, t_next: self.t_next }
    }
}

fn classify(err: HdgError) -> NewtonFailure {
    match err {
        HdgError::Linalg(e) => NewtonFailure::LinearSolve(e.to_string()),
        other => NewtonFailure::Evaluation(other.to_string()),
    }
}

impl NewtonSystem for BackwardEulerStep<'_> {
    type State = SystemState;
    type Direction = Increment;

    fn residual_norm(&self, state: &SystemState) -> Result<f64, NewtonFailure> {
        self.system.residual(&self.input(), state).map(|r| r.norm()).map_err(classify)
    }

    fn direction(&self, state: &SystemState) -> Result<Increment, NewtonFailure> {
        self.system.newton_increment(&self.input(), state).map_err(classify)
    }

    fn apply(&self, state: &SystemState, direction: &Increment, alpha: f64) -> SystemState {
        let mut next = direction.apply(state, alpha);
        next.time = self.t_next;
        next
    }
}

/// Solves one backward-Euler step starting from the previous state.
pub fn step(
    system: &HdgSystem,
    prev: &SystemState,
    dt: f64,
    config: &NewtonConfig,
) -> Result<NewtonResult<SystemState>, TimeError> {
    let t_next = prev.time + dt;
    let be = BackwardEulerStep { system, prev, dt, t_next };
    let mut guess = prev.clone();
    guess.time = t_next;
    newton_solve(&be, guess, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Fixed(usize),
    /// Adaptive steps until `t_final`, optionally stopping after
    /// `max_steps` accepted steps.
    Adaptive { t_final: f64, max_steps: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub newton_iterations: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: SystemState,
    pub records: Vec<StepRecord>,
}

impl RunOutcome {
    pub fn accepted_steps(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }
}

/// Time loop. `observer` sees every record together with the state after
/// it (the new state when accepted, the unchanged one otherwise).
pub fn advance(
    system: &HdgSystem,
    initial: SystemState,
    time: &TimeConfig,
    mode: StepMode,
    mut observer: impl FnMut(&StepRecord, &SystemState),
) -> Result<RunOutcome, TimeError> {
    if !(time.dt_init > 0.0 && time.dt_init.is_finite()) {
        return Err(TimeError::InvalidSettings(format!("dt_init must be positive, got {}", time.dt_init)));
    }
    let mut state = initial;
    let mut records = Vec::new();
    match mode {
        StepMode::Fixed(n_steps) => {
            for k in 1..=n_steps {
                let res = step(system, &state, time.dt_init, &time.newton)?;
                let record = StepRecord {
                    step: k,
                    time: res.state.time,
                    dt: time.dt_init,
                    newton_iterations: res.iterations,
                    accepted: res.converged,
                };
                records.push(record);
                if !res.converged {
                    observer(&record, &state);
                    return Err(TimeError::NewtonFailure {
                        step: k,
                        time: res.state.time,
                        residual: res.final_residual_norm,
                    });
                }
                state = res.state;
                debug!("step {k}: t = {}, {} Newton iterations", state.time, res.iterations);
                observer(&record, &state);
            }
        }
        StepMode::Adaptive { t_final, max_steps } => {
            let controller = DtController::from_config(time);
            let mut dt = time.dt_init;
            let mut accepted = 0;
            let span = if t_final.is_finite() { (t_final - state.time).abs().max(1.0) } else { 1.0 };
            while t_final - state.time > 1e-12 * span && max_steps.is_none_or(|m| accepted < m) {
                let remaining = t_final - state.time;
                let last = dt >= remaining * (1.0 - 1e-12);
                let dt_try = if last { remaining } else { dt };
                let res = step(system, &state, dt_try, &time.newton)?;
                let record = StepRecord {
                    step: accepted + 1,
                    time: if res.converged && last { t_final } else { state.time + dt_try },
                    dt: dt_try,
                    newton_iterations: res.iterations,
                    accepted: res.converged,
                };
                records.push(record);
                if res.converged {
                    accepted += 1;
                    state = res.state;
                    if last {
                        state.time = t_final;
                    }
                    observer(&record, &state);
                    let (next, _) = controller.adapt(dt_try, res.iterations, false, state.time)?;
                    dt = next;
                    info!("step {accepted}: t = {}, dt = {dt_try}, {} Newton iterations", state.time, res.iterations);
                } else {
                    observer(&record, &state);
                    let (next, _) = controller.adapt(dt_try, res.iterations, true, state.time)?;
                    warn!("Newton failed at t = {} with dt = {dt_try}; retrying with dt = {next}", state.time);
                    dt = next;
                }
            }
        }
    }
    Ok(RunOutcome { state, records })
}
