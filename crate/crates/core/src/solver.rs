//! Stokes solve, Picard iteration for steady Navier–Stokes and θ-scheme steps.

use std::sync::Arc;

use crate::condense::{solve_linear, FactorCache};
use crate::diagnostics::velocity_norm;
use crate::forms::{Assembly, Discretization, Forcing, Params, State, Stepping};
use crate::spaces::Constraints;
use crate::{Error, Result};

/// Scalar monitored by the fixed-point stopping test.
#[derive(Clone)]
pub enum Measure {
    /// `‖u‖₀` of the iterate.
    VelocityNorm,
    /// Any functional of the iterate, typically an error against a known solution.
    Custom(Arc<dyn Fn(&Discretization, &State) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measure::VelocityNorm => write!(f, "VelocityNorm"),
            Measure::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Stops when `|m_{i+1} - m_i| / (m_{i+1} + m_i) <= tol`.
#[derive(Debug, Clone)]
pub struct Picard {
    pub tol: f64,
    pub max_iters: usize,
    /// Weight of the new iterate (1 = no relaxation).
    pub relaxation: f64,
    pub measure: Measure,
}

impl Picard {
    pub fn new(tol: f64, measure: Measure) -> Self {
        Picard { tol, max_iters: 100, relaxation: 1.0, measure }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("fixed-point tolerance must be positive".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidArgument("relaxation must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Result of a fixed-point solve.
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub state: State,
    pub iterations: usize,
    /// Monitored measure after each iteration (the initial guess first).
    pub history: Vec<f64>,
}

/// Piecewise-constant θ by step number: the last entry whose first step is
/// not after the current one applies.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSchedule(pub Vec<(usize, f64)>);

impl ThetaSchedule {
    pub fn constant(theta: f64) -> Self {
        ThetaSchedule(vec![(1, theta)])
    }

    pub fn theta(&self, step: usize) -> f64 {
        self.0.iter().rev().find(|(s, _)| *s <= step).or(self.0.first()).map_or(1.0, |e| e.1)
    }
}

/// A discretized problem together with a reusable sparse factorization.
pub struct Solver<'a> {
    pub disc: &'a Discretization,
    pub params: Params,
    pub forcing: Forcing,
    /// Prescribed `∫ p`, enforced through a multiplier.
    pub mean_pressure: Option<f64>,
    /// Time of steady boundary data and loads.
    pub time: f64,
    cache: FactorCache,
}

impl<'a> Solver<'a> {
    pub fn new(disc: &'a Discretization, params: Params, forcing: Forcing) -> Self {
        Solver { disc, params, forcing, mean_pressure: None, time: 0.0, cache: FactorCache::new() }
    }

    pub fn with_mean_pressure(mut self, value: f64) -> Self {
        self.mean_pressure = Some(value);
        self
    }

    fn check_pressure_level(&self) -> Result<()> {
        let bcs = &self.disc.bcs;
        if self.mean_pressure.is_none() && bcs.pressure_pins.is_empty() && bcs.all_velocity_constrained() {
            return Err(Error::Singular { pivot: None });
        }
        Ok(())
    }

    fn linear(&mut self, mode: &Assembly, t: f64) -> Result<State> {
        self.params.validate()?;
        self.check_pressure_level()?;
        let constraints = Constraints::build(&self.disc.mesh, &self.disc.dofs, &self.disc.bcs, t)?;
        let mut state = solve_linear(
            self.disc,
            &self.params,
            &self.forcing,
            mode,
            &constraints,
            self.mean_pressure,
            &mut self.cache,
        )?;
        state.t = t;
        Ok(state)
    }

    /// Steady Stokes problem (advection dropped).
    pub fn solve_stokes(&mut self) -> Result<State> {
        if !(self.params.nu > 0.0) {
            return Err(Error::InvalidArgument("Stokes solve needs a positive viscosity".into()));
        }
        let mode = Assembly { advection: None, stepping: None, time: self.time, mean_pressure: false };
        self.linear(&mode, self.time)
    }

    /// One steady Oseen solve with the advective velocity frozen at `frozen`.
    pub fn solve_oseen(&mut self, frozen: &State) -> Result<State> {
        let mode = Assembly { advection: Some(frozen), stepping: None, time: self.time, mean_pressure: false };
        self.linear(&mode, self.time)
    }

    /// Steady Navier–Stokes by fixed-point iteration, starting from `initial`
    /// or from the Stokes solution.
    pub fn solve_stationary_ns(&mut self, picard: &Picard, initial: Option<State>) -> Result<PicardOutcome> {
        picard.validate()?;
        let mut current = match initial {
            Some(s) => s,
            None => self.solve_stokes()?,
        };
        let measure = |disc: &Discretization, s: &State| match &picard.measure {
            Measure::VelocityNorm => velocity_norm(disc, s),
            Measure::Custom(f) => f(disc, s),
        };
        let mut history = vec![measure(self.disc, &current)];
        for it in 1..=picard.max_iters {
            let next = self.solve_oseen(&current)?;
            current = if picard.relaxation < 1.0 {
                State::blend(&current, &next, picard.relaxation)
            } else {
                next
            };
            let m = measure(self.disc, &current);
            let prev = *history.last().expect("history is never empty");
            history.push(m);
            if !m.is_finite() {
                return Err(Error::Divergence { iterations: it, history });
            }
            let denom = m.abs() + prev.abs();
            let change = if denom == 0.0 { 0.0 } else { (m - prev).abs() / denom };
            if change <= picard.tol {
                return Ok(PicardOutcome { state: current, iterations: it, history });
            }
        }
        Err(Error::Divergence { iterations: picard.max_iters, history })
    }

    /// Advances `previous` by one θ-step of size `params.dt`; the advective
    /// velocity is frozen at `previous` when `advect` is set.
    pub fn step_transient(&mut self, previous: &State, advect: bool) -> Result<State> {
        let mode = Assembly {
            advection: advect.then_some(previous),
            stepping: Some(Stepping { previous }),
            time: previous.t,
            mean_pressure: false,
        };
        self.linear(&mode, previous.t + self.params.dt)
    }
}
