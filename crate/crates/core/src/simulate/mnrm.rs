//! Modified next reaction method: one unit-rate Poisson clock per reaction
//! channel, advanced by the integrated intensity of that channel.

use rand::Rng;
use rand_distr::Exp1;

use super::SimulationError;
use crate::model::ReactionNetwork;

/// Default cap on the number of jumps in one simulated window.
pub const DEFAULT_MAX_JUMPS: u64 = 100_000_000;

/// Receives each jump of a running simulation.
pub(crate) trait Observer {
    /// `internal[r]` is the integrated intensity of reaction r since the
    /// window start, evaluated at `time`.
    fn on_jump(&mut self, time: f64, reaction: usize, state: &[i64], internal: &[f64]);
    fn on_end(&mut self, internal: &[f64]);
}

/// Observer that ignores everything.
pub(crate) struct Discard;

impl Observer for Discard {
    #[inline]
    fn on_jump(&mut self, _: f64, _: usize, _: &[i64], _: &[f64]) {}
    #[inline]
    fn on_end(&mut self, _: &[f64]) {}
}

/// Reusable simulation workspace for one network. Cheap to create; keep one
/// per worker.
pub struct Simulator<'a> {
    network: &'a ReactionNetwork,
    max_jumps: u64,
    affects: Vec<Vec<usize>>,
    state: Vec<i64>,
    rates: Vec<f64>,
    internal: Vec<f64>,
    next_fire: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(network: &'a ReactionNetwork) -> Self {
        let reactions = network.reactions();
        let deps: Vec<Vec<usize>> = reactions.iter().map(|r| r.dependencies()).collect();
        let affects = reactions
            .iter()
            .map(|fired| {
                (0..reactions.len())
                    .filter(|&r| deps[r].iter().any(|&i| fired.zeta()[i] != 0))
                    .collect()
            })
            .collect();
        let nr = reactions.len();
        Self {
            network,
            max_jumps: DEFAULT_MAX_JUMPS,
            affects,
            state: vec![0; network.num_species()],
            rates: vec![0.0; nr],
            internal: vec![0.0; nr],
            next_fire: vec![0.0; nr],
        }
    }

    pub fn with_max_jumps(mut self, max_jumps: u64) -> Self {
        self.max_jumps = max_jumps;
        self
    }

    pub fn network(&self) -> &'a ReactionNetwork {
        self.network
    }

    /// Current state after the last `run`.
    pub(crate) fn state(&self) -> &[i64] {
        &self.state
    }

    fn evaluate(&mut self, r: usize) -> Result<(), SimulationError> {
        let v = self.network.reactions()[r].rate(&self.state);
        if !(v.is_finite() && v >= 0.0) {
            return Err(SimulationError::InvalidIntensity {
                reaction: r,
                value: v,
                state: self.state.clone(),
            });
        }
        self.rates[r] = v;
        Ok(())
    }

    /// Simulates on `[t0, t1]` from `x0`, returning the number of jumps. The
    /// final state is left in `self.state`.
    pub(crate) fn run<R: Rng + ?Sized, O: Observer>(
        &mut self,
        x0: &[i64],
        t0: f64,
        t1: f64,
        rng: &mut R,
        obs: &mut O,
    ) -> Result<u64, SimulationError> {
        if !t0.is_finite() || !t1.is_finite() || t0 > t1 {
            return Err(SimulationError::BadWindow { t0, t1 });
        }
        if x0.len() != self.state.len() || x0.iter().any(|&v| v < 0) {
            return Err(SimulationError::BadState(x0.to_vec()));
        }
        self.state.copy_from_slice(x0);
        let nr = self.rates.len();
        for r in 0..nr {
            self.evaluate(r)?;
            self.internal[r] = 0.0;
            self.next_fire[r] = rng.sample(Exp1);
        }
        let mut t = t0;
        let mut jumps: u64 = 0;
        if t0 == t1 {
            obs.on_end(&self.internal);
            return Ok(0);
        }
        loop {
            let mut best = f64::INFINITY;
            let mut mu = usize::MAX;
            for r in 0..nr {
                let a = self.rates[r];
                if a > 0.0 {
                    let dt = (self.next_fire[r] - self.internal[r]) / a;
                    if dt < best {
                        best = dt;
                        mu = r;
                    }
                }
            }
            if mu == usize::MAX || t + best > t1 {
                let rest = t1 - t;
                for r in 0..nr {
                    self.internal[r] += self.rates[r] * rest;
                }
                obs.on_end(&self.internal);
                return Ok(jumps);
            }
            t += best;
            for r in 0..nr {
                self.internal[r] += self.rates[r] * best;
            }
            self.internal[mu] = self.next_fire[mu];
            let zeta = self.network.reactions()[mu].zeta();
            for (x, z) in self.state.iter_mut().zip(zeta) {
                *x += z;
            }
            self.next_fire[mu] += rng.sample::<f64, _>(Exp1);
            jumps += 1;
            if jumps > self.max_jumps {
                return Err(SimulationError::Explosion {
                    jumps,
                    time: t,
                    cap: self.max_jumps,
                });
            }
            for i in 0..self.affects[mu].len() {
                let r = self.affects[mu][i];
                self.evaluate(r)?;
            }
            obs.on_jump(t, mu, &self.state, &self.internal);
        }
    }
}
