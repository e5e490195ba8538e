//! Exact CTMC simulation with recorded paths and conditional branching.

mod mnrm;
mod rng;

use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::model::{ReactionNetwork, State};
pub(crate) use mnrm::Discard;
use mnrm::Observer;
pub use mnrm::{Simulator, DEFAULT_MAX_JUMPS};
pub use rng::{Domain, FamilyStream, SeedSpec, StreamRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("jump cap of {cap} exceeded at time {time} (the model may be explosive)")]
    Explosion { jumps: u64, time: f64, cap: u64 },
    #[error("reaction {reaction} has invalid intensity {value} in state {state:?}")]
    InvalidIntensity {
        reaction: usize,
        value: f64,
        state: State,
    },
    #[error("invalid time window [{t0}, {t1}]")]
    BadWindow { t0: f64, t1: f64 },
    #[error("invalid start state {0:?}")]
    BadState(State),
    #[error("time {s} outside path range [{t0}, {t1}]")]
    OutOfRange { s: f64, t0: f64, t1: f64 },
    #[error("branch window h = {h} outside [0, {t}]")]
    BadBranchWindow { h: f64, t: f64 },
}

/// End state of an unrecorded simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndPoint {
    pub state: State,
    pub jumps: u64,
}

/// One recorded trajectory on `[t0, t1]`.
///
/// Segment `k` is the interval between boundary `k` and `k + 1`, where the
/// boundaries are `t0`, the jump times, and `t1`. The per-reaction integrated
/// intensity is stored at every boundary, so any window integral is two
/// binary searches away.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    t0: f64,
    t1: f64,
    num_species: usize,
    num_reactions: usize,
    jump_times: Vec<f64>,
    reaction_ids: Vec<u32>,
    // (jumps + 1) states, flattened
    states: Vec<i64>,
    // (jumps + 2) rows of per-reaction cumulative integrals, flattened
    cumulative: Vec<f64>,
}

struct PathRecorder {
    path: Path,
}

impl Observer for PathRecorder {
    fn on_jump(&mut self, time: f64, reaction: usize, state: &[i64], internal: &[f64]) {
        let p = &mut self.path;
        p.jump_times.push(time);
        p.reaction_ids.push(reaction as u32);
        p.states.extend_from_slice(state);
        p.cumulative.extend_from_slice(internal);
    }

    fn on_end(&mut self, internal: &[f64]) {
        self.path.cumulative.extend_from_slice(internal);
    }
}

impl Path {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn num_jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn reaction_ids(&self) -> &[u32] {
        &self.reaction_ids
    }

    /// State after jump `j` (`j = 0` is the initial state).
    pub fn state(&self, j: usize) -> &[i64] {
        &self.states[j * self.num_species..(j + 1) * self.num_species]
    }

    pub fn initial_state(&self) -> &[i64] {
        self.state(0)
    }

    pub fn final_state(&self) -> &[i64] {
        self.state(self.num_jumps())
    }

    /// Intensity of reaction `r` on segment `k`, recomputed from the stored state.
    pub fn segment_intensity(&self, network: &ReactionNetwork, k: usize, r: usize) -> f64 {
        network.intensity(r, self.state(k))
    }

    fn boundary(&self, k: usize) -> f64 {
        if k == 0 {
            self.t0
        } else if k <= self.jump_times.len() {
            self.jump_times[k - 1]
        } else {
            self.t1
        }
    }

    fn check(&self, s: f64) -> Result<(), SimulationError> {
        if s >= self.t0 && s <= self.t1 {
            Ok(())
        } else {
            Err(SimulationError::OutOfRange {
                s,
                t0: self.t0,
                t1: self.t1,
            })
        }
    }

    /// Index of the segment containing `s` (right-continuous).
    fn segment_of(&self, s: f64) -> usize {
        self.jump_times.partition_point(|&tj| tj <= s)
    }

    /// The state on the constant segment containing `s`.
    pub fn state_at(&self, s: f64) -> Result<&[i64], SimulationError> {
        self.check(s)?;
        Ok(self.state(self.segment_of(s)))
    }

    fn cumulative_row(&self, k: usize) -> &[f64] {
        &self.cumulative[k * self.num_reactions..(k + 1) * self.num_reactions]
    }

    /// Integral of lambda_r from t0 to s.
    fn cumulative_at(&self, r: usize, s: f64) -> f64 {
        let k = self.segment_of(s);
        let lo = self.boundary(k);
        let hi = self.boundary(k + 1);
        let c0 = self.cumulative_row(k)[r];
        if s <= lo || hi <= lo {
            return c0;
        }
        let c1 = self.cumulative_row(k + 1)[r];
        if s >= hi {
            return c1;
        }
        c0 + (c1 - c0) * ((s - lo) / (hi - lo))
    }

    /// Lambda_r over `[a, b]`.
    pub fn intensity_integral(&self, r: usize, a: f64, b: f64) -> Result<f64, SimulationError> {
        self.check(a)?;
        self.check(b)?;
        if a > b {
            return Err(SimulationError::BadWindow { t0: a, t1: b });
        }
        if a == b {
            return Ok(0.0);
        }
        Ok(self.cumulative_at(r, b) - self.cumulative_at(r, a))
    }

    /// Lambda_0 over `[a, b]`, the sum over reactions.
    pub fn total_intensity_integral(&self, a: f64, b: f64) -> Result<f64, SimulationError> {
        let mut sum = 0.0;
        for r in 0..self.num_reactions {
            sum += self.intensity_integral(r, a, b)?;
        }
        Ok(sum)
    }

    /// Number of jumps in `(a, b]`.
    pub fn jumps_in(&self, a: f64, b: f64) -> usize {
        self.segment_of(b) - self.segment_of(a)
    }

    /// Writes `time,reaction_id,x_1..x_d`; the first row is the initial state
    /// with reaction id -1.
    pub fn write_csv<W: Write>(&self, mut w: W, species: &[String]) -> io::Result<()> {
        write!(w, "time,reaction_id")?;
        for s in species {
            write!(w, ",{s}")?;
        }
        writeln!(w)?;
        for j in 0..=self.num_jumps() {
            let (time, id) = if j == 0 {
                (self.t0, -1i64)
            } else {
                (self.jump_times[j - 1], i64::from(self.reaction_ids[j - 1]))
            };
            write!(w, "{time},{id}")?;
            for v in self.state(j) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Builds a path directly from its parts, for tests and tooling.
    /// `cumulative` holds `jumps + 2` rows of per-reaction integrals.
    pub fn from_parts(
        t0: f64,
        t1: f64,
        states: Vec<State>,
        jump_times: Vec<f64>,
        reaction_ids: Vec<u32>,
        cumulative: Vec<Vec<f64>>,
    ) -> Self {
        assert_eq!(states.len(), jump_times.len() + 1);
        assert_eq!(cumulative.len(), jump_times.len() + 2);
        let num_species = states[0].len();
        let num_reactions = cumulative[0].len();
        Self {
            t0,
            t1,
            num_species,
            num_reactions,
            jump_times,
            reaction_ids,
            states: states.concat(),
            cumulative: cumulative.concat(),
        }
    }
}

impl Simulator<'_> {
    /// Records a full path on `[t0, t1]` from `x0`.
    pub fn simulate_path<R: Rng + ?Sized>(
        &mut self,
        x0: &[i64],
        t0: f64,
        t1: f64,
        rng: &mut R,
    ) -> Result<Path, SimulationError> {
        let nr = self.network().num_reactions();
        let mut rec = PathRecorder {
            path: Path {
                t0,
                t1,
                num_species: x0.len(),
                num_reactions: nr,
                jump_times: Vec::new(),
                reaction_ids: Vec::new(),
                states: x0.to_vec(),
                cumulative: vec![0.0; nr],
            },
        };
        self.run(x0, t0, t1, rng, &mut rec)?;
        Ok(rec.path)
    }

    /// Simulates on `[t0, t1]` keeping only the end state and jump count.
    pub fn simulate_to<R: Rng + ?Sized>(
        &mut self,
        x0: &[i64],
        t0: f64,
        t1: f64,
        rng: &mut R,
    ) -> Result<EndPoint, SimulationError> {
        let jumps = self.run(x0, t0, t1, rng, &mut Discard)?;
        Ok(EndPoint {
            state: self.state().to_vec(),
            jumps,
        })
    }

    /// `m` conditionally independent continuations of `y` over `[t - h, t]`,
    /// branch `j` driven by `stream.branch(j)`. Returns the end states and the
    /// total number of jumps.
    pub fn branch_from(
        &mut self,
        y: &[i64],
        t: f64,
        h: f64,
        m: u32,
        stream: &FamilyStream,
    ) -> Result<(Vec<State>, u64), SimulationError> {
        if !(0.0..=t).contains(&h) {
            return Err(SimulationError::BadBranchWindow { h, t });
        }
        let mut out = Vec::with_capacity(m as usize);
        let mut jumps = 0;
        for j in 1..=u64::from(m) {
            if h == 0.0 {
                out.push(y.to_vec());
                continue;
            }
            let mut rng = stream.branch(j);
            let end = self.simulate_to(y, t - h, t, &mut rng)?;
            jumps += end.jumps;
            out.push(end.state);
        }
        Ok((out, jumps))
    }
}

/// Convenience wrapper: one recorded path with a fresh simulator.
pub fn simulate_path<R: Rng + ?Sized>(
    network: &ReactionNetwork,
    x0: &[i64],
    t0: f64,
    t1: f64,
    rng: &mut R,
) -> Result<Path, SimulationError> {
    Simulator::new(network).simulate_path(x0, t0, t1, rng)
}

/// The `m` branch end states `X_ij(t)` of a path recorded on `[0, t]`, each
/// restarted at `path.state_at(t - h)`.
pub fn branch(
    network: &ReactionNetwork,
    path: &Path,
    h: f64,
    m: u32,
    stream: &FamilyStream,
) -> Result<Vec<State>, SimulationError> {
    let t = path.t1();
    if !(0.0..=t - path.t0()).contains(&h) {
        return Err(SimulationError::BadBranchWindow { h, t });
    }
    let y = path.state_at(t - h)?.to_vec();
    Ok(Simulator::new(network).branch_from(&y, t, h, m, stream)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, parse_model};

    fn seed() -> SeedSpec {
        SeedSpec::new(2024)
    }

    #[test]
    fn absorbing_state_has_no_jumps() {
        let net = builtin("birth").unwrap();
        let mut rng = seed().stream(Domain::Auxiliary, 0, 0);
        let p = simulate_path(&net, &[0], 0.0, 2.0, &mut rng).unwrap();
        assert_eq!(p.num_jumps(), 0);
        assert_eq!(p.final_state(), &[0]);
        assert_eq!(p.total_intensity_integral(0.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_length_window() {
        let net = builtin("birth-death").unwrap();
        let mut rng = seed().stream(Domain::Auxiliary, 0, 0);
        let p = simulate_path(&net, &[5], 1.0, 1.0, &mut rng).unwrap();
        assert_eq!(p.num_jumps(), 0);
        assert_eq!(p.state_at(1.0).unwrap(), &[5]);
    }

    #[test]
    fn path_invariants() {
        let net = builtin("lotka-volterra").unwrap();
        let mut rng = seed().stream(Domain::Auxiliary, 1, 0);
        let p = simulate_path(&net, net.initial_state(), 0.0, 1.0, &mut rng).unwrap();
        assert!(p.num_jumps() > 100);
        let times = p.jump_times();
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert!(times.iter().all(|&t| t > 0.0 && t <= 1.0));
        let mut x = net.initial_state().to_vec();
        for j in 0..p.num_jumps() {
            let z = net.reactions()[p.reaction_ids()[j] as usize].zeta();
            for (xi, zi) in x.iter_mut().zip(z) {
                *xi += zi;
            }
            assert_eq!(p.state(j + 1), &x[..]);
            assert!(x.iter().all(|&v| v >= 0));
        }
        // stored segment integrals match intensity * width
        for k in 0..=p.num_jumps() {
            let lo = p.boundary(k);
            let hi = p.boundary(k + 1);
            for r in 0..net.num_reactions() {
                let want = p.segment_intensity(&net, k, r) * (hi - lo);
                let got = p.intensity_integral(r, lo, hi).unwrap();
                assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn state_lookup_is_right_continuous() {
        let net = builtin("birth-death").unwrap();
        let mut rng = seed().stream(Domain::Auxiliary, 2, 0);
        let p = simulate_path(&net, &[100], 0.0, 2.0, &mut rng).unwrap();
        assert_eq!(p.state_at(0.0).unwrap(), p.initial_state());
        assert_eq!(p.state_at(2.0).unwrap(), p.final_state());
        let t3 = p.jump_times()[3];
        let t4 = p.jump_times()[4];
        assert_eq!(p.state_at(t3).unwrap(), p.state(4));
        assert_eq!(p.state_at(0.5 * (t3 + t4)).unwrap(), p.state(4));
        assert!(p.state_at(-0.1).is_err());
        assert!(p.state_at(2.1).is_err());
    }

    #[test]
    fn hand_built_integrals() {
        // lambda = 3 on [0, 1), 5 on [1, 2]
        let p = Path::from_parts(
            0.0,
            2.0,
            vec![vec![3], vec![5]],
            vec![1.0],
            vec![0],
            vec![vec![0.0], vec![3.0], vec![8.0]],
        );
        assert_eq!(p.intensity_integral(0, 0.0, 2.0).unwrap(), 8.0);
        assert_eq!(p.intensity_integral(0, 0.7, 0.7).unwrap(), 0.0);
        assert!((p.intensity_integral(0, 0.5, 1.5).unwrap() - 4.0).abs() < 1e-15);
        assert!(p.intensity_integral(0, 1.5, 0.5).is_err());
        assert!(p.intensity_integral(0, 0.0, 2.5).is_err());
    }

    #[test]
    fn constant_rate_integral() {
        let net = builtin("birth-death").unwrap();
        let mut rng = seed().stream(Domain::Auxiliary, 3, 0);
        let p = simulate_path(&net, &[100], 0.0, 2.0, &mut rng).unwrap();
        let v = p.intensity_integral(0, 0.0, 2.0).unwrap();
        assert!((v - 100.0).abs() < 1e-9);
    }

    #[test]
    fn integrals_are_additive() {
        let net = builtin("toggle").unwrap();
        let mut rng = seed().stream(Domain::Auxiliary, 4, 0);
        let p = simulate_path(&net, &[0, 0], 0.0, 10.0, &mut rng).unwrap();
        for (a, b, c) in [(0.0, 3.3, 10.0), (1.25, 1.26, 7.0), (2.0, 5.0, 5.0)] {
            for r in 0..4 {
                let whole = p.intensity_integral(r, a, c).unwrap();
                let split = p.intensity_integral(r, a, b).unwrap() + p.intensity_integral(r, b, c).unwrap();
                assert!((whole - split).abs() <= 1e-12 * (1.0 + whole), "{whole} {split}");
            }
            let total = p.total_intensity_integral(a, c).unwrap();
            let sum: f64 = (0..4).map(|r| p.intensity_integral(r, a, c).unwrap()).sum();
            assert!((total - sum).abs() <= 1e-12 * (1.0 + total));
        }
    }

    #[test]
    fn explosion_cap_is_an_error() {
        let net = builtin("birth").unwrap();
        let mut sim = Simulator::new(&net).with_max_jumps(50);
        let mut rng = seed().stream(Domain::Auxiliary, 5, 0);
        let err = sim.simulate_to(&[10], 0.0, 2.0, &mut rng).unwrap_err();
        assert!(matches!(err, SimulationError::Explosion { cap: 50, .. }));
    }

    #[test]
    fn invalid_expression_intensity_is_reported() {
        let net = parse_model("species: A\ninit: A=1\nt: 1\n0 -> A @ expr(1/(A-1))\n").unwrap();
        let mut rng = seed().stream(Domain::Auxiliary, 6, 0);
        let err = Simulator::new(&net).simulate_to(&[1], 0.0, 1.0, &mut rng).unwrap_err();
        assert!(matches!(err, SimulationError::InvalidIntensity { reaction: 0, .. }));
    }

    #[test]
    fn yule_mean_matches_exponential_growth() {
        let net = builtin("birth").unwrap();
        let mut sim = Simulator::new(&net);
        let n = 10_000;
        let finals: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = seed().stream(Domain::Auxiliary, 100 + i, 0);
                sim.simulate_to(&[10], 0.0, 2.0, &mut rng).unwrap().state[0] as f64
            })
            .collect();
        let mean = finals.iter().sum::<f64>() / n as f64;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        let exact = 10.0 * 2f64.exp();
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean}, exact {exact}, se {se}");
    }

    #[test]
    fn zero_window_branches_copy_the_state() {
        let net = builtin("birth-death").unwrap();
        let mut rng = seed().stream(Domain::Auxiliary, 7, 0);
        let p = simulate_path(&net, &[100], 0.0, 2.0, &mut rng).unwrap();
        let stream = FamilyStream::new(seed(), Domain::Auxiliary, 7);
        let ends = branch(&net, &p, 0.0, 5, &stream).unwrap();
        assert_eq!(ends.len(), 5);
        assert!(ends.iter().all(|e| e == p.final_state()));
        assert!(branch(&net, &p, 2.5, 5, &stream).is_err());
    }

    #[test]
    fn yule_branch_means() {
        // E[X(t) | X(t-h) = y] = y e^h
        let net = builtin("birth").unwrap();
        let mut rng = seed().stream(Domain::Auxiliary, 8, 0);
        let p = simulate_path(&net, &[10], 0.0, 2.0, &mut rng).unwrap();
        let h = 0.5;
        let y = p.state_at(2.0 - h).unwrap()[0] as f64;
        let m = 4000;
        let stream = FamilyStream::new(seed(), Domain::Auxiliary, 8);
        let ends = branch(&net, &p, h, m, &stream).unwrap();
        let xs: Vec<f64> = ends.iter().map(|e| e[0] as f64).collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        let se = (var / m as f64).sqrt();
        let exact = y * h.exp();
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean}, exact {exact}, se {se}");
    }

    #[test]
    fn csv_dump() {
        let net = builtin("birth-death").unwrap();
        let mut rng = seed().stream(Domain::Auxiliary, 9, 0);
        let p = simulate_path(&net, &[3], 0.0, 0.05, &mut rng).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf, net.species()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time,reaction_id,X"));
        assert_eq!(lines.next(), Some("0,-1,3"));
        assert_eq!(text.lines().count(), p.num_jumps() + 2);
    }

    #[test]
    fn reproducible_given_stream() {
        let net = builtin("dimerization").unwrap();
        let a = simulate_path(&net, net.initial_state(), 0.0, 0.3, &mut seed().stream(Domain::Pilot, 1, 0)).unwrap();
        let b = simulate_path(&net, net.initial_state(), 0.0, 0.3, &mut seed().stream(Domain::Pilot, 1, 0)).unwrap();
        assert_eq!(a, b);
    }
}
