//! The switching signal: Cox event times whose rate depends on the active
//! mode, and the discrete adapted mode sequence that feeds them.
//!
//! Between events the rate is constant, so sojourns are exponential with rate
//! `μ(current mode)` and no thinning is needed.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

const ROW_SUM_TOL: f64 = 1e-12;

/// Index of an element of the finite mode space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeId(pub usize);

impl ModeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for ModeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-mode event rates `μ(ξ)` with their declared upper bound `μ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMap {
    rates: Vec<f64>,
    mu0: f64,
}

impl RateMap {
    pub fn new(rates: Vec<f64>, mu0: f64) -> Result<Self> {
        if !(mu0.is_finite() && mu0 > 0.0) {
            return Err(Error::config("mu0", "must be a positive finite number"));
        }
        for (i, &r) in rates.iter().enumerate() {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::config(format!("rates[{i}]"), format!("rate {r} must be positive")));
            }
            if r > mu0 {
                return Err(Error::config(format!("rates[{i}]"), format!("rate {r} exceeds mu0 = {mu0}")));
            }
        }
        Ok(RateMap { rates, mu0 })
    }

    /// Same rate `μ` for `modes` modes, with `μ₀ = μ`.
    pub fn constant(mu: f64, modes: usize) -> Result<Self> {
        RateMap::new(vec![mu; modes], mu)
    }

    pub fn rate(&self, mode: ModeId) -> Result<f64> {
        self.rates
            .get(mode.0)
            .copied()
            .ok_or_else(|| Error::config("rates", format!("no rate given for mode {}", mode.0)))
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// Law of the discrete mode sequence `{ξᵏ}`.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchingFamily {
    /// Independent draws from a fixed distribution.
    IndependentIid { dist: Vec<f64> },
    /// Finite Markov chain with row-stochastic transition matrix.
    FiniteMarkov { transition: Vec<Vec<f64>> },
    /// Mode emitted by a hidden Markov chain. `initial_hidden` fixes the
    /// hidden state paired with the initial mode.
    HiddenMarkov {
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
        initial_hidden: usize,
    },
    /// Mode 0 while a ±1 random walk sits at its running maximum, mode 1
    /// otherwise. Not Markov in the mode alone.
    ReflectedMaxWalk,
    /// Explicit sequence, starting with the initial mode; the last entry is
    /// held once the list is exhausted.
    FixedSequence { modes: Vec<ModeId> },
}

/// Internal state carried between draws of the mode sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyState {
    /// IID and Markov families: the current mode is the whole state.
    Memoryless { mode: ModeId },
    Hidden { hidden: usize, mode: ModeId },
    /// Partial sum `S` and running maximum `Y` of the walk.
    Walk { sum: i64, max: i64 },
    Sequence { position: usize, mode: ModeId },
}

impl FamilyState {
    pub fn mode(&self) -> ModeId {
        match *self {
            FamilyState::Memoryless { mode } => mode,
            FamilyState::Hidden { mode, .. } => mode,
            FamilyState::Walk { sum, max } => ModeId(usize::from(max > sum)),
            FamilyState::Sequence { mode, .. } => mode,
        }
    }
}

/// Conditional law of the next mode given the current state.
#[derive(Debug, Clone, PartialEq)]
pub enum NextLaw {
    Exact(Vec<f64>),
    /// The law is not available in closed form; certificate code must use the
    /// conservative bound instead.
    Bound,
}

fn check_prob_row(row: &[f64], key: &str) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::config(key, "probabilities must be finite and non-negative"));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::config(key, format!("probabilities sum to {s}, expected 1")));
    }
    Ok(())
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum: take the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// One step of the reflected-maximum walk with increment `x ∈ {−1, +1}`.
pub fn walk_step(state: &mut FamilyState, x: i64) -> ModeId {
    if let FamilyState::Walk { sum, max } = state {
        *sum += x;
        *max = (*max).max(*sum);
    }
    state.mode()
}

impl SwitchingFamily {
    pub fn iid(dist: Vec<f64>) -> Result<Self> {
        let f = SwitchingFamily::IndependentIid { dist };
        f.validate()?;
        Ok(f)
    }

    pub fn markov(transition: Vec<Vec<f64>>) -> Result<Self> {
        let f = SwitchingFamily::FiniteMarkov { transition };
        f.validate()?;
        Ok(f)
    }

    pub fn hidden_markov(transition: Vec<Vec<f64>>, emission: Vec<Vec<f64>>, initial_hidden: usize) -> Result<Self> {
        let f = SwitchingFamily::HiddenMarkov {
            transition,
            emission,
            initial_hidden,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn fixed(modes: Vec<usize>) -> Result<Self> {
        let f = SwitchingFamily::FixedSequence {
            modes: modes.into_iter().map(ModeId).collect(),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SwitchingFamily::IndependentIid { dist } => {
                if dist.is_empty() {
                    return Err(Error::config("dist", "empty distribution"));
                }
                check_prob_row(dist, "dist")
            }
            SwitchingFamily::FiniteMarkov { transition } => {
                let k = transition.len();
                if k == 0 {
                    return Err(Error::config("transition", "empty transition matrix"));
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.len() != k {
                        return Err(Error::config(format!("transition[{i}]"), "transition matrix must be square"));
                    }
                    check_prob_row(row, &format!("transition[{i}]"))?;
                }
                Ok(())
            }
            SwitchingFamily::HiddenMarkov {
                transition,
                emission,
                initial_hidden,
            } => {
                let h = transition.len();
                if h == 0 {
                    return Err(Error::config("transition", "empty hidden chain"));
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.len() != h {
                        return Err(Error::config(format!("transition[{i}]"), "hidden transition matrix must be square"));
                    }
                    check_prob_row(row, &format!("transition[{i}]"))?;
                }
                if emission.len() != h {
                    return Err(Error::config("emission", "need one emission row per hidden state"));
                }
                let m = emission[0].len();
                if m == 0 {
                    return Err(Error::config("emission", "empty emission rows"));
                }
                for (i, row) in emission.iter().enumerate() {
                    if row.len() != m {
                        return Err(Error::config(format!("emission[{i}]"), "emission rows must have equal length"));
                    }
                    check_prob_row(row, &format!("emission[{i}]"))?;
                }
                if *initial_hidden >= h {
                    return Err(Error::config("initial_hidden", "hidden state out of range"));
                }
                Ok(())
            }
            SwitchingFamily::ReflectedMaxWalk => Ok(()),
            SwitchingFamily::FixedSequence { modes } => {
                if modes.is_empty() {
                    return Err(Error::config("modes", "fixed sequence must not be empty"));
                }
                Ok(())
            }
        }
    }

    /// Number of modes the family can emit.
    pub fn mode_count(&self) -> usize {
        match self {
            SwitchingFamily::IndependentIid { dist } => dist.len(),
            SwitchingFamily::FiniteMarkov { transition } => transition.len(),
            SwitchingFamily::HiddenMarkov { emission, .. } => emission[0].len(),
            SwitchingFamily::ReflectedMaxWalk => 2,
            SwitchingFamily::FixedSequence { modes } => modes.iter().map(|m| m.0 + 1).max().unwrap_or(0),
        }
    }

    /// State paired with `initial_mode` at step 0.
    ///
    /// The walk starts at `S = Y = 0` for mode 0 and at `S = −1, Y = 0` for
    /// mode 1.
    pub fn initial_state(&self, initial_mode: ModeId) -> Result<FamilyState> {
        if initial_mode.0 >= self.mode_count() {
            return Err(Error::config(
                "initial_mode",
                format!("mode {} outside the {} modes of the family", initial_mode.0, self.mode_count()),
            ));
        }
        match self {
            SwitchingFamily::IndependentIid { .. } | SwitchingFamily::FiniteMarkov { .. } => {
                Ok(FamilyState::Memoryless { mode: initial_mode })
            }
            SwitchingFamily::HiddenMarkov {
                emission,
                initial_hidden,
                ..
            } => {
                if emission[*initial_hidden][initial_mode.0] <= 0.0 {
                    return Err(Error::config(
                        "initial_mode",
                        "initial mode has zero emission probability under the initial hidden state",
                    ));
                }
                Ok(FamilyState::Hidden {
                    hidden: *initial_hidden,
                    mode: initial_mode,
                })
            }
            SwitchingFamily::ReflectedMaxWalk => Ok(if initial_mode.0 == 0 {
                FamilyState::Walk { sum: 0, max: 0 }
            } else {
                FamilyState::Walk { sum: -1, max: 0 }
            }),
            SwitchingFamily::FixedSequence { modes } => {
                if modes[0] != initial_mode {
                    return Err(Error::config("initial_mode", "fixed sequence must start with the initial mode"));
                }
                Ok(FamilyState::Sequence {
                    position: 0,
                    mode: initial_mode,
                })
            }
        }
    }

    /// Draw `ξᵏ⁺¹` and advance `state`.
    pub fn next_mode<R: Rng + ?Sized>(&self, state: &mut FamilyState, rng: &mut R) -> ModeId {
        match (self, &mut *state) {
            (SwitchingFamily::IndependentIid { dist }, FamilyState::Memoryless { mode }) => {
                *mode = ModeId(sample_categorical(dist, rng));
                *mode
            }
            (SwitchingFamily::FiniteMarkov { transition }, FamilyState::Memoryless { mode }) => {
                *mode = ModeId(sample_categorical(&transition[mode.0], rng));
                *mode
            }
            (SwitchingFamily::HiddenMarkov { transition, emission, .. }, FamilyState::Hidden { hidden, mode }) => {
                *hidden = sample_categorical(&transition[*hidden], rng);
                *mode = ModeId(sample_categorical(&emission[*hidden], rng));
                *mode
            }
            (SwitchingFamily::ReflectedMaxWalk, FamilyState::Walk { .. }) => {
                let x = if rng.random::<bool>() { 1 } else { -1 };
                walk_step(state, x)
            }
            (SwitchingFamily::FixedSequence { modes }, FamilyState::Sequence { position, mode }) => {
                *position += 1;
                *mode = modes[(*position).min(modes.len() - 1)];
                *mode
            }
            _ => panic!("family state does not match the switching family"),
        }
    }

    /// Conditional law of `ξᵏ⁺¹` given the current state.
    pub fn conditional_next_distribution(&self, state: &FamilyState) -> NextLaw {
        let k = self.mode_count();
        match (self, state) {
            (SwitchingFamily::IndependentIid { dist }, _) => NextLaw::Exact(dist.clone()),
            (SwitchingFamily::FiniteMarkov { transition }, FamilyState::Memoryless { mode }) => {
                NextLaw::Exact(transition[mode.0].clone())
            }
            (SwitchingFamily::HiddenMarkov { transition, emission, .. }, FamilyState::Hidden { hidden, .. }) => {
                let mut out = vec![0.0; k];
                for (succ, &t) in transition[*hidden].iter().enumerate() {
                    for (m, &e) in emission[succ].iter().enumerate() {
                        out[m] += t * e;
                    }
                }
                NextLaw::Exact(out)
            }
            (SwitchingFamily::ReflectedMaxWalk, s) => {
                if s.mode().0 == 0 {
                    NextLaw::Exact(vec![0.5, 0.5])
                } else {
                    NextLaw::Bound
                }
            }
            (SwitchingFamily::FixedSequence { modes }, FamilyState::Sequence { position, .. }) => {
                let next = modes[(position + 1).min(modes.len() - 1)];
                let mut out = vec![0.0; k];
                out[next.0] = 1.0;
                NextLaw::Exact(out)
            }
            _ => panic!("family state does not match the switching family"),
        }
    }

    /// Every state a mode can be reached in, up to what the conditional law
    /// depends on. Used to enumerate certificate cases per mode.
    pub fn representative_states(&self, mode: ModeId) -> Vec<FamilyState> {
        match self {
            SwitchingFamily::IndependentIid { .. } | SwitchingFamily::FiniteMarkov { .. } => {
                vec![FamilyState::Memoryless { mode }]
            }
            SwitchingFamily::HiddenMarkov { emission, .. } => emission
                .iter()
                .enumerate()
                .filter(|(_, row)| row.get(mode.0).copied().unwrap_or(0.0) > 0.0)
                .map(|(hidden, _)| FamilyState::Hidden { hidden, mode })
                .collect(),
            SwitchingFamily::ReflectedMaxWalk => match mode.0 {
                0 => vec![FamilyState::Walk { sum: 0, max: 0 }],
                1 => vec![FamilyState::Walk { sum: -1, max: 0 }],
                _ => vec![],
            },
            SwitchingFamily::FixedSequence { modes } => {
                let mut seen: Vec<ModeId> = Vec::new();
                let mut out = Vec::new();
                for (position, &m) in modes.iter().enumerate() {
                    if m != mode {
                        continue;
                    }
                    let next = modes[(position + 1).min(modes.len() - 1)];
                    if !seen.contains(&next) {
                        seen.push(next);
                        out.push(FamilyState::Sequence { position, mode });
                    }
                }
                out
            }
        }
    }
}

/// Realized switching signal: `r(t) = modes[k]` on `[t_k, t_{k+1})` with
/// `t_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingPath {
    pub jump_times: Vec<f64>,
    pub modes: Vec<ModeId>,
    /// Family state on each interval, parallel to `modes`.
    pub states: Vec<FamilyState>,
    pub horizon: f64,
}

impl SwitchingPath {
    /// Path that never leaves `mode`.
    pub fn constant(mode: ModeId, horizon: f64) -> Self {
        SwitchingPath {
            jump_times: Vec::new(),
            modes: vec![mode],
            states: vec![FamilyState::Memoryless { mode }],
            horizon,
        }
    }

    /// Build from explicit jumps; all state is treated as memoryless.
    pub fn from_jumps(jump_times: Vec<f64>, modes: Vec<ModeId>, horizon: f64) -> Result<Self> {
        if modes.len() != jump_times.len() + 1 {
            return Err(Error::Dimension("need exactly one more mode than jump times".into()));
        }
        let mut prev = 0.0;
        for &t in &jump_times {
            if !(t > prev && t <= horizon) {
                return Err(Error::Domain(format!("jump time {t} out of order or outside (0, {horizon}]")));
            }
            prev = t;
        }
        let states = modes.iter().map(|&mode| FamilyState::Memoryless { mode }).collect();
        Ok(SwitchingPath {
            jump_times,
            modes,
            states,
            horizon,
        })
    }

    /// Index of the inter-jump interval containing `t` (right-continuous).
    pub fn interval_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        Ok(self.jump_times.partition_point(|&tj| tj <= t))
    }

    pub fn mode_at(&self, t: f64) -> Result<ModeId> {
        Ok(self.modes[self.interval_at(t)?])
    }

    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    /// Text table `jump_time,new_mode`. The first data row is `0,<initial mode>`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("jump_time,new_mode\n");
        let _ = writeln!(out, "{:.16e},{}", 0.0, self.modes[0]);
        for (t, m) in self.jump_times.iter().zip(&self.modes[1..]) {
            let _ = writeln!(out, "{t:.16e},{m}");
        }
        out
    }
}

/// Sample a switching path on `[0, horizon]` from the seed's switching stream.
pub fn sample_path(
    family: &SwitchingFamily,
    rates: &RateMap,
    initial_mode: ModeId,
    horizon: f64,
    seed: u64,
) -> Result<SwitchingPath> {
    let mut rng = substream(seed, 0, Stream::Switching);
    sample_path_with(family, rates, initial_mode, horizon, &mut rng)
}

pub fn sample_path_with<R: Rng + ?Sized>(
    family: &SwitchingFamily,
    rates: &RateMap,
    initial_mode: ModeId,
    horizon: f64,
    rng: &mut R,
) -> Result<SwitchingPath> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon {horizon} must be finite and non-negative")));
    }
    if rates.len() < family.mode_count() {
        return Err(Error::config(
            "rates",
            format!("{} rates given for {} modes", rates.len(), family.mode_count()),
        ));
    }
    let samplers = rates
        .rates()
        .iter()
        .map(|&r| Exp::new(r).map_err(|e| Error::config("rates", e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let mut state = family.initial_state(initial_mode)?;
    let mut path = SwitchingPath {
        jump_times: Vec::new(),
        modes: vec![initial_mode],
        states: vec![state],
        horizon,
    };
    let mut t = 0.0;
    loop {
        let current = state.mode();
        t += samplers[current.0].sample(rng);
        if t > horizon {
            break;
        }
        let next = family.next_mode(&mut state, rng);
        path.jump_times.push(t);
        path.modes.push(next);
        path.states.push(state);
    }
    Ok(path)
}
