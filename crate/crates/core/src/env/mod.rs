//! Toy MDPs: a continuous 2-D pushing task with a sparse 0/1 reward and a
//! discrete chain with -1 per step, plus the observer-domain wrapper (an
//! invertible affine state map with optional permutation).
//!
//! Environments are value types: `step` is a pure function of
//! (env config, state, action), so many instances can run in parallel with
//! independent rng streams.

use crate::error::{Result, RlvError};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Continuous(Vec<f64>),
    Discrete(usize),
}

impl Action {
    /// Network-facing encoding: continuous actions as-is, discrete as one-hot.
    pub fn to_vec(&self, act_dim: usize) -> Vec<f64> {
        match self {
            Action::Continuous(a) => a.clone(),
            Action::Discrete(i) => {
                let mut v = vec![0.0; act_dim];
                v[*i] = 1.0;
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    /// Components in [-1, 1].
    Continuous { dim: usize },
    Discrete { n: usize },
}

impl ActionSpace {
    /// Width of the network-facing action vector (one-hot for discrete).
    pub fn vec_dim(&self) -> usize {
        match self {
            ActionSpace::Continuous { dim } => *dim,
            ActionSpace::Discrete { n } => *n,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete { .. })
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Action {
        match self {
            ActionSpace::Continuous { dim } => {
                Action::Continuous((0..*dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            }
            ActionSpace::Discrete { n } => Action::Discrete(rng.gen_range(0..*n)),
        }
    }
}

/// Environment state: the observation vector plus the step counter used for
/// horizon termination.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub obs: Vec<f64>,
    pub t: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: State,
    pub reward: f64,
    pub done: bool,
}

/// Axis-aligned start region in [0,1]^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2 {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Box2 {
    pub fn point(p: [f64; 2]) -> Self {
        Self { min: p, max: p }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] = if self.min[i] == self.max[i] {
                self.min[i]
            } else {
                rng.gen_range(self.min[i]..=self.max[i])
            };
        }
        out
    }
}

/// Hand pushes a puck on the unit square. The hand moves by `action * 0.05`;
/// if the pre-move hand-puck distance is inside the contact radius the puck
/// is carried by the same vector. Reward is 1 exactly when the puck is within
/// the success radius of the goal, and success ends the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPusher {
    pub goal: [f64; 2],
    pub hand_start: Box2,
    pub puck_start: Box2,
    pub contact_radius: f64,
    pub action_scale: f64,
    pub success_radius: f64,
    pub horizon: u32,
}

impl Default for PointPusher {
    fn default() -> Self {
        Self {
            goal: [0.75, 0.5],
            hand_start: Box2 {
                min: [0.35, 0.35],
                max: [0.55, 0.65],
            },
            puck_start: Box2 {
                min: [0.55, 0.4],
                max: [0.7, 0.6],
            },
            contact_radius: 0.06,
            action_scale: 0.05,
            success_radius: 0.03,
            horizon: 100,
        }
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

impl PointPusher {
    fn reset<R: Rng>(&self, rng: &mut R) -> State {
        let hand = self.hand_start.sample(rng);
        let puck = self.puck_start.sample(rng);
        State {
            obs: vec![hand[0], hand[1], puck[0], puck[1]],
            t: 0,
        }
    }

    fn step(&self, state: &State, action: &Action) -> Result<StepOutcome> {
        let a = match action {
            Action::Continuous(a) if a.len() == 2 => a,
            other => {
                return Err(RlvError::InvalidAction(format!(
                    "PointPusher wants 2 continuous components, got {other:?}"
                )))
            }
        };
        if a.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(RlvError::InvalidAction(format!(
                "continuous action components must lie in [-1, 1], got {a:?}"
            )));
        }
        let hand = [state.obs[0], state.obs[1]];
        let puck = [state.obs[2], state.obs[3]];
        let delta = [a[0] * self.action_scale, a[1] * self.action_scale];
        let contact = dist2(hand, puck) < self.contact_radius;
        let new_hand = [clamp01(hand[0] + delta[0]), clamp01(hand[1] + delta[1])];
        let new_puck = if contact {
            [clamp01(puck[0] + delta[0]), clamp01(puck[1] + delta[1])]
        } else {
            puck
        };
        let success = dist2(new_puck, self.goal) < self.success_radius;
        let t = state.t + 1;
        Ok(StepOutcome {
            next: State {
                obs: vec![new_hand[0], new_hand[1], new_puck[0], new_puck[1]],
                t,
            },
            reward: if success { 1.0 } else { 0.0 },
            done: success || t >= self.horizon,
        })
    }
}

/// Discrete chain of N cells. Actions {left, stay, right}; every step costs
/// -1 except the transition that reaches the goal cell, which pays 0 and ends
/// the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEnv {
    pub n_cells: usize,
    pub horizon: u32,
}

impl Default for ChainEnv {
    fn default() -> Self {
        Self {
            n_cells: 20,
            horizon: 200,
        }
    }
}

impl ChainEnv {
    fn goal(&self) -> usize {
        self.n_cells - 1
    }

    fn one_hot(&self, pos: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_cells];
        v[pos] = 1.0;
        v
    }

    pub fn position(&self, obs: &[f64]) -> usize {
        obs.iter().position(|&v| v == 1.0).expect("one-hot state")
    }

    fn reset(&self) -> State {
        State {
            obs: self.one_hot(0),
            t: 0,
        }
    }

    fn step(&self, state: &State, action: &Action) -> Result<StepOutcome> {
        let a = match action {
            Action::Discrete(a) if *a < 3 => *a,
            other => {
                return Err(RlvError::InvalidAction(format!(
                    "ChainEnv wants a discrete action in {{0,1,2}}, got {other:?}"
                )))
            }
        };
        let pos = self.position(&state.obs);
        let next_pos = (pos as i64 + a as i64 - 1).clamp(0, self.goal() as i64) as usize;
        let reached = next_pos == self.goal();
        let t = state.t + 1;
        Ok(StepOutcome {
            next: State {
                obs: self.one_hot(next_pos),
                t,
            },
            reward: if reached { 0.0 } else { -1.0 },
            done: reached || t >= self.horizon,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Env {
    Pusher(PointPusher),
    Chain(ChainEnv),
}

impl Env {
    pub fn obs_dim(&self) -> usize {
        match self {
            Env::Pusher(_) => 4,
            Env::Chain(c) => c.n_cells,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            Env::Pusher(_) => ActionSpace::Continuous { dim: 2 },
            Env::Chain(_) => ActionSpace::Discrete { n: 3 },
        }
    }

    pub fn horizon(&self) -> u32 {
        match self {
            Env::Pusher(p) => p.horizon,
            Env::Chain(c) => c.horizon,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Env::Pusher(_) => "point_pusher",
            Env::Chain(_) => "chain",
        }
    }

    pub fn reset<R: Rng>(&self, rng: &mut R) -> State {
        match self {
            Env::Pusher(p) => p.reset(rng),
            Env::Chain(c) => c.reset(),
        }
    }

    pub fn step(&self, state: &State, action: &Action) -> Result<StepOutcome> {
        match self {
            Env::Pusher(p) => p.step(state, action),
            Env::Chain(c) => c.step(state, action),
        }
    }

    /// Success indicator for evaluation: the sparse goal event.
    pub fn is_success(&self, reward: f64) -> bool {
        match self {
            Env::Pusher(_) => reward == 1.0,
            Env::Chain(_) => reward == 0.0,
        }
    }
}

/// The invertible state map between the interaction and observer domains:
/// an optional dimension permutation followed by a per-dimension scale and
/// offset. The action map is recorded for completeness but never applied;
/// observer actions are discarded before the learner sees them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismSpec {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
    #[serde(default)]
    pub perm: Option<Vec<usize>>,
    /// Unused by the method; kept so the full isomorphism is on record.
    #[serde(default)]
    pub action_scale: Option<Vec<f64>>,
}

impl IsomorphismSpec {
    pub fn identity(dim: usize) -> Self {
        Self {
            scale: vec![1.0; dim],
            offset: vec![0.0; dim],
            perm: None,
            action_scale: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.len() != self.offset.len() {
            return Err(RlvError::Config(
                "isomorphism scale and offset lengths differ".into(),
            ));
        }
        if self.scale.iter().any(|s| s.abs() < 0.1) {
            return Err(RlvError::Config(
                "isomorphism scale entries must satisfy |s| >= 0.1".into(),
            ));
        }
        if let Some(p) = &self.perm {
            let mut seen = vec![false; self.scale.len()];
            if p.len() != self.scale.len() || p.iter().any(|&i| i >= seen.len()) {
                return Err(RlvError::Config("bad permutation".into()));
            }
            for &i in p {
                if seen[i] {
                    return Err(RlvError::Config("bad permutation".into()));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Map an interaction-domain state into the observer domain.
    pub fn observe(&self, state: &[f64]) -> Vec<f64> {
        let d = self.dim();
        debug_assert_eq!(state.len(), d);
        (0..d)
            .map(|i| {
                let src = self.perm.as_ref().map_or(i, |p| p[i]);
                self.scale[i] * state[src] + self.offset[i]
            })
            .collect()
    }

    /// Inverse of `observe`: recover the interaction-domain state.
    pub fn invert(&self, observed: &[f64]) -> Vec<f64> {
        let d = self.dim();
        debug_assert_eq!(observed.len(), d);
        let mut out = vec![0.0; d];
        for i in 0..d {
            let dst = self.perm.as_ref().map_or(i, |p| p[i]);
            out[dst] = (observed[i] - self.offset[i]) / self.scale[i];
        }
        out
    }
}
