//! Soft actor-critic with twin Q networks and auto-tuned entropy temperature,
//! for continuous (tanh-Gaussian) and discrete (categorical) action spaces.
//! Operates on feature vectors `h`; every update also reports the gradient of
//! the RL losses with respect to `h` so a shared encoder can be trained
//! through the joint objective.

use crate::data::{ReplayPool, Transition};
use crate::env::{Action, ActionSpace};
use crate::error::{Result, RlvError};
use crate::nn::{
    forward_batch, soft_update, Adam, Mlp, MlpParams, MlpSpec, OutputActivation, ScalarAdam,
};
use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.8378770664093453;
// Guard inside the tanh log-density correction.
const TANH_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub initial_exploration_steps: u32,
    pub grad_steps_per_env_step: u32,
    /// Hidden widths shared by the policy and Q networks.
    pub hidden: Vec<usize>,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Overrides the per-space default convention when set.
    pub target_entropy: Option<f64>,
    /// When false, alpha stays at `init_alpha`.
    pub auto_alpha: bool,
    pub init_alpha: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            lr: 3e-4,
            batch_size: 256,
            initial_exploration_steps: 1000,
            grad_steps_per_env_step: 1,
            hidden: vec![256, 256],
            log_std_min: -20.0,
            log_std_max: 2.0,
            target_entropy: None,
            auto_alpha: true,
            init_alpha: 1.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(RlvError::Config("gamma must lie in (0,1)".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(RlvError::Config("tau must lie in (0,1]".into()));
        }
        Ok(())
    }

    pub fn resolved_target_entropy(&self, space: ActionSpace) -> f64 {
        self.target_entropy.unwrap_or(match space {
            ActionSpace::Continuous { dim } => -(dim as f64),
            // Scaled maximum-entropy convention for categorical policies.
            ActionSpace::Discrete { n } => 0.98 * (n as f64).ln(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SelectMode {
    Stochastic,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacLosses {
    pub q1: f64,
    pub q2: f64,
    pub policy: f64,
    pub alpha: f64,
}

/// Policy, twin Q, target twin Q, temperature, and their optimizers.
#[derive(Debug, Clone)]
pub struct SacNets {
    pub space: ActionSpace,
    pub feat_dim: usize,
    pub policy: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub target_q1: MlpParams,
    pub target_q2: MlpParams,
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub opt_policy: Adam,
    pub opt_q1: Adam,
    pub opt_q2: Adam,
    pub opt_alpha: ScalarAdam,
    pub auto_alpha: bool,
}

impl SacNets {
    pub fn new<R: Rng>(
        feat_dim: usize,
        space: ActionSpace,
        cfg: &SacConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let (policy_out, q_in, q_out) = match space {
            ActionSpace::Continuous { dim } => (2 * dim, feat_dim + dim, 1),
            ActionSpace::Discrete { n } => (n, feat_dim, n),
        };
        let policy_spec =
            MlpSpec::with_hidden(feat_dim, &cfg.hidden, policy_out, OutputActivation::Linear)?;
        let q_spec = MlpSpec::with_hidden(q_in, &cfg.hidden, q_out, OutputActivation::Linear)?;
        let policy = Mlp::init(policy_spec, rng);
        let q1 = Mlp::init(q_spec.clone(), rng);
        let q2 = Mlp::init(q_spec.clone(), rng);
        let target_q1 = q1.params.clone();
        let target_q2 = q2.params.clone();
        Ok(Self {
            space,
            feat_dim,
            opt_policy: Adam::new(&policy.spec, cfg.lr),
            opt_q1: Adam::new(&q_spec, cfg.lr),
            opt_q2: Adam::new(&q_spec, cfg.lr),
            opt_alpha: ScalarAdam::new(cfg.lr),
            policy,
            q1,
            q2,
            target_q1,
            target_q2,
            log_alpha: cfg.init_alpha.ln(),
            target_entropy: cfg.resolved_target_entropy(space),
            auto_alpha: cfg.auto_alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

/// One merged training batch in feature space. Actions are one-hot for
/// discrete spaces.
#[derive(Debug, Clone)]
pub struct FeatureBatch {
    pub h: Array2<f64>,
    pub a: Array2<f64>,
    pub h_next: Array2<f64>,
    pub r: Array1<f64>,
    pub terminal: Vec<bool>,
}

impl FeatureBatch {
    pub fn from_transitions(transitions: &[&Transition]) -> Self {
        let b = transitions.len();
        let d = transitions.first().map_or(0, |t| t.s.len());
        let k = transitions.first().map_or(0, |t| t.a.len());
        let mut h = Array2::zeros((b, d));
        let mut a = Array2::zeros((b, k));
        let mut h_next = Array2::zeros((b, d));
        let mut r = Array1::zeros(b);
        let mut terminal = Vec::with_capacity(b);
        for (i, t) in transitions.iter().enumerate() {
            for (j, &v) in t.s.iter().enumerate() {
                h[[i, j]] = v;
            }
            for (j, &v) in t.a.iter().enumerate() {
                a[[i, j]] = v;
            }
            for (j, &v) in t.s_next.iter().enumerate() {
                h_next[[i, j]] = v;
            }
            r[i] = t.r;
            terminal.push(t.terminal);
        }
        Self {
            h,
            a,
            h_next,
            r,
            terminal,
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Pre-drawn Gaussian noise so the loss surface is a pure function of
/// (nets, batch, noise); only the continuous variant consumes any.
pub(crate) struct UpdateNoise {
    pub target_eps: Option<Array2<f64>>,
    pub policy_eps: Option<Array2<f64>>,
}

pub(crate) fn draw_noise<R: Rng>(space: ActionSpace, batch: usize, rng: &mut R) -> UpdateNoise {
    match space {
        ActionSpace::Continuous { dim } => {
            let mut draw = || {
                let mut e = Array2::zeros((batch, dim));
                for v in e.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                e
            };
            // Target noise first, policy noise second; the order is part of
            // the reproducibility contract.
            let target = draw();
            let policy = draw();
            UpdateNoise {
                target_eps: Some(target),
                policy_eps: Some(policy),
            }
        }
        ActionSpace::Discrete { .. } => UpdateNoise {
            target_eps: None,
            policy_eps: None,
        },
    }
}

pub(crate) struct UpdateOutcome {
    pub losses: SacLosses,
    pub grad_policy: MlpParams,
    pub grad_q1: MlpParams,
    pub grad_q2: MlpParams,
    pub grad_log_alpha: f64,
    /// d(loss_q1 + loss_q2)/dh for the encoder: the critic component only.
    /// The actor loss is detached from the features — letting the policy
    /// objective move the representation lets the encoder inflate Q instead
    /// of improving the policy, the usual failure of shared-encoder SAC.
    pub dh: Array2<f64>,
}

fn hcat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(s![.., ..a.ncols()]).assign(a);
    out.slice_mut(s![.., a.ncols()..]).assign(b);
    out
}

fn check_finite(value: f64, term: &str) -> Result<()> {
    if !value.is_finite() {
        return Err(RlvError::NonFinite {
            context: format!("SAC loss term {term}"),
        });
    }
    Ok(())
}

/// Gradients and losses for one SAC step, all evaluated at the current
/// parameter snapshot. Pure given the noise.
pub(crate) fn compute_update(
    nets: &SacNets,
    cfg: &SacConfig,
    batch: &FeatureBatch,
    noise: &UpdateNoise,
) -> Result<UpdateOutcome> {
    match nets.space {
        ActionSpace::Continuous { dim } => compute_update_continuous(nets, cfg, batch, noise, dim),
        ActionSpace::Discrete { n } => compute_update_discrete(nets, cfg, batch, n),
    }
}

struct GaussianHead {
    /// 1.0 where log_std was inside the clamp range (gradient passes).
    clamp_gate: Array2<f64>,
    std: Array2<f64>,
    a: Array2<f64>,
    /// Per-sample log-density of the squashed sample.
    log_prob: Array1<f64>,
}

fn gaussian_head(
    cfg: &SacConfig,
    policy_out: &Array2<f64>,
    eps: &Array2<f64>,
    dim: usize,
) -> GaussianHead {
    let b = policy_out.nrows();
    let mean = policy_out.slice(s![.., ..dim]).to_owned();
    let raw = policy_out.slice(s![.., dim..]).to_owned();
    let mut clamp_gate = Array2::ones((b, dim));
    let mut log_std = raw.clone();
    for (g, v) in clamp_gate.iter_mut().zip(log_std.iter_mut()) {
        if *v < cfg.log_std_min {
            *v = cfg.log_std_min;
            *g = 0.0;
        } else if *v > cfg.log_std_max {
            *v = cfg.log_std_max;
            *g = 0.0;
        }
    }
    let std = log_std.mapv(f64::exp);
    let u = &mean + &(&std * eps);
    let a = u.mapv(f64::tanh);
    let mut log_prob = Array1::zeros(b);
    for i in 0..b {
        let mut lp = 0.0;
        for j in 0..dim {
            lp += -0.5 * LN_2PI - log_std[[i, j]] - 0.5 * eps[[i, j]] * eps[[i, j]];
            lp -= (1.0 - a[[i, j]] * a[[i, j]] + TANH_EPS).ln();
        }
        log_prob[i] = lp;
    }
    GaussianHead {
        clamp_gate,
        std,
        a,
        log_prob,
    }
}

fn compute_update_continuous(
    nets: &SacNets,
    cfg: &SacConfig,
    batch: &FeatureBatch,
    noise: &UpdateNoise,
    dim: usize,
) -> Result<UpdateOutcome> {
    let b = batch.len();
    let bf = b as f64;
    let alpha = nets.alpha();
    let d = nets.feat_dim;

    // Bellman targets (detached).
    let eps_t = noise.target_eps.as_ref().expect("continuous noise");
    let pn_cache = nets.policy.forward_batch(batch.h_next.view())?;
    let head_t = gaussian_head(cfg, &pn_cache.output().to_owned(), eps_t, dim);
    let qt_in = hcat(&batch.h_next, &head_t.a);
    let qt1 = forward_batch(&nets.q1.spec, &nets.target_q1, qt_in.view())?;
    let qt2 = forward_batch(&nets.q2.spec, &nets.target_q2, qt_in.view())?;
    let mut y = Array1::zeros(b);
    for i in 0..b {
        let minq = qt1.output()[[i, 0]].min(qt2.output()[[i, 0]]);
        let not_done = if batch.terminal[i] { 0.0 } else { 1.0 };
        y[i] = batch.r[i] + cfg.gamma * not_done * (minq - alpha * head_t.log_prob[i]);
    }

    let mut dh = Array2::zeros((b, d));

    // Twin Q regression.
    let q_in = hcat(&batch.h, &batch.a);
    let mut q_grad = |net: &Mlp| -> Result<(f64, MlpParams)> {
        let cache = net.forward_batch(q_in.view())?;
        let mut loss = 0.0;
        let mut up = Array2::zeros((b, 1));
        for i in 0..b {
            let e = cache.output()[[i, 0]] - y[i];
            loss += e * e;
            up[[i, 0]] = 2.0 * e / bf;
        }
        loss /= bf;
        let (grads, dx) = net.backward_batch(&cache, up.view());
        dh += &dx.slice(s![.., ..d]);
        Ok((loss, grads))
    };
    let (loss_q1, grad_q1) = q_grad(&nets.q1)?;
    let (loss_q2, grad_q2) = q_grad(&nets.q2)?;
    check_finite(loss_q1, "loss_q1")?;
    check_finite(loss_q2, "loss_q2")?;

    // Policy step: minimize mean(alpha * log pi - min Q).
    let eps_p = noise.policy_eps.as_ref().expect("continuous noise");
    let p_cache = nets.policy.forward_batch(batch.h.view())?;
    let head = gaussian_head(cfg, &p_cache.output().to_owned(), eps_p, dim);
    let q_in_pi = hcat(&batch.h, &head.a);
    let c_q1 = nets.q1.forward_batch(q_in_pi.view())?;
    let c_q2 = nets.q2.forward_batch(q_in_pi.view())?;
    let mut loss_pi = 0.0;
    let mut da = Array2::zeros((b, dim));
    let mut up_q1 = Array2::zeros((b, 1));
    let mut up_q2 = Array2::zeros((b, 1));
    for i in 0..b {
        let (v1, v2) = (c_q1.output()[[i, 0]], c_q2.output()[[i, 0]]);
        loss_pi += alpha * head.log_prob[i] - v1.min(v2);
        if v1 <= v2 {
            up_q1[[i, 0]] = -1.0 / bf;
        } else {
            up_q2[[i, 0]] = -1.0 / bf;
        }
    }
    loss_pi /= bf;
    check_finite(loss_pi, "loss_policy")?;
    // min-Q path: action-input gradients only, Q parameters are not trained
    // here and the feature gradient stays critic-only.
    let (_, dx1) = nets.q1.backward_batch(&c_q1, up_q1.view());
    let (_, dx2) = nets.q2.backward_batch(&c_q2, up_q2.view());
    da += &dx1.slice(s![.., d..]);
    da += &dx2.slice(s![.., d..]);
    // Entropy term's dependence on the squashed action.
    for i in 0..b {
        for j in 0..dim {
            let aij = head.a[[i, j]];
            da[[i, j]] += (alpha / bf) * 2.0 * aij / (1.0 - aij * aij + TANH_EPS);
        }
    }
    // Chain through tanh into mean and log_std.
    let mut up_policy = Array2::zeros((b, 2 * dim));
    for i in 0..b {
        for j in 0..dim {
            let aij = head.a[[i, j]];
            let du = da[[i, j]] * (1.0 - aij * aij);
            up_policy[[i, j]] = du;
            let mut dls = du * eps_p[[i, j]] * head.std[[i, j]] - alpha / bf;
            dls *= head.clamp_gate[[i, j]];
            up_policy[[i, dim + j]] = dls;
        }
    }
    let (grad_policy, _) = nets.policy.backward_batch(&p_cache, up_policy.view());

    // Temperature: d/dlog_alpha of -log_alpha * (log pi + target_entropy).
    let grad_log_alpha =
        -(head.log_prob.iter().map(|lp| lp + nets.target_entropy).sum::<f64>()) / bf;

    Ok(UpdateOutcome {
        losses: SacLosses {
            q1: loss_q1,
            q2: loss_q2,
            policy: loss_pi,
            alpha,
        },
        grad_policy,
        grad_q1,
        grad_q2,
        grad_log_alpha,
        dh,
    })
}

fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn compute_update_discrete(
    nets: &SacNets,
    cfg: &SacConfig,
    batch: &FeatureBatch,
    n_actions: usize,
) -> Result<UpdateOutcome> {
    let b = batch.len();
    let bf = b as f64;
    let alpha = nets.alpha();

    // Exact-expectation Bellman targets (detached).
    let pn_cache = nets.policy.forward_batch(batch.h_next.view())?;
    let logp_n = log_softmax(&pn_cache.output().to_owned());
    let p_n = logp_n.mapv(f64::exp);
    let qt1 = forward_batch(&nets.q1.spec, &nets.target_q1, batch.h_next.view())?;
    let qt2 = forward_batch(&nets.q2.spec, &nets.target_q2, batch.h_next.view())?;
    let mut y = Array1::zeros(b);
    for i in 0..b {
        let mut v = 0.0;
        for a in 0..n_actions {
            let minq = qt1.output()[[i, a]].min(qt2.output()[[i, a]]);
            v += p_n[[i, a]] * (minq - alpha * logp_n[[i, a]]);
        }
        let not_done = if batch.terminal[i] { 0.0 } else { 1.0 };
        y[i] = batch.r[i] + cfg.gamma * not_done * v;
    }

    let mut dh = Array2::zeros((b, nets.feat_dim));

    // Twin Q regression on the taken (one-hot) action.
    let c_q1 = nets.q1.forward_batch(batch.h.view())?;
    let c_q2 = nets.q2.forward_batch(batch.h.view())?;
    let mut q_grad = |cache: &crate::nn::ForwardCache, net: &Mlp| -> (f64, MlpParams) {
        let mut loss = 0.0;
        let mut up = Array2::zeros((b, n_actions));
        for i in 0..b {
            let pred: f64 = (0..n_actions)
                .map(|a| batch.a[[i, a]] * cache.output()[[i, a]])
                .sum();
            let e = pred - y[i];
            loss += e * e;
            for a in 0..n_actions {
                up[[i, a]] = 2.0 * e / bf * batch.a[[i, a]];
            }
        }
        loss /= bf;
        let (grads, dx) = net.backward_batch(cache, up.view());
        dh += &dx;
        (loss, grads)
    };
    let (loss_q1, grad_q1) = q_grad(&c_q1, &nets.q1);
    let (loss_q2, grad_q2) = q_grad(&c_q2, &nets.q2);
    check_finite(loss_q1, "loss_q1")?;
    check_finite(loss_q2, "loss_q2")?;

    // Policy step over the exact action expectation.
    let p_cache = nets.policy.forward_batch(batch.h.view())?;
    let logp = log_softmax(&p_cache.output().to_owned());
    let p = logp.mapv(f64::exp);
    let mut loss_pi = 0.0;
    let mut up_logits = Array2::zeros((b, n_actions));
    for i in 0..b {
        let mut f = 0.0;
        let mut g = vec![0.0; n_actions];
        for a in 0..n_actions {
            let minq = c_q1.output()[[i, a]].min(c_q2.output()[[i, a]]);
            g[a] = alpha * logp[[i, a]] - minq;
            f += p[[i, a]] * g[a];
        }
        loss_pi += f;
        for a in 0..n_actions {
            up_logits[[i, a]] = p[[i, a]] * (g[a] - f) / bf;
        }
    }
    loss_pi /= bf;
    check_finite(loss_pi, "loss_policy")?;
    let (grad_policy, _) = nets.policy.backward_batch(&p_cache, up_logits.view());

    let mut grad_log_alpha = 0.0;
    for i in 0..b {
        for a in 0..n_actions {
            grad_log_alpha -= p[[i, a]] * (logp[[i, a]] + nets.target_entropy);
        }
    }
    grad_log_alpha /= bf;

    Ok(UpdateOutcome {
        losses: SacLosses {
            q1: loss_q1,
            q2: loss_q2,
            policy: loss_pi,
            alpha,
        },
        grad_policy,
        grad_q1,
        grad_q2,
        grad_log_alpha,
        dh,
    })
}

/// One SAC gradient step on `batch`: twin-Q regression toward the soft
/// Bellman target, a policy step against min-Q plus entropy, a temperature
/// step toward the entropy target, then the tau-blend of the target networks.
/// Returns the losses and d(L_RL)/dh for the encoder.
pub fn sac_update(
    nets: &mut SacNets,
    cfg: &SacConfig,
    batch: &FeatureBatch,
    rng: &mut ChaCha8Rng,
) -> Result<(SacLosses, Array2<f64>)> {
    if batch.is_empty() {
        return Err(RlvError::Config("sac_update on an empty batch".into()));
    }
    let noise = draw_noise(nets.space, batch.len(), rng);
    let out = compute_update(nets, cfg, batch, &noise)?;
    nets.opt_q1.step(&mut nets.q1.params, &out.grad_q1)?;
    nets.opt_q2.step(&mut nets.q2.params, &out.grad_q2)?;
    nets.opt_policy.step(&mut nets.policy.params, &out.grad_policy)?;
    if nets.auto_alpha {
        nets.opt_alpha.step(&mut nets.log_alpha, out.grad_log_alpha)?;
    }
    soft_update(&mut nets.target_q1, &nets.q1.params, cfg.tau);
    soft_update(&mut nets.target_q2, &nets.q2.params, cfg.tau);
    Ok((out.losses, out.dh))
}

/// Draw or pick an action from the policy head for the given features.
pub fn select_action(
    nets: &SacNets,
    cfg: &SacConfig,
    h: &[f64],
    mode: SelectMode,
    rng: &mut ChaCha8Rng,
) -> Result<Action> {
    let out = nets.policy.forward(h)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(RlvError::NonFinite {
            context: "policy output".into(),
        });
    }
    match nets.space {
        ActionSpace::Continuous { dim } => {
            let mut a = Vec::with_capacity(dim);
            for j in 0..dim {
                let mean = out[j];
                match mode {
                    SelectMode::Deterministic => a.push(mean.tanh()),
                    SelectMode::Stochastic => {
                        let log_std = out[dim + j].clamp(cfg.log_std_min, cfg.log_std_max);
                        let eps: f64 = rng.sample(StandardNormal);
                        a.push((mean + log_std.exp() * eps).tanh());
                    }
                }
            }
            Ok(Action::Continuous(a))
        }
        ActionSpace::Discrete { n } => {
            let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = out.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            match mode {
                SelectMode::Deterministic => {
                    let mut best = 0;
                    for a in 1..n {
                        if out[a] > out[best] {
                            best = a;
                        }
                    }
                    Ok(Action::Discrete(best))
                }
                SelectMode::Stochastic => {
                    let u: f64 = rng.gen_range(0.0..1.0);
                    let mut acc = 0.0;
                    for a in 0..n {
                        acc += exps[a] / z;
                        if u < acc {
                            return Ok(Action::Discrete(a));
                        }
                    }
                    Ok(Action::Discrete(n - 1))
                }
            }
        }
    }
}

/// Plain SAC on raw states: the baseline learner. The features fed to the
/// networks are the observations themselves.
#[derive(Debug, Clone)]
pub struct SacLearner {
    pub nets: SacNets,
    pub cfg: SacConfig,
    pub rng: ChaCha8Rng,
}

impl SacLearner {
    pub fn new(obs_dim: usize, space: ActionSpace, cfg: SacConfig, mut rng: ChaCha8Rng) -> Result<Self> {
        let nets = SacNets::new(obs_dim, space, &cfg, &mut rng)?;
        Ok(Self { nets, cfg, rng })
    }

    pub fn select_action(&mut self, obs: &[f64], mode: SelectMode) -> Result<Action> {
        select_action(&self.nets, &self.cfg, obs, mode, &mut self.rng)
    }

    pub fn train_step(&mut self, pool: &ReplayPool<Transition>) -> Result<SacLosses> {
        let idx = pool.sample_indices(self.cfg.batch_size, &mut self.rng)?;
        let items: Vec<&Transition> = idx.iter().map(|&i| pool.get(i)).collect();
        let batch = FeatureBatch::from_transitions(&items);
        let (losses, _) = sac_update(&mut self.nets, &self.cfg, &batch, &mut self.rng)?;
        Ok(losses)
    }
}

/// Sum of |target - online| over all parameters; zero iff identical.
pub fn target_divergence(nets: &SacNets) -> f64 {
    let mut acc = 0.0;
    for (t, o) in [
        (&nets.target_q1, &nets.q1.params),
        (&nets.target_q2, &nets.q2.params),
    ] {
        for (tw, ow) in t.weights.iter().zip(&o.weights) {
            acc += tw.iter().zip(ow.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        for (tb, ob) in t.biases.iter().zip(&o.biases) {
            acc += tb.iter().zip(ob.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
    }
    acc
}

#[cfg(test)]
mod tests;
