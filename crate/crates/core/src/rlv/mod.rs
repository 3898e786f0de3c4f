//! Learning from action-free observations: a shared encoder feeds SAC, an
//! inverse model labels observation pairs with actions, terminal pairs get a
//! large constant reward, and a discriminator plus a paired-sample penalty
//! align the two domains' features. One train step runs eight sub-steps in a
//! fixed order so runs are bitwise reproducible per seed.

use crate::data::{GtRecord, ObsTransition, PairedSample, ReplayPool, Transition};
use crate::env::{Action, ActionSpace};
use crate::error::{Result, RlvError};
use crate::nn::{Adam, ForwardCache, Mlp, MlpParams, MlpSpec, OutputActivation};
use crate::sac::{sac_update, select_action, FeatureBatch, SacConfig, SacLosses, SacNets, SelectMode};
use ndarray::{s, Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Guard on discriminator probabilities before the logs.
const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct RlvConfig {
    /// Weight on the inverse-model loss.
    pub c1: f64,
    /// Weight on the RL loss in the encoder objective.
    pub c2: f64,
    /// Weight on the domain-adaptation terms; 0 disables them entirely.
    pub c3: f64,
    /// Reward for the final pair of an observation trajectory.
    pub c_large: f64,
    /// Reward for every other observation pair (env-dependent).
    pub c_small: f64,
    /// Inner weight on the pair loss within the domain-adaptation term.
    pub paired_weight: f64,
    /// The discriminator's own learning rate.
    pub discr_lr: f64,
    /// Encoder output width; ignored by the identity encoder.
    pub feature_dim: usize,
    /// Identity encoder exposes raw states as features (state-space tasks
    /// with no domain shift); otherwise an MLP encoder is trained.
    pub identity_encoder: bool,
    pub encoder_hidden: Vec<usize>,
    pub inverse_hidden: Vec<usize>,
    pub discr_hidden: Vec<usize>,
    /// Interaction samples per merged batch.
    pub n_int: usize,
    /// Observation samples per merged batch.
    pub m_obs: usize,
    /// Paired samples per step when the pair term is active.
    pub pair_batch: usize,
    /// Encoder-side adversarial convention: false = literal minimax (the
    /// encoder descends the discriminator's objective on both feature
    /// branches), true = the classic non-saturating generator loss (the
    /// encoder descends -log d on the observation branch only; interaction
    /// features are the "real" samples and train just the discriminator).
    pub non_saturating: bool,
}

impl Default for RlvConfig {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            c3: 0.001,
            c_large: 10.0,
            c_small: 0.0,
            paired_weight: 1e-6,
            discr_lr: 3e-8,
            feature_dim: 64,
            identity_encoder: false,
            encoder_hidden: vec![64],
            inverse_hidden: vec![64, 64, 64],
            discr_hidden: vec![64, 64, 64],
            n_int: 128,
            m_obs: 128,
            pair_batch: 64,
            non_saturating: false,
        }
    }
}

impl RlvConfig {
    pub fn validate(&self, sac: &SacConfig) -> Result<()> {
        if self.c1 < 0.0 || self.c2 < 0.0 || self.c3 < 0.0 {
            return Err(RlvError::Config("c1, c2, c3 must be non-negative".into()));
        }
        if self.n_int + self.m_obs != sac.batch_size {
            return Err(RlvError::Config(format!(
                "batch split {}:{} does not sum to batch_size {}",
                self.n_int, self.m_obs, sac.batch_size
            )));
        }
        if self.n_int == 0 {
            return Err(RlvError::Config("n_int must be positive".into()));
        }
        Ok(())
    }
}

/// Which knob an ablation run flips; everything else stays at `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    None,
    ZeroActions,
    GtActions,
    ZeroRewards,
    GtRewards,
    NoPaired,
    NoDomainAdapt,
}

impl std::str::FromStr for AblationMode {
    type Err = RlvError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Self::None,
            "zero_actions" => Self::ZeroActions,
            "gt_actions" => Self::GtActions,
            "zero_rewards" => Self::ZeroRewards,
            "gt_rewards" => Self::GtRewards,
            "no_paired" => Self::NoPaired,
            "no_domain_adapt" => Self::NoDomainAdapt,
            other => return Err(RlvError::Config(format!("unknown ablation mode {other:?}"))),
        })
    }
}

impl AblationMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ZeroActions => "zero_actions",
            Self::GtActions => "gt_actions",
            Self::ZeroRewards => "zero_rewards",
            Self::GtRewards => "gt_rewards",
            Self::NoPaired => "no_paired",
            Self::NoDomainAdapt => "no_domain_adapt",
        }
    }

    pub fn needs_gt(self) -> bool {
        matches!(self, Self::GtActions | Self::GtRewards)
    }
}

/// The shared encoder f_enc; the same parameter block serves both domains.
#[derive(Debug, Clone)]
pub enum Encoder {
    Identity { dim: usize },
    Net(Mlp),
}

impl Encoder {
    pub fn feature_dim(&self) -> usize {
        match self {
            Encoder::Identity { dim } => *dim,
            Encoder::Net(mlp) => *mlp.spec.layer_widths.last().unwrap(),
        }
    }

    pub fn encode(&self, s: &[f64]) -> Result<Vec<f64>> {
        match self {
            Encoder::Identity { dim } => {
                if s.len() != *dim {
                    return Err(RlvError::ShapeMismatch {
                        layer: 0,
                        expected: *dim,
                        got: s.len(),
                    });
                }
                Ok(s.to_vec())
            }
            Encoder::Net(mlp) => mlp.forward(s),
        }
    }

    /// Batch forward; the cache is present only for the trainable variant.
    pub fn encode_batch(&self, s: ArrayView2<f64>) -> Result<(Array2<f64>, Option<ForwardCache>)> {
        match self {
            Encoder::Identity { dim } => {
                if s.ncols() != *dim {
                    return Err(RlvError::ShapeMismatch {
                        layer: 0,
                        expected: *dim,
                        got: s.ncols(),
                    });
                }
                Ok((s.to_owned(), None))
            }
            Encoder::Net(mlp) => {
                let cache = mlp.forward_batch(s)?;
                let out = cache.output().to_owned();
                Ok((out, Some(cache)))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pure loss operations
// ---------------------------------------------------------------------------

fn hcat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(s![.., ..a.ncols()]).assign(a);
    out.slice_mut(s![.., a.ncols()..]).assign(b);
    out
}

/// Mean over the batch of the squared Euclidean error between the inverse
/// model's prediction and the true action.
pub fn inverse_loss(
    inverse: &Mlp,
    h: &Array2<f64>,
    h_next: &Array2<f64>,
    a: &Array2<f64>,
) -> Result<f64> {
    let cache = inverse.forward_batch(hcat(h, h_next).view())?;
    let pred = cache.output();
    let mut loss = 0.0;
    for i in 0..h.nrows() {
        for j in 0..a.ncols() {
            let e = a[[i, j]] - pred[[i, j]];
            loss += e * e;
        }
    }
    Ok(loss / h.nrows() as f64)
}

/// Action labels for observation pairs: raw output clamped to [-1,1] for
/// continuous spaces, one-hot argmax (ties to the lowest index) for discrete.
pub fn predict_actions(
    inverse: &Mlp,
    h: &Array2<f64>,
    h_next: &Array2<f64>,
    space: ActionSpace,
) -> Result<Array2<f64>> {
    let cache = inverse.forward_batch(hcat(h, h_next).view())?;
    let raw = cache.output();
    let mut out = Array2::zeros(raw.raw_dim());
    match space {
        ActionSpace::Continuous { .. } => {
            for (o, &v) in out.iter_mut().zip(raw.iter()) {
                *o = v.clamp(-1.0, 1.0);
            }
        }
        ActionSpace::Discrete { n } => {
            for i in 0..raw.nrows() {
                let mut best = 0;
                for a in 1..n {
                    if raw[[i, a]] > raw[[i, best]] {
                        best = a;
                    }
                }
                out[[i, best]] = 1.0;
            }
        }
    }
    Ok(out)
}

/// Rewards and terminal flags for observation pairs: the final pair of each
/// trajectory earns `c_large` and terminates; everything else earns `c_small`.
pub fn label_rewards(traj_end: &[bool], cfg: &RlvConfig) -> (Array1<f64>, Vec<bool>) {
    let r = traj_end
        .iter()
        .map(|&e| if e { cfg.c_large } else { cfg.c_small })
        .collect();
    (Array1::from_vec(r), traj_end.to_vec())
}

/// Sigmoid probabilities with the clamp guard; gate is 1 where the gradient
/// passes (output strictly inside the clamp range).
fn discr_probs(discr: &Mlp, h: &Array2<f64>) -> Result<(ForwardCache, Array1<f64>, Array1<f64>)> {
    let cache = discr.forward_batch(h.view())?;
    let b = h.nrows();
    let mut d = Array1::zeros(b);
    let mut gate = Array1::ones(b);
    for i in 0..b {
        let p = 1.0 / (1.0 + (-cache.output()[[i, 0]]).exp());
        if p < PROB_EPS {
            d[i] = PROB_EPS;
            gate[i] = 0.0;
        } else if p > 1.0 - PROB_EPS {
            d[i] = 1.0 - PROB_EPS;
            gate[i] = 0.0;
        } else {
            d[i] = p;
        }
    }
    Ok((cache, d, gate))
}

/// Domain-confusion objective: mean log d(h_int) + mean log(1 - d(h_obs)).
/// The discriminator ascends this; the encoder descends it.
pub fn discriminator_loss(discr: &Mlp, h_int: &Array2<f64>, h_obs: &Array2<f64>) -> Result<f64> {
    let (_, d_int, _) = discr_probs(discr, h_int)?;
    let (_, d_obs, _) = discr_probs(discr, h_obs)?;
    let li = d_int.iter().map(|p| p.ln()).sum::<f64>() / d_int.len() as f64;
    let lo = d_obs.iter().map(|p| (1.0 - p).ln()).sum::<f64>() / d_obs.len() as f64;
    Ok(li + lo)
}

/// Mean squared Euclidean distance between the paired encodings.
pub fn pair_loss(enc: &Encoder, s_int: &Array2<f64>, s_obs: &Array2<f64>) -> Result<f64> {
    let (e_int, _) = enc.encode_batch(s_int.view())?;
    let (e_obs, _) = enc.encode_batch(s_obs.view())?;
    let mut loss = 0.0;
    for i in 0..e_int.nrows() {
        for j in 0..e_int.ncols() {
            let d = e_int[[i, j]] - e_obs[[i, j]];
            loss += d * d;
        }
    }
    Ok(loss / e_int.nrows() as f64)
}

// ---------------------------------------------------------------------------
// The learner
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct RlvLosses {
    pub sac: SacLosses,
    pub inv: f64,
    pub discrim: f64,
    pub pair: f64,
}

/// One sampled training batch: interaction transitions, observation pairs
/// (with aligned ground truth for the gt_* ablations), and domain pairs.
#[derive(Debug, Clone)]
pub struct RlvBatch {
    pub int: Vec<Transition>,
    pub obs: Vec<ObsTransition>,
    pub obs_gt: Option<Vec<GtRecord>>,
    pub pairs: Vec<PairedSample>,
}

#[derive(Debug, Clone)]
pub struct RlvLearner {
    pub cfg: RlvConfig,
    pub sac_cfg: SacConfig,
    pub space: ActionSpace,
    pub obs_dim: usize,
    pub encoder: Encoder,
    pub opt_enc: Option<Adam>,
    pub inverse: Mlp,
    pub opt_inv: Adam,
    pub discr: Mlp,
    pub opt_discr: Adam,
    pub sac: SacNets,
    pub obs_pool: ReplayPool<ObsTransition>,
    /// Generator-side ground truth aligned with `obs_pool`; gt_* only.
    pub gt: Option<Vec<GtRecord>>,
    pub pair_pool: ReplayPool<PairedSample>,
    pub ablation: AblationMode,
    /// Drives SAC-side randomness (net init, interaction sampling, update
    /// noise, action selection) in the same order as the plain learner.
    pub rng: ChaCha8Rng,
    /// Drives everything RLV adds on top, so the SAC stream is untouched.
    pub aux_rng: ChaCha8Rng,
}

impl RlvLearner {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        obs_dim: usize,
        space: ActionSpace,
        cfg: RlvConfig,
        sac_cfg: SacConfig,
        obs_pool: ReplayPool<ObsTransition>,
        gt: Option<Vec<GtRecord>>,
        pair_pool: ReplayPool<PairedSample>,
        ablation: AblationMode,
        mut rng: ChaCha8Rng,
        mut aux_rng: ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate(&sac_cfg)?;
        if ablation.needs_gt() && gt.is_none() {
            return Err(RlvError::Config(
                "ground-truth ablation requires a dataset sidecar".into(),
            ));
        }
        if let Some(g) = &gt {
            if g.len() != obs_pool.len() {
                return Err(RlvError::Config(
                    "ground-truth sidecar length does not match the dataset".into(),
                ));
            }
        }
        let (encoder, opt_enc, feat_dim) = if cfg.identity_encoder {
            (Encoder::Identity { dim: obs_dim }, None, obs_dim)
        } else {
            let spec = MlpSpec::with_hidden(
                obs_dim,
                &cfg.encoder_hidden,
                cfg.feature_dim,
                OutputActivation::Linear,
            )?;
            let opt = Adam::new(&spec, sac_cfg.lr);
            (
                Encoder::Net(Mlp::init(spec, &mut aux_rng)),
                Some(opt),
                cfg.feature_dim,
            )
        };
        // SAC nets draw from the primary stream first, exactly like the
        // plain learner, so the two stay bitwise comparable.
        let sac = SacNets::new(feat_dim, space, &sac_cfg, &mut rng)?;
        let inv_spec = MlpSpec::with_hidden(
            2 * feat_dim,
            &cfg.inverse_hidden,
            space.vec_dim(),
            OutputActivation::Linear,
        )?;
        let discr_spec =
            MlpSpec::with_hidden(feat_dim, &cfg.discr_hidden, 1, OutputActivation::Linear)?;
        let inverse = Mlp::init(inv_spec.clone(), &mut aux_rng);
        let discr = Mlp::init(discr_spec.clone(), &mut aux_rng);
        Ok(Self {
            opt_inv: Adam::new(&inv_spec, sac_cfg.lr),
            opt_discr: Adam::new(&discr_spec, cfg.discr_lr),
            cfg,
            sac_cfg,
            space,
            obs_dim,
            encoder,
            opt_enc,
            inverse,
            discr,
            sac,
            obs_pool,
            gt,
            pair_pool,
            ablation,
            rng,
            aux_rng,
        })
    }

    /// c3 after the no_domain_adapt ablation.
    fn c3(&self) -> f64 {
        if self.ablation == AblationMode::NoDomainAdapt {
            0.0
        } else {
            self.cfg.c3
        }
    }

    /// Pair weight after the no_paired ablation.
    fn pair_weight(&self) -> f64 {
        if self.ablation == AblationMode::NoPaired {
            0.0
        } else {
            self.cfg.paired_weight
        }
    }

    pub fn select_action(&mut self, obs: &[f64], mode: SelectMode) -> Result<Action> {
        let h = self.encoder.encode(obs)?;
        select_action(&self.sac, &self.sac_cfg, &h, mode, &mut self.rng)
    }

    /// Draw one merged batch. Interaction indices come from the primary
    /// stream; observation and pair indices from the auxiliary stream.
    pub fn sample_batch(&mut self, int_pool: &ReplayPool<Transition>) -> Result<RlvBatch> {
        let idx = int_pool.sample_indices(self.cfg.n_int, &mut self.rng)?;
        let int = idx.iter().map(|&i| int_pool.get(i).clone()).collect();
        let (obs, obs_gt) = if self.cfg.m_obs > 0 {
            let oidx = self.obs_pool.sample_indices(self.cfg.m_obs, &mut self.aux_rng)?;
            let obs: Vec<ObsTransition> =
                oidx.iter().map(|&i| self.obs_pool.get(i).clone()).collect();
            let gt = self
                .gt
                .as_ref()
                .map(|g| oidx.iter().map(|&i| g[i].clone()).collect());
            (obs, gt)
        } else {
            (Vec::new(), None)
        };
        let pairs = if self.c3() > 0.0 && self.pair_weight() > 0.0 && !self.pair_pool.is_empty() {
            let pidx = self
                .pair_pool
                .sample_indices(self.cfg.pair_batch, &mut self.aux_rng)?;
            pidx.iter().map(|&i| self.pair_pool.get(i).clone()).collect()
        } else {
            Vec::new()
        };
        Ok(RlvBatch {
            int,
            obs,
            obs_gt,
            pairs,
        })
    }

    pub fn train_step(&mut self, int_pool: &ReplayPool<Transition>) -> Result<RlvLosses> {
        let batch = self.sample_batch(int_pool)?;
        self.train_on_batch(&batch)
    }

    /// The eight sub-steps, in order: encode both domains, predict actions
    /// and label rewards for observation items, one SAC step on the merged
    /// batch, inverse-model step, discriminator step (its own optimizer),
    /// then the encoder step combining every term of the joint objective.
    pub fn train_on_batch(&mut self, batch: &RlvBatch) -> Result<RlvLosses> {
        let n = batch.int.len();
        let m = batch.obs.len();
        let d = self.obs_dim;
        let c3 = self.c3();
        let pw = self.pair_weight();
        let rows = |take: &dyn Fn(usize) -> Vec<f64>, count: usize| -> Array2<f64> {
            let mut out = Array2::zeros((count, d));
            for i in 0..count {
                for (j, v) in take(i).iter().enumerate() {
                    out[[i, j]] = *v;
                }
            }
            out
        };

        // (1)-(2) Encode every state group through the shared encoder.
        let s_int = rows(&|i| batch.int[i].s.clone(), n);
        let s_int_next = rows(&|i| batch.int[i].s_next.clone(), n);
        let (h_int, cache_int) = self.encoder.encode_batch(s_int.view())?;
        let (h_int_next, cache_int_next) = self.encoder.encode_batch(s_int_next.view())?;
        let (h_obs, cache_obs, h_obs_next) = if m > 0 {
            let s_obs = rows(&|i| batch.obs[i].s.clone(), m);
            let s_obs_next = rows(&|i| batch.obs[i].s_next.clone(), m);
            let (h, c) = self.encoder.encode_batch(s_obs.view())?;
            let (hn, _) = self.encoder.encode_batch(s_obs_next.view())?;
            (h, c, hn)
        } else {
            (Array2::zeros((0, 0)), None, Array2::zeros((0, 0)))
        };

        // (3)-(4) Actions and rewards for the observation items.
        let act_dim = self.space.vec_dim();
        let (a_obs, r_obs, term_obs) = if m > 0 {
            let ends: Vec<bool> = batch.obs.iter().map(|o| o.traj_end).collect();
            let a_hat = match self.ablation {
                AblationMode::ZeroActions => Array2::zeros((m, act_dim)),
                AblationMode::GtActions => {
                    let gt = batch.obs_gt.as_ref().ok_or_else(|| {
                        RlvError::Config("gt_actions needs ground-truth records".into())
                    })?;
                    let mut a = Array2::zeros((m, act_dim));
                    for (i, g) in gt.iter().enumerate() {
                        for (j, v) in g.a.iter().enumerate() {
                            a[[i, j]] = *v;
                        }
                    }
                    a
                }
                _ => predict_actions(&self.inverse, &h_obs, &h_obs_next, self.space)?,
            };
            let (r_hat, term) = match self.ablation {
                // Zeroing the relabeled rewards also withdraws the relabeler's
                // claim that trajectory-final pairs are terminal: asserting a
                // terminal value of zero at those states would be new (false)
                // reward information, not the absence of it.
                AblationMode::ZeroRewards => (Array1::zeros(m), vec![false; m]),
                AblationMode::GtRewards => {
                    let gt = batch.obs_gt.as_ref().ok_or_else(|| {
                        RlvError::Config("gt_rewards needs ground-truth records".into())
                    })?;
                    (gt.iter().map(|g| g.r).collect(), ends)
                }
                _ => label_rewards(&ends, &self.cfg),
            };
            (a_hat, r_hat, term)
        } else {
            (Array2::zeros((0, act_dim)), Array1::zeros(0), Vec::new())
        };

        // (5) One SAC step on the merged batch: interaction rows first.
        let feat = self.encoder.feature_dim();
        let mut h = Array2::zeros((n + m, feat));
        let mut h_next = Array2::zeros((n + m, feat));
        let mut a = Array2::zeros((n + m, act_dim));
        let mut r = Array1::zeros(n + m);
        let mut terminal = Vec::with_capacity(n + m);
        for i in 0..n {
            h.row_mut(i).assign(&h_int.row(i));
            h_next.row_mut(i).assign(&h_int_next.row(i));
            for (j, v) in batch.int[i].a.iter().enumerate() {
                a[[i, j]] = *v;
            }
            r[i] = batch.int[i].r;
            terminal.push(batch.int[i].terminal);
        }
        for i in 0..m {
            h.row_mut(n + i).assign(&h_obs.row(i));
            h_next.row_mut(n + i).assign(&h_obs_next.row(i));
            a.row_mut(n + i).assign(&a_obs.row(i));
            r[n + i] = r_obs[i];
            terminal.push(term_obs[i]);
        }
        let merged = FeatureBatch {
            h,
            a,
            h_next,
            r,
            terminal,
        };
        let (sac_losses, dh) = sac_update(&mut self.sac, &self.sac_cfg, &merged, &mut self.rng)?;

        // (6) Inverse-model step on the interaction items, descending c1*L_a.
        let a_int = merged.a.slice(s![..n, ..]).to_owned();
        let inv_in = hcat(&h_int, &h_int_next);
        let inv_cache = self.inverse.forward_batch(inv_in.view())?;
        let mut loss_inv = 0.0;
        let mut up_inv = Array2::zeros((n, act_dim));
        for i in 0..n {
            for j in 0..act_dim {
                let e = inv_cache.output()[[i, j]] - a_int[[i, j]];
                loss_inv += e * e;
                up_inv[[i, j]] = self.cfg.c1 * 2.0 * e / n as f64;
            }
        }
        loss_inv /= n as f64;
        if !loss_inv.is_finite() {
            return Err(RlvError::NonFinite {
                context: "loss_inv".into(),
            });
        }
        let (mut d_inv_h, mut d_inv_hn) = (Array2::zeros((n, feat)), Array2::zeros((n, feat)));
        if self.cfg.c1 > 0.0 {
            let (grad_inv, dx) = self.inverse.backward_batch(&inv_cache, up_inv.view());
            d_inv_h.assign(&dx.slice(s![.., ..feat]));
            d_inv_hn.assign(&dx.slice(s![.., feat..]));
            self.opt_inv.step(&mut self.inverse.params, &grad_inv)?;
        }

        // (7) Discriminator step: ascend the domain-confusion objective with
        // its own optimizer. Skipped entirely when c3 = 0.
        let adversarial = c3 > 0.0 && m > 0;
        let mut loss_discrim = 0.0;
        if adversarial {
            let (ci, di, gi) = discr_probs(&self.discr, &h_int)?;
            let (co, do_, go) = discr_probs(&self.discr, &h_obs)?;
            loss_discrim = di.iter().map(|p| p.ln()).sum::<f64>() / n as f64
                + do_.iter().map(|p| (1.0 - p).ln()).sum::<f64>() / m as f64;
            if !loss_discrim.is_finite() {
                return Err(RlvError::NonFinite {
                    context: "loss_discrim".into(),
                });
            }
            // d(log sigmoid)/dz = 1-d; d(log(1-sigmoid))/dz = -d. Ascent
            // means stepping along the negated descent direction.
            let mut up_i = Array2::zeros((n, 1));
            for i in 0..n {
                up_i[[i, 0]] = -gi[i] * (1.0 - di[i]) / n as f64;
            }
            let mut up_o = Array2::zeros((m, 1));
            for i in 0..m {
                up_o[[i, 0]] = -go[i] * (-do_[i]) / m as f64;
            }
            let (gr_i, _) = self.discr.backward_batch(&ci, up_i.view());
            let (gr_o, _) = self.discr.backward_batch(&co, up_o.view());
            let mut grad = gr_i;
            grad.add_scaled(&gr_o, 1.0);
            self.opt_discr.step(&mut self.discr.params, &grad)?;
        }

        // (8) Encoder step: c2 * dL_RL/dh (critic component; the actor is
        // detached from the features) + c1 * dL_a/dh + c3 * (adversarial
        // term against the freshly updated discriminator + paired penalty).
        let mut loss_pair = 0.0;
        let mut enc_grad: Option<MlpParams> = None;
        if let Encoder::Net(enc) = &self.encoder {
            let mut u_int = dh.slice(s![..n, ..]).to_owned() * self.cfg.c2;
            u_int += &d_inv_h;
            let u_int_next = d_inv_hn;
            let mut u_obs = if m > 0 {
                dh.slice(s![n.., ..]).to_owned() * self.cfg.c2
            } else {
                Array2::zeros((0, feat))
            };
            if adversarial {
                let (ci, di, gi) = discr_probs(&self.discr, &h_int)?;
                let (co, do_, go) = discr_probs(&self.discr, &h_obs)?;
                // Descent directions for the encoder under either convention.
                let mut up_i = Array2::zeros((n, 1));
                let mut up_o = Array2::zeros((m, 1));
                if self.cfg.non_saturating {
                    // Classic generator loss: the interaction features are
                    // the "real" samples and only train the discriminator;
                    // the encoder descends -log d(h_obs) so the observation
                    // branch alone is pulled toward the interaction manifold.
                    for i in 0..m {
                        up_o[[i, 0]] = -c3 * go[i] * (1.0 - do_[i]) / m as f64;
                    }
                } else {
                    // Literal minimax: encoder descends the discriminator's
                    // own objective.
                    for i in 0..n {
                        up_i[[i, 0]] = c3 * gi[i] * (1.0 - di[i]) / n as f64;
                    }
                    for i in 0..m {
                        up_o[[i, 0]] = c3 * go[i] * (-do_[i]) / m as f64;
                    }
                }
                let (_, dxi) = self.discr.backward_batch(&ci, up_i.view());
                let (_, dxo) = self.discr.backward_batch(&co, up_o.view());
                u_int += &dxi;
                u_obs += &dxo;
            }
            let mut grad = MlpParams::zeros(&enc.spec);
            let mut add = |cache: &ForwardCache, up: &Array2<f64>| {
                let (g, _) = enc.backward_batch(cache, up.view());
                grad.add_scaled(&g, 1.0);
            };
            add(cache_int.as_ref().unwrap(), &u_int);
            add(cache_int_next.as_ref().unwrap(), &u_int_next);
            if m > 0 {
                add(cache_obs.as_ref().unwrap(), &u_obs);
            }
            if c3 > 0.0 && pw > 0.0 && !batch.pairs.is_empty() {
                let p = batch.pairs.len();
                let p_int = rows(&|i| batch.pairs[i].s_int.clone(), p);
                let p_obs = rows(&|i| batch.pairs[i].s_obs.clone(), p);
                let (e_int, c_pi) = self.encoder.encode_batch(p_int.view())?;
                let (e_obs, c_po) = self.encoder.encode_batch(p_obs.view())?;
                let mut up = Array2::zeros((p, feat));
                for i in 0..p {
                    for j in 0..feat {
                        let diff = e_int[[i, j]] - e_obs[[i, j]];
                        loss_pair += diff * diff;
                        up[[i, j]] = c3 * pw * 2.0 * diff / p as f64;
                    }
                }
                loss_pair /= p as f64;
                if !loss_pair.is_finite() {
                    return Err(RlvError::NonFinite {
                        context: "loss_pair".into(),
                    });
                }
                add(c_pi.as_ref().unwrap(), &up);
                let neg = up.mapv(|v| -v);
                add(c_po.as_ref().unwrap(), &neg);
            }
            enc_grad = Some(grad);
        }
        if let Some(grad) = enc_grad {
            if let (Encoder::Net(enc), Some(opt)) = (&mut self.encoder, self.opt_enc.as_mut()) {
                opt.step(&mut enc.params, &grad)?;
            }
        }

        Ok(RlvLosses {
            sac: sac_losses,
            inv: loss_inv,
            discrim: loss_discrim,
            pair: loss_pair,
        })
    }

    /// Named parameter blocks for checkpoint bundles, in a fixed order.
    pub fn param_blocks(&self) -> Vec<(&'static str, &MlpParams)> {
        let mut blocks = Vec::new();
        if let Encoder::Net(mlp) = &self.encoder {
            blocks.push(("encoder", &mlp.params));
        }
        blocks.push(("inverse", &self.inverse.params));
        blocks.push(("discriminator", &self.discr.params));
        blocks.push(("policy", &self.sac.policy.params));
        blocks.push(("q1", &self.sac.q1.params));
        blocks.push(("q2", &self.sac.q2.params));
        blocks.push(("target_q1", &self.sac.target_q1));
        blocks.push(("target_q2", &self.sac.target_q2));
        blocks
    }
}

/// Convenience constructor for two decorrelated streams from one seed.
pub fn seed_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let primary = ChaCha8Rng::seed_from_u64(seed);
    let mut aux = ChaCha8Rng::seed_from_u64(seed);
    aux.set_stream(1);
    (primary, aux)
}
