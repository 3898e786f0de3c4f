//! Experiment harness: flat dotted-key configs with CLI overrides, seeded
//! training runs with periodic deterministic evaluation, CSV metrics, SVG
//! learning curves, checkpoint bundles, and synthetic dataset generation.

use crate::data::{
    build_paired_set, generate_observation_dataset, read_obs_dataset, read_paired_dataset,
    read_sidecar, write_obs_dataset, write_paired_dataset, write_sidecar, DatasetHeader,
    ReplayPool, Transition, DEFAULT_INTERACTION_CAPACITY,
};
use crate::env::{Action, Box2, ChainEnv, Env, IsomorphismSpec, PointPusher};
use crate::error::{Result, RlvError};
use crate::nn::{write_params, MlpParams};
use crate::rlv::{AblationMode, RlvConfig, RlvLearner, RlvLosses, seed_streams};
use crate::sac::{SacConfig, SacLearner, SacLosses, SelectMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

// ---------------------------------------------------------------------------
// Config file: flat dotted keys, `key = value`, `#` comments
// ---------------------------------------------------------------------------

pub fn parse_kv_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    parse_kv_text(&text)
}

pub fn parse_kv_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            RlvError::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn apply_overrides(map: &mut BTreeMap<String, String>, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| RlvError::Config(format!("override {o:?}: expected key=value")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(())
}

/// Typed view over the key-value map; every key must be consumed so typos
/// fail loudly instead of silently using a default.
struct Kv {
    map: BTreeMap<String, String>,
}

impl Kv {
    fn get(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| RlvError::Config(format!("bad value for {key}: {v:?}"))),
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| RlvError::Config(format!("bad value for {key}: {v:?}")))
                })
                .collect(),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.map.keys().next() {
            return Err(RlvError::Config(format!("unrecognized config key {key:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Sac,
    Rlv,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sac => "sac",
            Algorithm::Rlv => "rlv",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: Env,
    pub algorithm: Algorithm,
    pub sac: SacConfig,
    pub rlv: RlvConfig,
    pub obs_path: Option<PathBuf>,
    pub paired_path: Option<PathBuf>,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: u32,
    pub seeds: Vec<u64>,
    pub ablation: AblationMode,
    pub out_dir: PathBuf,
    pub int_capacity: usize,
}

fn env_from_kv(kv: &mut Kv) -> Result<Env> {
    let name = kv.get("env").unwrap_or_else(|| "pusher".into());
    match name.as_str() {
        "pusher" => {
            let d = PointPusher::default();
            let goal = kv.list("pusher.goal", d.goal.to_vec())?;
            let hs = kv.list(
                "pusher.hand_start",
                vec![
                    d.hand_start.min[0],
                    d.hand_start.min[1],
                    d.hand_start.max[0],
                    d.hand_start.max[1],
                ],
            )?;
            let ps = kv.list(
                "pusher.puck_start",
                vec![
                    d.puck_start.min[0],
                    d.puck_start.min[1],
                    d.puck_start.max[0],
                    d.puck_start.max[1],
                ],
            )?;
            if goal.len() != 2 || hs.len() != 4 || ps.len() != 4 {
                return Err(RlvError::Config(
                    "pusher.goal wants 2 numbers; start regions want 4".into(),
                ));
            }
            Ok(Env::Pusher(PointPusher {
                goal: [goal[0], goal[1]],
                hand_start: Box2 {
                    min: [hs[0], hs[1]],
                    max: [hs[2], hs[3]],
                },
                puck_start: Box2 {
                    min: [ps[0], ps[1]],
                    max: [ps[2], ps[3]],
                },
                contact_radius: kv.parse("pusher.contact_radius", d.contact_radius)?,
                action_scale: kv.parse("pusher.action_scale", d.action_scale)?,
                success_radius: kv.parse("pusher.success_radius", d.success_radius)?,
                horizon: kv.parse("pusher.horizon", d.horizon)?,
            }))
        }
        "chain" => {
            let d = ChainEnv::default();
            Ok(Env::Chain(ChainEnv {
                n_cells: kv.parse("chain.cells", d.n_cells)?,
                horizon: kv.parse("chain.horizon", d.horizon)?,
            }))
        }
        other => Err(RlvError::Config(format!("unknown env {other:?}"))),
    }
}

fn sac_from_kv(kv: &mut Kv) -> Result<SacConfig> {
    let sd = SacConfig::default();
    Ok(SacConfig {
        gamma: kv.parse("sac.gamma", sd.gamma)?,
        tau: kv.parse("sac.tau", sd.tau)?,
        lr: kv.parse("sac.lr", sd.lr)?,
        batch_size: kv.parse("sac.batch_size", sd.batch_size)?,
        initial_exploration_steps: kv
            .parse("sac.initial_exploration_steps", sd.initial_exploration_steps)?,
        grad_steps_per_env_step: kv
            .parse("sac.grad_steps_per_env_step", sd.grad_steps_per_env_step)?,
        hidden: kv.list("sac.hidden", sd.hidden)?,
        log_std_min: kv.parse("sac.log_std_min", sd.log_std_min)?,
        log_std_max: kv.parse("sac.log_std_max", sd.log_std_max)?,
        target_entropy: match kv.get("sac.target_entropy") {
            None => sd.target_entropy,
            Some(v) => Some(v.parse().map_err(|_| {
                RlvError::Config(format!("bad value for sac.target_entropy: {v:?}"))
            })?),
        },
        auto_alpha: kv.parse("sac.auto_alpha", sd.auto_alpha)?,
        init_alpha: kv.parse("sac.init_alpha", sd.init_alpha)?,
    })
}

impl ExperimentConfig {
    pub fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        let mut kv = Kv { map };
        let env = env_from_kv(&mut kv)?;
        let algorithm = match kv.get("algorithm").as_deref().unwrap_or("sac") {
            "sac" => Algorithm::Sac,
            "rlv" => Algorithm::Rlv,
            other => return Err(RlvError::Config(format!("unknown algorithm {other:?}"))),
        };
        let sac = sac_from_kv(&mut kv)?;
        let rd = RlvConfig::default();
        let rlv = RlvConfig {
            c1: kv.parse("rlv.c1", rd.c1)?,
            c2: kv.parse("rlv.c2", rd.c2)?,
            c3: kv.parse("rlv.c3", rd.c3)?,
            c_large: kv.parse("rlv.c_large", rd.c_large)?,
            c_small: kv.parse("rlv.c_small", rd.c_small)?,
            paired_weight: kv.parse("rlv.paired_weight", rd.paired_weight)?,
            discr_lr: kv.parse("rlv.discr_lr", rd.discr_lr)?,
            feature_dim: kv.parse("rlv.feature_dim", rd.feature_dim)?,
            identity_encoder: kv.parse("rlv.identity_encoder", rd.identity_encoder)?,
            encoder_hidden: kv.list("rlv.encoder_hidden", rd.encoder_hidden)?,
            inverse_hidden: kv.list("rlv.inverse_hidden", rd.inverse_hidden)?,
            discr_hidden: kv.list("rlv.discr_hidden", rd.discr_hidden)?,
            n_int: kv.parse("rlv.n_int", rd.n_int)?,
            m_obs: kv.parse("rlv.m_obs", rd.m_obs)?,
            pair_batch: kv.parse("rlv.pair_batch", rd.pair_batch)?,
            non_saturating: kv.parse("rlv.non_saturating", rd.non_saturating)?,
        };
        let cfg = Self {
            env,
            algorithm,
            sac,
            rlv,
            obs_path: kv.get("data.obs_path").map(PathBuf::from),
            paired_path: kv.get("data.paired_path").map(PathBuf::from),
            total_steps: kv.parse("run.total_steps", 10_000u64)?,
            eval_interval: kv.parse("run.eval_interval", 1_000u64)?,
            eval_episodes: kv.parse("run.eval_episodes", 20u32)?,
            seeds: kv.list("run.seeds", vec![0u64])?,
            ablation: kv.get("run.ablation").as_deref().unwrap_or("none").parse()?,
            out_dir: PathBuf::from(kv.get("out.dir").unwrap_or_else(|| "runs".into())),
            int_capacity: kv.parse("run.int_capacity", DEFAULT_INTERACTION_CAPACITY)?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sac.validate()?;
        if self.algorithm == Algorithm::Rlv {
            self.rlv.validate(&self.sac)?;
            if self.obs_path.is_none() {
                return Err(RlvError::Config(
                    "algorithm rlv requires data.obs_path".into(),
                ));
            }
        }
        if self.seeds.is_empty() {
            return Err(RlvError::Config("run.seeds must be non-empty".into()));
        }
        if self.eval_interval == 0 {
            return Err(RlvError::Config("run.eval_interval must be positive".into()));
        }
        Ok(())
    }

    /// Every field in a fixed order; the config hash is the SHA-256 of this.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let env = match &self.env {
            Env::Pusher(p) => format!("pusher {p:?}"),
            Env::Chain(c) => format!("chain {c:?}"),
        };
        let _ = writeln!(s, "env = {env}");
        let _ = writeln!(s, "algorithm = {}", self.algorithm.name());
        let _ = writeln!(s, "sac = {:?}", self.sac);
        let _ = writeln!(s, "rlv = {:?}", self.rlv);
        let _ = writeln!(s, "obs_path = {:?}", self.obs_path);
        let _ = writeln!(s, "paired_path = {:?}", self.paired_path);
        let _ = writeln!(s, "total_steps = {}", self.total_steps);
        let _ = writeln!(s, "eval_interval = {}", self.eval_interval);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "ablation = {}", self.ablation.name());
        let _ = writeln!(s, "int_capacity = {}", self.int_capacity);
        s
    }

    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_stem(&self, seed: u64) -> String {
        format!(
            "{}_{}_{}_seed{}",
            self.env.name(),
            self.algorithm.name(),
            self.ablation.name(),
            seed
        )
    }
}

pub fn config_from_sources(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut map = match path {
        Some(p) => parse_kv_file(p)?,
        None => BTreeMap::new(),
    };
    apply_overrides(&mut map, overrides)?;
    ExperimentConfig::from_map(map)
}

// ---------------------------------------------------------------------------
// Metrics rows and CSV
// ---------------------------------------------------------------------------

pub const CSV_HEADER: &str = "env_step,eval_success_rate,eval_mean_return,loss_q1,loss_q2,loss_policy,loss_inv,loss_discrim,loss_pair,alpha,wall_seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub env_step: u64,
    pub eval_success_rate: f64,
    pub eval_mean_return: f64,
    pub loss_q1: f64,
    pub loss_q2: f64,
    pub loss_policy: f64,
    pub loss_inv: f64,
    pub loss_discrim: f64,
    pub loss_pair: f64,
    pub alpha: f64,
    pub wall_seconds: f64,
}

impl MetricsRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.env_step,
            self.eval_success_rate,
            self.eval_mean_return,
            self.loss_q1,
            self.loss_q2,
            self.loss_policy,
            self.loss_inv,
            self.loss_discrim,
            self.loss_pair,
            self.alpha,
            self.wall_seconds
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.eval_success_rate,
            self.eval_mean_return,
            self.loss_q1,
            self.loss_q2,
            self.loss_policy,
            self.loss_inv,
            self.loss_discrim,
            self.loss_pair,
            self.alpha,
            self.wall_seconds,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub fn write_metrics_csv(path: &Path, config_hash: &str, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# config-hash: {config_hash}");
    let _ = writeln!(out, "{CSV_HEADER}");
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<(String, Vec<MetricsRow>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# config-hash: "))
        .ok_or_else(|| RlvError::Dataset(format!("{}: missing config-hash line", path.display())))?
        .to_string();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(RlvError::Dataset(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(RlvError::Dataset(format!("bad CSV row {line:?}")));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| RlvError::Dataset(format!("bad CSV field {:?}", f[i])))
        };
        rows.push(MetricsRow {
            env_step: f[0]
                .parse()
                .map_err(|_| RlvError::Dataset(format!("bad env_step {:?}", f[0])))?,
            eval_success_rate: num(1)?,
            eval_mean_return: num(2)?,
            loss_q1: num(3)?,
            loss_q2: num(4)?,
            loss_policy: num(5)?,
            loss_inv: num(6)?,
            loss_discrim: num(7)?,
            loss_pair: num(8)?,
            alpha: num(9)?,
            wall_seconds: num(10)?,
        });
    }
    Ok((hash, rows))
}

// ---------------------------------------------------------------------------
// Running experiments
// ---------------------------------------------------------------------------

enum LearnerKind {
    Sac(SacLearner),
    Rlv(Box<RlvLearner>),
}

impl LearnerKind {
    fn select(&mut self, obs: &[f64], mode: SelectMode) -> Result<Action> {
        match self {
            LearnerKind::Sac(l) => l.select_action(obs, mode),
            LearnerKind::Rlv(l) => l.select_action(obs, mode),
        }
    }

    fn train(&mut self, pool: &ReplayPool<Transition>) -> Result<RlvLosses> {
        match self {
            LearnerKind::Sac(l) => {
                let sac = l.train_step(pool)?;
                Ok(RlvLosses {
                    sac,
                    inv: 0.0,
                    discrim: 0.0,
                    pair: 0.0,
                })
            }
            LearnerKind::Rlv(l) => l.train_step(pool),
        }
    }

    fn alpha(&self) -> f64 {
        match self {
            LearnerKind::Sac(l) => l.nets.alpha(),
            LearnerKind::Rlv(l) => l.sac.alpha(),
        }
    }

    fn log_alpha(&self) -> f64 {
        match self {
            LearnerKind::Sac(l) => l.nets.log_alpha,
            LearnerKind::Rlv(l) => l.sac.log_alpha,
        }
    }

    fn param_blocks(&self) -> Vec<(&'static str, &MlpParams)> {
        match self {
            LearnerKind::Sac(l) => vec![
                ("policy", &l.nets.policy.params),
                ("q1", &l.nets.q1.params),
                ("q2", &l.nets.q2.params),
                ("target_q1", &l.nets.target_q1),
                ("target_q2", &l.nets.target_q2),
            ],
            LearnerKind::Rlv(l) => l.param_blocks(),
        }
    }
}

fn build_learner(cfg: &ExperimentConfig, seed: u64) -> Result<LearnerKind> {
    let (primary, aux) = seed_streams(seed);
    let obs_dim = cfg.env.obs_dim();
    let space = cfg.env.action_space();
    match cfg.algorithm {
        Algorithm::Sac => Ok(LearnerKind::Sac(SacLearner::new(
            obs_dim,
            space,
            cfg.sac.clone(),
            primary,
        )?)),
        Algorithm::Rlv => {
            let obs_path = cfg
                .obs_path
                .as_ref()
                .ok_or_else(|| RlvError::Config("rlv needs data.obs_path".into()))?;
            let (header, obs) = read_obs_dataset(obs_path)?;
            if header.obs_dim != obs_dim {
                return Err(RlvError::Dataset(format!(
                    "dataset obs_dim {} does not match env obs_dim {obs_dim}",
                    header.obs_dim
                )));
            }
            let gt = if cfg.ablation.needs_gt() {
                let (_, records) = read_sidecar(obs_path)?;
                Some(records)
            } else {
                None
            };
            let pairs = match &cfg.paired_path {
                Some(p) => read_paired_dataset(p)?.1,
                None => Vec::new(),
            };
            let learner = RlvLearner::new(
                obs_dim,
                space,
                cfg.rlv.clone(),
                cfg.sac.clone(),
                ReplayPool::frozen_from(obs),
                gt,
                ReplayPool::frozen_from(pairs),
                cfg.ablation,
                primary,
                aux,
            )?;
            Ok(LearnerKind::Rlv(Box::new(learner)))
        }
    }
}

fn evaluate(
    env: &Env,
    learner: &mut LearnerKind,
    episodes: u32,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let mut successes = 0u32;
    let mut total_return = 0.0;
    for _ in 0..episodes {
        let mut state = env.reset(rng);
        loop {
            let a = learner.select(&state.obs, SelectMode::Deterministic)?;
            let out = env.step(&state, &a)?;
            total_return += out.reward;
            if out.done {
                if env.is_success(out.reward) {
                    successes += 1;
                }
                break;
            }
            state = out.next;
        }
    }
    Ok((
        successes as f64 / episodes as f64,
        total_return / episodes as f64,
    ))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub csv_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// One seeded training run: 1000 random-exploration steps, then one gradient
/// step per env step, deterministic evaluation every `eval_interval` steps.
/// The CSV's wall_seconds column is pinned to 0.0 so identical runs produce
/// identical bytes; real elapsed time goes to stderr.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    fs::create_dir_all(&cfg.out_dir)?;
    let start = Instant::now();
    let hash = cfg.config_hash();
    let mut learner = build_learner(cfg, seed)?;

    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(2);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed);
    eval_rng.set_stream(3);

    let space = cfg.env.action_space();
    let mut pool = ReplayPool::new(cfg.int_capacity);
    let mut state = cfg.env.reset(&mut env_rng);
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut last = RlvLosses {
        sac: SacLosses {
            q1: 0.0,
            q2: 0.0,
            policy: 0.0,
            alpha: 0.0,
        },
        inv: 0.0,
        discrim: 0.0,
        pair: 0.0,
    };

    let csv_path = cfg.out_dir.join(format!("{}.csv", cfg.run_stem(seed)));
    let checkpoint_path = cfg.out_dir.join(format!("{}.ckpt", cfg.run_stem(seed)));

    let explore = cfg.sac.initial_exploration_steps as u64;
    for env_step in 1..=cfg.total_steps {
        let action = if env_step <= explore {
            space.sample_uniform(&mut env_rng)
        } else {
            learner.select(&state.obs, SelectMode::Stochastic)?
        };
        let out = cfg.env.step(&state, &action)?;
        pool.insert(Transition {
            s: state.obs.clone(),
            a: action.to_vec(space.vec_dim()),
            s_next: out.next.obs.clone(),
            r: out.reward,
            // Timing out at the horizon is not a terminal state for the
            // Bellman target; only the sparse success event is.
            terminal: out.done && cfg.env.is_success(out.reward),
        })?;
        state = if out.done {
            cfg.env.reset(&mut env_rng)
        } else {
            out.next
        };

        if env_step > explore {
            for _ in 0..cfg.sac.grad_steps_per_env_step {
                match learner.train(&pool) {
                    Ok(l) => last = l,
                    Err(e) => {
                        write_metrics_csv(&csv_path, &hash, &rows)?;
                        return Err(e);
                    }
                }
            }
        }

        if env_step % cfg.eval_interval == 0 {
            let (succ, ret) = evaluate(&cfg.env, &mut learner, cfg.eval_episodes, &mut eval_rng)?;
            let row = MetricsRow {
                env_step,
                eval_success_rate: succ,
                eval_mean_return: ret,
                loss_q1: last.sac.q1,
                loss_q2: last.sac.q2,
                loss_policy: last.sac.policy,
                loss_inv: last.inv,
                loss_discrim: last.discrim,
                loss_pair: last.pair,
                alpha: learner.alpha(),
                wall_seconds: 0.0,
            };
            if !row.is_finite() {
                rows.push(row);
                write_metrics_csv(&csv_path, &hash, &rows)?;
                return Err(RlvError::NonFinite {
                    context: format!("metrics at env_step {env_step}"),
                });
            }
            rows.push(row);
        }
    }

    write_metrics_csv(&csv_path, &hash, &rows)?;
    write_checkpoint_bundle(
        &checkpoint_path,
        cfg.algorithm.name(),
        &hash,
        learner.log_alpha(),
        &learner.param_blocks(),
    )?;
    eprintln!(
        "run {} finished in {:.1}s",
        cfg.run_stem(seed),
        start.elapsed().as_secs_f64()
    );
    Ok(RunOutput {
        rows,
        csv_path,
        checkpoint_path,
    })
}

pub fn run_ablation(
    cfg: &ExperimentConfig,
    mode: AblationMode,
    seeds: &[u64],
) -> Result<Vec<(u64, RunOutput)>> {
    let mut cfg = cfg.clone();
    cfg.ablation = mode;
    let mut out = Vec::new();
    for &seed in seeds {
        out.push((seed, run_experiment(&cfg, seed)?));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Checkpoint bundles
// ---------------------------------------------------------------------------

/// Bundle layout: u64 LE manifest length, JSON manifest, then one parameter
/// block per entry in the manifest's `blocks` list.
pub fn write_checkpoint_bundle(
    path: &Path,
    algorithm: &str,
    config_hash: &str,
    log_alpha: f64,
    blocks: &[(&'static str, &MlpParams)],
) -> Result<()> {
    let manifest = serde_json::json!({
        "algorithm": algorithm,
        "config_hash": config_hash,
        "log_alpha": log_alpha,
        "blocks": blocks.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
    });
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    w.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&manifest_bytes)?;
    for (_, params) in blocks {
        write_params(&mut w, params)?;
    }
    Ok(())
}

pub fn read_bundle_manifest(path: &Path) -> Result<serde_json::Value> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(RlvError::Checkpoint("bundle too short".into()));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + len {
        return Err(RlvError::Checkpoint("truncated manifest".into()));
    }
    Ok(serde_json::from_slice(&bytes[8..8 + len])?)
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

/// First env_step whose trailing windowed mean of eval_success_rate reaches
/// the threshold; the window shrinks at the start of the series.
pub fn steps_to_threshold(rows: &[MetricsRow], threshold: f64, window: usize) -> Option<u64> {
    let w = window.max(1);
    for i in 0..rows.len() {
        let lo = (i + 1).saturating_sub(w);
        let mean = rows[lo..=i]
            .iter()
            .map(|r| r.eval_success_rate)
            .sum::<f64>()
            / (i - lo + 1) as f64;
        if mean >= threshold {
            return Some(rows[i].env_step);
        }
    }
    None
}

/// Windowed mean of the final `window` evaluation points.
pub fn final_success(rows: &[MetricsRow], window: usize) -> f64 {
    let w = window.max(1).min(rows.len());
    if w == 0 {
        return 0.0;
    }
    rows[rows.len() - w..]
        .iter()
        .map(|r| r.eval_success_rate)
        .sum::<f64>()
        / w as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone)]
pub struct PlotCurve {
    pub label: String,
    /// One metrics series per seed; series are aligned on env_step.
    pub seeds: Vec<Vec<MetricsRow>>,
}

/// Mean and standard error (sample std over sqrt n) per evaluation point.
pub fn curve_stats(seeds: &[Vec<MetricsRow>]) -> Vec<(u64, f64, f64)> {
    let n = seeds.len();
    if n == 0 {
        return Vec::new();
    }
    let points = seeds.iter().map(|s| s.len()).min().unwrap_or(0);
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        let xs: Vec<f64> = seeds.iter().map(|s| s[i].eval_success_rate).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        out.push((seeds[0][i].env_step, mean, stderr));
    }
    out
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Learning-curve SVG: one mean line per curve with a shaded standard-error
/// band, success rate on the y axis.
pub fn emit_plot(curves: &[PlotCurve], path: &Path) -> Result<()> {
    if curves.is_empty() || curves.iter().all(|c| c.seeds.is_empty()) {
        return Err(RlvError::Config("emit_plot needs at least one curve".into()));
    }
    let (w, h, ml, mb, mt, mr) = (720.0, 420.0, 70.0, 50.0, 20.0, 20.0);
    let max_step = curves
        .iter()
        .flat_map(|c| curve_stats(&c.seeds))
        .map(|(s, _, _)| s)
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let x = |step: f64| ml + (w - ml - mr) * step / max_step;
    let y = |v: f64| (h - mb) - (h - mb - mt) * v.clamp(0.0, 1.0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect width="{w}" height="{h}" fill="white"/><g stroke="#333" stroke-width="1">"##
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}"/><line x1="{ml}" y1="{}" x2="{}" y2="{}"/></g>"#,
        h - mb,
        h - mb,
        w - mr,
        h - mb
    );
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{v:.1}</text>"#,
            ml - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">env steps (max {max_step})</text>"#,
        (ml + w - mr) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-size="12" transform="rotate(-90 16 {})" text-anchor="middle">eval success rate</text>"#,
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0
    );

    for (ci, curve) in curves.iter().enumerate() {
        let stats = curve_stats(&curve.seeds);
        if stats.is_empty() {
            continue;
        }
        let color = PALETTE[ci % PALETTE.len()];
        // Standard-error band as a closed polygon.
        let mut band = String::new();
        for (s, m, e) in &stats {
            let _ = write!(band, "{:.2},{:.2} ", x(*s as f64), y(m + e));
        }
        for (s, m, e) in stats.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", x(*s as f64), y(m - e));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let mut line = String::new();
        for (s, m, _) in &stats {
            let _ = write!(line, "{:.2},{:.2} ", x(*s as f64), y(*m));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.trim_end()
        );
        let ly = mt + 16.0 * ci as f64 + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="12">{}</text>"#,
            ml + 10.0,
            ml + 34.0,
            ml + 40.0,
            ly + 4.0,
            curve.label
        );
    }
    let _ = writeln!(svg, "</svg>");
    fs::write(path, svg)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GenDataConfig {
    pub env: Env,
    pub sac: SacConfig,
    /// Env steps of SAC training for the behavior policy; snapshots are
    /// taken at these fractions of the budget.
    pub train_steps: u64,
    pub qualities: Vec<(String, f64)>,
    pub trajectories: usize,
    pub pairs: usize,
    pub iso: IsomorphismSpec,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl GenDataConfig {
    pub fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        let mut kv = Kv { map };
        let env = env_from_kv(&mut kv)?;
        let sac = sac_from_kv(&mut kv)?;
        let dim = env.obs_dim();
        let iso = IsomorphismSpec {
            scale: kv.list("gen.iso_scale", vec![1.0; dim])?,
            offset: kv.list("gen.iso_offset", vec![0.0; dim])?,
            perm: match kv.get("gen.iso_perm") {
                None => None,
                Some(v) => Some(
                    v.split(',')
                        .map(|p| {
                            p.trim().parse().map_err(|_| {
                                RlvError::Config(format!("bad gen.iso_perm entry {p:?}"))
                            })
                        })
                        .collect::<Result<Vec<usize>>>()?,
                ),
            },
            action_scale: None,
        };
        let names: Vec<String> = kv.list(
            "gen.qualities",
            vec!["low".into(), "medium".into(), "high".into()],
        )?;
        let qualities = names
            .into_iter()
            .map(|n| {
                let frac = match n.as_str() {
                    "low" => 0.1,
                    "medium" => 0.4,
                    "high" => 1.0,
                    other => {
                        return Err(RlvError::Config(format!("unknown quality {other:?}")))
                    }
                };
                Ok((n, frac))
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = Self {
            env,
            sac,
            train_steps: kv.parse("gen.train_steps", 20_000u64)?,
            qualities,
            trajectories: kv.parse("gen.trajectories", 50usize)?,
            pairs: kv.parse("gen.pairs", 314usize)?,
            iso,
            out_dir: PathBuf::from(kv.get("out.dir").unwrap_or_else(|| "data".into())),
            seed: kv.parse("gen.seed", 0u64)?,
        };
        kv.finish()?;
        cfg.iso.validate()?;
        Ok(cfg)
    }
}

/// Train a SAC behavior policy, snapshotting the learner at each requested
/// fraction of the step budget.
fn train_snapshots(
    env: &Env,
    sac: &SacConfig,
    total: u64,
    fracs: &[f64],
    seed: u64,
) -> Result<Vec<SacLearner>> {
    let mut learner = SacLearner::new(
        env.obs_dim(),
        env.action_space(),
        sac.clone(),
        ChaCha8Rng::seed_from_u64(seed),
    )?;
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(2);
    let space = env.action_space();
    let mut pool = ReplayPool::new(DEFAULT_INTERACTION_CAPACITY);
    let mut state = env.reset(&mut env_rng);
    let marks: Vec<u64> = fracs
        .iter()
        .map(|f| ((total as f64) * f).ceil().max(1.0) as u64)
        .collect();
    let mut snapshots = Vec::new();
    let explore = sac.initial_exploration_steps as u64;
    for step in 1..=total {
        let action = if step <= explore {
            space.sample_uniform(&mut env_rng)
        } else {
            learner.select_action(&state.obs, SelectMode::Stochastic)?
        };
        let out = env.step(&state, &action)?;
        pool.insert(Transition {
            s: state.obs.clone(),
            a: action.to_vec(space.vec_dim()),
            s_next: out.next.obs.clone(),
            r: out.reward,
            terminal: out.done && env.is_success(out.reward),
        })?;
        state = if out.done {
            env.reset(&mut env_rng)
        } else {
            out.next
        };
        if step > explore {
            learner.train_step(&pool)?;
        }
        for (i, &m) in marks.iter().enumerate() {
            if m == step {
                while snapshots.len() <= i {
                    snapshots.push(learner.clone());
                }
            }
        }
    }
    while snapshots.len() < fracs.len() {
        snapshots.push(learner.clone());
    }
    Ok(snapshots)
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub quality: String,
    pub path: PathBuf,
    pub records: usize,
}

/// Produce one observation dataset (with a ground-truth sidecar) per quality
/// tier plus the cross-domain paired set.
pub fn generate_datasets(cfg: &GenDataConfig) -> Result<Vec<GeneratedDataset>> {
    fs::create_dir_all(&cfg.out_dir)?;
    let fracs: Vec<f64> = cfg.qualities.iter().map(|(_, f)| *f).collect();
    let snapshots = train_snapshots(&cfg.env, &cfg.sac, cfg.train_steps, &fracs, cfg.seed)?;
    let header = DatasetHeader {
        schema: 1,
        env: cfg.env.name().into(),
        obs_dim: cfg.env.obs_dim(),
        act_dim: cfg.env.action_space().vec_dim(),
    };
    let mut outputs = Vec::new();
    for ((name, _), snapshot) in cfg.qualities.iter().zip(snapshots) {
        let mut learner = snapshot;
        let mut policy = |obs: &[f64], _rng: &mut ChaCha8Rng| -> Action {
            learner
                .select_action(obs, SelectMode::Stochastic)
                .expect("policy rollout")
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(10);
        let (obs, gt) = generate_observation_dataset(
            &cfg.env,
            &cfg.iso,
            &mut policy,
            cfg.trajectories,
            &mut rng,
        )?;
        let path = cfg.out_dir.join(format!("obs_{name}.jsonl"));
        write_obs_dataset(&path, &header, &obs)?;
        write_sidecar(&path, &header, &gt)?;
        outputs.push(GeneratedDataset {
            quality: name.clone(),
            path,
            records: obs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(11);
    let pairs = build_paired_set(&cfg.env, &cfg.iso, cfg.pairs, &mut rng)?;
    let paired_path = cfg.out_dir.join("paired.jsonl");
    write_paired_dataset(&paired_path, &header, &pairs)?;
    outputs.push(GeneratedDataset {
        quality: "paired".into(),
        path: paired_path,
        records: pairs.len(),
    });
    Ok(outputs)
}

#[cfg(test)]
mod tests;
