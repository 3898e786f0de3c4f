//! Replay pools and offline datasets: the mutable interaction pool, the
//! frozen observation pool (state pairs only, no actions or rewards), and the
//! frozen cross-domain paired set. Datasets serialize as JSON-lines with a
//! one-line header object.

use crate::env::{Action, Env, IsomorphismSpec, State};
use crate::error::{Result, RlvError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// One action-conditioned interaction sample. Discrete actions are stored
/// one-hot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    pub r: f64,
    pub terminal: bool,
}

/// One action-free observation sample. There are no action or reward fields
/// on this type; `traj_end` marks the final pair of its trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsTransition {
    pub s: Vec<f64>,
    pub s_next: Vec<f64>,
    pub traj_end: bool,
}

/// A cross-domain state pair; the two sides are images of one another under
/// the observer isomorphism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub s_int: Vec<f64>,
    pub s_obs: Vec<f64>,
}

/// Generator-side ground truth for one observation record, written to a
/// sidecar file. Only the gt_* ablations ever read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub a: Vec<f64>,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema: u32,
    pub env: String,
    pub obs_dim: usize,
    pub act_dim: usize,
}

/// Ring buffer with uniform with-replacement sampling. Frozen pools reject
/// inserts; D_obs and D_pair are frozen after construction.
#[derive(Debug, Clone)]
pub struct ReplayPool<T> {
    items: VecDeque<T>,
    capacity: usize,
    frozen: bool,
    inserted: u64,
}

pub const DEFAULT_INTERACTION_CAPACITY: usize = 1_000_000;

impl<T> ReplayPool<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: VecDeque::new(),
            capacity,
            frozen: false,
            inserted: 0,
        }
    }

    pub fn frozen_from(items: Vec<T>) -> Self {
        let inserted = items.len() as u64;
        let capacity = items.len().max(1);
        Self {
            items: items.into(),
            capacity,
            frozen: true,
            inserted,
        }
    }

    pub fn insert(&mut self, item: T) -> Result<()> {
        if self.frozen {
            return Err(RlvError::FrozenPool);
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
        self.inserted += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Uniform with replacement; deterministic given the rng state.
    pub fn sample_indices<R: Rng>(&self, k: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(RlvError::EmptyPool);
        }
        Ok((0..k).map(|_| rng.gen_range(0..self.items.len())).collect())
    }
}

// ---------------------------------------------------------------------------
// JSON-lines serialization
// ---------------------------------------------------------------------------

fn write_jsonl<T: Serialize>(path: &Path, header: &DatasetHeader, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(DatasetHeader, Vec<T>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| RlvError::Dataset(format!("{}: empty file", path.display())))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    if header.schema != 1 {
        return Err(RlvError::Dataset(format!(
            "unsupported schema {}",
            header.schema
        )));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok((header, records))
}

pub fn write_obs_dataset(
    path: &Path,
    header: &DatasetHeader,
    records: &[ObsTransition],
) -> Result<()> {
    write_jsonl(path, header, records)
}

pub fn read_obs_dataset(path: &Path) -> Result<(DatasetHeader, Vec<ObsTransition>)> {
    read_jsonl(path)
}

pub fn write_paired_dataset(
    path: &Path,
    header: &DatasetHeader,
    records: &[PairedSample],
) -> Result<()> {
    write_jsonl(path, header, records)
}

pub fn read_paired_dataset(path: &Path) -> Result<(DatasetHeader, Vec<PairedSample>)> {
    read_jsonl(path)
}

pub fn write_transitions(path: &Path, header: &DatasetHeader, records: &[Transition]) -> Result<()> {
    write_jsonl(path, header, records)
}

pub fn read_transitions(path: &Path) -> Result<(DatasetHeader, Vec<Transition>)> {
    read_jsonl(path)
}

pub fn sidecar_path(dataset_path: &Path) -> std::path::PathBuf {
    let mut p = dataset_path.as_os_str().to_owned();
    p.push(".sidecar");
    p.into()
}

pub fn write_sidecar(dataset_path: &Path, header: &DatasetHeader, gt: &[GtRecord]) -> Result<()> {
    write_jsonl(&sidecar_path(dataset_path), header, gt)
}

pub fn read_sidecar(dataset_path: &Path) -> Result<(DatasetHeader, Vec<GtRecord>)> {
    read_jsonl(&sidecar_path(dataset_path))
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

/// Roll out `policy` in the interaction env, map every state through the
/// observer isomorphism, and keep consecutive (s, s') pairs with `traj_end`
/// on each trajectory's final pair. Actions and rewards are never written to
/// the observation records; they go to the ground-truth sidecar only.
pub fn generate_observation_dataset<R: Rng>(
    env: &Env,
    iso: &IsomorphismSpec,
    policy: &mut dyn FnMut(&[f64], &mut R) -> Action,
    n_trajectories: usize,
    rng: &mut R,
) -> Result<(Vec<ObsTransition>, Vec<GtRecord>)> {
    iso.validate()?;
    if iso.dim() != env.obs_dim() {
        return Err(RlvError::Dataset(format!(
            "isomorphism dim {} does not match env obs dim {}",
            iso.dim(),
            env.obs_dim()
        )));
    }
    let act_dim = env.action_space().vec_dim();
    let mut obs = Vec::new();
    let mut gt = Vec::new();
    for _ in 0..n_trajectories {
        let mut state = env.reset(rng);
        let mut pending: Vec<(ObsTransition, GtRecord)> = Vec::new();
        loop {
            let action = policy(&state.obs, rng);
            let out = env.step(&state, &action)?;
            pending.push((
                ObsTransition {
                    s: iso.observe(&state.obs),
                    s_next: iso.observe(&out.next.obs),
                    traj_end: false,
                },
                GtRecord {
                    a: action.to_vec(act_dim),
                    r: out.reward,
                },
            ));
            if out.done {
                break;
            }
            state = out.next;
        }
        if let Some(last) = pending.last_mut() {
            last.0.traj_end = true;
        }
        for (o, g) in pending {
            obs.push(o);
            gt.push(g);
        }
    }
    Ok((obs, gt))
}

/// Sample states from random-action rollouts and pair each with its observer
/// image.
pub fn build_paired_set<R: Rng>(
    env: &Env,
    iso: &IsomorphismSpec,
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<PairedSample>> {
    iso.validate()?;
    let space = env.action_space();
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut state: Option<State> = None;
    while pairs.len() < n_pairs {
        let s = match state.take() {
            Some(s) => s,
            None => env.reset(rng),
        };
        pairs.push(PairedSample {
            s_int: s.obs.clone(),
            s_obs: iso.observe(&s.obs),
        });
        let out = env.step(&s, &space.sample_uniform(rng))?;
        if !out.done {
            state = Some(out.next);
        }
    }
    Ok(pairs)
}
