//! Replay storage: the standard buffer `D`, the elite buffer `D_e`, reward
//! threshold routing between them and stratified union sampling.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::{Action, Observation, Transition, ACTION_DIM, OBS_DIM};
use crate::error::{config, usage, Error, Result};

pub const DEFAULT_CAPACITY: usize = 1_000_000;
pub const DEFAULT_ELITE_CAPACITY: usize = 100_000;
pub const DEFAULT_ELITE_FRACTION: f64 = 0.25;

/// FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    storage: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            storage: Vec::new(),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn clear(&mut self) {
        self.storage.clear();
        self.cursor = 0;
    }

    /// Uniform draw with replacement.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Transition> {
        if self.storage.is_empty() {
            return usage("sampling from an empty replay buffer");
        }
        Ok(self.storage[rng.random_range(0..self.storage.len())])
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Transition>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity {
            0
        } else {
            self.cursor
        };
        self.storage[split..]
            .iter()
            .chain(self.storage[..split].iter())
    }
}

/// Buffer admitting only transitions whose reward beats the threshold in force
/// when they were pushed.
#[derive(Debug, Clone)]
pub struct EliteReplayBuffer {
    inner: ReplayBuffer,
    threshold: f64,
}

impl EliteReplayBuffer {
    pub fn new(capacity: usize, threshold: f64) -> Self {
        Self {
            inner: ReplayBuffer::new(capacity),
            threshold,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.inner
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    /// Stores `t` if `t.reward > zeta`; records `zeta` as the current threshold.
    pub fn offer(&mut self, t: Transition, zeta: f64) -> bool {
        self.threshold = zeta;
        if t.reward > zeta {
            self.inner.push(t);
            true
        } else {
            false
        }
    }

    pub fn clear(&mut self) {
        self.inner.clear();
    }
}

/// Sends `t` to the elite buffer when its reward exceeds `zeta`, else to `d`.
/// Returns whether it went to the elite buffer.
pub fn push_routed(
    t: Transition,
    zeta: f64,
    d: &mut ReplayBuffer,
    de: &mut EliteReplayBuffer,
) -> bool {
    if de.offer(t, zeta) {
        true
    } else {
        d.push(t);
        false
    }
}

/// Number of elite draws in a batch, given which buffers have data.
pub fn elite_count(d_len: usize, de_len: usize, batch_size: usize, elite_fraction: f64) -> usize {
    if de_len == 0 {
        0
    } else if d_len == 0 {
        batch_size
    } else {
        ((elite_fraction * batch_size as f64).round() as usize).min(batch_size)
    }
}

/// Stratified draw from `D ∪ D_e`: a fixed elite share, the rest from `D`,
/// shuffled together.
pub fn sample_union<R: Rng + ?Sized>(
    d: &ReplayBuffer,
    de: &EliteReplayBuffer,
    batch_size: usize,
    elite_fraction: f64,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    if !(0.0..=1.0).contains(&elite_fraction) {
        return config(format!("elite_fraction {elite_fraction} outside [0, 1]"));
    }
    if d.is_empty() && de.is_empty() {
        return usage("both replay buffers are empty");
    }
    let n_elite = elite_count(d.len(), de.len(), batch_size, elite_fraction);
    let mut batch = de.inner.sample(n_elite, rng)?;
    batch.extend(d.sample(batch_size - n_elite, rng)?);
    batch.shuffle(rng);
    Ok(batch)
}

/// How the elite threshold is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdMode {
    Fixed(f64),
    /// Running quantile of the most recent `window` rewards (fixed `initial`
    /// until the first reward arrives).
    Percentile {
        quantile: f64,
        window: usize,
        initial: f64,
    },
}

/// Tracks the elite threshold over a scope.
#[derive(Debug, Clone)]
pub struct Threshold {
    mode: ThresholdMode,
    recent: VecDeque<f64>,
    sorted: Vec<f64>,
}

impl Threshold {
    pub fn new(mode: ThresholdMode) -> Result<Self> {
        if let ThresholdMode::Percentile {
            quantile, window, ..
        } = mode
        {
            if !(0.0..=1.0).contains(&quantile) || window == 0 {
                return config("percentile threshold needs quantile in [0,1] and window > 0");
            }
        }
        Ok(Self {
            mode,
            recent: VecDeque::new(),
            sorted: Vec::new(),
        })
    }

    pub fn current(&self) -> f64 {
        match self.mode {
            ThresholdMode::Fixed(z) => z,
            ThresholdMode::Percentile {
                quantile, initial, ..
            } => {
                if self.sorted.is_empty() {
                    initial
                } else {
                    let idx = (quantile * (self.sorted.len() - 1) as f64).floor() as usize;
                    self.sorted[idx]
                }
            }
        }
    }

    pub fn observe(&mut self, reward: f64) {
        let ThresholdMode::Percentile { window, .. } = self.mode else {
            return;
        };
        if self.recent.len() == window {
            let old = self.recent.pop_front().unwrap();
            let i = self.sorted.partition_point(|&v| v < old);
            self.sorted.remove(i);
        }
        self.recent.push_back(reward);
        let i = self.sorted.partition_point(|&v| v < reward);
        self.sorted.insert(i, reward);
    }
}

const RECORD_MAGIC: &[u8; 8] = b"HASACRB1";
const RECORD_LEN: u32 = (2 * OBS_DIM + ACTION_DIM + 3) as u32;

/// Writes transitions as length-prefixed little-endian f64 records.
///
/// Layout: magic `HASACRB1`, u64 record count, then per record a u32 count of
/// f64 values followed by `state[9], action[4], reward, next_state[9], done, success`
/// (flags as 0.0 / 1.0).
pub fn dump_records<'a, W: Write>(
    out: &mut W,
    records: impl ExactSizeIterator<Item = &'a Transition>,
) -> Result<()> {
    out.write_all(RECORD_MAGIC)?;
    out.write_all(&(records.len() as u64).to_le_bytes())?;
    for t in records {
        out.write_all(&RECORD_LEN.to_le_bytes())?;
        let flag = |b: bool| if b { 1.0f64 } else { 0.0 };
        let values = t
            .state
            .0
            .iter()
            .chain(t.action.0.iter())
            .copied()
            .chain([t.reward])
            .chain(t.next_state.0.iter().copied())
            .chain([flag(t.done), flag(t.success)]);
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_records<R: Read>(input: &mut R) -> Result<Vec<Transition>> {
    let bad = |m: &str| Error::Checkpoint(format!("replay record file: {m}"));
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| bad("truncated header"))?;
    if &magic != RECORD_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut b8 = [0u8; 8];
    input
        .read_exact(&mut b8)
        .map_err(|_| bad("truncated header"))?;
    let count = u64::from_le_bytes(b8);
    let mut out = Vec::new();
    for i in 0..count {
        let mut b4 = [0u8; 4];
        input
            .read_exact(&mut b4)
            .map_err(|_| bad(&format!("truncated at record {i}")))?;
        if u32::from_le_bytes(b4) != RECORD_LEN {
            return Err(bad(&format!("record {i} has unexpected length")));
        }
        let mut vals = [0.0f64; RECORD_LEN as usize];
        for v in &mut vals {
            input
                .read_exact(&mut b8)
                .map_err(|_| bad(&format!("truncated at record {i}")))?;
            *v = f64::from_le_bytes(b8);
        }
        let mut state = [0.0; OBS_DIM];
        let mut action = [0.0; ACTION_DIM];
        let mut next = [0.0; OBS_DIM];
        state.copy_from_slice(&vals[..OBS_DIM]);
        action.copy_from_slice(&vals[OBS_DIM..OBS_DIM + ACTION_DIM]);
        let r = OBS_DIM + ACTION_DIM;
        next.copy_from_slice(&vals[r + 1..r + 1 + OBS_DIM]);
        out.push(Transition {
            state: Observation(state),
            action: Action(action),
            reward: vals[r],
            next_state: Observation(next),
            done: vals[r + 1 + OBS_DIM] != 0.0,
            success: vals[r + 2 + OBS_DIM] != 0.0,
        });
    }
    Ok(out)
}
