//! Environment and model datasets: FIFO ring buffers with uniform sampling,
//! a real/synthetic mixing sampler, and the `PBUF1` file format.
//!
//! File layout (little-endian): magic `PBUF1`, `u64` state_dim, `u64`
//! action_dim, `u64` count, then per transition (oldest first) the packed
//! `f64` values of `s`, `a`, `r`, `s'`, `done` (0 or 1).

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::codec::{read_file, Decoder, Encoder};
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"PBUF1";

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.r.is_finite()
            && self.s.iter().chain(&self.a).chain(&self.s_next).all(|x| x.is_finite())
    }
}

/// Column-stacked view of a set of transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions<'a>(
        items: impl ExactSizeIterator<Item = &'a Transition>,
        state_dim: usize,
        action_dim: usize,
    ) -> Self {
        let n = items.len();
        let mut b = Batch {
            states: Array2::zeros((n, state_dim)),
            actions: Array2::zeros((n, action_dim)),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, state_dim)),
            dones: Array1::zeros(n),
        };
        for (i, t) in items.enumerate() {
            b.states.row_mut(i).assign(&ndarray::aview1(&t.s));
            b.actions.row_mut(i).assign(&ndarray::aview1(&t.a));
            b.rewards[i] = t.r;
            b.next_states.row_mut(i).assign(&ndarray::aview1(&t.s_next));
            b.dones[i] = if t.done { 1.0 } else { 0.0 };
        }
        b
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Batch) -> Batch {
        use ndarray::{concatenate, Axis};
        Batch {
            states: concatenate![Axis(0), self.states, other.states],
            actions: concatenate![Axis(0), self.actions, other.actions],
            rewards: concatenate![Axis(0), self.rewards, other.rewards],
            next_states: concatenate![Axis(0), self.next_states, other.next_states],
            dones: concatenate![Axis(0), self.dones, other.dones],
        }
    }

    /// Concatenated `(s, a)` rows, the world-model input.
    pub fn state_actions(&self) -> Array2<f64> {
        ndarray::concatenate![ndarray::Axis(1), self.states, self.actions]
    }
}

/// Fixed-capacity FIFO of transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("buffer capacity must be positive"));
        }
        Ok(Self {
            capacity,
            state_dim,
            action_dim,
            storage: Vec::with_capacity(capacity.min(1 << 20)),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn clear(&mut self) {
        self.storage.clear();
        self.cursor = 0;
    }

    /// Appends a transition, evicting the oldest once the buffer is full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.s.len() != self.state_dim
            || t.s_next.len() != self.state_dim
            || t.a.len() != self.action_dim
        {
            return Err(Error::config(format!(
                "transition dims ({}, {}, {}) do not match buffer ({}, {})",
                t.s.len(),
                t.a.len(),
                t.s_next.len(),
                self.state_dim,
                self.action_dim
            )));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("transition pushed to replay buffer".into()));
        }
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        Ok(())
    }

    /// The `i`-th transition counting from the oldest.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.storage.len() {
            return None;
        }
        Some(&self.storage[(self.cursor + i) % self.storage.len()])
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Transition> {
        let n = self.storage.len();
        (0..n).map(move |i| &self.storage[(self.cursor + i) % n])
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(Error::EmptySource("sample from empty replay buffer".into()));
        }
        let len = self.storage.len();
        Ok((0..n).map(|_| rng.random_range(0..len)).collect())
    }

    /// Uniform sample with replacement over the current contents.
    pub fn sample_transitions<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| self.storage[i].clone())
            .collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(n, rng)?;
        Ok(Batch::from_transitions(
            idx.iter().map(|&i| &self.storage[i]),
            self.state_dim,
            self.action_dim,
        ))
    }

    /// Every stored transition as one batch, oldest first.
    pub fn to_batch(&self) -> Batch {
        Batch::from_transitions(self.iter(), self.state_dim, self.action_dim)
    }

    /// Uniformly sampled start states for model rollouts.
    pub fn sample_states<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        let idx = self.sample_indices(n, rng)?;
        let mut out = Array2::zeros((n, self.state_dim));
        for (row, &i) in idx.iter().enumerate() {
            out.row_mut(row).assign(&ndarray::aview1(&self.storage[i].s));
        }
        Ok(out)
    }

    fn encode(&self) -> Encoder {
        let mut enc = Encoder::new(MAGIC);
        enc.u64(self.state_dim as u64);
        enc.u64(self.action_dim as u64);
        enc.u64(self.len() as u64);
        for t in self.iter() {
            enc.f64s(t.s.iter().copied());
            enc.f64s(t.a.iter().copied());
            enc.f64(t.r);
            enc.f64s(t.s_next.iter().copied());
            enc.f64(if t.done { 1.0 } else { 0.0 });
        }
        enc
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.encode().into_bytes()
    }

    /// SHA-256 of the serialized contents.
    pub fn content_hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.encode().write_to(path.as_ref())
    }

    /// Decodes a buffer whose capacity equals its stored count (minimum 1).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, MAGIC)?;
        let state_dim = dec.len(1 << 20)?;
        let action_dim = dec.len(1 << 20)?;
        let count = dec.len(u64::MAX)?;
        let row = 2 * state_dim + action_dim + 2;
        if count.checked_mul(row * 8) != Some(dec.remaining()) {
            return Err(dec.error(format!(
                "expected {count} transitions of {row} values, found {} bytes",
                dec.remaining()
            )));
        }
        let mut buf = Self::new(count.max(1), state_dim, action_dim)?;
        for _ in 0..count {
            let at = dec.offset();
            let s = dec.f64s(state_dim)?;
            let a = dec.f64s(action_dim)?;
            let r = dec.f64()?;
            let s_next = dec.f64s(state_dim)?;
            let done = match dec.f64()? {
                0.0 => false,
                1.0 => true,
                other => return Err(dec.error(format!("done flag {other} is not 0 or 1"))),
            };
            buf.push(Transition { s, a, r, s_next, done })
                .map_err(|e| Error::Parse {
                    offset: at,
                    message: e.to_string(),
                })?;
        }
        dec.finish()?;
        Ok(buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

/// Draws agent batches from `D_env ∪ D_model`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixedSampler {
    pub real_ratio: f64,
}

impl MixedSampler {
    pub fn new(real_ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&real_ratio) {
            return Err(Error::config(format!("real_ratio {real_ratio} outside [0, 1]")));
        }
        Ok(Self { real_ratio })
    }

    /// Number of real transitions in a batch of `batch_size`: `round(ρ·B)`,
    /// with ties rounded up.
    pub fn real_count(&self, batch_size: usize) -> usize {
        let x = self.real_ratio * batch_size as f64;
        ((x + 0.5 + 1e-9).floor() as usize).min(batch_size)
    }

    /// Falls back to a single source when the other is empty.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        env: &ReplayBuffer,
        model: &ReplayBuffer,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Batch> {
        match (env.is_empty(), model.is_empty()) {
            (true, true) => Err(Error::EmptySource("both replay sources are empty".into())),
            (false, true) => env.sample(batch_size, rng),
            (true, false) => model.sample(batch_size, rng),
            (false, false) => {
                let n_real = self.real_count(batch_size);
                let real = env.sample(n_real, rng)?;
                let synth = model.sample(batch_size - n_real, rng)?;
                Ok(real.concat(&synth))
            }
        }
    }
}
