use std::cmp::Ordering;

/// A point `(t, j)` of a hybrid time domain.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HybridTime {
    pub t: f64,
    pub j: usize,
}

impl HybridTime {
    pub fn new(t: f64, j: usize) -> Self {
        Self { t, j }
    }
}

impl PartialOrd for HybridTime {
    /// Lexicographic in `(t, j)`.
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.t.partial_cmp(&other.t)? {
            Ordering::Equal => Some(self.j.cmp(&other.j)),
            ord => Some(ord),
        }
    }
}

/// One jump of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    /// Hybrid time of the pre-jump state; the post-jump state lives at `(t, j + 1)`.
    pub time: HybridTime,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
    pub reason: String,
    /// Index of the pre-jump sample in the arc (the post-jump sample follows it).
    pub sample: usize,
}

impl JumpRecord {
    pub fn has_reason(&self, tag: &str) -> bool {
        self.reason.split('+').any(|r| r == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    MaxJumps,
}

/// A sampled solution of a hybrid system.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridArc {
    dim: usize,
    channel_names: Vec<String>,
    times: Vec<HybridTime>,
    states: Vec<f64>,
    channels: Vec<f64>,
    pub jumps: Vec<JumpRecord>,
    pub termination: Termination,
    /// Jumps whose image was outside `C` or still inside `D`.
    pub reentry_violations: usize,
}

impl HybridArc {
    pub fn new(dim: usize, channel_names: Vec<String>) -> Self {
        Self {
            dim,
            channel_names,
            times: Vec::new(),
            states: Vec::new(),
            channels: Vec::new(),
            jumps: Vec::new(),
            termination: Termination::Horizon,
            reentry_violations: 0,
        }
    }

    pub fn push(&mut self, time: HybridTime, x: &[f64], channels: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(channels.len(), self.channel_names.len());
        self.times.push(time);
        self.states.extend_from_slice(x);
        self.channels.extend_from_slice(channels);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[HybridTime] {
        &self.times
    }

    pub fn time(&self, k: usize) -> HybridTime {
        self.times[k]
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim.max(1))
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|c| c == name)
    }

    /// Values of a named channel at every sample.
    pub fn channel(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.channel_index(name)?;
        let width = self.channel_names.len();
        Some(
            self.channels
                .chunks_exact(width)
                .map(|row| row[idx])
                .collect(),
        )
    }

    pub fn channel_row(&self, k: usize) -> &[f64] {
        let width = self.channel_names.len();
        &self.channels[k * width..(k + 1) * width]
    }

    /// Values of state component `i` at every sample.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states().map(|x| x[i]).collect()
    }

    pub fn final_time(&self) -> HybridTime {
        *self.times.last().expect("arc has at least one sample")
    }

    /// Jumps whose reason includes `tag`.
    pub fn jumps_tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a JumpRecord> {
        self.jumps.iter().filter(move |r| r.has_reason(tag))
    }

    /// Raw sample data, used for hashing and serialization.
    pub(crate) fn raw(&self) -> (&[HybridTime], &[f64], &[f64]) {
        (&self.times, &self.states, &self.channels)
    }

    pub(crate) fn from_parts(
        dim: usize,
        channel_names: Vec<String>,
        times: Vec<HybridTime>,
        states: Vec<f64>,
        channels: Vec<f64>,
        jumps: Vec<JumpRecord>,
    ) -> Self {
        Self {
            dim,
            channel_names,
            times,
            states,
            channels,
            jumps,
            termination: Termination::Horizon,
            reentry_violations: 0,
        }
    }
}
