//! Back-projection of delayed measurements.
//!
//! The filter keeps a bounded ring of (state, control) records. A measurement
//! stamped m epochs in the past is fused at its emission epoch and the stored
//! states are re-propagated forward through the recorded controls, so the head
//! state ends up identical to an in-order replay.

use std::collections::VecDeque;

use crate::motion_model::{Control, ProcessNoiseConfig};
use crate::split_cif::{self, SplitState};
use crate::{Error, Result};

/// Default capacity: 10 s of history at 20 Hz motion data.
pub const DEFAULT_CAPACITY: usize = 200;

/// Ring buffer of per-epoch estimates and the controls that produced them.
///
/// Entry j holds the state at its epoch together with the control that
/// advanced the previous epoch to it; the control of the oldest entry is only
/// kept for bookkeeping and never replayed.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    records: VecDeque<(SplitState, Control)>,
    capacity: usize,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            records: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    pub fn head(&self) -> Option<&SplitState> {
        self.records.back().map(|(s, _)| s)
    }

    pub fn tail_epoch(&self) -> Option<u64> {
        self.records.front().map(|(s, _)| s.epoch)
    }

    pub fn head_epoch(&self) -> Option<u64> {
        self.records.back().map(|(s, _)| s.epoch)
    }

    pub fn epochs(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().map(|(s, _)| s.epoch)
    }

    /// Append one epoch. Epochs must be contiguous; the oldest entry is
    /// evicted once capacity is exceeded.
    pub fn record_epoch(&mut self, state: SplitState, u: Control) -> Result<()> {
        if let Some(last) = self.head_epoch() {
            if state.epoch != last + 1 {
                return Err(Error::NonContiguousEpoch {
                    expected: last + 1,
                    got: state.epoch,
                });
            }
        }
        self.records.push_back((state, u));
        while self.records.len() > self.capacity {
            self.records.pop_front();
        }
        Ok(())
    }

    /// Replace the newest state in place, keeping its control.
    pub fn replace_head(&mut self, state: SplitState) {
        if let Some(back) = self.records.back_mut() {
            back.0 = state;
        }
    }

    /// Index of the stored epoch nearest to `stamp`, ties to the older epoch.
    fn nearest_index(&self, stamp: u64) -> Result<usize> {
        let tail = self.tail_epoch().ok_or(Error::EmptyHistory)?;
        let head = self.head_epoch().unwrap();
        if stamp < tail {
            return Err(Error::StaleMeasurement {
                stamp,
                oldest: tail,
            });
        }
        let clamped = stamp.min(head);
        Ok((clamped - tail) as usize)
    }

    /// Fuse a delayed measurement at its emission epoch and re-propagate the
    /// stored estimates forward through the recorded controls. `update_fn`
    /// performs the Split CIF update (screening and noise selection included)
    /// and returns the possibly unchanged state. Returns the new head state.
    pub fn apply_delayed<F>(
        &mut self,
        stamp: u64,
        update_fn: F,
        noise: &ProcessNoiseConfig,
    ) -> Result<SplitState>
    where
        F: FnOnce(&SplitState) -> SplitState,
    {
        let idx = self.nearest_index(stamp)?;
        let mut state = update_fn(&self.records[idx].0);
        self.records[idx].0 = state.clone();
        for j in idx + 1..self.records.len() {
            let u = self.records[j].1;
            state = split_cif::predict(&state, &u, noise);
            self.records[j].0 = state.clone();
        }
        Ok(self.records.back().unwrap().0.clone())
    }
}
