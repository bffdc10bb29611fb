use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of K cells a shiftLSTM uses at each step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSchedule {
    pub t_len: usize,
    pub k: usize,
    /// Steps per block, `ceil(T / K)`.
    pub block: usize,
    /// Cell index for each step, 0-based step position.
    pub assignment: Vec<usize>,
}

/// Cells switch every `ceil(T/K)` steps; for 1-indexed `t` the cell is
/// `min(floor((t-1)/block), K-1)`. The last block is shorter when `K` does
/// not divide `T`.
pub fn shift_schedule(t_len: usize, k: usize) -> Result<ShiftSchedule> {
    if k < 1 || k > t_len {
        return Err(Error::invalid(format!(
            "shiftLSTM needs 1 <= K <= T, got K={k}, T={t_len}"
        )));
    }
    let block = t_len.div_ceil(k);
    let assignment = (0..t_len).map(|t| (t / block).min(k - 1)).collect();
    Ok(ShiftSchedule {
        t_len,
        k,
        block,
        assignment,
    })
}

impl ShiftSchedule {
    /// Number of distinct cells actually visited.
    pub fn distinct(&self) -> usize {
        let mut seen = self.assignment.clone();
        seen.dedup();
        seen.len()
    }
}
