use serde::{Deserialize, Serialize};

use super::params::SIDE_LEN;
use crate::cnn::{HEAD_OUT, HIDDEN1, HIDDEN2};
use crate::nn::{FlopReport, FlopRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmArch {
    pub hidden: [usize; 3],
    pub hidden2: [usize; 3],
    /// Counts the gate biases as parameters (and their additions).
    pub bias: bool,
}

impl Default for LstmArch {
    fn default() -> Self {
        LstmArch {
            hidden: HIDDEN1,
            hidden2: HIDDEN2,
            bias: false,
        }
    }
}

/// Per-row accounting of the LSTM in the reference table's convention:
///
/// | row        | params  | adds            | mults      |
/// |------------|---------|-----------------|------------|
/// | i/o/g (×3) | 2h·h    | (2h−1)·h        | 2h·h       |
/// | c          | 2h·h    | (2h−1)·(h+1)    | 2h·h + 2h  |
/// | f'1        | 0       | h−1             | h          |
/// | f'2, y     | dense layers with the 5 side inputs       |||
///
/// The `c` and `f'1` addition counts are the table's constants expressed
/// as formulas; they do not follow from a single counting rule.
pub fn lstm_flop_report(arch: &LstmArch) -> FlopReport {
    let mut rows = Vec::new();
    let b = |h: u64| if arch.bias { h } else { 0 };
    for l in 0..3 {
        let h = arch.hidden[l] as u64;
        rows.push(FlopRow::new(format!("i/o/g-{}", l + 1), 2 * h * h + b(h), (2 * h - 1) * h + b(h), 2 * h * h).times(3));
    }
    for l in 0..3 {
        let h = arch.hidden[l] as u64;
        rows.push(FlopRow::new(
            format!("c-{}", l + 1),
            2 * h * h + b(h),
            (2 * h - 1) * (h + 1) + b(h),
            2 * h * h + 2 * h,
        ));
    }
    for l in 0..3 {
        let h = arch.hidden[l] as u64;
        rows.push(FlopRow::new(format!("f'1-{}", l + 1), 0, h - 1, h));
    }
    for l in 0..3 {
        rows.push(FlopRow::dense(format!("f'2-{}", l + 1), arch.hidden[l] + SIDE_LEN, arch.hidden2[l], false));
    }
    for l in 0..3 {
        rows.push(FlopRow::dense(format!("y'{}", l + 1), arch.hidden2[l] + SIDE_LEN, HEAD_OUT[l], false));
    }
    FlopReport::from_rows(rows)
}
