use serde::{Deserialize, Serialize};

use crate::cnn::{flop_report, CnnArch};
use crate::lstm::{lstm_flop_report, LstmArch};
use crate::nn::FlopReport;

/// `(row, params, additions, multiplications)` of the CNN reference table.
pub const CNN_TABLE: [(&str, u64, u64, u64); 18] = [
    ("C1-1", 256, 3_840, 4_096),
    ("C1-2", 256, 15_360, 16_384),
    ("C1-3", 256, 61_440, 65_536),
    ("C2-1", 1_536, 4_608, 6_144),
    ("C2-2", 1_536, 18_432, 24_576),
    ("C2-3", 1_536, 73_728, 98_304),
    ("C3-1", 3_072, 2_304, 3_072),
    ("C3-2", 3_072, 9_216, 12_288),
    ("C3-3", 3_072, 36_864, 49_152),
    ("f1-1", 172_032, 171_968, 172_032),
    ("f1-2", 344_064, 343_936, 344_064),
    ("f1-3", 688_128, 687_872, 688_128),
    ("f2-1", 3_120, 3_072, 3_120),
    ("f2-2", 12_384, 12_288, 12_384),
    ("f2-3", 49_344, 49_152, 49_344),
    ("y1", 49, 48, 49),
    ("y2", 388, 384, 388),
    ("y3", 3_088, 3_072, 3_088),
];
pub const CNN_TOTAL: (u64, u64, u64) = (1_287_189, 1_497_584, 1_552_149);

/// LSTM reference table; the i/o/g rows stand for one of three gates.
pub const LSTM_TABLE: [(&str, u64, u64, u64); 15] = [
    ("i/o/g-1", 8_192, 8_128, 8_192),
    ("i/o/g-2", 32_768, 32_640, 32_768),
    ("i/o/g-3", 131_072, 130_816, 131_072),
    ("c-1", 8_192, 8_255, 8_320),
    ("c-2", 32_768, 32_895, 33_024),
    ("c-3", 131_072, 131_327, 131_584),
    ("f'1-1", 0, 63, 64),
    ("f'1-2", 0, 127, 128),
    ("f'1-3", 0, 255, 256),
    ("f'2-1", 3_312, 3_264, 3_312),
    ("f'2-2", 12_768, 12_672, 12_768),
    ("f'2-3", 50_112, 49_920, 50_112),
    ("y'1", 53, 52, 53),
    ("y'2", 404, 400, 404),
    ("y'3", 3_152, 3_136, 3_152),
];
pub const LSTM_TOTAL: (u64, u64, u64) = (757_929, 757_118, 759_273);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCheck {
    pub table: String,
    pub row: String,
    pub column: String,
    pub expected: u64,
    pub actual: Option<u64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableReport {
    pub checks: Vec<CellCheck>,
    pub pass: bool,
}

impl TableReport {
    pub fn failures(&self) -> impl Iterator<Item = &CellCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// One line per failing cell, e.g. `cnn f1-1 params: expected 172032,
    /// got 172096 (+64)`.
    pub fn diff(&self) -> String {
        let mut s = String::new();
        for c in self.failures() {
            match c.actual {
                Some(a) => s.push_str(&format!(
                    "{} {} {}: expected {}, got {} ({:+})\n",
                    c.table,
                    c.row,
                    c.column,
                    c.expected,
                    a,
                    a as i64 - c.expected as i64
                )),
                None => s.push_str(&format!("{} {} {}: row missing\n", c.table, c.row, c.column)),
            }
        }
        s
    }
}

fn check(table: &str, report: &FlopReport, rows: &[(&str, u64, u64, u64)], total: (u64, u64, u64)) -> Vec<CellCheck> {
    let mut out = Vec::new();
    let mut push = |row: &str, column: &str, expected: u64, actual: Option<u64>| {
        out.push(CellCheck {
            table: table.into(),
            row: row.into(),
            column: column.into(),
            expected,
            actual,
            pass: actual == Some(expected),
        })
    };
    for &(name, p, a, m) in rows {
        let r = report.row(name);
        push(name, "params", p, r.map(|r| r.params));
        push(name, "adds", a, r.map(|r| r.adds));
        push(name, "mults", m, r.map(|r| r.mults));
    }
    push("total", "params", total.0, Some(report.total_params));
    push("total", "adds", total.1, Some(report.total_adds));
    push("total", "mults", total.2, Some(report.total_mults));
    out
}

/// Compares the computed accounting of both architectures with the
/// reference tables cell by cell.
pub fn verify_tables(cnn: &CnnArch, lstm: &LstmArch) -> TableReport {
    let mut checks = check("cnn", &flop_report(cnn), &CNN_TABLE, CNN_TOTAL);
    checks.extend(check("lstm", &lstm_flop_report(lstm), &LSTM_TABLE, LSTM_TOTAL));
    TableReport {
        pass: checks.iter().all(|c| c.pass),
        checks,
    }
}
