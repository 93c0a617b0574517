use serde::{Deserialize, Serialize};

/// Parameter and arithmetic counts for one table row. `count` is the number
/// of identical units the row stands for (e.g. three gates sharing a row).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopRow {
    pub name: String,
    pub count: u64,
    pub params: u64,
    pub adds: u64,
    pub mults: u64,
}

impl FlopRow {
    pub fn new(name: impl Into<String>, params: u64, adds: u64, mults: u64) -> Self {
        FlopRow {
            name: name.into(),
            count: 1,
            params,
            adds,
            mults,
        }
    }

    pub fn times(mut self, count: u64) -> Self {
        self.count = count;
        self
    }

    /// Dense `n → m` layer: `n·m` multiplications and `(n−1)·m` additions,
    /// plus `m` parameters and additions when a bias is present.
    pub fn dense(name: impl Into<String>, n: usize, m: usize, bias: bool) -> Self {
        let (n, m) = (n as u64, m as u64);
        let b = if bias { m } else { 0 };
        FlopRow::new(name, n * m + b, (n - 1) * m + b, n * m)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopReport {
    pub rows: Vec<FlopRow>,
    pub total_params: u64,
    pub total_adds: u64,
    pub total_mults: u64,
}

impl FlopReport {
    pub fn from_rows(rows: Vec<FlopRow>) -> Self {
        let sum = |f: fn(&FlopRow) -> u64| rows.iter().map(|r| r.count * f(r)).sum();
        FlopReport {
            total_params: sum(|r| r.params),
            total_adds: sum(|r| r.adds),
            total_mults: sum(|r| r.mults),
            rows,
        }
    }

    pub fn row(&self, name: &str) -> Option<&FlopRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Additions plus multiplications over the whole model.
    pub fn total_flops(&self) -> u64 {
        self.total_adds + self.total_mults
    }
}
