use std::fmt;

use serde::Serialize;

use crate::types::Label;

/// Token counts per label over a set of label sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelStats {
    pub table: u64,
    pub column: u64,
    pub value: u64,
    pub none: u64,
}

pub fn label_stats<'a, I>(sequences: I) -> LabelStats
where
    I: IntoIterator<Item = &'a [Label]>,
{
    let mut s = LabelStats::default();
    for seq in sequences {
        for l in seq {
            match l {
                &Label::T => s.table += 1,
                &Label::C => s.column += 1,
                &Label::V => s.value += 1,
                Label::None => s.none += 1,
            }
        }
    }
    s
}

impl LabelStats {
    pub fn total(&self) -> u64 {
        self.table + self.column + self.value + self.none
    }

    /// Rows of (name, count, percentage) in T, C, V, O order.
    pub fn rows(&self) -> [(&'static str, u64, f64); 4] {
        let total = self.total();
        let pct = |n: u64| if total == 0 { 0.0 } else { 100.0 * n as f64 / total as f64 };
        [
            ("Table", self.table, pct(self.table)),
            ("Column", self.column, pct(self.column)),
            ("Value", self.value, pct(self.value)),
            ("O", self.none, pct(self.none)),
        ]
    }
}

impl fmt::Display for LabelStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>10} {:>6}", "Entity", "Tokens", "%")?;
        for (name, n, p) in self.rows() {
            writeln!(f, "{name:<8} {n:>10} {p:>6.1}")?;
        }
        let total_pct = if self.total() == 0 { 0.0 } else { 100.0 };
        writeln!(f, "{:<8} {:>10} {:>6.1}", "Total", self.total(), total_pct)
    }
}
