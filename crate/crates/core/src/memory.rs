//! Storage accounting for snapshot and basis data.
//!
//! Counters are bumped where the matrices are allocated, so the reported
//! figures are what the algorithms actually held, not formulas.

/// Current and peak number of stored scalar entries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StorageCounter {
    current: usize,
    peak: usize,
}

impl StorageCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, entries: usize) {
        self.current += entries;
        self.peak = self.peak.max(self.current);
    }

    pub fn free(&mut self, entries: usize) {
        self.current = self.current.saturating_sub(entries);
    }

    /// Replaces the live total (e.g. after a truncation).
    pub fn set(&mut self, entries: usize) {
        self.current = entries;
        self.peak = self.peak.max(entries);
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn peak(&self) -> usize {
        self.peak
    }
}

/// Entry counts expressed in the units `n` and `n²` of a problem of size `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryFigure {
    pub entries: usize,
    pub n: usize,
}

impl MemoryFigure {
    pub fn new(entries: usize, n: usize) -> Self {
        MemoryFigure { entries, n }
    }

    /// Multiples of `n`.
    pub fn in_n(&self) -> f64 {
        self.entries as f64 / self.n.max(1) as f64
    }

    /// Multiples of `n²`.
    pub fn in_n2(&self) -> f64 {
        self.entries as f64 / (self.n.max(1) as f64).powi(2)
    }

    /// `"200n"`
    pub fn label_n(&self) -> String {
        format!("{:.0}n", self.in_n())
    }

    /// `"18n^2"`
    pub fn label_n2(&self) -> String {
        format!("{:.0}n^2", self.in_n2())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_survives_frees() {
        let mut c = StorageCounter::new();
        c.alloc(10);
        c.alloc(5);
        c.free(12);
        c.alloc(1);
        assert_eq!((c.current(), c.peak()), (4, 15));
    }

    #[test]
    fn labels_pick_a_unit() {
        assert_eq!(MemoryFigure::new(200 * 100, 100).label_n(), "200n");
        assert_eq!(MemoryFigure::new(18 * 100 * 100, 100).label_n2(), "18n^2");
    }
}
