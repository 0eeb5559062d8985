use serde::{Deserialize, Serialize};

/// Auxiliary images (anything kept besides the current task's data) held
/// while training each task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StorageLedger {
    pub entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// 0-based task index.
    pub task: usize,
    pub aux_images: usize,
}

impl StorageLedger {
    pub fn record(&mut self, task: usize, aux_images: usize) {
        self.entries.push(LedgerEntry { task, aux_images });
    }

    pub fn peak(&self) -> usize {
        self.entries.iter().map(|e| e.aux_images).max().unwrap_or(0)
    }
}
