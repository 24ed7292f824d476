use crate::network::Checkpoint;

/// The best `capacity` checkpoints seen so far, ordered by validation F1
/// descending and, on equal F1, earlier epoch first.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKTracker {
    capacity: usize,
    entries: Vec<Checkpoint>,
}

fn ranks_before(a: &Checkpoint, b: &Checkpoint) -> bool {
    a.val_f1 > b.val_f1 || (a.val_f1 == b.val_f1 && a.epoch < b.epoch)
}

impl TopKTracker {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "tracker capacity must be at least 1");
        Self {
            capacity,
            entries: Vec::with_capacity(capacity + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Inserts `checkpoint` if it ranks among the best `capacity`. Returns
    /// whether it was kept.
    pub fn offer(&mut self, checkpoint: Checkpoint) -> bool {
        let pos = self
            .entries
            .iter()
            .position(|e| ranks_before(&checkpoint, e))
            .unwrap_or(self.entries.len());
        if pos >= self.capacity {
            return false;
        }
        self.entries.insert(pos, checkpoint);
        self.entries.truncate(self.capacity);
        true
    }

    pub fn entries(&self) -> &[Checkpoint] {
        &self.entries
    }

    pub fn best(&self) -> Option<&Checkpoint> {
        self.entries.first()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_entries(self) -> Vec<Checkpoint> {
        self.entries
    }
}
