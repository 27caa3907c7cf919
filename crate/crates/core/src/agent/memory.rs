use serde::{Deserialize, Serialize};

use super::react::ReActStep;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum MemoryItem {
    Step(ReActStep),
    Observation { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub index: usize,
    #[serde(flatten)]
    pub item: MemoryItem,
}

/// Append-only conversation memory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConversationMemory {
    entries: Vec<MemoryEntry>,
}

impl ConversationMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_step(&mut self, step: ReActStep) {
        self.push(MemoryItem::Step(step));
    }

    pub fn push_observation(&mut self, text: impl Into<String>) {
        self.push(MemoryItem::Observation { text: text.into() });
    }

    fn push(&mut self, item: MemoryItem) {
        let index = self.entries.len();
        self.entries.push(MemoryEntry { index, item });
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_observation(&self) -> Option<&str> {
        self.entries.iter().rev().find_map(|e| match &e.item {
            MemoryItem::Observation { text } => Some(text.as_str()),
            _ => None,
        })
    }

    /// Text form embedded in prompts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            match &e.item {
                MemoryItem::Step(s) => out.push_str(&format!("[{}] {}\n", e.index, s)),
                MemoryItem::Observation { text } => {
                    out.push_str(&format!("[{}] Observation: {}\n", e.index, text))
                }
            }
        }
        out
    }
}
