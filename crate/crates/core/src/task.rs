//! Segmentation task kinds shared across the workspace.

use serde::{Deserialize, Serialize};

/// The three instruction-driven segmentation task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Interactive,
    Referring,
    Reasoning,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Interactive, Task::Referring, Task::Reasoning];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Interactive => "interactive",
            Task::Referring => "referring",
            Task::Reasoning => "reasoning",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
