use serde::{Deserialize, Serialize};

/// What a model predicts at each time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// One real value per step, trained with masked MSE.
    Regression,
    /// A two-way class distribution per step, trained with target replication.
    Classification,
}

impl Task {
    /// Width of the output head.
    pub fn output_dim(self) -> usize {
        match self {
            Task::Regression => 1,
            Task::Classification => 2,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        })
    }
}
