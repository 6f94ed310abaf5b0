use crate::state::StateVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryStatus {
    Completed,
    /// The norm first reached the blow-up threshold at this time.
    Exploded(f64),
    /// The monitored region was left at this time.
    EscapedRegion(f64),
}

impl TrajectoryStatus {
    pub fn label(&self) -> String {
        match self {
            TrajectoryStatus::Completed => "completed".to_string(),
            TrajectoryStatus::Exploded(t) => format!("exploded at t={t}"),
            TrajectoryStatus::EscapedRegion(t) => format!("escaped region at t={t}"),
        }
    }
}

/// Sampled solution. `times` are relative to `start_time` and begin at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start_time: f64,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn exploded(&self) -> bool {
        matches!(self.status, TrajectoryStatus::Exploded(_))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &StateVector)> {
        self.times.iter().copied().zip(self.states.iter())
    }
}
