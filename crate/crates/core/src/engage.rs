//! Four-way student engagement labels from video engagement and assessment
//! performance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("engagement input out of [0, 1]: watch={watch}, grade={grade}")]
pub struct DomainError {
    pub watch: f64,
    pub grade: f64,
}

/// Ordered from lowest to highest engagement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EngagementLevel {
    AtRisk,
    PotentialAtRisk,
    NormalEngagement,
    HighEngagement,
}

impl EngagementLevel {
    pub const ALL: [EngagementLevel; 4] = [
        EngagementLevel::HighEngagement,
        EngagementLevel::NormalEngagement,
        EngagementLevel::PotentialAtRisk,
        EngagementLevel::AtRisk,
    ];

    /// Position in the one-hot student feature block.
    pub fn one_hot_index(self) -> usize {
        match self {
            EngagementLevel::HighEngagement => 0,
            EngagementLevel::NormalEngagement => 1,
            EngagementLevel::PotentialAtRisk => 2,
            EngagementLevel::AtRisk => 3,
        }
    }
}

/// Threshold rule. A student is High when both axes clear the high
/// thresholds, Normal when both clear the normal thresholds, PotentialAtRisk
/// when either does, and AtRisk otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngagementThresholds {
    pub v_high: f64,
    pub a_high: f64,
    pub v_normal: f64,
    pub a_normal: f64,
}

impl Default for EngagementThresholds {
    fn default() -> Self {
        Self {
            v_high: 0.7,
            a_high: 0.7,
            v_normal: 0.4,
            a_normal: 0.5,
        }
    }
}

impl EngagementThresholds {
    /// `mean_watch` is the mean watch fraction over the student's videos,
    /// `mean_grade` the mean final grade over attempted assessments (0 when
    /// none were attempted).
    pub fn label(&self, mean_watch: f64, mean_grade: f64) -> Result<EngagementLevel, DomainError> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(mean_watch) || !in_unit(mean_grade) {
            return Err(DomainError {
                watch: mean_watch,
                grade: mean_grade,
            });
        }
        let v_normal = mean_watch >= self.v_normal;
        let a_normal = mean_grade >= self.a_normal;
        Ok(
            if mean_watch >= self.v_high && mean_grade >= self.a_high && v_normal && a_normal {
                EngagementLevel::HighEngagement
            } else if v_normal && a_normal {
                EngagementLevel::NormalEngagement
            } else if v_normal || a_normal {
                EngagementLevel::PotentialAtRisk
            } else {
                EngagementLevel::AtRisk
            },
        )
    }
}

pub fn label_student(mean_watch: f64, mean_grade: f64) -> Result<EngagementLevel, DomainError> {
    EngagementThresholds::default().label(mean_watch, mean_grade)
}
