use serde::{Deserialize, Serialize};

/// One forecast case: the error of a point forecast for `target_year` made
/// `horizon` months before the end of that year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorObservation {
    pub case_id: String,
    pub target_year: i32,
    /// Months until the end of the target year, on the half-month grid.
    pub horizon: f64,
    /// Realization minus point forecast.
    pub error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_forecast: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realization: Option<f64>,
}

impl ErrorObservation {
    pub fn new(case_id: impl Into<String>, target_year: i32, horizon: f64, error: f64) -> Self {
        Self {
            case_id: case_id.into(),
            target_year,
            horizon,
            error,
            point_forecast: None,
            realization: None,
        }
    }
}
