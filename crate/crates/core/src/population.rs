use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Coordinate frame of a population's decision matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Raw,
    Normalized,
}

/// `N` decision vectors, optionally with their objective vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    /// Generation index or diffusion step, depending on the producer.
    pub step: usize,
    pub decisions: Matrix,
    pub objectives: Option<Matrix>,
    pub space: Space,
}

impl Population {
    pub fn new(step: usize, decisions: Matrix, space: Space) -> Self {
        Self {
            step,
            decisions,
            objectives: None,
            space,
        }
    }

    pub fn with_objectives(mut self, objectives: Matrix) -> Result<Self> {
        if objectives.rows() != self.decisions.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} objective rows for {} decision rows",
                objectives.rows(),
                self.decisions.rows()
            )));
        }
        self.objectives = Some(objectives);
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.decisions.rows()
    }

    pub fn dim(&self) -> usize {
        self.decisions.cols()
    }

    pub fn objectives(&self) -> Result<&Matrix> {
        self.objectives
            .as_ref()
            .ok_or(Error::Empty("population objectives"))
    }

    /// Checks the row-count and finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        if let Some((row, col)) = self.decisions.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        if let Some(obj) = &self.objectives {
            if obj.rows() != self.decisions.rows() {
                return Err(Error::ShapeMismatch("objective/decision row counts".into()));
            }
            if let Some((row, col)) = obj.find_non_finite() {
                return Err(Error::ShapeMismatch(format!(
                    "non-finite objective at row {row}, column {col}"
                )));
            }
        }
        Ok(())
    }
}
