//! Pareto dominance, non-dominated filtering, IGD and function-evaluation
//! accounting. Minimization throughout.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::parallel;

/// `true` iff `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "objective vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// A (decision vector, objective vector) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub decision: Vec<f64>,
    pub objective: Vec<f64>,
}

/// Mutually non-dominated solutions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    points: Vec<Solution>,
}

impl ParetoArchive {
    pub fn points(&self) -> &[Solution] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn objectives(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|s| s.objective.clone()).collect()
    }

    pub fn into_points(self) -> Vec<Solution> {
        self.points
    }
}

/// Indices of the rows of `objectives` not dominated by any other row, in
/// ascending order. Rows with identical objective vectors are all kept.
pub fn nondominated_indices(objectives: &Matrix) -> Vec<usize> {
    let n = objectives.rows();
    let keep = parallel::map_indexed(n, |i| {
        let a = objectives.row(i);
        !(0..n).any(|j| j != i && dominates_unchecked(objectives.row(j), a))
    });
    keep.into_iter()
        .enumerate()
        .filter_map(|(i, k)| k.then_some(i))
        .collect()
}

/// Keeps exactly the points not dominated by any input point, preserving input
/// order.
pub fn nondominated_filter(points: &[Solution]) -> ParetoArchive {
    let kept = points
        .iter()
        .filter(|p| {
            !points
                .iter()
                .any(|q| dominates_unchecked(&q.objective, &p.objective))
        })
        .cloned()
        .collect();
    ParetoArchive { points: kept }
}

/// Inverted generational distance: mean over `reference` of the Euclidean
/// distance to the nearest `approximation` point.
pub fn igd<R, A>(reference: &[R], approximation: &[A]) -> Result<f64>
where
    R: AsRef<[f64]> + Sync,
    A: AsRef<[f64]> + Sync,
{
    if reference.is_empty() {
        return Err(Error::Empty("IGD reference set"));
    }
    if approximation.is_empty() {
        return Err(Error::Empty("IGD approximation set"));
    }
    let m = reference[0].as_ref().len();
    if let Some(bad) = reference
        .iter()
        .map(AsRef::as_ref)
        .chain(approximation.iter().map(AsRef::as_ref))
        .find(|p| p.len() != m)
    {
        return Err(Error::ShapeMismatch(format!(
            "IGD points of dimension {} and {}",
            m,
            bad.len()
        )));
    }
    let nearest = parallel::map(reference, |r| {
        let r = r.as_ref();
        approximation
            .iter()
            .map(|a| {
                r.iter()
                    .zip(a.as_ref())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    });
    Ok(nearest.iter().sum::<f64>() / reference.len() as f64)
}

/// Which budget an evaluation is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Evolutionary search producing training trajectories.
    TrajectoryGeneration,
    /// Reverse-diffusion similarity checks; the budget EmoDM is measured by.
    Sampling,
    /// Monitoring evaluations (IGD profiles, baselines) outside any budget.
    Diagnostics,
}

impl Phase {
    pub const ALL: [Phase; 3] = [
        Phase::TrajectoryGeneration,
        Phase::Sampling,
        Phase::Diagnostics,
    ];

    fn slot(self) -> usize {
        match self {
            Phase::TrajectoryGeneration => 0,
            Phase::Sampling => 1,
            Phase::Diagnostics => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::TrajectoryGeneration => "trajectory-generation",
            Phase::Sampling => "sampling",
            Phase::Diagnostics => "diagnostics",
        }
    }

    pub fn is_budgeted(self) -> bool {
        !matches!(self, Phase::Diagnostics)
    }
}

/// Monotone counters of objective-function evaluations per phase. Safe to
/// share between threads.
#[derive(Debug, Default)]
pub struct FeLedger {
    counts: [AtomicU64; 3],
}

impl FeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, phase: Phase, evaluations: u64) {
        self.counts[phase.slot()].fetch_add(evaluations, Ordering::Relaxed);
    }

    pub fn count(&self, phase: Phase) -> u64 {
        self.counts[phase.slot()].load(Ordering::Relaxed)
    }

    /// Sum of the budgeted phases (diagnostics excluded).
    pub fn budgeted_total(&self) -> u64 {
        Phase::ALL
            .iter()
            .filter(|p| p.is_budgeted())
            .map(|&p| self.count(p))
            .sum()
    }
}

impl fmt::Display for FeLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = Phase::ALL
            .iter()
            .map(|&p| format!("{}={}", p.name(), self.count(p)))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}
