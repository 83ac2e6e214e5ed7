//! NSGA-II, used to record the evolutionary trajectories EmoDM learns from.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{dominates_unchecked, FeLedger, Phase};
use crate::problems::{MopInstance, Population, Space, Suite};
use crate::seed;

/// Fast non-dominated sort. Fronts are returned best first; indices inside a
/// front are ascending.
pub fn fast_nondominated_sort(objectives: &Matrix) -> Vec<Vec<usize>> {
    let n = objectives.rows();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in p + 1..n {
            let (a, b) = (objectives.row(p), objectives.row(q));
            if dominates_unchecked(a, b) {
                dominated_by[p].push(q);
                domination_count[q] += 1;
            } else if dominates_unchecked(b, a) {
                dominated_by[q].push(p);
                domination_count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each row of a front's objective matrix.
///
/// Boundary rows of every objective get `+∞`; interior rows accumulate
/// `(next - prev) / range` per objective. Sort ties break by row index.
pub fn crowding_distance(front: &Matrix) -> Vec<f64> {
    let k = front.rows();
    let mut dist = vec![0.0; k];
    if k <= 2 {
        return vec![f64::INFINITY; k];
    }
    let mut order: Vec<usize> = (0..k).collect();
    for obj in 0..front.cols() {
        order.sort_by(|&a, &b| {
            front
                .get(a, obj)
                .total_cmp(&front.get(b, obj))
                .then(a.cmp(&b))
        });
        let lo = front.get(order[0], obj);
        let hi = front.get(order[k - 1], obj);
        dist[order[0]] = f64::INFINITY;
        dist[order[k - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..k - 1 {
            let gap = front.get(order[w + 1], obj) - front.get(order[w - 1], obj);
            dist[order[w]] += gap / range;
        }
    }
    dist
}

/// Non-domination rank and crowding distance of every row.
pub fn rank_and_crowding(objectives: &Matrix) -> (Vec<usize>, Vec<f64>) {
    let n = objectives.rows();
    let mut rank = vec![0; n];
    let mut crowd = vec![0.0; n];
    for (r, front) in fast_nondominated_sort(objectives).iter().enumerate() {
        let cd = crowding_distance(&objectives.select_rows(front));
        for (&i, c) in front.iter().zip(cd) {
            rank[i] = r;
            crowd[i] = c;
        }
    }
    (rank, crowd)
}

/// SBX and polynomial-mutation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variation {
    pub pc: f64,
    pub eta_c: f64,
    /// Per-variable mutation probability.
    pub pm: f64,
    pub eta_m: f64,
}

impl Variation {
    /// `pc = 1`, `eta_c = 20`, `pm = 1/d`, `eta_m = 20`.
    pub fn defaults_for(d: usize) -> Self {
        Self {
            pc: 1.0,
            eta_c: 20.0,
            pm: 1.0 / d as f64,
            eta_m: 20.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pc) {
            return Err(Error::param("pc", format!("must lie in [0,1], got {}", self.pc)));
        }
        if !(0.0..=1.0).contains(&self.pm) {
            return Err(Error::param("pm", format!("must lie in [0,1], got {}", self.pm)));
        }
        if !(self.eta_c > 0.0) {
            return Err(Error::param("eta_c", "must be > 0"));
        }
        if !(self.eta_m > 0.0) {
            return Err(Error::param("eta_m", "must be > 0"));
        }
        Ok(())
    }
}

const SBX_EPS: f64 = 1e-14;

fn sbx_pair<R: Rng>(
    rng: &mut R,
    a: &mut [f64],
    b: &mut [f64],
    eta: f64,
    lower: &[f64],
    upper: &[f64],
) {
    for i in 0..a.len() {
        if rng.random::<f64>() > 0.5 || (a[i] - b[i]).abs() <= SBX_EPS {
            continue;
        }
        let (yl, yu) = (lower[i], upper[i]);
        let (y1, y2) = if a[i] < b[i] { (a[i], b[i]) } else { (b[i], a[i]) };
        let u = rng.random::<f64>();
        let spread = |beta: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let bq1 = spread(1.0 + 2.0 * (y1 - yl) / (y2 - y1));
        let bq2 = spread(1.0 + 2.0 * (yu - y2) / (y2 - y1));
        let c1 = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(yl, yu);
        let c2 = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(yl, yu);
        if rng.random::<f64>() <= 0.5 {
            a[i] = c2;
            b[i] = c1;
        } else {
            a[i] = c1;
            b[i] = c2;
        }
    }
}

fn polynomial_mutation<R: Rng>(
    rng: &mut R,
    x: &mut [f64],
    pm: f64,
    eta: f64,
    lower: &[f64],
    upper: &[f64],
) {
    for i in 0..x.len() {
        if rng.random::<f64>() >= pm {
            continue;
        }
        let (yl, yu) = (lower[i], upper[i]);
        let span = yu - yl;
        let y = x[i];
        let d1 = (y - yl) / span;
        let d2 = (yu - y) / span;
        let r = rng.random::<f64>();
        let pow = 1.0 / (eta + 1.0);
        let dq = if r <= 0.5 {
            let val = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1).powf(eta + 1.0);
            val.powf(pow) - 1.0
        } else {
            let val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - val.powf(pow)
        };
        x[i] = (y + dq * span).clamp(yl, yu);
    }
}

fn tournament<R: Rng>(rng: &mut R, rank: &[usize], crowd: &[f64]) -> usize {
    let n = rank.len();
    let a = rng.random_range(0..n);
    let b = rng.random_range(0..n);
    let better = |x: usize, y: usize| {
        rank[x] < rank[y] || (rank[x] == rank[y] && crowd[x] > crowd[y])
    };
    match (better(a, b), better(b, a)) {
        (true, _) => a,
        (_, true) => b,
        _ => a.min(b),
    }
}

/// Produces `N` offspring from a population with objectives: binary
/// tournament on (rank, crowding), SBX, polynomial mutation, clamped to bounds.
pub fn vary<R: Rng>(
    parents: &Population,
    rng: &mut R,
    variation: &Variation,
    lower: &[f64],
    upper: &[f64],
) -> Result<Population> {
    variation.validate()?;
    let objectives = parents.objectives()?;
    let (rank, crowd) = rank_and_crowding(objectives);
    let n = parents.size();
    let mut out = Matrix::zeros(n, parents.dim());
    let mut r = 0;
    while r < n {
        let p1 = tournament(rng, &rank, &crowd);
        let p2 = tournament(rng, &rank, &crowd);
        let mut c1 = parents.decisions.row(p1).to_vec();
        let mut c2 = parents.decisions.row(p2).to_vec();
        if rng.random::<f64>() < variation.pc {
            sbx_pair(rng, &mut c1, &mut c2, variation.eta_c, lower, upper);
        }
        for c in [&mut c1, &mut c2] {
            polynomial_mutation(rng, c, variation.pm, variation.eta_m, lower, upper);
            for ((v, lo), hi) in c.iter_mut().zip(lower).zip(upper) {
                *v = v.clamp(*lo, *hi);
            }
        }
        out.row_mut(r).copy_from_slice(&c1);
        if r + 1 < n {
            out.row_mut(r + 1).copy_from_slice(&c2);
        }
        r += 2;
    }
    Ok(Population::new(parents.step + 1, out, Space::Raw))
}

/// Elitist survivor selection: whole fronts in rank order, the last partial
/// front by descending crowding distance (ties to the lower index).
pub fn environmental_selection(objectives: &Matrix, n: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(n);
    for front in fast_nondominated_sort(objectives) {
        if chosen.len() + front.len() <= n {
            chosen.extend_from_slice(&front);
            if chosen.len() == n {
                break;
            }
        } else {
            let cd = crowding_distance(&objectives.select_rows(&front));
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| cd[b].total_cmp(&cd[a]).then(front[a].cmp(&front[b])));
            chosen.extend(order.into_iter().take(n - chosen.len()).map(|i| front[i]));
            break;
        }
    }
    chosen
}

/// Generation-by-generation record of one NSGA-II run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionaryTrajectory {
    pub problem_id: String,
    pub suite: Suite,
    pub index: usize,
    pub m: usize,
    pub d: usize,
    pub n: usize,
    /// Generation count, equal to the diffusion step count.
    pub t: usize,
    pub seed: u64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `t + 1` populations in evolutionary order; index 0 is the random start.
    pub generations: Vec<Population>,
}

impl EvolutionaryTrajectory {
    /// Prompt for diffusion step `step`: generation `T - step`. Step 0 is the
    /// final population, step `T` the initial one.
    pub fn prompt(&self, step: usize) -> &Population {
        &self.generations[self.t - step]
    }

    pub fn initial(&self) -> &Population {
        &self.generations[0]
    }

    pub fn last(&self) -> &Population {
        &self.generations[self.t]
    }

    pub fn validate(&self) -> Result<()> {
        if self.generations.len() != self.t + 1 {
            return Err(Error::Inconsistent(format!(
                "{}: {} generations recorded for T={}",
                self.problem_id,
                self.generations.len(),
                self.t
            )));
        }
        for (g, pop) in self.generations.iter().enumerate() {
            pop.validate()?;
            let obj = pop.objectives()?;
            if pop.size() != self.n || pop.dim() != self.d || obj.cols() != self.m {
                return Err(Error::Inconsistent(format!(
                    "{}: generation {g} has shape N={} d={} m={}",
                    self.problem_id,
                    pop.size(),
                    pop.dim(),
                    obj.cols()
                )));
            }
        }
        Ok(())
    }
}

/// Runs NSGA-II for `t` generations of population `n`, recording every
/// generation's survivors. Charges `n·(t+1)` evaluations.
pub fn nsga2_run(
    instance: &MopInstance,
    n: usize,
    t: usize,
    seed: u64,
    ledger: &FeLedger,
) -> Result<EvolutionaryTrajectory> {
    nsga2_run_with(instance, n, t, seed, &Variation::defaults_for(instance.d), ledger)
}

/// Checks an NSGA-II population size and generation count.
pub fn validate_run_size(n: usize, t: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::param("N", format!("population size must be even and ≥ 2, got {n}")));
    }
    if t < 1 {
        return Err(Error::param("T", "generation count must be ≥ 1"));
    }
    Ok(())
}

pub fn nsga2_run_with(
    instance: &MopInstance,
    n: usize,
    t: usize,
    seed: u64,
    variation: &Variation,
    ledger: &FeLedger,
) -> Result<EvolutionaryTrajectory> {
    validate_run_size(n, t)?;
    variation.validate()?;
    let phase = Phase::TrajectoryGeneration;
    let mut rng = seed::stream(seed, seed::labels::VARIATION, 0);
    let mut current = instance.evaluate(&instance.random_population(n, seed)?, ledger, phase)?;
    let mut generations = Vec::with_capacity(t + 1);
    generations.push(current.clone());
    for gen in 1..=t {
        let offspring = vary(&current, &mut rng, variation, &instance.lower, &instance.upper)?;
        let offspring = instance.evaluate(&offspring, ledger, phase)?;
        let decisions = current.decisions.vstack(&offspring.decisions);
        let objectives = current.objectives()?.vstack(offspring.objectives()?);
        let keep = environmental_selection(&objectives, n);
        current = Population {
            step: gen,
            decisions: decisions.select_rows(&keep),
            objectives: Some(objectives.select_rows(&keep)),
            space: Space::Raw,
        };
        generations.push(current.clone());
    }
    Ok(EvolutionaryTrajectory {
        problem_id: instance.id.clone(),
        suite: instance.suite,
        index: instance.index,
        m: instance.m,
        d: instance.d,
        n,
        t,
        seed,
        lower: instance.lower.clone(),
        upper: instance.upper.clone(),
        generations,
    })
}
