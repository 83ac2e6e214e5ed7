//! Scalable benchmark problems: ZDT (1–4, 6), DTLZ (1–7) and LSMOP (1–9),
//! with analytic reference-front samplers.

use std::f64::consts::{E, FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{FeLedger, Phase};
use crate::parallel;
pub use crate::population::{Population, Space};
use crate::seed;

/// LSMOP subcomponent count per objective group.
pub const LSMOP_SUBCOMPONENTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Zdt,
    Dtlz,
    Lsmop,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Zdt => "ZDT",
            Suite::Dtlz => "DTLZ",
            Suite::Lsmop => "LSMOP",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zdt" => Ok(Suite::Zdt),
            "dtlz" => Ok(Suite::Dtlz),
            "lsmop" => Ok(Suite::Lsmop),
            other => Err(Error::param(
                "suite",
                format!("unknown suite `{other}` (expected zdt, dtlz or lsmop)"),
            )),
        }
    }
}

/// Variable grouping of an LSMOP instance.
#[derive(Debug, Clone, PartialEq)]
struct LsmopLayout {
    /// Subcomponent length per objective.
    sublen: Vec<usize>,
    /// Start offset (relative to the first distance variable) of each objective's group.
    group_start: Vec<usize>,
}

impl LsmopLayout {
    fn new(m: usize, d: usize) -> Result<Self> {
        let mut chaos = vec![3.8 * 0.1 * (1.0 - 0.1)];
        for _ in 1..m {
            let last = *chaos.last().unwrap();
            chaos.push(3.8 * last * (1.0 - last));
        }
        let total: f64 = chaos.iter().sum();
        let distance_vars = (d - m + 1) as f64;
        let sublen: Vec<usize> = chaos
            .iter()
            .map(|c| (c / total * distance_vars / LSMOP_SUBCOMPONENTS as f64).floor() as usize)
            .collect();
        if sublen.contains(&0) {
            return Err(Error::param(
                "d",
                format!("d={d} is too small for LSMOP grouping with m={m}: every objective needs at least one variable per subcomponent"),
            ));
        }
        let mut group_start = Vec::with_capacity(m);
        let mut acc = 0;
        for &s in &sublen {
            group_start.push(acc);
            acc += s * LSMOP_SUBCOMPONENTS;
        }
        Ok(Self {
            sublen,
            group_start,
        })
    }
}

/// A box-constrained multi-objective benchmark problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MopInstance {
    pub id: String,
    pub suite: Suite,
    pub index: usize,
    pub m: usize,
    pub d: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    lsmop: Option<LsmopLayout>,
}

/// Builds a benchmark instance.
pub fn make_problem(suite: Suite, index: usize, m: usize, d: usize) -> Result<MopInstance> {
    match suite {
        Suite::Zdt => {
            if !matches!(index, 1..=4 | 6) {
                return Err(Error::param(
                    "index",
                    format!("ZDT{index} is not supported (available: 1, 2, 3, 4, 6)"),
                ));
            }
            if m != 2 {
                return Err(Error::param("m", format!("ZDT requires m=2, got {m}")));
            }
            if d < 2 {
                return Err(Error::param("d", format!("ZDT requires d ≥ 2, got {d}")));
            }
        }
        Suite::Dtlz => {
            if !(1..=7).contains(&index) {
                return Err(Error::param(
                    "index",
                    format!("DTLZ{index} is not supported (available: 1–7)"),
                ));
            }
            if !(2..=3).contains(&m) {
                return Err(Error::param("m", format!("DTLZ requires m ∈ {{2,3}}, got {m}")));
            }
            if d < m {
                return Err(Error::param("d", format!("DTLZ requires d ≥ m, got d={d}, m={m}")));
            }
        }
        Suite::Lsmop => {
            if !(1..=9).contains(&index) {
                return Err(Error::param(
                    "index",
                    format!("LSMOP{index} is not supported (available: 1–9)"),
                ));
            }
            if !(2..=3).contains(&m) {
                return Err(Error::param("m", format!("LSMOP requires m ∈ {{2,3}}, got {m}")));
            }
            if d < m {
                return Err(Error::param("d", format!("LSMOP requires d ≥ m, got d={d}, m={m}")));
            }
        }
    }

    let (lower, upper) = match suite {
        Suite::Zdt if index == 4 => {
            let mut lo = vec![-5.0; d];
            let mut hi = vec![5.0; d];
            lo[0] = 0.0;
            hi[0] = 1.0;
            (lo, hi)
        }
        Suite::Lsmop => {
            let mut hi = vec![10.0; d];
            hi[..m - 1].iter_mut().for_each(|v| *v = 1.0);
            (vec![0.0; d], hi)
        }
        _ => (vec![0.0; d], vec![1.0; d]),
    };
    let lsmop = match suite {
        Suite::Lsmop => Some(LsmopLayout::new(m, d)?),
        _ => None,
    };
    Ok(MopInstance {
        id: format!("{}{}-m{}-d{}", suite.name(), index, m, d),
        suite,
        index,
        m,
        d,
        lower,
        upper,
        lsmop,
    })
}

impl MopInstance {
    /// Objective vector of one decision vector. Panics if `x.len() != d`.
    pub fn evaluate_vector(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d, "decision vector length");
        match self.suite {
            Suite::Zdt => zdt(self.index, x),
            Suite::Dtlz => dtlz(self.index, self.m, x),
            Suite::Lsmop => lsmop(self.index, self.m, self.lsmop.as_ref().unwrap(), x),
        }
    }

    /// Fills in the objectives of a raw population; charges `N` evaluations to `phase`.
    pub fn evaluate(&self, pop: &Population, ledger: &FeLedger, phase: Phase) -> Result<Population> {
        if pop.space != Space::Raw {
            return Err(Error::param("space", "only raw-space populations can be evaluated"));
        }
        if pop.dim() != self.d {
            return Err(Error::Dimension(format!(
                "population has d={}, instance {} has d={}",
                pop.dim(),
                self.id,
                self.d
            )));
        }
        if let Some((row, col)) = pop.decisions.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        let rows = parallel::map_indexed(pop.size(), |r| self.evaluate_vector(pop.decisions.row(r)));
        ledger.record(phase, pop.size() as u64);
        let objectives = Matrix::from_rows(&rows).unwrap_or_else(|| Matrix::zeros(0, self.m));
        let mut out = pop.clone();
        out.objectives = Some(objectives);
        Ok(out)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn clamp_matrix(&self, decisions: &mut Matrix) {
        for r in 0..decisions.rows() {
            self.clamp(decisions.row_mut(r));
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// `N` vectors drawn componentwise uniformly within bounds.
    pub fn random_population(&self, n: usize, seed: u64) -> Result<Population> {
        self.uniform_population(n, &mut seed::stream(seed, seed::labels::INITIAL_POPULATION, 0))
    }

    pub fn uniform_population<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Population> {
        if n < 2 {
            return Err(Error::param("N", format!("population size must be ≥ 2, got {n}")));
        }
        let mut decisions = Matrix::zeros(n, self.d);
        for r in 0..n {
            for (c, v) in decisions.row_mut(r).iter_mut().enumerate() {
                *v = self.lower[c] + (self.upper[c] - self.lower[c]) * rng.random::<f64>();
            }
        }
        Ok(Population::new(0, decisions, Space::Raw))
    }

    /// `n` points on the true Pareto front.
    pub fn sample_reference_front(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::param("n", "reference front size must be ≥ 1"));
        }
        let m = self.m;
        let pts = match (self.suite, self.index) {
            (Suite::Zdt, 1 | 4) => line(n, |t| vec![t, 1.0 - t.sqrt()]),
            (Suite::Zdt, 2) => line(n, |t| vec![t, 1.0 - t * t]),
            (Suite::Zdt, 3) => filtered_curve(n, |f1| {
                vec![f1, 1.0 - f1.sqrt() - f1 * (10.0 * PI * f1).sin()]
            }),
            (Suite::Zdt, 6) => {
                // Smallest f1 reachable: min over x of 1 - exp(-4x) sin^6(6πx).
                let f1_min = 0.280_775_319_1;
                line(n, |t| {
                    let f1 = f1_min + (1.0 - f1_min) * t;
                    vec![f1, 1.0 - f1 * f1]
                })
            }
            (Suite::Dtlz, 1) => simplex(n, m, 0.5),
            (Suite::Dtlz, 2..=4) | (Suite::Lsmop, 5..=8) => sphere(n, m),
            (Suite::Dtlz, 5 | 6) if m == 2 => sphere(n, m),
            (Suite::Dtlz, 5 | 6) => line(n, |t| {
                let th = t * FRAC_PI_2;
                let c = th.cos() * std::f64::consts::FRAC_1_SQRT_2;
                vec![c, c, th.sin()]
            }),
            (Suite::Dtlz, 7) | (Suite::Lsmop, 9) => disconnected(n, m),
            (Suite::Lsmop, 1..=4) => simplex(n, m, 1.0),
            _ => {
                return Err(Error::param(
                    "index",
                    format!("{} has no closed-form front", self.id),
                ))
            }
        };
        Ok(pts)
    }
}

fn line(n: usize, f: impl Fn(f64) -> Vec<f64>) -> Vec<Vec<f64>> {
    if n == 1 {
        return vec![f(0.0)];
    }
    (0..n).map(|i| f(i as f64 / (n - 1) as f64)).collect()
}

/// Points of a linear front `Σ f = total`.
fn simplex(n: usize, m: usize, total: f64) -> Vec<Vec<f64>> {
    if m == 2 {
        return line(n, |t| vec![total * t, total * (1.0 - t)]);
    }
    r2_sequence(n)
        .into_iter()
        .map(|(mut u, mut v)| {
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            vec![total * u, total * v, total * (1.0 - u - v)]
        })
        .collect()
}

/// Points on the positive orthant of the unit sphere.
fn sphere(n: usize, m: usize) -> Vec<Vec<f64>> {
    if m == 2 {
        return line(n, |t| {
            let th = t * FRAC_PI_2;
            vec![th.cos(), th.sin()]
        });
    }
    // Archimedes: z uniform with uniform azimuth is area-uniform.
    r2_sequence(n)
        .into_iter()
        .map(|(u, v)| {
            let phi = u * FRAC_PI_2;
            let r = (1.0 - v * v).max(0.0).sqrt();
            vec![r * phi.cos(), r * phi.sin(), v]
        })
        .collect()
}

/// Low-discrepancy points in the unit square.
fn r2_sequence(n: usize) -> Vec<(f64, f64)> {
    // Plastic constant.
    let g = 1.324_717_957_244_746_f64;
    let (a1, a2) = (1.0 / g, 1.0 / (g * g));
    (0..n)
        .map(|i| {
            let i = i as f64;
            ((0.5 + a1 * i).fract(), (0.5 + a2 * i).fract())
        })
        .collect()
}

/// Dense sample of a bi-objective curve over `f1 ∈ [0,1]`, filtered to its
/// non-dominated part and thinned to `n` points.
fn filtered_curve(n: usize, f: impl Fn(f64) -> Vec<f64>) -> Vec<Vec<f64>> {
    let mut grid = (n * 20).max(2000);
    loop {
        let mut kept: Vec<Vec<f64>> = Vec::new();
        let mut best = f64::INFINITY;
        for i in 0..grid {
            let p = f(i as f64 / (grid - 1) as f64);
            if p[1] < best {
                best = p[1];
                kept.push(p);
            }
        }
        if kept.len() >= n {
            return thin(kept, n);
        }
        grid *= 2;
    }
}

/// DTLZ7-style disconnected front with `1 + g = 2`.
fn disconnected(n: usize, m: usize) -> Vec<Vec<f64>> {
    let last = |head: &[f64]| -> f64 {
        let h = m as f64
            - head
                .iter()
                .map(|&fi| fi / 2.0 * (1.0 + (3.0 * PI * fi).sin()))
                .sum::<f64>();
        2.0 * h
    };
    if m == 2 {
        return filtered_curve(n, |f1| vec![f1, last(&[f1])]);
    }
    let mut grid = 64usize;
    loop {
        let mut cands = Vec::with_capacity(grid * grid);
        for i in 0..grid {
            for j in 0..grid {
                let head = [i as f64 / (grid - 1) as f64, j as f64 / (grid - 1) as f64];
                cands.push(vec![head[0], head[1], last(&head)]);
            }
        }
        let mat = Matrix::from_rows(&cands).unwrap();
        let keep = crate::metrics::nondominated_indices(&mat);
        if keep.len() >= n || grid >= 1024 {
            let kept: Vec<Vec<f64>> = keep.into_iter().map(|i| cands[i].clone()).collect();
            return thin(kept, n);
        }
        grid *= 2;
    }
}

fn thin(points: Vec<Vec<f64>>, n: usize) -> Vec<Vec<f64>> {
    let s = points.len();
    if s <= n {
        return points;
    }
    (0..n).map(|i| points[i * s / n].clone()).collect()
}

fn zdt(index: usize, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let tail = &x[1..];
    let f1 = match index {
        6 => 1.0 - (-4.0 * x[0]).exp() * (6.0 * PI * x[0]).sin().powi(6),
        _ => x[0],
    };
    let g = match index {
        4 => {
            1.0 + 10.0 * (n - 1) as f64
                + tail
                    .iter()
                    .map(|v| v * v - 10.0 * (4.0 * PI * v).cos())
                    .sum::<f64>()
        }
        6 => 1.0 + 9.0 * (tail.iter().sum::<f64>() / (n - 1) as f64).powf(0.25),
        _ => 1.0 + 9.0 * tail.iter().sum::<f64>() / (n - 1) as f64,
    };
    let r = f1 / g;
    let h = match index {
        2 | 6 => 1.0 - r * r,
        3 => 1.0 - r.sqrt() - r * (10.0 * PI * f1).sin(),
        _ => 1.0 - r.sqrt(),
    };
    vec![f1, g * h]
}

/// `f_j = scale · Π_{i<m-1-j} pos(i) · (j>0 ? rest(m-1-j) : 1)`.
fn shape(m: usize, scale: &[f64], pos: impl Fn(usize) -> f64, rest: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..m)
        .map(|j| {
            let mut f = scale[j];
            for i in 0..m - 1 - j {
                f *= pos(i);
            }
            if j > 0 {
                f *= rest(m - 1 - j);
            }
            f
        })
        .collect()
}

fn dtlz(index: usize, m: usize, x: &[f64]) -> Vec<f64> {
    let tail = &x[m - 1..];
    let k = tail.len() as f64;
    let rastrigin_g = || {
        100.0
            * (k + tail
                .iter()
                .map(|v| (v - 0.5).powi(2) - (20.0 * PI * (v - 0.5)).cos())
                .sum::<f64>())
    };
    let sphere_g = || tail.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>();
    match index {
        1 => {
            let g = rastrigin_g();
            shape(m, &vec![0.5 * (1.0 + g); m], |i| x[i], |i| 1.0 - x[i])
        }
        2..=4 => {
            let g = if index == 3 { rastrigin_g() } else { sphere_g() };
            let alpha = if index == 4 { 100 } else { 1 };
            let a = |i: usize| x[i].powi(alpha) * FRAC_PI_2;
            shape(m, &vec![1.0 + g; m], |i| a(i).cos(), |i| a(i).sin())
        }
        5 | 6 => {
            let g = if index == 5 {
                sphere_g()
            } else {
                tail.iter().map(|v| v.powf(0.1)).sum::<f64>()
            };
            let theta = |i: usize| {
                if i == 0 {
                    x[0] * FRAC_PI_2
                } else {
                    PI / (4.0 * (1.0 + g)) * (1.0 + 2.0 * g * x[i])
                }
            };
            shape(m, &vec![1.0 + g; m], |i| theta(i).cos(), |i| theta(i).sin())
        }
        7 => {
            let g = 1.0 + 9.0 / k * tail.iter().sum::<f64>();
            let mut f: Vec<f64> = x[..m - 1].to_vec();
            let h = m as f64
                - f.iter()
                    .map(|fi| fi / (1.0 + g) * (1.0 + (3.0 * PI * fi).sin()))
                    .sum::<f64>();
            f.push((1.0 + g) * h);
            f
        }
        _ => unreachable!("validated in make_problem"),
    }
}

#[derive(Clone, Copy)]
enum Landscape {
    Sphere,
    Griewank,
    Schwefel,
    Rastrigin,
    Rosenbrock,
    Ackley,
}

impl Landscape {
    fn eval(self, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        match self {
            Landscape::Sphere => y.iter().map(|v| v * v).sum(),
            Landscape::Griewank => {
                let s: f64 = y.iter().map(|v| v * v).sum::<f64>() / 4000.0;
                let p: f64 = y
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                    .product();
                s - p + 1.0
            }
            Landscape::Schwefel => y.iter().fold(0.0, |a, v| a.max(v.abs())),
            Landscape::Rastrigin => y
                .iter()
                .map(|v| v * v - 10.0 * (2.0 * PI * v).cos() + 10.0)
                .sum(),
            Landscape::Rosenbrock => y
                .windows(2)
                .map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2))
                .sum(),
            Landscape::Ackley => {
                let s2: f64 = y.iter().map(|v| v * v).sum::<f64>() / n;
                let sc: f64 = y.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
                20.0 - 20.0 * (-0.2 * s2.sqrt()).exp() - sc.exp() + E
            }
        }
    }
}

/// (landscape for odd objectives, landscape for even objectives), 1-based.
fn lsmop_landscapes(index: usize) -> (Landscape, Landscape) {
    use Landscape::*;
    match index {
        1 | 5 => (Sphere, Sphere),
        2 => (Griewank, Schwefel),
        3 => (Rastrigin, Rosenbrock),
        4 => (Ackley, Griewank),
        6 => (Rosenbrock, Schwefel),
        7 => (Ackley, Rosenbrock),
        8 => (Griewank, Sphere),
        9 => (Sphere, Ackley),
        _ => unreachable!("validated in make_problem"),
    }
}

fn lsmop(index: usize, m: usize, layout: &LsmopLayout, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let big_d = d as f64;
    let linear_linkage = index <= 4;
    // Variable linkage on the distance variables.
    let y: Vec<f64> = (m - 1..d)
        .map(|k| {
            let i = (k + 1) as f64;
            let factor = if linear_linkage {
                1.0 + i / big_d
            } else {
                1.0 + (FRAC_PI_2 * i / big_d).cos()
            };
            factor * x[k] - 10.0 * x[0]
        })
        .collect();
    let (odd, even) = lsmop_landscapes(index);
    let g: Vec<f64> = (0..m)
        .map(|obj| {
            let land = if obj % 2 == 0 { odd } else { even };
            let len = layout.sublen[obj];
            let start = layout.group_start[obj];
            let total: f64 = (0..LSMOP_SUBCOMPONENTS)
                .map(|j| land.eval(&y[start + j * len..start + (j + 1) * len]))
                .sum();
            total / (len * LSMOP_SUBCOMPONENTS) as f64
        })
        .collect();
    match index {
        1..=4 => {
            let scale: Vec<f64> = g.iter().map(|gi| 1.0 + gi).collect();
            shape(m, &scale, |i| x[i], |i| 1.0 - x[i])
        }
        5..=8 => {
            let scale: Vec<f64> = (0..m)
                .map(|j| 1.0 + g[j] + if j + 1 < m { g[j + 1] } else { 0.0 })
                .collect();
            shape(
                m,
                &scale,
                |i| (x[i] * FRAC_PI_2).cos(),
                |i| (x[i] * FRAC_PI_2).sin(),
            )
        }
        9 => {
            let gs = 1.0 + g.iter().sum::<f64>();
            let mut f: Vec<f64> = x[..m - 1].to_vec();
            let h = m as f64
                - f.iter()
                    .map(|fi| fi / (1.0 + gs) * (1.0 + (3.0 * PI * fi).sin()))
                    .sum::<f64>();
            f.push((1.0 + gs) * h);
            f
        }
        _ => unreachable!("validated in make_problem"),
    }
}
