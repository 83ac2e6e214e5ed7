//! Forward training on reversed evolutionary trajectories and Pareto set
//! generation by reverse diffusion.
//!
//! Coordinates: each trained problem owns an affine transform that maps its
//! random initial population to zero mean and unit variance. Inside that
//! normalized space, step `t` additionally scales variable `k` by
//! `d · w_t[k]` (attention weights on the simplex, so uniform weights are the
//! identity). All noise statistics of step `t` live in that step's frame.
//!
//! The noise predictor `ε_θ(Z_t, t)` is a per-step, per-dimension linear
//! Gaussian regressor: `ε̂ = bias + gain · (Z_t − center)`, initialised from
//! the closed-form moments of the prompt pair and refined by least squares on
//! synthetic forward-noised pairs.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::attention::{self, AttentionWeights};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{self, FeLedger, Phase, Solution};
use crate::moea::EvolutionaryTrajectory;
use crate::parallel;
use crate::problems::{MopInstance, Population, Space, Suite};
use crate::seed::{self, StreamRng};

pub const ALPHA_MIN: f64 = 1e-4;
pub const ALPHA_MAX: f64 = 1.0 - 1e-4;
pub const NOISE_VAR_FLOOR: f64 = 1e-8;
/// Prompt variances closer than this to 1 carry no detectable noise.
const UNIT_VAR_TOL: f64 = 1e-6;
const STATE_VAR_FLOOR: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 50;
pub const SWEEP_TOL: f64 = 1e-6;
/// Synthetic replicates of each prompt row used by the training loss.
const LOSS_REPLICATES: usize = 4;

/// Per-dimension map `z = scale · x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineTransform {
    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn normalize(&self, raw: &Matrix) -> Matrix {
        let mut z = raw.clone();
        for r in 0..z.rows() {
            for (k, v) in z.row_mut(r).iter_mut().enumerate() {
                *v = self.scale[k] * *v + self.offset[k];
            }
        }
        z
    }

    pub fn denormalize(&self, z: &Matrix) -> Matrix {
        let mut x = z.clone();
        for r in 0..x.rows() {
            for (k, v) in x.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.offset[k]) / self.scale[k];
            }
        }
        x
    }

    pub fn truncated(&self, d: usize) -> Self {
        Self {
            scale: self.scale[..d].to_vec(),
            offset: self.offset[..d].to_vec(),
        }
    }
}

/// Transform sending the trajectory's initial population to zero mean and unit
/// variance per dimension. Constant dimensions get scale 1.
pub fn fit_transform(trajectory: &EvolutionaryTrajectory) -> AffineTransform {
    let (mean, var) = trajectory.initial().decisions.column_moments();
    let (scale, offset) = mean
        .iter()
        .zip(&var)
        .map(|(&mu, &v)| {
            // Rounding noise of a constant column is not spread.
            if v.sqrt() > f64::EPSILON * mu.abs().max(1.0) * 4.0 {
                let s = 1.0 / v.sqrt();
                (s, -mu * s)
            } else {
                (1.0, -mu)
            }
        })
        .unzip();
    AffineTransform { scale, offset }
}

/// Variance schedule and residual noise statistics of one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEstimate {
    pub alpha: f64,
    pub per_dim_alpha: Vec<f64>,
    pub noise_mean: Vec<f64>,
    pub noise_var: Vec<f64>,
}

/// Estimates `Z_curr = √α Z_prev + √(1−α) ε` at the distribution level.
///
/// Per dimension `α̂_k = (Var Z_curr − 1)/(Var Z_prev − 1)` clipped to
/// `[1e-4, 1-1e-4]` (neutral `1-1e-4` when `Var Z_prev ≈ 1`); `α` is their
/// mean. Noise mean and variance invert the transition given `α`.
pub fn estimate_step(z_prev: &Population, z_curr: &Population) -> Result<StepEstimate> {
    if z_prev.decisions.rows() != z_curr.decisions.rows()
        || z_prev.decisions.cols() != z_curr.decisions.cols()
    {
        return Err(Error::ShapeMismatch(format!(
            "prompt pair shapes {}×{} and {}×{}",
            z_prev.decisions.rows(),
            z_prev.decisions.cols(),
            z_curr.decisions.rows(),
            z_curr.decisions.cols()
        )));
    }
    if z_prev.dim() == 0 {
        return Err(Error::Empty("prompt decision variables"));
    }
    let (mp, vp) = z_prev.decisions.column_moments();
    let (mc, vc) = z_curr.decisions.column_moments();
    let per_dim_alpha: Vec<f64> = vp
        .iter()
        .zip(&vc)
        .map(|(&p, &c)| {
            if (p - 1.0).abs() > UNIT_VAR_TOL {
                ((c - 1.0) / (p - 1.0)).clamp(ALPHA_MIN, ALPHA_MAX)
            } else {
                ALPHA_MAX
            }
        })
        .collect();
    let alpha = per_dim_alpha.iter().sum::<f64>() / per_dim_alpha.len() as f64;
    let (sa, sb) = (alpha.sqrt(), (1.0 - alpha).sqrt());
    let noise_mean = mc.iter().zip(&mp).map(|(c, p)| (c - sa * p) / sb).collect();
    let noise_var = vc
        .iter()
        .zip(&vp)
        .map(|(c, p)| ((c - alpha * p) / (1.0 - alpha)).max(NOISE_VAR_FLOOR))
        .collect();
    Ok(StepEstimate {
        alpha,
        per_dim_alpha,
        noise_mean,
        noise_var,
    })
}

/// `Z_t = √α Z_prev + √(1−α) ε`, `ε` standard normal per entry.
pub fn forward_noising<R: Rng>(z_prev: &Population, alpha: f64, rng: &mut R) -> Result<Population> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    let (sa, sb) = (alpha.sqrt(), (1.0 - alpha).sqrt());
    let mut z = z_prev.decisions.clone();
    for v in z.as_mut_slice() {
        let e: f64 = rng.sample(StandardNormal);
        *v = sa * *v + sb * e;
    }
    Ok(Population {
        step: z_prev.step + 1,
        decisions: z,
        objectives: None,
        space: Space::Normalized,
    })
}

/// Linear Gaussian noise predictor `ε̂ = bias + gain · (z − center)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePredictor {
    pub bias: Vec<f64>,
    pub gain: Vec<f64>,
    pub center: Vec<f64>,
}

impl NoisePredictor {
    /// Posterior mean of the step noise given `Z_t` under the moment model.
    fn closed_form(est: &StepEstimate, state_mean: &[f64], state_var: &[f64]) -> Self {
        let sb = (1.0 - est.alpha).sqrt();
        let gain = est
            .noise_var
            .iter()
            .zip(state_var)
            .map(|(nv, v)| sb * nv / v.max(STATE_VAR_FLOOR))
            .collect();
        Self {
            bias: est.noise_mean.clone(),
            gain,
            center: state_mean.to_vec(),
        }
    }

    pub fn predict(&self, z: &Matrix) -> Matrix {
        let mut out = z.clone();
        for r in 0..out.rows() {
            for (k, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = self.bias[k] + self.gain[k] * (*v - self.center[k]);
            }
        }
        out
    }

    fn truncated(&self, d: usize) -> Self {
        Self {
            bias: self.bias[..d].to_vec(),
            gain: self.gain[..d].to_vec(),
            center: self.center[..d].to_vec(),
        }
    }
}

/// Trained statistics of one diffusion step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub t: usize,
    pub alpha: f64,
    pub alpha_bar: f64,
    pub noise_mean: Vec<f64>,
    pub noise_var: Vec<f64>,
    /// Moments of the prompt `Z_t` in this step's frame.
    pub state_mean: Vec<f64>,
    pub state_var: Vec<f64>,
    /// Variance of `Z_{t-1}` given `Z_t`; scale of the reverse-step noise.
    pub reverse_var: Vec<f64>,
    pub predictor: NoisePredictor,
    /// Per-dimension scale of this step's frame relative to normalized space.
    pub frame: Vec<f64>,
    pub attention: AttentionWeights,
    /// NMI signature of the raw prompt at this step.
    pub signature: f64,
}

impl StepEntry {
    pub fn beta(&self) -> f64 {
        1.0 - self.alpha
    }

    fn truncated(&self, d: usize) -> Self {
        let cut = |v: &Vec<f64>| v[..d].to_vec();
        Self {
            t: self.t,
            alpha: self.alpha,
            alpha_bar: self.alpha_bar,
            noise_mean: cut(&self.noise_mean),
            noise_var: cut(&self.noise_var),
            state_mean: cut(&self.state_mean),
            state_var: cut(&self.state_var),
            reverse_var: cut(&self.reverse_var),
            predictor: self.predictor.truncated(d),
            frame: cut(&self.frame),
            attention: AttentionWeights {
                step: self.attention.step,
                w: cut(&self.attention.w),
                avg_nmi: cut(&self.attention.avg_nmi),
                signature: self.attention.signature,
            },
            signature: self.signature,
        }
    }
}

/// Per-step noise models learned from one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub problem_id: String,
    pub suite: Suite,
    pub index: usize,
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub bins: usize,
    pub use_attention: bool,
    pub transform: AffineTransform,
    /// Entries for `t = 1..=T`, in order.
    pub steps: Vec<StepEntry>,
    /// Final value of the mean-squared noise-prediction loss.
    pub training_loss: f64,
    pub training_sweeps: usize,
}

impl NoiseModel {
    pub fn step(&self, t: usize) -> &StepEntry {
        &self.steps[t - 1]
    }

    /// Raw decisions → frame of step `t`.
    pub fn to_frame(&self, t: usize, raw: &Matrix) -> Matrix {
        let mut z = self.transform.normalize(raw);
        let frame = &self.step(t).frame;
        for r in 0..z.rows() {
            for (v, s) in z.row_mut(r).iter_mut().zip(frame) {
                *v *= s;
            }
        }
        z
    }

    /// Frame of step `t` → raw decisions.
    pub fn from_frame(&self, t: usize, z: &Matrix) -> Matrix {
        let mut u = z.clone();
        let frame = &self.step(t).frame;
        for r in 0..u.rows() {
            for (v, s) in u.row_mut(r).iter_mut().zip(frame) {
                *v /= s;
            }
        }
        self.transform.denormalize(&u)
    }

    /// Copy restricted to the leading `d` decision variables.
    pub fn restricted(&self, d: usize) -> Self {
        Self {
            d,
            transform: self.transform.truncated(d),
            steps: self.steps.iter().map(|s| s.truncated(d)).collect(),
            ..self.clone()
        }
    }
}

/// Library of trained noise models sharing the step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainedLibrary {
    pub entries: Vec<NoiseModel>,
    pub t: usize,
    pub m: usize,
    pub max_d: usize,
}

impl PretrainedLibrary {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Empty("library entries"));
        }
        for e in &self.entries {
            if e.t != self.t || e.steps.len() != self.t {
                return Err(Error::Inconsistent(format!(
                    "{} has T={} with {} steps, library T={}",
                    e.problem_id,
                    e.t,
                    e.steps.len(),
                    self.t
                )));
            }
            if e.m != self.m {
                return Err(Error::Inconsistent(format!(
                    "{} has m={}, library m={}",
                    e.problem_id, e.m, self.m
                )));
            }
        }
        Ok(())
    }
}

fn frame_of(att: &AttentionWeights) -> Vec<f64> {
    let d = att.w.len() as f64;
    att.w.iter().map(|w| w * d).collect()
}

fn scale_columns(m: &Matrix, s: &[f64]) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        for (v, f) in out.row_mut(r).iter_mut().zip(s) {
            *v *= f;
        }
    }
    out
}

/// Synthetic prompt pairs for the noise-prediction loss of one step: rows of
/// `Z_{t-1}` replicated, noise drawn from the step's moment model.
struct SyntheticPairs {
    noisy: Matrix,
    noise: Matrix,
}

fn synthetic_pairs(z_prev: &Matrix, est: &StepEstimate, rng: &mut StreamRng) -> SyntheticPairs {
    let d = z_prev.cols();
    let rows = z_prev.rows() * LOSS_REPLICATES;
    let mut noisy = Matrix::zeros(rows, d);
    let mut noise = Matrix::zeros(rows, d);
    let (sa, sb) = (est.alpha.sqrt(), (1.0 - est.alpha).sqrt());
    for r in 0..rows {
        let src = z_prev.row(r % z_prev.rows());
        for k in 0..d {
            let xi: f64 = rng.sample(StandardNormal);
            let e = est.noise_mean[k] + est.noise_var[k].sqrt() * xi;
            noise.set(r, k, e);
            noisy.set(r, k, sa * src[k] + sb * e);
        }
    }
    SyntheticPairs { noisy, noise }
}

/// Mean over rows of `‖ε − ε̂(Z_t)‖²`.
fn prediction_loss(pred: &NoisePredictor, pairs: &SyntheticPairs) -> f64 {
    let est = pred.predict(&pairs.noisy);
    let total: f64 = est
        .as_slice()
        .iter()
        .zip(pairs.noise.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    total / pairs.noise.rows() as f64
}

/// Per-dimension least-squares refit of bias and gain, keeping the center.
fn refit(pred: &NoisePredictor, pairs: &SyntheticPairs) -> NoisePredictor {
    let (mz, vz) = pairs.noisy.column_moments();
    let (me, _) = pairs.noise.column_moments();
    let n = pairs.noisy.rows() as f64;
    let d = pred.center.len();
    let mut cov = vec![0.0; d];
    for r in 0..pairs.noisy.rows() {
        for k in 0..d {
            cov[k] += (pairs.noisy.get(r, k) - mz[k]) * (pairs.noise.get(r, k) - me[k]);
        }
    }
    let gain: Vec<f64> = (0..d)
        .map(|k| {
            if vz[k] > STATE_VAR_FLOOR {
                cov[k] / n / vz[k]
            } else {
                pred.gain[k]
            }
        })
        .collect();
    let bias = (0..d)
        .map(|k| me[k] - gain[k] * (mz[k] - pred.center[k]))
        .collect();
    NoisePredictor {
        bias,
        gain,
        center: pred.center.clone(),
    }
}

struct StepFit {
    entry: StepEntry,
    pairs: SyntheticPairs,
}

fn fit_step(
    traj: &EvolutionaryTrajectory,
    transform: &AffineTransform,
    t: usize,
    bins: usize,
    use_attention: bool,
) -> Result<StepFit> {
    let raw_prev = traj.prompt(t - 1);
    let raw_curr = traj.prompt(t);
    let computed = attention::compute_attention_with_bins(raw_curr, bins)?;
    let att = if use_attention {
        AttentionWeights { step: t, ..computed }
    } else {
        AttentionWeights::uniform(t, traj.d, computed.signature)
    };
    let frame = frame_of(&att);
    let z_prev = scale_columns(&transform.normalize(&raw_prev.decisions), &frame);
    let z_curr = scale_columns(&transform.normalize(&raw_curr.decisions), &frame);
    let p_prev = Population::new(t - 1, z_prev, Space::Normalized);
    let p_curr = Population::new(t, z_curr, Space::Normalized);
    let est = estimate_step(&p_prev, &p_curr)?;
    let (state_mean, state_var) = p_curr.decisions.column_moments();
    let (_, prev_var) = p_prev.decisions.column_moments();
    let reverse_var = prev_var
        .iter()
        .zip(&state_var)
        .map(|(pv, v)| (pv - est.alpha * pv * pv / v.max(STATE_VAR_FLOOR)).max(0.0))
        .collect();
    let predictor = NoisePredictor::closed_form(&est, &state_mean, &state_var);
    let mut rng = seed::stream(traj.seed, "training-loss", t as u64);
    let pairs = synthetic_pairs(&p_prev.decisions, &est, &mut rng);
    let signature = att.signature;
    Ok(StepFit {
        entry: StepEntry {
            t,
            alpha: est.alpha,
            alpha_bar: 0.0,
            noise_mean: est.noise_mean,
            noise_var: est.noise_var,
            state_mean,
            state_var,
            reverse_var,
            predictor,
            frame,
            attention: att,
            signature,
        },
        pairs,
    })
}

/// Trains one noise model from a trajectory.
pub fn train_model(trajectory: &EvolutionaryTrajectory, use_attention: bool) -> Result<NoiseModel> {
    trajectory.validate()?;
    let transform = fit_transform(trajectory);
    let bins = attention::default_bins(trajectory.n);
    let t_steps = trajectory.t;
    let fits: Vec<Result<StepFit>> = parallel::map_indexed(t_steps, |i| {
        fit_step(trajectory, &transform, i + 1, bins, use_attention)
    });
    let mut fits: Vec<StepFit> = fits.into_iter().collect::<Result<_>>()?;

    let mut alpha_bar = 1.0;
    for f in &mut fits {
        alpha_bar *= f.entry.alpha;
        f.entry.alpha_bar = alpha_bar;
    }

    // Refine the predictors until the loss stops improving.
    let loss_of = |fits: &[StepFit]| {
        fits.iter()
            .map(|f| prediction_loss(&f.entry.predictor, &f.pairs))
            .sum::<f64>()
            / fits.len() as f64
    };
    let mut loss = loss_of(&fits);
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let refits: Vec<NoisePredictor> = parallel::map(&fits, |f| refit(&f.entry.predictor, &f.pairs));
        let candidate: f64 = fits
            .iter()
            .zip(&refits)
            .map(|(f, p)| prediction_loss(p, &f.pairs))
            .sum::<f64>()
            / fits.len() as f64;
        sweeps += 1;
        let improvement = loss - candidate;
        if improvement > 0.0 {
            for (f, p) in fits.iter_mut().zip(refits) {
                f.entry.predictor = p;
            }
            loss = candidate;
        }
        if improvement < SWEEP_TOL {
            break;
        }
    }

    Ok(NoiseModel {
        problem_id: trajectory.problem_id.clone(),
        suite: trajectory.suite,
        index: trajectory.index,
        d: trajectory.d,
        m: trajectory.m,
        n: trajectory.n,
        t: t_steps,
        bins,
        use_attention,
        transform,
        steps: fits.into_iter().map(|f| f.entry).collect(),
        training_loss: loss,
        training_sweeps: sweeps,
    })
}

/// Trains a library from trajectories that share `T` and `m`.
pub fn train_forward(
    trajectories: &[EvolutionaryTrajectory],
    use_attention: bool,
) -> Result<PretrainedLibrary> {
    let first = trajectories.first().ok_or(Error::Empty("training trajectories"))?;
    for tr in trajectories {
        if tr.t != first.t {
            return Err(Error::Inconsistent(format!(
                "{} has T={}, {} has T={}",
                first.problem_id, first.t, tr.problem_id, tr.t
            )));
        }
        if tr.m != first.m {
            return Err(Error::Inconsistent(format!(
                "{} has m={}, {} has m={}",
                first.problem_id, first.m, tr.problem_id, tr.m
            )));
        }
    }
    let entries: Vec<NoiseModel> = parallel::map(trajectories, |tr| train_model(tr, use_attention))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(PretrainedLibrary {
        t: first.t,
        m: first.m,
        max_d: entries.iter().map(|e| e.d).max().unwrap_or(0),
        entries,
    })
}

/// One reverse step with explicit standard-normal draws (`None` means zero).
///
/// `Z_{t-1} = (Z_t − β_t/√(1−ᾱ_t) · ε̂(Z_t)) / √α_t + σ_t ε`, with `σ_t² `
/// the trained reverse variance; the additive term is omitted at `t = 1`.
pub fn reverse_step_with(z_t: &Matrix, entry: &StepEntry, noise: Option<&Matrix>) -> Result<Matrix> {
    if !(entry.alpha_bar < 1.0) {
        return Err(Error::Schedule {
            step: entry.t,
            reason: format!("alpha_bar = {} leaves no noise to remove", entry.alpha_bar),
        });
    }
    if z_t.cols() != entry.predictor.center.len() {
        return Err(Error::ShapeMismatch(format!(
            "state has {} columns, step entry {}",
            z_t.cols(),
            entry.predictor.center.len()
        )));
    }
    let coef = entry.beta() / (1.0 - entry.alpha_bar).sqrt();
    let sqrt_alpha = entry.alpha.sqrt();
    let eps_hat = entry.predictor.predict(z_t);
    let mut out = z_t.clone();
    for r in 0..out.rows() {
        let e_row = eps_hat.row(r);
        for (k, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = (*v - coef * e_row[k]) / sqrt_alpha;
            if entry.t > 1 {
                if let Some(noise) = noise {
                    *v += entry.reverse_var[k].sqrt() * noise.get(r, k);
                }
            }
        }
    }
    Ok(out)
}

pub fn reverse_step<R: Rng>(z_t: &Population, entry: &StepEntry, rng: &mut R) -> Result<Population> {
    let (n, d) = (z_t.size(), z_t.dim());
    let mut noise = Matrix::zeros(n, d);
    for v in noise.as_mut_slice() {
        *v = rng.sample(StandardNormal);
    }
    let out = reverse_step_with(&z_t.decisions, entry, Some(&noise))?;
    Ok(Population {
        step: entry.t - 1,
        decisions: out,
        objectives: None,
        space: Space::Normalized,
    })
}

/// How often reverse diffusion re-checks problem similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiMode {
    EveryStep,
    Tenth,
    Log2,
    FirstOnly,
}

impl std::str::FromStr for XiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "every_step" => Ok(XiMode::EveryStep),
            "tenth" => Ok(XiMode::Tenth),
            "log2" => Ok(XiMode::Log2),
            "first_only" => Ok(XiMode::FirstOnly),
            other => Err(Error::param(
                "xi",
                format!("unknown mode `{other}` (expected every_step, tenth, log2, first_only)"),
            )),
        }
    }
}

impl XiMode {
    pub fn name(self) -> &'static str {
        match self {
            XiMode::EveryStep => "every_step",
            XiMode::Tenth => "tenth",
            XiMode::Log2 => "log2",
            XiMode::FirstOnly => "first_only",
        }
    }
}

/// Check steps in descending order. Every schedule contains step 1, whose
/// check is the evaluation of the returned population.
///
/// * `log2`: `{2^i : 0 ≤ i ≤ ⌊log₂T⌋}`
/// * `every_step`: `{1..=T}`
/// * `tenth`: `⌈T/10⌉` checks spaced ten steps apart, `{1, 11, 21, …}`
/// * `first_only`: `{1}`, a single evaluation and no re-identification
pub fn check_schedule(t: usize, mode: XiMode) -> Vec<usize> {
    let mut steps: Vec<usize> = match mode {
        XiMode::EveryStep => (1..=t).collect(),
        XiMode::Log2 => (0..usize::BITS)
            .map(|i| 1usize << i)
            .take_while(|&s| s <= t)
            .collect(),
        XiMode::Tenth => (0..t.div_ceil(10)).map(|k| 1 + 10 * k).collect(),
        XiMode::FirstOnly => vec![1],
    };
    steps.retain(|&s| s >= 1 && s <= t);
    steps.sort_unstable_by(|a, b| b.cmp(a));
    steps
}

/// Index of the entry whose step-`t` signature is closest to `signature`;
/// ties go to the lowest index.
pub fn match_prompt(library: &PretrainedLibrary, signature: f64, t: usize) -> usize {
    let all: Vec<usize> = (0..library.entries.len()).collect();
    match_among(library, &all, signature, t)
}

fn match_among(library: &PretrainedLibrary, candidates: &[usize], signature: f64, t: usize) -> usize {
    let mut best = candidates[0];
    let mut best_gap = f64::INFINITY;
    for &i in candidates {
        let gap = (signature - library.entries[i].step(t).signature).abs();
        if gap < best_gap {
            best = i;
            best_gap = gap;
        }
    }
    best
}

/// Result of one reverse-diffusion run.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    /// Non-dominated generated solutions (raw space, with objectives).
    pub population: Population,
    /// `(step, entry index)` selected at each check.
    pub matches: Vec<(usize, usize)>,
    /// `(t, IGD of Ẑ_t)` for `t = T-1..=0`, when diagnostics were requested.
    pub igd_profile: Option<Vec<(usize, f64)>>,
}

/// Generates an approximate Pareto set for `instance`.
///
/// Starts from `Ẑ_T ~ N(0, I)` with the lowest-index usable entry active. At
/// a check step `t > 1` the state `Ẑ_t` is clamped, evaluated (N evaluations,
/// charged to [`Phase::Sampling`]) and its NMI signature re-selects the entry
/// used from step `t` on. The check at `t = 1` is the evaluation of the
/// returned population, so the budget is exactly `N · |check_schedule|`. With `reference` set, the IGD after every step is
/// recorded using [`Phase::Diagnostics`] evaluations.
pub fn sample_pareto_set(
    library: &PretrainedLibrary,
    instance: &MopInstance,
    n: usize,
    xi: XiMode,
    seed: u64,
    ledger: &FeLedger,
    reference: Option<&[Vec<f64>]>,
) -> Result<SampleOutcome> {
    library.validate()?;
    if n < 2 {
        return Err(Error::param("N", format!("population size must be ≥ 2, got {n}")));
    }
    if instance.d > library.max_d {
        return Err(Error::Dimension(format!(
            "instance {} has d={} but the library was trained on at most d={}; \
             a model cannot generate in a decision space larger than the one it was trained on",
            instance.id, instance.d, library.max_d
        )));
    }
    if instance.m != library.m {
        return Err(Error::Dimension(format!(
            "instance {} has m={} but the library was trained with m={}",
            instance.id, instance.m, library.m
        )));
    }
    let d = instance.d;
    let candidates: Vec<usize> = (0..library.entries.len())
        .filter(|&i| library.entries[i].d >= d)
        .collect();
    let models: Vec<Option<NoiseModel>> = library
        .entries
        .iter()
        .map(|e| (e.d >= d).then(|| if e.d == d { e.clone() } else { e.restricted(d) }))
        .collect();
    let model = |i: usize| models[i].as_ref().expect("candidate entry");

    let t_steps = library.t;
    let schedule = check_schedule(t_steps, xi);
    let mut rng = seed::stream(seed, seed::labels::SAMPLING, 0);
    let mut z = Matrix::zeros(n, d);
    for v in z.as_mut_slice() {
        *v = rng.sample(StandardNormal);
    }
    let mut active = candidates[0];
    let mut matches = Vec::with_capacity(schedule.len());
    let mut profile = reference.map(|_| Vec::with_capacity(t_steps));
    let mut final_pop: Option<Population> = None;

    let evaluate_raw = |raw: &Matrix, phase: Phase| -> Result<Population> {
        let mut clamped = raw.clone();
        instance.clamp_matrix(&mut clamped);
        instance.evaluate(&Population::new(0, clamped, Space::Raw), ledger, phase)
    };

    for t in (1..=t_steps).rev() {
        if t > 1 && schedule.contains(&t) {
            let raw = model(active).from_frame(t, &z);
            let evaluated = evaluate_raw(&raw, Phase::Sampling)?;
            let obj = evaluated.objectives()?;
            let sig = attention::nmi_signature(&evaluated.decisions, obj, model(active).bins)?;
            let next = match_among(library, &candidates, sig, t);
            matches.push((t, next));
            if next != active {
                z = model(next).to_frame(t, &raw);
                active = next;
            }
        }
        let current = model(active);
        let pop = Population::new(t, z, Space::Normalized);
        z = reverse_step(&pop, current.step(t), &mut rng)?.decisions;
        let raw = current.from_frame(t, &z);
        if t == 1 {
            matches.push((1, active));
            final_pop = Some(evaluate_raw(&raw, Phase::Sampling)?);
        }
        if let (Some(reference), Some(profile)) = (reference, profile.as_mut()) {
            let evaluated = evaluate_raw(&raw, Phase::Diagnostics)?;
            let obj = evaluated.objectives()?;
            let front = obj.select_rows(&metrics::nondominated_indices(obj)).to_rows();
            profile.push((t - 1, metrics::igd(reference, &front)?));
        }
        if t > 1 {
            z = current.to_frame(t - 1, &raw);
        }
    }

    let evaluated = final_pop.expect("reverse diffusion ends at step 1");
    let obj = evaluated.objectives()?;
    let keep = metrics::nondominated_indices(obj);
    let population = Population {
        step: 0,
        decisions: evaluated.decisions.select_rows(&keep),
        objectives: Some(obj.select_rows(&keep)),
        space: Space::Raw,
    };
    Ok(SampleOutcome {
        population,
        matches,
        igd_profile: profile,
    })
}

/// Converts a population with objectives into archive solutions.
pub fn to_solutions(pop: &Population) -> Result<Vec<Solution>> {
    let obj = pop.objectives()?;
    Ok(pop
        .decisions
        .iter_rows()
        .zip(obj.iter_rows())
        .map(|(x, f)| Solution {
            decision: x.to_vec(),
            objective: f.to_vec(),
        })
        .collect())
}
