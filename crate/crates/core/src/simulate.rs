//! Time-domain checks: moment flows, Euler–Maruyama trajectories, the
//! Gaussian (Kalman–Bucy) conditional filter, martingale and signal-injection
//! tests.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{re_part, to_complex, CMat, RMat, I};
use crate::error::{Error, Result};
use crate::model::{coupling_rows, quadrature_realization, QuadratureRealization, SystemParams};
use crate::qnd;
use crate::transfer::Quad;

pub type RVec = DVector<f64>;

/// Symmetrized vacuum input covariance per unit time.
pub const VACUUM: f64 = 0.5;
/// Tolerance on the smallest eigenvalue of Σ + i𝕁/2.
pub const UNCERTAINTY_TOL: f64 = 1e-8;
const BLOWUP: f64 = 1e150;

/// Mean input on each of the 2m input quadratures, sampled at the step times
/// and interpolated linearly in between.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSignal {
    /// 2m × (steps + 1).
    pub samples: RMat,
    pub dt: f64,
}

impl InputSignal {
    pub fn zero(m: usize, cfg: &SimConfig) -> Self {
        Self {
            samples: RMat::zeros(2 * m, cfg.steps() + 1),
            dt: cfg.dt,
        }
    }

    /// `signal` (one value per step time) on every channel of `quad`.
    pub fn on_quadrature(m: usize, quad: Quad, signal: &[f64], cfg: &SimConfig) -> Result<Self> {
        let k = cfg.steps() + 1;
        if signal.len() != k {
            return Err(Error::Shape {
                context: "injected signal".into(),
                expected: format!("{k} samples"),
                found: format!("{} samples", signal.len()),
            });
        }
        let mut samples = RMat::zeros(2 * m, k);
        let off = quad.offset(m);
        for ch in 0..m {
            for (t, &v) in signal.iter().enumerate() {
                samples[(off + ch, t)] = v;
            }
        }
        Ok(Self {
            samples,
            dt: cfg.dt,
        })
    }

    pub fn at(&self, t: f64) -> RVec {
        let k = self.samples.ncols();
        let pos = (t / self.dt).max(0.0);
        let i = (pos.floor() as usize).min(k - 1);
        let j = (i + 1).min(k - 1);
        let w = (pos - i as f64).clamp(0.0, 1.0);
        self.samples.column(i) * (1.0 - w) + self.samples.column(j) * w
    }
}

/// Gaussian pulse `amplitude·exp(-(t - center)²/(2 width²))` at the step times.
pub fn gaussian_pulse(cfg: &SimConfig, amplitude: f64, center: f64, width: f64) -> Vec<f64> {
    (0..=cfg.steps())
        .map(|k| {
            let t = k as f64 * cfg.dt;
            amplitude * (-(t - center).powi(2) / (2.0 * width * width)).exp()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub ensemble: usize,
    /// Every `stride`-th step is kept in stored records.
    pub stride: usize,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, seed: u64, ensemble: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if !(horizon >= dt && horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon {horizon} shorter than dt {dt}"
            )));
        }
        if ensemble == 0 {
            return Err(Error::Config("ensemble must be at least 1".into()));
        }
        Ok(Self {
            dt,
            horizon,
            seed,
            ensemble,
            stride: 1,
        })
    }

    /// dt = 1e-3/‖𝔸‖.
    pub fn default_for(
        real: &QuadratureRealization,
        horizon: f64,
        seed: u64,
        ensemble: usize,
    ) -> Result<Self> {
        let scale = real.a.norm().max(1e-12);
        Self::new(1e-3 / scale, horizon, seed, ensemble)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    fn recorded_steps(&self) -> Vec<usize> {
        let n = self.steps();
        let mut v: Vec<usize> = (0..=n).step_by(self.stride).collect();
        if *v.last().expect("non-empty") != n {
            v.push(n);
        }
        v
    }
}

/// Gaussian initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialState {
    pub mean: RVec,
    pub cov: RMat,
}

impl InitialState {
    /// Zero mean, covariance ½I.
    pub fn vacuum(dim: usize) -> Self {
        Self {
            mean: RVec::zeros(dim),
            cov: RMat::identity(dim, dim) * VACUUM,
        }
    }

    pub fn displaced_vacuum(mean: RVec) -> Self {
        let dim = mean.len();
        Self {
            mean,
            cov: RMat::identity(dim, dim) * VACUUM,
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        if self.mean.len() != dim || self.cov.shape() != (dim, dim) {
            return Err(Error::Shape {
                context: "initial state".into(),
                expected: format!("mean {dim}, cov {dim}x{dim}"),
                found: format!("mean {}, cov {:?}", self.mean.len(), self.cov.shape()),
            });
        }
        Ok(())
    }

    fn sampler(&self) -> Result<RMat> {
        let dim = self.mean.len();
        // Tiny jitter so a pure state or zero covariance still factorizes.
        let jittered = &self.cov + RMat::identity(dim, dim) * 1e-14;
        jittered
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::Config("initial covariance not positive semidefinite".into()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentFlow {
    pub times: Vec<f64>,
    pub means: Vec<RVec>,
    pub covs: Vec<RMat>,
    /// ℂm + 𝔻u at each recorded time.
    pub output_means: Vec<RVec>,
}

fn rk4<S, F>(x: &S, t: f64, dt: f64, f: F) -> S
where
    F: Fn(f64, &S) -> S,
    S: Clone + std::ops::Add<Output = S> + std::ops::Mul<f64, Output = S>,
    for<'a> &'a S: std::ops::Add<S, Output = S>,
{
    let k1 = f(t, x);
    let k2 = f(t + dt / 2.0, &(x + k1.clone() * (dt / 2.0)));
    let k3 = f(t + dt / 2.0, &(x + k2.clone() * (dt / 2.0)));
    let k4 = f(t + dt, &(x + k3.clone() * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// ṁ = 𝔸m + 𝔹u(t), Ṗ = 𝔸P + P𝔸ᵀ + 𝔹N𝔹ᵀ with N = ½I, by fixed-step RK4.
pub fn moment_flow(
    real: &QuadratureRealization,
    cfg: &SimConfig,
    init: &InitialState,
    input: Option<&InputSignal>,
) -> Result<MomentFlow> {
    let dim = real.a.nrows();
    init.check(dim)?;
    let zero = InputSignal::zero(real.m(), cfg);
    let input = input.unwrap_or(&zero);
    if input.samples.nrows() != 2 * real.m() {
        return Err(Error::Shape {
            context: "input signal".into(),
            expected: format!("{} rows", 2 * real.m()),
            found: format!("{} rows", input.samples.nrows()),
        });
    }
    let a = &real.a;
    let at = a.transpose();
    let bnb = &real.b * real.b.transpose() * VACUUM;
    let keep = cfg.recorded_steps();
    let mut next_keep = 0;
    let mut out = MomentFlow {
        times: Vec::with_capacity(keep.len()),
        means: Vec::with_capacity(keep.len()),
        covs: Vec::with_capacity(keep.len()),
        output_means: Vec::with_capacity(keep.len()),
    };
    let mut m = init.mean.clone();
    let mut p = init.cov.clone();
    for step in 0..=cfg.steps() {
        let t = step as f64 * cfg.dt;
        if step == keep[next_keep] {
            out.times.push(t);
            out.output_means.push(&real.c * &m + &real.d * input.at(t));
            out.means.push(m.clone());
            out.covs.push(p.clone());
            next_keep += 1;
        }
        if step == cfg.steps() {
            break;
        }
        m = rk4(&m, t, cfg.dt, |s, x| a * x + &real.b * input.at(s));
        p = rk4(&p, t, cfg.dt, |_, x| a * x + x * &at + &bnb);
        if !(m
            .iter()
            .chain(p.iter())
            .all(|v| v.is_finite() && v.abs() < BLOWUP))
        {
            return Err(Error::Unstable { t: t + cfg.dt });
        }
    }
    Ok(out)
}

/// Output increments of one trajectory: 2m × steps, column k is dY over
/// [k·dt, (k+1)·dt].
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectories {
    pub dt: f64,
    pub records: Vec<RMat>,
}

fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, sd: f64) -> RVec {
    RVec::from_fn(len, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// One Euler–Maruyama path; `visit` sees the step index, state before the
/// step and the output increment.
fn run_path<F>(
    real: &QuadratureRealization,
    cfg: &SimConfig,
    x0: RVec,
    input: &InputSignal,
    rng: &mut ChaCha8Rng,
    mut visit: F,
) where
    F: FnMut(usize, &RVec, &RVec),
{
    let two_m = 2 * real.m();
    let sd = (VACUUM * cfg.dt).sqrt();
    let mut x = x0;
    for step in 0..cfg.steps() {
        let t = step as f64 * cfg.dt;
        let du = input.at(t) * cfg.dt + gaussian_vec(rng, two_m, sd);
        let dy = &real.c * &x * cfg.dt + &real.d * &du;
        visit(step, &x, &dy);
        x += &real.a * &x * cfg.dt + &real.b * du;
    }
}

fn sample_initial(init: &InitialState, chol: &RMat, rng: &mut ChaCha8Rng) -> RVec {
    &init.mean + chol * gaussian_vec(rng, init.mean.len(), 1.0)
}

/// dx = 𝔸x dt + 𝔹dU, dY = ℂx dt + 𝔻dU with dU ~ N(u dt, ½I dt). Trajectory
/// k uses stream k of the seeded generator, so results do not depend on
/// scheduling.
pub fn stochastic_trajectories(
    real: &QuadratureRealization,
    cfg: &SimConfig,
    init: &InitialState,
    input: Option<&InputSignal>,
) -> Result<Trajectories> {
    init.check(real.a.nrows())?;
    let chol = init.sampler()?;
    let zero = InputSignal::zero(real.m(), cfg);
    let input = input.unwrap_or(&zero);
    let records = (0..cfg.ensemble)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(cfg.seed, k);
            let x0 = sample_initial(init, &chol, &mut rng);
            let mut rec = RMat::zeros(2 * real.m(), cfg.steps());
            run_path(real, cfg, x0, input, &mut rng, |step, _, dy| {
                rec.set_column(step, dy);
            });
            rec
        })
        .collect();
    Ok(Trajectories {
        dt: cfg.dt,
        records,
    })
}

/// Deterministic part of the filter: Riccati flow and gains, shared by all
/// trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiFlow {
    /// Σ at every step time, steps + 1 entries.
    pub covs: Vec<RMat>,
    /// K(t) at every step time.
    pub gains: Vec<RMat>,
    /// (R + ℂ_qΣℂ_qᵀdt)^{-1/2} at every step time, the exact one-step
    /// innovation scale of the discretized record.
    pub whiteners: Vec<RMat>,
    /// Smallest eigenvalue of Σ + i𝕁/2 over the run.
    pub min_uncertainty_eig: f64,
}

struct MeasurementModel {
    cq: RMat,
    dq: RMat,
    r_inv: RMat,
    cross: RMat,
    q: RMat,
}

fn measurement_model(real: &QuadratureRealization) -> Result<MeasurementModel> {
    let m = real.m();
    let cq = real.c.rows(0, m).into_owned();
    let dq = real.d.rows(0, m).into_owned();
    let r = &dq * dq.transpose() * VACUUM;
    let r_inv = r.clone().try_inverse().ok_or(Error::SingularNoise)?;
    if r.clone().cholesky().is_none() {
        return Err(Error::SingularNoise);
    }
    Ok(MeasurementModel {
        cq,
        cross: &real.b * dq.transpose() * VACUUM,
        q: &real.b * real.b.transpose() * VACUUM,
        dq,
        r_inv,
    })
}

fn uncertainty_eig(p: &RMat, j: &RMat) -> f64 {
    let h: CMat = to_complex(p) + to_complex(j) * (I * 0.5);
    let h = (&h + h.adjoint()) * crate::algebra::cx(0.5, 0.0);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn inv_sqrt_spd(r: &RMat) -> RMat {
    let eig = r.clone().symmetric_eigen();
    let d = RMat::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Σ̇ = 𝔸Σ + Σ𝔸ᵀ + Q - (Σℂ_qᵀ + S)R⁻¹(Σℂ_qᵀ + S)ᵀ for homodyne detection of
/// all q_out channels, with Q = 𝔹N𝔹ᵀ, R = 𝔻_qN𝔻_qᵀ and S = 𝔹N𝔻_qᵀ.
pub fn riccati_flow(
    real: &QuadratureRealization,
    cfg: &SimConfig,
    init_cov: &RMat,
) -> Result<RiccatiFlow> {
    let mm = measurement_model(real)?;
    let a = &real.a;
    let at = a.transpose();
    let j = real.state_symplectic();
    let gain = |p: &RMat| (p * mm.cq.transpose() + &mm.cross) * &mm.r_inv;
    let mut p = init_cov.clone();
    let mut covs = Vec::with_capacity(cfg.steps() + 1);
    let mut gains = Vec::with_capacity(cfg.steps() + 1);
    let mut whiteners = Vec::with_capacity(cfg.steps() + 1);
    let mut min_eig = f64::INFINITY;
    let r = &mm.dq * mm.dq.transpose() * VACUUM;
    for step in 0..=cfg.steps() {
        min_eig = min_eig.min(uncertainty_eig(&p, &j));
        gains.push(gain(&p));
        whiteners.push(inv_sqrt_spd(
            &(&r + &mm.cq * &p * mm.cq.transpose() * cfg.dt),
        ));
        covs.push(p.clone());
        if step == cfg.steps() {
            break;
        }
        p = rk4(&p, 0.0, cfg.dt, |_, x| {
            let k = x * mm.cq.transpose() + &mm.cross;
            a * x + x * &at + &mm.q - &k * &mm.r_inv * k.transpose()
        });
        p = (&p + p.transpose()) * 0.5;
        if !p.iter().all(|v| v.is_finite() && v.abs() < BLOWUP) {
            return Err(Error::Unstable {
                t: (step + 1) as f64 * cfg.dt,
            });
        }
    }
    Ok(RiccatiFlow {
        covs,
        gains,
        whiteners,
        min_uncertainty_eig: min_eig,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterEnsemble {
    /// Recorded times.
    pub times: Vec<f64>,
    /// Per trajectory, the conditional mean at each recorded time.
    pub conditional_means: Vec<Vec<RVec>>,
    /// Σ at each recorded time.
    pub conditional_cov: Vec<RMat>,
    /// Per trajectory, normalized innovation increments dν/√dt
    /// (m × steps), which should be standard white noise.
    pub innovations: Vec<RMat>,
    pub min_uncertainty_eig: f64,
}

impl FilterEnsemble {
    pub fn uncertainty_compatible(&self) -> bool {
        self.min_uncertainty_eig >= -UNCERTAINTY_TOL
    }
}

struct FilterStep<'a> {
    real: &'a QuadratureRealization,
    flow: &'a RiccatiFlow,
    cq: RMat,
    dq: RMat,
    input: &'a InputSignal,
    dt: f64,
}

impl FilterStep<'_> {
    /// Advances the conditional mean by one step and returns the raw
    /// innovation.
    fn advance(&self, step: usize, mean: &mut RVec, dy: &RVec) -> RVec {
        let m = self.real.m();
        let t = step as f64 * self.dt;
        let u = self.input.at(t);
        let dyq = dy.rows(0, m).into_owned();
        let dnu = dyq - (&self.cq * &*mean + &self.dq * &u) * self.dt;
        let drift = (&self.real.a * &*mean + &self.real.b * &u) * self.dt;
        *mean += drift + &self.flow.gains[step] * &dnu;
        dnu
    }
}

/// Kalman–Bucy filter on the q_out records of [`stochastic_trajectories`].
pub fn gaussian_filter(
    real: &QuadratureRealization,
    records: &Trajectories,
    cfg: &SimConfig,
    init: &InitialState,
    input: Option<&InputSignal>,
) -> Result<FilterEnsemble> {
    init.check(real.a.nrows())?;
    let m = real.m();
    for r in &records.records {
        if r.shape() != (2 * m, cfg.steps()) {
            return Err(Error::Shape {
                context: "filter records".into(),
                expected: format!("{} x {}", 2 * m, cfg.steps()),
                found: format!("{:?}", r.shape()),
            });
        }
    }
    let flow = riccati_flow(real, cfg, &init.cov)?;
    let zero = InputSignal::zero(m, cfg);
    let fs = FilterStep {
        real,
        flow: &flow,
        cq: real.c.rows(0, m).into_owned(),
        dq: real.d.rows(0, m).into_owned(),
        input: input.unwrap_or(&zero),
        dt: cfg.dt,
    };
    let keep = cfg.recorded_steps();
    let scale = 1.0 / cfg.dt.sqrt();
    let per_traj: Vec<(Vec<RVec>, RMat)> = records
        .records
        .par_iter()
        .map(|rec| {
            let mut mean = init.mean.clone();
            let mut means = Vec::with_capacity(keep.len());
            let mut innov = RMat::zeros(m, cfg.steps());
            let mut next_keep = 0;
            for step in 0..=cfg.steps() {
                if step == keep[next_keep] {
                    means.push(mean.clone());
                    next_keep += 1;
                }
                if step == cfg.steps() {
                    break;
                }
                let dy = rec.column(step).into_owned();
                let dnu = fs.advance(step, &mut mean, &dy);
                innov.set_column(step, &(&flow.whiteners[step] * dnu * scale));
            }
            (means, innov)
        })
        .collect();
    let (conditional_means, innovations) = per_traj.into_iter().unzip();
    Ok(FilterEnsemble {
        times: keep.iter().map(|&k| k as f64 * cfg.dt).collect(),
        conditional_means,
        conditional_cov: keep.iter().map(|&k| flow.covs[k].clone()).collect(),
        innovations,
        min_uncertainty_eig: flow.min_uncertainty_eig,
    })
}

/// Sample variance and autocorrelation of normalized innovations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WhitenessReport {
    pub samples: usize,
    /// Per channel sample variance.
    pub variances: Vec<f64>,
    /// 3σ band for the variance, 3·√(2/N).
    pub variance_band: f64,
    /// Largest |autocorrelation| over lags 1..=max_lag and channels.
    pub max_autocorrelation: f64,
    /// 3σ band for autocorrelations, 3/√N.
    pub autocorrelation_band: f64,
    pub pass: bool,
}

pub fn whiteness(innovations: &[RMat], max_lag: usize) -> WhitenessReport {
    let channels = innovations.first().map_or(0, |r| r.nrows());
    let mut variances = Vec::with_capacity(channels);
    let mut max_ac = 0.0f64;
    let mut total = 0;
    for ch in 0..channels {
        let rows: Vec<Vec<f64>> = innovations
            .iter()
            .map(|r| r.row(ch).iter().copied().collect())
            .collect();
        let n: usize = rows.iter().map(Vec::len).sum();
        total = n;
        let mean = rows.iter().flatten().sum::<f64>() / n as f64;
        let var = rows
            .iter()
            .flatten()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        variances.push(var);
        for lag in 1..=max_lag {
            let mut acc = 0.0;
            let mut count = 0usize;
            for r in &rows {
                for i in lag..r.len() {
                    acc += (r[i] - mean) * (r[i - lag] - mean);
                    count += 1;
                }
            }
            if count > 0 {
                max_ac = max_ac.max((acc / count as f64 / var).abs());
            }
        }
    }
    let variance_band = 3.0 * (2.0 / total.max(1) as f64).sqrt();
    let autocorrelation_band = 3.0 / (total.max(1) as f64).sqrt();
    let pass = variances.iter().all(|v| (v - 1.0).abs() <= variance_band)
        && max_ac <= autocorrelation_band;
    WhitenessReport {
        samples: total,
        variances,
        variance_band,
        max_autocorrelation: max_ac,
        autocorrelation_band,
        pass,
    }
}

/// Ensemble statistics of E[π_t(L_j)] for each coupling operator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleChannel {
    pub mean_initial: f64,
    pub mean_final: f64,
    pub standard_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub ensemble: usize,
    pub horizon: f64,
    pub channels: Vec<MartingaleChannel>,
    pub pass: bool,
}

/// Real rows ℓ_j with Re(L_j) = ℓ_j·x in blocked [q; p] coordinates.
pub fn coupling_observables(params: &SystemParams) -> RMat {
    let (lq, lp) = coupling_rows(params);
    re_part(&crate::algebra::hstack(&[&lq, &lp]))
}

/// Checks that E[π_t(L_j)] stays at its initial value. Requires a QND
/// interaction with self-adjoint L.
pub fn martingale_check(
    params: &SystemParams,
    cfg: &SimConfig,
    init: &InitialState,
) -> Result<MartingaleReport> {
    let test = qnd::qnd_interaction_test(params, qnd::QND_TOL);
    if !test.verdict() {
        return Err(Error::Hypothesis {
            what: "[L, H] = 0".into(),
            residual: test.pair_residual,
        });
    }
    let sa = qnd::self_adjoint_residual(params);
    if sa > qnd::QND_TOL {
        return Err(Error::Hypothesis {
            what: "self-adjoint coupling C_minus = conj(C_plus)".into(),
            residual: sa,
        });
    }
    martingale_statistics(params, cfg, init)
}

/// The martingale statistic without the precondition, for negative controls.
pub fn martingale_statistics(
    params: &SystemParams,
    cfg: &SimConfig,
    init: &InitialState,
) -> Result<MartingaleReport> {
    let real = quadrature_realization(params)?;
    init.check(real.a.nrows())?;
    let ell = coupling_observables(params);
    let flow = riccati_flow(&real, cfg, &init.cov)?;
    let chol = init.sampler()?;
    let m = real.m();
    let zero = InputSignal::zero(m, cfg);
    let fs = FilterStep {
        real: &real,
        flow: &flow,
        cq: real.c.rows(0, m).into_owned(),
        dq: real.d.rows(0, m).into_owned(),
        input: &zero,
        dt: cfg.dt,
    };
    let initial = &ell * &init.mean;
    let finals: Vec<RVec> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(cfg.seed, k);
            let x0 = sample_initial(init, &chol, &mut rng);
            let mut mean = init.mean.clone();
            run_path(&real, cfg, x0, &zero, &mut rng, |step, _, dy| {
                fs.advance(step, &mut mean, dy);
            });
            &ell * mean
        })
        .collect();
    let n = finals.len() as f64;
    let channels: Vec<MartingaleChannel> = (0..ell.nrows())
        .map(|j| {
            let vals: Vec<f64> = finals.iter().map(|v| v[j]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let standard_error = (var / n).sqrt();
            let pass = (mean - initial[j]).abs() <= 3.0 * standard_error + 1e-12;
            MartingaleChannel {
                mean_initial: initial[j],
                mean_final: mean,
                standard_error,
                pass,
            }
        })
        .collect();
    let pass = channels.iter().all(|c| c.pass);
    Ok(MartingaleReport {
        ensemble: cfg.ensemble,
        horizon: cfg.steps() as f64 * cfg.dt,
        channels,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InjectionResult {
    pub input: Quad,
    pub output: Quad,
    /// max_t ‖Δ mean of the output block‖.
    pub deviation: f64,
}

/// Runs the mean flow with and without `signal` on every `input` channel and
/// reports the largest change in the `output` block of the output mean.
pub fn injection_bae_test(
    real: &QuadratureRealization,
    input: Quad,
    output: Quad,
    signal: &[f64],
    cfg: &SimConfig,
) -> Result<InjectionResult> {
    let m = real.m();
    let init = InitialState::vacuum(real.a.nrows());
    let driven = InputSignal::on_quadrature(m, input, signal, cfg)?;
    let base = moment_flow(real, cfg, &init, None)?;
    let pushed = moment_flow(real, cfg, &init, Some(&driven))?;
    let off = output.offset(m);
    let deviation = base
        .output_means
        .iter()
        .zip(&pushed.output_means)
        .map(|(a, b)| (b - a).rows(off, m).norm())
        .fold(0.0, f64::max);
    Ok(InjectionResult {
        input,
        output,
        deviation,
    })
}

/// Characteristic time 1/ρ(𝔸), or 1 when 𝔸 is nilpotent.
pub fn characteristic_time(real: &QuadratureRealization) -> f64 {
    let rho = crate::transfer::spectrum(&real.a)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if rho > 1e-12 {
        1.0 / rho
    } else {
        1.0
    }
}
