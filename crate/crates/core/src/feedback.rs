//! Coherent feedback through a beamsplitter, and the direct-coupling
//! optomechanical QND construction.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{
    block2, classify, cx, hstack, im_part, re_part, unitarity_defect, vstack, CMat, RMat,
    StructureClass, CLASSIFY_TOL, I,
};
use crate::bae::{self, BaeReport};
use crate::error::{shape_err, Error, Result};
use crate::kalman;
use crate::model::{
    omega_from_hamiltonian, quadrature_realization, QuadratureRealization, StateOrdering,
    SystemParams,
};
use crate::qnd::{self, QndVariableReport, SubspacePair, Variable};

/// Smallest admissible singular value of I - S22·S_b.
pub const WELL_POSED_TOL: f64 = 1e-10;
/// Hermitian defect of Ω̄₋ that is repaired by averaging.
pub const SYMMETRIZE_TOL: f64 = 1e-8;
/// Objective value accepted by [`search_couplings`].
pub const SEARCH_TOL: f64 = 1e-10;

/// A plant whose m = m1 + m2 channels are split into the external channels
/// (1) and the channels routed through the beamsplitter (2).
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionedPlant {
    pub s11: CMat,
    pub s12: CMat,
    pub s21: CMat,
    pub s22: CMat,
    pub k11: CMat,
    pub k12: CMat,
    pub k21: CMat,
    pub k22: CMat,
    pub omega_minus: CMat,
    pub omega_plus: CMat,
}

impl PartitionedPlant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s11: CMat,
        s12: CMat,
        s21: CMat,
        s22: CMat,
        k11: CMat,
        k12: CMat,
        k21: CMat,
        k22: CMat,
        omega_minus: CMat,
        omega_plus: CMat,
    ) -> Result<Self> {
        let n = omega_minus.nrows();
        let m1 = s11.nrows();
        let m2 = s22.nrows();
        let expect = |name: &str, x: &CMat, r: usize, c: usize| {
            if x.shape() == (r, c) {
                Ok(())
            } else {
                Err(shape_err(name, (r, c), x.shape()))
            }
        };
        expect("S11", &s11, m1, m1)?;
        expect("S12", &s12, m1, m2)?;
        expect("S21", &s21, m2, m1)?;
        expect("S22", &s22, m2, m2)?;
        expect("k11", &k11, m1, n)?;
        expect("k12", &k12, m1, n)?;
        expect("k21", &k21, m2, n)?;
        expect("k22", &k22, m2, n)?;
        expect("Omega_minus", &omega_minus, n, n)?;
        expect("Omega_plus", &omega_plus, n, n)?;
        if n == 0 || m1 == 0 || m2 == 0 {
            return Err(Error::InvalidParams(
                "plant needs n > 0, m1 > 0 and m2 > 0".into(),
            ));
        }
        let plant = Self {
            s11,
            s12,
            s21,
            s22,
            k11,
            k12,
            k21,
            k22,
            omega_minus,
            omega_plus,
        };
        let report = plant.as_system()?.validate();
        if let Some(v) = report.violations.first() {
            return Err(Error::InvalidParams(format!("plant: {}", v.message)));
        }
        Ok(plant)
    }

    pub fn n(&self) -> usize {
        self.omega_minus.nrows()
    }

    pub fn m1(&self) -> usize {
        self.s11.nrows()
    }

    pub fn m2(&self) -> usize {
        self.s22.nrows()
    }

    pub fn scattering(&self) -> CMat {
        block2(&self.s11, &self.s12, &self.s21, &self.s22)
    }

    /// The plant as an unconnected system with m1 + m2 channels.
    pub fn as_system(&self) -> Result<SystemParams> {
        SystemParams::new(
            self.scattering(),
            vstack(&[&self.k11, &self.k21]),
            vstack(&[&self.k12, &self.k22]),
            self.omega_minus.clone(),
            self.omega_plus.clone(),
        )
    }

    fn with_couplings(&self, k: [CMat; 4]) -> Self {
        let [k11, k12, k21, k22] = k;
        Self {
            k11,
            k12,
            k21,
            k22,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamsplitterParams {
    pub s_b: CMat,
}

impl BeamsplitterParams {
    pub fn new(s_b: CMat) -> Result<Self> {
        if !s_b.is_square() {
            return Err(shape_err("S_b", (s_b.nrows(), s_b.nrows()), s_b.shape()));
        }
        let defect = unitarity_defect(&s_b);
        if defect > crate::model::VALID_TOL {
            return Err(Error::InvalidParams(format!(
                "S_b not unitary (defect {defect:.3e})"
            )));
        }
        Ok(Self { s_b })
    }
}

/// Reduced parameters with the numerical facts behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct Reduction {
    pub params: SystemParams,
    /// Smallest singular value of I - S22·S_b.
    pub loop_sigma_min: f64,
    /// ‖Ω̄₋ - Ω̄₋†‖ before averaging.
    pub hermitian_defect: f64,
    /// ‖Ω̄₊ - Ω̄₊ᵀ‖ before averaging.
    pub symmetric_defect: f64,
}

struct RawReduction {
    s: CMat,
    c_minus: CMat,
    c_plus: CMat,
    omega_minus: CMat,
    omega_plus: CMat,
    sigma_min: f64,
}

fn raw_reduce(plant: &PartitionedPlant, bs: &BeamsplitterParams) -> Result<RawReduction> {
    let m2 = plant.m2();
    if bs.s_b.nrows() != m2 {
        return Err(shape_err("S_b", (m2, m2), bs.s_b.shape()));
    }
    if plant.m1() != m2 {
        return Err(Error::InvalidParams(format!(
            "Hamiltonian correction needs m1 = m2, got m1 = {}, m2 = {m2}",
            plant.m1()
        )));
    }
    let sb = &bs.s_b;
    let loop_m = CMat::identity(m2, m2) - &plant.s22 * sb;
    let sigma_min = loop_m
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if sigma_min < WELL_POSED_TOL {
        return Err(Error::IllPosedLoop { sigma_min });
    }
    let inv = loop_m
        .try_inverse()
        .ok_or(Error::IllPosedLoop { sigma_min })?;
    let alpha = &plant.s12 * sb * inv;
    let s = &plant.s11 + &alpha * &plant.s21;
    let c_minus = &plant.k11 + &alpha * &plant.k21;
    let c_plus = &plant.k12 + &alpha * &plant.k22;
    let k11h = plant.k11.adjoint();
    let k21h = plant.k21.adjoint();
    let omega_minus =
        &plant.omega_minus - (&k11h * sb * &plant.k21 - &k21h * sb.adjoint() * &plant.k11) * I;
    let omega_plus =
        &plant.omega_plus - (&k11h * sb * &plant.k22 - &k21h * sb.adjoint() * &plant.k12) * I;
    Ok(RawReduction {
        s,
        c_minus,
        c_plus,
        omega_minus,
        omega_plus,
        sigma_min,
    })
}

/// Closes the loop from the plant's channel-2 outputs through the
/// beamsplitter back into its channel-2 inputs.
pub fn reduce_network(plant: &PartitionedPlant, bs: &BeamsplitterParams) -> Result<SystemParams> {
    reduce_network_detailed(plant, bs).map(|r| r.params)
}

pub fn reduce_network_detailed(
    plant: &PartitionedPlant,
    bs: &BeamsplitterParams,
) -> Result<Reduction> {
    let raw = raw_reduce(plant, bs)?;
    let hermitian_defect = (&raw.omega_minus - raw.omega_minus.adjoint()).norm();
    if hermitian_defect > SYMMETRIZE_TOL * (1.0 + raw.omega_minus.norm()) {
        return Err(Error::Convention {
            field: "Omega_minus",
            residual: hermitian_defect,
        });
    }
    let symmetric_defect = (&raw.omega_plus - raw.omega_plus.transpose()).norm();
    let half = cx(0.5, 0.0);
    let omega_minus = (&raw.omega_minus + raw.omega_minus.adjoint()) * half;
    // Only the symmetric part of Ω₊ enters the Hamiltonian, so the
    // antisymmetric remainder is dropped whatever its size.
    let omega_plus = (&raw.omega_plus + raw.omega_plus.transpose()) * half;
    let params = SystemParams::new(raw.s, raw.c_minus, raw.c_plus, omega_minus, omega_plus)?;
    Ok(Reduction {
        params,
        loop_sigma_min: raw.sigma_min,
        hermitian_defect,
        symmetric_defect,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeedbackBaeReport {
    /// ‖Re Ω̄‖ over both blocks.
    pub omega_real_residual: f64,
    pub omega_imaginary: bool,
    pub coupling_class: StructureClass,
    pub scattering_class: StructureClass,
    /// Ω̄ is purely imaginary, C̄ is real or imaginary, and every predicted block is
    /// certified.
    pub verdict: bool,
    pub analysis: BaeReport,
}

pub fn verify_feedback_bae(
    plant: &PartitionedPlant,
    bs: &BeamsplitterParams,
) -> Result<(SystemParams, FeedbackBaeReport)> {
    let reduced = reduce_network(plant, bs)?;
    let re_m = re_part(reduced.omega_minus());
    let re_p = re_part(reduced.omega_plus());
    let omega_real_residual = (re_m.norm_squared() + re_p.norm_squared()).sqrt();
    let scale = 1.0 + reduced.omega_minus().norm() + reduced.omega_plus().norm();
    let omega_imaginary = omega_real_residual <= CLASSIFY_TOL * scale;
    let coupling_class = classify(
        &hstack(&[reduced.c_minus(), reduced.c_plus()]),
        CLASSIFY_TOL,
    );
    let scattering_class = classify(reduced.s(), CLASSIFY_TOL);
    let analysis = bae::analyze(&reduced)?;
    let verdict = omega_imaginary
        && coupling_class.is_real_or_imaginary()
        && !analysis.predictions.is_empty()
        && analysis.confirmed();
    Ok((
        reduced,
        FeedbackBaeReport {
            omega_real_residual,
            omega_imaginary,
            coupling_class,
            scattering_class,
            verdict,
            analysis,
        },
    ))
}

/// Which coupling blocks the search may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreeBlocks {
    pub k11: bool,
    pub k12: bool,
    pub k21: bool,
    pub k22: bool,
}

impl FreeBlocks {
    pub const ALL: FreeBlocks = FreeBlocks {
        k11: true,
        k12: true,
        k21: true,
        k22: true,
    };
    pub const NONE: FreeBlocks = FreeBlocks {
        k11: false,
        k12: false,
        k21: false,
        k22: false,
    };

    fn flags(self) -> [bool; 4] {
        [self.k11, self.k12, self.k21, self.k22]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSolution {
    pub plant: PartitionedPlant,
    pub objective: f64,
    /// Index of the restart that converged; 0 means the template itself.
    pub restart: usize,
}

fn blocks_of(plant: &PartitionedPlant) -> [CMat; 4] {
    [
        plant.k11.clone(),
        plant.k12.clone(),
        plant.k21.clone(),
        plant.k22.clone(),
    ]
}

struct Problem<'a> {
    plant: &'a PartitionedPlant,
    bs: &'a BeamsplitterParams,
    free: [bool; 4],
}

impl Problem<'_> {
    fn unpack(&self, x: &DVector<f64>) -> [CMat; 4] {
        let mut blocks = blocks_of(self.plant);
        let mut at = 0;
        for (b, free) in blocks.iter_mut().zip(self.free) {
            if !free {
                continue;
            }
            for v in b.iter_mut() {
                *v = cx(x[at], x[at + 1]);
                at += 2;
            }
        }
        blocks
    }

    fn pack(&self, blocks: &[CMat; 4]) -> DVector<f64> {
        let mut out = Vec::new();
        for (b, free) in blocks.iter().zip(self.free) {
            if free {
                for v in b.iter() {
                    out.push(v.re);
                    out.push(v.im);
                }
            }
        }
        DVector::from_vec(out)
    }

    /// Residual vector for the real-coupling (`imaginary = false`) or the
    /// imaginary-coupling branch.
    fn residual(&self, x: &DVector<f64>, imaginary: bool) -> Option<DVector<f64>> {
        let plant = self.plant.with_couplings(self.unpack(x));
        let raw = raw_reduce(&plant, self.bs).ok()?;
        let om = (&raw.omega_minus + raw.omega_minus.adjoint()) * cx(0.5, 0.0);
        let op = (&raw.omega_plus + raw.omega_plus.transpose()) * cx(0.5, 0.0);
        let c = hstack(&[&raw.c_minus, &raw.c_plus]);
        let c_part = if imaginary { re_part(&c) } else { im_part(&c) };
        let mut out: Vec<f64> = re_part(&om).iter().copied().collect();
        out.extend(re_part(&op).iter().copied());
        out.extend(c_part.iter().copied());
        Some(DVector::from_vec(out))
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        let a = self
            .residual(x, false)
            .map_or(f64::INFINITY, |r| r.norm_squared());
        let b = self
            .residual(x, true)
            .map_or(f64::INFINITY, |r| r.norm_squared());
        a.min(b)
    }

    /// Levenberg–Marquardt on one branch with a forward-difference Jacobian.
    fn levenberg_marquardt(&self, mut x: DVector<f64>, imaginary: bool) -> (DVector<f64>, f64) {
        let Some(mut r) = self.residual(&x, imaginary) else {
            return (x, f64::INFINITY);
        };
        let mut f = r.norm_squared();
        let mut mu = 1e-3;
        for _ in 0..200 {
            if f < SEARCH_TOL * 1e-2 {
                break;
            }
            let k = x.len();
            let mut jac = RMat::zeros(r.len(), k);
            for j in 0..k {
                let h = 1e-7 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                xp[j] += h;
                let Some(rp) = self.residual(&xp, imaginary) else {
                    return (x, f);
                };
                jac.set_column(j, &((rp - &r) / h));
            }
            let jt = jac.transpose();
            let g = &jt * &r;
            let jtj = &jt * &jac;
            let mut improved = false;
            for _ in 0..20 {
                let lhs = &jtj + RMat::identity(k, k) * mu;
                let Some(step) = lhs.lu().solve(&(-&g)) else {
                    mu *= 10.0;
                    continue;
                };
                let xn = &x + step;
                if let Some(rn) = self.residual(&xn, imaginary) {
                    let fnew = rn.norm_squared();
                    if fnew < f {
                        x = xn;
                        r = rn;
                        f = fnew;
                        mu = (mu * 0.3).max(1e-12);
                        improved = true;
                        break;
                    }
                }
                mu *= 10.0;
            }
            if !improved {
                break;
            }
        }
        (x, f)
    }
}

/// Multi-start local search for couplings that make Ω̄ purely imaginary and
/// C̄ real or imaginary. Deterministic for a given seed.
pub fn search_couplings(
    template: &PartitionedPlant,
    bs: &BeamsplitterParams,
    free: FreeBlocks,
    budget: usize,
    seed: u64,
) -> Result<Option<CouplingSolution>> {
    if budget == 0 {
        return Err(Error::InvalidParams("budget must be at least 1".into()));
    }
    let problem = Problem {
        plant: template,
        bs,
        free: free.flags(),
    };
    let x0 = problem.pack(&blocks_of(template));
    let f0 = problem.objective(&x0);
    if f0 < SEARCH_TOL {
        return Ok(Some(CouplingSolution {
            plant: template.clone(),
            objective: f0,
            restart: 0,
        }));
    }
    if x0.is_empty() {
        return Ok(None);
    }
    const CHUNK: usize = 32;
    let mut start = 1;
    while start <= budget {
        let end = (start + CHUNK).min(budget + 1);
        let found = (start..end)
            .into_par_iter()
            .filter_map(|restart| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(restart as u64);
                let init = DVector::from_fn(x0.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                [false, true].into_iter().find_map(|branch| {
                    let (x, f) = problem.levenberg_marquardt(init.clone(), branch);
                    (f < SEARCH_TOL).then_some((restart, x, f))
                })
            })
            .min_by_key(|(restart, _, _)| *restart);
        if let Some((restart, x, objective)) = found {
            return Ok(Some(CouplingSolution {
                plant: template.with_couplings(problem.unpack(&x)),
                objective,
                restart,
            }));
        }
        start = end;
    }
    Ok(None)
}

/// Two cavity modes coupled to a damped mechanical mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptomechParams {
    pub delta1: f64,
    pub delta2: f64,
    pub omega_m: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub kappa: f64,
}

impl OptomechParams {
    pub fn new(
        delta1: f64,
        delta2: f64,
        omega_m: f64,
        lambda1: f64,
        lambda2: f64,
        kappa: f64,
    ) -> Result<Self> {
        let all = [delta1, delta2, omega_m, lambda1, lambda2, kappa];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(
                "optomech parameters must be finite".into(),
            ));
        }
        if kappa <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        if lambda1 < 0.0 || lambda2 < 0.0 {
            return Err(Error::InvalidParams(
                "coupling strengths must be non-negative".into(),
            ));
        }
        Ok(Self {
            delta1,
            delta2,
            omega_m,
            lambda1,
            lambda2,
            kappa,
        })
    }
}

/// Six-state realization in the order (q₁, p₁, q₂, p₂, q₃, p₃).
pub fn build_optomech(p: &OptomechParams) -> QuadratureRealization {
    let (d1, d2, w, l1, l2) = (p.delta1, p.delta2, p.omega_m, p.lambda1, p.lambda2);
    let k2 = p.kappa / 2.0;
    let sk = p.kappa.sqrt();
    #[rustfmt::skip]
    let a = RMat::from_row_slice(6, 6, &[
        0.0, -d1, 0.0, 0.0, 0.0, 0.0,
        d1, 0.0, 0.0, 0.0, -l1, 0.0,
        0.0, 0.0, 0.0, -d2, 0.0, 0.0,
        0.0, 0.0, d2, 0.0, -l2, 0.0,
        0.0, 0.0, 0.0, 0.0, -k2, w,
        -l1, 0.0, -l2, 0.0, -w, -k2,
    ]);
    let mut b = RMat::zeros(6, 2);
    b[(4, 0)] = -sk;
    b[(5, 1)] = -sk;
    let mut c = RMat::zeros(2, 6);
    c[(0, 4)] = sk;
    c[(1, 5)] = sk;
    QuadratureRealization::new(a, b, c, RMat::identity(2, 2), StateOrdering::Interleaved)
        .expect("fixed shapes")
}

/// The optomechanical system as (S, L, H) parameters: S = 1, L = √κ a₃ and
/// H built from the detunings, the mechanical frequency and the q₃ coupling.
pub fn optomech_system(p: &OptomechParams) -> SystemParams {
    let mut h = RMat::zeros(6, 6);
    let diag = [-p.delta1, -p.delta2, p.omega_m];
    for (i, d) in diag.into_iter().enumerate() {
        h[(i, i)] = d;
        h[(3 + i, 3 + i)] = d;
    }
    h[(0, 2)] = p.lambda1;
    h[(2, 0)] = p.lambda1;
    h[(1, 2)] = p.lambda2;
    h[(2, 1)] = p.lambda2;
    let (om, op) = omega_from_hamiltonian(&h);
    let mut c_minus = CMat::zeros(1, 3);
    c_minus[(0, 2)] = cx(p.kappa.sqrt(), 0.0);
    SystemParams::with_identity_scattering(c_minus, CMat::zeros(1, 3), om, op)
        .expect("fixed shapes")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptomechQndReport {
    /// λ₁q₁ + λ₂q₂.
    pub combination: QndVariableReport,
    /// ‖cᵀ𝒞_u‖ for the combination direction c.
    pub controllability_residual: f64,
    pub q1: QndVariableReport,
    pub q2: QndVariableReport,
    /// (λ₁q₁ + λ₂q₂, λ₁p₁ - λ₂p₂) when Δ₁ = -Δ₂ and λ₁ = λ₂.
    pub closed_pair: Option<QndVariableReport>,
    pub dimensions: kalman::SubsystemDimensions,
}

fn unit(i: usize) -> RMat {
    let mut v = RMat::zeros(6, 1);
    v[(i, 0)] = 1.0;
    v
}

pub fn optomech_qnd_report(p: &OptomechParams) -> Result<OptomechQndReport> {
    let real = build_optomech(p);
    let pair = SubspacePair::of(&real);
    let mut c = RMat::zeros(6, 1);
    c[(0, 0)] = p.lambda1;
    c[(2, 0)] = p.lambda2;
    let cu = kalman::controllability_matrix(&real.a, &real.b);
    let controllability_residual = (c.transpose() * cu).norm();
    let coeffs = c.iter().copied().collect();
    let combination = pair.report(Variable::Combination(coeffs), &c);
    let scale = 1.0 + p.delta1.abs() + p.lambda1.abs();
    let closed_pair = ((p.delta1 + p.delta2).abs() <= 1e-12 * scale
        && (p.lambda1 - p.lambda2).abs() <= 1e-12 * scale)
        .then(|| {
            let mut dirs = RMat::zeros(6, 2);
            dirs[(0, 0)] = p.lambda1;
            dirs[(2, 0)] = p.lambda2;
            dirs[(1, 1)] = p.lambda1;
            dirs[(3, 1)] = -p.lambda2;
            let coeffs = dirs.iter().copied().collect();
            pair.report(Variable::Combination(coeffs), &dirs)
        });
    Ok(OptomechQndReport {
        combination,
        controllability_residual,
        q1: pair.report(
            Variable::Combination(unit(0).iter().copied().collect()),
            &unit(0),
        ),
        q2: pair.report(
            Variable::Combination(unit(2).iter().copied().collect()),
            &unit(2),
        ),
        closed_pair,
        dimensions: kalman::subsystem_dimensions(&real)?,
    })
}

/// QND variables of the reduced network, for the "no QND variable" check.
pub fn reduced_qnd_variables(reduced: &SystemParams) -> Result<Vec<QndVariableReport>> {
    let real = quadrature_realization(reduced)?;
    let pair = SubspacePair::of(&real);
    Ok(qnd::scan_qnd_combinations(&real, &pair)
        .into_iter()
        .filter(|r| r.is_qnd)
        .collect())
}

/// Plant, beamsplitter and partition reproducing the worked feedback
/// example: S_G swaps the two channels and S_b = -i.
pub fn worked_example() -> (PartitionedPlant, BeamsplitterParams) {
    let c = cx;
    let row = |a: [num_complex::Complex64; 2]| CMat::from_row_slice(1, 2, &a);
    let om = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(3.0, 2.0), c(3.0, -2.0), c(4.0, 0.0)]);
    let op = CMat::from_row_slice(
        2,
        2,
        &[c(2.0, 0.0), c(3.0, -1.0), c(3.0, -1.0), c(5.0, 0.0)],
    );
    let one = |v: f64| CMat::from_element(1, 1, c(v, 0.0));
    let plant = PartitionedPlant::new(
        one(0.0),
        one(-1.0),
        one(1.0),
        one(0.0),
        row([c(1.0, 0.0), c(1.0, 1.0)]),
        row([c(1.0, 0.0), c(2.0, -1.0)]),
        row([c(1.0, 1.0), c(1.0, 1.0)]),
        row([c(1.0, 1.0), c(2.0, 2.0)]),
        om,
        op,
    )
    .expect("example plant is valid");
    let bs = BeamsplitterParams::new(CMat::from_element(1, 1, c(0.0, -1.0))).expect("unitary");
    (plant, bs)
}

/// Plant obtained from an unconnected system by declaring its last `m2`
/// channels the feedback channels.
pub fn partition_system(params: &SystemParams, m2: usize) -> Result<PartitionedPlant> {
    let m = params.m();
    let n = params.n();
    if m2 == 0 || m2 >= m {
        return Err(Error::InvalidParams(format!(
            "m2 must satisfy 0 < m2 < m = {m}, got {m2}"
        )));
    }
    let m1 = m - m2;
    let s = params.s();
    let rows = |x: &CMat, r0: usize, r: usize| x.view((r0, 0), (r, n)).into_owned();
    PartitionedPlant::new(
        s.view((0, 0), (m1, m1)).into_owned(),
        s.view((0, m1), (m1, m2)).into_owned(),
        s.view((m1, 0), (m2, m1)).into_owned(),
        s.view((m1, m1), (m2, m2)).into_owned(),
        rows(params.c_minus(), 0, m1),
        rows(params.c_plus(), 0, m1),
        rows(params.c_minus(), m1, m2),
        rows(params.c_plus(), m1, m2),
        params.omega_minus().clone(),
        params.omega_plus().clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::max_abs_real;

    #[test]
    fn worked_example_properties() {
        let (plant, bs) = worked_example();
        let (reduced, report) = verify_feedback_bae(&plant, &bs).unwrap();
        assert!(report.omega_real_residual <= 1e-10);
        assert_eq!(report.coupling_class, StructureClass::PurelyImaginary);
        assert_eq!(report.scattering_class, StructureClass::PurelyImaginary);
        assert!(report.verdict);
        let c = hstack(&[reduced.c_minus(), reduced.c_plus()]);
        let expect = [1.0, 2.0, 1.0, 1.0];
        for (v, e) in c.iter().zip(expect) {
            assert!((v - cx(0.0, e)).norm() < 1e-12);
        }
        assert!(reduced_qnd_variables(&reduced).unwrap().is_empty());
    }

    #[test]
    fn ill_posed_loop_rejected() {
        let (mut plant, _) = worked_example();
        plant.s11 = CMat::zeros(1, 1);
        plant.s22 = CMat::from_element(1, 1, cx(0.0, 1.0));
        plant.s12 = CMat::zeros(1, 1);
        plant.s21 = CMat::zeros(1, 1);
        let bs = BeamsplitterParams::new(CMat::from_element(1, 1, cx(0.0, -1.0))).unwrap();
        let err = raw_reduce(&plant, &bs).err().unwrap();
        assert!(matches!(err, Error::IllPosedLoop { .. }));
    }

    #[test]
    fn no_feedback_coupling_keeps_omega_minus() {
        let (mut plant, bs) = worked_example();
        plant.k21 = CMat::zeros(1, 2);
        let r = reduce_network(&plant, &bs).unwrap();
        assert!((r.omega_minus() - &plant.omega_minus).norm() == 0.0);
    }

    #[test]
    fn optomech_combination() {
        let p = OptomechParams::new(1.0, -1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let real = build_optomech(&p);
        assert!(real.realizability_residual() < 1e-12);
        let r = optomech_qnd_report(&p).unwrap();
        assert!(r.controllability_residual <= 1e-10);
        assert!(r.combination.is_qnd);
        assert!(r.closed_pair.as_ref().unwrap().uncontrollable);
        let neg = optomech_qnd_report(&OptomechParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap())
            .unwrap();
        assert!(!neg.combination.is_qnd);
        assert!(max_abs_real(&real.d) == 1.0);
    }

    #[test]
    fn optomech_parameters_match_printed_equations() {
        let p = OptomechParams::new(0.7, -1.3, 1.1, 0.4, 0.9, 0.6).unwrap();
        let blocked = quadrature_realization(&optomech_system(&p)).unwrap();
        let inter = build_optomech(&p);
        // Interleaved index 2k is q_k, 2k + 1 is p_k.
        let perm = RMat::from_fn(6, 6, |i, j| {
            let target = if j < 3 { 2 * j } else { 2 * (j - 3) + 1 };
            if i == target {
                1.0
            } else {
                0.0
            }
        });
        let a = &perm * &blocked.a * perm.transpose();
        let b = &perm * &blocked.b;
        let c = &blocked.c * perm.transpose();
        assert!((a - &inter.a).norm() < 1e-12);
        assert!((b - &inter.b).norm() < 1e-12);
        assert!((c - &inter.c).norm() < 1e-12);
    }

    #[test]
    fn phase_shift_regime_individual_modes() {
        let p = OptomechParams::new(0.0, 0.0, 1.0, 1.0, 2.0, 1.0).unwrap();
        let r = optomech_qnd_report(&p).unwrap();
        assert!(r.q1.is_qnd && r.q2.is_qnd);
    }
}
