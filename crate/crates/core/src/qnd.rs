//! The commutator [L, H], QND-interaction tests and the characterization of
//! QND variables.

use serde::Serialize;

use crate::algebra::{block2, conj, cx, hstack, im_part, re_part, to_complex, CMat, RMat};
use crate::error::{Error, Result};
use crate::kalman::{self, SubspaceBasis};
use crate::model::{quadrature_realization, QuadratureRealization, SystemParams};
use crate::transfer::{markov, Quad};

/// Default tolerance for the algebraic QND tests.
pub const QND_TOL: f64 = 1e-9;

/// [L, H] = coeff_a·a + coeff_adag·a^#.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutatorCoefficients {
    pub coeff_a: CMat,
    pub coeff_adag: CMat,
}

impl CommutatorCoefficients {
    pub fn norm(&self) -> f64 {
        (self.coeff_a.norm_squared() + self.coeff_adag.norm_squared()).sqrt()
    }
}

fn commutator_for(c_minus: &CMat, c_plus: &CMat, params: &SystemParams) -> CommutatorCoefficients {
    let om = params.omega_minus();
    let op = params.omega_plus();
    CommutatorCoefficients {
        coeff_a: c_minus * om - c_plus * op.adjoint(),
        coeff_adag: c_minus * op - c_plus * om.transpose(),
    }
}

pub fn commutator_lh(params: &SystemParams) -> CommutatorCoefficients {
    commutator_for(params.c_minus(), params.c_plus(), params)
}

/// [L + L*, H] for `Q`, [L - L*, H] for `P`.
pub fn hermitian_part_commutator(params: &SystemParams, which: Quad) -> CommutatorCoefficients {
    let sign = match which {
        Quad::Q => cx(1.0, 0.0),
        Quad::P => cx(-1.0, 0.0),
    };
    let cm = params.c_minus() + conj(params.c_plus()) * sign;
    let cp = params.c_plus() + conj(params.c_minus()) * sign;
    commutator_for(&cm, &cp, params)
}

/// Both forms of the QND-interaction test with their residuals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QndInteractionTest {
    /// ‖(C₋Ω₋ - C₊Ω₊†, C₋Ω₊ - C₊Ω₋ᵀ)‖
    pub pair_residual: f64,
    /// ‖𝒞Ω - 2Δ(C₋, 0)Ω‖ / √2, on the same scale as `pair_residual`.
    pub doubled_residual: f64,
    pub pair_verdict: bool,
    pub doubled_verdict: bool,
}

impl QndInteractionTest {
    pub fn verdict(&self) -> bool {
        self.pair_verdict && self.doubled_verdict
    }

    pub fn agree(&self) -> bool {
        self.pair_verdict == self.doubled_verdict
    }
}

pub fn qnd_interaction_test(params: &SystemParams, tol: f64) -> QndInteractionTest {
    let pair_residual = commutator_lh(params).norm();
    let n = params.n();
    let m = params.m();
    let z = CMat::zeros(m, n);
    let dm = block2(params.c_minus(), &z, &z, &conj(params.c_minus()));
    let omega = params.hamiltonian_matrix();
    let diff = params.coupling_matrix() * &omega - dm * &omega * cx(2.0, 0.0);
    let doubled_residual = diff.norm() * std::f64::consts::FRAC_1_SQRT_2;
    QndInteractionTest {
        pair_residual,
        doubled_residual,
        pair_verdict: pair_residual <= tol,
        doubled_verdict: doubled_residual <= tol,
    }
}

pub fn is_qnd_interaction(params: &SystemParams, tol: f64) -> bool {
    qnd_interaction_test(params, tol).verdict()
}

/// g = Σ|C₋,j|² - Σ|C₊,j|² for a single channel.
pub fn siso_g(params: &SystemParams) -> Result<f64> {
    if params.m() != 1 {
        return Err(Error::Hypothesis {
            what: format!("single channel required, got m = {}", params.m()),
            residual: f64::NAN,
        });
    }
    Ok(params.c_minus().norm_squared() - params.c_plus().norm_squared())
}

/// ‖C₋ - C₊^#‖: zero iff every L_j is self-adjoint.
pub fn self_adjoint_residual(params: &SystemParams) -> f64 {
    (params.c_minus() - conj(params.c_plus())).norm()
}

/// ‖C₋C₊ᵀ - (C₋C₊ᵀ)ᵀ‖: zero iff the L_j commute pairwise.
pub fn commuting_residual(params: &SystemParams) -> f64 {
    let x = params.c_minus() * params.c_plus().transpose();
    (&x - x.transpose()).norm()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QndConsequences {
    pub self_adjoint: bool,
    pub self_adjoint_residual: f64,
    pub commuting: bool,
    pub commuting_residual: f64,
    /// Largest ‖ℂ𝔸ᵏ𝔹‖ over k < 2n.
    pub markov_max: f64,
    pub transfer_is_feedthrough: bool,
    pub dl_drift_norm: f64,
    pub dl_diffusion_norm: f64,
    pub dl_vanishes: bool,
    /// Structural facts that did not hold.
    pub failed: Vec<String>,
}

/// Under [L, H] = 0, reports whether G[s] reduces to 𝔻 and dL vanishes,
/// together with the self-adjointness and commutation facts both rely on.
pub fn qnd_interaction_consequences(params: &SystemParams, tol: f64) -> Result<QndConsequences> {
    let test = qnd_interaction_test(params, tol);
    if !test.verdict() {
        return Err(Error::Hypothesis {
            what: "[L, H] = 0".into(),
            residual: test.pair_residual,
        });
    }
    let sa = self_adjoint_residual(params);
    let cm = commuting_residual(params);
    let mut failed = Vec::new();
    if sa > tol {
        failed.push("L not self-adjoint (C_minus != conj(C_plus))".to_string());
    }
    if cm > tol {
        failed.push("L components do not commute (C_minus C_plus^T not symmetric)".to_string());
    }

    let real = quadrature_realization(params)?;
    let horizon = 2 * params.n();
    let markov_max = markov(&real, horizon.saturating_sub(1))
        .iter()
        .map(|m| m.norm())
        .fold(0.0, f64::max);

    // dL = (-i[L, H] + ½ K L) dt + K S dB with K = C₊C₊† - C₋C₋†, valid
    // when the L_j commute.
    let comm = commutator_lh(params);
    let k =
        params.c_plus() * params.c_plus().adjoint() - params.c_minus() * params.c_minus().adjoint();
    let half = cx(0.5, 0.0);
    let drift_a = comm.coeff_a * cx(0.0, -1.0) + &k * params.c_minus() * half;
    let drift_adag = comm.coeff_adag * cx(0.0, -1.0) + &k * params.c_plus() * half;
    let dl_drift_norm = (drift_a.norm_squared() + drift_adag.norm_squared()).sqrt();
    let dl_diffusion_norm = (&k * params.s()).norm();

    Ok(QndConsequences {
        self_adjoint: sa <= tol,
        self_adjoint_residual: sa,
        commuting: cm <= tol,
        commuting_residual: cm,
        markov_max,
        transfer_is_feedthrough: markov_max <= tol,
        dl_drift_norm,
        dl_diffusion_norm,
        dl_vanishes: cm <= tol && dl_drift_norm <= tol && dl_diffusion_norm <= tol,
        failed,
    })
}

/// A system variable: all q quadratures, all p quadratures, or the linear
/// combination cᵀx in state coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Variable {
    Q,
    P,
    Combination(Vec<f64>),
}

impl Variable {
    pub fn label(&self) -> String {
        match self {
            Variable::Q => "q".into(),
            Variable::P => "p".into(),
            Variable::Combination(c) => {
                let terms: Vec<String> = c.iter().map(|v| format!("{v:.6}")).collect();
                format!("[{}]", terms.join(", "))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QndVariableReport {
    pub variable: Variable,
    pub uncontrollable: bool,
    /// Span of the variable meets the unobservable subspace only at zero.
    pub observable: bool,
    /// The variable lies in the orthogonal complement of the unobservable
    /// subspace, so its value is determined by the output record.
    pub reconstructible: bool,
    pub is_qnd: bool,
}

/// Controllable and unobservable subspaces of a realization, computed once.
pub struct SubspacePair {
    pub controllable: SubspaceBasis,
    pub unobservable: SubspaceBasis,
}

impl SubspacePair {
    pub fn of(real: &QuadratureRealization) -> Self {
        Self {
            controllable: kalman::controllable_subspace(&real.a, &real.b),
            unobservable: kalman::unobservable_subspace(&real.a, &real.c),
        }
    }

    /// Classifies the subspace spanned by the columns of `dirs`.
    pub fn report(&self, variable: Variable, dirs: &RMat) -> QndVariableReport {
        let tol = 1e-8 * (1.0 + dirs.norm());
        let r = &self.controllable.basis;
        let uncontrollable = (r.transpose() * dirs).norm() <= tol;
        let reconstructible = (self.unobservable.basis.transpose() * dirs).norm() <= tol;
        // The span meets N only at zero iff stacking N's basis with the
        // directions adds their full rank.
        let combined = hstack(&[&self.unobservable.basis, dirs]);
        let added =
            crate::algebra::rank(&combined, crate::algebra::RANK_TOL) - self.unobservable.dim();
        let observable =
            added == crate::algebra::rank(dirs, crate::algebra::RANK_TOL) && dirs.norm() > 0.0;
        QndVariableReport {
            variable,
            uncontrollable,
            observable,
            reconstructible,
            is_qnd: uncontrollable && observable,
        }
    }
}

fn quad_directions(real: &QuadratureRealization, is_q: bool) -> RMat {
    let n = real.n();
    let mut d = RMat::zeros(2 * n, n);
    for mode in 0..n {
        d[(real.state_index(mode, is_q), mode)] = 1.0;
    }
    d
}

/// Structural case recognized by [`qnd_characterize`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CharacterizationCase {
    /// C₋ = -C₊ and Ω₋ = -Ω₊: p decouples.
    PCouplingOpposedHamiltonian,
    /// C₋ = C₊ and Ω₋ = Ω₊: q decouples.
    QCouplingMatchedHamiltonian,
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QndCharacterization {
    pub case: CharacterizationCase,
    pub reports: Vec<QndVariableReport>,
    /// Largest deviation of (𝔸, 𝔹, ℂ) from the case's closed form.
    pub closed_form_residual: Option<f64>,
    /// Observability of the two real pairs named by the case, in order.
    pub pair_observability: Option<[bool; 2]>,
}

impl QndCharacterization {
    pub fn qnd_variables(&self) -> impl Iterator<Item = &QndVariableReport> {
        self.reports.iter().filter(|r| r.is_qnd)
    }
}

const CLOSED_FORM_TOL: f64 = 1e-10;

fn real_pair_observable(m: &RMat, c: &RMat) -> bool {
    kalman::is_observable_pair(&to_complex(m), &to_complex(c))
}

/// Closed-form (𝔸, 𝔹, ℂ) for the p-coupling case, with 𝔹 carrying 𝔻.
fn p_case_closed_form(params: &SystemParams, d: &RMat) -> (RMat, RMat, RMat) {
    let n = params.n();
    let (rc, ic) = (re_part(params.c_minus()), im_part(params.c_minus()));
    let (ro, io) = (re_part(params.omega_minus()), im_part(params.omega_minus()));
    let zn = RMat::zeros(n, n);
    let top = (&ro + rc.transpose() * &ic - ic.transpose() * &rc) * 2.0;
    let a = block2(&zn, &top, &zn, &(&io * 2.0));
    let m = params.m();
    let zb = RMat::zeros(n, m);
    let b = block2(&(rc.transpose() * -2.0), &(ic.transpose() * -2.0), &zb, &zb) * d;
    let zc = RMat::zeros(m, n);
    let c = block2(&zc, &(&ic * -2.0), &zc, &(&rc * 2.0));
    (a, b, c)
}

/// Closed-form (𝔸, 𝔹, ℂ) for the q-coupling case, with 𝔹 carrying 𝔻.
fn q_case_closed_form(params: &SystemParams, d: &RMat) -> (RMat, RMat, RMat) {
    let n = params.n();
    let (rc, ic) = (re_part(params.c_minus()), im_part(params.c_minus()));
    let (ro, io) = (re_part(params.omega_minus()), im_part(params.omega_minus()));
    let zn = RMat::zeros(n, n);
    // Im(C†) = -Im(C)ᵀ and Re(C†) = Re(C)ᵀ.
    let bottom = (&ro - ic.transpose() * &rc + rc.transpose() * &ic) * -2.0;
    let a = block2(&(&io * 2.0), &zn, &bottom, &zn);
    let m = params.m();
    let zb = RMat::zeros(n, m);
    let b = block2(&zb, &zb, &(ic.transpose() * 2.0), &(rc.transpose() * -2.0)) * d;
    let zc = RMat::zeros(m, n);
    let c = block2(&(&rc * 2.0), &zc, &(&ic * 2.0), &zc);
    (a, b, c)
}

fn closed_form_residual(real: &QuadratureRealization, form: (RMat, RMat, RMat)) -> f64 {
    let (a, b, c) = form;
    [
        (&real.a - a).norm(),
        (&real.b - b).norm(),
        (&real.c - c).norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Identifies QND variables. The two structured cases are checked against
/// their closed-form dynamics; otherwise the uncontrollable-yet-observable
/// subspace is scanned for a basis of QND combinations.
pub fn qnd_characterize(params: &SystemParams, tol: f64) -> Result<QndCharacterization> {
    let real = quadrature_realization(params)?;
    let pair = SubspacePair::of(&real);
    let cm = params.c_minus();
    let cp = params.c_plus();
    let om = params.omega_minus();
    let op = params.omega_plus();
    let scale = 1.0 + cm.norm() + om.norm();
    let p_case = (cm + cp).norm() <= tol * scale && (om + op).norm() <= tol * scale;
    let q_case = (cm - cp).norm() <= tol * scale && (om - op).norm() <= tol * scale;
    let coupled = cm.norm() > tol;

    let structured = if p_case && coupled {
        Some((CharacterizationCase::PCouplingOpposedHamiltonian, false))
    } else if q_case && coupled {
        Some((CharacterizationCase::QCouplingMatchedHamiltonian, true))
    } else {
        None
    };

    if let Some((case, is_q)) = structured {
        let form = if is_q {
            q_case_closed_form(params, &real.d)
        } else {
            p_case_closed_form(params, &real.d)
        };
        let residual = closed_form_residual(&real, form);
        if residual > CLOSED_FORM_TOL * (1.0 + real.a.norm() + real.b.norm()) {
            return Err(Error::Internal(format!(
                "realization deviates from the decoupled closed form by {residual:.3e}"
            )));
        }
        let io = im_part(om);
        let first = if is_q { im_part(cm) } else { -im_part(cm) };
        let pairs = [
            real_pair_observable(&io, &first),
            real_pair_observable(&io, &re_part(cm)),
        ];
        let var = if is_q { Variable::Q } else { Variable::P };
        let report = pair.report(var, &quad_directions(&real, is_q));
        return Ok(QndCharacterization {
            case,
            reports: vec![report],
            closed_form_residual: Some(residual),
            pair_observability: Some(pairs),
        });
    }

    let mut reports = vec![
        pair.report(Variable::Q, &quad_directions(&real, true)),
        pair.report(Variable::P, &quad_directions(&real, false)),
    ];
    reports.extend(scan_qnd_combinations(&real, &pair));
    Ok(QndCharacterization {
        case: CharacterizationCase::General,
        reports,
        closed_form_residual: None,
        pair_observability: None,
    })
}

/// Basis of (controllable)^⊥ ∩ (unobservable)^⊥, one report per vector.
pub fn scan_qnd_combinations(
    real: &QuadratureRealization,
    pair: &SubspacePair,
) -> Vec<QndVariableReport> {
    let dim = real.a.nrows();
    let rc = kalman::complement(&pair.controllable.basis, dim);
    let nc = kalman::complement(&pair.unobservable.basis, dim);
    let both = kalman::intersection(&rc, &nc, dim);
    (0..both.ncols())
        .map(|j| {
            let v = both.column(j).into_owned();
            let mut coeffs: Vec<f64> = v.iter().copied().collect();
            // Fix the sign so the largest entry is positive.
            let lead = coeffs
                .iter()
                .copied()
                .fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            if lead < 0.0 {
                coeffs.iter_mut().for_each(|x| *x = -*x);
            }
            let dirs = RMat::from_column_slice(dim, 1, &coeffs);
            pair.report(Variable::Combination(coeffs), &dirs)
        })
        .collect()
}

/// QND sub-check attached to the bilateral BAE rules: observability of the
/// pair (i(Ω₋ ± Ω₊), C₋).
pub fn bilateral_qnd_pair_observable(params: &SystemParams, which: Quad) -> bool {
    let sign = match which {
        Quad::Q => cx(1.0, 0.0),
        Quad::P => cx(-1.0, 0.0),
    };
    let m = (params.omega_minus() + params.omega_plus() * sign) * cx(0.0, 1.0);
    kalman::is_observable_pair(&m, params.c_minus())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::I;

    fn c(re: f64, im: f64) -> num_complex::Complex64 {
        cx(re, im)
    }

    fn params(cm: CMat, cp: CMat, om: CMat, op: CMat) -> SystemParams {
        SystemParams::with_identity_scattering(cm, cp, om, op).unwrap()
    }

    #[test]
    fn zero_hamiltonian_commutes() {
        let cm = CMat::from_row_slice(1, 2, &[c(1.0, 0.5), c(0.0, 2.0)]);
        let p = params(
            cm.clone(),
            cm * c(0.3, 0.0),
            CMat::zeros(2, 2),
            CMat::zeros(2, 2),
        );
        assert_eq!(commutator_lh(&p).norm(), 0.0);
        assert!(is_qnd_interaction(&p, QND_TOL));
    }

    #[test]
    fn passive_case_commutes() {
        let cm = CMat::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let om = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let p = params(cm, CMat::zeros(1, 2), om, CMat::zeros(2, 2));
        let comm = commutator_lh(&p);
        assert_eq!(comm.coeff_a.norm(), 0.0);
        assert_eq!(comm.coeff_adag.norm(), 0.0);
        assert!(is_qnd_interaction(&p, QND_TOL));
    }

    #[test]
    fn siso_g_values() {
        let z = CMat::zeros(2, 2);
        let p = params(
            CMat::from_row_slice(1, 2, &[c(2f64.sqrt(), 0.0), c(0.0, 0.0)]),
            CMat::from_row_slice(1, 2, &[c(0.0, 0.0), c(1.0, 0.0)]),
            z.clone(),
            z,
        );
        assert!((siso_g(&p).unwrap() - 1.0).abs() < 1e-15);
        let q = params(
            CMat::zeros(1, 1),
            CMat::from_element(1, 1, c(1.0, 0.0)),
            CMat::zeros(1, 1),
            CMat::zeros(1, 1),
        );
        assert_eq!(siso_g(&q).unwrap(), -1.0);
    }

    #[test]
    fn feedthrough_for_self_adjoint_coupling() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let cm = CMat::from_row_slice(1, 2, &[c(h, 0.0), c(0.0, h)]);
        let p = params(cm.clone(), conj(&cm), CMat::zeros(2, 2), CMat::zeros(2, 2));
        let cons = qnd_interaction_consequences(&p, 1e-10).unwrap();
        assert!(cons.self_adjoint && cons.commuting);
        assert!(cons.transfer_is_feedthrough);
        assert!(cons.dl_vanishes);
    }

    #[test]
    fn non_self_adjoint_flagged() {
        let cm = CMat::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let om = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let p = params(cm, CMat::zeros(1, 2), om, CMat::zeros(2, 2));
        let cons = qnd_interaction_consequences(&p, 1e-10).unwrap();
        assert!(!cons.self_adjoint);
        assert!(!cons.dl_vanishes);
        assert_eq!(cons.failed.len(), 1);
        assert!(cons.markov_max > 0.1);
    }

    #[test]
    fn p_coupling_single_mode_is_qnd() {
        let w = 0.7;
        let p = params(
            CMat::from_element(1, 1, I),
            CMat::from_element(1, 1, -I),
            CMat::from_element(1, 1, c(w, 0.0)),
            CMat::from_element(1, 1, c(-w, 0.0)),
        );
        let ch = qnd_characterize(&p, 1e-10).unwrap();
        assert_eq!(ch.case, CharacterizationCase::PCouplingOpposedHamiltonian);
        assert!(ch.reports[0].is_qnd);
        assert!(ch.closed_form_residual.unwrap() < 1e-12);
    }

    #[test]
    fn q_coupling_closed_form_holds() {
        let cm = CMat::from_row_slice(
            2,
            2,
            &[c(0.3, 0.2), c(-1.0, 0.4), c(0.1, -0.6), c(0.5, 0.5)],
        );
        let om = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.2, 0.0), c(0.2, 0.0), c(-0.4, 0.0)]);
        let p = params(cm.clone(), cm, om.clone(), om);
        let ch = qnd_characterize(&p, 1e-10).unwrap();
        assert_eq!(ch.case, CharacterizationCase::QCouplingMatchedHamiltonian);
        let real = quadrature_realization(&p).unwrap();
        // q-row of 𝔸 has 2Im(Ω₋) on the q columns and nothing on p.
        let aqq = real.a.view((0, 0), (2, 2)).into_owned();
        let aqp = real.a.view((0, 2), (2, 2)).into_owned();
        assert!((aqq - im_part(p.omega_minus()) * 2.0).norm() < 1e-12);
        assert!(aqp.norm() < 1e-12);
        assert!(ch.reports[0].uncontrollable);
    }

    #[test]
    fn passive_real_coupling_has_no_qnd_variable() {
        let p = params(
            CMat::from_element(1, 1, c(1.0, 0.0)),
            CMat::zeros(1, 1),
            CMat::from_element(1, 1, c(0.5, 0.0)),
            CMat::from_element(1, 1, c(0.5, 0.0)),
        );
        let ch = qnd_characterize(&p, 1e-10).unwrap();
        assert_eq!(ch.case, CharacterizationCase::General);
        assert_eq!(ch.qnd_variables().count(), 0);
    }
}
