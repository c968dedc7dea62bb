//! Physical parameters of an n-mode, m-channel linear quantum system and the
//! two state-space realizations built from them.
//!
//! The state is ordered `[a; a^#]` in annihilation-creation form and
//! `[q; p]` in quadrature form. Inputs and outputs follow the same layout.

use serde::Serialize;

use crate::algebra::{
    self, block2, conj, cx, flat_adjoint, im_part, j_flat, j_sharp, max_abs, quad_transform,
    re_part, sharp_adjoint_real, to_complex, CMat, RMat,
};
use crate::error::{shape_err, Error, Result};

/// Tolerance used when checking the Hermitian/unitary invariants.
pub const VALID_TOL: f64 = 1e-9;
/// Agreement required between the two quadrature construction paths.
pub const PATH_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    s: CMat,
    c_minus: CMat,
    c_plus: CMat,
    omega_minus: CMat,
    omega_plus: CMat,
}

/// One violated invariant with the norm of its defect.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl SystemParams {
    /// Builds parameters after checking every shape against `n = Ω₋.nrows()`
    /// and `m = S.nrows()`.
    pub fn new(
        s: CMat,
        c_minus: CMat,
        c_plus: CMat,
        omega_minus: CMat,
        omega_plus: CMat,
    ) -> Result<Self> {
        let n = omega_minus.nrows();
        let m = s.nrows();
        let checks: [(&str, &CMat, (usize, usize)); 5] = [
            ("S", &s, (m, m)),
            ("C_minus", &c_minus, (m, n)),
            ("C_plus", &c_plus, (m, n)),
            ("Omega_minus", &omega_minus, (n, n)),
            ("Omega_plus", &omega_plus, (n, n)),
        ];
        for (name, mat, shape) in checks {
            if mat.shape() != shape {
                return Err(shape_err(name, shape, mat.shape()));
            }
        }
        if n == 0 || m == 0 {
            return Err(Error::InvalidParams("n and m must be positive".into()));
        }
        Ok(Self {
            s,
            c_minus,
            c_plus,
            omega_minus,
            omega_plus,
        })
    }

    /// Same as [`SystemParams::new`] with `S = I`.
    pub fn with_identity_scattering(
        c_minus: CMat,
        c_plus: CMat,
        omega_minus: CMat,
        omega_plus: CMat,
    ) -> Result<Self> {
        let m = c_minus.nrows();
        Self::new(
            CMat::identity(m, m),
            c_minus,
            c_plus,
            omega_minus,
            omega_plus,
        )
    }

    pub fn n(&self) -> usize {
        self.omega_minus.nrows()
    }

    pub fn m(&self) -> usize {
        self.s.nrows()
    }

    pub fn s(&self) -> &CMat {
        &self.s
    }

    pub fn c_minus(&self) -> &CMat {
        &self.c_minus
    }

    pub fn c_plus(&self) -> &CMat {
        &self.c_plus
    }

    pub fn omega_minus(&self) -> &CMat {
        &self.omega_minus
    }

    pub fn omega_plus(&self) -> &CMat {
        &self.omega_plus
    }

    /// 𝒞 = Δ(C₋, C₊).
    pub fn coupling_matrix(&self) -> CMat {
        block2(
            &self.c_minus,
            &self.c_plus,
            &conj(&self.c_plus),
            &conj(&self.c_minus),
        )
    }

    /// Ω = Δ(Ω₋, Ω₊).
    pub fn hamiltonian_matrix(&self) -> CMat {
        block2(
            &self.omega_minus,
            &self.omega_plus,
            &conj(&self.omega_plus),
            &conj(&self.omega_minus),
        )
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(VALID_TOL)
    }

    // Negated comparisons so NaN residuals count as violations.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate_with(&self, tol: f64) -> ValidationReport {
        let mut violations = Vec::new();
        let all = [
            ("S", &self.s),
            ("C_minus", &self.c_minus),
            ("C_plus", &self.c_plus),
            ("Omega_minus", &self.omega_minus),
            ("Omega_plus", &self.omega_plus),
        ];
        for (field, mat) in all {
            if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                violations.push(Violation {
                    field,
                    message: format!("{field} has non-finite entries"),
                    residual: f64::INFINITY,
                });
            }
        }
        let unitary = algebra::unitarity_defect(&self.s);
        if !(unitary <= tol * (1.0 + self.s.norm())) {
            violations.push(Violation {
                field: "S",
                message: "S not unitary".into(),
                residual: unitary,
            });
        }
        let herm = (&self.omega_minus - self.omega_minus.adjoint()).norm();
        if !(herm <= tol * (1.0 + self.omega_minus.norm())) {
            violations.push(Violation {
                field: "Omega_minus",
                message: "Omega_minus not Hermitian".into(),
                residual: herm,
            });
        }
        let sym = (&self.omega_plus - self.omega_plus.transpose()).norm();
        if !(sym <= tol * (1.0 + self.omega_plus.norm())) {
            violations.push(Violation {
                field: "Omega_plus",
                message: "Omega_plus not symmetric".into(),
                residual: sym,
            });
        }
        ValidationReport { violations }
    }

    fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            return Ok(());
        }
        let msg = report
            .violations
            .iter()
            .map(|v| format!("{} (residual {:.3e})", v.message, v.residual))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::InvalidParams(msg))
    }
}

/// (𝒜, ℬ, 𝒞, 𝒟) in annihilation-creation coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnihilationRealization {
    pub a: CMat,
    pub b: CMat,
    pub c: CMat,
    pub d: CMat,
}

impl AnnihilationRealization {
    pub fn n(&self) -> usize {
        self.a.nrows() / 2
    }

    pub fn m(&self) -> usize {
        self.d.nrows() / 2
    }

    /// ‖𝒜 + 𝒜♭ + ℬℬ♭‖.
    pub fn realizability_residual(&self) -> f64 {
        let af = flat_adjoint(&self.a).expect("even by construction");
        let bf = flat_adjoint(&self.b).expect("even by construction");
        (&self.a + af + &self.b * bf).norm()
    }

    /// True if all four matrices have doubled-up structure.
    pub fn is_doubled_up(&self, tol: f64) -> bool {
        [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .all(|x| algebra::DoubledMatrix::from_full(x, tol).is_some())
    }
}

pub fn annihilation_realization(params: &SystemParams) -> Result<AnnihilationRealization> {
    params.ensure_valid()?;
    let n = params.n();
    let c = params.coupling_matrix();
    let m = params.m();
    let d = block2(
        &params.s,
        &CMat::zeros(m, m),
        &CMat::zeros(m, m),
        &conj(&params.s),
    );
    let c_flat = flat_adjoint(&c)?;
    let b = -(&c_flat * &d);
    let a =
        -(j_flat(n) * params.hamiltonian_matrix()) * cx(0.0, 1.0) - (&c_flat * &c) * cx(0.5, 0.0);
    Ok(AnnihilationRealization { a, b, c, d })
}

/// Layout of the state vector of a quadrature realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StateOrdering {
    /// `[q₁ … qₙ, p₁ … pₙ]`
    Blocked,
    /// `[q₁, p₁, q₂, p₂, …]`
    Interleaved,
}

/// Real quadrature form (𝔸, 𝔹, ℂ, 𝔻). Inputs and outputs are always ordered
/// `[q; p]` by channel block; the state layout is given by `ordering`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRealization {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub d: RMat,
    pub ordering: StateOrdering,
}

impl QuadratureRealization {
    pub fn new(a: RMat, b: RMat, c: RMat, d: RMat, ordering: StateOrdering) -> Result<Self> {
        let ns = a.nrows();
        let no = d.nrows();
        if a.ncols() != ns || !ns.is_multiple_of(2) {
            return Err(shape_err("A", (ns, ns), a.shape()));
        }
        if d.ncols() != no || !no.is_multiple_of(2) {
            return Err(shape_err("D", (no, no), d.shape()));
        }
        if b.shape() != (ns, no) {
            return Err(shape_err("B", (ns, no), b.shape()));
        }
        if c.shape() != (no, ns) {
            return Err(shape_err("C", (no, ns), c.shape()));
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            ordering,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows() / 2
    }

    pub fn m(&self) -> usize {
        self.d.nrows() / 2
    }

    /// Symplectic form matching the state layout.
    pub fn state_symplectic(&self) -> RMat {
        let n = self.n();
        match self.ordering {
            StateOrdering::Blocked => j_sharp(n),
            StateOrdering::Interleaved => RMat::from_fn(2 * n, 2 * n, |i, j| {
                if i % 2 == 0 && j == i + 1 {
                    1.0
                } else if i % 2 == 1 && j + 1 == i {
                    -1.0
                } else {
                    0.0
                }
            }),
        }
    }

    /// Index of quadrature `p` (false) or `q` (true) of `mode` in the state.
    pub fn state_index(&self, mode: usize, is_q: bool) -> usize {
        match (self.ordering, is_q) {
            (StateOrdering::Blocked, true) => mode,
            (StateOrdering::Blocked, false) => self.n() + mode,
            (StateOrdering::Interleaved, true) => 2 * mode,
            (StateOrdering::Interleaved, false) => 2 * mode + 1,
        }
    }

    /// ‖𝔸𝕁 + 𝕁𝔸ᵀ + 𝔹𝕁𝔹ᵀ‖.
    pub fn realizability_residual(&self) -> f64 {
        let j = self.state_symplectic();
        let jm = j_sharp(self.m());
        (&self.a * &j + &j * self.a.transpose() + &self.b * jm * self.b.transpose()).norm()
    }
}

fn omega_quadrature_block(params: &SystemParams) -> RMat {
    let sum = &params.omega_minus + &params.omega_plus;
    let diff = &params.omega_minus - &params.omega_plus;
    block2(
        &im_part(&sum),
        &re_part(&diff),
        &(-re_part(&sum)),
        &im_part(&diff),
    )
}

/// Builds the quadrature form by the explicit block formulas, then checks it
/// against V_m(·)V_n† conjugation of the annihilation form.
pub fn quadrature_realization(params: &SystemParams) -> Result<QuadratureRealization> {
    let ann = annihilation_realization(params)?;
    let (sr, si) = (re_part(&params.s), im_part(&params.s));
    let d = block2(&sr, &(-&si), &si, &sr);
    let cq = &params.c_minus + &params.c_plus;
    let cp = &params.c_minus - &params.c_plus;
    let c = block2(
        &re_part(&cq),
        &(-im_part(&cp)),
        &im_part(&cq),
        &re_part(&cp),
    );
    let (cq_h, cp_h) = (cq.adjoint(), cp.adjoint());
    let lead = block2(
        &re_part(&cp_h),
        &(-im_part(&cp_h)),
        &im_part(&cq_h),
        &re_part(&cq_h),
    );
    let b = -(lead * &d);
    let a = omega_quadrature_block(params) - sharp_adjoint_real(&c)? * &c * 0.5;
    let real = QuadratureRealization::new(a, b, c, d, StateOrdering::Blocked)?;

    let conjugated = conjugate_to_quadrature(&ann)?;
    let pairs = [
        ("A", &real.a, &conjugated.a),
        ("B", &real.b, &conjugated.b),
        ("C", &real.c, &conjugated.c),
        ("D", &real.d, &conjugated.d),
    ];
    for (name, x, y) in pairs {
        let diff = algebra::max_abs_real(&(x - y));
        if diff > PATH_TOL * (1.0 + algebra::max_abs_real(x)) {
            return Err(Error::Internal(format!(
                "quadrature {name} block formula disagrees with conjugation by {diff:.3e}"
            )));
        }
    }
    Ok(real)
}

/// Maps an annihilation realization to quadrature form by V conjugation.
/// Fails if the result carries an imaginary residue above [`PATH_TOL`].
pub fn conjugate_to_quadrature(ann: &AnnihilationRealization) -> Result<QuadratureRealization> {
    let vn = quad_transform(ann.n());
    let vm = quad_transform(ann.m());
    let mats = [
        &vn * &ann.a * vn.adjoint(),
        &vn * &ann.b * vm.adjoint(),
        &vm * &ann.c * vn.adjoint(),
        &vm * &ann.d * vm.adjoint(),
    ];
    for x in &mats {
        let residue = algebra::max_abs_real(&im_part(x));
        if residue > PATH_TOL * (1.0 + max_abs(x)) {
            return Err(Error::Internal(format!(
                "conjugated realization has imaginary residue {residue:.3e}"
            )));
        }
    }
    let [a, b, c, d] = mats.map(|x| re_part(&x));
    QuadratureRealization::new(a, b, c, d, StateOrdering::Blocked)
}

/// Ω₋, Ω₊ of the Hamiltonian ½xᵀℍx, x = [q; p], for real symmetric ℍ of
/// even size. The results are exactly Hermitian and symmetric.
pub fn omega_from_hamiltonian(h: &RMat) -> (CMat, CMat) {
    let n = h.nrows() / 2;
    let v = quad_transform(n);
    let omega = v.adjoint() * to_complex(h) * &v;
    let om = omega.view((0, 0), (n, n)).into_owned();
    let op = omega.view((0, n), (n, n)).into_owned();
    (
        (&om + om.adjoint()) * cx(0.5, 0.0),
        (&op + op.transpose()) * cx(0.5, 0.0),
    )
}

/// Λ_q = (C₋ + C₊)/√2 and Λ_p = i(C₋ - C₊)/√2.
pub fn coupling_rows(params: &SystemParams) -> (CMat, CMat) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let lq = (&params.c_minus + &params.c_plus) * cx(h, 0.0);
    let lp = (&params.c_minus - &params.c_plus) * cx(0.0, h);
    (lq, lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{approx_eq, I};

    fn row(vals: &[f64]) -> CMat {
        CMat::from_row_slice(
            1,
            vals.len(),
            &vals.iter().map(|&v| cx(v, 0.0)).collect::<Vec<_>>(),
        )
    }

    fn diag(vals: &[f64]) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            vals.len(),
            vals.iter().map(|&v| cx(v, 0.0)),
        ))
    }

    #[test]
    fn passive_pair_is_valid() {
        let p = SystemParams::with_identity_scattering(
            row(&[1.0, 0.0]),
            CMat::zeros(1, 2),
            diag(&[0.0, 1.0]),
            CMat::zeros(2, 2),
        )
        .unwrap();
        assert!(p.validate().is_valid());
    }

    #[test]
    fn non_symmetric_omega_plus_reported() {
        let op = CMat::from_row_slice(
            2,
            2,
            &[cx(0.0, 0.0), cx(1.0, 0.0), cx(2.0, 0.0), cx(0.0, 0.0)],
        );
        let p = SystemParams::with_identity_scattering(
            row(&[1.0, 0.0]),
            CMat::zeros(1, 2),
            diag(&[0.0, 1.0]),
            op,
        )
        .unwrap();
        let report = p.validate();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].message, "Omega_plus not symmetric");
        assert!(annihilation_realization(&p).is_err());
    }

    #[test]
    fn shape_mismatch_is_error() {
        let err = SystemParams::with_identity_scattering(
            row(&[1.0, 0.0, 0.0]),
            CMat::zeros(1, 2),
            diag(&[0.0, 1.0]),
            CMat::zeros(2, 2),
        );
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn passive_zero_hamiltonian_drift() {
        let c = CMat::from_row_slice(1, 2, &[cx(0.3, 0.1), cx(-0.2, 0.7)]);
        let p = SystemParams::with_identity_scattering(
            c.clone(),
            CMat::zeros(1, 2),
            CMat::zeros(2, 2),
            CMat::zeros(2, 2),
        )
        .unwrap();
        let ann = annihilation_realization(&p).unwrap();
        let expect = algebra::doubled_up(&(c.adjoint() * &c), &CMat::zeros(2, 2))
            .unwrap()
            .full()
            * cx(-0.5, 0.0);
        assert!(approx_eq(&ann.a, &expect, 1e-14, 1e-12));
        assert!(ann.realizability_residual() < 1e-14);
    }

    #[test]
    fn empty_system_quadrature() {
        let p = SystemParams::with_identity_scattering(
            CMat::zeros(1, 1),
            CMat::zeros(1, 1),
            CMat::zeros(1, 1),
            CMat::zeros(1, 1),
        )
        .unwrap();
        let q = quadrature_realization(&p).unwrap();
        assert_eq!(q.a, RMat::zeros(2, 2));
        assert_eq!(q.b, RMat::zeros(2, 2));
        assert_eq!(q.c, RMat::zeros(2, 2));
        assert_eq!(q.d, RMat::identity(2, 2));
    }

    #[test]
    fn real_coupling_gives_block_diagonal_output_matrix() {
        let cm = CMat::from_row_slice(1, 2, &[cx(0.4, 0.0), cx(1.1, 0.0)]);
        let cp = CMat::from_row_slice(1, 2, &[cx(-0.2, 0.0), cx(0.5, 0.0)]);
        let om = CMat::from_row_slice(2, 2, &[cx(0.0, 0.0), I, -I, cx(0.0, 0.0)]);
        let op = CMat::from_row_slice(
            2,
            2,
            &[cx(0.0, 0.3), cx(0.0, 0.1), cx(0.0, 0.1), cx(0.0, -0.4)],
        );
        let p = SystemParams::with_identity_scattering(cm.clone(), cp.clone(), om, op).unwrap();
        let q = quadrature_realization(&p).unwrap();
        let z = RMat::zeros(1, 2);
        let expect = block2(&re_part(&(&cm + &cp)), &z, &z, &re_part(&(&cm - &cp)));
        assert!((q.c - expect).norm() < 1e-14);
    }

    #[test]
    fn coupling_rows_arithmetic() {
        let p = SystemParams::with_identity_scattering(
            row(&[1.0, 0.0]),
            row(&[0.0, 1.0]),
            CMat::zeros(2, 2),
            CMat::zeros(2, 2),
        )
        .unwrap();
        let (lq, lp) = coupling_rows(&p);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(approx_eq(&lq, &row(&[h, h]), 1e-15, 0.0));
        let expect = CMat::from_row_slice(1, 2, &[cx(0.0, h), cx(0.0, -h)]);
        assert!(approx_eq(&lp, &expect, 1e-15, 0.0));
    }

    #[test]
    fn q_and_p_coupling_rows_vanish() {
        let c = CMat::from_row_slice(1, 2, &[cx(0.2, 0.5), cx(-1.0, 0.1)]);
        let z = CMat::zeros(2, 2);
        let q = SystemParams::with_identity_scattering(c.clone(), c.clone(), z.clone(), z.clone())
            .unwrap();
        assert_eq!(coupling_rows(&q).1, CMat::zeros(1, 2));
        let p = SystemParams::with_identity_scattering(c.clone(), -c, z.clone(), z).unwrap();
        assert_eq!(coupling_rows(&p).0, CMat::zeros(1, 2));
    }
}
