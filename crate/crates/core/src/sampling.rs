//! Random system generators: the generic valid class plus constructors that
//! satisfy the structural hypotheses tested elsewhere in the crate.

use rand::Rng;
use rand_distr::StandardNormal;

pub use crate::algebra::Realness;
use crate::algebra::{
    block2, conj, cx, from_parts, hstack, j_sharp, null_basis, quad_transform, to_complex, CMat,
    RMat, I, RANK_TOL,
};
use crate::model::{omega_from_hamiltonian, QuadratureRealization, StateOrdering, SystemParams};
use crate::transfer::{BlockDiagCase, Quad};

/// Relation imposed between Re(Ω₋) and Re(Ω₊).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReOmegaSign {
    Equal,
    Opposite,
}

pub fn gaussian_real<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> RMat {
    RMat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| {
        cx(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, m: usize) -> CMat {
    gaussian_complex(rng, m, m).qr().q()
}

pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, m: usize) -> RMat {
    gaussian_real(rng, m, m).qr().q()
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = gaussian_complex(rng, n, n);
    (&g + g.adjoint()) * cx(0.5, 0.0)
}

pub fn random_complex_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let f = gaussian_complex(rng, n, n);
    (&f + f.transpose()) * cx(0.5, 0.0)
}

pub fn random_real_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> RMat {
    let f = gaussian_real(rng, n, n);
    (&f + f.transpose()) * 0.5
}

pub fn random_real_antisymmetric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> RMat {
    let f = gaussian_real(rng, n, n);
    (&f - f.transpose()) * 0.5
}

/// Uniform over the full valid class: Hermitian Ω₋, symmetric Ω₊, unitary S
/// and Gaussian couplings.
pub fn random_params<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> SystemParams {
    SystemParams::new(
        random_unitary(rng, m),
        gaussian_complex(rng, m, n),
        gaussian_complex(rng, m, n),
        random_hermitian(rng, n),
        random_complex_symmetric(rng, n),
    )
    .expect("shapes consistent by construction")
}

fn scattering<R: Rng + ?Sized>(rng: &mut R, m: usize, class: Realness) -> CMat {
    let o = to_complex(&random_orthogonal(rng, m));
    match class {
        Realness::Real => o,
        Realness::Imaginary => o * I,
    }
}

fn coupling<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize, class: Realness) -> CMat {
    let g = to_complex(&gaussian_real(rng, m, n));
    match class {
        Realness::Real => g,
        Realness::Imaginary => g * I,
    }
}

/// Purely imaginary Ω: Ω₋ = iA with A antisymmetric, Ω₊ = iB with B symmetric.
fn imaginary_omega<R: Rng + ?Sized>(rng: &mut R, n: usize) -> (CMat, CMat) {
    let om = to_complex(&random_real_antisymmetric(rng, n)) * I;
    let op = to_complex(&random_real_symmetric(rng, n)) * I;
    (om, op)
}

/// S of class `s`, both C₋ and C₊ of class `c`, Ω purely imaginary.
pub fn bilateral_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    s: Realness,
    c: Realness,
) -> SystemParams {
    let (om, op) = imaginary_omega(rng, n);
    SystemParams::new(
        scattering(rng, m, s),
        coupling(rng, m, n, c),
        coupling(rng, m, n, c),
        om,
        op,
    )
    .expect("shapes consistent by construction")
}

/// S and C of the requested classes with Re(Ω₋) = ±Re(Ω₊) and otherwise
/// generic imaginary parts.
pub fn unilateral_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    relation: ReOmegaSign,
    s: Realness,
    c: Realness,
) -> SystemParams {
    let re = random_real_symmetric(rng, n);
    let re_plus = match relation {
        ReOmegaSign::Equal => re.clone(),
        ReOmegaSign::Opposite => -&re,
    };
    let om = from_parts(&re, &random_real_antisymmetric(rng, n));
    let op = from_parts(&re_plus, &random_real_symmetric(rng, n));
    SystemParams::new(
        scattering(rng, m, s),
        coupling(rng, m, n, c),
        coupling(rng, m, n, c),
        om,
        op,
    )
    .expect("shapes consistent by construction")
}

/// Real S, purely imaginary C₋ = sign·C₊, arbitrary Ω.
pub fn balanced_imaginary_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    sign: f64,
) -> SystemParams {
    let c = coupling(rng, m, n, Realness::Imaginary);
    SystemParams::new(
        scattering(rng, m, Realness::Real),
        c.clone(),
        c * cx(sign, 0.0),
        random_hermitian(rng, n),
        random_complex_symmetric(rng, n),
    )
    .expect("shapes consistent by construction")
}

/// Real isotropic rows `[R, RY]` (Y symmetric): `Λ 𝕁 Λᵀ = 0`.
pub fn isotropic_rows<R: Rng + ?Sized>(rng: &mut R, rows: usize, n: usize) -> RMat {
    let r = gaussian_real(rng, rows, n);
    let y = random_real_symmetric(rng, n);
    hstack(&[&r, &(&r * y)])
}

/// A system whose coupling operators L = Λx are self-adjoint, mutually
/// commuting, and commute with H. Requires `m ≤ n`. S is a random unitary
/// when `generic_scattering`, otherwise the identity.
pub fn qnd_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    generic_scattering: bool,
) -> SystemParams {
    assert!(m <= n, "isotropic coupling needs m <= n");
    let lambda = isotropic_rows(rng, m, n);
    let q = null_basis(&(&lambda * j_sharp(n)), RANK_TOL);
    let k = q.ncols();
    let h = &q * random_real_symmetric(rng, k) * q.transpose();
    let v = quad_transform(n);
    let omega = v.adjoint() * to_complex(&h) * &v;
    let om = omega.view((0, 0), (n, n)).into_owned();
    let op = omega.view((0, n), (n, n)).into_owned();
    // Clean round-off so the Hermitian/symmetric checks are exact.
    let om = (&om + om.adjoint()) * cx(0.5, 0.0);
    let op = (&op + op.transpose()) * cx(0.5, 0.0);
    let lq = to_complex(&lambda.columns(0, n).into_owned());
    let lp = to_complex(&lambda.columns(n, n).into_owned());
    let h2 = std::f64::consts::FRAC_1_SQRT_2;
    let c_minus = (&lq - &lp * I) * cx(h2, 0.0);
    let c_plus = conj(&c_minus);
    let s = if generic_scattering {
        random_unitary(rng, m)
    } else {
        CMat::identity(m, m)
    };
    SystemParams::new(s, c_minus, c_plus, om, op).expect("shapes consistent by construction")
}

/// Co-subsystem `(A, B, C, I)` with `B = 𝕁Cᵀ𝕁` and `A = 𝕁H + ½BC`, where
/// `H` is supported on null(C𝕁), so that `CA = ½CBC`. When `isotropic_q` the
/// q output rows are isotropic.
pub fn co_subsystem<R: Rng + ?Sized>(
    rng: &mut R,
    n1: usize,
    m: usize,
    isotropic_q: bool,
) -> QuadratureRealization {
    let cq = if isotropic_q {
        isotropic_rows(rng, m, n1)
    } else {
        gaussian_real(rng, m, 2 * n1)
    };
    let cp = gaussian_real(rng, m, 2 * n1);
    let c = crate::algebra::vstack(&[&cq, &cp]);
    let jn = j_sharp(n1);
    let jm = j_sharp(m);
    let b = &jn * c.transpose() * &jm;
    let q = null_basis(&(&c * &jn), RANK_TOL);
    let k = q.ncols();
    let h = &q * random_real_symmetric(rng, k) * q.transpose();
    let a = &jn * h + &b * &c * 0.5;
    QuadratureRealization::new(
        a,
        b,
        c,
        RMat::identity(2 * m, 2 * m),
        StateOrdering::Blocked,
    )
    .expect("shapes consistent by construction")
}

/// Appends an isolated block of `n2` modes with imaginary-axis dynamics to a
/// realization (a c̄ō subsystem).
pub fn with_isolated_modes<R: Rng + ?Sized>(
    rng: &mut R,
    real: &QuadratureRealization,
    n2: usize,
) -> QuadratureRealization {
    let n1 = real.n();
    let m = real.m();
    let h2 = random_real_symmetric(rng, 2 * n2);
    let a2 = j_sharp(n2) * h2;
    let a = block2(
        &real.a,
        &RMat::zeros(2 * n1, 2 * n2),
        &RMat::zeros(2 * n2, 2 * n1),
        &a2,
    );
    let b = crate::algebra::vstack(&[&real.b, &RMat::zeros(2 * n2, 2 * m)]);
    let c = hstack(&[&real.c, &RMat::zeros(2 * m, 2 * n2)]);
    // Reorder [q_co, p_co, q_iso, p_iso] into [q; p].
    let n = n1 + n2;
    let target = |i: usize| match i {
        i if i < n1 => i,
        i if i < 2 * n1 => n + (i - n1),
        i if i < 2 * n1 + n2 => n1 + (i - 2 * n1),
        i => n + n1 + (i - 2 * n1 - n2),
    };
    let mut perm = RMat::zeros(2 * n, 2 * n);
    for i in 0..2 * n {
        perm[(target(i), i)] = 1.0;
    }
    let a = &perm * a * perm.transpose();
    let b = &perm * b;
    let c = c * perm.transpose();
    QuadratureRealization::new(a, b, c, real.d.clone(), StateOrdering::Blocked)
        .expect("shapes consistent by construction")
}

/// Row-vector coefficients `(C₋, C₊)` of the operator `μ·x` for a real row μ
/// over `[q; p]`.
fn operator_coefficients(mu: &RMat, n: usize) -> (CMat, CMat) {
    let mq = to_complex(&mu.columns(0, n).into_owned());
    let mp = to_complex(&mu.columns(n, n).into_owned());
    let h2 = cx(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    ((&mq - &mp * I) * h2, (&mq + &mp * I) * h2)
}

/// Single channel, S = 1, with L + L* (`Q`) or L - L* (`P`) commuting with H.
/// When `balanced` the other part of L vanishes too, so g = 0.
pub fn siso_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    which: Quad,
    balanced: bool,
) -> SystemParams {
    let lambda = gaussian_real(rng, 1, 2 * n);
    let q = null_basis(&(&lambda * j_sharp(n)), RANK_TOL);
    let k = q.ncols();
    let h = &q * random_real_symmetric(rng, k) * q.transpose();
    let (om, op) = omega_from_hamiltonian(&h);
    let (lm, lp) = operator_coefficients(&lambda, n);
    let (mm, mp) = if balanced {
        (CMat::zeros(1, n), CMat::zeros(1, n))
    } else {
        operator_coefficients(&gaussian_real(rng, 1, 2 * n), n)
    };
    // Q: L = λx + iμx; P: L = iλx + μx.
    let (cm, cp) = match which {
        Quad::Q => (&lm + &mm * I, &lp + &mp * I),
        Quad::P => (&lm * I + &mm, &lp * I + &mp),
    };
    SystemParams::with_identity_scattering(cm, cp, om, op)
        .expect("shapes consistent by construction")
}

/// Instance of one of the block-diagonal cases with [L, H] = 0 and a random
/// unitary S. Needs `2m < n`.
pub fn blockdiag_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    case: BlockDiagCase,
) -> SystemParams {
    assert!(2 * m < n, "block-diagonal instances need 2m < n");
    let c = gaussian_complex(rng, m, n);
    let (cm, cp) = match case {
        BlockDiagCase::AnnihilationCoupling => (c, CMat::zeros(m, n)),
        BlockDiagCase::CreationCoupling => (CMat::zeros(m, n), c),
        BlockDiagCase::NoSqueezing | BlockDiagCase::NoDetuning => {
            let alpha = cx(rng.sample(StandardNormal), rng.sample(StandardNormal));
            (c.clone(), c * alpha)
        }
    };
    // Columns of N annihilated by C₋ and by conj(C₊).
    let stacked = crate::algebra::vstack(&[&cm, &conj(&cp)]);
    let nb = crate::algebra::null_basis_complex(&stacked, RANK_TOL);
    let k = nb.ncols();
    let herm = &nb * random_hermitian(rng, k) * nb.adjoint();
    let sym = &nb * random_complex_symmetric(rng, k) * nb.transpose();
    let herm = (&herm + herm.adjoint()) * cx(0.5, 0.0);
    let sym = (&sym + sym.transpose()) * cx(0.5, 0.0);
    let (om, op) = match case {
        BlockDiagCase::NoSqueezing => (herm, CMat::zeros(n, n)),
        BlockDiagCase::NoDetuning => (CMat::zeros(n, n), sym),
        _ => (herm, sym),
    };
    SystemParams::new(random_unitary(rng, m), cm, cp, om, op)
        .expect("shapes consistent by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::quadrature_realization;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_params_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let n = rng.random_range(1..=4);
            let m = rng.random_range(1..=3);
            assert!(random_params(&mut rng, n, m).validate().is_valid());
        }
    }

    #[test]
    fn qnd_instance_has_self_adjoint_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = qnd_instance(&mut rng, 3, 2, true);
        assert!(p.validate().is_valid());
        assert!((p.c_minus() - conj(p.c_plus())).norm() < 1e-14);
    }

    #[test]
    fn co_subsystem_is_realizable() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for iso in [true, false] {
            let r = co_subsystem(&mut rng, 3, 2, iso);
            assert!(r.realizability_residual() < 1e-10);
            let ca = &r.c * &r.a;
            let cbc = &r.c * &r.b * &r.c * 0.5;
            assert!((ca - cbc).norm() < 1e-10);
            let r2 = with_isolated_modes(&mut rng, &r, 2);
            assert!(r2.realizability_residual() < 1e-10);
        }
    }

    #[test]
    fn hypothesis_instances_build_realizations() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for s in [Realness::Real, Realness::Imaginary] {
            for c in [Realness::Real, Realness::Imaginary] {
                quadrature_realization(&bilateral_instance(&mut rng, 3, 2, s, c)).unwrap();
                for rel in [ReOmegaSign::Equal, ReOmegaSign::Opposite] {
                    quadrature_realization(&unilateral_instance(&mut rng, 3, 2, rel, s, c))
                        .unwrap();
                }
            }
        }
        quadrature_realization(&balanced_imaginary_instance(&mut rng, 2, 2, -1.0)).unwrap();
    }
}
