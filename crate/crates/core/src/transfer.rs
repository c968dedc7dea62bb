//! Transfer matrices G[s] = 𝔻 + ℂ(sI - 𝔸)⁻¹𝔹, Markov parameters, zero-block
//! certificates and closed-form special cases.

use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::{block2, conj, cx, quad_transform, to_complex, CMat, RMat};
use crate::error::{Error, Result};
use crate::model::{AnnihilationRealization, QuadratureRealization, SystemParams};
use crate::qnd;

/// Minimum distance between s and the spectrum of 𝔸 accepted by [`evaluate`].
pub const POLE_GUARD: f64 = 1e-8;

/// Quadrature half of an input or output vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Quad {
    Q,
    P,
}

impl Quad {
    pub fn name(self) -> &'static str {
        match self {
            Quad::Q => "q",
            Quad::P => "p",
        }
    }

    pub fn other(self) -> Quad {
        match self {
            Quad::Q => Quad::P,
            Quad::P => Quad::Q,
        }
    }

    /// Offset of this half in a `[q; p]` vector with `m` channels.
    pub fn offset(self, m: usize) -> usize {
        match self {
            Quad::Q => 0,
            Quad::P => m,
        }
    }
}

/// Names the transfer block from the `input` half to the `output` half.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BlockSelector {
    pub output: Quad,
    pub input: Quad,
}

impl BlockSelector {
    pub const fn new(output: Quad, input: Quad) -> Self {
        Self { output, input }
    }

    pub const ALL: [BlockSelector; 4] = [
        BlockSelector::new(Quad::Q, Quad::Q),
        BlockSelector::new(Quad::Q, Quad::P),
        BlockSelector::new(Quad::P, Quad::Q),
        BlockSelector::new(Quad::P, Quad::P),
    ];

    pub fn is_cross(self) -> bool {
        self.output != self.input
    }

    /// Extracts this block from a 2m×2m matrix.
    pub fn block<T>(self, g: &nalgebra::DMatrix<T>) -> nalgebra::DMatrix<T>
    where
        T: nalgebra::Scalar,
    {
        let m = g.nrows() / 2;
        g.view((self.output.offset(m), self.input.offset(m)), (m, m))
            .into_owned()
    }
}

impl fmt::Display for BlockSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}_out, {}_in)", self.output.name(), self.input.name())
    }
}

fn nearest_pole(eigs: &[Complex64], s: Complex64) -> f64 {
    eigs.iter()
        .map(|e| (e - s).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Eigenvalues of a real square matrix.
pub fn spectrum(a: &RMat) -> Vec<Complex64> {
    if a.is_empty() {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().copied().collect()
}

/// G[s] for a quadrature realization. Refuses s within [`POLE_GUARD`] of an
/// eigenvalue of 𝔸.
pub fn evaluate(real: &QuadratureRealization, s: Complex64) -> Result<CMat> {
    let eigs = spectrum(&real.a);
    evaluate_with_spectrum(real, &eigs, s)
}

/// [`evaluate`] with a precomputed spectrum of 𝔸.
pub fn evaluate_with_spectrum(
    real: &QuadratureRealization,
    eigs: &[Complex64],
    s: Complex64,
) -> Result<CMat> {
    let distance = nearest_pole(eigs, s);
    if distance < POLE_GUARD {
        return Err(Error::Pole { s, distance });
    }
    resolvent_product(
        &to_complex(&real.a),
        &to_complex(&real.b),
        &to_complex(&real.c),
        &to_complex(&real.d),
        s,
    )
}

fn resolvent_product(a: &CMat, b: &CMat, c: &CMat, d: &CMat, s: Complex64) -> Result<CMat> {
    let k = a.nrows();
    let shifted = CMat::identity(k, k) * s - a;
    let x = shifted
        .lu()
        .solve(b)
        .ok_or(Error::Pole { s, distance: 0.0 })?;
    Ok(d + c * x)
}

/// G[s] for an annihilation realization, with the same pole guard.
pub fn evaluate_annihilation(ann: &AnnihilationRealization, s: Complex64) -> Result<CMat> {
    let eigs: Vec<Complex64> = if ann.a.is_empty() {
        Vec::new()
    } else {
        ann.a
            .clone()
            .schur()
            .unpack()
            .1
            .diagonal()
            .iter()
            .copied()
            .collect()
    };
    let distance = nearest_pole(&eigs, s);
    if distance < POLE_GUARD {
        return Err(Error::Pole { s, distance });
    }
    resolvent_product(&ann.a, &ann.b, &ann.c, &ann.d, s)
}

/// ℂ𝔸ᵏ𝔹 for k = 0..=k_max.
pub fn markov(real: &QuadratureRealization, k_max: usize) -> Vec<RMat> {
    let mut out = Vec::with_capacity(k_max + 1);
    let mut ak_b = real.b.clone();
    for k in 0..=k_max {
        if k > 0 {
            ak_b = &real.a * ak_b;
        }
        out.push(&real.c * &ak_b);
    }
    out
}

/// Evidence that one transfer block vanishes identically: the feedthrough
/// block and the first 2n Markov blocks are all below tolerance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroBlockCertificate {
    pub selector: BlockSelector,
    pub horizon: usize,
    pub feedthrough_residual: f64,
    pub max_residual: f64,
    pub verdict: bool,
    /// Largest block norm seen when evaluating G at sample points.
    pub spot_check_max: f64,
    /// False if the verdict is positive but the sampled block is not small.
    pub consistent: bool,
}

/// Sample points safely to the right of the spectrum of 𝔸.
pub fn spot_points(real: &QuadratureRealization, count: usize) -> Vec<Complex64> {
    let r = 1.0 + real.a.norm();
    (0..count)
        .map(|k| {
            let k = k as f64;
            cx(r * (1.1 + 0.37 * k), 0.7 * k - 1.3)
        })
        .collect()
}

pub fn certify_zero_block(
    real: &QuadratureRealization,
    selector: BlockSelector,
    tol: f64,
) -> ZeroBlockCertificate {
    let horizon = 2 * real.n();
    let feedthrough_residual = selector.block(&real.d).norm();
    let mut max_residual = feedthrough_residual;
    if horizon > 0 {
        for mk in markov(real, horizon - 1) {
            max_residual = max_residual.max(selector.block(&mk).norm());
        }
    }
    let verdict = max_residual <= tol;
    let eigs = spectrum(&real.a);
    let spot_check_max = spot_points(real, 5)
        .into_iter()
        .filter_map(|s| evaluate_with_spectrum(real, &eigs, s).ok())
        .map(|g| selector.block(&g).norm())
        .fold(0.0, f64::max);
    let consistent = !verdict || spot_check_max <= 1e3 * tol.max(f64::EPSILON);
    ZeroBlockCertificate {
        selector,
        horizon,
        feedthrough_residual,
        max_residual,
        verdict,
        spot_check_max,
        consistent,
    }
}

/// Scalar rational function with real coefficients, highest power first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RationalScalar {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

impl RationalScalar {
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self> {
        match denominator.first() {
            Some(lead) if *lead != 0.0 => Ok(Self {
                numerator,
                denominator,
            }),
            _ => Err(Error::Config(
                "denominator needs a nonzero leading coefficient".into(),
            )),
        }
    }

    fn horner(coeffs: &[f64], s: Complex64) -> Complex64 {
        coeffs
            .iter()
            .fold(cx(0.0, 0.0), |acc, &c| acc * s + cx(c, 0.0))
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        Self::horner(&self.numerator, s) / Self::horner(&self.denominator, s)
    }
}

/// (s - g/2)/(s + g/2) for a single-channel system with S = 1 whose combined
/// operator L + L* (for `which = Q`) or L - L* (for `which = P`) commutes
/// with H. The function is the `(which_out, which_in)` entry of G.
pub fn siso_closed_form(params: &SystemParams, which: Quad, tol: f64) -> Result<RationalScalar> {
    if params.m() != 1 {
        return Err(Error::Hypothesis {
            what: format!("single channel required, got m = {}", params.m()),
            residual: f64::NAN,
        });
    }
    let s_defect = (params.s()[(0, 0)] - cx(1.0, 0.0)).norm();
    if s_defect > tol {
        return Err(Error::Hypothesis {
            what: "scattering must be S = 1".into(),
            residual: s_defect,
        });
    }
    let residual = qnd::hermitian_part_commutator(params, which).norm();
    if residual > tol {
        let what = match which {
            Quad::Q => "[L + L*, H] = 0",
            Quad::P => "[L - L*, H] = 0",
        };
        return Err(Error::Hypothesis {
            what: what.into(),
            residual,
        });
    }
    let g = qnd::siso_g(params)?;
    RationalScalar::new(vec![1.0, -g / 2.0], vec![1.0, g / 2.0])
}

/// The four structural cases in which [L, H] = 0 yields a block-diagonal
/// transfer matrix in annihilation-creation form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BlockDiagCase {
    /// C₊ = 0.
    AnnihilationCoupling,
    /// C₋ = 0.
    CreationCoupling,
    /// Ω₊ = 0 and C₋C₊ᵀ symmetric.
    NoSqueezing,
    /// Ω₋ = 0 and C₋C₊ᵀ symmetric.
    NoDetuning,
}

impl BlockDiagCase {
    pub const ALL: [BlockDiagCase; 4] = [
        BlockDiagCase::AnnihilationCoupling,
        BlockDiagCase::CreationCoupling,
        BlockDiagCase::NoSqueezing,
        BlockDiagCase::NoDetuning,
    ];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i.checked_sub(1)?).copied()
    }
}

/// Closed form of the two diagonal blocks
/// `(sI + K/2)⁻¹(sI - K/2)S` and its conjugate, with `K = C₋C₋† - C₊C₊†`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagForm {
    pub case: BlockDiagCase,
    pub k: CMat,
    pub s: CMat,
}

impl BlockDiagForm {
    fn block(k: &CMat, scatter: &CMat, s: Complex64) -> Result<CMat> {
        let m = k.nrows();
        let id = CMat::identity(m, m);
        let half = k * cx(0.5, 0.0);
        let den = &id * s + &half;
        let num = &id * s - &half;
        let x = den
            .lu()
            .solve(&(num * scatter))
            .ok_or(Error::Pole { s, distance: 0.0 })?;
        Ok(x)
    }

    /// Upper-left block, acting on the annihilation inputs.
    pub fn upper(&self, s: Complex64) -> Result<CMat> {
        Self::block(&self.k, &self.s, s)
    }

    /// Lower-right block, acting on the creation inputs.
    pub fn lower(&self, s: Complex64) -> Result<CMat> {
        Self::block(&conj(&self.k), &conj(&self.s), s)
    }

    pub fn annihilation(&self, s: Complex64) -> Result<CMat> {
        let m = self.k.nrows();
        let z = CMat::zeros(m, m);
        Ok(block2(&self.upper(s)?, &z, &z, &self.lower(s)?))
    }

    /// The same transfer matrix in `[q; p]` coordinates.
    pub fn quadrature(&self, s: Complex64) -> Result<CMat> {
        let v = quad_transform(self.k.nrows());
        Ok(&v * self.annihilation(s)? * v.adjoint())
    }
}

pub fn blockdiag_closed_form(
    params: &SystemParams,
    case: BlockDiagCase,
    tol: f64,
) -> Result<BlockDiagForm> {
    let check = |what: &str, residual: f64| -> Result<()> {
        if residual > tol {
            Err(Error::Hypothesis {
                what: what.into(),
                residual,
            })
        } else {
            Ok(())
        }
    };
    let sym = {
        let x = params.c_minus() * params.c_plus().transpose();
        (&x - x.transpose()).norm()
    };
    match case {
        BlockDiagCase::AnnihilationCoupling => check("C_plus = 0", params.c_plus().norm())?,
        BlockDiagCase::CreationCoupling => check("C_minus = 0", params.c_minus().norm())?,
        BlockDiagCase::NoSqueezing => {
            check("Omega_plus = 0", params.omega_plus().norm())?;
            check("C_minus C_plus^T symmetric", sym)?;
        }
        BlockDiagCase::NoDetuning => {
            check("Omega_minus = 0", params.omega_minus().norm())?;
            check("C_minus C_plus^T symmetric", sym)?;
        }
    }
    let comm = qnd::commutator_lh(params);
    check("[L, H] = 0", comm.norm())?;
    let k =
        params.c_minus() * params.c_minus().adjoint() - params.c_plus() * params.c_plus().adjoint();
    Ok(BlockDiagForm {
        case,
        k,
        s: params.s().clone(),
    })
}
