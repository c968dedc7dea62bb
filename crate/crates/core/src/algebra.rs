//! Dense complex matrix helpers and the structured operations used by linear
//! quantum systems: doubled-up matrices, the ♭- and ♯-adjoints, and the
//! unitary map between annihilation-creation and quadrature coordinates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{shape_err, Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

/// Default relative tolerance for [`classify`].
pub const CLASSIFY_TOL: f64 = 1e-10;
/// Default absolute tolerance for [`approx_eq`].
pub const ATOL: f64 = 1e-12;
/// Default relative tolerance for [`approx_eq`].
pub const RTOL: f64 = 1e-9;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Entrywise conjugate X^#.
pub fn conj(x: &CMat) -> CMat {
    x.map(|z| z.conj())
}

pub fn re_part(x: &CMat) -> RMat {
    x.map(|z| z.re)
}

pub fn im_part(x: &CMat) -> RMat {
    x.map(|z| z.im)
}

pub fn to_complex(x: &RMat) -> CMat {
    x.map(|r| cx(r, 0.0))
}

pub fn from_parts(re: &RMat, im: &RMat) -> CMat {
    assert_eq!(re.shape(), im.shape());
    CMat::from_fn(re.nrows(), re.ncols(), |i, j| cx(re[(i, j)], im[(i, j)]))
}

/// Largest entry magnitude.
pub fn max_abs(x: &CMat) -> f64 {
    x.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_real(x: &RMat) -> f64 {
    x.iter().fold(0.0, |acc, r| acc.max(r.abs()))
}

/// Stacks blocks `[[a, b], [c, d]]` into one matrix.
pub fn block2<T>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>, d: &DMatrix<T>) -> DMatrix<T>
where
    T: nalgebra::Scalar + num_traits::Zero,
{
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(c.nrows(), d.nrows());
    assert_eq!(a.ncols(), c.ncols());
    assert_eq!(b.ncols(), d.ncols());
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut out = DMatrix::<T>::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn hstack<T>(parts: &[&DMatrix<T>]) -> DMatrix<T>
where
    T: nalgebra::Scalar + num_traits::Zero,
{
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::<T>::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows);
        out.view_mut((0, at), (rows, p.ncols())).copy_from(*p);
        at += p.ncols();
    }
    out
}

/// Vertical concatenation of matrices with equal column counts.
pub fn vstack<T>(parts: &[&DMatrix<T>]) -> DMatrix<T>
where
    T: nalgebra::Scalar + num_traits::Zero,
{
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::<T>::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols);
        out.view_mut((at, 0), (p.nrows(), cols)).copy_from(*p);
        at += p.nrows();
    }
    out
}

/// J_k = diag(I_k, -I_k).
pub fn j_flat(k: usize) -> CMat {
    CMat::from_fn(2 * k, 2 * k, |i, j| {
        if i != j {
            cx(0.0, 0.0)
        } else if i < k {
            cx(1.0, 0.0)
        } else {
            cx(-1.0, 0.0)
        }
    })
}

/// The symplectic form 𝕁_k = [[0, I_k], [-I_k, 0]].
pub fn j_sharp(k: usize) -> RMat {
    RMat::from_fn(2 * k, 2 * k, |i, j| {
        if i < k && j == i + k {
            1.0
        } else if i >= k && j + k == i {
            -1.0
        } else {
            0.0
        }
    })
}

fn half_dims(x_rows: usize, x_cols: usize, context: &str) -> Result<(usize, usize)> {
    if !x_rows.is_multiple_of(2) {
        return Err(Error::OddDimension {
            context: context.to_string(),
            dim: x_rows,
        });
    }
    if !x_cols.is_multiple_of(2) {
        return Err(Error::OddDimension {
            context: context.to_string(),
            dim: x_cols,
        });
    }
    Ok((x_rows / 2, x_cols / 2))
}

/// X♭ = J_r X† J_k for X of size 2k×2r.
pub fn flat_adjoint(x: &CMat) -> Result<CMat> {
    let (k, r) = half_dims(x.nrows(), x.ncols(), "flat_adjoint")?;
    Ok(j_flat(r) * x.adjoint() * j_flat(k))
}

/// X♯ = -𝕁_r X† 𝕁_k for X of size 2k×2r.
pub fn sharp_adjoint(x: &CMat) -> Result<CMat> {
    let (k, r) = half_dims(x.nrows(), x.ncols(), "sharp_adjoint")?;
    Ok(-(to_complex(&j_sharp(r)) * x.adjoint() * to_complex(&j_sharp(k))))
}

/// Real specialization of [`sharp_adjoint`]: X♯ = -𝕁_r Xᵀ 𝕁_k.
pub fn sharp_adjoint_real(x: &RMat) -> Result<RMat> {
    let (k, r) = half_dims(x.nrows(), x.ncols(), "sharp_adjoint")?;
    Ok(-(j_sharp(r) * x.transpose() * j_sharp(k)))
}

/// V_n = (1/√2)[[I, I], [-iI, iI]], mapping [a; a^#] to [q; p].
pub fn quad_transform(n: usize) -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, ri) = (i / n, i % n);
        let (bj, rj) = (j / n, j % n);
        if ri != rj {
            return cx(0.0, 0.0);
        }
        match (bi, bj) {
            (0, _) => cx(h, 0.0),
            (1, 0) => cx(0.0, -h),
            _ => cx(0.0, h),
        }
    })
}

/// Δ(U, V) = [[U, V], [V^#, U^#]], stored by its upper blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubledMatrix {
    u: CMat,
    v: CMat,
}

impl DoubledMatrix {
    pub fn new(u: CMat, v: CMat) -> Result<Self> {
        if u.shape() != v.shape() {
            return Err(shape_err("doubled_up", u.shape(), v.shape()));
        }
        Ok(Self { u, v })
    }

    pub fn u(&self) -> &CMat {
        &self.u
    }

    pub fn v(&self) -> &CMat {
        &self.v
    }

    pub fn full(&self) -> CMat {
        block2(&self.u, &self.v, &conj(&self.v), &conj(&self.u))
    }

    /// Recovers Δ(U, V) from a full matrix if its lower half is the
    /// conjugate of the swapped upper half, entrywise within `tol`.
    pub fn from_full(x: &CMat, tol: f64) -> Option<Self> {
        if !x.nrows().is_multiple_of(2) || !x.ncols().is_multiple_of(2) {
            return None;
        }
        let (k, r) = (x.nrows() / 2, x.ncols() / 2);
        let u = x.view((0, 0), (k, r)).into_owned();
        let v = x.view((0, r), (k, r)).into_owned();
        let lower_left = x.view((k, 0), (k, r)).into_owned();
        let lower_right = x.view((k, r), (k, r)).into_owned();
        let d1 = max_abs(&(lower_left - conj(&v)));
        let d2 = max_abs(&(lower_right - conj(&u)));
        (d1 <= tol && d2 <= tol).then_some(Self { u, v })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::new(&self.u + &other.u, &self.v + &other.v)
    }

    /// Δ(U₁,V₁)Δ(U₂,V₂) = Δ(U₁U₂ + V₁V₂^#, U₁V₂ + V₁U₂^#).
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.u.ncols() != other.u.nrows() {
            return Err(shape_err(
                "doubled product",
                (self.u.ncols(), other.u.ncols()),
                other.u.shape(),
            ));
        }
        Self::new(
            &self.u * &other.u + &self.v * conj(&other.v),
            &self.u * &other.v + &self.v * conj(&other.u),
        )
    }

    /// Δ(U, V)♭ = Δ(U†, -Vᵀ).
    pub fn flat_adjoint(&self) -> Self {
        Self {
            u: self.u.adjoint(),
            v: -self.v.transpose(),
        }
    }
}

pub fn doubled_up(u: &CMat, v: &CMat) -> Result<DoubledMatrix> {
    DoubledMatrix::new(u.clone(), v.clone())
}

/// Real or purely imaginary; used to state structural hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Realness {
    Real,
    Imaginary,
}

/// Realness class of a matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StructureClass {
    Zero,
    Real,
    PurelyImaginary,
    Neither,
}

impl StructureClass {
    pub fn is_real(self) -> bool {
        matches!(self, Self::Zero | Self::Real)
    }

    pub fn is_imaginary(self) -> bool {
        matches!(self, Self::Zero | Self::PurelyImaginary)
    }

    pub fn is_real_or_imaginary(self) -> bool {
        self != Self::Neither
    }

    pub fn satisfies(self, r: Realness) -> bool {
        match r {
            Realness::Real => self.is_real(),
            Realness::Imaginary => self.is_imaginary(),
        }
    }
}

/// Classifies `x` as real, purely imaginary, zero, or neither. Parts below
/// `tol * (1 + max|x|)` count as vanishing.
pub fn classify(x: &CMat, tol: f64) -> StructureClass {
    let bound = tol * (1.0 + max_abs(x));
    let max_im = x.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    let max_re = x.iter().fold(0.0f64, |a, z| a.max(z.re.abs()));
    match (max_im <= bound, max_re <= bound) {
        (true, true) => StructureClass::Zero,
        (true, false) => StructureClass::Real,
        (false, true) => StructureClass::PurelyImaginary,
        (false, false) => StructureClass::Neither,
    }
}

/// |a - b| ≤ atol + rtol·max(|a|, |b|) entrywise.
pub fn approx_eq(a: &CMat, b: &CMat, atol: f64, rtol: f64) -> bool {
    a.shape() == b.shape()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x - y).norm() <= atol + rtol * x.norm().max(y.norm()))
}

pub fn approx_eq_default(a: &CMat, b: &CMat) -> bool {
    approx_eq(a, b, ATOL, RTOL)
}

/// Frobenius norm of U†U - I.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.ncols();
    (u.adjoint() * u - CMat::identity(n, n)).norm()
}

/// Relative rank cutoff for [`range_basis`] and [`null_basis`].
pub const RANK_TOL: f64 = 1e-9;

fn rank_cutoff(sv: &[f64], rel: f64) -> f64 {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    (rel * smax).max(f64::MIN_POSITIVE)
}

/// Orthonormal basis of the column space of `x`, rank cutoff `rel·σ_max`.
pub fn range_basis(x: &RMat, rel: f64) -> RMat {
    if x.is_empty() {
        return RMat::zeros(x.nrows(), 0);
    }
    let svd = x.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let sv = svd.singular_values.as_slice();
    let cut = rank_cutoff(sv, rel);
    let cols: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > cut).collect();
    RMat::from_fn(x.nrows(), cols.len(), |i, k| u[(i, cols[k])])
}

/// Orthonormal basis of the null space of `x`, rank cutoff `rel·σ_max`.
pub fn null_basis(x: &RMat, rel: f64) -> RMat {
    let (r, c) = x.shape();
    if c == 0 {
        return RMat::zeros(0, 0);
    }
    if r == 0 {
        return RMat::identity(c, c);
    }
    // Pad with zero rows so the decomposition returns a full set of right
    // singular vectors.
    let mut sq = RMat::zeros(r.max(c), c);
    sq.view_mut((0, 0), (r, c)).copy_from(x);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let sv = svd.singular_values.as_slice();
    let cut = rank_cutoff(sv, rel);
    let cols: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= cut).collect();
    RMat::from_fn(c, cols.len(), |i, k| vt[(cols[k], i)])
}

/// Complex counterpart of [`null_basis`].
pub fn null_basis_complex(x: &CMat, rel: f64) -> CMat {
    let (r, c) = x.shape();
    if c == 0 {
        return CMat::zeros(0, 0);
    }
    if r == 0 {
        return CMat::identity(c, c);
    }
    let mut sq = CMat::zeros(r.max(c), c);
    sq.view_mut((0, 0), (r, c)).copy_from(x);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let sv = svd.singular_values.as_slice();
    let cut = rank_cutoff(sv, rel);
    let cols: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= cut).collect();
    CMat::from_fn(c, cols.len(), |i, k| vt[(cols[k], i)].conj())
}

/// Numerical rank with cutoff `rel·σ_max`.
pub fn rank(x: &RMat, rel: f64) -> usize {
    if x.is_empty() {
        return 0;
    }
    let sv = x.singular_values();
    let cut = rank_cutoff(sv.as_slice(), rel);
    sv.iter().filter(|&&s| s > cut).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| {
            cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn identity_doubled() {
        let d = doubled_up(&CMat::identity(2, 2), &CMat::zeros(2, 2)).unwrap();
        assert_eq!(d.full(), CMat::identity(4, 4));
    }

    #[test]
    fn doubled_product_rule_matches_full_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = doubled_up(&rand_c(&mut rng, 2, 2), &rand_c(&mut rng, 2, 2)).unwrap();
            let b = doubled_up(&rand_c(&mut rng, 2, 2), &rand_c(&mut rng, 2, 2)).unwrap();
            let brute = a.full() * b.full();
            assert!(approx_eq_default(&a.mul(&b).unwrap().full(), &brute));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(doubled_up(&CMat::zeros(2, 2), &CMat::zeros(2, 3)).is_err());
    }

    #[test]
    fn flat_adjoint_reverses_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_c(&mut rng, 4, 4);
        let b = rand_c(&mut rng, 4, 2);
        let lhs = flat_adjoint(&(&a * &b)).unwrap();
        let rhs = flat_adjoint(&b).unwrap() * flat_adjoint(&a).unwrap();
        assert!(approx_eq_default(&lhs, &rhs));
        assert_eq!(
            flat_adjoint(&CMat::identity(4, 4)).unwrap(),
            CMat::identity(4, 4)
        );
        assert!(flat_adjoint(&CMat::zeros(3, 2)).is_err());
    }

    #[test]
    fn flat_adjoint_of_scattering_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = rand_c(&mut rng, 3, 3).qr().q();
        let d = doubled_up(&s, &CMat::zeros(3, 3)).unwrap();
        let lhs = flat_adjoint(&d.full()).unwrap();
        let rhs = doubled_up(&s.adjoint(), &CMat::zeros(3, 3)).unwrap().full();
        assert!(approx_eq_default(&lhs, &rhs));
        assert!(approx_eq_default(&d.flat_adjoint().full(), &lhs));
    }

    #[test]
    fn sharp_adjoint_is_involutive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_c(&mut rng, 4, 4);
        let back = sharp_adjoint(&sharp_adjoint(&x).unwrap()).unwrap();
        assert!(approx_eq_default(&back, &x));
        assert!(approx_eq_default(
            &sharp_adjoint(&CMat::identity(4, 4)).unwrap(),
            &CMat::identity(4, 4)
        ));
    }

    #[test]
    fn sharp_adjoint_of_real_coupling_is_block_diagonal() {
        // For real C₋, C₊ the coupling matrix is diag(C₋+C₊, C₋-C₊), and
        // ℂ♯ℂ = diag((C₋-C₊)ᵀ(C₋+C₊), (C₋+C₊)ᵀ(C₋-C₊)).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cm = RMat::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let cp = RMat::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let z = RMat::zeros(2, 3);
        let cc = block2(&(&cm + &cp), &z, &z, &(&cm - &cp));
        let got = sharp_adjoint_real(&cc).unwrap() * &cc;
        let zn = RMat::zeros(3, 3);
        let expect = block2(
            &((&cm - &cp).transpose() * (&cm + &cp)),
            &zn,
            &zn,
            &((&cm + &cp).transpose() * (&cm - &cp)),
        );
        assert!((got - expect).norm() < 1e-13);
    }

    #[test]
    fn quad_transform_values() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v1 = quad_transform(1);
        assert_eq!(v1[(0, 0)], cx(h, 0.0));
        assert_eq!(v1[(0, 1)], cx(h, 0.0));
        assert_eq!(v1[(1, 0)], cx(0.0, -h));
        assert_eq!(v1[(1, 1)], cx(0.0, h));
        for n in 1..=8 {
            assert!(unitarity_defect(&quad_transform(n)) < 1e-12);
        }
    }

    #[test]
    fn quad_transform_maps_scattering_to_real_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = rand_c(&mut rng, 2, 2).qr().q();
        let v = quad_transform(2);
        let got = &v * doubled_up(&s, &CMat::zeros(2, 2)).unwrap().full() * v.adjoint();
        let (re, im) = (re_part(&s), im_part(&s));
        let expect = to_complex(&block2(&re, &(-&im), &im, &re));
        assert!(approx_eq(&got, &expect, 1e-12, 1e-9));
    }

    #[test]
    fn classification_examples() {
        assert_eq!(
            classify(&CMat::zeros(2, 2), CLASSIFY_TOL),
            StructureClass::Zero
        );
        let x = CMat::from_row_slice(2, 2, &[cx(0.0, 0.0), I, -I, cx(0.0, 0.0)]);
        assert_eq!(classify(&x, CLASSIFY_TOL), StructureClass::PurelyImaginary);
        let y = CMat::from_row_slice(2, 2, &[cx(1.0, 0.0), I, cx(0.0, 0.0), cx(0.0, 0.0)]);
        assert_eq!(classify(&y, CLASSIFY_TOL), StructureClass::Neither);
        assert_eq!(
            classify(&CMat::identity(2, 2), CLASSIFY_TOL),
            StructureClass::Real
        );
    }

    #[test]
    fn symplectic_form_squares_to_minus_identity() {
        let j = j_sharp(3);
        assert_eq!(&j * &j, -RMat::identity(6, 6));
    }
}
