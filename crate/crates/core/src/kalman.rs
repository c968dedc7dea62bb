//! Controllable and unobservable subspaces, the dimensions of the co / c̄ō /
//! h subsystems, checks on user-supplied Kalman-form partitions, and the
//! co-subsystem BAE criteria.

use serde::Serialize;

use crate::algebra::{self, hstack, null_basis, range_basis, vstack, CMat, RMat, RANK_TOL};
use crate::error::{Error, Result};
use crate::model::QuadratureRealization;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SubspaceKind {
    Controllable,
    Unobservable,
}

/// Orthonormal basis stored column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    pub basis: RMat,
    pub kind: SubspaceKind,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    /// Norm of the component of `v` orthogonal to the subspace.
    pub fn residual(&self, v: &RMat) -> f64 {
        (v - &self.basis * (self.basis.transpose() * v)).norm()
    }

    /// Norm of the projection of `v` onto the subspace.
    pub fn projection_norm(&self, v: &RMat) -> f64 {
        (self.basis.transpose() * v).norm()
    }
}

/// `[B, AB, …, A^{k-1}B]` with k the state dimension.
pub fn controllability_matrix(a: &RMat, b: &RMat) -> RMat {
    let k = a.nrows();
    let mut blocks = Vec::with_capacity(k);
    let mut cur = b.clone();
    for i in 0..k {
        if i > 0 {
            cur = a * cur;
        }
        blocks.push(cur.clone());
    }
    let refs: Vec<&RMat> = blocks.iter().collect();
    if refs.is_empty() {
        return RMat::zeros(0, b.ncols());
    }
    hstack(&refs)
}

/// `[C; CA; …; CA^{k-1}]` with k the state dimension.
pub fn observability_matrix(a: &RMat, c: &RMat) -> RMat {
    controllability_matrix(&a.transpose(), &c.transpose()).transpose()
}

pub fn controllable_subspace(a: &RMat, b: &RMat) -> SubspaceBasis {
    SubspaceBasis {
        basis: range_basis(&controllability_matrix(a, b), RANK_TOL),
        kind: SubspaceKind::Controllable,
    }
}

pub fn unobservable_subspace(a: &RMat, c: &RMat) -> SubspaceBasis {
    let obs = observability_matrix(a, c);
    let basis = if obs.nrows() == 0 || obs.norm() == 0.0 {
        RMat::identity(a.nrows(), a.nrows())
    } else {
        null_basis(&obs, RANK_TOL)
    };
    SubspaceBasis {
        basis,
        kind: SubspaceKind::Unobservable,
    }
}

/// Orthonormal basis of the orthogonal complement of span(`u`) in R^dim.
pub fn complement(u: &RMat, dim: usize) -> RMat {
    if u.ncols() == 0 {
        return RMat::identity(dim, dim);
    }
    null_basis(&u.transpose(), RANK_TOL)
}

/// Orthonormal basis of span(u) ∩ span(v), both given with orthonormal
/// columns in R^dim.
pub fn intersection(u: &RMat, v: &RMat, dim: usize) -> RMat {
    if u.ncols() == 0 || v.ncols() == 0 {
        return RMat::zeros(dim, 0);
    }
    let uc = complement(u, dim);
    let vc = complement(v, dim);
    if uc.ncols() + vc.ncols() == 0 {
        return RMat::identity(dim, dim);
    }
    let stacked = hstack(&[&uc, &vc]).transpose();
    null_basis(&stacked, RANK_TOL)
}

/// Numerical rank of a complex matrix.
pub fn complex_rank(x: &CMat, rel: f64) -> usize {
    if x.is_empty() {
        return 0;
    }
    let sv = x.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let cut = (rel * smax).max(f64::MIN_POSITIVE);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Observability of the pair (M, C) by the rank of the stacked observability
/// matrix (singular values below `1e-9·σ_max` count as zero).
pub fn is_observable_pair(m: &CMat, c: &CMat) -> bool {
    let n = m.nrows();
    if n == 0 {
        return true;
    }
    let mut rows = Vec::with_capacity(n);
    let mut cur = c.clone();
    for i in 0..n {
        if i > 0 {
            cur *= m;
        }
        rows.push(cur.clone());
    }
    let refs: Vec<&CMat> = rows.iter().collect();
    let obs = vstack(&refs);
    if obs.norm() == 0.0 {
        return false;
    }
    complex_rank(&obs, RANK_TOL) == n
}

/// Dimensions of the co, c̄ō and h subsystems (each a count of modes).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubsystemDimensions {
    pub n1_co: usize,
    pub n2_cbar_obar: usize,
    pub n3_h: usize,
    pub dim_controllable: usize,
    pub dim_unobservable: usize,
    /// dim(controllable ∩ unobservable)
    pub dim_c_obar: usize,
    /// dim of the uncontrollable-yet-observable part
    pub dim_cbar_o: usize,
}

pub fn subsystem_dimensions(real: &QuadratureRealization) -> Result<SubsystemDimensions> {
    let dim = real.a.nrows();
    let r = controllable_subspace(&real.a, &real.b);
    let nsp = unobservable_subspace(&real.a, &real.c);
    let r_cap_n = intersection(&r.basis, &nsp.basis, dim).ncols();
    let sum = r.dim() + nsp.dim() - r_cap_n;
    let d_co = r.dim() - r_cap_n;
    let d_cbar_obar = nsp.dim() - r_cap_n;
    let d_cbar_o = dim - sum;
    if r_cap_n != d_cbar_o {
        return Err(Error::NotRealizable(format!(
            "controllable-unobservable dimension {r_cap_n} does not pair with uncontrollable-observable dimension {d_cbar_o}"
        )));
    }
    if !d_co.is_multiple_of(2) || !d_cbar_obar.is_multiple_of(2) {
        return Err(Error::NotRealizable(format!(
            "odd subsystem dimension (co {d_co}, isolated {d_cbar_obar})"
        )));
    }
    Ok(SubsystemDimensions {
        n1_co: d_co / 2,
        n2_cbar_obar: d_cbar_obar / 2,
        n3_h: r_cap_n,
        dim_controllable: r.dim(),
        dim_unobservable: nsp.dim(),
        dim_c_obar: r_cap_n,
        dim_cbar_o: d_cbar_o,
    })
}

/// Index groups of a Kalman-form state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Part {
    QH,
    PH,
    Co,
    CbarObar,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::QH => "h11",
            Part::PH => "h22",
            Part::Co => "co",
            Part::CbarObar => "cbar_obar",
        }
    }
}

/// A realization together with the index sets of its Kalman-form blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanPartition {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub q_h: Vec<usize>,
    pub p_h: Vec<usize>,
    pub co: Vec<usize>,
    pub cbar_obar: Vec<usize>,
}

fn select(x: &RMat, rows: &[usize], cols: &[usize]) -> RMat {
    RMat::from_fn(rows.len(), cols.len(), |i, j| x[(rows[i], cols[j])])
}

impl KalmanPartition {
    pub fn new(
        a: RMat,
        b: RMat,
        c: RMat,
        q_h: Vec<usize>,
        p_h: Vec<usize>,
        co: Vec<usize>,
        cbar_obar: Vec<usize>,
    ) -> Result<Self> {
        let dim = a.nrows();
        if a.ncols() != dim || b.nrows() != dim || c.ncols() != dim {
            return Err(Error::Shape {
                context: "Kalman partition".into(),
                expected: format!("A {dim}x{dim}, B {dim}x_, C _x{dim}"),
                found: format!("A {:?}, B {:?}, C {:?}", a.shape(), b.shape(), c.shape()),
            });
        }
        if q_h.len() != p_h.len() {
            return Err(Error::Config("q_h and p_h must have equal size".into()));
        }
        let mut seen = vec![false; dim];
        for &i in q_h.iter().chain(&p_h).chain(&co).chain(&cbar_obar) {
            if i >= dim || seen[i] {
                return Err(Error::Config(format!(
                    "partition index {i} out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("partition does not cover every state".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            q_h,
            p_h,
            co,
            cbar_obar,
        })
    }

    /// Co-subsystem part only: every state is in `co`.
    pub fn co_only(real: &QuadratureRealization) -> Result<Self> {
        let dim = real.a.nrows();
        Self::new(
            real.a.clone(),
            real.b.clone(),
            real.c.clone(),
            vec![],
            vec![],
            (0..dim).collect(),
            vec![],
        )
    }

    fn idx(&self, part: Part) -> &[usize] {
        match part {
            Part::QH => &self.q_h,
            Part::PH => &self.p_h,
            Part::Co => &self.co,
            Part::CbarObar => &self.cbar_obar,
        }
    }

    pub fn a_block(&self, rows: Part, cols: Part) -> RMat {
        select(&self.a, self.idx(rows), self.idx(cols))
    }

    pub fn b_block(&self, rows: Part) -> RMat {
        let all: Vec<usize> = (0..self.b.ncols()).collect();
        select(&self.b, self.idx(rows), &all)
    }

    pub fn c_block(&self, cols: Part) -> RMat {
        let all: Vec<usize> = (0..self.c.nrows()).collect();
        select(&self.c, &all, self.idx(cols))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KalmanFormCheck {
    /// Norm of every block that must vanish, by name.
    pub residuals: Vec<(String, f64)>,
    pub verdict: bool,
    /// ‖C_h A_h²² + C_co 𝕁 A₁₂ᵀ + ½ C_co B_co 𝕁 B_hᵀ‖, when an h part exists.
    pub h_coupling_residual: Option<f64>,
}

impl KalmanFormCheck {
    pub fn offending(&self, tol: f64) -> Vec<&str> {
        self.residuals
            .iter()
            .filter(|(_, r)| *r > tol)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

pub const KALMAN_FORM_TOL: f64 = 1e-10;

pub fn verify_kalman_form(part: &KalmanPartition) -> KalmanFormCheck {
    use Part::*;
    let zero_a = [
        (PH, QH),
        (PH, Co),
        (PH, CbarObar),
        (Co, QH),
        (Co, CbarObar),
        (CbarObar, QH),
    ];
    let mut residuals = Vec::new();
    for (r, c) in zero_a {
        residuals.push((
            format!("A[{},{}]", r.name(), c.name()),
            part.a_block(r, c).norm(),
        ));
    }
    for r in [PH, CbarObar] {
        residuals.push((format!("B[{}]", r.name()), part.b_block(r).norm()));
    }
    for c in [QH, CbarObar] {
        residuals.push((format!("C[{}]", c.name()), part.c_block(c).norm()));
    }
    let verdict = residuals.iter().all(|(_, r)| *r <= KALMAN_FORM_TOL);
    let h_coupling_residual = (!part.p_h.is_empty()
        && part.co.len().is_multiple_of(2)
        && part.b.ncols().is_multiple_of(2))
    .then(|| {
        let c_h = part.c_block(PH);
        let a22 = part.a_block(PH, PH);
        let c_co = part.c_block(Co);
        let a12 = part.a_block(QH, Co);
        let b_co = part.b_block(Co);
        let b_h = part.b_block(QH);
        let jn = algebra::j_sharp(part.co.len() / 2);
        let jm = algebra::j_sharp(part.b.ncols() / 2);
        (&c_h * &a22 + &c_co * jn * a12.transpose() + &c_co * &b_co * jm * b_h.transpose() * 0.5)
            .norm()
    });
    KalmanFormCheck {
        residuals,
        verdict,
        h_coupling_residual,
    }
}

/// Symmetry defects of the Γ_co blocks recovered from
/// `C_co = √2[[Re Γ_q, Re Γ_p], [Im Γ_q, Im Γ_p]]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaSymmetry {
    /// ‖X - Xᵀ‖ for X = Re(Γ_q)Re(Γ_p)ᵀ.
    pub re_residual: f64,
    /// ‖X - Xᵀ‖ for X = Im(Γ_q)Im(Γ_p)ᵀ.
    pub im_residual: f64,
    /// ‖X - Xᵀ‖ for X = Re(Γ_q Γ_pᵀ).
    pub combined_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KalmanBaeCriteria {
    pub q_wrt_p: bool,
    pub p_wrt_q: bool,
    pub q_wrt_p_residual: f64,
    pub p_wrt_q_residual: f64,
    pub gamma_symmetry: GammaSymmetry,
}

/// Tests `C_co,q B_co,p = 0` and `C_co,p B_co,q = 0` for a co-subsystem with
/// `C_co` of size 2m×2n₁ and `B_co` of size 2n₁×2m.
pub fn kalman_bae_criteria(c_co: &RMat, b_co: &RMat, tol: f64) -> Result<KalmanBaeCriteria> {
    let (rows, k) = c_co.shape();
    if rows % 2 != 0 || k % 2 != 0 || b_co.shape() != (k, rows) {
        return Err(Error::Shape {
            context: "kalman_bae_criteria".into(),
            expected: "C_co 2m x 2n1 and B_co 2n1 x 2m".into(),
            found: format!("{:?} and {:?}", c_co.shape(), b_co.shape()),
        });
    }
    let m = rows / 2;
    let n1 = k / 2;
    let c_q = c_co.rows(0, m).into_owned();
    let c_p = c_co.rows(m, m).into_owned();
    let b_q = b_co.columns(0, m).into_owned();
    let b_p = b_co.columns(m, m).into_owned();
    let q_res = (&c_q * &b_p).norm();
    let p_res = (&c_p * &b_q).norm();

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re_gq = c_q.columns(0, n1) * s;
    let re_gp = c_q.columns(n1, n1) * s;
    let im_gq = c_p.columns(0, n1) * s;
    let im_gp = c_p.columns(n1, n1) * s;
    let skew = |x: RMat| (&x - x.transpose()).norm();
    let re_x = &re_gq * re_gp.transpose();
    let im_x = &im_gq * im_gp.transpose();
    let gamma_symmetry = GammaSymmetry {
        re_residual: skew(re_x.clone()),
        im_residual: skew(im_x.clone()),
        combined_residual: skew(re_x - im_x),
    };
    Ok(KalmanBaeCriteria {
        q_wrt_p: q_res <= tol,
        p_wrt_q: p_res <= tol,
        q_wrt_p_residual: q_res,
        p_wrt_q_residual: p_res,
        gamma_symmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateOrdering;

    #[test]
    fn zero_input_has_trivial_controllable_subspace() {
        let a = RMat::identity(4, 4);
        let b = RMat::zeros(4, 2);
        assert_eq!(controllable_subspace(&a, &b).dim(), 0);
        assert_eq!(unobservable_subspace(&a, &RMat::zeros(2, 4)).dim(), 4);
    }

    #[test]
    fn canonical_pair_is_full_rank() {
        let a = RMat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.5]);
        let b = RMat::from_row_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(controllable_subspace(&a, &b).dim(), 2);
        let c = RMat::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(unobservable_subspace(&a, &c).dim(), 0);
    }

    #[test]
    fn intersection_of_planes() {
        let u = RMat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let v = RMat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let w = intersection(&u, &v, 3);
        assert_eq!(w.ncols(), 1);
        assert!((w[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn low21_criteria() {
        let k = 2.0f64;
        let c = RMat::identity(2, 2) * k.sqrt();
        let b = RMat::identity(2, 2) * -k.sqrt();
        let r = kalman_bae_criteria(&c, &b, 1e-12).unwrap();
        assert!(r.q_wrt_p && r.p_wrt_q);
    }

    #[test]
    fn nonzero_cross_product_detected() {
        let c = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = RMat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let mut b2 = b.clone();
        b2[(0, 1)] = 1.0;
        assert!(kalman_bae_criteria(&c, &b, 1e-12).unwrap().q_wrt_p);
        let r = kalman_bae_criteria(&c, &b2, 1e-12).unwrap();
        assert!(!r.q_wrt_p);
        assert!((r.q_wrt_p_residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perturbed_partition_names_block() {
        let real = QuadratureRealization::new(
            RMat::identity(2, 2) * -0.5,
            -RMat::identity(2, 2),
            RMat::identity(2, 2),
            RMat::identity(2, 2),
            StateOrdering::Blocked,
        )
        .unwrap();
        let mut a = RMat::zeros(4, 4);
        a.view_mut((2, 2), (2, 2)).copy_from(&real.a);
        let b = vstack(&[&RMat::zeros(2, 2), &real.b]);
        let c = hstack(&[&RMat::zeros(2, 2), &real.c]);
        let ok = KalmanPartition::new(
            a.clone(),
            b.clone(),
            c.clone(),
            vec![0],
            vec![1],
            vec![2, 3],
            vec![],
        )
        .unwrap();
        assert!(verify_kalman_form(&ok).verdict);
        let mut bad_a = a;
        bad_a[(1, 0)] = 1e-3;
        let bad = KalmanPartition::new(bad_a, b, c, vec![0], vec![1], vec![2, 3], vec![]).unwrap();
        let check = verify_kalman_form(&bad);
        assert!(!check.verdict);
        assert_eq!(check.offending(KALMAN_FORM_TOL), vec!["A[h22,h11]"]);
    }

    #[test]
    fn isolated_mode_counts_as_cbar_obar() {
        let mut a = RMat::zeros(4, 4);
        a[(0, 0)] = -0.5;
        a[(2, 2)] = -0.5;
        a[(1, 3)] = 1.0;
        a[(3, 1)] = -1.0;
        let mut b = RMat::zeros(4, 2);
        b[(0, 0)] = -1.0;
        b[(2, 1)] = -1.0;
        let mut c = RMat::zeros(2, 4);
        c[(0, 0)] = 1.0;
        c[(1, 2)] = 1.0;
        let real =
            QuadratureRealization::new(a, b, c, RMat::identity(2, 2), StateOrdering::Blocked)
                .unwrap();
        let dims = subsystem_dimensions(&real).unwrap();
        assert_eq!((dims.n1_co, dims.n2_cbar_obar, dims.n3_h), (1, 1, 0));
    }

    #[test]
    fn observable_pair_rank() {
        let m = CMat::zeros(2, 2);
        let full = CMat::identity(2, 2);
        assert!(is_observable_pair(&m, &full));
        let thin = CMat::from_row_slice(
            1,
            2,
            &[crate::algebra::cx(1.0, 0.0), crate::algebra::cx(0.0, 0.0)],
        );
        assert!(!is_observable_pair(&m, &thin));
    }
}
