//! Structural classification against the sufficient conditions for
//! back-action-evading measurement, and certified predictions.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::algebra::{
    classify, cx, hstack, max_abs, re_part, CMat, Realness, StructureClass, CLASSIFY_TOL,
};
use crate::error::Result;
use crate::model::{quadrature_realization, SystemParams};
use crate::qnd;
use crate::transfer::{certify_zero_block, BlockSelector, Quad, ZeroBlockCertificate};

/// Tolerance for zero-block certificates issued by [`analyze`].
pub const CERT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ReOmegaRelation {
    Equal,
    Opposite,
    /// Both real parts vanish, so equal and opposite at once.
    Both,
    Neither,
}

impl ReOmegaRelation {
    fn equal(self) -> bool {
        matches!(self, Self::Equal | Self::Both)
    }

    fn opposite(self) -> bool {
        matches!(self, Self::Opposite | Self::Both)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CouplingPattern {
    /// C₋ = C₊ = 0.
    Decoupled,
    /// C₋ = C₊.
    QCoupling,
    /// C₋ = -C₊.
    PCoupling,
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StructureProfile {
    pub s_class: StructureClass,
    pub c_class: StructureClass,
    pub omega_class: StructureClass,
    pub re_omega_relation: ReOmegaRelation,
    pub coupling_pattern: CouplingPattern,
}

fn close(a: &CMat, b: &CMat, tol: f64, scale: f64) -> bool {
    max_abs(&(a - b)) <= tol * (1.0 + scale)
}

pub fn profile(params: &SystemParams) -> StructureProfile {
    profile_with(params, CLASSIFY_TOL)
}

pub fn profile_with(params: &SystemParams, tol: f64) -> StructureProfile {
    let c = hstack(&[params.c_minus(), params.c_plus()]);
    let omega = hstack(&[params.omega_minus(), params.omega_plus()]);
    let om_scale = max_abs(&omega);
    let re_m = re_part(params.omega_minus()).map(|x| cx(x, 0.0));
    let re_p = re_part(params.omega_plus()).map(|x| cx(x, 0.0));
    let eq = close(&re_m, &re_p, tol, om_scale);
    let opp = close(&re_m, &(-&re_p), tol, om_scale);
    let re_omega_relation = match (eq, opp) {
        (true, true) => ReOmegaRelation::Both,
        (true, false) => ReOmegaRelation::Equal,
        (false, true) => ReOmegaRelation::Opposite,
        (false, false) => ReOmegaRelation::Neither,
    };
    let c_scale = max_abs(&c);
    let (cm, cp) = (params.c_minus(), params.c_plus());
    let q = close(cm, cp, tol, c_scale);
    let p = close(cm, &(-cp), tol, c_scale);
    let coupling_pattern = match (q, p) {
        (true, true) => CouplingPattern::Decoupled,
        (true, false) => CouplingPattern::QCoupling,
        (false, true) => CouplingPattern::PCoupling,
        (false, false) => CouplingPattern::General,
    };
    StructureProfile {
        s_class: classify(params.s(), tol),
        c_class: classify(&c, tol),
        omega_class: classify(&omega, tol),
        re_omega_relation,
        coupling_pattern,
    }
}

/// A sufficient condition for one or two vanishing transfer blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Rule {
    /// Real S, imaginary Ω, real or imaginary 𝒞: both cross-quadrature blocks.
    BilateralCrossQuadrature,
    /// Imaginary S and Ω, real or imaginary 𝒞: both same-quadrature blocks.
    BilateralSameQuadrature,
    /// Re(Ω₋) = Re(Ω₊) with S and 𝒞 each real or imaginary: one block.
    MatchedRealHamiltonian { s: Realness, c: Realness },
    /// Re(Ω₋) = -Re(Ω₊) with S and 𝒞 each real or imaginary: one block.
    OpposedRealHamiltonian { s: Realness, c: Realness },
    /// Real S, imaginary 𝒞 with C₋ = C₊ (q) or C₋ = -C₊ (p), any Ω.
    QuadratureOnlyCoupling { quad: Quad },
}

const BOTH: [Realness; 2] = [Realness::Real, Realness::Imaginary];

impl Rule {
    /// Every rule in the table.
    pub fn all() -> Vec<Rule> {
        let mut out = vec![
            Rule::BilateralCrossQuadrature,
            Rule::BilateralSameQuadrature,
        ];
        for s in BOTH {
            for c in BOTH {
                out.push(Rule::MatchedRealHamiltonian { s, c });
            }
        }
        for s in BOTH {
            for c in BOTH {
                out.push(Rule::OpposedRealHamiltonian { s, c });
            }
        }
        out.push(Rule::QuadratureOnlyCoupling { quad: Quad::Q });
        out.push(Rule::QuadratureOnlyCoupling { quad: Quad::P });
        out
    }

    pub fn hypothesis_holds(self, p: &StructureProfile) -> bool {
        use Realness::*;
        match self {
            Rule::BilateralCrossQuadrature => {
                p.s_class.is_real()
                    && p.omega_class.is_imaginary()
                    && p.c_class.is_real_or_imaginary()
            }
            Rule::BilateralSameQuadrature => {
                p.s_class.is_imaginary()
                    && p.omega_class.is_imaginary()
                    && p.c_class.is_real_or_imaginary()
            }
            Rule::MatchedRealHamiltonian { s, c } => {
                p.re_omega_relation.equal() && p.s_class.satisfies(s) && p.c_class.satisfies(c)
            }
            Rule::OpposedRealHamiltonian { s, c } => {
                p.re_omega_relation.opposite() && p.s_class.satisfies(s) && p.c_class.satisfies(c)
            }
            Rule::QuadratureOnlyCoupling { quad } => {
                let pattern = match quad {
                    Quad::Q => p.coupling_pattern == CouplingPattern::QCoupling,
                    Quad::P => p.coupling_pattern == CouplingPattern::PCoupling,
                } || p.coupling_pattern == CouplingPattern::Decoupled;
                p.s_class.satisfies(Real) && p.c_class.satisfies(Imaginary) && pattern
            }
        }
    }

    /// Blocks this rule asserts to vanish.
    pub fn selectors(self) -> Vec<BlockSelector> {
        use Quad::{P, Q};
        use Realness::{Imaginary as Im, Real as Re};
        let sel = BlockSelector::new;
        match self {
            Rule::BilateralCrossQuadrature => vec![sel(Q, P), sel(P, Q)],
            Rule::BilateralSameQuadrature => vec![sel(Q, Q), sel(P, P)],
            Rule::MatchedRealHamiltonian { s, c } => vec![match (s, c) {
                (Re, Re) => sel(Q, P),
                (Re, Im) => sel(P, Q),
                (Im, Re) => sel(Q, Q),
                (Im, Im) => sel(P, P),
            }],
            Rule::OpposedRealHamiltonian { s, c } => vec![match (s, c) {
                (Re, Re) => sel(P, Q),
                (Re, Im) => sel(Q, P),
                (Im, Re) => sel(P, P),
                (Im, Im) => sel(Q, Q),
            }],
            Rule::QuadratureOnlyCoupling { quad: Q } => vec![sel(Q, P)],
            Rule::QuadratureOnlyCoupling { quad: P } => vec![sel(P, Q)],
        }
    }

    pub fn is_bilateral(self) -> bool {
        matches!(
            self,
            Rule::BilateralCrossQuadrature | Rule::BilateralSameQuadrature
        )
    }
}

fn realness_name(r: Realness) -> &'static str {
    match r {
        Realness::Real => "real",
        Realness::Imaginary => "imaginary",
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::BilateralCrossQuadrature => {
                write!(
                    f,
                    "bilateral cross-quadrature: real S, imaginary Omega, real or imaginary C"
                )
            }
            Rule::BilateralSameQuadrature => {
                write!(
                    f,
                    "bilateral same-quadrature: imaginary S and Omega, real or imaginary C"
                )
            }
            Rule::MatchedRealHamiltonian { s, c } => write!(
                f,
                "unilateral: Re(Omega_minus) = Re(Omega_plus), {} S, {} C",
                realness_name(*s),
                realness_name(*c)
            ),
            Rule::OpposedRealHamiltonian { s, c } => write!(
                f,
                "unilateral: Re(Omega_minus) = -Re(Omega_plus), {} S, {} C",
                realness_name(*s),
                realness_name(*c)
            ),
            Rule::QuadratureOnlyCoupling { quad } => write!(
                f,
                "{}-only coupling: real S, imaginary C with C_minus = {}C_plus",
                quad.name(),
                if *quad == Quad::Q { "" } else { "-" }
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Prediction {
    pub selector: BlockSelector,
    pub rule: Rule,
}

/// Union of every applicable rule's blocks, one entry per (block, rule).
pub fn predict(profile: &StructureProfile) -> Vec<Prediction> {
    let mut out = Vec::new();
    for rule in Rule::all() {
        if rule.hypothesis_holds(profile) {
            for selector in rule.selectors() {
                out.push(Prediction { selector, rule });
            }
        }
    }
    out
}

/// Observability verdict for q or p attached to a bilateral rule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QndFlag {
    pub variable: &'static str,
    pub rule: Rule,
    pub observable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaeReport {
    pub profile: StructureProfile,
    pub predictions: Vec<Prediction>,
    pub certificates: Vec<ZeroBlockCertificate>,
    pub qnd_flags: Vec<QndFlag>,
}

impl BaeReport {
    /// True when every predicted block is certified to vanish.
    pub fn confirmed(&self) -> bool {
        self.predictions.iter().all(|p| {
            self.certificates
                .iter()
                .any(|c| c.selector == p.selector && c.verdict)
        })
    }

    /// Rules cited by the predictions, grouped by block.
    pub fn citations(&self) -> BTreeMap<BlockSelector, Vec<Rule>> {
        let mut map: BTreeMap<BlockSelector, Vec<Rule>> = BTreeMap::new();
        for p in &self.predictions {
            map.entry(p.selector).or_default().push(p.rule);
        }
        map
    }

    /// Re-checks every cited hypothesis against the stored profile.
    pub fn citations_consistent(&self) -> bool {
        self.predictions
            .iter()
            .all(|p| p.rule.hypothesis_holds(&self.profile))
    }
}

/// Profiles, predicts and certifies every predicted block.
pub fn analyze(params: &SystemParams) -> Result<BaeReport> {
    analyze_with(params, CLASSIFY_TOL, CERT_TOL)
}

pub fn analyze_with(params: &SystemParams, class_tol: f64, cert_tol: f64) -> Result<BaeReport> {
    let real = quadrature_realization(params)?;
    let profile = profile_with(params, class_tol);
    let predictions = predict(&profile);
    let mut selectors: Vec<BlockSelector> = predictions.iter().map(|p| p.selector).collect();
    selectors.sort();
    selectors.dedup();
    let certificates = selectors
        .into_iter()
        .map(|s| certify_zero_block(&real, s, cert_tol))
        .collect();

    let mut qnd_flags = Vec::new();
    for rule in [
        Rule::BilateralCrossQuadrature,
        Rule::BilateralSameQuadrature,
    ] {
        if !rule.hypothesis_holds(&profile) {
            continue;
        }
        let which = match profile.coupling_pattern {
            CouplingPattern::QCoupling => Some(Quad::Q),
            CouplingPattern::PCoupling => Some(Quad::P),
            _ => None,
        };
        if let Some(q) = which {
            qnd_flags.push(QndFlag {
                variable: q.name(),
                rule,
                observable: qnd::bilateral_qnd_pair_observable(params, q),
            });
        }
    }

    Ok(BaeReport {
        profile,
        predictions,
        certificates,
        qnd_flags,
    })
}

/// Michelson interferometer with two mechanical mirrors of mass `mass`,
/// frequency `omega_m` and probe coupling `lambda`.
pub fn michelson(mass: f64, omega_m: f64, lambda: f64) -> Result<SystemParams> {
    if !(mass > 0.0 && lambda >= 0.0) {
        return Err(crate::error::Error::InvalidParams(
            "mass must be positive and lambda non-negative".into(),
        ));
    }
    let w2 = mass * omega_m * omega_m;
    let om = CMat::identity(2, 2) * cx(0.5 * (w2 + 1.0 / mass), 0.0);
    let op = CMat::identity(2, 2) * cx(0.5 * (w2 - 1.0 / mass), 0.0);
    let k = CMat::from_row_slice(
        2,
        2,
        &[cx(1.0, 0.0), cx(1.0, 0.0), cx(1.0, 0.0), cx(-1.0, 0.0)],
    );
    let c = k * cx(0.0, 0.5 * lambda.sqrt());
    SystemParams::with_identity_scattering(c.clone(), c, om, op)
}
