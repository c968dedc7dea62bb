//! The system description file: JSON with complex entries as `[re, im]`.

use std::fmt;

use num_complex::Complex64;
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::algebra::CMat;
use crate::error::{Error, Result};
use crate::feedback::{BeamsplitterParams, OptomechParams, PartitionedPlant};
use crate::kalman::KalmanPartition;
use crate::model::{QuadratureRealization, SystemParams};

/// A complex entry written as a two-element list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry(pub Complex64);

impl Serialize for Entry {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(2))?;
        seq.serialize_element(&self.0.re)?;
        seq.serialize_element(&self.0.im)?;
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Entry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Entry;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a complex entry [re, im]")
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Entry, A::Error> {
                let re: f64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let im: f64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(Entry(Complex64::new(re, im)))
            }
        }
        d.deserialize_seq(V)
    }
}

/// Row-major list of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixDoc(pub Vec<Vec<Entry>>);

impl MatrixDoc {
    pub fn from_matrix(x: &CMat) -> Self {
        MatrixDoc(
            (0..x.nrows())
                .map(|i| (0..x.ncols()).map(|j| Entry(x[(i, j)])).collect())
                .collect(),
        )
    }

    /// Converts with the declared shape, naming the field on mismatch.
    pub fn to_matrix(&self, field: &str, rows: usize, cols: usize) -> Result<CMat> {
        if self.0.len() != rows {
            return Err(Error::Config(format!(
                "{field}: expected {rows} rows, found {}",
                self.0.len()
            )));
        }
        for (i, r) in self.0.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Config(format!(
                    "{field}: row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
        }
        Ok(CMat::from_fn(rows, cols, |i, j| self.0[i][j].0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionDoc {
    pub h11: Vec<usize>,
    pub h22: Vec<usize>,
    pub co: Vec<usize>,
    pub cbar_obar: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantDoc {
    pub m1: usize,
    pub m2: usize,
    #[serde(rename = "S11")]
    pub s11: MatrixDoc,
    #[serde(rename = "S12")]
    pub s12: MatrixDoc,
    #[serde(rename = "S21")]
    pub s21: MatrixDoc,
    #[serde(rename = "S22")]
    pub s22: MatrixDoc,
    pub k11: MatrixDoc,
    pub k12: MatrixDoc,
    pub k21: MatrixDoc,
    pub k22: MatrixDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamsplitterDoc {
    #[serde(rename = "S_b")]
    pub s_b: MatrixDoc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptomechDoc {
    #[serde(rename = "Delta1")]
    pub delta1: f64,
    #[serde(rename = "Delta2")]
    pub delta2: f64,
    pub omega_m: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    /// Prior mean of the state in blocked [q; p] order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mean: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDescription {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<MatrixDoc>,
    #[serde(rename = "C_minus", default, skip_serializing_if = "Option::is_none")]
    pub c_minus: Option<MatrixDoc>,
    #[serde(rename = "C_plus", default, skip_serializing_if = "Option::is_none")]
    pub c_plus: Option<MatrixDoc>,
    #[serde(
        rename = "Omega_minus",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub omega_minus: Option<MatrixDoc>,
    #[serde(
        rename = "Omega_plus",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub omega_plus: Option<MatrixDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beamsplitter: Option<BeamsplitterDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optomech: Option<OptomechDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimDoc>,
}

/// Joins every array nested at most two deep with no objects inside onto a
/// single line. Input is serde_json pretty output, so strings never contain
/// brackets that matter here: names are the only strings and are copied
/// verbatim.
fn collapse_rows(pretty: &str) -> String {
    let bytes = pretty.as_bytes();
    let mut out = String::with_capacity(pretty.len());
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'"' {
            let end = string_end(bytes, i);
            out.push_str(&pretty[i..end]);
            i = end;
            continue;
        }
        if c == b'[' {
            if let Some(end) = leaf_array_end(bytes, i) {
                let flat: String = pretty[i..end]
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" ");
                out.push_str(&flat.replace("[ ", "[").replace(" ]", "]"));
                i = end;
                continue;
            }
        }
        out.push(c as char);
        i += 1;
    }
    out
}

fn string_end(bytes: &[u8], start: usize) -> usize {
    let mut i = start + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return i + 1,
            _ => i += 1,
        }
    }
    bytes.len()
}

/// End of the array starting at `start` if it nests at most two deep and
/// holds no objects or strings.
fn leaf_array_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut max_depth = 0usize;
    for (k, &c) in bytes[start..].iter().enumerate() {
        match c {
            b'[' => {
                depth += 1;
                max_depth = max_depth.max(depth);
            }
            b']' => {
                depth -= 1;
                if depth == 0 {
                    return (max_depth <= 2).then_some(start + k + 1);
                }
            }
            b'{' | b'"' => return None,
            _ => {}
        }
    }
    None
}

/// Parse failure with the position reported by the JSON reader.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {}: {}",
            self.line, self.column, self.message
        )
    }
}

impl SystemDescription {
    pub fn parse(text: &str) -> std::result::Result<Self, ParseError> {
        serde_json::from_str(text).map_err(|e| ParseError {
            line: e.line(),
            column: e.column(),
            message: {
                let full = e.to_string();
                let suffix = format!(" at line {} column {}", e.line(), e.column());
                full.strip_suffix(&suffix).unwrap_or(&full).to_string()
            },
        })
    }

    /// Pretty JSON with each matrix row on one line.
    pub fn to_json(&self) -> String {
        let pretty = serde_json::to_string_pretty(self).expect("plain data serializes");
        let mut s = collapse_rows(&pretty);
        s.push('\n');
        s
    }

    fn field<'a>(x: &'a Option<MatrixDoc>, name: &str) -> Result<&'a MatrixDoc> {
        x.as_ref()
            .ok_or_else(|| Error::Config(format!("missing field {name}")))
    }

    fn dims(&self) -> Result<(usize, usize)> {
        match (self.n, self.m) {
            (Some(n), Some(m)) => Ok((n, m)),
            _ => Err(Error::Config("n and m must be declared".into())),
        }
    }

    fn omegas(&self, n: usize) -> Result<(CMat, CMat)> {
        Ok((
            Self::field(&self.omega_minus, "Omega_minus")?.to_matrix("Omega_minus", n, n)?,
            Self::field(&self.omega_plus, "Omega_plus")?.to_matrix("Omega_plus", n, n)?,
        ))
    }

    /// True when the file carries the core system matrices.
    pub fn has_system(&self) -> bool {
        self.s.is_some() || self.c_minus.is_some() || self.c_plus.is_some()
    }

    /// The system matrices, or the unconnected plant when only a plant
    /// section is present.
    pub fn system(&self) -> Result<SystemParams> {
        if !self.has_system() {
            if self.plant.is_some() {
                return self.plant()?.as_system();
            }
            if let Some(p) = self.optomech_params()? {
                return Ok(crate::feedback::optomech_system(&p));
            }
        }
        let (n, m) = self.dims()?;
        let s = Self::field(&self.s, "S")?.to_matrix("S", m, m)?;
        let cm = Self::field(&self.c_minus, "C_minus")?.to_matrix("C_minus", m, n)?;
        let cp = Self::field(&self.c_plus, "C_plus")?.to_matrix("C_plus", m, n)?;
        let (om, op) = self.omegas(n)?;
        SystemParams::new(s, cm, cp, om, op)
    }

    pub fn plant(&self) -> Result<PartitionedPlant> {
        let p = self
            .plant
            .as_ref()
            .ok_or_else(|| Error::Config("missing plant section".into()))?;
        let n = self
            .n
            .ok_or_else(|| Error::Config("n must be declared".into()))?;
        let (m1, m2) = (p.m1, p.m2);
        let (om, op) = self.omegas(n)?;
        PartitionedPlant::new(
            p.s11.to_matrix("plant.S11", m1, m1)?,
            p.s12.to_matrix("plant.S12", m1, m2)?,
            p.s21.to_matrix("plant.S21", m2, m1)?,
            p.s22.to_matrix("plant.S22", m2, m2)?,
            p.k11.to_matrix("plant.k11", m1, n)?,
            p.k12.to_matrix("plant.k12", m1, n)?,
            p.k21.to_matrix("plant.k21", m2, n)?,
            p.k22.to_matrix("plant.k22", m2, n)?,
            om,
            op,
        )
    }

    pub fn beamsplitter(&self) -> Result<BeamsplitterParams> {
        let b = self
            .beamsplitter
            .as_ref()
            .ok_or_else(|| Error::Config("missing beamsplitter section".into()))?;
        let k = b.s_b.0.len();
        BeamsplitterParams::new(b.s_b.to_matrix("beamsplitter.S_b", k, k)?)
    }

    pub fn optomech_params(&self) -> Result<Option<OptomechParams>> {
        self.optomech
            .map(|o| {
                OptomechParams::new(o.delta1, o.delta2, o.omega_m, o.lambda1, o.lambda2, o.kappa)
            })
            .transpose()
    }

    /// The declared Kalman index sets applied to a realization.
    pub fn partition(&self, real: &QuadratureRealization) -> Option<Result<KalmanPartition>> {
        self.partition.as_ref().map(|p| {
            KalmanPartition::new(
                real.a.clone(),
                real.b.clone(),
                real.c.clone(),
                p.h11.clone(),
                p.h22.clone(),
                p.co.clone(),
                p.cbar_obar.clone(),
            )
        })
    }

    /// Description of a system with no optional sections.
    pub fn from_system(name: &str, p: &SystemParams) -> Self {
        Self {
            name: name.to_string(),
            n: Some(p.n()),
            m: Some(p.m()),
            s: Some(MatrixDoc::from_matrix(p.s())),
            c_minus: Some(MatrixDoc::from_matrix(p.c_minus())),
            c_plus: Some(MatrixDoc::from_matrix(p.c_plus())),
            omega_minus: Some(MatrixDoc::from_matrix(p.omega_minus())),
            omega_plus: Some(MatrixDoc::from_matrix(p.omega_plus())),
            partition: None,
            plant: None,
            beamsplitter: None,
            optomech: None,
            sim: None,
        }
    }

    /// Description of a feedback plant: Ω blocks at top level, the rest in
    /// the plant section.
    pub fn from_plant(name: &str, p: &PartitionedPlant) -> Self {
        let m = MatrixDoc::from_matrix;
        Self {
            name: name.to_string(),
            n: Some(p.n()),
            m: None,
            s: None,
            c_minus: None,
            c_plus: None,
            omega_minus: Some(m(&p.omega_minus)),
            omega_plus: Some(m(&p.omega_plus)),
            partition: None,
            plant: Some(PlantDoc {
                m1: p.m1(),
                m2: p.m2(),
                s11: m(&p.s11),
                s12: m(&p.s12),
                s21: m(&p.s21),
                s22: m(&p.s22),
                k11: m(&p.k11),
                k12: m(&p.k12),
                k21: m(&p.k21),
                k22: m(&p.k22),
            }),
            beamsplitter: None,
            optomech: None,
            sim: None,
        }
    }
}
