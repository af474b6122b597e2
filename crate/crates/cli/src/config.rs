//! Run configuration: JSON schema, validation and model construction.

use std::fmt;
use std::path::PathBuf;

use fibrot::duality::{build_dual, TrigPolynomial};
use fibrot::hyperbolicity::UhParams;
use fibrot::model::{FourierBlock, TrigBlocks};
use fibrot::{BaseDynamics, Complex, ComplexMatrix, HermitianMatrix, OperatorModel, Potential, ToleranceProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A complex entry as `[re, im]`.
pub type Entry = [f64; 2];
/// Row-major matrix of `[re, im]` entries.
pub type MatrixSpec = Vec<Vec<Entry>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseSpec>,
    /// Builds the model as the dual of this scalar polynomial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_of: Option<DualSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tol: ToleranceProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uh: Option<UhSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<PerturbSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub star: Option<StarSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality: Option<DualityCheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Free {},
    Constant {
        #[serde(rename = "F")]
        value: MatrixSpec,
    },
    TrigBlocks {
        constant: MatrixSpec,
        #[serde(default)]
        terms: Vec<TermSpec>,
    },
    /// The dual of `2λ cos 2πθ` over rotation by `alpha`.
    AmoDual {
        lambda: f64,
        alpha: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub frequency: Vec<i64>,
    #[serde(rename = "F")]
    pub coefficient: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    Torus { alpha: Vec<f64> },
    CatMap {},
    Doubling {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualSpec {
    /// `v̂_0, …, v̂_d` as `[re, im]`.
    pub coefficients: Vec<Entry>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(rename = "E_min")]
    pub e_min: f64,
    #[serde(rename = "E_max")]
    pub e_max: f64,
    pub points: usize,
    #[serde(rename = "N")]
    pub sites: usize,
}

impl ScanSpec {
    pub fn energies(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.e_min];
        }
        let step = (self.e_max - self.e_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.e_min + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UhSpec {
    pub n_iter: Option<usize>,
    pub sample_count: Option<usize>,
    pub gap_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    pub support: Vec<f64>,
    pub realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarSpec {
    #[serde(rename = "A")]
    pub a: Vec<[f64; 2]>,
    #[serde(rename = "B")]
    pub b: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityCheckSpec {
    /// Random `(E, θ)` pairs for the factorization residual.
    pub samples: usize,
}

/// Configuration problems, reported with exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError(pub String);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for SchemaError {}

fn schema<T>(msg: impl Into<String>) -> Result<T, SchemaError> {
    Err(SchemaError(msg.into()))
}

fn matrix(spec: &MatrixSpec, what: &str) -> Result<ComplexMatrix, SchemaError> {
    let rows = spec.len();
    if rows == 0 || spec.iter().any(|r| r.len() != rows) {
        return schema(format!("{what} must be a non-empty square matrix"));
    }
    Ok(ComplexMatrix::from_fn(rows, rows, |i, j| Complex::new(spec[i][j][0], spec[i][j][1])))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        serde_json::from_str(text).map_err(|e| SchemaError(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn scan(&self) -> Result<ScanSpec, SchemaError> {
        let Some(scan) = self.scan else { return schema("missing \"scan\" section") };
        if !scan.e_min.is_finite() || !scan.e_max.is_finite() || scan.e_min > scan.e_max {
            return schema("scan needs finite E_min ≤ E_max");
        }
        if scan.points == 0 || scan.sites == 0 {
            return schema("scan needs positive points and N");
        }
        if scan.points > 1 && scan.e_min == scan.e_max {
            return schema("empty energy range");
        }
        Ok(scan)
    }

    pub fn uh_params(&self) -> UhParams {
        let mut p = UhParams::default();
        if let Some(u) = self.uh {
            p.n_iter = u.n_iter.unwrap_or(p.n_iter);
            p.sample_count = u.sample_count.unwrap_or(p.sample_count);
            p.gap_threshold = u.gap_threshold.unwrap_or(p.gap_threshold);
        }
        p
    }

    pub fn dual_polynomial(&self) -> Result<Option<TrigPolynomial>, SchemaError> {
        let Some(d) = &self.dual_of else { return Ok(None) };
        TrigPolynomial::new(d.coefficients.iter().map(|e| Complex::new(e[0], e[1])).collect(), d.alpha)
            .map(Some)
            .map_err(|e| SchemaError(e.to_string()))
    }

    /// Builds and validates the operator described by the config.
    pub fn model(&self) -> Result<OperatorModel, SchemaError> {
        let built = if let Some(v) = self.dual_polynomial()? {
            if self.coupling.is_some() || self.potential.is_some() || self.base.is_some() {
                return schema("\"dual_of\" excludes \"C\", \"potential\" and \"base\"");
            }
            build_dual(&v)
        } else if let Some(PotentialSpec::AmoDual { lambda, alpha }) = &self.potential {
            if self.coupling.is_some() || self.base.is_some() {
                return schema("potential \"amo_dual\" excludes \"C\" and \"base\"");
            }
            TrigPolynomial::cosine(*lambda, *alpha).and_then(|v| build_dual(&v))
        } else {
            let Some(c) = &self.coupling else { return schema("missing \"C\"") };
            let Some(p) = &self.potential else { return schema("missing \"potential\"") };
            let Some(b) = &self.base else { return schema("missing \"base\"") };
            let coupling = matrix(c, "C")?;
            let potential = match p {
                PotentialSpec::Free {} => Potential::Free,
                PotentialSpec::Constant { value } => Potential::Constant(
                    HermitianMatrix::with_tolerance(matrix(value, "F")?, &self.tol).map_err(|e| SchemaError(e.to_string()))?,
                ),
                PotentialSpec::TrigBlocks { constant, terms } => {
                    let constant = HermitianMatrix::with_tolerance(matrix(constant, "constant")?, &self.tol)
                        .map_err(|e| SchemaError(e.to_string()))?;
                    let terms = terms
                        .iter()
                        .map(|t| Ok(FourierBlock { frequency: t.frequency.clone(), coefficient: matrix(&t.coefficient, "F")? }))
                        .collect::<Result<_, SchemaError>>()?;
                    Potential::TrigBlocks(TrigBlocks { constant, terms })
                }
                PotentialSpec::AmoDual { .. } => unreachable!("handled above"),
            };
            let base = match b {
                BaseSpec::Torus { alpha } => BaseDynamics::torus(alpha.clone()),
                BaseSpec::CatMap {} => Ok(BaseDynamics::CatMap),
                BaseSpec::Doubling {} => Ok(BaseDynamics::Doubling),
            }
            .map_err(|e| SchemaError(e.to_string()))?;
            OperatorModel::with_tolerance(coupling, potential, base, self.tol)
        };
        let model = built.map_err(|e| SchemaError(e.to_string()))?;
        let model = OperatorModel::with_tolerance(model.coupling().clone(), model.potential().clone(), model.base().clone(), self.tol)
            .map_err(|e| SchemaError(e.to_string()))?;
        if let Some(m) = self.m {
            if m != model.block_dim() {
                return schema(format!("\"m\" is {m} but the model has {}x{} blocks", model.block_dim(), model.block_dim()));
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREE: &str = r#"{"m":1,"C":[[[1,0]]],"potential":{"type":"free"},"base":{"type":"torus","alpha":[0.618]},
        "scan":{"E_min":-3,"E_max":3,"points":5,"N":100}}"#;

    #[test]
    fn parses_free_laplacian() {
        let cfg = RunConfig::parse(FREE).unwrap();
        let model = cfg.model().unwrap();
        assert_eq!(model.block_dim(), 1);
        assert_eq!(cfg.scan().unwrap().energies(), vec![-3.0, -1.5, 0.0, 1.5, 3.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::parse(r#"{"potential":{"type":"free","extra":2}}"#).is_err());
        assert!(RunConfig::parse(r#"{"tol":{"nope":1.0}}"#).is_err());
    }

    #[test]
    fn hash_ignores_whitespace() {
        let a = RunConfig::parse(FREE).unwrap();
        let b = RunConfig::parse(&FREE.replace([' ', '\n'], "")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn dual_model_from_cosine() {
        let cfg = RunConfig::parse(r#"{"potential":{"type":"amo_dual","lambda":3.0,"alpha":0.618}}"#).unwrap();
        assert_eq!(cfg.model().unwrap().coupling()[(0, 0)], Complex::new(3.0, 0.0));
        let both = RunConfig::parse(r#"{"dual_of":{"coefficients":[[0,0],[1,0]],"alpha":0.6},"C":[[[1,0]]]}"#).unwrap();
        assert!(both.model().is_err());
    }

    #[test]
    fn mismatched_block_size_is_a_schema_error() {
        let cfg = RunConfig::parse(&FREE.replace("\"m\":1", "\"m\":2")).unwrap();
        assert!(cfg.model().is_err());
    }
}
