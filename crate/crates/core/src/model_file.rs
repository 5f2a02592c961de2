//! JSON model files for both model kinds, tagged by `model_kind`.
//!
//! Floats are written in shortest round-trip decimal form and parsed back
//! exactly, so a saved model evaluates bit-for-bit like the original.

use crate::cbn::CbnModel;
use crate::copula::UniformGaussianCopula;
use crate::error::{Error, Result};
use crate::gaussian_bn::LinearGaussianBn;
use crate::graph::Dag;
use crate::marginals::KdeMarginal;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

/// Either kind of fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Cbn(CbnModel),
    Lgbn(LinearGaussianBn),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Cbn(_) => "cbn",
            Model::Lgbn(_) => "lgbn",
        }
    }

    pub fn column_names(&self) -> &[String] {
        match self {
            Model::Cbn(m) => m.column_names(),
            Model::Lgbn(m) => m.column_names(),
        }
    }

    pub fn dag(&self) -> &Dag {
        match self {
            Model::Cbn(m) => m.dag(),
            Model::Lgbn(m) => m.dag(),
        }
    }

    pub fn as_cbn(&self) -> Option<&CbnModel> {
        match self {
            Model::Cbn(m) => Some(m),
            Model::Lgbn(_) => None,
        }
    }

    pub fn as_lgbn(&self) -> Option<&LinearGaussianBn> {
        match self {
            Model::Lgbn(m) => Some(m),
            Model::Cbn(_) => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "lowercase")]
enum Document {
    Cbn(CbnDocument),
    Lgbn(LgbnDocument),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CbnDocument {
    version: u32,
    column_names: Vec<String>,
    families: Vec<CbnFamily>,
    marginals: Vec<MarginalEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CbnFamily {
    child: usize,
    parents: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarginalEntry {
    bandwidth: f64,
    samples: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LgbnDocument {
    version: u32,
    column_names: Vec<String>,
    families: Vec<LgbnFamily>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LgbnFamily {
    child: usize,
    parents: Vec<usize>,
    intercept: f64,
    coefficients: Vec<f64>,
    variance: f64,
}

pub fn serialize(model: &Model) -> Result<String> {
    let doc = match model {
        Model::Cbn(m) => Document::Cbn(CbnDocument {
            version: FORMAT_VERSION,
            column_names: m.column_names().to_vec(),
            families: (0..m.num_vars())
                .map(|i| CbnFamily {
                    child: i,
                    parents: m.dag().parents(i).to_vec(),
                    rho: m.rho(i),
                })
                .collect(),
            marginals: m
                .marginals()
                .iter()
                .map(|k| MarginalEntry {
                    bandwidth: k.bandwidth(),
                    samples: k.samples().to_vec(),
                })
                .collect(),
        }),
        Model::Lgbn(m) => Document::Lgbn(LgbnDocument {
            version: FORMAT_VERSION,
            column_names: m.column_names().to_vec(),
            families: (0..m.num_vars())
                .map(|i| LgbnFamily {
                    child: i,
                    parents: m.dag().parents(i).to_vec(),
                    intercept: m.intercepts()[i],
                    coefficients: m.coefficients()[i].clone(),
                    variance: m.variances()[i],
                })
                .collect(),
        }),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses and validates a model file. Malformed text gives
/// [`Error::ModelFormat`]; well-formed text describing an invalid model
/// (cycles, self-loops, out-of-range ρ, bad bandwidths) gives
/// [`Error::Validation`].
pub fn deserialize(text: &str) -> Result<Model> {
    let doc: Document =
        serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    match doc {
        Document::Cbn(d) => {
            check_version(d.version)?;
            let parents = parent_lists(
                d.column_names.len(),
                d.families.iter().map(|f| (f.child, &f.parents)),
            )?;
            let dag = validated_dag(parents)?;
            if d.marginals.len() != d.column_names.len() {
                return Err(Error::Validation(format!(
                    "{} marginals for {} columns",
                    d.marginals.len(),
                    d.column_names.len()
                )));
            }
            let marginals = d
                .marginals
                .into_iter()
                .enumerate()
                .map(|(i, m)| {
                    KdeMarginal::new(m.samples, m.bandwidth)
                        .map_err(|e| Error::Validation(format!("marginal {i}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut copulas = vec![None; dag.num_vars()];
            for f in &d.families {
                let k = dag.parents(f.child).len();
                copulas[f.child] = match (k, f.rho) {
                    (0, None) => None,
                    (_, Some(rho)) => Some(
                        UniformGaussianCopula::new(k + 1, rho)
                            .map_err(|e| Error::Validation(e.to_string()))?,
                    ),
                    (_, None) => {
                        return Err(Error::Validation(format!(
                            "node {} has parents but no rho",
                            f.child
                        )))
                    }
                };
            }
            Ok(Model::Cbn(
                CbnModel::new(d.column_names, dag, marginals, copulas).map_err(as_validation)?,
            ))
        }
        Document::Lgbn(d) => {
            check_version(d.version)?;
            let parents = parent_lists(
                d.column_names.len(),
                d.families.iter().map(|f| (f.child, &f.parents)),
            )?;
            let dag = validated_dag(parents)?;
            let mut intercepts = vec![0.0; dag.num_vars()];
            let mut coefficients = vec![Vec::new(); dag.num_vars()];
            let mut variances = vec![0.0; dag.num_vars()];
            for f in d.families {
                intercepts[f.child] = f.intercept;
                coefficients[f.child] = f.coefficients;
                variances[f.child] = f.variance;
            }
            Ok(Model::Lgbn(
                LinearGaussianBn::new(d.column_names, dag, intercepts, coefficients, variances)
                    .map_err(as_validation)?,
            ))
        }
    }
}

fn as_validation(e: Error) -> Error {
    match e {
        Error::Validation(_) => e,
        other => Error::Validation(other.to_string()),
    }
}

fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "unsupported model file version {version}"
        )));
    }
    Ok(())
}

/// Every column must appear exactly once as a child, with no self-loops.
fn parent_lists<'a>(
    n: usize,
    families: impl Iterator<Item = (usize, &'a Vec<usize>)>,
) -> Result<Vec<Vec<usize>>> {
    let mut lists: Vec<Option<Vec<usize>>> = vec![None; n];
    for (child, parents) in families {
        if child >= n {
            return Err(Error::Validation(format!(
                "family child {child} out of range for {n} columns"
            )));
        }
        if parents.contains(&child) {
            return Err(Error::Validation(format!("self-loop on node {child}")));
        }
        if lists[child].replace(parents.clone()).is_some() {
            return Err(Error::Validation(format!("node {child} listed twice")));
        }
    }
    lists
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| Error::Validation(format!("node {i} has no family entry"))))
        .collect()
}

fn validated_dag(parents: Vec<Vec<usize>>) -> Result<Dag> {
    let mut sorted = parents;
    for p in &mut sorted {
        p.sort_unstable();
    }
    Dag::from_parents(sorted).map_err(as_validation)
}

pub fn save<P: AsRef<Path>>(model: &Model, path: P) -> Result<()> {
    std::fs::write(path, serialize(model)? + "\n")?;
    Ok(())
}

pub fn load<P: AsRef<Path>>(path: P) -> Result<Model> {
    deserialize(&std::fs::read_to_string(path)?)
}
