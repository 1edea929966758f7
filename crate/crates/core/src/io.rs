//! JSON and CSV file formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graphs::{GraphCache, GraphUniverse};
use crate::interval::{IntervalUnion, LinearQuerySpec};
use crate::layers::{DatasetInit, Extra, InitialValues, ValueSet};
use crate::metric::{DatasetSpace, MetricSpacePair, QueryFunction, ValueSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum MetricDoc {
    Matrix { matrix: Vec<Vec<f64>> },
    AbsDiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDoc {
    pub values: BTreeMap<String, f64>,
}

fn abs_diff_name() -> String {
    "abs-diff".into()
}

/// Finite space file. `support` is optional; without it the value support
/// is the image of the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDoc {
    pub kind: String,
    pub elements: Vec<String>,
    pub dataset_metric: MetricDoc,
    pub query: QueryDoc,
    #[serde(default = "abs_diff_name")]
    pub value_metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<f64>>,
}

impl SpaceDoc {
    pub fn build(&self) -> Result<(MetricSpacePair, QueryFunction)> {
        if self.kind != "finite" {
            return Err(Error::Malformed(format!("unsupported space kind `{}`", self.kind)));
        }
        if self.value_metric != "abs-diff" {
            return Err(Error::Malformed(format!(
                "unsupported value metric `{}`",
                self.value_metric
            )));
        }
        let datasets = match &self.dataset_metric {
            MetricDoc::Matrix { matrix } => DatasetSpace::new(self.elements.clone(), matrix.clone())?,
            MetricDoc::AbsDiff => DatasetSpace::abs_diff(self.elements.clone())?,
        };
        let images = self
            .elements
            .iter()
            .map(|id| {
                self.query
                    .values
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Malformed(format!("no query value for `{id}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(extra) = self.query.values.keys().find(|k| datasets.index_of(k).is_err()) {
            return Err(Error::UnknownDataset(extra.clone()));
        }
        match &self.support {
            None => MetricSpacePair::with_image_support(datasets, &images),
            Some(points) => {
                let spaces = MetricSpacePair::new(datasets, ValueSpace::new(points.clone())?);
                let f = QueryFunction::from_values(&images, &spaces)?;
                Ok((spaces, f))
            }
        }
    }

    /// Document describing an existing finite pair with a matrix metric.
    pub fn from_spaces(spaces: &MetricSpacePair, f: &QueryFunction) -> Self {
        let d = &spaces.datasets;
        Self {
            kind: "finite".into(),
            elements: d.ids().to_vec(),
            dataset_metric: MetricDoc::Matrix {
                matrix: (0..d.len()).map(|x| d.row(x).to_vec()).collect(),
            },
            query: QueryDoc {
                values: (0..d.len())
                    .map(|x| (d.id(x).to_string(), spaces.values.value(f.image(x))))
                    .collect(),
            },
            value_metric: abs_diff_name(),
            support: Some(spaces.values.points().to_vec()),
        }
    }
}

/// Linear-query spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpecDoc {
    #[serde(rename = "V")]
    pub v: IntervalUnion,
    #[serde(default)]
    pub delta: f64,
    pub epsilon: f64,
}

impl LinearSpecDoc {
    pub fn spec(&self) -> Result<LinearQuerySpec> {
        LinearQuerySpec::new(self.v.clone())
    }
}

/// Any space input accepted by the front end.
#[derive(Debug, Clone)]
pub enum SpaceInput {
    Finite(SpaceDoc),
    Graphs(GraphUniverse),
    Linear(LinearSpecDoc),
}

impl SpaceInput {
    /// Finite spaces and query for finite or graph inputs.
    pub fn finite(&self) -> Result<(MetricSpacePair, QueryFunction)> {
        match self {
            SpaceInput::Finite(doc) => doc.build(),
            SpaceInput::Graphs(u) => u.spaces(),
            SpaceInput::Linear(_) => Err(Error::Malformed(
                "expected a finite or graph space, got a linear spec".into(),
            )),
        }
    }
}

pub fn parse_space(text: &str) -> Result<SpaceInput> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    let malformed = |e: serde_json::Error| Error::Malformed(e.to_string());
    if v.get("kind").is_some() {
        Ok(SpaceInput::Finite(serde_json::from_value(v).map_err(malformed)?))
    } else if v.get("classes").is_some() {
        let cache: GraphCache = serde_json::from_value(v).map_err(malformed)?;
        Ok(SpaceInput::Graphs(GraphUniverse::from_cache(&cache)?))
    } else if v.get("V").is_some() {
        Ok(SpaceInput::Linear(serde_json::from_value(v).map_err(malformed)?))
    } else {
        Err(Error::Malformed(
            "space file has none of `kind`, `classes`, `V`".into(),
        ))
    }
}

pub fn read_space(path: &Path) -> Result<SpaceInput> {
    parse_space(&std::fs::read_to_string(path)?)
}

/// Support values as numbers or interval lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValuesDoc {
    Points(Vec<f64>),
    Intervals(IntervalUnion),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraDoc {
    pub i: usize,
    pub set: ValuesDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDoc {
    pub layer0: ValuesDoc,
    #[serde(default)]
    pub extras: Vec<ExtraDoc>,
}

/// Mechanism file. Datasets are written in canonical order.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismDoc {
    pub epsilon: f64,
    pub initial: BTreeMap<String, DatasetDoc>,
    #[serde(skip)]
    order: Vec<String>,
}

impl Serialize for MechanismDoc {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Ordered<'a>(&'a MechanismDoc);
        impl Serialize for Ordered<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let doc = self.0;
                let mut m = s.serialize_map(Some(doc.initial.len()))?;
                let mut seen = Vec::new();
                for id in &doc.order {
                    if let Some(d) = doc.initial.get(id) {
                        m.serialize_entry(id, d)?;
                        seen.push(id);
                    }
                }
                for (id, d) in &doc.initial {
                    if !seen.contains(&id) {
                        m.serialize_entry(id, d)?;
                    }
                }
                m.end()
            }
        }
        let mut m = s.serialize_map(Some(2))?;
        m.serialize_entry("epsilon", &self.epsilon)?;
        m.serialize_entry("initial", &Ordered(self))?;
        m.end()
    }
}

fn points_of(set: &ValueSet, spaces: &MetricSpacePair) -> ValuesDoc {
    ValuesDoc::Points(set.iter().map(|&r| spaces.values.value(r)).collect())
}

fn indices_of(values: &ValuesDoc, spaces: &MetricSpacePair) -> Result<ValueSet> {
    match values {
        ValuesDoc::Points(p) => p.iter().map(|&v| spaces.values.index_of(v)).collect(),
        ValuesDoc::Intervals(_) => Err(Error::Malformed(
            "interval values given for a finite support".into(),
        )),
    }
}

impl MechanismDoc {
    pub fn from_initial(init: &InitialValues, spaces: &MetricSpacePair) -> Self {
        let d = &spaces.datasets;
        let initial = init
            .sets
            .iter()
            .enumerate()
            .map(|(x, s)| {
                (
                    d.id(x).to_string(),
                    DatasetDoc {
                        layer0: points_of(&s.layer0, spaces),
                        extras: s
                            .extras
                            .iter()
                            .map(|e| ExtraDoc {
                                i: e.index,
                                set: points_of(&e.set, spaces),
                            })
                            .collect(),
                    },
                )
            })
            .collect();
        Self {
            epsilon: init.epsilon,
            initial,
            order: d.ids().to_vec(),
        }
    }

    /// Centered interval mechanism with layer 0 `[−δ, δ]`.
    pub fn linear(epsilon: f64, delta: f64) -> Result<Self> {
        let mut initial = BTreeMap::new();
        initial.insert(
            "0".to_string(),
            DatasetDoc {
                layer0: ValuesDoc::Intervals(IntervalUnion::interval(-delta, delta)?),
                extras: Vec::new(),
            },
        );
        Ok(Self {
            epsilon,
            initial,
            order: vec!["0".into()],
        })
    }

    /// Radius of a centered interval mechanism.
    pub fn linear_delta(&self) -> Result<f64> {
        let bad = || Error::Malformed("expected one dataset with layer0 [[-d, d]]".into());
        if self.initial.len() != 1 {
            return Err(bad());
        }
        let d = self.initial.values().next().unwrap();
        if !d.extras.is_empty() {
            return Err(bad());
        }
        match &d.layer0 {
            ValuesDoc::Intervals(u) => match u.pieces() {
                [(a, b)] if (a + b).abs() <= 1e-12 * (1.0 + b.abs()) => Ok(*b),
                _ => Err(bad()),
            },
            ValuesDoc::Points(p) if p.len() == 1 && p[0] == 0.0 => Ok(0.0),
            _ => Err(bad()),
        }
    }

    pub fn to_initial(&self, spaces: &MetricSpacePair) -> Result<InitialValues> {
        let d = &spaces.datasets;
        for id in self.initial.keys() {
            d.index_of(id)?;
        }
        let sets = (0..d.len())
            .map(|x| {
                let doc = self
                    .initial
                    .get(d.id(x))
                    .ok_or_else(|| Error::Malformed(format!("no initial values for `{}`", d.id(x))))?;
                Ok(DatasetInit {
                    layer0: indices_of(&doc.layer0, spaces)?,
                    extras: doc
                        .extras
                        .iter()
                        .map(|e| {
                            Ok(Extra {
                                index: e.i,
                                set: indices_of(&e.set, spaces)?,
                            })
                        })
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        InitialValues::new(self.epsilon, sets)
    }
}

pub fn parse_mechanism(text: &str) -> Result<MechanismDoc> {
    serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))
}

/// `%.{sig}g`-style formatting: plain decimals for moderate exponents,
/// scientific otherwise, trailing zeros trimmed.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -5 || exp >= sig as i32 {
        let mant = trim_zeros(mant);
        return format!("{mant}e{exp}");
    }
    let decimals = (sig as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Utility CSV: `x,epsilon,p_bar`, one row per dataset in canonical order.
pub fn utility_csv(ids: &[String], epsilon: f64, p_bar: &[f64]) -> String {
    let mut out = String::from("x,epsilon,p_bar\n");
    for (id, p) in ids.iter().zip(p_bar) {
        let _ = writeln!(out, "{id},{},{}", format_sig(epsilon, 12), format_sig(*p, 12));
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}
