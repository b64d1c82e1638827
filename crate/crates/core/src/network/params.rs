use serde::{Deserialize, Serialize};

use super::MlpSpec;
use crate::container::Container;
use crate::mathcore::Matrix;
use crate::{Error, Result};

/// Whether a tensor is a weight matrix or a bias row. Matrix-based
/// optimizers fall back to AdamW on vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Matrix,
    Vector,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub kind: TensorKind,
    pub rows: usize,
    pub cols: usize,
    /// Start of this tensor in the flat view.
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered named tensors with a flat-vector view.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    layout: Vec<TensorInfo>,
    tensors: Vec<Matrix>,
}

impl ParamSet {
    pub fn zeros(layout: Vec<TensorInfo>) -> Self {
        let tensors = layout
            .iter()
            .map(|t| Matrix::zeros(t.rows, t.cols))
            .collect();
        Self { layout, tensors }
    }

    /// Build from tensors that match `layout` in order and shape.
    pub fn from_tensors(layout: Vec<TensorInfo>, tensors: Vec<Matrix>) -> Result<Self> {
        if layout.len() != tensors.len()
            || layout
                .iter()
                .zip(&tensors)
                .any(|(l, t)| t.shape() != (l.rows, l.cols))
        {
            return Err(Error::Dimension("tensors do not match the layout".into()));
        }
        Ok(Self { layout, tensors })
    }

    /// Ad-hoc parameter set of named matrices (for optimizer tests and
    /// surrogate problems).
    pub fn from_named(items: Vec<(&str, TensorKind, Matrix)>) -> Self {
        let mut offset = 0;
        let mut layout = Vec::new();
        let mut tensors = Vec::new();
        for (name, kind, m) in items {
            layout.push(TensorInfo {
                name: name.to_string(),
                kind,
                rows: m.rows(),
                cols: m.cols(),
                offset,
            });
            offset += m.len();
            tensors.push(m);
        }
        Self { layout, tensors }
    }

    /// A single vector-kind tensor holding `values`.
    pub fn from_vector(values: &[f64]) -> Self {
        Self::from_named(vec![(
            "theta",
            TensorKind::Vector,
            Matrix::row_vector(values),
        )])
    }

    pub fn layout(&self) -> &[TensorInfo] {
        &self.layout
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TensorInfo, &Matrix)> {
        self.layout.iter().zip(&self.tensors)
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.layout.iter().map(TensorInfo::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.layout == other.layout
    }

    pub fn check_layout(&self, other: &ParamSet, what: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::State(format!(
                "{what}: parameter layout differs from stored state"
            )))
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for t in &self.tensors {
            out.extend_from_slice(t.as_slice());
        }
        out
    }

    pub fn from_flat(layout: Vec<TensorInfo>, flat: &[f64]) -> Result<Self> {
        let total: usize = layout.iter().map(TensorInfo::len).sum();
        if flat.len() != total {
            return Err(Error::Dimension(format!(
                "flat vector has {} entries, layout needs {total}",
                flat.len()
            )));
        }
        let tensors = layout
            .iter()
            .map(|l| Matrix::from_raw(l.rows, l.cols, flat[l.offset..l.offset + l.len()].to_vec()))
            .collect();
        Ok(Self { layout, tensors })
    }

    /// Frobenius inner product summed over tensors in layout order.
    pub fn dot(&self, other: &ParamSet) -> f64 {
        self.tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().fold(0.0, |m, t| m.max(t.max_abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }

    /// `self − other`.
    pub fn sub(&self, other: &ParamSet) -> ParamSet {
        self.zip(other, |a, b| a - b)
    }

    /// `self += c·other`.
    pub fn axpy(&mut self, c: f64, other: &ParamSet) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.axpy(c, b);
        }
    }

    pub fn scaled(&self, c: f64) -> ParamSet {
        Self {
            layout: self.layout.clone(),
            tensors: self.tensors.iter().map(|t| t.scaled(c)).collect(),
        }
    }

    pub fn zip(&self, other: &ParamSet, f: impl Fn(f64, f64) -> f64) -> ParamSet {
        Self {
            layout: self.layout.clone(),
            tensors: self
                .tensors
                .iter()
                .zip(&other.tensors)
                .map(|(a, b)| a.zip_map(b, &f))
                .collect(),
        }
    }

    pub fn to_container(&self, spec: &MlpSpec) -> Container {
        let mut c = Container::new(serde_json::json!({
            "kind": "params",
            "spec": spec,
            "layout": self.layout,
        }));
        c.push("params", self.to_flat());
        c
    }

    /// Restores parameters, checking the stored layout against `spec`.
    pub fn from_container(c: &Container, spec: &MlpSpec) -> Result<Self> {
        let layout: Vec<TensorInfo> = serde_json::from_value(c.meta["layout"].clone())
            .map_err(|e| Error::Format(format!("layout: {e}")))?;
        if layout != spec.layout() {
            return Err(Error::Format(
                "stored layout does not match the network spec".into(),
            ));
        }
        Self::from_flat(layout, c.section("params")?)
    }
}
