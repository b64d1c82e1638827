//! Tanh multilayer perceptrons with optional Fourier-feature inputs.

mod params;

use serde::{Deserialize, Serialize};

pub use params::{ParamSet, TensorInfo, TensorKind};

use crate::autodiff::Tensor;
use crate::mathcore::{Matrix, Rng};
use crate::{Error, Result};

/// One periodically embedded input axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddedAxis {
    pub axis: usize,
    pub period: f64,
}

/// Replaces each listed axis `x` by `cos(kωx), sin(kωx)` for `k = 1..=modes`,
/// `ω = 2π/period`, which makes the network exactly periodic in `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierEmbedding {
    pub modes: usize,
    pub axes: Vec<EmbeddedAxis>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_depth: usize,
    pub output_dim: usize,
    #[serde(default)]
    pub embedding: Option<FourierEmbedding>,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_width: usize,
        hidden_depth: usize,
        output_dim: usize,
    ) -> Self {
        Self {
            input_dim,
            hidden_width,
            hidden_depth,
            output_dim,
            embedding: None,
        }
    }

    pub fn with_embedding(mut self, embedding: FourierEmbedding) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.input_dim == 0 || self.output_dim == 0 {
            return bad("input and output dimensions must be positive".into());
        }
        if self.hidden_depth == 0 || self.hidden_width == 0 {
            return bad(format!(
                "hidden depth and width must be at least 1 (got {} x {})",
                self.hidden_depth, self.hidden_width
            ));
        }
        if let Some(e) = &self.embedding {
            if e.modes == 0 {
                return bad("Fourier embedding needs at least one mode".into());
            }
            for a in &e.axes {
                if a.axis >= self.input_dim {
                    return bad(format!("embedded axis {} out of range", a.axis));
                }
                if !(a.period > 0.0 && a.period.is_finite()) {
                    return bad(format!("period of axis {} must be positive", a.axis));
                }
            }
            let mut seen: Vec<usize> = e.axes.iter().map(|a| a.axis).collect();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return bad("an axis is embedded twice".into());
            }
        }
        Ok(())
    }

    fn embedded_period(&self, axis: usize) -> Option<f64> {
        self.embedding
            .as_ref()
            .and_then(|e| e.axes.iter().find(|a| a.axis == axis).map(|a| a.period))
    }

    /// Width of the first layer's input after embedding.
    pub fn feature_dim(&self) -> usize {
        let modes = self.embedding.as_ref().map_or(0, |e| e.modes);
        (0..self.input_dim)
            .map(|i| {
                if self.embedded_period(i).is_some() {
                    2 * modes
                } else {
                    1
                }
            })
            .sum()
    }

    /// Tensor layout `[W0, b0, W1, b1, …]`, weights stored out×in.
    pub fn layout(&self) -> Vec<TensorInfo> {
        let mut dims = vec![self.feature_dim()];
        dims.extend(std::iter::repeat_n(self.hidden_width, self.hidden_depth));
        dims.push(self.output_dim);
        let mut out = Vec::new();
        let mut offset = 0;
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            out.push(TensorInfo {
                name: format!("layer{l}.weight"),
                kind: TensorKind::Matrix,
                rows: fan_out,
                cols: fan_in,
                offset,
            });
            offset += fan_in * fan_out;
            out.push(TensorInfo {
                name: format!("layer{l}.bias"),
                kind: TensorKind::Vector,
                rows: 1,
                cols: fan_out,
                offset,
            });
            offset += fan_out;
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(TensorInfo::len).sum()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_glorot(spec: &MlpSpec, rng: &mut Rng) -> ParamSet {
    let mut params = ParamSet::zeros(spec.layout());
    let layout = params.layout().to_vec();
    for (info, t) in layout.iter().zip(params.tensors_mut()) {
        if info.kind == TensorKind::Matrix {
            let bound = (6.0 / (info.rows + info.cols) as f64).sqrt();
            for v in t.as_mut_slice() {
                *v = rng.uniform(-bound, bound);
            }
        }
    }
    params
}

/// Network output for inputs `x` (rows are points, `input_dim` columns).
///
/// Generic over the value type, so the same code evaluates plain matrices,
/// tape variables, and jets of either.
pub fn forward<T: Tensor>(spec: &MlpSpec, weights: &[T::Weight], x: &T) -> Result<T> {
    if x.ncols() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "network expects {} input columns, got {}",
            spec.input_dim,
            x.ncols()
        )));
    }
    let n_layers = spec.hidden_depth + 1;
    if weights.len() != 2 * n_layers {
        return Err(Error::Dimension(format!(
            "expected {} parameter tensors, got {}",
            2 * n_layers,
            weights.len()
        )));
    }
    let mut h = match &spec.embedding {
        Some(e) if !e.axes.is_empty() => {
            let mut features = Vec::new();
            for i in 0..spec.input_dim {
                let xi = x.col(i);
                match spec.embedded_period(i) {
                    Some(period) => {
                        let omega = 2.0 * std::f64::consts::PI / period;
                        for k in 1..=e.modes {
                            let arg = xi.scale(k as f64 * omega);
                            features.push(arg.cos());
                            features.push(arg.sin());
                        }
                    }
                    None => features.push(xi),
                }
            }
            T::concat_cols(&features)
        }
        _ => x.clone(),
    };
    for l in 0..n_layers {
        h = h.linear(&weights[2 * l]).add_bias(&weights[2 * l + 1]);
        if l + 1 < n_layers {
            h = h.tanh();
        }
    }
    Ok(h)
}

/// Plain evaluation on a batch of points.
pub fn predict(spec: &MlpSpec, params: &ParamSet, x: &Matrix) -> Result<Matrix> {
    forward(spec, params.tensors(), x)
}
