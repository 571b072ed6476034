//! BN, ReLU and dense sub-layers with exact backward passes, and the
//! composite BN -> ReLU -> dense layer that every residual branch is built from.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{shape_mismatch, Error, Result};
use crate::numerics::{batch_mean, batch_var, Batch};

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-feature affine parameters of a batch-normalization sub-layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub epsilon: f64,
}

impl BnParams {
    /// gamma = 1, beta = 0.
    pub fn identity(n_features: usize) -> Self {
        BnParams {
            gamma: Array1::ones(n_features),
            beta: Array1::zeros(n_features),
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn n_features(&self) -> usize {
        self.gamma.len()
    }
}

/// Batch statistics and normalized activations from one `bn_forward` call.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
    /// sqrt(var + epsilon)
    pub std: Array1<f64>,
    /// Normalized input, zero batch mean and (near) unit batch variance per feature.
    pub xhat: Batch,
}

pub fn bn_forward(x: &Batch, p: &BnParams) -> Result<(Batch, BnCache)> {
    if x.n_features() != p.n_features() {
        return Err(shape_mismatch(
            "bn_forward",
            &[x.batch_size(), p.n_features()],
            &x.shape(),
        ));
    }
    if !(p.epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bn epsilon must be positive, got {}",
            p.epsilon
        )));
    }
    let mean = batch_mean(x);
    let var = batch_var(x)?;
    let std = var.mapv(|v| (v + p.epsilon).sqrt());
    let xhat = (x.data() - &mean) / &std;
    let out = &xhat * &p.gamma + &p.beta;
    Ok((
        Batch::new(out)?,
        BnCache {
            mean,
            var,
            std,
            xhat: Batch::new(xhat)?,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct BnGrads {
    pub dx: Batch,
    pub dgamma: Array1<f64>,
    pub dbeta: Array1<f64>,
}

/// dx = (gamma / std) * ((dz - E[dz]) - xhat * E[dz * xhat]), expectations over the batch.
pub fn bn_backward(dz: &Batch, cache: &BnCache, p: &BnParams) -> Result<BnGrads> {
    dz.check_shape("bn_backward", cache.xhat.shape())?;
    let xhat = cache.xhat.data();
    let m = dz.batch_size() as f64;
    let dz_d = dz.data();
    let dbeta = dz_d.sum_axis(Axis(0));
    let dgamma = (dz_d * xhat).sum_axis(Axis(0));
    let mean_dz = &dbeta / m;
    let mean_dz_xhat = &dgamma / m;
    let scale = &p.gamma / &cache.std;
    let dx = ((dz_d - &mean_dz) - xhat * &mean_dz_xhat) * &scale;
    Ok(BnGrads {
        dx: Batch::new(dx)?,
        dgamma,
        dbeta,
    })
}

/// Records which entries were strictly positive on the forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReluMask(pub Array2<bool>);

pub fn relu_forward(x: &Batch) -> (Batch, ReluMask) {
    let mask = x.data().mapv(|v| v > 0.0);
    let out = x.data().mapv(|v| if v > 0.0 { v } else { 0.0 });
    (Batch::new(out).expect("same shape"), ReluMask(mask))
}

pub fn relu_backward(dy: &Batch, mask: &ReluMask) -> Result<Batch> {
    let shape = [mask.0.nrows(), mask.0.ncols()];
    dy.check_shape("relu_backward", shape)?;
    let mut out = dy.data().clone();
    Zip::from(&mut out).and(&mask.0).for_each(|g, &on| {
        if !on {
            *g = 0.0;
        }
    });
    Batch::new(out)
}

/// Weight matrix of shape (n_out, n_in); y = x W^T per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: Array2<f64>,
}

impl DenseParams {
    pub fn new(weights: Array2<f64>) -> Self {
        DenseParams { weights }
    }

    pub fn n_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.weights.ncols()
    }
}

pub fn dense_forward(x: &Batch, w: &DenseParams) -> Result<Batch> {
    if x.n_features() != w.n_in() {
        return Err(shape_mismatch(
            "dense_forward",
            &[x.batch_size(), w.n_in()],
            &x.shape(),
        ));
    }
    Batch::new(x.data().dot(&w.weights.t()))
}

/// Returns (dx, dw) where dx = dy W and dw is the batch sum of outer(dy, x).
pub fn dense_backward(dy: &Batch, input: &Batch, w: &DenseParams) -> Result<(Batch, Array2<f64>)> {
    dy.check_shape("dense_backward", [input.batch_size(), w.n_out()])?;
    if input.n_features() != w.n_in() {
        return Err(shape_mismatch(
            "dense_backward",
            &[input.batch_size(), w.n_in()],
            &input.shape(),
        ));
    }
    let dx = dy.data().dot(&w.weights);
    let dw = dy.data().t().dot(input.data());
    Ok((Batch::new(dx)?, dw))
}

/// One BN -> ReLU -> dense layer. Without BN params it degrades to ReLU -> dense.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub bn: Option<BnParams>,
    pub dense: DenseParams,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    pub bn: Option<BnCache>,
    pub mask: ReluMask,
    /// ReLU output, the input of the dense sub-layer.
    pub activation: Batch,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub dx: Batch,
    /// Gradient arriving at the BN output (the ReLU input).
    pub d_pre_relu: Batch,
    pub dgamma: Option<Array1<f64>>,
    pub dbeta: Option<Array1<f64>>,
    pub dw: Array2<f64>,
}

impl Layer {
    pub fn n_in(&self) -> usize {
        self.dense.n_in()
    }

    pub fn n_out(&self) -> usize {
        self.dense.n_out()
    }

    pub fn forward(&self, x: &Batch) -> Result<(Batch, LayerCache)> {
        layer_forward(x, self.bn.as_ref(), &self.dense)
    }

    pub fn backward(&self, dy: &Batch, cache: &LayerCache) -> Result<LayerGrads> {
        layer_backward(dy, cache, self.bn.as_ref(), &self.dense)
    }
}

pub fn layer_forward(
    x: &Batch,
    bn: Option<&BnParams>,
    w: &DenseParams,
) -> Result<(Batch, LayerCache)> {
    let (normalized, bn_cache) = match bn {
        Some(p) => {
            let (out, c) = bn_forward(x, p)?;
            (out, Some(c))
        }
        None => (x.clone(), None),
    };
    let (activation, mask) = relu_forward(&normalized);
    let out = dense_forward(&activation, w)?;
    Ok((
        out,
        LayerCache {
            bn: bn_cache,
            mask,
            activation,
        },
    ))
}

pub fn layer_backward(
    dy: &Batch,
    cache: &LayerCache,
    bn: Option<&BnParams>,
    w: &DenseParams,
) -> Result<LayerGrads> {
    let (d_act, dw) = dense_backward(dy, &cache.activation, w)?;
    let d_pre_relu = relu_backward(&d_act, &cache.mask)?;
    match (bn, &cache.bn) {
        (Some(p), Some(c)) => {
            let g = bn_backward(&d_pre_relu, c, p)?;
            Ok(LayerGrads {
                dx: g.dx,
                d_pre_relu,
                dgamma: Some(g.dgamma),
                dbeta: Some(g.dbeta),
                dw,
            })
        }
        (None, None) => Ok(LayerGrads {
            dx: d_pre_relu.clone(),
            d_pre_relu,
            dgamma: None,
            dbeta: None,
            dw,
        }),
        _ => Err(Error::InvalidArgument(
            "layer cache does not match the layer's BN configuration".into(),
        )),
    }
}
