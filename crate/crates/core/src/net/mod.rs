//! Lipschitz-constrained fully connected networks.
//!
//! Every layer is an orthonormalized affine map (singular values at most 1)
//! and the activation is GroupSort, which is a per-group permutation, so the
//! whole stack is 1-Lipschitz in L2. A single multiplication by `K` at the
//! output sets the network constant. Biases are left unconstrained.

pub mod bjorck;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::autodiff::groupsort_rows;
use crate::math::matrix::{dist, gemm};
use crate::math::{Graph, Matrix, Rng, Var};

pub use bjorck::{bjorck_orthonormalize, orthonormality_residual};

/// GroupSort activation: each consecutive group sorted in descending order.
pub fn groupsort(v: &[f64], group_size: usize) -> Result<Vec<f64>> {
    if group_size == 0 || v.len() % group_size != 0 {
        return Err(Error::dim(
            "groupsort",
            format!("length {} not divisible by group size {group_size}", v.len()),
        ));
    }
    let (out, _) = groupsort_rows(&Matrix::row_vector(v), group_size);
    Ok(out.into_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthLayer {
    /// Raw `out x in` weight; orthonormalized on every use.
    pub weight: Matrix,
    /// `1 x out` bias row.
    pub bias: Matrix,
    pub bjorck_iterations: usize,
    pub power_iterations: usize,
    /// Safety factor on the spectral-norm estimate.
    pub prescale: f64,
}

impl OrthLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Prescale followed by unrolled Björck, on the tape.
    pub fn effective_weight_graph(&self, g: &mut Graph, w: Var) -> Result<Var> {
        let s = bjorck::prescale(g, w, self.power_iterations, self.prescale)?;
        bjorck::bjorck_graph(g, s, self.bjorck_iterations)
    }
}

/// Network architecture; hidden widths must be divisible by the group size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub group_size: usize,
    pub lipschitz: f64,
    pub bjorck_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzMlp {
    layers: Vec<OrthLayer>,
    group_size: usize,
    lipschitz: f64,
}

/// Leaf handles for one network's parameters on a tape, in layer order.
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
}

/// Orthonormalized weights of a network, ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct EffectiveMlp {
    pub layers: Vec<(Matrix, Matrix)>,
    pub group_size: usize,
    pub lipschitz: f64,
}

/// Random matrix with orthonormal columns (tall) or rows (wide).
pub fn orthonormal_init(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let tall = rows >= cols;
    let (n, k) = if tall { (rows, cols) } else { (cols, rows) };
    // k vectors of length n, stored as rows of `basis`.
    let mut basis: Vec<Vec<f64>> = (0..k).map(|_| rng.gaussian(n)).collect();
    for j in 0..k {
        for _ in 0..2 {
            for i in 0..j {
                let dot: f64 = basis[j].iter().zip(&basis[i]).map(|(a, b)| a * b).sum();
                let bi = basis[i].clone();
                basis[j].iter_mut().zip(&bi).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let nrm = crate::math::matrix::norm(&basis[j]);
        basis[j].iter_mut().for_each(|a| *a /= nrm);
    }
    let m = Matrix::from_rows(&basis).expect("uniform rows");
    if tall {
        m.transpose()
    } else {
        m
    }
}

impl LipschitzMlp {
    /// Orthogonally initialized weights, zero biases.
    pub fn new(spec: &MlpSpec, rng: &mut Rng) -> Result<Self> {
        if spec.lipschitz <= 0.0 || !spec.lipschitz.is_finite() {
            return Err(Error::contract(format!("Lipschitz constant must be positive, got {}", spec.lipschitz)));
        }
        if spec.group_size == 0 {
            return Err(Error::contract("group size must be at least 1"));
        }
        for &h in &spec.hidden {
            if h % spec.group_size != 0 {
                return Err(Error::dim(
                    "LipschitzMlp::new",
                    format!("hidden width {h} not divisible by group size {}", spec.group_size),
                ));
            }
        }
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.hidden);
        dims.push(spec.output_dim);
        let layers = dims
            .windows(2)
            .map(|w| OrthLayer {
                weight: orthonormal_init(w[1], w[0], rng),
                bias: Matrix::zeros(1, w[1]),
                bjorck_iterations: spec.bjorck_iterations,
                power_iterations: bjorck::POWER_ITERATIONS,
                prescale: bjorck::PRESCALE_SAFETY,
            })
            .collect();
        Ok(LipschitzMlp { layers, group_size: spec.group_size, lipschitz: spec.lipschitz })
    }

    pub fn from_layers(layers: Vec<OrthLayer>, group_size: usize, lipschitz: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("a network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dim("from_layers", format!("layer {i} -> {} shape mismatch", i + 1)));
            }
            if group_size == 0 || pair[0].out_dim() % group_size != 0 {
                return Err(Error::dim(
                    "from_layers",
                    format!("hidden width {} not divisible by group size {group_size}", pair[0].out_dim()),
                ));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.out_dim()) {
                return Err(Error::dim("from_layers", format!("layer {i} bias shape {:?}", l.bias.shape())));
            }
        }
        Ok(LipschitzMlp { layers, group_size, lipschitz })
    }

    pub fn layers(&self) -> &[OrthLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [OrthLayer] {
        &mut self.layers
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, OrthLayer::out_dim)
    }

    /// Input, hidden and output widths.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(OrthLayer::out_dim));
        d
    }

    /// Mutable parameter matrices in a fixed order: weight, bias per layer.
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    /// Registers the parameters on `g`, trainable or not.
    pub fn register(&self, g: &mut Graph, trainable: bool) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (g.param(l.weight.clone()), g.param(l.bias.clone()))
                } else {
                    (g.constant(l.weight.clone()), g.constant(l.bias.clone()))
                }
            })
            .collect();
        MlpVars { layers }
    }

    /// Orthonormalized weights on the tape; errors name the layer.
    pub fn effective_graph(&self, g: &mut Graph, vars: &MlpVars) -> Result<Vec<(Var, Var)>> {
        self.layers
            .iter()
            .zip(&vars.layers)
            .enumerate()
            .map(|(i, (layer, &(w, b)))| {
                let eff = layer.effective_weight_graph(g, w).map_err(|e| match e {
                    Error::Numerical(m) => Error::Numerical(format!("layer {i}: {m}")),
                    other => other,
                })?;
                Ok((eff, b))
            })
            .collect()
    }

    /// Batch forward on the tape; `x` is `batch x input_dim`.
    pub fn apply_graph(&self, g: &mut Graph, eff: &[(Var, Var)], x: Var) -> Result<Var> {
        if g.shape(x).1 != self.input_dim() {
            return Err(Error::dim("forward", format!("input width {} vs {}", g.shape(x).1, self.input_dim())));
        }
        let mut h = x;
        for (i, &(w, b)) in eff.iter().enumerate() {
            let lin = g.matmul_t(h, false, w, true)?;
            h = g.add_bias(lin, b)?;
            if i + 1 < eff.len() {
                h = g.groupsort(h, self.group_size)?;
            }
        }
        Ok(g.scale(h, self.lipschitz))
    }

    /// Computes the orthonormalized weights once for repeated inference.
    pub fn effective(&self) -> Result<EffectiveMlp> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, false);
        let eff = self.effective_graph(&mut g, &vars)?;
        Ok(EffectiveMlp {
            layers: eff.iter().map(|&(w, b)| (g.value(w).clone(), g.value(b).clone())).collect(),
            group_size: self.group_size,
            lipschitz: self.lipschitz,
        })
    }

    /// Single-input forward pass. Re-orthonormalizes on every call; use
    /// [`LipschitzMlp::effective`] for many inputs.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.effective()?.forward_vec(x)
    }

    /// Orthonormality residual of every layer's effective weight.
    pub fn orthonormality_residuals(&self) -> Result<Vec<f64>> {
        Ok(self.effective()?.layers.iter().map(|(w, _)| orthonormality_residual(w)).collect())
    }
}

impl EffectiveMlp {
    pub fn input_dim(&self) -> usize {
        self.layers[0].0.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |(w, _)| w.rows())
    }

    /// Batch forward; same arithmetic as [`LipschitzMlp::apply_graph`].
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("forward", format!("input width {} vs {}", x.cols(), self.input_dim())));
        }
        let mut h = x.clone();
        let n = self.layers.len();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let mut lin = gemm(&h, false, w, true)?;
            let bias = b.as_slice();
            for r in 0..lin.rows() {
                lin.row_mut(r).iter_mut().zip(bias).for_each(|(v, bb)| *v += bb);
            }
            h = if i + 1 < n { groupsort_rows(&lin, self.group_size).0 } else { lin };
        }
        Ok(h.scale(self.lipschitz))
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&Matrix::row_vector(x))?.into_vec())
    }
}

/// Largest `‖f(a_i) − f(b_i)‖ / ‖a_i − b_i‖` over paired rows. Pairs of
/// identical points are skipped; it is an error if every pair is.
pub fn max_pair_ratio(a: &Matrix, b: &Matrix, f: impl Fn(&Matrix) -> Result<Matrix>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::dim("pair check", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let mut best: Option<f64> = None;
    for i in 0..a.rows() {
        let din = dist(a.row(i), b.row(i));
        if din == 0.0 {
            continue;
        }
        let r = dist(fa.row(i), fb.row(i)) / din;
        best = Some(best.map_or(r, |m: f64| m.max(r)));
    }
    best.ok_or_else(|| Error::contract("every pair consists of identical points"))
}

/// Empirical Lipschitz ratio of a network over sampled pairs. This is a
/// lower bound on the true Lipschitz norm.
pub fn lipschitz_pair_check(net: &EffectiveMlp, a: &Matrix, b: &Matrix) -> Result<f64> {
    max_pair_ratio(a, b, |m| net.forward(m))
}
