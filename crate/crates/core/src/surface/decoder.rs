//! Per-patch Softplus MLP decoders.
//!
//! A decoder maps `(d, u, v)` through `H` hidden layers of width `W` with
//! Softplus activations to a linear 3-unit output. Two evaluation routes
//! exist: [`PatchDecoder::decode`] pushes [`Jet2`] values through the network
//! one point at a time, and [`PatchDecoder::forward_batch`] evaluates many
//! points at once with dense matrix products, keeping the intermediate jets
//! so that [`PatchDecoder::backward`] can return weight gradients of any
//! scalar that depends on the output value and its first UV derivatives.

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Codeword, SurfaceError, SurfaceMapping, UvPoint};
use crate::jets::{softplus_sigmoid, Jet2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    /// Latent code length `D`.
    pub code_dim: usize,
    /// Number of hidden layers `H`.
    pub hidden_layers: usize,
    /// Hidden layer width `W`.
    pub width: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            code_dim: 64,
            hidden_layers: 3,
            width: 128,
        }
    }
}

impl Architecture {
    pub fn new(code_dim: usize, hidden_layers: usize, width: usize) -> Result<Self, SurfaceError> {
        if hidden_layers == 0 || width == 0 {
            return Err(SurfaceError::InvalidParameter(format!(
                "need at least one hidden layer of nonzero width, got H={hidden_layers} W={width}"
            )));
        }
        Ok(Self {
            code_dim,
            hidden_layers,
            width,
        })
    }

    /// Number of weights and biases in one patch decoder.
    pub fn weight_count(&self) -> usize {
        let (d, h, w) = (self.code_dim, self.hidden_layers, self.width);
        (d + 2 + 1) * w + (h - 1) * (w + 1) * w + (w + 1) * 3
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.width, self.code_dim + 2)];
        shapes.extend((1..self.hidden_layers).map(|_| (self.width, self.width)));
        shapes.push((3, self.width));
        shapes
    }
}

/// Fully connected layer, `weights` is `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weights: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDecoder {
    index: usize,
    arch: Architecture,
    layers: Vec<Dense>,
}

/// Which UV derivative slots a batched evaluation carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOrder {
    /// value, ∂/∂u, ∂/∂v
    First,
    /// value, ∂/∂u, ∂/∂v, ∂²/∂u², ∂²/∂u∂v, ∂²/∂v²
    Second,
}

impl JetOrder {
    pub fn slot_count(self) -> usize {
        match self {
            JetOrder::First => 3,
            JetOrder::Second => 6,
        }
    }
}

pub const VAL: usize = 0;
pub const DU: usize = 1;
pub const DV: usize = 2;
pub const DUU: usize = 3;
pub const DUV: usize = 4;
pub const DVV: usize = 5;

/// Jet slots of a layer for a batch of points, each `batch × units`.
#[derive(Debug, Clone)]
pub struct JetBatch {
    pub slots: Vec<Array2<f64>>,
}

/// Everything [`PatchDecoder::backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct DecoderTrace {
    order: JetOrder,
    uv: Array2<f64>,
    pre: Vec<JetBatch>,
    post: Vec<JetBatch>,
    /// Softplus slope σ(z) of each hidden layer.
    sig: Vec<Array2<f64>>,
    output: JetBatch,
}

impl DecoderTrace {
    pub fn len(&self) -> usize {
        self.uv.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn order(&self) -> JetOrder {
        self.order
    }

    pub fn output(&self) -> &JetBatch {
        &self.output
    }

    fn row(&self, slot: usize, i: usize) -> [f64; 3] {
        let a = &self.output.slots[slot];
        [a[[i, 0]], a[[i, 1]], a[[i, 2]]]
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        self.row(VAL, i)
    }

    pub fn d_du(&self, i: usize) -> [f64; 3] {
        self.row(DU, i)
    }

    pub fn d_dv(&self, i: usize) -> [f64; 3] {
        self.row(DV, i)
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    /// Output jets of point `i`; second-order slots are zero for a
    /// first-order trace.
    pub fn jets(&self, i: usize) -> [Jet2; 3] {
        let o = &self.output.slots;
        std::array::from_fn(|c| {
            let g = |s: usize| if s < o.len() { o[s][[i, c]] } else { 0.0 };
            Jet2::new(g(VAL), g(DU), g(DV), g(DUU), g(DUV), g(DVV))
        })
    }
}

/// Weight gradient with the same layout as a [`PatchDecoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderGrad {
    pub layers: Vec<Dense>,
}

impl DecoderGrad {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            layers: arch
                .layer_shapes()
                .into_iter()
                .map(|(o, i)| Dense::zeros(o, i))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &DecoderGrad) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }
}

/// Initializes a decoder with fan-in scaled uniform weights.
///
/// Weights are drawn from `U(-√(6/fan_in), √(6/fan_in))`, biases from
/// `U(-1/√fan_in, 1/√fan_in)`. Each patch index uses its own stream of the
/// seeded generator.
pub fn init_decoder(seed: u64, arch: Architecture, index: usize) -> PatchDecoder {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let layers = arch
        .layer_shapes()
        .into_iter()
        .map(|(out, inp)| {
            let w_bound = (6.0 / inp as f64).sqrt();
            let b_bound = 1.0 / (inp as f64).sqrt();
            let weights =
                Array2::from_shape_simple_fn((out, inp), || rng.random_range(-w_bound..w_bound));
            let bias = Array1::from_shape_simple_fn(out, || rng.random_range(-b_bound..b_bound));
            Dense { weights, bias }
        })
        .collect();
    PatchDecoder {
        index,
        arch,
        layers,
    }
}

fn activate(z: &JetBatch) -> (JetBatch, Array2<f64>) {
    let second = z.slots.len() == 6;
    let dim = z.slots[VAL].raw_dim();
    let n = z.slots[VAL].len();
    let zs: Vec<&[f64]> = z
        .slots
        .iter()
        .map(|a| a.as_slice().expect("standard layout"))
        .collect();
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; n]; z.slots.len()];
    let mut sig = vec![0.0; n];
    for i in 0..n {
        let (sp, s) = softplus_sigmoid(zs[VAL][i]);
        sig[i] = s;
        let (zu, zv) = (zs[DU][i], zs[DV][i]);
        out[VAL][i] = sp;
        out[DU][i] = s * zu;
        out[DV][i] = s * zv;
        if second {
            let sp = s * (1.0 - s);
            out[DUU][i] = sp * zu * zu + s * zs[DUU][i];
            out[DUV][i] = sp * zu * zv + s * zs[DUV][i];
            out[DVV][i] = sp * zv * zv + s * zs[DVV][i];
        }
    }
    let slots = out
        .into_iter()
        .map(|v| Array2::from_shape_vec(dim, v).expect("shape"))
        .collect();
    (
        JetBatch { slots },
        Array2::from_shape_vec(dim, sig).expect("shape"),
    )
}

impl PatchDecoder {
    /// A decoder whose weights and biases are all zero.
    pub fn zeroed(arch: Architecture, index: usize) -> Self {
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| Dense::zeros(o, i))
            .collect();
        Self {
            index,
            arch,
            layers,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Parameter slices in serialization order: per layer, weights then bias.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    fn check_code(&self, code: &Codeword) -> Result<(), SurfaceError> {
        if code.len() != self.arch.code_dim {
            return Err(SurfaceError::DimensionMismatch {
                expected: self.arch.code_dim,
                found: code.len(),
            });
        }
        Ok(())
    }

    /// Evaluates one point with second-order jets.
    pub fn decode(&self, code: &Codeword, uv: UvPoint) -> Result<[Jet2; 3], SurfaceError> {
        self.check_code(code)?;
        if !uv.in_domain() {
            return Err(SurfaceError::OutOfDomain { u: uv.u, v: uv.v });
        }
        let mut x: Vec<Jet2> = code
            .as_slice()
            .iter()
            .map(|&c| Jet2::constant(c))
            .chain([Jet2::seed_u(uv.u), Jet2::seed_v(uv.v)])
            .collect();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            x = layer
                .weights
                .outer_iter()
                .zip(layer.bias.iter())
                .map(|(row, &b)| {
                    let mut acc = Jet2::constant(b);
                    for (&w, xi) in row.iter().zip(&x) {
                        acc += xi.scale(w);
                    }
                    if l == last {
                        acc
                    } else {
                        acc.softplus()
                    }
                })
                .collect();
        }
        Ok([x[0], x[1], x[2]])
    }

    /// Evaluates a batch of points, keeping the intermediate jets.
    pub fn forward_batch(
        &self,
        code: &Codeword,
        uvs: &[UvPoint],
        order: JetOrder,
    ) -> Result<DecoderTrace, SurfaceError> {
        self.check_code(code)?;
        if let Some(p) = uvs.iter().find(|p| !p.in_domain()) {
            return Err(SurfaceError::OutOfDomain { u: p.u, v: p.v });
        }
        let n = uvs.len();
        let d = self.arch.code_dim;
        let uv = Array2::from_shape_fn((n, 2), |(i, c)| if c == 0 { uvs[i].u } else { uvs[i].v });

        let first = &self.layers[0];
        let code_arr = Array1::from(code.as_slice().to_vec());
        let base = &first.bias + &first.weights.slice(s![.., ..d]).dot(&code_arr);
        let wu = first.weights.column(d);
        let wv = first.weights.column(d + 1);
        let width = first.weights.nrows();

        let mut slots = Vec::with_capacity(order.slot_count());
        slots.push(Array2::from_shape_fn((n, width), |(i, j)| {
            base[j] + uvs[i].u * wu[j] + uvs[i].v * wv[j]
        }));
        slots.push(Array2::from_shape_fn((n, width), |(_, j)| wu[j]));
        slots.push(Array2::from_shape_fn((n, width), |(_, j)| wv[j]));
        if order == JetOrder::Second {
            for _ in 0..3 {
                slots.push(Array2::zeros((n, width)));
            }
        }
        let mut pre = vec![JetBatch { slots }];
        let (h, s0) = activate(&pre[0]);
        let mut post = vec![h];
        let mut sig = vec![s0];

        for layer in &self.layers[1..] {
            let x = post.last().expect("at least one hidden layer");
            let wt = layer.weights.t();
            let mut slots: Vec<Array2<f64>> = x.slots.iter().map(|a| a.dot(&wt)).collect();
            slots[VAL] += &layer.bias;
            let z = JetBatch { slots };
            if pre.len() == self.arch.hidden_layers {
                return Ok(DecoderTrace {
                    order,
                    uv,
                    pre,
                    post,
                    sig,
                    output: z,
                });
            }
            let (h, s) = activate(&z);
            post.push(h);
            sig.push(s);
            pre.push(z);
        }
        unreachable!("decoder has an output layer")
    }

    /// Reverse pass: given d(loss)/d(output value), d(loss)/d(∂output/∂u) and
    /// d(loss)/d(∂output/∂v) for every traced point (`batch × 3` each), returns
    /// the weight gradient and the gradient with respect to the codeword.
    pub fn backward(
        &self,
        code: &Codeword,
        trace: &DecoderTrace,
        grad_out: [&Array2<f64>; 3],
    ) -> Result<(DecoderGrad, Vec<f64>), SurfaceError> {
        self.check_code(code)?;
        let n = trace.len();
        for g in grad_out {
            if g.dim() != (n, 3) {
                return Err(SurfaceError::DimensionMismatch {
                    expected: n * 3,
                    found: g.len(),
                });
            }
        }
        let d = self.arch.code_dim;
        let mut grad = DecoderGrad::zeros(&self.arch);
        let mut g: [Array2<f64>; 3] = [
            grad_out[0].clone(),
            grad_out[1].clone(),
            grad_out[2].clone(),
        ];
        let last = self.layers.len() - 1;
        let mut code_grad = vec![0.0; d];

        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            if l < last {
                // through the Softplus: h = sp(z), h_u = σ(z) z_u, h_v = σ(z) z_v
                let z = &trace.pre[l];
                let [mut gz, mut gzu, mut gzv] = g;
                Zip::from(&mut gz)
                    .and(&mut gzu)
                    .and(&mut gzv)
                    .and(&trace.sig[l])
                    .and(&z.slots[DU])
                    .and(&z.slots[DV])
                    .for_each(|a, au, av, &s, &zu, &zv| {
                        let sp = s * (1.0 - s);
                        *a = *a * s + sp * (*au * zu + *av * zv);
                        *au *= s;
                        *av *= s;
                    });
                g = [gz, gzu, gzv];
            }
            let gl = &mut grad.layers[l];
            if l > 0 {
                let x = &trace.post[l - 1];
                gl.weights = g[VAL].t().dot(&x.slots[VAL])
                    + g[DU].t().dot(&x.slots[DU])
                    + g[DV].t().dot(&x.slots[DV]);
                gl.bias = g[VAL].sum_axis(Axis(0));
                g = [
                    g[VAL].dot(&layer.weights),
                    g[DU].dot(&layer.weights),
                    g[DV].dot(&layer.weights),
                ];
            } else {
                let col = g[VAL].sum_axis(Axis(0));
                let cu = g[DU].sum_axis(Axis(0));
                let cv = g[DV].sum_axis(Axis(0));
                let gu = g[VAL].t().dot(&trace.uv.column(0));
                let gv = g[VAL].t().dot(&trace.uv.column(1));
                let c = code.as_slice();
                for j in 0..col.len() {
                    for (k, &ck) in c.iter().enumerate() {
                        gl.weights[[j, k]] = col[j] * ck;
                    }
                    gl.weights[[j, d]] = gu[j] + cu[j];
                    gl.weights[[j, d + 1]] = gv[j] + cv[j];
                }
                for (k, cg) in code_grad.iter_mut().enumerate() {
                    *cg = col.dot(&layer.weights.column(k));
                }
                gl.bias = col;
                break;
            }
        }
        Ok((grad, code_grad))
    }
}

impl SurfaceMapping for PatchDecoder {
    fn code_dim(&self) -> Option<usize> {
        Some(self.arch.code_dim)
    }

    fn evaluate(&self, code: &Codeword, uv: UvPoint) -> Result<[Jet2; 3], SurfaceError> {
        self.decode(code, uv)
    }
}
