use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Affine,
    Relu,
    Tanh,
    Softplus,
    SetMaxPool,
    /// Appends a side vector of width `fan_out - fan_in` to every row.
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerSpec {
    pub fn affine(fan_in: usize, fan_out: usize) -> Self {
        Self { kind: LayerKind::Affine, fan_in, fan_out }
    }

    pub fn elementwise(kind: LayerKind, width: usize) -> Self {
        Self { kind, fan_in: width, fan_out: width }
    }

    pub fn set_max_pool(width: usize) -> Self {
        Self::elementwise(LayerKind::SetMaxPool, width)
    }

    pub fn concat(input: usize, side: usize) -> Self {
        Self { kind: LayerKind::Concat, fan_in: input, fan_out: input + side }
    }
}

/// Named trainable values with a same-shape gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl ParameterBlock {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { name: name.into(), shape, values: vec![0.0; len], grad: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.clear();
        self.grad.resize(self.values.len(), 0.0);
    }
}

#[derive(Debug, Clone)]
enum Cache {
    Affine { input: Array2<f64> },
    Relu { input: Array2<f64> },
    Tanh { output: Array2<f64> },
    Softplus { input: Array2<f64> },
    Pool { argmax: Vec<usize>, rows: usize },
    Concat { rows: usize, width: usize },
}

/// Intermediate values of one forward pass, consumed by
/// [`Network::backward_into`].
#[derive(Debug, Clone)]
pub struct Tape {
    caches: Vec<Cache>,
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub input: Array2<f64>,
    pub side: Option<Array1<f64>>,
    /// One entry per parameter block, aligned with [`Network::blocks`].
    pub params: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    name: String,
    layers: Vec<LayerSpec>,
    params: Vec<ParameterBlock>,
    /// For each layer, the index of its weight block (bias is the next one).
    param_of: Vec<Option<usize>>,
}

impl Network {
    /// Builds a chain with Glorot-uniform weights (`±sqrt(6 / (in + out))`)
    /// and zero biases.
    pub fn new<R: Rng + ?Sized>(name: impl Into<String>, layers: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let name = name.into();
        let mut params = Vec::new();
        let mut param_of = Vec::with_capacity(layers.len());
        for (i, spec) in layers.iter().enumerate() {
            let tag = format!("{name}.{i}");
            if spec.fan_in == 0 || spec.fan_out == 0 {
                return Err(Error::Shape { layer: tag, message: "zero width".into() });
            }
            if let Some(prev) = i.checked_sub(1).map(|p| layers[p]) {
                if prev.fan_out != spec.fan_in {
                    return Err(Error::Shape {
                        layer: tag,
                        message: format!("expects {} inputs but previous layer emits {}", spec.fan_in, prev.fan_out),
                    });
                }
            }
            match spec.kind {
                LayerKind::Affine => {
                    let limit = (6.0 / (spec.fan_in + spec.fan_out) as f64).sqrt();
                    let mut w = ParameterBlock::zeros(format!("{tag}.weight"), vec![spec.fan_in, spec.fan_out]);
                    for v in &mut w.values {
                        *v = rng.random_range(-limit..limit);
                    }
                    param_of.push(Some(params.len()));
                    params.push(w);
                    params.push(ParameterBlock::zeros(format!("{tag}.bias"), vec![spec.fan_out]));
                }
                LayerKind::Concat => {
                    if spec.fan_out <= spec.fan_in {
                        return Err(Error::Shape { layer: tag, message: "concat must widen its input".into() });
                    }
                    param_of.push(None);
                }
                _ => {
                    if spec.fan_in != spec.fan_out {
                        return Err(Error::Shape { layer: tag, message: "elementwise layer must keep width".into() });
                    }
                    param_of.push(None);
                }
            }
        }
        Ok(Self { name, layers, params, param_of })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.fan_in)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    /// Width of the side vector expected by the concat layer, if any.
    pub fn side_width(&self) -> Option<usize> {
        self.layers
            .iter()
            .find(|l| l.kind == LayerKind::Concat)
            .map(|l| l.fan_out - l.fan_in)
    }

    pub fn blocks(&self) -> &[ParameterBlock] {
        &self.params
    }

    pub fn blocks_mut(&mut self) -> &mut [ParameterBlock] {
        &mut self.params
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|b| vec![0.0; b.len()]).collect()
    }

    /// Sets the last affine layer's weights and bias to zero, making the
    /// network output identically zero.
    pub fn zero_output_layer(&mut self) {
        if let Some(w) = self.param_of.iter().rev().flatten().next().copied() {
            self.params[w].values.iter_mut().for_each(|v| *v = 0.0);
            self.params[w + 1].values.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn tag(&self, i: usize) -> String {
        format!("{}.{i}:{:?}", self.name, self.layers[i].kind)
    }

    fn weight(&self, layer: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let w = self.param_of[layer].expect("affine layer");
        let spec = self.layers[layer];
        (
            ArrayView2::from_shape((spec.fan_in, spec.fan_out), &self.params[w].values).expect("weight shape"),
            ArrayView1::from(&self.params[w + 1].values[..]),
        )
    }

    pub fn forward(&self, input: ArrayView2<f64>, side: Option<ArrayView1<f64>>) -> Result<Array2<f64>> {
        self.run(input, side, false).map(|(out, _)| out)
    }

    pub fn forward_recorded(
        &self,
        input: ArrayView2<f64>,
        side: Option<ArrayView1<f64>>,
    ) -> Result<(Array2<f64>, Tape)> {
        self.run(input, side, true)
    }

    fn run(&self, input: ArrayView2<f64>, side: Option<ArrayView1<f64>>, record: bool) -> Result<(Array2<f64>, Tape)> {
        let mut caches = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        let mut x = input.to_owned();
        for (i, spec) in self.layers.iter().enumerate() {
            if x.ncols() != spec.fan_in {
                return Err(Error::Shape {
                    layer: self.tag(i),
                    message: format!("expected {} columns, got {}", spec.fan_in, x.ncols()),
                });
            }
            if x.nrows() == 0 {
                return Err(Error::Shape { layer: self.tag(i), message: "empty input".into() });
            }
            x = match spec.kind {
                LayerKind::Affine => {
                    let (w, b) = self.weight(i);
                    let mut out = x.dot(&w);
                    out += &b;
                    if record {
                        caches.push(Cache::Affine { input: x });
                    }
                    out
                }
                LayerKind::Relu => {
                    let out = x.mapv(|v| v.max(0.0));
                    if record {
                        caches.push(Cache::Relu { input: x });
                    }
                    out
                }
                LayerKind::Tanh => {
                    let out = x.mapv(f64::tanh);
                    if record {
                        caches.push(Cache::Tanh { output: out.clone() });
                    }
                    out
                }
                LayerKind::Softplus => {
                    let out = x.mapv(softplus);
                    if record {
                        caches.push(Cache::Softplus { input: x });
                    }
                    out
                }
                LayerKind::SetMaxPool => {
                    let mut argmax = vec![0usize; x.ncols()];
                    let mut out = Array2::zeros((1, x.ncols()));
                    for (c, col) in x.axis_iter(Axis(1)).enumerate() {
                        // strict `>` keeps the lowest row on ties
                        let mut best = 0;
                        for r in 1..col.len() {
                            if col[r] > col[best] {
                                best = r;
                            }
                        }
                        argmax[c] = best;
                        out[[0, c]] = col[best];
                    }
                    if record {
                        caches.push(Cache::Pool { argmax, rows: x.nrows() });
                    }
                    out
                }
                LayerKind::Concat => {
                    let width = spec.fan_out - spec.fan_in;
                    let s = side.ok_or_else(|| Error::Shape {
                        layer: self.tag(i),
                        message: "concat layer needs a side vector".into(),
                    })?;
                    if s.len() != width {
                        return Err(Error::Shape {
                            layer: self.tag(i),
                            message: format!("side vector has width {}, expected {width}", s.len()),
                        });
                    }
                    let rows = x.nrows();
                    let mut out = Array2::zeros((rows, spec.fan_out));
                    out.slice_mut(ndarray::s![.., ..spec.fan_in]).assign(&x);
                    out.slice_mut(ndarray::s![.., spec.fan_in..]).assign(&s.broadcast((rows, width)).expect("broadcast"));
                    if record {
                        caches.push(Cache::Concat { rows, width: spec.fan_in });
                    }
                    out
                }
            };
        }
        Ok((x, Tape { caches }))
    }

    /// Backpropagates `upstream` (gradient w.r.t. the output) and adds the
    /// parameter gradients into `grads`. Returns the gradients for the input
    /// matrix and the side vector.
    pub fn backward_into(
        &self,
        tape: &Tape,
        upstream: ArrayView2<f64>,
        grads: &mut [Vec<f64>],
    ) -> Result<(Array2<f64>, Option<Array1<f64>>)> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::Shape { layer: self.name.clone(), message: "tape does not belong to this network".into() });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape { layer: self.name.clone(), message: "gradient buffer has wrong block count".into() });
        }
        let mut g = upstream.to_owned();
        let mut side_grad = None;
        for (i, cache) in tape.caches.iter().enumerate().rev() {
            let spec = self.layers[i];
            if g.ncols() != spec.fan_out {
                return Err(Error::Shape {
                    layer: self.tag(i),
                    message: format!("upstream has {} columns, expected {}", g.ncols(), spec.fan_out),
                });
            }
            g = match cache {
                Cache::Affine { input } => {
                    let w = self.param_of[i].expect("affine layer");
                    {
                        let mut dw = ArrayViewMut2::from_shape((spec.fan_in, spec.fan_out), &mut grads[w][..])
                            .expect("weight grad shape");
                        general_mat_mul(1.0, &input.t(), &g, 1.0, &mut dw);
                    }
                    for (acc, s) in grads[w + 1].iter_mut().zip(g.sum_axis(Axis(0))) {
                        *acc += s;
                    }
                    let (wv, _) = self.weight(i);
                    g.dot(&wv.t())
                }
                Cache::Relu { input } => {
                    ndarray::Zip::from(&mut g).and(input).for_each(|gv, &x| {
                        if x <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                    g
                }
                Cache::Tanh { output } => {
                    ndarray::Zip::from(&mut g).and(output).for_each(|gv, &y| *gv *= 1.0 - y * y);
                    g
                }
                Cache::Softplus { input } => {
                    ndarray::Zip::from(&mut g).and(input).for_each(|gv, &x| *gv *= sigmoid(x));
                    g
                }
                Cache::Pool { argmax, rows } => {
                    let mut out = Array2::zeros((*rows, argmax.len()));
                    for (c, &r) in argmax.iter().enumerate() {
                        out[[r, c]] = g[[0, c]];
                    }
                    out
                }
                Cache::Concat { rows, width } => {
                    debug_assert_eq!(*rows, g.nrows());
                    side_grad = Some(g.slice(ndarray::s![.., *width..]).sum_axis(Axis(0)));
                    g.slice(ndarray::s![.., ..*width]).to_owned()
                }
            };
        }
        Ok((g, side_grad))
    }

    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<Backward> {
        let mut params = self.zero_grads();
        let (input, side) = self.backward_into(tape, upstream, &mut params)?;
        Ok(Backward { input, side, params })
    }

    /// Adds externally computed gradients into each block's accumulator.
    pub fn accumulate(&mut self, grads: &[Vec<f64>]) {
        for (block, g) in self.params.iter_mut().zip(grads) {
            if block.grad.len() != block.values.len() {
                block.zero_grad();
            }
            for (a, v) in block.grad.iter_mut().zip(g) {
                *a += v;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(ParameterBlock::zero_grad);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn identity_affine_is_a_no_op() {
        let mut net = Network::new("id", vec![LayerSpec::affine(3, 3)], &mut rng()).unwrap();
        let w = &mut net.blocks_mut()[0].values;
        w.iter_mut().enumerate().for_each(|(k, v)| *v = if k % 4 == 0 { 1.0 } else { 0.0 });
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(net.forward(x.view(), None).unwrap(), x);
    }

    #[test]
    fn max_pool_takes_column_max() {
        let net = Network::new("pool", vec![LayerSpec::set_max_pool(2)], &mut rng()).unwrap();
        let x = array![[1.0, 5.0], [3.0, 2.0]];
        assert_eq!(net.forward(x.view(), None).unwrap(), array![[3.0, 5.0]]);
        let swapped = array![[3.0, 2.0], [1.0, 5.0]];
        assert_eq!(net.forward(swapped.view(), None).unwrap(), array![[3.0, 5.0]]);
    }

    #[test]
    fn max_pool_ties_route_to_lowest_row() {
        let net = Network::new("pool", vec![LayerSpec::set_max_pool(1)], &mut rng()).unwrap();
        let x = array![[2.0], [2.0], [1.0]];
        let (_, tape) = net.forward_recorded(x.view(), None).unwrap();
        let b = net.backward(&tape, array![[1.0]].view()).unwrap();
        assert_eq!(b.input, array![[1.0], [0.0], [0.0]]);
    }

    #[test]
    fn affine_quadratic_loss_closed_form() {
        // L = |Wx + b - t|^2, dL/dW = 2 x (Wx + b - t)^T in row-vector layout
        let net = Network::new("aff", vec![LayerSpec::affine(3, 2)], &mut rng()).unwrap();
        let x = array![[0.3, -1.2, 2.0]];
        let t = array![[0.5, -0.25]];
        let (y, tape) = net.forward_recorded(x.view(), None).unwrap();
        let r = &y - &t;
        let b = net.backward(&tape, (2.0 * &r).view()).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let expect = 2.0 * x[[0, i]] * r[[0, j]];
                assert!((b.params[0][i * 2 + j] - expect).abs() < 1e-14);
            }
        }
        for j in 0..2 {
            assert!((b.params[1][j] - 2.0 * r[[0, j]]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Network::new(
            "mlp",
            vec![
                LayerSpec::concat(3, 2),
                LayerSpec::affine(5, 8),
                LayerSpec::elementwise(LayerKind::Softplus, 8),
                LayerSpec::set_max_pool(8),
                LayerSpec::affine(8, 4),
            ],
            &mut rng(),
        )
        .unwrap();
        let x = Array::from_shape_fn((6, 3), |(i, j)| (i * 3 + j) as f64 * 0.1 - 0.5);
        let (_, tape) = net.forward_recorded(x.view(), Some(array![0.2, -0.3].view())).unwrap();
        let b = net.backward(&tape, Array2::zeros((1, 4)).view()).unwrap();
        assert!(b.params.iter().flatten().all(|&g| g == 0.0));
        assert!(b.input.iter().all(|&g| g == 0.0));
        assert!(b.side.unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let err = Network::new("bad", vec![LayerSpec::affine(3, 4), LayerSpec::affine(5, 1)], &mut rng()).unwrap_err();
        assert!(err.to_string().contains("bad.1"), "{err}");
        let net = Network::new("n", vec![LayerSpec::affine(3, 4)], &mut rng()).unwrap();
        let err = net.forward(Array2::zeros((2, 2)).view(), None).unwrap_err();
        assert!(err.to_string().contains("n.0:Affine"), "{err}");
        let cat = Network::new("c", vec![LayerSpec::concat(2, 1)], &mut rng()).unwrap();
        assert!(cat.forward(Array2::zeros((2, 2)).view(), None).is_err());
    }

    #[test]
    fn tape_from_another_network_is_rejected() {
        let a = Network::new("a", vec![LayerSpec::affine(2, 2)], &mut rng()).unwrap();
        let b = Network::new("b", vec![LayerSpec::affine(2, 2), LayerSpec::elementwise(LayerKind::Tanh, 2)], &mut rng()).unwrap();
        let (_, tape) = a.forward_recorded(Array2::zeros((1, 2)).view(), None).unwrap();
        assert!(b.backward(&tape, Array2::zeros((1, 2)).view()).is_err());
    }

    #[test]
    fn glorot_init_bounds() {
        let net = Network::new("g", vec![LayerSpec::affine(10, 6)], &mut rng()).unwrap();
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(net.blocks()[0].values.iter().all(|v| v.abs() <= limit));
        assert!(net.blocks()[1].values.iter().all(|&v| v == 0.0));
    }
}
