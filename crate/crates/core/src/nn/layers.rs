//! Layer stack with per-example forward and backward passes.
//!
//! Activations are laid out channel-major: `(channel, time, coefficient)`
//! flattened row-major. Convolutions use valid padding and are followed by
//! ReLU; pooling is non-overlapping max pooling that drops a ragged edge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer description before shapes are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv { filters: usize, kernel: (usize, usize), stride: (usize, usize) },
    MaxPool { size: (usize, usize) },
    Dense { units: usize, relu: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub out_h: usize,
    pub out_w: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pool {
    pub c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub ph: usize,
    pub pw: usize,
    pub out_h: usize,
    pub out_w: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub inp: usize,
    pub out: usize,
    pub relu: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Conv(Conv),
    Pool(Pool),
    Dense(Dense),
}

impl Layer {
    fn output_len(&self) -> usize {
        match self {
            Layer::Conv(c) => c.out_c * c.out_h * c.out_w,
            Layer::Pool(p) => p.c * p.out_h * p.out_w,
            Layer::Dense(d) => d.out,
        }
    }
}

/// Name, shape and prunability of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// Weight tensors are prunable, bias vectors are not.
    pub is_weight: bool,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: (usize, usize),
    layers: Vec<Layer>,
    tensors: Vec<TensorInfo>,
}

/// Activations recorded by a forward pass, needed for backpropagation.
pub(crate) struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Flat input index chosen by each pooling output.
    argmax: Vec<Vec<usize>>,
}

impl Trace {
    pub(crate) fn logits(&self) -> &[f64] {
        self.acts.last().expect("nonempty")
    }
}

fn fit(extent: usize, available: usize, clamp: bool, what: &str) -> Result<usize> {
    if extent <= available {
        Ok(extent)
    } else if clamp {
        Ok(available)
    } else {
        Err(Error::Shape(format!("{what} extent {extent} exceeds input extent {available}")))
    }
}

impl Network {
    /// Resolves shapes for a single-channel `(frames, coeffs)` input.
    ///
    /// With `clamp` set, kernels and pooling windows after the first layer
    /// shrink to fit the incoming map; otherwise an oversized window is a
    /// shape error. The first layer never clamps.
    pub fn new(input_shape: (usize, usize), specs: &[LayerSpec], clamp: bool) -> Result<Self> {
        let (h0, w0) = input_shape;
        if h0 == 0 || w0 == 0 {
            return Err(Error::Shape("empty input shape".into()));
        }
        let (mut c, mut h, mut w) = (1usize, h0, w0);
        let mut flat: Option<usize> = None;
        let mut layers = Vec::with_capacity(specs.len());
        let mut tensors = Vec::new();
        let (mut n_conv, mut n_dense) = (0, 0);
        for (i, spec) in specs.iter().enumerate() {
            let clamp = clamp && i > 0;
            match *spec {
                LayerSpec::Conv { filters, kernel, stride } => {
                    if flat.is_some() {
                        return Err(Error::SpecInvariant("convolution after a dense layer".into()));
                    }
                    if filters == 0 || stride.0 == 0 || stride.1 == 0 || kernel.0 == 0 || kernel.1 == 0 {
                        return Err(Error::SpecInvariant("convolution sizes must be positive".into()));
                    }
                    let kh = fit(kernel.0, h, clamp, "kernel")?;
                    let kw = fit(kernel.1, w, clamp, "kernel")?;
                    let conv = Conv {
                        in_c: c,
                        in_h: h,
                        in_w: w,
                        out_c: filters,
                        kh,
                        kw,
                        sh: stride.0,
                        sw: stride.1,
                        out_h: (h - kh) / stride.0 + 1,
                        out_w: (w - kw) / stride.1 + 1,
                    };
                    n_conv += 1;
                    tensors.push(TensorInfo {
                        name: format!("conv{n_conv}.weight"),
                        shape: vec![filters, c, kh, kw],
                        is_weight: true,
                    });
                    tensors.push(TensorInfo { name: format!("conv{n_conv}.bias"), shape: vec![filters], is_weight: false });
                    (c, h, w) = (filters, conv.out_h, conv.out_w);
                    layers.push(Layer::Conv(conv));
                }
                LayerSpec::MaxPool { size } => {
                    if flat.is_some() {
                        return Err(Error::SpecInvariant("pooling after a dense layer".into()));
                    }
                    if size.0 == 0 || size.1 == 0 {
                        return Err(Error::SpecInvariant("pool sizes must be positive".into()));
                    }
                    let ph = fit(size.0, h, clamp, "pool")?;
                    let pw = fit(size.1, w, clamp, "pool")?;
                    let pool = Pool { c, in_h: h, in_w: w, ph, pw, out_h: h / ph, out_w: w / pw };
                    (h, w) = (pool.out_h, pool.out_w);
                    layers.push(Layer::Pool(pool));
                }
                LayerSpec::Dense { units, relu } => {
                    if units == 0 {
                        return Err(Error::SpecInvariant("dense width must be positive".into()));
                    }
                    let inp = flat.unwrap_or(c * h * w);
                    let last = i + 1 == specs.len();
                    let name = if last && !relu { "output".to_string() } else {
                        n_dense += 1;
                        format!("dense{n_dense}")
                    };
                    tensors.push(TensorInfo { name: format!("{name}.weight"), shape: vec![units, inp], is_weight: true });
                    tensors.push(TensorInfo { name: format!("{name}.bias"), shape: vec![units], is_weight: false });
                    layers.push(Layer::Dense(Dense { inp, out: units, relu }));
                    flat = Some(units);
                }
            }
        }
        if layers.is_empty() {
            return Err(Error::SpecInvariant("network has no layers".into()));
        }
        Ok(Self { input_shape, layers, tensors })
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.0 * self.input_shape.1
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_len)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(TensorInfo::len).sum()
    }

    /// Zero-filled tensors with this network's shapes.
    pub fn zeros(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.len()]).collect()
    }

    pub fn check_params(&self, params: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.tensors.len() {
            return Err(Error::Shape(format!("expected {} tensors, got {}", self.tensors.len(), params.len())));
        }
        for (p, t) in params.iter().zip(&self.tensors) {
            if p.len() != t.len() {
                return Err(Error::Shape(format!("{} has {} values, expected {}", t.name, p.len(), t.len())));
            }
        }
        Ok(())
    }

    /// Forward pass for one example, keeping what backpropagation needs.
    pub(crate) fn forward_trace(&self, params: &[Vec<f64>], input: &[f64]) -> Trace {
        debug_assert_eq!(input.len(), self.input_len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        let mut p = 0;
        for layer in &self.layers {
            let x = acts.last().expect("nonempty");
            let (y, am) = match layer {
                Layer::Conv(c) => {
                    let y = conv_forward(c, &params[p], &params[p + 1], x);
                    p += 2;
                    (y, Vec::new())
                }
                Layer::Pool(pl) => pool_forward(pl, x),
                Layer::Dense(d) => {
                    let y = dense_forward(d, &params[p], &params[p + 1], x);
                    p += 2;
                    (y, Vec::new())
                }
            };
            acts.push(y);
            argmax.push(am);
        }
        Trace { acts, argmax }
    }

    /// Logits for one example.
    pub fn forward_one(&self, params: &[Vec<f64>], input: &[f64]) -> Vec<f64> {
        self.forward_trace(params, input).acts.pop().expect("nonempty")
    }

    /// Adds the parameter gradient for one example to `grads`, given the
    /// gradient of the loss with respect to its logits.
    pub(crate) fn backward(&self, params: &[Vec<f64>], trace: &Trace, dlogits: &[f64], grads: &mut [Vec<f64>]) {
        let mut p = self.tensors.len();
        let mut grad = dlogits.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[l];
            let y = &trace.acts[l + 1];
            let need_dx = l > 0;
            grad = match layer {
                Layer::Conv(c) => {
                    p -= 2;
                    let (gw, rest) = grads[p..].split_at_mut(1);
                    conv_backward(c, &params[p], x, y, &grad, &mut gw[0], &mut rest[0], need_dx)
                }
                Layer::Pool(pl) => pool_backward(pl, &trace.argmax[l], &grad),
                Layer::Dense(d) => {
                    p -= 2;
                    let (gw, rest) = grads[p..].split_at_mut(1);
                    dense_backward(d, &params[p], x, y, &grad, &mut gw[0], &mut rest[0], need_dx)
                }
            };
        }
    }
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn conv_forward(c: &Conv, w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; c.out_c * c.out_h * c.out_w];
    let k_per_out = c.in_c * c.kh * c.kw;
    for o in 0..c.out_c {
        let wo = &w[o * k_per_out..(o + 1) * k_per_out];
        for oy in 0..c.out_h {
            for ox in 0..c.out_w {
                let mut acc = b[o];
                for ci in 0..c.in_c {
                    for i in 0..c.kh {
                        let row = (ci * c.in_h + oy * c.sh + i) * c.in_w + ox * c.sw;
                        let xs = &x[row..row + c.kw];
                        let ws = &wo[(ci * c.kh + i) * c.kw..(ci * c.kh + i + 1) * c.kw];
                        acc += xs.iter().zip(ws).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                y[(o * c.out_h + oy) * c.out_w + ox] = acc;
            }
        }
    }
    relu_in_place(&mut y);
    y
}

#[allow(clippy::too_many_arguments)]
#[allow(clippy::needless_range_loop)]
fn conv_backward(
    c: &Conv,
    w: &[f64],
    x: &[f64],
    y: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Vec<f64> {
    let mut dx = if need_dx { vec![0.0; x.len()] } else { Vec::new() };
    let k_per_out = c.in_c * c.kh * c.kw;
    for o in 0..c.out_c {
        for oy in 0..c.out_h {
            for ox in 0..c.out_w {
                let idx = (o * c.out_h + oy) * c.out_w + ox;
                if y[idx] <= 0.0 {
                    continue;
                }
                let g = dy[idx];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                for ci in 0..c.in_c {
                    for i in 0..c.kh {
                        let row = (ci * c.in_h + oy * c.sh + i) * c.in_w + ox * c.sw;
                        let wrow = o * k_per_out + (ci * c.kh + i) * c.kw;
                        for j in 0..c.kw {
                            dw[wrow + j] += g * x[row + j];
                        }
                        if need_dx {
                            for j in 0..c.kw {
                                dx[row + j] += g * w[wrow + j];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

fn pool_forward(p: &Pool, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = p.c * p.out_h * p.out_w;
    let mut y = Vec::with_capacity(n);
    let mut am = Vec::with_capacity(n);
    for ci in 0..p.c {
        for oy in 0..p.out_h {
            for ox in 0..p.out_w {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for i in 0..p.ph {
                    for j in 0..p.pw {
                        let idx = (ci * p.in_h + oy * p.ph + i) * p.in_w + ox * p.pw + j;
                        if x[idx] > best {
                            best = x[idx];
                            best_i = idx;
                        }
                    }
                }
                y.push(best);
                am.push(best_i);
            }
        }
    }
    (y, am)
}

fn pool_backward(p: &Pool, argmax: &[usize], dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; p.c * p.in_h * p.in_w];
    for (&i, &g) in argmax.iter().zip(dy) {
        dx[i] += g;
    }
    dx
}

fn dense_forward(d: &Dense, w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = (0..d.out)
        .map(|o| b[o] + w[o * d.inp..(o + 1) * d.inp].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    if d.relu {
        relu_in_place(&mut y);
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    d: &Dense,
    w: &[f64],
    x: &[f64],
    y: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Vec<f64> {
    let mut dx = if need_dx { vec![0.0; d.inp] } else { Vec::new() };
    for o in 0..d.out {
        if d.relu && y[o] <= 0.0 {
            continue;
        }
        let g = dy[o];
        if g == 0.0 {
            continue;
        }
        db[o] += g;
        let row = o * d.inp;
        for (dwi, xi) in dw[row..row + d.inp].iter_mut().zip(x) {
            *dwi += g * xi;
        }
        if need_dx {
            for (dxi, wi) in dx.iter_mut().zip(&w[row..row + d.inp]) {
                *dxi += g * wi;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_conv_dense_forward() {
        // 3x3 input, one 2x2 filter, then a 2-way linear output.
        let net = Network::new(
            (3, 3),
            &[
                LayerSpec::Conv { filters: 1, kernel: (2, 2), stride: (1, 1) },
                LayerSpec::Dense { units: 2, relu: false },
            ],
            false,
        )
        .unwrap();
        let input = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let params = vec![
            vec![1.0, 0.0, 0.0, -1.0], // conv weight
            vec![0.5],                 // conv bias
            vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0],
        ];
        // Every window computes x[r][c] - x[r+1][c+1] + 0.5 = -4 + 0.5, so
        // all four conv outputs are clipped to 0 by the ReLU.
        assert_eq!(net.forward_one(&params, &input), vec![0.0, 1.0]);

        let params = vec![vec![0.0, 0.0, 0.0, 1.0], vec![-5.0], params[2].clone(), params[3].clone()];
        // Windows pick x[r+1][c+1] - 5: [5,6,8,9] - 5 = [0,1,3,4].
        // logit0 = 0*1 + 1*2 + 3*3 + 4*4 = 27; logit1 = 0*-1 + 0 + 3*1 + 0 + 1 = 4.
        assert_eq!(net.forward_one(&params, &input), vec![27.0, 4.0]);
    }

    #[test]
    fn pool_picks_first_maximum_and_drops_ragged_edge() {
        let p = Pool { c: 1, in_h: 3, in_w: 2, ph: 2, pw: 2, out_h: 1, out_w: 1 };
        let (y, am) = pool_forward(&p, &[1.0, 3.0, 3.0, 0.0, 9.0, 9.0]);
        assert_eq!(y, vec![3.0]);
        assert_eq!(am, vec![1]);
    }

    #[test]
    fn oversized_kernel_without_clamp_is_shape_error() {
        let r = Network::new(
            (4, 4),
            &[
                LayerSpec::Conv { filters: 1, kernel: (3, 3), stride: (1, 1) },
                LayerSpec::Conv { filters: 1, kernel: (3, 3), stride: (1, 1) },
            ],
            false,
        );
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
