use rand::Rng;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Kind and hyperparameters of a layer. Shapes always carry a leading batch
/// dimension: images are `[N, C, H, W]`, vectors are `[N, F]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Accepts any `[N, ...]` input whose trailing size equals `inputs`.
    FullyConnected { inputs: usize, outputs: usize },
    Relu,
    Sigmoid,
    /// Softmax over the last dimension.
    Softmax,
    GlobalAvgPool,
    /// Two `[N, C_i, H, W]` inputs stacked along channels.
    ConcatChannels,
    /// `[N, S]` scalars broadcast to `[N, S, height, width]` constant maps.
    BroadcastScalars { height: usize, width: usize },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::FullyConnected { .. } => "fullyconnected",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Softmax => "softmax",
            LayerSpec::GlobalAvgPool => "globalavgpool",
            LayerSpec::ConcatChannels => "concat-channels",
            LayerSpec::BroadcastScalars { .. } => "broadcast-scalars",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            LayerSpec::ConcatChannels => 2,
            _ => 1,
        }
    }

    /// Output side length of a convolution, `floor((in + 2p - k) / s) + 1`.
    pub fn conv_output_side(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
        let padded = input + 2 * padding;
        (padded >= kernel && stride > 0).then(|| (padded - kernel) / stride + 1)
    }

    /// Shape function: output shape for the given input shapes.
    pub fn output_shape(&self, inputs: &[&[usize]]) -> std::result::Result<Vec<usize>, String> {
        if inputs.len() != self.arity() {
            return Err(format!("expected {} input(s), got {}", self.arity(), inputs.len()));
        }
        let x = inputs[0];
        if x.is_empty() || x.contains(&0) {
            return Err(format!("degenerate input shape {x:?}"));
        }
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if x.len() != 4 || x[1] != in_channels {
                    return Err(format!("expected [N, {in_channels}, H, W], got {x:?}"));
                }
                let oh = Self::conv_output_side(x[2], kernel, stride, padding);
                let ow = Self::conv_output_side(x[3], kernel, stride, padding);
                match (oh, ow) {
                    (Some(oh), Some(ow)) => Ok(vec![x[0], out_channels, oh, ow]),
                    _ => Err(format!("kernel {kernel} larger than padded input {x:?}")),
                }
            }
            LayerSpec::FullyConnected { inputs, outputs } => {
                let trailing: usize = x[1..].iter().product();
                if x.len() < 2 || trailing != inputs {
                    return Err(format!("expected [N, {inputs}] (after flattening), got {x:?}"));
                }
                Ok(vec![x[0], outputs])
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(x.to_vec()),
            LayerSpec::Softmax => {
                if x.len() != 2 {
                    return Err(format!("expected [N, K], got {x:?}"));
                }
                Ok(x.to_vec())
            }
            LayerSpec::GlobalAvgPool => {
                if x.len() != 4 {
                    return Err(format!("expected [N, C, H, W], got {x:?}"));
                }
                Ok(vec![x[0], x[1]])
            }
            LayerSpec::ConcatChannels => {
                let y = inputs[1];
                if x.len() != 4 || y.len() != 4 || x[0] != y[0] || x[2..] != y[2..] {
                    return Err(format!("cannot stack {x:?} with {y:?}"));
                }
                Ok(vec![x[0], x[1] + y[1], x[2], x[3]])
            }
            LayerSpec::BroadcastScalars { height, width } => {
                if x.len() != 2 || height == 0 || width == 0 {
                    return Err(format!("expected [N, S] into {height}x{width}, got {x:?}"));
                }
                Ok(vec![x[0], x[1], height, width])
            }
        }
    }

    /// Shapes of the trainable parameters, `weight` then `bias`.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("weight", vec![out_channels, in_channels, kernel, kernel]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::FullyConnected { inputs, outputs } => {
                vec![("weight", vec![outputs, inputs]), ("bias", vec![outputs])]
            }
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            LayerSpec::FullyConnected { inputs, .. } => inputs,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Cache<T> {
    input_shapes: Vec<Vec<usize>>,
    /// conv: im2col buffers; fc: flattened input; relu/sigmoid/softmax: output.
    saved: Vec<T>,
}

/// A layer instance: spec, parameters and the activation cache of the last
/// training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Layer<T: Scalar = f32> {
    name: String,
    spec: LayerSpec,
    params: Vec<Tensor<T>>,
    cache: Option<Cache<T>>,
    input_grad: bool,
}

impl<T: Scalar> Layer<T> {
    /// Layer with zero parameters.
    pub fn zeroed(name: impl Into<String>, spec: LayerSpec) -> Self {
        Self {
            name: name.into(),
            params: spec.param_shapes().iter().map(|(_, s)| Tensor::zeros(s)).collect(),
            spec,
            cache: None,
            input_grad: true,
        }
    }

    /// He-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(name: impl Into<String>, spec: LayerSpec, rng: &mut R) -> Self {
        let mut layer = Self::zeroed(name, spec);
        if let Some(weight) = layer.params.first_mut() {
            let bound = (6.0 / spec.fan_in() as f64).sqrt();
            for w in weight.data_mut() {
                *w = T::of(rng.random_range(-bound..bound));
            }
        }
        layer
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Named parameters, e.g. `conv1.weight`.
    pub fn named_params(&self) -> impl Iterator<Item = (String, &Tensor<T>)> {
        self.spec
            .param_shapes()
            .into_iter()
            .zip(self.params.iter())
            .map(|((n, _), t)| (format!("{}.{n}", self.name), t))
    }

    pub fn named_params_mut(&mut self) -> impl Iterator<Item = (String, &mut Tensor<T>)> {
        let name = self.name.clone();
        self.spec
            .param_shapes()
            .into_iter()
            .zip(self.params.iter_mut())
            .map(move |((n, _), t)| (format!("{name}.{n}"), t))
    }

    /// Disables computing the gradient w.r.t. the input in `backward`
    /// (first layer of a network).
    pub fn without_input_grad(mut self) -> Self {
        self.input_grad = false;
        self
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn check_shapes(&self, inputs: &[&Tensor<T>]) -> Result<Vec<usize>> {
        let shapes: Vec<&[usize]> = inputs.iter().map(|t| t.shape()).collect();
        self.spec.output_shape(&shapes).map_err(|detail| {
            Error::shape(
                &self.name,
                format!("{} with inputs {shapes:?}: {detail}", self.spec.kind()),
            )
        })
    }

    /// Training-mode forward: computes the output and caches what backward needs.
    pub fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (out, saved) = self.compute(inputs, true)?;
        self.cache = Some(Cache {
            input_shapes: inputs.iter().map(|t| t.shape().to_vec()).collect(),
            saved,
        });
        Ok(out)
    }

    /// Inference-mode forward; touches no state.
    pub fn infer(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        Ok(self.compute(inputs, false)?.0)
    }

    fn compute(&self, inputs: &[&Tensor<T>], keep: bool) -> Result<(Tensor<T>, Vec<T>)> {
        let out_shape = self.check_shapes(inputs)?;
        let x = inputs[0];
        let mut out = Tensor::zeros(&out_shape);
        let mut saved = Vec::new();
        match self.spec {
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let geo = ConvGeometry::new(x.shape(), &out_shape, kernel, stride, padding);
                let (weight, bias) = (&self.params[0], &self.params[1]);
                // one GEMM over the whole batch: cols is [patch, batch * positions]
                let (positions, wide) = (geo.positions(), geo.positions() * geo.batch);
                let mut cols = vec![T::zero(); geo.patch() * wide];
                for n in 0..geo.batch {
                    geo.im2col(x.item(n), &mut cols[n * positions..], wide);
                }
                let mut prod = vec![T::zero(); geo.out_channels * wide];
                T::gemm(
                    geo.out_channels,
                    geo.patch(),
                    wide,
                    T::one(),
                    weight.data(),
                    (geo.patch(), 1),
                    &cols,
                    (wide, 1),
                    T::zero(),
                    &mut prod,
                    (wide, 1),
                );
                for (oc, row) in prod.chunks_exact(wide).enumerate() {
                    let b = bias.data()[oc];
                    for (n, src) in row.chunks_exact(positions).enumerate() {
                        let dst = &mut out.data_mut()[(n * geo.out_channels + oc) * positions..][..positions];
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d = v + b;
                        }
                    }
                }
                if keep {
                    saved = cols;
                }
            }
            LayerSpec::FullyConnected { inputs: fan_in, outputs } => {
                let (weight, bias) = (&self.params[0], &self.params[1]);
                let batch = x.batch();
                let out_data = out.data_mut();
                for row in out_data.chunks_exact_mut(outputs) {
                    row.copy_from_slice(bias.data());
                }
                T::gemm(
                    batch,
                    fan_in,
                    outputs,
                    T::one(),
                    x.data(),
                    (fan_in, 1),
                    weight.data(),
                    (1, fan_in),
                    T::one(),
                    out_data,
                    (outputs, 1),
                );
                if keep {
                    saved = x.data().to_vec();
                }
            }
            LayerSpec::Relu => {
                for (o, &v) in out.data_mut().iter_mut().zip(x.data()) {
                    *o = if v > T::zero() { v } else { T::zero() };
                }
                if keep {
                    saved = out.data().to_vec();
                }
            }
            LayerSpec::Sigmoid => {
                for (o, &v) in out.data_mut().iter_mut().zip(x.data()) {
                    *o = T::one() / (T::one() + (-v).exp());
                }
                if keep {
                    saved = out.data().to_vec();
                }
            }
            LayerSpec::Softmax => {
                let k = x.shape()[1];
                for (o, v) in out.data_mut().chunks_exact_mut(k).zip(x.data().chunks_exact(k)) {
                    softmax_into(v, o);
                }
                if keep {
                    saved = out.data().to_vec();
                }
            }
            LayerSpec::GlobalAvgPool => {
                let area = x.shape()[2] * x.shape()[3];
                let scale = T::one() / T::of(area as f64);
                for (o, plane) in out.data_mut().iter_mut().zip(x.data().chunks_exact(area)) {
                    *o = plane.iter().copied().sum::<T>() * scale;
                }
            }
            LayerSpec::ConcatChannels => {
                let y = inputs[1];
                let (xa, ya) = (x.item_len(), y.item_len());
                let out_data = out.data_mut();
                for n in 0..x.batch() {
                    let dst = &mut out_data[n * (xa + ya)..(n + 1) * (xa + ya)];
                    dst[..xa].copy_from_slice(x.item(n));
                    dst[xa..].copy_from_slice(y.item(n));
                }
            }
            LayerSpec::BroadcastScalars { height, width } => {
                let area = height * width;
                for (plane, &v) in out.data_mut().chunks_exact_mut(area).zip(x.data()) {
                    plane.fill(v);
                }
            }
        }
        Ok((out, saved))
    }

    /// Accumulates parameter gradients and returns gradients w.r.t. each
    /// input (empty when input gradients are disabled).
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::BackwardBeforeForward(self.name.clone()))?;
        let in_shapes: Vec<&[usize]> = cache.input_shapes.iter().map(Vec::as_slice).collect();
        let out_shape = self.spec.output_shape(&in_shapes).map_err(|d| Error::shape(&self.name, d))?;
        if upstream.shape() != out_shape.as_slice() {
            return Err(Error::shape(
                &self.name,
                format!(
                    "{} backward: upstream {:?} does not match output {out_shape:?}",
                    self.spec.kind(),
                    upstream.shape()
                ),
            ));
        }
        let in_shape = &cache.input_shapes[0];
        let up = upstream.data();
        let grads = match self.spec {
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let geo = ConvGeometry::new(in_shape, &out_shape, kernel, stride, padding);
                let (patch, positions) = (geo.patch(), geo.positions());
                let wide = positions * geo.batch;
                // upstream regathered as [out_channels, batch * positions]
                let mut dout = vec![T::zero(); geo.out_channels * wide];
                for (n, item) in up.chunks_exact(geo.out_channels * positions).enumerate() {
                    for (oc, src) in item.chunks_exact(positions).enumerate() {
                        dout[oc * wide + n * positions..][..positions].copy_from_slice(src);
                    }
                }
                let (wparam, bparam) = self.params.split_at_mut(1);
                let weight = &mut wparam[0];
                for (g, row) in bparam[0].grad_mut().iter_mut().zip(dout.chunks_exact(wide)) {
                    *g = *g + row.iter().copied().sum::<T>();
                }
                let (wdata, wgrad) = weight.data_and_grad_mut();
                T::gemm(
                    geo.out_channels,
                    wide,
                    patch,
                    T::one(),
                    &dout,
                    (wide, 1),
                    &cache.saved,
                    (1, wide),
                    T::one(),
                    wgrad,
                    (patch, 1),
                );
                if self.input_grad {
                    let mut dcols = vec![T::zero(); patch * wide];
                    T::gemm(
                        patch,
                        geo.out_channels,
                        wide,
                        T::one(),
                        wdata,
                        (1, patch),
                        &dout,
                        (wide, 1),
                        T::zero(),
                        &mut dcols,
                        (wide, 1),
                    );
                    let mut dx = Tensor::zeros(in_shape);
                    let item = dx.item_len();
                    for n in 0..geo.batch {
                        geo.col2im(&dcols[n * positions..], wide, &mut dx.data_mut()[n * item..(n + 1) * item]);
                    }
                    vec![dx]
                } else {
                    Vec::new()
                }
            }
            LayerSpec::FullyConnected { inputs: fan_in, outputs } => {
                let batch = in_shape[0];
                let (wparam, bparam) = self.params.split_at_mut(1);
                let bias_grad = bparam[0].grad_mut();
                for row in up.chunks_exact(outputs) {
                    for (g, &u) in bias_grad.iter_mut().zip(row) {
                        *g = *g + u;
                    }
                }
                let (wdata, wgrad) = wparam[0].data_and_grad_mut();
                T::gemm(
                    outputs,
                    batch,
                    fan_in,
                    T::one(),
                    up,
                    (1, outputs),
                    &cache.saved,
                    (fan_in, 1),
                    T::one(),
                    wgrad,
                    (fan_in, 1),
                );
                if self.input_grad {
                    let mut dx = Tensor::zeros(in_shape);
                    T::gemm(
                        batch,
                        outputs,
                        fan_in,
                        T::one(),
                        up,
                        (outputs, 1),
                        wdata,
                        (fan_in, 1),
                        T::zero(),
                        dx.data_mut(),
                        (fan_in, 1),
                    );
                    vec![dx]
                } else {
                    Vec::new()
                }
            }
            LayerSpec::Relu => {
                let mut dx = Tensor::zeros(in_shape);
                for ((d, &u), &y) in dx.data_mut().iter_mut().zip(up).zip(&cache.saved) {
                    *d = if y > T::zero() { u } else { T::zero() };
                }
                vec![dx]
            }
            LayerSpec::Sigmoid => {
                let mut dx = Tensor::zeros(in_shape);
                for ((d, &u), &y) in dx.data_mut().iter_mut().zip(up).zip(&cache.saved) {
                    *d = u * y * (T::one() - y);
                }
                vec![dx]
            }
            LayerSpec::Softmax => {
                let k = in_shape[1];
                let mut dx = Tensor::zeros(in_shape);
                for ((d, u), y) in dx
                    .data_mut()
                    .chunks_exact_mut(k)
                    .zip(up.chunks_exact(k))
                    .zip(cache.saved.chunks_exact(k))
                {
                    let dot: T = u.iter().zip(y).map(|(&a, &b)| a * b).sum();
                    for ((di, &ui), &yi) in d.iter_mut().zip(u).zip(y) {
                        *di = yi * (ui - dot);
                    }
                }
                vec![dx]
            }
            LayerSpec::GlobalAvgPool => {
                let area = in_shape[2] * in_shape[3];
                let scale = T::one() / T::of(area as f64);
                let mut dx = Tensor::zeros(in_shape);
                for (plane, &u) in dx.data_mut().chunks_exact_mut(area).zip(up) {
                    plane.fill(u * scale);
                }
                vec![dx]
            }
            LayerSpec::ConcatChannels => {
                let other = &cache.input_shapes[1];
                let mut dx = Tensor::zeros(in_shape);
                let mut dy = Tensor::zeros(other);
                let (xa, ya) = (dx.item_len(), dy.item_len());
                for (n, src) in up.chunks_exact(xa + ya).enumerate() {
                    dx.data_mut()[n * xa..(n + 1) * xa].copy_from_slice(&src[..xa]);
                    dy.data_mut()[n * ya..(n + 1) * ya].copy_from_slice(&src[xa..]);
                }
                vec![dx, dy]
            }
            LayerSpec::BroadcastScalars { height, width } => {
                let mut dx = Tensor::zeros(in_shape);
                for (d, plane) in dx.data_mut().iter_mut().zip(up.chunks_exact(height * width)) {
                    *d = plane.iter().copied().sum();
                }
                vec![dx]
            }
        };
        Ok(grads)
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_into<T: Scalar>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = (v - max).exp();
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

struct ConvGeometry {
    batch: usize,
    in_channels: usize,
    in_h: usize,
    in_w: usize,
    out_channels: usize,
    out_h: usize,
    out_w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeometry {
    fn new(input: &[usize], output: &[usize], kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            batch: input[0],
            in_channels: input[1],
            in_h: input[2],
            in_w: input[3],
            out_channels: output[1],
            out_h: output[2],
            out_w: output[3],
            kernel,
            stride,
            padding,
        }
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Output indices `o` whose tap `k` lands inside an axis of length `size`.
    fn valid(&self, out: usize, k: usize, size: usize) -> std::ops::Range<usize> {
        let lo = self.padding.saturating_sub(k).div_ceil(self.stride);
        let hi = if size + self.padding > k {
            ((size - 1 + self.padding - k) / self.stride + 1).min(out)
        } else {
            0
        };
        lo..hi.max(lo)
    }

    /// Writes patch rows of one item; row `r` starts at `cols[r * row_stride]`.
    /// Entries that fall in the padding are left untouched (callers pass zeros).
    fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T], row_stride: usize) {
        let (s, p, w) = (self.stride, self.padding, self.in_w);
        let mut row = 0;
        for plane in image.chunks_exact(self.in_h * self.in_w).take(self.in_channels) {
            for ki in 0..self.kernel {
                let rows = self.valid(self.out_h, ki, self.in_h);
                for kj in 0..self.kernel {
                    let cols_ok = self.valid(self.out_w, kj, self.in_w);
                    let dst = &mut cols[row * row_stride..];
                    row += 1;
                    if cols_ok.is_empty() {
                        continue;
                    }
                    for oh in rows.clone() {
                        let src = &plane[(oh * s + ki - p) * w..][..w];
                        let d = &mut dst[oh * self.out_w..][..self.out_w];
                        let first = cols_ok.start * s + kj - p;
                        for (d, &v) in d[cols_ok.clone()].iter_mut().zip(src[first..].iter().step_by(s)) {
                            *d = v;
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], row_stride: usize, image: &mut [T]) {
        let (s, p, w) = (self.stride, self.padding, self.in_w);
        let mut row = 0;
        for plane in image.chunks_exact_mut(self.in_h * self.in_w).take(self.in_channels) {
            for ki in 0..self.kernel {
                let rows = self.valid(self.out_h, ki, self.in_h);
                for kj in 0..self.kernel {
                    let cols_ok = self.valid(self.out_w, kj, self.in_w);
                    let src = &cols[row * row_stride..];
                    row += 1;
                    if cols_ok.is_empty() {
                        continue;
                    }
                    for oh in rows.clone() {
                        let dst = &mut plane[(oh * s + ki - p) * w..][..w];
                        let c = &src[oh * self.out_w..][..self.out_w];
                        let first = cols_ok.start * s + kj - p;
                        for (d, &v) in dst[first..].iter_mut().step_by(s).zip(&c[cols_ok.clone()]) {
                            *d = *d + v;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn global_avg_pool_of_two_by_two() {
        let mut gap = Layer::<f64>::zeroed("gap", LayerSpec::GlobalAvgPool);
        let y = gap.forward(&[&t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0])]).unwrap();
        assert_eq!(y.data(), &[2.5]);
        let dx = gap.backward(&t(&[1, 1], &[1.0])).unwrap();
        assert_eq!(dx[0].data(), &[0.25; 4]);
    }

    #[test]
    fn relu_forward_and_backward() {
        let mut relu = Layer::<f64>::zeroed("relu", LayerSpec::Relu);
        let y = relu.forward(&[&t(&[1, 3], &[-1.0, 0.0, 2.0])]).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);

        relu.forward(&[&t(&[1, 2], &[-1.0, 2.0])]).unwrap();
        let dx = relu.backward(&t(&[1, 2], &[1.0, 1.0])).unwrap();
        assert_eq!(dx[0].data(), &[0.0, 1.0]);
    }

    #[test]
    fn conv_shape_function() {
        let spec = LayerSpec::Conv2d {
            in_channels: 3,
            out_channels: 16,
            kernel: 8,
            stride: 4,
            padding: 0,
        };
        assert_eq!(spec.output_shape(&[&[2, 3, 64, 64]]).unwrap(), vec![2, 16, 15, 15]);
        let padded = LayerSpec::Conv2d {
            in_channels: 32,
            out_channels: 32,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        assert_eq!(padded.output_shape(&[&[1, 32, 4, 4]]).unwrap(), vec![1, 32, 4, 4]);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let spec = LayerSpec::Conv2d {
            in_channels: 2,
            out_channels: 1,
            kernel: 2,
            stride: 1,
            padding: 1,
        };
        let mut conv = Layer::<f64>::zeroed("c", spec);
        conv.params_mut()[0].data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 1.0]);
        conv.params_mut()[1].data_mut()[0] = 0.25;
        let x = t(&[1, 2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let y = conv.infer(&[&x]).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        // direct evaluation
        let w = conv.params()[0].data();
        let mut expect = [0.25f64; 9];
        for oh in 0..3i64 {
            for ow in 0..3i64 {
                for c in 0..2 {
                    for ki in 0..2i64 {
                        for kj in 0..2i64 {
                            let (r, q) = (oh + ki - 1, ow + kj - 1);
                            if (0..2).contains(&r) && (0..2).contains(&q) {
                                expect[(oh * 3 + ow) as usize] += w[c * 4 + (ki * 2 + kj) as usize]
                                    * x.data()[c * 4 + (r * 2 + q) as usize];
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(y.data(), &expect);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let mut fc = Layer::<f32>::zeroed("head", LayerSpec::FullyConnected { inputs: 4, outputs: 2 });
        let err = fc.forward(&[&Tensor::zeros(&[1, 5])]).unwrap_err().to_string();
        assert!(err.contains("head") && err.contains("[1, 5]"), "{err}");
    }

    #[test]
    fn backward_before_forward_is_rejected() {
        let mut relu = Layer::<f32>::zeroed("r", LayerSpec::Relu);
        assert!(matches!(
            relu.backward(&Tensor::zeros(&[1, 1])),
            Err(Error::BackwardBeforeForward(_))
        ));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let sm = Layer::<f32>::zeroed("sm", LayerSpec::Softmax);
        let y = sm
            .infer(&[&Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 100.0, -100.0, 0.0]).unwrap()])
            .unwrap();
        for row in y.data().chunks(3) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }
}
