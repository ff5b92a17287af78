use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layer, LayerSpec, Scalar, Tensor};
use crate::error::Result;

/// Anything exposing named trainable tensors in a fixed order.
pub trait Parameterized<T: Scalar> {
    fn named_params(&self) -> Vec<(String, &Tensor<T>)>;
    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)>;

    fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradcheckConfig {
    /// Number of scalar parameters to probe (all of them if fewer exist).
    pub samples: usize,
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor for the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            step: 1e-3,
            floor: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<GradcheckEntry>,
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic gradients with central finite differences.
///
/// `objective(model, backprop)` must evaluate a scalar loss; when `backprop`
/// is true it must also accumulate parameter gradients.
pub fn gradcheck<T, M, F>(model: &mut M, mut objective: F, cfg: &GradcheckConfig) -> Result<GradcheckReport>
where
    T: Scalar,
    M: Parameterized<T>,
    F: FnMut(&mut M, bool) -> Result<T>,
{
    model.zero_grad();
    objective(model, true)?;

    let sizes: Vec<(String, usize)> = model
        .named_params()
        .iter()
        .map(|(n, p)| (n.clone(), p.len()))
        .collect();
    let total: usize = sizes.iter().map(|(_, s)| s).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picks: Vec<usize> = if total <= cfg.samples {
        (0..total).collect()
    } else {
        sample(&mut rng, total, cfg.samples).into_vec()
    };
    picks.sort_unstable();

    let locate = |mut flat: usize| -> (usize, usize) {
        for (i, (_, len)) in sizes.iter().enumerate() {
            if flat < *len {
                return (i, flat);
            }
            flat -= len;
        }
        unreachable!("flat index within total")
    };

    let analytic: Vec<f64> = {
        let params = model.named_params();
        picks
            .iter()
            .map(|&f| {
                let (t, i) = locate(f);
                params[t].1.grad()[i].as_f64()
            })
            .collect()
    };

    let h = T::of(cfg.step);
    let mut report = GradcheckReport {
        checked: picks.len(),
        max_rel_error: 0.0,
        worst: None,
    };
    for (&flat, &a) in picks.iter().zip(&analytic) {
        let (t, i) = locate(flat);
        let original = model.named_params()[t].1.data()[i];
        model.named_params_mut()[t].1.data_mut()[i] = original + h;
        let plus = objective(model, false)?;
        model.named_params_mut()[t].1.data_mut()[i] = original - h;
        let minus = objective(model, false)?;
        model.named_params_mut()[t].1.data_mut()[i] = original;

        let numeric = (plus.as_f64() - minus.as_f64()) / (2.0 * cfg.step);
        let rel = relative_error(a, numeric, cfg.floor);
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some(GradcheckEntry {
                param: sizes[t].0.clone(),
                index: i,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(report)
}

/// One layer plus its inputs, all exposed as checkable tensors. The
/// objective is `sum(weights * forward(inputs))`.
pub struct LayerProbe {
    pub layer: Layer<f64>,
    pub inputs: Vec<Tensor<f64>>,
    weights: Tensor<f64>,
}

impl LayerProbe {
    /// Random inputs of the given shapes with entries in `±[0.1, 1]`, kept
    /// away from the ReLU kink.
    pub fn new(spec: LayerSpec, input_shapes: &[&[usize]], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = Layer::new(spec.kind(), spec, &mut rng);
        let inputs: Vec<Tensor<f64>> = input_shapes
            .iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let data = (0..n)
                    .map(|_| {
                        let m = rng.random_range(0.1..1.0);
                        if rng.random::<bool>() {
                            m
                        } else {
                            -m
                        }
                    })
                    .collect();
                Tensor::from_vec(shape, data)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
        let out = layer.infer(&refs)?;
        let weights = Tensor::from_vec(
            out.shape(),
            (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )?;
        Ok(Self { layer, inputs, weights })
    }

    fn objective(&mut self, backprop: bool) -> Result<f64> {
        let refs: Vec<&Tensor<f64>> = self.inputs.iter().collect();
        let y = self.layer.forward(&refs)?;
        let value = y.data().iter().zip(self.weights.data()).map(|(a, b)| a * b).sum();
        if backprop {
            let grads = self.layer.backward(&self.weights)?;
            for (x, g) in self.inputs.iter_mut().zip(grads) {
                for (dst, src) in x.grad_mut().iter_mut().zip(g.data()) {
                    *dst += src;
                }
            }
        }
        Ok(value)
    }

    /// Gradcheck over parameters and inputs together.
    pub fn check(&mut self, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
        gradcheck(self, |m, backprop| m.objective(backprop), cfg)
    }
}

impl Parameterized<f64> for LayerProbe {
    fn named_params(&self) -> Vec<(String, &Tensor<f64>)> {
        let mut out: Vec<(String, &Tensor<f64>)> = self.layer.named_params().collect();
        out.extend(self.inputs.iter().enumerate().map(|(i, t)| (format!("input{i}"), t)));
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<f64>)> {
        let mut out: Vec<(String, &mut Tensor<f64>)> = self.layer.named_params_mut().collect();
        out.extend(self.inputs.iter_mut().enumerate().map(|(i, t)| (format!("input{i}"), t)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Single(Layer<f64>);

    impl Parameterized<f64> for Single {
        fn named_params(&self) -> Vec<(String, &Tensor<f64>)> {
            self.0.named_params().collect()
        }
        fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<f64>)> {
            self.0.named_params_mut().collect()
        }
    }

    #[test]
    fn linear_layer_gradient_is_input() {
        let mut fc = Layer::<f64>::zeroed("fc", LayerSpec::FullyConnected { inputs: 1, outputs: 1 });
        fc.params_mut()[0].data_mut()[0] = 0.5;
        let mut model = Single(fc);
        let x = Tensor::from_vec(&[1, 1], vec![2.0]).unwrap();
        let report = gradcheck(
            &mut model,
            |m, backprop| {
                let y = m.0.forward(&[&x])?;
                if backprop {
                    m.0.backward(&Tensor::filled(&[1, 1], 1.0))?;
                }
                Ok(y.data()[0])
            },
            &GradcheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.checked, 2);
        assert!((model.0.params()[0].grad()[0] - 2.0).abs() < 1e-12);
        assert!(report.max_rel_error < 1e-6);
    }

    #[test]
    fn constant_output_has_zero_gradients() {
        let mut model = Single(Layer::zeroed("fc", LayerSpec::FullyConnected { inputs: 2, outputs: 1 }));
        let report = gradcheck(
            &mut model,
            |_, _| Ok(3.0f64),
            &GradcheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        let w = report.worst.unwrap();
        assert_eq!((w.analytic, w.numeric), (0.0, 0.0));
    }
}
