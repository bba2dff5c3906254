use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::control::NUM_CONTROLS;
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const DEFAULT_FEATURE_DIM: usize = 32;

/// Grid values are shifted by this constant before the first affine layer.
/// Raw toy images are exactly zero away from the face; without the shift the
/// weights on those cells never receive gradient from the training images.
pub const INPUT_CENTER: f64 = 0.5;

/// Feed-forward regressor: a tanh layer stack (the feature extractor)
/// followed by an affine head with sigmoid outputs.
///
/// Inputs are centered by [`INPUT_CENTER`] first. Parameters live in one
/// flat vector. For every extractor layer the weight matrix (`out x in`,
/// row-major) is followed by its bias; the head weights (`30 x feature_dim`)
/// and bias come last.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    input_h: usize,
    input_w: usize,
    hidden: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub feature: Vec<f64>,
    pub prediction: Vec<f64>,
}

/// Per-layer activations kept for the backward pass.
pub(crate) struct Trace {
    /// `acts[0]` is the input, `acts[l]` the output of extractor layer `l`.
    pub acts: Vec<Vec<f64>>,
    pub prediction: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerSpan {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: usize,
    pub bias: usize,
}

impl RegressorModel {
    /// Uniform Glorot initialization for every weight; biases start at zero.
    pub fn new(input_h: usize, input_w: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(input_h, input_w, hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for span in model.layer_spans() {
            let limit = (6.0 / (span.inputs + span.outputs) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).unwrap();
            for w in &mut model.params[span.weights..span.weights + span.inputs * span.outputs] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub fn zeros(input_h: usize, input_w: usize, hidden: &[usize]) -> Result<Self> {
        if input_h == 0 || input_w == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::Config(format!(
                "invalid regressor shape: input {input_h}x{input_w}, hidden {hidden:?}"
            )));
        }
        let count = Self::param_count_for(input_h * input_w, hidden);
        Ok(Self {
            input_h,
            input_w,
            hidden: hidden.to_vec(),
            params: vec![0.0; count],
        })
    }

    pub fn from_params(
        input_h: usize,
        input_w: usize,
        hidden: &[usize],
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeros(input_h, input_w, hidden)?;
        if params.len() != model.params.len() {
            return Err(Error::Dimension(format!(
                "architecture needs {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    fn param_count_for(inputs: usize, hidden: &[usize]) -> usize {
        let mut n = 0;
        let mut prev = inputs;
        for &h in hidden.iter().chain(std::iter::once(&NUM_CONTROLS)) {
            n += prev * h + h;
            prev = h;
        }
        n
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.input_h, self.input_w)
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn feature_dim(&self) -> usize {
        *self.hidden.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Extractor layers followed by the head.
    pub(crate) fn layer_spans(&self) -> Vec<LayerSpan> {
        let mut spans = Vec::with_capacity(self.hidden.len() + 1);
        let mut offset = 0;
        let mut prev = self.input_h * self.input_w;
        for &h in self.hidden.iter().chain(std::iter::once(&NUM_CONTROLS)) {
            spans.push(LayerSpan {
                inputs: prev,
                outputs: h,
                weights: offset,
                bias: offset + prev * h,
            });
            offset += prev * h + h;
            prev = h;
        }
        spans
    }

    fn check_input(&self, input: &Grid) -> Result<()> {
        if input.dims() != (self.input_h, self.input_w) {
            return Err(Error::Dimension(format!(
                "model expects {}x{} input, got {}x{}",
                self.input_h,
                self.input_w,
                input.height(),
                input.width()
            )));
        }
        Ok(())
    }

    fn affine(&self, span: &LayerSpan, input: &[f64]) -> Vec<f64> {
        let w = &self.params[span.weights..span.bias];
        let b = &self.params[span.bias..span.bias + span.outputs];
        w.chunks_exact(span.inputs)
            .zip(b)
            .map(|(row, bias)| row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + bias)
            .collect()
    }

    pub(crate) fn trace(&self, input: &Grid) -> Result<Trace> {
        self.check_input(input)?;
        let spans = self.layer_spans();
        let (head, extractor) = spans.split_last().unwrap();
        let mut acts = Vec::with_capacity(extractor.len() + 1);
        acts.push(centered(input));
        for span in extractor {
            let z = self.affine(span, acts.last().unwrap());
            acts.push(z.into_iter().map(f64::tanh).collect());
        }
        let prediction = self
            .affine(head, acts.last().unwrap())
            .into_iter()
            .map(crate::synth::sigmoid)
            .collect();
        Ok(Trace { acts, prediction })
    }

    /// Feature `F(x)` only.
    pub fn features(&self, input: &Grid) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let spans = self.layer_spans();
        let mut act = centered(input);
        for span in &spans[..spans.len() - 1] {
            act = self.affine(span, &act).into_iter().map(f64::tanh).collect();
        }
        Ok(act)
    }

    pub fn forward(&self, input: &Grid) -> Result<Forward> {
        let mut trace = self.trace(input)?;
        Ok(Forward {
            feature: trace.acts.pop().unwrap(),
            prediction: trace.prediction,
        })
    }
}

fn centered(input: &Grid) -> Vec<f64> {
    input.as_slice().iter().map(|v| v - INPUT_CENTER).collect()
}
