use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::layers::{Activation, AffineLayer, BatchNormLayer, BnMode, Layer, LayerCache, Param};
use super::matrix::Matrix;
use crate::error::{shape_err, Error, Result};

/// Layer widths and options for [`Network::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    /// Widths of the hidden encoder blocks before the feature block.
    pub hidden: Vec<usize>,
    /// Width `d` of the encoder output (the features `r`).
    pub feature_dim: usize,
    pub classes: usize,
    pub activation: Activation,
    pub batch_norm: bool,
    /// Projection width; `None` means `min(feature_dim, 32)`.
    pub proj_dim: Option<usize>,
}

impl NetworkConfig {
    pub fn proj_dim(&self) -> usize {
        self.proj_dim.unwrap_or(self.feature_dim.min(32))
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 || self.classes < 2 || self.proj_dim() == 0 {
            return Err(Error::Config(format!("degenerate network dimensions: {self:?}")));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden width 0".into()));
        }
        Ok(())
    }
}

/// Affine → activation → affine, mapping features `r` to embeddings `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub layers: Vec<Layer>,
}

/// Cached activations of one projection-head pass.
#[derive(Debug, Clone)]
pub struct HeadTape {
    caches: Vec<LayerCache>,
}

impl ProjectionHead {
    pub fn new<R: Rng + ?Sized>(dim: usize, proj_dim: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            layers: alloc::vec![
                Layer::Affine(AffineLayer::new(dim, dim, true, rng)),
                Layer::Act(activation),
                Layer::Affine(AffineLayer::new(dim, proj_dim, true, rng)),
            ],
        }
    }

    pub fn project(&self, features: &Matrix) -> Result<(Matrix, HeadTape)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = features.clone();
        for layer in &self.layers {
            // head layers hold no batch norm, so a scratch clone is never mutated
            let (out, cache) = match layer {
                Layer::Affine(a) => (a.forward(&h)?, LayerCache::Affine { input: h }),
                Layer::Act(act) => {
                    let y = act.forward(&h);
                    (y.clone(), LayerCache::Act { output: y })
                }
                Layer::BatchNorm(_) => return Err(Error::Architecture("batch norm inside projection head".into())),
            };
            caches.push(cache);
            h = out;
        }
        Ok((h, HeadTape { caches }))
    }

    /// Accumulates head gradients; returns the gradient w.r.t. the input features.
    pub fn backward(&mut self, tape: &HeadTape, grad: &Matrix) -> Matrix {
        let mut g = grad.clone();
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches).rev() {
            g = layer.backward(cache, &g);
        }
        g
    }
}

/// Encoder + classifier + projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    feature_dim: usize,
    classes: usize,
    pub encoder: Vec<Layer>,
    pub classifier: Vec<Layer>,
    pub head: ProjectionHead,
}

/// Activations recorded by a taped forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    encoder: Vec<LayerCache>,
    classifier: Vec<LayerCache>,
    head: HeadTape,
    batch: usize,
}

/// Outputs of [`Network::forward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub features: Matrix,
    pub logits: Matrix,
    pub proj: Matrix,
    tape: Option<Tape>,
}

impl ForwardPass {
    pub fn probs(&self) -> Matrix {
        self.logits.softmax_rows()
    }

    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }
}

/// Loss gradients with respect to each network output. Absent entries are zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct OutputGrads<'a> {
    pub features: Option<&'a Matrix>,
    pub logits: Option<&'a Matrix>,
    pub proj: Option<&'a Matrix>,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut encoder = Vec::new();
        let mut width = cfg.input_dim;
        for &h in cfg.hidden.iter().chain(core::iter::once(&cfg.feature_dim)) {
            // bias would be cancelled by the following normalization
            encoder.push(Layer::Affine(AffineLayer::new(width, h, !cfg.batch_norm, rng)));
            if cfg.batch_norm {
                encoder.push(Layer::BatchNorm(BatchNormLayer::new(h)));
            }
            encoder.push(Layer::Act(cfg.activation));
            width = h;
        }
        let classifier = alloc::vec![Layer::Affine(AffineLayer::new(cfg.feature_dim, cfg.classes, true, rng))];
        let head = ProjectionHead::new(cfg.feature_dim, cfg.proj_dim(), cfg.activation, rng);
        Ok(Self { input_dim: cfg.input_dim, feature_dim: cfg.feature_dim, classes: cfg.classes, encoder, classifier, head })
    }

    /// Assembles a network from explicit parts, checking that the widths chain.
    pub fn from_parts(input_dim: usize, encoder: Vec<Layer>, classifier: Vec<Layer>, head: ProjectionHead) -> Result<Self> {
        let feature_dim = encoder.iter().fold(input_dim, |w, l| l.output_dim(w));
        let classes = classifier.iter().fold(feature_dim, |w, l| l.output_dim(w));
        let net = Self { input_dim, feature_dim, classes, encoder, classifier, head };
        let probe = Matrix::zeros(2, input_dim);
        net.clone().forward(&probe, BnMode::Eval).map_err(|e| Error::Architecture(format!("{e}")))?;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if x.cols() != self.input_dim {
            return Err(shape_err!("network expects {} inputs, got {}", self.input_dim, x.cols()));
        }
        x.ensure_finite("network input")
    }

    fn run_stack(layers: &mut [Layer], x: &Matrix, mode: BnMode, record: bool) -> Result<(Matrix, Vec<LayerCache>)> {
        let mut caches = Vec::new();
        let mut h = x.clone();
        for layer in layers.iter_mut() {
            let (out, cache) = layer.forward(&h, mode)?;
            if record {
                caches.push(cache);
            }
            h = out;
        }
        Ok((h, caches))
    }

    /// Taped forward pass. Only [`BnMode::Train`] mutates the network (running statistics).
    pub fn forward(&mut self, x: &Matrix, mode: BnMode) -> Result<ForwardPass> {
        self.forward_impl(x, mode, true)
    }

    /// Forward pass without a tape; the result cannot be passed to [`Network::backward`].
    pub fn infer(&mut self, x: &Matrix, mode: BnMode) -> Result<ForwardPass> {
        self.forward_impl(x, mode, false)
    }

    fn forward_impl(&mut self, x: &Matrix, mode: BnMode, record: bool) -> Result<ForwardPass> {
        self.check_input(x)?;
        let (features, enc) = Self::run_stack(&mut self.encoder, x, mode, record)?;
        let (logits, cls) = Self::run_stack(&mut self.classifier, &features, mode, record)?;
        let (proj, head) = self.head.project(&features)?;
        let tape = record.then_some(Tape { encoder: enc, classifier: cls, head, batch: x.rows() });
        Ok(ForwardPass { features, logits, proj, tape })
    }

    /// Encoder features only.
    pub fn encode(&mut self, x: &Matrix, mode: BnMode) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(Self::run_stack(&mut self.encoder, x, mode, false)?.0)
    }

    /// Accumulates parameter gradients for one taped pass. Returns the input gradient.
    pub fn backward(&mut self, pass: &ForwardPass, grads: OutputGrads<'_>) -> Result<Matrix> {
        let tape = pass
            .tape
            .as_ref()
            .ok_or_else(|| Error::State("backward called on an untaped forward pass".into()))?;
        let n = tape.batch;
        let check = |m: Option<&Matrix>, cols: usize, what: &str| -> Result<()> {
            match m {
                Some(m) if m.shape() != (n, cols) => Err(shape_err!("{what} gradient {:?}, expected {:?}", m.shape(), (n, cols))),
                _ => Ok(()),
            }
        };
        check(grads.features, self.feature_dim, "feature")?;
        check(grads.logits, self.classes, "logit")?;
        check(grads.proj, pass.proj.cols(), "projection")?;

        let mut d_features = grads.features.cloned().unwrap_or_else(|| Matrix::zeros(n, self.feature_dim));
        if let Some(g) = grads.logits {
            let mut h = g.clone();
            for (layer, cache) in self.classifier.iter_mut().zip(&tape.classifier).rev() {
                h = layer.backward(cache, &h);
            }
            d_features.add_assign(&h)?;
        }
        if let Some(g) = grads.proj {
            let h = self.head.backward(&tape.head, g);
            d_features.add_assign(&h)?;
        }
        let mut h = d_features;
        for (layer, cache) in self.encoder.iter_mut().zip(&tape.encoder).rev() {
            h = layer.backward(cache, &h);
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.encoder
            .iter()
            .chain(&self.classifier)
            .chain(&self.head.layers)
            .flat_map(|l| l.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.encoder
            .iter_mut()
            .chain(self.classifier.iter_mut())
            .chain(self.head.layers.iter_mut())
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNormLayer> {
        self.encoder.iter().chain(&self.classifier).filter_map(|l| match l {
            Layer::BatchNorm(bn) => Some(bn),
            _ => None,
        })
    }

    pub fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNormLayer> {
        self.encoder.iter_mut().chain(self.classifier.iter_mut()).filter_map(|l| match l {
            Layer::BatchNorm(bn) => Some(bn),
            _ => None,
        })
    }

    pub fn has_batch_norm(&self) -> bool {
        self.batch_norms().next().is_some()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// `true` when both networks have the same parameter and buffer layout.
    pub fn same_layout(&self, other: &Network) -> bool {
        let a = self.params();
        let b = other.params();
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| x.kind == y.kind && x.len() == y.len())
            && self.batch_norms().count() == other.batch_norms().count()
            && self.batch_norms().zip(other.batch_norms()).all(|(x, y)| x.features == y.features)
    }

    /// Euclidean distance between the parameter vectors of two same-layout networks.
    pub fn param_distance(&self, other: &Network) -> f64 {
        let sq: f64 = self
            .params()
            .iter()
            .zip(other.params())
            .flat_map(|(a, b)| a.value.iter().zip(&b.value).map(|(x, y)| (x - y) * (x - y)))
            .sum();
        libm::sqrt(sq)
    }
}
