//! The hierarchical pooled spectral model.
//!
//! Each coarsening level applies an optional Chebyshev graph convolution
//! (K = 2: the node itself plus immediate neighbors), the weighted pooling
//! operator `Sᵀ(w ⊙ H)` over the precomputed assignment, and a ReLU. The
//! final supernode embeddings are flattened (supernode-major, channel-minor)
//! into a single-hidden-layer classifier with dropout, batch normalization,
//! and ReLU on the hidden layer, then a sigmoid or softmax head.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchStats, NodeId, Tape, Tensor};
use crate::coarsen::CoarseningHierarchy;
use crate::error::{Error, Result};
use crate::graph::{LambdaMaxMode, LaplacianOperator};
use crate::seeds::Purpose;

/// Chebyshev order: the filter uses basis T0 = I and T1 = L̃ only.
pub const CHEB_K: usize = 2;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Output head of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Head {
    /// One logit; class 1 probability is its sigmoid.
    SigmoidBinary,
    /// `classes` logits through a softmax.
    SoftmaxMulticlass { classes: usize },
}

impl Head {
    /// Number of logit columns produced by the model.
    pub fn n_outputs(&self) -> usize {
        match self {
            Head::SigmoidBinary => 1,
            Head::SoftmaxMulticlass { classes } => *classes,
        }
    }

    /// Number of classes being distinguished.
    pub fn n_classes(&self) -> usize {
        match self {
            Head::SigmoidBinary => 2,
            Head::SoftmaxMulticlass { classes } => *classes,
        }
    }
}

/// Architecture of the hierarchical model.
///
/// Levels below `conv_start_level` apply only weighted pooling and the
/// nonlinearity; levels at or above it prepend a Chebyshev convolution.
/// `conv_start_level = n_levels` disables convolutions entirely and
/// `conv_start_level = 0` enables them everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    /// Coarsening levels consumed from the hierarchy. 0 degenerates to a
    /// plain MLP over the input genes.
    pub n_levels: usize,
    pub conv_start_level: usize,
    /// Output channels per convolution level. Empty selects the default
    /// schedule: 2 for the first convolution, doubling thereafter.
    #[serde(default)]
    pub channel_schedule: Vec<usize>,
    pub hidden_units: usize,
    pub dropout_p: f64,
    pub head: Head,
}

impl ArchitectureConfig {
    /// Channel counts actually used, resolving the default doubling rule.
    pub fn resolved_channels(&self) -> Vec<usize> {
        let n_convs = self.n_levels.saturating_sub(self.conv_start_level);
        if !self.channel_schedule.is_empty() {
            self.channel_schedule.clone()
        } else {
            (0..n_convs).map(|i| 2usize << i).collect()
        }
    }

    pub fn validate(&self, hierarchy_depth: usize) -> Result<()> {
        if self.n_levels > hierarchy_depth {
            return Err(Error::Schema(format!(
                "architecture uses {} levels but the hierarchy has {}",
                self.n_levels, hierarchy_depth
            )));
        }
        if self.conv_start_level > self.n_levels {
            return Err(Error::Schema(format!(
                "conv_start_level {} outside 0..={}",
                self.conv_start_level, self.n_levels
            )));
        }
        let n_convs = self.n_levels - self.conv_start_level;
        let channels = self.resolved_channels();
        if channels.len() != n_convs {
            return Err(Error::Schema(format!(
                "channel schedule has {} entries for {} convolution levels",
                channels.len(),
                n_convs
            )));
        }
        if channels.contains(&0) {
            return Err(Error::Schema("channel counts must be positive".into()));
        }
        if self.hidden_units == 0 {
            return Err(Error::Schema("hidden_units must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Schema(format!(
                "dropout_p {} not in [0, 1)",
                self.dropout_p
            )));
        }
        if let Head::SoftmaxMulticlass { classes } = self.head {
            if classes < 2 {
                return Err(Error::Schema(
                    "softmax-multiclass head needs at least 2 classes".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Batch-norm affine parameters plus running statistics for the hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    fn new(features: usize) -> Self {
        BatchNormState {
            gamma: Tensor::vector(vec![1.0; features]),
            beta: Tensor::vector(vec![0.0; features]),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvFilter {
    theta0: Tensor,
    theta1: Tensor,
}

/// Dropout and batch-norm behavior of a forward pass.
#[derive(Debug, Clone, Copy)]
pub enum ForwardMode {
    /// Dropout with a freshly seeded mask, batch statistics, running-stat
    /// updates.
    Train { dropout_seed: u64 },
    /// Dropout disabled, running statistics used.
    Eval,
}

/// Tape handles produced by a forward pass.
pub struct ForwardHandles {
    pub x: NodeId,
    /// Pre-flatten supernode embeddings, `(B·N_L)×F_L`, after the final ReLU.
    pub embeddings: NodeId,
    pub logits: NodeId,
    /// Parameter tape nodes in registration order, keyed by parameter name.
    pub params: Vec<(String, NodeId)>,
    pub batch_stats: Option<BatchStats>,
}

/// The model: architecture, hierarchy binding, and all learnable state.
#[derive(Debug, Clone)]
pub struct GnnModel {
    config: ArchitectureConfig,
    hierarchy: Arc<CoarseningHierarchy>,
    lambda_mode: LambdaMaxMode,
    /// One Laplacian per convolution-enabled level, built on its fine graph.
    laplacians: Vec<Arc<LaplacianOperator>>,
    conv_filters: Vec<ConvFilter>,
    pool_weights: Vec<Tensor>,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    bn: BatchNormState,
}

/// `H·θ0 + (L̃H)·θ1`: the K = 2 Chebyshev filter on one level. `h` is
/// `(B·N_l)×F_in` on the level's fine graph.
pub fn cheb_conv(
    tape: &mut Tape,
    lap: &Arc<LaplacianOperator>,
    h: NodeId,
    theta0: NodeId,
    theta1: NodeId,
) -> Result<NodeId> {
    let term0 = tape.matmul(h, theta0)?;
    let lh = tape.sparse_apply(lap, h)?;
    let term1 = tape.matmul(lh, theta1)?;
    tape.add(term0, term1)
}

/// `Sᵀ(w ⊙ H)`: per-node scaling by the learnable weight vector followed by
/// cluster-indexed summation (ascending fine index).
pub fn weighted_pool(
    tape: &mut Tape,
    assignment: &Arc<crate::coarsen::AssignmentMap>,
    h: NodeId,
    w: NodeId,
) -> Result<NodeId> {
    let scaled = tape.scale_rows(h, w)?;
    tape.scatter_pool(assignment, scaled)
}

impl GnnModel {
    /// Build a model with freshly initialized parameters.
    ///
    /// Weights draw from U(−1/√fan_in, 1/√fan_in); pooling vectors start at
    /// all-ones (plain cluster sums); biases at zero.
    pub fn new(
        config: ArchitectureConfig,
        hierarchy: Arc<CoarseningHierarchy>,
        lambda_mode: LambdaMaxMode,
        seed: u64,
    ) -> Result<Self> {
        config.validate(hierarchy.n_levels())?;
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::purpose_seed(seed, Purpose::Init));
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };

        let channels = config.resolved_channels();
        let mut laplacians = Vec::new();
        let mut conv_filters = Vec::new();
        let mut f_in = 1usize;
        for (i, &f_out) in channels.iter().enumerate() {
            let level = config.conv_start_level + i;
            let fine = hierarchy.fine_graph(level).clone();
            laplacians.push(Arc::new(LaplacianOperator::new(fine, lambda_mode)));
            conv_filters.push(ConvFilter {
                theta0: Tensor::matrix(f_in, f_out, uniform(f_in * f_out, f_in))?,
                theta1: Tensor::matrix(f_in, f_out, uniform(f_in * f_out, f_in))?,
            });
            f_in = f_out;
        }

        let pool_weights: Vec<Tensor> = (0..config.n_levels)
            .map(|l| Tensor::vector(vec![1.0; hierarchy.n_nodes_at(l)]))
            .collect();

        let flat = flat_dim(&config, &hierarchy);
        let hidden = config.hidden_units;
        let out = config.head.n_outputs();
        let w1 = Tensor::matrix(flat, hidden, uniform(flat * hidden, flat))?;
        let b1 = Tensor::vector(vec![0.0; hidden]);
        let w2 = Tensor::matrix(hidden, out, uniform(hidden * out, hidden))?;
        let b2 = Tensor::vector(vec![0.0; out]);

        Ok(GnnModel {
            config,
            hierarchy,
            lambda_mode,
            laplacians,
            conv_filters,
            pool_weights,
            w1,
            b1,
            w2,
            b2,
            bn: BatchNormState::new(hidden),
        })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn hierarchy(&self) -> &Arc<CoarseningHierarchy> {
        &self.hierarchy
    }

    pub fn lambda_mode(&self) -> LambdaMaxMode {
        self.lambda_mode
    }

    /// Nodes in the graph the model reads its inputs from.
    pub fn n_inputs(&self) -> usize {
        self.hierarchy.original_graph().n_nodes()
    }

    /// Supernode count at the model's final level.
    pub fn n_supernodes(&self) -> usize {
        self.hierarchy.n_nodes_at(self.config.n_levels)
    }

    /// Channel count of the final supernode embeddings.
    pub fn final_channels(&self) -> usize {
        self.config.resolved_channels().last().copied().unwrap_or(1)
    }

    pub fn batch_norm(&self) -> &BatchNormState {
        &self.bn
    }

    pub fn batch_norm_mut(&mut self) -> &mut BatchNormState {
        &mut self.bn
    }

    /// Visit every learnable parameter in a fixed order.
    pub fn for_each_param(&self, mut f: impl FnMut(&str, &Tensor)) {
        for (i, conv) in self.conv_filters.iter().enumerate() {
            f(&format!("conv{i}.theta0"), &conv.theta0);
            f(&format!("conv{i}.theta1"), &conv.theta1);
        }
        for (l, w) in self.pool_weights.iter().enumerate() {
            f(&format!("pool{l}.w"), w);
        }
        f("mlp.w1", &self.w1);
        f("mlp.b1", &self.b1);
        f("mlp.w2", &self.w2);
        f("mlp.b2", &self.b2);
        f("bn.gamma", &self.bn.gamma);
        f("bn.beta", &self.bn.beta);
    }

    /// Mutable access to a parameter by the names used in
    /// [`for_each_param`](Self::for_each_param).
    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        if let Some(rest) = name.strip_prefix("conv") {
            let (idx, field) = rest.split_once('.')?;
            let i: usize = idx.parse().ok()?;
            let conv = self.conv_filters.get_mut(i)?;
            return match field {
                "theta0" => Some(&mut conv.theta0),
                "theta1" => Some(&mut conv.theta1),
                _ => None,
            };
        }
        if let Some(rest) = name.strip_prefix("pool") {
            let (idx, field) = rest.split_once('.')?;
            if field != "w" {
                return None;
            }
            let l: usize = idx.parse().ok()?;
            return self.pool_weights.get_mut(l);
        }
        match name {
            "mlp.w1" => Some(&mut self.w1),
            "mlp.b1" => Some(&mut self.b1),
            "mlp.w2" => Some(&mut self.w2),
            "mlp.b2" => Some(&mut self.b2),
            "bn.gamma" => Some(&mut self.bn.gamma),
            "bn.beta" => Some(&mut self.bn.beta),
            _ => None,
        }
    }

    /// Exact count of learnable scalars.
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        self.for_each_param(|_, t| count += t.numel());
        count
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        match x.shape() {
            [b, n] if *n == self.n_inputs() => Ok((*b, *n)),
            s => Err(Error::Shape(format!(
                "input shape {s:?} does not match B×{}",
                self.n_inputs()
            ))),
        }
    }

    /// Record a forward pass on `tape`. Parameters are registered through
    /// `bind`, which lets callers substitute a preexisting tape node for one
    /// named parameter (gradient checks) or register them all as constants.
    fn forward_core(
        &self,
        tape: &mut Tape,
        x: NodeId,
        batch: usize,
        mode: ForwardMode,
        bind: &mut dyn FnMut(&mut Tape, &str, &Tensor) -> NodeId,
    ) -> Result<ForwardHandles> {
        let mut params: Vec<(String, NodeId)> = Vec::new();

        let n0 = self.n_inputs();
        let mut h = tape.reshape(x, vec![batch * n0, 1])?;
        for l in 0..self.config.n_levels {
            if l >= self.config.conv_start_level {
                let i = l - self.config.conv_start_level;
                let name0 = format!("conv{i}.theta0");
                let t0 = bind(tape, &name0, &self.conv_filters[i].theta0);
                params.push((name0, t0));
                let name1 = format!("conv{i}.theta1");
                let t1 = bind(tape, &name1, &self.conv_filters[i].theta1);
                params.push((name1, t1));
                h = cheb_conv(tape, &self.laplacians[i], h, t0, t1)?;
            }
            let wname = format!("pool{l}.w");
            let w = bind(tape, &wname, &self.pool_weights[l]);
            params.push((wname, w));
            let assignment = self.hierarchy.level(l).assignment.clone();
            h = weighted_pool(tape, &assignment, h, w)?;
            h = tape.relu(h)?;
        }
        let embeddings = h;

        let flat_cols = self.n_supernodes() * self.final_channels();
        let flat = tape.reshape(h, vec![batch, flat_cols])?;
        let w1 = bind(tape, "mlp.w1", &self.w1);
        params.push(("mlp.w1".into(), w1));
        let b1 = bind(tape, "mlp.b1", &self.b1);
        params.push(("mlp.b1".into(), b1));
        let z1 = tape.matmul(flat, w1)?;
        let z1 = tape.add_bias(z1, b1)?;

        let gamma = bind(tape, "bn.gamma", &self.bn.gamma);
        params.push(("bn.gamma".into(), gamma));
        let beta = bind(tape, "bn.beta", &self.bn.beta);
        params.push(("bn.beta".into(), beta));
        let (normed, batch_stats) = match mode {
            ForwardMode::Train { dropout_seed } => {
                let dropped = if self.config.dropout_p > 0.0 {
                    tape.dropout(z1, self.config.dropout_p, dropout_seed)?
                } else {
                    z1
                };
                let (y, stats) = tape.batchnorm_train(dropped, gamma, beta, self.bn.eps)?;
                (y, Some(stats))
            }
            ForwardMode::Eval => {
                let y = tape.batchnorm_eval(
                    z1,
                    gamma,
                    beta,
                    &self.bn.running_mean,
                    &self.bn.running_var,
                    self.bn.eps,
                )?;
                (y, None)
            }
        };
        let hidden = tape.relu(normed)?;

        let w2 = bind(tape, "mlp.w2", &self.w2);
        params.push(("mlp.w2".into(), w2));
        let b2 = bind(tape, "mlp.b2", &self.b2);
        params.push(("mlp.b2".into(), b2));
        let z2 = tape.matmul(hidden, w2)?;
        let logits = tape.add_bias(z2, b2)?;

        Ok(ForwardHandles {
            x,
            embeddings,
            logits,
            params,
            batch_stats,
        })
    }

    /// Training forward pass: registers parameters as differentiable inputs
    /// and folds the batch statistics into the running averages.
    pub fn forward_train(
        &mut self,
        tape: &mut Tape,
        x: &Tensor,
        dropout_seed: u64,
    ) -> Result<ForwardHandles> {
        let (batch, _) = self.check_input(x)?;
        let xid = tape.constant(x.clone());
        let handles = self.forward_core(
            tape,
            xid,
            batch,
            ForwardMode::Train { dropout_seed },
            &mut |tape, _, t| tape.param(t.clone()),
        )?;
        if let Some(stats) = &handles.batch_stats {
            let m = self.bn.momentum;
            for j in 0..self.bn.running_mean.len() {
                self.bn.running_mean[j] = (1.0 - m) * self.bn.running_mean[j] + m * stats.mean[j];
                self.bn.running_var[j] =
                    (1.0 - m) * self.bn.running_var[j] + m * stats.var_unbiased[j];
            }
        }
        Ok(handles)
    }

    /// Eval-mode forward pass on an existing tape. `x_requires_grad` makes
    /// the input differentiable (saliency); parameters register as constants.
    pub fn forward_eval(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        x_requires_grad: bool,
    ) -> Result<ForwardHandles> {
        let (batch, _) = self.check_input(x)?;
        let xid = if x_requires_grad {
            tape.param(x.clone())
        } else {
            tape.constant(x.clone())
        };
        self.forward_core(tape, xid, batch, ForwardMode::Eval, &mut |tape, _, t| {
            tape.constant(t.clone())
        })
    }

    /// Eval-mode forward pass from an input node already recorded on the
    /// tape (shape `batch × N_0`); parameters register as constants.
    pub fn forward_eval_from(
        &self,
        tape: &mut Tape,
        x: NodeId,
        batch: usize,
    ) -> Result<ForwardHandles> {
        let shape = tape.shape(x).to_vec();
        if shape != [batch, self.n_inputs()] {
            return Err(Error::Shape(format!(
                "input node has shape {shape:?}, expected [{batch}, {}]",
                self.n_inputs()
            )));
        }
        self.forward_core(tape, x, batch, ForwardMode::Eval, &mut |tape, _, t| {
            tape.constant(t.clone())
        })
    }

    /// Eval-mode forward pass with one named parameter group bound to an
    /// existing tape node; used by gradient checks over parameter groups.
    pub fn forward_eval_bound(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        bound_name: &str,
        bound_id: NodeId,
    ) -> Result<ForwardHandles> {
        let (batch, _) = self.check_input(x)?;
        let xid = tape.constant(x.clone());
        let mut used = false;
        let handles =
            self.forward_core(tape, xid, batch, ForwardMode::Eval, &mut |tape, name, t| {
                if name == bound_name {
                    used = true;
                    bound_id
                } else {
                    tape.constant(t.clone())
                }
            })?;
        if !used {
            return Err(Error::Contract(format!(
                "parameter `{bound_name}` is not part of this architecture"
            )));
        }
        Ok(handles)
    }

    /// Eval-mode prediction: logits `B×C` and pre-flatten supernode
    /// embeddings reshaped to `B×N_L×F_L`.
    pub fn model_forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let handles = self.forward_eval(&mut tape, x, false)?;
        let logits = tape.to_tensor(handles.logits);
        let emb_flat = tape.to_tensor(handles.embeddings);
        let batch = x.shape()[0];
        let embeddings = Tensor::new(
            vec![batch, self.n_supernodes(), self.final_channels()],
            emb_flat.values().to_vec(),
        )?;
        Ok((logits, embeddings))
    }

    /// Serialize config, hierarchy digest, and all parameters (including
    /// batch-norm running statistics) as JSON.
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let mut parameters = BTreeMap::new();
        self.for_each_param(|name, t| {
            parameters.insert(name.to_string(), tensor_to_nested(t));
        });
        parameters.insert(
            "bn.running_mean".to_string(),
            tensor_to_nested(&Tensor::vector(self.bn.running_mean.clone())),
        );
        parameters.insert(
            "bn.running_var".to_string(),
            tensor_to_nested(&Tensor::vector(self.bn.running_var.clone())),
        );
        let doc = CheckpointDocument {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            lambda_max_mode: match self.lambda_mode {
                LambdaMaxMode::Approximate => "approximate".to_string(),
                LambdaMaxMode::Estimated => "estimated".to_string(),
            },
            hierarchy_digest: self.hierarchy.digest(),
            parameters,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Rebuild a model from checkpoint JSON against a hierarchy. Refuses a
    /// hierarchy whose digest differs unless `force` is set; shape mismatches
    /// always fail.
    pub fn from_checkpoint_json(
        json: &str,
        hierarchy: Arc<CoarseningHierarchy>,
        force: bool,
    ) -> Result<Self> {
        let doc: CheckpointDocument = serde_json::from_str(json)?;
        if doc.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint format_version {} unsupported (expected {})",
                doc.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        if !force && doc.hierarchy_digest != hierarchy.digest() {
            return Err(Error::Schema(format!(
                "checkpoint was trained against hierarchy digest {:016x}, \
                 supplied hierarchy has {:016x} (use force to override)",
                doc.hierarchy_digest,
                hierarchy.digest()
            )));
        }
        let lambda_mode = match doc.lambda_max_mode.as_str() {
            "approximate" => LambdaMaxMode::Approximate,
            "estimated" => LambdaMaxMode::Estimated,
            other => {
                return Err(Error::Schema(format!("unknown lambda_max_mode `{other}`")));
            }
        };
        let mut model = GnnModel::new(doc.config, hierarchy, lambda_mode, 0)?;

        let mut expected: Vec<(String, Vec<usize>)> = Vec::new();
        model.for_each_param(|name, t| expected.push((name.to_string(), t.shape().to_vec())));
        expected.push(("bn.running_mean".into(), vec![model.bn.running_mean.len()]));
        expected.push(("bn.running_var".into(), vec![model.bn.running_var.len()]));

        for (name, shape) in &expected {
            let value = doc
                .parameters
                .get(name)
                .ok_or_else(|| Error::Schema(format!("checkpoint is missing parameter `{name}`")))?;
            let tensor = nested_to_tensor(value)
                .map_err(|e| Error::Schema(format!("parameter `{name}`: {e}")))?;
            if tensor.shape() != shape.as_slice() {
                return Err(Error::Schema(format!(
                    "parameter `{name}` has shape {:?}, expected {:?} for this hierarchy",
                    tensor.shape(),
                    shape
                )));
            }
            match name.as_str() {
                "bn.running_mean" => model.bn.running_mean = tensor.values().to_vec(),
                "bn.running_var" => model.bn.running_var = tensor.values().to_vec(),
                _ => {
                    *model
                        .param_mut(name)
                        .expect("expected names come from for_each_param") = tensor;
                }
            }
        }
        Ok(model)
    }
}

/// Flattened feature count entering the MLP: `N_L × F_L`.
fn flat_dim(config: &ArchitectureConfig, hierarchy: &CoarseningHierarchy) -> usize {
    let n_l = hierarchy.n_nodes_at(config.n_levels);
    let f_l = config.resolved_channels().last().copied().unwrap_or(1);
    n_l * f_l
}

/// Learnable scalars of a flat single-hidden-layer classifier over `n_genes`
/// inputs (weights, biases, and batch-norm affine parameters).
pub fn baseline_param_count(n_genes: usize, hidden: usize, n_outputs: usize) -> usize {
    n_genes * hidden + hidden + hidden * n_outputs + n_outputs + 2 * hidden
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDocument {
    format_version: u32,
    config: ArchitectureConfig,
    lambda_max_mode: String,
    hierarchy_digest: u64,
    parameters: BTreeMap<String, serde_json::Value>,
}

/// Encode a tensor as nested JSON arrays following its shape.
fn tensor_to_nested(t: &Tensor) -> serde_json::Value {
    fn build(shape: &[usize], values: &[f64]) -> serde_json::Value {
        match shape {
            [] => serde_json::json!(values[0]),
            [n] =>

                serde_json::Value::Array(values[..*n].iter().map(|v| serde_json::json!(v)).collect()),
            [n, rest @ ..] => {
                let stride: usize = rest.iter().product();
                serde_json::Value::Array(
                    (0..*n)
                        .map(|i| build(rest, &values[i * stride..(i + 1) * stride]))
                        .collect(),
                )
            }
        }
    }
    build(t.shape(), t.values())
}

/// Decode nested JSON arrays into a tensor, inferring the shape.
fn nested_to_tensor(value: &serde_json::Value) -> Result<Tensor> {
    fn shape_of(value: &serde_json::Value, shape: &mut Vec<usize>) -> Result<()> {
        match value {
            serde_json::Value::Array(items) => {
                shape.push(items.len());
                if let Some(first) = items.first() {
                    shape_of(first, shape)?;
                }
                Ok(())
            }
            serde_json::Value::Number(_) => Ok(()),
            other => Err(Error::Schema(format!(
                "expected number or array, got {other}"
            ))),
        }
    }
    fn flatten(
        value: &serde_json::Value,
        depth: usize,
        rank: usize,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        match value {
            serde_json::Value::Array(items) => {
                if depth == rank {
                    return Err(Error::Schema("ragged nested array".into()));
                }
                for item in items {
                    flatten(item, depth + 1, rank, out)?;
                }
                Ok(())
            }
            serde_json::Value::Number(n) => {
                if depth != rank {
                    return Err(Error::Schema("ragged nested array".into()));
                }
                out.push(n.as_f64().ok_or_else(|| {
                    Error::Schema(format!("value {n} is not representable as f64"))
                })?);
                Ok(())
            }
            other => Err(Error::Schema(format!(
                "expected number or array, got {other}"
            ))),
        }
    }
    let mut shape = Vec::new();
    shape_of(value, &mut shape)?;
    let mut values = Vec::new();
    flatten(value, 0, shape.len(), &mut values)?;
    Tensor::new(shape, values).map_err(|e| Error::Schema(e.to_string()))
}
