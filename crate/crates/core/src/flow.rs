//! Conditioned latent generation via velocity-field regression.
//!
//! A small MLP `v(z, t, c)` is trained so that, along straight-line paths
//! `zt = (1-t)·z0 + t·z1` between noise and data, it predicts the constant
//! path velocity `z1 - z0` (squared-error regression with fresh `z0`, `t`
//! draws at every visit). Sampling integrates the learned field from
//! `z0 ~ N(0, I)` to `t = 1` with a fixed-step Euler or Heun scheme; the
//! condition carries a task selector (depth vs segmentation) plus scene
//! features, so one field serves both auxiliary modalities.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::{
    adam_step_mlp, mlp_backward, mlp_forward, AdamConfig, MlpGrads, MlpParams, OptState, RealVector,
};
use crate::rng::{derive_rng, splitmix64, standard_normal_vec, stream};

/// Default integration step count.
pub const DEFAULT_SOLVER_STEPS: usize = 50;
/// Default hidden layer widths for the velocity network.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Which auxiliary modality a condition requests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Depth,
    Seg,
}

impl TaskKind {
    /// Two-slot selector encoding, exactly one slot active.
    pub fn onehot(self) -> [f64; 2] {
        match self {
            TaskKind::Depth => [1.0, 0.0],
            TaskKind::Seg => [0.0, 1.0],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TaskKind::Depth => "depth",
            TaskKind::Seg => "seg",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(TaskKind::Depth),
            "seg" => Ok(TaskKind::Seg),
            other => Err(CoreError::InvalidArgument {
                context: "TaskKind::from_str",
                message: format!("unknown task {other:?}, expected \"depth\" or \"seg\""),
            }),
        }
    }
}

/// Generation condition: a task selector plus a fixed-dimension feature
/// vector describing the scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    pub task: TaskKind,
    pub content: RealVector,
}

impl ConditionVector {
    pub fn new(task: TaskKind, content: RealVector) -> Self {
        Self { task, content }
    }

    /// Flat network encoding: `[selector onehot, content...]`.
    pub fn encode(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 + self.content.len());
        out.extend_from_slice(&self.task.onehot());
        out.extend_from_slice(self.content.as_slice());
        out
    }

    /// Encoded length for a given content dimension.
    pub fn encoded_dim(content_dim: usize) -> usize {
        2 + content_dim
    }
}

/// One regression sample on a straight-line path: endpoints, a time, and the
/// interpolated state. The constructor computes `zt`, so the linear-path
/// invariant holds by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub z0: RealVector,
    pub z1: RealVector,
    pub t: f64,
    pub zt: RealVector,
    pub cond: ConditionVector,
}

impl FlowSample {
    pub fn new(z0: RealVector, z1: RealVector, t: f64, cond: ConditionVector) -> Result<Self> {
        let zt = RealVector::new(interpolate_path(z0.as_slice(), z1.as_slice(), t)?)?;
        Ok(Self {
            z0,
            z1,
            t,
            zt,
            cond,
        })
    }

    /// The regression target: the constant velocity of the straight path.
    pub fn target_velocity(&self) -> Vec<f64> {
        self.z1
            .as_slice()
            .iter()
            .zip(self.z0.as_slice())
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// Fixed-step ODE scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Euler,
    Heun,
}

/// Integration settings: `steps` uniform steps on `[0, 1]`, field evaluated
/// at left endpoints `t = i/steps` (Heun adds the right endpoint stage).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_method")]
    pub method: SolverMethod,
}

fn default_steps() -> usize {
    DEFAULT_SOLVER_STEPS
}

fn default_method() -> SolverMethod {
    SolverMethod::Euler
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_SOLVER_STEPS,
            method: SolverMethod::Euler,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(CoreError::InvalidArgument {
                context: "SolverConfig",
                message: "steps must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Anything that can be queried for a velocity at `(z, t, c)`. Implemented by
/// the learned network and by the analytic reference fields the solver tests
/// integrate against.
pub trait Velocity {
    fn velocity(&self, z: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>>;
}

/// The learned velocity network: an MLP over `concat(z, t, c)` producing a
/// latent-dimension velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    latent_dim: usize,
    cond_dim: usize,
    pub net: MlpParams,
}

impl VelocityField {
    /// Fresh field with the given hidden widths and seeded initialization.
    pub fn new(
        latent_dim: usize,
        cond_dim: usize,
        hidden: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if latent_dim == 0 {
            return Err(CoreError::InvalidArgument {
                context: "VelocityField::new",
                message: "latent dimension must be positive".into(),
            });
        }
        let mut layers = Vec::with_capacity(hidden.len() + 2);
        layers.push(latent_dim + 1 + cond_dim);
        layers.extend_from_slice(hidden);
        layers.push(latent_dim);
        Ok(Self {
            latent_dim,
            cond_dim,
            net: MlpParams::random(&layers, rng)?,
        })
    }

    /// Wraps an existing network, checking the input/output contract
    /// `in = latent + 1 + cond`, `out = latent`.
    pub fn from_net(latent_dim: usize, cond_dim: usize, net: MlpParams) -> Result<Self> {
        let sizes = net.layer_sizes();
        let expect_in = latent_dim + 1 + cond_dim;
        if sizes.first() != Some(&expect_in) || sizes.last() != Some(&latent_dim) {
            return Err(CoreError::ShapeMismatch {
                context: "VelocityField::from_net",
                expected: format!("net {expect_in} -> {latent_dim}"),
                actual: format!("net {:?}", sizes),
            });
        }
        Ok(Self {
            latent_dim,
            cond_dim,
            net,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn assemble_input(&self, z: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim || cond.len() != self.cond_dim {
            return Err(CoreError::ShapeMismatch {
                context: "VelocityField::velocity",
                expected: format!("z dim {}, cond dim {}", self.latent_dim, self.cond_dim),
                actual: format!("z dim {}, cond dim {}", z.len(), cond.len()),
            });
        }
        let mut input = Vec::with_capacity(self.latent_dim + 1 + self.cond_dim);
        input.extend_from_slice(z);
        input.push(t);
        input.extend_from_slice(cond);
        Ok(input)
    }
}

impl Velocity for VelocityField {
    fn velocity(&self, z: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        let input = self.assemble_input(z, t, cond)?;
        let (out, _) = mlp_forward(&self.net, &input)?;
        Ok(out)
    }
}

/// `zt = (1-t)·z0 + t·z1`; rejects `t` outside `[0, 1]` and unequal dims.
pub fn interpolate_path(z0: &[f64], z1: &[f64], t: f64) -> Result<Vec<f64>> {
    if z0.len() != z1.len() {
        return Err(CoreError::ShapeMismatch {
            context: "interpolate_path",
            expected: format!("equal dims, z0 has {}", z0.len()),
            actual: format!("z1 has {}", z1.len()),
        });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(CoreError::InvalidArgument {
            context: "interpolate_path",
            message: format!("t must lie in [0, 1], got {t}"),
        });
    }
    Ok(z0
        .iter()
        .zip(z1)
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect())
}

/// Mean over the batch of `||v(zt, t, c) - (z1 - z0)||^2`.
pub fn fm_loss<V: Velocity + ?Sized>(field: &V, batch: &[FlowSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(CoreError::InvalidArgument {
            context: "fm_loss",
            message: "batch must be non-empty".into(),
        });
    }
    let mut total = 0.0;
    for sample in batch {
        let v = field.velocity(sample.zt.as_slice(), sample.t, &sample.cond.encode())?;
        if v.len() != sample.z1.len() {
            return Err(CoreError::ShapeMismatch {
                context: "fm_loss",
                expected: format!("velocity dim {}", sample.z1.len()),
                actual: v.len().to_string(),
            });
        }
        let u = sample.target_velocity();
        total += v
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Loss plus its exact gradient in the network parameters: per sample the
/// output-layer gradient is `2·(v - u)/B`, backpropagated and summed in
/// batch order.
pub fn fm_loss_grad(field: &VelocityField, batch: &[FlowSample]) -> Result<(f64, MlpGrads)> {
    if batch.is_empty() {
        return Err(CoreError::InvalidArgument {
            context: "fm_loss_grad",
            message: "batch must be non-empty".into(),
        });
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grads = MlpGrads::zeros_like(&field.net);
    for sample in batch {
        let input = field.assemble_input(sample.zt.as_slice(), sample.t, &sample.cond.encode())?;
        let (out, cache) = mlp_forward(&field.net, &input)?;
        let u = sample.target_velocity();
        let diff: Vec<f64> = out.iter().zip(&u).map(|(a, b)| a - b).collect();
        total += diff.iter().map(|d| d * d).sum::<f64>();
        let output_grad: Vec<f64> = diff.iter().map(|d| 2.0 * d * inv_b).collect();
        let (g, _) = mlp_backward(&field.net, &cache, &output_grad)?;
        grads.add_scaled(&g, 1.0);
    }
    Ok((total * inv_b, grads))
}

/// One training datum: a condition and the latent it should generate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlowPairRecord", into = "FlowPairRecord")]
pub struct FlowPair {
    pub cond: ConditionVector,
    pub z1: RealVector,
}

impl FlowPair {
    pub fn new(cond: ConditionVector, z1: RealVector) -> Self {
        Self { cond, z1 }
    }
}

/// Flat serialized form: `{"task": ..., "content": [...], "target": [...]}`.
#[derive(Clone, Serialize, Deserialize)]
struct FlowPairRecord {
    task: TaskKind,
    content: Vec<f64>,
    target: Vec<f64>,
}

impl TryFrom<FlowPairRecord> for FlowPair {
    type Error = CoreError;

    fn try_from(r: FlowPairRecord) -> Result<Self> {
        Ok(FlowPair {
            cond: ConditionVector::new(r.task, RealVector::new(r.content)?),
            z1: RealVector::new(r.target)?,
        })
    }
}

impl From<FlowPair> for FlowPairRecord {
    fn from(p: FlowPair) -> Self {
        FlowPairRecord {
            task: p.cond.task,
            content: p.cond.content.to_vec(),
            target: p.z1.to_vec(),
        }
    }
}

/// Velocity-field training settings.
///
/// Every optimizer step processes exactly `batch_size` fresh regression
/// samples; pairs are assigned round-robin, so with `batch_size` larger than
/// the dataset each pair contributes several independent `(z0, t)` draws per
/// step (the sample space is infinite under re-noising), while `batch_size`
/// at or below the dataset size reduces to ordinary mini-batch chunking. An
/// epoch is `ceil(n / batch_size)` steps, at least one.
///
/// `lr` is the peak of a cosine schedule annealed to zero over the whole run,
/// which removes the stochastic-gradient noise floor that a constant step
/// size leaves behind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for FlowTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10000,
            batch_size: 256,
            lr: 1e-2,
        }
    }
}

impl FlowTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::InvalidArgument {
                context: "FlowTrainConfig",
                message: "batch_size must be at least 1".into(),
            });
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(CoreError::InvalidArgument {
                context: "FlowTrainConfig",
                message: format!("lr must be positive and finite, got {}", self.lr),
            });
        }
        Ok(())
    }
}

/// Trains the field by squared-error regression onto path velocities,
/// redrawing `z0 ~ N(0, I)` and `t ~ U[0, 1]` for every pair at every visit.
/// Returns the per-step mini-batch loss curve; aborts with the step index if
/// the loss stops being finite.
pub fn fm_train(
    field: &mut VelocityField,
    pairs: &[FlowPair],
    cfg: &FlowTrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(CoreError::InvalidArgument {
            context: "fm_train",
            message: "dataset must be non-empty".into(),
        });
    }
    for (i, pair) in pairs.iter().enumerate() {
        if pair.z1.len() != field.latent_dim || pair.cond.encode().len() != field.cond_dim {
            return Err(CoreError::ShapeMismatch {
                context: "fm_train",
                expected: format!(
                    "latent dim {}, encoded cond dim {}",
                    field.latent_dim, field.cond_dim
                ),
                actual: format!(
                    "pair {i}: latent dim {}, encoded cond dim {}",
                    pair.z1.len(),
                    pair.cond.encode().len()
                ),
            });
        }
    }

    let mut opt = OptState::new(field.net.param_count());
    let n = pairs.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size).max(1);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut curve = Vec::with_capacity(total_steps);
    for epoch in 0..cfg.epochs {
        for step_in_epoch in 0..steps_per_epoch {
            let frac = curve.len() as f64 / total_steps as f64;
            let lr = cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
            let adam = AdamConfig::with_lr(lr);
            let mut rng = derive_rng(
                seed,
                &[stream::FLOW_TRAIN, epoch as u64, step_in_epoch as u64],
            );
            let base = step_in_epoch * cfg.batch_size;
            let mut batch = Vec::with_capacity(cfg.batch_size);
            for j in 0..cfg.batch_size {
                use rand::Rng;
                let pair = &pairs[(base + j) % n];
                let z0 = RealVector::new(standard_normal_vec(&mut rng, field.latent_dim))?;
                let t: f64 = rng.random();
                batch.push(FlowSample::new(z0, pair.z1.clone(), t, pair.cond.clone())?);
            }
            let (loss, grads) = fm_loss_grad(field, &batch)?;
            if !loss.is_finite() {
                return Err(CoreError::NonFinite {
                    context: "fm_train loss",
                    step: Some(curve.len()),
                });
            }
            adam_step_mlp(&mut field.net, &grads, &mut opt, &adam)?;
            curve.push(loss);
        }
    }
    Ok(curve)
}

/// Integrates `dz/dt = v(z, t, c)` from `t = 0` to `1` and returns the final
/// state. See [`integrate_trajectory`] for the full path.
pub fn integrate<V: Velocity + ?Sized>(
    field: &V,
    z0: &[f64],
    cond: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    Ok(integrate_trajectory(field, z0, cond, solver)?
        .pop()
        .expect("trajectory always contains the initial state"))
}

/// Fixed-step integration recording every state `z(i/T)`, `i = 0..=T`.
///
/// Euler: `z += h·v(z, t)`. Heun: `z += h/2·(v(z, t) + v(z + h·v(z, t), t+h))`.
/// Aborts with the step index if the state stops being finite.
pub fn integrate_trajectory<V: Velocity + ?Sized>(
    field: &V,
    z0: &[f64],
    cond: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    solver.validate()?;
    let t_count = solver.steps;
    let h = 1.0 / t_count as f64;
    let mut z = z0.to_vec();
    let mut traj = Vec::with_capacity(t_count + 1);
    traj.push(z.clone());
    for i in 0..t_count {
        let t = i as f64 / t_count as f64;
        let k1 = field.velocity(&z, t, cond)?;
        if k1.len() != z.len() {
            return Err(CoreError::ShapeMismatch {
                context: "integrate_trajectory",
                expected: format!("velocity dim {}", z.len()),
                actual: k1.len().to_string(),
            });
        }
        match solver.method {
            SolverMethod::Euler => {
                for (zj, kj) in z.iter_mut().zip(&k1) {
                    *zj += h * kj;
                }
            }
            SolverMethod::Heun => {
                let predictor: Vec<f64> = z.iter().zip(&k1).map(|(zj, kj)| zj + h * kj).collect();
                let t_next = (i + 1) as f64 / t_count as f64;
                let k2 = field.velocity(&predictor, t_next, cond)?;
                for ((zj, k1j), k2j) in z.iter_mut().zip(&k1).zip(&k2) {
                    *zj += 0.5 * h * (k1j + k2j);
                }
            }
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite {
                context: "integrate_trajectory state",
                step: Some(i),
            });
        }
        traj.push(z.clone());
    }
    Ok(traj)
}

/// A generated latent tagged with the task that selects its decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedLatent {
    pub task: TaskKind,
    pub latent: RealVector,
}

/// Draws `z0 ~ N(0, I)` from the seed, integrates the field under the given
/// condition, and tags the result with the condition's task.
pub fn generate_aux(
    field: &VelocityField,
    cond: &ConditionVector,
    seed: u64,
    solver: &SolverConfig,
) -> Result<GeneratedLatent> {
    let mut rng = derive_rng(seed, &[stream::FLOW_GEN]);
    let z0 = standard_normal_vec(&mut rng, field.latent_dim);
    let z1 = integrate(field, &z0, &cond.encode(), solver)?;
    Ok(GeneratedLatent {
        task: cond.task,
        latent: RealVector::new(z1)?,
    })
}

/// Largest distance between a generated latent and its pair's target, over
/// all pairs (generation seeded per pair index).
pub fn max_generation_error(
    field: &VelocityField,
    pairs: &[FlowPair],
    solver: &SolverConfig,
    seed: u64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, pair) in pairs.iter().enumerate() {
        let gen = generate_aux(field, &pair.cond, splitmix64(seed ^ i as u64), solver)?;
        worst = worst.max(gen.latent.dist(&pair.z1)?);
    }
    Ok(worst)
}

/// Largest relative error between the learned field and the one-target
/// closed form `v*(z, t) = (z1 - z)/(1 - t)`, probed on interpolation paths
/// at the given times with `draws` source latents per (pair, time).
pub fn max_velocity_rel_error(
    field: &VelocityField,
    pairs: &[FlowPair],
    ts: &[f64],
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, pair) in pairs.iter().enumerate() {
        let mut rng = derive_rng(seed, &[stream::EVAL, i as u64]);
        for _ in 0..draws {
            let z0 = standard_normal_vec(&mut rng, field.latent_dim);
            for &t in ts {
                if !(0.0..1.0).contains(&t) {
                    return Err(CoreError::InvalidArgument {
                        context: "max_velocity_rel_error",
                        message: format!("probe time must lie in [0, 1), got {t}"),
                    });
                }
                let zt = interpolate_path(&z0, pair.z1.as_slice(), t)?;
                let v = field.velocity(&zt, t, &pair.cond.encode())?;
                let opt: Vec<f64> = zt
                    .iter()
                    .zip(pair.z1.as_slice())
                    .map(|(z, z1)| (z1 - z) / (1.0 - t))
                    .collect();
                let err: f64 = v
                    .iter()
                    .zip(&opt)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let norm: f64 = opt.iter().map(|x| x * x).sum::<f64>().sqrt();
                worst = worst.max(err / norm.max(1e-12));
            }
        }
    }
    Ok(worst)
}

/// Measured convergence order of a solver against a known exact solution:
/// for each `T` in `step_counts`, the max-over-grid trajectory error at `T`
/// and `2T` steps gives one `log2(err_T / err_2T)` estimate; returns the mean.
pub fn convergence_order<V, F>(
    field: &V,
    z0: &[f64],
    cond: &[f64],
    method: SolverMethod,
    step_counts: &[usize],
    exact: F,
) -> Result<f64>
where
    V: Velocity + ?Sized,
    F: Fn(f64) -> Vec<f64>,
{
    if step_counts.is_empty() {
        return Err(CoreError::InvalidArgument {
            context: "convergence_order",
            message: "need at least one step count".into(),
        });
    }
    let traj_error = |t_count: usize| -> Result<f64> {
        let solver = SolverConfig {
            steps: t_count,
            method,
        };
        let traj = integrate_trajectory(field, z0, cond, &solver)?;
        let mut worst = 0.0f64;
        for (i, state) in traj.iter().enumerate() {
            let reference = exact(i as f64 / t_count as f64);
            let err: f64 = state
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(err);
        }
        Ok(worst)
    };
    let mut orders = Vec::with_capacity(step_counts.len());
    for &t_count in step_counts {
        let coarse = traj_error(t_count)?;
        let fine = traj_error(2 * t_count)?;
        if fine == 0.0 || coarse == 0.0 {
            return Err(CoreError::Numeric {
                context: "convergence_order",
                message: format!("zero trajectory error at T={t_count}; order undefined"),
            });
        }
        orders.push((coarse / fine).log2());
    }
    Ok(orders.iter().sum::<f64>() / orders.len() as f64)
}

/// Analytic fields with closed-form flows, used to validate the integrators
/// and as regression oracles.
pub mod reference {
    use super::{Result, Velocity};
    use crate::error::CoreError;

    /// `v ≡ u`, ignoring state, time, and condition; exact flow
    /// `z(t) = z(0) + t·u`.
    pub struct ConstantField(pub Vec<f64>);

    impl Velocity for ConstantField {
        fn velocity(&self, _z: &[f64], _t: f64, _cond: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    /// `v(z, t) = cos(2πt)·u`; exact flow `z(t) = z(0) + sin(2πt)/(2π)·u`,
    /// so the full-period displacement is zero and all solver error is
    /// discretization error.
    pub struct CosineField(pub Vec<f64>);

    impl Velocity for CosineField {
        fn velocity(&self, _z: &[f64], t: f64, _cond: &[f64]) -> Result<Vec<f64>> {
            let a = (2.0 * std::f64::consts::PI * t).cos();
            Ok(self.0.iter().map(|u| a * u).collect())
        }
    }

    /// The closed-form optimum for a single-target dataset:
    /// `v(z, t) = (z1 - z)/(1 - t)`. Euler on the grid `t = i/T` transports
    /// any start exactly onto `z1`; undefined at `t = 1`, so Heun (which
    /// evaluates the right endpoint) cannot use it.
    pub struct PointTargetField(pub Vec<f64>);

    impl Velocity for PointTargetField {
        fn velocity(&self, z: &[f64], t: f64, _cond: &[f64]) -> Result<Vec<f64>> {
            if t >= 1.0 {
                return Err(CoreError::InvalidArgument {
                    context: "PointTargetField",
                    message: format!("field undefined at t >= 1 (got {t})"),
                });
            }
            Ok(self
                .0
                .iter()
                .zip(z)
                .map(|(z1, zj)| (z1 - zj) / (1.0 - t))
                .collect())
        }
    }
}

/// Four well-separated (condition, target) pairs — both tasks crossed with
/// two content vectors — small enough to train in seconds yet rich enough to
/// exercise task-selected generation.
pub fn demo_pairs() -> Vec<FlowPair> {
    let content_a = RealVector::new(vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).unwrap();
    let content_b = RealVector::new(vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0]).unwrap();
    // Scaled rows of an order-8 sign matrix: any two targets differ in four
    // coordinates, giving pairwise distance 6.
    let targets = [
        [1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5],
        [1.5, -1.5, 1.5, -1.5, 1.5, -1.5, 1.5, -1.5],
        [1.5, 1.5, -1.5, -1.5, 1.5, 1.5, -1.5, -1.5],
        [1.5, -1.5, -1.5, 1.5, 1.5, -1.5, -1.5, 1.5],
    ];
    let conds = [
        ConditionVector::new(TaskKind::Depth, content_a.clone()),
        ConditionVector::new(TaskKind::Seg, content_a),
        ConditionVector::new(TaskKind::Depth, content_b.clone()),
        ConditionVector::new(TaskKind::Seg, content_b),
    ];
    conds
        .into_iter()
        .zip(targets)
        .map(|(cond, target)| FlowPair::new(cond, RealVector::new(target.to_vec()).unwrap()))
        .collect()
}
