//! Python bindings for the cooper training laboratory.
//!
//! The module mirrors the library's main types and operations: the raster
//! codecs, velocity-field training and generation, the synthetic item
//! environment with its gate/modality/answer policy, gain curation, the
//! composite reward formulas, and both training loops. Everything is seeded
//! explicitly, so results match the Rust pipeline bit for bit.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cooper_core::codec::{
    compute_percentiles, depth_to_pseudo, make_palette, pseudo_to_depth, pseudo_to_seg,
    seg_to_pseudo, DepthMap, PseudoImage, SegMask,
};
use cooper_core::cognition::{
    build_demos, generate_items, policy_sample, rollout_seed, CuratedItem, GainLabel, HintConfig,
    PolicyParams, Response, Segment, SftConfig, ToyItem, FEATURE_DIM,
};
use cooper_core::config::RunConfig;
use cooper_core::curation::{CurationConfig, SamplingConfig};
use cooper_core::error::CoreError;
use cooper_core::flow::{
    demo_pairs, fm_train, generate_aux, ConditionVector, FlowTrainConfig, SolverConfig,
    SolverMethod, TaskKind, VelocityField,
};
use cooper_core::grpo::{train_loop, GrpoConfig, TrainMetrics};
use cooper_core::io::{FlowCheckpoint, PolicyCheckpoint};
use cooper_core::numerics::RealVector;
use cooper_core::reward::ExplorationContext;
use cooper_core::rng::{derive_rng, stream};

/// Input and shape problems become `ValueError`; numeric blow-ups become
/// `RuntimeError`, matching the CLI's exit-code split.
fn py_err(e: CoreError) -> PyErr {
    if e.is_numeric() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse_task(task: &str) -> PyResult<TaskKind> {
    match task {
        "depth" => Ok(TaskKind::Depth),
        "seg" => Ok(TaskKind::Seg),
        other => Err(PyValueError::new_err(format!(
            "unknown task {other:?}; expected \"depth\" or \"seg\""
        ))),
    }
}

fn parse_solver(steps: usize, method: &str) -> PyResult<SolverConfig> {
    let method = match method {
        "euler" => SolverMethod::Euler,
        "heun" => SolverMethod::Heun,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown solver method {other:?}; expected \"euler\" or \"heun\""
            )))
        }
    };
    Ok(SolverConfig { steps, method })
}

fn parse_gain(gain: i8) -> PyResult<GainLabel> {
    GainLabel::try_from(gain).map_err(py_err)
}

fn hint_config(hints: (f64, f64, f64)) -> HintConfig {
    HintConfig {
        h_plus: hints.0,
        h_zero: hints.1,
        h_minus: hints.2,
    }
}

const DEFAULT_HINTS: (f64, f64, f64) = (4.0, 0.5, 4.0);

/// One synthetic multiple-choice item.
#[pyclass(name = "Item")]
#[derive(Clone)]
struct PyItem {
    inner: ToyItem,
}

#[pymethods]
impl PyItem {
    /// Stable item identifier.
    #[getter]
    fn id(&self) -> u64 {
        self.inner.id
    }

    /// Latent feature vector conditioning auxiliary generation.
    #[getter]
    fn features(&self) -> Vec<f64> {
        self.inner.features.clone()
    }

    /// The correct answer letter.
    #[getter]
    fn correct(&self) -> &'static str {
        self.inner.correct.letter()
    }

    /// The answer an auxiliary view argues for when it misleads.
    #[getter]
    fn misleading(&self) -> &'static str {
        self.inner.misleading.letter()
    }

    /// Generative visual gain: 1 helpful, -1 misleading, 0 neutral.
    #[getter]
    fn gain(&self) -> i8 {
        self.inner.gain.value()
    }

    fn __repr__(&self) -> String {
        format!(
            "Item(id={}, correct={:?}, gain={})",
            self.inner.id,
            self.inner.correct.letter(),
            self.inner.gain.value()
        )
    }
}

/// An item paired with the gain label assigned by curation.
#[pyclass(name = "CuratedItem")]
#[derive(Clone)]
struct PyCurated {
    inner: CuratedItem,
}

#[pymethods]
impl PyCurated {
    /// Wraps an item taking its generative gain at face value.
    #[staticmethod]
    fn trusted(item: PyItem) -> PyCurated {
        PyCurated {
            inner: CuratedItem::trusted(item.inner),
        }
    }

    #[getter]
    fn item(&self) -> PyItem {
        PyItem {
            inner: self.inner.item.clone(),
        }
    }

    /// The curated gain label: 1, 0, or -1.
    #[getter]
    fn gain(&self) -> i8 {
        self.inner.curated_gain.value()
    }

    fn __repr__(&self) -> String {
        format!(
            "CuratedItem(id={}, gain={})",
            self.inner.item.id,
            self.inner.curated_gain.value()
        )
    }
}

/// A trained velocity field that generates auxiliary latents by ODE
/// integration from noise.
#[pyclass(name = "FlowModel")]
struct PyFlow {
    field: VelocityField,
}

#[pymethods]
impl PyFlow {
    /// Trains a fresh field on the built-in demonstration pairs and returns
    /// it with the per-step loss curve.
    #[staticmethod]
    #[pyo3(signature = (seed, epochs=10000, batch_size=256, lr=0.01, hidden=vec![64, 64]))]
    fn train_demo(
        seed: u64,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        hidden: Vec<usize>,
    ) -> PyResult<(PyFlow, Vec<f64>)> {
        let pairs = demo_pairs();
        let content_dim = pairs[0].cond.content.len();
        let latent_dim = pairs[0].z1.len();
        let mut field = VelocityField::new(
            latent_dim,
            ConditionVector::encoded_dim(content_dim),
            &hidden,
            &mut derive_rng(seed, &[stream::FIELD_INIT]),
        )
        .map_err(py_err)?;
        let cfg = FlowTrainConfig {
            epochs,
            batch_size,
            lr,
        };
        let curve = fm_train(&mut field, &pairs, &cfg, seed).map_err(py_err)?;
        Ok((PyFlow { field }, curve))
    }

    /// Integrates noise into a latent for the given task and content vector.
    #[pyo3(signature = (task, content, seed, steps=50, method="euler"))]
    fn generate(
        &self,
        task: &str,
        content: Vec<f64>,
        seed: u64,
        steps: usize,
        method: &str,
    ) -> PyResult<Vec<f64>> {
        let cond =
            ConditionVector::new(parse_task(task)?, RealVector::new(content).map_err(py_err)?);
        let solver = parse_solver(steps, method)?;
        let generated = generate_aux(&self.field, &cond, seed, &solver).map_err(py_err)?;
        Ok(generated.latent.to_vec())
    }

    /// Saves a JSON checkpoint.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        FlowCheckpoint::new(&self.field, &RunConfig::default())
            .save(&path)
            .map_err(py_err)
    }

    /// Loads a JSON checkpoint written by `save` or the CLI.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<PyFlow> {
        let field = FlowCheckpoint::load(&path)
            .and_then(|c| c.to_field())
            .map_err(py_err)?;
        Ok(PyFlow { field })
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.field.latent_dim()
    }

    fn __repr__(&self) -> String {
        format!("FlowModel(latent_dim={})", self.field.latent_dim())
    }
}

/// One sampled interleaved response.
#[pyclass(name = "Response")]
struct PyResponse {
    inner: Response,
}

#[pymethods]
impl PyResponse {
    /// Whether the response generated an auxiliary view.
    #[getter]
    fn used_aux(&self) -> bool {
        self.inner.used_aux
    }

    /// The chosen answer letter, if the response reached one.
    #[getter]
    fn answer(&self) -> Option<&'static str> {
        self.inner.answer.map(|a| a.letter())
    }

    /// Log-probability of the discrete decisions at sampling time.
    #[getter]
    fn log_prob(&self) -> f64 {
        self.inner.log_prob
    }

    /// Text segments, in order.
    #[getter]
    fn text(&self) -> Vec<String> {
        self.inner
            .segments
            .iter()
            .filter_map(|s| s.text().map(str::to_owned))
            .collect()
    }

    /// `(modality, latent)` of the auxiliary segment, if one was generated.
    #[getter]
    fn aux(&self) -> Option<(&'static str, Vec<f64>)> {
        self.inner.segments.iter().find_map(|s| match s {
            Segment::VisualAux { modality, latent } => Some((modality.label(), latent.clone())),
            Segment::Text { .. } => None,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Response(used_aux={}, answer={:?}, log_prob={:.4})",
            self.inner.used_aux,
            self.inner.answer.map(|a| a.letter()),
            self.inner.log_prob
        )
    }
}

/// The factored gate/modality/answer policy.
#[pyclass(name = "Policy")]
struct PyPolicy {
    params: PolicyParams,
}

#[pymethods]
impl PyPolicy {
    /// The calibrated starting point used by the pipeline.
    #[staticmethod]
    fn base_init(seed: u64) -> PyPolicy {
        PyPolicy {
            params: PolicyParams::base_init(seed),
        }
    }

    /// Small random parameters, for tests and probes.
    #[staticmethod]
    fn random(seed: u64) -> PyPolicy {
        PyPolicy {
            params: PolicyParams::random(seed),
        }
    }

    /// Samples one response for an item.
    #[pyo3(signature = (item, seed, temperature=1.0, flow=None, steps=50, method="euler", hints=DEFAULT_HINTS))]
    #[allow(clippy::too_many_arguments)]
    fn sample(
        &self,
        item: PyRef<'_, PyItem>,
        seed: u64,
        temperature: f64,
        flow: Option<PyRef<'_, PyFlow>>,
        steps: usize,
        method: &str,
        hints: (f64, f64, f64),
    ) -> PyResult<PyResponse> {
        let solver = parse_solver(steps, method)?;
        let response = policy_sample(
            &self.params,
            &item.inner,
            temperature,
            &hint_config(hints),
            flow.as_ref().map(|f| &f.field),
            &solver,
            seed,
        )
        .map_err(py_err)?;
        Ok(PyResponse { inner: response })
    }

    /// Saves a JSON checkpoint tagged with `stage`.
    #[pyo3(signature = (path, stage="manual"))]
    fn save(&self, path: PathBuf, stage: &str) -> PyResult<()> {
        PolicyCheckpoint::new(&self.params, stage, &RunConfig::default())
            .save(&path)
            .map_err(py_err)
    }

    /// Loads a JSON checkpoint written by `save` or the CLI.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<PyPolicy> {
        let params = PolicyCheckpoint::load(&path)
            .and_then(|c| c.to_policy())
            .map_err(py_err)?;
        Ok(PyPolicy { params })
    }
}

/// Generates `n` synthetic items with round-robin gain labels.
#[pyfunction(name = "generate_items")]
fn py_generate_items(n: usize, seed: u64) -> Vec<PyItem> {
    generate_items(n, seed)
        .into_iter()
        .map(|inner| PyItem { inner })
        .collect()
}

/// Derives the shared per-rollout seed for `(base_seed, item_id, index)`.
#[pyfunction(name = "rollout_seed")]
fn py_rollout_seed(base_seed: u64, item_id: u64, rollout_index: u64) -> u64 {
    rollout_seed(base_seed, item_id, rollout_index)
}

/// Two-round accuracy probing: measures each item's visual gain under the
/// policy and splits the survivors into supervised and reinforcement pools.
/// Returns `(supervised, reinforcement, records)` where each record is
/// `(item_id, acc_raw, acc_aux, gain)`.
#[pyfunction(name = "curate")]
#[pyo3(signature = (policy, items, flow=None, k=8, tau=1.0, seed=0,
                    gain_threshold=0.375, boundary_keep_ratio=0.5, sft_fraction=0.5,
                    split_seed=0, steps=50, method="euler", hints=DEFAULT_HINTS))]
#[allow(clippy::too_many_arguments)]
fn py_curate(
    policy: PyRef<'_, PyPolicy>,
    items: Vec<PyItem>,
    flow: Option<PyRef<'_, PyFlow>>,
    k: usize,
    tau: f64,
    seed: u64,
    gain_threshold: f64,
    boundary_keep_ratio: f64,
    sft_fraction: f64,
    split_seed: u64,
    steps: usize,
    method: &str,
    hints: (f64, f64, f64),
) -> PyResult<(Vec<PyCurated>, Vec<PyCurated>, Vec<(u64, f64, f64, i8)>)> {
    let items: Vec<ToyItem> = items.into_iter().map(|i| i.inner).collect();
    let scfg = SamplingConfig { k, tau, seed };
    let ccfg = CurationConfig {
        lambda: gain_threshold,
        boundary_keep_ratio,
        sft_fraction,
        split_seed,
    };
    let solver = parse_solver(steps, method)?;
    let (sft, rl, records) = cooper_core::curation::curate(
        &policy.params,
        &items,
        &scfg,
        &ccfg,
        flow.as_ref().map(|f| &f.field),
        &hint_config(hints),
        &solver,
    )
    .map_err(py_err)?;
    let wrap = |v: Vec<CuratedItem>| v.into_iter().map(|inner| PyCurated { inner }).collect();
    let records = records
        .into_iter()
        .map(|r| (r.item_id, r.acc_raw, r.acc_aux, r.gain.value()))
        .collect();
    Ok((wrap(sft), wrap(rl), records))
}

/// Supervised warm-up on gate/modality/answer demonstrations built from the
/// curated items; mutates `policy` and returns the loss curve.
#[pyfunction(name = "sft_train")]
#[pyo3(signature = (policy, items, steps=400, lr=0.01, n_per_item=1, hints=DEFAULT_HINTS))]
fn py_sft_train(
    mut policy: PyRefMut<'_, PyPolicy>,
    items: Vec<PyCurated>,
    steps: usize,
    lr: f64,
    n_per_item: usize,
    hints: (f64, f64, f64),
) -> PyResult<Vec<f64>> {
    let items: Vec<CuratedItem> = items.into_iter().map(|c| c.inner).collect();
    let demos = build_demos(&items, n_per_item).map_err(py_err)?;
    let cfg = SftConfig {
        steps,
        lr,
        n_per_item,
    };
    cooper_core::cognition::sft_train(&mut policy.params, &demos, &hint_config(hints), &cfg)
        .map_err(py_err)
}

/// Group-relative policy optimization over the curated items; mutates
/// `policy` and returns one metrics dict per step.
#[pyfunction(name = "grpo_train")]
#[pyo3(signature = (policy, items, seed, flow=None, steps=100, group_size=8, batch_items=32,
                    lr=1e-3, clip_eps=0.2, kl_beta=0.0, std_floor=1e-8, sigma=4,
                    solver_steps=50, method="euler", hints=DEFAULT_HINTS))]
#[allow(clippy::too_many_arguments)]
fn py_grpo_train<'py>(
    py: Python<'py>,
    mut policy: PyRefMut<'_, PyPolicy>,
    items: Vec<PyCurated>,
    seed: u64,
    flow: Option<PyRef<'_, PyFlow>>,
    steps: usize,
    group_size: usize,
    batch_items: usize,
    lr: f64,
    clip_eps: f64,
    kl_beta: f64,
    std_floor: f64,
    sigma: u32,
    solver_steps: usize,
    method: &str,
    hints: (f64, f64, f64),
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let items: Vec<CuratedItem> = items.into_iter().map(|c| c.inner).collect();
    let cfg = GrpoConfig {
        clip_eps,
        kl_beta,
        lr,
        group_size,
        batch_items,
        steps,
        std_floor,
        sigma,
    };
    let solver = parse_solver(solver_steps, method)?;
    let history = train_loop(
        &mut policy.params,
        &items,
        flow.as_ref().map(|f| &f.field),
        &cfg,
        &hint_config(hints),
        &solver,
        seed,
    )
    .map_err(py_err)?;
    history.iter().map(|m| metrics_dict(py, m)).collect()
}

fn metrics_dict<'py>(py: Python<'py>, m: &TrainMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", m.step)?;
    d.set_item("mean_reward", m.mean_reward)?;
    d.set_item("mean_r_a", m.mean_r_a)?;
    d.set_item("mean_r_f", m.mean_r_f)?;
    d.set_item("mean_r_e", m.mean_r_e)?;
    d.set_item("aux_rate_pos", m.aux_rate_pos)?;
    d.set_item("aux_rate_neg", m.aux_rate_neg)?;
    d.set_item("aux_rate_bnd", m.aux_rate_bnd)?;
    d.set_item("kl", m.kl)?;
    d.set_item("clip_fraction", m.clip_fraction)?;
    Ok(d)
}

/// Correctness reward: 1.0 if the response's answer matches the item.
#[pyfunction(name = "answer_reward")]
fn py_answer_reward(response: PyRef<'_, PyResponse>, item: PyRef<'_, PyItem>) -> f64 {
    cooper_core::reward::answer_reward(&response.inner, &item.inner)
}

/// Segment-format reward: 1.0 if the response is well formed.
#[pyfunction(name = "format_reward")]
fn py_format_reward(response: PyRef<'_, PyResponse>) -> f64 {
    cooper_core::reward::format_reward(&response.inner)
}

/// Gain-aware exploration shaping for one response within its group.
#[pyfunction(name = "exploration_reward")]
fn py_exploration_reward(
    gain: i8,
    sigma: u32,
    group_size: u32,
    aux_count: u32,
    used_aux: bool,
) -> PyResult<f64> {
    cooper_core::reward::exploration_reward(&ExplorationContext {
        gain: parse_gain(gain)?,
        sigma,
        group_size,
        aux_count,
        used_aux,
    })
    .map_err(py_err)
}

/// Group-normalized advantages with a zero-variance floor.
#[pyfunction(name = "compute_advantages")]
#[pyo3(signature = (rewards, std_floor=1e-8))]
fn py_compute_advantages(rewards: Vec<f64>, std_floor: f64) -> PyResult<Vec<f64>> {
    cooper_core::grpo::compute_advantages(&rewards, std_floor).map_err(py_err)
}

/// The clipped surrogate term `min(s·A, clip(s, 1-eps, 1+eps)·A)`.
#[pyfunction(name = "clipped_term")]
fn py_clipped_term(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    cooper_core::grpo::clipped_term(ratio, advantage, clip_eps)
}

/// Classifies a `(raw, auxiliary)` accuracy pair into a gain label.
#[pyfunction(name = "classify_gain")]
#[pyo3(signature = (acc_raw, acc_aux, gain_threshold=0.375))]
fn py_classify_gain(acc_raw: f64, acc_aux: f64, gain_threshold: f64) -> i8 {
    cooper_core::curation::classify_gain(acc_raw, acc_aux, gain_threshold).value()
}

/// Encodes a raw depth map into replicated-channel pseudo-image values in
/// `[-1, 1]`; returns `(values, degenerate)` with `3*width*height` floats.
#[pyfunction(name = "encode_depth")]
#[pyo3(signature = (width, height, values, far_plane=None))]
fn py_encode_depth(
    width: usize,
    height: usize,
    values: Vec<f64>,
    far_plane: Option<f64>,
) -> PyResult<(Vec<f64>, bool)> {
    let depth = DepthMap::new(width, height, values, far_plane).map_err(py_err)?;
    let stats = compute_percentiles(&depth);
    let (img, degenerate) = depth_to_pseudo(&depth, &stats).map_err(py_err)?;
    Ok((img.data().to_vec(), degenerate))
}

/// Decodes pseudo-image values back to normalized depth in `[0, 1]`.
#[pyfunction(name = "decode_depth")]
fn py_decode_depth(width: usize, height: usize, rgb: Vec<f64>) -> PyResult<Vec<f64>> {
    let img = PseudoImage::new(width, height, rgb).map_err(py_err)?;
    Ok(pseudo_to_depth(&img).values)
}

/// Encodes a label mask into palette-colored pseudo-image values in `[-1, 1]`.
#[pyfunction(name = "encode_seg")]
#[pyo3(signature = (width, height, labels, palette_size=150))]
fn py_encode_seg(
    width: usize,
    height: usize,
    labels: Vec<u32>,
    palette_size: usize,
) -> PyResult<Vec<f64>> {
    let mask = SegMask::new(width, height, labels).map_err(py_err)?;
    let palette = make_palette(palette_size).map_err(py_err)?;
    let img = seg_to_pseudo(&mask, &palette).map_err(py_err)?;
    Ok(img.data().to_vec())
}

/// Decodes pseudo-image values back to labels by nearest palette color.
#[pyfunction(name = "decode_seg")]
#[pyo3(signature = (width, height, rgb, palette_size=150))]
fn py_decode_seg(
    width: usize,
    height: usize,
    rgb: Vec<f64>,
    palette_size: usize,
) -> PyResult<Vec<u32>> {
    let img = PseudoImage::new(width, height, rgb).map_err(py_err)?;
    let palette = make_palette(palette_size).map_err(py_err)?;
    Ok(pseudo_to_seg(&img, &palette).labels().to_vec())
}

/// The deterministic golden-angle palette as `(r, g, b)` tuples.
#[pyfunction(name = "palette")]
fn py_palette(n: usize) -> PyResult<Vec<(u8, u8, u8)>> {
    let palette = make_palette(n).map_err(py_err)?;
    Ok(palette
        .colors()
        .iter()
        .map(|c| (c[0], c[1], c[2]))
        .collect())
}

#[pymodule]
fn cooper(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyItem>()?;
    m.add_class::<PyCurated>()?;
    m.add_class::<PyFlow>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyResponse>()?;
    m.add_function(wrap_pyfunction!(py_generate_items, m)?)?;
    m.add_function(wrap_pyfunction!(py_rollout_seed, m)?)?;
    m.add_function(wrap_pyfunction!(py_curate, m)?)?;
    m.add_function(wrap_pyfunction!(py_sft_train, m)?)?;
    m.add_function(wrap_pyfunction!(py_grpo_train, m)?)?;
    m.add_function(wrap_pyfunction!(py_answer_reward, m)?)?;
    m.add_function(wrap_pyfunction!(py_format_reward, m)?)?;
    m.add_function(wrap_pyfunction!(py_exploration_reward, m)?)?;
    m.add_function(wrap_pyfunction!(py_compute_advantages, m)?)?;
    m.add_function(wrap_pyfunction!(py_clipped_term, m)?)?;
    m.add_function(wrap_pyfunction!(py_classify_gain, m)?)?;
    m.add_function(wrap_pyfunction!(py_encode_depth, m)?)?;
    m.add_function(wrap_pyfunction!(py_decode_depth, m)?)?;
    m.add_function(wrap_pyfunction!(py_encode_seg, m)?)?;
    m.add_function(wrap_pyfunction!(py_decode_seg, m)?)?;
    m.add_function(wrap_pyfunction!(py_palette, m)?)?;
    m.add("FEATURE_DIM", FEATURE_DIM)?;
    Ok(())
}
