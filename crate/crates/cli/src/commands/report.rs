//! Run summary: collapse the metrics files plus built-in solver and codec
//! self-checks into one JSON document with a stable key schema, so CI can
//! assert on it with a generic parser.

use serde::Serialize;

use cooper_core::codec::{
    compute_percentiles, depth_to_pseudo, make_palette, pseudo_to_depth, pseudo_to_seg,
    seg_to_pseudo, DepthMap, PseudoImage, SegMask,
};
use cooper_core::config::RunConfig;
use cooper_core::flow::{convergence_order, reference::CosineField, SolverMethod};
use cooper_core::grpo::TrainMetrics;
use cooper_core::io::{
    dequantize_channel, dequantize_unit, quantize_channel, quantize_unit, read_loss_csv,
    read_metrics_csv, write_json,
};
use cooper_core::{CoreError, Result};

use crate::commands::eval::EvalReport;
use crate::workspace::Workspace;

#[derive(Serialize)]
struct Report {
    flow: Option<CurveSummary>,
    sft: Option<CurveSummary>,
    grpo: Option<GrpoSummary>,
    eval: Option<EvalReport>,
    solver_orders: SolverOrders,
    codec: CodecChecks,
}

#[derive(Serialize)]
struct CurveSummary {
    steps: usize,
    final_loss: f64,
}

#[derive(Serialize)]
struct GrpoSummary {
    steps: usize,
    #[serde(rename = "final")]
    last: TrainMetrics,
}

#[derive(Serialize)]
struct SolverOrders {
    euler: f64,
    heun: f64,
}

#[derive(Serialize)]
struct CodecChecks {
    depth_max_roundtrip_error: f64,
    depth_roundtrip_bound: f64,
    seg_roundtrip_exact: bool,
    palette_size: usize,
    palette_min_sq_dist: u32,
}

pub fn run(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    let flow = read_curve(&ws.flow_loss())?;
    let sft = read_curve(&ws.sft_loss())?;
    let grpo = match ws.grpo_metrics().exists() {
        true => {
            let rows: Vec<TrainMetrics> = read_metrics_csv(&ws.grpo_metrics())?;
            rows.last().map(|&last| GrpoSummary {
                steps: rows.len(),
                last,
            })
        }
        false => None,
    };
    if flow.is_none() && sft.is_none() && grpo.is_none() {
        return Err(CoreError::InvalidArgument {
            context: "report",
            message: format!(
                "no metrics found in {}; run `cooper flow train`, `cooper sft`, or \
                 `cooper grpo` first",
                ws.dir().display()
            ),
        });
    }
    let eval = match ws.eval_report().exists() {
        true => Some(cooper_core::io::read_json(&ws.eval_report())?),
        false => None,
    };

    let report = Report {
        flow,
        sft,
        grpo,
        eval,
        solver_orders: measure_solver_orders()?,
        codec: codec_checks(cfg)?,
    };
    write_json(&ws.report(), &report)?;
    println!("wrote {}", ws.report().display());
    Ok(())
}

fn read_curve(path: &std::path::Path) -> Result<Option<CurveSummary>> {
    if !path.exists() {
        return Ok(None);
    }
    let curve = read_loss_csv(path)?;
    Ok(curve.last().map(|&loss| CurveSummary {
        steps: curve.len(),
        final_loss: loss,
    }))
}

/// Convergence orders on the cosine benchmark field, where the exact flow is
/// known in closed form.
fn measure_solver_orders() -> Result<SolverOrders> {
    let u = vec![1.0, -2.0, 0.5];
    let z0 = vec![0.3, -0.7, 1.1];
    let field = CosineField(u.clone());
    let exact = |t: f64| -> Vec<f64> {
        let s = (2.0 * std::f64::consts::PI * t).sin() / (2.0 * std::f64::consts::PI);
        z0.iter().zip(&u).map(|(z, uj)| z + s * uj).collect()
    };
    Ok(SolverOrders {
        euler: convergence_order(&field, &z0, &[], SolverMethod::Euler, &[10, 20, 40], exact)?,
        heun: convergence_order(&field, &z0, &[], SolverMethod::Heun, &[10, 20, 40], exact)?,
    })
}

/// Deterministic file-quantization round trips on synthetic rasters.
fn codec_checks(cfg: &RunConfig) -> Result<CodecChecks> {
    // Depth: a ramp with a repeating offset gives distinct percentiles and
    // hits many quantization bins.
    let (width, height) = (16, 12);
    let raw: Vec<f64> = (0..width * height)
        .map(|i| 40.0 + 3.7 * i as f64 + 5.0 * ((i * 7) % 11) as f64)
        .collect();
    let depth = DepthMap::new(width, height, raw, None)?;
    let stats = compute_percentiles(&depth);
    let (img, _) = depth_to_pseudo(&depth, &stats)?;
    let reference = pseudo_to_depth(&img);
    let requantized: Vec<f64> = (0..width * height)
        .flat_map(|i| {
            let v = dequantize_unit(quantize_unit(img.pixel(i)[0]));
            [v, v, v]
        })
        .collect();
    let decoded = pseudo_to_depth(&PseudoImage::new(width, height, requantized)?);
    let depth_err = reference
        .values
        .iter()
        .zip(&decoded.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    // Segmentation: every label once, through the 8-bit image quantizer.
    let palette = make_palette(cfg.palette_size)?;
    let labels: Vec<u32> = (0..cfg.palette_size as u32).collect();
    let mask = SegMask::new(cfg.palette_size, 1, labels)?;
    let seg_img = seg_to_pseudo(&mask, &palette)?;
    let seg_requantized: Vec<f64> = seg_img
        .data()
        .iter()
        .map(|&v| dequantize_channel(quantize_channel(v)))
        .collect();
    let seg_decoded = pseudo_to_seg(
        &PseudoImage::new(cfg.palette_size, 1, seg_requantized)?,
        &palette,
    );
    Ok(CodecChecks {
        depth_max_roundtrip_error: depth_err,
        depth_roundtrip_bound: 2.0 / 65535.0,
        seg_roundtrip_exact: seg_decoded.labels() == mask.labels(),
        palette_size: cfg.palette_size,
        palette_min_sq_dist: palette.min_pairwise_sq_dist(),
    })
}
