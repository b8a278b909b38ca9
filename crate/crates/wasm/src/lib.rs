//! Browser bindings for the demo page in `www/`.
//!
//! Three operations are exposed: a pushforward explorer for a single voxel,
//! the synthetic distortion experiment rendered as RGBA images, and the
//! worked figure examples. The plain-Rust functions behind them are public
//! so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pirkit::experiments::{
    reproduce_figure, run_synth_experiment, two_region_fixture, BumpSpec, RegistrationParams, SynthReport,
};
use pirkit::io::{render_heatmap, HeatmapStyle, Normalization};
use pirkit::{bin_label, label_entropy, label_iqr, label_moments, mli, mode_label, pushforward, shannon_entropy};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoxelSummary {
    pub transform_entropy: f64,
    pub label_entropy: f64,
    /// `(label, mass)` pairs in ascending label order.
    pub pushforward: Vec<(f64, f64)>,
    pub mode_label: f64,
    pub mli: f64,
    pub mli_mass: f64,
    pub disagreement: bool,
    pub mean: f64,
    pub std: f64,
    pub iqr: f64,
}

/// Everything the explorer shows for one transformation distribution.
pub fn explore(probs: &[f64], labels: &[f64], bin_width: f64) -> Result<VoxelSummary, String> {
    let ld = pushforward(probs, labels, bin_width).map_err(|e| e.to_string())?;
    let mode = mode_label(probs, labels).map_err(|e| e.to_string())?;
    let most_likely = mli(&ld);
    let moments = label_moments(&ld);
    Ok(VoxelSummary {
        transform_entropy: shannon_entropy(probs).map_err(|e| e.to_string())?,
        label_entropy: label_entropy(&ld),
        mode_label: mode,
        mli: most_likely,
        mli_mass: ld.mass_of(most_likely),
        disagreement: most_likely != bin_label(mode, bin_width),
        mean: moments.mean,
        std: moments.std,
        iqr: label_iqr(&ld),
        pushforward: ld.atoms().to_vec(),
    })
}

/// Settings of the synthetic demo; the image is the two-region fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoParams {
    pub size: usize,
    pub amplitude: f64,
    pub width: f64,
    pub registration: RegistrationParams,
    pub bin_width: f64,
}

/// Rendered layers of one synthetic run, each `size × size` RGBA.
pub struct DemoImages {
    pub size: usize,
    pub layers: Vec<(&'static str, Vec<u8>)>,
    pub report: SynthReport,
}

pub const LAYERS: [&str; 6] = [
    "fixed",
    "moving",
    "transform_entropy",
    "label_entropy",
    "label_std",
    "disagreement",
];

fn gray(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| {
            let g = v.round().clamp(0.0, 255.0) as u8;
            [g, g, g, 255]
        })
        .collect()
}

fn rgba(values: &[f64], normalization: Normalization) -> Vec<u8> {
    render_heatmap(values, &HeatmapStyle { normalization })
        .into_iter()
        .flat_map(|[r, g, b]| [r, g, b, 255])
        .collect()
}

pub fn synth_demo(p: &DemoParams) -> Result<DemoImages, String> {
    if !(8..=128).contains(&p.size) {
        return Err(format!("size must be between 8 and 128, got {}", p.size));
    }
    let fixed = two_region_fixture(p.size);
    let c = (p.size as f64 - 1.0) / 2.0;
    let spec = BumpSpec::single(vec![c - p.size as f64 / 4.0, c], vec![p.amplitude, 0.0], p.width);
    let run = run_synth_experiment(&fixed, &spec, &p.registration, p.bin_width).map_err(|e| e.to_string())?;
    let k = run.registration.displacements.len();
    let flags: Vec<f64> = run.maps.disagreement.iter().map(|&d| f64::from(u8::from(d))).collect();
    let layers = vec![
        ("fixed", gray(fixed.values())),
        ("moving", gray(run.moving.values())),
        (
            "transform_entropy",
            rgba(&run.maps.transform_entropy, Normalization::ByMaxEntropy { k }),
        ),
        (
            "label_entropy",
            rgba(&run.maps.label_entropy, Normalization::ByMaxEntropy { k }),
        ),
        ("label_std", rgba(&run.maps.label_std, Normalization::ByFieldMax)),
        ("disagreement", rgba(&flags, Normalization::ByFieldMax)),
    ];
    Ok(DemoImages {
        size: p.size,
        layers,
        report: run.report,
    })
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// JSON summary of a single-voxel distribution; see [`VoxelSummary`].
#[wasm_bindgen(js_name = explorePushforward)]
pub fn explore_pushforward(probs: Vec<f64>, labels: Vec<f64>, bin_width: f64) -> Result<String, JsError> {
    let summary = explore(&probs, &labels, bin_width).map_err(js_err)?;
    serde_json::to_string(&summary).map_err(js_err)
}

/// Report of figure 1, 2 or 5 as JSON.
#[wasm_bindgen(js_name = reproduceFigure)]
pub fn reproduce_figure_json(figure: u32) -> Result<String, JsError> {
    let report = reproduce_figure(figure).map_err(js_err)?;
    serde_json::to_string(&report).map_err(js_err)
}

#[wasm_bindgen]
pub struct SynthDemo {
    images: DemoImages,
}

#[wasm_bindgen]
impl SynthDemo {
    #[allow(clippy::too_many_arguments)]
    #[wasm_bindgen(constructor)]
    pub fn new(
        size: usize,
        amplitude: f64,
        width: f64,
        radius: u32,
        sigma: f64,
        beta: f64,
        gamma: f64,
        bin_width: f64,
    ) -> Result<SynthDemo, JsError> {
        let params = DemoParams {
            size,
            amplitude,
            width,
            registration: RegistrationParams {
                radius,
                sigma,
                beta,
                gamma,
                deterministic: true,
                ..RegistrationParams::default()
            },
            bin_width,
        };
        Ok(SynthDemo {
            images: synth_demo(&params).map_err(js_err)?,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.images.size
    }

    /// Names accepted by [`SynthDemo::layer`].
    #[wasm_bindgen(js_name = layerNames)]
    pub fn layer_names(&self) -> Vec<String> {
        LAYERS.iter().map(|s| s.to_string()).collect()
    }

    /// RGBA bytes of a layer, ready for `ImageData`.
    pub fn layer(&self, name: &str) -> Result<Vec<u8>, JsError> {
        self.images
            .layers
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, px)| px.clone())
            .ok_or_else(|| js_err(format!("unknown layer `{name}`")))
    }

    /// The experiment report as JSON.
    pub fn report(&self) -> Result<String, JsError> {
        serde_json::to_string(&self.images.report).map_err(js_err)
    }
}
