//! Worked numeric examples and the synthetic-distortion experiment.
//!
//! The worked examples rebuild three hand-sized distributions and check them
//! against their published values. The synthetic experiment distorts an image
//! with smooth Gaussian bumps, registers the original to the distorted copy and
//! scores the mode-label and most-likely-label reconstructions against the
//! original intensities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    make_displacement_set, warp_image, CategoricalField, DeformationField, DisplacementSet, ScalarImage,
};
use crate::rwir::{edge_weights, rwir_solve, unary_likelihood, SolverOptions};
use crate::uncertainty::{
    bin_label, compute_uncertainty_maps, label_entropy, mli, mode_label, pushforward, shannon_entropy, UncertaintyMaps,
};

/// One computed quantity compared against its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureCheck {
    pub quantity: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl FigureCheck {
    fn new(quantity: &str, value: f64, target: f64, tolerance: f64) -> Self {
        FigureCheck {
            quantity: quantity.to_string(),
            value,
            target,
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureReport {
    pub figure: String,
    pub probabilities: Vec<f64>,
    /// Candidate labels, when the example has them.
    pub labels: Vec<f64>,
    /// Pushforward atoms `(label, probability)`.
    pub pushforward: Vec<(f64, f64)>,
    pub checks: Vec<FigureCheck>,
    pub pass: bool,
}

impl FigureReport {
    fn new(figure: &str, probabilities: &[f64], labels: &[f64], checks: Vec<FigureCheck>) -> Result<Self> {
        let pushforward = if labels.is_empty() {
            Vec::new()
        } else {
            pushforward(probabilities, labels, 0.0)?.atoms().to_vec()
        };
        Ok(FigureReport {
            figure: figure.to_string(),
            probabilities: probabilities.to_vec(),
            labels: labels.to_vec(),
            pushforward,
            pass: checks.iter().all(|c| c.pass),
            checks,
        })
    }

    pub fn check(&self, quantity: &str) -> Option<&FigureCheck> {
        self.checks.iter().find(|c| c.quantity == quantity)
    }
}

/// Uniform and peaked distributions over four displacements.
pub fn reproduce_fig1() -> Result<FigureReport> {
    let uniform = [0.25; 4];
    let peaked = [0.7, 0.1, 0.1, 0.1];
    let checks = vec![
        FigureCheck::new("entropy_uniform", shannon_entropy(&uniform)?, 2.0, 1e-12),
        FigureCheck::new("entropy_peaked", shannon_entropy(&peaked)?, 1.36, 0.01),
    ];
    let mut probs = uniform.to_vec();
    probs.extend(peaked);
    FigureReport::new("1", &probs, &[], checks)
}

/// Six nearly equiprobable displacements, five of which share one label.
pub fn reproduce_fig23() -> Result<FigureReport> {
    let p = [0.16, 0.16, 0.20, 0.16, 0.16, 0.16];
    let labels = [50.0, 50.0, 50.0, 50.0, 200.0, 50.0];
    let ld = pushforward(&p, &labels, 0.0)?;
    let checks = vec![
        FigureCheck::new("transform_entropy", shannon_entropy(&p)?, 2.58, 0.01),
        FigureCheck::new("label_entropy", label_entropy(&ld), 0.63, 0.01),
        FigureCheck::new("mass_50", ld.mass_of(50.0), 0.84, 1e-9),
        FigureCheck::new("mass_200", ld.mass_of(200.0), 0.16, 1e-9),
        FigureCheck::new("mode_label", mode_label(&p, &labels)?, 50.0, 0.0),
        FigureCheck::new("mli", mli(&ld), 50.0, 0.0),
    ];
    FigureReport::new("2", &p, &labels, checks)
}

/// A clear transformation mode whose label loses to the combined mass of the others.
pub fn reproduce_fig5() -> Result<FigureReport> {
    let p = [0.2, 0.2, 0.4, 0.2];
    let labels = [200.0, 200.0, 50.0, 200.0];
    let ld = pushforward(&p, &labels, 0.0)?;
    let mode = mode_label(&p, &labels)?;
    let most_likely = mli(&ld);
    let checks = vec![
        FigureCheck::new("mode_label", mode, 50.0, 0.0),
        FigureCheck::new("mli", most_likely, 200.0, 0.0),
        FigureCheck::new("mli_mass", ld.mass_of(most_likely), 0.6, 1e-9),
        FigureCheck::new("mode_label_mass", ld.mass_of(mode), 0.4, 1e-9),
        FigureCheck::new("transform_entropy", shannon_entropy(&p)?, 1.9219, 1e-3),
        FigureCheck::new("disagreement", f64::from(u8::from(mode != most_likely)), 1.0, 0.0),
    ];
    FigureReport::new("5", &p, &labels, checks)
}

/// Dispatches on the figure number accepted by the command line (`1`, `2`, `5`).
pub fn reproduce_figure(figure: u32) -> Result<FigureReport> {
    match figure {
        1 => reproduce_fig1(),
        2 | 3 => reproduce_fig23(),
        5 => reproduce_fig5(),
        _ => Err(Error::InvalidParameter {
            name: "figure",
            reason: format!("expected 1, 2 or 5, got {figure}"),
        }),
    }
}

/// Random bumps drawn from a seeded generator when a spec is expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBumps {
    pub count: usize,
    /// Upper bound on each amplitude component, in voxels.
    pub max_amplitude: f64,
    pub min_width: f64,
    pub max_width: f64,
}

/// Sum of Gaussian displacement bumps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BumpSpec {
    #[serde(default)]
    pub centers: Vec<Vec<f64>>,
    #[serde(default)]
    pub amplitudes: Vec<Vec<f64>>,
    #[serde(default)]
    pub widths: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomBumps>,
}

impl BumpSpec {
    pub fn single(center: Vec<f64>, amplitude: Vec<f64>, width: f64) -> Self {
        BumpSpec {
            centers: vec![center],
            amplitudes: vec![amplitude],
            widths: vec![width],
            ..BumpSpec::default()
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let invalid = |reason: String| Error::InvalidParameter {
            name: "bump spec",
            reason,
        };
        if self.centers.len() != self.amplitudes.len() || self.centers.len() != self.widths.len() {
            return Err(invalid(format!(
                "{} centers, {} amplitudes, {} widths",
                self.centers.len(),
                self.amplitudes.len(),
                self.widths.len()
            )));
        }
        if self.centers.iter().chain(&self.amplitudes).any(|v| v.len() != d) {
            return Err(invalid(format!("every center and amplitude needs {d} components")));
        }
        if self
            .centers
            .iter()
            .chain(&self.amplitudes)
            .flatten()
            .any(|x| !x.is_finite())
        {
            return Err(invalid("non-finite center or amplitude".into()));
        }
        if self.widths.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(invalid("widths must be positive".into()));
        }
        if let Some(r) = &self.random {
            if !(r.max_amplitude >= 0.0 && r.min_width > 0.0 && r.max_width >= r.min_width) {
                return Err(invalid(format!("bad random bump parameters {r:?}")));
            }
        }
        Ok(())
    }

    /// Replaces the random section by concrete bumps drawn with `self.seed`.
    pub fn resolve(&self, dims: &[usize]) -> Result<BumpSpec> {
        self.validate(dims.len())?;
        let mut out = BumpSpec {
            random: None,
            ..self.clone()
        };
        if let Some(r) = &self.random {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for _ in 0..r.count {
                out.centers
                    .push(dims.iter().map(|&n| rng.gen_range(0.0..=(n - 1) as f64)).collect());
                out.amplitudes.push(
                    dims.iter()
                        .map(|_| rng.gen_range(-r.max_amplitude..=r.max_amplitude))
                        .collect(),
                );
                out.widths.push(rng.gen_range(r.min_width..=r.max_width));
            }
        }
        Ok(out)
    }
}

/// `u(x) = Σ_j a_j exp(−‖x − c_j‖² / (2 s_j²))`. Random sections are expanded first.
pub fn make_bump_deformation(dims: &[usize], spec: &BumpSpec) -> Result<DeformationField> {
    let spec = spec.resolve(dims)?;
    DeformationField::from_fn(dims.to_vec(), |x, u| {
        for ((c, a), s) in spec.centers.iter().zip(&spec.amplitudes).zip(&spec.widths) {
            let dist2: f64 = x.iter().zip(c).map(|(&xi, ci)| (xi as f64 - ci).powi(2)).sum();
            let g = (-dist2 / (2.0 * s * s)).exp();
            for (ui, ai) in u.iter_mut().zip(a) {
                *ui += ai * g;
            }
        }
    })
}

/// Everything needed to turn a fixed/moving pair into a displacement distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationParams {
    pub radius: u32,
    pub sigma: f64,
    pub beta: f64,
    pub gamma: f64,
    pub w_min: f64,
    pub cg_tol: f64,
    pub cg_max_iter: Option<usize>,
    pub deterministic: bool,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        RegistrationParams {
            radius: 2,
            sigma: 10.0,
            beta: 0.05,
            gamma: 1.0,
            w_min: 1e-6,
            cg_tol: 1e-8,
            cg_max_iter: None,
            deterministic: false,
        }
    }
}

impl RegistrationParams {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            gamma: self.gamma,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            deterministic: self.deterministic,
        }
    }
}

/// Displacement label space plus the solved distribution over it.
#[derive(Debug, Clone)]
pub struct Registration {
    pub displacements: DisplacementSet,
    pub field: CategoricalField,
}

/// Unary likelihood, fixed-image edge weights and the regularized solve.
pub fn register(fixed: &ScalarImage, moving: &ScalarImage, params: &RegistrationParams) -> Result<Registration> {
    let displacements = make_displacement_set(fixed.ndim(), params.radius)?;
    let unary = unary_likelihood(fixed, moving, &displacements, params.sigma)?;
    let weights = edge_weights(fixed, params.beta, params.w_min)?;
    let field = rwir_solve(&unary, &weights, &params.solver_options())?;
    Ok(Registration { displacements, field })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean_abs: f64,
    pub max_abs: f64,
}

impl ErrorSummary {
    pub fn between(estimate: &[f64], truth: &[f64]) -> Self {
        let n = truth.len().max(1) as f64;
        let (sum, max) = estimate
            .iter()
            .zip(truth)
            .map(|(e, t)| (e - t).abs())
            .fold((0.0, 0.0f64), |(s, m), e| (s + e, m.max(e)));
        ErrorSummary {
            mean_abs: sum / n,
            max_abs: max,
        }
    }
}

/// Mean entropies over homogeneous-interior and strong-edge voxels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub constant_voxels: usize,
    pub edge_voxels: usize,
    pub constant_transform_entropy: f64,
    pub edge_transform_entropy: f64,
    pub constant_label_entropy: f64,
    pub edge_label_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub registration: RegistrationParams,
    pub bin_width: f64,
    /// The bump spec after expansion of any random section.
    pub bumps: BumpSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub dims: Vec<usize>,
    pub k: usize,
    pub max_displacement: f64,
    /// Distorted image against the original, before registration.
    pub identity_error: ErrorSummary,
    pub mode_error: ErrorSummary,
    pub mli_error: ErrorSummary,
    pub count_mli_eq_gt: usize,
    pub count_mode_eq_gt: usize,
    pub count_disagreement: usize,
    pub count_mode_beats_mli: usize,
    pub count_mli_beats_mode: usize,
    pub mean_transform_entropy: f64,
    pub mean_label_entropy: f64,
    pub regions: RegionStats,
    pub params: SynthParams,
}

/// Figure checks and/or a synthetic run, as written to JSON reports.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    #[serde(default)]
    pub figures: Vec<FigureReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Full output of a synthetic run.
#[derive(Debug, Clone)]
pub struct SynthRun {
    pub report: SynthReport,
    pub moving: ScalarImage,
    pub deformation: DeformationField,
    pub registration: Registration,
    pub maps: UncertaintyMaps,
}

/// Voxels whose every candidate stays in the grid and whose fixed-image
/// window of the given radius is constant.
pub fn constant_region_mask(fixed: &ScalarImage, radius: u32) -> Vec<bool> {
    let shape = fixed.shape();
    let r = radius as isize;
    let d = shape.ndim();
    let mut coords = vec![0; d];
    let set = make_displacement_set(d, radius).expect("2D or 3D image");
    (0..shape.len())
        .map(|i| {
            shape.coords_into(i, &mut coords);
            let interior = coords
                .iter()
                .zip(shape.dims())
                .all(|(&c, &n)| c as isize >= r && (c as isize) + r < n as isize);
            interior
                && set.iter().all(|disp| {
                    let j: Vec<usize> = coords
                        .iter()
                        .zip(disp)
                        .map(|(&c, &o)| (c as isize + o as isize) as usize)
                        .collect();
                    fixed.get(&j) == fixed.values()[i]
                })
        })
        .collect()
}

/// Interior voxels with a 4/6-neighbour jump of at least half the intensity range.
pub fn strong_edge_mask(fixed: &ScalarImage, radius: u32) -> Vec<bool> {
    let shape = fixed.shape();
    let (lo, hi) = fixed.intensity_range();
    let threshold = 0.5 * (hi - lo);
    let r = radius as usize;
    let mut coords = vec![0; shape.ndim()];
    (0..shape.len())
        .map(|i| {
            shape.coords_into(i, &mut coords);
            let interior = coords.iter().zip(shape.dims()).all(|(&c, &n)| c >= r && c + r < n);
            if !interior || threshold <= 0.0 {
                return false;
            }
            let v = fixed.values()[i];
            (0..shape.ndim()).any(|a| {
                [-1isize, 1].iter().any(|&step| {
                    let mut n = coords.clone();
                    n[a] = (n[a] as isize + step) as usize;
                    (fixed.get(&n) - v).abs() >= threshold
                })
            })
        })
        .collect()
}

fn masked_mean(values: &[f64], mask: &[bool]) -> f64 {
    let (sum, n) = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

/// Distorts `fixed` with the bump field, registers `fixed` to the distorted
/// image and scores both point estimates against the original intensities.
pub fn run_synth_experiment(
    fixed: &ScalarImage,
    spec: &BumpSpec,
    params: &RegistrationParams,
    bin_width: f64,
) -> Result<SynthRun> {
    let bumps = spec.resolve(fixed.dims())?;
    let deformation = make_bump_deformation(fixed.dims(), &bumps)?;
    let max_displacement = deformation.max_abs_component();
    if max_displacement > params.radius as f64 {
        return Err(Error::AmplitudeExceedsRadius {
            amplitude: max_displacement,
            radius: params.radius,
        });
    }
    let moving = warp_image(fixed, &deformation)?;
    let registration = register(fixed, &moving, params)?;
    let maps = compute_uncertainty_maps(&registration.field, &moving, &registration.displacements, bin_width)?;

    let q = |x: f64| bin_label(x, bin_width);
    let gt: Vec<f64> = fixed.values().iter().map(|&x| q(x)).collect();
    let identity: Vec<f64> = moving.values().iter().map(|&x| q(x)).collect();
    let mode: Vec<f64> = maps.mode_label.iter().map(|&x| q(x)).collect();
    let most_likely = &maps.mli;

    let mut report = SynthReport {
        dims: fixed.dims().to_vec(),
        k: registration.displacements.len(),
        max_displacement,
        identity_error: ErrorSummary::between(&identity, &gt),
        mode_error: ErrorSummary::between(&mode, &gt),
        mli_error: ErrorSummary::between(most_likely, &gt),
        count_mli_eq_gt: 0,
        count_mode_eq_gt: 0,
        count_disagreement: maps.count_disagreement(),
        count_mode_beats_mli: 0,
        count_mli_beats_mode: 0,
        mean_transform_entropy: mean(&maps.transform_entropy),
        mean_label_entropy: mean(&maps.label_entropy),
        regions: RegionStats {
            constant_voxels: 0,
            edge_voxels: 0,
            constant_transform_entropy: 0.0,
            edge_transform_entropy: 0.0,
            constant_label_entropy: 0.0,
            edge_label_entropy: 0.0,
        },
        params: SynthParams {
            registration: params.clone(),
            bin_width,
            bumps,
        },
    };
    for ((&g, &m), &l) in gt.iter().zip(&mode).zip(most_likely) {
        let (em, el) = ((m - g).abs(), (l - g).abs());
        report.count_mode_eq_gt += usize::from(em == 0.0);
        report.count_mli_eq_gt += usize::from(el == 0.0);
        report.count_mode_beats_mli += usize::from(em < el);
        report.count_mli_beats_mode += usize::from(el < em);
    }
    let constant = constant_region_mask(fixed, params.radius);
    let edge = strong_edge_mask(fixed, params.radius);
    report.regions = RegionStats {
        constant_voxels: constant.iter().filter(|&&m| m).count(),
        edge_voxels: edge.iter().filter(|&&m| m).count(),
        constant_transform_entropy: masked_mean(&maps.transform_entropy, &constant),
        edge_transform_entropy: masked_mean(&maps.transform_entropy, &edge),
        constant_label_entropy: masked_mean(&maps.label_entropy, &constant),
        edge_label_entropy: masked_mean(&maps.label_entropy, &edge),
    };
    Ok(SynthRun {
        report,
        moving,
        deformation,
        registration,
        maps,
    })
}

/// Intensities of the two-region test image.
pub const FIXTURE_BACKGROUND: f64 = 50.0;
pub const FIXTURE_FOREGROUND: f64 = 200.0;

/// Square image with a bright disc of radius `size / 4` on a dark background.
pub fn two_region_fixture(size: usize) -> ScalarImage {
    let c = (size as f64 - 1.0) / 2.0;
    let radius = size as f64 / 4.0;
    ScalarImage::from_fn(vec![size, size], |x| {
        let d2 = (x[0] as f64 - c).powi(2) + (x[1] as f64 - c).powi(2);
        if d2 <= radius * radius {
            FIXTURE_FOREGROUND
        } else {
            FIXTURE_BACKGROUND
        }
    })
    .expect("positive size")
}

/// The single bump used with [`two_region_fixture`]: amplitude `(2, 0)`
/// centered on the upper rim of the disc.
pub fn fixture_bump_spec(size: usize) -> BumpSpec {
    let c = (size as f64 - 1.0) / 2.0;
    BumpSpec::single(vec![c - size as f64 / 4.0, c], vec![2.0, 0.0], size as f64 / 10.0)
}

/// Registration settings committed for the two-region fixture: the default
/// parameters with a weaker data term, so smoothing is strong enough for the
/// mode and the MLI to part ways near the distorted rim.
pub fn fixture_params() -> RegistrationParams {
    RegistrationParams {
        gamma: 0.05,
        deterministic: true,
        ..RegistrationParams::default()
    }
}

/// Label bin width used with the fixture (its distorted copy is interpolated).
pub const FIXTURE_BIN_WIDTH: f64 = 1.0;
