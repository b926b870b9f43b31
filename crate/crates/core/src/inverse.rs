//! The design problem: the one-to-one inverse network (response → reduced
//! design coordinates) and the analytic search that resolves the final
//! one-to-many step over the original design space under constraints.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::path::Path;

use crate::dataset::{sample_design, Dataset, DesignRanges, Scaler};
use crate::dr_design::PseudoEncoder;
use crate::dr_response::ResponseAutoencoder;
use crate::error::{Error, Result};
use crate::materials::{CrystallizationFraction, MaterialDb, LC_LEVELS};
use crate::nnet::{self, ActivationKind, Mlp, Samples, TrainConfig, TrainReport};
use crate::surrogate::{
    param_index, simulate, DesignVector, ResponseSpectrum, WavelengthGrid, DESIGN_DIM,
    MIN_RIBBON_GAP_NM, PARAM_NAMES,
};

/// Frozen response encoder followed by a trained head emitting reduced
/// design coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseModel {
    encoder: Mlp,
    head: Mlp,
}

impl InverseModel {
    /// Assembles the model from a trained autoencoder (whose encoder half is
    /// used bit-identically) and a head network.
    pub fn new(response_ae: &ResponseAutoencoder, head: Mlp) -> Result<InverseModel> {
        if head.input_dim() != response_ae.bottleneck_dim() {
            return Err(Error::shape(
                format!("head input {}", response_ae.bottleneck_dim()),
                format!("{}", head.input_dim()),
            ));
        }
        Ok(InverseModel {
            encoder: response_ae.encoder(),
            head,
        })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    /// Reduced design dimensionality k emitted by the head.
    pub fn reduced_design_dim(&self) -> usize {
        self.head.output_dim()
    }

    /// Optimal reduced design coordinates for a desired response.
    pub fn target_reduced_design(&self, target: &TargetSpec) -> Result<Array1<f64>> {
        let row = Array2::from_shape_vec(
            (1, target.spectrum.len()),
            target.spectrum.values().to_vec(),
        )
        .expect("row shape");
        let code = self
            .encoder
            .forward_rows_stable(row.view(), 0..self.encoder.num_layers())?;
        let out = self
            .head
            .forward_rows_stable(code.view(), 0..self.head.num_layers())?;
        Ok(out.row(0).to_owned())
    }
}

/// Trains the inverse head on (reduced response → reduced design) pairs,
/// both computed once with the frozen encoder halves.
pub fn train_inverse(
    train: &Dataset,
    val: &Dataset,
    response_ae: &ResponseAutoencoder,
    pseudo_encoder: &PseudoEncoder,
    head_layers: &[usize],
    config: &TrainConfig,
) -> Result<(InverseModel, TrainReport)> {
    if head_layers.len() < 2 {
        return Err(Error::InvalidConfig("head needs at least one layer".into()));
    }
    if head_layers[0] != response_ae.bottleneck_dim() {
        return Err(Error::shape(
            format!("head input {}", response_ae.bottleneck_dim()),
            format!("{}", head_layers[0]),
        ));
    }
    if *head_layers.last().unwrap() != pseudo_encoder.reduced_design_dim() {
        return Err(Error::shape(
            format!("head output {}", pseudo_encoder.reduced_design_dim()),
            format!("{}", head_layers.last().unwrap()),
        ));
    }
    let activations: Vec<ActivationKind> = (1..head_layers.len())
        .map(|i| {
            if i == head_layers.len() - 1 {
                ActivationKind::Identity
            } else {
                ActivationKind::Tanh
            }
        })
        .collect();

    let scaler = pseudo_encoder.scaler();
    let inputs_train = response_ae.encode_batch(train.spectrum_matrix().view())?;
    let inputs_val = response_ae.encode_batch(val.spectrum_matrix().view())?;
    let targets_train =
        pseudo_encoder.encode_scaled_rows(scaler.scale_matrix(&train.design_matrix()).view())?;
    let targets_val =
        pseudo_encoder.encode_scaled_rows(scaler.scale_matrix(&val.design_matrix()).view())?;

    let head = Mlp::init(head_layers, &activations, config.seed)?;
    let (head, report) = nnet::train(
        head,
        &Samples::new(inputs_train, targets_train)?,
        &Samples::new(inputs_val, targets_val)?,
        config,
    )?;
    Ok((InverseModel::new(response_ae, head)?, report))
}

/// A desired response: target spectrum plus an optional scoring band.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    spectrum: ResponseSpectrum,
    band_nm: Option<(f64, f64)>,
    grid: WavelengthGrid,
}

impl TargetSpec {
    pub fn new(spectrum: ResponseSpectrum, band_nm: Option<(f64, f64)>) -> Result<TargetSpec> {
        let grid = WavelengthGrid::standard();
        if let Some((a, b)) = band_nm {
            grid.band_indices(a, b)?;
        }
        Ok(TargetSpec {
            spectrum,
            band_nm,
            grid,
        })
    }

    /// Zero reflectance everywhere (a perfect absorber) scored on `band_nm`.
    pub fn perfect_absorber(band_nm: Option<(f64, f64)>) -> Result<TargetSpec> {
        let zeros = ResponseSpectrum::new(vec![0.0; WavelengthGrid::standard().count])?;
        TargetSpec::new(zeros, band_nm)
    }

    pub fn spectrum(&self) -> &ResponseSpectrum {
        &self.spectrum
    }

    pub fn band_nm(&self) -> Option<(f64, f64)> {
        self.band_nm
    }

    /// Mean squared reflectance error over the scoring band: the trapezoidal
    /// integral of (R − R_target)² divided by the band width. Without a band
    /// the whole grid is used.
    pub fn band_mse(&self, spectrum: &ResponseSpectrum) -> Result<f64> {
        let range = match self.band_nm {
            Some((a, b)) => self.grid.band_indices(a, b)?,
            None => 0..self.grid.count,
        };
        let idx: Vec<usize> = range.collect();
        let h = self.grid.step();
        let sq = |i: usize| {
            let d = spectrum.values()[i] - self.spectrum.values()[i];
            d * d
        };
        let mut integral = 0.0;
        for pair in idx.windows(2) {
            integral += 0.5 * h * (sq(pair[0]) + sq(pair[1]));
        }
        let width = h * (idx.len() - 1) as f64;
        Ok(integral / width)
    }
}

/// One fabrication/design predicate over design vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    /// Pin a parameter to an exact value (applied during candidate
    /// generation, not just filtering).
    Pin { param: usize, value: f64 },
    /// Lower bound on a parameter.
    Min { param: usize, value: f64 },
    /// Upper bound on a parameter.
    Max { param: usize, value: f64 },
    /// All three crystallization fractions equal.
    LcUniform,
    /// Minimum feature size: every ribbon and every gap at least this wide.
    MinFeature { nm: f64 },
}

impl Constraint {
    /// Parses the CLI syntax: `h=190`, `w1>=150`, `p3<=600`, `lc_uniform`,
    /// `min_feature=100`.
    pub fn parse(text: &str) -> Result<Constraint> {
        let text = text.trim();
        if text == "lc_uniform" {
            return Ok(Constraint::LcUniform);
        }
        let (op, split_at) = if let Some(i) = text.find(">=") {
            (">=", i)
        } else if let Some(i) = text.find("<=") {
            ("<=", i)
        } else if let Some(i) = text.find('=') {
            ("=", i)
        } else {
            return Err(Error::InvalidConfig(format!(
                "cannot parse constraint {text:?} (expected name=value, name>=value, name<=value, or lc_uniform)"
            )));
        };
        let name = text[..split_at].trim();
        let value: f64 = text[split_at + op.len()..]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad value in constraint {text:?}")))?;
        if name == "min_feature" {
            if op != "=" {
                return Err(Error::InvalidConfig(
                    "min_feature only supports '='".into(),
                ));
            }
            return Ok(Constraint::MinFeature { nm: value });
        }
        let param = param_index(name).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown parameter {name:?} (expected one of {PARAM_NAMES:?})"
            ))
        })?;
        Ok(match op {
            "=" => Constraint::Pin { param, value },
            ">=" => Constraint::Min { param, value },
            _ => Constraint::Max { param, value },
        })
    }
}

/// A conjunction of constraints.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<Constraint>) -> ConstraintSet {
        ConstraintSet { constraints }
    }

    pub fn parse_all(texts: &[String]) -> Result<ConstraintSet> {
        Ok(ConstraintSet {
            constraints: texts
                .iter()
                .map(|t| Constraint::parse(t))
                .collect::<Result<_>>()?,
        })
    }

    /// The pinned value of a canonical parameter, if any.
    pub fn pinned(&self, param: usize) -> Option<f64> {
        self.constraints.iter().find_map(|c| match c {
            Constraint::Pin { param: p, value } if *p == param => Some(*value),
            _ => None,
        })
    }

    pub fn satisfied(&self, design: &DesignVector) -> bool {
        let values = design.to_values();
        self.constraints.iter().all(|c| match c {
            Constraint::Pin { param, value } => (values[*param] - value).abs() < 1e-9,
            Constraint::Min { param, value } => values[*param] >= value - 1e-9,
            Constraint::Max { param, value } => values[*param] <= value + 1e-9,
            Constraint::LcUniform => design.lc[0] == design.lc[1] && design.lc[1] == design.lc[2],
            Constraint::MinFeature { nm } => (0..3)
                .all(|i| design.w[i] >= nm - 1e-9 && design.p[i] - design.w[i] >= nm - 1e-9),
        })
    }
}

/// Candidate generation strategy of the analytic search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Cartesian product of the per-parameter grids.
    FullGrid,
    /// `budget` random draws from the design ranges.
    Random,
    /// Random draws plus coordinate-descent refinement of the best
    /// `beam_width` candidates on the grid.
    Beam,
}

/// Search configuration. Continuous parameters use `resolution_continuous`
/// grid values over their range; crystallization fractions use
/// `resolution_lc` of the 11 levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub strategy: SearchStrategy,
    pub resolution_continuous: usize,
    pub resolution_lc: usize,
    /// Candidate budget for the random strategies.
    pub budget: usize,
    /// Number of candidates refined by coordinate descent (Beam strategy).
    pub beam_width: usize,
    /// Number of designs to return, best first.
    pub top_k: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            strategy: SearchStrategy::Beam,
            resolution_continuous: 10,
            resolution_lc: LC_LEVELS,
            budget: 1_000_000,
            beam_width: 100,
            top_k: 4,
            seed: 1,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if self.budget == 0 || self.top_k == 0 {
            return Err(Error::InvalidConfig(
                "search budget and top_k must be >= 1".into(),
            ));
        }
        if self.resolution_continuous < 2 || self.resolution_lc < 2 {
            return Err(Error::InvalidConfig(
                "grid resolutions must be >= 2".into(),
            ));
        }
        if self.resolution_lc > LC_LEVELS {
            return Err(Error::InvalidConfig(format!(
                "lc resolution capped at {LC_LEVELS}"
            )));
        }
        if self.strategy == SearchStrategy::Beam && self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam width must be >= 1".into()));
        }
        Ok(())
    }
}

/// A scored candidate: squared distance between its reduced design
/// coordinates and the target code.
#[derive(Debug, Clone)]
pub struct ScoredDesign {
    pub design: DesignVector,
    pub distance: f64,
}

fn cmp_scored(a: &ScoredDesign, b: &ScoredDesign) -> Ordering {
    a.distance
        .partial_cmp(&b.distance)
        .expect("finite distances")
        .then_with(|| a.design.lex_cmp(&b.design))
}

/// Internal candidate coordinates: widths are carried as fractions of their
/// feasible interval [w_min, p − gap] so pitch moves never invalidate them.
#[derive(Debug, Clone, Copy)]
struct Coords {
    h: f64,
    lc: [usize; 3],
    p: [f64; 3],
    wf: [f64; 3],
}

impl Coords {
    fn to_design(self, ranges: &DesignRanges) -> DesignVector {
        let mut lc = [CrystallizationFraction::from_level(0).unwrap(); 3];
        let mut w = [0.0; 3];
        for i in 0..3 {
            lc[i] = CrystallizationFraction::from_level(self.lc[i]).expect("level in range");
            let w_max = ranges.w_max_nm(self.p[i]);
            w[i] = ranges.w_min_nm + self.wf[i] * (w_max - ranges.w_min_nm);
        }
        DesignVector::new(self.h, lc, self.p, w).expect("coords stay feasible")
    }

    fn from_design(design: &DesignVector, ranges: &DesignRanges) -> Coords {
        let mut wf = [0.0; 3];
        for i in 0..3 {
            let w_max = ranges.w_max_nm(design.p[i]);
            wf[i] = (design.w[i] - ranges.w_min_nm) / (w_max - ranges.w_min_nm);
        }
        Coords {
            h: design.h,
            lc: [design.lc[0].level(), design.lc[1].level(), design.lc[2].level()],
            p: design.p,
            wf,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Evenly spread subset of the 11 lc levels.
fn lc_levels(resolution: usize) -> Vec<usize> {
    if resolution >= LC_LEVELS {
        return (0..LC_LEVELS).collect();
    }
    let mut levels: Vec<usize> = (0..resolution)
        .map(|i| ((i as f64 * 10.0 / (resolution - 1) as f64).round()) as usize)
        .collect();
    levels.dedup();
    levels
}

/// Per-parameter grids honoring pins. Widths are expressed as fractions.
struct Grids {
    h: Vec<f64>,
    lc: [Vec<usize>; 3],
    p: [Vec<f64>; 3],
    wf: [Vec<f64>; 3],
    /// Pinned physical widths replace the fraction grid for that block.
    w_pin: [Option<f64>; 3],
}

fn build_grids(
    ranges: &DesignRanges,
    config: &SearchConfig,
    constraints: &ConstraintSet,
) -> Result<Grids> {
    let res = config.resolution_continuous;
    let h = match constraints.pinned(0) {
        Some(v) => vec![v],
        None => linspace(ranges.h_nm.0, ranges.h_nm.1, res),
    };
    let mut lc: [Vec<usize>; 3] = Default::default();
    let mut p: [Vec<f64>; 3] = Default::default();
    let mut wf: [Vec<f64>; 3] = Default::default();
    let mut w_pin = [None; 3];
    for i in 0..3 {
        lc[i] = match constraints.pinned(1 + i) {
            Some(v) => vec![CrystallizationFraction::from_value(v)?.level()],
            None => lc_levels(config.resolution_lc),
        };
        p[i] = match constraints.pinned(4 + i) {
            Some(v) => vec![v],
            None => linspace(ranges.pitch_nm.0, ranges.pitch_nm.1, res),
        };
        match constraints.pinned(7 + i) {
            Some(v) => {
                w_pin[i] = Some(v);
                wf[i] = vec![f64::NAN]; // unused when pinned
            }
            None => wf[i] = linspace(0.0, 1.0, res),
        }
    }
    Ok(Grids { h, lc, p, wf, w_pin })
}

/// Number of cells in the full grid.
fn grid_cells(grids: &Grids) -> u128 {
    let mut total: u128 = grids.h.len() as u128;
    for i in 0..3 {
        total *= grids.lc[i].len() as u128;
        total *= grids.p[i].len() as u128;
        total *= grids.wf[i].len() as u128;
    }
    total
}

const GRID_CELL_CAP: u128 = 50_000_000;

/// Scores candidates against the target code; returns candidates sorted by
/// (distance, lexicographic design order).
fn score_candidates(
    pe: &PseudoEncoder,
    target_code: ArrayView1<f64>,
    designs: Vec<DesignVector>,
    constraints: &ConstraintSet,
    keep: usize,
) -> Result<Vec<ScoredDesign>> {
    let scaler = pe.scaler();
    let admissible: Vec<DesignVector> = designs
        .into_iter()
        .filter(|d| constraints.satisfied(d))
        .collect();
    if admissible.is_empty() {
        return Ok(Vec::new());
    }
    let mut scored: Vec<ScoredDesign> = admissible
        .par_chunks(4096)
        .map(|chunk| {
            let mut rows = Array2::zeros((chunk.len(), DESIGN_DIM));
            for (r, d) in chunk.iter().enumerate() {
                for (c, v) in scaler.scale(d).into_iter().enumerate() {
                    rows[[r, c]] = v;
                }
            }
            let codes = pe.encode_scaled_rows(rows.view())?;
            let mut out = Vec::with_capacity(chunk.len());
            for (r, d) in chunk.iter().enumerate() {
                let mut dist = 0.0;
                for (a, b) in codes.row(r).iter().zip(target_code.iter()) {
                    dist += (a - b) * (a - b);
                }
                if !dist.is_finite() {
                    return Err(Error::NonFinite("candidate distance".into()));
                }
                out.push(ScoredDesign { design: *d, distance: dist });
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<ScoredDesign>>>>()?
        .into_iter()
        .flatten()
        .collect();
    scored.sort_by(cmp_scored);
    scored.dedup_by(|a, b| a.design.to_values() == b.design.to_values());
    scored.truncate(keep);
    Ok(scored)
}

fn enumerate_grid(grids: &Grids, ranges: &DesignRanges) -> Vec<DesignVector> {
    let mut out = Vec::new();
    for &h in &grids.h {
        for &l1 in &grids.lc[0] {
            for &l2 in &grids.lc[1] {
                for &l3 in &grids.lc[2] {
                    for &p1 in &grids.p[0] {
                        for &p2 in &grids.p[1] {
                            for &p3 in &grids.p[2] {
                                for w1 in width_values(grids, ranges, 0, p1) {
                                    for w2 in width_values(grids, ranges, 1, p2) {
                                        for w3 in width_values(grids, ranges, 2, p3) {
                                            let lc = [
                                                CrystallizationFraction::from_level(l1).unwrap(),
                                                CrystallizationFraction::from_level(l2).unwrap(),
                                                CrystallizationFraction::from_level(l3).unwrap(),
                                            ];
                                            if let Ok(d) = DesignVector::new(
                                                h,
                                                lc,
                                                [p1, p2, p3],
                                                [w1, w2, w3],
                                            ) {
                                                out.push(d);
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn width_values(grids: &Grids, ranges: &DesignRanges, block: usize, pitch: f64) -> Vec<f64> {
    match grids.w_pin[block] {
        Some(v) => {
            if v >= ranges.w_min_nm && v <= ranges.w_max_nm(pitch) {
                vec![v]
            } else {
                vec![]
            }
        }
        None => {
            let w_max = ranges.w_max_nm(pitch);
            grids.wf[block]
                .iter()
                .map(|t| ranges.w_min_nm + t * (w_max - ranges.w_min_nm))
                .collect()
        }
    }
}

/// Random candidates for one chunk, honoring pins during generation.
fn random_candidates(
    ranges: &DesignRanges,
    constraints: &ConstraintSet,
    seed: u64,
    chunk: u64,
    count: usize,
) -> Vec<DesignVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5EA2C4 + chunk);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut d = sample_design(ranges, &mut rng);
        // apply pins; re-derive dependent values where needed
        if let Some(v) = constraints.pinned(0) {
            d.h = v;
        }
        for i in 0..3 {
            if let Some(v) = constraints.pinned(1 + i) {
                if let Ok(q) = CrystallizationFraction::from_value(v) {
                    d.lc[i] = q;
                }
            }
            if let Some(v) = constraints.pinned(4 + i) {
                d.p[i] = v;
                // keep the width feasible under the pinned pitch
                d.w[i] = d.w[i].min(ranges.w_max_nm(v));
            }
            if let Some(v) = constraints.pinned(7 + i) {
                d.w[i] = v;
            }
        }
        if constraints
            .constraints
            .iter()
            .any(|c| matches!(c, Constraint::LcUniform))
        {
            d.lc = [d.lc[0]; 3];
        }
        if let Ok(valid) = DesignVector::new(d.h, d.lc, d.p, d.w) {
            out.push(valid);
        }
    }
    out
}

/// Coordinate descent over the grids starting from `start`; returns the
/// refined candidate. Deterministic: parameters are swept in canonical
/// order, ties keep the earlier grid value.
fn refine_candidate(
    pe: &PseudoEncoder,
    target_code: ArrayView1<f64>,
    start: &ScoredDesign,
    grids: &Grids,
    ranges: &DesignRanges,
    constraints: &ConstraintSet,
    max_sweeps: usize,
) -> Result<ScoredDesign> {
    let mut best = start.clone();
    let mut coords = Coords::from_design(&best.design, ranges);
    for _ in 0..max_sweeps {
        let mut improved = false;
        for param in 0..DESIGN_DIM {
            if constraints.pinned(param).is_some() {
                continue;
            }
            let mut trial_coords = Vec::new();
            match param {
                0 => {
                    for &h in &grids.h {
                        let mut c = coords;
                        c.h = h;
                        trial_coords.push(c);
                    }
                }
                1..=3 => {
                    let b = param - 1;
                    for &l in &grids.lc[b] {
                        let mut c = coords;
                        c.lc[b] = l;
                        trial_coords.push(c);
                    }
                }
                4..=6 => {
                    let b = param - 4;
                    for &p in &grids.p[b] {
                        let mut c = coords;
                        c.p[b] = p;
                        trial_coords.push(c);
                    }
                }
                _ => {
                    let b = param - 7;
                    if grids.w_pin[b].is_some() {
                        continue;
                    }
                    for &t in &grids.wf[b] {
                        let mut c = coords;
                        c.wf[b] = t;
                        trial_coords.push(c);
                    }
                }
            }
            let designs: Vec<DesignVector> =
                trial_coords.iter().map(|c| c.to_design(ranges)).collect();
            let scored = score_candidates(pe, target_code, designs, constraints, usize::MAX)?;
            if let Some(top) = scored.first() {
                if top.distance < best.distance {
                    best = top.clone();
                    coords = Coords::from_design(&best.design, ranges);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best)
}

/// Searches the original design space for candidates whose reduced design
/// coordinates are closest to `target_code` (squared Euclidean distance),
/// honoring the constraints. Returns the top-K ascending, ties broken by
/// lexicographic design order.
pub fn search_designs(
    pe: &PseudoEncoder,
    target_code: ArrayView1<f64>,
    ranges: &DesignRanges,
    config: &SearchConfig,
    constraints: &ConstraintSet,
) -> Result<Vec<ScoredDesign>> {
    config.validate()?;
    ranges.validate()?;
    if target_code.len() != pe.reduced_design_dim() {
        return Err(Error::shape(
            format!("target code of length {}", pe.reduced_design_dim()),
            format!("{}", target_code.len()),
        ));
    }

    let keep = config.top_k.max(config.beam_width);
    let mut pool: Vec<ScoredDesign> = match config.strategy {
        SearchStrategy::FullGrid => {
            let grids = build_grids(ranges, config, constraints)?;
            let cells = grid_cells(&grids);
            if cells > GRID_CELL_CAP {
                return Err(Error::InvalidConfig(format!(
                    "full grid has {cells} cells (cap {GRID_CELL_CAP}); lower the resolution or use the random strategy"
                )));
            }
            score_candidates(pe, target_code, enumerate_grid(&grids, ranges), constraints, keep)?
        }
        SearchStrategy::Random | SearchStrategy::Beam => {
            const CHUNK: usize = 8192;
            let chunks = config.budget.div_ceil(CHUNK);
            let mut merged: Vec<ScoredDesign> = (0..chunks as u64)
                .into_par_iter()
                .map(|c| {
                    let count = CHUNK.min(config.budget - (c as usize) * CHUNK);
                    let designs =
                        random_candidates(ranges, constraints, config.seed, c, count);
                    score_candidates(pe, target_code, designs, constraints, keep)
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            merged.sort_by(cmp_scored);
            merged.dedup_by(|a, b| a.design.to_values() == b.design.to_values());
            merged.truncate(keep);
            merged
        }
    };

    if pool.is_empty() {
        return Err(Error::Empty(
            "no candidates survive the constraints".into(),
        ));
    }

    if config.strategy == SearchStrategy::Beam {
        let grids = build_grids(ranges, config, constraints)?;
        let refined: Vec<ScoredDesign> = pool
            .par_iter()
            .take(config.beam_width)
            .map(|c| refine_candidate(pe, target_code, c, &grids, ranges, constraints, 8))
            .collect::<Result<_>>()?;
        pool.extend(refined);
        pool.sort_by(cmp_scored);
        pool.dedup_by(|a, b| a.design.to_values() == b.design.to_values());
    }

    pool.truncate(config.top_k);
    Ok(pool)
}

/// A candidate after surrogate verification.
#[derive(Debug, Clone)]
pub struct VerifiedDesign {
    pub design: DesignVector,
    pub band_mse: f64,
    pub spectrum: ResponseSpectrum,
}

/// Simulates every candidate with the surrogate and re-ranks ascending by
/// band MSE against the target.
pub fn verify_candidates(
    candidates: &[DesignVector],
    target: &TargetSpec,
    materials: &MaterialDb,
) -> Result<Vec<VerifiedDesign>> {
    if candidates.is_empty() {
        return Err(Error::Empty("no candidates to verify".into()));
    }
    let mut verified: Vec<VerifiedDesign> = candidates
        .par_iter()
        .map(|d| {
            let spectrum = simulate(d, materials)?;
            let band_mse = target.band_mse(&spectrum)?;
            Ok(VerifiedDesign {
                design: *d,
                band_mse,
                spectrum,
            })
        })
        .collect::<Result<_>>()?;
    verified.sort_by(|a, b| {
        a.band_mse
            .partial_cmp(&b.band_mse)
            .expect("finite mse")
            .then_with(|| a.design.lex_cmp(&b.design))
    });
    Ok(verified)
}

/// Machine-readable result of one design run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignReport {
    pub band_nm: Option<(f64, f64)>,
    pub search: SearchConfig,
    pub target_code: Vec<f64>,
    pub results: Vec<DesignResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignResult {
    pub rank: usize,
    pub design: DesignVector,
    pub design_values: Vec<f64>,
    pub reduced_code: Vec<f64>,
    pub code_distance: f64,
    pub band_mse: f64,
}

impl DesignReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).expect("report serializes"),
        )?;
        Ok(())
    }
}

/// The full design pipeline: desired response → reduced design coordinates →
/// candidate search → surrogate verification.
pub fn design(
    target: &TargetSpec,
    inverse: &InverseModel,
    pe: &PseudoEncoder,
    materials: &MaterialDb,
    config: &SearchConfig,
    constraints: &ConstraintSet,
) -> Result<DesignReport> {
    if inverse.reduced_design_dim() != pe.reduced_design_dim() {
        return Err(Error::shape(
            format!("reduced design dim {}", pe.reduced_design_dim()),
            format!("{}", inverse.reduced_design_dim()),
        ));
    }
    let target_code = inverse.target_reduced_design(target)?;
    // verify more than requested so simulation can reorder the shortlist
    let mut search_config = *config;
    search_config.top_k = (config.top_k * 4).max(config.top_k + 8);
    let scored = search_designs(pe, target_code.view(), pe.ranges(), &search_config, constraints)?;
    let candidates: Vec<DesignVector> = scored.iter().map(|s| s.design).collect();
    let verified = verify_candidates(&candidates, target, materials)?;

    let results: Vec<DesignResult> = verified
        .iter()
        .take(config.top_k)
        .enumerate()
        .map(|(rank, v)| {
            let code = pe.encode_design(&v.design)?;
            let code_distance = code
                .iter()
                .zip(target_code.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Ok(DesignResult {
                rank: rank + 1,
                design: v.design,
                design_values: v.design.to_values().to_vec(),
                reduced_code: code.to_vec(),
                code_distance,
                band_mse: v.band_mse,
            })
        })
        .collect::<Result<_>>()?;

    Ok(DesignReport {
        band_nm: target.band_nm(),
        search: *config,
        target_code: target_code.to_vec(),
        results,
    })
}
