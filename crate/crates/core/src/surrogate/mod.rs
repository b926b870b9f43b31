//! Deterministic surrogate forward solver.
//!
//! Each building block of the supercell — a gold nanoribbon grating over a
//! GST film over a gold backreflector — is homogenized into a three-layer
//! planar stack and solved with the transfer-matrix method at normal
//! incidence. The supercell reflectance is the pitch-weighted incoherent
//! average of the three block spectra, which deliberately makes the response
//! invariant under block permutations (a documented many-to-one symmetry of
//! the design space).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{CrystallizationFraction, MaterialDb};

mod tmm;

pub use tmm::{stack_reflectance, stack_rt, Layer, LayerStack};

/// Ribbon (grating) layer thickness, nm. The geometry fixes it; it is not a
/// design parameter.
pub const DEFAULT_RIBBON_THICKNESS_NM: f64 = 50.0;

/// Gold backreflector thickness, nm — optically opaque across the band.
pub const AU_BACKREFLECTOR_NM: f64 = 100.0;

/// Minimum gap between neighboring ribbons: w <= p - 50 nm.
pub const MIN_RIBBON_GAP_NM: f64 = 50.0;

/// Number of sampled wavelengths / dimensionality of the response space.
pub const RESPONSE_DIM: usize = 200;

/// Number of design parameters.
pub const DESIGN_DIM: usize = 10;

/// Canonical design-parameter names in flat-vector order.
pub const PARAM_NAMES: [&str; DESIGN_DIM] =
    ["h", "lc1", "lc2", "lc3", "p1", "p2", "p3", "w1", "w2", "w3"];

/// Canonical index of a design parameter name.
pub fn param_index(name: &str) -> Option<usize> {
    PARAM_NAMES.iter().position(|&n| n == name)
}

/// The ten physical design parameters of one supercell:
/// GST thickness `h`, per-block crystallization fractions `lc`, pitches `p`,
/// and ribbon widths `w` (all lengths in nm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    pub h: f64,
    pub lc: [CrystallizationFraction; 3],
    pub p: [f64; 3],
    pub w: [f64; 3],
}

impl DesignVector {
    pub fn new(
        h: f64,
        lc: [CrystallizationFraction; 3],
        p: [f64; 3],
        w: [f64; 3],
    ) -> Result<DesignVector> {
        for (name, v) in [("h", h), ("p1", p[0]), ("p2", p[1]), ("p3", p[2]), ("w1", w[0]), ("w2", w[1]), ("w3", w[2])] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::OutOfRange(format!(
                    "design length {name} must be positive, got {v}"
                )));
            }
        }
        for i in 0..3 {
            if w[i] > p[i] - MIN_RIBBON_GAP_NM {
                return Err(Error::OutOfRange(format!(
                    "w{} = {} exceeds p{} - {} nm = {}",
                    i + 1,
                    w[i],
                    i + 1,
                    MIN_RIBBON_GAP_NM,
                    p[i] - MIN_RIBBON_GAP_NM
                )));
            }
        }
        Ok(DesignVector { h, lc, p, w })
    }

    /// Flat representation in the canonical order
    /// (h, lc1, lc2, lc3, p1, p2, p3, w1, w2, w3).
    pub fn to_values(&self) -> [f64; DESIGN_DIM] {
        [
            self.h,
            self.lc[0].value(),
            self.lc[1].value(),
            self.lc[2].value(),
            self.p[0],
            self.p[1],
            self.p[2],
            self.w[0],
            self.w[1],
            self.w[2],
        ]
    }

    /// Inverse of [`DesignVector::to_values`]; lc entries must sit on the
    /// 11-level grid.
    pub fn from_values(values: &[f64]) -> Result<DesignVector> {
        if values.len() != DESIGN_DIM {
            return Err(Error::shape(
                format!("{DESIGN_DIM} design values"),
                format!("{}", values.len()),
            ));
        }
        let lc = [
            CrystallizationFraction::from_value(values[1])?,
            CrystallizationFraction::from_value(values[2])?,
            CrystallizationFraction::from_value(values[3])?,
        ];
        DesignVector::new(
            values[0],
            lc,
            [values[4], values[5], values[6]],
            [values[7], values[8], values[9]],
        )
    }

    /// Fill factor w/p of one block (0-based index).
    pub fn fill_factor(&self, block: usize) -> f64 {
        self.w[block] / self.p[block]
    }

    /// Reorders the per-block triples (lc_i, p_i, w_i) by `perm`.
    pub fn permute_blocks(&self, perm: [usize; 3]) -> DesignVector {
        DesignVector {
            h: self.h,
            lc: [self.lc[perm[0]], self.lc[perm[1]], self.lc[perm[2]]],
            p: [self.p[perm[0]], self.p[perm[1]], self.p[perm[2]]],
            w: [self.w[perm[0]], self.w[perm[1]], self.w[perm[2]]],
        }
    }

    /// Lexicographic comparison on the canonical value order, used as a
    /// deterministic tie-breaker in searches.
    pub fn lex_cmp(&self, other: &DesignVector) -> std::cmp::Ordering {
        let a = self.to_values();
        let b = other.to_values();
        for i in 0..DESIGN_DIM {
            match a[i].partial_cmp(&b[i]).expect("design values are finite") {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    }
}

/// The fixed wavelength sampling: 200 points spanning 1250-1850 nm
/// inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    pub lambda_min_nm: f64,
    pub lambda_max_nm: f64,
    pub count: usize,
}

impl WavelengthGrid {
    pub fn standard() -> WavelengthGrid {
        WavelengthGrid {
            lambda_min_nm: 1250.0,
            lambda_max_nm: 1850.0,
            count: RESPONSE_DIM,
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        debug_assert!(i < self.count);
        self.lambda_min_nm
            + (self.lambda_max_nm - self.lambda_min_nm) * i as f64 / (self.count - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }

    pub fn step(&self) -> f64 {
        (self.lambda_max_nm - self.lambda_min_nm) / (self.count - 1) as f64
    }

    /// Index range of samples falling inside [lambda_a, lambda_b].
    pub fn band_indices(&self, lambda_a: f64, lambda_b: f64) -> Result<std::ops::Range<usize>> {
        if !(lambda_a < lambda_b) {
            return Err(Error::OutOfRange(format!(
                "band bounds must satisfy a < b, got [{lambda_a}, {lambda_b}]"
            )));
        }
        if lambda_a < self.lambda_min_nm - 1e-9 || lambda_b > self.lambda_max_nm + 1e-9 {
            return Err(Error::OutOfRange(format!(
                "band [{lambda_a}, {lambda_b}] outside grid [{}, {}]",
                self.lambda_min_nm, self.lambda_max_nm
            )));
        }
        let start = (0..self.count)
            .find(|&i| self.value(i) >= lambda_a - 1e-9)
            .unwrap_or(self.count);
        let end = (0..self.count)
            .rev()
            .find(|&i| self.value(i) <= lambda_b + 1e-9)
            .map(|i| i + 1)
            .unwrap_or(0);
        if end.saturating_sub(start) < 2 {
            return Err(Error::OutOfRange(format!(
                "band [{lambda_a}, {lambda_b}] covers fewer than 2 grid samples"
            )));
        }
        Ok(start..end)
    }
}

/// One reflectance value per grid wavelength, each in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResponseSpectrum(Vec<f64>);

impl ResponseSpectrum {
    /// Validates range and length. Values overshooting 1.0 by at most 1e-9
    /// (numerical round-off in lossless limits) are clamped.
    pub fn new(mut values: Vec<f64>) -> Result<ResponseSpectrum> {
        if values.len() != RESPONSE_DIM {
            return Err(Error::shape(
                format!("{RESPONSE_DIM} spectral samples"),
                format!("{}", values.len()),
            ));
        }
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFinite("spectral sample".into()));
            }
            if *v > 1.0 && *v <= 1.0 + 1e-9 {
                *v = 1.0;
            }
            if !(0.0..=1.0).contains(v) {
                return Err(Error::OutOfRange(format!(
                    "reflectance {v} outside [0, 1]"
                )));
            }
        }
        Ok(ResponseSpectrum(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Homogenized permittivity of the ribbon layer for the field polarized
/// across the wires: series (inverse-average) mixing of gold and air,
/// 1/ε_eff = f/ε_Au + (1−f)/1.
pub fn ribbon_layer_eps(fill_factor: f64, eps_au: Complex64) -> Result<Complex64> {
    if !(fill_factor > 0.0 && fill_factor < 1.0) {
        return Err(Error::OutOfRange(format!(
            "fill factor must lie strictly in (0,1), got {fill_factor}"
        )));
    }
    if eps_au.norm() == 0.0 {
        return Err(Error::Degenerate("eps_Au = 0".into()));
    }
    let inv = fill_factor / eps_au + (1.0 - fill_factor);
    if inv.norm() < 1e-300 {
        return Err(Error::Degenerate("series mixture pole".into()));
    }
    Ok(1.0 / inv)
}

/// Complex refractive index with the Im(n) >= 0 branch.
fn index_from_eps(eps: Complex64) -> Complex64 {
    let n = eps.sqrt();
    if n.im < 0.0 {
        -n
    } else {
        n
    }
}

/// Builds the homogenized three-layer stack of one building block
/// (1-based `block_index`) at wavelength `lambda_nm`: ribbon layer, GST at
/// the block's crystallization fraction, and the gold backreflector, with
/// air above and the SiO2 substrate below.
pub fn build_stack(
    design: &DesignVector,
    block_index: usize,
    t_ribbon_nm: f64,
    materials: &MaterialDb,
    lambda_nm: f64,
) -> Result<LayerStack> {
    if !(1..=3).contains(&block_index) {
        return Err(Error::OutOfRange(format!(
            "block index must be 1, 2, or 3, got {block_index}"
        )));
    }
    if t_ribbon_nm <= 0.0 {
        return Err(Error::OutOfRange(format!(
            "ribbon thickness must be positive, got {t_ribbon_nm}"
        )));
    }
    let b = block_index - 1;
    let eps_au = materials.eps_au(lambda_nm)?;
    let eps_ribbon = ribbon_layer_eps(design.fill_factor(b), eps_au)?;
    let eps_gst = materials.eps_gst(design.lc[b], lambda_nm)?;
    LayerStack::new(
        Complex64::new(MaterialDb::N_AIR, 0.0),
        Complex64::new(materials.n_sio2, 0.0),
        vec![
            Layer {
                n: index_from_eps(eps_ribbon),
                thickness_nm: t_ribbon_nm,
            },
            Layer {
                n: index_from_eps(eps_gst),
                thickness_nm: design.h,
            },
            Layer {
                n: index_from_eps(eps_au),
                thickness_nm: AU_BACKREFLECTOR_NM,
            },
        ],
    )
}

/// Full supercell spectrum: the pitch-weighted average of the three block
/// reflectances at every grid wavelength.
pub fn supercell_reflectance(
    design: &DesignVector,
    grid: &WavelengthGrid,
    materials: &MaterialDb,
    t_ribbon_nm: f64,
) -> Result<ResponseSpectrum> {
    let pitch_sum: f64 = design.p.iter().sum();
    let mut values = Vec::with_capacity(grid.count);
    for i in 0..grid.count {
        let lambda = grid.value(i);
        let mut acc = 0.0;
        for block in 1..=3 {
            let stack = build_stack(design, block, t_ribbon_nm, materials, lambda)?;
            acc += design.p[block - 1] * stack_reflectance(&stack, lambda)?;
        }
        values.push(acc / pitch_sum);
    }
    ResponseSpectrum::new(values)
}

/// `supercell_reflectance` on the standard grid with the default ribbon
/// thickness — the surrogate equivalent of one full-wave simulation.
pub fn simulate(design: &DesignVector, materials: &MaterialDb) -> Result<ResponseSpectrum> {
    supercell_reflectance(
        design,
        &WavelengthGrid::standard(),
        materials,
        DEFAULT_RIBBON_THICKNESS_NM,
    )
}
