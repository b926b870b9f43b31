//! Ground-truth dataset handling: seeded design sampling, surrogate
//! labeling, train/validation splits, and CSV + manifest persistence.
//!
//! Every instance is generated from its own ChaCha stream derived from
//! (seed, index), so generation is order-independent and embarrassingly
//! parallel, and regenerating under the same manifest reproduces the file
//! byte for byte.

use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::materials::{CrystallizationFraction, MaterialDb, LC_LEVELS};
use crate::surrogate::{
    simulate, DesignVector, ResponseSpectrum, WavelengthGrid, DESIGN_DIM, MIN_RIBBON_GAP_NM,
    RESPONSE_DIM,
};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Admissible intervals of the design parameters. Widths are sampled
/// conditionally on the drawn pitch so the ribbon-gap constraint always
/// holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignRanges {
    pub h_nm: (f64, f64),
    pub pitch_nm: (f64, f64),
    pub w_min_nm: f64,
}

impl Default for DesignRanges {
    fn default() -> Self {
        DesignRanges {
            h_nm: (50.0, 250.0),
            pitch_nm: (300.0, 700.0),
            w_min_nm: 100.0,
        }
    }
}

impl DesignRanges {
    pub fn validate(&self) -> Result<()> {
        let ok = self.h_nm.0 > 0.0
            && self.h_nm.0 < self.h_nm.1
            && self.pitch_nm.0 > 0.0
            && self.pitch_nm.0 < self.pitch_nm.1
            && self.w_min_nm > 0.0
            && self.w_min_nm <= self.pitch_nm.0 - MIN_RIBBON_GAP_NM;
        if !ok {
            return Err(Error::InvalidConfig(format!("inconsistent ranges {self:?}")));
        }
        Ok(())
    }

    /// Upper width bound for a given pitch.
    pub fn w_max_nm(&self, pitch: f64) -> f64 {
        pitch - MIN_RIBBON_GAP_NM
    }

    pub fn contains(&self, design: &DesignVector) -> bool {
        let in_h = design.h >= self.h_nm.0 && design.h <= self.h_nm.1;
        let in_blocks = (0..3).all(|i| {
            design.p[i] >= self.pitch_nm.0
                && design.p[i] <= self.pitch_nm.1
                && design.w[i] >= self.w_min_nm
                && design.w[i] <= self.w_max_nm(design.p[i])
        });
        in_h && in_blocks
    }
}

/// Uniform design draw: h and pitches over their intervals, widths over
/// [w_min, p − gap] conditioned on the drawn pitch, lc uniform over the 11
/// levels.
pub fn sample_design<R: Rng>(ranges: &DesignRanges, rng: &mut R) -> DesignVector {
    let h = Uniform::new_inclusive(ranges.h_nm.0, ranges.h_nm.1).sample(rng);
    let pitch_dist = Uniform::new_inclusive(ranges.pitch_nm.0, ranges.pitch_nm.1);
    let mut lc = [CrystallizationFraction::from_level(0).unwrap(); 3];
    let mut p = [0.0; 3];
    let mut w = [0.0; 3];
    for i in 0..3 {
        lc[i] = CrystallizationFraction::from_level(rng.gen_range(0..LC_LEVELS)).unwrap();
        p[i] = pitch_dist.sample(rng);
        w[i] = Uniform::new_inclusive(ranges.w_min_nm, ranges.w_max_nm(p[i])).sample(rng);
    }
    DesignVector::new(h, lc, p, w).expect("sampled design satisfies invariants")
}

/// Provenance of a generated dataset: everything needed to regenerate the
/// file bit for bit, plus a digest of the data it labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub n: usize,
    pub seed: u64,
    pub ranges: DesignRanges,
    pub grid: WavelengthGrid,
    pub material_hash: String,
    pub command: String,
    /// SHA-256 of the CSV bytes; filled on save, verified on load.
    pub data_sha256: Option<String>,
}

/// Paired (design, spectrum) instances with their provenance manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub pairs: Vec<(DesignVector, ResponseSpectrum)>,
    pub manifest: Manifest,
}

/// A dedicated ChaCha stream for instance `index` under `seed`.
fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Generates `n` labeled instances under `seed`.
pub fn generate(
    n: usize,
    seed: u64,
    ranges: &DesignRanges,
    materials: &MaterialDb,
    command: &str,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("dataset size must be >= 1".into()));
    }
    ranges.validate()?;
    materials.validate()?;
    let pairs: Vec<(DesignVector, ResponseSpectrum)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(seed, i);
            let design = sample_design(ranges, &mut rng);
            let spectrum = simulate(&design, materials).map_err(|e| {
                Error::InvalidConfig(format!("surrogate failed on instance {i} ({design:?}): {e}"))
            })?;
            Ok((design, spectrum))
        })
        .collect::<Result<_>>()?;

    // duplicate designs would make the train/val split leak
    let mut seen = std::collections::HashSet::new();
    for (d, _) in &pairs {
        let key: Vec<u64> = d.to_values().iter().map(|v| v.to_bits()).collect();
        if !seen.insert(key) {
            return Err(Error::InvalidConfig(format!("duplicate sampled design {d:?}")));
        }
    }

    Ok(Dataset {
        pairs,
        manifest: Manifest {
            format_version: DATASET_FORMAT_VERSION,
            n,
            seed,
            ranges: *ranges,
            grid: WavelengthGrid::standard(),
            material_hash: materials.config_hash(),
            command: command.to_string(),
            data_sha256: None,
        },
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Deterministic disjoint shuffle-split. `train_fraction` of the rows
    /// (rounded) go to the first side.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must lie in (0,1), got {train_fraction}"
            )));
        }
        let n = self.len();
        let n_train = (n as f64 * train_fraction).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::Empty(format!(
                "split of {n} rows at {train_fraction} leaves one side empty"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let pick = |idx: &[usize]| Dataset {
            pairs: idx.iter().map(|&i| self.pairs[i].clone()).collect(),
            manifest: self.manifest.clone(),
        };
        Ok((pick(&order[..n_train]), pick(&order[n_train..])))
    }

    /// Design rows as an (n × 10) matrix in canonical parameter order.
    pub fn design_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.len(), DESIGN_DIM));
        for (r, (d, _)) in self.pairs.iter().enumerate() {
            for (c, v) in d.to_values().into_iter().enumerate() {
                m[[r, c]] = v;
            }
        }
        m
    }

    /// Spectrum rows as an (n × 200) matrix.
    pub fn spectrum_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.len(), RESPONSE_DIM));
        for (r, (_, s)) in self.pairs.iter().enumerate() {
            for (c, v) in s.values().iter().enumerate() {
                m[[r, c]] = *v;
            }
        }
        m
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER_PREFIX);
        for i in 0..RESPONSE_DIM {
            let _ = write!(out, ",r_{i:03}");
        }
        out.push('\n');
        for (design, spectrum) in &self.pairs {
            let mut first = true;
            for v in design.to_values() {
                if !first {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
                first = false;
            }
            for v in spectrum.values() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<path>` (CSV) and the `<path>.manifest.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let csv = self.to_csv();
        let mut manifest = self.manifest.clone();
        manifest.data_sha256 = Some(sha256_hex(csv.as_bytes()));
        std::fs::write(path, &csv)?;
        let manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(manifest_path(path), manifest_text)?;
        Ok(())
    }

    /// Loads a dataset, verifying the manifest digest and all row invariants.
    pub fn load(path: &Path) -> Result<Dataset> {
        let csv = std::fs::read_to_string(path)?;
        let manifest_file = manifest_path(path);
        let manifest_text = std::fs::read_to_string(&manifest_file)?;
        let manifest: Manifest = serde_json::from_str(&manifest_text)
            .map_err(|e| Error::format(manifest_file.display().to_string(), e.to_string()))?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::format(
                manifest_file.display().to_string(),
                format!("unsupported format_version {}", manifest.format_version),
            ));
        }
        match &manifest.data_sha256 {
            Some(expected) => {
                let actual = sha256_hex(csv.as_bytes());
                if *expected != actual {
                    return Err(Error::format(
                        path.display().to_string(),
                        format!(
                            "data digest mismatch: manifest declares {expected}, file hashes to {actual}"
                        ),
                    ));
                }
            }
            None => {
                return Err(Error::format(
                    manifest_file.display().to_string(),
                    "manifest lacks data_sha256",
                ))
            }
        }

        let display = path.display().to_string();
        let mut lines = csv.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(&display, "empty file"))?;
        let expected_header = {
            let mut h = String::from(CSV_HEADER_PREFIX);
            for i in 0..RESPONSE_DIM {
                let _ = write!(h, ",r_{i:03}");
            }
            h
        };
        if header != expected_header {
            return Err(Error::format(&display, "unexpected header"));
        }

        let mut pairs = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let row = lineno + 2; // 1-based, counting the header
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != DESIGN_DIM + RESPONSE_DIM {
                return Err(Error::format(
                    &display,
                    format!(
                        "row {row}: expected {} fields, found {}",
                        DESIGN_DIM + RESPONSE_DIM,
                        fields.len()
                    ),
                ));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::format(&display, format!("row {row}: bad number {s:?}")))
            };
            let mut design_vals = [0.0; DESIGN_DIM];
            for (i, f) in fields[..DESIGN_DIM].iter().enumerate() {
                design_vals[i] = parse(f)?;
            }
            let design = DesignVector::from_values(&design_vals)
                .map_err(|e| Error::format(&display, format!("row {row}: {e}")))?;
            if !manifest.ranges.contains(&design) {
                return Err(Error::format(
                    &display,
                    format!("row {row}: design outside manifest ranges"),
                ));
            }
            let mut spectrum = Vec::with_capacity(RESPONSE_DIM);
            for f in &fields[DESIGN_DIM..] {
                spectrum.push(parse(f)?);
            }
            let spectrum = ResponseSpectrum::new(spectrum)
                .map_err(|e| Error::format(&display, format!("row {row}: {e}")))?;
            pairs.push((design, spectrum));
        }
        if pairs.len() != manifest.n {
            return Err(Error::format(
                &display,
                format!("manifest declares {} rows, file has {}", manifest.n, pairs.len()),
            ));
        }
        Ok(Dataset { pairs, manifest })
    }
}

const CSV_HEADER_PREFIX: &str = "d_h,d_lc1,d_lc2,d_lc3,d_p1,d_p2,d_p3,d_w1,d_w2,d_w3";

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".manifest.json");
    std::path::PathBuf::from(s)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Per-parameter affine map of design vectors onto [−1, 1], fixed by the
/// ranges (widths use the global interval [w_min, p_max − gap]). Spectra are
/// already in [0,1] and stay unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    lo: [f64; DESIGN_DIM],
    hi: [f64; DESIGN_DIM],
}

impl Scaler {
    pub fn from_ranges(ranges: &DesignRanges) -> Scaler {
        let mut lo = [0.0; DESIGN_DIM];
        let mut hi = [1.0; DESIGN_DIM];
        lo[0] = ranges.h_nm.0;
        hi[0] = ranges.h_nm.1;
        // lc columns stay [0, 1]
        for i in 4..7 {
            lo[i] = ranges.pitch_nm.0;
            hi[i] = ranges.pitch_nm.1;
        }
        for i in 7..10 {
            lo[i] = ranges.w_min_nm;
            hi[i] = ranges.pitch_nm.1 - MIN_RIBBON_GAP_NM;
        }
        Scaler { lo, hi }
    }

    pub fn scale_value(&self, i: usize, v: f64) -> f64 {
        2.0 * (v - self.lo[i]) / (self.hi[i] - self.lo[i]) - 1.0
    }

    pub fn unscale_value(&self, i: usize, s: f64) -> f64 {
        self.lo[i] + (s + 1.0) * (self.hi[i] - self.lo[i]) / 2.0
    }

    pub fn scale(&self, design: &DesignVector) -> [f64; DESIGN_DIM] {
        let mut out = design.to_values();
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.scale_value(i, *v);
        }
        out
    }

    pub fn unscale(&self, scaled: &[f64; DESIGN_DIM]) -> [f64; DESIGN_DIM] {
        let mut out = *scaled;
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.unscale_value(i, *v);
        }
        out
    }

    /// Scales a whole design matrix (rows in canonical order).
    pub fn scale_matrix(&self, designs: &Array2<f64>) -> Array2<f64> {
        let mut out = designs.clone();
        for mut row in out.rows_mut() {
            for i in 0..DESIGN_DIM {
                row[i] = self.scale_value(i, row[i]);
            }
        }
        out
    }
}
