//! Complex permittivity models: Drude gold, phase-change GST with
//! Lorentz-Lorenz effective-medium mixing of partial crystallization, and
//! the constant-index dielectrics.
//!
//! Sign convention is e^{-iωt}: passive materials have Im(ε) ≥ 0.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 2.99792458e8;

/// Free-electron (Drude) metal parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrudeParams {
    pub eps_infinity: f64,
    /// Plasma frequency, rad/s.
    pub plasma_frequency: f64,
    /// Collision rate, rad/s.
    pub damping_rate: f64,
}

impl DrudeParams {
    /// Two-parameter near-infrared fit to gold.
    pub fn gold() -> DrudeParams {
        DrudeParams {
            eps_infinity: 9.0,
            plasma_frequency: 1.37e16,
            damping_rate: 1.05e14,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.plasma_frequency <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "plasma frequency must be > 0, got {}",
                self.plasma_frequency
            )));
        }
        self.validate_for_eval()
    }

    fn validate_for_eval(&self) -> Result<()> {
        if self.plasma_frequency < 0.0 || !self.plasma_frequency.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "plasma frequency must be finite and >= 0, got {}",
                self.plasma_frequency
            )));
        }
        if self.damping_rate < 0.0 || !self.damping_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "damping rate must be finite and >= 0, got {}",
                self.damping_rate
            )));
        }
        Ok(())
    }
}

/// Drude permittivity ε(ω) = ε∞ − ωp² / (ω² + iγω) at free-space wavelength
/// `lambda_nm`.
///
/// ωp = 0 is admitted here (it degenerates to the constant ε∞); a
/// `MaterialDb` still requires a strictly positive plasma frequency.
pub fn drude_eps(params: &DrudeParams, lambda_nm: f64) -> Result<Complex64> {
    if lambda_nm <= 0.0 || !lambda_nm.is_finite() {
        return Err(Error::OutOfRange(format!(
            "wavelength must be positive, got {lambda_nm} nm"
        )));
    }
    params.validate_for_eval()?;
    let omega = 2.0 * std::f64::consts::PI * C0 / (lambda_nm * 1e-9);
    let wp2 = params.plasma_frequency * params.plasma_frequency;
    let denom = Complex64::new(omega * omega, params.damping_rate * omega);
    Ok(Complex64::new(params.eps_infinity, 0.0) - wp2 / denom)
}

/// Amorphous/crystalline endpoint permittivities of GST.
///
/// Wavelength-independent by default (ε = n²); the wavelength argument keeps
/// the door open for dispersive data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GstModel {
    pub n_amorphous: Complex64,
    pub n_crystalline: Complex64,
}

impl GstModel {
    pub fn defaults() -> GstModel {
        GstModel {
            n_amorphous: Complex64::new(4.5, 0.12),
            n_crystalline: Complex64::new(7.0, 1.5),
        }
    }

    pub fn eps_amorphous(&self, _lambda_nm: f64) -> Complex64 {
        self.n_amorphous * self.n_amorphous
    }

    pub fn eps_crystalline(&self, _lambda_nm: f64) -> Complex64 {
        self.n_crystalline * self.n_crystalline
    }

    fn validate(&self) -> Result<()> {
        for (name, n) in [("n_a", self.n_amorphous), ("n_c", self.n_crystalline)] {
            if n.im < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "GST {name} must have Im >= 0 (passive), got {n}"
                )));
            }
        }
        Ok(())
    }
}

/// GST crystallization fraction, quantized to the 11-level grid
/// {0.0, 0.1, …, 1.0}. Stored as the level index so comparisons are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CrystallizationFraction(u8);

pub const LC_LEVELS: usize = 11;

impl CrystallizationFraction {
    /// Builds from a level index 0..=10.
    pub fn from_level(level: usize) -> Result<CrystallizationFraction> {
        if level >= LC_LEVELS {
            return Err(Error::OutOfRange(format!(
                "crystallization level {level} not in 0..=10"
            )));
        }
        Ok(CrystallizationFraction(level as u8))
    }

    /// Accepts a value that already sits on a grid level (within 1e-9).
    pub fn from_value(x: f64) -> Result<CrystallizationFraction> {
        let q = quantize_lc(x)?;
        if (q.value() - x).abs() > 1e-9 {
            return Err(Error::OutOfRange(format!(
                "lc {x} is not one of the 11 levels 0.0, 0.1, …, 1.0"
            )));
        }
        Ok(q)
    }

    pub fn level(&self) -> usize {
        self.0 as usize
    }

    pub fn value(&self) -> f64 {
        f64::from(self.0) / 10.0
    }

    pub fn all() -> impl Iterator<Item = CrystallizationFraction> {
        (0..LC_LEVELS as u8).map(CrystallizationFraction)
    }
}

/// Nearest 11-grid level for `x` in [0,1]; exact midpoints round up.
pub fn quantize_lc(x: f64) -> Result<CrystallizationFraction> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange(format!("lc must lie in [0,1], got {x}")));
    }
    let level = ((x * 10.0 + 0.5).floor() as usize).min(10);
    Ok(CrystallizationFraction(level as u8))
}

/// Effective permittivity of partially crystallized GST from the
/// Lorentz-Lorenz mixing rule: the Clausius-Mossotti transform
/// t(ε) = (ε−1)/(ε+2) of the mixture is the lc-weighted mean of the two
/// endpoint transforms,
///
///   t(ε_eff) = lc · t(ε_c) + (1 − lc) · t(ε_a),
///
/// solved for ε_eff. The (1 − lc) weighting makes lc = 0 recover the
/// amorphous endpoint exactly and lc = 1 the crystalline one.
pub fn lorentz_lorenz(eps_a: Complex64, eps_c: Complex64, lc: f64) -> Result<Complex64> {
    if !(0.0..=1.0).contains(&lc) {
        return Err(Error::OutOfRange(format!("lc must lie in [0,1], got {lc}")));
    }
    for (name, eps) in [("eps_a", eps_a), ("eps_c", eps_c)] {
        if (eps + 2.0).norm() == 0.0 {
            return Err(Error::Degenerate(format!("{name} + 2 = 0")));
        }
    }
    let t_a = (eps_a - 1.0) / (eps_a + 2.0);
    let t_c = (eps_c - 1.0) / (eps_c + 2.0);
    let rhs = lc * t_c + (1.0 - lc) * t_a;
    let denom = 1.0 - rhs;
    if denom.norm() < 1e-12 {
        return Err(Error::Degenerate(
            "mixture transform equals 1 (effective permittivity pole)".into(),
        ));
    }
    Ok((1.0 + 2.0 * rhs) / denom)
}

/// Dispersion models for every constituent material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialDb {
    pub au: DrudeParams,
    pub gst: GstModel,
    pub n_sio2: f64,
}

impl Default for MaterialDb {
    fn default() -> Self {
        MaterialDb {
            au: DrudeParams::gold(),
            gst: GstModel::defaults(),
            n_sio2: 1.444,
        }
    }
}

impl MaterialDb {
    pub const N_AIR: f64 = 1.0;

    pub fn validate(&self) -> Result<()> {
        self.au.validate()?;
        self.gst.validate()?;
        if self.n_sio2 <= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "n_SiO2 must be > 1, got {}",
                self.n_sio2
            )));
        }
        Ok(())
    }

    pub fn eps_au(&self, lambda_nm: f64) -> Result<Complex64> {
        drude_eps(&self.au, lambda_nm)
    }

    /// Effective GST permittivity at crystallization fraction `lc`.
    pub fn eps_gst(&self, lc: CrystallizationFraction, lambda_nm: f64) -> Result<Complex64> {
        lorentz_lorenz(
            self.gst.eps_amorphous(lambda_nm),
            self.gst.eps_crystalline(lambda_nm),
            lc.value(),
        )
    }

    /// Loads overrides from a TOML file with dotted keys
    /// (`au.eps_inf`, `au.wp`, `au.gamma`, `gst.n_a_re`, `gst.n_a_im`,
    /// `gst.n_c_re`, `gst.n_c_im`, `sio2.n`); defaults apply when a key is
    /// absent.
    pub fn from_config_file(path: &Path) -> Result<MaterialDb> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text)
            .map_err(|e| match e {
                Error::Format { detail, .. } => Error::format(path.display().to_string(), detail),
                other => other,
            })
    }

    pub fn from_config_str(text: &str) -> Result<MaterialDb> {
        #[derive(Deserialize, Default)]
        #[serde(deny_unknown_fields)]
        struct AuSection {
            eps_inf: Option<f64>,
            wp: Option<f64>,
            gamma: Option<f64>,
        }
        #[derive(Deserialize, Default)]
        #[serde(deny_unknown_fields)]
        struct GstSection {
            n_a_re: Option<f64>,
            n_a_im: Option<f64>,
            n_c_re: Option<f64>,
            n_c_im: Option<f64>,
        }
        #[derive(Deserialize, Default)]
        #[serde(deny_unknown_fields)]
        struct Sio2Section {
            n: Option<f64>,
        }
        #[derive(Deserialize, Default)]
        #[serde(deny_unknown_fields)]
        struct ConfigFile {
            au: Option<AuSection>,
            gst: Option<GstSection>,
            sio2: Option<Sio2Section>,
        }

        let cfg: ConfigFile =
            toml::from_str(text).map_err(|e| Error::format("<config>", e.to_string()))?;
        let mut db = MaterialDb::default();
        if let Some(au) = cfg.au {
            if let Some(v) = au.eps_inf {
                db.au.eps_infinity = v;
            }
            if let Some(v) = au.wp {
                db.au.plasma_frequency = v;
            }
            if let Some(v) = au.gamma {
                db.au.damping_rate = v;
            }
        }
        if let Some(gst) = cfg.gst {
            if let Some(v) = gst.n_a_re {
                db.gst.n_amorphous.re = v;
            }
            if let Some(v) = gst.n_a_im {
                db.gst.n_amorphous.im = v;
            }
            if let Some(v) = gst.n_c_re {
                db.gst.n_crystalline.re = v;
            }
            if let Some(v) = gst.n_c_im {
                db.gst.n_crystalline.im = v;
            }
        }
        if let Some(sio2) = cfg.sio2 {
            if let Some(v) = sio2.n {
                db.n_sio2 = v;
            }
        }
        db.validate()?;
        Ok(db)
    }

    /// Stable hex digest of the resolved material parameters, recorded in
    /// dataset manifests.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = serde_json::to_string(self).expect("material db serializes");
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn drude_zero_crossing_at_plasma_frequency() {
        // γ=0, ε∞=1: ε(ωp) = 1 − ωp²/ωp² = 0
        let params = DrudeParams {
            eps_infinity: 1.0,
            plasma_frequency: 1.0e16,
            damping_rate: 0.0,
        };
        let lambda_nm = 2.0 * std::f64::consts::PI * C0 / 1.0e16 * 1e9;
        let eps = drude_eps(&params, lambda_nm).unwrap();
        assert!(eps.norm() < 1e-12, "eps = {eps}");
    }

    #[test]
    fn drude_gold_near_ir_magnitude() {
        let eps = drude_eps(&DrudeParams::gold(), 1550.0).unwrap();
        // hand evaluation: ω = 2πc/1550nm ≈ 1.2153e15 rad/s,
        // Re ε ≈ 9 − ωp²/(ω²+γ²) ≈ −117
        assert!((eps.re + 115.0).abs() < 15.0, "Re eps = {}", eps.re);
        assert!(eps.im > 0.0);
    }

    #[test]
    fn drude_zero_plasma_frequency_is_constant_eps_infinity() {
        let params = DrudeParams {
            eps_infinity: 3.5,
            plasma_frequency: 0.0,
            damping_rate: 7.0e13,
        };
        for lambda in [800.0, 1250.0, 1550.0, 1850.0] {
            let eps = drude_eps(&params, lambda).unwrap();
            assert_relative_eq!(eps.re, 3.5, max_relative = 1e-15);
            assert_eq!(eps.im, 0.0);
        }
        // but a MaterialDb insists on a real metal
        let db = MaterialDb {
            au: params,
            ..MaterialDb::default()
        };
        assert!(db.validate().is_err());
    }

    #[test]
    fn drude_rejects_nonpositive_wavelength() {
        assert!(drude_eps(&DrudeParams::gold(), 0.0).is_err());
        assert!(drude_eps(&DrudeParams::gold(), -5.0).is_err());
    }

    #[test]
    fn lorentz_lorenz_endpoints_exact() {
        let eps_a = Complex64::new(20.2356, 1.08);
        let eps_c = Complex64::new(46.75, 21.0);
        let at0 = lorentz_lorenz(eps_a, eps_c, 0.0).unwrap();
        let at1 = lorentz_lorenz(eps_a, eps_c, 1.0).unwrap();
        assert!((at0 - eps_a).norm() < 1e-12, "lc=0 gave {at0}");
        assert!((at1 - eps_c).norm() < 1e-12, "lc=1 gave {at1}");
    }

    #[test]
    fn lorentz_lorenz_midpoint_matches_direct_algebra() {
        // real endpoints n=4.5 and n=7: RHS = 0.5·(19.25/22.25) + 0.5·(48/51)
        let eps_a = Complex64::new(20.25, 0.0);
        let eps_c = Complex64::new(49.0, 0.0);
        let rhs = 0.5 * (19.25 / 22.25) + 0.5 * (48.0 / 51.0);
        let expected = (1.0 + 2.0 * rhs) / (1.0 - rhs);
        let got = lorentz_lorenz(eps_a, eps_c, 0.5).unwrap();
        assert_relative_eq!(got.re, expected, max_relative = 1e-12);
        assert!(got.im.abs() < 1e-14);
    }

    #[test]
    fn lorentz_lorenz_transform_linear_in_lc() {
        let eps_a = GstModel::defaults().eps_amorphous(1550.0);
        let eps_c = GstModel::defaults().eps_crystalline(1550.0);
        let t = |eps: Complex64| (eps - 1.0) / (eps + 2.0);
        let (ta, tc) = (t(eps_a), t(eps_c));
        for lc in CrystallizationFraction::all() {
            let eff = lorentz_lorenz(eps_a, eps_c, lc.value()).unwrap();
            let expected = lc.value() * tc + (1.0 - lc.value()) * ta;
            assert!((t(eff) - expected).norm() < 1e-12);
            // passivity at every level
            assert!(eff.im >= -1e-12, "Im eps_eff = {} at lc {}", eff.im, lc.value());
        }
    }

    #[test]
    fn lorentz_lorenz_pole_is_an_error() {
        // t(−5) = 2 and t(1) = 0, so the lc=0.5 mixture transform is exactly 1
        let eps_a = Complex64::new(-5.0, 0.0);
        let eps_c = Complex64::new(1.0, 0.0);
        let err = lorentz_lorenz(eps_a, eps_c, 0.5).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn quantize_nearest_level() {
        assert_eq!(quantize_lc(0.34).unwrap().value(), 0.3);
        assert_eq!(quantize_lc(0.05).unwrap().value(), 0.1); // midpoint rounds up
        assert_eq!(quantize_lc(1.0).unwrap().value(), 1.0);
        assert_eq!(quantize_lc(0.0).unwrap().value(), 0.0);
        assert!(quantize_lc(-0.01).is_err());
        assert!(quantize_lc(1.01).is_err());
    }

    #[test]
    fn fraction_from_value_requires_grid_levels() {
        assert!(CrystallizationFraction::from_value(0.7).is_ok());
        assert!(CrystallizationFraction::from_value(0.34).is_err());
        assert_eq!(
            CrystallizationFraction::from_value(0.2).unwrap().level(),
            2
        );
    }

    #[test]
    fn config_defaults_and_overrides() {
        let db = MaterialDb::from_config_str("").unwrap();
        assert_eq!(db, MaterialDb::default());

        let text = "au.eps_inf = 10.5\ngst.n_c_im = 2.0\nsio2.n = 1.45\n";
        let db = MaterialDb::from_config_str(text).unwrap();
        assert_eq!(db.au.eps_infinity, 10.5);
        assert_eq!(db.au.plasma_frequency, DrudeParams::gold().plasma_frequency);
        assert_eq!(db.gst.n_crystalline.im, 2.0);
        assert_eq!(db.n_sio2, 1.45);

        assert!(MaterialDb::from_config_str("sio2.n = 0.5").is_err());
        assert!(MaterialDb::from_config_str("au.unknown = 1").is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = MaterialDb::default().config_hash();
        let b = MaterialDb::from_config_str("sio2.n = 1.5").unwrap().config_hash();
        assert_ne!(a, b);
        assert_eq!(a, MaterialDb::default().config_hash());
    }
}
