//! Characteristic-matrix (2x2 transfer-matrix) reflectance of planar
//! multilayers at normal incidence.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One homogeneous film: complex refractive index and physical thickness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub n: Complex64,
    pub thickness_nm: f64,
}

/// Ordered films between two semi-infinite half-spaces, listed from the
/// incidence side.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub n_incident: Complex64,
    pub n_exit: Complex64,
    pub layers: Vec<Layer>,
}

impl LayerStack {
    pub fn new(n_incident: Complex64, n_exit: Complex64, layers: Vec<Layer>) -> Result<LayerStack> {
        for (name, n) in [("incident", n_incident), ("exit", n_exit)] {
            if n.im < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} half-space must have Im(n) >= 0, got {n}"
                )));
            }
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.thickness_nm < 0.0 || !layer.thickness_nm.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "layer {i} thickness must be >= 0, got {}",
                    layer.thickness_nm
                )));
            }
            if !layer.n.re.is_finite() || !layer.n.im.is_finite() {
                return Err(Error::NonFinite(format!("layer {i} refractive index")));
            }
        }
        Ok(LayerStack {
            n_incident,
            n_exit,
            layers,
        })
    }

    /// Same films in reverse order with swapped half-spaces.
    pub fn reversed(&self) -> LayerStack {
        LayerStack {
            n_incident: self.n_exit,
            n_exit: self.n_incident,
            layers: self.layers.iter().rev().copied().collect(),
        }
    }
}

/// Power reflectance and transmittance of the stack at `lambda_nm`.
///
/// Uses the characteristic-matrix recursion at normal incidence in the
/// e^{-iωt} convention (Im n ≥ 0 absorbs): each film contributes
/// M = [[cos δ, −i sin δ / n], [−i n sin δ, cos δ]] with phase thickness
/// δ = 2π n d / λ, and (B, C)ᵀ = ΠM · (1, n_exit)ᵀ gives
/// r = (n_in B − C)/(n_in B + C), t = 2 n_in/(n_in B + C).
pub fn stack_rt(stack: &LayerStack, lambda_nm: f64) -> Result<(f64, f64)> {
    if lambda_nm <= 0.0 || !lambda_nm.is_finite() {
        return Err(Error::OutOfRange(format!(
            "wavelength must be positive, got {lambda_nm} nm"
        )));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    // (B, C) starts at the exit interface
    let mut b = Complex64::new(1.0, 0.0);
    let mut c = stack.n_exit;
    for layer in stack.layers.iter().rev() {
        let delta = two_pi * layer.n * layer.thickness_nm / lambda_nm;
        let (cos_d, sin_d) = (delta.cos(), delta.sin());
        if layer.n.norm() == 0.0 {
            return Err(Error::Degenerate("layer with zero refractive index".into()));
        }
        let b_new = cos_d * b - Complex64::i() * sin_d / layer.n * c;
        let c_new = -Complex64::i() * layer.n * sin_d * b + cos_d * c;
        b = b_new;
        c = c_new;
    }
    let n0 = stack.n_incident;
    let denom = n0 * b + c;
    if denom.norm() < 1e-300 || !denom.re.is_finite() || !denom.im.is_finite() {
        return Err(Error::Degenerate(
            "singular characteristic matrix (non-physical stack)".into(),
        ));
    }
    let r = (n0 * b - c) / denom;
    let t = 2.0 * n0 / denom;
    let reflectance = r.norm_sqr();
    let transmittance = stack.n_exit.re / n0.re * t.norm_sqr();
    if !reflectance.is_finite() || !transmittance.is_finite() {
        return Err(Error::NonFinite("reflectance computation".into()));
    }
    Ok((reflectance, transmittance))
}

/// Power reflectance of the stack at `lambda_nm`.
pub fn stack_reflectance(stack: &LayerStack, lambda_nm: f64) -> Result<f64> {
    stack_rt(stack, lambda_nm).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn air_on_glass(layers: Vec<Layer>) -> LayerStack {
        LayerStack::new(
            Complex64::new(1.0, 0.0),
            Complex64::new(1.444, 0.0),
            layers,
        )
        .unwrap()
    }

    #[test]
    fn empty_stack_gives_fresnel_reflectance() {
        let stack = air_on_glass(vec![]);
        let (r, t) = stack_rt(&stack, 1550.0).unwrap();
        // Fresnel oracle: ((1 − 1.444)/(1 + 1.444))² = 0.03300376887…
        let fresnel = ((1.0 - 1.444f64) / (1.0 + 1.444)).powi(2);
        assert_relative_eq!(r, fresnel, max_relative = 1e-12);
        assert_relative_eq!(r, 0.0330038, epsilon = 1e-5);
        assert_relative_eq!(r + t, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_thickness_layer_is_a_no_op() {
        let base = air_on_glass(vec![Layer {
            n: Complex64::new(2.1, 0.3),
            thickness_nm: 120.0,
        }]);
        let with_ghost = air_on_glass(vec![
            Layer {
                n: Complex64::new(3.7, 0.9),
                thickness_nm: 0.0,
            },
            Layer {
                n: Complex64::new(2.1, 0.3),
                thickness_nm: 120.0,
            },
            Layer {
                n: Complex64::new(1.9, 0.0),
                thickness_nm: 0.0,
            },
        ]);
        let r0 = stack_reflectance(&base, 1400.0).unwrap();
        let r1 = stack_reflectance(&with_ghost, 1400.0).unwrap();
        assert!((r0 - r1).abs() < 1e-12);
    }

    #[test]
    fn lossless_stack_conserves_energy() {
        let stack = air_on_glass(vec![
            Layer {
                n: Complex64::new(2.0, 0.0),
                thickness_nm: 180.0,
            },
            Layer {
                n: Complex64::new(1.38, 0.0),
                thickness_nm: 250.0,
            },
            Layer {
                n: Complex64::new(3.5, 0.0),
                thickness_nm: 90.0,
            },
        ]);
        for lambda in [1250.0, 1430.0, 1600.0, 1850.0] {
            let (r, t) = stack_rt(&stack, lambda).unwrap();
            assert_relative_eq!(r + t, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn lossless_stack_reflectance_is_reciprocal() {
        // same half-space on both sides: R must match from either direction
        let stack = LayerStack::new(
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            vec![
                Layer {
                    n: Complex64::new(2.3, 0.0),
                    thickness_nm: 140.0,
                },
                Layer {
                    n: Complex64::new(1.7, 0.0),
                    thickness_nm: 310.0,
                },
                Layer {
                    n: Complex64::new(2.9, 0.0),
                    thickness_nm: 75.0,
                },
            ],
        )
        .unwrap();
        let reversed = stack.reversed();
        for lambda in [1250.0, 1500.0, 1850.0] {
            let fwd = stack_reflectance(&stack, lambda).unwrap();
            let bwd = stack_reflectance(&reversed, lambda).unwrap();
            assert_relative_eq!(fwd, bwd, epsilon = 1e-9);
        }
    }

    #[test]
    fn absorbing_quarter_wave_metal_mirror_reflects() {
        // thick near-IR gold-like film: R close to 1, T negligible
        let stack = air_on_glass(vec![Layer {
            n: Complex64::new(0.5, 10.8),
            thickness_nm: 150.0,
        }]);
        let (r, t) = stack_rt(&stack, 1550.0).unwrap();
        assert!(r > 0.9, "R = {r}");
        assert!(t < 1e-5, "T = {t}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let stack = air_on_glass(vec![]);
        assert!(stack_reflectance(&stack, 0.0).is_err());
        assert!(LayerStack::new(
            Complex64::new(1.0, -0.1),
            Complex64::new(1.0, 0.0),
            vec![]
        )
        .is_err());
        assert!(LayerStack::new(
            Complex64::new(1.0, 0.0),
            Complex64::new(1.444, 0.0),
            vec![Layer {
                n: Complex64::new(1.5, 0.0),
                thickness_nm: -1.0
            }]
        )
        .is_err());
    }
}
