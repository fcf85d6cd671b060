//! Quadrature rules: generalized Gauss-Laguerre for exponentially weighted
//! integrals on `[0, ∞)` and an adaptive Gauss-Kronrod (7/15) integrator.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

/// Nodes and weights for `∫₀^∞ x^α e^{-x} f(x) dx ≈ Σ wᵢ f(xᵢ)`.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    alpha: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLaguerre {
    /// Builds an `n`-point rule by Newton iteration on the Laguerre
    /// recurrence, starting from the usual asymptotic node guesses.
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if n == 0 || !(alpha > -1.0) {
            return Err(Error::invalid(format!(
                "Gauss-Laguerre rule needs n >= 1 and alpha > -1 (got n = {n}, alpha = {alpha})"
            )));
        }
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let ln_norm = ln_gamma(alpha + nf) - ln_gamma(nf);
        let mut z = 0.0;
        for i in 0..n {
            z = match i {
                0 => (1.0 + alpha) * (3.0 + 0.92 * alpha) / (1.0 + 2.4 * nf + 1.8 * alpha),
                1 => z + (15.0 + 6.25 * alpha) / (1.0 + 0.9 * alpha + 2.5 * nf),
                _ => {
                    let ai = (i - 1) as f64;
                    z + ((1.0 + 2.55 * ai) / (1.9 * ai) + 1.26 * ai * alpha / (1.0 + 3.5 * ai))
                        * (z - nodes[i - 2])
                        / (1.0 + 0.3 * alpha)
                }
            };
            let mut converged = false;
            let (mut deriv, mut prev) = (0.0, 0.0);
            for _ in 0..100 {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 1..=n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * jf - 1.0 + alpha - z) * p2 - (jf - 1.0 + alpha) * p3) / jf;
                }
                deriv = (nf * p1 - (nf + alpha) * p2) / z;
                prev = p2;
                let z_old = z;
                z = z_old - p1 / deriv;
                if (z - z_old).abs() <= 3e-14 * z.abs() {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NumericalFailure {
                    message: format!("Laguerre root {i} of {n} did not converge"),
                    estimate: f64::NAN,
                });
            }
            nodes[i] = z;
            weights[i] = -ln_norm.exp() / (deriv * nf * prev);
        }
        Ok(GaussLaguerre {
            alpha,
            nodes,
            weights,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| if w == 0.0 { 0.0 } else { w * f(x) })
            .sum()
    }
}

// 15-point Kronrod nodes (non-negative half) and weights; every other node
// from index 1 is also a 7-point Gauss node.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One Kronrod panel: (integral, error estimate).
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive Gauss-Kronrod integration on `[a, b]`: the panel with
/// the largest error estimate is bisected until the summed estimate drops
/// below `max(abs_tol, rel_tol·|I|)`.
pub fn adaptive_gk15(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<Integral> {
    let (value, error) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, error });
    let (mut total, mut total_err) = (value, error);
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::NumericalFailure {
                message: "integrand produced a non-finite value".into(),
                estimate: total_err,
            });
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Integral {
                value: total,
                error: total_err,
                panels: heap.len(),
            });
        }
        if heap.len() >= max_panels {
            return Err(Error::NumericalFailure {
                message: format!("adaptive quadrature hit {max_panels} panels"),
                estimate: total_err,
            });
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gk15(&mut f, worst.a, mid);
        let (rv, re) = gk15(&mut f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Panel { a: mid, b: worst.b, value: rv, error: re });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::gamma::gamma;

    #[test]
    fn laguerre_moments_are_exact() {
        for (n, alpha) in [(8, 0.0), (48, 0.5), (96, 0.5), (96, 1.0)] {
            let rule = GaussLaguerre::new(n, alpha).unwrap();
            for k in 0..6 {
                let approx = rule.integrate(|x| x.powi(k));
                assert_relative_eq!(approx, gamma(alpha + f64::from(k) + 1.0), max_relative = 1e-12, epsilon = 0.0);
            }
            assert!(rule.nodes().windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn laguerre_small_rule_matches_tables() {
        // classical 2-point rule: nodes 2 ∓ √2
        let rule = GaussLaguerre::new(2, 0.0).unwrap();
        assert_relative_eq!(rule.nodes()[0], 2.0 - 2f64.sqrt(), max_relative = 1e-14, epsilon = 0.0);
        assert_relative_eq!(rule.nodes()[1], 2.0 + 2f64.sqrt(), max_relative = 1e-14, epsilon = 0.0);
        assert_relative_eq!(rule.weights()[0], (2.0 + 2f64.sqrt()) / 4.0, max_relative = 1e-14, epsilon = 0.0);
    }

    #[test]
    fn laguerre_rejects_bad_parameters() {
        assert!(GaussLaguerre::new(0, 0.0).is_err());
        assert!(GaussLaguerre::new(4, -1.5).is_err());
    }

    #[test]
    fn kronrod_integrates_smooth_and_kinked_functions() {
        let r = adaptive_gk15(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-14, 1e-13, 100).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-13, epsilon = 0.0);
        let r = adaptive_gk15(|x: f64| x.sqrt(), 0.0, 1.0, 1e-14, 1e-12, 500).unwrap();
        assert_relative_eq!(r.value, 2.0 / 3.0, max_relative = 1e-11, epsilon = 0.0);
    }

    #[test]
    fn kronrod_reports_failure() {
        let err = adaptive_gk15(|x: f64| 1.0 / x, 0.0, 1.0, 1e-12, 1e-12, 20).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { .. }));
    }
}
