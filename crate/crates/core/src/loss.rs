//! Margin-based classification losses.
//!
//! Every loss is a function of the margin deficit `u = 1 - y f(x)`: positive
//! `u` means the sample sits inside the margin or on the wrong side of it.
//! The module ships RoBoSS together with the classical baselines it is
//! compared against (0-1, hinge, pinball, truncated hinge, truncated
//! pinball). Each evaluator returns a value and a (sub)derivative so the same
//! trainer loop can drive any of them.
//!
//! Non-smooth losses report a fixed element of the subdifferential at their
//! kinks: hinge returns `0` at `u = 0`, pinball and truncated pinball return
//! `-tau` at `u = 0`, and truncated plateaus start with slope `0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents above this are treated as full saturation (`exp(-x) == 0`).
const EXP_SATURATION: f64 = 700.0;

/// Below this argument the RoBoSS shape term is summed as a power series.
const SERIES_CUTOFF: f64 = 0.1;

/// A loss family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    ZeroOne,
    Hinge,
    Pinball { tau: f64 },
    TruncatedHinge { delta: f64 },
    TruncatedPinball { tau: f64, delta1: f64, delta2: f64 },
    #[serde(rename = "roboss")]
    RoBoSS { a: f64, lambda: f64 },
}

/// Upper bound of a loss over the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Supremum {
    Finite(f64),
    Unbounded,
}

/// Qualitative properties of a loss family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Characteristics {
    pub robust: bool,
    pub sparse: bool,
    pub bounded: bool,
    pub convex: bool,
    pub smooth: bool,
}

impl LossSpec {
    pub fn roboss(a: f64, lambda: f64) -> Self {
        LossSpec::RoBoSS { a, lambda }
    }

    /// Short identifier used in file names and CSV columns.
    pub fn family_name(&self) -> &'static str {
        match self {
            LossSpec::ZeroOne => "zero-one",
            LossSpec::Hinge => "hinge",
            LossSpec::Pinball { .. } => "pinball",
            LossSpec::TruncatedHinge { .. } => "truncated-hinge",
            LossSpec::TruncatedPinball { .. } => "truncated-pinball",
            LossSpec::RoBoSS { .. } => "roboss",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::ZeroOne | LossSpec::Hinge => Ok(()),
            LossSpec::Pinball { tau } => check_tau(tau),
            LossSpec::TruncatedHinge { delta } => {
                if delta.is_finite() && delta >= 1.0 {
                    Ok(())
                } else {
                    Err(Error::param("delta", delta, "must satisfy delta >= 1"))
                }
            }
            LossSpec::TruncatedPinball { tau, delta1, delta2 } => {
                check_tau(tau)?;
                check_positive("delta1", delta1)?;
                check_positive("delta2", delta2)
            }
            LossSpec::RoBoSS { a, lambda } => {
                check_positive("a", a)?;
                check_positive("lambda", lambda)
            }
        }
    }

    /// Loss value at margin deficit `u`.
    pub fn value(&self, u: f64) -> Result<f64> {
        self.validate()?;
        check_finite(u)?;
        Ok(self.value_unchecked(u))
    }

    /// Derivative (or the documented subderivative) at `u`.
    pub fn derivative(&self, u: f64) -> Result<f64> {
        self.validate()?;
        check_finite(u)?;
        Ok(self.derivative_unchecked(u))
    }

    pub fn supremum(&self) -> Result<Supremum> {
        self.validate()?;
        Ok(match *self {
            LossSpec::ZeroOne => Supremum::Finite(1.0),
            LossSpec::Hinge | LossSpec::Pinball { .. } => Supremum::Unbounded,
            LossSpec::TruncatedHinge { delta } => Supremum::Finite(delta),
            LossSpec::TruncatedPinball { delta1, delta2, .. } => {
                Supremum::Finite(delta1.max(delta2))
            }
            LossSpec::RoBoSS { lambda, .. } => Supremum::Finite(lambda),
        })
    }

    /// The robustness/sparsity/boundedness/convexity/smoothness profile.
    ///
    /// Sparsity follows the family definition: pinball-type losses are
    /// listed as non-sparse because they penalize correctly classified
    /// samples for any `tau > 0`.
    pub fn characteristics(&self) -> Characteristics {
        match self {
            LossSpec::ZeroOne => Characteristics {
                robust: true,
                sparse: true,
                bounded: true,
                convex: false,
                smooth: false,
            },
            LossSpec::Hinge => Characteristics {
                robust: false,
                sparse: true,
                bounded: false,
                convex: true,
                smooth: false,
            },
            LossSpec::Pinball { .. } => Characteristics {
                robust: false,
                sparse: false,
                bounded: false,
                convex: true,
                smooth: false,
            },
            LossSpec::TruncatedHinge { .. } => Characteristics {
                robust: true,
                sparse: true,
                bounded: true,
                convex: false,
                smooth: false,
            },
            LossSpec::TruncatedPinball { .. } => Characteristics {
                robust: true,
                sparse: false,
                bounded: true,
                convex: false,
                smooth: false,
            },
            LossSpec::RoBoSS { .. } => Characteristics {
                robust: true,
                sparse: true,
                bounded: true,
                convex: false,
                smooth: true,
            },
        }
    }

    /// Value without parameter checks. Callers must have validated `self`.
    pub(crate) fn value_unchecked(&self, u: f64) -> f64 {
        match *self {
            LossSpec::ZeroOne => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LossSpec::Hinge => u.max(0.0),
            LossSpec::Pinball { tau } => {
                if u > 0.0 {
                    u
                } else {
                    -tau * u
                }
            }
            LossSpec::TruncatedHinge { delta } => {
                if u >= delta {
                    delta
                } else if u > 0.0 {
                    u
                } else {
                    0.0
                }
            }
            LossSpec::TruncatedPinball { tau, delta1, delta2 } => {
                if u >= delta1 {
                    delta1
                } else if u >= 0.0 {
                    u
                } else if tau > 0.0 && u <= -delta2 / tau {
                    delta2
                } else {
                    -tau * u
                }
            }
            LossSpec::RoBoSS { a, lambda } => {
                if u > 0.0 {
                    lambda * roboss_shape(a * u)
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn derivative_unchecked(&self, u: f64) -> f64 {
        match *self {
            LossSpec::ZeroOne => 0.0,
            LossSpec::Hinge => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LossSpec::Pinball { tau } => {
                if u > 0.0 {
                    1.0
                } else {
                    -tau
                }
            }
            LossSpec::TruncatedHinge { delta } => {
                if u > 0.0 && u < delta {
                    1.0
                } else {
                    0.0
                }
            }
            LossSpec::TruncatedPinball { tau, delta1, delta2 } => {
                if u > 0.0 && u < delta1 {
                    1.0
                } else if u <= 0.0 && (tau == 0.0 || u > -delta2 / tau) {
                    -tau
                } else {
                    0.0
                }
            }
            LossSpec::RoBoSS { a, lambda } => {
                if u > 0.0 {
                    let x = a * u;
                    if x > EXP_SATURATION {
                        0.0
                    } else {
                        lambda * a * a * u * (-x).exp()
                    }
                } else {
                    0.0
                }
            }
        }
    }
}

/// `1 - (x + 1) exp(-x)` for `x > 0`.
///
/// The closed form cancels catastrophically near zero, where the value
/// behaves like `x^2 / 2`; there the alternating series
/// `sum_{k>=2} (-1)^k (k - 1) x^k / k!` is used instead.
fn roboss_shape(x: f64) -> f64 {
    if x > EXP_SATURATION {
        return 1.0;
    }
    if x >= SERIES_CUTOFF {
        return 1.0 - (x + 1.0) * (-x).exp();
    }
    let mut power_over_factorial = x; // x^k / k!, starting at k = 1
    let mut sum = 0.0;
    for k in 2..30 {
        power_over_factorial *= x / k as f64;
        let term = (k - 1) as f64 * power_over_factorial;
        let signed = if k % 2 == 0 { term } else { -term };
        sum += signed;
        if term < f64::EPSILON * sum.abs() * 1e-2 {
            break;
        }
    }
    sum
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::param("tau", tau, "must lie in [0, 1]"))
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, v, "must be finite and > 0"))
    }
}

fn check_finite(u: f64) -> Result<()> {
    if u.is_finite() {
        Ok(())
    } else {
        Err(Error::param("u", u, "must be finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RB11: LossSpec = LossSpec::RoBoSS { a: 1.0, lambda: 1.0 };

    #[test]
    fn roboss_examples() {
        assert_eq!(RB11.value(0.0).unwrap(), 0.0);
        assert_eq!(RB11.value(-3.0).unwrap(), 0.0);
        let e_inv = (-1.0f64).exp();
        assert!((RB11.value(1.0).unwrap() - (1.0 - 2.0 * e_inv)).abs() < 1e-15);
        assert!((RB11.derivative(1.0).unwrap() - e_inv).abs() < 1e-15);
        let rb = LossSpec::roboss(2.0, 1.5);
        assert_eq!(rb.derivative(0.0).unwrap(), 0.0);
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(LossSpec::Hinge.value(-3.0).unwrap(), 0.0);
        assert_eq!(LossSpec::Hinge.value(2.0).unwrap(), 2.0);
        assert_eq!(LossSpec::Pinball { tau: 0.5 }.value(-2.0).unwrap(), 1.0);
        assert_eq!(LossSpec::Pinball { tau: 0.3 }.derivative(-1.0).unwrap(), -0.3);
        let tp = LossSpec::TruncatedPinball {
            tau: 0.5,
            delta1: 1.0,
            delta2: 0.25,
        };
        assert_eq!(tp.value(5.0).unwrap(), 1.0);
        assert_eq!(tp.value(-0.2).unwrap(), 0.1);
        assert_eq!(tp.value(-10.0).unwrap(), 0.25);
        assert_eq!(tp.derivative(-10.0).unwrap(), 0.0);
        assert_eq!(tp.derivative(0.5).unwrap(), 1.0);
        let th = LossSpec::TruncatedHinge { delta: 1.0 };
        assert_eq!(th.value(0.5).unwrap(), 0.5);
        assert_eq!(th.value(3.0).unwrap(), 1.0);
        assert_eq!(th.derivative(3.0).unwrap(), 0.0);
        assert_eq!(LossSpec::ZeroOne.value(1e-9).unwrap(), 1.0);
        assert_eq!(LossSpec::ZeroOne.value(0.0).unwrap(), 0.0);
    }

    #[test]
    fn kink_conventions() {
        assert_eq!(LossSpec::Hinge.derivative(0.0).unwrap(), 0.0);
        assert_eq!(LossSpec::Pinball { tau: 0.7 }.derivative(0.0).unwrap(), -0.7);
        let tp = LossSpec::TruncatedPinball {
            tau: 0.4,
            delta1: 1.0,
            delta2: 0.2,
        };
        assert_eq!(tp.derivative(0.0).unwrap(), -0.4);
        // tau = 0 collapses the left branch to zero without a plateau
        let tp0 = LossSpec::TruncatedPinball {
            tau: 0.0,
            delta1: 1.0,
            delta2: 0.2,
        };
        assert_eq!(tp0.value(-50.0).unwrap(), 0.0);
    }

    #[test]
    fn supremum_examples() {
        assert_eq!(
            LossSpec::roboss(5.0, 1.5).supremum().unwrap(),
            Supremum::Finite(1.5)
        );
        assert_eq!(LossSpec::ZeroOne.supremum().unwrap(), Supremum::Finite(1.0));
        assert_eq!(LossSpec::Hinge.supremum().unwrap(), Supremum::Unbounded);
        assert_eq!(
            LossSpec::TruncatedPinball {
                tau: 0.5,
                delta1: 1.0,
                delta2: 0.25
            }
            .supremum()
            .unwrap(),
            Supremum::Finite(1.0)
        );
    }

    #[test]
    fn invalid_parameters_are_named() {
        let err = LossSpec::roboss(0.0, 1.0).value(1.0).unwrap_err();
        assert!(err.to_string().contains("`a`"));
        let err = LossSpec::roboss(1.0, -1.0).derivative(1.0).unwrap_err();
        assert!(err.to_string().contains("`lambda`"));
        assert!(LossSpec::Pinball { tau: 1.2 }.value(0.0).is_err());
        assert!(LossSpec::TruncatedHinge { delta: 0.5 }.value(0.0).is_err());
        assert!(LossSpec::TruncatedPinball {
            tau: 0.5,
            delta1: 0.0,
            delta2: 1.0
        }
        .value(0.0)
        .is_err());
        assert!(RB11.value(f64::NAN).is_err());
    }

    #[test]
    fn saturation_guard() {
        assert_eq!(RB11.value(1e6).unwrap(), 1.0);
        assert_eq!(RB11.derivative(1e6).unwrap(), 0.0);
    }

    #[test]
    fn series_and_closed_form_agree_at_cutoff() {
        // 1 - 1.1 e^{-0.1} to 40 digits: 0.0046788401604444700216...
        let exact = 0.004678840160444470;
        let below = roboss_shape(SERIES_CUTOFF * (1.0 - 1e-15));
        let at = roboss_shape(SERIES_CUTOFF);
        assert!((below - exact).abs() < 1e-14 * exact);
        assert!((at - exact).abs() < 1e-13 * exact);
    }

    #[test]
    fn smooth_at_origin() {
        let rb = LossSpec::roboss(1.0, 1.0);
        let u = 1e-8;
        let v = rb.value(u).unwrap();
        assert!(v > 0.0 && (v - 0.5e-16).abs() < 1e-24);
        assert!(rb.derivative(u).unwrap() < 1e-7);
    }

    #[test]
    fn serde_tags() {
        let json = serde_json::to_string(&LossSpec::roboss(1.5, 0.5)).unwrap();
        assert_eq!(json, r#"{"kind":"roboss","a":1.5,"lambda":0.5}"#);
        let back: LossSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, LossSpec::roboss(1.5, 0.5));
    }
}
