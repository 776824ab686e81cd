//! Numerical checks of classification calibration and the Rademacher
//! generalization bound for the RoBoSS loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::trainer::TrainedModel;

/// Conditional risk of a loss at a point where `P(y = +1 | x) = p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRiskQuery {
    pub loss: LossSpec,
    pub p: f64,
    /// `(lo, hi, step)` grid over the score `f(x)`.
    pub f_grid: (f64, f64, f64),
}

impl ConditionalRiskQuery {
    pub fn new(loss: LossSpec, p: f64) -> Self {
        ConditionalRiskQuery {
            loss,
            p,
            f_grid: (-3.0, 3.0, 1e-3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param("p", self.p, "must lie in [0, 1]"));
        }
        let (lo, hi, step) = self.f_grid;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::param("f_grid.lo", lo, "need finite lo < hi"));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::param("f_grid.step", step, "must be > 0"));
        }
        Ok(())
    }

    /// Grid points `lo + k * step` up to and including `hi` (within half a step).
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi, step) = self.f_grid;
        let count = ((hi - lo) / step + 0.5).floor() as usize + 1;
        (0..count).map(|k| lo + k as f64 * step).collect()
    }
}

/// `L(1 - f) P + L(1 + f) (1 - P)`.
pub fn conditional_risk(q: &ConditionalRiskQuery, f: f64) -> Result<f64> {
    q.validate()?;
    Ok(generic_risk(&q.loss, q.p, f))
}

fn generic_risk(loss: &LossSpec, p: f64, f: f64) -> f64 {
    loss.value_unchecked(1.0 - f) * p + loss.value_unchecked(1.0 + f) * (1.0 - p)
}

/// The RoBoSS conditional risk written branch by branch:
/// `g1 P` for `f <= -1`, `(g1 - g2) P + g2` inside, `g2 (1 - P)` for `f >= 1`,
/// with `g1 = L(1 - f)` and `g2 = L(1 + f)` taken from the active formula.
pub fn roboss_branch_risk(a: f64, lambda: f64, p: f64, f: f64) -> Result<f64> {
    LossSpec::roboss(a, lambda).validate()?;
    let g = |u: f64| lambda * (1.0 - (a * u + 1.0) * (-a * u).exp());
    Ok(if f <= -1.0 {
        g(1.0 - f) * p
    } else if f < 1.0 {
        let (g1, g2) = (g(1.0 - f), g(1.0 + f));
        (g1 - g2) * p + g2
    } else {
        g(1.0 + f) * (1.0 - p)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub f_star: f64,
    pub min_risk: f64,
    /// `sign(f*) == sign(P - 1/2)`; `None` when `P = 1/2`.
    pub sign_matches_bayes: Option<bool>,
}

impl CalibrationOutcome {
    pub fn is_degenerate(&self) -> bool {
        self.sign_matches_bayes.is_none()
    }
}

/// Minimizes the conditional risk over the query grid. Exact ties go to the
/// smallest `|f|`.
pub fn calibration_check(q: &ConditionalRiskQuery) -> Result<CalibrationOutcome> {
    q.validate()?;
    let mut best = (f64::NAN, f64::INFINITY);
    for f in q.grid() {
        let risk = generic_risk(&q.loss, q.p, f);
        if risk < best.1 || (risk == best.1 && f.abs() < best.0.abs()) {
            best = (f, risk);
        }
    }
    let (f_star, min_risk) = best;
    let sign_matches_bayes = if q.p == 0.5 {
        None
    } else {
        let bayes = if q.p > 0.5 { 1.0 } else { -1.0 };
        Some(f_star != 0.0 && f_star.signum() == bayes)
    };
    Ok(CalibrationOutcome {
        f_star,
        min_risk,
        sign_matches_bayes,
    })
}

/// `4 lambda / sqrt(n C) + sqrt(8 ln(1/eps) / n)`, holding with confidence
/// `1 - eps`.
pub fn generalization_bound(lambda: f64, n: usize, c: f64, epsilon: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::param("lambda", lambda, "must be finite and > 0"));
    }
    if n == 0 {
        return Err(Error::param("n", 0.0, "must be >= 1"));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::param("C", c, "must be finite and > 0"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param("epsilon", epsilon, "must lie in (0, 1)"));
    }
    let n = n as f64;
    Ok(4.0 * lambda / (n * c).sqrt() + (8.0 * (1.0 / epsilon).ln() / n).sqrt())
}

/// Mean loss `1/n sum L(1 - y f(x))` of a trained model on labelled data.
pub fn empirical_risk(model: &TrainedModel, loss: &LossSpec, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    loss.validate()?;
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Invalid("no samples".into()));
    }
    let mut total = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        total += loss.value_unchecked(1.0 - yi * model.decision_value(xi)?);
    }
    Ok(total / x.len() as f64)
}
