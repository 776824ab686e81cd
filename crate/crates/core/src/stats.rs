//! Friedman test with the Iman-Davenport correction and the Nemenyi post hoc
//! critical difference, for comparing `p` models over `D` datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-tailed Nemenyi critical values `q_alpha` for `p = 2..=10` models
/// (studentized range statistic divided by `sqrt(2)`).
const Q_ALPHA_005: [f64; 9] = [1.95996, 2.34370, 2.56903, 2.72777, 2.84971, 2.94832, 3.03088, 3.10173, 3.16368];
const Q_ALPHA_010: [f64; 9] = [1.64485, 2.05229, 2.29134, 2.45952, 2.58852, 2.69273, 2.77988, 2.85461, 2.91989];

/// Tabulated `F(df1, df2)` critical values at the 5% level.
const F_CRITICAL_005: [((usize, usize), f64); 3] = [((5, 390), 2.24), ((5, 155), 2.27), ((5, 75), 2.35)];

/// Per-dataset ranks of `p` models (1 = best, ties averaged).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub accuracies: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
    pub mean_ranks: Vec<f64>,
}

impl RankTable {
    pub fn datasets(&self) -> usize {
        self.ranks.len()
    }

    pub fn models(&self) -> usize {
        self.mean_ranks.len()
    }

    pub fn friedman_chi2(&self) -> Result<f64> {
        friedman_chi2(&self.mean_ranks, self.datasets())
    }
}

/// Ranks one row in descending order of accuracy, averaging ties.
pub fn rank_row(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    let mut ranks = vec![0.0; row.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && row[order[end]] == row[order[start]] {
            end += 1;
        }
        // positions start..end share ranks start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Ranks a `D x p` accuracy table.
pub fn rank_models(accuracies: &[Vec<f64>]) -> Result<RankTable> {
    let p = accuracies
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Invalid("accuracy table is empty".into()))?;
    if p < 2 {
        return Err(Error::Invalid("need at least two models".into()));
    }
    for row in accuracies {
        if row.len() != p {
            return Err(Error::Shape {
                expected: p,
                actual: row.len(),
            });
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite accuracy {v}")));
        }
    }
    let ranks: Vec<Vec<f64>> = accuracies.iter().map(|r| rank_row(r)).collect();
    let d = ranks.len() as f64;
    let mean_ranks = (0..p)
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / d)
        .collect();
    Ok(RankTable {
        accuracies: accuracies.to_vec(),
        ranks,
        mean_ranks,
    })
}

fn check_counts(p: usize, d: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::Invalid("need at least two models".into()));
    }
    if d < 1 {
        return Err(Error::Invalid("need at least one dataset".into()));
    }
    Ok(())
}

/// `12 D / (p (p + 1)) * [sum_e R_e^2 - p (p + 1)^2 / 4]`.
pub fn friedman_chi2(mean_ranks: &[f64], d: usize) -> Result<f64> {
    let p = mean_ranks.len();
    check_counts(p, d)?;
    let pf = p as f64;
    let sum_sq: f64 = mean_ranks.iter().map(|r| r * r).sum();
    Ok(12.0 * d as f64 / (pf * (pf + 1.0)) * (sum_sq - pf * (pf + 1.0).powi(2) / 4.0))
}

/// Iman-Davenport statistic `(D - 1) chi2 / (D (p - 1) - chi2)`.
pub fn friedman_f(chi2: f64, d: usize, p: usize) -> Result<f64> {
    check_counts(p, d)?;
    let denom = d as f64 * (p as f64 - 1.0) - chi2;
    if denom <= 0.0 {
        return Err(Error::Degenerate(format!(
            "D (p - 1) - chi2 = {denom} is not positive"
        )));
    }
    Ok((d as f64 - 1.0) * chi2 / denom)
}

/// Degrees of freedom `(p - 1, (p - 1)(D - 1))` of the F statistic.
pub fn f_degrees_of_freedom(d: usize, p: usize) -> (usize, usize) {
    (p - 1, (p - 1) * (d.saturating_sub(1)))
}

/// Built-in F critical value, where tabulated.
pub fn f_critical(df: (usize, usize), alpha: f64) -> Option<f64> {
    if alpha != 0.05 {
        return None;
    }
    F_CRITICAL_005
        .iter()
        .find(|(key, _)| *key == df)
        .map(|&(_, v)| v)
}

pub fn nemenyi_q(p: usize, alpha: f64) -> Result<f64> {
    let table = if alpha == 0.05 {
        &Q_ALPHA_005
    } else if alpha == 0.10 {
        &Q_ALPHA_010
    } else {
        return Err(Error::Unsupported(format!("Nemenyi alpha = {alpha}")));
    };
    p.checked_sub(2)
        .and_then(|i| table.get(i))
        .copied()
        .ok_or_else(|| Error::Unsupported(format!("Nemenyi critical value for p = {p}")))
}

/// Critical difference `q_alpha sqrt(p (p + 1) / (6 D))`.
pub fn nemenyi_cd(p: usize, d: usize, alpha: f64) -> Result<f64> {
    check_counts(p, d)?;
    let q = nemenyi_q(p, alpha)?;
    let pf = p as f64;
    Ok(q * (pf * (pf + 1.0) / (6.0 * d as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub i: usize,
    pub j: usize,
    /// `|R_i - R_j|`
    pub difference: f64,
    pub significant: bool,
}

/// Pairwise mean-rank gaps, significant iff strictly greater than `cd`.
pub fn nemenyi_report(mean_ranks: &[f64], cd: f64) -> Vec<PairwiseComparison> {
    let p = mean_ranks.len();
    let mut out = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    for i in 0..p {
        for j in i + 1..p {
            let difference = (mean_ranks[i] - mean_ranks[j]).abs();
            out.push(PairwiseComparison {
                i,
                j,
                difference,
                significant: difference > cd,
            });
        }
    }
    out
}

/// One row of a comparison against a reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub model: usize,
    pub mean_rank: f64,
    /// `R_model - R_reference`; `None` for the reference itself.
    pub rank_difference: Option<f64>,
    pub significant: Option<bool>,
}

/// Rank differences of every model against `reference`.
pub fn against_reference(mean_ranks: &[f64], reference: usize, cd: f64) -> Result<Vec<ReferenceComparison>> {
    let r_ref = *mean_ranks.get(reference).ok_or(Error::Index {
        index: reference,
        len: mean_ranks.len(),
    })?;
    Ok(mean_ranks
        .iter()
        .enumerate()
        .map(|(model, &r)| {
            if model == reference {
                ReferenceComparison {
                    model,
                    mean_rank: r,
                    rank_difference: None,
                    significant: None,
                }
            } else {
                let diff = r - r_ref;
                ReferenceComparison {
                    model,
                    mean_rank: r,
                    rank_difference: Some(diff),
                    significant: Some(diff.abs() > cd),
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub datasets: usize,
    pub models: usize,
    pub mean_ranks: Vec<f64>,
    pub chi2: f64,
    pub f_stat: f64,
    pub dof: (usize, usize),
    pub critical_f: Option<f64>,
    /// `F_F > critical_f`; unknown without a critical value.
    pub reject: Option<bool>,
    pub alpha: f64,
    pub cd: f64,
    pub pairwise: Vec<PairwiseComparison>,
}

/// Friedman/Iman-Davenport test followed by Nemenyi, from mean ranks.
///
/// `critical_f` overrides the built-in table.
pub fn friedman_nemenyi(
    mean_ranks: &[f64],
    d: usize,
    alpha: f64,
    critical_f: Option<f64>,
) -> Result<TestReport> {
    let p = mean_ranks.len();
    let chi2 = friedman_chi2(mean_ranks, d)?;
    let f_stat = friedman_f(chi2, d, p)?;
    let dof = f_degrees_of_freedom(d, p);
    let critical_f = critical_f.or_else(|| f_critical(dof, alpha));
    let cd = nemenyi_cd(p, d, alpha)?;
    Ok(TestReport {
        datasets: d,
        models: p,
        mean_ranks: mean_ranks.to_vec(),
        chi2,
        f_stat,
        dof,
        critical_f,
        reject: critical_f.map(|c| f_stat > c),
        alpha,
        cd,
        pairwise: nemenyi_report(mean_ranks, cd),
    })
}
