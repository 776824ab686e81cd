//! The seeded two-cluster task shared by the training-level tests.
#![allow(dead_code)]

use roboss::data::{make_folds, normalize, two_clusters, Dataset, FoldPlan};
use roboss::harness::HyperParams;
use roboss::loss::LossSpec;

pub const N: usize = 200;
pub const DIM: usize = 10;
/// Centroid distance in units of the per-coordinate spread.
pub const SEPARATION: f64 = 8.0;
pub const SPREAD: f64 = 1.0;
pub const C: f64 = 10.0;
pub const SIGMA: f64 = 0.5;

pub fn raw_task(seed: u64) -> Dataset {
    two_clusters(N, DIM, SEPARATION, SPREAD, seed).unwrap()
}

pub fn task(seed: u64) -> (Dataset, FoldPlan) {
    let ds = normalize(&raw_task(seed)).unwrap();
    let plan = make_folds(ds.len(), 5, seed).unwrap();
    (ds, plan)
}

pub fn roboss_params() -> HyperParams {
    HyperParams {
        c: C,
        sigma: SIGMA,
        loss: LossSpec::roboss(1.0, 1.0),
    }
}

pub fn hinge_params() -> HyperParams {
    HyperParams {
        c: C,
        sigma: SIGMA,
        loss: LossSpec::Hinge,
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}
