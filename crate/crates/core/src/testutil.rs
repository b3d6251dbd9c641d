//! Shared fixtures for unit tests.
#![allow(clippy::approx_constant)]

use alloc::vec::Vec;

use crate::design::Design;
use crate::model::{DesignRegion, DoseCombination, MonoModel, SurfaceModel};

pub fn case_study() -> SurfaceModel {
    SurfaceModel::new(
        19.05,
        MonoModel::sigmoid_emax(111.10, 5.83, 2.86).unwrap(),
        MonoModel::sigmoid_emax(410.82, 20.0, 0.78).unwrap(),
        -0.0075,
    )
    .unwrap()
}

pub fn case_region() -> DesignRegion {
    DesignRegion::new(20.0, 7.0).unwrap()
}

pub fn scenario2() -> SurfaceModel {
    SurfaceModel::new(
        0.0,
        MonoModel::emax(80.0, 3.0).unwrap(),
        MonoModel::emax(120.0, 10.0).unwrap(),
        0.02,
    )
    .unwrap()
}

pub fn bilinear() -> SurfaceModel {
    SurfaceModel::new(0.0, MonoModel::linear(1.0).unwrap(), MonoModel::linear(1.0).unwrap(), 0.5).unwrap()
}

pub fn design(rows: &[(f64, f64, f64)]) -> Design {
    let points: Vec<DoseCombination> = rows.iter().map(|r| DoseCombination::new(r.0, r.1)).collect();
    Design::normalized(points, rows.iter().map(|r| r.2).collect()).unwrap()
}

pub fn med_10_50() -> Design {
    design(&[
        (0.0, 0.0, 0.049),
        (0.0, 0.3, 0.178),
        (0.0, 7.0, 0.012),
        (0.0, 2.61, 0.175),
        (3.14, 0.0, 0.107),
        (3.59, 1.99, 0.125),
        (3.67, 0.48, 0.107),
        (6.18, 0.38, 0.109),
        (6.86, 0.0, 0.115),
        (20.0, 0.0, 0.013),
        (20.0, 7.0, 0.010),
    ])
}

pub fn d_optimal() -> Design {
    design(&[
        (0.0, 0.0, 0.105),
        (0.0, 0.4, 0.099),
        (0.0, 7.0, 0.125),
        (0.0, 3.13, 0.125),
        (3.66, 0.0, 0.097),
        (3.8, 0.44, 0.073),
        (7.67, 0.01, 0.126),
        (20.0, 0.0, 0.125),
        (20.0, 7.0, 0.125),
    ])
}

pub fn factorial_4x4() -> Design {
    let mut rows = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            rows.push((20.0 * i as f64 / 3.0, 7.0 * j as f64 / 3.0, 1.0));
        }
    }
    design(&rows)
}
