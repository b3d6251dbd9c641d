use meddesign_core::criteria::d_criterion;
use meddesign_core::design::DISTINCT_TOL;
use meddesign_core::optimizer::prune_design;
use meddesign_core::{Design, DoseCombination, MonoModel, SurfaceModel};
use nalgebra::{DMatrix, DVector};

fn scenario2() -> SurfaceModel {
    SurfaceModel::new(0.0, MonoModel::emax(80.0, 3.0).unwrap(), MonoModel::emax(120.0, 10.0).unwrap(), 0.02).unwrap()
}

/// The D-optimal table for the Emax/Emax surface lists several dose pairs
/// more than once.
const D_OPTIMAL_ROWS: [(f64, f64, f64); 13] = [
    (0.0, 0.0, 0.164),
    (0.0, 12.0, 0.166),
    (1.94, 12.0, 0.057),
    (1.94, 12.0, 0.085),
    (1.94, 12.0, 0.001),
    (2.15, 4.22, 0.059),
    (2.15, 4.22, 0.003),
    (2.2, 4.2, 0.001),
    (10.0, 3.85, 0.003),
    (10.0, 0.0, 0.165),
    (10.0, 3.85, 0.03),
    (10.0, 3.85, 0.109),
    (10.0, 12.0, 0.157),
];

/// `-log det` of the information matrix summed row by row, duplicates and all.
fn raw_neg_log_det(model: &SurfaceModel) -> f64 {
    let m = model.param_count();
    let total: f64 = D_OPTIMAL_ROWS.iter().map(|r| r.2).sum();
    let mut info = DMatrix::zeros(m, m);
    for &(c, d, w) in &D_OPTIMAL_ROWS {
        let g = DVector::from_vec(model.gradient(DoseCombination::new(c, d)).unwrap());
        info += (w / total) * &g * g.transpose();
    }
    -info.determinant().ln()
}

#[test]
fn duplicate_rows_merge_without_changing_the_criterion() {
    let model = scenario2();
    let points = D_OPTIMAL_ROWS.iter().map(|r| DoseCombination::new(r.0, r.1)).collect();
    let weights = D_OPTIMAL_ROWS.iter().map(|r| r.2).collect();
    let merged = Design::merged(points, weights, DISTINCT_TOL).unwrap();
    assert_eq!(merged.len(), 8);
    let k = merged.points().iter().position(|x| x.distance(&DoseCombination::new(1.94, 12.0)) < 1e-12).unwrap();
    let total: f64 = D_OPTIMAL_ROWS.iter().map(|r| r.2).sum();
    assert!((merged.weights()[k] - 0.143 / total).abs() < 1e-12);

    let oracle = raw_neg_log_det(&model);
    let value = d_criterion(&merged, &model).unwrap();
    assert!((value - oracle).abs() <= 1e-6 * oracle.abs(), "{value} vs {oracle}");

    let pruned = prune_design(&merged, DISTINCT_TOL, 0.0, |d| d_criterion(d, &model).unwrap());
    assert_eq!(pruned, merged);
}
