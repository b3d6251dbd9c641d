//! Thread-pool backed evaluators. Work items carry their own seeds and
//! results are collected in input order, so output does not depend on the
//! number of threads.

use meddesign_core::optimizer::Evaluator;
use meddesign_core::simulation::{Executor, RepRecord};
use meddesign_core::{Design, Objective};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl Evaluator for Rayon {
    fn scores(&self, objective: &Objective, designs: &[Design]) -> Vec<f64> {
        designs.par_iter().map(|d| objective.score(d)).collect()
    }
}

impl Executor for Rayon {
    fn run(&self, count: usize, job: &(dyn Fn(usize) -> RepRecord + Sync)) -> Vec<RepRecord> {
        (0..count).into_par_iter().map(job).collect()
    }
}

/// `0` selects one thread per core.
pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use meddesign_core::simulation::{self, factorial_design};
    use meddesign_core::{Scenario, SimConfig};

    #[test]
    fn study_is_independent_of_thread_count() {
        let mut scenario = Scenario::scenario2();
        scenario.sigma = 30.0;
        let designs = vec![
            ("f33".to_string(), factorial_design(&scenario.region, 3, 3).unwrap()),
            ("f44".to_string(), factorial_design(&scenario.region, 4, 4).unwrap()),
        ];
        let cfg = SimConfig::new(vec![27], 6, 11).unwrap();
        let seq = simulation::run_study(&scenario, &designs, &cfg).unwrap();
        for threads in [1, 3] {
            let pool = thread_pool(threads).unwrap();
            let par = pool.install(|| simulation::run_study_with(&scenario, &designs, &cfg, &Rayon)).unwrap();
            assert_eq!(par.records.len(), seq.records.len());
            for (a, b) in par.records.iter().zip(&seq.records) {
                assert_eq!(a.status, b.status);
                assert_eq!(a.rmse.to_bits(), b.rmse.to_bits());
            }
        }
    }
}
