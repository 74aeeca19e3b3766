//! Closed-form moments against exhaustive enumeration on random small models.

use dlf_core::analytics::{expected_gain, variance_gain};
use dlf_core::montecarlo::estimate_exact_small;
use dlf_core::returns::{EmpiricalPmf, ReturnModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug)]
pub struct Instance {
    pub model: ReturnModel,
    pub alpha: f64,
    pub k_gain: f64,
    pub v0: f64,
    pub stage: usize,
}

pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let atoms = rng.random_range(1..=8usize);
    let pairs: Vec<(f64, f64)> = (0..atoms)
        .map(|_| (rng.random_range(-0.9..1.5), rng.random_range(0.05..1.0)))
        .collect();
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut pairs: Vec<(f64, f64)> = pairs.into_iter().map(|(x, w)| (x, w / total)).collect();
    let drift = 1.0 - pairs.iter().map(|p| p.1).sum::<f64>();
    pairs[0].1 += drift;
    let model = ReturnModel::from_pmf(EmpiricalPmf::new(pairs).unwrap());
    let k_gain = rng.random_range(0.0..=1.0) * model.bounds().k_max();
    Instance {
        alpha: rng.random_range(0.0..=1.0),
        k_gain,
        v0: rng.random_range(0.1..1000.0),
        stage: rng.random_range(1..=8usize),
        model,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[test]
fn closed_form_matches_enumeration_on_500_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for i in 0..500 {
        let inst = random_instance(&mut rng);
        let exact = estimate_exact_small(&inst.model, inst.alpha, inst.k_gain, inst.v0, inst.stage)
            .unwrap();
        let (mu, s2) = (inst.model.mu(), inst.model.sigma2());
        let mean = expected_gain(inst.alpha, inst.k_gain, inst.stage, mu, inst.v0).unwrap();
        let var = variance_gain(inst.alpha, inst.k_gain, inst.stage, mu, s2, inst.v0).unwrap();
        let em = rel_err(mean, exact.mean);
        let ev = rel_err(var, exact.variance);
        assert!(
            em <= 1e-10,
            "instance {i}: mean {mean} vs {} ({inst:?})",
            exact.mean
        );
        assert!(
            ev <= 1e-10,
            "instance {i}: variance {var} vs {} ({inst:?})",
            exact.variance
        );
        worst_mean = worst_mean.max(em);
        worst_var = worst_var.max(ev);
    }
    eprintln!("worst relative error: mean {worst_mean:.2e}, variance {worst_var:.2e}");
}

#[test]
fn largest_enumeration_is_supported() {
    let model = ReturnModel::uniform_grid(-0.3, 0.4, 8).unwrap();
    let exact = estimate_exact_small(&model, 0.5, 0.9, 1.0, 8).unwrap();
    assert_eq!(exact.paths, 16_777_216);
    let var = variance_gain(0.5, 0.9, 8, model.mu(), model.sigma2(), 1.0).unwrap();
    assert!(rel_err(var, exact.variance) <= 1e-10);
}
