use std::sync::Arc;

use metapmp::meta::MetaModelConfig;
use metapmp::models::{BetaBernoulliModel, Dataset, GenerativeModel};
use metapmp::{
    build_mixture, compute_pmps, fit, group_by_true_model, run_level2, Allocation, Family, LabeledPmpSample,
    MixtureMode, ModelSet, PmpVector,
};

fn beta_pair() -> ModelSet {
    let m1: Arc<dyn GenerativeModel> = Arc::new(BetaBernoulliModel::new("M1", 1.0, 10.0).unwrap());
    let m2: Arc<dyn GenerativeModel> = Arc::new(BetaBernoulliModel::new("M2", 1.0, 20.0).unwrap());
    ModelSet::new(vec![m1, m2]).unwrap()
}

fn quick(family: Family) -> MetaModelConfig {
    MetaModelConfig {
        family,
        n_warmup: 400,
        n_draws: 400,
        ..MetaModelConfig::default()
    }
}

#[test]
fn minimal_example_shrinks_the_observed_pmp() {
    let set = beta_pair();
    let data = Dataset::Binary((0..50).map(|i| u8::from(i < 35)).collect());
    let observed = compute_pmps(&set, &data).unwrap();
    assert!(observed.as_slice()[0] > 0.995);

    let sample = run_level2(&set, 2000, 50, 11, Allocation::Prior).unwrap();
    let groups = group_by_true_model(&sample);
    for family in [Family::LogisticNormal, Family::Dirichlet] {
        let fits: Vec<_> = (0..2)
            .map(|j| Some(fit(groups.group(j), &quick(family), 100 + j as u64).unwrap()))
            .collect();
        let mixture = build_mixture(&observed, &fits, MixtureMode::Full, 1, 5).unwrap();
        let mean = mixture.mixture_mean();
        // meta-uncertainty pulls the overconfident observed PMP toward the middle
        assert!(mean.as_slice()[0] < 0.7, "{family:?}: {:?}", mean.as_slice());
        assert!(mean.as_slice()[0] > 0.4, "{family:?}: {:?}", mean.as_slice());
        assert!(mixture.mixture_variance_trace() > 0.0);
    }
}

#[test]
fn saved_sample_fits_like_the_original() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pmps.csv");
    let sample = run_level2(&beta_pair(), 300, 20, 3, Allocation::Stratified).unwrap();
    sample.save(&path).unwrap();
    let loaded = LabeledPmpSample::load(&path).unwrap();
    assert_eq!(loaded, sample);

    let a = group_by_true_model(&sample);
    let b = group_by_true_model(&loaded);
    assert_eq!(a.sizes(), vec![150, 150]);
    let fa = fit(a.group(0), &quick(Family::LogisticNormal), 9).unwrap();
    let fb = fit(b.group(0), &quick(Family::LogisticNormal), 9).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn embedded_mixture_tracks_the_full_mixture() {
    let set = beta_pair();
    let sample = run_level2(&set, 1000, 50, 21, Allocation::Prior).unwrap();
    let groups = group_by_true_model(&sample);
    let fits: Vec<_> = (0..2)
        .map(|j| Some(fit(groups.group(j), &quick(Family::LogisticNormal), 200 + j as u64).unwrap()))
        .collect();
    let observed = PmpVector::new(vec![0.7, 0.3]).unwrap();
    let full = build_mixture(&observed, &fits, MixtureMode::Full, 1, 1).unwrap();
    let embedded = build_mixture(&observed, &fits, MixtureMode::Embedded, 3, 1).unwrap();
    let (a, b) = (full.mixture_mean(), embedded.mixture_mean());
    assert!((a.as_slice()[0] - b.as_slice()[0]).abs() < 0.05, "{:?} vs {:?}", a, b);
}
