use super::*;
use crate::grid::barycentric_grid;
use rand_distr::{Distribution, Normal};

fn ln_params(mu: &[f64], sigma: f64) -> MetaParams {
    let d = mu.len();
    MetaParams::LogisticNormal(
        LogisticNormalParams::new(DVector::from_column_slice(mu), DMatrix::identity(d, d) * sigma).unwrap(),
    )
}

fn dir_params(alpha: &[f64]) -> MetaParams {
    MetaParams::Dirichlet(DirichletParams::new(alpha.to_vec()).unwrap())
}

fn sample_group(params: &MetaParams, n: usize, seed: u64) -> Vec<PmpVector> {
    let mut rng = task_rng(seed, "group", 0);
    (0..n).map(|_| params.sample(&mut rng)).collect()
}

fn column_stats(post: &MetaPosterior, i: usize) -> (f64, f64) {
    let vals: Vec<f64> = post
        .draws
        .iter()
        .map(|d| match d {
            MetaParams::Dirichlet(p) => p.alpha()[i],
            MetaParams::LogisticNormal(p) => p.mu()[i],
        })
        .collect();
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, sd)
}

fn direct_log_likelihood(params: &MetaParams, group: &[PmpVector]) -> f64 {
    group
        .iter()
        .map(|p| params.logpdf(&clamp_to_interior(p, DEFAULT_EPSILON).unwrap()).unwrap())
        .sum()
}

#[test]
fn uniform_dirichlet_on_one_point() {
    let group = vec![PmpVector::uniform(3).unwrap()];
    let ll = log_likelihood(&dir_params(&[1.0, 1.0, 1.0]), &group, DEFAULT_EPSILON).unwrap();
    assert!((ll - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn sufficient_statistics_match_direct_sums() {
    let group = sample_group(&ln_params(&[0.2, -0.4], 0.7), 50, 1);
    let stats = GroupStats::new(&group, DEFAULT_EPSILON).unwrap();
    let mut rng = task_rng(2, "tau", 0);
    let normal = Normal::new(0.0, 0.5).unwrap();
    for family in [Family::LogisticNormal, Family::Dirichlet] {
        for _ in 0..20 {
            let dim = unconstrained_dim(family, 3);
            let theta: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            let dir: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            let at = |t: f64| {
                let shifted: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                from_unconstrained(family, 3, &shifted, 1e-6).unwrap()
            };
            let p = at(0.0);
            let fast = stats.log_likelihood(&p);
            let slow = direct_log_likelihood(&p, &group);
            assert!(((fast - slow) / slow).abs() < 1e-10, "{fast} vs {slow}");

            let h = 1e-5;
            let fd_fast = (stats.log_likelihood(&at(h)) - stats.log_likelihood(&at(-h))) / (2.0 * h);
            let fd_slow =
                (direct_log_likelihood(&at(h), &group) - direct_log_likelihood(&at(-h), &group)) / (2.0 * h);
            assert!(
                (fd_fast - fd_slow).abs() <= 1e-6 * fd_slow.abs().max(1.0),
                "{fd_fast} vs {fd_slow}"
            );
        }
    }
}

#[test]
fn better_parameters_score_higher() {
    let group = sample_group(&dir_params(&[5.0, 5.0, 5.0]), 200, 3);
    let config = MetaModelConfig {
        family: Family::Dirichlet,
        ..MetaModelConfig::default()
    };
    let good = log_posterior(&dir_params(&[5.0, 5.0, 5.0]), &group, &config).unwrap();
    let flat = log_posterior(&dir_params(&[1.0, 1.0, 1.0]), &group, &config).unwrap();
    assert!(good > flat);
}

#[test]
fn prior_matches_its_definition() {
    let config = MetaModelConfig::default();
    let params = MetaParams::LogisticNormal(
        LogisticNormalParams::from_cholesky(
            DVector::from_vec(vec![0.3, -1.0]),
            DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.2, 1.5]),
        )
        .unwrap(),
    );
    let half = |x: f64, s: f64| normal_logpdf(x, s) + std::f64::consts::LN_2;
    let expected = normal_logpdf(0.3, 5.0)
        + normal_logpdf(-1.0, 5.0)
        + half(0.8, 2.5)
        + (0.8f64 - 1e-6).ln()
        + half(1.5, 2.5)
        + (1.5f64 - 1e-6).ln()
        + normal_logpdf(0.2, 2.5);
    assert!((log_prior(&params, &config) - expected).abs() < 1e-9);
}

#[test]
fn recovers_logistic_normal() {
    let truth = [0.5, -0.5];
    let group = sample_group(&ln_params(&truth, 0.2), 500, 4);
    let post = fit(&group, &MetaModelConfig::default(), 11).unwrap();
    assert_eq!(post.len(), 2000);
    assert!(post.diagnostics.max_rhat() < 1.05, "{:?}", post.diagnostics);
    for (i, t) in truth.iter().enumerate() {
        let (m, sd) = column_stats(&post, i);
        assert!((m - t).abs() < 3.0 * sd, "mu[{i}] = {m} ± {sd}");
    }
}

#[test]
fn recovers_dirichlet() {
    let truth = [3.0, 7.0];
    let group = sample_group(&dir_params(&truth), 500, 5);
    let config = MetaModelConfig {
        family: Family::Dirichlet,
        ..MetaModelConfig::default()
    };
    let post = fit(&group, &config, 12).unwrap();
    assert!(post.diagnostics.max_rhat() < 1.05, "{:?}", post.diagnostics);
    for (i, t) in truth.iter().enumerate() {
        let (m, sd) = column_stats(&post, i);
        assert!((m - t).abs() < 3.0 * sd, "alpha[{i}] = {m} ± {sd}");
    }
}

#[test]
fn identical_members_collapse() {
    let group = vec![PmpVector::one_hot(3, 1).unwrap(); 50];
    let post = fit(&group, &MetaModelConfig::default(), 13).unwrap();
    assert!(post.diagnostics.degenerate);
    let mean_diag: f64 = post
        .draws
        .iter()
        .map(|d| match d {
            MetaParams::LogisticNormal(l) => (l.chol()[(0, 0)] + l.chol()[(1, 1)]) / 2.0,
            MetaParams::Dirichlet(_) => unreachable!(),
        })
        .sum::<f64>()
        / post.len() as f64;
    assert!(mean_diag < 1e-3, "{mean_diag}");
}

#[test]
fn small_groups_are_rejected() {
    let config = MetaModelConfig::default();
    assert!(matches!(fit(&[], &config, 1), Err(MetaError::EmptyGroup)));
    assert!(matches!(
        fit(&[PmpVector::uniform(3).unwrap()], &config, 1),
        Err(MetaError::GroupTooSmall(1))
    ));
    let bad = MetaModelConfig {
        n_draws: 0,
        ..MetaModelConfig::default()
    };
    assert!(matches!(
        fit(&sample_group(&ln_params(&[0.0, 0.0], 1.0), 5, 1), &bad, 1),
        Err(MetaError::InvalidConfig(_))
    ));
}

#[test]
fn fit_is_seeded() {
    let group = sample_group(&ln_params(&[0.0, 1.0], 0.5), 40, 6);
    let config = MetaModelConfig {
        n_warmup: 200,
        n_draws: 200,
        ..MetaModelConfig::default()
    };
    let a = fit(&group, &config, 99).unwrap();
    let b = fit(&group, &config, 99).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    let back: MetaPosterior = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
}

#[test]
fn single_draw_predictive_is_the_family_density() {
    let params = ln_params(&[0.3, -0.2], 0.5);
    let post = MetaPosterior::from_draws(vec![params.clone()], MetaModelConfig::default(), 0).unwrap();
    let p = PmpVector::new(vec![0.2, 0.5, 0.3]).unwrap();
    let direct = params.logpdf(&clamp_to_interior(&p, DEFAULT_EPSILON).unwrap()).unwrap();
    assert!((post.posterior_predictive_logpdf(&p).unwrap() - direct).abs() < 1e-12);
}

#[test]
fn predictive_ignores_draw_order() {
    let group = sample_group(&ln_params(&[0.3, -0.2], 0.5), 60, 7);
    let config = MetaModelConfig {
        n_warmup: 300,
        n_draws: 400,
        ..MetaModelConfig::default()
    };
    let post = fit(&group, &config, 3).unwrap();
    let mut reversed = post.clone();
    reversed.draws.reverse();
    for p in &group[..10] {
        let a = post.posterior_predictive_logpdf(p).unwrap();
        let b = reversed.posterior_predictive_logpdf(p).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn predictive_integrates_to_one() {
    let lattice = barycentric_grid(400, 3, DEFAULT_EPSILON).unwrap();
    for family in [Family::LogisticNormal, Family::Dirichlet] {
        let truth = match family {
            Family::LogisticNormal => ln_params(&[0.3, -0.2], 0.6),
            Family::Dirichlet => dir_params(&[3.0, 2.0, 4.0]),
        };
        let group = sample_group(&truth, 200, 8);
        let config = MetaModelConfig {
            family,
            ..MetaModelConfig::default()
        };
        let post = fit(&group, &config, 21).unwrap();
        let total = lattice
            .integrate(|p| post.predictive_prepared(&PreparedPoint::new(p)))
            .unwrap();
        assert!((total - 1.0).abs() < 2e-3, "{family:?}: {total}");
    }
}

#[test]
fn clamping_level_barely_matters_for_interior_groups() {
    let group = sample_group(&ln_params(&[0.4, -0.3], 0.4), 100, 9);
    let a = MetaModelConfig::default();
    let b = MetaModelConfig {
        epsilon_clamp: DEFAULT_EPSILON / 10.0,
        ..MetaModelConfig::default()
    };
    let pa = fit(&group, &a, 5).unwrap().unconstrained_mean();
    let pb = fit(&group, &b, 5).unwrap().unconstrained_mean();
    for (x, y) in pa.iter().zip(&pb) {
        assert!((x - y).abs() < 0.05);
    }
}

#[test]
fn mean_embedding_examples() {
    let draw = ln_params(&[0.1, 0.2], 0.3);
    let post = MetaPosterior::from_draws(vec![draw.clone(); 5], MetaModelConfig::default(), 0).unwrap();
    let e = mean_embedding(&post).unwrap();
    assert_eq!(e.weights, vec![1.0]);
    let MetaParams::LogisticNormal(center) = &e.centers[0] else { panic!() };
    let MetaParams::LogisticNormal(orig) = &draw else { panic!() };
    assert!((center.mu() - orig.mu()).amax() < 1e-15);
    assert!((center.chol() - orig.chol()).amax() < 1e-15);

    let sym = MetaPosterior::from_draws(
        vec![dir_params(&[2.0, 5.0]), dir_params(&[4.0, 3.0])],
        MetaModelConfig::default(),
        0,
    )
    .unwrap();
    let e = mean_embedding(&sym).unwrap();
    let MetaParams::Dirichlet(d) = &e.centers[0] else { panic!() };
    assert_eq!(d.alpha(), &[3.0, 4.0]);
}

#[test]
fn mean_embedding_matches_draw_average() {
    let group = sample_group(&ln_params(&[0.3, -0.2], 0.5), 60, 10);
    let config = MetaModelConfig {
        n_warmup: 300,
        n_draws: 400,
        ..MetaModelConfig::default()
    };
    let post = fit(&group, &config, 4).unwrap();
    let e = mean_embedding(&post).unwrap();
    let MetaParams::LogisticNormal(center) = &e.centers[0] else { panic!() };
    let mut mu = DVector::zeros(2);
    let mut chol = DMatrix::zeros(2, 2);
    for d in &post.draws {
        let MetaParams::LogisticNormal(l) = d else { panic!() };
        mu += l.mu();
        chol += l.chol();
    }
    mu /= post.len() as f64;
    chol /= post.len() as f64;
    assert!((center.mu() - mu).amax() < 1e-12);
    assert!((center.chol() - chol).amax() < 1e-12);
}

#[test]
fn cluster_embedding_edge_cases() {
    let group = sample_group(&ln_params(&[0.3, -0.2], 0.5), 60, 11);
    let config = MetaModelConfig {
        n_warmup: 300,
        n_draws: 100,
        ..MetaModelConfig::default()
    };
    let post = fit(&group, &config, 4).unwrap();
    let one = cluster_embedding(&post, 1, 1).unwrap();
    let mean = mean_embedding(&post).unwrap();
    let (MetaParams::LogisticNormal(a), MetaParams::LogisticNormal(b)) = (&one.centers[0], &mean.centers[0]) else {
        panic!()
    };
    assert!((a.mu() - b.mu()).amax() < 1e-8);
    assert!((a.chol() - b.chol()).amax() < 1e-8);

    let all = cluster_embedding(&post, 100, 1).unwrap();
    assert_eq!(all.centers, post.draws);
    assert!(all.weights.iter().all(|w| *w == 0.01));

    assert!(matches!(
        cluster_embedding(&post, 101, 1),
        Err(MetaError::TooManyClusters { .. })
    ));
}

#[test]
fn clusters_find_two_blobs() {
    let mut rng = task_rng(12, "blobs", 0);
    let jitter = Normal::new(0.0, 0.02).unwrap();
    let centers = [[-1.0, 0.5], [1.5, -0.5]];
    let draws: Vec<MetaParams> = (0..400)
        .map(|i| {
            let c = centers[i % 2];
            ln_params(&[c[0] + jitter.sample(&mut rng), c[1] + jitter.sample(&mut rng)], 0.3)
        })
        .collect();
    let post = MetaPosterior::from_draws(draws, MetaModelConfig::default(), 0).unwrap();
    let e = cluster_embedding(&post, 2, 7).unwrap();
    assert_eq!(e.len(), 2);
    for c in centers {
        let hit = e.centers.iter().any(|m| {
            let MetaParams::LogisticNormal(l) = m else { return false };
            (l.mu()[0] - c[0]).abs() < 0.05 && (l.mu()[1] - c[1]).abs() < 0.05
        });
        assert!(hit, "no center near {c:?}");
    }
    for w in &e.weights {
        assert!((w - 0.5).abs() < 1e-12);
    }
    assert_eq!(e, cluster_embedding(&post, 2, 7).unwrap());
}
