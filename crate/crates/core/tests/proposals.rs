mod common;

use common::mean_se;
use reig_core::estimators::{ace_eig, vnmc_eig, EstimatorConfig};
use reig_core::models::{ABTestModel, ExperimentModel};
use reig_core::proposals::*;
use reig_core::rng::RandomStream;

#[test]
fn trained_proposal_recovers_the_posterior() {
    let m = ABTestModel::perturbed();
    for n_a in [0usize, 4, 10] {
        let t = train_affine_proposal(&m, &n_a, &ProposalTraining::default()).unwrap();
        let exact = ExactPosterior::new(&m, n_a).unwrap();
        let q = &t.proposal;
        for k in 0..2 {
            let sd = exact.posterior_cov[k].sqrt();
            let rel = q.log_sigma[k].exp() / sd - 1.0;
            assert!(rel.abs() <= 0.05, "n_A={n_a} σ_{k} off by {rel}");
        }
        // mean map: RMS error over outcomes, in posterior standard deviations
        let mut rng = RandomStream::new(77).rng();
        let draws = m.sample_prior(&mut rng, 1000).unwrap();
        let mut sq = [0.0; 2];
        for theta in draws.thetas.rows() {
            let y = m.sample_likelihood(theta, &n_a, &mut rng, 1).unwrap();
            let (a, b) = (q.mean(y.row(0)), exact.mean(y.row(0)));
            for k in 0..2 {
                sq[k] += ((a[k] - b[k]) / exact.posterior_cov[k].sqrt()).powi(2) / 1000.0;
            }
        }
        assert!(sq.iter().all(|s| s.sqrt() <= 0.05), "n_A={n_a} mean error {sq:?}");
        assert!(t.history[t.best_epoch] <= t.history[0]);
    }
}

#[test]
fn training_shrinks_the_bound_gap() {
    let m = ABTestModel::perturbed();
    let n_a = 5;
    let trained = train_affine_proposal(&m, &n_a, &ProposalTraining::default()).unwrap().proposal;
    let gap = |q: &dyn Proposal<ABTestModel>| {
        let g: Vec<f64> = (0..10)
            .map(|seed| {
                let cfg = EstimatorConfig { n1: 50, n2: 2, m: 30, seed };
                vnmc_eig(&m, &n_a, q, &cfg).unwrap().value - ace_eig(&m, &n_a, q, &cfg).unwrap().value
            })
            .collect();
        mean_se(&g).0
    };
    let (with_prior, with_trained) = (gap(&PriorProposal), gap(&trained));
    assert!(with_trained < with_prior, "{with_trained} vs {with_prior}");
}

#[test]
fn trained_proposal_round_trips_through_json() {
    let m = ABTestModel::perturbed();
    let s = ProposalTraining { epochs: 2, train_size: 64, holdout_size: 32, ..Default::default() };
    let q = train_affine_proposal(&m, &3, &s).unwrap().proposal;
    let text = serde_json::to_string(&q).unwrap();
    let back: AffineGaussianProposal = serde_json::from_str(&text).unwrap();
    assert_eq!(back, q);
}

#[test]
fn bad_settings_are_rejected() {
    let m = ABTestModel::perturbed();
    let s = ProposalTraining { epochs: 0, ..Default::default() };
    assert!(train_affine_proposal(&m, &3, &s).is_err());
}
