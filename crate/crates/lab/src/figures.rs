//! Curve data behind the figures, as long-format CSV rows
//! `figure,panel,series,x,y`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use reig_core::estimators::{
    divergence_samples, mine_divergences, train_scorer, EstimatorConfig, InnerScheme, ScorerTraining,
};
use reig_core::models::{ABTestModel, DiagnosticTestModel, ExperimentModel, PKModel, PreferenceModel, TestKind};
use reig_core::oracle::{discrete_eig_exact, gaussian_kl};
use reig_core::proposals::ProposalTraining;
use reig_core::robust::{robust_value, RobustMode};

use crate::format::format_sig;
use crate::models::LabModel;
use crate::runner::{thread_pool, trained_proposal};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FigureName {
    /// EIG of both diagnostic tests against the prior probability.
    Fig1,
    /// EIG under p and q and REIG under p on the preference grid.
    Worstcase,
    Abtest,
    Preference,
    Pk,
}

impl FigureName {
    pub fn as_str(&self) -> &'static str {
        match self {
            FigureName::Fig1 => "fig1",
            FigureName::Worstcase => "worstcase",
            FigureName::Abtest => "abtest",
            FigureName::Preference => "preference",
            FigureName::Pk => "pk",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FigureOptions {
    pub fast: bool,
    pub seed: u64,
    /// 0 = one worker per core.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureRow {
    pub figure: &'static str,
    pub panel: String,
    pub series: String,
    pub x: f64,
    pub y: f64,
}

pub fn write_rows<W: Write>(writer: W, rows: &[FigureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["figure", "panel", "series", "x", "y"])?;
    for r in rows {
        w.write_record([r.figure, &r.panel, &r.series, &format_sig(r.x), &format_sig(r.y)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn figure(name: FigureName, options: &FigureOptions) -> Result<Vec<FigureRow>> {
    thread_pool(options.workers)?.install(|| match name {
        FigureName::Fig1 => Ok(fig1(options)),
        FigureName::Worstcase => worstcase(options),
        FigureName::Abtest => {
            let m = ABTestModel::perturbed();
            let reference = ABTestModel::reference();
            let truth = |d: &usize| Ok((m.closed_form_eig(*d), reference.closed_form_eig(*d)));
            convergence_figure(name, &m, m.design_grid(), truth, options)
        }
        FigureName::Preference => {
            let m = PreferenceModel::perturbed();
            let reference = PreferenceModel::reference();
            let n1 = if options.fast { 300 } else { 2000 };
            let cfg = EstimatorConfig { n1, n2: 10, m: 1, seed: options.seed };
            let truth = |d: &f64| {
                let p = divergence_samples(&m, d, InnerScheme::Exact, &cfg)?.mean();
                let r = divergence_samples(&reference, d, InnerScheme::Exact, &cfg)?.mean();
                Ok((p, r))
            };
            convergence_figure(name, &m, every_nth(m.design_grid(), 5), truth, options)
        }
        FigureName::Pk => {
            let m = PKModel::perturbed();
            let reference = PKModel::reference();
            let (n1, inner) = if options.fast { (100, 2000) } else { (200, 10_000) };
            let cfg = EstimatorConfig { n1, n2: 5, m: inner, seed: options.seed };
            let truth = |d: &f64| {
                let p = divergence_samples(&m, d, InnerScheme::nmc(), &cfg)?.mean();
                let r = divergence_samples(&reference, d, InnerScheme::nmc(), &cfg)?.mean();
                Ok((p, r))
            };
            convergence_figure(name, &m, every_nth(m.design_grid(), 5), truth, options)
        }
    })
}

fn every_nth<T: Clone>(grid: Vec<T>, n: usize) -> Vec<T> {
    let last = grid.len() - 1;
    grid.iter().enumerate().filter(|(i, _)| i % n == 0 || *i == last).map(|(_, d)| d.clone()).collect()
}

fn row(figure: FigureName, panel: &str, series: impl Into<String>, x: f64, y: f64) -> FigureRow {
    FigureRow { figure: figure.as_str(), panel: panel.into(), series: series.into(), x, y }
}

fn fig1(options: &FigureOptions) -> Vec<FigureRow> {
    let m = DiagnosticTestModel::default();
    let points = if options.fast { 101 } else { 1001 };
    let mut rows = Vec::with_capacity(2 * points);
    for k in 0..points {
        let r = k as f64 / (points - 1) as f64;
        rows.push(row(FigureName::Fig1, "eig", "test_A", r, discrete_eig_exact(&m, TestKind::A, r)));
        rows.push(row(FigureName::Fig1, "eig", "test_B", r, discrete_eig_exact(&m, TestKind::B, r)));
    }
    rows
}

/// Reference prior `p`, and `q` shifted down by `δ = σ√(2ε)` so `KL(q‖p) = ε`.
pub fn worstcase_priors(epsilon: f64) -> (PreferenceModel, PreferenceModel, f64) {
    let p = PreferenceModel::reference();
    let delta = p.prior_sd * (2.0 * epsilon).sqrt();
    let q = p.with_prior_mean(p.prior_mean - delta);
    (p, q, delta)
}

fn worstcase(options: &FigureOptions) -> Result<Vec<FigureRow>> {
    const EPSILON: f64 = 0.2;
    let (p, q, delta) = worstcase_priors(EPSILON);
    let eps = gaussian_kl(&[q.prior_mean], &[p.prior_mean], &[p.prior_sd * p.prior_sd])?;
    let n1 = if options.fast { 200 } else { 1000 };
    let cfg = EstimatorConfig { n1, n2: 10, m: 1, seed: options.seed };
    let f = FigureName::Worstcase;
    let per_design = p
        .design_grid()
        .par_iter()
        .map(|d| -> Result<Vec<FigureRow>> {
            let sp = divergence_samples(&p, d, InnerScheme::Exact, &cfg)?;
            let sq = divergence_samples(&q, d, InnerScheme::Exact, &cfg)?;
            let robust = robust_value(&sp, RobustMode::Reig, eps)?.value;
            Ok(vec![
                row(f, "eig", "I_p", *d, sp.mean()),
                row(f, "eig", "I_q", *d, sq.mean()),
                row(f, "eig", "I_eps_p", *d, robust),
                row(f, "standard_error", "I_p", *d, sp.standard_error()),
                row(f, "standard_error", "I_q", *d, sq.standard_error()),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = vec![row(f, "meta", "epsilon", 0.0, eps), row(f, "meta", "delta", 0.0, delta)];
    rows.extend(per_design.into_iter().flatten());
    Ok(rows)
}

struct Budget {
    inner: Vec<usize>,
    mine_samples: Vec<usize>,
    /// Scorer training passes over single pairs; epochs = passes / N.
    scorer_passes: usize,
    epsilons: [f64; 4],
}

impl Budget {
    fn new(fast: bool) -> Self {
        if fast {
            Self { inner: vec![30, 100], mine_samples: vec![10_000], scorer_passes: 1_000_000, epsilons: [0.0, 0.001, 0.01, 0.1] }
        } else {
            Self {
                inner: vec![30, 100, 1000],
                mine_samples: vec![10_000, 30_000, 50_000],
                scorer_passes: 5_000_000,
                epsilons: [0.0, 0.001, 0.01, 0.1],
            }
        }
    }
}

/// Estimator convergence (VNMC/ACE over `M`, MINE over sample size) and
/// ε-sweep panels of the robust estimates at `M = 30` / the smallest MINE budget.
fn convergence_figure<M: LabModel>(
    name: FigureName,
    model: &M,
    designs: Vec<M::Design>,
    truth: impl Fn(&M::Design) -> Result<(f64, f64)> + Sync,
    options: &FigureOptions,
) -> Result<Vec<FigureRow>> {
    let budget = Budget::new(options.fast);
    let training = ProposalTraining { seed: options.seed, ..Default::default() };
    let per_design = designs
        .par_iter()
        .map(|d| -> Result<Vec<FigureRow>> {
            let x = model.design_coordinate(d);
            let mut rows = Vec::new();
            let (t, t_ref) = truth(d)?;
            rows.push(row(name, "convergence", "true", x, t));
            rows.push(row(name, "convergence", "true_reference_prior", x, t_ref));

            let proposal = trained_proposal(model, d, &training, None)?;
            for &inner in &budget.inner {
                let cfg = EstimatorConfig { n1: 100, n2: 10, m: inner, seed: options.seed };
                let v = divergence_samples(model, d, InnerScheme::vnmc(&proposal), &cfg)?;
                let a = divergence_samples(model, d, InnerScheme::ace(&proposal), &cfg)?;
                rows.push(row(name, "convergence", format!("vnmc_M{inner}"), x, v.mean()));
                rows.push(row(name, "convergence", format!("ace_M{inner}"), x, a.mean()));
                if inner == budget.inner[0] {
                    for eps in budget.epsilons {
                        let rv = robust_value(&v, RobustMode::Reig, eps)?.value;
                        let ra = robust_value(&a, RobustMode::ReigMax, eps)?.value;
                        rows.push(row(name, "epsilon_sweep", format!("reig_vnmc_M{inner}_eps{eps}"), x, rv));
                        rows.push(row(name, "epsilon_sweep", format!("reig_max_ace_M{inner}_eps{eps}"), x, ra));
                    }
                }
            }
            for &n in &budget.mine_samples {
                let settings = ScorerTraining {
                    epochs: (budget.scorer_passes / n).max(1),
                    train_size: n,
                    holdout_size: (n / 5).max(2),
                    seed: options.seed,
                    ..Default::default()
                };
                let net = train_scorer(model, d, &settings)?.network;
                let cfg = EstimatorConfig { n1: n / 10, n2: 10, m: 1, seed: options.seed + 1 };
                let s = mine_divergences(model, d, &net, &cfg)?;
                rows.push(row(name, "convergence", format!("mine_N{n}"), x, s.mean()));
                if n == budget.mine_samples[0] {
                    for eps in budget.epsilons {
                        let r = robust_value(&s, RobustMode::ReigMax, eps)?.value;
                        rows.push(row(name, "epsilon_sweep", format!("reig_max_mine_N{n}_eps{eps}"), x, r));
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_design.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig1_curves_cross_at_half() {
        let rows = figure(FigureName::Fig1, &FigureOptions { fast: true, ..Default::default() }).unwrap();
        let at = |series: &str, x: f64| rows.iter().find(|r| r.series == series && (r.x - x).abs() < 1e-12).unwrap().y;
        assert!((at("test_A", 0.5) - at("test_B", 0.5)).abs() < 1e-4);
        assert!(at("test_A", 0.8) > at("test_B", 0.8));
        assert!(at("test_A", 0.2) < at("test_B", 0.2));
        assert_eq!(at("test_A", 0.0), 0.0);
    }

    #[test]
    fn worstcase_shift_has_requested_kl() {
        let (p, q, delta) = worstcase_priors(0.2);
        assert!((delta - 20.0 * 0.4f64.sqrt()).abs() < 1e-12);
        let kl = gaussian_kl(&[q.prior_mean], &[p.prior_mean], &[400.0]).unwrap();
        assert!((kl - 0.2).abs() < 1e-12);
    }
}
