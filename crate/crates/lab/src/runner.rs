//! Run orchestration: designs × seeds cells, each sampled once and
//! post-processed for every ε.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use reig_core::estimators::{
    enumerated_divergences, mine_divergences, outer_sample, train_scorer, DivergenceSamples, EstimatorConfig,
    InnerScheme, ScorerNetwork,
};
use reig_core::models::ExperimentModel;
use reig_core::proposals::{train_affine_proposal, AffineGaussianProposal, PriorProposal, Proposal, ProposalTraining};
use reig_core::robust::robust_value;

use crate::config::{EstimatorName, ProposalChoice, RunConfig};
use crate::models::{with_model, LabModel, ModelVisitor};
use crate::record::EstimateRecord;
use crate::{config_error, LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<EstimateRecord>,
    /// One message per failed (design, seed) cell.
    pub failures: Vec<String>,
}

/// Thread pool with `workers` threads (0 = one per core).
pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| config_error(format!("cannot start {workers} workers: {e}")))
}

/// Execute a run configuration. Fails with [`LabError::AllFailed`] if no cell succeeds.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let out = thread_pool(config.workers)?.install(|| with_model(config.model, &config.model_params, Runner { config }))??;
    if out.records.is_empty() && !out.failures.is_empty() {
        for f in &out.failures {
            eprintln!("{f}");
        }
        return Err(LabError::AllFailed(out.failures.len()));
    }
    Ok(out)
}

struct Runner<'a> {
    config: &'a RunConfig,
}

impl ModelVisitor for Runner<'_> {
    type Output = Result<RunOutput>;
    fn visit<M: LabModel>(self, model: M) -> Result<RunOutput> {
        run_model(&model, self.config)
    }
}

/// Designs named in `labels`, in the order given, or the whole grid.
pub fn select_designs<M: ExperimentModel>(model: &M, labels: Option<&[String]>) -> Result<Vec<M::Design>> {
    let grid = model.design_grid();
    let Some(labels) = labels else { return Ok(grid) };
    labels
        .iter()
        .map(|label| {
            grid.iter()
                .find(|d| model.design_label(d) == *label)
                .cloned()
                .ok_or_else(|| config_error(format!("model '{}' has no design '{label}'", model.name())))
        })
        .collect()
}

fn is_enumerable<M: ExperimentModel>(model: &M, design: &M::Design) -> bool {
    model.enumerate_prior().is_some() && model.enumerate_outcomes(design).is_some()
}

fn has_closed_marginal<M: ExperimentModel>(model: &M, design: &M::Design) -> bool {
    let mut rng = reig_core::rng::RandomStream::new(0).rng();
    let mut check = || -> reig_core::Result<bool> {
        let theta = model.sample_prior(&mut rng, 1)?;
        let y = model.sample_likelihood(theta.thetas.row(0), design, &mut rng, 1)?;
        Ok(model.log_marginal(design, y.row(0)).is_some())
    };
    check().unwrap_or(false)
}

/// Divergence samples with outer draws spread over the current thread pool.
/// Identical to the sequential result for any pool size.
pub fn divergences_parallel<M: ExperimentModel>(
    model: &M,
    design: &M::Design,
    scheme: InnerScheme<'_, M>,
    cfg: &EstimatorConfig,
    enumerate: bool,
) -> reig_core::Result<DivergenceSamples> {
    cfg.validate()?;
    if enumerate {
        if let Some(result) = enumerated_divergences(model, design, cfg) {
            return result;
        }
    }
    let root = cfg.root_stream();
    let outer = (0..cfg.n1)
        .into_par_iter()
        .map(|i| outer_sample(model, design, scheme, cfg, root, i))
        .collect::<reig_core::Result<Vec<_>>>()?;
    Ok(DivergenceSamples::from_outer(outer))
}

/// What each design needs before its cells can be evaluated.
enum Prepared<M: ExperimentModel> {
    Nested { proposal: Box<dyn Proposal<M>>, contrastive: bool },
    Exact,
    Scorer(ScorerNetwork),
}

#[derive(Serialize, Deserialize)]
struct CachedProposal {
    model: serde_json::Value,
    design: String,
    training: ProposalTraining,
    proposal: AffineGaussianProposal,
}

/// Train an affine proposal, reusing a cached one trained with identical
/// model parameters, design and settings.
pub fn trained_proposal<M: LabModel>(
    model: &M,
    design: &M::Design,
    training: &ProposalTraining,
    cache: Option<&Path>,
) -> Result<AffineGaussianProposal> {
    let label = model.design_label(design);
    let model_json = serde_json::to_value(model)?;
    let path = cache.map(|dir| dir.join(format!("{}-{}.json", model.name(), label)));
    if let Some(path) = &path {
        if let Ok(text) = std::fs::read_to_string(path) {
            if let Ok(c) = serde_json::from_str::<CachedProposal>(&text) {
                if c.model == model_json && c.design == label && c.training == *training && c.proposal.validate().is_ok() {
                    return Ok(c.proposal);
                }
            }
        }
    }
    let proposal = train_affine_proposal(model, design, training)?.proposal;
    if let Some(path) = &path {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let doc = CachedProposal { model: model_json, design: label, training: training.clone(), proposal };
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        return Ok(doc.proposal);
    }
    Ok(proposal)
}

fn prepare<M: LabModel>(model: &M, design: &M::Design, config: &RunConfig) -> Result<Prepared<M>> {
    let enumerated = config.enumerate && is_enumerable(model, design);
    let contrastive = config.estimator == EstimatorName::Ace;
    Ok(match config.estimator {
        EstimatorName::Exact => Prepared::Exact,
        _ if enumerated && config.estimator != EstimatorName::Mine => Prepared::Exact,
        EstimatorName::Nmc => Prepared::Nested { proposal: Box::new(PriorProposal), contrastive: false },
        EstimatorName::Vnmc | EstimatorName::Ace => {
            let proposal: Box<dyn Proposal<M>> = match config.proposal {
                ProposalChoice::Prior => Box::new(PriorProposal),
                ProposalChoice::Exact => model
                    .exact_posterior(design)
                    .ok_or_else(|| config_error(format!("model '{}' has no exact posterior proposal", model.name())))??,
                ProposalChoice::Trained => Box::new(trained_proposal(
                    model,
                    design,
                    &config.proposal_training,
                    config.proposal_cache.as_deref(),
                )?),
                ProposalChoice::Auto if model.gaussian_prior().is_some() => Box::new(trained_proposal(
                    model,
                    design,
                    &config.proposal_training,
                    config.proposal_cache.as_deref(),
                )?),
                ProposalChoice::Auto => Box::new(PriorProposal),
            };
            Prepared::Nested { proposal, contrastive }
        }
        EstimatorName::Mine => Prepared::Scorer(train_scorer(model, design, &config.scorer_training)?.network),
    })
}

/// Up-front checks that would otherwise fail every cell identically.
fn check_capabilities<M: LabModel>(model: &M, designs: &[M::Design], config: &RunConfig) -> Result<()> {
    let first = &designs[0];
    let enumerated = config.enumerate && is_enumerable(model, first);
    if config.estimator == EstimatorName::Exact && !enumerated && !has_closed_marginal(model, first) {
        return Err(config_error(format!("estimator 'exact' needs a closed-form marginal; model '{}' has none", model.name())));
    }
    let nested = matches!(config.estimator, EstimatorName::Vnmc | EstimatorName::Ace) && !enumerated;
    if nested && config.proposal == ProposalChoice::Exact && model.exact_posterior(first).is_none() {
        return Err(config_error(format!("model '{}' has no exact posterior proposal", model.name())));
    }
    if nested && config.proposal == ProposalChoice::Trained && model.gaussian_prior().is_none() {
        return Err(config_error(format!("model '{}' has no Gaussian prior to train a proposal from", model.name())));
    }
    Ok(())
}

fn cell_samples<M: LabModel>(
    model: &M,
    design: &M::Design,
    prepared: &Prepared<M>,
    cfg: &EstimatorConfig,
    enumerate: bool,
) -> reig_core::Result<DivergenceSamples> {
    match prepared {
        Prepared::Exact => divergences_parallel(model, design, InnerScheme::Exact, cfg, enumerate),
        Prepared::Nested { proposal, contrastive } => {
            let scheme = InnerScheme::Nested { proposal: proposal.as_ref(), contrastive: *contrastive };
            divergences_parallel(model, design, scheme, cfg, false)
        }
        Prepared::Scorer(net) => mine_divergences(model, design, net, cfg),
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn run_model<M: LabModel>(model: &M, config: &RunConfig) -> Result<RunOutput> {
    let designs = select_designs(model, config.designs.as_deref())?;
    let seeds = config.resolved_seeds()?;
    check_capabilities(model, &designs, config)?;

    let prep_start = Instant::now();
    let mut prepared = Vec::with_capacity(designs.len());
    for (d, result) in designs.iter().zip(designs.par_iter().map(|d| prepare(model, d, config)).collect::<Vec<_>>()) {
        prepared.push(match result {
            Ok(p) => Ok(p),
            Err(e @ LabError::Config(_)) => return Err(e),
            Err(e) => Err(format!("design {}: preparation failed: {e}", model.design_label(d))),
        });
    }
    let prep_ms = elapsed_ms(prep_start) / designs.len() as f64;

    let cells: Vec<(usize, u64)> = (0..designs.len()).flat_map(|d| seeds.iter().map(move |s| (d, *s))).collect();
    let results: Vec<std::result::Result<Vec<EstimateRecord>, String>> = cells
        .par_iter()
        .map(|&(di, seed)| {
            let design = &designs[di];
            let label = model.design_label(design);
            let prepared = prepared[di].as_ref().map_err(|e| format!("{e} (seed {seed} skipped)"))?;
            let cfg = config.estimator_config(seed);
            let start = Instant::now();
            let samples = cell_samples(model, design, prepared, &cfg, config.enumerate)
                .map_err(|e| format!("design {label}, seed {seed}: {e}"))?;
            let sample_ms = elapsed_ms(start);
            config
                .epsilon
                .iter()
                .map(|&eps| {
                    let start = Instant::now();
                    let r = robust_value(&samples, config.robust_mode, eps)
                        .map_err(|e| format!("design {label}, seed {seed}, epsilon {eps}: {e}"))?;
                    let runtime_ms =
                        if config.timing { prep_ms + sample_ms + elapsed_ms(start) } else { 0.0 };
                    Ok(EstimateRecord {
                        model: model.name().to_string(),
                        design: label.clone(),
                        estimator: config.estimator.as_str().to_string(),
                        robust_mode: config.robust_mode.as_str().to_string(),
                        epsilon: eps,
                        n1: cfg.n1,
                        n2: cfg.n2,
                        m: cfg.m,
                        seed,
                        value: r.value,
                        lambda_star: (!r.lambda_star.is_nan()).then_some(r.lambda_star),
                        clip_count: r.clip_count,
                        runtime_ms,
                    }
                    .normalised())
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rows) => records.extend(rows),
            Err(msg) => failures.push(msg),
        }
    }
    Ok(RunOutput { records, failures })
}
