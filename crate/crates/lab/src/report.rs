//! The oracle cross-check report.

use std::io::Write;

use serde::Serialize;

use reig_core::models::{ABTestModel, DiagnosticTestModel, ExperimentModel, PKModel, PreferenceModel, TestKind};
use reig_core::numeric::binary_entropy;
use reig_core::oracle::*;
use reig_core::rng::{uniform, RandomStream};

use crate::format::format_sig;
use crate::models::ModelName;
use crate::{config_error, Result};

pub const DUALITY_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub duality_tolerance: f64,
    pub models: Vec<ModelName>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { duality_tolerance: DUALITY_TOLERANCE, models: vec![ModelName::Diagnostic, ModelName::Ab, ModelName::Pk] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub check: String,
    /// `check` rows gate the exit status; `info` rows are reported only.
    pub kind: &'static str,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check(name: &str, value: f64, reference: f64, tolerance: f64) -> Check {
    Check {
        check: name.into(),
        kind: "check",
        value,
        reference,
        tolerance,
        pass: (value - reference).abs() <= tolerance,
    }
}

/// A check whose `value` must not exceed `limit`.
fn at_most(name: &str, value: f64, limit: f64) -> Check {
    Check { check: name.into(), kind: "check", value, reference: limit, tolerance: 0.0, pass: value <= limit }
}

/// Location of each sign change of `f` on a grid over (0,1), refined by bisection.
pub fn sign_changes(f: impl Fn(f64) -> f64, points: usize) -> Vec<f64> {
    let grid: Vec<f64> = (1..points).map(|k| k as f64 / points as f64).collect();
    let mut out = Vec::new();
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (f(a), f(b));
        if fb == 0.0 {
            out.push(b);
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if f(mid).signum() == fa.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
    }
    out
}

/// Finite-difference slope of `I(q) − I_aff(q; p)` at `q = p`.
pub fn tangency_slope(model: &DiagnosticTestModel, test: TestKind, r_p: f64, h: f64) -> f64 {
    let gap = |r: f64| discrete_eig_exact(model, test, r) - discrete_iaff_exact(model, test, r, r_p);
    (gap(r_p + h) - gap(r_p - h)) / (2.0 * h)
}

fn diagnostic_checks(opts: &ReportOptions) -> Vec<Check> {
    let m = DiagnosticTestModel::default();
    let grid = BernoulliPriorGrid::default();
    let mut out = Vec::new();
    let b_closed = std::f64::consts::LN_2 - binary_entropy(0.184);
    out.push(check("diagnostic_eig_B_half", discrete_eig_exact(&m, TestKind::B, 0.5), b_closed, 1e-12));
    let a_closed = binary_entropy(0.5 * (1.0 - 1e-16) + 0.25) - 0.5 * binary_entropy(1e-16) - 0.5 * std::f64::consts::LN_2;
    out.push(check("diagnostic_eig_A_half", discrete_eig_exact(&m, TestKind::A, 0.5), a_closed, 1e-12));
    out.push(check("diagnostic_eig_degenerate_prior", discrete_eig_exact(&m, TestKind::B, 0.0), 0.0, 0.0));

    let diff = |r: f64| discrete_eig_exact(&m, TestKind::A, r) - discrete_eig_exact(&m, TestKind::B, r);
    let crossings = sign_changes(diff, 10_000);
    out.push(check("fig1_crossing_count", crossings.len() as f64, 1.0, 0.0));
    out.push(check("fig1_crossing_location", crossings.first().copied().unwrap_or(f64::NAN), 0.5, 1e-3));

    let mut rng = RandomStream::new(20_240_101).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let r_p = 0.05 + 0.9 * uniform(&mut rng);
        let eps = 0.5 * uniform(&mut rng);
        let test = if uniform(&mut rng) < 0.5 { TestKind::A } else { TestKind::B };
        let (g, _) = discrete_reig_grid(&m, test, r_p, eps, &grid);
        let dual = discrete_reig_dual(&m, test, r_p, eps).map(|r| r.robust_value).unwrap_or(f64::NAN);
        worst = worst.max((g - dual).abs());
    }
    out.push(at_most("duality_cross_check_max_error", worst, opts.duality_tolerance));

    let r_p = 0.5;
    let eig = discrete_eig_exact(&m, TestKind::B, r_p);
    for eps in [0.01, 0.05, 0.2] {
        let (reig, _) = discrete_reig_grid(&m, TestKind::B, r_p, eps, &grid);
        let (truth, _) = discrete_true_reig_grid(&m, TestKind::B, r_p, eps, &grid);
        let violation = (reig - eig).max(truth - reig).max(reig - truth - eps);
        out.push(at_most(&format!("sandwich_eps_{eps}"), violation, 0.0));
    }
    let gap = |eps: f64| {
        discrete_reig_grid(&m, TestKind::B, r_p, eps, &grid).0 - discrete_true_reig_grid(&m, TestKind::B, r_p, eps, &grid).0
    };
    let ratio = gap(0.01) / gap(0.02);
    out.push(Check {
        check: "sandwich_gap_ratio_eps_0.02".into(),
        kind: "info",
        value: ratio,
        reference: 0.25,
        tolerance: 0.1,
        pass: (0.15..=0.35).contains(&ratio),
    });

    for h in [1e-2, 1e-3, 1e-4] {
        let slope = tangency_slope(&m, TestKind::B, 0.3, h).abs();
        out.push(at_most(&format!("tangency_slope_h_{h}"), slope, 10.0 * h));
    }

    let (mut concavity, mut dpi) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for test in [TestKind::A, TestKind::B] {
        for &r_p in &[0.2, 0.5, 0.8] {
            for k in 1..1000 {
                let r_q = k as f64 / 1000.0;
                let i = discrete_eig_exact(&m, test, r_q);
                let aff = discrete_iaff_exact(&m, test, r_q, r_p);
                concavity = concavity.max(i - aff);
                dpi = dpi.max((aff - i).abs() - bernoulli_kl(r_q, r_p));
            }
        }
    }
    out.push(at_most("affine_upper_bound_violation", concavity, 1e-15));
    out.push(at_most("data_processing_violation", dpi, 1e-15));
    out
}

fn ab_checks() -> Vec<Check> {
    let m = ABTestModel::perturbed();
    let cov = vec![vec![m.prior_cov[0], 0.0], vec![0.0, m.prior_cov[1]]];
    let mut worst: f64 = 0.0;
    for n_a in m.design_grid() {
        let x: Vec<Vec<f64>> = m.design_matrix(n_a).expect("grid design").iter().map(|r| r.to_vec()).collect();
        let det = linear_gaussian_eig(&cov, &x).unwrap_or(f64::NAN);
        worst = worst.max((det - m.closed_form_eig(n_a)).abs());
    }
    let reference = ABTestModel::reference();
    vec![
        at_most("ab_linear_gaussian_vs_closed_form", worst, 1e-12),
        check("ab_eig_n_a_10", reference.closed_form_eig(10), 0.5 * 1001f64.ln(), 1e-12),
        check(
            "ab_prior_shift_kl",
            gaussian_kl(&m.prior_mean, &reference.prior_mean, &m.prior_cov).unwrap_or(f64::NAN),
            4.46 * 4.46 / 200.0,
            1e-12,
        ),
    ]
}

fn pk_checks() -> Vec<Check> {
    let (p, r) = (PKModel::perturbed(), PKModel::reference());
    vec![check("pk_prior_shift_kl", gaussian_kl(&p.prior_location, &r.prior_location, &p.prior_cov).unwrap_or(f64::NAN), 0.1, 1e-12)]
}

fn preference_checks() -> Vec<Check> {
    let (p, r) = (PreferenceModel::perturbed(), PreferenceModel::reference());
    let kl = gaussian_kl(&[p.prior_mean], &[r.prior_mean], &[p.prior_sd * p.prior_sd]).unwrap_or(f64::NAN);
    vec![check("preference_prior_shift_kl", kl, 7.35 * 7.35 / 800.0, 1e-12)]
}

pub fn oracle_report(opts: &ReportOptions) -> Result<Vec<Check>> {
    if opts.models.is_empty() {
        return Err(config_error("no models selected for the oracle report"));
    }
    let mut out = Vec::new();
    for model in &opts.models {
        out.extend(match model {
            ModelName::Diagnostic => diagnostic_checks(opts),
            ModelName::Ab => ab_checks(),
            ModelName::Pk => pk_checks(),
            ModelName::Preference => preference_checks(),
        });
    }
    Ok(out)
}

/// `true` when every gating check passed.
pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().filter(|c| c.kind == "check").all(|c| c.pass)
}

pub fn write_checks<W: Write>(writer: W, checks: &[Check]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["check", "kind", "value", "reference", "tolerance", "pass"])?;
    for c in checks {
        w.write_record([
            c.check.clone(),
            c.kind.to_string(),
            format_sig(c.value),
            format_sig(c.reference),
            format_sig(c.tolerance),
            c.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_changes_finds_roots() {
        let roots = sign_changes(|x| (x - 0.3) * (x - 0.7), 100);
        assert_eq!(roots.len(), 2, "{roots:?}");
        assert_eq!(sign_changes(|x| x - 0.5, 10), vec![0.5]);
        assert!((roots[0] - 0.3).abs() < 1e-12 && (roots[1] - 0.7).abs() < 1e-12);
        assert!(sign_changes(|x| x + 1.0, 100).is_empty());
    }

    #[test]
    fn info_rows_do_not_gate() {
        let mut rows = vec![check("a", 1.0, 1.0, 0.0)];
        rows.push(Check { kind: "info", pass: false, ..check("b", 2.0, 1.0, 0.0) });
        assert!(all_pass(&rows));
        rows.push(at_most("c", 2.0, 1.0));
        assert!(!all_pass(&rows));
    }

    #[test]
    fn default_report_passes() {
        let rows = oracle_report(&ReportOptions::default()).unwrap();
        assert!(all_pass(&rows), "{rows:?}");
        assert!(oracle_report(&ReportOptions { models: vec![], ..Default::default() }).is_err());
    }
}
