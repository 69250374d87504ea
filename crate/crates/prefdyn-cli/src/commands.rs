use crate::args::*;
use crate::output::{emit_json, fmt_f64, load_matrices, pick, show_vector, write_csv, write_text};
use crate::svg::{line_chart, Series};
use crate::{Failure, Outcome};
use prefdyn::analysis::{
    cycle_strength, dpo_stability, entropy, ipo_stability, jacobian_spectral_radius,
    rps_instability, Family, StabilityReport,
};
use prefdyn::dpo::{dpo_policy, dpo_solve, DpoError, DpoSolverConfig, DpoStabilityInputs};
use prefdyn::dynamics::{run_dynamics, step, DynamicsError, StepContext};
use prefdyn::ingest::{
    build_corpus, classify_corpus, load_instances, noisy_realization, MatrixRecord, NoiseConfig,
};
use prefdyn::ipo::ipo_solve;
use prefdyn::model::{DynamicsConfig, PreferenceMatrix, Role, SimplexVector, SolverKind};
use prefdyn::sampling_design::{
    certificate_margin, condorcet_top_sampling, find_order_preserving_sampling, smith_top_sampling,
    SamplingDesign,
};
use prefdyn::structure::{classify, StructureError};
use prefdyn::sweep::{run_sweep, Execution, SweepSpec};
use serde::Serialize;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn dynamics_failure(e: DynamicsError) -> Failure {
    match e {
        DynamicsError::Model(m) => Failure::data(m),
        other => Failure::numeric(other),
    }
}

fn dpo_config(max_iter: Option<usize>) -> Result<DpoSolverConfig, Failure> {
    let mut cfg = DpoSolverConfig::default();
    if let Some(n) = max_iter {
        if n == 0 {
            return Err(Failure::Usage("--dpo-max-iter must be at least 1".into()));
        }
        cfg.max_iter = n;
    }
    Ok(cfg)
}

fn simplex_or_uniform(
    v: Option<Vec<f64>>,
    k: usize,
    role: Role,
    flag: &str,
) -> Result<SimplexVector, Failure> {
    match v {
        None => Ok(SimplexVector::uniform(k, role)),
        Some(w) if w.len() != k => Err(Failure::Usage(format!(
            "--{flag} has {} entries, matrix has {k}",
            w.len()
        ))),
        Some(w) => {
            SimplexVector::new(w, role).map_err(|e| Failure::Usage(format!("--{flag}: {e}")))
        }
    }
}

fn beta_from(beta: Option<f64>, beta_lambda: Option<f64>, lambda: f64) -> Result<f64, Failure> {
    match (beta, beta_lambda) {
        (Some(b), _) => Ok(b),
        (None, Some(bl)) if lambda > 0.0 => Ok(bl / lambda),
        (None, Some(_)) => Err(Failure::Usage(
            "--beta-lambda needs a positive --lambda".into(),
        )),
        (None, None) => Err(Failure::Usage("missing --beta or --beta-lambda".into())),
    }
}

pub fn ingest(a: IngestArgs) -> Outcome {
    let input = require(a.input, "input")?;
    let out = require(a.out, "out")?;
    let k = a.k.unwrap_or(4);
    let corpus = load_instances(&input, k).map_err(Failure::data)?;
    let built = build_corpus(
        &corpus.instances,
        k,
        a.seed.unwrap_or(0),
        Execution::default(),
    )
    .map_err(Failure::data)?;
    let records: Vec<MatrixRecord> = built.iter().map(MatrixRecord::from).collect();
    let matrices: Vec<PreferenceMatrix> = built.into_iter().map(|b| b.matrix).collect();
    let part = classify_corpus(&matrices);
    emit_json(&records, Some(&out))?;
    println!("matrices: {}", records.len());
    println!(
        "skipped (fewer than {k} responses): {}",
        corpus.dropped.len()
    );
    println!("st: {}", part.st.len());
    println!("cyclic: {}", part.cyclic.len());
    println!("excluded: {}", part.excluded.len());
    Ok(())
}

#[derive(Serialize)]
struct ClassifyEntry {
    name: String,
    #[serde(flatten)]
    report: prefdyn::structure::StructureReport,
}

pub fn classify_matrices(a: ClassifyArgs) -> Outcome {
    let all = load_matrices(&require(a.matrix, "matrix")?)?;
    let mut entries = Vec::with_capacity(all.len());
    for m in all {
        let report = match classify(&m.matrix) {
            Ok(r) => r,
            Err(StructureError::Unclassifiable(r)) => *r,
            Err(e) => return Err(Failure::numeric(e)),
        };
        eprintln!("{}: {}", m.name, report.class.label());
        entries.push(ClassifyEntry {
            name: m.name,
            report,
        });
    }
    emit_json(&entries, a.out.as_deref())
}

#[derive(Serialize)]
struct SolveReport {
    solver: SolverKind,
    policy: SimplexVector,
    theta: Vec<f64>,
    foc_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
}

pub fn solve(a: SolveArgs) -> Outcome {
    let m = pick(load_matrices(&require(a.matrix, "matrix")?)?, a.index)?;
    let k = m.matrix.k();
    let mu = simplex_or_uniform(a.mu, k, Role::Sampling, "mu")?;
    let pi_ref = simplex_or_uniform(a.pi_ref, k, Role::Reference, "pi-ref")?;
    let beta = a.beta.unwrap_or(1.0);
    let solver: SolverKind = a.solver.unwrap_or(SolverArg::Ipo).into();
    let report = match solver {
        SolverKind::Ipo => {
            let s = ipo_solve(&m.matrix, &mu, &pi_ref, beta).map_err(usage)?;
            SolveReport {
                solver,
                theta: s.theta.as_slice().to_vec(),
                policy: s.policy,
                foc_residual: s.foc_residual,
                objective: Some(s.objective),
                iterations: None,
            }
        }
        SolverKind::Dpo => {
            let s =
                dpo_solve(&m.matrix, &mu, &dpo_config(a.dpo_max_iter)?).map_err(|e| match e {
                    DpoError::Model(m) => usage(m),
                    other => Failure::numeric(other),
                })?;
            let policy = dpo_policy(&s.theta, &pi_ref, beta).map_err(usage)?;
            SolveReport {
                solver,
                policy,
                theta: s.theta.as_slice().to_vec(),
                foc_residual: s.foc_residual,
                objective: None,
                iterations: Some(s.iterations),
            }
        }
    };
    eprintln!("policy: [{}]", show_vector(report.policy.as_slice()));
    emit_json(&report, a.out.as_deref())
}

pub fn simulate(a: SimulateArgs) -> Outcome {
    let m = pick(load_matrices(&require(a.matrix, "matrix")?)?, a.index)?;
    let out = require(a.out, "out")?;
    let alpha = require(a.alpha, "alpha")?;
    let lambda = a.lambda.unwrap_or(0.5);
    let beta = beta_from(a.beta, a.beta_lambda, lambda)?;
    let seed = a.seed.unwrap_or(0);
    let p = match a.noise_n {
        Some(n) => noisy_realization(&m.matrix, NoiseConfig { n, seed }).map_err(usage)?,
        None => m.matrix,
    };
    let k = p.k();
    let config = DynamicsConfig {
        horizon: a.iters.unwrap_or(3000),
        tolerance: a.tolerance.unwrap_or(1e-12),
        ..DynamicsConfig::uniform(
            k,
            alpha,
            beta,
            lambda,
            a.solver.unwrap_or(SolverArg::Ipo).into(),
        )
    };
    config.validate().map_err(usage)?;
    let ctx =
        StepContext::with_dpo(config, p, dpo_config(a.dpo_max_iter)?).map_err(dynamics_failure)?;
    let traj = run_dynamics(&ctx).map_err(dynamics_failure)?;

    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("pi_{i}")));
    header.push("entropy".into());
    let rows = traj.policies.iter().enumerate().map(|(t, pi)| {
        let mut r = vec![(t + 1).to_string()];
        r.extend(pi.as_slice().iter().map(|&x| fmt_f64(x)));
        r.push(fmt_f64(entropy(pi)));
        r
    });
    write_csv(&out, &header, rows)?;
    if let Some(svg) = a.svg {
        let xs: Vec<f64> = (1..=traj.len()).map(|t| t as f64).collect();
        let series: Vec<Series> = (0..k)
            .map(|i| Series {
                label: format!("pi_{}", i + 1),
                ys: traj.policies.iter().map(|p| p[i]).collect(),
            })
            .collect();
        write_text(
            &svg,
            &line_chart(
                &format!("{} (alpha={alpha}, beta={beta}, lambda={lambda})", m.name),
                "t",
                &xs,
                &series,
            ),
        )?;
    }
    println!("steps: {}", traj.len());
    match traj.converged_at {
        Some(i) => println!("converged: yes (from t = {})", i + 1),
        None => println!("converged: no"),
    }
    if let Some(t) = traj.underflow_at {
        println!("underflow: truncated at t = {}", t + 1);
    }
    println!("terminal policy: [{}]", show_vector(traj.last().as_slice()));
    println!("terminal entropy: {:.6}", entropy(traj.last()));
    println!("cycle strength: {:.6e}", cycle_strength(&traj, 1.0 / 3.0));
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Outcome {
    let all = load_matrices(&require(a.matrices, "matrices")?)?;
    let out = require(a.out, "out")?;
    let metric = a.metric.unwrap_or(MetricArg::CycleStrength);
    let filter = a.class.unwrap_or(match metric {
        MetricArg::Entropy => ClassFilter::St,
        MetricArg::CycleStrength => ClassFilter::Cyclic,
    });
    let total = all.len();
    let matrices: Vec<PreferenceMatrix> = all
        .into_iter()
        .map(|m| m.matrix)
        .filter(|p| match filter {
            ClassFilter::All => true,
            ClassFilter::St => matches!(classify(p), Ok(r) if r.class.is_st()),
            ClassFilter::Cyclic => matches!(classify(p), Ok(r) if r.cycle.is_some()),
        })
        .collect();
    if matrices.is_empty() {
        return Err(Failure::data(anyhow::anyhow!(
            "no {filter:?} matrices among {total} in the collection"
        )));
    }
    let mut spec = SweepSpec::new(
        require(a.alphas, "alphas")?,
        require(a.beta_lambdas, "beta-lambdas")?,
        metric.into(),
    );
    spec.lambda = a.lambda.unwrap_or(spec.lambda);
    spec.horizon = a.iters.unwrap_or(spec.horizon);
    spec.tolerance = a.tolerance.unwrap_or(spec.tolerance);
    spec.burn_in = a.burn_in.unwrap_or(spec.burn_in);
    spec.solver = a.solver.unwrap_or(SolverArg::Ipo).into();
    spec.realizations = a.realizations.unwrap_or(spec.realizations);
    spec.noise = a.noise_n.map(|n| NoiseConfig {
        n,
        seed: a.seed.unwrap_or(0),
    });
    let exec = if a.sequential.unwrap_or(false) {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = run_sweep(&spec, &matrices, exec).map_err(usage)?;

    let header: Vec<String> = [
        "alpha",
        "beta_lambda",
        "metric_mean",
        "metric_std",
        "n",
        "nonconverged",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = result.cells.iter().map(|c| {
        vec![
            fmt_f64(c.alpha),
            fmt_f64(c.beta_lambda),
            fmt_f64(c.mean),
            fmt_f64(c.std),
            c.n.to_string(),
            c.nonconverged.to_string(),
        ]
    });
    write_csv(&out, &header, rows)?;
    if let Some(svg) = a.svg {
        let series: Vec<Series> = spec
            .alphas
            .iter()
            .enumerate()
            .map(|(i, alpha)| Series {
                label: format!("alpha={alpha}"),
                ys: result.cells[i * spec.beta_lambdas.len()..(i + 1) * spec.beta_lambdas.len()]
                    .iter()
                    .map(|c| c.mean)
                    .collect(),
            })
            .collect();
        write_text(
            &svg,
            &line_chart(
                &format!("{metric:?} mean"),
                "beta*lambda",
                &spec.beta_lambdas,
                &series,
            ),
        )?;
    }
    let failed: usize = result.cells.iter().map(|c| c.failed).sum();
    println!(
        "cells: {}, instances per cell: {}, failed runs: {failed}",
        result.cells.len(),
        result.cells[0].n
    );
    Ok(())
}

/// `a` when `p` is RPS(a): a 3-cycle with equal margins.
fn rps_parameter(p: &PreferenceMatrix) -> Option<f64> {
    if p.k() != 3 {
        return None;
    }
    let a = p.get(0, 1) - 0.5;
    let same = (p.get(1, 2) - 0.5 - a).abs() < 1e-12 && (p.get(2, 0) - 0.5 - a).abs() < 1e-12;
    (same && a.abs() > 0.0).then_some(a.abs())
}

pub fn stability(a: StabilityArgs) -> Outcome {
    let m = pick(load_matrices(&require(a.matrix, "matrix")?)?, a.index)?;
    let p = m.matrix;
    let k = p.k();
    let alpha = require(a.alpha, "alpha")?;
    let lambda = a.lambda.unwrap_or(0.5);
    let beta = beta_from(a.beta, a.beta_lambda, lambda)?;
    let family: Family = a.family.unwrap_or(SolverArg::Ipo).into();
    let solver = match family {
        Family::Ipo => SolverKind::Ipo,
        Family::Dpo => SolverKind::Dpo,
    };
    let config = DynamicsConfig::uniform(k, alpha, beta, lambda, solver);
    config.validate().map_err(usage)?;
    let ctx = StepContext::new(config.clone(), p.clone()).map_err(dynamics_failure)?;

    let ipo = ipo_stability(&p, alpha, beta, lambda);
    let rps = rps_parameter(&p).map(|ra| rps_instability(ra, alpha, beta, lambda, family));
    let (dpo, dpo_inputs) = match family {
        Family::Ipo => (None, None),
        Family::Dpo if lambda < 1.0 => {
            let inputs = match a.dpo_bound {
                Some(b) => DpoStabilityInputs::new(b, lambda, &config.pi_0),
                None => DpoStabilityInputs::estimate(
                    &p,
                    lambda,
                    &config.pi_0,
                    a.dpo_samples.unwrap_or(200),
                    a.seed.unwrap_or(0),
                    &DpoSolverConfig::default(),
                )
                .map_err(Failure::numeric)?,
            };
            (
                Some(dpo_stability(alpha, beta, lambda, &inputs).map_err(usage)?),
                Some(inputs),
            )
        }
        Family::Dpo => (None, None),
    };

    let fixed_point = match a.fixed_point {
        Some(w) => Some(simplex_or_uniform(Some(w), k, Role::Policy, "fixed-point")?),
        None => find_fixed_point(&ctx),
    };
    let jacobian_radius = match &fixed_point {
        Some(fp) => match jacobian_spectral_radius(|pi| step(pi, &ctx), fp) {
            Ok(r) => Some(r),
            Err(e) => {
                eprintln!("jacobian: {e}");
                None
            }
        },
        None => None,
    };
    let report = StabilityReport {
        ipo,
        dpo,
        dpo_inputs,
        rps,
        jacobian_radius,
        fixed_point,
    };

    let verdict = |s: bool| if s { "stable" } else { "not certified" };
    eprintln!(
        "ipo margin L = {:.5} ({})",
        ipo.margin,
        verdict(ipo.margin < 1.0)
    );
    eprintln!(
        "sparse margin = {:.5} with d = {} ({})",
        ipo.sparse_margin,
        ipo.row_support,
        verdict(ipo.sparse_margin < 1.0)
    );
    if let Some(d) = dpo {
        eprintln!("dpo margin = {:.5} ({})", d.margin, verdict(d.stable));
    }
    if let Some(r) = rps {
        eprintln!(
            "rps predicate = {:.5} ({})",
            r.value,
            if r.unstable { "unstable" } else { "stable" }
        );
    }
    if let Some(r) = jacobian_radius {
        eprintln!("jacobian spectral radius = {r:.6}");
    }
    emit_json(&report, a.out.as_deref())
}

/// Uniform if the step map fixes it, else the limit of a converged run.
fn find_fixed_point(ctx: &StepContext) -> Option<SimplexVector> {
    let u = SimplexVector::uniform(ctx.config.k(), Role::Policy);
    if step(&u, ctx).ok()?.max_abs_diff(&u) <= 1e-10 {
        return Some(u);
    }
    let traj = run_dynamics(ctx).ok()?;
    traj.converged_at.map(|_| traj.last().clone())
}

#[derive(Serialize)]
struct DesignOutcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    design: Option<SamplingDesign>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

#[derive(Serialize)]
struct AxiomReport {
    structure: prefdyn::structure::StructureReport,
    condorcet_top: DesignOutcome,
    smith_top: DesignOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    order_preserving: Option<SimplexVector>,
    notes: Vec<String>,
}

fn design_outcome(
    p: &PreferenceMatrix,
    r: Result<SamplingDesign, prefdyn::sampling_design::SamplingError>,
) -> DesignOutcome {
    match r {
        Ok(d) => {
            let certificate = certificate_margin(p, &d).ok();
            DesignOutcome {
                design: Some(d),
                certificate,
                failure: None,
            }
        }
        Err(e) => DesignOutcome {
            design: None,
            certificate: None,
            failure: Some(e.to_string()),
        },
    }
}

pub fn axioms(a: AxiomsArgs) -> Outcome {
    let p = pick(load_matrices(&require(a.matrix, "matrix")?)?, a.index)?.matrix;
    let step = a.grid_step.unwrap_or(0.02);
    if !(step > 0.0 && step <= 0.5) {
        return Err(Failure::Usage(format!(
            "--grid-step {step} must lie in (0, 0.5]"
        )));
    }
    let structure = match classify(&p) {
        Ok(r) => r,
        Err(StructureError::Unclassifiable(r)) => *r,
        Err(e) => return Err(Failure::numeric(e)),
    };
    let mut notes = Vec::new();
    let condorcet_top = design_outcome(&p, condorcet_top_sampling(&p));
    let smith_top = design_outcome(&p, smith_top_sampling(&p));
    let label = |v: &[usize]| {
        v.iter()
            .map(|i| (i + 1).to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    match structure.condorcet_winner {
        Some(w) => notes.push(format!("Condorcet winner: response {}", w + 1)),
        None => notes.push("no Condorcet winner".into()),
    }
    notes.push(format!("Smith set: {{{}}}", label(&structure.smith_set)));
    let mut order_preserving = None;
    match &structure.order {
        Some(order) => {
            match find_order_preserving_sampling(&p, order, step).map_err(Failure::numeric)? {
                Some(mu) => {
                    notes.push(format!("order-preserving mu found on grid (step {step})"));
                    order_preserving = Some(mu);
                }
                None => notes.push(format!(
                    "no order-preserving mu found on grid (step {step})"
                )),
            }
        }
        None => notes.push("no transitive order; order preservation not applicable".into()),
    }
    for n in &notes {
        eprintln!("{n}");
    }
    emit_json(
        &AxiomReport {
            structure,
            condorcet_top,
            smith_top,
            order_preserving,
            notes,
        },
        a.out.as_deref(),
    )
}
