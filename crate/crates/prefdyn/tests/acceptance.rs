//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (no libtest harness) so the summary lines always
//! reach the terminal. Criteria listed in `DOCUMENTED_GAPS` are evaluated at
//! full strength and reported, but do not fail the run unless
//! `ACCEPTANCE_STRICT=1` is set.

mod common;

use common::*;
use prefdyn::analysis::{
    collapse_analysis, cycle_strength, dpo_stability, entropy, ipo_stability,
    jacobian_spectral_radius, rps_instability, Family,
};
use prefdyn::dpo::{dpo_loss_grad, dpo_solve, DpoSolverConfig, DpoStabilityInputs};
use prefdyn::dynamics::{run_dynamics, step, StepContext};
use prefdyn::ingest::{
    build_corpus, classify_corpus, load_instances, noisy_realization, MatrixRecord, NoiseConfig,
};
use prefdyn::ipo::ipo_solve;
use prefdyn::model::{
    bt_matrix, center, rps, DynamicsConfig, LogitVector, PreferenceMatrix, Role, SimplexVector,
    SolverKind,
};
use prefdyn::sampling_design::{
    certificate_margin, condorcet_top_sampling, demoted_winner_matrix,
    find_order_preserving_sampling, fragile_order_matrix, smith_top_sampling,
};
use prefdyn::structure::{classify, hts_check, smith_set, StructureClass};
use prefdyn::sweep::{run_sweep, Execution, Metric, SweepSpec};
use prefdyn::synth::{
    random_hts_scores, random_simplex, random_smith_instance, random_st_matrix,
    random_winner_instance, synthetic_corpus,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

/// Criteria that cannot pass as written; see the project notes.
const DOCUMENTED_GAPS: &[usize] = &[3, 6];

#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn within(&mut self, elapsed: Duration, limit_s: f64) {
        self.note(format!("{:.2}s", elapsed.as_secs_f64()));
        self.check(
            elapsed.as_secs_f64() < limit_s,
            format!("runtime {:.1}s exceeds {limit_s}s", elapsed.as_secs_f64()),
        );
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, k: usize) -> PreferenceMatrix {
    let u: Vec<f64> = (0..k * k).map(|_| rng.random_range(0.02..0.98)).collect();
    PreferenceMatrix::from_upper(k, |i, j| u[i * k + j]).unwrap()
}

fn policy_run(
    p: &PreferenceMatrix,
    alpha: f64,
    beta: f64,
    lambda: f64,
    solver: SolverKind,
    pi_1: Option<Vec<f64>>,
) -> prefdyn::model::Trajectory {
    let mut cfg = DynamicsConfig::uniform(p.k(), alpha, beta, lambda, solver);
    if let Some(w) = pi_1 {
        cfg.pi_1 = SimplexVector::new(w, Role::Policy).unwrap();
    }
    run_dynamics(&StepContext::new(cfg, p.clone()).unwrap()).unwrap()
}

fn ipo_oracle_equivalence() -> Checks {
    let mut c = Checks::default();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_gap, mut worst_foc) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let k = rng.random_range(2..=6);
        let beta = rng.random_range(0.1..10.0);
        let p = random_matrix(&mut rng, k);
        let mu = random_simplex(&mut rng, k, Role::Sampling);
        let pi_ref = random_simplex(&mut rng, k, Role::Reference);
        let sol = ipo_solve(&p, &mu, &pi_ref, beta).unwrap();
        let (x, _) = ipo_oracle(&p.to_rows(), mu.as_slice(), pi_ref.as_slice(), beta);
        worst_gap = worst_gap.max(inf_norm_diff(&x, sol.policy.as_slice()));
        worst_foc = worst_foc.max(sol.foc_residual);
    }
    c.note(format!(
        "max |oracle - solve| = {worst_gap:.2e}, max FOC = {worst_foc:.2e}"
    ));
    c.check(worst_gap <= 1e-6, "oracle mismatch above 1e-6");
    c.check(worst_foc <= 1e-10, "FOC residual above 1e-10");
    c.within(start.elapsed(), 10.0);
    c
}

fn dpo_solver() -> Checks {
    let mut c = Checks::default();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = DpoSolverConfig::default();
    let (mut worst_foc, mut worst_rel) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let k = rng.random_range(2..=6);
        let p = random_matrix(&mut rng, k);
        let mu = random_simplex(&mut rng, k, Role::Sampling);
        let sol = dpo_solve(&p, &mu, &cfg).unwrap();
        worst_foc = worst_foc.max(sol.foc_residual);

        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let theta = LogitVector::from_raw(&raw).unwrap();
        let (_, g) = dpo_loss_grad(&theta, &p, &mu).unwrap();
        let rows = p.to_rows();
        let h = 1e-5;
        let fd: Vec<f64> = (0..k)
            .map(|i| {
                let mut a = theta.as_slice().to_vec();
                let mut b = a.clone();
                a[i] += h;
                b[i] -= h;
                (dpo_loss(&rows, mu.as_slice(), &a) - dpo_loss(&rows, mu.as_slice(), &b))
                    / (2.0 * h)
            })
            .collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let err = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        worst_rel = worst_rel.max(err / norm.max(1e-300));
    }
    c.check(
        worst_foc <= 1e-10,
        format!("FOC residual {worst_foc:.2e} above 1e-10"),
    );
    c.check(
        worst_rel <= 1e-6,
        format!("gradient relative error {worst_rel:.2e} above 1e-6"),
    );

    let r: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
    let bt = bt_matrix(&r).unwrap();
    let target = center(&r);
    let mut bt_err = 0.0f64;
    for _ in 0..10 {
        let mu = random_simplex(&mut rng, 5, Role::Sampling);
        bt_err = bt_err.max(inf_norm_diff(
            dpo_solve(&bt, &mu, &cfg).unwrap().theta.as_slice(),
            &target,
        ));
    }
    c.check(bt_err <= 1e-8, format!("BT theta error {bt_err:.2e}"));

    let p2 = demoted_winner_matrix(&SimplexVector::uniform(3, Role::Sampling)).unwrap();
    let thetas: Vec<Vec<f64>> = (0..10)
        .map(|_| {
            dpo_solve(&p2, &random_simplex(&mut rng, 3, Role::Sampling), &cfg)
                .unwrap()
                .theta
                .as_slice()
                .to_vec()
        })
        .collect();
    let spread = (0..3)
        .map(|i| {
            let col = thetas.iter().map(|t| t[i]);
            col.clone().fold(f64::NEG_INFINITY, f64::max) - col.fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    c.check(
        spread > 1e-3,
        format!("non-BT theta spread {spread:.2e} not above 1e-3"),
    );
    c.note(format!(
        "FOC {worst_foc:.1e}, grad rel {worst_rel:.1e}, BT {bt_err:.1e}, non-BT spread {spread:.3}"
    ));
    c.within(start.elapsed(), 30.0);
    c
}

fn axioms() -> Checks {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut mus = vec![SimplexVector::uniform(3, Role::Sampling)];
    mus.extend((0..19).map(|_| random_simplex(&mut rng, 3, Role::Sampling)));
    let uniform_ref = SimplexVector::uniform(3, Role::Reference);
    for (n, mu) in mus.iter().enumerate() {
        let p = demoted_winner_matrix(mu).unwrap();
        let pol = ipo_solve(&p, mu, &uniform_ref, 1.0).unwrap().policy;
        c.check(
            smith_set(&p).unwrap() == [0] && pol[1] > pol[0],
            format!("two-winner construction #{n} does not demote the winner"),
        );
        if n == 0 {
            let pm = p.mul_vec(mu.as_slice());
            c.check(
                ((pm[1] - pm[0]) - 1.0 / 18.0).abs() <= 1e-12,
                "uniform margin is not 1/18",
            );
        }
    }

    let (mut winners, mut smiths) = (0, 0);
    for n in 0..50 {
        let k = 3 + n % 4;
        let (p, _) = random_winner_instance(&mut rng, k).unwrap();
        let ok = condorcet_top_sampling(&p)
            .ok()
            .and_then(|d| certificate_margin(&p, &d).ok())
            .is_some_and(|m| m > 0.0);
        winners += ok as usize;
        let q = random_smith_instance(&mut rng, k).unwrap();
        let oracle = brute_force_smith(&q.to_rows());
        let ok = smith_set(&q).unwrap() == oracle
            && smith_top_sampling(&q)
                .ok()
                .and_then(|d| certificate_margin(&q, &d).ok())
                .is_some_and(|m| m > 0.0);
        smiths += ok as usize;
    }
    c.check(
        winners == 50,
        format!("Condorcet-top designs certified on {winners}/50"),
    );
    c.check(
        smiths == 50,
        format!("Smith-top designs certified on {smiths}/50"),
    );

    let found =
        find_order_preserving_sampling(&fragile_order_matrix(), &[0, 1, 2, 3], 0.02).unwrap();
    if let Some(mu) = &found {
        c.check(
            false,
            format!("grid search found order-preserving mu {:?}", mu.as_slice()),
        );
    }
    c.note(format!(
        "winner designs {winners}/50, Smith designs {smiths}/50"
    ));
    c
}

fn order_and_gaps() -> Checks {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0;
    for _ in 0..100 {
        let k = rng.random_range(3..=6);
        let p = random_st_matrix(&mut rng, k).unwrap();
        let order = classify(&p).unwrap().order.unwrap();
        for _ in 0..10 {
            let mu = random_simplex(&mut rng, k, Role::Sampling);
            let beta = rng.random_range(0.1..10.0);
            let pol = ipo_solve(&p, &mu, &SimplexVector::uniform(k, Role::Reference), beta)
                .unwrap()
                .policy;
            if order
                .windows(2)
                .any(|w| pol[w[0]] < pol[w[1]] * (1.0 - 1e-12))
            {
                violations += 1;
            }
        }
    }
    c.check(violations == 0, format!("{violations} order violations"));

    let (mut gap_fail, mut pairs) = (0, 0);
    for _ in 0..20 {
        let spec = random_hts_scores(&mut rng, 40, 3);
        assert!(hts_check(&spec).holds);
        let p = bt_matrix(spec.scores()).unwrap();
        let pi_ref = SimplexVector::uniform(40, Role::Reference);
        for _ in 0..10 {
            let base = random_simplex(&mut rng, 40, Role::Sampling);
            let mut d: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
            d.sort_by(|a, b| b.total_cmp(a));
            let mean = d.iter().sum::<f64>() / 40.0;
            d.iter_mut().for_each(|x| *x -= mean);
            let room = (0..40)
                .filter(|&i| d[i] < 0.0)
                .map(|i| base[i] / -d[i])
                .fold(f64::INFINITY, f64::min);
            let s = room * rng.random_range(0.1..0.9);
            let shifted: Vec<f64> = (0..40).map(|i| base[i] + s * d[i]).collect();
            let mu = SimplexVector::normalized(shifted, Role::Sampling).unwrap();
            let th = ipo_solve(&p, &mu, &pi_ref, 1.0).unwrap().theta;
            let th_base = ipo_solve(&p, &base, &pi_ref, 1.0).unwrap().theta;
            for i in 0..3 {
                for j in (i + 1)..3 {
                    pairs += 1;
                    let (g, g0) = (th[i] - th[j], th_base[i] - th_base[j]);
                    if !(g > g0 && g0 > 0.0) {
                        gap_fail += 1;
                    }
                }
            }
        }
    }
    c.check(
        gap_fail == 0,
        format!("{gap_fail}/{pairs} head-pair gaps not strictly larger"),
    );
    c.note(format!(
        "1000 ST solves order-preserved, {pairs} head-pair gap comparisons"
    ));
    c
}

fn max_logit_ratio(traj: &prefdyn::model::Trajectory) -> f64 {
    let logits: Vec<Vec<f64>> = traj
        .policies
        .iter()
        .map(|p| centered_log(p.as_slice()))
        .collect();
    let diffs: Vec<f64> = logits
        .windows(2)
        .map(|w| inf_norm_diff(&w[1], &w[0]))
        .collect();
    diffs
        .windows(2)
        .filter(|w| w[0] > 1e-10)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

fn min_distance_after_burn_in(traj: &prefdyn::model::Trajectory) -> f64 {
    let u = SimplexVector::uniform(traj.config.k(), Role::Policy);
    traj.policies[traj.len() / 3..]
        .iter()
        .map(|p| p.max_abs_diff(&u))
        .fold(f64::INFINITY, f64::min)
}

fn rps_dichotomy() -> Checks {
    let mut c = Checks::default();
    let off = Some(vec![0.5, 0.3, 0.2]);
    let near = Some(vec![0.34, 0.33, 0.33]);
    let u = SimplexVector::uniform(3, Role::Policy);

    let p = rps(0.3).unwrap();
    let l = ipo_stability(&p, 0.2, 1.0, 0.5).margin;
    let t = policy_run(&p, 0.2, 1.0, 0.5, SolverKind::Ipo, off.clone());
    let ratio = max_logit_ratio(&t);
    c.check(
        t.last().max_abs_diff(&u) <= 1e-8,
        "contracting run misses uniform",
    );
    c.check(
        ratio <= l + 0.02,
        format!("difference ratio {ratio:.3} above {:.3}", l + 0.02),
    );

    let p = rps(0.4).unwrap();
    let t = policy_run(&p, 0.8, 10.0, 0.5, SolverKind::Ipo, near.clone());
    let dist = min_distance_after_burn_in(&t);
    c.check(t.converged_at.is_none(), "unstable run converged");
    c.check(
        dist >= 1e-4,
        format!("unstable run within {dist:.1e} of uniform"),
    );
    c.note(format!(
        "L = {l:.4}, ratio {ratio:.4}; unstable run min distance {dist:.3}"
    ));

    let mut worst = 0.0f64;
    for (a, alpha, beta, lambda) in [
        (0.3, 0.2, 1.0, 0.5),
        (0.4, 0.8, 10.0, 0.5),
        (0.1, 0.5, 2.0, 0.8),
        (0.45, 0.9, 4.0, 0.3),
        (0.25, 0.0, 6.0, 1.0),
    ] {
        let ctx = StepContext::new(
            DynamicsConfig::uniform(3, alpha, beta, lambda, SolverKind::Ipo),
            rps(a).unwrap(),
        )
        .unwrap();
        let rho = jacobian_spectral_radius(|pi| step(pi, &ctx), &u).unwrap();
        let expected = (alpha * alpha + a * a * (beta * lambda).powi(2) / 3.0).sqrt();
        worst = worst.max((rho - expected).abs());
    }
    c.check(worst <= 1e-4, format!("Jacobian radius off by {worst:.2e}"));

    let p = rps(0.4).unwrap();
    let pred = rps_instability(0.4, 0.8, 10.0, 0.5, Family::Dpo);
    let t = policy_run(&p, 0.8, 10.0, 0.5, SolverKind::Dpo, near);
    let dist = min_distance_after_burn_in(&t);
    c.check(
        pred.unstable && t.converged_at.is_none() && dist >= 1e-4,
        "DPO cycling regime did not cycle",
    );

    let p = rps(0.3).unwrap();
    let cfg = DpoSolverConfig::default();
    let inputs = DpoStabilityInputs::estimate(
        &p,
        0.1,
        &SimplexVector::uniform(3, Role::Anchor),
        200,
        7,
        &cfg,
    )
    .unwrap();
    let margin = dpo_stability(0.1, 0.01, 0.1, &inputs).unwrap();
    let t = policy_run(&p, 0.1, 0.01, 0.1, SolverKind::Dpo, off);
    c.check(
        margin.stable && t.last().max_abs_diff(&u) <= 1e-8,
        "DPO contraction regime did not converge",
    );
    c.note(format!(
        "Jacobian max error {worst:.1e}; DPO predicate {:.2}, DPO margin {:.3}",
        pred.value, margin.margin
    ));
    c
}

fn collapse() -> Checks {
    let mut c = Checks::default();
    let p = bt_matrix(&[1.0, 0.0, -1.0]).unwrap();
    let pi_0 = SimplexVector::uniform(3, Role::Anchor);
    let t = policy_run(&p, 0.5, 40.0, 0.5, SolverKind::Ipo, None);
    let r = collapse_analysis(&p, &pi_0, 0.5, 40.0, 0.5, &t).unwrap();
    c.check(
        (r.delta - 0.5 * 0.612 / 3.0).abs() <= 1e-6,
        format!("delta = {:.7} is not within 1e-6 of 0.102", r.delta),
    );
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let exact = 0.5 / 3.0 * (sig(2.0) - sig(-1.0)).min(sig(1.0) - sig(-2.0));
    c.check(
        (r.delta - exact).abs() <= 1e-12,
        format!(
            "delta {:.12} differs from logistic value {exact:.12}",
            r.delta
        ),
    );
    let threshold = 1.0 - 0.14937;
    let first = t.policies.iter().position(|pi| pi[0] >= threshold);
    let holds = first.is_some_and(|f| t.policies[f..].iter().all(|pi| pi[0] >= threshold));
    c.check(
        holds,
        "alpha = 0.5 run does not reach and hold the collapse level",
    );

    let t1 = policy_run(&p, 1.0, 0.5, 0.5, SolverKind::Ipo, None);
    let r1 = collapse_analysis(&p, &pi_0, 1.0, 0.5, 0.5, &t1).unwrap();
    c.check(
        r1.entropy_decreasing_from.is_some(),
        "alpha = 1 entropy never settles into strict decrease",
    );
    c.check(
        t1.last()[0] >= 0.999 && t1.underflow_at.is_none(),
        "alpha = 1 run does not reach 0.999 cleanly",
    );

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let cfg = DpoSolverConfig::default();
    let (mut solves, mut bad) = (0, 0);
    while solves < 200 {
        let k = rng.random_range(3..=6);
        let q = random_st_matrix(&mut rng, k).unwrap();
        let rep = classify(&q).unwrap();
        if rep.class != StructureClass::StrictlyStronglyTransitive {
            continue;
        }
        let order = rep.order.unwrap();
        let mu = random_simplex(&mut rng, k, Role::Sampling);
        let th = dpo_solve(&q, &mu, &cfg).unwrap().theta;
        for w in order.windows(2) {
            let bound: f64 = 4.0
                * (0..k)
                    .map(|j| mu[j] * (q.get(w[0], j) - q.get(w[1], j)))
                    .sum::<f64>();
            if th[w[0]] - th[w[1]] < bound - 1e-9 {
                bad += 1;
            }
        }
        solves += 1;
    }
    c.check(bad == 0, format!("DPO gap bound violated {bad} times"));
    c.note(format!(
        "delta = {:.7}, eps = {:.5}, collapse from step {}; alpha = 1 top mass {:.6}; {solves} SST DPO solves",
        r.delta,
        r.eps.unwrap_or(f64::NAN),
        first.map_or("never".to_string(), |f| (f + 1).to_string()),
        t1.last()[0]
    ));
    c
}

fn p_st() -> PreferenceMatrix {
    prefdyn::model::validate_preference(&[
        vec![0.5, 0.731, 0.269, 0.5],
        vec![0.269, 0.5, 0.119, 0.269],
        vec![0.731, 0.881, 0.5, 0.731],
        vec![0.5, 0.731, 0.269, 0.5],
    ])
    .unwrap()
}

fn p_cyc() -> PreferenceMatrix {
    prefdyn::model::validate_preference(&[
        vec![0.5, 0.731, 0.269, 0.5],
        vec![0.269, 0.5, 0.731, 0.881],
        vec![0.731, 0.269, 0.5, 0.731],
        vec![0.5, 0.119, 0.269, 0.5],
    ])
    .unwrap()
}

fn figure_trends() -> Checks {
    let mut c = Checks::default();
    let start = Instant::now();
    let cs = |alpha: f64, bl: f64| {
        cycle_strength(
            &policy_run(&p_cyc(), alpha, bl / 0.5, 0.5, SolverKind::Ipo, None),
            1.0 / 3.0,
        )
    };
    let base = cs(0.45, 0.4);
    let (hi_alpha, hi_bl) = (cs(0.9, 0.4), cs(0.45, 8.0));
    c.check(
        hi_alpha > 10.0 * base,
        format!("alpha = 0.9 cycle strength {hi_alpha:.2e} vs baseline {base:.2e}"),
    );
    c.check(
        hi_bl > 10.0 * base,
        format!("large beta*lambda cycle strength {hi_bl:.2e} vs baseline {base:.2e}"),
    );

    let h = |alpha: f64, bl: f64| {
        entropy(policy_run(&p_st(), alpha, bl / 0.5, 0.5, SolverKind::Ipo, None).last())
    };
    let (h0, h_alpha, h_bl) = (h(0.45, 0.4), h(0.95, 0.4), h(0.45, 8.0));
    c.check(
        h_alpha < h0 && h_bl < h0,
        "larger parameters did not lower terminal entropy",
    );

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let corpus = synthetic_corpus(&mut rng, 200, 6, 5);
    let built = build_corpus(&corpus, 4, 77, Execution::Parallel).unwrap();
    let matrices: Vec<PreferenceMatrix> = built.into_iter().map(|b| b.matrix).collect();
    let part = classify_corpus(&matrices);
    let cyclic: Vec<PreferenceMatrix> = part
        .cyclic
        .iter()
        .map(|(i, _)| matrices[*i].clone())
        .collect();
    let st: Vec<PreferenceMatrix> = part.st.iter().map(|(i, _)| matrices[*i].clone()).collect();
    let alphas = vec![0.2, 0.45, 0.7, 0.9];
    let bls = vec![0.4, 1.0, 2.0, 4.0, 8.0];
    let mut worst = (f64::INFINITY, f64::INFINITY);
    for (metric, set, sign) in [
        (Metric::CycleStrength, &cyclic, 1.0),
        (Metric::Entropy, &st, -1.0),
    ] {
        let spec = SweepSpec::new(alphas.clone(), bls.clone(), metric);
        let res = run_sweep(&spec, set, Execution::Parallel).unwrap();
        for (a, _) in alphas.iter().enumerate() {
            let means: Vec<f64> = res.cells[a * bls.len()..(a + 1) * bls.len()]
                .iter()
                .map(|c| c.mean)
                .collect();
            let rho = sign * spearman(&bls, &means);
            match metric {
                Metric::CycleStrength => worst.0 = worst.0.min(rho),
                Metric::Entropy => worst.1 = worst.1.min(rho),
            }
        }
    }
    c.check(
        worst.0 >= 0.9,
        format!("cycle-strength trend rho {:.2}", worst.0),
    );
    c.check(worst.1 >= 0.9, format!("entropy trend rho {:.2}", -worst.1));
    c.note(format!(
        "cycle strength {base:.1e} -> {hi_alpha:.1e} / {hi_bl:.1e}; entropy {h0:.3} -> {h_alpha:.3} / {h_bl:.3}; corpus {} cyclic, {} ST, min |rho| {:.2} / {:.2}",
        cyclic.len(),
        st.len(),
        worst.0,
        worst.1
    ));
    c.within(start.elapsed(), 300.0);
    c
}

fn ingest_pipeline() -> Checks {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let corpus = synthetic_corpus(&mut rng, 30, 7, 4);
    let path =
        std::env::temp_dir().join(format!("prefdyn-acceptance-{}.jsonl", std::process::id()));
    let text: String = corpus
        .iter()
        .map(|i| serde_json::to_string(i).unwrap() + "\n")
        .collect();
    std::fs::write(&path, text).unwrap();
    let render = |exec: Execution| {
        let loaded = load_instances(&path, 4).unwrap();
        let built = build_corpus(&loaded.instances, 4, 12345, exec).unwrap();
        let records: Vec<MatrixRecord> = built.iter().map(MatrixRecord::from).collect();
        serde_json::to_string(&records).unwrap()
    };
    let (a, b, s) = (
        render(Execution::Parallel),
        render(Execution::Parallel),
        render(Execution::Sequential),
    );
    std::fs::remove_file(&path).ok();
    c.check(a == b && a == s, "matrix collections differ between runs");

    let p = random_st_matrix(&mut rng, 5).unwrap();
    let mut off_grid = 0;
    for seed in 0..100 {
        let q = noisy_realization(&p, NoiseConfig { n: 5, seed }).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let x = q.get(i, j) * 5.0;
                if i != j && (x - x.round()).abs() > 1e-12 {
                    off_grid += 1;
                }
            }
        }
    }
    c.check(
        off_grid == 0,
        format!("{off_grid} noisy entries off the 1/5 grid"),
    );

    let pair = PreferenceMatrix::from_upper(2, |_, _| 0.731).unwrap();
    let draws = 10_000;
    let mean = (0..draws)
        .map(|s| {
            noisy_realization(&pair, NoiseConfig { n: 5, seed: s })
                .unwrap()
                .get(0, 1)
        })
        .sum::<f64>()
        / draws as f64;
    let se = (0.731 * 0.269 / (5.0 * draws as f64)).sqrt();
    c.check(
        (mean - 0.731).abs() <= 3.0 * se,
        format!("noisy mean {mean:.5} outside 3 standard errors"),
    );
    c.note(format!(
        "{} bytes identical across runs; noisy mean {mean:.5} (se {se:.1e})",
        a.len()
    ));
    c
}

type Criterion = (usize, &'static str, fn() -> Checks);

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [Criterion; 8] = [
        (1, "IPO oracle equivalence", ipo_oracle_equivalence),
        (2, "DPO solver", dpo_solver),
        (3, "sampling axioms", axioms),
        (4, "order preservation and head gaps", order_and_gaps),
        (5, "RPS dichotomy", rps_dichotomy),
        (6, "collapse", collapse),
        (7, "figure trends", figure_trends),
        (8, "ingest", ingest_pipeline),
    ];
    let mut unexpected = Vec::new();
    for (n, name, run) in criteria {
        let r = run();
        let passed = r.failures.is_empty();
        let mut line = format!(
            "{} criterion {n} ({name})",
            if passed { "PASS" } else { "FAIL" }
        );
        if !passed {
            line += &format!(": {}", r.failures.join("; "));
        }
        if !r.notes.is_empty() {
            line += &format!(" [{}]", r.notes.join("; "));
        }
        println!("{line}");
        if !passed && (strict || !DOCUMENTED_GAPS.contains(&n)) {
            unexpected.push(n);
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: no unexpected failures");
    } else {
        println!("acceptance: unexpected failures in criteria {unexpected:?}");
        std::process::exit(1);
    }
}
