use plp_core::bench::{run_bench, BenchConfig, Mode, CSV_HEADER};
use plp_core::data::{parse_csv, write_blocks, InterpretationSet};
use plp_core::learn::{apply_policy, learn_direct, learn_em, numbered_constants, OnInconsistent};
use plp_core::{
    desugar, fit_direct, fit_em, forward_sample, ground, head_groups, log_likelihood, parse_program, programs,
    sufficient_stats, EmOptions, Exec, Method,
};

fn two_clause_csv(n00: usize, n01: usize, n10: usize, n11: usize) -> String {
    let mut csv = String::from("h,b\n");
    for (row, n) in [("0,0", n00), ("0,1", n01), ("1,0", n10), ("1,1", n11)] {
        csv.push_str(&format!("{row}\n").repeat(n));
    }
    csv
}

#[test]
fn worked_example_end_to_end() {
    let p = parse_program(programs::TWO_CLAUSE).unwrap();
    let gp = ground(&p, &[]).unwrap();
    let data = parse_csv(&two_clause_csv(6, 2, 2, 2), &gp).unwrap();
    let stats = sufficient_stats(&data, &head_groups(&gp), &gp, Exec::Sequential);
    let fit = fit_direct(&stats, &p).unwrap();
    assert_eq!(fit.method_of("h"), Some(Method::ClosedForm));
    let optimum = 6.0 * 0.75f64.ln() + 4.0 * 0.5f64.ln() + 2.0 * 0.25f64.ln();
    assert!((fit.loglik - optimum).abs() < 1e-12);
    let fitted = p.render_fitted(&fit.theta);
    assert!(fitted.contains("0.250000::h."), "{fitted}");
    assert!(fitted.contains("0.333333::h :- b."), "{fitted}");
}

#[test]
fn alarm_recovery_at_25_constants() {
    let p = parse_program(programs::ALARM).unwrap();
    let gp = ground(&p, &numbered_constants(25)).unwrap();
    let truth = [0.1, 0.2, 0.3, 0.6, 0.7, 0.8];
    let data = forward_sample(&gp, &truth, 500, 2024, Exec::default()).unwrap();
    let stats = sufficient_stats(&data, &head_groups(&gp), &gp, Exec::default());
    let fit = fit_direct(&stats, &p).unwrap();
    for (est, t) in fit.theta.iter().zip(truth) {
        assert!((est - t).abs() < 0.05, "{:?}", fit.theta);
    }
    // reported likelihood is the likelihood of the reported parameters
    let again = log_likelihood(&stats, &fit.theta).unwrap();
    assert!((again.value - fit.loglik).abs() < 1e-9);
    assert!(fit.theta.iter().all(|t| (0.0..=1.0).contains(t)));
}

#[test]
fn fixed_labels_only() {
    let p = parse_program("0.3::a.\n0.6::b :- a.\n").unwrap();
    let gp = ground(&p, &[]).unwrap();
    let data = forward_sample(&gp, &[], 50, 1, Exec::Sequential).unwrap();
    let stats = sufficient_stats(&data, &head_groups(&gp), &gp, Exec::Sequential);
    let fit = fit_direct(&stats, &p).unwrap();
    assert!(fit.theta.is_empty());
    assert!(fit.groups.is_empty());
    assert!(fit.loglik < 0.0 && fit.loglik.is_finite());
}

#[test]
fn relational_sweep_rows_agree() {
    let cfg = BenchConfig {
        records: 20,
        ..BenchConfig::new(
            parse_program(programs::ALARM).unwrap(),
            Mode::Relational,
            vec![5, 10, 15, 20, 25],
            9,
        )
    };
    let report = run_bench(&cfg);
    assert_eq!(report.rows.len(), 10);
    for size in &cfg.sizes {
        let d = report.row("direct", *size).unwrap();
        let e = report.row("em", *size).unwrap();
        assert!((d.loglik - e.loglik).abs() <= 1e-3, "size {size}: {} vs {}", d.loglik, e.loglik);
    }
    let csv = report.to_csv();
    assert_eq!(csv.matches(CSV_HEADER).count(), 1);
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn ship_propositional_sweep() {
    let cfg = BenchConfig::new(
        parse_program(programs::SHIP).unwrap(),
        Mode::Propositional,
        vec![100, 1000],
        4,
    );
    let report = run_bench(&cfg);
    for r in &report.rows {
        assert!(r.error.is_none(), "{r:?}");
    }
    for size in [100, 1000] {
        let d = report.row("direct", size).unwrap();
        let e = report.row("em", size).unwrap();
        assert!((d.loglik - e.loglik).abs() <= 1e-3, "{} vs {}", d.loglik, e.loglik);
    }
}

#[test]
fn counting_inactive_auxiliaries_slows_em() {
    let p = parse_program(programs::ALARM).unwrap();
    let gp = ground(&p, &numbered_constants(5)).unwrap();
    let data = forward_sample(&gp, &p.initial_theta(), 100, 5, Exec::default()).unwrap();
    let dp = desugar(&gp);
    let init = vec![0.5; gp.num_params()];
    let with = fit_em(&dp, &data, &init, &EmOptions::default()).unwrap();
    let without = fit_em(
        &dp,
        &data,
        &init,
        &EmOptions {
            include_inactive: false,
            ..EmOptions::default()
        },
    )
    .unwrap();
    assert!(with.iterations() > without.iterations());
    assert!((with.fit.loglik - without.fit.loglik).abs() < 1e-3);
}

#[test]
fn em_needs_far_more_iterations_than_direct() {
    let p = parse_program(programs::ALARM).unwrap();
    let gp = ground(&p, &numbered_constants(10)).unwrap();
    let data = forward_sample(&gp, &p.initial_theta(), 100, 6, Exec::default()).unwrap();
    let init = vec![0.5; gp.num_params()];
    let direct = learn_direct(&gp, &data, &init, Exec::default()).unwrap();
    let em = learn_em(&gp, &data, &init, &EmOptions::default()).unwrap();
    assert!(em.fit.iterations >= 10 * direct.iterations.max(1));
}

#[test]
fn drop_policy_removes_inconsistent_records() {
    let p = parse_program("t(_)::h :- b.\nt(_)::b.\n").unwrap();
    let gp = ground(&p, &[]).unwrap();
    let mut data: InterpretationSet = parse_csv("h,b\n1,0\n1,1\n0,1\n1,0\n", &gp).unwrap();
    assert!(learn_direct(&gp, &data, &[0.5, 0.5], Exec::Sequential).unwrap_err().is_inconsistency());
    assert_eq!(apply_policy(&gp, &mut data, OnInconsistent::Drop), 2);
    let fit = learn_direct(&gp, &data, &[0.5, 0.5], Exec::Sequential).unwrap();
    assert_eq!(data.total_weight(), 2);
    // b observed true in both remaining records: pinned at the upper clamp
    assert!((fit.theta[1] - plp_core::mle::CLAMP_HI).abs() < 1e-9);
    assert!((fit.theta[0] - 0.5).abs() < 1e-6);
}

#[test]
fn sampled_blocks_follow_grounding_count() {
    let p = parse_program(programs::ALARM).unwrap();
    let gp = ground(&p, &numbered_constants(5)).unwrap();
    let data = forward_sample(&gp, &p.initial_theta(), 100, 7, Exec::default()).unwrap();
    let text = write_blocks(&data, &gp, None);
    let blocks: Vec<&str> = text.split("---\n").filter(|b| !b.trim().is_empty()).collect();
    assert_eq!(blocks.len(), 100);
    for b in blocks {
        assert_eq!(b.lines().count(), 65);
    }
}
