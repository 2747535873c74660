use iab_core::experiments::baselines::max_sinr_parents;
use iab_core::experiments::joint::{converged_within, trace_is_monotone};
use iab_core::experiments::montecarlo::mean_std;
use iab_core::experiments::output::{write_meta, write_results_csv, write_traces, Meta};
use iab_core::experiments::{
    aggregate, bench_scaling, build_instance, monte_carlo, run_baseline, run_trial, sweep, Scheme, Stage, SweepAxis,
    SCHEMA_VERSION,
};
use iab_core::netmodel::{quick_check, sum_rate, DEFAULT_TOL};
use iab_core::oracle::exhaustive_solve_refined;
use iab_core::{validate, ScenarioConfig};

fn small(case: u8) -> ScenarioConfig {
    let mut c = ScenarioConfig::case(case).unwrap();
    c.num_sbs = 2;
    c.num_ues = 4;
    c.num_subchannels = 4;
    c
}

fn csv_bytes(config: &ScenarioConfig, schemes: &[Scheme], trials: u64, seed: u64) -> Vec<u8> {
    let out = monte_carlo(config, schemes, trials, seed).unwrap();
    let mut buf = Vec::new();
    write_results_csv(&aggregate("none", 0.0, schemes, &out), &mut buf).unwrap();
    buf
}

#[test]
fn same_seed_gives_identical_csv() {
    let c = small(1);
    let schemes = [Scheme::Proposed, Scheme::DirectAccess];
    assert_eq!(csv_bytes(&c, &schemes, 3, 9), csv_bytes(&c, &schemes, 3, 9));
}

#[test]
fn results_csv_carries_schema_version() {
    let c = small(1);
    let text = String::from_utf8(csv_bytes(&c, &[Scheme::Proposed], 2, 1)).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("schema_version,"));
    assert!(lines.next().unwrap().starts_with(&format!("{SCHEMA_VERSION},")));
}

#[test]
fn proposed_never_below_direct_access() {
    for case in [1, 2] {
        let c = small(case);
        for trial in 0..4 {
            let r = run_trial(&c, 3, trial, &[Scheme::Proposed, Scheme::DirectAccess]).unwrap();
            if r[1].feasible {
                assert!(r[0].sum_rate >= r[1].sum_rate - 1e-9, "case {case} trial {trial}");
            }
        }
    }
}

#[test]
fn trial_results_are_consistent() {
    let c = small(2);
    let (_, inst) = build_instance(&c, 5, 0).unwrap();
    for scheme in Scheme::ALL {
        let out = run_baseline(&inst, &c, scheme);
        let report = validate(&inst, &out.solution, DEFAULT_TOL).unwrap();
        assert!(report.feasible && report.cycles.is_empty(), "{scheme}: {}", report.diagnostics());
        assert!(!out.trace.is_empty());
        assert_eq!(out.trace[0].stage, Stage::Init);
        assert!(trace_is_monotone(&out.trace, 1e-6), "{scheme}");
        let last = out.trace.last().unwrap().sum_rate;
        assert!((last - sum_rate(&inst, &out.solution)).abs() <= 1e-9 * last.max(1.0));
    }
    let r = run_trial(&c, 5, 0, &[Scheme::Proposed]).unwrap();
    let (_, inst) = build_instance(&c, 5, 0).unwrap();
    assert_eq!(r[0].ue_rates.len(), inst.dims.num_ues);
    assert!((r[0].ue_rates.iter().sum::<f64>() - r[0].sum_rate).abs() <= 1e-6 * r[0].sum_rate);
}

#[test]
fn direct_access_attaches_every_ue_to_the_mbs() {
    let c = small(1);
    let (_, inst) = build_instance(&c, 2, 0).unwrap();
    let sol = run_baseline(&inst, &c, Scheme::DirectAccess).solution;
    let d = inst.dims;
    for i in d.ues() {
        assert_eq!(sol.parent(i), Some(0));
    }
    for b in d.sbs() {
        assert!(d.ues().all(|i| sol.y(b, i) == 0.0));
    }
}

#[test]
fn single_hop_schemes_keep_sbs_on_the_mbs() {
    let c = small(2);
    for trial in 0..3 {
        let (_, inst) = build_instance(&c, 8, trial).unwrap();
        for scheme in [Scheme::ShMaxSinr, Scheme::ShProp] {
            let sol = run_baseline(&inst, &c, scheme).solution;
            for b in inst.dims.sbs() {
                assert_eq!(sol.parent(b), Some(0), "{scheme}");
            }
        }
    }
}

#[test]
fn max_sinr_ue_rows_match_across_hop_modes() {
    let c = small(2);
    for trial in 0..3 {
        let (_, inst) = build_instance(&c, 6, trial).unwrap();
        let d = inst.dims;
        let sh = run_baseline(&inst, &c, Scheme::ShMaxSinr).solution;
        let mh = run_baseline(&inst, &c, Scheme::MhMaxSinr).solution;
        for i in d.ues() {
            // Recomputed argmax of the full-power SNR on subchannel 0; the MBS wins ties.
            let mut best = 0;
            for b in d.sbs() {
                if inst.peak_snr(b, i, 0) > inst.peak_snr(best, i, 0) {
                    best = b;
                }
            }
            assert_eq!(sh.parent(i), Some(best));
            assert_eq!(mh.parent(i), Some(best));
            assert_eq!(max_sinr_parents(&inst)[i], Some(best));
        }
    }
}

#[test]
fn smallest_network_matches_oracle() {
    let mut c = ScenarioConfig::case(1).unwrap();
    c.num_sbs = 1;
    c.num_ues = 1;
    c.num_subchannels = 1;
    for trial in 0..5 {
        let (_, inst) = build_instance(&c, 13, trial).unwrap();
        let alg = sum_rate(&inst, &run_baseline(&inst, &c, Scheme::Proposed).solution);
        let oracle = exhaustive_solve_refined(&inst, 8, 1e-7).unwrap().objective;
        assert!(alg <= oracle + 1e-9 * oracle);
        assert!(alg >= 0.95 * oracle, "trial {trial}: {alg} vs {oracle}");
    }
}

#[test]
fn desk_instances_converge() {
    let c = small(1);
    for trial in 0..3 {
        let (_, inst) = build_instance(&c, 21, trial).unwrap();
        let out = run_baseline(&inst, &c, Scheme::Proposed);
        assert!(converged_within(&out.trace, 1e-3).is_some_and(|t| t <= 10));
        assert!(quick_check(&inst, &out.solution, DEFAULT_TOL).feasible());
    }
}

#[test]
fn single_value_sweep_equals_monte_carlo() {
    let c = small(1);
    let schemes = [Scheme::Proposed];
    let (rows, _) = sweep(&c, SweepAxis::NumUes, &[4.0], &schemes, 2, 4).unwrap();
    let direct = aggregate("num_ues", 4.0, &schemes, &monte_carlo(&c, &schemes, 2, 4).unwrap());
    assert_eq!(rows, direct);
}

#[test]
fn sweep_rejects_bad_input() {
    let c = small(1);
    assert!(sweep(&c, SweepAxis::NumUes, &[], &[Scheme::Proposed], 1, 0).is_err());
    assert!(sweep(&c, SweepAxis::NumUes, &[2.5], &[Scheme::Proposed], 1, 0).is_err());
    assert!(monte_carlo(&c, &[Scheme::Proposed], 0, 0).is_err());
    assert!("nonsense".parse::<Scheme>().is_err());
    assert!(SweepAxis::parse("speed").is_err());
}

#[test]
fn scheme_names_round_trip() {
    for s in Scheme::ALL {
        assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
    }
}

#[test]
fn scaling_report_dimensions() {
    let c = small(1);
    let rows = bench_scaling(&c, &[(2, 4, 4)], 0).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].subchannel_dim, 2 * 2 * 4 + 5 * 2 * 4 + 4 * 4);
    assert_eq!(rows[0].association_terms, 2 * 4 + 4);
    let doubled = bench_scaling(&c, &[(2, 4, 8)], 0).unwrap();
    assert_eq!(doubled[0].subchannel_dim, 2 * rows[0].subchannel_dim);
}

#[test]
fn mean_std_matches_hand_values() {
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
}

#[test]
fn output_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(1);
    let schemes = [Scheme::Proposed, Scheme::DirectAccess];
    let out = monte_carlo(&c, &schemes, 2, 0).unwrap();
    write_traces(dir.path(), "", &out.results).unwrap();
    let trace = std::fs::read_to_string(dir.path().join("trace_0_proposed.csv")).unwrap();
    assert!(trace.starts_with("outer,stage,sum_rate,accepted,violation"));
    let meta = Meta {
        schema_version: SCHEMA_VERSION,
        config: c.clone(),
        schemes: schemes.iter().map(|s| s.to_string()).collect(),
        sweep_axis: "none".into(),
        sweep_values: vec![],
        trials: 2,
        master_seed: 0,
        git_describe: "test".into(),
        wall_clock_s: 0.0,
        started_unix_s: 0,
        aborted_trials: vec![],
        notes: iab_core::experiments::output::default_notes(),
    };
    write_meta(&dir.path().join("meta.json"), &meta).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["num_ues"], 4);
    assert!(v["notes"].as_array().unwrap().len() >= 2);
}
