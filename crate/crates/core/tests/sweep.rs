use rsma_harq::experiment::{read_csv, rounded, run_sweep, run_sweep_points, write_csv, SweepSpec, CSV_HEADER};
use rsma_harq::harq::Scheme;
use rsma_harq::HarqKind;

fn small_spec() -> SweepSpec {
    SweepSpec {
        schemes: Scheme::ALL.to_vec(),
        kinds: HarqKind::ALL.to_vec(),
        l_values: vec![1, 2],
        rate_start: 2.0,
        rate_stop: 3.0,
        rate_step: 0.5,
        trials: 1500,
        seed: 11,
        ..SweepSpec::default()
    }
}

#[test]
fn csv_round_trip_at_six_digits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let records = run_sweep(&small_spec()).unwrap();
    assert_eq!(records.len(), 3 * 2 * 2 * 3 * 2);
    write_csv(&records, &path).unwrap();
    let back = read_csv(&path).unwrap();
    let want: Vec<_> = records.iter().map(rounded).collect();
    assert_eq!(back, want);
    for r in &back {
        assert!((0.0..=1.0).contains(&r.error_prob));
        assert!(r.ci95_halfwidth >= 0.0);
        assert_eq!(r.fdma_w1.is_some(), r.scheme == Scheme::Fdma);
        assert_eq!(r.mean_chosen_alpha.is_some(), r.scheme == Scheme::Rsma);
    }
}

#[test]
fn empty_records_give_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    write_csv(&[], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, format!("{}\n", CSV_HEADER.join(",")));
    assert!(read_csv(&path).unwrap().is_empty());
}

#[test]
fn rows_are_sorted_whatever_the_input_order() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let mut records = run_sweep(&small_spec()).unwrap();
    write_csv(&records, &a).unwrap();
    records.reverse();
    write_csv(&records, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn csv_bytes_do_not_depend_on_runs_or_workers() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let mut files = vec![];
    for (i, workers) in [1, 3, 1].into_iter().enumerate() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        let records = pool.install(|| run_sweep(&spec)).unwrap();
        let path = dir.path().join(format!("{i}.csv"));
        write_csv(&records, &path).unwrap();
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn zero_rate_is_error_free_at_unit_power() {
    let spec = SweepSpec {
        rate_start: 0.0,
        rate_stop: 0.0,
        trials: 500,
        kinds: HarqKind::ALL.to_vec(),
        ..SweepSpec::default()
    };
    let records = run_sweep(&spec).unwrap();
    assert_eq!(records.len(), 12);
    for r in records {
        assert_eq!(r.error_prob, 0.0, "{r:?}");
        assert_eq!(r.avg_power_per_packet, 1.0, "{r:?}");
    }
}

#[test]
fn fdma_one_shot_interval_covers_the_truth() {
    // L = 0, CC: user k fails iff g < w (2^(r/w) - 1)
    let mut covered = [0; 2];
    let runs = 100;
    for seed in 0..runs {
        let spec = SweepSpec {
            schemes: vec![Scheme::Fdma],
            kinds: vec![HarqKind::Cc],
            l_values: vec![0],
            rate_start: 2.0,
            rate_stop: 2.0,
            trials: 2000,
            seed,
            ..SweepSpec::default()
        };
        let p = &run_sweep_points(&spec).unwrap()[0];
        let w1 = p.fdma_w1.unwrap();
        for (k, (w, db)) in [(w1, spec.gamma1_db), (1.0 - w1, spec.gamma2_db)].into_iter().enumerate() {
            let gamma = w * ((2.0f64 / w).exp2() - 1.0);
            let truth = -(-gamma / 10f64.powf(db / 10.0)).exp_m1();
            let (lo, hi) = p.interval(k);
            covered[k] += u32::from(lo <= truth && truth <= hi);
        }
    }
    for c in covered {
        assert!(c >= 90, "coverage {c}/{runs}");
    }
}

#[test]
fn invalid_specs_name_their_field() {
    let spec = SweepSpec {
        trials: 0,
        ..small_spec()
    };
    let err = run_sweep(&spec).unwrap_err().to_string();
    assert!(err.contains("`trials`"), "{err}");
}
