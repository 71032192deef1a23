mod common;

use std::cell::RefCell;
use std::io::{self, Write};

use localnewton_core::harness::{meta_text, run_comparison, run_on, Algo, ExperimentConfig};
use localnewton_core::metrics::accuracy;
use localnewton_core::synth::{self, SynthSpec, SynthTask};
use localnewton_core::{Dataset, Phase, Task, CSV_HEADER};

fn cfg(pairs: &[(&str, &str)]) -> ExperimentConfig {
    ExperimentConfig::from_pairs(pairs.iter().copied()).unwrap()
}

fn logistic(n: usize, d: usize, seed: u64) -> Dataset {
    common::random_dataset(n, d, Task::Binary, seed)
}

#[test]
fn giant_rows_land_every_three_rounds() {
    let ds = logistic(400, 5, 1);
    let c = cfg(&[("algo", "giant"), ("k", "4"), ("max_rounds", "10")]);
    let m = run_on(&c, &ds, None, None).unwrap();
    let rounds: Vec<u64> = m.rows.iter().map(|r| r.round).collect();
    assert_eq!(rounds, vec![3, 6, 9]);
    for (i, r) in m.rows.iter().enumerate() {
        assert_eq!(r.local_iters, i as u64 + 1);
        assert_eq!((r.l_current, r.phase), (1, Phase::Giant));
    }
}

#[test]
fn fixed_l_counts_local_iterations() {
    let ds = logistic(400, 5, 2);
    let c = cfg(&[("algo", "localnewton"), ("k", "4"), ("l", "3"), ("max_rounds", "5")]);
    let m = run_on(&c, &ds, None, None).unwrap();
    assert_eq!(m.rows.len(), 5);
    for r in &m.rows {
        assert_eq!(r.local_iters, 3 * r.round);
        assert_eq!(r.l_current, 3);
    }
}

#[test]
fn baselines_charge_one_round_per_row() {
    let ds = logistic(400, 5, 3);
    for algo in ["local_sgd", "bfgs"] {
        let c = cfg(&[("algo", algo), ("k", "4"), ("max_rounds", "7"), ("sgd_step", "0.05")]);
        let m = run_on(&c, &ds, None, None).unwrap();
        let rounds: Vec<u64> = m.rows.iter().map(|r| r.round).collect();
        assert_eq!(rounds, (1..=7).collect::<Vec<_>>(), "{algo}");
    }
}

#[test]
fn adaptive_rows_respect_the_round_budget() {
    let ds = logistic(600, 5, 4);
    let c = cfg(&[("algo", "adaptive"), ("k", "6"), ("l0", "3"), ("max_rounds", "20")]);
    let m = run_on(&c, &ds, None, None).unwrap();
    assert!(m.rows.last().unwrap().round <= 20);
    for w in m.rows.windows(2) {
        assert!(w[1].l_current <= w[0].l_current);
        assert!(w[1].round > w[0].round);
    }
}

#[test]
fn output_is_identical_across_thread_counts() {
    let ds = logistic(600, 6, 5);
    for algo in Algo::ALL {
        let outputs: Vec<String> = ["1", "2", "4"]
            .iter()
            .map(|t| {
                let c = cfg(&[
                    ("algo", algo.as_str()),
                    ("k", "6"),
                    ("max_rounds", "9"),
                    ("threads", t),
                    ("sgd_step", "0.05"),
                    ("seed", "17"),
                ]);
                run_on(&c, &ds, Some(&ds), None).unwrap().to_csv_string()
            })
            .collect();
        assert_eq!(outputs[0], outputs[1], "{algo}");
        assert_eq!(outputs[0], outputs[2], "{algo}");
    }
}

#[test]
fn separable_data_is_classified_perfectly() {
    let mut spec = SynthSpec::new(2000, 5, SynthTask::Logistic, 6);
    spec.margin = Some(0.5);
    let data = synth::generate(&spec).unwrap();
    let c = cfg(&[("algo", "giant"), ("k", "4"), ("max_rounds", "30"), ("gamma", "1e-6")]);
    let m = run_on(&c, &data.train, Some(&data.train), None).unwrap();
    assert_eq!(m.rows.last().unwrap().test_accuracy, Some(1.0));
}

#[test]
fn accuracy_reference_values() {
    let ds = logistic(20000, 8, 7);
    let positives = ds.labels().iter().filter(|&&y| y == 1.0).count() as f64 / ds.n() as f64;
    assert_eq!(accuracy(&[0.0; 8], &ds).unwrap(), positives);
    let mut r = common::rng(8);
    let w = common::normal_vec(&mut r, 8, 1.0);
    // Labels are independent of a fresh random direction up to its overlap
    // with the true one, so pair w with shuffled labels instead.
    let mut labels = ds.labels().to_vec();
    use rand::seq::SliceRandom;
    labels.shuffle(&mut r);
    let shuffled = Dataset::new(ds.features().clone(), labels, Task::Binary).unwrap();
    let a = accuracy(&w, &shuffled).unwrap();
    assert!((a - 0.5).abs() < 0.02, "{a}");
}

/// Records the bytes present at each flush.
struct Probe<'a>(&'a RefCell<(Vec<u8>, Vec<usize>)>);

impl Write for Probe<'_> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.borrow_mut().0.extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> io::Result<()> {
        let mut s = self.0.borrow_mut();
        let n = s.0.len();
        s.1.push(n);
        Ok(())
    }
}

#[test]
fn rows_are_flushed_as_they_are_recorded() {
    let ds = logistic(300, 4, 9);
    let cell = RefCell::new((Vec::new(), Vec::new()));
    let c = cfg(&[("algo", "localnewton"), ("k", "3"), ("max_rounds", "4")]);
    let m = run_on(&c, &ds, None, Some(Box::new(Probe(&cell)))).unwrap();
    let (bytes, flushes) = cell.into_inner();
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text, m.to_csv_string());
    assert!(text.starts_with(CSV_HEADER));
    // Header, then one flush per row, each ending on a line boundary.
    assert_eq!(flushes.len(), 1 + m.rows.len());
    for &at in &flushes {
        assert_eq!(&text[at - 1..at], "\n");
    }
}

#[test]
fn meta_records_hash_and_parameters() {
    let ds = logistic(300, 4, 10);
    let c = cfg(&[("algo", "giant"), ("k", "3"), ("max_rounds", "6"), ("seed", "4")]);
    let m = run_on(&c, &ds, None, None).unwrap();
    assert_eq!(m.meta.config_hash, c.hash());
    assert_eq!(m.meta.config_hash.len(), 64);
    let text = meta_text(&m);
    assert!(text.contains(&format!("config_hash={}", c.hash())));
    assert!(text.contains("seed=4"));
    assert!(text.contains("algo=giant"));
    assert!((m.meta.initial_loss - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn comparison_uses_common_target() {
    let ds = logistic(600, 5, 11);
    let base = cfg(&[("k", "4"), ("max_rounds", "30"), ("sgd_step", "0.05")]);
    let target = 0.45;
    let cmp = run_comparison(&base, &[Algo::Adaptive, Algo::Giant], target, &ds, None).unwrap();
    for e in &cmp.entries {
        assert_eq!(e.rounds_to_target, e.metrics.rounds_to_target(target));
    }
    let mut csv = Vec::new();
    cmp.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("algo,round,"));
    let rows: usize = cmp.entries.iter().map(|e| e.metrics.rows.len()).sum();
    assert_eq!(csv.lines().count(), rows + 1);
    assert!(cmp.report().contains("adaptive"));
    assert!(run_comparison(&base, &[Algo::Giant], target, &ds, None).is_err());
}

#[test]
fn mismatched_test_set_is_a_config_error() {
    let ds = logistic(100, 4, 12);
    let other = logistic(100, 3, 13);
    let c = cfg(&[("k", "2"), ("max_rounds", "3")]);
    assert!(matches!(
        run_on(&c, &ds, Some(&other), None),
        Err(localnewton_core::Error::Config(_))
    ));
}
