use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_localnewton")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).display().to_string();
    let mut args = vec!["gen-synth", "--out", &path];
    args.extend_from_slice(extra);
    let out = bin(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn giant_with_nine_rounds_writes_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen(dir.path(), "toy.svm", &["--n", "800", "--d", "6", "--seed", "2"]);
    let od = dir.path().display().to_string();
    let out = bin(&[
        "run",
        "--algo",
        "giant",
        "--train",
        &train,
        "--max-rounds",
        "9",
        "--k",
        "8",
        "--output-dir",
        &od,
    ]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("giant_toy_0.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "round,local_iters,train_loss,test_acc,grad_norm,L,phase");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("9,3,"));
    assert!(dir.path().join("giant_toy_0.meta").exists());
}

#[test]
fn adaptive_run_hands_over_to_giant() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen(dir.path(), "a.svm", &["--n", "2000", "--d", "8", "--seed", "4"]);
    let od = dir.path().display().to_string();
    let out = bin(&[
        "run",
        "--algo",
        "adaptive",
        "--train",
        &train,
        "--k",
        "20",
        "--l0",
        "3",
        "--max-rounds",
        "40",
        "--output-dir",
        &od,
    ]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("adaptive_a_0.csv")).unwrap();
    let phases: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(phases.first(), Some(&"localnewton"));
    assert_eq!(phases.last(), Some(&"giant"));
}

#[test]
fn flags_override_the_config_file_and_reach_the_meta() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen(dir.path(), "c.svm", &["--n", "400", "--d", "4"]);
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "algo = localnewton\ntrain = {train}\nk = 4\nl = 2\nmax_rounds = 3\nseed = 9\noutput_dir = {}\n",
            dir.path().display()
        ),
    )
    .unwrap();
    let out = bin(&["run", "--config", cfg.to_str().unwrap(), "--l", "3", "--gamma", "0.125"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let meta = fs::read_to_string(dir.path().join("localnewton_c_9.meta")).unwrap();
    for line in ["l=3", "gamma=0.125", "k=4", "max_rounds=3", "seed=9", "algo=localnewton"] {
        assert!(meta.lines().any(|l| l == line), "missing {line} in\n{meta}");
    }
    let csv = fs::read_to_string(dir.path().join("localnewton_c_9.csv")).unwrap();
    assert!(csv.lines().nth(3).unwrap().starts_with("3,9,"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen(dir.path(), "e.svm", &["--n", "100", "--d", "3"]);
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--algo", "giant"],
        vec!["run", "--train", &train, "--no-such-key", "1"],
        vec!["run", "--train", &train, "--k", "many"],
        vec!["run", "--train", "/definitely/missing.svm"],
        vec!["run", "--train", &train, "--k", "1000"],
        vec!["compare", "--train", &train, "--algos", "giant", "--target", "0.5"],
        vec!["compare", "--train", &train, "--algos", "giant,adaptive"],
        vec!["gen-synth", "--n", "0", "--d", "3", "--out", "x.svm"],
        vec!["gen-synth", "--n", "10", "--d", "3"],
        vec!["gen-synth", "--n", "10", "--d", "3", "--out", "x.svm", "--colour", "red"],
        vec!["bogus-subcommand"],
    ];
    for args in cases {
        let out = bin(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn diverging_run_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen(dir.path(), "r.svm", &["--n", "1000", "--d", "5", "--task", "least_squares"]);
    let od = dir.path().display().to_string();
    let out = bin(&[
        "run",
        "--train",
        &train,
        "--loss",
        "least_squares",
        "--algo",
        "local_sgd",
        "--sgd-step",
        "50",
        "--k",
        "10",
        "--max-rounds",
        "200",
        "--output-dir",
        &od,
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn compare_reports_unreached_targets_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen(dir.path(), "m.svm", &["--n", "600", "--d", "5"]);
    let od = dir.path().display().to_string();
    let out = bin(&[
        "compare",
        "--train",
        &train,
        "--algos",
        "adaptive,giant",
        "--target",
        "-1",
        "--k",
        "6",
        "--max-rounds",
        "12",
        "--output-dir",
        &od,
    ]);
    assert_eq!(code(&out), 0);
    let report = fs::read_to_string(dir.path().join("compare_m_0.txt")).unwrap();
    assert_eq!(
        report,
        stdout(&out)
            .lines()
            .take(report.lines().count())
            .map(|l| format!("{l}\n"))
            .collect::<String>()
    );
    for algo in ["adaptive", "giant"] {
        let line = report.lines().find(|l| l.starts_with(algo)).unwrap();
        assert_eq!(line.matches('—').count(), 2, "{line}");
    }
    let csv = fs::read_to_string(dir.path().join("compare_m_0.csv")).unwrap();
    assert!(csv.starts_with("algo,round,"));
}

#[test]
fn localnewton_and_giant_round_ratio_with_one_worker() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen(dir.path(), "one.svm", &["--n", "500", "--d", "5"]);
    let od = dir.path().display().to_string();
    // Same Newton iterates on a single worker; GIANT pays three rounds each.
    let out = bin(&[
        "compare",
        "--train",
        &train,
        "--algos",
        "localnewton,giant",
        "--target",
        "0.7",
        "--k",
        "1",
        "--max-rounds",
        "30",
        "--output-dir",
        &od,
    ]);
    assert_eq!(code(&out), 0);
    let report = stdout(&out);
    let rounds = |algo: &str| -> u64 {
        let line = report.lines().find(|l| l.starts_with(algo)).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert_eq!(3 * rounds("localnewton"), rounds("giant"));
}

#[test]
fn gen_synth_is_reproducible_and_margin_data_is_separable() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--n", "1000", "--d", "20", "--seed", "5", "--margin", "0.3", "--test-n", "300"];
    let ta = dir.path().join("a.test").display().to_string();
    let tb = dir.path().join("b.test").display().to_string();
    let a = gen(dir.path(), "a.svm", &[&args[..], &["--test-out", &ta]].concat());
    let b = gen(dir.path(), "b.svm", &[&args[..], &["--test-out", &tb]].concat());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(&ta).unwrap(), fs::read(&tb).unwrap());

    let od = dir.path().display().to_string();
    let out = bin(&[
        "run",
        "--algo",
        "giant",
        "--train",
        &a,
        "--test",
        &ta,
        "--k",
        "4",
        "--max-rounds",
        "60",
        "--gamma",
        "1e-6",
        "--output-dir",
        &od,
    ]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("giant_a_0.csv")).unwrap();
    let acc: f64 = csv.lines().last().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn gen_synth_prints_its_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.svm").display().to_string();
    let out = bin(&[
        "gen-synth",
        "--n",
        "50",
        "--d",
        "4",
        "--seed",
        "7",
        "--task",
        "least_squares",
        "--out",
        &path,
    ]);
    assert_eq!(code(&out), 0);
    let s = stdout(&out);
    assert!(s.contains("task=least_squares n=50 d=4 seed=7"), "{s}");
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 50);
}

#[test]
fn theory_writes_report_and_trials() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen(dir.path(), "t.svm", &["--n", "2000", "--d", "6"]);
    let od = dir.path().display().to_string();
    let out = bin(&[
        "theory",
        "--train",
        &train,
        "--trials",
        "30",
        "--floor-n",
        "2048",
        "--floor-seeds",
        "2",
        "--output-dir",
        &od,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("theory_t_0.txt")).unwrap();
    assert!(report.contains("[descent]"));
    let trials = fs::read_to_string(dir.path().join("theory_t_0_trials.csv")).unwrap();
    assert!(trials.starts_with("check,key,index,a,b,flag"));
    assert!(trials.lines().count() > 30);
}
