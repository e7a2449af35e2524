use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bnslab(args: &[&str], threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bnslab"));
    c.args(args);
    match threads {
        Some(t) => c.env("BNSLAB_THREADS", t),
        None => c.env_remove("BNSLAB_THREADS"),
    };
    c.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

const SMALL_TOY: &[&str] = &[
    "--field.kind=oracle",
    "--field.components_per_ring=16",
    "--schedule.n_steps=100",
    "--schedule.beta_max=0.2",
    "--circles.n_points=300",
    "--toy2d.n_samples=300",
    "--toy2d.delta_skip=60",
];

#[test]
fn usage_and_config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    for args in [
        vec![],
        vec!["frobnicate", "--out", out],
        vec!["spectral"],
        vec!["spectral", "--out", out, "--spectral.bogus=1"],
        vec!["spectral", "--out", out, "--nosuch.rows=3"],
        vec!["spectral", "--out", out, "--spectral.rows=abc"],
        vec!["spectral", "--out", out, "stray"],
        vec!["verify-gaussian", "--out", out, "--global.precision=f16"],
    ] {
        let o = bnslab(&args, None);
        assert_eq!(code(&o), 1, "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));
    }
    let o = bnslab(&["spectral", "--out", out, "--spectral.n_fields=4"], Some("zero"));
    assert_eq!(code(&o), 1);
}

#[test]
fn unknown_keys_in_config_files_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "[spectral]\nrows = 16\ncolz = 16\n").unwrap();
    let o = bnslab(&["spectral", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("colz"), "{}", stderr(&o));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# small grid\n[spectral]\nrows = 16\ncols = 8\nn_fields = 5\n").unwrap();
    let out = tmp.path().join("out");
    let o = bnslab(
        &["spectral", "--config", cfg.to_str().unwrap(), "--spectral.cols=12", "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let field = fs::read_to_string(out.join("noise_boosted.csv")).unwrap();
    let rows: Vec<&str> = field.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.split(',').count() == 12));
    let checks = fs::read_to_string(out.join("checks.csv")).unwrap();
    assert!(checks.contains("# spectral.cols=12"), "{checks}");
    assert!(checks.contains("# spectral.rows=16"));
}

#[test]
fn failed_check_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bnslab(
        &[
            "verify-gaussian",
            "--sampler.n_samples=500",
            "--check.z_max=0",
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL "));
    assert!(tmp.path().join("comparison.csv").exists());
    let checks = fs::read_to_string(tmp.path().join("checks.csv")).unwrap();
    assert!(checks.contains(",false,"));
}

#[test]
fn output_directory_is_created() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a").join("b");
    let o = bnslab(&["corollary-scan", "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["curves.csv", "regions.csv", "corollary.svg", "checks.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("verify-gaussian", vec!["--sampler.n_samples=3000", "--sampler.dynamics=ode"]),
        ("contraction", vec!["--contraction.n_pairs=600", "--contraction.n_pilot=200"]),
        ("spectral", vec!["--spectral.n_fields=6", "--spectral.rows=16", "--spectral.cols=16"]),
        ("toy2d", SMALL_TOY.to_vec()),
        (
            "trajectory",
            vec![
                "--schedule.n_steps=100",
                "--schedule.beta_max=0.2",
                "--circles.n_points=300",
                "--field.components_per_ring=16",
                "--trajectory.n_trajectories=300",
                "--trajectory.delta_skip=10",
            ],
        ),
    ];
    for (sub, extra) in runs {
        let mut outputs = Vec::new();
        for (k, threads) in [Some("1"), Some("3"), None].into_iter().enumerate() {
            let out = tmp.path().join(format!("{sub}-{k}"));
            let mut args = vec![sub];
            args.extend(&extra);
            let out_s = out.to_str().unwrap().to_string();
            args.extend(["--out", out_s.as_str()]);
            let o = bnslab(&args, threads);
            assert!(code(&o) != 1, "{sub}: {}", stderr(&o));
            outputs.push(files(&out));
        }
        assert!(outputs[0].keys().any(|f| f.ends_with(".csv")));
        assert_eq!(outputs[0], outputs[1], "{sub}: 1 vs 3 threads");
        assert_eq!(outputs[0], outputs[2], "{sub}: 1 thread vs default");
    }
}

#[test]
fn seeds_change_the_output() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = tmp.path().join(seed);
        let flag = format!("--global.seed={seed}");
        let o = bnslab(&["verify-gaussian", "--sampler.n_samples=500", &flag, "--out", out.to_str().unwrap()], None);
        assert!(code(&o) != 1);
        fs::read(out.join("comparison.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn toy_outputs_have_the_documented_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["toy2d"];
    args.extend(SMALL_TOY);
    let out = tmp.path().to_str().unwrap();
    args.extend(["--out", out]);
    let o = bnslab(&args, None);
    assert!(code(&o) != 1, "{}", stderr(&o));
    let header = |f: &str| {
        fs::read_to_string(tmp.path().join(f))
            .unwrap()
            .lines()
            .find(|l| !l.starts_with('#'))
            .unwrap()
            .to_string()
    };
    assert_eq!(header("f_boost_skip.csv"), "x0,x1");
    assert_eq!(header("dataset.csv"), "x0,x1,label");
    assert_eq!(header("metrics.csv"), "metric,k,mean,p50,p90,n");
    let svg = fs::read_to_string(tmp.path().join("toy2d.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("viewBox"));
}
