use std::path::Path;

use pirkit::experiments::{fixture_params, register};
use pirkit::io::{read_dist_field, read_pgm, write_dist_field, write_pgm};
use pirkit::{compute_uncertainty_maps, ScalarImage};
use pirkit_cli::{run, AnalyzeStats, RegisterRecord, ANALYZE_OUTPUTS, EXIT_DATA, EXIT_OK, EXIT_USAGE};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn pirkit(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(
        std::iter::once("pirkit").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn reproduce_figure_1_json() {
    let o = pirkit(&["reproduce", "--figure", "1", "--json"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v = json(&o.stdout);
    assert_eq!(v["pass"], true);
    let values: Vec<f64> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["value"].as_f64().unwrap())
        .collect();
    assert!((values[0] - 2.0).abs() < 1e-12);
    assert!((values[1] - 1.3568).abs() < 1e-4);
}

#[test]
fn reproduce_figures_2_and_5() {
    for fig in ["2", "5"] {
        let o = pirkit(&["reproduce", "--figure", fig, "--json"]);
        assert_eq!(o.code, EXIT_OK);
        assert_eq!(json(&o.stdout)["pass"], true, "figure {fig}");
    }
    let text = pirkit(&["reproduce", "--figure", "5"]).stdout;
    assert!(text.contains("mli") && text.ends_with("pass\n"), "{text}");
}

#[test]
fn unknown_figure_is_usage_error() {
    let o = pirkit(&["reproduce", "--figure", "4"]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("--figure"));
}

#[test]
fn register_without_fixed_prints_usage() {
    let o = pirkit(&["register", "--moving", "m.pgm", "--out", "d.pird"]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("--fixed"), "{}", o.stderr);
    assert!(o.stderr.contains("Usage"), "{}", o.stderr);
    assert!(o.stdout.is_empty());
}

#[test]
fn help_goes_to_stdout() {
    let o = pirkit(&["--help"]);
    assert_eq!(o.code, EXIT_OK);
    for cmd in ["register", "analyze", "reproduce", "synth", "compare"] {
        assert!(o.stdout.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn missing_input_names_flag_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = s(&dir.path().join("nope.pgm"));
    let out = s(&dir.path().join("d.pird"));
    let o = pirkit(&[
        "register",
        "--fixed",
        &missing,
        "--moving",
        &fixture("two_region_64.pgm"),
        "--out",
        &out,
    ]);
    assert_eq!(o.code, EXIT_DATA);
    assert!(
        o.stderr.contains("--fixed") && o.stderr.contains("nope.pgm"),
        "{}",
        o.stderr
    );
    assert!(!dir.path().join("d.pird").exists());
}

#[test]
fn invalid_parameter_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("d.pird"));
    let f = fixture("two_region_64.pgm");
    let o = pirkit(&["register", "--fixed", &f, "--moving", &f, "--gamma=-1", "--out", &out]);
    assert_eq!(o.code, EXIT_DATA);
    assert!(o.stderr.contains("gamma"), "{}", o.stderr);
}

#[test]
fn corrupt_pird_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.pird");
    std::fs::write(&path, b"PIRX\x01\0\0\0").unwrap();
    let o = pirkit(&[
        "analyze",
        "--dist",
        &s(&path),
        "--moving",
        &fixture("two_region_64.pgm"),
        "--out-prefix",
        "x",
    ]);
    assert_eq!(o.code, EXIT_DATA);
    assert!(
        o.stderr.contains("--dist") && o.stderr.contains("bad.pird"),
        "{}",
        o.stderr
    );
}

#[test]
fn register_analyze_pipeline_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let dist = dir.path().join("d.pird");
    let prefix = s(&dir.path().join("run"));
    let fixed = fixture("two_region_64.pgm");
    let moving = fixture("two_region_64_moving.pgm");
    let o = pirkit(&[
        "register",
        "--fixed",
        &fixed,
        "--moving",
        &moving,
        "--gamma",
        "0.05",
        "--deterministic",
        "--out",
        &s(&dist),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);

    let sidecar: RegisterRecord =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.pird.params.json")).unwrap()).unwrap();
    assert_eq!(sidecar.params, fixture_params());
    assert_eq!((sidecar.dims.as_slice(), sidecar.k), (&[64usize, 64][..], 25));

    let o = pirkit(&[
        "analyze",
        "--dist",
        &s(&dist),
        "--moving",
        &moving,
        "--out-prefix",
        &prefix,
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    for suffix in ANALYZE_OUTPUTS {
        assert!(Path::new(&format!("{prefix}{suffix}")).exists(), "{suffix} missing");
    }
    let stats: AnalyzeStats =
        serde_json::from_str(&std::fs::read_to_string(format!("{prefix}_stats.json")).unwrap()).unwrap();
    assert_eq!(stats.count_disagreement, 10);
    assert!(stats.max_label_entropy <= stats.max_transform_entropy);
    assert_eq!(stats.bin_width, 0.0);

    let flags = read_pgm(format!("{prefix}_disagreement.pgm")).unwrap();
    assert_eq!(flags.values().iter().filter(|&&v| v == 255.0).count(), 10);
    assert!(flags.values().iter().all(|&v| v == 0.0 || v == 255.0));
    // mode labels are intensities of the moving image
    let mode = read_pgm(format!("{prefix}_mode.pgm")).unwrap();
    let intensities = read_pgm(&moving).unwrap();
    assert!(mode.values().iter().all(|v| intensities.values().contains(v)));
}

#[test]
fn analyze_matches_in_process_maps() {
    let dir = tempfile::tempdir().unwrap();
    let fixed = read_pgm(fixture("two_region_64.pgm")).unwrap();
    let moving = read_pgm(fixture("two_region_64_moving.pgm")).unwrap();
    let reg = register(&fixed, &moving, &fixture_params()).unwrap();
    let maps = compute_uncertainty_maps(&reg.field, &moving, &reg.displacements, 0.0).unwrap();

    let dist = dir.path().join("d.pird");
    write_dist_field(&reg.field, &reg.displacements, &dist).unwrap();
    let prefix = s(&dir.path().join("a"));
    let o = pirkit(&[
        "analyze",
        "--dist",
        &s(&dist),
        "--moving",
        &fixture("two_region_64_moving.pgm"),
        "--out-prefix",
        &prefix,
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let stats: AnalyzeStats =
        serde_json::from_str(&std::fs::read_to_string(format!("{prefix}_stats.json")).unwrap()).unwrap();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    assert!(rel(stats.mean_transform_entropy, mean(&maps.transform_entropy)) <= 1e-6);
    assert!(rel(stats.mean_label_entropy, mean(&maps.label_entropy)) <= 1e-6);
    assert!(rel(stats.mean_label_variance, mean(&maps.label_variance)) <= 1e-6);
    assert_eq!(stats.count_disagreement, maps.count_disagreement());

    let (stored, _) = read_dist_field(&dist).unwrap();
    assert!(stored.max_abs_diff(&reg.field) < 1e-7);
}

#[test]
fn bin_width_is_echoed_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let img = ScalarImage::new(vec![4, 4], (0..16).map(|i| (i * 10) as f64).collect()).unwrap();
    let path = dir.path().join("g.pgm");
    write_pgm(&img, &path).unwrap();
    let dist = dir.path().join("d.pird");
    assert_eq!(
        pirkit(&[
            "register",
            "--fixed",
            &s(&path),
            "--moving",
            &s(&path),
            "--radius",
            "1",
            "--out",
            &s(&dist)
        ])
        .code,
        0
    );
    let prefix = s(&dir.path().join("p"));
    let o = pirkit(&[
        "analyze",
        "--dist",
        &s(&dist),
        "--moving",
        &s(&path),
        "--bin-width",
        "25",
        "--out-prefix",
        &prefix,
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let stats = json(&std::fs::read_to_string(format!("{prefix}_stats.json")).unwrap());
    assert_eq!(stats["bin_width"], 25.0);
    let o = pirkit(&[
        "analyze",
        "--dist",
        &s(&dist),
        "--moving",
        &s(&path),
        "--bin-width=-1",
        "--out-prefix",
        &prefix,
    ]);
    assert_eq!(o.code, EXIT_DATA);
    assert!(o.stderr.contains("--bin-width"));
}

#[test]
fn synth_report_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"seed": 1, "random": {"count": 2, "max_amplitude": 1.0, "min_width": 3.0, "max_width": 6.0}}"#,
    )
    .unwrap();
    let image = fixture("two_region_64.pgm");
    let report = |seed: &str| -> serde_json::Value {
        let out = dir.path().join(format!("r{seed}.json"));
        let o = pirkit(&[
            "synth",
            "--image",
            &image,
            "--spec",
            &s(&spec),
            "--seed",
            seed,
            "--radius",
            "1",
            "--deterministic",
            "--out-report",
            &s(&out),
        ]);
        assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
        json(&std::fs::read_to_string(out).unwrap())
    };
    let (a, b) = (report("7"), report("8"));
    let syn = &a["synthetic"];
    assert_eq!(syn["params"]["bumps"]["seed"], 7);
    assert_eq!(syn["params"]["registration"]["radius"], 1);
    assert_eq!(syn["params"]["bumps"]["widths"].as_array().unwrap().len(), 2);
    assert!(syn["params"]["bumps"].get("random").is_none());
    assert_ne!(
        syn["params"]["bumps"]["centers"],
        b["synthetic"]["params"]["bumps"]["centers"]
    );
}

#[test]
fn synth_rejects_amplitude_above_radius() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = pirkit(&[
        "synth",
        "--image",
        &fixture("two_region_64.pgm"),
        "--spec",
        &fixture("bump_64.json"),
        "--radius",
        "1",
        "--out-report",
        &s(&out),
    ]);
    assert_eq!(o.code, EXIT_DATA);
    assert!(o.stderr.contains("radius"), "{}", o.stderr);
}

#[test]
fn synth_bad_spec_names_flag() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, "{ not json").unwrap();
    let o = pirkit(&[
        "synth",
        "--image",
        &fixture("two_region_64.pgm"),
        "--spec",
        &s(&spec),
        "--out-report",
        &s(&dir.path().join("r.json")),
    ]);
    assert_eq!(o.code, EXIT_DATA);
    assert!(o.stderr.contains("--spec"), "{}", o.stderr);
}

#[test]
fn compare_writes_error_table() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.pgm");
    let est = dir.path().join("est.pgm");
    write_pgm(
        &ScalarImage::new(vec![2, 2], vec![50.0, 200.0, 50.0, 50.0]).unwrap(),
        &gt,
    )
    .unwrap();
    write_pgm(
        &ScalarImage::new(vec![2, 2], vec![50.0, 190.0, 60.0, 50.0]).unwrap(),
        &est,
    )
    .unwrap();
    let csv = dir.path().join("cmp.csv");
    let o = pirkit(&["compare", "--gt", &s(&gt), "--est", &s(&est), "--out", &s(&csv)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert_eq!(
        std::fs::read_to_string(&csv).unwrap(),
        "row,col,gt,est,abs_error\n0,0,50.0,50.0,0.0\n0,1,200.0,190.0,10.0\n1,0,50.0,60.0,10.0\n1,1,50.0,50.0,0.0\n"
    );
    assert!(o.stdout.contains("mean abs error 5.000000"), "{}", o.stdout);
}

#[test]
fn compare_rejects_size_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    write_pgm(&ScalarImage::constant(vec![2, 2], 1.0).unwrap(), &a).unwrap();
    write_pgm(&ScalarImage::constant(vec![2, 3], 1.0).unwrap(), &b).unwrap();
    let o = pirkit(&[
        "compare",
        "--gt",
        &s(&a),
        "--est",
        &s(&b),
        "--out",
        &s(&dir.path().join("c.csv")),
    ]);
    assert_eq!(o.code, EXIT_DATA);
    assert!(o.stderr.contains("--est"));
    assert!(!dir.path().join("c.csv").exists());
}
