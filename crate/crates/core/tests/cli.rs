use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use peerfx::cli::RunConfig;
use peerfx::estimation::{fit_sample, CriticalValue, FitResult};
use peerfx::graph::read_edge_list;

fn peerfx(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peerfx"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) {
    let o = peerfx(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn read_fit(path: &Path) -> FitResult {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

#[test]
fn generate_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate", "--n-pop", "400", "--p", "0.02", "--seed", "11"];
    ok(&args, &dir.path().join("a"));
    ok(&args, &dir.path().join("b"));
    let a = fs::read(dir.path().join("a/graph.edges")).unwrap();
    let b = fs::read(dir.path().join("b/graph.edges")).unwrap();
    assert_eq!(a, b);

    let cfg = RunConfig::load(&dir.path().join("a/resolved_config.toml")).unwrap();
    assert_eq!((cfg.seed, cfg.graph.n, cfg.graph.p), (11, 400, 0.02));
    let g = read_edge_list(a.as_slice()).unwrap();
    assert_eq!(g, cfg.instance_spec().draw_graph(cfg.seed).unwrap());

    ok(
        &["generate", "--n-pop", "400", "--p", "0.02", "--seed", "12"],
        &dir.path().join("c"),
    );
    assert_ne!(a, fs::read(dir.path().join("c/graph.edges")).unwrap());
}

#[test]
fn simulate_then_fit_matches_in_process_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(
        &[
            "simulate",
            "--n-pop",
            "600",
            "--p",
            "0.02",
            "--fraction",
            "0.3",
            "--seed",
            "5",
        ],
        &sim,
    );
    let sample = sim.join("sample.csv");
    let edges = sim.join("sample.edges");
    ok(
        &[
            "fit",
            "--sample",
            sample.to_str().unwrap(),
            "--edges",
            edges.to_str().unwrap(),
        ],
        &dir.path().join("fit"),
    );
    let from_files = read_fit(&dir.path().join("fit/fit.json"));

    let cfg = RunConfig::load(&sim.join("resolved_config.toml")).unwrap();
    let instance = cfg.instance_spec().draw(cfg.seed, None).unwrap();
    let in_process = fit_sample(&instance.sample, 0.95, CriticalValue::Normal).unwrap();

    assert_eq!(from_files.n_used, in_process.n_used);
    assert_eq!(from_files.dropped, in_process.dropped);
    let pairs = [
        (from_files.beta_hat.to_vec(), in_process.beta_hat.to_vec()),
        (from_files.se.to_vec(), in_process.se.to_vec()),
        (
            vec![
                from_files.sigma2_hat,
                from_files.w_hat.unwrap(),
                from_files.beta2_corrected.unwrap(),
            ],
            vec![
                in_process.sigma2_hat,
                in_process.w_hat.unwrap(),
                in_process.beta2_corrected.unwrap(),
            ],
        ),
        (
            vec![from_files.ci_corrected.unwrap().0, from_files.ci_corrected.unwrap().1],
            vec![in_process.ci_corrected.unwrap().0, in_process.ci_corrected.unwrap().1],
        ),
    ];
    for (a, b) in pairs {
        assert!(a.iter().zip(&b).all(|(x, y)| close(*x, *y)), "{a:?} vs {b:?}");
    }
}

#[test]
fn census_fit_has_identical_corrected_and_naive() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(
        &[
            "simulate",
            "--n-pop",
            "300",
            "--p",
            "0.03",
            "--fraction",
            "1",
            "--seed",
            "3",
        ],
        &sim,
    );
    let sample = sim.join("sample.csv");
    let edges = sim.join("sample.edges");
    ok(
        &[
            "fit",
            "--sample",
            sample.to_str().unwrap(),
            "--edges",
            edges.to_str().unwrap(),
        ],
        &dir.path().join("fit"),
    );
    let fit = read_fit(&dir.path().join("fit/fit.json"));
    assert_eq!(fit.w_hat, Some(1.0));
    assert_eq!(fit.beta2_corrected, Some(fit.beta_hat[2]));
    assert_eq!(fit.ci_corrected, Some(fit.ci_naive));
}

#[test]
fn sample_subcommand_reads_population_files() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--n-pop", "300", "--p", "0.03", "--seed", "8"], &sim);
    let graph = sim.join("graph.edges");
    let units = sim.join("units.csv");
    let args = [
        "sample",
        "--graph",
        graph.to_str().unwrap(),
        "--units",
        units.to_str().unwrap(),
        "--count",
        "40",
        "--seed",
        "8",
    ];
    ok(&args, &dir.path().join("s"));
    // Same seed and sample stream as `simulate`, different size.
    let rows = fs::read_to_string(dir.path().join("s/sample.csv")).unwrap();
    assert_eq!(rows.lines().count(), 41);
    assert!(rows.starts_with("unit_id,d_true,d_obs,x,y\n"));
}

#[test]
fn identify_demo_reports_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["identify-demo", "--n-pop", "200", "--p", "0.05", "--seed", "4"],
        dir.path(),
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("witness.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "NOT_IDENTIFIED_WITNESS_FOUND");
    assert_eq!(report["both_compatible"], true);
    let pair = &report["pair"];
    let (d_j, d_l) = (pair["d_j"].as_f64().unwrap(), pair["d_l"].as_f64().unwrap());
    let expected = 1.5 * (1.0 / d_j - 1.0 / d_l) * (4.5 - 1.5);
    assert!((report["mean_sum_gap"].as_f64().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn diagnostics_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--n-pop", "300", "--p", "0.03", "--seed", "2"], &sim);
    let sample = sim.join("sample.csv");
    let edges = sim.join("sample.edges");
    ok(
        &[
            "diagnostics",
            "--sample",
            sample.to_str().unwrap(),
            "--edges",
            edges.to_str().unwrap(),
        ],
        &dir.path().join("d"),
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("d/diagnostics.json")).unwrap()).unwrap();
    assert_eq!(report["n_sampled"], 60);
    assert!(report["w_hat"].as_f64().unwrap() > 0.0);
}

#[test]
fn mc_writes_grid_and_records() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "mc",
            "--n-pop",
            "300",
            "--density",
            "0.04",
            "--fraction",
            "0.3,0.9",
            "--reps",
            "40",
            "--records",
        ],
        dir.path(),
    );
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(lines[0], peerfx::montecarlo::GRID_CSV_HEADER);
    assert_eq!(lines.len(), 5);
    let records = fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 81);
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "seed = 99\n[graph]\nn = 250\np = 0.04\n").unwrap();
    let out = dir.path().join("out");
    ok(&["generate", "--config", config.to_str().unwrap(), "--p", "0.05"], &out);
    let cfg = RunConfig::load(&out.join("resolved_config.toml")).unwrap();
    assert_eq!((cfg.seed, cfg.graph.n, cfg.graph.p), (99, 250, 0.05));
}

#[test]
fn reference_grid_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.toml");
    let cfg = RunConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.cells().len(), 8);
    assert_eq!(cfg.mc.reps, 10_000);
}

#[test]
fn exit_codes_distinguish_invalid_input_from_computation() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| peerfx(args, dir.path()).status.code();

    assert_eq!(code(&["generate", "--p", "1.5"]), Some(2));
    assert_eq!(code(&["generate", "--level", "1"]), Some(2));
    assert_eq!(code(&["mc", "--workers", "0"]), Some(2));
    assert_eq!(
        code(&["fit", "--sample", "missing.csv", "--edges", "missing.edges"]),
        Some(2)
    );
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[graph]\nnodes = 10\n").unwrap();
    assert_eq!(code(&["generate", "--config", bad.to_str().unwrap()]), Some(2));

    let o = peerfx(&["generate", "--n-pop", "2000", "--p", "0.0001"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");

    let isolated = &[
        "simulate",
        "--n-pop",
        "200",
        "--p",
        "0.005",
        "--allow-disconnected",
        "--seed",
        "1",
    ];
    assert_eq!(code(isolated), Some(3));

    // A sample with no recruited ties at all.
    let sample = dir.path().join("isolated.csv");
    let edges = dir.path().join("isolated.edges");
    fs::write(
        &sample,
        "unit_id,d_true,d_obs,x,y\n3,2,0,1.0,2.0\n8,1,0,2.5,3.0\n9,4,0,0.5,1.0\n",
    )
    .unwrap();
    fs::write(&edges, "# vertices=3\n").unwrap();
    let o = peerfx(
        &[
            "fit",
            "--sample",
            sample.to_str().unwrap(),
            "--edges",
            edges.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
