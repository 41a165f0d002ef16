use std::path::Path;
use std::process::Command;

use proptest::prelude::{prop, prop_assert_eq, prop_oneof, proptest, Just, Strategy};
use stl_lab::experiments::config::{GaussCollapseParams, TfStabilityParams};
use stl_lab::experiments::output::parse_csv;
use stl_lab::experiments::{csv_string, emit_config, parse_config, run_experiment, ExperimentConfig, ExperimentParams, ResultRow};

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn row() -> impl Strategy<Value = ResultRow> {
    (
        prop::sample::select(vec!["gmm-stl", "icl-stl"]),
        0u64..1_000_000,
        0usize..50,
        1usize..100_000,
        0.0f64..=1.0,
        prop::option::of(0.0f64..1e4),
        prop::sample::select(vec!["eval_loss", "stability_max{L=1;bw=0.5}", "beta_mean"]),
        prop_oneof![4 => finite(), 1 => Just(f64::NAN)],
    )
        .prop_map(|(e, seed, generation, n, alpha, lambda, metric, value)| ResultRow {
            experiment: e.into(),
            seed,
            generation,
            n,
            alpha,
            lambda: lambda.unwrap_or(f64::NAN),
            metric: metric.into(),
            value,
        })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec(row(), 0..30)) {
        let (text, nan) = csv_string(&rows);
        let back = parse_csv(&text).unwrap();
        let mut sorted = rows.clone();
        sorted.sort_by(stl_lab::experiments::output::row_order);
        prop_assert_eq!(&back, &sorted);
        prop_assert_eq!(nan, rows.iter().filter(|r| !r.value.is_finite()).count());
        // Writing the parsed rows again gives the same bytes.
        prop_assert_eq!(csv_string(&back).0, text);
    }

    #[test]
    fn config_round_trip_is_exact(
        n in 2usize..10_000,
        generations in 0usize..100,
        mean in -1e3f64..1e3,
        var in 1e-6f64..1e3,
        alpha in 0.0f64..=1.0,
        seed in 0u64..u64::MAX,
        seeds in 1usize..1000,
        alphas in prop::collection::vec(0.0f64..=1.0, 1..5),
        ns in prop::collection::vec(1usize..500, 1..5),
    ) {
        let gauss = ExperimentConfig {
            seed,
            seeds,
            ..ExperimentConfig::new(ExperimentParams::GaussCollapse(GaussCollapseParams { n, generations, mean, var, alpha }))
        };
        let tf = ExperimentConfig::new(ExperimentParams::TfStability(TfStabilityParams {
            alpha: alphas,
            n: ns,
            ..Default::default()
        }));
        for cfg in [gauss, tf] {
            let back = parse_config(&emit_config(&cfg)).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}

fn small_gauss(seeds: usize) -> ExperimentConfig {
    ExperimentConfig {
        seeds,
        ..ExperimentConfig::new(ExperimentParams::GaussCollapse(GaussCollapseParams {
            n: 30,
            generations: 5,
            ..Default::default()
        }))
    }
}

#[test]
fn csv_is_independent_of_thread_count() {
    let cfg = small_gauss(16);
    let in_pool = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| csv_string(&run_experiment(&cfg).unwrap()).0)
    };
    let one = in_pool(1);
    assert_eq!(one, in_pool(4));
    assert_eq!(one, in_pool(1));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stl-lab")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let good = write(dir.path(), "good.conf", &emit_config(&small_gauss(3)));
    let ok = cli(&["run", "--config", &good, "--out", out]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let csv = std::fs::read_to_string(Path::new(out).join("gauss-collapse.csv")).unwrap();
    assert_eq!(parse_csv(&csv).unwrap().len(), 3 * 6 * 2);
    assert!(Path::new(out).join("gauss-collapse.config").exists());

    let bad = write(dir.path(), "bad.conf", "schema_version = 1\nexperiment = gauss-collapse\n[params]\nalpha = 1.5\n");
    let res = cli(&["run", "--config", &bad, "--out", out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 4"));

    let missing = cli(&["run", "--config", "/nonexistent/x.conf", "--out", out]);
    assert_eq!(missing.status.code(), Some(2));

    let res = cli(&["summarize", "--in", "/nonexistent/x.csv", "--group", "metric"]);
    assert_eq!(res.status.code(), Some(3));

    // With every real point kept there is no drift, so the collapse check fails.
    let mut frozen = small_gauss(3);
    if let ExperimentParams::GaussCollapse(p) = &mut frozen.params {
        p.alpha = 1.0;
    }
    let frozen = write(dir.path(), "frozen.conf", &emit_config(&frozen));
    let res = cli(&["run", "--config", &frozen, "--out", out, "--check"]);
    assert_eq!(res.status.code(), Some(4));
    let many = write(dir.path(), "many.conf", &emit_config(&small_gauss(200)));
    let res = cli(&["run", "--config", &many, "--out", out, "--check"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
}
