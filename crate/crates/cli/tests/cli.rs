use std::path::Path;
use std::process::{Command, Output};

use nsvb_cli::data::{generate, DataRow, Dataset};
use nsvb_cli::pipeline::{closed_loop, fit_models, validate, LoopRow, PredictionRow};
use nsvb_cli::ExperimentConfig;

fn nsvb(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsvb"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn rows<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    csv::Reader::from_path(path).unwrap().deserialize().collect::<Result<_, _>>().unwrap()
}

#[test]
fn gen_data_is_reproducible_and_inside_the_boxes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&nsvb(a.path(), &["--seed", "42", "gen-data"]));
    ok(&nsvb(b.path(), &["--seed", "42", "gen-data"]));
    let bytes = std::fs::read(a.path().join("data.csv")).unwrap();
    assert_eq!(bytes, std::fs::read(b.path().join("data.csv")).unwrap());
    let header = String::from_utf8_lossy(&bytes).lines().next().unwrap().to_string();
    assert_eq!(header, "k,t_s,w_w_kg_s,w_a_kg_s,t_tank_meas_K,t_out_meas_K,t_tank_K,t_in_K,t_out_K");
    let data: Vec<DataRow> = rows(&a.path().join("data.csv"));
    assert_eq!(data.len(), 1000);
    assert!(data.iter().all(|r| (0.0..=60.0).contains(&r.w_w) && (0.0..=2.0).contains(&r.w_a)));
}

#[test]
fn tripled_noise_has_tripled_spread() {
    let dir = tempfile::tempdir().unwrap();
    ok(&nsvb(dir.path(), &["--noise-mult", "3", "gen-data"]));
    let data: Vec<DataRow> = rows(&dir.path().join("data.csv"));
    let err: Vec<f64> = data.iter().flat_map(|r| [r.t_tank_meas - r.t_tank, r.t_out_meas - r.t_out]).collect();
    let mean = err.iter().sum::<f64>() / err.len() as f64;
    let sd = (err.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (err.len() - 1) as f64).sqrt();
    let expected = 3.0 * 0.7f64.sqrt();
    assert!((sd / expected - 1.0).abs() < 0.1, "std {sd} vs {expected}");
}

#[test]
fn empty_training_split_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(&nsvb(dir.path(), &["gen-data"]));
    let o = nsvb(dir.path(), &["--set", "data.train=0", "fit"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_keys_and_bad_flags_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nsvb(dir.path(), &["--set", "mpc.horizon=3", "gen-data"]).status.code(), Some(1));
    assert_eq!(nsvb(dir.path(), &["--seed", "x", "gen-data"]).status.code(), Some(1));
    assert_eq!(nsvb(dir.path(), &["fit", "--data", "missing.csv"]).status.code(), Some(1));
}

#[test]
fn refit_writes_identical_models() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&nsvb(a.path(), &["gen-data"]));
    let data = a.path().join("data.csv");
    ok(&nsvb(a.path(), &["fit"]));
    ok(&nsvb(b.path(), &["fit", "--data", data.to_str().unwrap()]));
    for name in ["model_t_tank.json", "model_t_out.json", "fit_report.json"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn tripled_noise_pipeline_reports_finite_metrics() {
    let dir = tempfile::tempdir().unwrap();
    ok(&nsvb(dir.path(), &["--noise-mult", "3", "gen-data"]));
    ok(&nsvb(dir.path(), &["--noise-mult", "3", "fit"]));
    ok(&nsvb(dir.path(), &["--noise-mult", "3", "validate"]));
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("validation_metrics.json")).unwrap()).unwrap();
    for o in metrics["outputs"].as_array().unwrap() {
        for key in ["rmse_train", "rmse_validation", "max_abs_validation", "coverage90_validation"] {
            assert!(o[key].as_f64().is_some_and(f64::is_finite), "{key}: {}", o[key]);
        }
    }
    let preds: Vec<PredictionRow> = rows(&dir.path().join("validation.csv"));
    assert_eq!(preds.len(), 2 * 750);
    assert!(preds.iter().all(|r| r.lower90 <= r.mean && r.mean <= r.upper90));
}

#[test]
fn zero_length_run_writes_empty_traces() {
    let dir = tempfile::tempdir().unwrap();
    ok(&nsvb(dir.path(), &["--noise-mult", "0", "gen-data"]));
    ok(&nsvb(dir.path(), &["--noise-mult", "0", "fit"]));
    ok(&nsvb(dir.path(), &["--set", "run.steps=0", "run-closedloop"]));
    let trace: Vec<LoopRow> = rows(&dir.path().join("closedloop.csv"));
    assert!(trace.is_empty());
    let header = std::fs::read_to_string(dir.path().join("closedloop.csv")).unwrap();
    assert!(header.starts_with("k,t_s,t_tank"));
}

#[test]
fn short_closed_loop_respects_the_input_box() {
    let dir = tempfile::tempdir().unwrap();
    ok(&nsvb(dir.path(), &["--noise-mult", "0", "gen-data"]));
    ok(&nsvb(dir.path(), &["--noise-mult", "0", "fit"]));
    ok(&nsvb(dir.path(), &["--noise-mult", "0", "--set", "run.steps=300", "run-closedloop"]));
    let trace: Vec<LoopRow> = rows(&dir.path().join("closedloop.csv"));
    assert_eq!(trace.len(), 300);
    let (lo, hi) = ExperimentConfig::default().controller_box();
    assert!(trace.iter().all(|r| (lo[0]..=hi[0]).contains(&r.w_w) && (lo[1]..=hi[1]).contains(&r.w_a)));
    assert!(trace.windows(2).all(|w| w[1].cumulative_cost >= w[0].cumulative_cost));
}

#[test]
fn training_fit_is_no_worse_than_validation() {
    let mut wins = 0;
    let mut total = 0;
    for seed in 0..10 {
        let cfg = ExperimentConfig { seed, ..ExperimentConfig::default() };
        let data = generate(&cfg).unwrap();
        let (models, _) = fit_models(&cfg, &data).unwrap();
        let (_, m) = validate(&cfg, &models, &data).unwrap();
        for o in &m.outputs {
            total += 1;
            if o.rmse_train <= o.rmse_validation {
                wins += 1;
            }
        }
    }
    assert!(wins * 10 >= total * 9, "{wins}/{total}");
}

#[test]
fn noiseless_linear_system_is_recovered_exactly() {
    let mut cfg = ExperimentConfig::default();
    cfg.model.n_a = 0;
    let mut data = generate(&cfg).unwrap();
    // replace the plant by y₁' = 0.5 y₁ + 4 W_w + 150, y₂' = 0.2 y₁ + 0.6 y₂ − 3 W_a + 70
    let (mut y1, mut y2) = (300.0, 340.0);
    for r in &mut data.rows {
        r.t_tank_meas = y1;
        r.t_out_meas = y2;
        r.t_tank = y1;
        r.t_out = y2;
        (y1, y2) = (0.5 * y1 + 4.0 * r.w_w + 150.0, 0.2 * y1 + 0.6 * y2 - 3.0 * r.w_a + 70.0);
    }
    let (models, _) = fit_models(&cfg, &data).unwrap();
    let (_, m) = validate(&cfg, &models, &data).unwrap();
    for o in &m.outputs {
        assert!(o.rmse_validation < 1e-8, "{}: {}", o.output, o.rmse_validation);
    }
}

#[test]
fn heavier_tracking_weight_does_not_increase_steady_error() {
    let mut cfg = ExperimentConfig::default();
    cfg.noise.mult = 0.0;
    cfg.steps = 3000;
    let data = generate(&cfg).unwrap();
    let (models, _) = fit_models(&cfg, &data).unwrap();
    let settled_ise = |q: f64| {
        let mut c = cfg.clone();
        c.mpc.q = [q, q];
        let run = closed_loop(&c, models.clone()).unwrap();
        run.rows[2500..]
            .iter()
            .map(|r| (r.t_tank - c.mpc.y_ref[0]).powi(2) + (r.t_out - c.mpc.y_ref[1]).powi(2))
            .sum::<f64>()
            * 0.1
    };
    let (base_steady, heavy_steady) = (settled_ise(50.0), settled_ise(100.0));
    // the settled error is set by the offset estimate, not by the weight
    assert!(heavy_steady <= 1.01 * base_steady + 1e-6, "settled: Q=100 {heavy_steady}, Q=50 {base_steady}");
}

#[test]
fn sweep_writes_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    ok(&nsvb(dir.path(), &["--noise-mult", "0", "--set", "sweep.seeds=2", "--set", "run.steps=50", "sweep"]));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(dir.path().join("seed_43").join("closedloop.csv").exists());
}

#[test]
fn dataset_round_trips_through_the_library() {
    let dir = tempfile::tempdir().unwrap();
    ok(&nsvb(dir.path(), &["--set", "data.validation=10", "gen-data"]));
    let path = dir.path().join("data.csv");
    let d = Dataset::read_csv(&path).unwrap();
    let again = dir.path().join("again.csv");
    d.write_csv(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}
