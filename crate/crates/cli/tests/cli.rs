use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eit_oed::forward::{current_basis, load_measurements, measurement_map};
use eitoed::config;

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn eitoed(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eitoed"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_is_reproducible_under_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", "{}");
    let read = |out: &str, seed: &str| {
        let dir = tmp.path().join(out);
        let o = eitoed(&["simulate", "--preset", "tv-adaptive", "--seed", seed], &cfg, &dir);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(dir.join("measurements.csv")).unwrap()
    };
    let a = read("a", "3");
    assert_eq!(a, read("b", "3"));
    assert_ne!(a, read("c", "4"));
    assert!(String::from_utf8(a).unwrap().starts_with("# config "));
}

#[test]
fn noiseless_empty_phantom_is_the_background() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"noise": {"omega": 0}, "inclusion": {"center": [0, 0, 0], "radius": 0.02, "amplitude": 0}}"#,
    );
    let o = eitoed(&["simulate"], &cfg, tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, data) = load_measurements(tmp.path().join("measurements.csv"), 12).unwrap();

    let ctx = eitoed::commands::Context::new(config::load(&cfg, None).unwrap()).unwrap();
    let sigma = ctx.model().layered_conductivity(&ctx.config().layers()).unwrap();
    let layout = ctx.initial_layout().unwrap();
    let expected = measurement_map(ctx.model(), &sigma, &layout, &current_basis(12).unwrap()).unwrap();
    assert_eq!(data, expected);
}

#[test]
fn inclusion_stands_out_of_the_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let simulate = |name: &str, amplitude: f64| {
        let cfg = write_config(
            tmp.path(),
            &format!("{name}.json"),
            &format!(r#"{{"inclusion": {{"center": [-0.025, -0.025, 0.02], "radius": 0.018, "amplitude": {amplitude}}}}}"#),
        );
        let dir = tmp.path().join(name);
        let o = eitoed(&["simulate"], &cfg, &dir);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let state: eitoed::commands::NoiseState =
            serde_json::from_str(&std::fs::read_to_string(dir.join("state.json")).unwrap()).unwrap();
        (load_measurements(dir.join("measurements.csv"), 12).unwrap().1, state.eta)
    };
    let (with, eta) = simulate("with", 0.1);
    let (without, _) = simulate("without", 0.0);
    // about 4.6 η on the desk mesh, where the range is set by the electrode
    // spreading resistance
    let change = (with - without).amax();
    assert!(change > 4.0 * eta, "{change:e} vs eta {eta:e}");
}

#[test]
fn zero_data_gives_zero_gaussian_reconstruction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), "c.json", "{}");
    let ctx = eitoed::commands::Context::new(config::load(&cfg_path, None).unwrap()).unwrap();
    let sigma = ctx.model().layered_conductivity(&ctx.config().layers()).unwrap();
    let layout = ctx.initial_layout().unwrap();
    let background = measurement_map(ctx.model(), &sigma, &layout, &current_basis(12).unwrap()).unwrap();
    let csv = eit_oed::forward::write_measurements_csv(&background, 12, &[format!("config {}", ctx.hash())]);
    std::fs::write(tmp.path().join("measurements.csv"), csv).unwrap();

    let o = eitoed(&["reconstruct"], &cfg_path, tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("reconstruction.csv")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), ctx.model().node_count());
    assert!(values.iter().all(|v| *v == 0.0));
    assert!(tmp.path().join("covariance.bin").exists());
}

#[test]
fn missing_measurements_are_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", "{}");
    let o = eitoed(&["reconstruct"], &cfg, tmp.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("measurements.csv"), "{}", stderr(&o));
}

#[test]
fn zero_iterations_keep_only_the_initial_design() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"optimizer": {"max_iterations": 0}}"#);
    let o = eitoed(&["optimize", "--skip-gradient-preflight"], &cfg, tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("design_trace.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("0,"));
    let layout = eitoed::commands::read_layout(&tmp.path().join("layout.json")).unwrap();
    assert_eq!(layout.psi_initial, layout.psi_final);
    let (theta, _) = eit_oed::presets::symmetric12();
    assert_eq!(layout.theta, theta);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.json", r#"{"prior": {"length": -1}}"#);
    let o = eitoed(&["simulate"], &bad, tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("prior.length"), "{}", stderr(&o));

    let ok = write_config(tmp.path(), "ok.json", "{}");
    let o = eitoed(&["simulate", "--preset", "gaussian-everything"], &ok, tmp.path());
    assert_eq!(code(&o), 2);

    let garbled = write_config(tmp.path(), "garbled.json", "{ noise: ");
    assert_eq!(code(&eitoed(&["simulate"], &garbled, tmp.path())), 2);

    let o = eitoed(&["simulate"], &tmp.path().join("absent.json"), tmp.path());
    assert_eq!(code(&o), 4);
}

#[test]
fn noiseless_config_cannot_invert() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"noise": {"omega": 0}}"#);
    assert_eq!(code(&eitoed(&["simulate"], &cfg, tmp.path())), 0);
    let o = eitoed(&["reconstruct"], &cfg, tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("noise.omega"), "{}", stderr(&o));
}

#[test]
fn artifacts_from_another_config_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "a.json", "{}");
    let b = write_config(tmp.path(), "b.json", r#"{"noise": {"seed": 5}}"#);
    assert_eq!(code(&eitoed(&["simulate"], &a, tmp.path())), 0);
    let o = eitoed(&["reconstruct"], &b, tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("config-hash"), "{}", stderr(&o));

    // a fresh state file does not help: the measurement header still disagrees
    std::fs::remove_file(tmp.path().join("state.json")).unwrap();
    let o = eitoed(&["reconstruct"], &b, tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("measurements.csv"), "{}", stderr(&o));
}

#[test]
fn tv_reconstruction_writes_monotone_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", "{}");
    assert_eq!(code(&eitoed(&["simulate", "--preset", "tv-adaptive"], &cfg, tmp.path())), 0);
    let o = eitoed(&["reconstruct", "--preset", "tv-adaptive"], &cfg, tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["reconstruction.csv", "covariance.bin", "trace.csv"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let text = std::fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    let rows: Vec<(usize, f64)> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 5 * 6);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            assert!(w[1].1 <= w[0].1, "{w:?}");
        }
    }
}
