use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lightmatter_cli::config::RunConfig;
use lightmatter_cli::output::{read_record, Manifest};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lightmatter"));
    c.env_remove("LIGHTMATTER_OUTPUT_ROOT");
    c
}

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn small_jc(dir: &Path, extra: &str) -> String {
    format!(
        r#"
[model]
type = "jc"
rabi_frequency = 0.5
mean_photons = 100.0

[ansatz]
multiplicity = 2
seed = 3

[integration]
dt = 0.01
t_final = 2.0
sample_stride = 5

[engines]
variational = true
semiclassical = true
oracle = true

[output]
directory = "{}"
{extra}
"#,
        dir.display()
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn shipped_examples_validate() {
    let mut n = 0;
    for entry in fs::read_dir(examples()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 10);
}

#[test]
fn run_writes_csv_per_engine_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(tmp.path(), "c.toml", &small_jc(&out, ""));
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    assert!(m.all_completed());
    assert_eq!(m.seed, 3);
    assert_eq!(m.engines.len(), 3);
    for e in ["variational", "semiclassical", "oracle"] {
        let r = read_record(&out.join(format!("{e}.csv"))).unwrap();
        assert_eq!(r.len(), 41);
        assert!(r.column("P_2").is_some() && r.column("dn_1").is_some() && r.column("dvar_1").is_some());
    }
    let v = read_record(&out.join("variational.csv")).unwrap();
    let x = read_record(&out.join("oracle.csv")).unwrap();
    let d = v.column("P_2").unwrap().iter().zip(x.column("P_2").unwrap()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-3, "variational vs exact P_2 {d}");
}

#[test]
fn no_engine_is_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = small_jc(&tmp.path().join("o"), "").replace("= true", "= false");
    let o = bin().arg("run").arg(write(tmp.path(), "c.toml", &text)).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no engine"));
}

#[test]
fn engine_abort_is_exit_3_with_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let text = small_jc(&out, "")
        .replace("dt = 0.01", "dt = 0.5")
        .replace("t_final = 2.0", "t_final = 50.0")
        .replace("sample_stride = 5", "sample_stride = 1\nnorm_tolerance = 1e-14\nstep_drift_limit = 0.0")
        .replace("oracle = true", "oracle = false");
    let o = bin().arg("run").arg(write(tmp.path(), "c.toml", &text)).output().unwrap();
    assert_eq!(code(&o), 3);
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    let var = m.engines.iter().find(|e| e.engine == "variational").unwrap();
    assert_eq!(var.status, "aborted");
    assert!(var.aborted_at.is_some() && var.message.as_ref().unwrap().contains("norm drift"));
    assert!(read_record(&out.join("variational.csv")).unwrap().len() >= 1);
    // the coarse step also breaks unitarity of the driven propagator
    let sc = m.engines.iter().find(|e| e.engine == "semiclassical").unwrap();
    assert_eq!(sc.status, "aborted");
    assert!(sc.message.as_ref().unwrap().contains("unitarity"));
}

#[test]
fn reruns_are_byte_identical_and_hash_ignores_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let cfg = write(tmp.path(), "c.toml", &small_jc(d, ""));
        assert_eq!(code(&bin().arg("run").arg(&cfg).output().unwrap()), 0);
    }
    for f in ["variational.csv", "semiclassical.csv", "oracle.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ha = Manifest::load(&a.join("manifest.json")).unwrap().config_hash;
    let hb = Manifest::load(&b.join("manifest.json")).unwrap().config_hash;
    assert_eq!(ha, hb);
}

#[test]
fn output_root_env_relocates_relative_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let text = small_jc(Path::new("rel"), "").replace("oracle = true", "oracle = false");
    let cfg = write(tmp.path(), "c.toml", &text);
    let o = bin().env("LIGHTMATTER_OUTPUT_ROOT", tmp.path()).arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("rel/manifest.json").exists());
}

#[test]
fn compare_identical_and_differing_records() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write(tmp.path(), "c.toml", &small_jc(&out, ""));
    assert_eq!(code(&bin().arg("run").arg(&cfg).output().unwrap()), 0);
    let v = out.join("variational.csv");
    let report = tmp.path().join("r.json");
    let o = bin().args(["compare"]).arg(&v).arg(&v).args(["--cols", "P_2,dn_1", "--tol", "0", "--out"]).arg(&report).output().unwrap();
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for c in r["columns"].as_array().unwrap() {
        assert_eq!(c["max_abs"].as_f64(), Some(0.0));
        assert_eq!(c["rms"].as_f64(), Some(0.0));
    }
    let o = bin().arg("compare").arg(&v).arg(out.join("semiclassical.csv")).args(["--cols", "P_2", "--tol", "0"]).output().unwrap();
    assert_eq!(code(&o), 1);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["columns"][0]["first_exceedance"]["time"].as_f64().is_some());
}

#[test]
fn distribution_subcommand_writes_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write(tmp.path(), "c.toml", &small_jc(&out, ""));
    let o = bin().arg("distribution").arg(&cfg).args(["--times", "0,2"]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for e in ["variational", "oracle"] {
        for t in ["0", "2"] {
            let p = out.join(format!("{e}_distribution_t{t}.csv"));
            let text = fs::read_to_string(&p).unwrap();
            assert!(text.starts_with("n_1,p\n"));
            let total: f64 = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-6, "{e} t={t} mass {total}");
        }
    }
    let o = bin().arg("distribution").arg(&cfg).args(["--times", "0.003"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn single_point_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let cfg = write(tmp.path(), "r.toml", &small_jc(&run_dir, ""));
    assert_eq!(code(&bin().arg("run").arg(&cfg).output().unwrap()), 0);
    let sweep_dir = tmp.path().join("sweep");
    let sweep = write(tmp.path(), "s.toml", &small_jc(&sweep_dir, "\n[sweep]\n\"ansatz.seed\" = [3]\n"));
    assert_eq!(code(&bin().arg("sweep").arg(&sweep).output().unwrap()), 0);
    for f in ["variational.csv", "semiclassical.csv", "oracle.csv"] {
        assert_eq!(fs::read(run_dir.join(f)).unwrap(), fs::read(sweep_dir.join("run_000").join(f)).unwrap());
    }
    let a = Manifest::load(&run_dir.join("manifest.json")).unwrap();
    let b = Manifest::load(&sweep_dir.join("run_000/manifest.json")).unwrap();
    assert_eq!(a.config_hash, b.config_hash);
}

#[test]
fn sweep_isolates_failing_points() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let text = small_jc(&out, "\n[sweep]\n\"ansatz.multiplicity\" = [1, 0, 2]\n").replace("oracle = true", "oracle = false");
    let o = bin().arg("sweep").arg(write(tmp.path(), "s.toml", &text)).output().unwrap();
    assert_eq!(code(&o), 2);
    let idx: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let status: Vec<&str> = idx.as_array().unwrap().iter().map(|e| e["status"].as_str().unwrap()).collect();
    assert_eq!(status, ["completed", "config_error", "completed"]);
    assert!(out.join("run_000/variational.csv").exists() && out.join("run_002/variational.csv").exists());
    assert!(!out.join("run_001").exists());
}

#[test]
fn fig1_sweep_produces_three_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .env("LIGHTMATTER_OUTPUT_ROOT", tmp.path())
        .arg("sweep")
        .arg(examples().join("fig1_sweep.toml"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let root = tmp.path().join("fig1_sweep");
    let idx: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(idx.as_array().unwrap().len(), 3);
    for i in 0..3 {
        assert!(root.join(format!("run_{i:03}/variational.csv")).exists());
    }
    // the largest field reproduces the classically driven population
    let v = read_record(&root.join("run_000/variational.csv")).unwrap();
    let s = read_record(&root.join("run_000/semiclassical.csv")).unwrap();
    let d = v.column("P_2").unwrap().iter().zip(s.column("P_2").unwrap()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("fig1a P_2 max-abs variational vs semiclassical: {d:.3e}");
}
