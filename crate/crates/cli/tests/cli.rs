use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqcomply"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path) {
    fs::write(
        dir.join("run.toml"),
        "[dgp]\nn = 120\nseed = 3\n\n[sampler]\nn_chains = 2\nn_warmup = 50\nn_draws = 80\nseed = 5\n",
    )
    .unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_fit_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d);
    let o = run(d, &["simulate", "--config", "run.toml", "--out", "data.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("data.truth.json").exists());
    let m = json(&d.join("data.manifest.json"));
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["seed"], 3);

    let o = run(d, &["fit", "--data", "data.csv", "--config", "run.toml", "--out", "fit"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let draws = fs::read_to_string(d.join("fit/draws.csv")).unwrap();
    assert!(draws.starts_with("iter,chain,late,gamma_nt_0,"));
    assert_eq!(draws.lines().count(), 1 + 2 * 80);
    let summary = json(&d.join("fit/summary.json"));
    assert!(summary["late"]["mean"].is_number());
    assert_eq!(summary["theta"].as_array().unwrap().len(), 19);

    let o = run(d, &["compare", "--data", "data.csv", "--fit", "fit", "--out", "cmp.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(d.join("cmp.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("method,point,lo,hi,n_used,truth,bias"));
    let methods: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["bayes_late", "itt", "per_protocol", "as_treated"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("bayes_late"));
}

#[test]
fn manifest_seed_and_config_reproduce_digests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d);
    assert_eq!(code(&run(d, &["simulate", "--config", "run.toml", "--out", "data.csv"])), 0);
    let fit = |out: &str| {
        let o = run(
            d,
            &["fit", "--data", "data.csv", "--config", "run.toml", "--seed", "17", "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        json(&d.join(out).join("manifest.json"))
    };
    let a = fit("a");
    let seed = a["seed"].as_u64().unwrap();
    assert_eq!(seed, 17);
    let b = fit("b");
    for name in ["draws.csv", "summary.json", "config.toml"] {
        let da = &a["outputs"][format!("a/{name}")];
        let db = &b["outputs"][format!("b/{name}")];
        assert!(da.is_string());
        assert_eq!(da, db, "{name}");
    }
    assert_eq!(a["inputs"], b["inputs"]);
}

#[test]
fn marginal_kernel_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d);
    assert_eq!(code(&run(d, &["simulate", "--config", "run.toml", "--out", "data.csv"])), 0);
    let o = run(
        d,
        &[
            "fit", "--data", "data.csv", "--chains", "2", "--draws", "30", "--warmup", "20",
            "--theta-update", "marginal", "--out", "m",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&d.join("m/summary.json"));
    assert_eq!(s["diagnostics"]["theta_update"], "marginal_mh");
    assert_eq!(s["diagnostics"]["n_draws"], 30);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "[dgp]\nn = 10\nseed = 1\nsigma_x = -1.0\n").unwrap();
    let o = run(d, &["simulate", "--config", "bad.toml", "--out", "x.csv"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dgp.sigma_x"));

    fs::write(d.join("unknown.toml"), "[sampler]\nthreads = 2\n").unwrap();
    fs::write(d.join("ok.csv"), "z1,w1,x2,z2,w2,y\n0,0,1.0,0,0,2.0\n").unwrap();
    let o = run(d, &["fit", "--data", "ok.csv", "--config", "unknown.toml", "--out", "f"]);
    assert_eq!(code(&o), 2);

    fs::write(d.join("bad.csv"), "z1,w1,x2,z2,w2,y\n0,0,1.0,0,3,2.0\n").unwrap();
    let o = run(d, &["fit", "--data", "bad.csv", "--out", "f"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 1"));

    // z1=1, w1=0 (nevertaker only) and z2=0, w2=1 (alwaystaker only)
    fs::write(d.join("defier.csv"), "z1,w1,x2,z2,w2,y\n1,0,1.0,0,1,2.0\n").unwrap();
    let o = run(d, &["fit", "--data", "defier.csv", "--out", "f"]);
    assert_eq!(code(&o), 3);

    let o = run(d, &["fit", "--data", "ok.csv", "--draws", "0", "--out", "f"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["validate", "--sweeps", "50000"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.lines().count() >= 5);
    assert!(out.lines().all(|l| l.starts_with("PASS ")), "{out}");
}
