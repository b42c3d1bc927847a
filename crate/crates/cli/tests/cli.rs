use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[domain]
dim = 1
half_width = 4.0
points = 64
boundary = "truncated_dirichlet"

[operator]
kind = "schrodinger"

[potential]
kind = "constant"
c = 1.0

[heights]
count = 40

[corpus]
generators = ["constants:1", "modes:2", "trig:2", "bumps:1", "indicators:1", "morrey_singular:1"]
seed = 3
"#;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn campanato(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_campanato"));
    cmd.args(args).env_remove("CAMPANATO_CACHE_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run(sub: &str, config: &Path, out: &Path) -> Output {
    campanato(&[sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()], &[])
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn experiment_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "eq.toml", &format!("experiment = \"equivalence31\"\n{SMALL}"));
    let out = dir.path().join("out");
    let o = run("experiment", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS C_star finite"));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("name,morrey,campanato_operator,campanato_classical,ratio,sigma_sup\n"));
    assert_eq!(csv.lines().count(), 1 + 8);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["experiment"], "equivalence31");
    assert_eq!(json["passed"], true);
    assert_eq!(json["label"], serde_json::Value::Null);
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "norm.toml", &format!("experiment = \"equivalence31\"\n{SMALL}"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("norm", &cfg, &a).status.code(), Some(0));
    assert_eq!(run("norm", &cfg, &b).status.code(), Some(0));
    let x = fs::read(a.join("report.csv")).unwrap();
    assert_eq!(x, fs::read(b.join("report.csv")).unwrap());
    // Sequential and parallel maps agree bit for bit.
    let c = dir.path().join("c");
    let o = campanato(
        &["norm", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--sequential"],
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(x, fs::read(c.join("report.csv")).unwrap());
}

#[test]
fn invalid_configuration_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad_gen = write_config(
        dir.path(),
        "gen.toml",
        &format!("experiment = \"equivalence31\"\n{SMALL}").replace("\"bumps:1\"", "\"waves\""),
    );
    let o = run("experiment", &bad_gen, &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("waves"));
    let bad_key = write_config(dir.path(), "key.toml", &format!("experiment = \"equivalence31\"\nbogus = 1\n{SMALL}"));
    assert_eq!(run("experiment", &bad_key, &out).status.code(), Some(3));
    let missing = dir.path().join("missing.toml");
    assert_eq!(run("experiment", &missing, &out).status.code(), Some(3));
}

#[test]
fn numerical_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
experiment = "kernel_bounds"
[domain]
dim = 1
half_width = 4.0
points = 512
boundary = "periodic"
[tolerances]
kernel_heat = 1e-30
"#;
    let cfg = write_config(dir.path(), "k.toml", body);
    let out = dir.path().join("out");
    let o = run("experiment", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL heat kernel"));
    assert!(out.join("report.json").exists());
}

#[test]
fn dirichlet_refuses_uncertified_potentials() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("experiment = \"dirichlet_forward42\"\n{SMALL}")
        .replace("kind = \"constant\"\nc = 1.0", "kind = \"indicator\"");
    let cfg = write_config(dir.path(), "d.toml", &body);
    let o = run("dirichlet", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not certified"));
}

#[test]
fn stored_field_feeds_trace() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("experiment = \"dirichlet_forward42\"\n{SMALL}")
        .replace("points = 64", "points = 256")
        .replace("generators = [", "generators = [\"modes:1\"] #");
    let cfg = write_config(dir.path(), "d.toml", &body);
    let field = dir.path().join("field");
    let o = campanato(
        &[
            "dirichlet",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
            "--write-field",
            field.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("structural analog"));
    let trace = write_config(
        dir.path(),
        "t.toml",
        &format!("{}\n[input]\nfield = {:?}\n", body.replace("dirichlet_forward42", "trace_inverse42"), field.to_str().unwrap()),
    );
    let out = dir.path().join("trace");
    let o = run("trace", &trace, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(out.join("recovered.bin").exists());
}

#[test]
fn engine_cache_hits_on_second_build() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e.toml", &format!("experiment = \"equivalence31\"\n{SMALL}"));
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let args = ["engine-build", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let status = |o: &Output| -> String {
        assert_eq!(o.status.code(), Some(0));
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        json["details"]["cache"].as_str().unwrap().to_string()
    };
    assert_eq!(status(&campanato(&args, &[("CAMPANATO_CACHE_DIR", &cache)])), "miss");
    assert_eq!(status(&campanato(&args, &[("CAMPANATO_CACHE_DIR", &cache)])), "hit");
    assert_eq!(status(&campanato(&args, &[])), "bypass");
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap().lines().count(), 1 + 64);
}

#[test]
fn semigroup_writes_one_dump_per_time() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("experiment = \"equivalence31\"\n{SMALL}\n[times]\nvalues = [0.0, 0.5]\n")
        .replace("generators = [", "generators = [\"modes:1\"] #");
    let cfg = write_config(dir.path(), "s.toml", &body);
    let out = dir.path().join("out");
    assert_eq!(run("semigroup", &cfg, &out).status.code(), Some(0));
    let at0 = campanato_core::io::read_grid(&out.join("mode_1_t0")).unwrap();
    let at1 = campanato_core::io::read_grid(&out.join("mode_1_t1")).unwrap();
    assert!(at1.sup_norm() < at0.sup_norm());
}

#[test]
fn rh_check_and_limits_run() {
    let dir = tempfile::tempdir().unwrap();
    let rh = format!("experiment = \"rh_certify\"\n{SMALL}").replace("kind = \"constant\"\nc = 1.0", "kind = \"indicator\"");
    let cfg = write_config(dir.path(), "rh.toml", &format!("{rh}\n[reverse_holder]\nexpect = \"diverging\"\n"));
    let o = run("rh-check", &cfg, &dir.path().join("rh"));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let cfg = write_config(dir.path(), "l.toml", &format!("experiment = \"equivalence31\"\n{SMALL}"));
    let o = run("limits", &cfg, &dir.path().join("limits"));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}
