use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ipshadow"))
}

fn run(dir: &Path, args: &[&str]) -> i32 {
    let out = bin()
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs");
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn orbits_lists_cat_map_orbits() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--seed", "1", "orbits"]), 0);
    let csv = fs::read_to_string(dir.path().join("orbits.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("index,period,base_1,base_2"));
    let rows: Vec<_> = lines.collect();
    assert!(rows.len() >= 4);
    assert!(rows.iter().all(|r| r.ends_with(",1")));
    let record = fs::read_to_string(dir.path().join("orbits.txt")).unwrap();
    assert_eq!(ipshadow::record::parse_orbits(&record).unwrap().len(), rows.len());
}

#[test]
fn deterministic_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--deterministic", "orbits"]), 2);
}

#[test]
fn deterministic_output_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        assert_eq!(run(dir, &["--seed", "5", "--deterministic", "adversary", "--lemma", "3"]), 0);
    }
    for name in ["adversary_lemma3.csv", "adversary_lemma3.txt"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let summary = fs::read_to_string(a.path().join("adversary_lemma3.txt")).unwrap();
    assert!(!summary.contains("generated_unix"));
}

#[test]
fn adversary_rotation_and_rigid_pass() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--seed", "2", "adversary", "--lemma", "2"]), 0);
    assert_eq!(run(dir.path(), &["--seed", "2", "adversary", "--lemma", "4"]), 0);
    let csv = fs::read_to_string(dir.path().join("adversary_lemma4.csv")).unwrap();
    assert!(csv.starts_with("trial,k,pr_norm,lower_bound,in_region\n"));
}

#[test]
fn shadow_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 9\n[orbit]\nq = 2\nperiod = 3\n[shadow]\nd = [1e-4]\nseeds = 20\n",
    );
    assert_eq!(run(dir.path(), &["--config", &cfg, "shadow"]), 0);
    let csv = fs::read_to_string(dir.path().join("shadow.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    assert!(csv.starts_with("seed,d,sup_distance,ratio,iterations,converged,residual\n"));
}

#[test]
fn glue_check_and_hypconst() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 4\n[glue]\ntrials = 6\nsamples = 500\nq_max = 2\n");
    assert_eq!(run(dir.path(), &["--config", &cfg, "glue-check"]), 0);
    assert_eq!(fs::read_to_string(dir.path().join("glue.csv")).unwrap().lines().count(), 7);
    assert_eq!(run(dir.path(), &["--seed", "1", "hypconst"]), 0);
}

#[test]
fn nonhyperbolic_system_flags_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[system]\nkind = \"rotation\"\nangle = 1.0\n");
    assert_eq!(run(dir.path(), &["--config", &cfg, "hypconst"]), 1);
    let csv = fs::read_to_string(dir.path().join("hypconst.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",0,nan"));
}

#[test]
fn bad_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nbogus = 3\n");
    assert_eq!(run(dir.path(), &["--config", &cfg, "orbits"]), 2);
}
