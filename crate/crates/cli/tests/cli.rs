use std::path::Path;
use std::process::{Command, Output};

fn earlystop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_earlystop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_defaults_everywhere() {
    let commands: &[&[&str]] = &[
        &["datagen", "diagonal"],
        &["datagen", "phillips"],
        &["datagen", "gravity"],
        &["datagen", "linear"],
        &["datagen", "additive"],
        &["estimate", "tsvd"],
        &["estimate", "landweber"],
        &["estimate", "cg"],
        &["estimate", "boost"],
        &["estimate", "tree"],
        &["replicate", "tsvd"],
        &["replicate", "boost"],
        &["replicate", "tree"],
        &["compare"],
        &["bench"],
    ];
    for cmd in commands {
        let mut args = cmd.to_vec();
        args.push("--help");
        let out = earlystop(&args);
        assert!(out.status.success(), "{cmd:?}");
        let text = stdout(&out);
        assert!(text.contains("[default:"), "{cmd:?}: {text}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(earlystop(&["estimate", "tsvd", "--n", "50"]).status.code(), Some(0));
    assert_eq!(earlystop(&["estimate", "tsvd", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(earlystop(&["estimate", "tsvd", "--delta", "-1"]).status.code(), Some(1));
    assert_eq!(earlystop(&["estimate", "tsvd", "--problem", "phillips", "--n", "10"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no/such/dir/out.csv");
    let out = earlystop(&["replicate", "tsvd", "--n", "20", "--mc-runs", "1", "--out", path_str(&missing)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_prints_one_summary_line() {
    let out = earlystop(&["estimate", "tree", "--kind", "smooth", "--n", "300", "--sigma", "1", "--kappa", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    for key in ["stop=", "residual=", "weak_balanced_oracle="] {
        assert!(text.contains(key), "{text}");
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.cfg");
    std::fs::write(&config, "# smaller study\nn=64\nmc_runs=3\ndelta=0.05\nno-oracles=true\n").unwrap();
    let out_a = dir.path().join("a.csv");
    let out = earlystop(&["replicate", "tsvd", "--config", path_str(&config), "--mc-runs", "2", "--out", path_str(&out_a)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_a).unwrap();
    assert!(text.contains("# n=64\n"));
    assert!(text.contains("# delta=0.05\n"));
    assert!(text.contains("# monte-carlo-runs=2\n"));

    std::fs::write(&config, "colour=blue\n").unwrap();
    let out = earlystop(&["replicate", "tsvd", "--config", path_str(&config), "--out", path_str(&out_a)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn datagen_writes_long_vectors_and_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let vectors = dir.path().join("v.csv");
    let matrix = dir.path().join("m.csv");
    let out = earlystop(&[
        "datagen", "phillips", "--n", "8", "--seed", "3", "--out", path_str(&vectors), "--design-out", path_str(&matrix),
    ]);
    assert!(out.status.success());
    let v = std::fs::read_to_string(&vectors).unwrap();
    let body: Vec<&str> = v.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "vector,index,value");
    assert_eq!(body.len(), 1 + 3 * 8);
    let m = std::fs::read_to_string(&matrix).unwrap();
    let body: Vec<&str> = m.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(&body[..2], &["n,p", "8,8"]);
    assert_eq!(body.len(), 2 + 8);
    assert!(body[2..].iter().all(|row| row.split(',').count() == 8));

    let again = dir.path().join("v2.csv");
    earlystop(&["datagen", "phillips", "--n", "8", "--seed", "3", "--out", path_str(&again)]);
    assert_eq!(v, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn compare_and_bench_run_small() {
    let dir = tempfile::tempdir().unwrap();
    let out = earlystop(&[
        "compare", "--problem", "gravity", "--n", "40", "--delta", "0.01", "--mc-runs", "3", "--max-iter", "200",
        "--cores", "2", "--out-dir", path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["gravity_tsvd.csv", "gravity_landweber.csv", "gravity_cg.csv", "summary.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let out = earlystop(&["bench", "--n", "40", "--iters", "5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for row in ["gravity", "phillips", "smooth", "supersmooth", "rough"] {
        assert!(text.contains(row));
    }
}
