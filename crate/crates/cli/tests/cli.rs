use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const SMALL_CASE: &str = r#"
[geometry]
lengths = [0.2, 0.2, 0.025]
divisions = [6, 6, 2]
heated_face = "+z"

[material]
k = 25.84
h = 135.0
rho = 7760.0
cp = 416.8
t_ambient = 20.0

[forward]
dt_ref = 1.0
t_end = 20.0
reference_interval = 1.0
noise_stddev = 0.05
noise_seed = 7

[forward.flux]
kind = "ramp"
peak = 600000.0
ramp_time = 180.0

[reconstruction]
dt_rec = 1.0
s_ncg = 2
s_gn = 1
c1 = 1.0
c2 = 1.0
c3 = 1.0

[[reconstruction.layout]]
name = "meas9"
points = [
    [0.0, 0.0, 0.025], [0.2, 0.0, 0.025], [0.2, 0.2, 0.025], [0.0, 0.2, 0.025],
    [0.1, 0.0, 0.025], [0.2, 0.1, 0.025], [0.1, 0.2, 0.025], [0.0, 0.1, 0.025],
    [0.1, 0.0, 0.0125],
]

[generation]
dt_rec = 2.0
t_end = 10.0
s_ncg = 2
s_gn = 1
c1 = 1.0
c3 = 0.1
c4 = [0.10, 0.14]
seeds = [1, 2]
t_min = 20.0
t_max = 100.0
heat_goal = [-0.03, 1.7]
"#;

fn heatrecon(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatrecon"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("failed to launch heatrecon")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("case.toml"), SMALL_CASE).unwrap();
    dir
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Hashes every file below `dir`, keyed by path relative to it.
fn digest_tree(dir: &Path) -> Vec<(PathBuf, String)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        if f.is_dir() {
            for (rel, h) in digest_tree(&f) {
                out.push((Path::new(f.file_name().unwrap()).join(rel), h));
            }
        } else {
            let bytes = std::fs::read(&f).unwrap();
            let hash = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            out.push((PathBuf::from(f.file_name().unwrap()), hash));
        }
    }
    out
}

fn run_pipeline(dir: &Path, tag: &str) -> PathBuf {
    let out = dir.join(tag);
    let o = out.to_str().unwrap();
    assert_code(
        &heatrecon(
            &[
                "forward",
                "case.toml",
                "--out",
                &format!("{o}/fwd"),
                "--snapshot-every",
                "10",
            ],
            dir,
        ),
        0,
    );
    assert_code(
        &heatrecon(
            &[
                "reconstruct",
                "case.toml",
                "--measurements",
                &format!("{o}/fwd/meas9.csv"),
                "--reference",
                &format!("{o}/fwd/reference.csv"),
                "--out",
                &format!("{o}/rec"),
                "--snapshot-every",
                "10",
            ],
            dir,
        ),
        0,
    );
    assert_code(
        &heatrecon(
            &["generate", "case.toml", "--out", &format!("{o}/gen"), "--jobs", "2"],
            dir,
        ),
        0,
    );
    out
}

#[test]
fn reruns_are_byte_identical() {
    let dir = setup();
    let a = digest_tree(&run_pipeline(dir.path(), "a"));
    let b = digest_tree(&run_pipeline(dir.path(), "b"));
    assert!(a.len() > 10, "{a:?}");
    assert_eq!(a, b);
    let names: Vec<String> = a.iter().map(|(p, _)| p.display().to_string()).collect();
    for expected in [
        "fwd/reference.csv",
        "fwd/meas9.csv",
        "fwd/forward_00010.vtk",
        "rec/errors_summary.csv",
        "rec/errors_per_step.csv",
        "rec/reconstruction_steps.csv",
        "gen/generation_summary.csv",
        "gen/option_04_heat.csv",
        "gen/option_04_final.vtk",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
    }
}

#[test]
fn missing_case_file_is_a_usage_error() {
    let dir = setup();
    let out = heatrecon(&["forward", "absent.toml", "--out", "x"], dir.path());
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = setup();
    assert_code(&heatrecon(&["forward", "case.toml"], dir.path()), 2);
    assert_code(
        &heatrecon(&["generate", "case.toml", "--out", "g", "--c4", "0"], dir.path()),
        2,
    );
    assert_code(
        &heatrecon(&["forward", "case.toml", "--out", "f", "--dt-ref", "-1"], dir.path()),
        2,
    );
}

#[test]
fn sweep_records_rank_deficiency_and_rejects_empty_grid() {
    let dir = setup();
    let p = dir.path();
    assert_code(&heatrecon(&["forward", "case.toml", "--out", "fwd"], p), 0);
    let base = [
        "sweep-c3",
        "case.toml",
        "--measurements",
        "fwd/meas9.csv",
        "--reference",
        "fwd/reference.csv",
    ];
    let mut args = base.to_vec();
    args.extend(["--c3", "0,0.5,1", "--out", "sw"]);
    assert_code(&heatrecon(&args, p), 0);
    let table = std::fs::read_to_string(p.join("sw/c3_sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4, "{table}");
    assert!(lines[1].starts_with("0.0,failed: rank-deficient"), "{table}");
    assert!(
        lines[2].starts_with("0.5,ok,") && lines[3].starts_with("1.0,ok,"),
        "{table}"
    );

    let mut args = base.to_vec();
    args.extend(["--out", "sw2"]);
    assert_code(&heatrecon(&args, p), 2);
}

#[test]
fn rank_deficient_reconstruction_exits_with_one() {
    let dir = setup();
    let p = dir.path();
    assert_code(&heatrecon(&["forward", "case.toml", "--out", "fwd"], p), 0);
    let out = heatrecon(
        &[
            "reconstruct",
            "case.toml",
            "--measurements",
            "fwd/meas9.csv",
            "--c3",
            "0",
            "--out",
            "rec",
        ],
        p,
    );
    assert_code(&out, 1);
}

#[test]
fn unknown_sensor_node_is_rejected() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("m.csv"), "time_s,node_id,temperature_C\n1.0,999999,20.0\n").unwrap();
    let out = heatrecon(
        &["reconstruct", "case.toml", "--measurements", "m.csv", "--out", "rec"],
        p,
    );
    assert_code(&out, 2);
}
