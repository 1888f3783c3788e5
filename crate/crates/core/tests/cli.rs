use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use diffatlas::cli::config_from_entries;
use diffatlas::data::{load_ply, PlyValues};

fn diffatlas(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffatlas"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const SMALL: &[&str] = &[
    "--patches",
    "2",
    "--points",
    "64",
    "--code-dim",
    "4",
    "--hidden-layers",
    "2",
    "--width",
    "16",
    "--progress",
    "0",
];

fn train(cwd: &Path, data: &str, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", data, "--out", out];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    diffatlas(&args, cwd)
}

fn column<'a>(extra: &'a [diffatlas::data::PlyColumn], name: &str) -> &'a PlyValues {
    &extra
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("column {name}"))
        .values
}

#[test]
fn gen_writes_cloud_and_area_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "gen",
        "--kind",
        "wavy-cloth",
        "--n",
        "8000",
        "--seed",
        "7",
        "--out",
        "a",
    ];
    let stdout = ok(&diffatlas(&args, dir.path()));
    assert!(stdout.contains("points    8000"));
    let (cloud, report) = load_ply(&dir.path().join("a/cloud.ply")).unwrap();
    assert_eq!(cloud.len(), 8000);
    assert!(report.normals_present);
    assert_eq!(report.extra.len(), 2);
    let area: f64 = fs::read_to_string(dir.path().join("a/area.txt"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((area - 1.0933).abs() < 1e-3);

    ok(&diffatlas(
        &[
            "gen",
            "--kind",
            "wavy-cloth",
            "--n",
            "8000",
            "--seed",
            "7",
            "--out",
            "b",
        ],
        dir.path(),
    ));
    for f in ["cloud.ply", "area.txt"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn gen_errors_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&diffatlas(&["gen", "--kind", "torus"], dir.path())), 2);
    fs::write(dir.path().join("file"), "x").unwrap();
    assert_eq!(
        code(&diffatlas(
            &["gen", "--kind", "plane", "--n", "10", "--out", "file/sub"],
            dir.path()
        )),
        2
    );
    assert_eq!(
        code(&diffatlas(
            &["gen", "--kind", "plane", "--amplitude", "0.2", "--out", "p"],
            dir.path()
        )),
        2
    );
    assert_eq!(code(&diffatlas(&["frobnicate"], dir.path())), 2);
}

#[test]
fn help_documents_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, flag) in [
        ("gen", "--noise"),
        ("train", "--alpha-str"),
        ("eval", "--olap-t"),
        ("export", "--curvature"),
    ] {
        let out = ok(&diffatlas(&[cmd, "--help"], dir.path()));
        assert!(out.contains(flag), "{cmd} --help lacks {flag}");
    }
}

#[test]
fn presets_set_loss_weights() {
    let weights = |preset: &str| {
        let cfg = config_from_entries(&BTreeMap::from([(
            "preset".to_string(),
            preset.to_string(),
        )]))
        .unwrap();
        let w = cfg.weights;
        [
            w.alpha_def,
            w.alpha_ol,
            w.alpha_e,
            w.alpha_g,
            w.alpha_sk,
            w.alpha_str,
        ]
    };
    assert_eq!(weights("ours"), [1e-3, 1e2, 1.0, 1.0, 1.0, 1.0]);
    assert_eq!(weights("basic")[..2], [0.0, 0.0]);
    assert_eq!(weights("ablation:no-skew")[2..], [1.0, 1.0, 1.0, 0.0]);
}

#[test]
fn train_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&diffatlas(
        &[
            "gen", "--kind", "plane", "--n", "500", "--seed", "1", "--out", "plane",
        ],
        p,
    ));
    let stdout = ok(&train(
        p,
        "plane",
        "run",
        &["--steps", "30", "--preset", "ours"],
    ));
    assert!(stdout.contains("m_olap(0.05)"));
    for f in ["model.ckpt", "train_log.csv", "metrics.txt", "metrics.csv"] {
        assert!(p.join("run").join(f).is_file(), "missing {f}");
    }
    let log = fs::read_to_string(p.join("run/train_log.csv")).unwrap();
    assert!(log.starts_with("step,chd,l_e,l_g,l_sk,l_str,l_def,l_ol,total,wall_s\n"));
    assert_eq!(log.lines().count(), 31);

    let out = diffatlas(
        &[
            "eval",
            "--checkpoint",
            "run/model.ckpt",
            "--data",
            "plane",
            "--olap-t",
            "0.1,0.01,0.05",
            "--points",
            "400",
            "--out",
            "eval.csv",
            "--distortion-maps",
            "maps",
        ],
        p,
    );
    ok(&out);
    let csv = fs::read_to_string(p.join("eval.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let olap: Vec<f64> = header
        .iter()
        .zip(&row)
        .filter(|(h, _)| h.starts_with("m_olap_"))
        .map(|(_, v)| v.parse().unwrap())
        .collect();
    assert_eq!(
        &header[header.len() - 3..],
        ["m_olap_0.01", "m_olap_0.05", "m_olap_0.1"]
    );
    assert!(olap.windows(2).all(|w| w[0] <= w[1]), "{olap:?}");
    for k in 0..2 {
        let map = fs::read_to_string(p.join(format!("maps/patch_{k}.csv"))).unwrap();
        assert!(map.starts_with("iu,iv,u,v,d_e,d_g,d_sk,d_str,degenerate\n"));
        assert_eq!(map.lines().count(), 1 + 32 * 32);
    }

    ok(&diffatlas(
        &[
            "export",
            "--checkpoint",
            "run/model.ckpt",
            "--resolution",
            "32",
            "--out",
            "c.ply",
        ],
        p,
    ));
    ok(&diffatlas(
        &[
            "export",
            "--checkpoint",
            "run/model.ckpt",
            "--resolution",
            "128",
            "--curvature",
            "--out",
            "f.ply",
        ],
        p,
    ));
    let (coarse, rc) = load_ply(&p.join("c.ply")).unwrap();
    let (fine, rf) = load_ply(&p.join("f.ply")).unwrap();
    assert_eq!(coarse.len(), 2 * 33 * 33);
    assert_eq!(fine.len(), 2 * 129 * 129);
    assert!(rf.extra.iter().any(|c| c.name == "mean_curvature"));
    assert!(!rc.extra.iter().any(|c| c.name == "mean_curvature"));

    let key = |ids: &[u32], u: &PlyValues, v: &PlyValues, i: usize| {
        (ids[i], u.get(i).to_bits(), v.get(i).to_bits())
    };
    let (cu, cv) = (column(&rc.extra, "u"), column(&rc.extra, "v"));
    let (fu, fv) = (column(&rf.extra, "u"), column(&rf.extra, "v"));
    let fine_ids = fine.patch_ids().unwrap();
    let by_param: std::collections::HashMap<_, usize> = (0..fine.len())
        .map(|i| (key(fine_ids, fu, fv, i), i))
        .collect();
    for i in 0..coarse.len() {
        let j = by_param[&key(coarse.patch_ids().unwrap(), cu, cv, i)];
        let (a, b) = (coarse.points()[i], fine.points()[j]);
        assert!(
            (0..3).all(|c| (a[c] - b[c]).abs() < 1e-12),
            "{a:?} vs {b:?}"
        );
    }
    let degenerate = column(&rf.extra, "degenerate");
    let normals = fine.normals().unwrap();
    for (i, n) in normals.iter().enumerate() {
        if degenerate.get(i) == 0.0 {
            assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn input_errors_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&diffatlas(
        &["gen", "--kind", "plane", "--n", "200", "--out", "plane"],
        p,
    ));
    ok(&train(p, "plane", "run", &["--steps", "2"]));
    assert_eq!(
        code(&diffatlas(
            &[
                "export",
                "--checkpoint",
                "run/model.ckpt",
                "--resolution",
                "1",
                "--out",
                "x.ply"
            ],
            p
        )),
        2
    );
    assert_eq!(
        code(&diffatlas(
            &["eval", "--checkpoint", "plane/cloud.ply", "--data", "plane"],
            p
        )),
        2
    );
    assert_eq!(
        code(&diffatlas(
            &[
                "eval",
                "--checkpoint",
                "run/model.ckpt",
                "--data",
                "plane",
                "--shape",
                "3"
            ],
            p
        )),
        2
    );
    assert_eq!(
        code(&diffatlas(
            &["train", "--data", "missing", "--out", "r2"],
            p
        )),
        2
    );
    assert_eq!(
        code(&train(
            p,
            "plane",
            "run",
            &["--steps", "4", "--width", "8", "--resume"]
        )),
        2
    );
    fs::write(p.join("bad.cfg"), "colour = red\n").unwrap();
    assert_eq!(code(&train(p, "plane", "r3", &["--config", "bad.cfg"])), 2);
    fs::remove_file(p.join("plane/area.txt")).unwrap();
    assert_eq!(
        code(&train(
            p,
            "plane",
            "r4",
            &["--preset", "ours", "--steps", "1"]
        )),
        2
    );
    ok(&train(
        p,
        "plane",
        "r4",
        &["--preset", "ours", "--steps", "1", "--area", "1.0"],
    ));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&diffatlas(
        &["gen", "--kind", "plane", "--n", "200", "--out", "plane"],
        p,
    ));
    fs::write(p.join("run.cfg"), "# short run\nsteps = 50\nseed = 3\n").unwrap();
    ok(&train(
        p,
        "plane",
        "run",
        &["--config", "run.cfg", "--steps", "5"],
    ));
    assert_eq!(
        fs::read_to_string(p.join("run/train_log.csv"))
            .unwrap()
            .lines()
            .count(),
        6
    );
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&diffatlas(
        &["gen", "--kind", "sphere-cap", "--n", "300", "--out", "cap"],
        p,
    ));
    ok(&train(
        p,
        "cap",
        "full",
        &["--steps", "12", "--no-convergence"],
    ));
    ok(&train(
        p,
        "cap",
        "split",
        &["--steps", "5", "--no-convergence"],
    ));
    let stdout = ok(&train(
        p,
        "cap",
        "split",
        &["--steps", "12", "--no-convergence", "--resume"],
    ));
    assert!(stdout.contains("resuming from step 5"));
    assert_eq!(
        fs::read(p.join("full/model.ckpt")).unwrap(),
        fs::read(p.join("split/model.ckpt")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(p.join("split/train_log.csv"))
            .unwrap()
            .lines()
            .count(),
        13
    );
}

#[test]
fn non_finite_loss_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let ply = "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nend_header\n\
               0 0 0\n1 0 0\n1e200 0 0\n";
    fs::write(p.join("huge.ply"), ply).unwrap();
    let out = train(p, "huge.ply", "run", &["--preset", "basic", "--steps", "3"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("diagnostics written to"));
    let diag = fs::read_to_string(p.join("run/diagnostics.txt")).unwrap();
    assert!(diag.contains("non-finite loss at step 0"));
}

#[test]
fn plane_fit_reaches_small_chamfer_and_flat_curvature() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&diffatlas(
        &[
            "gen", "--kind", "plane", "--n", "20000", "--seed", "2", "--out", "plane",
        ],
        p,
    ));
    let args = [
        "train",
        "--data",
        "plane",
        "--out",
        "run",
        "--preset",
        "ours-def",
        "--patches",
        "1",
        "--points",
        "1000",
        "--code-dim",
        "8",
        "--hidden-layers",
        "2",
        "--width",
        "64",
        "--lr",
        "3e-3",
        "--steps",
        "2000",
        "--progress",
        "0",
        "--no-convergence",
    ];
    ok(&diffatlas(&args, p));
    // Chamfer between two uniform samples of a unit square is about 1/(pi N) per
    // direction, so both sides need dense sampling to measure below 1e-4
    let eval = [
        "eval",
        "--checkpoint",
        "run/model.ckpt",
        "--data",
        "plane",
        "--points",
        "20000",
        "--out",
        "m.csv",
    ];
    let out = ok(&diffatlas(&eval, p));
    let csv = fs::read_to_string(p.join("m.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let chd: f64 = row[1].parse().unwrap();
    let m_ae: f64 = row[2].parse().unwrap();
    assert!(chd < 1e-4, "CHD {chd}\n{out}");
    assert!(m_ae < 3.0, "m_ae {m_ae}\n{out}");

    ok(&diffatlas(
        &[
            "export",
            "--checkpoint",
            "run/model.ckpt",
            "--resolution",
            "40",
            "--curvature",
            "--out",
            "e.ply",
        ],
        p,
    ));
    let (_, report) = load_ply(&p.join("e.ply")).unwrap();
    let h = column(&report.extra, "mean_curvature");
    let mut abs: Vec<f64> = (0..h.len()).map(|i| h.get(i).abs()).collect();
    abs.sort_by(f64::total_cmp);
    let median = abs[abs.len() / 2];
    assert!(median < 0.05, "median |H| {median}");
}
