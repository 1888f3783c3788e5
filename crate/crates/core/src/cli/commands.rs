use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::{apply, read_config};
use super::{usage, CliError, EvalArgs, ExportArgs, GenArgs, TrainArgs};
use crate::data::{
    generate, load_obj, load_ply, read_area_sidecar, write_area_sidecar, write_ply_columns,
    PlyColumn, PointCloud, SurfaceKind, SyntheticSurfaceSpec,
};
use crate::geometry::surface_point;
use crate::metrics::{distortion_map, evaluate_model, EvalConfig, MetricsReport};
use crate::surface::{uv_lattice, AtlasModel, JetOrder};
use crate::trainer::{load_checkpoint, TrainError, TrainTarget, Trainer};

pub const CLOUD_FILE: &str = "cloud.ply";
pub const AREA_FILE: &str = "area.txt";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(usage(&format!("cannot create {}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(usage(&format!("cannot write {}", path.display())))
}

pub fn gen(a: &GenArgs) -> Result<(), CliError> {
    let mut kind: SurfaceKind = a.kind.parse().map_err(usage("--kind"))?;
    match &mut kind {
        SurfaceKind::WavyCloth {
            amplitude,
            frequency,
        } => {
            *amplitude = a.amplitude.unwrap_or(*amplitude);
            *frequency = a.frequency.unwrap_or(*frequency);
        }
        _ if a.amplitude.is_some() || a.frequency.is_some() => {
            return Err(CliError::Usage(
                "--amplitude and --frequency apply to wavy-cloth only".into(),
            ));
        }
        _ => {}
    }
    let spec = SyntheticSurfaceSpec::new(kind, a.n, a.seed).with_noise(a.noise);
    let shape = generate(&spec).map_err(usage("cannot generate"))?;
    create_dir(&a.out)?;
    let cloud_path = a.out.join(CLOUD_FILE);
    let normals = shape
        .cloud
        .normals()
        .expect("generated clouds carry normals");
    let col = |name: &str, i: usize| PlyColumn::float(name, normals.iter().map(|n| n[i]).collect());
    let columns = [
        col("nx", 0),
        col("ny", 1),
        col("nz", 2),
        PlyColumn::float("mean_curvature", shape.mean_curvature.clone()),
        PlyColumn::float("gauss_curvature", shape.gauss_curvature.clone()),
    ];
    write_ply_columns(&cloud_path, shape.cloud.points(), &columns)
        .map_err(usage(&format!("cannot write {}", cloud_path.display())))?;
    let area_path = a.out.join(AREA_FILE);
    write_area_sidecar(&area_path, shape.area)
        .map_err(usage(&format!("cannot write {}", area_path.display())))?;
    let (lo, hi) = shape
        .cloud
        .bounding_box()
        .expect("generated clouds are non-empty");
    println!("kind      {}", kind.name());
    println!("points    {}", shape.cloud.len());
    println!("noise     {}", a.noise);
    println!("area      {:.10}", shape.area);
    println!(
        "bbox      [{:.4}, {:.4}, {:.4}] .. [{:.4}, {:.4}, {:.4}]",
        lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]
    );
    println!(
        "wrote     {} and {}",
        cloud_path.display(),
        area_path.display()
    );
    Ok(())
}

/// Loads a dataset directory or a PLY/OBJ file together with its area
/// sidecar, if there is one.
pub fn load_dataset(path: &Path) -> Result<(PointCloud, Option<f64>), CliError> {
    let (file, dir) = if path.is_dir() {
        (path.join(CLOUD_FILE), path.to_path_buf())
    } else {
        (
            path.to_path_buf(),
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        )
    };
    let ext = file
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let loaded = match ext.as_deref() {
        Some("obj") => load_obj(&file),
        _ => load_ply(&file),
    };
    let (cloud, _) = loaded.map_err(usage(&format!("cannot load {}", file.display())))?;
    let sidecar = dir.join(AREA_FILE);
    let area = if sidecar.is_file() {
        Some(
            read_area_sidecar(&sidecar)
                .map_err(usage(&format!("cannot read {}", sidecar.display())))?,
        )
    } else {
        None
    };
    Ok((cloud, area))
}

fn train_entries(a: &TrainArgs) -> Result<BTreeMap<String, String>, CliError> {
    let mut e = match &a.config {
        Some(p) => read_config(p)?,
        None => BTreeMap::new(),
    };
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            e.insert(k.to_string(), v);
        }
    };
    set("preset", a.preset.clone());
    set("patches", a.patches.map(|v| v.to_string()));
    set("points_per_patch", a.points.map(|v| v.to_string()));
    set("steps", a.steps.map(|v| v.to_string()));
    set("seed", a.seed.map(|v| v.to_string()));
    set("lr", a.lr.map(|v| v.to_string()));
    set("code_dim", a.code_dim.map(|v| v.to_string()));
    set("hidden_layers", a.hidden_layers.map(|v| v.to_string()));
    set("width", a.width.map(|v| v.to_string()));
    set("alpha_def", a.alpha_def.map(|v| v.to_string()));
    set("alpha_ol", a.alpha_ol.map(|v| v.to_string()));
    set("alpha_e", a.alpha_e.map(|v| v.to_string()));
    set("alpha_g", a.alpha_g.map(|v| v.to_string()));
    set("alpha_sk", a.alpha_sk.map(|v| v.to_string()));
    set("alpha_str", a.alpha_str.map(|v| v.to_string()));
    set("convergence", a.no_convergence.then(|| "false".to_string()));
    Ok(e)
}

fn metrics_outputs(reports: &[MetricsReport], thresholds: &[f64]) -> (String, String) {
    let mut table = String::new();
    let mut csv = MetricsReport::csv_header(thresholds) + "\n";
    for (s, r) in reports.iter().enumerate() {
        writeln!(table, "shape {s}\n{}", r.table()).expect("write to string");
        csv += &r.csv_row(&s.to_string());
        csv.push('\n');
    }
    (table, csv)
}

fn sorted(ts: &[f64]) -> Vec<f64> {
    let mut ts = ts.to_vec();
    ts.sort_by(f64::total_cmp);
    ts
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = apply(&train_entries(a)?)?;
    if !a.area.is_empty() && a.area.len() != a.data.len() {
        return Err(CliError::Usage(format!(
            "{} --area values for {} --data paths",
            a.area.len(),
            a.data.len()
        )));
    }
    let mut targets = Vec::with_capacity(a.data.len());
    for (i, path) in a.data.iter().enumerate() {
        let (cloud, sidecar) = load_dataset(path)?;
        let area = a.area.get(i).copied().or(sidecar);
        if area.is_none() && cfg.weights.alpha_ol > 0.0 {
            return Err(CliError::Usage(format!(
                "{}: the overlap term needs a target area (add {AREA_FILE} or pass --area)",
                path.display()
            )));
        }
        targets.push(TrainTarget::new(cloud, area).map_err(usage(&path.display().to_string()))?);
    }

    create_dir(&a.out)?;
    let ckpt = a.out.join("model.ckpt");
    let log = a.out.join("train_log.csv");
    cfg.checkpoint = Some(ckpt.clone());
    cfg.log = Some(log.clone());

    let trainer = if a.resume && ckpt.is_file() {
        let (model, state) = load_checkpoint(&ckpt, Some((cfg.patches, cfg.arch)))
            .map_err(usage(&ckpt.display().to_string()))?;
        cfg.steps = cfg.steps.saturating_sub(state.step as usize);
        println!("resuming from step {}", state.step);
        Trainer::resume(cfg.clone(), &targets, model, state)
    } else {
        if log.exists() {
            fs::remove_file(&log).map_err(usage(&format!("cannot replace {}", log.display())))?;
        }
        Trainer::new(cfg.clone(), &targets)
    }
    .map_err(usage("cannot start training"))?;

    let every = a.progress;
    let result = trainer.run_with(|r| {
        if every > 0 && r.step % every as u64 == 0 {
            println!(
                "step {:>6}  total {:.6e}  chd {:.6e}  l_def {:.4e}  l_ol {:.4e}  |g| {:.3e}",
                r.step, r.report.total, r.report.chd, r.report.l_def, r.report.l_ol, r.grad_norm
            );
        }
    });
    let result = match result {
        Ok(r) => r,
        Err(TrainError::NonFinite(d)) => {
            let path = a.out.join("diagnostics.txt");
            write_text(&path, &format!("{d}\n"))?;
            return Err(CliError::Numerical {
                message: d.to_string(),
                diagnostics: Some(path),
            });
        }
        Err(e @ (TrainError::Io(_) | TrainError::Checkpoint(_))) => {
            return Err(CliError::Usage(format!("cannot write outputs: {e}")));
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };

    let (table, csv) = metrics_outputs(&result.final_metrics, &sorted(&cfg.eval.olap_thresholds));
    write_text(&a.out.join("metrics.txt"), &table)?;
    write_text(&a.out.join("metrics.csv"), &csv)?;
    println!(
        "{} after {} steps{}",
        if result.converged {
            "converged"
        } else {
            "stopped"
        },
        result.state.step,
        if result.converged {
            ""
        } else {
            " (step budget)"
        }
    );
    print!("{table}");
    println!(
        "wrote {}, {}, metrics.txt and metrics.csv in {}",
        ckpt.display(),
        log.display(),
        a.out.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<AtlasModel, CliError> {
    let (model, _) = load_checkpoint(path, None).map_err(usage(&format!(
        "incompatible checkpoint {}",
        path.display()
    )))?;
    Ok(model)
}

fn check_shape(model: &AtlasModel, shape: usize) -> Result<(), CliError> {
    if shape >= model.num_shapes() {
        return Err(CliError::Usage(format!(
            "--shape {shape} but the checkpoint holds {} codewords",
            model.num_shapes()
        )));
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let model = load_model(&a.checkpoint)?;
    check_shape(&model, a.shape)?;
    let (cloud, _) = load_dataset(&a.data)?;
    if a.olap_t.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(CliError::Usage(
            "--olap-t values must be finite and non-negative".into(),
        ));
    }
    let cfg = EvalConfig {
        points_per_patch: a.points,
        olap_thresholds: a.olap_t.clone(),
        ..EvalConfig::default()
    };
    let report =
        evaluate_model(&model, a.shape, &cloud, &cfg).map_err(usage("evaluation failed"))?;
    print!("{}", report.table());
    if let Some(out) = &a.out {
        let csv = format!(
            "{}\n{}\n",
            MetricsReport::csv_header(&sorted(&a.olap_t)),
            report.csv_row(&a.shape.to_string())
        );
        write_text(out, &csv)?;
    }
    if let Some(dir) = &a.distortion_maps {
        write_distortion_maps(&model, a.shape, a.map_resolution, dir)?;
    }
    Ok(())
}

const DISTORTION_HEADER: &str = "iu,iv,u,v,d_e,d_g,d_sk,d_str,degenerate";

fn write_distortion_maps(
    model: &AtlasModel,
    shape: usize,
    res: usize,
    dir: &Path,
) -> Result<(), CliError> {
    let maps = distortion_map(model.decoders(), model.codeword(shape), res)
        .map_err(usage("distortion maps"))?;
    create_dir(dir)?;
    let h = 1.0 / res as f64;
    for (k, p) in maps.patches.iter().enumerate() {
        let mut out = format!("{DISTORTION_HEADER}\n");
        for iu in 0..res {
            for iv in 0..res {
                let c = iu * res + iv;
                writeln!(
                    out,
                    "{iu},{iv},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                    (iu as f64 + 0.5) * h,
                    (iv as f64 + 0.5) * h,
                    p.d_e[c],
                    p.d_g[c],
                    p.d_sk[c],
                    p.d_str[c],
                    u8::from(p.degenerate[c])
                )
                .expect("write to string");
            }
        }
        write_text(&dir.join(format!("patch_{k}.csv")), &out)?;
    }
    let means = maps.means();
    println!(
        "distortion means  D_E {:.4e}  D_G {:.4e}  D_sk {:.4e}  D_str {:.4e}  ({} patches in {})",
        means[0],
        means[1],
        means[2],
        means[3],
        maps.patches.len(),
        dir.display()
    );
    Ok(())
}

pub fn export(a: &ExportArgs) -> Result<(), CliError> {
    if a.resolution < 2 {
        return Err(CliError::Usage(format!(
            "--resolution must be at least 2, got {}",
            a.resolution
        )));
    }
    let model = load_model(&a.checkpoint)?;
    check_shape(&model, a.shape)?;
    let code = model.codeword(a.shape);
    let uvs = uv_lattice(a.resolution);
    let order = if a.curvature {
        JetOrder::Second
    } else {
        JetOrder::First
    };

    let mut points = Vec::new();
    let mut cols: [Vec<f64>; 3] = Default::default();
    let (mut degenerate, mut patch, mut u, mut v) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut c_mean, mut c_gauss) = (Vec::new(), Vec::new());
    for (k, dec) in model.decoders().iter().enumerate() {
        let trace = dec
            .forward_batch(code, &uvs, order)
            .map_err(usage("decoding failed"))?;
        for (i, uv) in uvs.iter().enumerate() {
            let s = surface_point(&trace.jets(i));
            points.push(s.position);
            let n = s.normal.unwrap_or([0.0; 3]);
            for (c, x) in cols.iter_mut().zip(n) {
                c.push(x);
            }
            degenerate.push(i64::from(s.is_degenerate()));
            patch.push(k as i64);
            u.push(uv.u);
            v.push(uv.v);
            c_mean.push(s.c_mean.unwrap_or(0.0));
            c_gauss.push(s.c_gauss.unwrap_or(0.0));
        }
    }
    let flagged = degenerate.iter().filter(|&&d| d != 0).count();
    let [nx, ny, nz] = cols;
    let mut columns = vec![
        PlyColumn::float("nx", nx),
        PlyColumn::float("ny", ny),
        PlyColumn::float("nz", nz),
        PlyColumn::int("patch_id", patch),
        PlyColumn::int("degenerate", degenerate),
        PlyColumn::float("u", u),
        PlyColumn::float("v", v),
    ];
    if a.curvature {
        columns.push(PlyColumn::float("mean_curvature", c_mean));
        columns.push(PlyColumn::float("gauss_curvature", c_gauss));
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_ply_columns(&a.out, &points, &columns)
        .map_err(usage(&format!("cannot write {}", a.out.display())))?;
    println!(
        "wrote {} points ({} patches x {}) to {}; {} degenerate",
        points.len(),
        model.num_patches(),
        uvs.len(),
        a.out.display(),
        flagged
    );
    Ok(())
}
