use std::path::{Path, PathBuf};

use fovsplat::foveation::{build_foveation_map, derive_fr_model, region_quality, render_foveated};
use fovsplat::hvs::{hvsq, hvsq_by_region, PoolingMap};
use fovsplat::io::image::{encode_png, read_image};
use fovsplat::io::workload::WorkloadFile;
use fovsplat::io::{fsplat, load_model, save_model, ModelFormat};
use fovsplat::loss::{LossKind, QualityLoss};
use fovsplat::prune::{prune_loop, PruneScope};
use fovsplat::raster::{render, workload_stats};
use fovsplat::sim::{imbalance_report, simulate_all};
use fovsplat::synthetic::{make_synthetic_scene, plane_ground_truth, SceneSpec};
use fovsplat::{Camera, FrModel};
use serde::Serialize;

use crate::config::{Command, JobConfig, ReferenceKind};
use crate::serve::{serve, ServeOptions};
use crate::Failure;

pub fn dispatch(command: Command, job: &JobConfig) -> Result<(), Failure> {
    match command {
        Command::Synth => synth(job),
        Command::Render => render_cmd(job),
        Command::Prune => prune(job),
        Command::TrainFr => train_fr(job),
        Command::Hvsq => hvsq_cmd(job),
        Command::Simulate => simulate(job),
        Command::Stats => stats(job),
        Command::Serve => serve_cmd(job),
    }
}

/// Files written by one command. Unless `finish` is called they are
/// removed on drop, together with the directory if this run created it.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self, Failure> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), created_dir, files: Vec::new(), done: false })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        std::fs::write(&path, bytes)
            .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf, Failure> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn finish(mut self) {
        self.done = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json(value: &impl Serialize) {
    emit(&serde_json::to_string_pretty(value).expect("report serializes"));
}

fn load(job: &JobConfig) -> Result<FrModel, Failure> {
    let path = job.model_path()?;
    Ok(load_model(path, ModelFormat::from_path(path)?)?)
}

fn views(job: &JobConfig) -> Result<Vec<Camera>, Failure> {
    let v = &job.views;
    Ok(fovsplat::camera::orbit_ring(
        v.count,
        v.elevation,
        v.radius,
        v.fov_deg,
        v.width,
        v.height,
        v.azimuth_offset,
    )?)
}

fn references(job: &JobConfig, model: &FrModel, cameras: &[Camera]) -> Result<Vec<Vec<[f64; 3]>>, Failure> {
    match job.views.reference {
        ReferenceKind::Model => Ok(cameras.iter().map(|c| render(model, c, 1, &job.raster).image).collect()),
        ReferenceKind::Plane => Ok(cameras.iter().map(|c| plane_ground_truth(c, job.raster.background)).collect()),
        ReferenceKind::Images => {
            let paths = &job.paths.references;
            if paths.len() != cameras.len() {
                return Err(Failure::Config(format!(
                    "{} reference images for {} views",
                    paths.len(),
                    cameras.len()
                )));
            }
            paths
                .iter()
                .zip(cameras)
                .map(|(p, c)| {
                    let (w, h, img) = read_image(p)?;
                    if (w, h) != (c.width, c.height) {
                        return Err(Failure::Data(format!(
                            "{} is {w}x{h}, views are {}x{}",
                            p.display(),
                            c.width,
                            c.height
                        )));
                    }
                    Ok(img)
                })
                .collect()
        }
    }
}

fn quality_loss(job: &JobConfig) -> Result<QualityLoss, Failure> {
    Ok(match job.prune.loss {
        LossKind::L1 => QualityLoss::L1,
        LossKind::Mse => QualityLoss::Mse,
        LossKind::L1Ssim => QualityLoss::L1Ssim,
        LossKind::Hvsq => {
            let display = job.display.geometry(job.views.width, job.views.height)?;
            QualityLoss::Hvsq {
                map: PoolingMap::from_config(&display, &job.hvs)?,
                bank: job.hvs.bank,
                region: None,
            }
        }
    })
}

fn synth(job: &JobConfig) -> Result<(), Failure> {
    let spec = SceneSpec {
        layout: job.synth.layout,
        point_count: job.synth.point_count,
        seed: job.seed,
        footprint: job.synth.footprint,
    };
    let model = make_synthetic_scene(&spec)?;
    let mut out = Outputs::create(job.output_dir()?)?;
    let path = out.write("scene.fsplat", &fsplat::encode(&model))?;
    out.finish();
    print_json(&serde_json::json!({ "points": model.len(), "model": path }));
    Ok(())
}

fn render_cmd(job: &JobConfig) -> Result<(), Failure> {
    let model = load(job)?;
    let r = &job.render;
    let camera = r.orbit.camera(r.width, r.height)?;
    let (image, workload, foveation) = if r.foveated {
        let display = job.display.geometry(r.width, r.height)?;
        let map = build_foveation_map(&job.foveation, &display, job.raster.tile_size)?;
        let f = render_foveated(&model, &camera, &map, &job.raster)?;
        let w = WorkloadFile {
            tiles_x: f.grid.tiles_x,
            tiles_y: f.grid.tiles_y,
            tile_size: f.grid.tile_size,
            counts: f.tile_counts(),
        };
        (f.image, w, Some(f.stats))
    } else {
        if r.level == 0 || r.level > model.level_count {
            return Err(Failure::Config(format!(
                "render.level {} outside the model's levels 1..={}",
                r.level, model.level_count
            )));
        }
        let out = render(&model, &camera, r.level, &job.raster);
        let w = WorkloadFile::from_output(&out);
        (out.image, w, None)
    };
    let stats = serde_json::json!({
        "width": r.width,
        "height": r.height,
        "points": model.len(),
        "workload": workload_stats(&workload.tiles()),
        "foveation": foveation,
    });
    let mut out = Outputs::create(job.output_dir()?)?;
    out.write("frame.png", &encode_png(r.width, r.height, &image)?)?;
    out.write("workload.fwkl", &workload.encode_binary())?;
    out.write_json("stats.json", &stats)?;
    out.finish();
    print_json(&stats);
    Ok(())
}

fn prune(job: &JobConfig) -> Result<(), Failure> {
    let model = load(job)?;
    let cameras = views(job)?;
    let targets = references(job, &model, &cameras)?;
    let loss = quality_loss(job)?;
    let mut out = Outputs::create(job.output_dir()?)?;
    let result = prune_loop(
        &model,
        &cameras,
        &targets,
        &loss,
        &job.train,
        &job.raster,
        &PruneScope::default(),
        |r| log::info!("round {}: {} points, {} intersections, quality {:.4e}", r.round, r.points, r.intersections, r.quality),
    )?;
    let path = out.dir.join("model.fsplat");
    out.files.push(path.clone());
    save_model(&result.model, &path, ModelFormat::Fsplat)?;
    let summary = serde_json::json!({
        "input_points": model.len(),
        "points": result.model.len(),
        "reached_threshold": result.reached_threshold,
        "rounds": result.reports,
    });
    out.write_json("rounds.json", &summary)?;
    out.finish();
    print_json(&serde_json::json!({
        "input_points": model.len(),
        "points": result.model.len(),
        "reached_threshold": result.reached_threshold,
    }));
    Ok(())
}

fn train_fr(job: &JobConfig) -> Result<(), Failure> {
    let model = load(job)?;
    let cameras = views(job)?;
    let targets = references(job, &model, &cameras)?;
    let display = job.display.geometry(job.views.width, job.views.height)?;
    let map = build_foveation_map(&job.foveation, &display, job.raster.tile_size)?;
    let mut out = Outputs::create(job.output_dir()?)?;
    let (fr, levels) = derive_fr_model(
        &model,
        &cameras,
        &targets,
        &map,
        &job.hvs,
        &job.train,
        job.derive.tau,
        &job.raster,
        |level, r| log::info!("level {level} round {}: {} points", r.round, r.points),
    )?;
    let quality = region_quality(&fr, &cameras, &targets, &map, &job.hvs, &job.raster)?;
    out.write("model.fsplat", &fsplat::encode(&fr))?;
    let report = serde_json::json!({
        "level_sizes": fr.level_sizes(),
        "levels": levels,
        "regions": quality,
    });
    out.write_json("report.json", &report)?;
    out.finish();
    print_json(&serde_json::json!({ "level_sizes": fr.level_sizes(), "regions": quality }));
    Ok(())
}

fn hvsq_cmd(job: &JobConfig) -> Result<(), Failure> {
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone().ok_or_else(|| Failure::Config(format!("no {what} image given")))
    };
    let (wa, ha, a) = read_image(&need(&job.paths.reference_image, "reference")?)?;
    let (wb, hb, b) = read_image(&need(&job.paths.altered_image, "altered")?)?;
    if (wa, ha) != (wb, hb) {
        return Err(Failure::Data(format!("images differ in size: {wa}x{ha} and {wb}x{hb}")));
    }
    let display = job.display.geometry(wa, ha)?;
    let pooling = PoolingMap::from_config(&display, &job.hvs)?;
    let map = build_foveation_map(&job.foveation, &display, job.raster.tile_size)?;
    let total = hvsq(&a, &b, &pooling, job.hvs.bank, None)?;
    let regions = hvsq_by_region(&a, &b, &pooling, job.hvs.bank, &map.pixel_level, map.level_count)?;
    print_json(&serde_json::json!({
        "hvsq": total,
        "regions": regions,
        "region_fractions": map.region_fractions(),
    }));
    Ok(())
}

fn load_workload(job: &JobConfig) -> Result<WorkloadFile, Failure> {
    Ok(WorkloadFile::load(job.workload_path()?)?)
}

fn simulate(job: &JobConfig) -> Result<(), Failure> {
    let w = load_workload(job)?;
    let cost = fovsplat::sim::CostModel { tile_size: w.tile_size, ..job.cost };
    let counts: Vec<u64> = w.counts.iter().map(|&c| c as u64).collect();
    let traces = simulate_all(&counts, job.simulate.points, &cost)?;
    let base = traces[0].makespan.max(1) as f64;
    emit(&format!(
        "{:<10} {:>12} {:>8} {:>7} {:>9} {:>11}",
        "config", "makespan", "speedup", "groups", "sort_util", "raster_util"
    ));
    for t in &traces {
        let util = |name: &str| {
            t.stage(name)
                .map(|s| if t.makespan == 0 { 0.0 } else { s.busy as f64 / t.makespan as f64 })
                .unwrap_or(0.0)
        };
        emit(&format!(
            "{:<10} {:>12} {:>8.3} {:>7} {:>9.3} {:>11.3}",
            t.features.label(),
            t.makespan,
            base / t.makespan.max(1) as f64,
            t.groups,
            util("sort"),
            util("raster")
        ));
    }
    if let Some(dir) = &job.paths.output {
        let mut out = Outputs::create(dir)?;
        out.write_json("traces.json", &traces)?;
        out.finish();
    }
    Ok(())
}

fn stats(job: &JobConfig) -> Result<(), Failure> {
    let w = load_workload(job)?;
    let counts: Vec<u64> = w.counts.iter().map(|&c| c as u64).collect();
    print_json(&imbalance_report(&counts, w.tiles_x, w.tiles_y));
    Ok(())
}

fn serve_cmd(job: &JobConfig) -> Result<(), Failure> {
    let model = load(job)?;
    let s = &job.serve;
    let addr: std::net::SocketAddr = s
        .bind
        .parse()
        .map_err(|e| Failure::Config(format!("bad bind address `{}`: {e}", s.bind)))?;
    let opts = ServeOptions {
        width: s.width,
        height: s.height,
        pixels_per_degree: s.pixels_per_degree,
        orbit: s.orbit,
        foveation: job.foveation.clone(),
        raster: job.raster,
    };
    s.orbit.camera(s.width, s.height)?;
    fovsplat::DisplayGeometry::centered(s.width, s.height, s.pixels_per_degree)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::Runtime(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| Failure::Runtime(e.to_string()))?;
        eprintln!("serving ws://{local}/ws");
        serve(listener, model, opts).await.map_err(|e| Failure::Runtime(e.to_string()))
    })
}
