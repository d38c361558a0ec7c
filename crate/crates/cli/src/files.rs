use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use tremor_core::imaging::{read_raster, write_raster, Raster};
use tremor_core::pipeline::{read_annotations, BuildingDetection, MANIFEST_NAME};
use tremor_core::synth::{SceneSet, TruthBuilding};

use crate::{CliError, CliResult};

pub const PRE_RASTER: &str = "pre.ras";
pub const POST_RASTER: &str = "post.ras";
pub const BUILDINGS: &str = "buildings.json";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const DETECTIONS: &str = "detections.json";

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    if !path.exists() {
        return Err(CliError::Data(format!("missing file {}", path.display())));
    }
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref())).map_err(fail)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Accepts a manifest file or a directory containing one.
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_NAME)
    } else {
        p.to_path_buf()
    }
}

fn write_raster_file(path: &Path, r: &Raster) -> CliResult<()> {
    let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    write_raster(r, BufWriter::new(f)).map_err(|e| io_err(path, e))
}

fn read_raster_file(path: &Path) -> CliResult<Raster> {
    if !path.exists() {
        return Err(CliError::Data(format!("missing file {}", path.display())));
    }
    let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
    Ok(read_raster(BufReader::new(f), &path.display().to_string())?)
}

/// Writes a scene and its raw detector output into `dir`.
pub fn write_scene(dir: &Path, scene: &SceneSet, detections: &[BuildingDetection]) -> CliResult<()> {
    create_dir(dir)?;
    write_raster_file(&dir.join(PRE_RASTER), &scene.pre)?;
    write_raster_file(&dir.join(POST_RASTER), &scene.post)?;
    write_json(&dir.join(BUILDINGS), &scene.buildings)?;
    let path = dir.join(ANNOTATIONS);
    let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut out = BufWriter::new(f);
    for a in &scene.annotations {
        writeln!(out, "{}", serde_json::to_string(a).expect("serializable")).map_err(|e| io_err(&path, e))?;
    }
    out.flush().map_err(|e| io_err(&path, e))?;
    write_json(&dir.join(DETECTIONS), detections)
}

/// Reads a scene directory written by [`write_scene`]. The region id is
/// the directory name.
pub fn read_scene(dir: &Path) -> CliResult<(SceneSet, Vec<BuildingDetection>)> {
    let region_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "region".into());
    let pre = read_raster_file(&dir.join(PRE_RASTER))?;
    let post = read_raster_file(&dir.join(POST_RASTER))?;
    let buildings: Vec<TruthBuilding> = read_json(&dir.join(BUILDINGS))?;
    let ann_path = dir.join(ANNOTATIONS);
    let text = read_text(&ann_path)?;
    let annotations = read_annotations(text.as_bytes(), &ann_path.display().to_string())?;
    let detections = read_json(&dir.join(DETECTIONS))?;
    let scene = SceneSet {
        region_id,
        pre,
        post,
        buildings,
        annotations,
    };
    Ok((scene, detections))
}
