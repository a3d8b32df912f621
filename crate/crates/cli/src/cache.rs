//! On-disk RIR cache keyed by a hash of everything that shapes the responses.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use sha2::{Digest, Sha256};
use vastzones::room::{
    generate_anechoic_rirs, generate_image_source_rirs, read_rir_set, write_rir_set, RirSet, RoomSpec,
    SceneGeometry,
};

pub const CACHE_ENV: &str = "VASTZONES_CACHE";

/// Bumped whenever the generator's output changes for the same inputs.
const GENERATOR_REVISION: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheStatus {
    Disabled,
    Hit(PathBuf),
    Stored(PathBuf),
}

pub fn cache_key(scene: &SceneGeometry, room: &RoomSpec, k_taps: usize, max_order: usize) -> String {
    let mut h = Sha256::new();
    // Debug output prints f64 in shortest round-trip form, so it is exact.
    h.update(format!("rev {GENERATOR_REVISION}\n{scene:?}\n{room:?}\nK {k_taps}\norder {max_order}\n"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn generate(scene: &SceneGeometry, room: &RoomSpec, k_taps: usize, max_order: usize) -> Result<RirSet> {
    let rirs = if room.is_anechoic() {
        generate_anechoic_rirs(scene, room, k_taps)
    } else {
        generate_image_source_rirs(scene, room, k_taps, max_order)
    };
    rirs.context("RIR generation")
}

fn load(path: &Path) -> Result<RirSet> {
    Ok(read_rir_set(BufReader::new(File::open(path)?))?)
}

fn store(dir: &Path, path: &Path, rirs: &RirSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    write_rir_set(BufWriter::new(File::create(&tmp)?), rirs)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads cached responses when `cache_dir` holds a matching entry, otherwise
/// generates and stores them. Cache faults degrade to regeneration.
pub fn load_or_generate(
    cache_dir: Option<&Path>,
    scene: &SceneGeometry,
    room: &RoomSpec,
    k_taps: usize,
    max_order: usize,
) -> Result<(RirSet, CacheStatus)> {
    let Some(dir) = cache_dir else {
        return Ok((generate(scene, room, k_taps, max_order)?, CacheStatus::Disabled));
    };
    let path = dir.join(format!("{}.vzrir", cache_key(scene, room, k_taps, max_order)));
    if path.is_file() {
        match load(&path) {
            Ok(rirs) if rirs.points() == scene.receiver_count() && rirs.taps() == k_taps => {
                info!("RIRs loaded from {}", path.display());
                return Ok((rirs, CacheStatus::Hit(path)));
            }
            Ok(_) => warn!("cached RIRs at {} do not match the scene; regenerating", path.display()),
            Err(e) => warn!("unreadable RIR cache entry {}: {e:#}; regenerating", path.display()),
        }
    }
    let rirs = generate(scene, room, k_taps, max_order)?;
    match store(dir, &path, &rirs) {
        Ok(()) => Ok((rirs, CacheStatus::Stored(path))),
        Err(e) => {
            warn!("could not write RIR cache {}: {e:#}", path.display());
            Ok((rirs, CacheStatus::Disabled))
        }
    }
}
