use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{sigma_grid, CliError, CliResult, GenDataArgs};
use crate::error::Error;
use crate::imagecore::rng::derive_seed;
use crate::imagecore::{load_image, save_image, synthetic_scene, Image};
use crate::training::{image_files, plan_training_set, realize_samples, SampleRecipe, TrainingSample};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;
const SYNTHETIC_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    /// Patch path relative to the manifest.
    pub file: String,
    pub source: usize,
    pub level_index: usize,
    pub sigma: f64,
    pub noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub patch_size: usize,
    pub per_image: usize,
    pub seed: u64,
    pub sigma_grid: Vec<f64>,
    pub sources: Vec<String>,
    pub samples: Vec<ManifestSample>,
}

pub(crate) fn check_grid(grid: &[f64]) -> CliResult {
    if grid.is_empty() {
        return Err(CliError::Usage("the noise grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Usage("noise levels must be strictly increasing".into()));
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::from(Error::io(path, e)))
}

pub(crate) fn cmd_gen_data(args: &GenDataArgs) -> CliResult {
    let grid = sigma_grid(&args.grid).unwrap_or_else(|| (1..=50).map(f64::from).collect());
    check_grid(&grid)?;
    let (images, sources): (Vec<Image>, Vec<String>) = match (&args.source.images, args.source.synthetic) {
        (Some(dir), _) => {
            let files = image_files(dir)?;
            let mut images = Vec::with_capacity(files.len());
            let mut names = Vec::with_capacity(files.len());
            for f in &files {
                images.push(load_image(f)?);
                names.push(
                    f.file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                );
            }
            (images, names)
        }
        (None, Some(n)) => {
            let side = args.synthetic_size as usize;
            let master = derive_seed(args.seed, SYNTHETIC_STREAM);
            (0..n as u64)
                .map(|k| {
                    Ok((
                        synthetic_scene(side, side, derive_seed(master, k))?,
                        format!("synthetic-{k:05}"),
                    ))
                })
                .collect::<Result<Vec<_>, Error>>()?
                .into_iter()
                .unzip()
        }
        (None, None) => return Err(CliError::Usage("one of --images or --synthetic is required".into())),
    };
    let recipes = plan_training_set(
        &images,
        args.patch_size as usize,
        args.per_image as usize,
        grid.len(),
        args.seed,
    )?;
    let patch_dir = args.out.join("patches");
    fs::create_dir_all(&patch_dir).map_err(|e| CliError::from(Error::io(&patch_dir, e)))?;
    let mut samples = Vec::with_capacity(recipes.len());
    for (s, r) in recipes.iter().enumerate() {
        let file = format!("patches/{s:06}.pgm");
        save_image(&r.clean, args.out.join(&file))?;
        samples.push(ManifestSample {
            file,
            source: r.source,
            level_index: r.level_index,
            sigma: grid[r.level_index],
            noise_seed: r.noise_seed,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        patch_size: args.patch_size as usize,
        per_image: args.per_image as usize,
        seed: args.seed,
        sigma_grid: grid,
        sources,
        samples,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&args.out.join(MANIFEST_FILE), format!("{text}\n").as_bytes())?;
    println!(
        "wrote {} patches of {}x{} from {} images to {}",
        manifest.samples.len(),
        manifest.patch_size,
        manifest.patch_size,
        manifest.sources.len(),
        args.out.display()
    );
    Ok(())
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Reads a manifest (or the manifest inside a directory) and returns it with
/// the directory its patch paths are relative to.
pub fn load_manifest(path: &Path) -> Result<(Manifest, PathBuf), Error> {
    let file = manifest_path(path);
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Version {
            found: m.version,
            expected: MANIFEST_VERSION,
        });
    }
    if m.samples.iter().any(|s| s.level_index >= m.sigma_grid.len()) {
        return Err(Error::format("manifest", "level index outside the noise grid"));
    }
    let base = file.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((m, base))
}

/// Loads the patches of a manifest and adds their recorded noise.
pub(crate) fn load_samples(m: &Manifest, base: &Path) -> Result<Vec<TrainingSample>, Error> {
    if m.samples.is_empty() {
        return Err(Error::Empty("manifest lists no samples".into()));
    }
    let recipes = m
        .samples
        .iter()
        .map(|s| {
            Ok(SampleRecipe {
                source: s.source,
                clean: load_image(base.join(&s.file))?,
                level_index: s.level_index,
                noise_seed: s.noise_seed,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    realize_samples(&recipes, &m.sigma_grid)
}
