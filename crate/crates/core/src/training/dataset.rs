use std::fs;
use std::path::{Path, PathBuf};

use super::TrainingSample;
use crate::error::{Error, Result};
use crate::imagecore::rng::{derive_seed, SplitMix64};
use crate::imagecore::{add_gaussian_noise, crop_patches, load_image, Image};

const CROP_STREAM: u64 = 1;
const LEVEL_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// Everything needed to rebuild one training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecipe {
    /// Index of the source image in sorted order.
    pub source: usize,
    pub clean: Image,
    pub level_index: usize,
    pub noise_seed: u64,
}

/// Crops `patches_per_image` patches from every image and assigns each a
/// noise level uniformly from the grid. Sample `s` (image-major order) gets
/// noise seed `derive_seed(derive_seed(seed, 3), s)`.
pub fn plan_training_set(
    images: &[Image],
    patch_size: usize,
    patches_per_image: usize,
    num_levels: usize,
    seed: u64,
) -> Result<Vec<SampleRecipe>> {
    if images.is_empty() {
        return Err(Error::Empty("no training images".into()));
    }
    if num_levels == 0 {
        return Err(Error::InvalidArgument("sigma grid is empty".into()));
    }
    let crop_master = derive_seed(seed, CROP_STREAM);
    let noise_master = derive_seed(seed, NOISE_STREAM);
    let mut levels = SplitMix64::new(derive_seed(seed, LEVEL_STREAM));
    let mut out = Vec::with_capacity(images.len() * patches_per_image);
    for (n, img) in images.iter().enumerate() {
        let patches = crop_patches(img, patch_size, patches_per_image, derive_seed(crop_master, n as u64))?;
        for clean in patches {
            let s = out.len() as u64;
            out.push(SampleRecipe {
                source: n,
                clean,
                level_index: levels.below(num_levels as u64) as usize,
                noise_seed: derive_seed(noise_master, s),
            });
        }
    }
    Ok(out)
}

pub fn realize_samples(recipes: &[SampleRecipe], sigma_grid: &[f64]) -> Result<Vec<TrainingSample>> {
    recipes
        .iter()
        .map(|r| {
            let sigma = *sigma_grid
                .get(r.level_index)
                .ok_or_else(|| Error::IndexOutOfRange(format!("level {} of {}", r.level_index, sigma_grid.len())))?;
            let noisy = add_gaussian_noise(&r.clean, sigma, r.noise_seed)?;
            TrainingSample::new(noisy, r.clean.clone(), r.level_index)
        })
        .collect()
}

pub fn make_training_set_from_images(
    images: &[Image],
    patch_size: usize,
    patches_per_image: usize,
    sigma_grid: &[f64],
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    let recipes = plan_training_set(images, patch_size, patches_per_image, sigma_grid.len(), seed)?;
    realize_samples(&recipes, sigma_grid)
}

/// `.pgm` and `.png` files of a directory in file-name order.
pub(crate) fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty(format!("no .pgm or .png images in {}", dir.display())));
    }
    Ok(files)
}

pub fn make_training_set(
    image_dir: impl AsRef<Path>,
    patch_size: usize,
    patches_per_image: usize,
    sigma_grid: &[f64],
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    let images = image_files(image_dir.as_ref())?
        .iter()
        .map(load_image)
        .collect::<Result<Vec<_>>>()?;
    make_training_set_from_images(&images, patch_size, patches_per_image, sigma_grid, seed)
}
