//! Image folders and random-crop batch sampling.

use std::path::{Path, PathBuf};

use rand::Rng;
use styler_grad::Tensor;

use crate::error::{Result, StylerError};
use crate::image::Image;

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Sorted list of the image files directly inside a directory.
///
/// Files that fail to decode are skipped with a warning and dropped from the
/// list; sampling fails once no readable file is left.
#[derive(Debug, Clone)]
pub struct ImageFolder {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl ImageFolder {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let entries = std::fs::read_dir(&root).map_err(|e| StylerError::io(&root, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| StylerError::io(&root, e))?.path();
            if path.is_file() && has_image_extension(&path) {
                files.push(path);
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(StylerError::Data(format!("{}: no image files", root.display())));
        }
        Ok(Self { root, files })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Decodes a uniformly drawn file, dropping undecodable ones.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(PathBuf, Image)> {
        while !self.files.is_empty() {
            let idx = rng.gen_range(0..self.files.len());
            match Image::load(&self.files[idx]) {
                Ok(img) => return Ok((self.files[idx].clone(), img)),
                Err(e) => {
                    log::warn!("skipping unreadable image: {e}");
                    self.files.remove(idx);
                }
            }
        }
        Err(StylerError::Data(format!("{}: no readable images left", self.root.display())))
    }
}

/// Rescales so the shorter side equals `resize`, then cuts a uniformly
/// placed `crop × crop` window.
pub fn random_crop<R: Rng + ?Sized>(img: &Image, resize: usize, crop: usize, rng: &mut R) -> Result<Image> {
    if crop == 0 || crop > resize {
        return Err(StylerError::Argument(format!("crop {crop} must be in 1..={resize}")));
    }
    let scaled = img.resize_shorter_side(resize)?;
    let x0 = rng.gen_range(0..=scaled.width() - crop);
    let y0 = rng.gen_range(0..=scaled.height() - crop);
    scaled.crop(x0, y0, crop, crop)
}

/// Draws `batch` images with replacement as a `[batch, 3, crop, crop]` tensor.
pub fn load_batch<R: Rng + ?Sized>(
    folder: &mut ImageFolder,
    batch: usize,
    resize: usize,
    crop: usize,
    rng: &mut R,
) -> Result<Tensor<f32>> {
    if batch == 0 {
        return Err(StylerError::Argument("batch size must be positive".into()));
    }
    let mut images = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (_, img) = folder.sample(rng)?;
        images.push(random_crop(&img, resize, crop, rng)?);
    }
    Image::batch(&images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageFormat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn write_image(dir: &Path, name: &str, w: usize, h: usize) {
        let img = Image::from_fn(w, h, |c, y, x| ((c + y + x) % 7) as f32 / 7.0).unwrap();
        img.save(dir.join(name), ImageFormat::Png).unwrap();
    }

    #[test]
    fn lists_sorted_images_only() {
        let dir = tempfile::tempdir().unwrap();
        write_image(dir.path(), "b.png", 20, 20);
        write_image(dir.path(), "a.png", 20, 20);
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let folder = ImageFolder::open(dir.path()).unwrap();
        let names: Vec<_> = folder.files().iter().map(|p| p.file_name().unwrap().to_owned()).collect();
        assert_eq!(names, ["a.png", "b.png"]);
    }

    #[test]
    fn empty_folder_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(ImageFolder::open(dir.path()), Err(StylerError::Data(_))));
    }

    #[test]
    fn corrupt_files_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        write_image(dir.path(), "good.png", 24, 30);
        std::fs::write(dir.path().join("bad.png"), b"not an image").unwrap();
        let mut folder = ImageFolder::open(dir.path()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..8 {
            let (path, _) = folder.sample(&mut rng).unwrap();
            assert!(path.ends_with("good.png"));
        }
        assert_eq!(folder.len(), 1);
    }

    #[test]
    fn all_corrupt_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.png"), b"nope").unwrap();
        let mut folder = ImageFolder::open(dir.path()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(folder.sample(&mut rng), Err(StylerError::Data(_))));
    }

    #[test]
    fn batch_has_requested_shape() {
        let dir = tempfile::tempdir().unwrap();
        write_image(dir.path(), "a.png", 40, 25);
        let mut folder = ImageFolder::open(dir.path()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = load_batch(&mut folder, 3, 24, 16, &mut rng).unwrap();
        assert_eq!(t.shape(), &[3, 3, 16, 16]);
    }
}
