use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageReader, RgbImage};

use super::SamplePair;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Image/mask pairs listed in a manifest file, relative to `root`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub pairs: Vec<(PathBuf, PathBuf)>,
    pub split: Split,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Loads every sample in listed order.
    pub fn load_all(&self) -> Result<Vec<SamplePair>> {
        (0..self.len()).map(|i| load_sample(self, i)).collect()
    }
}

/// Parses manifest text: one `image mask` pair per line, blank lines and `#`
/// comments ignored. A `# split: test` comment marks a test split.
pub fn parse_manifest(text: &str, root: &Path, origin: &Path) -> Result<DatasetManifest> {
    let mut pairs = Vec::new();
    let mut split = Split::Train;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(tag) = comment.trim().strip_prefix("split:") {
                split = match tag.trim() {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    other => {
                        return Err(Error::Manifest {
                            path: origin.to_path_buf(),
                            line: i + 1,
                            msg: format!("unknown split `{other}`"),
                        })
                    }
                };
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [img, mask] => pairs.push((PathBuf::from(img), PathBuf::from(mask))),
            _ => {
                return Err(Error::Manifest {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected `image mask`, found {} fields", fields.len()),
                })
            }
        }
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        pairs,
        split,
    })
}

/// Reads a manifest; listed paths are relative to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, root, path)
}

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = ImageReader::open(path)?.with_guessed_format()?.decode()?;
    use image::ColorType::*;
    match img.color() {
        L8 | La8 | Rgb8 | Rgba8 => Ok(img),
        other => Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            format: format!("{other:?}"),
        }),
    }
}

/// An 8-bit image as a `1 x 3 x H x W` tensor in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Tensor<f32>> {
    let rgb = open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut t = Tensor::zeros([1, 3, h, w]);
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            t.set(0, c, y as usize, x as usize, px[c] as f32 / 255.0);
        }
    }
    Ok(t)
}

/// An 8-bit mask thresholded at 128 into `{0, 1}`, shaped `1 x 1 x H x W`.
pub fn load_mask(path: &Path) -> Result<Tensor<f32>> {
    let gray = open(path)?.to_luma8();
    let (w, h) = gray.dimensions();
    let data = gray
        .pixels()
        .map(|p| if p[0] >= 128 { 1.0 } else { 0.0 })
        .collect();
    Tensor::new([1, 1, h as usize, w as usize], data)
}

pub fn load_sample(manifest: &DatasetManifest, idx: usize) -> Result<SamplePair> {
    let (img_rel, mask_rel) = manifest.pairs.get(idx).ok_or_else(|| {
        crate::error::invalid(
            "load_sample",
            format!("index {idx} out of range for {} pairs", manifest.len()),
        )
    })?;
    let img_path = manifest.root.join(img_rel);
    let mask_path = manifest.root.join(mask_rel);
    let image = load_image(&img_path)?;
    let mask = load_mask(&mask_path)?;
    if (image.h(), image.w()) != (mask.h(), mask.w()) {
        return Err(Error::SizeMismatch {
            image: img_path,
            mask: mask_path,
            image_dims: (image.w() as u32, image.h() as u32),
            mask_dims: (mask.w() as u32, mask.h() as u32),
        });
    }
    Ok(SamplePair { image, mask })
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes the first plane of a mask or probability map as 8-bit grayscale.
/// The format follows the extension (`png`, `pgm`).
pub fn save_mask(path: &Path, probs: &Tensor<f32>) -> Result<()> {
    let (h, w) = (probs.h(), probs.w());
    let bytes = probs.plane(0, 0).iter().map(|&v| to_byte(v)).collect();
    let img = GrayImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches size");
    img.save(path)?;
    Ok(())
}

/// Writes the first image of an RGB tensor as 8-bit color.
pub fn save_image(path: &Path, image: &Tensor<f32>) -> Result<()> {
    let (h, w) = (image.h(), image.w());
    let mut img = RgbImage::new(w as u32, h as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        for c in 0..3 {
            px[c] = to_byte(image.at(0, c, y as usize, x as usize));
        }
    }
    img.save(path)?;
    Ok(())
}

/// Saves samples as `images/NNNN.png` and `masks/NNNN.png` under `dir` and
/// writes `dir/manifest.txt`.
pub fn write_dataset(dir: &Path, samples: &[SamplePair], split: Split) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let mut manifest = format!("# split: {}\n", split.name());
    for (i, s) in samples.iter().enumerate() {
        let img = format!("images/{i:04}.png");
        let mask = format!("masks/{i:04}.png");
        save_image(&dir.join(&img), &s.image)?;
        save_mask(&dir.join(&mask), &s.mask)?;
        manifest.push_str(&format!("{img} {mask}\n"));
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Luma};
    use rand::{Rng, SeedableRng};

    #[test]
    fn mask_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mask = Tensor::from_fn([1, 1, 9, 13], |_, _, _, _| {
            if rng.gen_bool(0.4) {
                1.0
            } else {
                0.0
            }
        });
        for ext in ["png", "pgm"] {
            let p = dir.path().join(format!("m.{ext}"));
            save_mask(&p, &mask).unwrap();
            assert_eq!(load_mask(&p).unwrap(), mask);
        }
    }

    #[test]
    fn manifest_lists_pairs_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<_> = (0..3)
            .map(|i| SamplePair {
                image: Tensor::full([1, 3, 4, 6], i as f32 / 4.0),
                mask: Tensor::from_fn([1, 1, 4, 6], |_, _, y, _| if y < i { 1.0 } else { 0.0 }),
            })
            .collect();
        let path = write_dataset(dir.path(), &samples, Split::Test).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.split, Split::Test);
        let loaded = m.load_all().unwrap();
        assert_eq!(loaded.len(), 3);
        for (a, b) in loaded.iter().zip(&samples) {
            assert_eq!(a.mask, b.mask);
            assert!(a.image.max_abs_diff(&b.image) <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn comments_and_bad_lines() {
        let root = Path::new("/data");
        let m = parse_manifest("# header\n\n a.png  b.png \n# c d\n", root, root).unwrap();
        assert_eq!(m.pairs, vec![(PathBuf::from("a.png"), PathBuf::from("b.png"))]);
        let err = parse_manifest("a.png\n", root, root).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 1, .. }));
    }

    #[test]
    fn distinct_load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        save_image(&d.join("img.png"), &Tensor::zeros([1, 3, 4, 4])).unwrap();
        save_mask(&d.join("small.png"), &Tensor::zeros([1, 1, 2, 4])).unwrap();
        let deep: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(4, 4);
        deep.save(d.join("deep.png")).unwrap();
        let manifest = |mask: &str| DatasetManifest {
            root: d.to_path_buf(),
            pairs: vec![("img.png".into(), mask.into())],
            split: Split::Train,
        };
        assert!(matches!(
            load_sample(&manifest("nope.png"), 0),
            Err(Error::MissingFile(_))
        ));
        assert!(matches!(
            load_sample(&manifest("small.png"), 0),
            Err(Error::SizeMismatch { .. })
        ));
        assert!(matches!(
            load_sample(&manifest("deep.png"), 0),
            Err(Error::UnsupportedBitDepth { .. })
        ));
        assert!(matches!(
            load_manifest(&d.join("missing.txt")),
            Err(Error::MissingFile(_))
        ));
    }
}
