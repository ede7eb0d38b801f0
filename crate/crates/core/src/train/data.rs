use std::fs;
use std::path::{Path, PathBuf};

use crate::codec::read_image;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest centered square, bilinearly resized to `side × side`.
pub fn square_resize(img: &Tensor, side: usize) -> Tensor {
    let sq = img.center_crop_square();
    if sq.height() == side {
        sq
    } else {
        sq.resize_bilinear(side, side)
    }
}

/// Every decodable image in `dir` (lexicographic order), squared and resized.
/// Undecodable files are skipped with a warning.
pub fn load_content_set(dir: &Path, side: usize) -> Result<Vec<(PathBuf, Tensor)>> {
    if side == 0 {
        return Err(Error::InvalidArgument("image side must be positive".into()));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        match read_image(&p) {
            Ok(img) => out.push((p, square_resize(&img, side))),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    if out.is_empty() {
        return Err(Error::NoImages(dir.to_path_buf()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::write_image;

    #[test]
    fn crop_is_centered() {
        let img = Tensor::from_fn(3, 60, 100, |_, _, x| x as f64);
        let sq = img.center_crop_square();
        assert_eq!((sq.height(), sq.width()), (60, 60));
        assert_eq!(sq.get(0, 0, 0), 20.0);
        let small = square_resize(&img, 32);
        assert_eq!((small.height(), small.width()), (32, 32));
    }

    #[test]
    fn side_sized_square_passes_through() {
        let img = Tensor::from_fn(3, 16, 16, |c, y, x| (c + y * x) as f64 / 300.0);
        assert_eq!(square_resize(&img, 16), img);
    }

    #[test]
    fn directory_order_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        for (i, name) in ["b.ppm", "a.png", "c.ppm"].iter().enumerate() {
            let img = Tensor::filled(3, 8, 10, i as f64 / 4.0);
            write_image(&dir.path().join(name), &img).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "not an image").unwrap();
        let set = load_content_set(dir.path(), 8).unwrap();
        let names: Vec<_> = set.iter().map(|(p, _)| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, ["a.png", "b.ppm", "c.ppm"]);
        assert_eq!(set[1].1.get(0, 0, 0), 0.0);
    }

    #[test]
    fn empty_or_missing_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_content_set(dir.path(), 8), Err(Error::NoImages(_))));
        assert!(matches!(load_content_set(&dir.path().join("nope"), 8), Err(Error::Io { .. })));
    }
}
