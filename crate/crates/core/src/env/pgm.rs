use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, GrayImage, ImageEncoder, ImageReader, Luma};

use super::{Cell, EnvError, HeightMap, OccupancyGrid};
use crate::num::Real;

fn open(path: &Path) -> Result<DynamicImage, EnvError> {
    let shown = path.display().to_string();
    ImageReader::open(path)
        .map_err(|source| EnvError::Io { path: shown.clone(), source })?
        .with_guessed_format()
        .map_err(|source| EnvError::Io { path: shown.clone(), source })?
        .decode()
        .map_err(|e| EnvError::parse(&shown, e.to_string()))
}

/// Binary PGM occupancy: 0 is free, anything else solid. First image row is north.
pub fn read_occupancy_pgm<T: Real>(path: &Path, cell_size: T) -> Result<OccupancyGrid<T>, EnvError> {
    let img = open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut cells = vec![Cell::Free; w * h];
    for (x, y, px) in img.enumerate_pixels() {
        if px.0[0] != 0 {
            let j = h - 1 - y as usize;
            cells[j * w + x as usize] = Cell::Solid;
        }
    }
    OccupancyGrid::from_cells(w, h, cell_size, cells)
}

/// 8- or 16-bit PGM height map; each sample is multiplied by `scale` to get meters.
pub fn read_heightmap_pgm<T: Real>(path: &Path, scale: T, cell_size: T) -> Result<HeightMap<T>, EnvError> {
    let img = open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut heights = vec![T::zero(); w * h];
    for (x, y, px) in img.enumerate_pixels() {
        let j = h - 1 - y as usize;
        heights[j * w + x as usize] = T::lit(f64::from(px.0[0])) * scale;
    }
    HeightMap::new(w, h, cell_size, heights)
}

/// Write an occupancy grid as binary PGM (0 free, 255 solid).
pub fn write_occupancy_pgm<T: Real>(grid: &OccupancyGrid<T>, path: &Path) -> Result<(), EnvError> {
    let (w, h) = (grid.width(), grid.height());
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let j = h - 1 - y as usize;
        Luma([if grid.is_solid(x as usize, j) { 255 } else { 0 }])
    });
    write_gray_pgm(path, w, h, img.as_raw())
}

/// Binary 8-bit PGM from row-major pixels, first row at the top of the image.
pub(crate) fn write_gray_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<(), EnvError> {
    let shown = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|source| EnvError::Io { path: shown.clone(), source })?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, width as u32, height as u32, ExtendedColorType::L8)
        .map_err(|e| EnvError::parse(shown, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn occupancy_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        let mut g = OccupancyGrid::new(7, 5, 0.1_f64).unwrap();
        g.set(1, 0, Cell::Solid);
        g.set(6, 4, Cell::Solid);
        write_occupancy_pgm(&g, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], b"P5");
        assert_eq!(read_occupancy_pgm(&path, 0.1).unwrap(), g);
    }

    #[test]
    fn sixteen_bit_heightmap() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.pgm");
        // 16-bit binary graymap, big-endian samples
        let mut bytes = b"P5\n4 4\n65535\n".to_vec();
        for k in 0..16 {
            let v: u16 = if k == 0 { 1000 } else { 250 };
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let hm = read_heightmap_pgm(&path, 0.001_f64, 0.1).unwrap();
        // top-left pixel is the north-west cell
        assert_eq!(hm.get(0, 3), 1.0);
        assert_eq!(hm.get(2, 1), 0.25);
    }
}
