use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::num::{Real, Vec2};

#[derive(Debug, thiserror::Error)]
pub enum FieldIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

impl FieldIoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    fn format(path: &Path, msg: impl Into<String>) -> Self {
        Self::Format { path: path.display().to_string(), msg: msg.into() }
    }
}

/// Planar wind field in m/s on a cell-centered grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WindField<T> {
    width: usize,
    height: usize,
    cell_size: T,
    vx: Vec<T>,
    vy: Vec<T>,
    speed: Vec<T>,
    wall: Vec<bool>,
}

impl<T: Real> WindField<T> {
    /// Builds a field, zeroing wall cells and deriving speed.
    pub fn new(width: usize, height: usize, cell_size: T, mut vx: Vec<T>, mut vy: Vec<T>, wall: Vec<bool>) -> Option<Self> {
        let n = width * height;
        if vx.len() != n || vy.len() != n || wall.len() != n || !(cell_size > T::zero()) {
            return None;
        }
        for k in 0..n {
            if wall[k] {
                vx[k] = T::zero();
                vy[k] = T::zero();
            }
        }
        let speed = vx.iter().zip(&vy).map(|(x, y)| x.hypot(*y)).collect();
        Some(Self { width, height, cell_size, vx, vy, speed, wall })
    }

    /// Still air over the given grid shape.
    pub fn zero(width: usize, height: usize, cell_size: T, wall: Vec<bool>) -> Self {
        let n = width * height;
        Self::new(width, height, cell_size, vec![T::zero(); n], vec![T::zero(); n], wall).expect("consistent shape")
    }

    /// Same velocity in every non-wall cell.
    pub fn uniform(width: usize, height: usize, cell_size: T, u: Vec2<T>) -> Self {
        let n = width * height;
        Self::new(width, height, cell_size, vec![u.x; n], vec![u.y; n], vec![false; n]).expect("consistent shape")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> T {
        self.cell_size
    }

    pub fn vx(&self) -> &[T] {
        &self.vx
    }

    pub fn vy(&self) -> &[T] {
        &self.vy
    }

    pub fn speed(&self) -> &[T] {
        &self.speed
    }

    pub fn wall_mask(&self) -> &[bool] {
        &self.wall
    }

    pub fn velocity(&self, i: usize, j: usize) -> Vec2<T> {
        let k = j * self.width + i;
        Vec2::new(self.vx[k], self.vy[k])
    }

    pub fn is_wall(&self, i: usize, j: usize) -> bool {
        self.wall[j * self.width + i]
    }

    pub fn max_speed(&self) -> T {
        self.speed.iter().copied().fold(T::zero(), T::max)
    }

    /// Multiply every velocity by `k`.
    pub fn scaled(&self, k: T) -> Self {
        let vx = self.vx.iter().map(|v| *v * k).collect();
        let vy = self.vy.iter().map(|v| *v * k).collect();
        Self::new(self.width, self.height, self.cell_size, vx, vy, self.wall.clone()).expect("same shape")
    }

    /// Bilinear interpolation between cell centers; zero outside the domain,
    /// clamped to the edge centers within the outer half cell.
    pub fn sample(&self, p: Vec2<T>) -> Vec2<T> {
        let ext_x = self.cell_size * T::from_usize_lossy(self.width);
        let ext_y = self.cell_size * T::from_usize_lossy(self.height);
        if !p.is_finite() || p.x < T::zero() || p.y < T::zero() || p.x > ext_x || p.y > ext_y {
            return Vec2::zero();
        }
        let half = T::lit(0.5);
        let fx = (p.x / self.cell_size - half).max(T::zero()).min(T::from_usize_lossy(self.width - 1));
        let fy = (p.y / self.cell_size - half).max(T::zero()).min(T::from_usize_lossy(self.height - 1));
        let i0 = fx.floor().to_usize().unwrap_or(0).min(self.width - 2);
        let j0 = fy.floor().to_usize().unwrap_or(0).min(self.height - 2);
        let tx = fx - T::from_usize_lossy(i0);
        let ty = fy - T::from_usize_lossy(j0);
        let a = self.velocity(i0, j0);
        let b = self.velocity(i0 + 1, j0);
        let c = self.velocity(i0, j0 + 1);
        let d = self.velocity(i0 + 1, j0 + 1);
        a.lerp(b, tx).lerp(c.lerp(d, tx), ty)
    }

    /// Resample onto another cell grid (bilinear velocity, nearest-neighbor wall mask).
    pub fn resample(&self, width: usize, height: usize, cell_size: T) -> Self {
        let mut vx = Vec::with_capacity(width * height);
        let mut vy = Vec::with_capacity(width * height);
        let mut wall = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                let p = crate::env::cell_center(i, j, cell_size);
                let u = self.sample(p);
                vx.push(u.x);
                vy.push(u.y);
                let si = (p.x / self.cell_size).floor().to_usize().unwrap_or(0).min(self.width - 1);
                let sj = (p.y / self.cell_size).floor().to_usize().unwrap_or(0).min(self.height - 1);
                wall.push(self.is_wall(si, sj));
            }
        }
        Self::new(width, height, cell_size, vx, vy, wall).expect("consistent shape")
    }

    /// Legacy VTK structured points (ASCII) with `velocity` vectors and `wall_mask` and `speed` scalars.
    pub fn write_vtk(&self, path: &Path) -> Result<(), FieldIoError> {
        let file = std::fs::File::create(path).map_err(|e| FieldIoError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let n = self.width * self.height;
        let h = self.cell_size;
        let body = (|| -> std::io::Result<()> {
            writeln!(w, "# vtk DataFile Version 3.0")?;
            writeln!(w, "windplan wind field (m/s)")?;
            writeln!(w, "ASCII")?;
            writeln!(w, "DATASET STRUCTURED_POINTS")?;
            writeln!(w, "DIMENSIONS {} {} 1", self.width, self.height)?;
            writeln!(w, "ORIGIN {} {} 0", h * T::lit(0.5), h * T::lit(0.5))?;
            writeln!(w, "SPACING {h} {h} 1")?;
            writeln!(w, "POINT_DATA {n}")?;
            writeln!(w, "VECTORS velocity double")?;
            for k in 0..n {
                writeln!(w, "{} {} 0", self.vx[k], self.vy[k])?;
            }
            writeln!(w, "SCALARS wall_mask int 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for k in 0..n {
                writeln!(w, "{}", u8::from(self.wall[k]))?;
            }
            writeln!(w, "SCALARS speed double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for k in 0..n {
                writeln!(w, "{}", self.speed[k])?;
            }
            w.flush()
        })();
        body.map_err(|e| FieldIoError::io(path, e))
    }

    /// CSV of `i,j,x_m,y_m,vx,vy,speed,wall`, row-major from the south-west corner.
    pub fn write_csv(&self, path: &Path) -> Result<(), FieldIoError> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| FieldIoError::format(path, e.to_string()))?;
        let res = (|| -> csv::Result<()> {
            wtr.write_record(["i", "j", "x_m", "y_m", "vx", "vy", "speed", "wall"])?;
            for j in 0..self.height {
                for i in 0..self.width {
                    let k = j * self.width + i;
                    let c = crate::env::cell_center(i, j, self.cell_size);
                    wtr.write_record([
                        i.to_string(),
                        j.to_string(),
                        c.x.to_string(),
                        c.y.to_string(),
                        self.vx[k].to_string(),
                        self.vy[k].to_string(),
                        self.speed[k].to_string(),
                        u8::from(self.wall[k]).to_string(),
                    ])?;
                }
            }
            wtr.flush()?;
            Ok(())
        })();
        res.map_err(|e| FieldIoError::format(path, e.to_string()))
    }

    /// Read a field written by [`WindField::write_csv`]. Cell size is inferred from the centers.
    pub fn read_csv(path: &Path) -> Result<Self, FieldIoError> {
        let file = std::fs::File::open(path).map_err(|e| FieldIoError::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(BufReader::new(file));
        let mut rows: Vec<(usize, usize, f64, f64, f64, bool)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| FieldIoError::format(path, e.to_string()))?;
            let get = |k: usize| rec.get(k).ok_or_else(|| FieldIoError::format(path, "short row"));
            let num = |k: usize| -> Result<f64, FieldIoError> {
                get(k)?.parse::<f64>().map_err(|e| FieldIoError::format(path, e.to_string()))
            };
            let idx = |k: usize| -> Result<usize, FieldIoError> {
                get(k)?.parse::<usize>().map_err(|e| FieldIoError::format(path, e.to_string()))
            };
            rows.push((idx(0)?, idx(1)?, num(2)?, num(4)?, num(5)?, get(7)? == "1"));
        }
        let width = rows.iter().map(|r| r.0 + 1).max().ok_or_else(|| FieldIoError::format(path, "empty field"))?;
        let height = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        if rows.len() != width * height || width < 2 || height < 2 {
            return Err(FieldIoError::format(path, "field rows do not form a full grid"));
        }
        let cell_size = rows[0].2 / (rows[0].0 as f64 + 0.5);
        let n = width * height;
        let (mut vx, mut vy, mut wall) = (vec![T::zero(); n], vec![T::zero(); n], vec![false; n]);
        for (i, j, _, x, y, s) in rows {
            let k = j * width + i;
            vx[k] = T::lit(x);
            vy[k] = T::lit(y);
            wall[k] = s;
        }
        Self::new(width, height, T::lit(cell_size), vx, vy, wall)
            .ok_or_else(|| FieldIoError::format(path, "invalid cell size"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> WindField<f64> {
        let (w, h) = (5, 4);
        let vx = (0..w * h).map(|k| (k % w) as f64).collect();
        let vy = (0..w * h).map(|k| (k / w) as f64 * 2.0).collect();
        let mut wall = vec![false; w * h];
        wall[w * h - 1] = true;
        WindField::new(w, h, 0.5, vx, vy, wall).unwrap()
    }

    #[test]
    fn walls_are_zeroed_and_speed_is_hypot() {
        let f = ramp();
        assert_eq!(f.velocity(4, 3), Vec2::zero());
        for k in 0..20 {
            assert!((f.speed()[k] - f.vx()[k].hypot(f.vy()[k])).abs() <= 1e-12 * f.speed()[k]);
        }
    }

    #[test]
    fn bilinear_sampling() {
        let f = ramp();
        // between centers of (1,1) and (2,1): x = 1.0, y = 0.75
        let u = f.sample(Vec2::new(1.0, 0.75));
        assert!((u.x - 1.5).abs() < 1e-12 && (u.y - 2.0).abs() < 1e-12);
        assert_eq!(f.sample(Vec2::new(-0.1, 1.0)), Vec2::zero());
        assert_eq!(f.sample(Vec2::new(0.1, 0.1)), f.velocity(0, 0));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let f = ramp();
        f.write_csv(&p).unwrap();
        assert_eq!(WindField::<f64>::read_csv(&p).unwrap(), f);
    }

    #[test]
    fn vtk_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.vtk");
        ramp().write_vtk(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[4], "DIMENSIONS 5 4 1");
        assert_eq!(lines[8], "VECTORS velocity double");
        assert_eq!(lines[9 + 6], "1 2 0");
        assert_eq!(lines[9 + 20 + 2 + 19], "1");
    }
}
