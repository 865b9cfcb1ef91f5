//! Uniform cell-centered voxel grids, cell labels, fields, quadrature and
//! discrete gradients.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::geometry::{Point3, SceneSpec, Vec3};

pub const MIN_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    /// Lower corner of the box; cell (i,j,k) is centered at origin + (i+½,j+½,k+½)h.
    pub origin: Point3,
    pub h: f64,
    pub dims: [usize; 3],
    pub sponge_thickness: usize,
}

impl Grid3 {
    pub fn new(origin: Point3, h: f64, dims: [usize; 3], sponge_thickness: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return config(format!("grid spacing must be positive, got {h}"));
        }
        if dims.iter().any(|&d| d < MIN_DIM) {
            return config(format!("grid dims must be at least {MIN_DIM}, got {dims:?}"));
        }
        if dims.iter().any(|&d| 2 * sponge_thickness >= d) {
            return config("sponge thicker than half the box");
        }
        Ok(Self { origin, h, dims, sponge_thickness })
    }

    /// Smallest box containing every body with the given clearance, shifted
    /// so that `anchor` is a cell center.
    pub fn fitted(scene: &SceneSpec, h: f64, sponge_thickness: usize, clearance: f64, anchor: &Point3) -> Result<Self> {
        let (lo, hi) = scene_bounds(scene);
        let lo = lo - Vec3::repeat(clearance);
        let hi = hi + Vec3::repeat(clearance);
        let mut origin = Point3::zeros();
        let mut dims = [0usize; 3];
        for k in 0..3 {
            let below = ((anchor[k] - lo[k]) / h - 0.5).ceil().max(0.0);
            origin[k] = anchor[k] - (below + 0.5) * h;
            dims[k] = (((hi[k] - origin[k]) / h).ceil() as usize).max(MIN_DIM);
        }
        Self::new(origin, h, dims, sponge_thickness)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn center(&self, idx: usize) -> Point3 {
        let [i, j, k] = self.ijk(idx);
        self.center_ijk(i, j, k)
    }

    pub fn center_ijk(&self, i: usize, j: usize, k: usize) -> Point3 {
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.h
    }

    pub fn upper(&self) -> Point3 {
        self.origin + Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.h
    }

    /// Cell containing `x`, if inside the box.
    pub fn locate(&self, x: &Point3) -> Option<usize> {
        let mut c = [0usize; 3];
        for k in 0..3 {
            let f = ((x[k] - self.origin[k]) / self.h).floor();
            if f < 0.0 || f >= self.dims[k] as f64 {
                return None;
            }
            c[k] = f as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    /// Distance from the scene's bounding box to the nearest box face.
    pub fn clearance(&self, scene: &SceneSpec) -> f64 {
        let (lo, hi) = scene_bounds(scene);
        let up = self.upper();
        (0..3).map(|k| (lo[k] - self.origin[k]).min(up[k] - hi[k])).fold(f64::INFINITY, f64::min)
    }

    pub fn check_clearance(&self, scene: &SceneSpec) -> Result<()> {
        let need = (self.sponge_thickness as f64 + 2.0) * self.h;
        let have = self.clearance(scene);
        if have < need {
            return config(format!("box clearance {have:.4} is below sponge + 2 cells = {need:.4}"));
        }
        Ok(())
    }

    /// Cells between the box face and the cell, counted from 0 at the face.
    pub fn face_depth(&self, i: usize, j: usize, k: usize) -> usize {
        let d = self.dims;
        [i, d[0] - 1 - i, j, d[1] - 1 - j, k, d[2] - 1 - k].into_iter().min().unwrap()
    }
}

pub fn scene_bounds(scene: &SceneSpec) -> (Point3, Point3) {
    let s = &scene.source;
    let mut lo = s.center - Vec3::repeat(s.radius);
    let mut hi = s.center + Vec3::repeat(s.radius);
    for b in scene.d0_bodies.iter().chain(&scene.d_bodies) {
        let (l, u) = b.aabb();
        lo = lo.inf(&l);
        hi = hi.sup(&u);
    }
    (lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Label {
    Exterior,
    D0Solid,
    DSolid,
    SourceB,
    Sponge,
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exterior" => Ok(Label::Exterior),
            "d0_solid" => Ok(Label::D0Solid),
            "d_solid" => Ok(Label::DSolid),
            "source_b" | "source_B" => Ok(Label::SourceB),
            "sponge" => Ok(Label::Sponge),
            other => domain(format!("unknown region label '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub grid: Grid3,
    pub labels: Vec<Label>,
}

impl Mask {
    #[inline]
    pub fn is_solid(&self, idx: usize, include_d: bool) -> bool {
        match self.labels[idx] {
            Label::D0Solid => true,
            Label::DSolid => include_d,
            _ => false,
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn cells(&self, label: Label) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn has_d(&self) -> bool {
        self.labels.contains(&Label::DSolid)
    }
}

/// Labels each cell by where its center lies.
pub fn voxelize(scene: &SceneSpec, grid: &Grid3) -> Result<Mask> {
    grid.check_clearance(scene)?;
    let s = grid.sponge_thickness;
    let mut labels = Vec::with_capacity(grid.len());
    let boxes: Vec<_> = scene.d0_bodies.iter().chain(&scene.d_bodies).map(|b| b.aabb()).collect();
    let n0 = scene.d0_bodies.len();
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let x = grid.center_ijk(i, j, k);
                let mut label = if grid.face_depth(i, j, k) < s { Label::Sponge } else { Label::Exterior };
                if scene.source.contains(&x) {
                    label = Label::SourceB;
                }
                for (n, b) in scene.d0_bodies.iter().chain(&scene.d_bodies).enumerate() {
                    let (lo, hi) = boxes[n];
                    if (0..3).all(|a| x[a] >= lo[a] && x[a] <= hi[a]) && b.contains(&x) {
                        label = if n < n0 { Label::D0Solid } else { Label::DSolid };
                        break;
                    }
                }
                labels.push(label);
            }
        }
    }
    Ok(Mask { grid: grid.clone(), labels })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid3,
    pub data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FieldHeader {
    pub name: String,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub h: f64,
    pub dtype: String,
    pub order: String,
}

impl ScalarField {
    pub fn zeros(grid: &Grid3) -> Self {
        Self { grid: grid.clone(), data: vec![0.0; grid.len()] }
    }

    pub fn from_vec(grid: &Grid3, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return domain("field length does not match the grid");
        }
        Ok(Self { grid: grid.clone(), data })
    }

    pub fn from_fn(grid: &Grid3, f: impl Fn(&Point3) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(&grid.center(i))).collect();
        Self { grid: grid.clone(), data }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.index(i, j, k)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `<dir>/<name>.bin` (little-endian f64, x fastest) and the
    /// `<dir>/<name>.json` header.
    pub fn write_binary(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let bin = dir.join(format!("{name}.bin"));
        let mut buf = Vec::with_capacity(8 * self.data.len());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fs::File::create(&bin)?.write_all(&buf)?;
        let header = FieldHeader {
            name: name.to_string(),
            dims: self.grid.dims,
            origin: [self.grid.origin.x, self.grid.origin.y, self.grid.origin.z],
            h: self.grid.h,
            dtype: "f64-le".into(),
            order: "x-fastest".into(),
        };
        let text = serde_json::to_string_pretty(&header).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join(format!("{name}.json")), text)?;
        Ok(bin)
    }

    pub fn read_binary(dir: &Path, name: &str) -> Result<(FieldHeader, Vec<f64>)> {
        let text = fs::read_to_string(dir.join(format!("{name}.json")))?;
        let header: FieldHeader = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        let mut bytes = Vec::new();
        fs::File::open(dir.join(format!("{name}.bin")))?.read_to_end(&mut bytes)?;
        let n = header.dims.iter().product::<usize>();
        if bytes.len() != 8 * n {
            return Err(Error::Format(format!("{name}.bin holds {} bytes, expected {}", bytes.len(), 8 * n)));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((header, data))
    }
}

/// Midpoint rule over the cells carrying `region`.
pub fn integrate(field: &ScalarField, mask: &Mask, region: Label) -> f64 {
    let mut s = 0.0;
    for (v, l) in field.data.iter().zip(&mask.labels) {
        if *l == region {
            s += v;
        }
    }
    s * mask.grid.cell_volume()
}

/// Like [`integrate`] with the region given by name.
pub fn integrate_named(field: &ScalarField, mask: &Mask, region: &str) -> Result<f64> {
    Ok(integrate(field, mask, region.parse()?))
}

/// Central differences where both neighbours are fluid cells inside the
/// box, one-sided next to solids or the box face. Solid cells get 0.
pub fn gradient(field: &ScalarField, mask: &Mask, include_d: bool) -> [ScalarField; 3] {
    let g = &mask.grid;
    let mut out = [ScalarField::zeros(g), ScalarField::zeros(g), ScalarField::zeros(g)];
    let strides = [1, g.dims[0], g.dims[0] * g.dims[1]];
    for idx in 0..g.len() {
        if mask.is_solid(idx, include_d) {
            continue;
        }
        let c = g.ijk(idx);
        let u = field.data[idx];
        for a in 0..3 {
            let lo = c[a] > 0 && !mask.is_solid(idx - strides[a], include_d);
            let hi = c[a] + 1 < g.dims[a] && !mask.is_solid(idx + strides[a], include_d);
            out[a].data[idx] = match (lo, hi) {
                (true, true) => (field.data[idx + strides[a]] - field.data[idx - strides[a]]) / (2.0 * g.h),
                (false, true) => (field.data[idx + strides[a]] - u) / g.h,
                (true, false) => (u - field.data[idx - strides[a]]) / g.h,
                (false, false) => 0.0,
            };
        }
    }
    out
}
