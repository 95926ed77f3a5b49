//! Occupancy grid with a precomputed Euclidean distance field.
//!
//! Cell `(cx, cy)` has its center at `((cx + 0.5) res, (cy + 0.5) res)`; the
//! field stores the exact distance from each center to the nearest occupied
//! center and is bilinearly interpolated between centers. Outside the hull of
//! cell centers the field is extended by the distance to the hull.

use std::fs;
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{invalid, Error, Result};

/// Interpolated distance, its gradient, and whether the query was clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub distance: f64,
    pub gradient: Vector2<f64>,
    pub outside: bool,
}

#[derive(Clone, Debug)]
pub struct GridMap2D {
    width: usize,
    height: usize,
    resolution: f64,
    occupied: Vec<bool>,
    /// Distance from each cell center to the nearest occupied center, meters.
    field: Vec<f64>,
    /// Index of the nearest occupied cell.
    nearest: Vec<usize>,
}

impl GridMap2D {
    /// Builds the map from a row-major bitmap with row 0 at `y = 0`.
    pub fn from_occupancy(
        width: usize,
        height: usize,
        resolution: f64,
        occupied: Vec<bool>,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(invalid("grid map must be at least 2 x 2"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(invalid("grid resolution must be positive"));
        }
        if occupied.len() != width * height {
            return Err(invalid("occupancy bitmap size does not match width x height"));
        }
        if !occupied.iter().any(|&o| o) {
            return Err(invalid("grid map has no occupied cells"));
        }
        let (sq, nearest) = squared_edt(width, height, &occupied);
        let field = sq.iter().map(|d2| d2.sqrt() * resolution).collect();
        Ok(Self {
            width,
            height,
            resolution,
            occupied,
            field,
            nearest,
        })
    }

    /// Parses the plain-text format: a header `width height resolution`
    /// followed by `height` rows of `width` characters, `#` occupied and `.`
    /// free. The first text row is the top of the map (largest `y`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::MapParse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || Error::MapParse {
            line: 1,
            msg: "header must be `width height resolution`".into(),
        };
        if fields.len() != 3 {
            return Err(bad_header());
        }
        let width: usize = fields[0].parse().map_err(|_| bad_header())?;
        let height: usize = fields[1].parse().map_err(|_| bad_header())?;
        let resolution: f64 = fields[2].parse().map_err(|_| bad_header())?;

        let mut rows = Vec::with_capacity(height);
        for (idx, line) in lines {
            let row = line.trim_end();
            if row.chars().count() != width {
                return Err(Error::MapParse {
                    line: idx + 1,
                    msg: format!("expected {width} cells, found {}", row.chars().count()),
                });
            }
            let mut cells = Vec::with_capacity(width);
            for c in row.chars() {
                cells.push(match c {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(Error::MapParse {
                            line: idx + 1,
                            msg: format!("unexpected cell character {other:?}"),
                        })
                    }
                });
            }
            rows.push(cells);
        }
        if rows.len() != height {
            return Err(Error::MapParse {
                line: rows.len() + 2,
                msg: format!("expected {height} rows, found {}", rows.len()),
            });
        }
        let mut occupied = vec![false; width * height];
        for (r, cells) in rows.iter().enumerate() {
            let cy = height - 1 - r;
            occupied[cy * width..(cy + 1) * width].copy_from_slice(cells);
        }
        Self::from_occupancy(width, height, resolution, occupied)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Inverse of [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.width, self.height, self.resolution);
        for cy in (0..self.height).rev() {
            for cx in 0..self.width {
                out.push(if self.is_occupied(cx, cy) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn is_occupied(&self, cx: usize, cy: usize) -> bool {
        self.occupied[cy * self.width + cx]
    }

    /// Field value at a cell center.
    pub fn cell_distance(&self, cx: usize, cy: usize) -> f64 {
        self.field[cy * self.width + cx]
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> Vector2<f64> {
        Vector2::new(
            (cx as f64 + 0.5) * self.resolution,
            (cy as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing `p`, if inside the map.
    pub fn cell_of(&self, p: Vector2<f64>) -> Option<(usize, usize)> {
        let u = (p.x / self.resolution).floor();
        let v = (p.y / self.resolution).floor();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|cy| (0..self.width).map(move |cx| (cx, cy)))
            .filter(|&(cx, cy)| !self.is_occupied(cx, cy))
            .collect()
    }

    /// Whether `p` lies within the hull of cell centers where the field is interpolated.
    pub fn contains(&self, p: Vector2<f64>) -> bool {
        let (lo, hi) = self.hull();
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
    }

    fn hull(&self) -> (Vector2<f64>, Vector2<f64>) {
        let half = 0.5 * self.resolution;
        (
            Vector2::new(half, half),
            Vector2::new(
                (self.width as f64 - 0.5) * self.resolution,
                (self.height as f64 - 0.5) * self.resolution,
            ),
        )
    }

    /// Distance to the nearest occupied cell center and its gradient.
    pub fn sample(&self, p: Vector2<f64>) -> FieldSample {
        let (lo, hi) = self.hull();
        let c = Vector2::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y));
        let (d, mut g) = self.bilinear(c);
        let offset = p - c;
        let off = offset.norm();
        if off == 0.0 {
            return FieldSample {
                distance: d,
                gradient: g,
                outside: false,
            };
        }
        // Clamped axes do not move c, so the interior gradient drops out there.
        if p.x != c.x {
            g.x = 0.0;
        }
        if p.y != c.y {
            g.y = 0.0;
        }
        FieldSample {
            distance: d + off,
            gradient: g + offset / off,
            outside: true,
        }
    }

    pub fn distance(&self, p: Vector2<f64>) -> f64 {
        self.sample(p).distance
    }

    /// Center of the occupied cell nearest to `p` (via the cell containing the clamped point).
    pub fn nearest_occupied(&self, p: Vector2<f64>) -> Vector2<f64> {
        let cx = ((p.x / self.resolution).floor().max(0.0) as usize).min(self.width - 1);
        let cy = ((p.y / self.resolution).floor().max(0.0) as usize).min(self.height - 1);
        let idx = self.nearest[cy * self.width + cx];
        self.cell_center(idx % self.width, idx / self.width)
    }

    fn bilinear(&self, p: Vector2<f64>) -> (f64, Vector2<f64>) {
        let u = p.x / self.resolution - 0.5;
        let v = p.y / self.resolution - 0.5;
        let i0 = (u.floor().max(0.0) as usize).min(self.width - 2);
        let j0 = (v.floor().max(0.0) as usize).min(self.height - 2);
        let fu = u - i0 as f64;
        let fv = v - j0 as f64;
        let f00 = self.cell_distance(i0, j0);
        let f10 = self.cell_distance(i0 + 1, j0);
        let f01 = self.cell_distance(i0, j0 + 1);
        let f11 = self.cell_distance(i0 + 1, j0 + 1);
        let d = f00 * (1.0 - fu) * (1.0 - fv) + f10 * fu * (1.0 - fv) + f01 * (1.0 - fu) * fv + f11 * fu * fv;
        let du = (f10 - f00) * (1.0 - fv) + (f11 - f01) * fv;
        let dv = (f01 - f00) * (1.0 - fu) + (f11 - f10) * fu;
        (d, Vector2::new(du, dv) / self.resolution)
    }

    /// First occupied cell along a ray, marched at quarter-cell steps.
    pub fn ray_cast(&self, origin: Vector2<f64>, angle: f64, max_range: f64) -> Option<(usize, usize)> {
        let dir = Vector2::new(angle.cos(), angle.sin());
        let step = 0.25 * self.resolution;
        let mut t = 0.0;
        while t <= max_range {
            let p = origin + dir * t;
            match self.cell_of(p) {
                Some((cx, cy)) if self.is_occupied(cx, cy) => return Some((cx, cy)),
                Some(_) => {}
                None => return None,
            }
            t += step;
        }
        None
    }
}

/// Exact squared Euclidean distance transform in cell units with nearest-site
/// indices. Column pass by two scans, row pass by the lower envelope of
/// parabolas (Felzenszwalb and Huttenlocher).
fn squared_edt(width: usize, height: usize, occupied: &[bool]) -> (Vec<f64>, Vec<usize>) {
    let inf = f64::INFINITY;
    // Nearest occupied row per column, and its squared offset.
    let mut col_dist = vec![inf; width * height];
    let mut col_site = vec![usize::MAX; width * height];
    for cx in 0..width {
        let mut last: Option<usize> = None;
        for cy in 0..height {
            if occupied[cy * width + cx] {
                last = Some(cy);
            }
            if let Some(s) = last {
                col_dist[cy * width + cx] = (cy - s) as f64;
                col_site[cy * width + cx] = s;
            }
        }
        let mut last: Option<usize> = None;
        for cy in (0..height).rev() {
            if occupied[cy * width + cx] {
                last = Some(cy);
            }
            if let Some(s) = last {
                let d = (s - cy) as f64;
                if d < col_dist[cy * width + cx] {
                    col_dist[cy * width + cx] = d;
                    col_site[cy * width + cx] = s;
                }
            }
        }
    }

    let mut out = vec![inf; width * height];
    let mut site = vec![0usize; width * height];
    let mut f = vec![inf; width];
    let mut v = vec![0usize; width];
    let mut z = vec![0.0f64; width + 1];
    for cy in 0..height {
        for cx in 0..width {
            let d = col_dist[cy * width + cx];
            f[cx] = d * d;
        }
        // Lower envelope over the finite parabolas only. z[0] = -inf, so the
        // envelope never empties once seeded.
        let mut k: Option<usize> = None;
        for q in 0..width {
            if !f[q].is_finite() {
                continue;
            }
            let Some(mut top) = k else {
                k = Some(0);
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                continue;
            };
            let mut s;
            loop {
                let p = v[top];
                s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
                if s <= z[top] {
                    top -= 1;
                } else {
                    break;
                }
            }
            top += 1;
            v[top] = q;
            z[top] = s;
            z[top + 1] = f64::INFINITY;
            k = Some(top);
        }
        if k.is_none() {
            continue;
        }
        let mut j = 0usize;
        for q in 0..width {
            while z[j + 1] < q as f64 {
                j += 1;
            }
            let p = v[j];
            let dq = q as f64 - p as f64;
            out[cy * width + q] = dq * dq + f[p];
            site[cy * width + q] = col_site[cy * width + p] * width + p;
        }
    }
    (out, site)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(width: usize, height: usize, occ: &[bool]) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; width * height];
        for y in 0..height {
            for x in 0..width {
                for sy in 0..height {
                    for sx in 0..width {
                        if occ[sy * width + sx] {
                            let d2 = (x as f64 - sx as f64).powi(2) + (y as f64 - sy as f64).powi(2);
                            out[y * width + x] = out[y * width + x].min(d2);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn edt_matches_brute_force() {
        let (w, h) = (17, 11);
        let mut state = 12345u64;
        let occ: Vec<bool> = (0..w * h)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33).is_multiple_of(9)
            })
            .collect();
        let (sq, site) = squared_edt(w, h, &occ);
        let bf = brute_force(w, h, &occ);
        for i in 0..w * h {
            assert_eq!(sq[i], bf[i], "cell {i}");
            let (sx, sy) = (site[i] % w, site[i] / w);
            assert!(occ[site[i]]);
            let d2 = ((i % w) as f64 - sx as f64).powi(2) + ((i / w) as f64 - sy as f64).powi(2);
            assert_eq!(d2, bf[i]);
        }
    }

    #[test]
    fn zero_on_occupied_cells() {
        let map = GridMap2D::parse("4 3 0.5\n#...\n..#.\n....\n").unwrap();
        assert!(map.is_occupied(0, 2));
        assert!(map.is_occupied(2, 1));
        assert_eq!(map.cell_distance(0, 2), 0.0);
        assert_eq!(map.distance(map.cell_center(2, 1)), 0.0);
        assert!((map.cell_distance(3, 0) - 2f64.sqrt() * 0.5).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let text = "5 2 0.25\n#..#.\n.###.\n";
        let map = GridMap2D::parse(text).unwrap();
        assert_eq!(GridMap2D::parse(&map.to_text()).unwrap().to_text(), map.to_text());
    }

    #[test]
    fn parse_errors() {
        assert!(GridMap2D::parse("").is_err());
        assert!(GridMap2D::parse("3 2 1.0\n###\n").is_err());
        assert!(GridMap2D::parse("3 1 1.0\n#x.\n").is_err());
        assert!(GridMap2D::parse("3 2 1.0\n...\n...\n").is_err());
    }

    #[test]
    fn outside_points_extend_the_field() {
        let map = GridMap2D::parse("3 3 1.0\n#..\n...\n...\n").unwrap();
        let inside = map.sample(Vector2::new(2.5, 1.5));
        let outside = map.sample(Vector2::new(4.5, 1.5));
        assert!(!inside.outside);
        assert!(outside.outside);
        assert!((outside.distance - inside.distance - 2.0).abs() < 1e-12);
        assert!((outside.gradient.x - 1.0).abs() < 1e-12);
    }
}
