use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use super::sphere::SpherePoint;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Barycentric weights this close to 1 snap to the vertex, so grid points
/// interpolate exactly.
const SNAP: f64 = 1e-12;

/// Interpolation recipe for one off-grid point: `f[a] + Σ λ_k (f[b_k] - f[a])`.
///
/// Writing the weights relative to a base vertex makes constants reproduce
/// exactly, not just up to rounding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub idx: [u32; 3],
    pub lam: [f64; 2],
    pub len: u8,
}

impl Stencil {
    fn single(i: usize) -> Self {
        Stencil {
            idx: [i as u32; 3],
            lam: [0.0; 2],
            len: 1,
        }
    }

    #[inline]
    pub fn eval(&self, values: &[f64]) -> f64 {
        let a = values[self.idx[0] as usize];
        match self.len {
            1 => a,
            2 => a + self.lam[0] * (values[self.idx[1] as usize] - a),
            _ => {
                a + self.lam[0] * (values[self.idx[1] as usize] - a) + self.lam[1] * (values[self.idx[2] as usize] - a)
            }
        }
    }

    /// The grid point carrying the largest weight.
    pub fn dominant(&self) -> usize {
        let w0 = 1.0 - self.lam[0] - if self.len == 3 { self.lam[1] } else { 0.0 };
        let mut best = (w0, self.idx[0]);
        if self.len >= 2 && self.lam[0] > best.0 {
            best = (self.lam[0], self.idx[1]);
        }
        if self.len == 3 && self.lam[1] > best.0 {
            best = (self.lam[1], self.idx[2]);
        }
        best.1 as usize
    }
}

#[derive(Clone, Debug)]
enum Layout {
    /// `{-1, +1}`
    Pair,
    /// `n` equally spaced angles.
    Circle { n: usize },
    /// Subdivided icosahedron; `faces[l]` are the triangles at level `l`, and
    /// the children of face `f` at level `l` are `4f..4f+4` at level `l + 1`.
    Icosphere { faces: Vec<Vec<[u32; 3]>> },
}

/// A discretization of `S^{d-1}` closed under `x ↦ -x`.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    dim: usize,
    resolution: usize,
    points: Vec<SpherePoint>,
    antipode: Vec<usize>,
    weights: Vec<f64>,
    layout: Layout,
}

impl SphereGrid {
    /// Default resolution: 256 angles on the circle, icosphere level 4.
    pub fn default_resolution(dim: usize) -> usize {
        match dim {
            1 => 2,
            2 => 256,
            _ => 4,
        }
    }

    /// `resolution` is ignored for d = 1, the number of angles for d = 2 and
    /// the subdivision level for d = 3.
    pub fn new(dim: usize, resolution: usize) -> Result<Self> {
        match dim {
            1 => Ok(Self::pair()),
            2 => Self::circle(resolution),
            3 => Self::icosphere(resolution),
            _ => Err(Error::Unsupported(format!("sphere grids exist for d <= 3, not {dim}"))),
        }
    }

    pub fn with_default_resolution(dim: usize) -> Result<Self> {
        Self::new(dim, Self::default_resolution(dim))
    }

    fn pair() -> Self {
        let minus = SpherePoint::basis(1, 0).neg();
        SphereGrid {
            dim: 1,
            resolution: 2,
            points: vec![minus, minus.neg()],
            antipode: vec![1, 0],
            weights: vec![0.5, 0.5],
            layout: Layout::Pair,
        }
    }

    fn circle(n: usize) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "circle grids need an even number of at least 4 angles, got {n}"
            )));
        }
        let h = std::f64::consts::TAU / n as f64;
        let half: Vec<SpherePoint> = (0..n / 2).map(|k| SpherePoint::from_angle(k as f64 * h)).collect();
        let points: Vec<SpherePoint> = half.iter().copied().chain(half.iter().map(|p| p.neg())).collect();
        let antipode = (0..n).map(|k| (k + n / 2) % n).collect();
        Ok(SphereGrid {
            dim: 2,
            resolution: n,
            points,
            antipode,
            weights: vec![1.0 / n as f64; n],
            layout: Layout::Circle { n },
        })
    }

    fn icosphere(level: usize) -> Result<Self> {
        if level > 7 {
            return Err(Error::InvalidArgument(format!(
                "icosphere level {level} is too fine (max 7)"
            )));
        }
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let raw = [
            [-1.0, phi, 0.0],
            [1.0, phi, 0.0],
            [-1.0, -phi, 0.0],
            [1.0, -phi, 0.0],
            [0.0, -1.0, phi],
            [0.0, 1.0, phi],
            [0.0, -1.0, -phi],
            [0.0, 1.0, -phi],
            [phi, 0.0, -1.0],
            [phi, 0.0, 1.0],
            [-phi, 0.0, -1.0],
            [-phi, 0.0, 1.0],
        ];
        let mut coords: Vec<Vector> = raw
            .iter()
            .map(|v| {
                let v = Vector::from_slice(v);
                v.scale(1.0 / v.norm())
            })
            .collect();
        let base: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        let mut faces = vec![base];
        for _ in 0..level {
            let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
            let mut mid = |a: u32, b: u32, coords: &mut Vec<Vector>| -> u32 {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    // addition commutes exactly, so antipodal edges get
                    // exactly negated midpoints
                    let s = coords[key.0 as usize].add(&coords[key.1 as usize]);
                    coords.push(s.scale(1.0 / s.norm()));
                    (coords.len() - 1) as u32
                })
            };
            let mut next = Vec::with_capacity(faces.last().unwrap().len() * 4);
            for &[a, b, c] in faces.last().unwrap() {
                let ab = mid(a, b, &mut coords);
                let bc = mid(b, c, &mut coords);
                let ca = mid(c, a, &mut coords);
                next.push([a, ab, ca]);
                next.push([ab, b, bc]);
                next.push([ca, bc, c]);
                next.push([ab, bc, ca]);
            }
            faces.push(next);
        }
        let key = |v: &Vector| -> [u64; 3] {
            // +0.0 normalizes -0.0
            [
                (v.get(0) + 0.0).to_bits(),
                (v.get(1) + 0.0).to_bits(),
                (v.get(2) + 0.0).to_bits(),
            ]
        };
        let index: HashMap<[u64; 3], usize> = coords.iter().enumerate().map(|(i, v)| (key(v), i)).collect();
        let antipode = coords
            .iter()
            .map(|v| {
                index
                    .get(&key(&v.neg()))
                    .copied()
                    .ok_or_else(|| Error::Numerical("icosphere lost antipodal closure".into()))
            })
            .collect::<Result<Vec<usize>>>()?;
        let mut weights = vec![0.0; coords.len()];
        for &[a, b, c] in faces.last().unwrap() {
            let (pa, pb, pc) = (coords[a as usize], coords[b as usize], coords[c as usize]);
            let area = 0.5 * pb.sub(&pa).cross(&pc.sub(&pa)).norm();
            for i in [a, b, c] {
                weights[i as usize] += area / 3.0;
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(SphereGrid {
            dim: 3,
            resolution: level,
            points: coords.into_iter().map(SpherePoint::new_unchecked).collect(),
            antipode,
            weights,
            layout: Layout::Icosphere { faces },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &SpherePoint {
        &self.points[i]
    }

    pub fn antipode(&self, i: usize) -> usize {
        self.antipode[i]
    }

    /// Quadrature weights of the uniform law (sum 1).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Smallest great-circle distance between distinct grid points.
    pub fn min_separation(&self) -> f64 {
        match &self.layout {
            Layout::Pair => std::f64::consts::PI,
            Layout::Circle { n } => std::f64::consts::TAU / *n as f64,
            Layout::Icosphere { faces } => faces
                .last()
                .unwrap()
                .iter()
                .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
                .map(|(i, j)| self.points[i as usize].distance(&self.points[j as usize]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Interpolation stencil at `x`.
    pub fn stencil(&self, x: &SpherePoint) -> Stencil {
        match &self.layout {
            Layout::Pair => Stencil::single(usize::from(x.coords().get(0) >= 0.0)),
            Layout::Circle { n } => {
                let n = *n;
                let pos = x.angle() / (std::f64::consts::TAU / n as f64);
                let fl = pos.floor();
                let frac = pos - fl;
                let k = (fl as usize) % n;
                if frac < SNAP {
                    Stencil::single(k)
                } else if frac > 1.0 - SNAP {
                    Stencil::single((k + 1) % n)
                } else {
                    Stencil {
                        idx: [k as u32, ((k + 1) % n) as u32, k as u32],
                        lam: [frac, 0.0],
                        len: 2,
                    }
                }
            }
            Layout::Icosphere { faces } => {
                let (face, lam) = self.locate(faces, x.coords());
                if let Some(v) = (0..3).find(|&v| lam[v] > 1.0 - SNAP) {
                    return Stencil::single(face[v] as usize);
                }
                Stencil {
                    idx: face,
                    lam: [lam[1], lam[2]],
                    len: 3,
                }
            }
        }
    }

    /// Clamped, normalized central-projection barycentric coordinates.
    fn barycentric(&self, face: [u32; 3], x: &Vector) -> [f64; 3] {
        let p = |i: u32| self.points[i as usize].coords();
        let (a, b, c) = (p(face[0]), p(face[1]), p(face[2]));
        let det = a.dot(&b.cross(c));
        [
            x.dot(&b.cross(c)) / det,
            a.dot(&x.cross(c)) / det,
            a.dot(&b.cross(x)) / det,
        ]
    }

    fn best_face(&self, candidates: &[[u32; 3]], ids: std::ops::Range<usize>, x: &Vector) -> (usize, [f64; 3]) {
        let mut best = (ids.start, [0.0; 3], f64::NEG_INFINITY);
        for f in ids {
            let l = self.barycentric(candidates[f], x);
            let score = l[0].min(l[1]).min(l[2]);
            if score > best.2 {
                best = (f, l, score);
            }
        }
        (best.0, best.1)
    }

    fn locate(&self, faces: &[Vec<[u32; 3]>], x: &Vector) -> ([u32; 3], [f64; 3]) {
        let (mut f, mut lam) = self.best_face(&faces[0], 0..faces[0].len(), x);
        for level in faces.iter().skip(1) {
            (f, lam) = self.best_face(level, 4 * f..4 * f + 4, x);
        }
        let lam = lam.map(|l| l.max(0.0));
        let s: f64 = lam.iter().sum();
        (faces.last().unwrap()[f], lam.map(|l| l / s))
    }

    /// The grid point whose cell contains `x` (largest interpolation weight).
    pub fn bin_index(&self, x: &SpherePoint) -> usize {
        match &self.layout {
            Layout::Circle { n } => {
                let pos = x.angle() / (std::f64::consts::TAU / *n as f64);
                (pos.round() as usize) % n
            }
            _ => self.stencil(x).dominant(),
        }
    }
}

/// One real value per grid point.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<SphereGrid>,
    values: Vec<f64>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.grid, &other.grid) || self.grid.points == other.grid.points) && self.values == other.values
    }
}

impl GridFunction {
    pub fn new(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value at grid point {i}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn constant(grid: Arc<SphereGrid>, c: f64) -> Self {
        let n = grid.len();
        GridFunction {
            grid,
            values: vec![c; n],
        }
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolate(&self, x: &SpherePoint) -> f64 {
        self.grid.stencil(x).eval(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// `f(x) ← (f(x) + f(-x)) / 2`; the result is exactly antipodally symmetric.
    pub fn symmetrize(&mut self) {
        let old = self.values.clone();
        for (i, v) in self.values.iter_mut().enumerate() {
            *v = 0.5 * (old[i] + old[self.grid.antipode(i)]);
        }
    }

    /// CSV with one row per grid point: coordinates, then the value, at 17
    /// significant digits. `comments` become leading `#` lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let head: Vec<String> = (1..=self.grid.dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},value", head.join(","))?;
        for (p, v) in self.grid.points().iter().zip(&self.values) {
            let coords: Vec<String> = p.coords().as_slice().iter().map(|c| format!("{c:.16e}")).collect();
            writeln!(w, "{},{v:.16e}", coords.join(","))?;
        }
        Ok(())
    }

    /// Reads a file written by [`GridFunction::write_csv`] onto `grid`,
    /// checking that the rows match the grid points.
    pub fn read_csv<R: BufRead>(grid: Arc<SphereGrid>, r: R) -> Result<Self> {
        let d = grid.dim();
        let mut values = Vec::with_capacity(grid.len());
        let mut header_seen = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let bad = |msg: String| Error::Config {
                line: Some(lineno + 1),
                message: msg,
            };
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("{e}"))))
                .collect::<Result<_>>()?;
            if fields.len() != d + 1 {
                return Err(bad(format!("expected {} columns, got {}", d + 1, fields.len())));
            }
            let i = values.len();
            if i >= grid.len() {
                return Err(bad("more rows than grid points".into()));
            }
            let p = grid.point(i).coords();
            if (0..d).any(|k| (p.get(k) - fields[k]).abs() > 1e-12) {
                return Err(bad(format!("row does not match grid point {i}")));
            }
            values.push(fields[d]);
        }
        GridFunction::new(grid, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grids() -> Vec<SphereGrid> {
        vec![
            SphereGrid::new(1, 0).unwrap(),
            SphereGrid::new(2, 64).unwrap(),
            SphereGrid::new(3, 2).unwrap(),
        ]
    }

    #[test]
    fn antipodal_closure_is_exact() {
        for g in grids() {
            for i in 0..g.len() {
                let j = g.antipode(i);
                assert_eq!(g.antipode(j), i);
                assert_eq!(g.point(j).coords(), &g.point(i).coords().neg());
            }
        }
    }

    #[test]
    fn icosphere_sizes() {
        for (level, n) in [(0, 12), (1, 42), (2, 162), (4, 2562)] {
            assert_eq!(SphereGrid::new(3, level).unwrap().len(), n);
        }
    }

    #[test]
    fn grid_points_interpolate_exactly() {
        for g in grids() {
            let g = Arc::new(g);
            let values: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
            let f = GridFunction::new(g.clone(), values.clone()).unwrap();
            for (i, p) in g.points().iter().enumerate() {
                assert_eq!(f.interpolate(p), values[i]);
                assert_eq!(g.bin_index(p), i);
            }
        }
    }

    #[test]
    fn interpolation_examples() {
        let g = Arc::new(SphereGrid::new(2, 4).unwrap());
        let f = GridFunction::new(g, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let x = SpherePoint::from_angle(std::f64::consts::FRAC_PI_4);
        assert!((f.interpolate(&x) - 0.5).abs() < 1e-15);

        let g = Arc::new(SphereGrid::new(1, 0).unwrap());
        let f = GridFunction::new(g, vec![3.0, 7.0]).unwrap();
        assert_eq!(f.interpolate(&SpherePoint::basis(1, 0)), 7.0);
        assert_eq!(f.interpolate(&SpherePoint::basis(1, 0).neg()), 3.0);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        for g in grids() {
            let g = Arc::new(g);
            let values: Vec<f64> = (0..g.len()).map(|i| 1.0 / (i as f64 + 3.0) + 1e-300).collect();
            let f = GridFunction::new(g.clone(), values).unwrap();
            let mut buf = Vec::new();
            f.write_csv(&mut buf, &["seed 1".into()]).unwrap();
            let back = GridFunction::read_csv(g, buf.as_slice()).unwrap();
            assert_eq!(back, f);
        }
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for g in grids() {
            let s: f64 = g.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(g.min_separation() > 0.0);
        }
    }
}
