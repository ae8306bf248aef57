//! Structured cell-centred grid over the hold-all rectangle, region tags for the
//! workpiece, the inductor and the surrounding air, and the discrete operators
//! every solver is assembled from.
//!
//! Cells are indexed row-major, `k = j * nx + i`, with `j = 0` the row at
//! `y_min`. Scalar unknowns live at cell centres; gradients live on faces, so
//! `div(grad f)` is exactly the 5-point Laplacian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-cell real values on a [`RegionGrid`] (length `nx * ny`).
pub type Field = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Workpiece,
    Inductor,
    Air,
}

impl Region {
    pub fn tag(self) -> char {
        match self {
            Region::Workpiece => 'W',
            Region::Inductor => 'I',
            Region::Air => '.',
        }
    }

    pub fn from_tag(c: char) -> Option<Region> {
        match c {
            'W' | 'w' | 'O' => Some(Region::Workpiece),
            'I' | 'i' | 'S' => Some(Region::Inductor),
            '.' | 'A' | 'a' => Some(Region::Air),
            _ => None,
        }
    }
}

/// Integration domain selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    All,
    Workpiece,
    Inductor,
    Air,
    /// Everything outside the workpiece (inductor and air).
    Exterior,
}

impl Domain {
    fn contains(self, r: Region) -> bool {
        match self {
            Domain::All => true,
            Domain::Workpiece => r == Region::Workpiece,
            Domain::Inductor => r == Region::Inductor,
            Domain::Air => r == Region::Air,
            Domain::Exterior => r != Region::Workpiece,
        }
    }
}

/// Axis-aligned rectangle in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x > self.x0 && x < self.x1 && y > self.y0 && y < self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    pub fn is_proper(&self) -> bool {
        self.x1 > self.x0 && self.y1 > self.y0
    }
}

/// One cell face: the cell on the low side, the cell on the high side (`None`
/// when the face lies on the outer boundary), and the geometric conductance
/// factor (`1/h²` between centres, `2/h²` from a centre to a boundary face).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub a: usize,
    pub b: Option<usize>,
    pub geom: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionGrid {
    nx: usize,
    ny: usize,
    extent: Rect,
    hx: f64,
    hy: f64,
    region: Vec<Region>,
    polarity: Vec<f64>,
    workpiece: Vec<usize>,
}

impl RegionGrid {
    /// Builds a grid from explicit per-cell tags. `polarity` carries the sign
    /// of the prescribed current in each inductor cell (ignored elsewhere).
    pub fn new(
        nx: usize,
        ny: usize,
        extent: Rect,
        region: Vec<Region>,
        polarity: Vec<f64>,
    ) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::grid(format!("need at least 3x3 cells, got {nx}x{ny}")));
        }
        if !extent.is_proper() {
            return Err(Error::grid("domain extent must have positive width and height"));
        }
        if region.len() != nx * ny {
            return Err(Error::grid(format!(
                "region mask has {} cells, expected {}",
                region.len(),
                nx * ny
            )));
        }
        if polarity.len() != nx * ny {
            return Err(Error::grid("polarity length does not match the grid"));
        }
        let workpiece: Vec<usize> = (0..nx * ny)
            .filter(|&k| region[k] == Region::Workpiece)
            .collect();
        if workpiece.is_empty() {
            return Err(Error::grid("workpiece region is empty"));
        }
        let grid = RegionGrid {
            nx,
            ny,
            extent,
            hx: extent.width() / nx as f64,
            hy: extent.height() / ny as f64,
            region,
            polarity,
            workpiece,
        };
        if let Some(&k) = grid.workpiece.iter().find(|&&k| grid.on_domain_boundary(k)) {
            let (i, j) = grid.ij(k);
            return Err(Error::grid(format!(
                "workpiece touches the outer boundary at cell ({i}, {j})"
            )));
        }
        Ok(grid)
    }

    /// Tags cells whose centres fall inside the given rectangles.
    pub fn from_rects(
        nx: usize,
        ny: usize,
        extent: Rect,
        workpiece: Rect,
        inductors: &[(Rect, f64)],
    ) -> Result<Self> {
        if !extent.contains_rect(&workpiece) {
            return Err(Error::grid("workpiece rectangle lies outside the domain"));
        }
        let hx = extent.width() / nx as f64;
        let hy = extent.height() / ny as f64;
        let mut region = vec![Region::Air; nx * ny];
        let mut polarity = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let x = extent.x0 + (i as f64 + 0.5) * hx;
                let y = extent.y0 + (j as f64 + 0.5) * hy;
                let k = j * nx + i;
                let in_work = workpiece.contains_point(x, y);
                for (rect, sign) in inductors {
                    if rect.contains_point(x, y) {
                        if in_work {
                            return Err(Error::grid(format!(
                                "workpiece and inductor overlap at cell ({i}, {j})"
                            )));
                        }
                        region[k] = Region::Inductor;
                        polarity[k] = *sign;
                    }
                }
                if in_work {
                    region[k] = Region::Workpiece;
                }
            }
        }
        Self::new(nx, ny, extent, region, polarity)
    }

    /// Parses a plain-text mask: `ny` lines of `nx` tag characters, first line
    /// is the row at `y_min`. Blank lines and lines starting with `#` are skipped.
    pub fn from_mask(nx: usize, ny: usize, extent: Rect, text: &str) -> Result<Self> {
        let mut region = Vec::with_capacity(nx * ny);
        for line in text.lines() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for c in line.chars() {
                let r = Region::from_tag(c)
                    .ok_or_else(|| Error::grid(format!("unknown mask tag {c:?}")))?;
                region.push(r);
            }
        }
        if region.len() != nx * ny {
            return Err(Error::grid(format!(
                "mask has {} cells, expected {}",
                region.len(),
                nx * ny
            )));
        }
        let polarity = region
            .iter()
            .map(|&r| if r == Region::Inductor { 1.0 } else { 0.0 })
            .collect();
        Self::new(nx, ny, extent, region, polarity)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn extent(&self) -> Rect {
        self.extent
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn center(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (
            self.extent.x0 + (i as f64 + 0.5) * self.hx,
            self.extent.y0 + (j as f64 + 0.5) * self.hy,
        )
    }

    #[inline]
    pub fn region(&self, k: usize) -> Region {
        self.region[k]
    }

    pub fn regions(&self) -> &[Region] {
        &self.region
    }

    #[inline]
    pub fn is_workpiece(&self, k: usize) -> bool {
        self.region[k] == Region::Workpiece
    }

    /// Sign of the prescribed current in inductor cells, zero elsewhere.
    pub fn polarity(&self, k: usize) -> f64 {
        if self.region[k] == Region::Inductor {
            self.polarity[k]
        } else {
            0.0
        }
    }

    /// Indices of workpiece cells in ascending order.
    pub fn workpiece_cells(&self) -> &[usize] {
        &self.workpiece
    }

    pub fn on_domain_boundary(&self, k: usize) -> bool {
        let (i, j) = self.ij(k);
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    /// Workpiece cell with at least one neighbour outside the workpiece.
    pub fn on_workpiece_boundary(&self, k: usize) -> bool {
        if !self.is_workpiece(k) {
            return false;
        }
        self.neighbours(k).any(|n| !self.is_workpiece(n))
    }

    fn neighbours(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.ij(k);
        let mut out = [usize::MAX; 4];
        if i > 0 {
            out[0] = k - 1;
        }
        if i + 1 < self.nx {
            out[1] = k + 1;
        }
        if j > 0 {
            out[2] = k - self.nx;
        }
        if j + 1 < self.ny {
            out[3] = k + self.nx;
        }
        out.into_iter().filter(|&n| n != usize::MAX)
    }

    pub fn measure(&self, domain: Domain) -> f64 {
        self.region.iter().filter(|r| domain.contains(**r)).count() as f64 * self.cell_volume()
    }

    /// All faces of the grid, boundary faces included, in a fixed order.
    pub fn faces(&self) -> Vec<Face> {
        let (nx, ny) = (self.nx, self.ny);
        let gx = 1.0 / (self.hx * self.hx);
        let gy = 1.0 / (self.hy * self.hy);
        let mut faces = Vec::with_capacity(2 * nx * ny + nx + ny);
        for j in 0..ny {
            faces.push(Face {
                a: self.idx(0, j),
                b: None,
                geom: 2.0 * gx,
            });
            for i in 1..nx {
                faces.push(Face {
                    a: self.idx(i - 1, j),
                    b: Some(self.idx(i, j)),
                    geom: gx,
                });
            }
            faces.push(Face {
                a: self.idx(nx - 1, j),
                b: None,
                geom: 2.0 * gx,
            });
        }
        for i in 0..nx {
            faces.push(Face {
                a: self.idx(i, 0),
                b: None,
                geom: 2.0 * gy,
            });
            for j in 1..ny {
                faces.push(Face {
                    a: self.idx(i, j - 1),
                    b: Some(self.idx(i, j)),
                    geom: gy,
                });
            }
            faces.push(Face {
                a: self.idx(i, ny - 1),
                b: None,
                geom: 2.0 * gy,
            });
        }
        faces
    }

    /// Interior faces between two workpiece cells. Faces on the workpiece
    /// boundary are omitted, which is the homogeneous Neumann closure.
    pub fn workpiece_faces(&self) -> Vec<Face> {
        self.faces()
            .into_iter()
            .filter(|f| self.is_workpiece(f.a) && f.b.is_some_and(|b| self.is_workpiece(b)))
            .collect()
    }

    /// Nested refinement: every cell split into `factor x factor` children that
    /// inherit the parent's region and polarity.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::grid("refinement factor must be positive"));
        }
        let (nx, ny) = (self.nx * factor, self.ny * factor);
        let mut region = Vec::with_capacity(nx * ny);
        let mut polarity = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let parent = self.idx(i / factor, j / factor);
                region.push(self.region[parent]);
                polarity.push(self.polarity[parent]);
            }
        }
        Self::new(nx, ny, self.extent, region, polarity)
    }

    /// Ratio `fine.nx / self.nx` when `fine` is a nested refinement of `self`.
    pub fn refinement_factor_of(&self, fine: &RegionGrid) -> Option<usize> {
        if fine.extent != self.extent || !fine.nx.is_multiple_of(self.nx) || !fine.ny.is_multiple_of(self.ny) {
            return None;
        }
        let r = fine.nx / self.nx;
        if fine.ny / self.ny != r {
            return None;
        }
        let nested = (0..fine.len()).all(|k| {
            let (i, j) = fine.ij(k);
            fine.region[k] == self.region[self.idx(i / r, j / r)]
        });
        nested.then_some(r)
    }

    /// Block average of a field on a nested refinement onto this grid.
    pub fn restrict(&self, fine: &RegionGrid, values: &[f64]) -> Result<Field> {
        let r = self
            .refinement_factor_of(fine)
            .ok_or_else(|| Error::IncompatibleRuns("grids are not nested".into()))?;
        let mut out = vec![0.0; self.len()];
        let w = 1.0 / (r * r) as f64;
        for (k, v) in values.iter().enumerate() {
            let (i, j) = fine.ij(k);
            out[self.idx(i / r, j / r)] += w * v;
        }
        Ok(out)
    }
}

/// Face-centred vector field: `x` on the `(nx+1) * ny` vertical faces
/// (index `j * (nx+1) + i`, face west of cell `i`), `y` on the `nx * (ny+1)`
/// horizontal faces (index `j * nx + i`, face south of cell row `j`).
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: &RegionGrid) -> Self {
        FaceField {
            x: vec![0.0; (grid.nx + 1) * grid.ny],
            y: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }
}

#[derive(Clone, Copy)]
enum Closure {
    Neumann,
    Dirichlet,
    Workpiece,
}

fn face_gradient(grid: &RegionGrid, f: &[f64], closure: Closure) -> FaceField {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut g = FaceField::zeros(grid);
    let inside = |k: usize| match closure {
        Closure::Workpiece => grid.is_workpiece(k),
        _ => true,
    };
    for j in 0..ny {
        for i in 0..=nx {
            let v = if i == 0 {
                match closure {
                    Closure::Dirichlet => f[grid.idx(0, j)] / (0.5 * grid.hx),
                    _ => 0.0,
                }
            } else if i == nx {
                match closure {
                    Closure::Dirichlet => -f[grid.idx(nx - 1, j)] / (0.5 * grid.hx),
                    _ => 0.0,
                }
            } else {
                let (a, b) = (grid.idx(i - 1, j), grid.idx(i, j));
                if inside(a) && inside(b) {
                    (f[b] - f[a]) / grid.hx
                } else {
                    0.0
                }
            };
            g.x[j * (nx + 1) + i] = v;
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let v = if j == 0 {
                match closure {
                    Closure::Dirichlet => f[grid.idx(i, 0)] / (0.5 * grid.hy),
                    _ => 0.0,
                }
            } else if j == ny {
                match closure {
                    Closure::Dirichlet => -f[grid.idx(i, ny - 1)] / (0.5 * grid.hy),
                    _ => 0.0,
                }
            } else {
                let (a, b) = (grid.idx(i, j - 1), grid.idx(i, j));
                if inside(a) && inside(b) {
                    (f[b] - f[a]) / grid.hy
                } else {
                    0.0
                }
            };
            g.y[j * nx + i] = v;
        }
    }
    g
}

/// Face gradient with zero normal derivative on the outer boundary.
pub fn grad(grid: &RegionGrid, f: &[f64]) -> FaceField {
    face_gradient(grid, f, Closure::Neumann)
}

/// Face gradient with `f = 0` imposed on the outer boundary faces.
pub fn grad_dirichlet(grid: &RegionGrid, f: &[f64]) -> FaceField {
    face_gradient(grid, f, Closure::Dirichlet)
}

/// Face gradient restricted to faces between two workpiece cells.
pub fn grad_workpiece(grid: &RegionGrid, f: &[f64]) -> FaceField {
    face_gradient(grid, f, Closure::Workpiece)
}

pub fn div(grid: &RegionGrid, v: &FaceField) -> Field {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let fx = (v.x[j * (nx + 1) + i + 1] - v.x[j * (nx + 1) + i]) / grid.hx;
            let fy = (v.y[(j + 1) * nx + i] - v.y[j * nx + i]) / grid.hy;
            out[grid.idx(i, j)] = fx + fy;
        }
    }
    out
}

/// Cell-centred in-plane curl of an out-of-plane potential,
/// `curl A = (∂_y A, -∂_x A)`. Central differences inside, one-sided at the
/// outer boundary.
pub fn curl2d(grid: &RegionGrid, a: &[f64]) -> Vec<[f64; 2]> {
    let (nx, ny) = (grid.nx, grid.ny);
    let d = |k_lo: usize, k_hi: usize, span: f64| (a[k_hi] - a[k_lo]) / span;
    (0..nx * ny)
        .map(|k| {
            let (i, j) = grid.ij(k);
            let dx = if i == 0 {
                d(k, k + 1, grid.hx)
            } else if i + 1 == nx {
                d(k - 1, k, grid.hx)
            } else {
                d(k - 1, k + 1, 2.0 * grid.hx)
            };
            let dy = if j == 0 {
                d(k, k + nx, grid.hy)
            } else if j + 1 == ny {
                d(k - nx, k, grid.hy)
            } else {
                d(k - nx, k + nx, 2.0 * grid.hy)
            };
            [dy, -dx]
        })
        .collect()
}

/// Midpoint quadrature over the cells of `domain`.
pub fn integrate(grid: &RegionGrid, f: &[f64], domain: Domain) -> f64 {
    let mut sum = 0.0;
    for (k, v) in f.iter().enumerate() {
        if domain.contains(grid.region[k]) {
            sum += v;
        }
    }
    sum * grid.cell_volume()
}

/// `∫ u·v` for face fields; outer boundary faces carry half a cell of volume.
pub fn integrate_faces(grid: &RegionGrid, u: &FaceField, v: &FaceField) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut sum = 0.0;
    for j in 0..ny {
        for i in 0..=nx {
            let w = if i == 0 || i == nx { 0.5 } else { 1.0 };
            let f = j * (nx + 1) + i;
            sum += w * u.x[f] * v.x[f];
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let w = if j == 0 || j == ny { 0.5 } else { 1.0 };
            let f = j * nx + i;
            sum += w * u.y[f] * v.y[f];
        }
    }
    sum * grid.cell_volume()
}

/// How a face coefficient is formed from the two adjacent cell values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceAverage {
    Arithmetic,
    Harmonic,
}

impl FaceAverage {
    #[inline]
    pub fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            FaceAverage::Arithmetic => 0.5 * (a + b),
            FaceAverage::Harmonic => {
                if a <= 0.0 || b <= 0.0 {
                    0.0
                } else {
                    2.0 * a * b / (a + b)
                }
            }
        }
    }
}

/// Matrix-free `-div(k ∇u)` assembled from per-face conductances. Boundary
/// faces couple to a ghost value of zero (homogeneous Dirichlet); omitted
/// faces carry no flux.
#[derive(Clone, Debug)]
pub struct DiffusionOperator {
    n: usize,
    volume: f64,
    faces: Vec<(usize, Option<usize>, f64)>,
}

impl DiffusionOperator {
    /// Operator on the whole domain with `u = 0` on the outer boundary.
    pub fn dirichlet(grid: &RegionGrid, coef: &[f64], avg: FaceAverage) -> Self {
        Self::from_faces(grid, grid.faces(), coef, avg)
    }

    /// Operator on the workpiece with zero flux across its boundary.
    pub fn workpiece(grid: &RegionGrid, coef: &[f64], avg: FaceAverage) -> Self {
        Self::from_faces(grid, grid.workpiece_faces(), coef, avg)
    }

    fn from_faces(grid: &RegionGrid, faces: Vec<Face>, coef: &[f64], avg: FaceAverage) -> Self {
        let faces = faces
            .into_iter()
            .map(|f| {
                let k = match f.b {
                    Some(b) => avg.combine(coef[f.a], coef[b]),
                    None => coef[f.a],
                };
                (f.a, f.b, k * f.geom)
            })
            .collect();
        DiffusionOperator {
            n: grid.len(),
            volume: grid.cell_volume(),
            faces,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `out = L u` (overwrites `out`).
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.apply_add(u, out);
    }

    /// `out += L u`.
    pub fn apply_add(&self, u: &[f64], out: &mut [f64]) {
        for &(a, b, c) in &self.faces {
            match b {
                Some(b) => {
                    let flux = c * (u[a] - u[b]);
                    out[a] += flux;
                    out[b] -= flux;
                }
                None => out[a] += c * u[a],
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(a, b, c) in &self.faces {
            d[a] += c;
            if let Some(b) = b {
                d[b] += c;
            }
        }
        d
    }

    /// `∫ k ∇u·∇v`, i.e. `V · uᵀ L v`, evaluated face by face.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut sum = 0.0;
        for &(a, b, c) in &self.faces {
            let (du, dv) = match b {
                Some(b) => (u[a] - u[b], v[a] - v[b]),
                None => (u[a], v[a]),
            };
            sum += c * du * dv;
        }
        sum * self.volume
    }

    /// `½ ∫ k |∇u|²`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        0.5 * self.bilinear(u, u)
    }
}
