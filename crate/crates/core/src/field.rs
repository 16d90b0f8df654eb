//! Per-block storage of centered PDFs with a one-cell ghost shell.
//!
//! Two value arrays (`src`, `dst`) back the two-grid pull scheme; their roles
//! swap after every sweep. Cell coordinates run over `-1..=extent` per axis,
//! the interior being `0..extent`.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::stencil::{CommDir, Q};

/// Memory layout of the PDF arrays.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Layout {
    /// All 19 PDFs of a cell adjacent in memory.
    Aos,
    /// PDFs of one direction adjacent in memory.
    Soa,
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Layout::Aos => write!(f, "aos"),
            Layout::Soa => write!(f, "soa"),
        }
    }
}

/// Per-cell classification. Wall cells carry the prescribed wall velocity for
/// the half-way bounce-back rule; domain-boundary walls live in the ghost
/// shell.
#[derive(Copy, Clone, PartialEq, Debug, Default)]
pub enum CellKind<T> {
    #[default]
    Fluid,
    Wall([T; 3]),
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field extent {0:?} must be positive on every axis")]
    EmptyExtent([usize; 3]),
}

pub struct PdfField<T: Scalar> {
    extent: [usize; 3],
    layout: Layout,
    src: Vec<T>,
    dst: Vec<T>,
    kinds: Vec<CellKind<T>>,
}

impl<T: Scalar> PdfField<T> {
    pub fn new(extent: [usize; 3], layout: Layout) -> Result<Self, FieldError> {
        if extent.iter().any(|&e| e == 0) {
            return Err(FieldError::EmptyExtent(extent));
        }
        let cells = (extent[0] + 2) * (extent[1] + 2) * (extent[2] + 2);
        Ok(Self {
            extent,
            layout,
            src: vec![T::zero(); cells * Q],
            dst: vec![T::zero(); cells * Q],
            kinds: vec![CellKind::Fluid; cells],
        })
    }

    #[inline]
    pub fn extent(&self) -> [usize; 3] {
        self.extent
    }

    #[inline]
    pub fn layout(&self) -> Layout {
        self.layout
    }

    #[inline]
    pub fn cells_with_ghost(&self) -> usize {
        (self.extent[0] + 2) * (self.extent[1] + 2) * (self.extent[2] + 2)
    }

    pub fn interior_cells(&self) -> usize {
        self.extent[0] * self.extent[1] * self.extent[2]
    }

    /// Linear index of a cell; coordinates may include the ghost shell.
    #[inline]
    pub fn cell_index(&self, c: [i64; 3]) -> usize {
        cell_index_of(self.extent, c)
    }

    #[inline]
    pub fn pdf_index(&self, cell: usize, dir: usize) -> usize {
        match self.layout {
            Layout::Aos => cell * Q + dir,
            Layout::Soa => dir * self.cells_with_ghost() + cell,
        }
    }

    #[inline]
    pub fn src(&self) -> &[T] {
        &self.src
    }

    #[inline]
    pub fn src_mut(&mut self) -> &mut [T] {
        &mut self.src
    }

    /// Both value arrays, for the fused pull sweep.
    #[inline]
    pub fn src_dst_mut(&mut self) -> (&[T], &mut [T]) {
        (&self.src, &mut self.dst)
    }

    /// Source, destination and cell kinds in one borrow.
    #[inline]
    pub fn parts_mut(&mut self) -> (&[T], &mut [T], &[CellKind<T>]) {
        (&self.src, &mut self.dst, &self.kinds)
    }

    pub fn get(&self, c: [i64; 3], dir: usize) -> T {
        self.src[self.pdf_index(self.cell_index(c), dir)]
    }

    pub fn set(&mut self, c: [i64; 3], dir: usize, v: T) {
        let idx = self.pdf_index(self.cell_index(c), dir);
        self.src[idx] = v;
    }

    pub fn kind(&self, c: [i64; 3]) -> CellKind<T> {
        self.kinds[self.cell_index(c)]
    }

    #[inline]
    pub fn kind_at(&self, cell: usize) -> CellKind<T> {
        self.kinds[cell]
    }

    pub fn set_kind(&mut self, c: [i64; 3], kind: CellKind<T>) {
        let idx = self.cell_index(c);
        self.kinds[idx] = kind;
    }

    pub fn kinds(&self) -> &[CellKind<T>] {
        &self.kinds
    }

    /// Replace the whole kind array (canonical cell-index order).
    pub fn copy_kinds(&mut self, kinds: &[CellKind<T>]) {
        assert_eq!(kinds.len(), self.kinds.len());
        self.kinds.copy_from_slice(kinds);
    }

    /// Swap the roles of the two PDF grids after a sweep.
    pub fn swap_buffers(&mut self) {
        std::mem::swap(&mut self.src, &mut self.dst);
    }

    /// Set one interior cell to the equilibrium of the given moments.
    pub fn set_equilibrium(&mut self, c: [i64; 3], eq: &[T; Q]) {
        let cell = self.cell_index(c);
        for (i, v) in eq.iter().enumerate() {
            let idx = self.pdf_index(cell, i);
            self.src[idx] = *v;
        }
    }

    /// Value-identical copy in the requested layout. Converting twice returns
    /// to the original bit pattern.
    pub fn layout_convert(&self, target: Layout) -> PdfField<T> {
        let mut out = PdfField::new(self.extent, target).expect("extent already validated");
        out.kinds.copy_from_slice(&self.kinds);
        for cell in 0..self.cells_with_ghost() {
            for dir in 0..Q {
                let to = out.pdf_index(cell, dir);
                let from = self.pdf_index(cell, dir);
                out.src[to] = self.src[from];
                out.dst[to] = self.dst[from];
            }
        }
        out
    }

    /// Interior PDFs in canonical AoS order (cells x-fastest, then direction),
    /// independent of the storage layout. Used for report assembly, checksums
    /// and cross-run comparison.
    pub fn interior_aos(&self) -> Vec<T> {
        let [nx, ny, nz] = self.extent;
        let mut out = Vec::with_capacity(nx * ny * nz * Q);
        for z in 0..nz as i64 {
            for y in 0..ny as i64 {
                for x in 0..nx as i64 {
                    let cell = self.cell_index([x, y, z]);
                    for dir in 0..Q {
                        out.push(self.src[self.pdf_index(cell, dir)]);
                    }
                }
            }
        }
        out
    }

    /// Number of interior fluid cells.
    pub fn interior_fluid_count(&self) -> usize {
        let [nx, ny, nz] = self.extent;
        let mut n = 0;
        for z in 0..nz as i64 {
            for y in 0..ny as i64 {
                for x in 0..nx as i64 {
                    if matches!(self.kinds[self.cell_index([x, y, z])], CellKind::Fluid) {
                        n += 1;
                    }
                }
            }
        }
        n
    }

    /// Sum of centered PDFs and of their first moment over interior fluid
    /// cells, accumulated in f64.
    pub fn interior_sums(&self) -> (f64, [f64; 3]) {
        use crate::stencil::DIRECTIONS;
        let [nx, ny, nz] = self.extent;
        let mut mass = 0.0;
        let mut mom = [0.0; 3];
        for z in 0..nz as i64 {
            for y in 0..ny as i64 {
                for x in 0..nx as i64 {
                    let cell = self.cell_index([x, y, z]);
                    if !matches!(self.kinds[cell], CellKind::Fluid) {
                        continue;
                    }
                    for dir in 0..Q {
                        let f = self.src[self.pdf_index(cell, dir)].as_f64();
                        mass += f;
                        let e = DIRECTIONS[dir];
                        mom[0] += e[0] as f64 * f;
                        mom[1] += e[1] as f64 * f;
                        mom[2] += e[2] as f64 * f;
                    }
                }
            }
        }
        (mass, mom)
    }
}

/// Linear index of a cell in the extended (ghost-inclusive) array.
#[inline]
pub fn cell_index_of(extent: [usize; 3], c: [i64; 3]) -> usize {
    debug_assert!((0..3).all(|a| c[a] >= -1 && c[a] <= extent[a] as i64));
    let nx = (extent[0] + 2) as i64;
    let ny = (extent[1] + 2) as i64;
    (((c[2] + 1) * ny + (c[1] + 1)) * nx + (c[0] + 1)) as usize
}

/// Cells of the boundary region that feeds an outgoing exchange in direction
/// `d`: for each nonzero component the outermost interior slice, full interior
/// range elsewhere. x varies fastest, then y, then z — this order is part of
/// the wire format.
pub fn boundary_cells(extent: [usize; 3], d: CommDir) -> Vec<[i64; 3]> {
    region_cells(extent, d, false)
}

/// Ghost cells on side `d` of a block (the shell receiving data from the
/// `d`-neighbor), enumerated in the same canonical order.
pub fn ghost_cells(extent: [usize; 3], d: CommDir) -> Vec<[i64; 3]> {
    region_cells(extent, d, true)
}

/// Number of cells in the face/edge region for direction `d`.
pub fn region_cell_count(extent: [usize; 3], d: CommDir) -> usize {
    let off = d.offset();
    (0..3)
        .map(|a| if off[a] == 0 { extent[a] } else { 1 })
        .product()
}

fn region_cells(extent: [usize; 3], d: CommDir, ghost: bool) -> Vec<[i64; 3]> {
    let off = d.offset();
    let range = |a: usize| -> (i64, i64) {
        let n = extent[a] as i64;
        match (off[a], ghost) {
            (0, _) => (0, n),
            (1, false) => (n - 1, n),
            (-1, false) => (0, 1),
            (1, true) => (n, n + 1),
            (-1, true) => (-1, 0),
            _ => unreachable!(),
        }
    };
    let (x0, x1) = range(0);
    let (y0, y1) = range(1);
    let (z0, z1) = range(2);
    let mut cells = Vec::with_capacity(((x1 - x0) * (y1 - y0) * (z1 - z0)) as usize);
    for z in z0..z1 {
        for y in y0..y1 {
            for x in x0..x1 {
                cells.push([x, y, z]);
            }
        }
    }
    cells
}
