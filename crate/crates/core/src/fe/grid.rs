use crate::error::{Error, Result};

/// Structured rectangular grid of bilinear quads.
///
/// Nodes are numbered column-major from the bottom-left corner,
/// `node = ix * (nely + 1) + iy`, with DOFs `(2 node, 2 node + 1)` for
/// `(ux, uy)`. Elements follow the same column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub domain_width: f64,
    pub domain_height: f64,
    pub nelx: usize,
    pub nely: usize,
    pub element_width: f64,
    pub element_height: f64,
    active: Vec<bool>,
}

impl GridSpec {
    pub fn new(domain_width: f64, domain_height: f64, nelx: usize, nely: usize) -> Result<Self> {
        if !(domain_width > 0.0 && domain_height > 0.0) {
            return Err(Error::invalid("domain dimensions must be positive"));
        }
        if nelx == 0 || nely == 0 {
            return Err(Error::invalid("element counts must be positive"));
        }
        Ok(GridSpec {
            domain_width,
            domain_height,
            nelx,
            nely,
            element_width: domain_width / nelx as f64,
            element_height: domain_height / nely as f64,
            active: vec![true; nelx * nely],
        })
    }

    /// Replaces the active mask; inactive elements are passive voids.
    pub fn with_active_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.element_count() {
            return Err(Error::invalid(format!(
                "active mask has {} entries, grid has {} elements",
                mask.len(),
                self.element_count()
            )));
        }
        self.active = mask;
        Ok(self)
    }

    /// Both element counts even and at least 2, as required for 2:1 coarsening.
    pub fn check_two_grid(&self) -> Result<()> {
        if self.nelx < 2 || self.nely < 2 || self.nelx % 2 != 0 || self.nely % 2 != 0 {
            return Err(Error::invalid(format!(
                "two-grid coarsening needs even element counts >= 2, got {}x{}",
                self.nelx, self.nely
            )));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        (self.nelx + 1) * (self.nely + 1)
    }

    pub fn dof_count(&self) -> usize {
        2 * self.node_count()
    }

    pub fn element_count(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix <= self.nelx && iy <= self.nely);
        ix * (self.nely + 1) + iy
    }

    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node / (self.nely + 1), node % (self.nely + 1))
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let (ix, iy) = self.node_ij(node);
        (
            ix as f64 * self.element_width,
            iy as f64 * self.element_height,
        )
    }

    pub fn element_index(&self, ix: usize, iy: usize) -> usize {
        ix * self.nely + iy
    }

    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e / self.nely, e % self.nely)
    }

    /// Counter-clockwise from the bottom-left corner.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ix, iy) = self.element_ij(e);
        [
            self.node_index(ix, iy),
            self.node_index(ix + 1, iy),
            self.node_index(ix + 1, iy + 1),
            self.node_index(ix, iy + 1),
        ]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.element_nodes(e);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    pub fn is_active(&self, e: usize) -> bool {
        self.active[e]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn element_area(&self) -> f64 {
        self.element_width * self.element_height
    }

    pub fn active_area(&self) -> f64 {
        self.active_count() as f64 * self.element_area()
    }

    /// Node nearest to `(x, y)`.
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        let ix = (x / self.element_width).round().clamp(0.0, self.nelx as f64) as usize;
        let iy = (y / self.element_height).round().clamp(0.0, self.nely as f64) as usize;
        self.node_index(ix, iy)
    }
}
