//! Regular-grid mesh, boundary conditions and the free-DOF reduction map.
//!
//! Nodes are numbered row-major: node (i, j) has index `j*(nx+1) + i`, with
//! i running along the width (lateral) and j along the height (axial). Each
//! node carries two DOFs, `(2k, 2k+1)` = (lateral, axial). Elements are
//! bilinear quadrilaterals listed counter-clockwise.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structured quadrilateral mesh over a rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
}

impl Mesh {
    /// Builds an `nx` by `ny` element grid over a `width` by `height` rectangle.
    pub fn new(nx: usize, ny: usize, width: f64, height: f64) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "element counts must be positive, got {nx}x{ny}"
            )));
        }
        if !(width > 0.0) || !(height > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "physical extents must be positive, got {width}x{height}"
            )));
        }
        Ok(Mesh { nx, ny, width, height })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn dx(&self) -> f64 {
        self.width / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.height / self.ny as f64
    }

    /// Node count N = (nx+1)(ny+1).
    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// DOF count 2N.
    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn n_elems(&self) -> usize {
        self.nx * self.ny
    }

    /// Index of node (i, j).
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        j * (self.nx + 1) + i
    }

    /// Grid position (i, j) of node `k`.
    pub fn node_ij(&self, k: usize) -> (usize, usize) {
        (k % (self.nx + 1), k / (self.nx + 1))
    }

    /// Physical coordinates of node `k`.
    pub fn node_coords(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(k);
        [i as f64 * self.dx(), j as f64 * self.dy()]
    }

    /// Nodes of element `e`, counter-clockwise from the lower-left corner.
    pub fn elem_nodes(&self, e: usize) -> [usize; 4] {
        debug_assert!(e < self.n_elems());
        let i = e % self.nx;
        let j = e / self.nx;
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ]
    }

    /// Image shape for node-valued fields: (rows, cols) = (ny+1, nx+1),
    /// row r holding the nodes at height index r.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.ny + 1, self.nx + 1)
    }
}

/// Dirichlet constraints plus a uniform normal traction on the top edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    /// (DOF index, prescribed value) pairs.
    pub dirichlet: Vec<(usize, f64)>,
    /// Top-edge normal traction (force per unit length; negative = compression).
    pub traction_top: f64,
}

impl BoundaryConditions {
    /// Standard compression setup: bottom-edge rollers (u_y = 0), the
    /// bottom-left lateral DOF pinned, sides free, uniform traction on top.
    pub fn compression(mesh: &Mesh, traction_top: f64) -> BoundaryConditions {
        let mut dirichlet = Vec::with_capacity(mesh.nx() + 2);
        dirichlet.push((2 * mesh.node_index(0, 0), 0.0)); // lateral pin
        for i in 0..=mesh.nx() {
            dirichlet.push((2 * mesh.node_index(i, 0) + 1, 0.0)); // axial rollers
        }
        BoundaryConditions { dirichlet, traction_top }
    }

    /// Validates DOF ranges, uniqueness and that rigid-body modes are removed.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let n_dofs = mesh.n_dofs();
        let mut seen = vec![false; n_dofs];
        for &(dof, value) in &self.dirichlet {
            if dof >= n_dofs {
                return Err(Error::InvalidArgument(format!(
                    "Dirichlet DOF {dof} out of range (n_dofs = {n_dofs})"
                )));
            }
            if seen[dof] {
                return Err(Error::InvalidArgument(format!("duplicate Dirichlet DOF {dof}")));
            }
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("Dirichlet value at DOF {dof}")));
            }
            seen[dof] = true;
        }
        let n_lateral = self.dirichlet.iter().filter(|(d, _)| d % 2 == 0).count();
        let n_axial = self.dirichlet.len() - n_lateral;
        if self.dirichlet.len() < 3 || n_lateral == 0 || n_axial < 2 {
            return Err(Error::InvalidArgument(
                "boundary conditions leave a rigid-body mode (need >=1 lateral and >=2 axial constraints)"
                    .into(),
            ));
        }
        if !self.traction_top.is_finite() {
            return Err(Error::NonFinite("top traction".into()));
        }
        Ok(())
    }

    /// Consistent nodal loads for the top-edge traction (trapezoidal edge
    /// lumping): interior top nodes receive t*dx, the corners t*dx/2, all on
    /// the axial DOF. Total applied vertical load is t*width.
    pub fn nodal_loads(&self, mesh: &Mesh) -> Array1<f64> {
        let mut f = Array1::zeros(mesh.n_dofs());
        let t = self.traction_top;
        if t != 0.0 {
            let dx = mesh.dx();
            for i in 0..=mesh.nx() {
                let weight = if i == 0 || i == mesh.nx() { 0.5 } else { 1.0 };
                let dof = 2 * mesh.node_index(i, mesh.ny()) + 1;
                f[dof] = t * dx * weight;
            }
        }
        f
    }
}

/// Mapping between full DOFs and the free (unconstrained) subset.
#[derive(Debug, Clone)]
pub struct DofMap {
    full_to_free: Vec<Option<usize>>,
    free_to_full: Vec<usize>,
    /// Full-length vector: prescribed values on Dirichlet DOFs, zero elsewhere.
    prescribed: Array1<f64>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, bc: &BoundaryConditions) -> Result<DofMap> {
        bc.validate(mesh)?;
        let n = mesh.n_dofs();
        let mut full_to_free = vec![None; n];
        let mut prescribed = Array1::zeros(n);
        let mut constrained = vec![false; n];
        for &(dof, value) in &bc.dirichlet {
            constrained[dof] = true;
            prescribed[dof] = value;
        }
        let mut free_to_full = Vec::with_capacity(n - bc.dirichlet.len());
        for dof in 0..n {
            if !constrained[dof] {
                full_to_free[dof] = Some(free_to_full.len());
                free_to_full.push(dof);
            }
        }
        Ok(DofMap { full_to_free, free_to_full, prescribed })
    }

    /// A map with no constrained DOFs (identity reduction).
    pub fn identity(n_dofs: usize) -> DofMap {
        DofMap {
            full_to_free: (0..n_dofs).map(Some).collect(),
            free_to_full: (0..n_dofs).collect(),
            prescribed: Array1::zeros(n_dofs),
        }
    }

    pub fn n_full(&self) -> usize {
        self.full_to_free.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_to_full.len()
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.full_to_free[dof]
    }

    pub fn full_index(&self, free: usize) -> usize {
        self.free_to_full[free]
    }

    pub fn full_to_free_map(&self) -> &[Option<usize>] {
        &self.full_to_free
    }

    pub fn prescribed(&self) -> &Array1<f64> {
        &self.prescribed
    }

    /// Restricts a full-length vector to the free DOFs.
    pub fn restrict(&self, full: &[f64]) -> Result<Array1<f64>> {
        crate::error::ensure_len(full.len(), self.n_full(), "restrict operand")?;
        Ok(Array1::from_iter(self.free_to_full.iter().map(|&d| full[d])))
    }

    /// Expands a free-DOF vector to full length, filling prescribed values.
    pub fn inject(&self, free: &[f64]) -> Result<Array1<f64>> {
        crate::error::ensure_len(free.len(), self.n_free(), "inject operand")?;
        let mut full = self.prescribed.clone();
        for (k, &dof) in self.free_to_full.iter().enumerate() {
            full[dof] = free[k];
        }
        Ok(full)
    }
}
