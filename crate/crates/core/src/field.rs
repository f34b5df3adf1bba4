//! Nodal field types: elasticity (per node) and displacement (two DOFs per node).

use ndarray::{Array1, Array2};

use crate::error::{ensure_len, Result};
use crate::mesh::Mesh;

/// Per-node Young's modulus, length N. Values are in normalized units
/// (a value of 0.1 means 10 KPa at the 100 KPa scale).
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityField {
    values: Array1<f64>,
}

impl ElasticityField {
    pub fn new(values: Array1<f64>) -> ElasticityField {
        ElasticityField { values }
    }

    /// Homogeneous field of `value` over `mesh`.
    pub fn constant(mesh: &Mesh, value: f64) -> ElasticityField {
        ElasticityField { values: Array1::from_elem(mesh.n_nodes(), value) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array1<f64> {
        &mut self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice().expect("contiguous field")
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Reshapes to the (ny+1, nx+1) node grid; row r holds height index r.
    pub fn to_grid(&self, mesh: &Mesh) -> Result<Array2<f64>> {
        ensure_len(self.len(), mesh.n_nodes(), "elasticity field")?;
        let (rows, cols) = mesh.grid_shape();
        Ok(Array2::from_shape_vec((rows, cols), self.values.to_vec()).expect("shape checked"))
    }

    /// Inverse of [`ElasticityField::to_grid`].
    pub fn from_grid(mesh: &Mesh, grid: &Array2<f64>) -> Result<ElasticityField> {
        let (rows, cols) = mesh.grid_shape();
        ensure_len(grid.nrows() * grid.ncols(), rows * cols, "elasticity grid")?;
        let flat: Vec<f64> = grid.iter().copied().collect();
        Ok(ElasticityField { values: Array1::from_vec(flat) })
    }
}

/// Nodal displacements, length 2N, interleaved (lateral, axial).
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    values: Array1<f64>,
}

impl DisplacementField {
    pub fn new(values: Array1<f64>) -> DisplacementField {
        DisplacementField { values }
    }

    pub fn zeros(mesh: &Mesh) -> DisplacementField {
        DisplacementField { values: Array1::zeros(mesh.n_dofs()) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array1<f64> {
        &mut self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice().expect("contiguous field")
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Splits into (lateral, axial) node grids of shape (ny+1, nx+1).
    pub fn to_grids(&self, mesh: &Mesh) -> Result<(Array2<f64>, Array2<f64>)> {
        ensure_len(self.len(), mesh.n_dofs(), "displacement field")?;
        let (rows, cols) = mesh.grid_shape();
        let mut ux = Array2::zeros((rows, cols));
        let mut uy = Array2::zeros((rows, cols));
        for k in 0..mesh.n_nodes() {
            let (i, j) = mesh.node_ij(k);
            ux[(j, i)] = self.values[2 * k];
            uy[(j, i)] = self.values[2 * k + 1];
        }
        Ok((ux, uy))
    }

    /// Inverse of [`DisplacementField::to_grids`].
    pub fn from_grids(mesh: &Mesh, ux: &Array2<f64>, uy: &Array2<f64>) -> Result<DisplacementField> {
        let (rows, cols) = mesh.grid_shape();
        ensure_len(ux.nrows() * ux.ncols(), rows * cols, "lateral grid")?;
        ensure_len(uy.nrows() * uy.ncols(), rows * cols, "axial grid")?;
        let mut values = Array1::zeros(mesh.n_dofs());
        for k in 0..mesh.n_nodes() {
            let (i, j) = mesh.node_ij(k);
            values[2 * k] = ux[(j, i)];
            values[2 * k + 1] = uy[(j, i)];
        }
        Ok(DisplacementField { values })
    }
}
