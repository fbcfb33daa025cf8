use super::grid::Grid;
use crate::{Error, Result};

/// Real scalar samples on a [`Grid`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

/// `dim` real components on a common [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

/// `dim × dim` entries on a common [`Grid`]; entry (i,j) at index `i·dim+j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: Grid,
    entries: Vec<Vec<f64>>,
}

fn check_finite(name: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::param(name, "contains non-finite values"))
    }
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.points()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(Error::param(
                "values",
                format!("expected {} values, got {}", grid.points(), values.len()),
            ));
        }
        check_finite("values", &values)?;
        Ok(ScalarField {
            grid: grid.clone(),
            values,
        })
    }

    /// Sample a closure at the grid nodes.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; grid.points()];
        grid.for_each_node(|p, idx| {
            let x = grid.node(&idx[..grid.dim()]);
            values[p] = f(&x[..grid.dim()]);
        });
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            grid: grid.clone(),
            components: vec![vec![0.0; grid.points()]; grid.dim()],
        }
    }

    pub fn from_components(grid: &Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::param(
                "components",
                format!("expected {} components, got {}", grid.dim(), components.len()),
            ));
        }
        for c in &components {
            if c.len() != grid.points() {
                return Err(Error::param("components", "component length mismatch"));
            }
            check_finite("components", c)?;
        }
        Ok(VectorField {
            grid: grid.clone(),
            components,
        })
    }

    pub fn from_scalars(fields: Vec<ScalarField>) -> Result<Self> {
        let grid = fields
            .first()
            .ok_or_else(|| Error::param("fields", "empty"))?
            .grid()
            .clone();
        for f in &fields {
            grid.same_as(f.grid())?;
        }
        VectorField::from_components(&grid, fields.into_iter().map(|f| f.values).collect())
    }

    /// Sample a closure returning one value per component.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let dim = grid.dim();
        let mut components = vec![vec![0.0; grid.points()]; dim];
        grid.for_each_node(|p, idx| {
            let x = grid.node(&idx[..dim]);
            let v = f(&x[..dim]);
            debug_assert_eq!(v.len(), dim);
            for a in 0..dim {
                components[a][p] = v[a];
            }
        });
        VectorField {
            grid: grid.clone(),
            components,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn component(&self, a: usize) -> &[f64] {
        &self.components[a]
    }

    pub fn component_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.components[a]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    /// Per-component spatial means.
    pub fn mean(&self) -> Vec<f64> {
        let np = self.grid.points() as f64;
        self.components
            .iter()
            .map(|c| c.iter().sum::<f64>() / np)
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.components {
            for v in c {
                *v *= s;
            }
        }
    }

    /// `self += s·other`, fields on the same grid.
    pub fn axpy(&mut self, s: f64, other: &VectorField) {
        debug_assert_eq!(self.grid, other.grid);
        for (c, oc) in self.components.iter_mut().zip(&other.components) {
            for (v, ov) in c.iter_mut().zip(oc) {
                *v += s * ov;
            }
        }
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        self.grid.same_as(other.grid())?;
        let mut out = self.clone();
        out.axpy(1.0, other);
        Ok(out)
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        self.grid.same_as(other.grid())?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }
}

impl TensorField {
    pub fn zeros(grid: &Grid) -> Self {
        TensorField {
            grid: grid.clone(),
            entries: vec![vec![0.0; grid.points()]; grid.dim() * grid.dim()],
        }
    }

    pub fn from_entries(grid: &Grid, entries: Vec<Vec<f64>>) -> Result<Self> {
        let d = grid.dim();
        if entries.len() != d * d {
            return Err(Error::param(
                "entries",
                format!("expected {} entries, got {}", d * d, entries.len()),
            ));
        }
        for e in &entries {
            if e.len() != grid.points() {
                return Err(Error::param("entries", "entry length mismatch"));
            }
            check_finite("entries", e)?;
        }
        Ok(TensorField {
            grid: grid.clone(),
            entries,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Entry (i,j) as a flat slice.
    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.entries[i * self.grid.dim() + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let d = self.grid.dim();
        &mut self.entries[i * d + j]
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }
}

/// Pointwise outer product `(φ⊗ψ)_{ij} = φ^i ψ^j`.
pub fn tensor_product(u: &VectorField, v: &VectorField) -> Result<TensorField> {
    u.grid().same_as(v.grid())?;
    let d = u.dim();
    let mut out = TensorField::zeros(u.grid());
    for i in 0..d {
        for j in 0..d {
            let ui = u.component(i);
            let vj = v.component(j);
            let e = out.entry_mut(i, j);
            for p in 0..e.len() {
                e[p] = ui[p] * vj[p];
            }
        }
    }
    Ok(out)
}
