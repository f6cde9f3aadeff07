//! Uniform grids on the unit square and nodal fields living on them.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Boundary conditions carried by a grid. Both imply `u = 0` on the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Clamped: `u = u_ν = 0`.
    Dirichlet,
    /// Hinged: `u = Δu = 0`.
    Navier,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryCondition::Dirichlet => f.write_str("dirichlet"),
            BoundaryCondition::Navier => f.write_str("navier"),
        }
    }
}

impl FromStr for BoundaryCondition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dirichlet" => Ok(BoundaryCondition::Dirichlet),
            "navier" => Ok(BoundaryCondition::Navier),
            other => Err(format!("unknown boundary condition `{other}`")),
        }
    }
}

/// `n × n` interior nodes of the unit square with spacing `h = 1/(n+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    n: usize,
    h: f64,
    bc: BoundaryCondition,
}

impl Grid2D {
    pub const MIN_NODES: usize = 4;

    pub fn new(n: usize, bc: BoundaryCondition) -> Result<Self> {
        if n < Self::MIN_NODES {
            return Err(LabError::InvalidArgument(format!(
                "grid needs at least {} interior nodes per side, got {n}",
                Self::MIN_NODES
            )));
        }
        Ok(Grid2D {
            n,
            h: 1.0 / (n + 1) as f64,
            bc,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn with_bc(&self, bc: BoundaryCondition) -> Self {
        Grid2D { bc, ..*self }
    }

    /// Total number of interior nodes.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of interior index `i` (0-based), computed by division so
    /// that symmetric nodes are bitwise symmetric.
    pub fn coord(&self, i: usize) -> f64 {
        (i + 1) as f64 / (self.n + 1) as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Interior node closest to `(x, y)`.
    pub fn nearest(&self, x: f64, y: f64) -> (usize, usize) {
        let pick = |c: f64| {
            let k = (c * (self.n + 1) as f64).round() as isize - 1;
            k.clamp(0, self.n as isize - 1) as usize
        };
        (pick(x), pick(y))
    }

    /// Distance of node `(i, j)` to the boundary, in units of `h`.
    pub fn depth(&self, i: usize, j: usize) -> usize {
        let d = |k: usize| (k + 1).min(self.n - k);
        d(i).min(d(j))
    }
}

/// Nodal values on the interior of a [`Grid2D`]; boundary values are zero.
///
/// Storage is row-major with the x index outermost: `values[i * n + j]`
/// holds `u(x_i, y_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Field2D {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::InvalidArgument(format!(
                "expected {} values for an n = {} grid, got {}",
                grid.len(),
                grid.n(),
                values.len()
            )));
        }
        Ok(Field2D { grid, values })
    }

    /// Samples `f(x, y)` at every interior node.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Grid2D, f: F) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            let x = grid.coord(i);
            for j in 0..n {
                values.push(f(x, grid.coord(j)));
            }
        }
        Field2D { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n() + j]
    }

    /// Value at signed interior indices; anything outside reads as zero.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        let n = self.grid.n() as isize;
        if i < 0 || j < 0 || i >= n || j >= n {
            0.0
        } else {
            self.values[(i * n + j) as usize]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Field2D {
        self.map(|v| v * s)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field2D {
        Field2D {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Field2D, f: F) -> Field2D {
        debug_assert_eq!(self.n(), other.n());
        Field2D {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Field2D) {
        for (v, w) in self.values.iter_mut().zip(&other.values) {
            *v += a * w;
        }
    }

    /// Swap the roles of x and y.
    pub fn transposed(&self) -> Field2D {
        let n = self.n();
        let mut values = vec![0.0; self.values.len()];
        for i in 0..n {
            for j in 0..n {
                values[j * n + i] = self.values[i * n + j];
            }
        }
        Field2D {
            grid: self.grid,
            values,
        }
    }

    /// Same values attached to a grid with a different boundary tag.
    pub fn with_bc(&self, bc: BoundaryCondition) -> Field2D {
        Field2D {
            grid: self.grid.with_bc(bc),
            values: self.values.clone(),
        }
    }

    /// Writes one CSV row per x-line, preceded by a `#` header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# field2d n={} bc={}",
            self.grid.n(),
            self.grid.bc()
        )?;
        write_matrix(&mut w, &self.values, self.grid.n())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Field2D> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| LabError::InvalidArgument("empty field csv".into()))??;
        let tags = parse_header(&header, "field2d")?;
        let n: usize = tag_value(&tags, "n")?;
        let bc: BoundaryCondition = tag_value(&tags, "bc")?;
        let grid = Grid2D::new(n, bc)?;
        let values = read_matrix(lines, n, n)?;
        Field2D::from_values(grid, values)
    }
}

impl Add for &Field2D {
    type Output = Field2D;
    fn add(self, rhs: &Field2D) -> Field2D {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Field2D {
    type Output = Field2D;
    fn sub(self, rhs: &Field2D) -> Field2D {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Field2D {
    type Output = Field2D;
    fn mul(self, s: f64) -> Field2D {
        self.scaled(s)
    }
}

impl Neg for &Field2D {
    type Output = Field2D;
    fn neg(self) -> Field2D {
        self.scaled(-1.0)
    }
}

pub(crate) fn write_matrix<W: Write>(w: &mut W, values: &[f64], row_len: usize) -> Result<()> {
    for row in values.chunks(row_len) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub(crate) fn read_matrix<I>(lines: I, rows: usize, cols: usize) -> Result<Vec<f64>>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let mut out = Vec::with_capacity(rows * cols);
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            LabError::InvalidArgument(format!("csv row {}: {e}", k + 2))
        })?;
        if row.len() != cols {
            return Err(LabError::InvalidArgument(format!(
                "csv row {} has {} entries, expected {cols}",
                k + 2,
                row.len()
            )));
        }
        out.extend(row);
    }
    if out.len() != rows * cols {
        return Err(LabError::InvalidArgument(format!(
            "csv holds {} rows, expected {rows}",
            out.len() / cols.max(1)
        )));
    }
    Ok(out)
}

pub(crate) fn parse_header(line: &str, kind: &str) -> Result<Vec<(String, String)>> {
    let mut parts = line
        .strip_prefix('#')
        .ok_or_else(|| LabError::InvalidArgument("csv header must start with `#`".into()))?
        .split_whitespace();
    match parts.next() {
        Some(k) if k == kind => {}
        other => {
            return Err(LabError::InvalidArgument(format!(
                "expected a `{kind}` csv, found `{}`",
                other.unwrap_or("")
            )))
        }
    }
    Ok(parts
        .filter_map(|p| p.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

pub(crate) fn tag_value<T: FromStr>(tags: &[(String, String)], key: &str) -> Result<T> {
    tags.iter()
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| LabError::InvalidArgument(format!("csv header lacks a valid `{key}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid2D::new(3, BoundaryCondition::Dirichlet).is_err());
        assert!(Grid2D::new(4, BoundaryCondition::Dirichlet).is_ok());
    }

    #[test]
    fn spacing_matches_node_count() {
        for n in [4, 16, 31, 48, 64, 127, 128] {
            let g = Grid2D::new(n, BoundaryCondition::Navier).unwrap();
            assert!((g.h() * (n + 1) as f64 - 1.0).abs() <= f64::EPSILON);
            assert_eq!(g.coord(n - 1), 1.0 - g.coord(0));
        }
    }

    #[test]
    fn nearest_and_depth() {
        let g = Grid2D::new(7, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(g.nearest(0.25, 0.25), (1, 1));
        assert_eq!(g.depth(0, 3), 1);
        assert_eq!(g.depth(3, 3), 4);
        assert_eq!(g.depth(6, 2), 1);
    }

    #[test]
    fn csv_roundtrip_is_bitwise() {
        let g = Grid2D::new(5, BoundaryCondition::Navier).unwrap();
        let f = Field2D::from_fn(g, |x, y| (x * 3.1).sin() * y.exp() * 1e-7 + 1.0 / 3.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = Field2D::read_csv(buf.as_slice()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn csv_rejects_short_rows() {
        let text = "# field2d n=4 bc=dirichlet\n1,2,3,4\n1,2,3\n";
        assert!(Field2D::read_csv(text.as_bytes()).is_err());
    }
}
