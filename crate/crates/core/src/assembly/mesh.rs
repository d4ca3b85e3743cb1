use crate::error::{Error, Result};
use crate::form_tensors::affine_map_of;

/// A conforming simplicial mesh with positively oriented cells.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Vertex coordinates of one cell, on the stack.
    pub fn cell_points(&self, cell: usize) -> ([&[f64]; 4], usize) {
        let mut pts: [&[f64]; 4] = [&[]; 4];
        let c = &self.cells[cell];
        for (slot, &v) in pts.iter_mut().zip(c) {
            *slot = &self.vertices[v];
        }
        (pts, c.len())
    }

    pub fn cell_det(&self, cell: usize) -> Result<f64> {
        let (pts, nv) = self.cell_points(cell);
        Ok(affine_map_of(&pts[..nv])?.det)
    }

    /// Sum of cell measures.
    pub fn volume(&self) -> Result<f64> {
        let fact = if self.dim == 2 { 2.0 } else { 6.0 };
        let mut total = 0.0;
        for c in 0..self.num_cells() {
            total += self.cell_det(c)?.abs() / fact;
        }
        Ok(total)
    }

    /// Swaps the last two vertices of any negatively oriented cell.
    fn orient(mut self) -> Result<Self> {
        for c in 0..self.cells.len() {
            if self.cell_det(c)? < 0.0 {
                let last = self.cells[c].len() - 1;
                self.cells[c].swap(last - 1, last);
            }
        }
        Ok(self)
    }
}

/// `n x n` squares on the unit square, each split along the diagonal from
/// its lower-left to its upper-right corner.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n < 1 {
        return Err(Error::InvalidMesh(n));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(vec![i as f64 * h, j as f64 * h]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            cells.push(vec![v00, v10, v11]);
            cells.push(vec![v00, v11, v01]);
        }
    }
    Mesh { dim: 2, vertices, cells }.orient()
}

/// `n^3` cubes on the unit cube, each split into the six Kuhn tetrahedra
/// sharing the main diagonal.
pub fn unit_cube_mesh(n: usize) -> Result<Mesh> {
    if n < 1 {
        return Err(Error::InvalidMesh(n));
    }
    let h = 1.0 / n as f64;
    let m = n + 1;
    let mut vertices = Vec::with_capacity(m * m * m);
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(vec![i as f64 * h, j as f64 * h, k as f64 * h]);
            }
        }
    }
    let id = |p: [usize; 3]| (p[2] * m + p[1]) * m + p[0];
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut cells = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in PERMS {
                    let mut p = [i, j, k];
                    let mut cell = vec![id(p)];
                    for axis in perm {
                        p[axis] += 1;
                        cell.push(id(p));
                    }
                    cells.push(cell);
                }
            }
        }
    }
    Mesh { dim: 3, vertices, cells }.orient()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, BTreeSet};

    #[test]
    fn square_counts_and_area() {
        for n in [1, 3, 8] {
            let m = unit_square_mesh(n).unwrap();
            assert_eq!(m.num_vertices(), (n + 1) * (n + 1));
            assert_eq!(m.num_cells(), 2 * n * n);
            assert!((m.volume().unwrap() - 1.0).abs() < 1e-12);
            assert!((0..m.num_cells()).all(|c| m.cell_det(c).unwrap() > 0.0));
        }
        let m = unit_square_mesh(64).unwrap();
        assert_eq!((m.num_vertices(), m.num_cells()), (4225, 8192));
        assert!(unit_square_mesh(0).is_err());
    }

    #[test]
    fn cube_counts_and_volume() {
        for n in [1, 2, 4] {
            let m = unit_cube_mesh(n).unwrap();
            assert_eq!(m.num_vertices(), (n + 1).pow(3));
            assert_eq!(m.num_cells(), 6 * n * n * n);
            assert!((m.volume().unwrap() - 1.0).abs() < 1e-12);
            assert!((0..m.num_cells()).all(|c| m.cell_det(c).unwrap() > 0.0));
        }
        assert!(unit_cube_mesh(0).is_err());
    }

    #[test]
    fn cube_mesh_is_conforming() {
        // every interior face is shared by exactly two tets, boundary faces by one
        let m = unit_cube_mesh(2).unwrap();
        let mut faces: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for c in &m.cells {
            for skip in 0..4 {
                let mut f: Vec<usize> = c.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v).collect();
                f.sort();
                *faces.entry(f).or_default() += 1;
            }
        }
        let on_boundary = |f: &Vec<usize>| {
            (0..3).any(|axis| {
                let coords: BTreeSet<u64> = f.iter().map(|&v| m.vertices[v][axis].to_bits()).collect();
                coords.len() == 1 && (m.vertices[f[0]][axis] == 0.0 || m.vertices[f[0]][axis] == 1.0)
            })
        };
        for (f, count) in &faces {
            assert_eq!(*count, if on_boundary(f) { 1 } else { 2 }, "{f:?}");
        }
        // boundary: 6 sides * n^2 squares * 2 triangles
        assert_eq!(faces.values().filter(|c| **c == 1).count(), 6 * 4 * 2);
    }
}
