use std::collections::HashMap;

use super::Mesh;
use crate::error::{Error, Result};
use crate::simplex_poly::{lagrange_basis, positive_compositions};

/// Local-to-global numbering of Lagrange degrees of freedom.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub degree: usize,
    pub num_global_dofs: usize,
    /// `cell_dofs[c][i]` is the global id of reference node `i` on cell `c`.
    pub cell_dofs: Vec<Vec<usize>>,
}

impl DofMap {
    pub fn dofs_per_cell(&self) -> usize {
        self.cell_dofs.first().map_or(0, Vec::len)
    }

    /// Gathers a global vector onto one cell.
    pub fn restrict_into(&self, cell: usize, global: &[f64], local: &mut [f64]) {
        for (slot, &g) in local.iter_mut().zip(&self.cell_dofs[cell]) {
            *slot = global[g];
        }
    }
}

fn sorted_entities(mesh: &Mesh, size: usize) -> Vec<Vec<usize>> {
    let mut all = Vec::new();
    for cell in &mesh.cells {
        let nv = cell.len();
        for mask in 0u32..(1 << nv) {
            if mask.count_ones() as usize == size {
                let mut e: Vec<usize> = (0..nv).filter(|i| mask & (1 << i) != 0).map(|i| cell[i]).collect();
                e.sort_unstable();
                all.push(e);
            }
        }
    }
    all.sort_unstable();
    all.dedup();
    all
}

/// Numbers vertices first, then `k - 1` dofs per edge (from the lower to
/// the higher global vertex), then face dofs in lexicographic barycentric
/// order on the sorted vertex triple (3D), then cell interiors.
pub fn build_dofmap(mesh: &Mesh, degree: usize) -> Result<DofMap> {
    let basis = lagrange_basis(mesh.dim, degree)?;
    let k = degree as u32;
    let nv = mesh.num_vertices();

    let edges = sorted_entities(mesh, 2);
    let edge_id: HashMap<(usize, usize), usize> = edges.iter().enumerate().map(|(i, e)| ((e[0], e[1]), i)).collect();
    let per_edge = degree.saturating_sub(1);
    let faces = if mesh.dim == 3 { sorted_entities(mesh, 3) } else { Vec::new() };
    let face_id: HashMap<(usize, usize, usize), usize> =
        faces.iter().enumerate().map(|(i, f)| ((f[0], f[1], f[2]), i)).collect();
    let face_patterns = positive_compositions(3, k);
    let face_pos: HashMap<Vec<u32>, usize> = face_patterns.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let per_face = if mesh.dim == 3 { face_patterns.len() } else { 0 };

    let interior: Vec<usize> = (0..basis.len())
        .filter(|&i| basis.lattice[i].iter().all(|&b| b > 0))
        .collect();
    let edge_base = nv;
    let face_base = edge_base + edges.len() * per_edge;
    let cell_base = face_base + faces.len() * per_face;
    let num_global_dofs = cell_base + mesh.num_cells() * interior.len();

    let mut cell_dofs = Vec::with_capacity(mesh.num_cells());
    for (c, cell) in mesh.cells.iter().enumerate() {
        let mut dofs = Vec::with_capacity(basis.len());
        let mut interior_seen = 0;
        for lattice in &basis.lattice {
            let mut support: Vec<(usize, u32)> = lattice
                .iter()
                .enumerate()
                .filter(|(_, &b)| b > 0)
                .map(|(i, &b)| (cell[i], b))
                .collect();
            support.sort_unstable();
            let id = match support.len() {
                1 => support[0].0,
                2 => {
                    let e = edge_id[&(support[0].0, support[1].0)];
                    edge_base + e * per_edge + (support[1].1 as usize - 1)
                }
                3 if mesh.dim == 3 => {
                    let f = face_id[&(support[0].0, support[1].0, support[2].0)];
                    let weights: Vec<u32> = support.iter().map(|s| s.1).collect();
                    face_base + f * per_face + face_pos[&weights]
                }
                _ => {
                    interior_seen += 1;
                    cell_base + c * interior.len() + interior_seen - 1
                }
            };
            dofs.push(id);
        }
        cell_dofs.push(dofs);
    }
    if cell_dofs.iter().flatten().any(|&d| d >= num_global_dofs) {
        return Err(Error::InconsistentProgram("dof id out of range".into()));
    }
    Ok(DofMap {
        degree,
        num_global_dofs,
        cell_dofs,
    })
}
