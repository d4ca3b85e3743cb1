use num_bigint::BigInt;
use num_traits::{One, Zero};

use super::{MultiIndex, Polynomial, Rational};
use crate::error::{Error, Result};

pub const MAX_DEGREE_2D: usize = 5;
pub const MAX_DEGREE_3D: usize = 4;

/// `|P_k| = C(k + d, d)`.
pub fn space_dimension(dim: usize, degree: usize) -> usize {
    let mut n = 1usize;
    for i in 1..=dim {
        n = n * (degree + i) / i;
    }
    n
}

/// Nodal Lagrange basis of `P_k` on the unit simplex.
///
/// Nodes are the equispaced principal lattice, numbered entity by entity:
/// vertices, then edges (edge `i` of a triangle is opposite vertex `i`; on a
/// tetrahedron the edges are 23, 13, 12, 03, 02, 01), then faces (face `i`
/// opposite vertex `i`), then the interior. Inside an entity the points are
/// ordered by their lattice weights on the entity's higher-numbered vertices.
#[derive(Clone, Debug)]
pub struct LagrangeBasis {
    pub dim: usize,
    pub degree: usize,
    pub nodes: Vec<Vec<Rational>>,
    /// Barycentric lattice coordinates of each node, `d + 1` entries summing
    /// to `degree`; entry 0 belongs to the vertex at the origin.
    pub lattice: Vec<Vec<u32>>,
    pub functions: Vec<Polynomial>,
}

impl LagrangeBasis {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

fn reference_entities(dim: usize) -> Vec<Vec<usize>> {
    match dim {
        2 => vec![
            vec![0],
            vec![1],
            vec![2],
            vec![1, 2],
            vec![0, 2],
            vec![0, 1],
            vec![0, 1, 2],
        ],
        3 => vec![
            vec![0],
            vec![1],
            vec![2],
            vec![3],
            vec![2, 3],
            vec![1, 3],
            vec![1, 2],
            vec![0, 3],
            vec![0, 2],
            vec![0, 1],
            vec![1, 2, 3],
            vec![0, 2, 3],
            vec![0, 1, 3],
            vec![0, 1, 2],
            vec![0, 1, 2, 3],
        ],
        _ => unreachable!("dimension checked by caller"),
    }
}

/// Lattice weights `t` over `parts` vertices with every `t_i >= 1` and
/// `sum(t) = total`, ordered by `t[1..]` lexicographically.
pub(crate) fn positive_compositions(parts: usize, total: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, parts: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == parts {
            if remaining >= 1 {
                prefix.push(remaining);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        let left = (parts - prefix.len() - 1) as u32;
        if remaining < left + 1 {
            return;
        }
        for v in 1..=(remaining - left) {
            prefix.push(v);
            rec(prefix, parts, remaining - v, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        return out;
    }
    rec(&mut Vec::new(), parts, total, &mut out);
    out.sort_by(|a, b| a[1..].cmp(&b[1..]));
    out
}

fn lattice_nodes(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut nodes = Vec::new();
    for entity in reference_entities(dim) {
        for weights in positive_compositions(entity.len(), degree) {
            let mut b = vec![0u32; dim + 1];
            for (&v, &w) in entity.iter().zip(&weights) {
                b[v] = w;
            }
            nodes.push(b);
        }
    }
    nodes
}

pub fn lagrange_basis(dim: usize, degree: usize) -> Result<LagrangeBasis> {
    let supported = match dim {
        2 => (1..=MAX_DEGREE_2D).contains(&degree),
        3 => (1..=MAX_DEGREE_3D).contains(&degree),
        _ => false,
    };
    if !supported {
        return Err(Error::UnsupportedElement { dim, degree });
    }
    let k = degree as u32;
    let lattice = lattice_nodes(dim, k);
    let monomials = MultiIndex::all_up_to(dim, k);
    let n = monomials.len();
    debug_assert_eq!(lattice.len(), n);

    // Row j: node_j^m scaled by k^k, which makes every entry an integer.
    let kk = BigInt::from(k);
    let scale = num_traits::pow(kk.clone(), degree);
    let mut system: Vec<Vec<BigInt>> = lattice
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let mut row: Vec<BigInt> = monomials
                .iter()
                .map(|m| {
                    let mut v = num_traits::pow(kk.clone(), (k - m.degree()) as usize);
                    for (axis, &e) in m.exponents().iter().enumerate() {
                        v *= num_traits::pow(BigInt::from(b[axis + 1]), e as usize);
                    }
                    v
                })
                .collect();
            row.extend((0..n).map(|c| if c == j { scale.clone() } else { BigInt::zero() }));
            row
        })
        .collect();

    let coeffs = bareiss_solve(&mut system, n);

    let functions = (0..n)
        .map(|i| {
            Polynomial::from_terms(
                dim,
                monomials
                    .iter()
                    .zip(&coeffs)
                    .map(|(m, row)| (m.clone(), row[i].clone())),
            )
        })
        .collect();
    let nodes = lattice
        .iter()
        .map(|b| b[1..].iter().map(|&v| Rational::new(BigInt::from(v), kk.clone())).collect())
        .collect();

    Ok(LagrangeBasis {
        dim,
        degree,
        nodes,
        lattice,
        functions,
    })
}

/// Fraction-free elimination of `[A | B]` (A is `n x n`) followed by exact
/// rational back substitution. Returns `X` with `A X = B`, row-major `n x m`.
///
/// The pivot is the first row at or below the diagonal with a nonzero entry.
fn bareiss_solve(aug: &mut [Vec<BigInt>], n: usize) -> Vec<Vec<Rational>> {
    let width = aug[0].len();
    let mut prev = BigInt::one();
    for p in 0..n {
        let pivot = (p..n)
            .find(|&r| !aug[r][p].is_zero())
            .expect("Lagrange interpolation system is unisolvent");
        aug.swap(p, pivot);
        for i in (p + 1)..n {
            for j in (p + 1)..width {
                let v = (&aug[i][j] * &aug[p][p] - &aug[i][p] * &aug[p][j]) / &prev;
                aug[i][j] = v;
            }
            aug[i][p] = BigInt::zero();
        }
        prev = aug[p][p].clone();
    }

    let rhs = width - n;
    let mut x = vec![vec![Rational::zero(); rhs]; n];
    for p in (0..n).rev() {
        for c in 0..rhs {
            let mut acc = Rational::from_integer(aug[p][n + c].clone());
            for q in (p + 1)..n {
                if !aug[p][q].is_zero() {
                    acc -= Rational::from_integer(aug[p][q].clone()) * &x[q][c];
                }
            }
            x[p][c] = acc / Rational::from_integer(aug[p][p].clone());
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex_poly::{rat, rat_int};

    fn barycentric(dim: usize) -> Vec<Polynomial> {
        let one = Polynomial::constant(dim, rat_int(1));
        let mut l0 = one;
        let mut out = vec![];
        for a in 0..dim {
            let x = Polynomial::variable(dim, a);
            l0 = &l0 - &x;
            out.push(x);
        }
        out.insert(0, l0);
        out
    }

    // Independent construction: product formula in barycentric coordinates,
    // phi_b = prod_i prod_{j < b_i} (k*lambda_i - j) / (b_i - j).
    fn product_formula(dim: usize, k: u32, b: &[u32]) -> Polynomial {
        let lambdas = barycentric(dim);
        let mut p = Polynomial::constant(dim, rat_int(1));
        for (lam, &bi) in lambdas.iter().zip(b) {
            for j in 0..bi {
                let factor = &lam.scale(&rat_int(k as i64)) - &Polynomial::constant(dim, rat_int(j as i64));
                p = &p * &factor.scale(&rat(1, (bi - j) as i64));
            }
        }
        p
    }

    #[test]
    fn space_dimensions() {
        assert_eq!(space_dimension(2, 2), 6);
        assert_eq!(space_dimension(2, 5), 21);
        assert_eq!(space_dimension(3, 4), 35);
    }

    #[test]
    fn p1_triangle_is_barycentric() {
        let b = lagrange_basis(2, 1).unwrap();
        assert_eq!(b.functions, barycentric(2));
        let expected_nodes = vec![
            vec![rat(0, 1), rat(0, 1)],
            vec![rat(1, 1), rat(0, 1)],
            vec![rat(0, 1), rat(1, 1)],
        ];
        assert_eq!(b.nodes, expected_nodes);
    }

    #[test]
    fn p2_vertex_function_matches_product_formula() {
        let b = lagrange_basis(2, 2).unwrap();
        assert_eq!(b.len(), 6);
        let l = barycentric(2)[0].clone();
        let expected = &(&l * &l).scale(&rat_int(2)) - &l;
        assert_eq!(b.functions[0], expected);
        // edge midpoints: opposite vertex 0, 1, 2 in turn
        assert_eq!(b.nodes[3], vec![rat(1, 2), rat(1, 2)]);
        assert_eq!(b.nodes[4], vec![rat(0, 1), rat(1, 2)]);
        assert_eq!(b.nodes[5], vec![rat(1, 2), rat(0, 1)]);
    }

    #[test]
    fn p1_tet_partition_of_unity() {
        let b = lagrange_basis(3, 1).unwrap();
        assert_eq!(b.len(), 4);
        let sum = b.functions.iter().fold(Polynomial::zero(3), |a, f| &a + f);
        assert_eq!(sum, Polynomial::constant(3, rat_int(1)));
    }

    #[test]
    fn all_bases_satisfy_invariants() {
        let cases = (1..=MAX_DEGREE_2D)
            .map(|k| (2, k))
            .chain((1..=MAX_DEGREE_3D).map(|k| (3, k)));
        for (dim, k) in cases {
            let b = lagrange_basis(dim, k).unwrap();
            assert_eq!(b.len(), space_dimension(dim, k));
            for (i, f) in b.functions.iter().enumerate() {
                for (j, node) in b.nodes.iter().enumerate() {
                    let expected = if i == j { rat_int(1) } else { rat_int(0) };
                    assert_eq!(f.eval(node), expected, "dim {dim} k {k} f{i} node{j}");
                }
                assert_eq!(*f, product_formula(dim, k as u32, &b.lattice[i]));
            }
            let sum = b.functions.iter().fold(Polynomial::zero(dim), |a, f| &a + f);
            assert_eq!(sum, Polynomial::constant(dim, rat_int(1)));
            for axis in 0..dim {
                let grad_sum = b
                    .functions
                    .iter()
                    .fold(Polynomial::zero(dim), |a, f| &a + &f.diff(axis).unwrap());
                assert!(grad_sum.is_zero());
            }
        }
    }

    #[test]
    fn unsupported_degrees() {
        assert!(matches!(lagrange_basis(2, 6), Err(Error::UnsupportedElement { .. })));
        assert!(matches!(lagrange_basis(3, 5), Err(Error::UnsupportedElement { .. })));
        assert!(matches!(lagrange_basis(2, 0), Err(Error::UnsupportedElement { .. })));
        assert!(matches!(lagrange_basis(1, 1), Err(Error::UnsupportedElement { .. })));
    }

    #[test]
    fn compositions_ordering() {
        assert_eq!(positive_compositions(2, 3), vec![vec![2, 1], vec![1, 2]]);
        assert_eq!(positive_compositions(3, 3), vec![vec![1, 1, 1]]);
        assert!(positive_compositions(3, 2).is_empty());
        assert_eq!(positive_compositions(1, 4), vec![vec![4]]);
    }
}
