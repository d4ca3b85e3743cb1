/// Dense numbering of the monomials of total degree `<= max_degree` in
/// `dim <= 3` variables, with O(1) lookup of the index of a product.
#[derive(Clone, Debug)]
pub struct MonomialTable {
    dim: usize,
    max_degree: u32,
    exps: Vec<[u32; 3]>,
    lookup: Vec<usize>,
}

impl MonomialTable {
    pub fn new(dim: usize, max_degree: u32) -> Self {
        assert!((1..=3).contains(&dim));
        let side = max_degree as usize + 1;
        let mut lookup = vec![usize::MAX; side.pow(3)];
        let mut exps = Vec::new();
        for m in super::MultiIndex::all_up_to(dim, max_degree) {
            let mut e = [0u32; 3];
            e[..dim].copy_from_slice(m.exponents());
            lookup[Self::slot(side, &e)] = exps.len();
            exps.push(e);
        }
        MonomialTable {
            dim,
            max_degree,
            exps,
            lookup,
        }
    }

    fn slot(side: usize, e: &[u32; 3]) -> usize {
        (e[0] as usize * side + e[1] as usize) * side + e[2] as usize
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self, idx: usize) -> &[u32; 3] {
        &self.exps[idx]
    }

    pub fn degree(&self, idx: usize) -> u32 {
        self.exps[idx].iter().sum()
    }

    pub fn index(&self, e: &[u32]) -> Option<usize> {
        let mut full = [0u32; 3];
        full[..e.len()].copy_from_slice(e);
        if full.iter().sum::<u32>() > self.max_degree {
            return None;
        }
        let v = self.lookup[Self::slot(self.max_degree as usize + 1, &full)];
        (v != usize::MAX).then_some(v)
    }

    /// Index of the product monomial; `None` when it exceeds `max_degree`.
    pub fn product(&self, a: usize, b: usize) -> Option<usize> {
        let (ea, eb) = (&self.exps[a], &self.exps[b]);
        let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
        if e.iter().sum::<u32>() > self.max_degree {
            return None;
        }
        Some(self.lookup[Self::slot(self.max_degree as usize + 1, &e)])
    }
}
