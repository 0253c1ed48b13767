//! Sparse view of the LMI data used inside the interior-point loop.
//!
//! Each block position `(a, b)` with `a <= b` carries a coefficient vector
//! `f` over the variables. Identical vectors are shared across positions and
//! blocks, so the Schur complement `H_ij = <F_i, N F_j N>` is accumulated as
//! `sum C[u, u'] f_u f_u'^T` over distinct vector pairs.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

use super::LmiProblem;

struct SparseVec {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseVec {
    fn dot(&self, x: &DVector<f64>) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, v)| v * x[i]).sum()
    }
}

struct Position {
    a: usize,
    b: usize,
    vec: usize,
}

struct PairEntry {
    r: usize,
    s: usize,
    pair: usize,
    mult: f64,
}

struct BlockStructure {
    size: usize,
    f0: DMatrix<f64>,
    positions: Vec<Position>,
    pairs: Vec<PairEntry>,
}

pub(super) struct Structure {
    num_vars: usize,
    vecs: Vec<SparseVec>,
    blocks: Vec<BlockStructure>,
    pairs: Vec<(usize, usize)>,
}

impl Structure {
    /// `var_map[i]` is the reduced index of original variable `i`, `None` for
    /// variables fixed at zero.
    pub fn new(problem: &LmiProblem, var_map: &[Option<usize>], num_vars: usize) -> Self {
        let mut vec_ids: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
        let mut vecs = Vec::new();
        let mut pair_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pairs = Vec::new();
        let mut blocks = Vec::with_capacity(problem.blocks().len());

        for block in problem.blocks() {
            let d = block.size();
            let mut f0 = DMatrix::zeros(d, d);
            let mut entries: BTreeMap<(usize, usize), BTreeMap<usize, f64>> = BTreeMap::new();
            for t in block.terms() {
                match t.var {
                    None => {
                        f0[(t.row, t.col)] += t.value;
                        if t.row != t.col {
                            f0[(t.col, t.row)] += t.value;
                        }
                    }
                    Some(v) => {
                        if let Some(k) = var_map[v] {
                            *entries.entry((t.row, t.col)).or_default().entry(k).or_insert(0.0) += t.value;
                        }
                    }
                }
            }
            let mut positions = Vec::new();
            for ((a, b), coeffs) in entries {
                let key: Vec<(usize, u64)> = coeffs
                    .iter()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(&i, v)| (i, v.to_bits()))
                    .collect();
                if key.is_empty() {
                    continue;
                }
                let vec = *vec_ids.entry(key.clone()).or_insert_with(|| {
                    vecs.push(SparseVec {
                        idx: key.iter().map(|k| k.0).collect(),
                        val: key.iter().map(|k| f64::from_bits(k.1)).collect(),
                    });
                    vecs.len() - 1
                });
                positions.push(Position { a, b, vec });
            }
            let mut block_pairs = Vec::with_capacity(positions.len() * (positions.len() + 1) / 2);
            for r in 0..positions.len() {
                for s in r..positions.len() {
                    let (u, w) = (positions[r].vec, positions[s].vec);
                    let key = (u.min(w), u.max(w));
                    let pair = *pair_ids.entry(key).or_insert_with(|| {
                        pairs.push(key);
                        pairs.len() - 1
                    });
                    let mult = if r != s && u == w { 2.0 } else { 1.0 };
                    block_pairs.push(PairEntry { r, s, pair, mult });
                }
            }
            blocks.push(BlockStructure {
                size: d,
                f0,
                positions,
                pairs: block_pairs,
            });
        }
        Self {
            num_vars,
            vecs,
            blocks,
            pairs,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.size).collect()
    }

    pub fn f0(&self) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| b.f0.clone()).collect()
    }

    /// `A(x) = sum_i x_i F_i` per block.
    pub fn apply(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let vals: Vec<f64> = self.vecs.iter().map(|v| v.dot(x)).collect();
        self.blocks
            .iter()
            .map(|blk| {
                let mut m = DMatrix::zeros(blk.size, blk.size);
                for p in &blk.positions {
                    m[(p.a, p.b)] = vals[p.vec];
                    m[(p.b, p.a)] = vals[p.vec];
                }
                m
            })
            .collect()
    }

    /// `A^T(Z)_i = sum_j <F_ij, Z_j>`.
    pub fn adjoint(&self, z: &[DMatrix<f64>]) -> DVector<f64> {
        let mut coef = vec![0.0; self.vecs.len()];
        for (blk, zj) in self.blocks.iter().zip(z) {
            for p in &blk.positions {
                let w = if p.a == p.b { 1.0 } else { 2.0 };
                coef[p.vec] += w * 0.5 * (zj[(p.a, p.b)] + zj[(p.b, p.a)]);
            }
        }
        let mut out = DVector::zeros(self.num_vars);
        for (v, c) in self.vecs.iter().zip(coef) {
            if c != 0.0 {
                for (&i, &val) in v.idx.iter().zip(&v.val) {
                    out[i] += c * val;
                }
            }
        }
        out
    }

    /// Columns `svec(W_j F_ij W_j^T)` stacked over blocks, so that the Schur
    /// complement for `N_j^{-1} = W_j^T W_j` is `M^T M`.
    pub fn scaled_operator(&self, w: &[DMatrix<f64>]) -> DMatrix<f64> {
        let rows: usize = self.blocks.iter().map(|b| b.size * (b.size + 1) / 2).sum();
        let mut out = DMatrix::zeros(rows, self.num_vars);
        let mut off = 0;
        for (blk, wm) in self.blocks.iter().zip(w) {
            let d = blk.size;
            for p in &blk.positions {
                let (ca, cb) = (wm.column(p.a), wm.column(p.b));
                let mut col = Vec::with_capacity(d * (d + 1) / 2);
                for j in 0..d {
                    for i in 0..=j {
                        let v = if p.a == p.b {
                            ca[i] * ca[j]
                        } else {
                            ca[i] * cb[j] + cb[i] * ca[j]
                        };
                        col.push(if i == j { v } else { std::f64::consts::SQRT_2 * v });
                    }
                }
                let f = &self.vecs[p.vec];
                for (&k, &val) in f.idx.iter().zip(&f.val) {
                    for (r, v) in col.iter().enumerate() {
                        out[(off + r, k)] += val * v;
                    }
                }
            }
            off += d * (d + 1) / 2;
        }
        out
    }

    /// `H_ij = sum_blocks <F_i, N F_j N>` for symmetric `N` per block.
    pub fn schur(&self, n: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut c = vec![0.0; self.pairs.len()];
        for (blk, nm) in self.blocks.iter().zip(n) {
            for e in &blk.pairs {
                let (pr, ps) = (&blk.positions[e.r], &blk.positions[e.s]);
                let (a, b, cc, d) = (pr.a, pr.b, ps.a, ps.b);
                let mut k = 2.0;
                if a == b {
                    k *= 0.5;
                }
                if cc == d {
                    k *= 0.5;
                }
                let m = (nm[(b, cc)] * nm[(a, d)] + nm[(b, d)] * nm[(a, cc)]) * k;
                c[e.pair] += e.mult * m;
            }
        }

        let p = self.num_vars;
        let mut h = DMatrix::zeros(p, p);
        for (&(u, w), &coef) in self.pairs.iter().zip(&c) {
            if coef == 0.0 {
                continue;
            }
            let (fu, fw) = (&self.vecs[u], &self.vecs[w]);
            if u == w {
                for x in 0..fu.idx.len() {
                    let (i, vi) = (fu.idx[x], coef * fu.val[x]);
                    for y in x..fu.idx.len() {
                        h[(i, fu.idx[y])] += vi * fu.val[y];
                    }
                }
            } else {
                for (&i, &vi) in fu.idx.iter().zip(&fu.val) {
                    let vi = coef * vi;
                    for (&j, &vj) in fw.idx.iter().zip(&fw.val) {
                        if i == j {
                            h[(i, i)] += 2.0 * vi * vj;
                        } else {
                            h[(i.min(j), i.max(j))] += vi * vj;
                        }
                    }
                }
            }
        }
        for j in 0..p {
            for i in (j + 1)..p {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }
}
