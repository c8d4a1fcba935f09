//! Sources of `(x₀, x₁)` pairs: the independent plan, minibatch exact OT,
//! and externally paired data.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::math::sq_dist;
use crate::processes::PairBatch;
use crate::samples::Samples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    Independent,
    MinibatchOt,
    Paired,
}

impl fmt::Display for CouplingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CouplingKind::Independent => "independent",
            CouplingKind::MinibatchOt => "minibatch",
            CouplingKind::Paired => "paired",
        })
    }
}

impl FromStr for CouplingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Self::Independent),
            "minibatch" | "minibatch_ot" => Ok(Self::MinibatchOt),
            "paired" => Ok(Self::Paired),
            other => Err(Error::InvalidArgument(format!("unknown plan kind '{other}'"))),
        }
    }
}

/// Minimum-cost perfect matching of a square cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `row_to_col[i]` is the column matched to row `i`.
    pub row_to_col: Vec<usize>,
    pub cost: f64,
}

/// Exact linear assignment by shortest augmenting paths with dual
/// potentials (Hungarian / Jonker–Volgenant family), `O(n³)`.
///
/// `cost` is row-major `n × n`. Rows are inserted in index order and ties
/// during augmentation go to the lowest column index.
pub fn solve_assignment(cost: &[f64], n: usize) -> Result<Assignment> {
    if cost.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "cost matrix has {} entries, expected {n}×{n}",
            cost.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment cost matrix".into()));
    }
    if n == 0 {
        return Ok(Assignment { row_to_col: Vec::new(), cost: 0.0 });
    }
    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    let total = row_to_col.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(Assignment { row_to_col, cost: total })
}

fn check_store(name: &'static str, s: &Samples) -> Result<()> {
    if s.is_empty() {
        Err(Error::Empty(name))
    } else {
        Ok(())
    }
}

/// `n` i.i.d. draws with replacement from each store, paired positionally.
pub fn independent_pairs<R: Rng + ?Sized>(
    src: &Samples,
    tgt: &Samples,
    n: usize,
    rng: &mut R,
) -> Result<PairBatch> {
    check_store("source store", src)?;
    check_store("target store", tgt)?;
    check_dim(src.dim(), tgt.dim())?;
    let i0: Vec<usize> = (0..n).map(|_| rng.random_range(0..src.len())).collect();
    let i1: Vec<usize> = (0..n).map(|_| rng.random_range(0..tgt.len())).collect();
    PairBatch::new(src.select(&i0), tgt.select(&i1))
}

/// Draws `n` points from each store without replacement and pairs them by
/// the exact OT matching for cost `‖x₀ − x₁‖²/2`.
pub fn minibatch_ot_pairs<R: Rng + ?Sized>(
    src: &Samples,
    tgt: &Samples,
    n: usize,
    rng: &mut R,
) -> Result<PairBatch> {
    check_store("source store", src)?;
    check_store("target store", tgt)?;
    check_dim(src.dim(), tgt.dim())?;
    if n > src.len() || n > tgt.len() {
        return Err(Error::InvalidArgument(format!(
            "minibatch of {n} exceeds store sizes ({}, {})",
            src.len(),
            tgt.len()
        )));
    }
    let i0 = rand::seq::index::sample(rng, src.len(), n).into_vec();
    let i1 = rand::seq::index::sample(rng, tgt.len(), n).into_vec();
    let (b0, b1) = (src.select(&i0), tgt.select(&i1));
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = 0.5 * sq_dist(b0.row(i), b1.row(j));
        }
    }
    let assignment = solve_assignment(&cost, n)?;
    PairBatch::new(b0, b1.select(&assignment.row_to_col))
}

/// `n` row draws with replacement from an aligned paired store.
pub fn paired_pairs<R: Rng + ?Sized>(store: &PairBatch, n: usize, rng: &mut R) -> Result<PairBatch> {
    if store.x0.len() != store.x1.len() {
        return Err(Error::InvalidArgument("paired store is not row-aligned".into()));
    }
    check_store("paired store", &store.x0)?;
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..store.len())).collect();
    PairBatch::new(store.x0.select(&idx), store.x1.select(&idx))
}

/// A configured coupling together with its sample stores.
#[derive(Debug, Clone)]
pub struct CouplingSampler {
    kind: CouplingKind,
    source: Samples,
    target: Samples,
    batch_size: usize,
}

impl CouplingSampler {
    /// For [`CouplingKind::Paired`], `source` and `target` are the two
    /// row-aligned sides of the paired store.
    pub fn new(kind: CouplingKind, source: Samples, target: Samples, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        check_dim(source.dim(), target.dim())?;
        check_store("source store", &source)?;
        check_store("target store", &target)?;
        match kind {
            CouplingKind::Paired if source.len() != target.len() => {
                return Err(Error::InvalidArgument(format!(
                    "paired store is misaligned: {} vs {} rows",
                    source.len(),
                    target.len()
                )));
            }
            CouplingKind::MinibatchOt if batch_size > source.len().min(target.len()) => {
                return Err(Error::InvalidArgument(format!(
                    "batch size {batch_size} exceeds the smaller store ({})",
                    source.len().min(target.len())
                )));
            }
            _ => {}
        }
        Ok(Self { kind, source, target, batch_size })
    }

    pub fn kind(&self) -> CouplingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn source(&self) -> &Samples {
        &self.source
    }

    pub fn target(&self) -> &Samples {
        &self.target
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PairBatch> {
        match self.kind {
            CouplingKind::Independent => independent_pairs(&self.source, &self.target, self.batch_size, rng),
            CouplingKind::MinibatchOt => minibatch_ot_pairs(&self.source, &self.target, self.batch_size, rng),
            CouplingKind::Paired => {
                let idx: Vec<usize> = (0..self.batch_size)
                    .map(|_| rng.random_range(0..self.source.len()))
                    .collect();
                PairBatch::new(self.source.select(&idx), self.target.select(&idx))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use proptest::prelude::*;

    fn brute_force(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(cost, n, row + 1, used, acc + cost[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    #[test]
    fn identity_favouring_matrix() {
        let n = 5;
        let cost: Vec<f64> = (0..n * n).map(|i| if i / n == i % n { 0.0 } else { 1.0 }).collect();
        let a = solve_assignment(&cost, n).unwrap();
        assert_eq!(a.row_to_col, (0..n).collect::<Vec<_>>());
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(solve_assignment(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(solve_assignment(&[1.0, f64::NAN, 3.0, 4.0], 2).is_err());
    }

    #[test]
    fn ties_resolve_deterministically() {
        let a = solve_assignment(&[1.0; 9], 3).unwrap();
        let b = solve_assignment(&[1.0; 9], 3).unwrap();
        assert_eq!(a, b);
        let mut cols = a.row_to_col.clone();
        cols.sort();
        assert_eq!(cols, vec![0, 1, 2]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(n in 1usize..=7, seed in 0u64..10_000) {
            let mut rng = crate::rng_from_seed(seed);
            let cost: Vec<f64> = (0..n * n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let a = solve_assignment(&cost, n).unwrap();
            prop_assert!((a.cost - brute_force(&cost, n)).abs() < 1e-9);
        }

        #[test]
        fn row_permutation_relabels(n in 2usize..=6, seed in 0u64..10_000) {
            let mut rng = crate::rng_from_seed(seed);
            let cost: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
            let perm = rand::seq::index::sample(&mut rng, n, n).into_vec();
            let mut permuted = vec![0.0; n * n];
            for (new_row, &old_row) in perm.iter().enumerate() {
                permuted[new_row * n..(new_row + 1) * n].copy_from_slice(&cost[old_row * n..(old_row + 1) * n]);
            }
            let a = solve_assignment(&cost, n).unwrap();
            let b = solve_assignment(&permuted, n).unwrap();
            prop_assert!((a.cost - b.cost).abs() < 1e-12);
            // Continuous random costs have a unique optimum.
            for (new_row, &old_row) in perm.iter().enumerate() {
                prop_assert_eq!(b.row_to_col[new_row], a.row_to_col[old_row]);
            }
        }
    }

    #[test]
    fn singleton_independent_pairs() {
        let a = Samples::new(2, vec![1.0, 2.0]).unwrap();
        let b = Samples::new(2, vec![3.0, 4.0]).unwrap();
        let p = independent_pairs(&a, &b, 3, &mut crate::rng_from_seed(0)).unwrap();
        assert_eq!(p.x0.as_slice(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert_eq!(p.x1.as_slice(), &[3.0, 4.0, 3.0, 4.0, 3.0, 4.0]);
        assert!(independent_pairs(&Samples::zeros(0, 2), &b, 3, &mut crate::rng_from_seed(0)).is_err());
    }

    #[test]
    fn independent_marginal_chi_square() {
        // Discrete store {0,1,2,3}; x₀-marginal must be uniform over rows.
        let src = Samples::new(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let n = 100_000;
        let p = independent_pairs(&src, &src, n, &mut crate::rng_from_seed(1)).unwrap();
        let mut counts = [0usize; 4];
        for r in p.x0.rows() {
            counts[r[0] as usize] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // χ²₃ 0.999 quantile.
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn independent_deterministic() {
        let a = Samples::new(1, (0..10).map(f64::from).collect()).unwrap();
        let p = independent_pairs(&a, &a, 5, &mut crate::rng_from_seed(3)).unwrap();
        let q = independent_pairs(&a, &a, 5, &mut crate::rng_from_seed(3)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn minibatch_on_identical_stores_pairs_copies() {
        let s = Samples::new(2, (0..40).map(|i| (i * i % 17) as f64 * 0.3 + i as f64).collect()).unwrap();
        // A full-store minibatch draws the same point set on both sides.
        let all = minibatch_ot_pairs(&s, &s, 20, &mut crate::rng_from_seed(1)).unwrap();
        assert_eq!(all.x0, all.x1);
        assert!(minibatch_ot_pairs(&s, &s, 21, &mut crate::rng_from_seed(1)).is_err());
    }

    #[test]
    fn minibatch_is_monotone_in_1d_and_preserves_batches() {
        for seed in 0..50 {
            let mut rng = crate::rng_from_seed(seed);
            let src = Samples::new(1, (0..7).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let tgt = Samples::new(1, (0..7).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let p = minibatch_ot_pairs(&src, &tgt, 7, &mut rng).unwrap();
            let mut pairs: Vec<(f64, f64)> = (0..7).map(|i| (p.x0.row(i)[0], p.x1.row(i)[0])).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1), "{pairs:?}");
            let mut a: Vec<f64> = p.x1.as_slice().to_vec();
            let mut b: Vec<f64> = tgt.as_slice().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn paired_pairs_behaviour() {
        let store = PairBatch::new(
            Samples::new(1, vec![1.0]).unwrap(),
            Samples::new(1, vec![-1.0]).unwrap(),
        )
        .unwrap();
        let p = paired_pairs(&store, 4, &mut crate::rng_from_seed(0)).unwrap();
        assert_eq!(p.x0.as_slice(), &[1.0; 4]);
        assert_eq!(p.x1.as_slice(), &[-1.0; 4]);

        // Exact multinomial test of the joint on a 3-pair store.
        let store = PairBatch::new(
            Samples::new(1, vec![0.0, 1.0, 2.0]).unwrap(),
            Samples::new(1, vec![10.0, 11.0, 12.0]).unwrap(),
        )
        .unwrap();
        let n = 100_000;
        let p = paired_pairs(&store, n, &mut crate::rng_from_seed(1)).unwrap();
        let mut counts = [0usize; 3];
        for i in 0..n {
            let a = p.x0.row(i)[0] as usize;
            assert_eq!(p.x1.row(i)[0], 10.0 + a as f64);
            counts[a] += 1;
        }
        let e = n as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 13.82, "chi2 = {chi2}");
        let q = paired_pairs(&store, 10, &mut crate::rng_from_seed(5)).unwrap();
        assert_eq!(q, paired_pairs(&store, 10, &mut crate::rng_from_seed(5)).unwrap());
    }

    #[test]
    fn sampler_rejects_misaligned_paired_store() {
        let a = Samples::zeros(3, 1);
        let b = Samples::zeros(4, 1);
        assert!(CouplingSampler::new(CouplingKind::Paired, a.clone(), b.clone(), 2).is_err());
        assert!(CouplingSampler::new(CouplingKind::Independent, a, b, 2).is_ok());
        assert!("nope".parse::<CouplingKind>().is_err());
    }
}
