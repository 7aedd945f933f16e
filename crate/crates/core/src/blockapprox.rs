//! Block-diagonal approximation of the port correlation matrix.
//!
//! Ports are grouped into `B` contiguous blocks of sizes `L_1..L_B`; inside a
//! block every pair has correlation `μ²`, across blocks zero. Such a matrix has
//! the closed-form spectrum `{1 + (L_b − 1)μ²}_b ∪ {1 − μ²}^{N−B}`, so the
//! spectral distance to the exact matrix is cheap to evaluate for any
//! candidate partition.

use crate::channel::{CorrKind, CorrelationMatrix};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStructure {
    #[serde(rename = "B")]
    pub b: usize,
    pub sizes: Vec<usize>,
    pub mu_sq: f64,
    /// Squared eigenvalue mismatch to the matrix the sizes were fitted to;
    /// zero for structures built by hand.
    pub spectral_distance: f64,
}

impl BlockStructure {
    pub fn from_sizes(sizes: Vec<usize>, mu_sq: f64) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "block sizes must be non-empty and positive (got {sizes:?})"
            )));
        }
        if !(0.0..1.0).contains(&mu_sq) {
            return Err(Error::InvalidArgument(format!("mu_sq must lie in [0, 1) (got {mu_sq})")));
        }
        Ok(Self {
            b: sizes.len(),
            sizes,
            mu_sq,
            spectral_distance: 0.0,
        })
    }

    /// Single block spanning all `n` ports.
    pub fn single(n: usize, mu_sq: f64) -> Result<Self> {
        Self::from_sizes(vec![n], mu_sq)
    }

    /// Sizes as equal as possible, larger blocks first.
    pub fn equal_split(n: usize, b: usize, mu_sq: f64) -> Result<Self> {
        if b == 0 || b > n {
            return Err(Error::InvalidArgument(format!("need 1 <= B <= N (B={b}, N={n})")));
        }
        let (q, r) = (n / b, n % b);
        Self::from_sizes((0..b).map(|i| q + usize::from(i < r)).collect(), mu_sq)
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Closed-form eigenvalues, descending.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .sizes
            .iter()
            .map(|&l| 1.0 + (l as f64 - 1.0) * self.mu_sq)
            .collect();
        out.extend(std::iter::repeat_n(1.0 - self.mu_sq, self.n() - self.b));
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    /// Half-open port index ranges of each block.
    pub fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.sizes
            .iter()
            .map(|&l| {
                let r = start..start + l;
                start += l;
                r
            })
            .collect()
    }
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn sorted_eigenvalues(corr: &CorrelationMatrix) -> Result<Vec<f64>> {
    let n = corr.n();
    if corr.entries.ncols() != n {
        return Err(Error::InvalidArgument("correlation matrix must be square".into()));
    }
    let eig = SymmetricEigen::try_new(corr.entries.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite eigenvalue".into()));
    }
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Number of eigenvalues at or above `lambda_th`, at least one.
pub fn count_blocks(corr: &CorrelationMatrix, lambda_th: f64) -> Result<usize> {
    if !(lambda_th.is_finite() && lambda_th > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda_th must be positive (got {lambda_th})")));
    }
    let ev = sorted_eigenvalues(corr)?;
    Ok(ev.iter().filter(|&&v| v >= lambda_th).count().max(1))
}

/// `Σ_n (λ_n(Σ̂) − λ_n(Σ))²` over descending eigenvalues, where Σ̂ has the given
/// block sizes and `eigs` holds the exact spectrum (descending, length `N`).
///
/// Sizes that do not sum to `N` are scored as if the small eigenvalue `1 − μ²`
/// filled the remaining `N − B` positions.
pub fn spectral_distance(eigs: &[f64], sizes: &[usize], mu_sq: f64) -> f64 {
    let mut lead: Vec<f64> = sizes.iter().map(|&l| 1.0 + (l as f64 - 1.0) * mu_sq).collect();
    lead.sort_by(|a, b| b.total_cmp(a));
    let low = 1.0 - mu_sq;
    eigs.iter()
        .enumerate()
        .map(|(i, &e)| {
            let h = lead.get(i).copied().unwrap_or(low);
            (h - e) * (h - e)
        })
        .sum()
}

/// Choose block sizes minimizing the spectral distance for a given `B`.
///
/// Starts from `L_b = round((λ_b − 1)/μ² + 1)`, repairs the total to `N` one
/// port at a time, then moves single ports between blocks while the distance
/// strictly decreases.
pub fn fit_block_sizes(corr: &CorrelationMatrix, b: usize, mu_sq: f64) -> Result<BlockStructure> {
    let eigs = sorted_eigenvalues(corr)?;
    fit_block_sizes_from_eigs(&eigs, b, mu_sq)
}

pub fn fit_block_sizes_from_eigs(eigs: &[f64], b: usize, mu_sq: f64) -> Result<BlockStructure> {
    let n = eigs.len();
    if b == 0 || b > n {
        return Err(Error::InvalidArgument(format!("need 1 <= B <= N (B={b}, N={n})")));
    }
    if !(mu_sq > 0.0 && mu_sq < 1.0) {
        return Err(Error::InvalidArgument(format!("mu_sq must lie in (0, 1) (got {mu_sq})")));
    }
    let dist = |s: &[usize]| spectral_distance(eigs, s, mu_sq);
    let mut sizes: Vec<usize> = eigs[..b]
        .iter()
        .map(|&l| (((l - 1.0) / mu_sq + 1.0).round().max(1.0)) as usize)
        .collect();

    let mut total: usize = sizes.iter().sum();
    while total != n {
        let grow = total < n;
        let mut best: Option<(f64, usize)> = None;
        for i in 0..b {
            if !grow && sizes[i] == 1 {
                continue;
            }
            if grow {
                sizes[i] += 1;
            } else {
                sizes[i] -= 1;
            }
            let d = dist(&sizes);
            if grow {
                sizes[i] -= 1;
            } else {
                sizes[i] += 1;
            }
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let (_, i) = best.expect("B <= N leaves a shrinkable block");
        if grow {
            sizes[i] += 1;
            total += 1;
        } else {
            sizes[i] -= 1;
            total -= 1;
        }
    }

    let mut current = dist(&sizes);
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..b {
            if sizes[i] == 1 {
                continue;
            }
            for j in 0..b {
                if i == j {
                    continue;
                }
                sizes[i] -= 1;
                sizes[j] += 1;
                let d = dist(&sizes);
                sizes[i] += 1;
                sizes[j] -= 1;
                if d < current - 1e-12 && best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        match best {
            Some((d, i, j)) => {
                sizes[i] -= 1;
                sizes[j] += 1;
                current = d;
            }
            None => break,
        }
    }
    sizes.sort_by(|a, b| b.cmp(a));
    Ok(BlockStructure {
        b,
        sizes,
        mu_sq,
        spectral_distance: current,
    })
}

/// Count blocks with `lambda_th` and fit their sizes with shared `mu_sq`.
pub fn approximate(corr: &CorrelationMatrix, lambda_th: f64, mu_sq: f64) -> Result<BlockStructure> {
    let eigs = sorted_eigenvalues(corr)?;
    if !(lambda_th.is_finite() && lambda_th > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda_th must be positive (got {lambda_th})")));
    }
    let b = eigs.iter().filter(|&&v| v >= lambda_th).count().max(1);
    fit_block_sizes_from_eigs(&eigs, b, mu_sq)
}

/// Assemble the block-diagonal matrix of `structure`.
pub fn build_block_matrix(structure: &BlockStructure) -> CorrelationMatrix {
    let n = structure.n();
    let mut entries = DMatrix::<f64>::identity(n, n);
    for r in structure.ranges() {
        for i in r.clone() {
            for j in r.clone() {
                if i != j {
                    entries[(i, j)] = structure.mu_sq;
                }
            }
        }
    }
    CorrelationMatrix {
        entries,
        kind: CorrKind::BlockDiagonal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{constant_correlation, jakes_correlation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize) -> CorrelationMatrix {
        constant_correlation(n, 0.0).unwrap()
    }

    #[test]
    fn count_trivial_cases() {
        assert_eq!(count_blocks(&identity(17), 0.5).unwrap(), 17);
        let c = constant_correlation(100, 0.97).unwrap();
        assert_eq!(count_blocks(&c, 0.5).unwrap(), 1);
    }

    #[test]
    fn count_jakes_against_independent_eigensolver() {
        let c = jakes_correlation(100, 5.0).unwrap();
        // Jacobi rotations as an independent dense eigensolver.
        let mut a = c.entries.clone();
        let n = a.nrows();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let cs = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * cs;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = cs * akp - sn * akq;
                        a[(k, q)] = sn * akp + cs * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = cs * apk - sn * aqk;
                        a[(q, k)] = sn * apk + cs * aqk;
                    }
                }
            }
        }
        let oracle = (0..n).filter(|&i| a[(i, i)] >= 0.5).count();
        let b = count_blocks(&c, 0.5).unwrap();
        assert_eq!(b, oracle);
        assert!((10..=13).contains(&b), "B={b}");
    }

    #[test]
    fn fit_trivial_partitions() {
        let c = jakes_correlation(30, 3.0).unwrap();
        let eigs = sorted_eigenvalues(&c).unwrap();
        let one = fit_block_sizes(&c, 1, 0.97).unwrap();
        assert_eq!(one.sizes, vec![30]);
        assert!((one.spectral_distance - spectral_distance(&eigs, &[30], 0.97)).abs() < 1e-12);
        let all = fit_block_sizes(&c, 30, 0.97).unwrap();
        assert_eq!(all.sizes, vec![1; 30]);
        let m = build_block_matrix(&all);
        assert_eq!(m.entries, DMatrix::identity(30, 30));
        assert!(fit_block_sizes(&c, 31, 0.97).is_err());
        assert!(fit_block_sizes(&c, 0, 0.97).is_err());
    }

    fn spectral_distance_direct(eigs: &[f64], s: &BlockStructure) -> f64 {
        let m = build_block_matrix(s);
        let hat = sorted_eigenvalues(&m).unwrap();
        hat.iter().zip(eigs).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    #[test]
    fn fitted_partition_beats_random_partitions() {
        let c = jakes_correlation(100, 5.0).unwrap();
        let eigs = sorted_eigenvalues(&c).unwrap();
        let b = count_blocks(&c, 0.5).unwrap();
        let fit = fit_block_sizes(&c, b, 0.97).unwrap();
        assert_eq!(fit.n(), 100);
        assert!((fit.spectral_distance - spectral_distance_direct(&eigs, &fit)).abs() < 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            // random composition of 100 into b positive parts
            let mut cuts: Vec<usize> = Vec::with_capacity(b - 1);
            while cuts.len() < b - 1 {
                let c = rng.random_range(1..100);
                if !cuts.contains(&c) {
                    cuts.push(c);
                }
            }
            cuts.sort_unstable();
            let mut sizes = Vec::with_capacity(b);
            let mut prev = 0;
            for c in cuts.iter().chain(std::iter::once(&100)) {
                sizes.push(c - prev);
                prev = *c;
            }
            let d = spectral_distance(&eigs, &sizes, 0.97);
            assert!(fit.spectral_distance <= d + 1e-12);
        }
    }

    #[test]
    fn fitted_no_worse_than_equal_split() {
        for (n, w) in [(20, 1.0), (50, 2.5), (100, 5.0), (150, 8.0)] {
            let c = jakes_correlation(n, w).unwrap();
            let eigs = sorted_eigenvalues(&c).unwrap();
            let b = count_blocks(&c, 0.5).unwrap();
            let fit = fit_block_sizes(&c, b, 0.97).unwrap();
            let eq = BlockStructure::equal_split(n, b, 0.97).unwrap();
            assert!(fit.spectral_distance <= spectral_distance(&eigs, &eq.sizes, 0.97) + 1e-12);
        }
    }

    #[test]
    fn block_matrix_examples() {
        let s = BlockStructure::from_sizes(vec![2], 0.97).unwrap();
        let m = build_block_matrix(&s);
        assert_eq!(m.entries, DMatrix::from_row_slice(2, 2, &[1.0, 0.97, 0.97, 1.0]));
        let s = BlockStructure::from_sizes(vec![1, 1], 0.97).unwrap();
        assert_eq!(build_block_matrix(&s).entries, DMatrix::identity(2, 2));
        let s = BlockStructure::from_sizes(vec![5, 3, 1], 0.5).unwrap();
        assert_eq!(build_block_matrix(&s).entries.trace(), 9.0);
        assert_eq!(build_block_matrix(&s).kind, CorrKind::BlockDiagonal);
    }

    #[test]
    fn closed_form_spectrum_matches_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let b = rng.random_range(1..8);
            let sizes: Vec<usize> = (0..b).map(|_| rng.random_range(1..12)).collect();
            let mu = rng.random_range(0.0..0.999);
            let s = BlockStructure::from_sizes(sizes, mu).unwrap();
            let direct = sorted_eigenvalues(&build_block_matrix(&s)).unwrap();
            for (a, e) in s.spectrum().iter().zip(&direct) {
                assert!((a - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn structure_json_roundtrip() {
        let s = approximate(&jakes_correlation(40, 2.0).unwrap(), 0.5, 0.97).unwrap();
        let j = serde_json::to_value(&s).unwrap();
        assert!(j.get("B").is_some() && j.get("spectral_distance").is_some());
        let back: BlockStructure = serde_json::from_value(j).unwrap();
        assert_eq!(back, s);
    }
}
