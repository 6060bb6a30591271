//! Parameter box, sample sets, and the positivity filter that turns a
//! training set into the subsets on which a max-ratio constant is defined.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Compact parameter box `[lower_1, upper_1] x ... x [lower_P, upper_P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidConfig(format!(
                "box bounds of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidConfig(format!(
                    "component {j}: need finite bounds with lower < upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim()
            && mu
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *x >= *l && *x <= *u)
    }

    /// Box midpoint; the default reference parameter for frozen inner
    /// products.
    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    TensorGrid { n_per_dim: Vec<usize> },
    Random { seed: u64 },
    Explicit,
}

/// Finite ordered set of parameter points inside a domain.
#[derive(Debug, Clone)]
pub struct SampleSet {
    points: Vec<Vec<f64>>,
    provenance: Provenance,
}

impl SampleSet {
    pub fn explicit(points: Vec<Vec<f64>>) -> Self {
        Self { points, provenance: Provenance::Explicit }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(Vec::as_slice)
    }
}

/// Cartesian product of uniformly spaced per-dimension grids, both endpoints
/// included, in lexicographic order (last coordinate fastest).
pub fn tensor_grid(domain: &ParameterDomain, n_per_dim: &[usize]) -> Result<SampleSet> {
    if n_per_dim.len() != domain.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} grid sizes for a {}-dimensional box",
            n_per_dim.len(),
            domain.dim()
        )));
    }
    if let Some(n) = n_per_dim.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidConfig(format!("grid needs >= 2 points per dimension, got {n}")));
    }
    let axes: Vec<Vec<f64>> = n_per_dim
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let (l, u) = (domain.lower[j], domain.upper[j]);
            // interior points can overshoot the bounds by an ulp; clamping
            // keeps the closed-box guarantee exact
            (0..n)
                .map(|i| (l + (u - l) * (i as f64) / ((n - 1) as f64)).clamp(l, u))
                .collect()
        })
        .collect();

    let total: usize = n_per_dim.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; domain.dim()];
    loop {
        points.push(idx.iter().enumerate().map(|(j, &i)| axes[j][i]).collect());
        // odometer, last dimension fastest
        let mut j = domain.dim();
        loop {
            if j == 0 {
                return Ok(SampleSet {
                    points,
                    provenance: Provenance::TensorGrid { n_per_dim: n_per_dim.to_vec() },
                });
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < n_per_dim[j] {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// `n` i.i.d. uniform draws from the box; a fixed seed fixes the set.
pub fn random_sample(domain: &ParameterDomain, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidConfig("empty random sample requested".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            domain
                .lower
                .iter()
                .zip(&domain.upper)
                .map(|(&l, &u)| rng.random_range(l..u))
                .collect()
        })
        .collect();
    Ok(SampleSet { points, provenance: Provenance::Random { seed } })
}

/// Discrete partition of a sample set into the region where a denominator
/// stays positive.  Points with `g <= tol` (snapshot parameters, typically)
/// are excluded; the survivors form one subset.
#[derive(Debug, Clone)]
pub struct Partition {
    subsets: Vec<SampleSet>,
    subset_indices: Vec<Vec<usize>>,
    excluded: Vec<usize>,
}

impl Partition {
    pub fn subsets(&self) -> &[SampleSet] {
        &self.subsets
    }

    /// Original-set indices of each subset, aligned with [`Self::subsets`].
    pub fn subset_indices(&self) -> &[Vec<usize>] {
        &self.subset_indices
    }

    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }
}

pub fn partition_positive(set: &SampleSet, g_values: &[f64], tol: f64) -> Result<Partition> {
    if g_values.len() != set.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} denominator values for {} points",
            g_values.len(),
            set.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("exclusion tolerance must be positive: {tol}")));
    }
    let mut kept = Vec::new();
    let mut kept_idx = Vec::new();
    let mut excluded = Vec::new();
    for (i, (p, &g)) in set.points().iter().zip(g_values).enumerate() {
        if g > tol {
            kept.push(p.clone());
            kept_idx.push(i);
        } else {
            excluded.push(i);
        }
    }
    if kept.is_empty() {
        let max_g = g_values.iter().copied().fold(0.0f64, f64::max);
        return Err(Error::EmptyPartition { max_g });
    }
    Ok(Partition {
        subsets: vec![SampleSet::explicit(kept)],
        subset_indices: vec![kept_idx],
        excluded,
    })
}

/// Relative exclusion tolerance turned absolute against the largest
/// denominator; snapshot residuals vanish only to solver precision, so the
/// cut cannot sit at exact zero.
pub const EXCLUSION_TOL_REL: f64 = 1e-12;

pub fn exclusion_tol(g_values: &[f64]) -> f64 {
    let max_g = g_values.iter().copied().fold(0.0f64, f64::max);
    (EXCLUSION_TOL_REL * max_g).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_grid() {
        let d = ParameterDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let s = tensor_grid(&d, &[2, 2]).unwrap();
        assert_eq!(
            s.points(),
            &[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn grid_counts_and_spacing() {
        let d = ParameterDomain::new(vec![0.02, 0.02], vec![1.0, 1.0]).unwrap();
        let s = tensor_grid(&d, &[101, 101]).unwrap();
        assert_eq!(s.len(), 10_201);

        let d1 = ParameterDomain::new(vec![1.0], vec![5.0]).unwrap();
        let s1 = tensor_grid(&d1, &[10_001]).unwrap();
        assert_eq!(s1.len(), 10_001);
        let spacing = s1.points()[1][0] - s1.points()[0][0];
        assert!((spacing - 4e-4).abs() < 1e-15);
        assert_eq!(s1.points().last().unwrap()[0], 5.0);
    }

    #[test]
    fn random_sample_is_reproducible_and_in_box() {
        let d = ParameterDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let a = random_sample(&d, 100, 42).unwrap();
        let b = random_sample(&d, 100, 42).unwrap();
        assert_eq!(a.points(), b.points());
        assert!(a.iter().all(|p| d.contains(p)));
        assert!(random_sample(&d, 0, 1).is_err());
    }

    #[test]
    fn random_sample_means_follow_the_law_of_large_numbers() {
        let d = ParameterDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let s = random_sample(&d, 1000, 7).unwrap();
        for j in 0..2 {
            let mean: f64 = s.iter().map(|p| p[j]).sum::<f64>() / 1000.0;
            assert!((mean - 0.5).abs() < 0.05, "coordinate {j} mean {mean}");
        }
    }

    #[test]
    fn positivity_filter_excludes_and_errors() {
        let s = SampleSet::explicit(vec![vec![0.0], vec![1.0], vec![2.0]]);
        let p = partition_positive(&s, &[1.0, 1.0, 1.0], 1e-12).unwrap();
        assert_eq!(p.subsets()[0].len(), 3);
        assert!(p.excluded().is_empty());

        let p = partition_positive(&s, &[0.0, 1.0, 1.0], 1e-12).unwrap();
        assert_eq!(p.subset_indices()[0], vec![1, 2]);
        assert_eq!(p.excluded(), &[0]);

        assert!(matches!(
            partition_positive(&s, &[0.0, 0.0, 0.0], 1e-12),
            Err(Error::EmptyPartition { .. })
        ));
    }
}
