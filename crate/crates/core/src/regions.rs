//! Region-level aggregation of a PLV matrix.
//!
//! Indices are sorted before summation so the result does not depend on
//! how a region lists its channels.

use crate::error::{Error, Result};
use crate::plv::PlvMatrix;

fn sorted(indices: &[usize], bound: usize) -> Result<Vec<usize>> {
    let mut v = indices.to_vec();
    v.sort_unstable();
    v.dedup();
    if let Some(&index) = v.iter().find(|&&i| i >= bound) {
        return Err(Error::ChannelIndex { index, count: bound });
    }
    Ok(v)
}

/// Mean PLV over the distinct unordered channel pairs inside one region.
pub fn intra_region_plv(m: &PlvMatrix, region: &[usize]) -> Result<f64> {
    let idx = sorted(region, m.n_channels())?;
    if idx.len() < 2 {
        return Err(Error::RegionTooSmall(idx.len()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, &i) in idx.iter().enumerate() {
        for &k in &idx[a + 1..] {
            sum += m.values[[i, k]];
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Mean PLV over every pairing `(i ∈ a, k ∈ b)` with `i ≠ k`.
pub fn inter_region_plv(m: &PlvMatrix, a: &[usize], b: &[usize]) -> Result<f64> {
    let mut a = sorted(a, m.n_channels())?;
    let mut b = sorted(b, m.n_channels())?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyRegion);
    }
    // Fixed operand order makes the result exactly symmetric in (a, b).
    if b < a {
        std::mem::swap(&mut a, &mut b);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &i in &a {
        for &k in &b {
            if i != k {
                sum += m.values[[i, k]];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BandSpec, Condition};
    use ndarray::{array, Array2};

    fn matrix(values: Array2<f64>) -> PlvMatrix {
        PlvMatrix {
            values,
            band: BandSpec::alpha(),
            condition: Condition::rest(),
            n_trials: 10,
        }
    }

    #[test]
    fn single_pair_region() {
        let m = matrix(array![[1.0, 0.6], [0.6, 1.0]]);
        assert_eq!(intra_region_plv(&m, &[0, 1]).unwrap(), 0.6);
    }

    #[test]
    fn all_ones() {
        let m = matrix(Array2::ones((5, 5)));
        assert_eq!(intra_region_plv(&m, &[4, 0, 2]).unwrap(), 1.0);
        assert_eq!(inter_region_plv(&m, &[0, 1], &[1, 3]).unwrap(), 1.0);
    }

    #[test]
    fn three_channel_hand_arithmetic() {
        let m = matrix(array![[1.0, 0.2, 0.4], [0.2, 1.0, 0.9], [0.4, 0.9, 1.0]]);
        approx::assert_abs_diff_eq!(intra_region_plv(&m, &[0, 1, 2]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn small_and_empty_regions() {
        let m = matrix(Array2::ones((3, 3)));
        assert!(matches!(intra_region_plv(&m, &[1]), Err(Error::RegionTooSmall(1))));
        assert!(matches!(inter_region_plv(&m, &[], &[1]), Err(Error::EmptyRegion)));
        assert!(matches!(inter_region_plv(&m, &[2], &[2]), Err(Error::EmptyRegion)));
        assert!(matches!(intra_region_plv(&m, &[0, 7]), Err(Error::ChannelIndex { .. })));
    }

    #[test]
    fn singletons_pick_one_entry() {
        let m = matrix(array![[1.0, 0.2, 0.4], [0.2, 1.0, 0.9], [0.4, 0.9, 1.0]]);
        assert_eq!(inter_region_plv(&m, &[0], &[2]).unwrap(), 0.4);
    }

    #[test]
    fn overlap_matches_enumeration() {
        let m = matrix(array![[1.0, 0.2, 0.4], [0.2, 1.0, 0.9], [0.4, 0.9, 1.0]]);
        // a = {0, 1}, b = {1, 2}: pairs (0,1) (0,2) (1,2); (1,1) excluded.
        let expected = (0.2 + 0.4 + 0.9) / 3.0;
        assert_eq!(inter_region_plv(&m, &[0, 1], &[1, 2]).unwrap(), expected);
        assert_eq!(
            inter_region_plv(&m, &[0, 1], &[1, 2]).unwrap(),
            inter_region_plv(&m, &[2, 1], &[1, 0]).unwrap()
        );
    }
}
