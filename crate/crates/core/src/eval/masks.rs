use crate::error::{Error, Result};
use crate::image::BinaryMask;

/// A thresholded attribution map.
#[derive(Debug, Clone, PartialEq)]
pub struct Binarized {
    pub mask: BinaryMask,
    pub threshold: f32,
    /// Every pixel reached the threshold (constant or heavily tied map).
    pub degenerate: bool,
}

/// Keeps pixels at or above the nearest-rank `percentile` of `values`: the
/// k-th smallest value with `k = ceil(percentile / 100 * n)`.
///
/// With `n` distinct values this keeps `floor(n * (100 - p) / 100) + 1`
/// pixels; ties at the threshold are all kept.
pub fn binarize(width: usize, height: usize, values: &[f32], percentile: f64) -> Result<Binarized> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile must lie in (0, 100), got {percentile}"
        )));
    }
    if values.len() != width * height || values.is_empty() {
        return Err(Error::Shape(format!(
            "{width}x{height} map with {} values",
            values.len()
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("attribution map".into()));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let k = ((percentile * n as f64 / 100.0).ceil() as usize).clamp(1, n);
    let threshold = sorted[k - 1];
    let mask = BinaryMask::new(width, height, values.iter().map(|&v| v >= threshold).collect())?;
    let degenerate = mask.is_full();
    Ok(Binarized {
        mask,
        threshold,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iou {
    pub value: f64,
    /// Both masks were empty; `value` is 0 by convention.
    pub both_empty: bool,
}

/// `|a ∩ b| / |a ∪ b|`.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<Iou> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "IoU of {}x{} and {}x{} masks",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        Iou {
            value: 0.0,
            both_empty: true,
        }
    } else {
        Iou {
            value: inter as f64 / union as f64,
            both_empty: false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn mask_of(w: usize, h: usize, px: &[(usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| px.contains(&(x, y)))
    }

    #[test]
    fn binarize_examples() {
        let distinct: Vec<f32> = (0..100).map(|i| i as f32).collect();
        let b = binarize(10, 10, &distinct, 95.0).unwrap();
        // k = 95, so the values 94..=99 pass
        assert_eq!(b.mask.count(), 6);
        assert!(!b.degenerate);

        let b = binarize(4, 4, &[0.3; 16], 95.0).unwrap();
        assert!(b.mask.is_full() && b.degenerate);

        let ten: Vec<f32> = (1..=10).map(|i| i as f32).collect();
        let b = binarize(10, 1, &ten, 50.0).unwrap();
        assert_eq!(b.threshold, 5.0);
        assert_eq!(b.mask.count(), 6);
        assert!((0..4).all(|x| !b.mask.get(x, 0)));

        assert!(binarize(1, 1, &[1.0], 0.0).is_err());
        assert!(binarize(1, 1, &[1.0], 100.0).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = mask_of(3, 1, &[(0, 0), (1, 0)]);
        let b = mask_of(3, 1, &[(1, 0), (2, 0)]);
        assert!((iou(&a, &b).unwrap().value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&a, &a).unwrap().value, 1.0);
        assert_eq!(iou(&mask_of(3, 1, &[(0, 0)]), &mask_of(3, 1, &[(2, 0)])).unwrap().value, 0.0);
        let e = BinaryMask::empty(3, 1);
        assert_eq!(iou(&e, &e).unwrap(), Iou { value: 0.0, both_empty: true });
        assert!(iou(&a, &BinaryMask::empty(1, 3)).is_err());
    }

    fn set_oracle(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let set = |m: &BinaryMask| -> BTreeSet<usize> {
            m.bits().iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i).collect()
        };
        let (sa, sb) = (set(a), set(b));
        let union = sa.union(&sb).count();
        if union == 0 {
            0.0
        } else {
            sa.intersection(&sb).count() as f64 / union as f64
        }
    }

    fn arb_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            (
                prop::collection::vec(any::<bool>(), w * h),
                prop::collection::vec(any::<bool>(), w * h),
            )
                .prop_map(move |(a, b)| {
                    (BinaryMask::new(w, h, a).unwrap(), BinaryMask::new(w, h, b).unwrap())
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn iou_matches_set_oracle((a, b) in arb_pair()) {
            prop_assert_eq!(iou(&a, &b).unwrap().value, set_oracle(&a, &b));
        }

        #[test]
        fn iou_is_symmetric((a, b) in arb_pair()) {
            prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
            if !a.is_empty() {
                prop_assert_eq!(iou(&a, &a).unwrap().value, 1.0);
            }
            let v = iou(&a, &b).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    proptest! {
        #[test]
        fn growing_a_subset_never_lowers_iou(
            bits in prop::collection::vec(any::<bool>(), 36),
            order in Just((0..36).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            let a = BinaryMask::new(6, 6, bits).unwrap();
            let inside: Vec<usize> = order.into_iter().filter(|&i| a.bits()[i]).collect();
            let mut b = vec![false; 36];
            let mut prev = 0.0;
            for i in inside {
                b[i] = true;
                let m = BinaryMask::new(6, 6, b.clone()).unwrap();
                prop_assert!(m.is_subset_of(&a));
                let v = iou(&a, &m).unwrap().value;
                prop_assert!(v >= prev);
                prev = v;
            }
        }

        #[test]
        fn binarize_count_matches_nearest_rank(
            n in 1usize..400,
            p in 1u32..100,
            seed in any::<u64>(),
        ) {
            let mut rng = crate::numerics::Rng::new(seed);
            let mut values: Vec<f32> = (0..n).map(|i| i as f32).collect();
            rng.shuffle(&mut values);
            let b = binarize(n, 1, &values, p as f64).unwrap();
            prop_assert_eq!(b.mask.count(), n * (100 - p as usize) / 100 + 1);
        }
    }
}
