/// `q` evenly spaced frame indices in `[0, T)`: `round(i (T-1) / (q-1))`,
/// rounding half away from zero, deduplicated. Videos shorter than `q` frames
/// return every frame; `q < 2` degenerates to the first frame.
pub fn sample_frames(frames: usize, q: usize) -> Vec<usize> {
    if frames == 0 {
        return Vec::new();
    }
    if q < 2 {
        return vec![0];
    }
    if frames < q {
        return (0..frames).collect();
    }
    let step = (frames - 1) as f64 / (q - 1) as f64;
    let mut out: Vec<usize> = (0..q).map(|i| (i as f64 * step).round() as usize).collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(sample_frames(21, 5), [0, 5, 10, 15, 20]);
        assert_eq!(sample_frames(3, 5), [0, 1, 2]);
        assert_eq!(sample_frames(100, 5), [0, 25, 50, 74, 99]);
        // 7.5 rounds up
        assert_eq!(sample_frames(16, 5), [0, 4, 8, 11, 15]);
        assert_eq!(sample_frames(5, 5), [0, 1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn strictly_increasing_in_range(frames in 1usize..500, q in 2usize..20) {
            let s = sample_frames(frames, q);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.iter().all(|&i| i < frames));
            prop_assert_eq!(s[0], 0);
            prop_assert_eq!(*s.last().unwrap(), frames - 1);
        }
    }
}
