//! Single-positive retrieval metrics.

/// 1.0 iff the positive appears within the first K ranked ids.
pub fn recall_at_k(ranked_ids: &[u32], positive_id: u32, k: usize) -> f64 {
    if ranked_ids.iter().take(k).any(|id| *id == positive_id) {
        1.0
    } else {
        0.0
    }
}

/// Binary-relevance NDCG with a single positive: 1/log2(rank + 1) at 1-based
/// rank within the first K, else 0. IDCG is 1.
pub fn ndcg_at_k(ranked_ids: &[u32], positive_id: u32, k: usize) -> f64 {
    match ranked_ids.iter().take(k).position(|id| *id == positive_id) {
        Some(pos) => {
            let rank = (pos + 1) as f64;
            1.0 / (rank + 1.0).log2()
        }
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_hand_cases() {
        assert_eq!(recall_at_k(&[7, 1, 2, 3, 4], 7, 5), 1.0);
        assert_eq!(recall_at_k(&[1, 2, 3, 4, 5, 6, 7], 7, 5), 0.0);
        assert_eq!(recall_at_k(&[1, 2, 3], 9, 5), 0.0);
    }

    #[test]
    fn ndcg_hand_cases() {
        assert_eq!(ndcg_at_k(&[7, 1, 2], 7, 5), 1.0);
        // rank 3 at K = 5: 1/log2(4) = 0.5
        assert_eq!(ndcg_at_k(&[1, 2, 7, 3, 4], 7, 5), 0.5);
        assert_eq!(ndcg_at_k(&[1, 2, 3, 4, 5, 7], 7, 5), 0.0);
    }

    #[test]
    fn bounds_hold() {
        for k in 1..6 {
            for pos in 0..6u32 {
                let ranked = [0, 1, 2, 3, 4, 5];
                let r = recall_at_k(&ranked, pos, k);
                let n = ndcg_at_k(&ranked, pos, k);
                assert!(r == 0.0 || r == 1.0);
                assert!((0.0..=1.0).contains(&n));
                assert!((n > 0.0) == (r > 0.0));
            }
        }
    }
}
