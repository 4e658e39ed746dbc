use rand::Rng;

/// Draws one outcome from `dist`: candidates are ordered by probability
/// (descending, ties by key), truncated to the `top_k` most probable,
/// tempered as p^(1/T), renormalized, then sampled with `rng`.
/// Returns `None` when no candidate has positive mass.
pub fn sample_top_k<T: Ord + Clone, R: Rng + ?Sized>(
    dist: &[(T, f64)],
    top_k: Option<usize>,
    temperature: f64,
    rng: &mut R,
) -> Option<T> {
    let mut cands: Vec<&(T, f64)> = dist.iter().filter(|(_, p)| *p > 0.0 && p.is_finite()).collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(k) = top_k {
        cands.truncate(k.max(1));
    }
    if cands.len() == 1 {
        return Some(cands[0].0.clone());
    }
    let weights: Vec<f64> = if temperature == 1.0 {
        cands.iter().map(|c| c.1).collect()
    } else {
        // p^(1/T) computed in log space relative to the max to avoid underflow
        let lmax = cands.first()?.1.ln();
        cands.iter().map(|c| ((c.1.ln() - lmax) / temperature).exp()).collect()
    };
    let total: f64 = weights.iter().sum();
    if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return cands.first().map(|c| c.0.clone());
    }
    let mut u = rng.random::<f64>() * total;
    for (c, w) in cands.iter().zip(&weights) {
        if u < *w {
            return Some(c.0.clone());
        }
        u -= w;
    }
    cands.last().map(|c| c.0.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn top1_is_argmax() {
        let dist = [("a", 0.2), ("b", 0.5), ("c", 0.3)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(sample_top_k(&dist, Some(1), 1.0, &mut rng), Some("b"));
        }
    }

    #[test]
    fn ties_break_toward_smaller_key() {
        let dist = [("b", 0.5), ("a", 0.5)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_top_k(&dist, Some(1), 1.0, &mut rng), Some("a"));
    }

    #[test]
    fn frequencies_follow_weights() {
        let dist = [(0u32, 0.1), (1, 0.6), (2, 0.3)];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        let n = 60_000;
        for _ in 0..n {
            counts[sample_top_k(&dist, None, 1.0, &mut rng).unwrap() as usize] += 1;
        }
        for (i, &(_, p)) in dist.iter().enumerate() {
            let f = counts[i] as f64 / n as f64;
            assert!((f - p).abs() < 0.01, "{i}: {f} vs {p}");
        }
        // top-2 renormalizes 0.6/0.3
        let mut two = [0usize; 3];
        for _ in 0..n {
            two[sample_top_k(&dist, Some(2), 1.0, &mut rng).unwrap() as usize] += 1;
        }
        assert_eq!(two[0], 0);
        assert!((two[1] as f64 / n as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn low_temperature_sharpens() {
        let dist = [(0u32, 0.4), (1, 0.6)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hits = (0..2000)
            .filter(|_| sample_top_k(&dist, None, 0.05, &mut rng) == Some(1))
            .count();
        assert!(hits > 1990);
    }

    #[test]
    fn empty_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_top_k::<u32, _>(&[], None, 1.0, &mut rng), None);
        assert_eq!(sample_top_k(&[(1u32, 0.0)], None, 1.0, &mut rng), None);
    }
}
