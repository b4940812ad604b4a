use rand::Rng;

use super::{InteractionData, Triple, TripleBatch, TripleKind};
use crate::error::{Error, Result};

/// Rejection-sampling budget per negative item.
pub const MAX_NEGATIVE_ATTEMPTS: usize = 1000;

/// Samples `(u, i, j)` training triples: `u` uniform over users, `i` uniform over
/// the user's training items, `j` uniform over items the user never interacted
/// with in any split.
pub fn sample_bpr_batch<R: Rng + ?Sized>(
    data: &InteractionData,
    batch_size: usize,
    rng: &mut R,
) -> Result<TripleBatch> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut triples = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let user = rng.random_range(0..data.n_users);
        let train = &data.train[user];
        let pos = train[rng.random_range(0..train.len())];
        let neg = sample_negative(data, user, rng)?;
        triples.push(Triple { user, pos, neg });
    }
    Ok(TripleBatch {
        triples,
        kind: TripleKind::Bpr,
    })
}

fn sample_negative<R: Rng + ?Sized>(data: &InteractionData, user: usize, rng: &mut R) -> Result<usize> {
    for _ in 0..MAX_NEGATIVE_ATTEMPTS {
        let j = rng.random_range(0..data.n_items);
        if !data.is_observed(user, j) {
            return Ok(j);
        }
    }
    Err(Error::data(format!(
        "no negative item found for user {} after {MAX_NEGATIVE_ATTEMPTS} attempts",
        data.user_ids[user]
    )))
}

/// Samples `(u, j, k)` with `j != k` drawn uniformly over all items, independent of `u`.
pub fn sample_generic_batch<R: Rng + ?Sized>(
    data: &InteractionData,
    batch_size: usize,
    rng: &mut R,
) -> Result<TripleBatch> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if data.n_items < 2 {
        return Err(Error::data("generic triples need at least two items"));
    }
    let mut triples = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let user = rng.random_range(0..data.n_users);
        let pos = rng.random_range(0..data.n_items);
        let mut neg = rng.random_range(0..data.n_items);
        while neg == pos {
            neg = rng.random_range(0..data.n_items);
        }
        triples.push(Triple { user, pos, neg });
    }
    Ok(TripleBatch {
        triples,
        kind: TripleKind::Generic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::ids;
    use crate::rng::{stream_rng, Stream};

    fn one_user_ten_items() -> InteractionData {
        InteractionData::new(ids("u", 1), ids("i", 10), vec![vec![0]], vec![vec![]], vec![vec![]])
            .unwrap()
    }

    #[test]
    fn single_user_single_positive() {
        let d = one_user_ten_items();
        let mut rng = stream_rng(3, Stream::Sampling, 0);
        let b = sample_bpr_batch(&d, 200, &mut rng).unwrap();
        assert_eq!(b.kind, TripleKind::Bpr);
        for t in &b.triples {
            assert_eq!((t.user, t.pos), (0, 0));
            assert!((1..10).contains(&t.neg));
        }
    }

    #[test]
    fn bpr_sampling_is_deterministic() {
        let d = one_user_ten_items();
        let a = sample_bpr_batch(&d, 64, &mut stream_rng(9, Stream::Sampling, 0)).unwrap();
        let b = sample_bpr_batch(&d, 64, &mut stream_rng(9, Stream::Sampling, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn user_frequency_within_binomial_bound() {
        let d = InteractionData::new(
            ids("u", 2),
            ids("i", 6),
            vec![vec![0, 1], vec![2]],
            vec![vec![], vec![]],
            vec![vec![], vec![3]],
        )
        .unwrap();
        let b = sample_bpr_batch(&d, 10_000, &mut stream_rng(5, Stream::Sampling, 0)).unwrap();
        let n0 = b.triples.iter().filter(|t| t.user == 0).count() as f64;
        // Binomial(10000, 0.5): sigma = 50.
        assert!((n0 - 5000.0).abs() <= 150.0, "user 0 drawn {n0} times");
    }

    #[test]
    fn excludes_val_and_test_items_from_negatives() {
        let d = InteractionData::new(
            ids("u", 1),
            ids("i", 5),
            vec![vec![0]],
            vec![vec![1]],
            vec![vec![2]],
        )
        .unwrap();
        let b = sample_bpr_batch(&d, 1000, &mut stream_rng(1, Stream::Sampling, 0)).unwrap();
        assert!(b.triples.iter().all(|t| t.neg == 3 || t.neg == 4));
    }

    #[test]
    fn saturated_user_errors() {
        let d = InteractionData::new(ids("u", 1), ids("i", 2), vec![vec![0, 1]], vec![vec![]], vec![vec![]])
            .unwrap();
        assert!(sample_bpr_batch(&d, 1, &mut stream_rng(1, Stream::Sampling, 0)).is_err());
        assert!(sample_bpr_batch(&d, 0, &mut stream_rng(1, Stream::Sampling, 0)).is_err());
    }

    #[test]
    fn generic_two_items() {
        let d = InteractionData::new(ids("u", 3), ids("i", 2), vec![vec![0]; 3], vec![vec![]; 3], vec![vec![]; 3])
            .unwrap();
        let b = sample_generic_batch(&d, 500, &mut stream_rng(2, Stream::Generic, 0)).unwrap();
        assert_eq!(b.kind, TripleKind::Generic);
        for t in &b.triples {
            let mut jk = [t.pos, t.neg];
            jk.sort_unstable();
            assert_eq!(jk, [0, 1]);
        }
        let again = sample_generic_batch(&d, 500, &mut stream_rng(2, Stream::Generic, 0)).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn generic_item_frequency_within_binomial_bound() {
        let d = InteractionData::new(ids("u", 2), ids("i", 4), vec![vec![0]; 2], vec![vec![]; 2], vec![vec![]; 2])
            .unwrap();
        let b = sample_generic_batch(&d, 10_000, &mut stream_rng(11, Stream::Generic, 0)).unwrap();
        // Binomial(10000, 0.25): sigma = sqrt(1875) ~ 43.3.
        let sigma = (10_000.0f64 * 0.25 * 0.75).sqrt();
        for item in 0..4 {
            let c = b.triples.iter().filter(|t| t.pos == item).count() as f64;
            assert!((c - 2500.0).abs() <= 3.0 * sigma, "item {item}: {c}");
        }
    }

    #[test]
    fn generic_needs_two_items() {
        let d = InteractionData::new(ids("u", 1), ids("i", 1), vec![vec![0]], vec![vec![]], vec![vec![]])
            .unwrap();
        assert!(sample_generic_batch(&d, 1, &mut stream_rng(1, Stream::Generic, 0)).is_err());
    }
}
