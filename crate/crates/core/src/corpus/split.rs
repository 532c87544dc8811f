use super::{CorpusError, QARecord, Split};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Draws `n` records uniformly without replacement and assigns the first
/// half of the draw to dev, the second half to test.
///
/// Records are ordered by id before drawing, so the result depends only on
/// the set of ids, `n` and `seed`, not on input order.
pub fn sample_split(records: &[QARecord], n: usize, seed: u64) -> Result<(Vec<QARecord>, Vec<QARecord>), CorpusError> {
    if n > records.len() {
        return Err(CorpusError::SplitTooLarge { n, available: records.len() });
    }
    if !n.is_multiple_of(2) {
        return Err(CorpusError::SplitOdd(n));
    }
    let mut order: Vec<&QARecord> = records.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn = index::sample(&mut rng, order.len(), n).into_vec();
    let assign = |k: &usize, split| QARecord { split: Some(split), ..order[*k].clone() };
    let dev = drawn[..n / 2].iter().map(|k| assign(k, Split::Dev)).collect();
    let test = drawn[n / 2..].iter().map(|k| assign(k, Split::Test)).collect();
    Ok((dev, test))
}
