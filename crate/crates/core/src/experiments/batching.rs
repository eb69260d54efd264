use rand::seq::SliceRandom;
use rand::Rng;

/// Split sample indices into batches whose class mix follows the remaining
/// class ratio, with largest-remainder rounding (ties to the lower class).
///
/// Every index appears exactly once; order within classes comes from `rng`.
pub fn stratified_batches<R: Rng + ?Sized>(labels: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        pools[y].push(i);
    }
    for p in &mut pools {
        p.shuffle(rng);
    }

    let mut batches = Vec::with_capacity(labels.len().div_ceil(batch_size));
    let mut remaining: usize = labels.len();
    while remaining > 0 {
        let size = batch_size.min(remaining);
        let quotas = allocate(size, &pools.iter().map(Vec::len).collect::<Vec<_>>(), remaining);
        let mut batch = Vec::with_capacity(size);
        for (pool, q) in pools.iter_mut().zip(quotas) {
            let at = pool.len() - q;
            batch.extend(pool.drain(at..));
        }
        batch.shuffle(rng);
        remaining -= size;
        batches.push(batch);
    }
    batches
}

/// Largest-remainder apportionment of `size` seats across `counts` (summing to `total`).
fn allocate(size: usize, counts: &[usize], total: usize) -> Vec<usize> {
    let mut quotas: Vec<usize> = counts.iter().map(|&c| size * c / total).collect();
    let mut rems: Vec<(usize, usize)> = counts.iter().enumerate().map(|(i, &c)| (size * c % total, i)).collect();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = size - quotas.iter().sum::<usize>();
    for (_, i) in rems.into_iter().cycle() {
        if left == 0 {
            break;
        }
        if quotas[i] < counts[i] {
            quotas[i] += 1;
            left -= 1;
        }
    }
    quotas
}
