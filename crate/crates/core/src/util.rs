use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the given byte chunks, each length-prefixed so that
/// `["ab", "c"]` and `["a", "bc"]` hash differently.
pub fn digest_hex<I, T>(parts: I) -> String
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    let mut hasher = Sha256::new();
    for part in parts {
        let bytes = part.as_ref();
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    hex::encode(hasher.finalize())
}

/// First 8 bytes of the SHA-256 of the parts, as a little-endian u64.
pub fn digest_u64<I, T>(parts: I) -> u64
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    let hex = digest_hex(parts);
    let bytes = hex::decode(&hex[..16]).expect("sha256 hex");
    u64::from_le_bytes(bytes.try_into().expect("8 bytes"))
}

/// Uniform number in [0, 1) derived from a hash.
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Deterministic RNG for a (seed, stream, index) triple.
pub fn rng_for(seed: u64, stream: &str, index: u64) -> ChaCha8Rng {
    let mixed = digest_u64([
        seed.to_le_bytes().as_slice(),
        stream.as_bytes(),
        index.to_le_bytes().as_slice(),
    ]);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Largest-remainder apportionment of `total` units over `quotas`.
///
/// Each entry receives `floor(quota)` plus at most one extra unit, handed out
/// by descending fractional part (lower index first on ties). `caps`, when
/// given, bounds each entry; surplus flows to the next-best remainder.
pub fn largest_remainder(quotas: &[f64], total: usize, caps: Option<&[usize]>) -> Vec<usize> {
    let cap = |i: usize| caps.map_or(usize::MAX, |c| c[i]);
    let mut counts: Vec<usize> = quotas
        .iter()
        .enumerate()
        .map(|(i, q)| (q.max(0.0).floor() as usize).min(cap(i)))
        .collect();
    let mut assigned: usize = counts.iter().sum();
    if assigned >= total {
        return counts;
    }
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    // Repeated passes only matter when caps bind.
    loop {
        let before = assigned;
        for &i in &order {
            if assigned == total {
                return counts;
            }
            if counts[i] < cap(i) {
                counts[i] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            return counts;
        }
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
}
