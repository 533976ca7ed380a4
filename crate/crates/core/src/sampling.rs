//! Per-class clustering of description embeddings and weighted stratified
//! sampling under the current boosting distribution.
//!
//! Within class `k` every member of cluster `C_j` gets weight `N / |C_j|`,
//! the class weights are normalized, multiplied by the boosting weights `p`,
//! and normalized again. `round(s * r[k])` examples (largest remainder, so
//! the counts sum to `s`) are then drawn without replacement.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{EmbeddingVector, LlmClient};
use crate::textualize::DataDescription;
use crate::util::{largest_remainder, rng_for};

pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.05;

/// `1 - cos(a, b)`; a zero vector is treated as orthogonal to everything.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na.sqrt() * nb.sqrt())
}

fn check_dimensions(embeddings: &[EmbeddingVector]) -> Result<()> {
    if let Some(first) = embeddings.first() {
        if let Some(bad) = embeddings.iter().find(|e| e.dimension() != first.dimension()) {
            return Err(Error::DimensionMismatch { expected: first.dimension(), found: bad.dimension() });
        }
    }
    Ok(())
}

/// Average-linkage agglomerative clustering under cosine distance.
///
/// Clusters keep merging while the closest pair is at most `threshold` apart.
/// Ties go to the pair whose smallest members are lexicographically lowest.
/// Returns clusters of input positions, each sorted, ordered by first member.
pub fn hac_cluster(embeddings: &[EmbeddingVector], threshold: f64) -> Result<Vec<Vec<usize>>> {
    check_dimensions(embeddings)?;
    let n = embeddings.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot cluster zero embeddings".into()));
    }
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(&embeddings[i].values, &embeddings[j].values);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    // Slot i holds the cluster whose smallest member is i; merging b into a
    // with a < b keeps that property.
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            if members[a].is_none() {
                continue;
            }
            for b in (a + 1)..n {
                if members[b].is_none() {
                    continue;
                }
                let d = dist[a * n + b];
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((a, b, d));
                }
            }
        }
        let Some((a, b, d)) = best else { break };
        if d > threshold {
            break;
        }
        let moved = members[b].take().expect("active");
        let (size_a, size_b) = (members[a].as_ref().unwrap().len() as f64, moved.len() as f64);
        members[a].as_mut().unwrap().extend(moved);
        for c in 0..n {
            if c == a || members[c].is_none() {
                continue;
            }
            let merged = (size_a * dist[a * n + c] + size_b * dist[b * n + c]) / (size_a + size_b);
            dist[a * n + c] = merged;
            dist[c * n + a] = merged;
        }
    }
    Ok(members
        .into_iter()
        .flatten()
        .map(|mut m| {
            m.sort_unstable();
            m
        })
        .collect())
}

/// Clusters of each class, as positions in the training arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub classes: Vec<Vec<Vec<usize>>>,
    pub threshold: f64,
    /// Number of training examples the model covers.
    pub population: usize,
}

/// Sampling distribution of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingWeights {
    pub members: Vec<usize>,
    /// Final per-member sampling probability (sums to 1).
    pub w: Vec<f64>,
    /// Boosting weights of the members, renormalized within the class.
    pub p: Vec<f64>,
    /// Per-cluster weight `N / |C_j|`.
    pub c: Vec<f64>,
}

impl ClusterModel {
    /// Clusters each class's embeddings. `labels[i]` is the class of position `i`.
    pub fn build(labels: &[usize], num_classes: usize, embeddings: &[EmbeddingVector], threshold: f64) -> Result<Self> {
        if labels.len() != embeddings.len() {
            return Err(Error::LengthMismatch(labels.len(), embeddings.len()));
        }
        check_dimensions(embeddings)?;
        let mut classes = Vec::with_capacity(num_classes);
        for k in 0..num_classes {
            let positions: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
            if positions.is_empty() {
                classes.push(Vec::new());
                continue;
            }
            let local: Vec<EmbeddingVector> = positions.iter().map(|&i| embeddings[i].clone()).collect();
            let clusters = hac_cluster(&local, threshold)?
                .into_iter()
                .map(|c| c.into_iter().map(|j| positions[j]).collect())
                .collect();
            classes.push(clusters);
        }
        Ok(Self { classes, threshold, population: labels.len() })
    }

    /// Embeds the labeled descriptions and clusters them per class.
    pub fn from_descriptions(
        descriptions: &[DataDescription],
        labels: &[usize],
        num_classes: usize,
        client: &LlmClient,
        threshold: f64,
    ) -> Result<Self> {
        let texts: Vec<String> = descriptions.iter().map(DataDescription::labeled_text).collect();
        let embeddings = client.embed(&texts)?;
        Self::build(labels, num_classes, &embeddings, threshold)
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.classes[class].iter().map(Vec::len).sum()
    }

    pub fn sampling_weights(&self, class: usize, p: &[f64]) -> SamplingWeights {
        let n = self.population as f64;
        let clusters = &self.classes[class];
        let c: Vec<f64> = clusters.iter().map(|cl| n / cl.len() as f64).collect();
        let mut members = Vec::new();
        let mut w = Vec::new();
        for (j, cl) in clusters.iter().enumerate() {
            for &i in cl {
                members.push(i);
                w.push(c[j]);
            }
        }
        crate::util::normalize(&mut w);
        let mut pk: Vec<f64> = members.iter().map(|&i| p[i]).collect();
        crate::util::normalize(&mut pk);
        let mut combined: Vec<f64> = w.iter().zip(&pk).map(|(a, b)| a * b).collect();
        if combined.iter().sum::<f64>() > 0.0 {
            crate::util::normalize(&mut combined);
        } else {
            combined = w;
        }
        SamplingWeights { members, w: combined, p: pk, c }
    }

    /// Per-class draw counts: largest-remainder rounding of `s * ratios[k]`.
    pub fn class_counts(&self, ratios: &[f64], s: usize) -> Vec<usize> {
        let quotas: Vec<f64> = ratios.iter().map(|r| r * s as f64).collect();
        largest_remainder(&quotas, s, None)
    }

    /// Draws `s` positions under boosting weights `p` (indexed by position).
    pub fn sample<R: Rng + ?Sized>(&self, p: &[f64], s: usize, ratios: &[f64], rng: &mut R) -> Result<Vec<usize>> {
        if p.len() != self.population {
            return Err(Error::LengthMismatch(p.len(), self.population));
        }
        if ratios.len() != self.classes.len() {
            return Err(Error::LengthMismatch(ratios.len(), self.classes.len()));
        }
        if s > self.population {
            return Err(Error::SampleTooLarge { requested: s, available: self.population });
        }
        let counts = self.class_counts(ratios, s);
        let mut out = Vec::with_capacity(s);
        for (k, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let available = self.class_size(k);
            if available == 0 {
                return Err(Error::EmptyClass(k.to_string()));
            }
            if count > available {
                return Err(Error::SampleTooLarge { requested: count, available });
            }
            let sw = self.sampling_weights(k, p);
            let pool: Vec<(usize, f64)> = sw.members.into_iter().zip(sw.w).collect();
            let drawn = pool
                .choose_multiple_weighted(rng, count, |x| x.1)
                .map_err(|e| Error::InvalidArgument(format!("sampling weights: {e}")))?;
            out.extend(drawn.map(|x| x.0));
        }
        Ok(out)
    }
}

/// Embeds, clusters and draws in one call.
#[allow(clippy::too_many_arguments)]
pub fn cluster_sample(
    descriptions: &[DataDescription],
    labels: &[usize],
    ratios: &[f64],
    p: &[f64],
    s: usize,
    client: &LlmClient,
    seed: u64,
    threshold: f64,
) -> Result<Vec<usize>> {
    let model = ClusterModel::from_descriptions(descriptions, labels, ratios.len(), client, threshold)?;
    model.sample(p, s, ratios, &mut rng_for(seed, "cluster-sample", 0))
}
