//! Duplicating minority-class frames.

use rand::Rng;

use crate::util::rng_for;

/// Balancing classes a label row belongs to: for a single binary label the
/// negative and positive class, otherwise each positive label.
fn classes_of(row: &[u8]) -> Vec<usize> {
    if row.len() == 1 {
        vec![usize::from(row[0] != 0)]
    } else {
        row.iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Returns indices into `rows`: every original index once, followed by
/// duplicates of randomly chosen frames from the smallest class until every
/// class has at least half as many frames as the largest. Classes without any
/// frame are left alone.
pub fn upsample(rows: &[&[u8]], seed: u64) -> Vec<usize> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let n_classes = if first.len() == 1 { 2 } else { first.len() };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    let mut counts = vec![0usize; n_classes];
    for (i, row) in rows.iter().enumerate() {
        for c in classes_of(row) {
            members[c].push(i);
            counts[c] += 1;
        }
    }
    for (c, m) in members.iter().enumerate() {
        if m.is_empty() {
            log::warn!("upsampling: class {c} has no frames; leaving it untouched");
        }
    }
    let mut out: Vec<usize> = (0..rows.len()).collect();
    let mut rng = rng_for(seed, &[]);
    let cap = rows.len().saturating_mul(50);
    while out.len() - rows.len() < cap {
        let max = counts.iter().copied().max().unwrap_or(0);
        let Some(c) = (0..n_classes)
            .filter(|&c| !members[c].is_empty())
            .min_by_key(|&c| counts[c])
        else {
            break;
        };
        if 2 * counts[c] >= max {
            break;
        }
        let pick = members[c][rng.gen_range(0..members[c].len())];
        out.push(pick);
        for k in classes_of(rows[pick]) {
            counts[k] += 1;
        }
    }
    out
}
