use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::condition::WorkingCondition;
use crate::data::record::Segment;
use crate::error::{Error, Result};

/// Share of the target machine's healthy segments used for synthesis and
/// detector training; the rest is held out for testing.
pub const HEALTHY_TRAIN_FRACTION: f64 = 0.71;

/// Split segments per working condition into `(train, test)`, taking
/// `round(fraction · n)` of every condition's segments for training.
///
/// Disjoint, exhaustive and reproducible from `seed`.
pub fn stratified_split(segments: Vec<Segment>, fraction: f64, seed: u64) -> Result<(Vec<Segment>, Vec<Segment>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} outside [0, 1]")));
    }
    let mut groups: BTreeMap<WorkingCondition, Vec<Segment>> = BTreeMap::new();
    for s in segments {
        groups.entry(s.condition.clone()).or_default().push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut group) in groups {
        group.sort_by(|a, b| (&a.source_record, a.index).cmp(&(&b.source_record, b.index)));
        group.shuffle(&mut rng);
        let k = (fraction * group.len() as f64).round() as usize;
        let rest = group.split_off(k);
        train.extend(group);
        test.extend(rest);
    }
    Ok((train, test))
}
