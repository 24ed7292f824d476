use rand::seq::SliceRandom;

use super::CurriculumError;
use crate::data::Dataset;
use crate::rng;

/// Per-class split into (train, validation). Each class contributes
/// `max(1, floor(n·fraction))` validation samples; both halves keep the
/// original sample order.
pub fn stratified_split(
    dataset: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), CurriculumError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CurriculumError::InvalidConfig(format!(
            "validation fraction {fraction} outside (0, 1)"
        )));
    }
    let k = dataset.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &y) in dataset.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut in_validation = vec![false; dataset.len()];
    for (class, indices) in by_class.iter_mut().enumerate() {
        if indices.len() < 2 {
            return Err(CurriculumError::ClassTooSmall(class));
        }
        let take = ((indices.len() as f64 * fraction).floor() as usize).max(1);
        let mut r = rng::stream(seed, "split", class as u64);
        indices.shuffle(&mut r);
        for &i in &indices[..take] {
            in_validation[i] = true;
        }
    }
    let (val, train): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| in_validation[i]);
    Ok((dataset.subset(&train), dataset.subset(&val)))
}
