use super::Dataset;
use crate::error::{Result, SalError};
use crate::numerics::Prng;

/// Per-class shuffled split. Each class contributes `round(n_c * fraction)`
/// samples to the training side, clamped so both sides keep at least one.
/// Returned index lists are sorted ascending.
pub fn stratified_split_indices(
    labels: &[usize],
    class_count: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SalError::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        if l >= class_count {
            return Err(SalError::LabelOutOfRange {
                label: l,
                classes: class_count,
            });
        }
        by_class[l].push(i);
    }
    let root = Prng::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(SalError::Data(format!(
                "class {class} has {} sample(s); stratified splitting needs at least 2",
                members.len()
            )));
        }
        root.derive(class as u64).shuffle(&mut members);
        let n = members.len();
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (train, test) =
        stratified_split_indices(ds.labels(), ds.class_count(), train_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(n: usize, classes: usize) -> Vec<usize> {
        (0..n).map(|i| i % classes).collect()
    }

    #[test]
    fn exact_eighty_twenty() {
        let labels = balanced(100, 10);
        let (train, test) = stratified_split_indices(&labels, 10, 0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        for c in 0..10 {
            assert_eq!(train.iter().filter(|&&i| labels[i] == c).count(), 8);
            assert_eq!(test.iter().filter(|&&i| labels[i] == c).count(), 2);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let labels = balanced(57, 4);
        let a = stratified_split_indices(&labels, 4, 0.7, 11).unwrap();
        let b = stratified_split_indices(&labels, 4, 0.7, 11).unwrap();
        let c = stratified_split_indices(&labels, 4, 0.7, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn singleton_class_is_rejected() {
        let labels = vec![0, 0, 1];
        assert!(stratified_split_indices(&labels, 2, 0.5, 0).is_err());
    }

    #[test]
    fn fraction_bounds() {
        let labels = balanced(10, 2);
        assert!(stratified_split_indices(&labels, 2, 0.0, 0).is_err());
        assert!(stratified_split_indices(&labels, 2, 1.0, 0).is_err());
    }
}
