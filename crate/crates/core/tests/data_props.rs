use proptest::prelude::*;
use sal_core::data::{
    load_delimited, load_idx, normalize, write_delimited, write_idx, BatchIterator,
    DelimitedFormat, NormalizationScheme,
};
use sal_core::{Dataset, Matrix};

fn labels_strategy(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..10, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn epoch_is_a_permutation(len in 1usize..300, batch in 1usize..40, seed: u64, epoch in 0usize..5) {
        let it = BatchIterator::new(len, batch, seed);
        let batches: Vec<Vec<usize>> = it.epoch(epoch).collect();
        prop_assert_eq!(batches.len(), it.batches_per_epoch());
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
    }

    #[test]
    fn digits_layout_round_trips(
        (n, values, labels) in (1usize..20).prop_flat_map(|n| {
            (Just(n), prop::collection::vec(0u8..=16, n * 64), labels_strategy(n))
        })
    ) {
        let x = Matrix::new(n, 64, values.iter().map(|&v| f64::from(v)).collect()).unwrap();
        let ds = Dataset::new("digits", x, labels, 10, (0.0, 16.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_delimited(&ds, &p, DelimitedFormat::Digits).unwrap();
        let back = load_delimited(&p, DelimitedFormat::Digits).unwrap();
        prop_assert_eq!(back.features(), ds.features());
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn semeion_layout_round_trips(
        (n, bits, labels) in (1usize..8).prop_flat_map(|n| {
            (Just(n), prop::collection::vec(any::<bool>(), n * 256), labels_strategy(n))
        })
    ) {
        let x = Matrix::new(n, 256, bits.iter().map(|&b| f64::from(u8::from(b))).collect()).unwrap();
        let ds = Dataset::new("semeion", x, labels, 10, (0.0, 1.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.data");
        write_delimited(&ds, &p, DelimitedFormat::Semeion).unwrap();
        let back = load_delimited(&p, DelimitedFormat::Semeion).unwrap();
        prop_assert_eq!(back.features(), ds.features());
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn usps_layout_round_trips(
        (n, values, labels) in (1usize..8).prop_flat_map(|n| {
            (Just(n), prop::collection::vec(-1.0f64..=1.0, n * 256), labels_strategy(n))
        })
    ) {
        let x = Matrix::new(n, 256, values).unwrap();
        let ds = Dataset::new("usps", x, labels, 10, (-1.0, 1.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("usps");
        write_delimited(&ds, &p, DelimitedFormat::Usps).unwrap();
        let back = load_delimited(&p, DelimitedFormat::Usps).unwrap();
        prop_assert_eq!(back.features(), ds.features());
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn idx_round_trips(
        (rows, cols, pixels, labels) in (1usize..5, 1usize..5, 1usize..6).prop_flat_map(|(r, c, n)| {
            (Just(r), Just(c), prop::collection::vec(any::<u8>(), n * r * c), labels_strategy(n))
        })
    ) {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("i"), dir.path().join("l"));
        let label_bytes: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
        write_idx(&img, &lab, rows as u32, cols as u32, &pixels, &label_bytes).unwrap();
        let ds = load_idx(&img, &lab).unwrap();
        prop_assert_eq!(ds.feature_count(), rows * cols);
        prop_assert_eq!(ds.labels(), &labels[..]);
        let expected: Vec<f64> = pixels.iter().map(|&p| f64::from(p)).collect();
        prop_assert_eq!(ds.features().data(), &expected[..]);
    }
}

#[test]
fn normalizing_twice_is_rejected() {
    let x = Matrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64);
    let ds = Dataset::new("t", x, vec![0, 1, 0, 1], 2, (0.0, 11.0)).unwrap();
    for scheme in [NormalizationScheme::Affine05, NormalizationScheme::ZScore] {
        let once = normalize(&ds, scheme).unwrap();
        assert!(normalize(&once, scheme).is_err());
    }
}
