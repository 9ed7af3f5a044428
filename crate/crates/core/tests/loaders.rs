use std::fs;

use remixmatch::data::{
    load_cifar_binary, load_idx, make_ssl_split, synth_dataset, write_cifar_binary, write_idx, BatchStream, Dataset,
    SynthShape,
};
use remixmatch::error::LoadError;
use remixmatch::Error;

/// Four 3x2 images and labels, assembled byte by byte.
fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
    let mut images = vec![0x00, 0x00, 0x08, 0x03, 0, 0, 0, 4, 0, 0, 0, 3, 0, 0, 0, 2];
    for i in 0..4u8 {
        images.extend([i, 10 * i, 255, 0, 128, 64]);
    }
    let mut labels = vec![0x00, 0x00, 0x08, 0x01, 0, 0, 0, 4];
    labels.extend([3, 1, 4, 1]);
    (images, labels)
}

#[test]
fn idx_fixture_loads() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = idx_fixture();
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
    fs::write(&ip, i).unwrap();
    fs::write(&lp, l).unwrap();
    let d = load_idx(&ip, &lp).unwrap();
    assert_eq!(d.len(), 4);
    assert_eq!(d.image_shape(), Some((3, 2, 1)));
    assert_eq!(d.labels, vec![3, 1, 4, 1]);
    assert_eq!(d.classes, 5);
    assert_eq!(d.images[2].get(0, 1, 0), 20.0 / 255.0);
    assert_eq!(d.images[0].get(1, 0, 0), 1.0);
}

#[test]
fn idx_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = idx_fixture();
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
    fs::write(&ip, &i[..7]).unwrap();
    fs::write(&lp, &l).unwrap();
    assert!(matches!(load_idx(&ip, &lp), Err(Error::Load(LoadError::Truncated { .. }))));
    fs::write(&ip, &i).unwrap();
    fs::write(&lp, &i).unwrap();
    assert!(matches!(load_idx(&ip, &lp), Err(Error::Load(LoadError::BadMagic { .. }))));
    fs::write(&lp, [0, 0, 8, 1, 0, 0, 0, 2, 0, 1]).unwrap();
    assert!(matches!(load_idx(&ip, &lp), Err(Error::Load(LoadError::CountMismatch { .. }))));
}

fn assert_close(a: &Dataset, b: &Dataset) {
    assert_eq!(a.labels, b.labels);
    for (x, y) in a.images.iter().zip(&b.images) {
        assert!(x.max_abs_diff(y) <= 0.5 / 255.0 + 1e-6);
    }
}

#[test]
fn writers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gray = synth_dataset(12, 3, SynthShape::square(6, 1), 2).unwrap();
    let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
    write_idx(&gray, &ip, &lp).unwrap();
    assert_close(&gray, &load_idx(&ip, &lp).unwrap());

    let rgb = synth_dataset(5, 10, SynthShape::square(32, 3), 2).unwrap();
    let cp = dir.path().join("batch.bin");
    write_cifar_binary(&rgb, &cp).unwrap();
    assert_eq!(fs::metadata(&cp).unwrap().len(), 5 * 3073);
    assert_close(&rgb, &load_cifar_binary(&[cp]).unwrap());

    let empty = dir.path().join("empty.bin");
    fs::write(&empty, []).unwrap();
    assert!(load_cifar_binary(&[empty]).unwrap().is_empty());
}

/// Nearest class mean on raw pixels, fitted on the labeled split only.
fn nearest_centroid_accuracy(train: &Dataset, labeled: &[usize], test: &Dataset) -> f64 {
    let dim = train.images[0].data().len();
    let mut sums = vec![vec![0.0f64; dim]; train.classes];
    let mut counts = vec![0usize; train.classes];
    for &i in labeled {
        counts[train.labels[i]] += 1;
        for (s, &v) in sums[train.labels[i]].iter_mut().zip(train.images[i].data()) {
            *s += v as f64;
        }
    }
    let hits = test
        .images
        .iter()
        .zip(&test.labels)
        .filter(|(img, &label)| {
            let dist = |c: usize| -> f64 {
                sums[c].iter().zip(img.data()).map(|(s, &v)| (s / counts[c] as f64 - v as f64).powi(2)).sum()
            };
            (0..train.classes).min_by(|&a, &b| dist(a).total_cmp(&dist(b))) == Some(label)
        })
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn synthetic_classes_are_learnable() {
    let shape = SynthShape::square(16, 3);
    let train = synth_dataset(500, 10, shape, 1).unwrap();
    let test = synth_dataset(200, 10, shape, 2).unwrap();
    let all: Vec<usize> = (0..train.len()).collect();
    let acc = nearest_centroid_accuracy(&train, &all, &test);
    assert!(acc > 0.3, "nearest-centroid accuracy {acc} is not above chance");
    let split = make_ssl_split(&train, 40, 0).unwrap();
    assert!(nearest_centroid_accuracy(&train, &split.labeled, &test) > 0.2);
}

#[test]
fn batch_stream_contracts() {
    let d = synth_dataset(200, 10, SynthShape::square(4, 1), 0).unwrap();
    let split = make_ssl_split(&d, 40, 1).unwrap();
    let mut all: Vec<usize> = split.labeled.iter().chain(&split.unlabeled).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..200).collect::<Vec<_>>());

    let mut stream = BatchStream::new(&split, 64, 5);
    let again: Vec<_> = BatchStream::new(&split, 64, 5).take(4).collect();
    let first: Vec<_> = stream.by_ref().take(4).collect();
    assert_eq!(first, again);
    // 40 labeled, B = 64: the first 40 positions are one pass without repeats
    let (l, _) = &first[0];
    let mut pass = l[..40].to_vec();
    pass.sort_unstable();
    pass.dedup();
    assert_eq!(pass.len(), 40);
    // 160 unlabeled cover an epoch in 160 consecutive draws
    let drawn: Vec<usize> = first.iter().flat_map(|(_, u)| u.clone()).take(160).collect();
    let mut epoch = drawn.clone();
    epoch.sort_unstable();
    assert_eq!(epoch, split.unlabeled);
    assert!(first.iter().all(|(_, u)| u.iter().all(|i| !split.labeled.contains(i))));
}
