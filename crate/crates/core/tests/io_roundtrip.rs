use cbm_fair::io::{
    decode_cbmf, encode_cbmf, read_activations, read_dataset, read_head, write_activations, write_dataset,
    write_head, HeadMeta, Predictions, HEADER_LEN,
};
use cbm_fair::{ActivationMatrix, DatasetLabels, EmbeddingMatrix, Error, InputKind, LabeledDataset, LinearHead, Split};
use proptest::prelude::*;

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #[test]
    fn cbmf_bytes_round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u32>()) {
        // Arbitrary bit patterns, NaN payloads included.
        let values: Vec<f32> = (0..rows * cols)
            .map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 97_531)))
            .collect();
        let bytes = encode_cbmf(rows, cols, &values);
        prop_assert_eq!(bytes.len(), HEADER_LEN + 4 * values.len());
        let (r, c, back) = decode_cbmf(&bytes).unwrap();
        prop_assert_eq!((r, c), (rows, cols));
        prop_assert_eq!(bits(&back), bits(&values));
    }

    #[test]
    fn activations_round_trip(n in 1usize..8, m in 1usize..8, vals in proptest::collection::vec(-2.0f32..2.0, 64)) {
        let values: Vec<f32> = (0..n * m).map(|i| vals[i % vals.len()]).collect();
        let a = ActivationMatrix::new(
            n,
            m,
            values,
            (0..n).map(|i| format!("img {i}")).collect(),
            (0..m).map(|j| format!("concept \"{j}\"")).collect(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.cbmf");
        write_activations(&p, &a).unwrap();
        let back = read_activations(&p).unwrap();
        prop_assert_eq!(bits(back.values()), bits(a.values()));
        prop_assert_eq!(back, a);
    }
}

#[test]
fn dataset_and_head_round_trip() {
    let emb = EmbeddingMatrix::from_rows(
        &[vec![0.1, 0.2], vec![-0.3, 0.4], vec![0.5, -0.6]],
        Some(vec!["a".into(), "b".into(), "c".into()]),
    )
    .unwrap();
    let labels = DatasetLabels::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![0, 1, 1],
        vec![0, 1, 0],
        vec![Split::Train, Split::Train, Split::Test],
        vec!["cooking".into(), "driving".into()],
        "gender",
    )
    .unwrap();
    let d = LabeledDataset::new(emb, labels).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.cbmf");
    write_dataset(&p, &d).unwrap();
    assert_eq!(read_dataset(&p).unwrap(), d);

    let head = LinearHead::new(2, 3, vec![0.5, 0.0, -1.5, 1e-30, 2.0, 0.25], vec![0.1, -0.1], InputKind::ConceptActivation)
        .unwrap();
    let hp = dir.path().join("h.cbmf");
    write_head(&hp, &head, &HeadMeta::for_head(&head)).unwrap();
    let (back, meta) = read_head(&hp).unwrap();
    assert_eq!(back, head);
    assert_eq!(meta.input_kind, InputKind::ConceptActivation);
}

#[test]
fn corrupt_files_are_rejected() {
    let mut bytes = encode_cbmf(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    assert!(matches!(decode_cbmf(&bytes[..HEADER_LEN + 5]), Err(Error::Truncated { .. })));
    bytes.push(0);
    assert!(matches!(decode_cbmf(&bytes), Err(Error::TrailingBytes { .. })));
    bytes[0] = b'X';
    assert!(matches!(decode_cbmf(&bytes), Err(Error::BadMagic { .. })));
    let mut v2 = encode_cbmf(1, 1, &[0.0]);
    v2[4] = 2;
    assert!(matches!(decode_cbmf(&v2), Err(Error::VersionMismatch { .. })));
}

#[test]
fn predictions_align_by_row_id() {
    let p = Predictions {
        row_ids: vec!["x".into(), "y".into(), "z".into()],
        labels: vec![2, 0, 1],
    };
    let ids: Vec<String> = vec!["z".into(), "x".into()];
    assert_eq!(p.aligned_to(&ids).unwrap(), vec![1, 2]);
    assert!(p.aligned_to(&["w".to_string()]).is_err());
}
