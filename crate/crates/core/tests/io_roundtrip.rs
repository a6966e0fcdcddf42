use snack_core::io::{
    load_embedding, load_features, load_ids, load_kernel, load_labels, load_triplets, save_embedding,
    save_kernel, save_triplets, write_features,
};
use snack_core::kernels::euclidean_kernel;
use snack_core::synthetic::gaussian_blobs;
use snack_core::triplets::sample_from_labels;
use snack_core::{Embedding, Error, IdIndex};

#[test]
fn kernel_embedding_and_triplets_survive_a_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let blobs = gaussian_blobs(3, 4, 3, 5.0, 1.0, 1);

    let fpath = dir.path().join("features.csv");
    write_features(&blobs.features, std::fs::File::create(&fpath).unwrap()).unwrap();
    assert_eq!(load_features(&fpath).unwrap(), blobs.features);

    let k = euclidean_kernel(&blobs.features);
    let kpath = dir.path().join("kernel.csv");
    save_kernel(&k, &["generated".to_string()], &kpath).unwrap();
    assert_eq!(load_kernel(&kpath).unwrap(), k);
    assert_eq!(load_ids(&kpath).unwrap().ids(), k.ids());
    assert_eq!(load_ids(&fpath).unwrap().ids(), k.ids());

    let ids = IdIndex::new(k.ids().to_vec()).unwrap();
    let t = sample_from_labels(&blobs.labels(), 12, Some(40), 3).unwrap();
    let tpath = dir.path().join("triplets.csv");
    save_triplets(&t, &ids, &tpath).unwrap();
    assert_eq!(load_triplets(&tpath, &ids).unwrap(), t);

    let y = Embedding::new(k.ids().to_vec(), blobs.features.values.clone()).unwrap();
    let ypath = dir.path().join("embedding.csv");
    save_embedding(&y, &ypath).unwrap();
    assert_eq!(load_embedding(&ypath).unwrap(), y);
}

#[test]
fn labels_follow_id_order_not_file_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.csv");
    std::fs::write(&path, "id,label\nc,cat\na,dog\nb,cat\n").unwrap();
    let ids = IdIndex::new(vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
    let labels = load_labels(&path, &ids).unwrap();
    // string labels get dense ids in order of first appearance
    assert_eq!(labels.labels, vec![1, 0, 0, -1]);
}

#[test]
fn unknown_triplet_ids_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, "i,j,k\na,b,zz\n").unwrap();
    let ids = IdIndex::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let err = load_triplets(&path, &ids).unwrap_err();
    assert!(err.to_string().contains("zz"), "{err}");
}

#[test]
fn asymmetric_kernel_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.csv");
    std::fs::write(&path, "a,b\n0,1\n2,0\n").unwrap();
    assert!(matches!(load_kernel(&path), Err(Error::InvalidKernel(_))));
}
