use nn_engine::{load_into_store, load_params, save_store, Conv2d, ParamStore, Shape, Tensor};
use ps_core::Rng;

#[test]
fn round_trip_is_bit_exact() {
    let mut rng = Rng::from_seed(55);
    let mut store = ParamStore::<f64>::new();
    let _c1 = Conv2d::new(&mut store, "a.conv", 3, 4, 3, 3, 1, true, &mut rng);
    let _c2 = Conv2d::new(&mut store, "b.conv", 4, 2, 1, 3, 1, false, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("params.bin");
    let man = dir.path().join("params.manifest");
    save_store(&bin, &man, &store).unwrap();

    let mut reloaded = store.clone();
    for id in reloaded.ids().collect::<Vec<_>>() {
        reloaded.value_mut(id).data_mut().fill(0.0);
    }
    load_into_store(&bin, &man, &mut reloaded).unwrap();
    for (id, entry) in store.iter() {
        assert_eq!(entry.value, *reloaded.value(id), "{}", entry.name);
    }
}

#[test]
fn f32_round_trip_and_dtype_guard() {
    let mut store = ParamStore::<f32>::new();
    store.add("w", Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.25f32, -1.5, 3.75]).unwrap(), true);
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("p.bin");
    let man = dir.path().join("p.manifest");
    save_store(&bin, &man, &store).unwrap();
    let back = load_params::<f32>(&bin, &man).unwrap();
    assert_eq!(back[0].1.data(), &[0.25f32, -1.5, 3.75]);
    // Requesting the wrong dtype must fail loudly.
    assert!(load_params::<f64>(&bin, &man).is_err());
}

#[test]
fn corruption_is_detected() {
    let mut store = ParamStore::<f64>::new();
    store.add("w", Tensor::filled(Shape::new(1, 1, 2, 2), 1.0), true);
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("p.bin");
    let man = dir.path().join("p.manifest");
    save_store(&bin, &man, &store).unwrap();
    let mut blob = std::fs::read(&bin).unwrap();
    blob[3] ^= 0xFF;
    std::fs::write(&bin, blob).unwrap();
    let err = load_params::<f64>(&bin, &man).unwrap_err().to_string();
    assert!(err.contains("checksum"), "got {err}");
}
