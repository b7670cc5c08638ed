// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use syncomp::io::npy::{self, Dtype};
use syncomp::{Error, Tensor};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn numpy_written_files_survive_a_load_save_cycle() {
    for name in ["numpy_f8_2x3.npy", "numpy_f8_1000.npy"] {
        let original = std::fs::read(data(name)).unwrap();
        let t = npy::load_tensor(data(name)).unwrap();
        assert_eq!(npy::encode(&t, Dtype::F64), original, "{name}");
    }
}

#[test]
fn numpy_values_are_read_exactly() {
    let t = npy::load_tensor(data("numpy_f8_2x3.npy")).unwrap();
    assert_eq!(t.shape(), &[2, 3]);
    let expected: Vec<f64> = (0..6).map(|i| f64::from(i) / 7.0).collect();
    assert_eq!(t.data(), expected.as_slice());

    let t = npy::load_tensor(data("numpy_f4_4.npy")).unwrap();
    assert_eq!(t.shape(), &[4]);
    let expected: Vec<f64> = (0..4).map(|i| f64::from((i as f32 - 1.5) / 3.0)).collect();
    assert_eq!(t.data(), expected.as_slice());
}

#[test]
fn fortran_order_is_rejected() {
    let err = npy::load_tensor(data("numpy_fortran.npy")).unwrap_err();
    assert!(matches!(err, Error::MalformedHeader { .. }));
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(npy::load_tensor(data("nope.npy")), Err(Error::Io { .. })));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn tensor() -> impl Strategy<Value = Tensor> {
        (1usize..6, 0usize..6, any::<bool>()).prop_flat_map(|(r, c, one_d)| {
            let n = if one_d { r } else { r * c };
            proptest::collection::vec(any::<f64>().prop_filter("no NaN", |v| !v.is_nan()), n).prop_map(move |d| {
                if one_d {
                    Tensor::new(vec![r], d).unwrap()
                } else {
                    Tensor::new(vec![r, c], d).unwrap()
                }
            })
        })
    }

    proptest! {
        #[test]
        fn save_then_load_is_bitwise_identity(t in tensor()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.npy");
            npy::save_tensor(&path, &t).unwrap();
            let back = npy::load_tensor(&path).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            let a: Vec<u64> = back.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(std::fs::metadata(&path).unwrap().len() % 8, 0);
        }

        #[test]
        fn any_truncation_is_rejected(t in tensor(), cut in 1usize..64) {
            let bytes = npy::encode(&t, Dtype::F64);
            let cut = cut.min(bytes.len());
            prop_assert!(npy::decode(&bytes[..bytes.len() - cut], "t").is_err());
        }
    }
}
