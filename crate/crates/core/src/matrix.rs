//! Row-major JSON encoding for `DMatrix<f64>` with explicit shape fields.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct RowMajor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let data = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
        .collect();
    RowMajor {
        rows: m.nrows(),
        cols: m.ncols(),
        data,
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let rm = RowMajor::deserialize(d)?;
    if rm.data.len() != rm.rows * rm.cols {
        return Err(serde::de::Error::custom(format!(
            "matrix data has {} entries, expected {}x{}",
            rm.data.len(),
            rm.rows,
            rm.cols
        )));
    }
    Ok(DMatrix::from_row_slice(rm.rows, rm.cols, &rm.data))
}

pub mod option {
    use super::*;

    struct Borrowed<'a>(&'a DMatrix<f64>);

    impl Serialize for Borrowed<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            super::serialize(self.0, s)
        }
    }

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => s.serialize_some(&Borrowed(m)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        #[derive(Deserialize)]
        struct Owned(#[serde(with = "super")] DMatrix<f64>);
        Ok(Option::<Owned>::deserialize(d)?.map(|w| w.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Holder {
        #[serde(with = "crate::matrix")]
        m: DMatrix<f64>,
        #[serde(with = "crate::matrix::option", default)]
        o: Option<DMatrix<f64>>,
    }

    #[test]
    fn row_major_layout() {
        let h = Holder {
            m: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            o: None,
        };
        let s = serde_json::to_string(&h).unwrap();
        assert!(s.contains(r#""rows":2,"cols":3,"data":[1.0,2.0,3.0,4.0,5.0,6.0]"#), "{s}");
        let back: Holder = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn bit_exact_round_trip() {
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE, -0.0];
        let h = Holder {
            m: DMatrix::from_row_slice(2, 3, &vals),
            o: Some(DMatrix::from_row_slice(3, 2, &vals)),
        };
        let back: Holder = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        for (a, b) in back.m.iter().zip(h.m.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.o, h.o);
    }

    #[test]
    fn rejects_bad_shape() {
        let r: Result<Holder, _> =
            serde_json::from_str(r#"{"m":{"rows":2,"cols":2,"data":[1.0]}}"#);
        assert!(r.is_err());
    }
}
