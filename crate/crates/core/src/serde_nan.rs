//! Serde helpers that write non-finite values as `null` and read `null`
//! back as NaN, since JSON has neither NaN nor infinities.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

fn out(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        out(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| out(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<Option<f64>>::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

pub mod matrix {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Dense {
        nrows: usize,
        ncols: usize,
        /// Column-major entries.
        data: Vec<Option<f64>>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        Dense {
            nrows: m.nrows(),
            ncols: m.ncols(),
            data: m.iter().map(|&x| out(x)).collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let m = Dense::deserialize(d)?;
        if m.data.len() != m.nrows * m.ncols {
            return Err(serde::de::Error::custom(
                "matrix data length does not match its shape",
            ));
        }
        Ok(DMatrix::from_iterator(
            m.nrows,
            m.ncols,
            m.data.into_iter().map(|x| x.unwrap_or(f64::NAN)),
        ))
    }
}
