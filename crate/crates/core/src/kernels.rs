//! Stationary isotropic kernels on `R^d` and Gram-matrix construction.
//!
//! Both families are normalised so that `k(x, x) = 1`. The Matérn family is
//! restricted to half-integer smoothness, where the Bessel form collapses to
//! `exp(-z)` times a polynomial in `z = sqrt(2 nu) r / l`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distances below this are treated as exactly zero.
pub const DISTANCE_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Se,
    Matern,
}

impl KernelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Se => "se",
            KernelFamily::Matern => "matern",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "rbf" | "squared_exponential" => Ok(KernelFamily::Se),
            "matern" | "matérn" => Ok(KernelFamily::Matern),
            other => Err(Error::config(
                "family",
                format!("unknown kernel family `{other}` (expected `se` or `matern`)"),
            )),
        }
    }
}

/// Supported Matérn smoothness values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
    SevenHalves,
}

impl MaternNu {
    pub fn from_f64(nu: f64) -> Result<Self> {
        const TABLE: [(f64, MaternNu); 4] = [
            (0.5, MaternNu::Half),
            (1.5, MaternNu::ThreeHalves),
            (2.5, MaternNu::FiveHalves),
            (3.5, MaternNu::SevenHalves),
        ];
        TABLE
            .iter()
            .find(|(v, _)| (nu - v).abs() < 1e-12)
            .map(|&(_, m)| m)
            .ok_or_else(|| {
                Error::config(
                    "nu",
                    format!("unsupported Matérn smoothness {nu}; expected one of 0.5, 1.5, 2.5, 3.5"),
                )
            })
    }

    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
            MaternNu::SevenHalves => 3.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Se,
    Matern(MaternNu),
}

/// Kernel family plus hyperparameters. Immutable once built.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    kind: Kind,
    lengthscale: f64,
}

impl KernelSpec {
    pub fn se(lengthscale: f64) -> Result<Self> {
        check_lengthscale(lengthscale)?;
        Ok(Self {
            kind: Kind::Se,
            lengthscale,
        })
    }

    pub fn matern(nu: f64, lengthscale: f64) -> Result<Self> {
        check_lengthscale(lengthscale)?;
        Ok(Self {
            kind: Kind::Matern(MaternNu::from_f64(nu)?),
            lengthscale,
        })
    }

    /// Builds a spec from a family tag; `nu` is ignored for SE.
    pub fn new(family: KernelFamily, lengthscale: f64, nu: Option<f64>) -> Result<Self> {
        match family {
            KernelFamily::Se => Self::se(lengthscale),
            KernelFamily::Matern => {
                let nu = nu.ok_or_else(|| Error::config("nu", "Matérn kernel requires `nu`"))?;
                Self::matern(nu, lengthscale)
            }
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self.kind {
            Kind::Se => KernelFamily::Se,
            Kind::Matern(_) => KernelFamily::Matern,
        }
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// Smoothness for Matérn kernels, `None` for SE.
    pub fn nu(&self) -> Option<f64> {
        match self.kind {
            Kind::Se => None,
            Kind::Matern(nu) => Some(nu.value()),
        }
    }

    /// Kernel value as a function of the Euclidean distance `r >= 0`.
    pub fn eval_distance(&self, r: f64) -> f64 {
        let r = if r < DISTANCE_CLAMP { 0.0 } else { r };
        let l = self.lengthscale;
        match self.kind {
            Kind::Se => (-(r * r) / (2.0 * l * l)).exp(),
            Kind::Matern(nu) => {
                let z = (2.0 * nu.value()).sqrt() * r / l;
                let poly = match nu {
                    MaternNu::Half => 1.0,
                    MaternNu::ThreeHalves => 1.0 + z,
                    MaternNu::FiveHalves => 1.0 + z + z * z / 3.0,
                    MaternNu::SevenHalves => 1.0 + z + 2.0 * z * z / 5.0 + z * z * z / 15.0,
                };
                poly * (-z).exp()
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_distance(distance(x, y))
    }
}

impl Serialize for KernelSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("KernelSpec", 3)?;
        s.serialize_field("family", &self.family())?;
        s.serialize_field("lengthscale", &self.lengthscale)?;
        s.serialize_field("nu", &self.nu())?;
        s.end()
    }
}

fn check_lengthscale(lengthscale: f64) -> Result<()> {
    if lengthscale.is_finite() && lengthscale > 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            "lengthscale",
            format!("lengthscale must be finite and > 0; got {lengthscale}"),
        ))
    }
}

/// Euclidean distance. `(a - b)^2 == (b - a)^2` in IEEE arithmetic, so the
/// result is symmetric bit-for-bit.
pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len(), "dimension mismatch");
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    spec.eval(x, y)
}

/// Dense symmetric Gram matrix `[k(p_i, p_j)]`. Only the lower triangle is
/// evaluated; the upper triangle is mirrored so symmetry is exact.
pub fn gram_matrix<P: AsRef<[f64]>>(spec: &KernelSpec, points: &[P]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval(points[i].as_ref(), points[j].as_ref());
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}
