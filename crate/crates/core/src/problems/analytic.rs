use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// The three test functions `φ(x₁, x₂, t)` of the function-approximation benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticId {
    Phi1,
    Phi2,
    Phi3,
}

impl fmt::Display for AnalyticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnalyticId::Phi1 => "phi1",
            AnalyticId::Phi2 => "phi2",
            AnalyticId::Phi3 => "phi3",
        })
    }
}

impl FromStr for AnalyticId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phi1" => Ok(AnalyticId::Phi1),
            "phi2" => Ok(AnalyticId::Phi2),
            "phi3" => Ok(AnalyticId::Phi3),
            other => Err(Error::Config(format!("unknown analytic function '{other}'"))),
        }
    }
}

impl AnalyticId {
    /// `([a₁, b₁], [a₂, b₂])`.
    pub fn domain(self) -> ((f64, f64), (f64, f64)) {
        match self {
            AnalyticId::Phi1 => ((0.0, 2.0), (0.0, 2.0)),
            AnalyticId::Phi2 => ((0.0, 1.0), (0.0, 1.5)),
            AnalyticId::Phi3 => ((0.0, 3.0), (0.0, 3.0)),
        }
    }

    pub fn t_final(self) -> f64 {
        match self {
            AnalyticId::Phi1 => 2.0,
            AnalyticId::Phi2 => 3.0,
            AnalyticId::Phi3 => 5.0,
        }
    }

    /// Pointwise value.
    pub fn eval<T: Real>(self, x1: T, x2: T, t: T) -> T {
        let reg = T::lit(1e-4);
        let two = T::lit(2.0);
        let s = x1 + x2 - t;
        match self {
            AnalyticId::Phi1 => {
                let d = two * x1 - T::lit(3.0) * t;
                x2 / (s * s + d * d + reg).sqrt()
            }
            AnalyticId::Phi2 => {
                let q = x2 * t + T::lit(0.1);
                let d = x2 * x2 + x1 * x1 - t * t;
                x1 * x2 / (q * q) + two.powf(x1 + x2) / (s * s + d * d + reg).sqrt()
            }
            AnalyticId::Phi3 => {
                let q = x2 * t + T::lit(0.1);
                let d = x2 * x2 + x1 * x1 - T::lit(3.0) * t;
                x1 * (T::lit(0.1) + t) / (q * q) + t * two.powf(x1 + x2) / (s * s + d * d + reg).sqrt()
            }
        }
    }
}

/// `φ` sampled on an `n × n` uniform grid (endpoints included); rows index `x₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticFunction<T: Real> {
    pub id: AnalyticId,
    pub n: usize,
    pub x1: Vec<T>,
    pub x2: Vec<T>,
}

impl<T: Real> AnalyticFunction<T> {
    pub fn new(id: AnalyticId, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::dim(format!("analytic grid needs n >= 2, got {n}")));
        }
        let ((a1, b1), (a2, b2)) = id.domain();
        let axis = |a: f64, b: f64| -> Vec<T> {
            (0..n).map(|i| T::lit(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
        };
        Ok(AnalyticFunction { id, n, x1: axis(a1, b1), x2: axis(a2, b2) })
    }

    pub fn t_final(&self) -> T {
        T::lit(self.id.t_final())
    }

    /// `[φ(x₁ᵢ, x₂ⱼ, t)]`.
    pub fn sample(&self, t: T) -> Result<DMatrix<T>> {
        let tf = self.t_final();
        let slack = T::lit(1e-12) * tf;
        if !(t >= -slack && t <= tf + slack) {
            return Err(Error::Domain(format!("t = {t} outside [0, {tf}] for {}", self.id)));
        }
        Ok(DMatrix::from_fn(self.n, self.n, |i, j| self.id.eval(self.x1[i], self.x2[j], t)))
    }
}

/// Free-function form of [`AnalyticFunction::sample`].
pub fn sample_analytic<T: Real>(f: &AnalyticFunction<T>, t: T) -> Result<DMatrix<T>> {
    f.sample(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi1_zero_numerator_column() {
        let f = AnalyticFunction::<f64>::new(AnalyticId::Phi1, 9).unwrap();
        let m = f.sample(0.7).unwrap();
        assert!(m.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn phi1_point_value() {
        let v = AnalyticId::Phi1.eval(1.0f64, 1.0, 2.0);
        assert!((v - 1.0 / 16.0001f64.sqrt()).abs() < 1e-15);
        assert!((v - 0.2499992).abs() < 1e-7);
    }

    #[test]
    fn phi3_rank_one_at_start() {
        let f = AnalyticFunction::<f64>::new(AnalyticId::Phi3, 12).unwrap();
        let m = f.sample(0.0).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert!((m[(i, j)] - 10.0 * f.x1[i]).abs() < 1e-12);
            }
        }
        let s = crate::linalg::singular_values(&m);
        assert!(s[1] < 1e-12 * s[0]);
    }

    #[test]
    fn out_of_range_time_rejected() {
        let f = AnalyticFunction::<f64>::new(AnalyticId::Phi2, 5).unwrap();
        assert!(matches!(f.sample(3.5), Err(Error::Domain(_))));
        assert!(f.sample(3.0).is_ok());
    }
}
