//! Model families and pointwise evaluation of `f(y | θ) ∝ exp(θᵀ s(y))`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, RawStats};

/// First-order lattice model families.
///
/// Every edge of the lattice is counted once in the interaction statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSpec {
    /// `s = (s₁)`, one interaction parameter over all edges.
    IsingIsotropic,
    /// `s = (s_vertical, s_horizontal)`, one parameter per edge direction.
    IsingAnisotropic,
    /// `s = (s₀, s₁)`, abundance plus isotropic interaction.
    Autologistic,
}

/// Natural parameters resolved onto the lattice: per-site field and
/// per-direction couplings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Couplings {
    pub field: f64,
    pub vertical: f64,
    pub horizontal: f64,
}

impl Couplings {
    pub fn transposed(self) -> Self {
        Self { field: self.field, vertical: self.horizontal, horizontal: self.vertical }
    }

    #[inline]
    pub fn energy(&self, raw: RawStats) -> f64 {
        self.field * raw.sum as f64 + self.vertical * raw.vertical as f64 + self.horizontal * raw.horizontal as f64
    }
}

/// Sufficient statistic vector `s(y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatVector(pub Vec<i64>);

impl StatVector {
    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for StatVector {
    type Output = i64;

    fn index(&self, i: usize) -> &i64 {
        &self.0[i]
    }
}

impl ModelSpec {
    pub const ALL: [ModelSpec; 3] = [ModelSpec::IsingIsotropic, ModelSpec::IsingAnisotropic, ModelSpec::Autologistic];

    /// Statistic dimension `d`.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::IsingIsotropic => 1,
            ModelSpec::IsingAnisotropic | ModelSpec::Autologistic => 2,
        }
    }

    pub fn has_abundance(&self) -> bool {
        matches!(self, ModelSpec::Autologistic)
    }

    /// Names of the statistic components, in order.
    pub fn stat_names(&self) -> &'static [&'static str] {
        match self {
            ModelSpec::IsingIsotropic => &["s1"],
            ModelSpec::IsingAnisotropic => &["s_vertical", "s_horizontal"],
            ModelSpec::Autologistic => &["s0", "s1"],
        }
    }

    /// Checks that `theta` has length `d` and finite components.
    pub fn check_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        if let Some((index, &value)) = theta.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteParameter { index, value });
        }
        Ok(())
    }

    /// Maps `θ` onto field and directional couplings. Caller validates `θ`.
    pub fn couplings(&self, theta: &[f64]) -> Couplings {
        match self {
            ModelSpec::IsingIsotropic => Couplings { field: 0.0, vertical: theta[0], horizontal: theta[0] },
            ModelSpec::IsingAnisotropic => Couplings { field: 0.0, vertical: theta[0], horizontal: theta[1] },
            ModelSpec::Autologistic => Couplings { field: theta[0], vertical: theta[1], horizontal: theta[1] },
        }
    }

    /// Projects raw counts onto this model's statistic vector.
    pub fn stats_from_raw(&self, raw: RawStats) -> StatVector {
        StatVector(match self {
            ModelSpec::IsingIsotropic => vec![raw.vertical + raw.horizontal],
            ModelSpec::IsingAnisotropic => vec![raw.vertical, raw.horizontal],
            ModelSpec::Autologistic => vec![raw.sum, raw.vertical + raw.horizontal],
        })
    }

    /// Same projection for real-valued (expected) raw counts `[sum, vertical, horizontal]`.
    pub fn project(&self, raw: [f64; 3]) -> Vec<f64> {
        match self {
            ModelSpec::IsingIsotropic => vec![raw[1] + raw[2]],
            ModelSpec::IsingAnisotropic => vec![raw[1], raw[2]],
            ModelSpec::Autologistic => vec![raw[0], raw[1] + raw[2]],
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelSpec::IsingIsotropic => "ising-isotropic",
            ModelSpec::IsingAnisotropic => "ising-anisotropic",
            ModelSpec::Autologistic => "autologistic",
        })
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ising-isotropic" | "ising" | "isotropic" => Ok(ModelSpec::IsingIsotropic),
            "ising-anisotropic" | "anisotropic" => Ok(ModelSpec::IsingAnisotropic),
            "autologistic" => Ok(ModelSpec::Autologistic),
            other => Err(Error::Parse(format!("unknown model '{other}'"))),
        }
    }
}

/// `s(y)` for the given model.
pub fn sufficient_statistics(y: &Lattice, model: ModelSpec) -> StatVector {
    model.stats_from_raw(y.raw_stats())
}

/// `θᵀ s(y)`, the log of the unnormalised likelihood `q(y | θ)`.
pub fn unnormalized_log_likelihood(y: &Lattice, theta: &[f64], model: ModelSpec) -> Result<f64> {
    model.check_params(theta)?;
    Ok(model.couplings(theta).energy(y.raw_stats()))
}

/// Neighbour spin sums of `site` split by edge direction.
pub fn neighbour_sums(y: &Lattice, site: usize) -> (i64, i64) {
    let (mut v, mut h) = (0i64, 0i64);
    for (j, dir) in y.neighbours(site) {
        match dir {
            crate::lattice::Direction::Vertical => v += y.get(j) as i64,
            crate::lattice::Direction::Horizontal => h += y.get(j) as i64,
        }
    }
    (v, h)
}

/// Local field acting on `site`: `θ₀ + Σ_k θ_k (neighbour sum under 𝒢_k)`.
pub fn local_field(y: &Lattice, site: usize, c: &Couplings) -> f64 {
    let (v, h) = neighbour_sums(y, site);
    c.field + c.vertical * v as f64 + c.horizontal * h as f64
}

/// Full conditional probability that `y_i` takes its current value given the
/// rest of the lattice.
pub fn site_conditional_probability(y: &Lattice, site: usize, theta: &[f64], model: ModelSpec) -> Result<f64> {
    model.check_params(theta)?;
    if site >= y.len() {
        return Err(Error::InvalidSite { site, n: y.len() });
    }
    let a = y.get(site) as f64 * local_field(y, site, &model.couplings(theta));
    Ok(logistic(2.0 * a))
}

/// `1 / (1 + e^{-x})` without overflow.
#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn checkerboard(m: usize, c: usize) -> Lattice {
        let vals = (0..m * c).map(|i| if (i % m + i / m) % 2 == 0 { 1 } else { -1 }).collect();
        Lattice::new(m, c, vals).unwrap()
    }

    #[test]
    fn statistics_of_small_lattices() {
        let ones = Lattice::filled(2, 2, 1).unwrap();
        assert_eq!(sufficient_statistics(&ones, ModelSpec::Autologistic).0, vec![4, 4]);
        assert_eq!(sufficient_statistics(&checkerboard(2, 2), ModelSpec::Autologistic).0, vec![0, -4]);
        let big = Lattice::filled(4, 4, 1).unwrap();
        assert_eq!(sufficient_statistics(&big, ModelSpec::IsingAnisotropic).0, vec![12, 12]);
        assert_eq!(sufficient_statistics(&big, ModelSpec::IsingIsotropic).0, vec![24]);
    }

    #[test]
    fn unnormalized_values() {
        let ones = Lattice::filled(2, 2, 1).unwrap();
        let v = unnormalized_log_likelihood(&ones, &[0.05, 0.4], ModelSpec::Autologistic).unwrap();
        assert!((v - 1.8).abs() < 1e-12);
        assert_eq!(unnormalized_log_likelihood(&ones, &[0.0, 0.0], ModelSpec::Autologistic).unwrap(), 0.0);
        assert!(matches!(
            unnormalized_log_likelihood(&ones, &[0.4], ModelSpec::Autologistic),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(unnormalized_log_likelihood(&ones, &[f64::NAN], ModelSpec::IsingIsotropic).is_err());
    }

    #[test]
    fn site_conditionals() {
        let ones = Lattice::filled(3, 3, 1).unwrap();
        let p = site_conditional_probability(&ones, 4, &[0.4], ModelSpec::IsingIsotropic).unwrap();
        let expected = 1.6f64.exp() / (1.6f64.exp() + (-1.6f64).exp());
        assert!((p - expected).abs() < 1e-14);
        assert!((p - 0.9608).abs() < 1e-4);
        for i in 0..9 {
            let p0 = site_conditional_probability(&checkerboard(3, 3), i, &[0.0, 0.0], ModelSpec::Autologistic).unwrap();
            assert_eq!(p0, 0.5);
        }
        // corner with one +1 and one -1 neighbour
        let y = Lattice::from_row_major(2, 2, &[1, 1, -1, 1]).unwrap();
        let p = site_conditional_probability(&y, 0, &[0.0, 0.7], ModelSpec::Autologistic).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(matches!(
            site_conditional_probability(&y, 4, &[0.3], ModelSpec::IsingIsotropic),
            Err(Error::InvalidSite { .. })
        ));
    }

    fn lattice_strategy() -> impl Strategy<Value = Lattice> {
        (1usize..6, 1usize..6).prop_flat_map(|(m, c)| {
            proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], m * c)
                .prop_map(move |v| Lattice::new(m, c, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn flip_symmetry_without_abundance(y in lattice_strategy(), t in -1.0f64..1.0, u in -1.0f64..1.0) {
            for model in [ModelSpec::IsingIsotropic, ModelSpec::IsingAnisotropic] {
                let f = y.flipped();
                prop_assert_eq!(sufficient_statistics(&y, model), sufficient_statistics(&f, model));
                let theta: Vec<f64> = [t, u][..model.dim()].to_vec();
                for i in 0..y.len() {
                    let a = site_conditional_probability(&y, i, &theta, model).unwrap();
                    let b = site_conditional_probability(&f, i, &theta, model).unwrap();
                    prop_assert!((a - b).abs() < 1e-14);
                }
            }
            let v = unnormalized_log_likelihood(&y, &[0.0, t], ModelSpec::Autologistic).unwrap();
            let w = unnormalized_log_likelihood(&y.flipped(), &[0.0, t], ModelSpec::Autologistic).unwrap();
            prop_assert!((v - w).abs() < 1e-12);
        }

        #[test]
        fn anisotropic_components_sum_to_isotropic(y in lattice_strategy()) {
            let a = sufficient_statistics(&y, ModelSpec::IsingAnisotropic);
            let i = sufficient_statistics(&y, ModelSpec::IsingIsotropic);
            prop_assert_eq!(a[0] + a[1], i[0]);
            let (ev, eh) = y.edge_counts();
            prop_assert!(a[0].unsigned_abs() as usize <= ev && a[1].unsigned_abs() as usize <= eh);
            prop_assert!(sufficient_statistics(&y, ModelSpec::Autologistic)[0].unsigned_abs() as usize <= y.len());
        }
    }
}
