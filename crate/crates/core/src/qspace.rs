//! Single-shell q-space designs and complementary RF/q-space undersampling.
//!
//! Directions are generated on the y ≥ 0 hemisphere along a golden-angle
//! spiral that starts at the pole (0, 1, 0). Undersampling schemes split the
//! spiral round-robin into `factor` interleaved groups and assign each group
//! a subset of the five RF-encoding profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Golden-angle azimuth increment, π(3 − √5).
pub const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Number of RF-encoding profiles the undersampling tables are written for.
pub const N_RF: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct QSpaceDesign {
    directions: Vec<[f64; 3]>,
    bvalue: f64,
    n_b0: usize,
}

impl QSpaceDesign {
    /// Builds a design, checking unit norms and the y ≥ 0 hemisphere.
    pub fn new(directions: Vec<[f64; 3]>, bvalue: f64, n_b0: usize) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::invalid("q-space design needs at least one direction"));
        }
        if !(bvalue > 0.0 && bvalue.is_finite()) {
            return Err(Error::invalid(format!("b-value {bvalue} must be positive")));
        }
        for (j, d) in directions.iter().enumerate() {
            let n = norm3(d);
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("direction {j} has norm {n}")));
            }
        }
        Ok(Self {
            directions,
            bvalue,
            n_b0,
        })
    }

    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn n_q(&self) -> usize {
        self.directions.len()
    }

    pub fn bvalue(&self) -> f64 {
        self.bvalue
    }

    pub fn n_b0(&self) -> usize {
        self.n_b0
    }

    pub fn with_n_b0(mut self, n_b0: usize) -> Self {
        self.n_b0 = n_b0;
        self
    }
}

pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Spiral points on the y ≥ 0 hemisphere, returned in spiral order.
///
/// Point `i` has cos(polar) = 1 − i/(n−1) about +y and azimuth
/// `i · GOLDEN_ANGLE`. Point 0 is the pole, the last point lies on the equator.
pub fn spiral_points(n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|i| {
            let cos_t = if n > 1 {
                1.0 - i as f64 / (n - 1) as f64
            } else {
                1.0
            };
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let phi = i as f64 * GOLDEN_ANGLE;
            [sin_t * phi.cos(), cos_t, sin_t * phi.sin()]
        })
        .map(|d| {
            // renormalise so the unit-norm invariant holds to the last ulp
            let n = norm3(&d);
            [d[0] / n, d[1] / n, d[2] / n]
        })
        .collect()
}

/// Spherical-spiral gradient design with `n ≥ 6` directions.
pub fn spiral_directions(n: usize, bvalue: f64) -> Result<QSpaceDesign> {
    if n < 6 {
        return Err(Error::invalid(format!(
            "spiral design needs at least 6 directions, got {n}"
        )));
    }
    QSpaceDesign::new(spiral_points(n), bvalue, 0)
}

/// Acceleration label of a sampling scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Acceleration {
    X1,
    X2,
    X3,
    X4,
    X5,
}

impl Acceleration {
    pub fn from_factor(factor: usize) -> Result<Self> {
        Ok(match factor {
            1 => Acceleration::X1,
            2 => Acceleration::X2,
            3 => Acceleration::X3,
            4 => Acceleration::X4,
            5 => Acceleration::X5,
            _ => {
                return Err(Error::invalid(format!(
                    "acceleration factor must be in 1..=5, got {factor}"
                )))
            }
        })
    }

    pub fn factor(self) -> usize {
        self as usize + 1
    }

    pub fn label(self) -> &'static str {
        ["1X", "2X", "3X", "4X", "5X"][self as usize]
    }

    /// RF profiles (0-based) assigned to each round-robin group.
    pub fn group_profiles(self) -> &'static [&'static [usize]] {
        match self {
            Acceleration::X1 => &[&[0, 1, 2, 3, 4]],
            Acceleration::X2 => &[&[0, 2, 4], &[1, 3]],
            Acceleration::X3 => &[&[0, 3], &[1, 4], &[2]],
            Acceleration::X4 => &[&[0, 4], &[1], &[2], &[3]],
            Acceleration::X5 => &[&[0], &[1], &[2], &[3], &[4]],
        }
    }
}

/// Which q-indices each RF profile encodes. Indices are 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingScheme {
    pub n_rf: usize,
    pub factor: usize,
    pub assignments: Vec<Vec<usize>>,
}

impl SamplingScheme {
    pub fn acceleration(&self) -> Result<Acceleration> {
        Acceleration::from_factor(self.factor)
    }

    pub fn n_q(&self) -> usize {
        self.assignments
            .iter()
            .flat_map(|a| a.iter().copied())
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn total_acquisitions(&self) -> usize {
        self.assignments.iter().map(Vec::len).sum()
    }

    /// RF profiles that encoded direction `j`, ascending.
    pub fn profiles_for(&self, j: usize) -> Vec<usize> {
        (0..self.n_rf)
            .filter(|&k| self.assignments[k].binary_search(&j).is_ok())
            .collect()
    }

    /// Checks sortedness, uniqueness and that every direction in `0..n_q`
    /// is encoded by at least one profile.
    pub fn validate(&self, n_q: usize) -> Result<()> {
        if self.assignments.len() != self.n_rf {
            return Err(Error::InvalidScheme(format!(
                "{} assignment lists for n_rf = {}",
                self.assignments.len(),
                self.n_rf
            )));
        }
        let mut covered = vec![false; n_q];
        for (k, list) in self.assignments.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidScheme(format!(
                    "assignment list of profile {k} is not strictly increasing"
                )));
            }
            for &j in list {
                if j >= n_q {
                    return Err(Error::InvalidScheme(format!(
                        "profile {k} encodes q index {j} >= n_q {n_q}"
                    )));
                }
                covered[j] = true;
            }
        }
        if let Some(j) = covered.iter().position(|&c| !c) {
            return Err(Error::InvalidScheme(format!(
                "q index {j} is not encoded by any RF profile"
            )));
        }
        Ok(())
    }
}

/// Complementary scheme for `factor` ∈ 1..=5 over the design's spiral order.
pub fn make_scheme(design: &QSpaceDesign, factor: usize) -> Result<SamplingScheme> {
    make_scheme_for(design.n_q(), factor)
}

/// As [`make_scheme`] but only needs the direction count; the grouping
/// depends on index order alone.
pub fn make_scheme_for(n_q: usize, factor: usize) -> Result<SamplingScheme> {
    let accel = Acceleration::from_factor(factor)?;
    let groups = accel.group_profiles();
    let mut assignments = vec![Vec::new(); N_RF];
    for j in 0..n_q {
        for &k in groups[j % factor] {
            assignments[k].push(j);
        }
    }
    Ok(SamplingScheme {
        n_rf: N_RF,
        factor,
        assignments,
    })
}

/// Ordered q-indices encoded by RF profile `k` (0-based).
pub fn scheme_mask(scheme: &SamplingScheme, k: usize) -> Result<&[usize]> {
    scheme
        .assignments
        .get(k)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::invalid(format!("RF index {k} out of range 0..{}", scheme.n_rf)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn angle_deg(a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let d = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
        d.acos().to_degrees()
    }

    #[test]
    fn spiral_starts_at_pole() {
        assert_eq!(spiral_points(1)[0], [0.0, 1.0, 0.0]);
        assert_eq!(spiral_directions(64, 2000.0).unwrap().directions()[0], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn spiral_rejects_small_n() {
        assert!(matches!(spiral_directions(5, 2000.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn spiral_is_unit_hemisphere_monotone() {
        let d = spiral_directions(64, 2000.0).unwrap();
        for v in d.directions() {
            assert!((norm3(v) - 1.0).abs() <= 1e-12);
            assert!(v[1] >= 0.0);
        }
        assert!(d.directions().windows(2).all(|w| w[0][1] > w[1][1]));
    }

    #[test]
    fn spiral_min_separation_regression() {
        // brute force over all 2016 pairs
        let d = spiral_points(64);
        let mut min = f64::INFINITY;
        let mut pairs = 0;
        for i in 0..64 {
            for j in i + 1..64 {
                min = min.min(angle_deg(&d[i], &d[j]));
                pairs += 1;
            }
        }
        assert_eq!(pairs, 2016);
        assert!(min >= 10.0, "min separation {min}");
        assert!((min - 10.222_179_390_577_413).abs() < 1e-9, "min separation {min}");
    }

    #[test]
    fn spiral_is_deterministic() {
        assert_eq!(spiral_points(97), spiral_points(97));
    }

    #[test]
    fn factor_out_of_range() {
        let d = spiral_directions(64, 2000.0).unwrap();
        assert!(make_scheme(&d, 0).is_err());
        assert!(make_scheme(&d, 6).is_err());
    }

    #[test]
    fn acquisition_counts() {
        let d = spiral_directions(64, 2000.0).unwrap();
        let totals: Vec<_> = (1..=5)
            .map(|f| make_scheme(&d, f).unwrap().total_acquisitions())
            .collect();
        assert_eq!(totals, vec![320, 160, 107, 80, 64]);
    }

    #[test]
    fn masks_follow_round_robin() {
        let s5 = make_scheme_for(64, 5).unwrap();
        let m = scheme_mask(&s5, 2).unwrap();
        assert!(m.iter().all(|j| j % 5 == 2));
        assert_eq!(m.len(), 13);
        let s1 = make_scheme_for(64, 1).unwrap();
        for k in 0..5 {
            assert_eq!(scheme_mask(&s1, k).unwrap(), (0..64).collect::<Vec<_>>().as_slice());
        }
        let s2 = make_scheme_for(64, 2).unwrap();
        let m = scheme_mask(&s2, 1).unwrap();
        assert_eq!(m.len(), 32);
        assert!(m.iter().all(|j| j % 2 == 1));
        assert!(scheme_mask(&s2, 5).is_err());
    }

    #[test]
    fn schemes_cover_every_direction() {
        for n_q in [6, 7, 30, 64, 65] {
            for f in 1..=5 {
                let s = make_scheme_for(n_q, f).unwrap();
                s.validate(n_q).unwrap();
            }
        }
    }

    #[test]
    fn validate_catches_gaps() {
        let mut s = make_scheme_for(10, 5).unwrap();
        s.assignments[4].clear();
        assert!(matches!(s.validate(10), Err(Error::InvalidScheme(_))));
    }
}
