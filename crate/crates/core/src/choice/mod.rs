//! School choice models: given a student and a candidate zoned school, a
//! probability distribution over all schools.

mod eval;
mod features;
mod logit;

pub use eval::{evaluate, ClassMetrics, EvalReport, FoldMetrics};
pub use features::{feature_names, featurize, FeatureVector};
pub use logit::{
    logit_predict, logit_train, Dataset, LogitChoiceModel, LogitConfig, LogitFit, LogitLearner,
    LogitModel, LogitObjective,
};

use crate::district::{BlockId, District, SchoolId, Student, StudentId};
use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Non-negative probabilities over schools (indexed by school id) summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceDistribution {
    probs: Vec<f64>,
}

impl ChoiceDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Model(format!("invalid probability {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Model(format!("probabilities sum to {sum}")));
        }
        Ok(ChoiceDistribution { probs })
    }

    pub fn point_mass(n_schools: usize, school: SchoolId) -> Self {
        let mut probs = vec![0.0; n_schools];
        probs[school.index()] = 1.0;
        ChoiceDistribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, school: SchoolId) -> f64 {
        self.probs[school.index()]
    }

    /// Most likely school; ties go to the lower id.
    pub fn argmax(&self) -> SchoolId {
        self.ranked()[0]
    }

    /// Schools by decreasing probability, ties by id.
    pub fn ranked(&self) -> Vec<SchoolId> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        order.into_iter().map(SchoolId::from_index).collect()
    }

    pub fn in_top_k(&self, school: SchoolId, k: usize) -> bool {
        self.ranked().iter().take(k).any(|&s| s == school)
    }
}

/// Maps (student context, candidate zoned school) to a choice distribution.
pub trait ChoiceModel: Send + Sync {
    fn name(&self) -> &str;

    /// Stable identifier of the model and its parameters.
    fn fingerprint(&self) -> String;

    fn distribution(
        &self,
        district: &District,
        student: &Student,
        zoned: SchoolId,
    ) -> Result<ChoiceDistribution>;

    /// Point-mass models have no meaningful top-k ranking.
    fn is_point_mass(&self) -> bool {
        false
    }
}

/// Something that can be fitted to a subset of students, used by
/// cross-validation. Fixed-rule models return themselves. Other learners
/// (for example gradient-boosted trees) plug in by implementing this trait.
pub trait ChoiceLearner: Send + Sync {
    fn name(&self) -> &str;

    fn fit(&self, district: &District, train: &[StudentId]) -> Result<Box<dyn ChoiceModel>>;
}

/// The `r` schools with the smallest travel time from `block`, ties by id.
pub fn nearest_schools(district: &District, block: BlockId, r: usize) -> Vec<SchoolId> {
    let tt = &district.block(block).travel_time;
    let mut order: Vec<usize> = (0..tt.len()).collect();
    order.sort_by(|&a, &b| tt[a].total_cmp(&tt[b]).then(a.cmp(&b)));
    order.truncate(r);
    order.into_iter().map(SchoolId::from_index).collect()
}

/// Every student attends the zoned school.
#[derive(Debug, Clone, Copy, Default)]
pub struct FollowModel;

impl ChoiceModel for FollowModel {
    fn name(&self) -> &str {
        "follow"
    }

    fn fingerprint(&self) -> String {
        "follow/v1".into()
    }

    fn distribution(&self, district: &District, _: &Student, zoned: SchoolId) -> Result<ChoiceDistribution> {
        if zoned.index() >= district.n_schools() {
            return Err(Error::Domain(format!("unknown zoned school {zoned}")));
        }
        Ok(ChoiceDistribution::point_mass(district.n_schools(), zoned))
    }

    fn is_point_mass(&self) -> bool {
        true
    }
}

impl ChoiceLearner for FollowModel {
    fn name(&self) -> &str {
        "follow"
    }

    fn fit(&self, _: &District, _: &[StudentId]) -> Result<Box<dyn ChoiceModel>> {
        Ok(Box::new(*self))
    }
}

/// Rule-based frequency model. Mass `zoned_mass` goes to the zoned school,
/// `magnet_mass` is split evenly over the magnets among the nearest
/// `magnet_radius` schools, and each of the nearest `near_radius` schools
/// gets `near_mass`. Cases are claimed in that order (a school keeps the
/// mass of the first case that names it) and the result is renormalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyModel {
    pub zoned_mass: f64,
    pub magnet_mass: f64,
    pub near_mass: f64,
    pub magnet_radius: usize,
    pub near_radius: usize,
}

impl Default for FrequencyModel {
    fn default() -> Self {
        FrequencyModel {
            zoned_mass: 0.65,
            magnet_mass: 0.2,
            near_mass: 0.03,
            magnet_radius: 12,
            near_radius: 5,
        }
    }
}

impl ChoiceModel for FrequencyModel {
    fn name(&self) -> &str {
        "frequency"
    }

    fn fingerprint(&self) -> String {
        format!(
            "frequency/v1:{}:{}:{}:{}:{}",
            self.zoned_mass, self.magnet_mass, self.near_mass, self.magnet_radius, self.near_radius
        )
    }

    fn distribution(
        &self,
        district: &District,
        student: &Student,
        zoned: SchoolId,
    ) -> Result<ChoiceDistribution> {
        let n = district.n_schools();
        if zoned.index() >= n {
            return Err(Error::Domain(format!("unknown zoned school {zoned}")));
        }
        let mut probs = vec![0.0; n];
        let mut claimed = vec![false; n];
        probs[zoned.index()] = self.zoned_mass;
        claimed[zoned.index()] = true;

        let magnets: Vec<SchoolId> = nearest_schools(district, student.block, self.magnet_radius.min(n))
            .into_iter()
            .filter(|s| district.school(*s).is_magnet)
            .collect();
        if magnets.is_empty() && self.magnet_mass > 0.0 {
            return Err(Error::Model(format!(
                "student {} has no magnet school among the nearest {}",
                student.id, self.magnet_radius
            )));
        }
        for &m in &magnets {
            if !claimed[m.index()] {
                probs[m.index()] = self.magnet_mass / magnets.len() as f64;
                claimed[m.index()] = true;
            }
        }
        for s in nearest_schools(district, student.block, self.near_radius.min(n)) {
            if !claimed[s.index()] {
                probs[s.index()] = self.near_mass;
                claimed[s.index()] = true;
            }
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::Model("frequency model assigns no mass".into()));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        ChoiceDistribution::new(probs)
    }
}

impl ChoiceLearner for FrequencyModel {
    fn name(&self) -> &str {
        "frequency"
    }

    fn fit(&self, _: &District, _: &[StudentId]) -> Result<Box<dyn ChoiceModel>> {
        Ok(Box::new(*self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::district::testutil::*;

    fn six_schools(magnets: &[bool]) -> District {
        // one block per school on a path; the student block 0 ranks schools 0..5 by time
        let times = |b: usize| (0..6).map(|s| 1.0 + (s as f64 - b as f64).abs()).collect::<Vec<_>>();
        let blocks: Vec<(u16, Vec<f64>)> = (0..6).map(|b| (b as u16, times(b))).collect();
        let edges: Vec<(u32, u32)> = (0..5).map(|b| (b, b + 1)).collect();
        hand_district(&blocks, &edges, &[0, 1, 2, 3, 4, 5], magnets, &[(0, 0, 0), (5, 1, 5)])
    }

    #[test]
    fn nearest_schools_sorted_with_id_ties() {
        let d = hand_district(
            &[(0, vec![5.0, 9.0, 7.0]), (1, vec![9.0, 1.0, 7.0]), (2, vec![7.0, 7.0, 1.0])],
            &[(0, 1), (1, 2)],
            &[0, 1, 2],
            &[false, false, false],
            &[(0, 0, 0), (1, 1, 1)],
        );
        assert_eq!(nearest_schools(&d, BlockId(0), 2), vec![SchoolId(0), SchoolId(2)]);
        assert_eq!(nearest_schools(&d, BlockId(2), 1), vec![SchoolId(2)]);
        // tie at 7.0 between schools 0 and 1 resolved by id
        assert_eq!(
            nearest_schools(&d, BlockId(2), 3),
            vec![SchoolId(2), SchoolId(0), SchoolId(1)]
        );
        assert_eq!(nearest_schools(&d, BlockId(1), 3).len(), 3);
    }

    #[test]
    fn follow_is_point_mass() {
        let d = six_schools(&[false, false, false, false, false, true]);
        let st = &d.students()[0];
        for s in d.school_ids() {
            let p = FollowModel.distribution(&d, st, s).unwrap();
            assert_eq!(p.prob(s), 1.0);
            assert_eq!(p.probs().iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn frequency_two_distant_magnets_split_mass() {
        // zoned 0; magnets 4 and 5 are both within the nearest twelve
        let d = six_schools(&[false, false, false, false, true, true]);
        let st = &d.students()[0];
        let m = FrequencyModel {
            near_mass: 0.0,
            ..FrequencyModel::default()
        };
        let p = m.distribution(&d, st, SchoolId(0)).unwrap();
        // before renormalization: 0.65, 0.10, 0.10 → total 0.85
        assert!((p.prob(SchoolId(4)) - 0.10 / 0.85).abs() < 1e-15);
        assert!((p.prob(SchoolId(5)) - 0.10 / 0.85).abs() < 1e-15);
        assert!((p.prob(SchoolId(0)) - 0.65 / 0.85).abs() < 1e-15);
    }

    #[test]
    fn frequency_overlap_priority_and_renormalization() {
        let d = six_schools(&[false, false, false, false, false, true]);
        let st = &d.students()[0];
        let p = FrequencyModel::default().distribution(&d, st, SchoolId(0)).unwrap();
        // zoned 0 (0.65) is also nearest-5 and keeps only its zoned mass;
        // magnet 5 gets 0.2; schools 1..=4 get 0.03 each; total 0.97
        let expect = [0.65, 0.03, 0.03, 0.03, 0.03, 0.2].map(|v| v / 0.97);
        for (got, want) in p.probs().iter().zip(expect) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // zoned magnet keeps the zoned mass only
        let q = FrequencyModel::default().distribution(&d, st, SchoolId(5)).unwrap();
        let expect = [0.03, 0.03, 0.03, 0.03, 0.03, 0.65].map(|v| v / 0.80);
        for (got, want) in q.probs().iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn frequency_requires_a_nearby_magnet() {
        let d = six_schools(&[false; 6]);
        let err = FrequencyModel::default()
            .distribution(&d, &d.students()[0], SchoolId(0))
            .unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn follow_is_degenerate_frequency() {
        let d = six_schools(&[false, false, true, false, false, true]);
        let degenerate = FrequencyModel {
            zoned_mass: 1.0,
            magnet_mass: 0.0,
            near_mass: 0.0,
            ..FrequencyModel::default()
        };
        for st in d.students() {
            for s in d.school_ids() {
                assert_eq!(
                    degenerate.distribution(&d, st, s).unwrap(),
                    FollowModel.distribution(&d, st, s).unwrap()
                );
            }
        }
    }

    #[test]
    fn distribution_ranking() {
        let p = ChoiceDistribution::new(vec![0.2, 0.5, 0.2, 0.1]).unwrap();
        assert_eq!(p.argmax(), SchoolId(1));
        assert_eq!(p.ranked(), vec![SchoolId(1), SchoolId(0), SchoolId(2), SchoolId(3)]);
        assert!(p.in_top_k(SchoolId(2), 3));
        assert!(!p.in_top_k(SchoolId(3), 3));
        assert!(ChoiceDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ChoiceDistribution::new(vec![-0.1, 1.1]).is_err());
    }
}
