//! Student context features.
//!
//! The static part depends only on the student, their block and the school
//! set. The dynamic part depends on the candidate zoned school and is
//! rebuilt whenever that school changes. Nothing here looks at the
//! student's actual school.

use crate::district::{District, History, Race, SchoolId, Student};

/// A feature vector with the static features first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub static_len: usize,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn static_part(&self) -> &[f64] {
        &self.values[..self.static_len]
    }

    pub fn dynamic_part(&self) -> &[f64] {
        &self.values[self.static_len..]
    }
}

const RATING_KINDS: [&str; 4] = ["overall", "test", "progress", "equity"];

/// Column names in the order produced by [`featurize`].
pub fn feature_names(district: &District) -> Vec<String> {
    let schools = district.n_schools();
    let mut names = vec!["ses_level".to_string(), "grade".to_string()];
    names.extend(Race::ALL.iter().map(|r| format!("race_{r}")));
    names.push("block_students".into());
    names.push("block_students_share".into());
    names.extend(Race::ALL.iter().map(|r| format!("block_race_count_{r}")));
    names.extend(Race::ALL.iter().map(|r| format!("block_race_share_{r}")));
    names.extend((0..schools).map(|s| format!("travel_time_{s}")));
    names.extend((0..schools).map(|s| format!("travel_distance_{s}")));
    names.extend((0..schools).map(|s| format!("is_magnet_{s}")));
    names.extend(History::NAMES.iter().map(|h| h.to_string()));
    names.extend((0..schools).map(|s| format!("zoned_{s}")));
    names.extend((0..district.choice_zone_count()).map(|o| format!("zoned_in_choice_zone_{o}")));
    names.push("zoned_is_magnet".into());
    names.extend((0..schools).map(|s| format!("same_choice_zone_{s}")));
    for kind in RATING_KINDS {
        names.extend((0..schools).map(|s| format!("rating_ratio_{kind}_{s}")));
    }
    names
}

fn static_len(district: &District) -> usize {
    2 + 7 + 2 + 14 + 3 * district.n_schools() + 6
}

pub fn featurize(student: &Student, zoned: SchoolId, district: &District) -> FeatureVector {
    let schools = district.schools();
    let block = district.block(student.block);
    let mut v = Vec::with_capacity(feature_names_len(district));

    v.push(student.ses_category as f64);
    v.push(student.grade as f64);
    v.extend(Race::ALL.iter().map(|&r| f64::from(student.race == r)));

    let residents = block.resident_students.len();
    v.push(residents as f64);
    v.push(residents as f64 / district.n_students() as f64);
    let mut race_counts = [0u32; 7];
    for &id in &block.resident_students {
        race_counts[district.student(id).race.index()] += 1;
    }
    v.extend(race_counts.iter().map(|&c| c as f64));
    v.extend(Race::ALL.iter().map(|&r| {
        let total = district.race_total(r);
        if total == 0 {
            0.0
        } else {
            race_counts[r.index()] as f64 / total as f64
        }
    }));

    v.extend(block.travel_time.iter().copied());
    v.extend(district.school_ids().map(|s| district.distance_km(student.block, s)));
    v.extend(schools.iter().map(|s| f64::from(s.is_magnet)));
    v.extend(student.history.as_array().map(f64::from));

    let static_len = v.len();
    debug_assert_eq!(static_len, self::static_len(district));

    let zoned_school = district.school(zoned);
    v.extend(district.school_ids().map(|s| f64::from(s == zoned)));
    v.extend((0..district.choice_zone_count()).map(|o| f64::from(zoned_school.choice_zones.contains(&(o as u16)))));
    v.push(f64::from(zoned_school.is_magnet));
    v.extend(schools.iter().map(|s| {
        f64::from(
            s.choice_zones
                .iter()
                .any(|z| zoned_school.choice_zones.contains(z)),
        )
    }));
    let zoned_ratings = zoned_school.ratings.as_array();
    for k in 0..RATING_KINDS.len() {
        v.extend(schools.iter().map(|s| s.ratings.as_array()[k] / zoned_ratings[k]));
    }

    FeatureVector { values: v, static_len }
}

fn feature_names_len(district: &District) -> usize {
    let s = district.n_schools();
    static_len(district) + s + district.choice_zone_count() + 1 + s + 4 * s
}
