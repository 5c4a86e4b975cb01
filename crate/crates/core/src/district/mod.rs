//! District world model: blocks, schools, students, zonings, the
//! dissimilarity index and the feasibility predicates for zonings.

mod io;

pub use io::{read_district, read_zoning, write_district, write_zoning, ArtifactStamp};

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ScenarioTable;

macro_rules! id_type {
    ($name:ident, $repr:ty) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub $repr);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }

            #[inline]
            pub fn from_index(i: usize) -> Self {
                $name(i as $repr)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

id_type!(BlockId, u32);
id_type!(SchoolId, u16);
id_type!(StudentId, u32);

/// SES category of the lower-SES target group.
pub const LOWER_SES: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Race {
    Black,
    White,
    Asian,
    Native,
    Hispanic,
    PacificIslander,
    Multiple,
}

impl Race {
    pub const ALL: [Race; 7] = [
        Race::Black,
        Race::White,
        Race::Asian,
        Race::Native,
        Race::Hispanic,
        Race::PacificIslander,
        Race::Multiple,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Race::Black => "black",
            Race::White => "white",
            Race::Asian => "asian",
            Race::Native => "native",
            Race::Hispanic => "hispanic",
            Race::PacificIslander => "pacific-islander",
            Race::Multiple => "multiple",
        }
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Race {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Race::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown race tag {s:?}")))
    }
}

/// Axis-aligned polygonal cell of a block, in planar km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Cell {
    /// Closed ring, counter-clockwise.
    pub fn ring(&self) -> [[f64; 2]; 5] {
        let [x0, y0] = self.min;
        let [x1, y1] = self.max;
        [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: BlockId,
    pub centroid: [f64; 2],
    pub cell: Cell,
    pub neighbors: Vec<BlockId>,
    pub status_quo_school: SchoolId,
    /// Minutes to each school, indexed by school id.
    pub travel_time: Vec<f64>,
    pub resident_students: Vec<StudentId>,
    pub ses_index: f64,
}

/// GreatSchools-style ratings in `[1, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratings {
    pub overall: f64,
    pub test: f64,
    pub progress: f64,
    pub equity: f64,
}

impl Ratings {
    pub fn as_array(&self) -> [f64; 4] {
        [self.overall, self.test, self.progress, self.equity]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct School {
    pub id: SchoolId,
    pub campus_block: BlockId,
    pub is_magnet: bool,
    pub current_enrollment: u32,
    pub ratings: Ratings,
    pub choice_zones: Vec<u16>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub new_to_system: bool,
    pub has_sibling: bool,
    pub attended_same_school_as_sibling: bool,
    pub opted_out_before: bool,
    pub opted_out_to_magnet_before: bool,
    pub attended_multiple_schools: bool,
}

impl History {
    pub fn as_array(&self) -> [bool; 6] {
        [
            self.new_to_system,
            self.has_sibling,
            self.attended_same_school_as_sibling,
            self.opted_out_before,
            self.opted_out_to_magnet_before,
            self.attended_multiple_schools,
        ]
    }

    pub const NAMES: [&'static str; 6] = [
        "new_to_system",
        "has_sibling",
        "attended_same_school_as_sibling",
        "opted_out_before",
        "opted_out_to_magnet_before",
        "attended_multiple_schools",
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Student {
    pub id: StudentId,
    pub block: BlockId,
    /// 0 = lower, 1 = medium, 2 = higher.
    pub ses_category: u8,
    pub race: Race,
    pub grade: u8,
    pub actual_school: SchoolId,
    pub history: History,
}

/// Immutable district. Construct through [`District::new`], which checks
/// every structural invariant and derives the population constants.
#[derive(Debug, Clone, PartialEq)]
pub struct District {
    blocks: Vec<Block>,
    schools: Vec<School>,
    students: Vec<Student>,
    choice_zone_count: usize,
    lower_ses_total: usize,
    race_totals: [u32; 7],
}

impl District {
    /// Validates and assembles a district. `resident_students` on the blocks
    /// is rebuilt from the student list.
    pub fn new(
        mut blocks: Vec<Block>,
        schools: Vec<School>,
        students: Vec<Student>,
        choice_zone_count: usize,
    ) -> Result<Self> {
        let n_schools = schools.len();
        if n_schools == 0 {
            return Err(Error::Domain("district has no schools".into()));
        }
        if n_schools > u16::MAX as usize {
            return Err(Error::Domain("too many schools".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.id.index() != i {
                return Err(Error::Domain(format!("block at position {i} has id {}", b.id)));
            }
        }
        for (i, s) in schools.iter().enumerate() {
            if s.id.index() != i {
                return Err(Error::Domain(format!("school at position {i} has id {}", s.id)));
            }
        }
        for (i, s) in students.iter().enumerate() {
            if s.id.index() != i {
                return Err(Error::Domain(format!("student at position {i} has id {}", s.id)));
            }
        }

        let n_blocks = blocks.len();
        for b in &blocks {
            if b.travel_time.len() != n_schools {
                return Err(Error::Domain(format!(
                    "block {} has {} travel times for {} schools",
                    b.id,
                    b.travel_time.len(),
                    n_schools
                )));
            }
            if let Some(t) = b.travel_time.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
                return Err(Error::Domain(format!("block {} has travel time {t}", b.id)));
            }
            if b.status_quo_school.index() >= n_schools {
                return Err(Error::Domain(format!(
                    "block {} zoned to unknown school {}",
                    b.id, b.status_quo_school
                )));
            }
            for &nb in &b.neighbors {
                if nb.index() >= n_blocks {
                    return Err(Error::Domain(format!("block {} has unknown neighbor {nb}", b.id)));
                }
                if nb == b.id {
                    return Err(Error::Domain(format!("block {} is adjacent to itself", b.id)));
                }
                if !blocks[nb.index()].neighbors.contains(&b.id) {
                    return Err(Error::Domain(format!(
                        "adjacency {} -> {nb} is not symmetric",
                        b.id
                    )));
                }
            }
        }

        for s in &schools {
            if s.campus_block.index() >= n_blocks {
                return Err(Error::Domain(format!(
                    "school {} has unknown campus block {}",
                    s.id, s.campus_block
                )));
            }
            if blocks[s.campus_block.index()].status_quo_school != s.id {
                return Err(Error::Domain(format!(
                    "campus block {} of school {} is zoned elsewhere",
                    s.campus_block, s.id
                )));
            }
            if s.choice_zones.is_empty() {
                return Err(Error::Domain(format!("school {} has no choice zone", s.id)));
            }
            if let Some(z) = s.choice_zones.iter().find(|z| **z as usize >= choice_zone_count) {
                return Err(Error::Domain(format!(
                    "school {} references choice zone {z} of {choice_zone_count}",
                    s.id
                )));
            }
        }

        let mut race_totals = [0u32; 7];
        let mut lower = 0usize;
        for b in blocks.iter_mut() {
            b.resident_students.clear();
        }
        for st in &students {
            if st.block.index() >= n_blocks {
                return Err(Error::Domain(format!(
                    "student {} lives in unknown block {}",
                    st.id, st.block
                )));
            }
            if st.ses_category > 2 {
                return Err(Error::Domain(format!(
                    "student {} has SES category {}",
                    st.id, st.ses_category
                )));
            }
            if st.actual_school.index() >= n_schools {
                return Err(Error::Domain(format!(
                    "student {} attends unknown school {}",
                    st.id, st.actual_school
                )));
            }
            if st.ses_category == LOWER_SES {
                lower += 1;
            }
            race_totals[st.race.index()] += 1;
            blocks[st.block.index()].resident_students.push(st.id);
        }
        if lower == 0 || lower >= students.len() {
            return Err(Error::Domain(format!(
                "lower-SES total {lower} must lie strictly between 0 and N = {}",
                students.len()
            )));
        }

        let district = District {
            blocks,
            schools,
            students,
            choice_zone_count,
            lower_ses_total: lower,
            race_totals,
        };
        let sq = district.status_quo();
        let verdict = check_contiguity(&sq, &district);
        if !verdict.passed() {
            return Err(Error::Domain(format!(
                "status-quo zoning is not contiguous: {}",
                verdict
            )));
        }
        Ok(district)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn schools(&self) -> &[School] {
        &self.schools
    }

    pub fn students(&self) -> &[Student] {
        &self.students
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id.index()]
    }

    pub fn school(&self, id: SchoolId) -> &School {
        &self.schools[id.index()]
    }

    pub fn student(&self, id: StudentId) -> &Student {
        &self.students[id.index()]
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_schools(&self) -> usize {
        self.schools.len()
    }

    /// N.
    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    /// ḡ_total: number of lower-SES students.
    pub fn lower_ses_total(&self) -> usize {
        self.lower_ses_total
    }

    pub fn choice_zone_count(&self) -> usize {
        self.choice_zone_count
    }

    pub fn race_total(&self, race: Race) -> u32 {
        self.race_totals[race.index()]
    }

    pub fn school_ids(&self) -> impl Iterator<Item = SchoolId> + '_ {
        (0..self.schools.len()).map(SchoolId::from_index)
    }

    pub fn travel_time(&self, block: BlockId, school: SchoolId) -> f64 {
        self.blocks[block.index()].travel_time[school.index()]
    }

    /// Straight-line distance (km) from a block centroid to a school's campus centroid.
    pub fn distance_km(&self, block: BlockId, school: SchoolId) -> f64 {
        let a = self.blocks[block.index()].centroid;
        let b = self.blocks[self.schools[school.index()].campus_block.index()].centroid;
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    pub fn status_quo(&self) -> Zoning {
        Zoning::new(self.blocks.iter().map(|b| b.status_quo_school).collect())
    }

    /// s̄_n^zone.
    pub fn status_quo_school_of(&self, student: &Student) -> SchoolId {
        self.blocks[student.block.index()].status_quo_school
    }

    /// The label vector y.
    pub fn actual_attendance(&self) -> Vec<SchoolId> {
        self.students.iter().map(|s| s.actual_school).collect()
    }

    pub(crate) fn with_students(&self, students: Vec<Student>, enrollment: Vec<u32>) -> Result<Self> {
        let mut schools = self.schools.clone();
        for (s, e) in schools.iter_mut().zip(enrollment) {
            s.current_enrollment = e;
        }
        District::new(
            self.blocks.clone(),
            schools,
            students,
            self.choice_zone_count,
        )
    }
}

/// One school per block, indexed by block id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Zoning {
    assignment: Vec<SchoolId>,
}

impl Zoning {
    pub fn new(assignment: Vec<SchoolId>) -> Self {
        Zoning { assignment }
    }

    pub fn school_of(&self, block: BlockId) -> SchoolId {
        self.assignment[block.index()]
    }

    pub fn set(&mut self, block: BlockId, school: SchoolId) {
        self.assignment[block.index()] = school;
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn as_slice(&self) -> &[SchoolId] {
        &self.assignment
    }

    /// Blocks whose school differs between the two zonings.
    pub fn rezoned_blocks<'a>(&'a self, other: &'a Zoning) -> impl Iterator<Item = BlockId> + 'a {
        self.assignment
            .iter()
            .zip(&other.assignment)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| BlockId::from_index(i))
    }

    /// Zoned school of every student.
    pub fn zoned_schools(&self, district: &District) -> Vec<SchoolId> {
        district
            .students()
            .iter()
            .map(|s| self.assignment[s.block.index()])
            .collect()
    }

    fn check_total(&self, district: &District) -> Option<Violation> {
        if self.assignment.len() != district.n_blocks() {
            return Some(Violation::Assignment(format!(
                "zoning covers {} blocks, district has {}",
                self.assignment.len(),
                district.n_blocks()
            )));
        }
        self.assignment
            .iter()
            .enumerate()
            .find(|(_, s)| s.index() >= district.n_schools())
            .map(|(b, s)| Violation::Assignment(format!("block {b} assigned unknown school {s}")))
    }
}

/// Per-school totals and lower-SES counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchoolCounts {
    pub total: Vec<u32>,
    pub lower_ses: Vec<u32>,
}

impl SchoolCounts {
    pub fn zeros(n_schools: usize) -> Self {
        SchoolCounts {
            total: vec![0; n_schools],
            lower_ses: vec![0; n_schools],
        }
    }
}

/// Dissimilarity index of the lower-SES group:
/// `½ Σ_s | g_s/ḡ_total − (c_s − g_s)/(N − ḡ_total) |`.
pub fn dissimilarity(counts: &SchoolCounts, g_total: usize, n_total: usize) -> Result<f64> {
    if g_total == 0 || g_total >= n_total {
        return Err(Error::Domain(format!(
            "dissimilarity needs 0 < g_total < n_total, got g_total = {g_total}, n_total = {n_total}"
        )));
    }
    if counts.total.len() != counts.lower_ses.len() {
        return Err(Error::Domain("count vectors differ in length".into()));
    }
    if let Some(s) = (0..counts.total.len()).find(|&s| counts.lower_ses[s] > counts.total[s]) {
        return Err(Error::Domain(format!(
            "school {s} has more lower-SES students than students"
        )));
    }
    Ok(dissimilarity_unchecked(
        &counts.total,
        &counts.lower_ses,
        g_total as f64,
        (n_total - g_total) as f64,
    ))
}

#[inline]
pub(crate) fn dissimilarity_unchecked(total: &[u32], lower: &[u32], g: f64, rest: f64) -> f64 {
    let sum: f64 = total
        .iter()
        .zip(lower)
        .map(|(&c, &l)| (l as f64 / g - (c - l) as f64 / rest).abs())
        .sum();
    0.5 * sum
}

/// School counts when student `n` attends `attended[n]`.
pub fn counts_under_attendance(district: &District, attended: &[SchoolId]) -> Result<SchoolCounts> {
    if attended.len() != district.n_students() {
        return Err(Error::Domain(format!(
            "attendance covers {} students, district has {}",
            attended.len(),
            district.n_students()
        )));
    }
    let mut counts = SchoolCounts::zeros(district.n_schools());
    for (st, &s) in district.students().iter().zip(attended) {
        if s.index() >= district.n_schools() {
            return Err(Error::Domain(format!(
                "student {} attends unknown school {s}",
                st.id
            )));
        }
        counts.total[s.index()] += 1;
        if st.ses_category == LOWER_SES {
            counts.lower_ses[s.index()] += 1;
        }
    }
    Ok(counts)
}

/// α (population change ratio) and τ (travel-time increment ratio).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityParams {
    pub alpha: f64,
    pub tau: f64,
}

/// α is compared in units of 10⁻⁶ so population bounds are integers.
pub(crate) const ALPHA_SCALE: u64 = 1_000_000;

/// Relative slack on the inclusive travel-time bound.
pub const TRAVEL_TIME_RTOL: f64 = 1e-9;

impl FeasibilityParams {
    pub fn new(alpha: f64, tau: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("tau", tau)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(FeasibilityParams { alpha, tau })
    }

    pub(crate) fn alpha_micro(&self) -> u64 {
        (self.alpha * ALPHA_SCALE as f64).round() as u64
    }

    /// Inclusive integer bounds `⌈c̄(1−α)⌉ ..= ⌊c̄(1+α)⌋`.
    pub fn population_bounds(&self, current: u32) -> (u32, u32) {
        population_bounds_micro(current, self.alpha_micro())
    }

    pub fn travel_time_limit(&self, status_quo_time: f64) -> f64 {
        (1.0 + self.tau) * status_quo_time * (1.0 + TRAVEL_TIME_RTOL)
    }
}

pub(crate) fn population_bounds_micro(current: u32, alpha_micro: u64) -> (u32, u32) {
    let c = current as u128;
    let scale = ALPHA_SCALE as u128;
    let a = alpha_micro as u128;
    let lo_num = c * scale.saturating_sub(a);
    let lo = lo_num.div_ceil(scale);
    let hi = c * (scale + a) / scale;
    (lo as u32, hi.min(u32::MAX as u128) as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Assignment(String),
    Population {
        school: SchoolId,
        count: u32,
        lower: u32,
        upper: u32,
        scenario: Option<usize>,
    },
    TravelTime {
        block: BlockId,
        school: SchoolId,
        minutes: f64,
        limit: f64,
    },
    MissingCampus {
        school: SchoolId,
        campus: BlockId,
    },
    Disconnected {
        school: SchoolId,
        reached: usize,
        zone_size: usize,
    },
    /// The scenario table holds no choices for this block/school pair.
    NotInTable {
        block: BlockId,
        school: SchoolId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Assignment(m) => write!(f, "assignment: {m}"),
            Violation::Population {
                school,
                count,
                lower,
                upper,
                scenario,
            } => {
                write!(f, "population: school {school} has {count} students, bounds [{lower}, {upper}]")?;
                if let Some(i) = scenario {
                    write!(f, " in scenario {i}")?;
                }
                Ok(())
            }
            Violation::TravelTime {
                block,
                school,
                minutes,
                limit,
            } => write!(
                f,
                "travel time: block {block} to school {school} takes {minutes:.3} min, limit {limit:.3}"
            ),
            Violation::MissingCampus { school, campus } => {
                write!(f, "contiguity: school {school} does not contain its campus block {campus}")
            }
            Violation::Disconnected {
                school,
                reached,
                zone_size,
            } => write!(
                f,
                "contiguity: school {school} reaches {reached} of its {zone_size} blocks from campus"
            ),
            Violation::NotInTable { block, school } => write!(
                f,
                "scenario table has no entries for block {block} zoned to school {school}"
            ),
        }
    }
}

/// Outcome of a feasibility check; passes iff there are no violations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn extend(&mut self, other: Verdict) {
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("feasible");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn check_population_bounds(
    counts: &SchoolCounts,
    district: &District,
    params: &FeasibilityParams,
) -> Verdict {
    population_verdict(counts, district, params.alpha_micro(), None)
}

pub(crate) fn population_verdict(
    counts: &SchoolCounts,
    district: &District,
    alpha_micro: u64,
    scenario: Option<usize>,
) -> Verdict {
    let violations = district
        .schools()
        .iter()
        .zip(&counts.total)
        .filter_map(|(school, &count)| {
            let (lower, upper) = population_bounds_micro(school.current_enrollment, alpha_micro);
            (count < lower || count > upper).then_some(Violation::Population {
                school: school.id,
                count,
                lower,
                upper,
                scenario,
            })
        })
        .collect();
    Verdict { violations }
}

pub fn check_travel_time(zoning: &Zoning, district: &District, params: &FeasibilityParams) -> Verdict {
    let violations = district
        .blocks()
        .iter()
        .filter_map(|b| {
            let s = zoning.school_of(b.id);
            let minutes = b.travel_time[s.index()];
            let limit = params.travel_time_limit(b.travel_time[b.status_quo_school.index()]);
            (minutes > limit).then_some(Violation::TravelTime {
                block: b.id,
                school: s,
                minutes,
                limit,
            })
        })
        .collect();
    Verdict { violations }
}

/// Every school's zone must contain its campus block and be connected in the
/// block adjacency graph.
pub fn check_contiguity(zoning: &Zoning, district: &District) -> Verdict {
    let n_blocks = district.n_blocks();
    let mut zone_size = vec![0usize; district.n_schools()];
    for b in 0..n_blocks {
        zone_size[zoning.assignment[b].index()] += 1;
    }
    let mut seen = vec![false; n_blocks];
    let mut queue = VecDeque::new();
    let mut violations = Vec::new();
    for school in district.schools() {
        let campus = school.campus_block;
        if zoning.school_of(campus) != school.id {
            violations.push(Violation::MissingCampus {
                school: school.id,
                campus,
            });
            continue;
        }
        let reached = flood_zone(zoning, district, campus, None, &mut seen, &mut queue);
        let size = zone_size[school.id.index()];
        if reached != size {
            violations.push(Violation::Disconnected {
                school: school.id,
                reached,
                zone_size: size,
            });
        }
    }
    Verdict { violations }
}

/// Counts blocks reachable from `start` inside `start`'s zone, optionally
/// treating `removed` as absent. `seen` must be all-false on entry and is
/// restored before returning.
pub(crate) fn flood_zone(
    zoning: &Zoning,
    district: &District,
    start: BlockId,
    removed: Option<BlockId>,
    seen: &mut [bool],
    queue: &mut VecDeque<BlockId>,
) -> usize {
    let school = zoning.school_of(start);
    let mut visited = Vec::new();
    queue.clear();
    seen[start.index()] = true;
    queue.push_back(start);
    visited.push(start);
    while let Some(b) = queue.pop_front() {
        for &nb in &district.block(b).neighbors {
            if !seen[nb.index()] && Some(nb) != removed && zoning.school_of(nb) == school {
                seen[nb.index()] = true;
                queue.push_back(nb);
                visited.push(nb);
            }
        }
    }
    for b in &visited {
        seen[b.index()] = false;
    }
    visited.len()
}

/// Membership in ℤ: one school per block, travel-time bound, contiguity, and
/// population bounds under every scenario of `scenarios`.
pub fn is_feasible(
    zoning: &Zoning,
    district: &District,
    params: &FeasibilityParams,
    scenarios: &ScenarioTable,
) -> Verdict {
    if let Some(v) = zoning.check_total(district) {
        return Verdict { violations: vec![v] };
    }
    let mut verdict = check_travel_time(zoning, district, params);
    verdict.extend(check_contiguity(zoning, district));
    let missing: Vec<Violation> = district
        .blocks()
        .iter()
        .filter(|b| !scenarios.allows(b.id, zoning.school_of(b.id)))
        .map(|b| Violation::NotInTable {
            block: b.id,
            school: zoning.school_of(b.id),
        })
        .collect();
    if !missing.is_empty() {
        verdict.violations.extend(missing);
        return verdict;
    }
    let alpha = params.alpha_micro();
    for i in 0..scenarios.n_scenarios() {
        let attended = scenarios.realize(zoning, i).attended;
        let counts = counts_under_attendance(district, &attended)
            .expect("scenario table entries are valid schools");
        verdict.extend(population_verdict(&counts, district, alpha, Some(i)));
    }
    verdict
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    fn counts(pairs: &[(u32, u32)]) -> SchoolCounts {
        SchoolCounts {
            lower_ses: pairs.iter().map(|p| p.0).collect(),
            total: pairs.iter().map(|p| p.1).collect(),
        }
    }

    #[test]
    fn dissimilarity_hand_values() {
        // 40 of 200 lower-SES, each school at the district ratio of 1/5
        assert_eq!(dissimilarity(&counts(&[(20, 100), (20, 100)]), 40, 200).unwrap(), 0.0);
        assert_eq!(dissimilarity(&counts(&[(40, 40), (0, 160)]), 40, 200).unwrap(), 1.0);
        // ½(|30/40 − 70/160| + |10/40 − 90/160|) = ½(0.3125 + 0.3125)
        let d = dissimilarity(&counts(&[(30, 100), (10, 100)]), 40, 200).unwrap();
        assert!((d - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn dissimilarity_rejects_degenerate_group() {
        assert!(matches!(
            dissimilarity(&counts(&[(0, 10)]), 0, 10),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            dissimilarity(&counts(&[(10, 10)]), 10, 10),
            Err(Error::Domain(_))
        ));
    }

    fn two_school_line() -> District {
        // 0 - 1 - 2 - 3, school 0 on block 0, school 1 on block 3
        hand_district(
            &[
                (0, vec![2.0, 10.0]),
                (0, vec![5.0, 8.0]),
                (1, vec![8.0, 5.0]),
                (1, vec![10.0, 2.0]),
            ],
            &[(0, 1), (1, 2), (2, 3)],
            &[0, 3],
            &[false, false],
            &[(0, 0, 0), (1, 0, 0), (1, 1, 1), (2, 2, 1), (3, 1, 1)],
        )
    }

    #[test]
    fn counts_match_hand_tally() {
        let d = two_school_line();
        let attended = [SchoolId(0), SchoolId(1), SchoolId(0), SchoolId(1), SchoolId(1)];
        let c = counts_under_attendance(&d, &attended).unwrap();
        assert_eq!(c.total, vec![2, 3]);
        assert_eq!(c.lower_ses, vec![1, 1]);

        let actual = counts_under_attendance(&d, &d.actual_attendance()).unwrap();
        assert_eq!(actual.total, vec![2, 3]);
        assert_eq!(actual.lower_ses, vec![2, 0]);

        let bad = [SchoolId(0), SchoolId(9), SchoolId(0), SchoolId(1), SchoolId(1)];
        assert!(counts_under_attendance(&d, &bad).is_err());
    }

    #[test]
    fn population_bounds_are_inclusive_and_exact() {
        let p = FeasibilityParams::new(0.15, 0.5).unwrap();
        assert_eq!(p.population_bounds(100), (85, 115));
        let p0 = FeasibilityParams::new(0.0, 0.0).unwrap();
        assert_eq!(p0.population_bounds(37), (37, 37));
        assert_eq!(FeasibilityParams::new(1.0, 0.0).unwrap().population_bounds(10), (0, 20));

        let d = two_school_line();
        let params = FeasibilityParams::new(0.0, 0.0).unwrap();
        let current = SchoolCounts {
            total: d.schools().iter().map(|s| s.current_enrollment).collect(),
            lower_ses: vec![0, 0],
        };
        assert!(check_population_bounds(&current, &d, &params).passed());
        let shifted = SchoolCounts {
            total: vec![3, 2],
            lower_ses: vec![0, 0],
        };
        let v = check_population_bounds(&shifted, &d, &params);
        assert_eq!(v.violations.len(), 2);
    }

    #[test]
    fn feasibility_params_validate_range() {
        assert!(FeasibilityParams::new(1.2, 0.1).is_err());
        assert!(FeasibilityParams::new(0.1, -0.1).is_err());
    }

    #[test]
    fn travel_time_bound() {
        let d = hand_district(
            &[(0, vec![1.0, 20.0]), (0, vec![10.0, 15.0]), (1, vec![20.0, 1.0])],
            &[(0, 1), (1, 2)],
            &[0, 2],
            &[false, false],
            &[(0, 0, 0), (1, 1, 0), (2, 2, 1)],
        );
        let p = FeasibilityParams::new(0.15, 0.5).unwrap();
        assert!(check_travel_time(&d.status_quo(), &d, &p).passed());
        assert!(check_travel_time(&z(&[0, 1, 1]), &d, &p).passed());

        let d2 = hand_district(
            &[(0, vec![1.0, 20.0]), (0, vec![10.0, 15.1]), (1, vec![20.0, 1.0])],
            &[(0, 1), (1, 2)],
            &[0, 2],
            &[false, false],
            &[(0, 0, 0), (1, 1, 0), (2, 2, 1)],
        );
        let v = check_travel_time(&z(&[0, 1, 1]), &d2, &p);
        assert_eq!(v.violations.len(), 1);
        assert!(matches!(v.violations[0], Violation::TravelTime { block: BlockId(1), .. }));
    }

    #[test]
    fn contiguity_on_a_path() {
        // A-B-C-D with campuses at A (s0) and B (s1)
        let d = hand_district(
            &[
                (0, vec![1.0, 2.0]),
                (1, vec![2.0, 1.0]),
                (1, vec![3.0, 2.0]),
                (1, vec![4.0, 3.0]),
            ],
            &[(0, 1), (1, 2), (2, 3)],
            &[0, 1],
            &[false, false],
            &[(0, 0, 0), (3, 1, 1)],
        );
        assert!(check_contiguity(&d.status_quo(), &d).passed());
        let v = check_contiguity(&z(&[0, 1, 0, 1]), &d);
        let failing: Vec<SchoolId> = v
            .violations
            .iter()
            .map(|v| match v {
                Violation::Disconnected { school, .. } => *school,
                other => panic!("unexpected {other}"),
            })
            .collect();
        assert_eq!(failing, vec![SchoolId(0), SchoolId(1)]);

        let missing = check_contiguity(&z(&[1, 1, 1, 1]), &d);
        assert!(matches!(
            missing.violations[0],
            Violation::MissingCampus { school: SchoolId(0), .. }
        ));
    }

    #[test]
    fn single_school_district_is_contiguous() {
        let d = hand_district(
            &[(0, vec![1.0]), (0, vec![2.0]), (0, vec![3.0])],
            &[(0, 1), (1, 2)],
            &[1],
            &[false],
            &[(0, 0, 0), (2, 1, 0)],
        );
        assert!(check_contiguity(&d.status_quo(), &d).passed());
    }

    #[test]
    fn district_rejects_broken_invariants() {
        let blocks = vec![Block {
            id: BlockId(0),
            centroid: [0.0, 0.0],
            cell: Cell {
                min: [0.0, 0.0],
                max: [1.0, 1.0],
            },
            neighbors: vec![BlockId(0)],
            status_quo_school: SchoolId(0),
            travel_time: vec![1.0],
            resident_students: vec![],
            ses_index: 0.0,
        }];
        let schools = vec![School {
            id: SchoolId(0),
            campus_block: BlockId(0),
            is_magnet: false,
            current_enrollment: 0,
            ratings: Ratings {
                overall: 1.0,
                test: 1.0,
                progress: 1.0,
                equity: 1.0,
            },
            choice_zones: vec![0],
        }];
        let err = District::new(blocks, schools, vec![], 1).unwrap_err();
        assert!(err.to_string().contains("adjacent to itself"));
    }
}
