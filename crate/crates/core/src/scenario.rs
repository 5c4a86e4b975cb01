//! Sample-average-approximation scenario tables.
//!
//! A table stores `A_n^i(s)`: the school student `n` attends in scenario `i`
//! when zoned to school `s`. One uniform variate per (student, scenario) is
//! shared across every candidate zoned school, and each choice is the
//! inverse CDF of the model's distribution (schools in id order) at that
//! variate. The objective of a zoning is therefore a deterministic function
//! of the zoning once the table is fixed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::choice::{nearest_schools, ChoiceModel};
use crate::district::{
    counts_under_attendance, dissimilarity, BlockId, District, SchoolCounts, SchoolId, Zoning,
    LOWER_SES,
};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RWCSCN\0\x01";
const NO_SLOT: u16 = u16::MAX;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScenarioOptions {
    /// Store choices only for each block's nearest `r` schools (plus its
    /// status-quo school). Zonings outside that set cannot be evaluated.
    pub candidate_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    n_scenarios: usize,
    n_schools: usize,
    seed: u64,
    model_fingerprint: String,
    district_hash: String,
    student_block: Vec<BlockId>,
    /// `slot[b * S + s]`: position of school `s` among block `b`'s candidates.
    slot: Vec<u16>,
    student_offset: Vec<u32>,
    row_len: usize,
    entries: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttendanceRealization {
    pub attended: Vec<SchoolId>,
    /// Students attending their zoned school.
    pub follow_count: usize,
}

/// Mean dissimilarity over scenarios with the per-scenario values.
#[derive(Debug, Clone, PartialEq)]
pub struct SaaObjective {
    pub mean: f64,
    pub per_scenario: Vec<f64>,
    /// Sample standard deviation over scenarios divided by √I (0 when I = 1).
    pub std_error: f64,
}

impl SaaObjective {
    pub(crate) fn from_values(per_scenario: Vec<f64>) -> Self {
        let (mean, std_error) = mean_and_std_error(&per_scenario);
        SaaObjective {
            mean,
            per_scenario,
            std_error,
        }
    }
}

pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn candidate_layout(
    district: &District,
    options: &ScenarioOptions,
) -> (Vec<Vec<SchoolId>>, Vec<u16>) {
    let n_schools = district.n_schools();
    let mut candidates = Vec::with_capacity(district.n_blocks());
    let mut slot = vec![NO_SLOT; district.n_blocks() * n_schools];
    for b in district.blocks() {
        let mut c: Vec<SchoolId> = match options.candidate_cap {
            None => district.school_ids().collect(),
            Some(r) => {
                let mut c = nearest_schools(district, b.id, r.min(n_schools));
                if !c.contains(&b.status_quo_school) {
                    c.push(b.status_quo_school);
                }
                c
            }
        };
        c.sort();
        for (k, s) in c.iter().enumerate() {
            slot[b.id.index() * n_schools + s.index()] = k as u16;
        }
        candidates.push(c);
    }
    (candidates, slot)
}

/// Samples `n_scenarios` scenarios of every student's choice under every
/// candidate zoned school.
pub fn sample_scenarios(
    model: &dyn ChoiceModel,
    district: &District,
    n_scenarios: usize,
    seed: u64,
) -> Result<ScenarioTable> {
    sample_scenarios_with(model, district, n_scenarios, seed, &ScenarioOptions::default())
}

pub fn sample_scenarios_with(
    model: &dyn ChoiceModel,
    district: &District,
    n_scenarios: usize,
    seed: u64,
    options: &ScenarioOptions,
) -> Result<ScenarioTable> {
    if n_scenarios == 0 {
        return Err(Error::Domain("scenario count must be at least 1".into()));
    }
    let n_schools = district.n_schools();
    let (candidates, slot) = candidate_layout(district, options);

    let mut student_offset = Vec::with_capacity(district.n_students());
    let mut row_len = 0usize;
    for st in district.students() {
        student_offset.push(row_len as u32);
        row_len += candidates[st.block.index()].len();
    }

    // Cumulative distributions per (student, candidate), schools in id order.
    let cdfs: Vec<Vec<f64>> = district
        .students()
        .par_iter()
        .map(|st| -> Result<Vec<f64>> {
            let cands = &candidates[st.block.index()];
            let mut out = Vec::with_capacity(cands.len() * n_schools);
            for &s in cands {
                let dist = model.distribution(district, st, s)?;
                let mut acc = 0.0;
                out.extend(dist.probs().iter().map(|p| {
                    acc += p;
                    acc
                }));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<u16>> = (0..n_scenarios)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut row = Vec::with_capacity(row_len);
            for (st, cdf) in district.students().iter().zip(&cdfs) {
                let u: f64 = rng.random();
                for c in 0..candidates[st.block.index()].len() {
                    row.push(inverse_cdf(&cdf[c * n_schools..(c + 1) * n_schools], u) as u16);
                }
            }
            row
        })
        .collect();

    Ok(ScenarioTable {
        n_scenarios,
        n_schools,
        seed,
        model_fingerprint: model.fingerprint(),
        district_hash: district.fingerprint(),
        student_block: district.students().iter().map(|s| s.block).collect(),
        slot,
        student_offset,
        row_len,
        entries: rows.concat(),
    })
}

/// Smallest index `k` with `u < cdf[k]`; falls back to the last school with
/// positive mass when rounding leaves `cdf[last] <= u`.
pub(crate) fn inverse_cdf(cdf: &[f64], u: f64) -> usize {
    if let Some(k) = cdf.iter().position(|&c| u < c) {
        return k;
    }
    let mut prev = 0.0;
    let mut last = 0;
    for (k, &c) in cdf.iter().enumerate() {
        if c > prev {
            last = k;
        }
        prev = c;
    }
    last
}

impl ScenarioTable {
    /// Builds a dense table from explicit choices `choices[i][n][s]`.
    pub fn from_choices(
        district: &District,
        choices: &[Vec<Vec<SchoolId>>],
        seed: u64,
        model_fingerprint: impl Into<String>,
    ) -> Result<Self> {
        let n_schools = district.n_schools();
        let n_students = district.n_students();
        if choices.is_empty() {
            return Err(Error::Domain("scenario count must be at least 1".into()));
        }
        let mut entries = Vec::with_capacity(choices.len() * n_students * n_schools);
        for (i, scen) in choices.iter().enumerate() {
            if scen.len() != n_students {
                return Err(Error::Domain(format!(
                    "scenario {i} covers {} students, district has {n_students}",
                    scen.len()
                )));
            }
            for row in scen {
                if row.len() != n_schools || row.iter().any(|s| s.index() >= n_schools) {
                    return Err(Error::Domain(format!("scenario {i} has a malformed row")));
                }
                entries.extend(row.iter().map(|s| s.0));
            }
        }
        let (_, slot) = candidate_layout(district, &ScenarioOptions::default());
        Ok(ScenarioTable {
            n_scenarios: choices.len(),
            n_schools,
            seed,
            model_fingerprint: model_fingerprint.into(),
            district_hash: district.fingerprint(),
            student_block: district.students().iter().map(|s| s.block).collect(),
            slot,
            student_offset: (0..n_students).map(|n| (n * n_schools) as u32).collect(),
            row_len: n_students * n_schools,
            entries,
        })
    }

    pub fn n_scenarios(&self) -> usize {
        self.n_scenarios
    }

    pub fn n_students(&self) -> usize {
        self.student_block.len()
    }

    pub fn n_schools(&self) -> usize {
        self.n_schools
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.model_fingerprint
    }

    /// Fingerprint of the district the table was sampled for.
    pub fn district_hash(&self) -> &str {
        &self.district_hash
    }

    pub fn student_block(&self, student: usize) -> BlockId {
        self.student_block[student]
    }

    /// Whether the table holds choices for students of `block` zoned to `school`.
    pub fn allows(&self, block: BlockId, school: SchoolId) -> bool {
        school.index() < self.n_schools
            && self
                .slot
                .get(block.index() * self.n_schools + school.index())
                .is_some_and(|&k| k != NO_SLOT)
    }

    /// `A_n^i(s)`. Panics if `s` is not a candidate for the student's block.
    #[inline]
    pub fn choice(&self, scenario: usize, student: usize, zoned: SchoolId) -> SchoolId {
        let b = self.student_block[student].index();
        let k = self.slot[b * self.n_schools + zoned.index()];
        assert!(k != NO_SLOT, "school {zoned} is not a candidate for block {b}");
        let pos = scenario * self.row_len + self.student_offset[student] as usize + k as usize;
        SchoolId(self.entries[pos])
    }

    pub fn realize(&self, zoning: &Zoning, scenario: usize) -> AttendanceRealization {
        assert!(scenario < self.n_scenarios, "scenario {scenario} out of range");
        let mut follow_count = 0;
        let attended = (0..self.n_students())
            .map(|n| {
                let zoned = zoning.school_of(self.student_block[n]);
                let a = self.choice(scenario, n, zoned);
                if a == zoned {
                    follow_count += 1;
                }
                a
            })
            .collect();
        AttendanceRealization {
            attended,
            follow_count,
        }
    }

    fn check_compatible(&self, district: &District) -> Result<()> {
        if self.n_students() != district.n_students() || self.n_schools != district.n_schools() {
            return Err(Error::Mismatch(format!(
                "table is for {} students and {} schools, district has {} and {}",
                self.n_students(),
                self.n_schools,
                district.n_students(),
                district.n_schools()
            )));
        }
        Ok(())
    }

    /// Per-scenario school counts for a zoning.
    pub(crate) fn scenario_counts(&self, zoning: &Zoning, district: &District) -> Vec<SchoolCounts> {
        let lower: Vec<bool> = district
            .students()
            .iter()
            .map(|s| s.ses_category == LOWER_SES)
            .collect();
        (0..self.n_scenarios)
            .map(|i| {
                let mut c = SchoolCounts::zeros(self.n_schools);
                for (n, &is_lower) in lower.iter().enumerate() {
                    let a = self.choice(i, n, zoning.school_of(self.student_block[n])).index();
                    c.total[a] += 1;
                    if is_lower {
                        c.lower_ses[a] += 1;
                    }
                }
                c
            })
            .collect()
    }

    pub fn write(&self, path: &Path, config_hash: &str) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + self.entries.len() * 2);
        buf.extend_from_slice(MAGIC);
        for v in [self.n_scenarios, self.student_block.len(), self.n_schools, self.slot.len() / self.n_schools.max(1)] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for s in [&self.model_fingerprint, &self.district_hash, &config_hash.to_string()] {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        }
        for b in &self.student_block {
            buf.extend_from_slice(&b.0.to_le_bytes());
        }
        buf.extend(self.slot.iter().map(|&k| u8::from(k != NO_SLOT)));
        for e in &self.entries {
            buf.extend_from_slice(&e.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Reads a table file, returning it with the config hash in its header.
    pub fn read(path: &Path) -> Result<(Self, String)> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0, path };
        if cur.take(8)? != MAGIC {
            return Err(Error::parse(path, "not a scenario table (bad magic)"));
        }
        let n_scenarios = cur.u32()? as usize;
        let n_students = cur.u32()? as usize;
        let n_schools = cur.u32()? as usize;
        let n_blocks = cur.u32()? as usize;
        let seed = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        let model_fingerprint = cur.string()?;
        let district_hash = cur.string()?;
        let config_hash = cur.string()?;
        let student_block = (0..n_students)
            .map(|_| cur.u32().map(BlockId))
            .collect::<Result<Vec<_>>>()?;
        if student_block.iter().any(|b| b.index() >= n_blocks) {
            return Err(Error::parse(path, "student block out of range"));
        }
        let mask = cur.take(n_blocks * n_schools)?;
        let mut slot = vec![NO_SLOT; n_blocks * n_schools];
        let mut cand_len = vec![0usize; n_blocks];
        for b in 0..n_blocks {
            for s in 0..n_schools {
                if mask[b * n_schools + s] != 0 {
                    slot[b * n_schools + s] = cand_len[b] as u16;
                    cand_len[b] += 1;
                }
            }
        }
        let mut student_offset = Vec::with_capacity(n_students);
        let mut row_len = 0;
        for b in &student_block {
            student_offset.push(row_len as u32);
            row_len += cand_len[b.index()];
        }
        let raw = cur.take(n_scenarios * row_len * 2)?;
        let entries: Vec<u16> = raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        if entries.iter().any(|&e| e as usize >= n_schools) {
            return Err(Error::parse(path, "table entry names an unknown school"));
        }
        if cur.pos != bytes.len() {
            return Err(Error::parse(path, "trailing bytes after table"));
        }
        Ok((
            ScenarioTable {
                n_scenarios,
                n_schools,
                seed,
                model_fingerprint,
                district_hash,
                student_block,
                slot,
                student_offset,
                row_len,
                entries,
            },
            config_hash,
        ))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse(self.path, "truncated scenario table"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::parse(self.path, "bad utf-8 in header"))
    }
}

/// `attended(n) = A_n^i(zoning(b̄_n))`.
pub fn realize(zoning: &Zoning, table: &ScenarioTable, scenario: usize) -> AttendanceRealization {
    table.realize(zoning, scenario)
}

/// Mean over scenarios of the dissimilarity of the realized attendance.
pub fn saa_objective(zoning: &Zoning, table: &ScenarioTable, district: &District) -> Result<SaaObjective> {
    table.check_compatible(district)?;
    if let Some(b) = district
        .blocks()
        .iter()
        .find(|b| !table.allows(b.id, zoning.school_of(b.id)))
    {
        return Err(Error::Domain(format!(
            "scenario table has no choices for block {} zoned to school {}",
            b.id,
            zoning.school_of(b.id)
        )));
    }
    let values = (0..table.n_scenarios())
        .map(|i| {
            let attended = table.realize(zoning, i).attended;
            let counts = counts_under_attendance(district, &attended)?;
            dissimilarity(&counts, district.lower_ses_total(), district.n_students())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SaaObjective::from_values(values))
}
