//! Comparison tables, attendance matrices and GeoJSON maps.
//!
//! Every writer uses fixed decimal places so equal inputs give equal bytes.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::district::{District, Race, SchoolId, Zoning, LOWER_SES};
use crate::error::{Error, Result};
use crate::scenario::{mean_and_std_error, AttendanceRealization, ScenarioTable};

/// A student is a persistent opt-out when opting out in at least this share
/// of scenarios.
pub const PERSISTENT_OPT_OUT_SHARE: f64 = 0.5;

/// Counts of persistent opt-outs by group.
#[derive(Debug, Clone, PartialEq)]
pub struct OptOutDemographics {
    pub total: usize,
    pub by_race: [usize; 7],
    pub by_ses: [usize; 3],
}

impl OptOutDemographics {
    fn pct(count: usize, total: usize) -> f64 {
        if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        }
    }

    pub fn race_pct(&self, race: Race) -> f64 {
        Self::pct(self.by_race[race.index()], self.total)
    }

    pub fn ses_pct(&self, category: u8) -> f64 {
        Self::pct(self.by_ses[category as usize], self.total)
    }
}

/// Effect of moving from `old` to `new`, averaged over the scenarios of a table.
#[derive(Debug, Clone, PartialEq)]
pub struct RezoneReport {
    pub dissimilarity: f64,
    pub dissimilarity_se: f64,
    pub rezoned_lower_ses: usize,
    pub rezoned_lower_ses_pct: f64,
    pub rezoned_students: usize,
    pub rezoned_students_pct: f64,
    pub rezoned_blocks: usize,
    pub rezoned_blocks_pct: f64,
    pub avg_opt_outs: f64,
    pub opt_out_rate_pct: f64,
    /// Minutes to the attended school, averaged over students and scenarios.
    pub avg_travel_minutes: f64,
    /// Mean enrollment under `old` and under `new`, per school.
    pub old_enrollment: Vec<f64>,
    pub new_enrollment: Vec<f64>,
    pub persistent_opt_outs: OptOutDemographics,
    /// Mean opt-outs per block and their share of the block's residents.
    pub block_opt_outs: Vec<f64>,
    pub block_opt_out_rate: Vec<f64>,
}

impl RezoneReport {
    pub fn enrollment_change(&self) -> Vec<f64> {
        self.new_enrollment.iter().zip(&self.old_enrollment).map(|(n, o)| n - o).collect()
    }
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

fn check_zoning(zoning: &Zoning, district: &District, table: &ScenarioTable, what: &str) -> Result<()> {
    if zoning.len() != district.n_blocks() {
        return Err(Error::Mismatch(format!(
            "{what} zoning covers {} blocks, district has {}",
            zoning.len(),
            district.n_blocks()
        )));
    }
    if table.n_students() != district.n_students() || table.n_schools() != district.n_schools() {
        return Err(Error::Mismatch("scenario table does not match the district".into()));
    }
    if let Some(b) = district.blocks().iter().find(|b| !table.allows(b.id, zoning.school_of(b.id))) {
        return Err(Error::Domain(format!(
            "scenario table has no choices for block {} zoned to school {} in the {what} zoning",
            b.id,
            zoning.school_of(b.id)
        )));
    }
    Ok(())
}

pub fn rezone_report(old: &Zoning, new: &Zoning, table: &ScenarioTable, district: &District) -> Result<RezoneReport> {
    check_zoning(old, district, table, "old")?;
    check_zoning(new, district, table, "new")?;
    let n_students = district.n_students();
    let n_schools = district.n_schools();
    let n_scen = table.n_scenarios();
    let g_total = district.lower_ses_total();

    let rezoned_block: Vec<bool> = district.blocks().iter().map(|b| old.school_of(b.id) != new.school_of(b.id)).collect();
    let rezoned_students: Vec<&crate::district::Student> =
        district.students().iter().filter(|s| rezoned_block[s.block.index()]).collect();
    let rezoned_lower = rezoned_students.iter().filter(|s| s.ses_category == LOWER_SES).count();
    let rezoned_blocks = rezoned_block.iter().filter(|&&r| r).count();

    let mut d_values = Vec::with_capacity(n_scen);
    let mut opt_outs_total = 0usize;
    let mut travel_total = 0.0;
    let mut old_enrollment = vec![0.0; n_schools];
    let mut new_enrollment = vec![0.0; n_schools];
    let mut opt_out_times = vec![0u32; n_students];
    let mut block_opt_outs = vec![0.0; district.n_blocks()];
    for i in 0..n_scen {
        let before = table.realize(old, i);
        let after = table.realize(new, i);
        for a in &before.attended {
            old_enrollment[a.index()] += 1.0;
        }
        for a in &after.attended {
            new_enrollment[a.index()] += 1.0;
        }
        let counts = crate::district::counts_under_attendance(district, &after.attended)?;
        d_values.push(crate::district::dissimilarity(&counts, g_total, n_students)?);
        opt_outs_total += n_students - after.follow_count;
        for (n, st) in district.students().iter().enumerate() {
            let a = after.attended[n];
            travel_total += district.travel_time(st.block, a);
            if a != new.school_of(st.block) {
                opt_out_times[n] += 1;
                block_opt_outs[st.block.index()] += 1.0;
            }
        }
    }
    let scen = n_scen as f64;
    old_enrollment.iter_mut().for_each(|v| *v /= scen);
    new_enrollment.iter_mut().for_each(|v| *v /= scen);
    block_opt_outs.iter_mut().for_each(|v| *v /= scen);
    let block_opt_out_rate = district
        .blocks()
        .iter()
        .zip(&block_opt_outs)
        .map(|(b, &o)| {
            let r = b.resident_students.len();
            if r == 0 {
                0.0
            } else {
                o / r as f64
            }
        })
        .collect();

    let mut persistent = OptOutDemographics {
        total: 0,
        by_race: [0; 7],
        by_ses: [0; 3],
    };
    for (st, &k) in district.students().iter().zip(&opt_out_times) {
        if k as f64 >= PERSISTENT_OPT_OUT_SHARE * scen {
            persistent.total += 1;
            persistent.by_race[st.race.index()] += 1;
            persistent.by_ses[st.ses_category as usize] += 1;
        }
    }

    let (dissimilarity, dissimilarity_se) = mean_and_std_error(&d_values);
    let avg_opt_outs = opt_outs_total as f64 / scen;
    Ok(RezoneReport {
        dissimilarity,
        dissimilarity_se,
        rezoned_lower_ses: rezoned_lower,
        rezoned_lower_ses_pct: pct(rezoned_lower, g_total),
        rezoned_students: rezoned_students.len(),
        rezoned_students_pct: pct(rezoned_students.len(), n_students),
        rezoned_blocks,
        rezoned_blocks_pct: pct(rezoned_blocks, district.n_blocks()),
        avg_opt_outs,
        opt_out_rate_pct: 100.0 * avg_opt_outs / n_students as f64,
        avg_travel_minutes: travel_total / (scen * n_students as f64),
        old_enrollment,
        new_enrollment,
        persistent_opt_outs: persistent,
        block_opt_outs,
        block_opt_out_rate,
    })
}

/// Header of [`write_report_csv`].
pub fn report_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "method",
        "dissimilarity",
        "dissimilarity_se",
        "rezoned_lower_ses",
        "rezoned_lower_ses_pct",
        "rezoned_students",
        "rezoned_students_pct",
        "rezoned_blocks",
        "rezoned_blocks_pct",
        "avg_opt_outs",
        "opt_out_rate_pct",
        "avg_travel_minutes",
        "persistent_opt_outs",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(Race::ALL.iter().map(|r| format!("persistent_{r}_pct")));
    h.extend((0..3).map(|k| format!("persistent_ses{k}_pct")));
    h
}

fn report_row(label: &str, r: &RezoneReport) -> Vec<String> {
    let mut row = vec![
        label.to_string(),
        format!("{:.4}", r.dissimilarity),
        format!("{:.4}", r.dissimilarity_se),
        r.rezoned_lower_ses.to_string(),
        format!("{:.2}", r.rezoned_lower_ses_pct),
        r.rezoned_students.to_string(),
        format!("{:.2}", r.rezoned_students_pct),
        r.rezoned_blocks.to_string(),
        format!("{:.2}", r.rezoned_blocks_pct),
        format!("{:.2}", r.avg_opt_outs),
        format!("{:.2}", r.opt_out_rate_pct),
        format!("{:.2}", r.avg_travel_minutes),
        r.persistent_opt_outs.total.to_string(),
    ];
    row.extend(Race::ALL.iter().map(|&race| format!("{:.2}", r.persistent_opt_outs.race_pct(race))));
    row.extend((0..3).map(|k| format!("{:.2}", r.persistent_opt_outs.ses_pct(k))));
    row
}

/// One row per labeled report.
pub fn write_report_csv(rows: &[(String, RezoneReport)], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(report_header())?;
    for (label, r) in rows {
        w.write_record(report_row(label, r))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Per-school mean enrollment before and after, with the change.
pub fn write_enrollment_csv(report: &RezoneReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["school_id", "old_enrollment", "new_enrollment", "change"])?;
    for (s, (o, n)) in report.old_enrollment.iter().zip(&report.new_enrollment).enumerate() {
        w.write_record([s.to_string(), format!("{o:.2}"), format!("{n:.2}"), format!("{:.2}", n - o)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `[zoned school][attended school]` student counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AttendanceMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl AttendanceMatrix {
    pub fn zeros(n_schools: usize) -> Self {
        AttendanceMatrix {
            counts: vec![vec![0; n_schools]; n_schools],
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Row-normalized shares; empty rows stay zero.
    pub fn shares(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|r| {
                let t: u64 = r.iter().sum();
                r.iter().map(|&c| if t == 0 { 0.0 } else { c as f64 / t as f64 }).collect()
            })
            .collect()
    }

    pub fn add(&mut self, other: &AttendanceMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn write_csv(&self, shares: bool, out: impl Write) -> Result<()> {
        let n = self.counts.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["zoned".to_string()];
        header.extend((0..n).map(|s| format!("attended_{s}")));
        w.write_record(&header)?;
        let share_rows = self.shares();
        for s in 0..n {
            let mut row = vec![s.to_string()];
            if shares {
                row.extend(share_rows[s].iter().map(|v| format!("{v:.4}")));
            } else {
                row.extend(self.counts[s].iter().map(|c| c.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn attendance_matrix(district: &District, zoning: &Zoning, attended: &AttendanceRealization) -> AttendanceMatrix {
    let mut m = AttendanceMatrix::zeros(district.n_schools());
    for (st, a) in district.students().iter().zip(&attended.attended) {
        m.counts[zoning.school_of(st.block).index()][a.index()] += 1;
    }
    m
}

/// Status-quo zoned school against the historical label of every student.
pub fn historical_attendance_matrix(district: &District) -> AttendanceMatrix {
    let sq = district.status_quo();
    let attended = district.actual_attendance();
    let follow_count = district
        .students()
        .iter()
        .zip(&attended)
        .filter(|(s, a)| sq.school_of(s.block) == **a)
        .count();
    attendance_matrix(district, &sq, &AttendanceRealization { attended, follow_count })
}

/// Attendance matrix summed over every scenario of a table.
pub fn scenario_attendance_matrix(district: &District, zoning: &Zoning, table: &ScenarioTable) -> AttendanceMatrix {
    let mut m = AttendanceMatrix::zeros(district.n_schools());
    for i in 0..table.n_scenarios() {
        m.add(&attendance_matrix(district, zoning, &table.realize(zoning, i)));
    }
    m
}

/// Per-block value painted on exported maps.
#[derive(Debug, Clone, Copy)]
pub enum MapOverlay<'a> {
    None,
    /// Mean share of residents opting out over the table's scenarios.
    OptOutRate(&'a ScenarioTable),
    /// Share of residents in the lower SES category.
    Ses,
}

/// Overlay names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlayKind {
    None,
    OptOutRate,
    Ses,
}

impl FromStr for OverlayKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(OverlayKind::None),
            "opt-out-rate" => Ok(OverlayKind::OptOutRate),
            "ses" => Ok(OverlayKind::Ses),
            _ => Err(Error::Config(format!("unknown overlay {s:?}; expected none, opt-out-rate or ses"))),
        }
    }
}

/// Kilometres east and north mapped to degrees near the origin.
fn to_lon_lat(p: [f64; 2]) -> Value {
    let round = |v: f64| (v * 1e7).round() / 1e7;
    json!([round(p[0] / 111.32), round(p[1] / 110.57)])
}

/// Mean opt-out share of each block's residents under `zoning`.
pub fn block_opt_out_rates(district: &District, zoning: &Zoning, table: &ScenarioTable) -> Result<Vec<f64>> {
    Ok(rezone_report(zoning, zoning, table, district)?.block_opt_out_rate)
}

/// One polygon feature per block.
pub fn export_geojson(district: &District, zoning: &Zoning, overlay: MapOverlay<'_>) -> Result<Value> {
    if zoning.len() != district.n_blocks() {
        return Err(Error::Mismatch(format!(
            "zoning covers {} blocks, district has {}",
            zoning.len(),
            district.n_blocks()
        )));
    }
    let values: Option<(&str, Vec<Value>)> = match overlay {
        MapOverlay::None => None,
        MapOverlay::OptOutRate(table) => Some((
            "opt_out_rate",
            block_opt_out_rates(district, zoning, table)?.into_iter().map(|v| json!(v)).collect(),
        )),
        MapOverlay::Ses => Some((
            "lower_ses_share",
            district
                .blocks()
                .iter()
                .map(|b| {
                    let r = &b.resident_students;
                    if r.is_empty() {
                        Value::Null
                    } else {
                        let low = r.iter().filter(|&&s| district.student(s).ses_category == LOWER_SES).count();
                        json!(low as f64 / r.len() as f64)
                    }
                })
                .collect(),
        )),
    };
    let features: Vec<Value> = district
        .blocks()
        .iter()
        .map(|b| {
            let mut props = Map::new();
            props.insert("block_id".into(), json!(b.id.0));
            props.insert("school_id".into(), json!(zoning.school_of(b.id).0));
            if let Some((name, v)) = &values {
                props.insert((*name).into(), v[b.id.index()].clone());
            }
            let ring: Vec<Value> = b.cell.ring().iter().map(|&p| to_lon_lat(p)).collect();
            json!({
                "type": "Feature",
                "properties": props,
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            })
        })
        .collect();
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

/// Human-readable summary of several reports, one line per method.
pub fn summary_text(rows: &[(String, RezoneReport)]) -> String {
    let mut s = String::new();
    for (label, r) in rows {
        let _ = writeln!(
            s,
            "{label:>8}  d = {:.4} (se {:.4})  rezoned {} students in {} blocks  opt-out {:.2}%  travel {:.2} min",
            r.dissimilarity, r.dissimilarity_se, r.rezoned_students, r.rezoned_blocks, r.opt_out_rate_pct, r.avg_travel_minutes
        );
    }
    s
}

/// Schools gaining the most students on average, for quick inspection.
pub fn largest_changes(report: &RezoneReport, k: usize) -> Vec<(SchoolId, f64)> {
    let mut c: Vec<(SchoolId, f64)> = report
        .enrollment_change()
        .into_iter()
        .enumerate()
        .map(|(s, v)| (SchoolId::from_index(s), v))
        .collect();
    c.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    c.truncate(k);
    c
}
