//! Comma-separated district and zoning files.
//!
//! A district directory holds `blocks.csv`, `schools.csv`, `students.csv`
//! and `adjacency.csv`. Every file has a header row and may start with a
//! `# rwc-stamp ...` line identifying the configuration that produced it.
//!
//! ```text
//! blocks.csv     id,centroid_x,centroid_y,status_quo_school,tt_0..tt_{S-1},ses_index,cell_min_x,cell_min_y,cell_max_x,cell_max_y
//! schools.csv    id,campus_block,is_magnet,current_enrollment,rating_overall,rating_test,rating_progress,rating_equity,choice_zones
//! students.csv   id,block,ses_category,race,grade,actual_school,<six history flags>
//! adjacency.csv  block_a,block_b            (one row per undirected edge, block_a < block_b)
//! zoning.csv     block_id,school_id
//! ```
//!
//! `choice_zones` is a `;`-separated list of zone ids. Booleans are `0`/`1`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{
    Block, BlockId, Cell, District, History, Race, Ratings, School, SchoolId, Student, StudentId,
    Zoning,
};
use crate::error::{Error, Result};

const STAMP_PREFIX: &str = "# rwc-stamp";

/// Provenance line written at the top of every tabular artifact.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArtifactStamp {
    pub config_hash: Option<String>,
    pub district_hash: Option<String>,
}

impl ArtifactStamp {
    pub fn new(config_hash: impl Into<String>, district_hash: impl Into<String>) -> Self {
        ArtifactStamp {
            config_hash: Some(config_hash.into()),
            district_hash: Some(district_hash.into()),
        }
    }

    pub fn line(&self) -> Option<String> {
        if self.config_hash.is_none() && self.district_hash.is_none() {
            return None;
        }
        let mut s = String::from(STAMP_PREFIX);
        if let Some(c) = &self.config_hash {
            s.push_str(&format!(" config={c}"));
        }
        if let Some(d) = &self.district_hash {
            s.push_str(&format!(" district={d}"));
        }
        Some(s)
    }

    fn parse(line: &str) -> Option<Self> {
        let rest = line.strip_prefix(STAMP_PREFIX)?;
        let mut stamp = ArtifactStamp::default();
        for tok in rest.split_whitespace() {
            if let Some(v) = tok.strip_prefix("config=") {
                stamp.config_hash = Some(v.to_string());
            } else if let Some(v) = tok.strip_prefix("district=") {
                stamp.district_hash = Some(v.to_string());
            }
        }
        Some(stamp)
    }
}

/// Writes a stamped CSV body to `path`.
pub(crate) fn write_stamped(path: &Path, stamp: &ArtifactStamp, body: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(body.len() + 128);
    if let Some(line) = stamp.line() {
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    out.extend_from_slice(body);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Reads a CSV file, returning its stamp (if any) and the records after the header.
pub(crate) fn read_stamped(path: &Path) -> Result<(ArtifactStamp, Vec<String>, Vec<csv::StringRecord>)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(f);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let (stamp, prefix) = match ArtifactStamp::parse(first.trim_end()) {
        Some(s) => (s, String::new()),
        None => (ArtifactStamp::default(), first),
    };
    let chained = std::io::Cursor::new(prefix.into_bytes()).chain(reader);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(chained);
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((stamp, header, records))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| Error::parse(path, format!("missing column {what}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("bad {what} value {raw:?}")))
}

fn flag(path: &Path, rec: &csv::StringRecord, i: usize, what: &str) -> Result<bool> {
    match rec.get(i).map(str::trim) {
        Some("0") => Ok(false),
        Some("1") => Ok(true),
        other => Err(Error::parse(path, format!("bad {what} flag {other:?}"))),
    }
}

fn b01(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

pub(crate) struct DistrictCsv {
    pub blocks: Vec<u8>,
    pub schools: Vec<u8>,
    pub students: Vec<u8>,
    pub adjacency: Vec<u8>,
}

pub(crate) fn district_csv(district: &District) -> Result<DistrictCsv> {
    let n_schools = district.n_schools();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "centroid_x".into(), "centroid_y".into(), "status_quo_school".into()];
    header.extend((0..n_schools).map(|s| format!("tt_{s}")));
    header.extend(
        ["ses_index", "cell_min_x", "cell_min_y", "cell_max_x", "cell_max_y"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for b in district.blocks() {
        let mut rec = vec![
            b.id.to_string(),
            b.centroid[0].to_string(),
            b.centroid[1].to_string(),
            b.status_quo_school.to_string(),
        ];
        rec.extend(b.travel_time.iter().map(f64::to_string));
        rec.push(b.ses_index.to_string());
        rec.extend([b.cell.min[0], b.cell.min[1], b.cell.max[0], b.cell.max[1]].map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let blocks = w.into_inner().map_err(|e| Error::Domain(e.to_string()))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "id",
        "campus_block",
        "is_magnet",
        "current_enrollment",
        "rating_overall",
        "rating_test",
        "rating_progress",
        "rating_equity",
        "choice_zones",
    ])?;
    for s in district.schools() {
        let zones = s
            .choice_zones
            .iter()
            .map(u16::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let r = s.ratings;
        w.write_record([
            s.id.to_string(),
            s.campus_block.to_string(),
            b01(s.is_magnet).to_string(),
            s.current_enrollment.to_string(),
            r.overall.to_string(),
            r.test.to_string(),
            r.progress.to_string(),
            r.equity.to_string(),
            zones,
        ])?;
    }
    let schools = w.into_inner().map_err(|e| Error::Domain(e.to_string()))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id", "block", "ses_category", "race", "grade", "actual_school"];
    header.extend(History::NAMES);
    w.write_record(&header)?;
    for st in district.students() {
        let mut rec = vec![
            st.id.to_string(),
            st.block.to_string(),
            st.ses_category.to_string(),
            st.race.to_string(),
            st.grade.to_string(),
            st.actual_school.to_string(),
        ];
        rec.extend(st.history.as_array().map(|f| b01(f).to_string()));
        w.write_record(&rec)?;
    }
    let students = w.into_inner().map_err(|e| Error::Domain(e.to_string()))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["block_a", "block_b"])?;
    for b in district.blocks() {
        let mut nbs: Vec<BlockId> = b.neighbors.iter().copied().filter(|n| *n > b.id).collect();
        nbs.sort();
        for n in nbs {
            w.write_record([b.id.to_string(), n.to_string()])?;
        }
    }
    let adjacency = w.into_inner().map_err(|e| Error::Domain(e.to_string()))?;

    Ok(DistrictCsv {
        blocks,
        schools,
        students,
        adjacency,
    })
}

impl District {
    /// SHA-256 over the canonical serialized form. Two districts with equal
    /// fingerprints serialize to identical files.
    pub fn fingerprint(&self) -> String {
        let csv = district_csv(self).expect("in-memory serialization cannot fail");
        let mut h = Sha256::new();
        for part in [&csv.blocks, &csv.schools, &csv.students, &csv.adjacency] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        hex::encode(h.finalize())
    }
}

pub fn write_district(dir: &Path, district: &District, stamp: &ArtifactStamp) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = district_csv(district)?;
    write_stamped(&dir.join("blocks.csv"), stamp, &csv.blocks)?;
    write_stamped(&dir.join("schools.csv"), stamp, &csv.schools)?;
    write_stamped(&dir.join("students.csv"), stamp, &csv.students)?;
    write_stamped(&dir.join("adjacency.csv"), stamp, &csv.adjacency)?;
    Ok(())
}

pub fn read_district(dir: &Path) -> Result<(District, ArtifactStamp)> {
    let path = dir.join("schools.csv");
    let (stamp, _, recs) = read_stamped(&path)?;
    let mut schools = Vec::with_capacity(recs.len());
    let mut max_zone = 0u16;
    for rec in &recs {
        let zones: Vec<u16> = rec
            .get(8)
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|z| {
                z.trim()
                    .parse()
                    .map_err(|_| Error::parse(&path, format!("bad choice zone {z:?}")))
            })
            .collect::<Result<_>>()?;
        max_zone = zones.iter().copied().fold(max_zone, u16::max);
        schools.push(School {
            id: SchoolId(field(&path, rec, 0, "id")?),
            campus_block: BlockId(field(&path, rec, 1, "campus_block")?),
            is_magnet: flag(&path, rec, 2, "is_magnet")?,
            current_enrollment: field(&path, rec, 3, "current_enrollment")?,
            ratings: Ratings {
                overall: field(&path, rec, 4, "rating_overall")?,
                test: field(&path, rec, 5, "rating_test")?,
                progress: field(&path, rec, 6, "rating_progress")?,
                equity: field(&path, rec, 7, "rating_equity")?,
            },
            choice_zones: zones,
        });
    }
    let n_schools = schools.len();

    let path = dir.join("blocks.csv");
    let (_, header, recs) = read_stamped(&path)?;
    if header.len() != 9 + n_schools {
        return Err(Error::parse(
            &path,
            format!("expected {} columns for {n_schools} schools, found {}", 9 + n_schools, header.len()),
        ));
    }
    let mut blocks = Vec::with_capacity(recs.len());
    for rec in &recs {
        let tt = (0..n_schools)
            .map(|s| field(&path, rec, 4 + s, "travel time"))
            .collect::<Result<Vec<f64>>>()?;
        let k = 4 + n_schools;
        blocks.push(Block {
            id: BlockId(field(&path, rec, 0, "id")?),
            centroid: [field(&path, rec, 1, "centroid_x")?, field(&path, rec, 2, "centroid_y")?],
            cell: Cell {
                min: [field(&path, rec, k + 1, "cell_min_x")?, field(&path, rec, k + 2, "cell_min_y")?],
                max: [field(&path, rec, k + 3, "cell_max_x")?, field(&path, rec, k + 4, "cell_max_y")?],
            },
            neighbors: Vec::new(),
            status_quo_school: SchoolId(field(&path, rec, 3, "status_quo_school")?),
            travel_time: tt,
            resident_students: Vec::new(),
            ses_index: field(&path, rec, k, "ses_index")?,
        });
    }

    let path = dir.join("adjacency.csv");
    let (_, _, recs) = read_stamped(&path)?;
    for rec in &recs {
        let a: u32 = field(&path, rec, 0, "block_a")?;
        let b: u32 = field(&path, rec, 1, "block_b")?;
        if a as usize >= blocks.len() || b as usize >= blocks.len() {
            return Err(Error::parse(&path, format!("edge {a}-{b} references an unknown block")));
        }
        blocks[a as usize].neighbors.push(BlockId(b));
        blocks[b as usize].neighbors.push(BlockId(a));
    }

    let path = dir.join("students.csv");
    let (_, _, recs) = read_stamped(&path)?;
    let mut students = Vec::with_capacity(recs.len());
    for rec in &recs {
        let race: String = field(&path, rec, 3, "race")?;
        students.push(Student {
            id: StudentId(field(&path, rec, 0, "id")?),
            block: BlockId(field(&path, rec, 1, "block")?),
            ses_category: field(&path, rec, 2, "ses_category")?,
            race: race.parse::<Race>()?,
            grade: field(&path, rec, 4, "grade")?,
            actual_school: SchoolId(field(&path, rec, 5, "actual_school")?),
            history: History {
                new_to_system: flag(&path, rec, 6, "new_to_system")?,
                has_sibling: flag(&path, rec, 7, "has_sibling")?,
                attended_same_school_as_sibling: flag(&path, rec, 8, "attended_same_school_as_sibling")?,
                opted_out_before: flag(&path, rec, 9, "opted_out_before")?,
                opted_out_to_magnet_before: flag(&path, rec, 10, "opted_out_to_magnet_before")?,
                attended_multiple_schools: flag(&path, rec, 11, "attended_multiple_schools")?,
            },
        });
    }

    let zone_count = if n_schools == 0 { 0 } else { max_zone as usize + 1 };
    let district = District::new(blocks, schools, students, zone_count)?;
    Ok((district, stamp))
}

pub(crate) fn zoning_csv(zoning: &Zoning) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["block_id", "school_id"])?;
    for (b, s) in zoning.as_slice().iter().enumerate() {
        w.write_record([b.to_string(), s.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::Domain(e.to_string()))
}

pub fn write_zoning(path: &Path, zoning: &Zoning, stamp: &ArtifactStamp) -> Result<()> {
    write_stamped(path, stamp, &zoning_csv(zoning)?)
}

/// Reads a zoning file. Rows may appear in any order but must cover
/// blocks `0..n` exactly once.
pub fn read_zoning(path: &Path) -> Result<(Zoning, ArtifactStamp)> {
    let (stamp, _, recs) = read_stamped(path)?;
    let mut slots: Vec<Option<SchoolId>> = vec![None; recs.len()];
    for rec in &recs {
        let b: usize = field(path, rec, 0, "block_id")?;
        let s: u16 = field(path, rec, 1, "school_id")?;
        match slots.get_mut(b) {
            Some(slot @ None) => *slot = Some(SchoolId(s)),
            Some(Some(_)) => return Err(Error::parse(path, format!("block {b} assigned twice"))),
            None => return Err(Error::parse(path, format!("block {b} out of range"))),
        }
    }
    let assignment = slots
        .into_iter()
        .enumerate()
        .map(|(b, s)| s.ok_or_else(|| Error::parse(path, format!("block {b} unassigned"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((Zoning::new(assignment), stamp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::district::testutil::*;

    #[test]
    fn district_round_trips_through_csv() {
        let d = hand_district(
            &[(0, vec![1.5, 2.25]), (0, vec![2.0, 1.0]), (1, vec![3.0, 0.1])],
            &[(0, 1), (1, 2)],
            &[0, 2],
            &[true, false],
            &[(0, 0, 0), (1, 1, 1), (2, 2, 1)],
        );
        let dir = tempfile::tempdir().unwrap();
        let stamp = ArtifactStamp::new("abc", d.fingerprint());
        write_district(dir.path(), &d, &stamp).unwrap();
        let (back, st) = read_district(dir.path()).unwrap();
        assert_eq!(back, d);
        assert_eq!(st, stamp);
        assert_eq!(back.fingerprint(), d.fingerprint());
    }

    #[test]
    fn zoning_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.csv");
        std::fs::write(&p, "block_id,school_id\n0,1\n0,0\n").unwrap();
        assert!(read_zoning(&p).unwrap_err().to_string().contains("assigned twice"));
        std::fs::write(&p, "block_id,school_id\n1,0\n0,1\n").unwrap();
        let (zn, stamp) = read_zoning(&p).unwrap();
        assert_eq!(zn, z(&[1, 0]));
        assert_eq!(stamp, ArtifactStamp::default());
    }
}
