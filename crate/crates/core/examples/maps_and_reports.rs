//! Report a rezoning: comparison rows, the zoned-vs-attended matrix,
//! opt-out demographics and a GeoJSON map.
//!
//! cargo run --release --example maps_and_reports -- [out-dir]

use std::fs;
use std::path::PathBuf;

use rwc::choice::FrequencyModel;
use rwc::district::Race;
use rwc::optimize::{local_search_optimize, SolverConfig};
use rwc::report::{export_geojson, largest_changes, rezone_report, scenario_attendance_matrix, write_report_csv, MapOverlay};
use rwc::scenario::sample_scenarios;
use rwc::synth::{generate_district, GenParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "report-out".into()));
    fs::create_dir_all(&out)?;

    let district = generate_district(&GenParams {
        n_blocks: 196,
        n_students: 1500,
        seed: 12,
        ..GenParams::default()
    })?;
    let table = sample_scenarios(&FrequencyModel::default(), &district, 30, 0)?;
    let result = local_search_optimize(&district, &table, &SolverConfig::default())?;
    let sq = district.status_quo();
    let report = rezone_report(&sq, &result.zoning, &table, &district)?;

    let rows = vec![
        ("Current".to_string(), rezone_report(&sq, &sq, &table, &district)?),
        ("FR".to_string(), report.clone()),
    ];
    write_report_csv(&rows, std::io::stdout().lock())?;

    println!("\nlargest enrollment changes:");
    for (school, change) in largest_changes(&report, 3) {
        println!("  school {school}: {change:+.1}");
    }

    let p = &report.persistent_opt_outs;
    println!("\n{} persistent opt-outs", p.total);
    for race in Race::ALL {
        println!("  {:<17} {:>5.1}%", race.as_str(), p.race_pct(race));
    }

    let matrix = scenario_attendance_matrix(&district, &result.zoning, &table);
    matrix.write_csv(true, fs::File::create(out.join("attendance_shares.csv"))?)?;

    for (name, overlay) in [
        ("zones.geojson", MapOverlay::None),
        ("opt_outs.geojson", MapOverlay::OptOutRate(&table)),
        ("ses.geojson", MapOverlay::Ses),
    ] {
        let map = export_geojson(&district, &result.zoning, overlay)?;
        fs::write(out.join(name), serde_json::to_string(&map)?)?;
    }
    println!("\nwrote attendance matrix and maps to {}", out.display());
    Ok(())
}
