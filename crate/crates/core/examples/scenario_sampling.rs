//! Scenario tables with common random numbers and the SAA objective.

use rwc::choice::FrequencyModel;
use rwc::district::BlockId;
use rwc::scenario::{saa_objective, sample_scenarios};
use rwc::synth::{generate_district, GenParams};

fn main() -> rwc::Result<()> {
    let district = generate_district(&GenParams {
        n_blocks: 144,
        n_students: 1200,
        seed: 5,
        ..GenParams::default()
    })?;
    let model = FrequencyModel::default();
    let sq = district.status_quo();

    println!("   I   mean d     std error");
    for i in [1, 5, 10, 30, 100] {
        let table = sample_scenarios(&model, &district, i, 0)?;
        let obj = saa_objective(&sq, &table, &district)?;
        println!("{i:>4}   {:.4}     {:.4}", obj.mean, obj.std_error);
    }

    // With common random numbers, rezoning one block only changes choices
    // of the students who live there.
    let table = sample_scenarios(&model, &district, 30, 0)?;
    let block = district
        .blocks()
        .iter()
        .find(|b| !b.resident_students.is_empty() && !district.schools().iter().any(|s| s.campus_block == b.id))
        .map(|b| b.id)
        .unwrap_or(BlockId(0));
    let other = district.school_ids().find(|&s| s != sq.school_of(block)).unwrap();
    let mut moved = sq.clone();
    moved.set(block, other);
    let mut changed = 0;
    for i in 0..table.n_scenarios() {
        let a = table.realize(&sq, i);
        let b = table.realize(&moved, i);
        changed += a.attended.iter().zip(&b.attended).filter(|(x, y)| x != y).count();
    }
    println!(
        "\nblock {block} ({} residents) moved to school {other}: {changed} student-scenario choices changed",
        district.block(block).resident_students.len()
    );
    let before = saa_objective(&sq, &table, &district)?.mean;
    let after = saa_objective(&moved, &table, &district)?.mean;
    println!("objective {before:.5} -> {after:.5}");
    Ok(())
}
