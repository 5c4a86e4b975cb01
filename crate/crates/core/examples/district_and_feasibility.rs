//! The dissimilarity index, the feasibility predicates and the boundary
//! move neighbourhood on a small generated district.

use rwc::choice::FollowModel;
use rwc::district::{
    check_contiguity, check_travel_time, counts_under_attendance, dissimilarity, is_feasible, FeasibilityParams,
    SchoolCounts,
};
use rwc::optimize::boundary_moves;
use rwc::scenario::sample_scenarios;
use rwc::synth::{generate_district, GenParams};

fn main() -> rwc::Result<()> {
    // Two schools with identical mixes, then total separation.
    let mirrored = SchoolCounts { total: vec![40, 60], lower_ses: vec![10, 15] };
    let separated = SchoolCounts { total: vec![25, 75], lower_ses: vec![25, 0] };
    println!("mirrored  d = {}", dissimilarity(&mirrored, 25, 100)?);
    println!("separated d = {}", dissimilarity(&separated, 25, 100)?);

    let district = generate_district(&GenParams {
        n_blocks: 64,
        n_schools: 4,
        n_magnets: 1,
        n_students: 500,
        n_choice_zones: 2,
        seed: 3,
        ..GenParams::default()
    })?;
    let sq = district.status_quo();
    let zoned = sq.zoned_schools(&district);
    let d_sq = dissimilarity(&counts_under_attendance(&district, &zoned)?, district.lower_ses_total(), district.n_students())?;
    println!("\nstatus quo, everyone at the zoned school: d = {d_sq:.4}");

    let params = FeasibilityParams::new(0.15, 0.5)?;
    let follow = sample_scenarios(&FollowModel, &district, 1, 0)?;
    println!("contiguity: {}", check_contiguity(&sq, &district));
    println!("travel bound: {}", check_travel_time(&sq, &district, &params));
    // Population bounds are relative to actual enrollment, which includes
    // opt-outs, so "everyone follows" can break them even at the status quo.
    let verdict = is_feasible(&sq, &district, &params, &follow);
    println!("population bounds under the follow model: {} violations", verdict.violations.len());
    let loose = FeasibilityParams::new(1.0, 0.5)?;
    println!("with alpha = 1: {}", is_feasible(&sq, &district, &loose, &follow));

    let moves = boundary_moves(&sq, &district, &params);
    println!("{} boundary moves keep contiguity and the travel bound", moves.len());
    for mv in moves.iter().take(5) {
        println!("  block {:>3}: school {} -> {}", mv.block, mv.from, mv.to);
    }

    // Hand a campus block to another school: contiguity breaks.
    let mut broken = sq.clone();
    let campus = district.schools()[0].campus_block;
    broken.set(campus, district.schools()[1].id);
    println!("\ncampus reassigned: {}", check_contiguity(&broken, &district));
    println!("travel bound on that zoning: {}", check_travel_time(&broken, &district, &params));
    Ok(())
}
