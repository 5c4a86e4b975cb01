//! Spread of RWC solutions across independent scenario draws, for several
//! scenario counts.
//!
//! cargo run --release --example saa_stability -- [runs]

use rwc::choice::{logit_train, Dataset, LogitChoiceModel, LogitConfig};
use rwc::district::StudentId;
use rwc::optimize::{local_search_optimize, method_table, Method, SolverConfig};
use rwc::scenario::{mean_and_std_error, saa_objective};
use rwc::synth::{generate_district, GenParams};

fn main() -> rwc::Result<()> {
    let runs: u64 = std::env::args().nth(1).map_or(5, |s| s.parse().expect("run count"));
    let district = generate_district(&GenParams::default())?;
    let ids: Vec<StudentId> = (0..district.n_students()).map(StudentId::from_index).collect();
    let logit = LogitChoiceModel::new(logit_train(&Dataset::from_students(&district, &ids), &LogitConfig::default())?.model)?;
    let holdout = method_table(Method::RWC, &district, Some(&logit), 100, 9999)?;

    // Each scenario adds population constraints, so a small I reaches a
    // lower objective over a looser feasible set.
    println!("  I   in-sample mean (se)    out-of-sample mean (se)");
    for i in [5, 10, 30] {
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for run in 0..runs {
            let table = method_table(Method::RWC, &district, Some(&logit), i, run)?;
            let config = SolverConfig { n_scenarios: i, seed: run, ..SolverConfig::default() };
            let r = local_search_optimize(&district, &table, &config)?;
            inside.push(r.objective.mean);
            outside.push(saa_objective(&r.zoning, &holdout, &district)?.mean);
        }
        let (mi, si) = mean_and_std_error(&inside);
        let (mo, so) = mean_and_std_error(&outside);
        println!("{i:>3}   {mi:.4} ({si:.4})        {mo:.4} ({so:.4})");
    }
    Ok(())
}
