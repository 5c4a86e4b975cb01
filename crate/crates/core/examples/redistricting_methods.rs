//! The three redistricting methods on the default synthetic district:
//! R assumes everyone follows the zoning, FR uses the rule-based frequency
//! model and RWC the trained logit model.
//!
//! cargo run --release --example redistricting_methods -- [seed]

use rwc::choice::{logit_train, ChoiceModel, Dataset, LogitChoiceModel, LogitConfig};
use rwc::district::StudentId;
use rwc::optimize::{local_search_optimize, method_table, Method, SolverConfig};
use rwc::report::{rezone_report, summary_text};
use rwc::synth::{generate_district, GenParams};

fn main() -> rwc::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed is an integer"));
    let district = generate_district(&GenParams::default())?;
    let ids: Vec<StudentId> = (0..district.n_students()).map(StudentId::from_index).collect();
    let logit = LogitChoiceModel::new(logit_train(&Dataset::from_students(&district, &ids), &LogitConfig::default())?.model)?;

    // Every zoning is scored under the learned model, which stands in for
    // how students will really respond.
    let truth = method_table(Method::RWC, &district, Some(&logit), 30, 1000 + seed)?;
    let sq = district.status_quo();
    let mut rows = vec![("Current".to_string(), rezone_report(&sq, &sq, &truth, &district)?)];
    for method in Method::ALL {
        let table = method_table(method, &district, Some(&logit as &dyn ChoiceModel), 30, seed)?;
        let result = local_search_optimize(&district, &table, &SolverConfig { method, seed, ..SolverConfig::default() })?;
        println!(
            "{method:>3}: planned d {:.4} (status quo {:.4}), alpha {:.3}{}, {:.1}s",
            result.objective.mean,
            result.status_quo_objective,
            result.params.alpha,
            if result.widened_from.is_some() { " widened" } else { "" },
            result.wall_time_secs
        );
        rows.push((method.to_string(), rezone_report(&sq, &result.zoning, &truth, &district)?));
    }
    println!("\nevaluated under held-out logit scenarios:\n{}", summary_text(&rows));
    Ok(())
}
