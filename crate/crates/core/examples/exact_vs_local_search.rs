//! Exhaustive search against simulated annealing on tiny instances.

use rwc::choice::FrequencyModel;
use rwc::optimize::{brute_force_optimize, local_search_optimize, SolverConfig};
use rwc::scenario::sample_scenarios;
use rwc::synth::{generate_district, GenParams};

fn main() -> rwc::Result<()> {
    println!("seed  blocks  exact     annealed  status quo  match");
    let mut matched = 0;
    for seed in 1..=12 {
        let district = generate_district(&GenParams {
            n_blocks: 8,
            n_schools: 2,
            n_magnets: 1,
            n_students: 40,
            n_choice_zones: 1,
            seed,
            ..GenParams::default()
        })?;
        let table = sample_scenarios(&FrequencyModel::default(), &district, 10, seed)?;
        let config = SolverConfig { alpha: 0.5, tau: 1.0, seed, ..SolverConfig::default() };
        let exact = brute_force_optimize(&district, &table, &config.params()?)?;
        let local = local_search_optimize(&district, &table, &config)?;
        let same = (exact.objective.mean - local.objective.mean).abs() < 1e-12;
        matched += usize::from(same);
        println!(
            "{seed:>4}  {:>6}  {:.5}   {:.5}   {:.5}     {}",
            district.n_blocks(),
            exact.objective.mean,
            local.objective.mean,
            exact.status_quo_objective,
            if same { "yes" } else { "no" }
        );
    }
    println!("\nannealing matched the exact optimum on {matched}/12");
    Ok(())
}
