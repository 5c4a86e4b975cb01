use std::time::Instant;

use super::{finish, Context, SearchStats, SolveResult, State};
use crate::district::{check_contiguity, District, FeasibilityParams, SchoolId, Zoning};
use crate::error::{Error, Result};
use crate::scenario::ScenarioTable;

/// Largest `S^B` the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

/// Global minimum of the SAA objective over all feasible zonings, by
/// enumeration in lexicographic order. The first zoning attaining the
/// minimum wins. α is widened exactly as in the local search.
pub fn brute_force_optimize(district: &District, table: &ScenarioTable, params: &FeasibilityParams) -> Result<SolveResult> {
    let candidates = (district.n_schools() as f64).powi(district.n_blocks() as i32);
    if candidates > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::TooLarge {
            candidates,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let started = Instant::now();
    let ctx = Context::new(district, table, params)?;
    let options: Vec<Vec<SchoolId>> = (0..district.n_blocks())
        .map(|b| {
            if ctx.is_campus[b] {
                vec![district.status_quo().as_slice()[b]]
            } else {
                district.school_ids().filter(|&s| ctx.admissible(b, s)).collect()
            }
        })
        .collect();

    let mut stats = SearchStats::default();
    let mut best: Option<State> = None;
    let mut digits = vec![0usize; options.len()];
    loop {
        stats.proposals += 1;
        let zoning = Zoning::new(digits.iter().zip(&options).map(|(&k, o)| o[k]).collect());
        if check_contiguity(&zoning, district).passed() {
            let state = State::new(&ctx, zoning);
            if !state.within_bounds(&ctx) {
                stats.rejected_population += 1;
            } else {
                stats.accepted += 1;
                if best.as_ref().is_none_or(|b| state.objective < b.objective) {
                    stats.improvements += 1;
                    best = Some(state);
                }
            }
        } else {
            stats.rejected_contiguity += 1;
        }
        // odometer, last block fastest so zonings come in lexicographic order
        let mut pos = digits.len();
        loop {
            if pos == 0 {
                let best = best.expect("status quo is feasible");
                let objective = best.objective;
                return finish(&ctx, best, vec![objective], stats, started);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < options[pos].len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}
