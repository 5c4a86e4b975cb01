//! Zoning optimization over the feasible set: one school per block, the
//! travel-time bound, contiguous zones anchored at campuses, and population
//! bounds under every scenario. The objective is the mean dissimilarity of
//! realized attendance over a [`ScenarioTable`].
//!
//! [`local_search_optimize`] runs simulated annealing over single-block
//! boundary moves. [`brute_force_optimize`] enumerates every zoning of tiny
//! instances and serves as its oracle.

mod anneal;
mod brute;
mod moves;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use anneal::{local_search_optimize, local_search_optimize_with, SearchEvent};
pub use brute::{brute_force_optimize, BRUTE_FORCE_LIMIT};
pub use moves::{boundary_moves, Move};

use crate::choice::{ChoiceModel, FollowModel, FrequencyModel};
use crate::district::{
    dissimilarity_unchecked, population_bounds_micro, District, FeasibilityParams, SchoolId, Verdict, Zoning,
    ALPHA_SCALE, LOWER_SES,
};
use crate::error::{Error, Result};
use crate::scenario::{sample_scenarios, SaaObjective, ScenarioTable};

/// The redistricting methods compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Students attend their zoned school.
    R,
    /// Frequency-based choice model.
    FR,
    /// Learned choice model.
    RWC,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::R, Method::FR, Method::RWC];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::R => "R",
            Method::FR => "FR",
            Method::RWC => "RWC",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "R" => Ok(Method::R),
            "FR" => Ok(Method::FR),
            "RWC" => Ok(Method::RWC),
            _ => Err(Error::Config(format!("unknown method {s:?}; expected R, FR or RWC"))),
        }
    }
}

/// Builds the scenario table a method optimizes against. R uses a single
/// follow-model scenario; FR the frequency model; RWC needs `learned`.
pub fn method_table(
    method: Method,
    district: &District,
    learned: Option<&dyn ChoiceModel>,
    n_scenarios: usize,
    seed: u64,
) -> Result<ScenarioTable> {
    match method {
        Method::R => sample_scenarios(&FollowModel, district, 1, seed),
        Method::FR => sample_scenarios(&FrequencyModel::default(), district, n_scenarios, seed),
        Method::RWC => {
            let model = learned
                .ok_or_else(|| Error::Config("method RWC needs a trained choice model".into()))?;
            sample_scenarios(model, district, n_scenarios, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub alpha: f64,
    pub tau: f64,
    pub n_scenarios: usize,
    /// Wall-clock cap in seconds. The schedule normally ends first; a run
    /// stopped by this cap is no longer seed-deterministic.
    pub time_limit_secs: f64,
    pub restarts: usize,
    /// Starting temperature. When unset it is calibrated per instance as
    /// the mean |Δ| of feasible moves along a short random walk from the
    /// status quo, over ln 2, so a typical uphill move starts out accepted
    /// half the time.
    pub initial_temperature: Option<f64>,
    pub cooling: f64,
    /// The schedule ends once the temperature falls below this fraction of
    /// the initial temperature.
    pub final_temperature_ratio: f64,
    /// Proposals per temperature level; defaults to twice the block count.
    pub moves_per_temperature: Option<usize>,
    /// Cap on proposals per restart.
    pub max_iterations: Option<u64>,
    pub seed: u64,
    pub method: Method,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 0.15,
            tau: 0.5,
            n_scenarios: 30,
            time_limit_secs: 600.0,
            restarts: 4,
            initial_temperature: None,
            cooling: 0.95,
            final_temperature_ratio: 5e-4,
            moves_per_temperature: None,
            max_iterations: None,
            seed: 0,
            method: Method::RWC,
        }
    }
}

impl SolverConfig {
    pub fn params(&self) -> Result<FeasibilityParams> {
        FeasibilityParams::new(self.alpha, self.tau)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.time_limit_secs > 0.0) {
            return fail("time_limit_secs must be positive");
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return fail("cooling must lie in (0, 1)");
        }
        if self.initial_temperature.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return fail("initial_temperature must be positive");
        }
        if !(self.final_temperature_ratio > 0.0 && self.final_temperature_ratio < 1.0) {
            return fail("final_temperature_ratio must lie in (0, 1)");
        }
        if self.restarts == 0 {
            return fail("restarts must be at least 1");
        }
        if self.n_scenarios == 0 {
            return fail("n_scenarios must be at least 1");
        }
        if self.moves_per_temperature == Some(0) {
            return fail("moves_per_temperature must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub proposals: u64,
    /// Proposals drawing a block with no admissible destination.
    pub no_candidate: u64,
    pub rejected_contiguity: u64,
    pub rejected_population: u64,
    pub rejected_metropolis: u64,
    pub accepted: u64,
    pub improvements: u64,
    pub temperature_levels: u64,
    pub timed_out: bool,
}

impl SearchStats {
    fn absorb(&mut self, other: &SearchStats) {
        self.proposals += other.proposals;
        self.no_candidate += other.no_candidate;
        self.rejected_contiguity += other.rejected_contiguity;
        self.rejected_population += other.rejected_population;
        self.rejected_metropolis += other.rejected_metropolis;
        self.accepted += other.accepted;
        self.improvements += other.improvements;
        self.temperature_levels += other.temperature_levels;
        self.timed_out |= other.timed_out;
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub zoning: Zoning,
    pub objective: SaaObjective,
    pub status_quo_objective: f64,
    pub rezoned_students: usize,
    pub rezoned_blocks: usize,
    /// Best objective of each restart.
    pub restart_objectives: Vec<f64>,
    pub stats: SearchStats,
    pub wall_time_secs: f64,
    /// Parameters actually enforced, after any widening of α.
    pub params: FeasibilityParams,
    /// Requested α when it had to be widened for the status quo to be feasible.
    pub widened_from: Option<f64>,
    /// `is_feasible` re-run on the returned zoning.
    pub certificate: Verdict,
    /// Starting temperature of the annealing schedule; `None` for exhaustive search.
    pub initial_temperature: Option<f64>,
}

/// Smallest α, in micro-units and at least `alpha_micro`, under which the
/// status quo meets the population bounds in every scenario. The result may
/// exceed 1.
pub(crate) fn widen_alpha(district: &District, table: &ScenarioTable, alpha_micro: u64) -> Result<u64> {
    let sq = district.status_quo();
    let mut needed = alpha_micro;
    for (i, counts) in table.scenario_counts(&sq, district).iter().enumerate() {
        for school in district.schools() {
            let c = counts.total[school.id.index()] as u64;
            let cur = school.current_enrollment as u64;
            if c == cur {
                continue;
            }
            if cur == 0 {
                return Err(Error::Setup(format!(
                    "status quo sends {c} students to school {} in scenario {i}, whose current enrollment is 0; \
                     no alpha makes the population bound hold",
                    school.id
                )));
            }
            let a = (c.abs_diff(cur) * ALPHA_SCALE).div_ceil(cur);
            needed = needed.max(a);
        }
    }
    Ok(needed)
}

/// Everything the search needs that does not change between moves.
pub(crate) struct Context<'a> {
    pub district: &'a District,
    pub table: &'a ScenarioTable,
    pub n_schools: usize,
    pub n_scenarios: usize,
    /// Residents of each block with their lower-SES flag.
    pub residents: Vec<Vec<(usize, bool)>>,
    pub bounds: Vec<(u32, u32)>,
    pub travel_limit: Vec<f64>,
    pub is_campus: Vec<bool>,
    pub g: f64,
    pub rest: f64,
    pub params: FeasibilityParams,
    pub widened_from: Option<f64>,
}

impl<'a> Context<'a> {
    /// Validates the inputs and widens α if the status quo needs it.
    pub fn new(district: &'a District, table: &'a ScenarioTable, params: &FeasibilityParams) -> Result<Self> {
        if table.n_students() != district.n_students() || table.n_schools() != district.n_schools() {
            return Err(Error::Mismatch(format!(
                "table is for {} students and {} schools, district has {} and {}",
                table.n_students(),
                table.n_schools(),
                district.n_students(),
                district.n_schools()
            )));
        }
        let g_total = district.lower_ses_total();
        let n_total = district.n_students();
        if g_total == 0 || g_total >= n_total {
            return Err(Error::Domain(format!(
                "dissimilarity needs 0 < g_total < n_total, got {g_total} of {n_total}"
            )));
        }
        let alpha_micro = widen_alpha(district, table, params.alpha_micro())?;
        let (params, widened_from) = if alpha_micro > params.alpha_micro() {
            let wide = FeasibilityParams {
                alpha: alpha_micro as f64 / ALPHA_SCALE as f64,
                tau: params.tau,
            };
            (wide, Some(params.alpha))
        } else {
            (*params, None)
        };
        let mut residents = vec![Vec::new(); district.n_blocks()];
        for (n, st) in district.students().iter().enumerate() {
            residents[st.block.index()].push((n, st.ses_category == LOWER_SES));
        }
        let mut is_campus = vec![false; district.n_blocks()];
        for s in district.schools() {
            is_campus[s.campus_block.index()] = true;
        }
        Ok(Context {
            district,
            table,
            n_schools: district.n_schools(),
            n_scenarios: table.n_scenarios(),
            residents,
            bounds: district
                .schools()
                .iter()
                .map(|s| population_bounds_micro(s.current_enrollment, alpha_micro))
                .collect(),
            travel_limit: district
                .blocks()
                .iter()
                .map(|b| params.travel_time_limit(b.travel_time[b.status_quo_school.index()]))
                .collect(),
            is_campus,
            g: g_total as f64,
            rest: (n_total - g_total) as f64,
            params,
            widened_from,
        })
    }

    /// Whether `school` may serve `block` apart from contiguity.
    pub fn admissible(&self, block: usize, school: SchoolId) -> bool {
        self.district.blocks()[block].travel_time[school.index()] <= self.travel_limit[block]
            && self.table.allows(crate::district::BlockId::from_index(block), school)
    }
}

/// Search state with per-scenario counts kept in sync with the zoning.
#[derive(Debug, Clone)]
pub(crate) struct State {
    pub zoning: Zoning,
    pub zone_size: Vec<usize>,
    /// `total[i * S + s]`.
    pub total: Vec<u32>,
    pub lower: Vec<u32>,
    pub d: Vec<f64>,
    pub objective: f64,
    pub rezoned_students: usize,
}

#[derive(Debug, Default)]
pub(crate) struct Scratch {
    d_new: Vec<f64>,
    dt: Vec<i32>,
    dl: Vec<i32>,
    tmp_total: Vec<u32>,
    tmp_lower: Vec<u32>,
    /// `(i * S + s, Δtotal, Δlower)` of the last evaluated move.
    changes: Vec<(usize, i32, i32)>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

impl State {
    pub fn new(ctx: &Context<'_>, zoning: Zoning) -> Self {
        let s_count = ctx.n_schools;
        let mut zone_size = vec![0; s_count];
        for s in zoning.as_slice() {
            zone_size[s.index()] += 1;
        }
        let mut total = vec![0u32; ctx.n_scenarios * s_count];
        let mut lower = vec![0u32; ctx.n_scenarios * s_count];
        for (b, res) in ctx.residents.iter().enumerate() {
            let zoned = zoning.as_slice()[b];
            for &(n, low) in res {
                for i in 0..ctx.n_scenarios {
                    let a = ctx.table.choice(i, n, zoned).index();
                    total[i * s_count + a] += 1;
                    if low {
                        lower[i * s_count + a] += 1;
                    }
                }
            }
        }
        let d: Vec<f64> = (0..ctx.n_scenarios)
            .map(|i| {
                let r = i * s_count..(i + 1) * s_count;
                dissimilarity_unchecked(&total[r.clone()], &lower[r], ctx.g, ctx.rest)
            })
            .collect();
        let sq = ctx.district.status_quo();
        let rezoned_students = zoning
            .rezoned_blocks(&sq)
            .map(|b| ctx.residents[b.index()].len())
            .sum();
        State {
            objective: mean(&d),
            zoning,
            zone_size,
            total,
            lower,
            d,
            rezoned_students,
        }
    }

    pub fn within_bounds(&self, ctx: &Context<'_>) -> bool {
        self.total
            .chunks(ctx.n_schools)
            .all(|row| row.iter().zip(&ctx.bounds).all(|(&c, &(lo, hi))| lo <= c && c <= hi))
    }

    /// New objective after moving `block` to `to`, or `None` when
    /// `check_bounds` is set and some scenario leaves the population bounds.
    pub fn evaluate(
        &self,
        ctx: &Context<'_>,
        block: usize,
        to: SchoolId,
        check_bounds: bool,
        scratch: &mut Scratch,
    ) -> Option<f64> {
        let s_count = ctx.n_schools;
        let from = self.zoning.as_slice()[block];
        scratch.d_new.clone_from(&self.d);
        scratch.changes.clear();
        scratch.dt.resize(s_count, 0);
        scratch.dl.resize(s_count, 0);
        scratch.tmp_total.resize(s_count, 0);
        scratch.tmp_lower.resize(s_count, 0);
        for i in 0..ctx.n_scenarios {
            scratch.dt.fill(0);
            scratch.dl.fill(0);
            let mut touched = false;
            for &(n, low) in &ctx.residents[block] {
                let a = ctx.table.choice(i, n, from).index();
                let a2 = ctx.table.choice(i, n, to).index();
                if a != a2 {
                    touched = true;
                    scratch.dt[a] -= 1;
                    scratch.dt[a2] += 1;
                    if low {
                        scratch.dl[a] -= 1;
                        scratch.dl[a2] += 1;
                    }
                }
            }
            if !touched {
                continue;
            }
            let base = i * s_count;
            for s in 0..s_count {
                let c = (self.total[base + s] as i64 + scratch.dt[s] as i64) as u32;
                let l = (self.lower[base + s] as i64 + scratch.dl[s] as i64) as u32;
                if scratch.dt[s] != 0 || scratch.dl[s] != 0 {
                    if check_bounds && scratch.dt[s] != 0 {
                        let (lo, hi) = ctx.bounds[s];
                        if c < lo || c > hi {
                            return None;
                        }
                    }
                    scratch.changes.push((base + s, scratch.dt[s], scratch.dl[s]));
                }
                scratch.tmp_total[s] = c;
                scratch.tmp_lower[s] = l;
            }
            scratch.d_new[i] = dissimilarity_unchecked(&scratch.tmp_total, &scratch.tmp_lower, ctx.g, ctx.rest);
        }
        Some(mean(&scratch.d_new))
    }

    /// Commits the move last passed to [`State::evaluate`].
    pub fn apply(&mut self, ctx: &Context<'_>, block: usize, to: SchoolId, scratch: &Scratch) {
        let from = self.zoning.as_slice()[block];
        for &(k, dt, dl) in &scratch.changes {
            self.total[k] = (self.total[k] as i64 + dt as i64) as u32;
            self.lower[k] = (self.lower[k] as i64 + dl as i64) as u32;
        }
        self.d.clone_from(&scratch.d_new);
        self.objective = mean(&self.d);
        self.zone_size[from.index()] -= 1;
        self.zone_size[to.index()] += 1;
        let sq = ctx.district.blocks()[block].status_quo_school;
        let residents = ctx.residents[block].len();
        if from == sq {
            self.rezoned_students += residents;
        } else if to == sq {
            self.rezoned_students -= residents;
        }
        self.zoning.set(crate::district::BlockId::from_index(block), to);
    }

    /// Incumbent order: objective, then fewest rezoned students, then
    /// lexicographic zoning.
    pub fn better_than(&self, other: &State) -> bool {
        better(
            (self.objective, self.rezoned_students, &self.zoning),
            (other.objective, other.rezoned_students, &other.zoning),
        )
    }
}

pub(crate) fn better(a: (f64, usize, &Zoning), b: (f64, usize, &Zoning)) -> bool {
    a.0.total_cmp(&b.0)
        .then(a.1.cmp(&b.1))
        .then_with(|| a.2.as_slice().cmp(b.2.as_slice()))
        .is_lt()
}

/// Change in mean dissimilarity from applying `mv`, ignoring feasibility.
pub fn objective_delta(zoning: &Zoning, mv: Move, table: &ScenarioTable, district: &District) -> Result<f64> {
    if zoning.school_of(mv.block) != mv.from {
        return Err(Error::Domain(format!(
            "block {} is zoned to {}, not {}",
            mv.block,
            zoning.school_of(mv.block),
            mv.from
        )));
    }
    for s in [mv.from, mv.to] {
        if !table.allows(mv.block, s) {
            return Err(Error::Domain(format!(
                "scenario table has no choices for block {} zoned to school {s}",
                mv.block
            )));
        }
    }
    let ctx = Context::new(district, table, &FeasibilityParams { alpha: 1.0, tau: 1.0 })?;
    let state = State::new(&ctx, zoning.clone());
    let after = state
        .evaluate(&ctx, mv.block.index(), mv.to, false, &mut Scratch::default())
        .expect("bounds unchecked");
    Ok(after - state.objective)
}

fn finish(
    ctx: &Context<'_>,
    best: State,
    restart_objectives: Vec<f64>,
    stats: SearchStats,
    started: std::time::Instant,
) -> Result<SolveResult> {
    let objective = crate::scenario::saa_objective(&best.zoning, ctx.table, ctx.district)?;
    debug_assert_eq!(objective.mean, best.objective);
    let sq = ctx.district.status_quo();
    let status_quo_objective = State::new(ctx, sq.clone()).objective;
    let certificate = crate::district::is_feasible(&best.zoning, ctx.district, &ctx.params, ctx.table);
    Ok(SolveResult {
        rezoned_blocks: best.zoning.rezoned_blocks(&sq).count(),
        rezoned_students: best.rezoned_students,
        zoning: best.zoning,
        objective,
        status_quo_objective,
        restart_objectives,
        stats,
        wall_time_secs: started.elapsed().as_secs_f64(),
        params: ctx.params,
        widened_from: ctx.widened_from,
        certificate,
        initial_temperature: None,
    })
}
