use std::collections::VecDeque;

use crate::district::{flood_zone, BlockId, District, FeasibilityParams, SchoolId, Zoning};

/// Reassignment of one block from `from` to `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Move {
    pub block: BlockId,
    pub from: SchoolId,
    pub to: SchoolId,
}

impl Move {
    pub fn reversed(self) -> Move {
        Move {
            block: self.block,
            from: self.to,
            to: self.from,
        }
    }
}

/// Whether `from`'s zone stays connected once `block` leaves it.
pub(crate) fn donor_stays_connected(
    zoning: &Zoning,
    district: &District,
    block: BlockId,
    zone_size: usize,
    seen: &mut [bool],
    queue: &mut VecDeque<BlockId>,
) -> bool {
    let from = zoning.school_of(block);
    let campus = district.school(from).campus_block;
    if campus == block {
        return false;
    }
    flood_zone(zoning, district, campus, Some(block), seen, queue) + 1 == zone_size
}

/// Distinct schools owning a neighbor of `block`, other than its own, in id order.
pub(crate) fn foreign_neighbors(zoning: &Zoning, district: &District, block: BlockId, out: &mut Vec<SchoolId>) {
    out.clear();
    let own = zoning.school_of(block);
    for nb in &district.block(block).neighbors {
        let s = zoning.school_of(*nb);
        if s != own && !out.contains(&s) {
            out.push(s);
        }
    }
    out.sort();
}

/// Every single-block move that keeps both zones contiguous, keeps campus
/// blocks in place and respects the travel-time bound. Population bounds
/// are left to the caller.
pub fn boundary_moves(zoning: &Zoning, district: &District, params: &FeasibilityParams) -> Vec<Move> {
    let mut zone_size = vec![0usize; district.n_schools()];
    for s in zoning.as_slice() {
        zone_size[s.index()] += 1;
    }
    let mut seen = vec![false; district.n_blocks()];
    let mut queue = VecDeque::new();
    let mut targets = Vec::new();
    let mut moves = Vec::new();
    for b in district.blocks() {
        foreign_neighbors(zoning, district, b.id, &mut targets);
        if targets.is_empty() {
            continue;
        }
        let from = zoning.school_of(b.id);
        if !donor_stays_connected(zoning, district, b.id, zone_size[from.index()], &mut seen, &mut queue) {
            continue;
        }
        let limit = params.travel_time_limit(b.travel_time[b.status_quo_school.index()]);
        moves.extend(
            targets
                .iter()
                .filter(|s| b.travel_time[s.index()] <= limit)
                .map(|&to| Move { block: b.id, from, to }),
        );
    }
    moves
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::district::check_contiguity;
    use crate::district::testutil::*;

    /// 3×3 grid, campuses at blocks 0 and 8.
    fn grid() -> District {
        let tt = |b: usize| {
            let (r, c) = ((b / 3) as f64, (b % 3) as f64);
            vec![1.0 + r + c, 1.0 + (2.0 - r) + (2.0 - c)]
        };
        let blocks: Vec<(u16, Vec<f64>)> = (0..9usize).map(|b| (if b < 5 { 0 } else { 1 }, tt(b))).collect();
        let mut edges = Vec::new();
        for b in 0..9u32 {
            if b % 3 < 2 {
                edges.push((b, b + 1));
            }
            if b + 3 < 9 {
                edges.push((b, b + 3));
            }
        }
        hand_district(&blocks, &edges, &[0, 8], &[false, false], &[(0, 0, 0), (8, 1, 1)])
    }

    fn mv(b: u32, from: u16, to: u16) -> Move {
        Move {
            block: BlockId(b),
            from: SchoolId(from),
            to: SchoolId(to),
        }
    }

    #[test]
    fn three_by_three_matches_hand_enumeration() {
        // zone 0 = {0,1,2,3,4}, zone 1 = {5,6,7,8}
        //   0 1 2
        //   3 4 5
        //   6 7 8
        let d = grid();
        let loose = FeasibilityParams::new(1.0, 1.0).unwrap();
        let mut got = boundary_moves(&d.status_quo(), &d, &loose);
        got.sort();
        // 2 (neighbor 5), 3 (neighbor 6) and 4 (neighbors 5, 7) may leave zone 0;
        // 1 is interior; 5 and 6 may leave zone 1, 7 would cut 6 off and 8 is the campus
        let want = vec![mv(2, 0, 1), mv(3, 0, 1), mv(4, 0, 1), mv(5, 1, 0), mv(6, 1, 0)];
        assert_eq!(got, want);
        for m in &got {
            let mut z = d.status_quo();
            z.set(m.block, m.to);
            assert!(check_contiguity(&z, &d).passed(), "{m:?}");
        }
    }

    #[test]
    fn articulation_blocks_are_kept() {
        let d = grid();
        let loose = FeasibilityParams::new(1.0, 1.0).unwrap();
        // zone 1 = {8, 7, 6} in a line; 7 is an articulation point
        let z = z(&[0, 0, 0, 0, 0, 0, 1, 1, 1]);
        let got = boundary_moves(&z, &d, &loose);
        assert!(got.iter().all(|m| m.block != BlockId(7)));
        assert!(got.contains(&mv(6, 1, 0)));
    }

    #[test]
    fn two_block_zone_keeps_its_campus() {
        let d = hand_district(
            &[(0, vec![1.0, 1.0]), (0, vec![1.0, 1.0]), (1, vec![1.0, 1.0])],
            &[(0, 1), (1, 2), (0, 2)],
            &[0, 2],
            &[false, false],
            &[(0, 0, 0), (2, 1, 1)],
        );
        let loose = FeasibilityParams::new(1.0, 1.0).unwrap();
        let got = boundary_moves(&d.status_quo(), &d, &loose);
        assert_eq!(got, vec![mv(1, 0, 1)]);
    }

    #[test]
    fn travel_bound_filters_moves() {
        let d = grid();
        let tight = FeasibilityParams::new(1.0, 0.0).unwrap();
        let got = boundary_moves(&d.status_quo(), &d, &tight);
        // with τ = 0 only blocks equidistant from both campuses may move
        assert_eq!(got, vec![mv(2, 0, 1), mv(4, 0, 1), mv(6, 1, 0)]);
    }
}
