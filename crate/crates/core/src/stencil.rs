//! D3Q19 stencil tables and communication directions.
//!
//! Direction ordering is frozen: 0 is the rest direction, 1..=6 are the
//! axis-aligned face directions (+x, -x, +y, -y, +z, -z) and 7..=18 are the
//! twelve edge directions, paired so that `OPPOSITE[i] = i +/- 1` for i >= 1.
//! Serialization, ghost-slot layouts and tests all depend on this table.

/// Number of discrete velocities.
pub const Q: usize = 19;

/// Lattice speed of sound squared (lattice units, dx = dt = 1).
pub const CS2: f64 = 1.0 / 3.0;

/// Discrete velocities e_i.
pub const DIRECTIONS: [[i32; 3]; Q] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [-1, -1, 0],
    [1, -1, 0],
    [-1, 1, 0],
    [1, 0, 1],
    [-1, 0, -1],
    [1, 0, -1],
    [-1, 0, 1],
    [0, 1, 1],
    [0, -1, -1],
    [0, 1, -1],
    [0, -1, 1],
];

/// Lattice weights w_i.
pub const WEIGHTS: [f64; Q] = [
    1.0 / 3.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];

/// Index of the reversed direction, e_{OPPOSITE[i]} = -e_i.
pub const OPPOSITE: [usize; Q] = [
    0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15, 18, 17,
];

/// For each face direction (1..=6), the five stencil indices whose velocity
/// points out of a block along that face. Edge directions carry exactly their
/// own index. These slot sets define the ghost-exchange payloads.
const FACE_SLOTS: [[usize; 5]; 6] = [
    [1, 7, 9, 11, 13],   // +x
    [2, 8, 10, 12, 14],  // -x
    [3, 7, 10, 15, 17],  // +y
    [4, 8, 9, 16, 18],   // -y
    [5, 11, 14, 15, 18], // +z
    [6, 12, 13, 16, 17], // -z
];

const EDGE_SLOTS: [[usize; 1]; 12] = [
    [7],
    [8],
    [9],
    [10],
    [11],
    [12],
    [13],
    [14],
    [15],
    [16],
    [17],
    [18],
];

/// One of the 18 nearest-neighbor communication directions (6 faces, 12
/// edges), aligned with the nonzero stencil directions. D3Q19 has no
/// corner-only velocity, so there is no corner exchange.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct CommDir(u8);

impl CommDir {
    pub const COUNT: usize = 18;

    pub fn new(index: usize) -> Option<Self> {
        if (1..Q).contains(&index) {
            Some(CommDir(index as u8))
        } else {
            None
        }
    }

    /// All 18 directions in stencil order.
    pub fn all() -> impl Iterator<Item = CommDir> {
        (1..Q).map(|i| CommDir(i as u8))
    }

    /// Stencil index in 1..=18.
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn offset(self) -> [i32; 3] {
        DIRECTIONS[self.index()]
    }

    #[inline]
    pub fn opposite(self) -> CommDir {
        CommDir(OPPOSITE[self.index()] as u8)
    }

    #[inline]
    pub fn is_face(self) -> bool {
        self.index() <= 6
    }

    /// PDF slots carried per boundary cell for this direction.
    pub fn slots(self) -> &'static [usize] {
        let i = self.index();
        if i <= 6 {
            &FACE_SLOTS[i - 1]
        } else {
            &EDGE_SLOTS[i - 7]
        }
    }

    /// Look up the direction matching a neighbor offset, if one exists.
    pub fn from_offset(offset: [i32; 3]) -> Option<CommDir> {
        DIRECTIONS
            .iter()
            .position(|d| *d == offset)
            .filter(|&i| i > 0)
            .map(|i| CommDir(i as u8))
    }

    pub fn from_wire(byte: u8) -> Option<CommDir> {
        Self::new(byte as usize)
    }

    pub fn to_wire(self) -> u8 {
        self.0
    }
}

impl std::fmt::Display for CommDir {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [x, y, z] = self.offset();
        write!(f, "({x:+},{y:+},{z:+})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        let sum: f64 = WEIGHTS.iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
        assert_eq!(WEIGHTS[0], 1.0 / 3.0);
        for i in 1..=6 {
            assert_eq!(WEIGHTS[i], 1.0 / 18.0);
        }
        for i in 7..19 {
            assert_eq!(WEIGHTS[i], 1.0 / 36.0);
        }
    }

    #[test]
    fn opposites_reverse_directions() {
        assert_eq!(OPPOSITE[0], 0);
        for i in 0..Q {
            let o = OPPOSITE[i];
            for a in 0..3 {
                assert_eq!(DIRECTIONS[o][a], -DIRECTIONS[i][a], "dir {i}");
            }
            assert_eq!(OPPOSITE[o], i);
        }
        // Paired layout: opposite(i) = i +/- 1 for i >= 1.
        for i in (1..Q).step_by(2) {
            assert_eq!(OPPOSITE[i], i + 1);
        }
    }

    #[test]
    fn first_moment_vanishes_second_is_isotropic() {
        for a in 0..3 {
            let m1: f64 = (0..Q).map(|i| WEIGHTS[i] * DIRECTIONS[i][a] as f64).sum();
            assert!(m1.abs() < 1e-15);
            for b in 0..3 {
                let m2: f64 = (0..Q)
                    .map(|i| WEIGHTS[i] * (DIRECTIONS[i][a] * DIRECTIONS[i][b]) as f64)
                    .sum();
                let expect = if a == b { CS2 } else { 0.0 };
                assert!((m2 - expect).abs() < 1e-15, "axes {a},{b}");
            }
        }
    }

    #[test]
    fn slot_tables_match_direction_components() {
        // Oracle: recompute the slot sets from the direction table.
        for d in CommDir::all() {
            let off = d.offset();
            let mut expect: Vec<usize> = (1..Q)
                .filter(|&i| {
                    (0..3).all(|a| off[a] == 0 || DIRECTIONS[i][a] == off[a])
                })
                .collect();
            expect.sort_unstable();
            assert_eq!(d.slots(), expect.as_slice(), "direction {d}");
            let expected_len = if d.is_face() { 5 } else { 1 };
            assert_eq!(d.slots().len(), expected_len);
        }
    }

    #[test]
    fn comm_dir_round_trips() {
        for d in CommDir::all() {
            assert_eq!(CommDir::from_offset(d.offset()), Some(d));
            assert_eq!(CommDir::from_wire(d.to_wire()), Some(d));
            assert_eq!(d.opposite().opposite(), d);
        }
        assert_eq!(CommDir::from_offset([0, 0, 0]), None);
        assert_eq!(CommDir::from_offset([1, 1, 1]), None);
        assert_eq!(CommDir::from_wire(0), None);
        assert_eq!(CommDir::from_wire(19), None);
    }
}
