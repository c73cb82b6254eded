use core::fmt;
use core::str::FromStr;

use crate::Error;

/// Slice normal direction. Volume coordinates are `(x, y, z)` with `x`
/// varying fastest in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Coordinate index of the slice normal.
    pub fn normal(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// Coordinate indices `(u, v)` spanning the slice plane. `u` runs along
    /// image columns and `v` along image rows.
    pub fn plane(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (0, 2),
            Axis::Z => (0, 1),
        }
    }

    /// Lift in-plane coordinates and depth to a 3D point.
    pub fn point(self, u: f64, v: f64, t: f64) -> [f64; 3] {
        let mut p = [0.0; 3];
        let (a, b) = self.plane();
        p[a] = u;
        p[b] = v;
        p[self.normal()] = t;
        p
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" | "X" | "sagittal" => Ok(Axis::X),
            "y" | "Y" | "coronal" => Ok(Axis::Y),
            "z" | "Z" | "axial" => Ok(Axis::Z),
            other => Err(Error::Validation(alloc::format!(
                "unknown axis `{other}` (expected x, y or z)"
            ))),
        }
    }
}
