//! Node placement, rotated planar arrays and per-slot motion.
//!
//! All coordinates live in one global frame with the ARSU's ground
//! projection at the origin. Arrays are uniform rectangular grids laid out
//! in their own local xy-plane, rotated and then translated to the node
//! center.

use thiserror::Error;

use crate::scalar::{self, Real, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid array: {0}")]
    InvalidArray(String),
    #[error("elevation angle {value} of node {index} must lie in (0, pi/2]")]
    InvalidElevation { index: usize, value: f64 },
    #[error("a network needs at least one vehicle")]
    NoVehicles,
    #[error("the ground unit must be static")]
    MovingGrsu,
    #[error("{count} position overrides given for {vehicles} vehicles")]
    OverrideCount { count: usize, vehicles: usize },
    #[error("cannot advance past slot {horizon} (currently at {slot})")]
    AdvancePastHorizon { slot: usize, horizon: usize },
}

/// Uniform rectangular planar array: grid size, spacing and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArraySpec<T> {
    rows: usize,
    cols: usize,
    spacing: T,
    slant: T,
    downtilt: T,
    bearing: T,
}

impl<T: Real> ArraySpec<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        spacing: T,
        slant: T,
        downtilt: T,
        bearing: T,
    ) -> Result<Self, GeometryError> {
        let half_pi = T::FRAC_PI_2();
        let tau = T::PI() + T::PI();
        if rows == 0 || cols == 0 {
            return Err(GeometryError::InvalidArray(format!(
                "grid {rows}x{cols} has no elements"
            )));
        }
        if !(spacing > T::zero() && spacing.is_finite()) {
            return Err(GeometryError::InvalidArray(format!(
                "spacing {spacing:?} must be positive"
            )));
        }
        for (name, angle) in [("slant", slant), ("downtilt", downtilt)] {
            if !(angle >= -half_pi && angle <= half_pi) {
                return Err(GeometryError::InvalidArray(format!(
                    "{name} angle {angle:?} outside [-pi/2, pi/2]"
                )));
            }
        }
        if !(bearing >= T::zero() && bearing < tau) {
            return Err(GeometryError::InvalidArray(format!(
                "bearing angle {bearing:?} outside [0, 2pi)"
            )));
        }
        Ok(Self {
            rows,
            cols,
            spacing,
            slant,
            downtilt,
            bearing,
        })
    }

    /// Square `side x side` array with the given spacing and orientation.
    pub fn square(side: usize, spacing: T, angles: [T; 3]) -> Result<Self, GeometryError> {
        Self::new(side, side, spacing, angles[0], angles[1], angles[2])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn angles(&self) -> [T; 3] {
        [self.slant, self.downtilt, self.bearing]
    }

    /// Element offsets from the array center, rotated into the global frame.
    pub fn offsets(&self) -> Vec<Vec3<T>> {
        let r = rotation_matrix(self.slant, self.downtilt, self.bearing);
        let two = T::lit(2.0);
        let half = self.spacing / two;
        let (lx, ly) = (
            T::from_usize(self.rows).unwrap(),
            T::from_usize(self.cols).unwrap(),
        );
        let mut out = Vec::with_capacity(self.len());
        for m in 1..=self.rows {
            let x = (two * T::from_usize(m).unwrap() - lx - T::one()) * half;
            for mp in 1..=self.cols {
                let y = (two * T::from_usize(mp).unwrap() - ly - T::one()) * half;
                out.push(mat_vec(&r, [x, y, T::zero()]));
            }
        }
        out
    }
}

/// `R_X(slant) * R_Y(downtilt) * R_Z(bearing)`.
pub fn rotation_matrix<T: Real>(slant: T, downtilt: T, bearing: T) -> [[T; 3]; 3] {
    let (o, z) = (T::one(), T::zero());
    let (sx, cx) = slant.sin_cos();
    let (sy, cy) = downtilt.sin_cos();
    let (sz, cz) = bearing.sin_cos();
    let rx = [[o, z, z], [z, cx, -sx], [z, sx, cx]];
    let ry = [[cy, z, sy], [z, o, z], [-sy, z, cy]];
    let rz = [[cz, -sz, z], [sz, cz, z], [z, z, o]];
    mat_mul(&mat_mul(&rx, &ry), &rz)
}

pub fn mat_mul<T: Real>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).fold(T::zero(), |acc, l| acc + a[i][l] * b[l][j]);
        }
    }
    out
}

pub fn mat_vec<T: Real>(a: &[[T; 3]; 3], v: Vec3<T>) -> Vec3<T> {
    [
        scalar::dot(a[0], v),
        scalar::dot(a[1], v),
        scalar::dot(a[2], v),
    ]
}

/// Absolute element positions of an array placed at `center`.
pub fn element_positions<T: Real>(spec: &ArraySpec<T>, center: Vec3<T>) -> Vec<Vec3<T>> {
    spec.offsets()
        .into_iter()
        .map(|o| scalar::add(center, o))
        .collect()
}

/// Vector from a transmit element to a receive element; element arguments are
/// rotated offsets relative to their array centers.
pub fn distance_vector<T: Real>(
    tx_center: Vec3<T>,
    tx_element: Vec3<T>,
    rx_center: Vec3<T>,
    rx_element: Vec3<T>,
) -> Vec3<T> {
    scalar::sub(
        scalar::add(rx_center, rx_element),
        scalar::add(tx_center, tx_element),
    )
}

/// Velocity vector from speed, azimuth and elevation.
pub fn make_velocity<T: Real>(speed: T, azimuth: T, elevation: T) -> Vec3<T> {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    [speed * ca * ce, speed * sa * ce, speed * se]
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState<T> {
    pub center: Vec3<T>,
    pub velocity: Vec3<T>,
    pub array: ArraySpec<T>,
}

impl<T: Real> NodeState<T> {
    pub fn new(center: Vec3<T>, velocity: Vec3<T>, array: ArraySpec<T>) -> Self {
        Self {
            center,
            velocity,
            array,
        }
    }

    pub fn element_positions(&self) -> Vec<Vec3<T>> {
        element_positions(&self.array, self.center)
    }

    fn moved(&self, dt: T) -> Self {
        Self {
            center: scalar::add(self.center, scalar::scale(self.velocity, dt)),
            ..self.clone()
        }
    }
}

/// Positions and velocities of every node at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<T> {
    slot: usize,
    horizon: usize,
    slot_len: T,
    pub vehicles: Vec<NodeState<T>>,
    pub arsu: NodeState<T>,
    pub grsu: NodeState<T>,
}

impl<T: Real> NetworkState<T> {
    pub fn new(
        horizon: usize,
        slot_len: T,
        vehicles: Vec<NodeState<T>>,
        arsu: NodeState<T>,
        grsu: NodeState<T>,
    ) -> Result<Self, GeometryError> {
        if vehicles.is_empty() {
            return Err(GeometryError::NoVehicles);
        }
        if grsu.velocity.iter().any(|v| *v != T::zero()) {
            return Err(GeometryError::MovingGrsu);
        }
        Ok(Self {
            slot: 0,
            horizon,
            slot_len,
            vehicles,
            arsu,
            grsu,
        })
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn slot_len(&self) -> T {
        self.slot_len
    }

    /// State one slot later: vehicles and ARSU move by `velocity * slot_len`.
    pub fn advance(&self) -> Result<Self, GeometryError> {
        if self.slot >= self.horizon {
            return Err(GeometryError::AdvancePastHorizon {
                slot: self.slot,
                horizon: self.horizon,
            });
        }
        Ok(Self {
            slot: self.slot + 1,
            horizon: self.horizon,
            slot_len: self.slot_len,
            vehicles: self
                .vehicles
                .iter()
                .map(|v| v.moved(self.slot_len))
                .collect(),
            arsu: self.arsu.moved(self.slot_len),
            grsu: self.grsu.clone(),
        })
    }

    /// States for slots `0..horizon`.
    pub fn trajectory(&self) -> Result<Vec<Self>, GeometryError> {
        let mut out = Vec::with_capacity(self.horizon);
        let mut cur = self.clone();
        for _ in 0..self.horizon {
            let next = cur.advance()?;
            out.push(cur);
            cur = next;
        }
        Ok(out)
    }
}

/// Initial layout: the ARSU hovers above the origin, vehicles sit on the
/// positive x-axis at the given elevation angles, the GRSU on the negative
/// x-axis. Explicit positions override the angle-based placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment<T> {
    pub altitude: T,
    pub vehicle_elevations: Vec<T>,
    pub grsu_elevation: T,
    pub vehicle_velocity: Vec3<T>,
    pub arsu_velocity: Vec3<T>,
    pub vehicle_array: ArraySpec<T>,
    pub arsu_array: ArraySpec<T>,
    pub grsu_array: ArraySpec<T>,
    pub horizon: usize,
    pub slot_len: T,
    pub vehicle_positions: Option<Vec<Vec3<T>>>,
    pub arsu_position: Option<Vec3<T>>,
    pub grsu_position: Option<Vec3<T>>,
}

impl<T: Real> Deployment<T> {
    pub fn initial_state(&self) -> Result<NetworkState<T>, GeometryError> {
        let ground_offset = |index: usize, theta: T| -> Result<T, GeometryError> {
            if !(theta > T::zero() && theta <= T::FRAC_PI_2()) {
                return Err(GeometryError::InvalidElevation {
                    index,
                    value: theta.to_f64().unwrap_or(f64::NAN),
                });
            }
            Ok(self.altitude * theta.cos() / theta.sin())
        };
        let centers: Vec<Vec3<T>> = match &self.vehicle_positions {
            Some(p) if p.len() != self.vehicle_elevations.len() => {
                return Err(GeometryError::OverrideCount {
                    count: p.len(),
                    vehicles: self.vehicle_elevations.len(),
                })
            }
            Some(p) => p.clone(),
            None => self
                .vehicle_elevations
                .iter()
                .enumerate()
                .map(|(k, &theta)| Ok([ground_offset(k, theta)?, T::zero(), T::zero()]))
                .collect::<Result<_, GeometryError>>()?,
        };
        let vehicles = centers
            .into_iter()
            .map(|c| NodeState::new(c, self.vehicle_velocity, self.vehicle_array))
            .collect();
        let arsu_center = self
            .arsu_position
            .unwrap_or([T::zero(), T::zero(), self.altitude]);
        let grsu_center = match self.grsu_position {
            Some(p) => p,
            None => {
                let x = ground_offset(self.vehicle_elevations.len(), self.grsu_elevation)?;
                [-x, T::zero(), T::zero()]
            }
        };
        NetworkState::new(
            self.horizon,
            self.slot_len,
            vehicles,
            NodeState::new(arsu_center, self.arsu_velocity, self.arsu_array),
            NodeState::new(grsu_center, scalar::zero(), self.grsu_array),
        )
    }
}
