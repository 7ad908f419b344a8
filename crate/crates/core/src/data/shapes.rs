//! Surface samples of unit-scale 3-D solids.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::GeometricGraph;
use crate::rng::seeded;

pub const SPHERE_RADIUS: f64 = 0.5;
pub const TORUS_MAJOR: f64 = 0.35;
pub const TORUS_MINOR: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Sphere,
    Cube,
    Prism,
    Cylinder,
    Torus,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [Self::Sphere, Self::Cube, Self::Prism, Self::Cylinder, Self::Torus];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sphere => "sphere",
            Self::Cube => "cube",
            Self::Prism => "prism",
            Self::Cylinder => "cylinder",
            Self::Torus => "torus",
        }
    }

    /// Invariant under `p -> -p` about the origin.
    fn centrally_symmetric(self) -> bool {
        !matches!(self, Self::Prism)
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown shape `{s}` (expected sphere, cube, prism, cylinder or torus)"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub n_points: usize,
    pub seed: u64,
}

fn unit_vector(rng: &mut impl Rng) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi = rng.gen_range(0.0..2.0 * PI);
    let rho = (1.0 - z * z).max(0.0).sqrt();
    [rho * phi.cos(), rho * phi.sin(), z]
}

fn surface_point(kind: ShapeKind, rng: &mut impl Rng) -> [f64; 3] {
    match kind {
        ShapeKind::Sphere => unit_vector(rng).map(|c| c * SPHERE_RADIUS),
        ShapeKind::Cube => {
            let face = rng.gen_range(0..6);
            let axis = face / 2;
            let mut p = [rng.gen_range(-0.5..=0.5), rng.gen_range(-0.5..=0.5), rng.gen_range(-0.5..=0.5)];
            p[axis] = if face % 2 == 0 { -0.5 } else { 0.5 };
            p
        }
        ShapeKind::Prism => {
            // Equilateral triangle of side 1 in the xy-plane, height 1 along z.
            let h = 3f64.sqrt() / 2.0;
            let verts = [[-0.5, -h / 3.0], [0.5, -h / 3.0], [0.0, 2.0 * h / 3.0]];
            let cap = 3f64.sqrt() / 4.0;
            let pick = rng.gen_range(0.0..3.0 + 2.0 * cap);
            if pick < 3.0 {
                let side = (pick as usize).min(2);
                let (a, b) = (verts[side], verts[(side + 1) % 3]);
                let s: f64 = rng.gen();
                [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), rng.gen_range(-0.5..=0.5)]
            } else {
                let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
                if u + v > 1.0 {
                    (u, v) = (1.0 - u, 1.0 - v);
                }
                let x = verts[0][0] + u * (verts[1][0] - verts[0][0]) + v * (verts[2][0] - verts[0][0]);
                let y = verts[0][1] + u * (verts[1][1] - verts[0][1]) + v * (verts[2][1] - verts[0][1]);
                [x, y, if pick < 3.0 + cap { -0.5 } else { 0.5 }]
            }
        }
        ShapeKind::Cylinder => {
            let r = 0.5;
            let side = 2.0 * PI * r;
            let caps = 2.0 * PI * r * r;
            let phi = rng.gen_range(0.0..2.0 * PI);
            if rng.gen_range(0.0..side + caps) < side {
                [r * phi.cos(), r * phi.sin(), rng.gen_range(-0.5..=0.5)]
            } else {
                let rho = r * rng.gen::<f64>().sqrt();
                [rho * phi.cos(), rho * phi.sin(), if rng.gen() { -0.5 } else { 0.5 }]
            }
        }
        ShapeKind::Torus => {
            // Area element is proportional to R + r cos(theta).
            let theta = loop {
                let th = rng.gen_range(0.0..2.0 * PI);
                if rng.gen::<f64>() * (TORUS_MAJOR + TORUS_MINOR) <= TORUS_MAJOR + TORUS_MINOR * th.cos() {
                    break th;
                }
            };
            let phi = rng.gen_range(0.0..2.0 * PI);
            let ring = TORUS_MAJOR + TORUS_MINOR * theta.cos();
            [ring * phi.cos(), ring * phi.sin(), TORUS_MINOR * theta.sin()]
        }
    }
}

/// Uniform surface sample, centered, with features `x_i = η_i − μ`.
///
/// Centrally symmetric shapes are sampled in antithetic pairs `(p, −p)` so the
/// centroid is the shape center; an odd remainder on the sphere is filled by
/// an equilateral triple on a great circle.
pub fn make_shape(spec: &ShapeSpec) -> Result<GeometricGraph> {
    if spec.n_points < 4 {
        return Err(Error::InvalidArgument(format!("shapes need at least 4 points, got {}", spec.n_points)));
    }
    let mut rng = seeded(spec.seed);
    let n = spec.n_points;
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(n);
    if spec.kind.centrally_symmetric() {
        let triple = spec.kind == ShapeKind::Sphere && n % 2 == 1;
        let pairs = if triple { (n - 3) / 2 } else { n / 2 };
        for _ in 0..pairs {
            let p = surface_point(spec.kind, &mut rng);
            pts.push(p);
            pts.push(p.map(|c| -c));
        }
        if triple {
            let a = unit_vector(&mut rng);
            let helper = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let mut b = cross(a, helper);
            let nb = b.iter().map(|c| c * c).sum::<f64>().sqrt();
            b = b.map(|c| c / nb);
            for k in 0..3 {
                let ang = 2.0 * PI * k as f64 / 3.0;
                pts.push(std::array::from_fn(|i| SPHERE_RADIUS * (ang.cos() * a[i] + ang.sin() * b[i])));
            }
        } else if n % 2 == 1 {
            pts.push(surface_point(spec.kind, &mut rng));
        }
    } else {
        pts.extend((0..n).map(|_| surface_point(spec.kind, &mut rng)));
    }
    let mut positions = Array2::from_shape_fn((n, 3), |(i, j)| pts[i][j]);
    let mu = positions.mean_axis(Axis(0)).expect("n >= 4");
    positions -= &mu;
    let features = positions.clone();
    GeometricGraph::new(features, positions, Vec::new())
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
