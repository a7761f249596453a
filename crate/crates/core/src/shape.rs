//! Parametric shape primitives and triangle meshes.
//!
//! Shapes are defined in normalized model space (they fit `[-0.5, 0.5]^3`
//! for library use) and provide three queries: signed distance, unsigned
//! surface distance, and exact ray intersection. World placement happens by
//! transforming rays/points into model space with a pose.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        radius: f64,
    },
    Cuboid {
        half_extents: [f64; 3],
    },
    /// Capped cylinder along the +y axis.
    Cylinder {
        radius: f64,
        half_height: f64,
    },
    /// Union of offset subshapes. Surface distance is the minimum over
    /// parts: exact outside the union, a lower bound inside overlap regions
    /// (it may report a buried part surface). Good enough for
    /// voxel-resolution distance fields.
    Compound {
        parts: Vec<ShapePart>,
    },
    TriMesh {
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[u32; 3]>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapePart {
    pub offset: [f64; 3],
    pub shape: Box<Shape>,
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Sphere { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidParameter("sphere radius must be > 0".into()));
                }
            }
            Shape::Cuboid { half_extents } => {
                if !half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
                    return Err(Error::InvalidParameter(
                        "cuboid half extents must be > 0".into(),
                    ));
                }
            }
            Shape::Cylinder {
                radius,
                half_height,
            } => {
                if !(radius.is_finite() && *radius > 0.0 && half_height.is_finite() && *half_height > 0.0)
                {
                    return Err(Error::InvalidParameter(
                        "cylinder radius/half height must be > 0".into(),
                    ));
                }
            }
            Shape::Compound { parts } => {
                if parts.is_empty() {
                    return Err(Error::EmptyShape);
                }
                for p in parts {
                    p.shape.validate()?;
                }
            }
            Shape::TriMesh {
                vertices,
                triangles,
            } => {
                if triangles.is_empty() {
                    return Err(Error::EmptyShape);
                }
                for t in triangles {
                    if t.iter().any(|&i| i as usize >= vertices.len()) {
                        return Err(Error::InvalidParameter(
                            "triangle index out of range".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Signed distance to the boundary (negative inside). For `Compound`
    /// this is the union min; for `TriMesh` the unsigned distance is
    /// returned (meshes are treated as shells).
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Cuboid { half_extents } => {
                let q = Vector3::new(
                    p.x.abs() - half_extents[0],
                    p.y.abs() - half_extents[1],
                    p.z.abs() - half_extents[2],
                );
                let outside = Vector3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
            Shape::Cylinder {
                radius,
                half_height,
            } => {
                let dr = (p.x * p.x + p.z * p.z).sqrt() - radius;
                let dy = p.y.abs() - half_height;
                let outside = (dr.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
                outside + dr.max(dy).min(0.0)
            }
            Shape::Compound { parts } => parts
                .iter()
                .map(|part| part.shape.signed_distance(&(p - Vector3::from(part.offset))))
                .fold(f64::INFINITY, f64::min),
            Shape::TriMesh { .. } => self.surface_distance(p),
        }
    }

    /// Unsigned distance to the surface. Exact for analytic primitives and
    /// meshes; for compounds it is the min over part surfaces.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Shape::Compound { parts } => parts
                .iter()
                .map(|part| part.shape.surface_distance(&(p - Vector3::from(part.offset))))
                .fold(f64::INFINITY, f64::min),
            Shape::TriMesh {
                vertices,
                triangles,
            } => triangles
                .iter()
                .map(|t| {
                    point_triangle_distance(
                        p,
                        &Vector3::from(vertices[t[0] as usize]),
                        &Vector3::from(vertices[t[1] as usize]),
                        &Vector3::from(vertices[t[2] as usize]),
                    )
                })
                .fold(f64::INFINITY, f64::min),
            _ => self.signed_distance(p).abs(),
        }
    }

    /// Smallest `t >= 0` with `o + t*d` on the surface. `d` need not be
    /// normalized; `t` is in units of `|d|`, which makes the parameter
    /// invariant under affine changes of frame.
    pub fn ray_hit(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match self {
            Shape::Sphere { radius } => {
                let a = d.dot(d);
                if a == 0.0 {
                    return None;
                }
                let b = 2.0 * o.dot(d);
                let c = o.dot(o) - radius * radius;
                smallest_root(a, b, c)
            }
            Shape::Cuboid { half_extents } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for k in 0..3 {
                    let h = half_extents[k];
                    if d[k].abs() < 1e-300 {
                        if o[k].abs() > h {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (-h - o[k]) / d[k];
                    let t2 = (h - o[k]) / d[k];
                    t_near = t_near.max(t1.min(t2));
                    t_far = t_far.min(t1.max(t2));
                }
                if t_far < t_near.max(0.0) {
                    None
                } else if t_near >= 0.0 {
                    Some(t_near)
                } else {
                    Some(t_far)
                }
            }
            Shape::Cylinder {
                radius,
                half_height,
            } => {
                let mut best: Option<f64> = None;
                // Lateral surface.
                let a = d.x * d.x + d.z * d.z;
                if a > 0.0 {
                    let b = 2.0 * (o.x * d.x + o.z * d.z);
                    let c = o.x * o.x + o.z * o.z - radius * radius;
                    for t in roots(a, b, c) {
                        if t >= 0.0 && (o.y + t * d.y).abs() <= *half_height {
                            best = Some(best.map_or(t, |b: f64| b.min(t)));
                        }
                    }
                }
                // Caps.
                if d.y.abs() > 1e-300 {
                    for cap in [-*half_height, *half_height] {
                        let t = (cap - o.y) / d.y;
                        if t >= 0.0 {
                            let x = o.x + t * d.x;
                            let z = o.z + t * d.z;
                            if x * x + z * z <= radius * radius {
                                best = Some(best.map_or(t, |b: f64| b.min(t)));
                            }
                        }
                    }
                }
                best
            }
            Shape::Compound { parts } => parts
                .iter()
                .filter_map(|part| part.shape.ray_hit(&(o - Vector3::from(part.offset)), d))
                .fold(None, |acc, t| Some(acc.map_or(t, |a: f64| a.min(t)))),
            Shape::TriMesh {
                vertices,
                triangles,
            } => triangles
                .iter()
                .filter_map(|t| {
                    ray_triangle(
                        o,
                        d,
                        &Vector3::from(vertices[t[0] as usize]),
                        &Vector3::from(vertices[t[1] as usize]),
                        &Vector3::from(vertices[t[2] as usize]),
                    )
                })
                .fold(None, |acc, t| Some(acc.map_or(t, |a: f64| a.min(t)))),
        }
    }

    /// Model-space axis-aligned bounds.
    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            Shape::Sphere { radius } => (
                Vector3::from_element(-radius),
                Vector3::from_element(*radius),
            ),
            Shape::Cuboid { half_extents } => {
                let h = Vector3::from(*half_extents);
                (-h, h)
            }
            Shape::Cylinder {
                radius,
                half_height,
            } => (
                Vector3::new(-radius, -half_height, -radius),
                Vector3::new(*radius, *half_height, *radius),
            ),
            Shape::Compound { parts } => {
                let mut lo = Vector3::from_element(f64::INFINITY);
                let mut hi = Vector3::from_element(f64::NEG_INFINITY);
                for part in parts {
                    let (plo, phi) = part.shape.aabb();
                    let off = Vector3::from(part.offset);
                    lo = lo.inf(&(plo + off));
                    hi = hi.sup(&(phi + off));
                }
                (lo, hi)
            }
            Shape::TriMesh { vertices, .. } => {
                let mut lo = Vector3::from_element(f64::INFINITY);
                let mut hi = Vector3::from_element(f64::NEG_INFINITY);
                for v in vertices {
                    let v = Vector3::from(*v);
                    lo = lo.inf(&v);
                    hi = hi.sup(&v);
                }
                (lo, hi)
            }
        }
    }

    pub fn fits_unit_cube(&self) -> bool {
        let (lo, hi) = self.aabb();
        lo.iter().all(|v| *v >= -0.5 - 1e-9) && hi.iter().all(|v| *v <= 0.5 + 1e-9)
    }

    /// Recenters a compound so its AABB midpoint sits at the origin.
    pub fn centered(self) -> Shape {
        let (lo, hi) = self.aabb();
        let c = 0.5 * (lo + hi);
        if c.norm() < 1e-12 {
            return self;
        }
        match self {
            Shape::Compound { parts } => Shape::Compound {
                parts: parts
                    .into_iter()
                    .map(|p| ShapePart {
                        offset: (Vector3::from(p.offset) - c).into(),
                        shape: p.shape,
                    })
                    .collect(),
            },
            Shape::TriMesh {
                vertices,
                triangles,
            } => Shape::TriMesh {
                vertices: vertices
                    .into_iter()
                    .map(|v| (Vector3::from(v) - c).into())
                    .collect(),
                triangles,
            },
            other => Shape::Compound {
                parts: vec![ShapePart {
                    offset: (-c).into(),
                    shape: Box::new(other),
                }],
            },
        }
    }
}

/// Chair-like profile: a seat slab plus a back slab, recentered.
pub fn lshape(seat_half: [f64; 3], back_half: [f64; 3]) -> Shape {
    let seat_y = -back_half[1] + seat_half[1];
    let back_z = -seat_half[2] + back_half[2];
    Shape::Compound {
        parts: vec![
            ShapePart {
                offset: [0.0, seat_y, 0.0],
                shape: Box::new(Shape::Cuboid {
                    half_extents: seat_half,
                }),
            },
            ShapePart {
                offset: [0.0, back_half[1], back_z],
                shape: Box::new(Shape::Cuboid {
                    half_extents: back_half,
                }),
            },
        ],
    }
    .centered()
}

/// Table-like composite: a square top slab on four corner legs, recentered.
/// Square in x/z, so it is invariant under quarter turns about +y.
pub fn table_like(top_half: f64, top_thickness: f64, leg_half: f64, leg_height: f64) -> Shape {
    let mut parts = vec![ShapePart {
        offset: [0.0, leg_height + top_thickness, 0.0],
        shape: Box::new(Shape::Cuboid {
            half_extents: [top_half, top_thickness, top_half],
        }),
    }];
    let leg_off = top_half - leg_half;
    for sx in [-1.0, 1.0] {
        for sz in [-1.0, 1.0] {
            parts.push(ShapePart {
                offset: [sx * leg_off, 0.0, sz * leg_off],
                shape: Box::new(Shape::Cuboid {
                    half_extents: [leg_half, leg_height, leg_half],
                }),
            });
        }
    }
    Shape::Compound { parts }.centered()
}

fn roots(a: f64, b: f64, c: f64) -> impl Iterator<Item = f64> {
    let disc = b * b - 4.0 * a * c;
    let pair = if disc < 0.0 {
        [f64::NAN, f64::NAN]
    } else {
        let s = disc.sqrt();
        [(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)]
    };
    pair.into_iter().filter(|t| t.is_finite())
}

fn smallest_root(a: f64, b: f64, c: f64) -> Option<f64> {
    roots(a, b, c)
        .filter(|&t| t >= 0.0)
        .fold(None, |acc, t| Some(acc.map_or(t, |x: f64| x.min(t))))
}

/// Möller-Trumbore; returns `t` for the ray `o + t*d`.
fn ray_triangle(
    o: &Vector3<f64>,
    d: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - v0;
    let u = s.dot(&p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t >= 0.0).then_some(t)
}

/// Closest-point distance from `p` to triangle `(a, b, c)`.
fn point_triangle_distance(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;

    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - v * ab).norm();
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - w * ac).norm();
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - w * (c - b)).norm();
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}
