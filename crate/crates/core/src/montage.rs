//! Sensor geometry: 3-D head positions, projection to the plane, and the
//! normalized 2-D layout coordinates consumed by spatial attention.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MARGIN: f64 = 0.1;

/// A named sensor with head-centered 3-D coordinates in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub name: String,
    pub pos3d: [f64; 3],
}

impl Sensor {
    pub fn new(name: impl Into<String>, x: f64, y: f64, z: f64) -> Sensor {
        Sensor {
            name: name.into(),
            pos3d: [x, y, z],
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.pos3d.iter().all(|v| v.is_finite()) {
            return Err(Error::Geometry(format!(
                "sensor {}: non-finite position",
                self.name
            )));
        }
        if norm3(&self.pos3d) == 0.0 {
            return Err(Error::Geometry(format!(
                "sensor {}: position at head center (zero norm)",
                self.name
            )));
        }
        Ok(())
    }
}

fn norm3(p: &[f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// An ordered sensor set plus its normalized planar layout.
///
/// `layout2d` is recomputed from the sensor subset whenever a montage is
/// built, so a subsampled montage spans the full `[margin, 1-margin]` square
/// again rather than inheriting its parent's coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Montage {
    sensors: Vec<Sensor>,
    layout2d: Vec<[f64; 2]>,
    margin: f64,
}

/// Azimuthal-equidistant projection about the +z axis.
///
/// With theta the polar angle and phi the azimuth, each position maps to
/// `(theta cos phi, theta sin phi)`. The map is continuous, scale-invariant,
/// rotation-equivariant about z, and preserves left/right symmetry.
pub fn project_to_plane(positions: &[[f64; 3]]) -> Result<Vec<[f64; 2]>> {
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = norm3(p);
            if !r.is_finite() || r == 0.0 {
                return Err(Error::Geometry(format!(
                    "position {i}: zero-norm or non-finite"
                )));
            }
            let theta = (p[2] / r).clamp(-1.0, 1.0).acos();
            let phi = p[1].atan2(p[0]);
            Ok([theta * phi.cos(), theta * phi.sin()])
        })
        .collect()
}

/// Per-axis affine min-max map onto `[margin, 1-margin]`.
///
/// An axis whose raw coordinates are all equal (single sensor, collinear
/// layouts) maps to 0.5.
pub fn normalize_layout(raw: &[[f64; 2]], margin: f64) -> Result<Vec<[f64; 2]>> {
    if raw.is_empty() {
        return Err(Error::Config("normalize_layout: empty layout".to_string()));
    }
    if !(0.0..0.5).contains(&margin) {
        return Err(Error::Config(format!(
            "normalize_layout: margin {margin} outside [0, 0.5)"
        )));
    }
    let mut out = vec![[0.0; 2]; raw.len()];
    for axis in 0..2 {
        let min = raw.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
        let max = raw.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        for (o, p) in out.iter_mut().zip(raw) {
            o[axis] = if span == 0.0 {
                0.5
            } else {
                margin + (p[axis] - min) / span * (1.0 - 2.0 * margin)
            };
        }
    }
    Ok(out)
}

impl Montage {
    pub fn new(sensors: Vec<Sensor>, margin: f64) -> Result<Montage> {
        if sensors.is_empty() {
            return Err(Error::Config("montage has no sensors".to_string()));
        }
        for s in &sensors {
            s.validate()?;
        }
        for (i, s) in sensors.iter().enumerate() {
            if sensors[..i].iter().any(|t| t.name == s.name) {
                return Err(Error::Config(format!("duplicate sensor name {}", s.name)));
            }
        }
        let positions: Vec<[f64; 3]> = sensors.iter().map(|s| s.pos3d).collect();
        let raw = project_to_plane(&positions)?;
        let layout2d = normalize_layout(&raw, margin)?;
        Ok(Montage {
            sensors,
            layout2d,
            margin,
        })
    }

    pub fn with_default_margin(sensors: Vec<Sensor>) -> Result<Montage> {
        Montage::new(sensors, DEFAULT_MARGIN)
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn layout2d(&self) -> &[[f64; 2]] {
        &self.layout2d
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.sensors.iter().position(|s| s.name == name)
    }

    /// Restrict to the named sensors, in the given order. The planar layout
    /// is recomputed from the subset.
    pub fn subsample(&self, names: &[String]) -> Result<Montage> {
        let missing: Vec<&str> = names
            .iter()
            .filter(|n| self.index_of(n).is_none())
            .map(|n| n.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "subsample: unknown sensor names: {}",
                missing.join(", ")
            )));
        }
        let sensors: Vec<Sensor> = names
            .iter()
            .map(|n| self.sensors[self.index_of(n).unwrap()].clone())
            .collect();
        Montage::new(sensors, self.margin)
    }

    /// Indices of the named sensors within this montage.
    pub fn indices_of(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.index_of(n)
                    .ok_or_else(|| Error::Config(format!("unknown sensor name {n}")))
            })
            .collect()
    }

    /// Parse the `name,x,y,z` CSV format. `#`-prefixed lines are comments.
    pub fn parse_csv(text: &str, margin: f64) -> Result<Montage> {
        let mut sensors = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected `name,x,y,z`, got {} fields", fields.len()),
                });
            }
            let mut coords = [0.0; 3];
            for (k, f) in fields[1..].iter().enumerate() {
                coords[k] = f.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: format!("invalid coordinate `{f}`"),
                })?;
            }
            sensors.push(Sensor::new(fields[0], coords[0], coords[1], coords[2]));
        }
        Montage::new(sensors, margin)
    }

    pub fn load_csv(path: &std::path::Path, margin: f64) -> Result<Montage> {
        Montage::parse_csv(&std::fs::read_to_string(path)?, margin)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# name,x,y,z (meters)\n");
        for s in &self.sensors {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.name, s.pos3d[0], s.pos3d[1], s.pos3d[2]
            ));
        }
        out
    }
}
