//! Ellipse phantoms: additive μ superposition with optional metal inserts.

use crate::ct::Image;
use crate::error::{Error, Result};
use crate::io::config::Config;
use crate::mask::{Mask, MaskDomain};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    /// Center in mm, world coordinates (x right, y up, origin at isocenter).
    pub center: (f64, f64),
    /// Semi-axes in mm.
    pub axes: (f64, f64),
    /// Rotation in radians, counterclockwise.
    pub rotation: f64,
    /// Linear attenuation contribution in mm^-1 (additive).
    pub mu: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.rotation.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let (a, b) = self.axes;
        (u / a) * (u / a) + (v / b) * (v / b) <= 1.0
    }

    fn bounding_radius(&self) -> f64 {
        self.axes.0.max(self.axes.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetalInsert {
    pub shape: Ellipse,
    /// Material tag; only informational at desk scale ("iron" by default).
    pub material: String,
}

/// Declarative phantom: soft-tissue/bone ellipses plus metal inserts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhantomSpec {
    pub ellipses: Vec<Ellipse>,
    pub metal: Vec<MetalInsert>,
}

impl PhantomSpec {
    /// All ellipses (including metal) must fit in the w x h mm field of view.
    pub fn validate(&self, fov_width: f64, fov_height: f64) -> Result<()> {
        let all = self.ellipses.iter().chain(self.metal.iter().map(|m| &m.shape));
        for (i, e) in all.enumerate() {
            let r = e.bounding_radius();
            if e.center.0.abs() + r > fov_width / 2.0 || e.center.1.abs() + r > fov_height / 2.0 {
                return Err(Error::config(format!(
                    "ellipse {} at ({}, {}) with radius {} exceeds the {}x{} mm field of view",
                    i, e.center.0, e.center.1, r, fov_width, fov_height
                )));
            }
            if !(e.axes.0 > 0.0 && e.axes.1 > 0.0) {
                return Err(Error::config(format!("ellipse {} has non-positive semi-axes", i)));
            }
        }
        Ok(())
    }

    /// Parse from the structured text format: one `[ellipse]` section per
    /// ellipse, one `[metal]` section per insert.
    pub fn from_config(cfg: &Config) -> Result<PhantomSpec> {
        fn ellipse_of(section: &crate::io::config::Section) -> Result<Ellipse> {
            let center = section.get_f64_list("center")?;
            let axes = section.get_f64_list("axes")?;
            if center.len() != 2 || axes.len() != 2 {
                return Err(Error::config(format!(
                    "[{}] center/axes must each have two components",
                    section.name
                )));
            }
            Ok(Ellipse {
                center: (center[0], center[1]),
                axes: (axes[0], axes[1]),
                rotation: if section.get("rotation").is_some() { section.get_f64("rotation")? } else { 0.0 },
                mu: section.get_f64("mu")?,
            })
        }

        let mut spec = PhantomSpec::default();
        for section in cfg.sections() {
            match section.name.as_str() {
                "ellipse" => {
                    section.check_keys(&["center", "axes", "rotation", "mu"])?;
                    spec.ellipses.push(ellipse_of(section)?);
                }
                "metal" => {
                    section.check_keys(&["center", "axes", "rotation", "mu", "material"])?;
                    spec.metal.push(MetalInsert {
                        shape: ellipse_of(section)?,
                        material: section.get("material").unwrap_or("iron").to_string(),
                    });
                }
                other => return Err(Error::config(format!("unknown section [{}] in phantom spec", other))),
            }
        }
        Ok(spec)
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let fmt = |e: &Ellipse, name: &str, extra: &str| {
            format!(
                "[{}]\ncenter = {}, {}\naxes = {}, {}\nrotation = {}\nmu = {}\n{}\n",
                name, e.center.0, e.center.1, e.axes.0, e.axes.1, e.rotation, e.mu, extra
            )
        };
        for e in &self.ellipses {
            out.push_str(&fmt(e, "ellipse", ""));
        }
        for m in &self.metal {
            out.push_str(&fmt(&m.shape, "metal", &format!("material = {}", m.material)));
        }
        out
    }
}

fn sample_mu(spec: &PhantomSpec, x: f64, y: f64, include_metal: bool) -> f64 {
    let mut mu = 0.0;
    for e in &spec.ellipses {
        if e.contains(x, y) {
            mu += e.mu;
        }
    }
    if include_metal {
        for m in &spec.metal {
            if m.shape.contains(x, y) {
                mu += m.shape.mu;
            }
        }
    }
    mu
}

/// Rasterize at pixel centers (additive superposition of μ values).
pub fn render_phantom(spec: &PhantomSpec, width: usize, height: usize, pixel_size: f64) -> Result<Image> {
    render_phantom_supersampled(spec, width, height, pixel_size, 1)
}

/// Rasterize with an n x n subsample grid per pixel; the pixel value is the
/// mean, approximating area coverage. n = 1 reduces to pixel centers.
pub fn render_phantom_supersampled(
    spec: &PhantomSpec,
    width: usize,
    height: usize,
    pixel_size: f64,
    n: usize,
) -> Result<Image> {
    spec.validate(width as f64 * pixel_size, height as f64 * pixel_size)?;
    if n == 0 {
        return Err(Error::usage("supersample factor must be at least 1"));
    }
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let inv = 1.0 / (n * n) as f64;
    let mut values = vec![0.0; width * height];
    for row in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for sy in 0..n {
                for sx in 0..n {
                    let ox = (sx as f64 + 0.5) / n as f64 - 0.5;
                    let oy = (sy as f64 + 0.5) / n as f64 - 0.5;
                    let x = (col as f64 + ox - cx) * pixel_size;
                    let y = (cy - (row as f64 + oy)) * pixel_size;
                    acc += sample_mu(spec, x, y, true);
                }
            }
            values[row * width + col] = acc * inv;
        }
    }
    Image::new(width, height, pixel_size, values)
}

/// Rasterize only the non-metal ellipses.
pub fn render_tissue(spec: &PhantomSpec, width: usize, height: usize, pixel_size: f64, n: usize) -> Result<Image> {
    let stripped = PhantomSpec { ellipses: spec.ellipses.clone(), metal: Vec::new() };
    render_phantom_supersampled(&stripped, width, height, pixel_size, n)
}

/// Image-domain binary mask of the metal inserts (pixel-center membership).
pub fn metal_mask(spec: &PhantomSpec, width: usize, height: usize, pixel_size: f64) -> Result<Mask> {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let mut values = vec![0u8; width * height];
    for row in 0..height {
        for col in 0..width {
            let x = (col as f64 - cx) * pixel_size;
            let y = (cy - row as f64) * pixel_size;
            if spec.metal.iter().any(|m| m.shape.contains(x, y)) {
                values[row * width + col] = 1;
            }
        }
    }
    Mask::new(width, height, MaskDomain::Image, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_renders_zero() {
        let img = render_phantom(&PhantomSpec::default(), 8, 8, 1.0).unwrap();
        assert!(img.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centered_disk_center_value() {
        let spec = PhantomSpec {
            ellipses: vec![Ellipse { center: (0.0, 0.0), axes: (3.0, 3.0), rotation: 0.0, mu: 0.5 }],
            metal: Vec::new(),
        };
        let img = render_phantom(&spec, 9, 9, 1.0).unwrap();
        assert_eq!(img.get(4, 4), 0.5);
        assert_eq!(img.get(0, 0), 0.0);
    }

    #[test]
    fn overlap_adds_mu() {
        let e = Ellipse { center: (0.0, 0.0), axes: (2.0, 2.0), rotation: 0.0, mu: 0.3 };
        let spec = PhantomSpec { ellipses: vec![e, e], metal: Vec::new() };
        let img = render_phantom(&spec, 5, 5, 1.0).unwrap();
        assert!((img.get(2, 2) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn out_of_fov_rejected() {
        let spec = PhantomSpec {
            ellipses: vec![Ellipse { center: (10.0, 0.0), axes: (3.0, 3.0), rotation: 0.0, mu: 0.5 }],
            metal: Vec::new(),
        };
        assert!(render_phantom(&spec, 8, 8, 1.0).is_err());
    }

    #[test]
    fn config_roundtrip() {
        let spec = PhantomSpec {
            ellipses: vec![Ellipse { center: (1.0, -2.0), axes: (5.0, 4.0), rotation: 0.25, mu: 0.02 }],
            metal: vec![MetalInsert {
                shape: Ellipse { center: (0.0, 0.0), axes: (1.5, 1.5), rotation: 0.0, mu: 0.3 },
                material: "iron".to_string(),
            }],
        };
        let text = spec.to_config_string();
        let back = PhantomSpec::from_config(&Config::parse(&text).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
