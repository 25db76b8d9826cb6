//! Arm phantom: heightfield surface, stiffness field, embedded vessel tube
//! with per-segment compression response, spring contact, and the virtual
//! ultrasound imaging that replaces learned segmentation.

use crate::geomath::{Pose, Vec3, Wrench};
use crate::planner::{
    image_frame, pixel_to_world, vessel_centroid, world_to_pixel, Mask, SurfaceCloud,
    UsFrameGeometry,
};
use serde::{Deserialize, Serialize};

use super::SimError;

/// Pixel (column, row) and base-frame location of a detected centroid.
pub type CentroidDetection = ((f64, f64), Vec3);

/// Compression response of one vessel span.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VesselSegmentProps {
    /// Normalized arc span `[s_a, s_b]` along the vessel.
    pub span: [f64; 2],
    /// Force at which a healthy lumen fully collapses (N).
    pub f_close: f64,
    /// Remaining area fraction under unbounded force; > 0 marks thrombus.
    pub residual_ratio: f64,
}

/// Lumen cross-section area in mm^2 under axial force `f`:
/// `A(f) = A0 max(residual, 1 - f/f_close)`, monotone non-increasing.
pub fn lumen_area(f: f64, rest_radius: f64, seg: &VesselSegmentProps) -> f64 {
    let a0 = std::f64::consts::PI * rest_radius * rest_radius * 1e6;
    a0 * (1.0 - f.max(0.0) / seg.f_close).max(seg.residual_ratio)
}

/// Embedded vessel: centerline polyline plus rest radius.
#[derive(Debug, Clone)]
pub struct VesselTube {
    pub centerline: Vec<Vec3>,
    pub radius: f64,
    /// Normalized cumulative arc length per centerline point.
    arc: Vec<f64>,
}

impl VesselTube {
    pub fn new(centerline: Vec<Vec3>, radius: f64) -> Self {
        assert!(centerline.len() >= 2);
        let mut arc = vec![0.0];
        let mut acc = 0.0;
        for pair in centerline.windows(2) {
            acc += (pair[1] - pair[0]).norm();
            arc.push(acc);
        }
        for v in arc.iter_mut() {
            *v /= acc;
        }
        Self {
            centerline,
            radius,
            arc,
        }
    }

    pub fn total_length(&self) -> f64 {
        let mut acc = 0.0;
        for pair in self.centerline.windows(2) {
            acc += (pair[1] - pair[0]).norm();
        }
        acc
    }

    /// Normalized arc fraction of the centerline point nearest to `p`
    /// (horizontal distance).
    pub fn nearest_station(&self, p: &Vec3) -> f64 {
        let mut best = (f64::INFINITY, 0usize);
        for (i, c) in self.centerline.iter().enumerate() {
            let dx = p.x - c.x;
            let dy = p.y - c.y;
            let d2 = dx * dx + dy * dy;
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        self.arc[best.1]
    }
}

/// Generator parameters for the default phantom family: a domed bar with
/// raised-cosine bumps along its length, laterally varying stiffness, and a
/// meandering vessel at constant depth below the surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    /// Base-frame x of the near edge (m).
    pub origin_x: f64,
    /// Base-frame y of the centerline (m).
    pub center_y: f64,
    pub length: f64,
    pub width: f64,
    pub grid_pitch: f64,
    /// Surface height of the flat base (m, base frame z).
    pub base_z: f64,
    /// Lateral dome amplitude (m).
    pub dome_amp: f64,
    /// Bump height (m) of the raised-cosine bumps along x.
    pub bump_amp: f64,
    pub bump_count: usize,
    /// Stiffness field: `ke_base + ke_amp cos(pi (y - center) / width)`,
    /// stiffest along the ridge, softest at the lateral edges.
    pub ke_base: f64,
    pub ke_amp: f64,
    pub vessel_depth: f64,
    pub vessel_radius: f64,
    pub vessel_meander_amp: f64,
    pub vessel_meander_periods: f64,
    /// Longitudinal margin the vessel keeps from both ends (m).
    pub vessel_margin: f64,
    pub segments: Vec<VesselSegmentProps>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            origin_x: 0.40,
            center_y: 0.0,
            length: 0.40,
            width: 0.12,
            grid_pitch: 0.002,
            base_z: 0.255,
            dome_amp: 0.015,
            bump_amp: 0.008,
            bump_count: 2,
            ke_base: 500.0,
            ke_amp: 300.0,
            vessel_depth: 0.012,
            vessel_radius: 0.003,
            vessel_meander_amp: 0.003,
            vessel_meander_periods: 1.5,
            vessel_margin: 0.02,
            segments: vec![
                VesselSegmentProps {
                    span: [0.0, 1.0 / 3.0],
                    f_close: 8.0,
                    residual_ratio: 0.0,
                },
                VesselSegmentProps {
                    span: [1.0 / 3.0, 2.0 / 3.0],
                    f_close: 8.0,
                    residual_ratio: 0.4,
                },
                VesselSegmentProps {
                    span: [2.0 / 3.0, 1.0],
                    f_close: 8.0,
                    residual_ratio: 0.0,
                },
            ],
        }
    }
}

/// The realized phantom: sampled heightfield + stiffness grids and the
/// vessel tube, all in the base frame.
#[derive(Debug, Clone)]
pub struct Phantom {
    origin: (f64, f64),
    pitch: f64,
    nx: usize,
    ny: usize,
    heights: Vec<f64>,
    stiffness: Vec<f64>,
    pub vessel: VesselTube,
    pub segments: Vec<VesselSegmentProps>,
}

impl Phantom {
    pub fn from_spec(spec: &PhantomSpec) -> Self {
        let nx = (spec.length / spec.grid_pitch).round() as usize + 1;
        let ny = (spec.width / spec.grid_pitch).round() as usize + 1;
        let y0 = spec.center_y - spec.width / 2.0;
        let mut heights = Vec::with_capacity(nx * ny);
        let mut stiffness = Vec::with_capacity(nx * ny);
        let surface = |x: f64, y: f64| {
            let u = ((x - spec.origin_x) / spec.length).clamp(0.0, 1.0);
            let v = (y - spec.center_y) / spec.width; // -0.5 ..= 0.5
            let dome = spec.dome_amp * (std::f64::consts::PI * v).cos();
            let bumps = spec.bump_amp
                * 0.5
                * (1.0 - (2.0 * std::f64::consts::PI * spec.bump_count as f64 * u).cos());
            spec.base_z + dome + bumps
        };
        for i in 0..nx {
            for j in 0..ny {
                let x = spec.origin_x + i as f64 * spec.grid_pitch;
                let y = y0 + j as f64 * spec.grid_pitch;
                heights.push(surface(x, y));
                let v = (y - spec.center_y) / spec.width;
                stiffness.push(spec.ke_base + spec.ke_amp * (std::f64::consts::PI * v).cos());
            }
        }
        // Vessel centerline meanders about the ridge at constant depth
        // below the local surface.
        let vx0 = spec.origin_x + spec.vessel_margin;
        let vx1 = spec.origin_x + spec.length - spec.vessel_margin;
        let n_pts = ((vx1 - vx0) / 0.002).round() as usize + 1;
        let centerline: Vec<Vec3> = (0..n_pts)
            .map(|k| {
                let t = k as f64 / (n_pts - 1) as f64;
                let x = vx0 + (vx1 - vx0) * t;
                let y = spec.center_y
                    + spec.vessel_meander_amp
                        * (2.0 * std::f64::consts::PI * spec.vessel_meander_periods * t).sin();
                Vec3::new(x, y, surface(x, y) - spec.vessel_depth)
            })
            .collect();
        Self {
            origin: (spec.origin_x, y0),
            pitch: spec.grid_pitch,
            nx,
            ny,
            heights,
            stiffness,
            vessel: VesselTube::new(centerline, spec.vessel_radius),
            segments: spec.segments.clone(),
        }
    }

    pub fn x_range(&self) -> (f64, f64) {
        (
            self.origin.0,
            self.origin.0 + (self.nx - 1) as f64 * self.pitch,
        )
    }

    pub fn y_range(&self) -> (f64, f64) {
        (
            self.origin.1,
            self.origin.1 + (self.ny - 1) as f64 * self.pitch,
        )
    }

    fn grid(&self, i: usize, j: usize) -> (f64, f64) {
        let idx = i * self.ny + j;
        (self.heights[idx], self.stiffness[idx])
    }

    /// Cell and fractional coordinates of `(x, y)`, clamped to the grid.
    fn locate(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let fx = ((x - self.origin.0) / self.pitch).clamp(0.0, (self.nx - 1) as f64 - 1e-9);
        let fy = ((y - self.origin.1) / self.pitch).clamp(0.0, (self.ny - 1) as f64 - 1e-9);
        let i = fx.floor() as usize;
        let j = fy.floor() as usize;
        (i, j, fx - i as f64, fy - j as f64)
    }

    /// Bilinear surface height. Queries outside the grid clamp to the edge.
    pub fn surface_height(&self, x: f64, y: f64) -> f64 {
        let (i, j, tx, ty) = self.locate(x, y);
        let (h00, _) = self.grid(i, j);
        let (h10, _) = self.grid(i + 1, j);
        let (h01, _) = self.grid(i, j + 1);
        let (h11, _) = self.grid(i + 1, j + 1);
        h00 * (1.0 - tx) * (1.0 - ty)
            + h10 * tx * (1.0 - ty)
            + h01 * (1.0 - tx) * ty
            + h11 * tx * ty
    }

    /// Outward unit normal of the bilinear patch at `(x, y)`.
    pub fn surface_normal(&self, x: f64, y: f64) -> Vec3 {
        let (i, j, tx, ty) = self.locate(x, y);
        let (h00, _) = self.grid(i, j);
        let (h10, _) = self.grid(i + 1, j);
        let (h01, _) = self.grid(i, j + 1);
        let (h11, _) = self.grid(i + 1, j + 1);
        let dzdx = ((h10 - h00) * (1.0 - ty) + (h11 - h01) * ty) / self.pitch;
        let dzdy = ((h01 - h00) * (1.0 - tx) + (h11 - h10) * tx) / self.pitch;
        Vec3::new(-dzdx, -dzdy, 1.0).normalize()
    }

    /// Bilinear environment stiffness (N/m).
    pub fn stiffness_at(&self, x: f64, y: f64) -> f64 {
        let (i, j, tx, ty) = self.locate(x, y);
        let (_, k00) = self.grid(i, j);
        let (_, k10) = self.grid(i + 1, j);
        let (_, k01) = self.grid(i, j + 1);
        let (_, k11) = self.grid(i + 1, j + 1);
        k00 * (1.0 - tx) * (1.0 - ty)
            + k10 * tx * (1.0 - ty)
            + k01 * (1.0 - tx) * ty
            + k11 * tx * ty
    }

    fn over_surface(&self, x: f64, y: f64) -> bool {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
    }

    /// Spring contact: vertical penetration `d = max(0, g(x, y) - z_tip)`,
    /// reaction `k_e(x, y) d` along the local outward normal, applied at the
    /// probe tip (no torque, no friction). Expressed in the probe frame.
    /// Off the phantom footprint there is no contact.
    pub fn contact_force(&self, probe: &Pose) -> Result<Wrench, SimError> {
        let p = probe.position;
        if !self.over_surface(p.x, p.y) {
            return Ok(Wrench::zero());
        }
        let penetration = self.surface_height(p.x, p.y) - p.z;
        if penetration <= 0.0 {
            return Ok(Wrench::zero());
        }
        if penetration > 0.025 {
            return Err(SimError::PlantFault {
                penetration_mm: penetration * 1e3,
            });
        }
        let normal = self.surface_normal(p.x, p.y);
        let f_base = normal * (self.stiffness_at(p.x, p.y) * penetration);
        let r_t = probe.orientation.rotation_matrix().transpose();
        Ok(Wrench::new(r_t * f_base, Vec3::zeros()))
    }

    /// Segment properties at a normalized vessel arc fraction.
    pub fn segment_at(&self, arc_fraction: f64) -> &VesselSegmentProps {
        self.segments
            .iter()
            .find(|s| arc_fraction >= s.span[0] && arc_fraction <= s.span[1])
            .unwrap_or(&self.segments[0])
    }

    /// Lumen area (mm^2) under force `f` at the vessel station nearest the
    /// probe.
    pub fn lumen_area_at(&self, probe_position: &Vec3, f: f64) -> f64 {
        let station = self.vessel.nearest_station(probe_position);
        lumen_area(f, self.vessel.radius, self.segment_at(station))
    }

    /// Surface samples plus outward normals at every grid node.
    pub fn surface_cloud(&self) -> SurfaceCloud {
        let mut points = Vec::with_capacity(self.nx * self.ny);
        let mut normals = Vec::with_capacity(self.nx * self.ny);
        for i in 0..self.nx {
            for j in 0..self.ny {
                let x = self.origin.0 + i as f64 * self.pitch;
                let y = self.origin.1 + j as f64 * self.pitch;
                points.push(Vec3::new(x, y, self.heights[i * self.ny + j]));
                normals.push(self.surface_normal(x, y));
            }
        }
        SurfaceCloud { points, normals }
    }

    /// Renders the lumen cross-section visible in the current image plane
    /// into `mask` and returns the centroid in pixels plus its base-frame
    /// location. The lumen ellipse is squashed axially by the compression
    /// ratio at the local vessel station under force `f`.
    ///
    /// The spring contact keeps the phantom geometry rigid while the probe
    /// penetrates, so the image depth axis is referenced to the undeformed
    /// contact interface: when the tip is below the surface, the imaging
    /// origin is lifted back onto it. Compression still shows in the image
    /// through the lumen response.
    pub fn render_us_frame(
        &self,
        probe: &Pose,
        g: &UsFrameGeometry,
        f: f64,
        mask: &mut Mask,
    ) -> Option<CentroidDetection> {
        assert_eq!(mask.width, g.width_px);
        assert_eq!(mask.height, g.height_px);
        mask.clear();
        let mut imaging_pose = *probe;
        if self.over_surface(probe.position.x, probe.position.y) {
            let surface = self.surface_height(probe.position.x, probe.position.y);
            imaging_pose.position.z = probe.position.z.max(surface);
        }
        let probe = &imaging_pose;
        let t_bi = image_frame(probe, g);
        let plane_normal = t_bi.rotation().column(2).into_owned();
        let plane_origin = *t_bi.translation();

        // Centerline crossing of the image plane nearest to the probe.
        let cl = &self.vessel.centerline;
        let mut crossing: Option<(Vec3, Vec3, f64)> = None; // point, direction, arc
        for w in 0..cl.len() - 1 {
            let d0 = plane_normal.dot(&(cl[w] - plane_origin));
            let d1 = plane_normal.dot(&(cl[w + 1] - plane_origin));
            if d0 == 0.0 && d1 == 0.0 {
                continue;
            }
            if (d0 <= 0.0 && d1 > 0.0) || (d0 >= 0.0 && d1 < 0.0) {
                let t = d0 / (d0 - d1);
                let point = cl[w] + (cl[w + 1] - cl[w]) * t;
                let dir = (cl[w + 1] - cl[w]).normalize();
                let arc = self.vessel.arc[w] + (self.vessel.arc[w + 1] - self.vessel.arc[w]) * t;
                let better = crossing
                    .map(|(p, _, _)| (point - probe.position).norm() < (p - probe.position).norm())
                    .unwrap_or(true);
                if better {
                    crossing = Some((point, dir, arc));
                }
            }
        }
        let (center, dir, arc) = crossing?;

        let seg = self.segment_at(arc);
        let a0 = std::f64::consts::PI * self.vessel.radius * self.vessel.radius * 1e6;
        let ratio = lumen_area(f, self.vessel.radius, seg) / a0;
        if ratio <= 0.0 {
            return None;
        }

        let center_px = world_to_pixel(&center, &t_bi, g)?;
        // Conservative bounding box from the tilted-tube ellipse extent.
        let cos_tilt = dir.dot(&plane_normal).abs().max(0.1);
        let semi = self.vessel.radius / cos_tilt;
        let du = (semi / g.lateral_scale()).ceil() as isize + 1;
        let dv = (semi * ratio / g.axial_scale()).ceil() as isize + 1;
        let c_col = center_px.0 as isize;
        let c_row = center_px.1 as isize;
        let r2 = self.vessel.radius * self.vessel.radius;
        let mut any = false;
        for row in (c_row - dv).max(0)..=(c_row + dv).min(g.height_px as isize - 1) {
            for col in (c_col - du).max(0)..=(c_col + du).min(g.width_px as isize - 1) {
                // Pixel center in metric image coordinates, unsquashed
                // axially about the ellipse center.
                let u = (col as f64 + 0.5) * g.lateral_scale();
                let v_raw = (row as f64 + 0.5) * g.axial_scale();
                let v_center = center_px.1 * g.axial_scale();
                let v = v_center + (v_raw - v_center) / ratio;
                let w = t_bi.transform_point(&Vec3::new(u, v, 0.0));
                let offset = w - center;
                let radial = offset - dir * dir.dot(&offset);
                if radial.norm_squared() <= r2 {
                    mask.set(col as usize, row as usize, true);
                    any = true;
                }
            }
        }
        if !any {
            return None;
        }
        let (c_mean, r_mean) = vessel_centroid(mask)?;
        let centroid_px = (c_mean + 0.5, r_mean + 0.5);
        let world = pixel_to_world(centroid_px, &t_bi, g);
        Some((centroid_px, world))
    }

    /// Allocating convenience wrapper around [`Phantom::render_us_frame`].
    pub fn virtual_us_frame(
        &self,
        probe: &Pose,
        g: &UsFrameGeometry,
        f: f64,
    ) -> (Mask, Option<CentroidDetection>) {
        let mut mask = Mask::new(g.width_px, g.height_px);
        let centroid = self.render_us_frame(probe, g, f, &mut mask);
        (mask, centroid)
    }
}
