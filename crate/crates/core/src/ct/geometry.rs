use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Beam {
    Parallel,
    Fan,
}

/// Acquisition geometry for one 2-D slice.
#[derive(Clone, Debug)]
pub struct ScanGeometry {
    pub n_views: usize,
    /// Total angular span in radians; views are uniformly spaced over it.
    pub angular_range: f64,
    pub n_detectors: usize,
    /// Detector pitch in mm, measured at the isocenter line.
    pub detector_spacing: f64,
    /// Source-to-rotation-center distance in mm (fan beam only).
    pub source_to_center: f64,
    pub beam: Beam,
}

impl ScanGeometry {
    pub fn parallel(n_views: usize, n_detectors: usize, detector_spacing: f64) -> Self {
        ScanGeometry {
            n_views,
            angular_range: std::f64::consts::TAU,
            n_detectors,
            detector_spacing,
            source_to_center: 595.0,
            beam: Beam::Parallel,
        }
    }

    pub fn fan(n_views: usize, n_detectors: usize, detector_spacing: f64, source_to_center: f64) -> Self {
        ScanGeometry {
            n_views,
            angular_range: std::f64::consts::TAU,
            n_detectors,
            detector_spacing,
            source_to_center,
            beam: Beam::Fan,
        }
    }

    /// `half_diagonal` is the image half-diagonal in mm, used to check the
    /// fan source clears the field of view.
    pub fn validate(&self, half_diagonal: f64) -> Result<()> {
        if self.n_views < 1 || self.n_detectors < 1 {
            return Err(Error::config(format!(
                "geometry needs at least one view and one detector, got {} views x {} detectors",
                self.n_views, self.n_detectors
            )));
        }
        if !(self.detector_spacing > 0.0) {
            return Err(Error::config(format!("detector_spacing must be positive, got {}", self.detector_spacing)));
        }
        if !(self.angular_range > 0.0) {
            return Err(Error::config(format!("angular_range must be positive, got {}", self.angular_range)));
        }
        if self.beam == Beam::Fan && self.source_to_center <= half_diagonal {
            return Err(Error::config(format!(
                "fan source_to_center {} must exceed the image half-diagonal {:.2}",
                self.source_to_center, half_diagonal
            )));
        }
        Ok(())
    }

    pub fn view_angle(&self, view: usize) -> f64 {
        self.angular_range * view as f64 / self.n_views as f64
    }

    /// Signed offset of detector `d` from the array center, in mm.
    pub fn detector_offset(&self, d: usize) -> f64 {
        (d as f64 - (self.n_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }
}
