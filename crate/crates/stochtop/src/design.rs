use crate::error::{Error, Result};

/// Volume-feasibility slack tolerated after an accepted update.
pub const VOLUME_SLACK: f64 = 1e-9;

/// The design vector (element densities or member areas) together with the
/// per-element volume coefficients and the volume budget.
#[derive(Debug, Clone)]
pub struct DesignField {
    pub values: Vec<f64>,
    /// Element volumes (continuum) or member lengths (trusses); the volume
    /// used by the constraint is `sum(volumes[e] * values[e])`.
    pub volumes: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub v_max: f64,
}

impl DesignField {
    pub fn new(
        values: Vec<f64>,
        volumes: Vec<f64>,
        lower: f64,
        upper: f64,
        v_max: f64,
    ) -> Result<Self> {
        if values.len() != volumes.len() {
            return Err(Error::DimensionMismatch {
                expected: volumes.len(),
                got: values.len(),
                context: "design values vs volume coefficients",
            });
        }
        if !(lower <= upper) {
            return Err(Error::InvalidInput(format!(
                "design bounds reversed: [{lower}, {upper}]"
            )));
        }
        if !(v_max > 0.0) {
            return Err(Error::InvalidInput("volume budget must be positive".into()));
        }
        let field = Self {
            values,
            volumes,
            lower,
            upper,
            v_max,
        };
        field.check_feasible()?;
        Ok(field)
    }

    /// Uniform field at `v_max / sum(volumes)`, clamped into bounds.
    pub fn uniform_feasible(volumes: Vec<f64>, lower: f64, upper: f64, v_max: f64) -> Result<Self> {
        let total: f64 = volumes.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput(
                "total volume coefficient must be positive".into(),
            ));
        }
        let v0 = (v_max / total).clamp(lower, upper);
        let values = vec![v0; volumes.len()];
        Self::new(values, volumes, lower, upper, v_max)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.volumes)
            .map(|(v, c)| v * c)
            .sum()
    }

    pub fn check_feasible(&self) -> Result<()> {
        for (e, &v) in self.values.iter().enumerate() {
            if !(v >= self.lower && v <= self.upper) {
                return Err(Error::InvalidInput(format!(
                    "design value {v} at element {e} outside [{}, {}]",
                    self.lower, self.upper
                )));
            }
        }
        let vol = self.volume();
        if vol > self.v_max + VOLUME_SLACK * self.v_max.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "volume {vol} exceeds budget {}",
                self.v_max
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_start_is_feasible() {
        let f = DesignField::uniform_feasible(vec![1.0; 4], 1e-3, 1.0, 1.2).unwrap();
        assert!((f.values[0] - 0.3).abs() < 1e-15);
        assert!((f.volume() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn bound_violations_detected() {
        assert!(DesignField::new(vec![1.5], vec![1.0], 0.0, 1.0, 2.0).is_err());
        assert!(DesignField::new(vec![0.9, 0.9], vec![1.0, 1.0], 0.0, 1.0, 1.0).is_err());
    }
}
