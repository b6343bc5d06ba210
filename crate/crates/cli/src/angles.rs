//! Angle lists for `subsample`: `"0,90,180"`, `"start:step:stop"` (stop
//! included) or `"every:k"` (every k-th projection of the schedule).

use dyntomo::geometry::SamplingSchedule;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum AngleSpec {
    List(Vec<f64>),
    Range { start: f64, step: f64, stop: f64 },
    Every(usize),
}

fn number(s: &str, spec: &str) -> Result<f64, CliError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("angle spec {spec:?}: {:?} is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(CliError::Config(format!("angle spec {spec:?}: {v} is not finite")));
    }
    Ok(v)
}

impl AngleSpec {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let spec = spec.trim();
        if let Some(k) = spec.strip_prefix("every:") {
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("angle spec {spec:?}: every:k needs a positive integer")))?;
            if k == 0 {
                return Err(CliError::Config(format!("angle spec {spec:?}: k must be >= 1")));
            }
            return Ok(AngleSpec::Every(k));
        }
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            [single] => {
                let list = single.split(',').map(|a| number(a, spec)).collect::<Result<Vec<_>, _>>()?;
                Ok(AngleSpec::List(list))
            }
            [a, b, c] => {
                let (start, step, stop) = (number(a, spec)?, number(b, spec)?, number(c, spec)?);
                if !(step > 0.0) || stop < start {
                    return Err(CliError::Config(format!("angle spec {spec:?}: need step > 0 and stop >= start")));
                }
                Ok(AngleSpec::Range { start, step, stop })
            }
            _ => Err(CliError::Config(format!(
                "angle spec {spec:?}: expected a comma list, start:step:stop or every:k"
            ))),
        }
    }

    /// Concrete angles in degrees against `schedule`.
    pub fn resolve(&self, schedule: &SamplingSchedule) -> Vec<f64> {
        match self {
            AngleSpec::List(v) => v.clone(),
            AngleSpec::Range { start, step, stop } => {
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..count).map(|i| start + i as f64 * step).collect()
            }
            AngleSpec::Every(k) => schedule.angles_deg().into_iter().step_by(*k).collect(),
        }
    }
}
