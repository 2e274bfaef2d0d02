//! CSV export of a gait's foot trajectories and joint commands.

use std::f64::consts::TAU;
use std::io::Write;

use gait_core::actuation::{joints_to_motor, motor_to_pwm};
use gait_core::cpg::locked_phases;
use gait_core::kinematics::inverse_kinematics;
use gait_core::{RuntimeConfig, LEGS};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("unknown gait '{0}'")]
    UnknownGait(String),
    #[error("{0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("kinematics: {0}")]
    Kinematics(#[from] gait_core::Error),
}

/// Parsed `<gait>:<cycles>:<path>` argument.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportSpec {
    pub gait: String,
    pub cycles: u32,
    pub path: String,
}

impl std::str::FromStr for ExportSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, ':');
        let (Some(gait), Some(cycles), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("expected <gait>:<cycles>:<path>, got '{s}'"));
        };
        let cycles: u32 = cycles
            .parse()
            .map_err(|_| format!("cycles must be a positive integer, got '{cycles}'"))?;
        if gait.is_empty() || path.is_empty() || cycles == 0 {
            return Err(format!("expected <gait>:<cycles>:<path> with cycles >= 1, got '{s}'"));
        }
        Ok(Self {
            gait: gait.to_string(),
            cycles,
            path: path.to_string(),
        })
    }
}

pub const LEG_COLUMNS: [&str; 8] = ["x", "y", "dx_dphi", "dy_dphi", "q_hip", "q_knee", "pwm_hip", "pwm_knee"];

pub fn header(config: &RuntimeConfig) -> Vec<String> {
    let mut cols = vec!["phase".to_string()];
    for name in &config.leg_names {
        cols.extend(LEG_COLUMNS.iter().map(|c| format!("{name}_{c}")));
    }
    cols
}

/// One row per sample: `cycles * resolution` rows, leg 1 phase advancing by
/// `2pi / resolution` per row (the `phase` column is not wrapped), other legs
/// at the gait's locked offsets. Joint angles come from inverse kinematics;
/// pulse widths use the calibrated motor angle clamped to the position range.
pub fn export_trajectory<W: Write>(
    config: &RuntimeConfig,
    gait: &str,
    cycles: u32,
    resolution: u32,
    out: W,
) -> Result<usize, ExportError> {
    let def = config
        .gaits
        .get(gait)
        .ok_or_else(|| ExportError::UnknownGait(gait.to_string()))?;
    if cycles == 0 || resolution == 0 {
        return Err(ExportError::Invalid("cycles and resolution must be >= 1".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(config))?;
    let limits = &config.limits;
    let rows = cycles as usize * resolution as usize;
    for r in 0..rows {
        let phase = TAU * r as f64 / resolution as f64;
        let leg1 = TAU * (r % resolution as usize) as f64 / resolution as f64;
        let phases = locked_phases(&def.target_offsets, leg1);
        let mut record = Vec::with_capacity(1 + LEGS * LEG_COLUMNS.len());
        record.push(phase);
        for (leg, &phi) in phases.iter().enumerate() {
            let p = def.endpoint(leg, phi)?;
            let d = def.endpoint_derivative(leg, phi)?;
            let ik = inverse_kinematics(p.x, p.y, &config.geometry)?;
            let m = joints_to_motor(ik.joints(), &config.calibration.legs[leg])?;
            let pwm = &config.calibration.pwm;
            let hip = m.hip.clamp(-limits.hip_range, limits.hip_range);
            let knee = m.knee.clamp(-limits.knee_range, limits.knee_range);
            record.extend([
                p.x,
                p.y,
                d.x,
                d.y,
                ik.q_hip,
                ik.q_knee,
                motor_to_pwm(hip, pwm),
                motor_to_pwm(knee, pwm),
            ]);
        }
        w.write_record(record.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(rows)
}

pub fn export_to_file(config: &RuntimeConfig, spec: &ExportSpec, resolution: u32) -> Result<usize, ExportError> {
    let file = std::fs::File::create(&spec.path).map_err(csv::Error::from)?;
    export_trajectory(config, &spec.gait, spec.cycles, resolution, std::io::BufWriter::new(file))
}
