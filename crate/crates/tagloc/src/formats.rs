//! On-disk formats: scenario, tag map, and mapping session as human-editable
//! TOML; truth, odometry, measurement, and result streams as CSV with a
//! one-line header naming columns and units. Timestamps are integer epoch
//! indices everywhere.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;
use crate::map_builder::{MappingSession, OptimizeReport, TagObservation};
use crate::measurement::{MeasurementPayload, TagMap, TagMeasurement};
use crate::metrics::{ErrorReport, ReductionReport};
use crate::motion_model::Control;
use crate::sim::{DeliveredMeasurement, DriveConfig, Event, FilterParams, Scenario, SensorModel};
use crate::{Error, Result};

fn parse_err(path: &Path, message: impl ToString) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        message: message.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Scenario (TOML)

#[derive(Debug, Serialize, Deserialize)]
struct TagEntry {
    id: u32,
    x: f64,
    y: f64,
    theta: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    name: String,
    seed: u64,
    duration_epochs: u64,
    dt: f64,
    /// Waypoints as [x, y, theta] triples.
    waypoints: Vec<[f64; 3]>,
    tags: Vec<TagEntry>,
    sensor: SensorModel,
    #[serde(default)]
    events: Vec<Event>,
    drive: DriveConfig,
    odom_sigma_d: f64,
    odom_sigma_theta: f64,
    filter: FilterParams,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        Self {
            name: s.name.clone(),
            seed: s.seed,
            duration_epochs: s.duration_epochs,
            dt: s.dt,
            waypoints: s.waypoints.iter().map(|p| [p.x, p.y, p.theta]).collect(),
            tags: s
                .tag_layout
                .entries
                .iter()
                .map(|(&id, p)| TagEntry {
                    id,
                    x: p.x,
                    y: p.y,
                    theta: p.theta,
                })
                .collect(),
            sensor: s.sensor.clone(),
            events: s.events.clone(),
            drive: s.drive,
            odom_sigma_d: s.odom_sigma_d,
            odom_sigma_theta: s.odom_sigma_theta,
            filter: s.filter.clone(),
        }
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Scenario {
        let mut layout = TagMap::default();
        for t in self.tags {
            layout.entries.insert(t.id, Pose2::new(t.x, t.y, t.theta));
        }
        Scenario {
            name: self.name,
            seed: self.seed,
            duration_epochs: self.duration_epochs,
            dt: self.dt,
            waypoints: self
                .waypoints
                .into_iter()
                .map(|w| Pose2::new(w[0], w[1], w[2]))
                .collect(),
            tag_layout: layout,
            sensor: self.sensor,
            events: self.events,
            drive: self.drive,
            odom_sigma_d: self.odom_sigma_d,
            odom_sigma_theta: self.odom_sigma_theta,
            filter: self.filter,
        }
    }
}

/// Apply `key=value` overrides to a scenario. Keys are dotted paths into the
/// scenario file tree, e.g. `seed`, `sensor.ar1_rho`, `filter.hard_threshold`.
pub fn apply_overrides(scenario: &Scenario, overrides: &[(String, String)]) -> Result<Scenario> {
    let mut tree = toml::Value::try_from(ScenarioFile::from(scenario))
        .map_err(|e| override_err("<scenario>", e))?;
    for (key, raw) in overrides {
        let value: toml::Value = toml::from_str::<toml::Value>(&format!("v = {raw}"))
            .map(|t| t.get("v").cloned().unwrap())
            .unwrap_or_else(|_| toml::Value::String(raw.clone()));
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().unwrap();
        let mut node = &mut tree;
        for part in parents {
            node = node
                .as_table_mut()
                .ok_or_else(|| override_err(key, "path does not name a table"))?
                .get_mut(*part)
                .ok_or_else(|| override_err(key, format!("unknown field '{part}'")))?;
        }
        node.as_table_mut()
            .ok_or_else(|| override_err(key, "path does not name a table"))?
            .insert(last.to_string(), value);
    }
    let file: ScenarioFile = tree.try_into().map_err(|e| override_err("<scenario>", e))?;
    Ok(file.into_scenario())
}

fn override_err(key: &str, message: impl ToString) -> Error {
    Error::Parse {
        file: format!("override '{key}'"),
        message: message.to_string(),
    }
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
    Ok(file.into_scenario())
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    let file = ScenarioFile::from(scenario);
    let text = toml::to_string_pretty(&file).map_err(|e| parse_err(path, e))?;
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Tag map (TOML)

#[derive(Debug, Serialize, Deserialize)]
struct TagMapFile {
    #[serde(default)]
    meta: Option<TagMapMeta>,
    tags: Vec<TagEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagMapMeta {
    pub session: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
}

pub fn write_tag_map(path: &Path, map: &TagMap, meta: Option<&TagMapMeta>) -> Result<()> {
    let file = TagMapFile {
        meta: meta.cloned(),
        tags: map
            .entries
            .iter()
            .map(|(&id, p)| TagEntry {
                id,
                x: p.x,
                y: p.y,
                theta: p.theta,
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&file).map_err(|e| parse_err(path, e))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_tag_map(path: &Path) -> Result<TagMap> {
    let text = fs::read_to_string(path)?;
    let file: TagMapFile = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
    let mut map = TagMap::default();
    for t in file.tags {
        map.entries.insert(t.id, Pose2::new(t.x, t.y, t.theta));
    }
    Ok(map)
}

pub fn write_optimize_meta(session: &str, report: &OptimizeReport) -> TagMapMeta {
    TagMapMeta {
        session: session.to_string(),
        converged: report.converged,
        iterations: report.iterations,
        final_cost: report.final_cost,
    }
}

// ---------------------------------------------------------------------------
// Mapping session (TOML)

#[derive(Debug, Serialize, Deserialize)]
struct SessionPose {
    epoch: u64,
    x: f64,
    y: f64,
    theta: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionObservation {
    epoch: u64,
    tag_id: u32,
    x: f64,
    y: f64,
    theta: f64,
    info: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionFile {
    poses: Vec<SessionPose>,
    observations: Vec<SessionObservation>,
}

pub fn write_session(path: &Path, session: &MappingSession) -> Result<()> {
    let file = SessionFile {
        poses: session
            .robot_poses
            .iter()
            .map(|(e, p)| SessionPose {
                epoch: *e,
                x: p.x,
                y: p.y,
                theta: p.theta,
            })
            .collect(),
        observations: session
            .observations
            .iter()
            .map(|o| SessionObservation {
                epoch: o.epoch,
                tag_id: o.tag_id,
                x: o.relative_pose.x,
                y: o.relative_pose.y,
                theta: o.relative_pose.theta,
                info: o.info_diag,
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&file).map_err(|e| parse_err(path, e))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_session(path: &Path) -> Result<MappingSession> {
    let text = fs::read_to_string(path)?;
    let file: SessionFile = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
    Ok(MappingSession {
        robot_poses: file
            .poses
            .into_iter()
            .map(|p| (p.epoch, Pose2::new(p.x, p.y, p.theta)))
            .collect(),
        observations: file
            .observations
            .into_iter()
            .map(|o| TagObservation {
                epoch: o.epoch,
                tag_id: o.tag_id,
                relative_pose: Pose2::new(o.x, o.y, o.theta),
                info_diag: o.info,
            })
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// CSV streams

pub fn write_truth_csv(path: &Path, poses: &[Pose2]) -> Result<()> {
    let mut out = String::from("epoch,x_m,y_m,theta_rad\n");
    for (k, p) in poses.iter().enumerate() {
        writeln!(out, "{k},{},{},{}", p.x, p.y, p.theta).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<Pose2>> {
    let text = fs::read_to_string(path)?;
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(path, format!("line {}: expected 4 fields", i + 1)));
        }
        let num = |j: usize| -> Result<f64> {
            fields[j]
                .parse()
                .map_err(|e| parse_err(path, format!("line {}: {}", i + 1, e)))
        };
        poses.push(Pose2::new(num(1)?, num(2)?, num(3)?));
    }
    Ok(poses)
}

pub fn write_odometry_csv(path: &Path, controls: &[Control]) -> Result<()> {
    let mut out = String::from("epoch,delta_d_m,delta_theta_rad,beta_rad,dt_s\n");
    for (k, u) in controls.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{}",
            k + 1,
            u.delta_d,
            u.delta_theta,
            u.beta,
            u.dt
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_odometry_csv(path: &Path) -> Result<Vec<Control>> {
    let text = fs::read_to_string(path)?;
    let mut controls = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(path, format!("line {}: expected 5 fields", i + 1)));
        }
        let num = |j: usize| -> Result<f64> {
            fields[j]
                .parse()
                .map_err(|e| parse_err(path, format!("line {}: {}", i + 1, e)))
        };
        controls.push(Control {
            delta_d: num(1)?,
            delta_theta: num(2)?,
            beta: num(3)?,
            dt: num(4)?,
        });
    }
    Ok(controls)
}

pub fn write_measurements_csv(path: &Path, measurements: &[DeliveredMeasurement]) -> Result<()> {
    let mut out =
        String::from("stamp,delivery,tag_id,kind,a,b,c,view_distance_m,view_angle_rad\n");
    for dm in measurements {
        let m = &dm.meas;
        match m.payload {
            MeasurementPayload::Complete { pose_in_camera: p } => {
                writeln!(
                    out,
                    "{},{},{},complete,{},{},{},{},{}",
                    m.stamp, dm.delivery, m.tag_id, p.x, p.y, p.theta, m.view_distance, m.view_angle
                )
                .unwrap();
            }
            MeasurementPayload::DistanceOnly { range } => {
                writeln!(
                    out,
                    "{},{},{},distance,{},0,0,{},{}",
                    m.stamp, dm.delivery, m.tag_id, range, m.view_distance, m.view_angle
                )
                .unwrap();
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_measurements_csv(path: &Path) -> Result<Vec<DeliveredMeasurement>> {
    let text = fs::read_to_string(path)?;
    let mut measurements = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(parse_err(path, format!("line {}: expected 9 fields", i + 1)));
        }
        let num = |j: usize| -> Result<f64> {
            fields[j]
                .parse()
                .map_err(|e| parse_err(path, format!("line {}: {}", i + 1, e)))
        };
        let int = |j: usize| -> Result<u64> {
            fields[j]
                .parse()
                .map_err(|e| parse_err(path, format!("line {}: {}", i + 1, e)))
        };
        let payload = match fields[3] {
            "complete" => MeasurementPayload::Complete {
                pose_in_camera: Pose2::new(num(4)?, num(5)?, num(6)?),
            },
            "distance" => MeasurementPayload::DistanceOnly { range: num(4)? },
            other => {
                return Err(parse_err(
                    path,
                    format!("line {}: unknown measurement kind '{other}'", i + 1),
                ))
            }
        };
        measurements.push(DeliveredMeasurement {
            delivery: int(1)?,
            meas: TagMeasurement {
                tag_id: int(2)? as u32,
                stamp: int(0)?,
                payload,
                view_distance: num(7)?,
                view_angle: num(8)?,
            },
        });
    }
    Ok(measurements)
}

// ---------------------------------------------------------------------------
// Result tables

pub fn write_trajectory_csv(path: &Path, poses: &[Option<Pose2>], errors: &[Option<f64>]) -> Result<()> {
    let mut out = String::from("epoch,x_m,y_m,theta_rad,err_m\n");
    for (k, (pose, err)) in poses.iter().zip(errors).enumerate() {
        if let (Some(p), Some(e)) = (pose, err) {
            writeln!(out, "{k},{},{},{},{}", p.x, p.y, p.theta, e).unwrap();
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, rows: &[(String, ErrorReport)]) -> Result<()> {
    let mut out = String::from("method,rmse_m,mean_m,std_m,success_rate,success_threshold_m\n");
    for (name, rep) in rows {
        writeln!(
            out,
            "{name},{},{},{},{},{}",
            rep.rmse, rep.mean, rep.std, rep.success_rate, rep.success_threshold
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_reduction_csv(
    path: &Path,
    baseline: &str,
    rows: &[(String, ReductionReport)],
) -> Result<()> {
    let mut out = format!("method,baseline={baseline},rmse_reduction_pct,mean_reduction_pct,std_reduction_pct\n");
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "n/a".into());
    for (name, r) in rows {
        writeln!(
            out,
            "{name},,{},{},{}",
            fmt_opt(r.rmse_pct),
            fmt_opt(r.mean_pct),
            fmt_opt(r.std_pct)
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}
