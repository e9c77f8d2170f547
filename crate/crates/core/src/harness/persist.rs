//! Binary dataset and checkpoint files.
//!
//! Layout, all integers little-endian:
//! magic (8 bytes) | format version u32 | feature-layout version u32 |
//! metadata length u64 | metadata (JSON text) | array count u64 |
//! per array: name length u32, name (UTF-8), value count u64, values (f64).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::DatasetSpec;
use crate::belief::{BeliefParams, BeliefSpec};
use crate::numerics::Parameters;
use crate::predictor::{FeatureNormalizer, PredictorParams, PropNetSpec};
use crate::scene::{
    check_layout_version, EnvironmentMode, JointSpec, JointType, ObjectState, SceneState, Trajectory,
    FEATURE_LAYOUT_VERSION,
};
use crate::{Error, Result, Vec2};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const DATASET_MAGIC: &[u8; 8] = b"BRDPNDAT";
const CHECKPOINT_MAGIC: &[u8; 8] = b"BRDPNCKP";

struct Container {
    layout_version: u32,
    metadata: String,
    arrays: Vec<(String, Vec<f64>)>,
}

fn encode(magic: &[u8; 8], format: u32, c: &Container) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&c.layout_version.to_le_bytes());
    out.extend_from_slice(&(c.metadata.len() as u64).to_le_bytes());
    out.extend_from_slice(c.metadata.as_bytes());
    out.extend_from_slice(&(c.arrays.len() as u64).to_le_bytes());
    for (name, v) in &c.arrays {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(v.len() as u64).to_le_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Corrupt("length overflow".into()))
    }
}

fn decode(bytes: &[u8], magic: &[u8; 8], kind: &'static str, format: u32) -> Result<Container> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8).ok() != Some(&magic[..]) {
        return Err(Error::BadMagic(kind));
    }
    let found = r.u32()?;
    if found != format {
        return Err(Error::FormatVersion {
            kind,
            expected: format,
            found,
        });
    }
    let layout_version = r.u32()?;
    check_layout_version(layout_version)?;
    let n = r.len()?;
    let metadata = std::str::from_utf8(r.take(n)?)
        .map_err(|_| Error::Corrupt("metadata is not UTF-8".into()))?
        .to_string();
    let count = r.len()?;
    let mut arrays = Vec::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| Error::Corrupt("array name is not UTF-8".into()))?
            .to_string();
        let len = r.len()?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Corrupt("length overflow".into()))?)?;
        let v = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        arrays.push((name, v));
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Container {
        layout_version,
        metadata,
        arrays,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingInputs(vec![path.to_path_buf()]));
    }
    Ok(std::fs::read(path)?)
}

struct Arrays {
    arrays: std::collections::HashMap<String, Vec<f64>>,
}

impl Arrays {
    fn new(v: Vec<(String, Vec<f64>)>) -> Self {
        Arrays {
            arrays: v.into_iter().collect(),
        }
    }

    fn take(&mut self, name: &str, len: Option<usize>) -> Result<Vec<f64>> {
        let v = self
            .arrays
            .remove(name)
            .ok_or_else(|| Error::Corrupt(format!("missing array '{name}'")))?;
        if let Some(n) = len {
            if v.len() != n {
                return Err(Error::Corrupt(format!("array '{name}' has {} values, expected {n}", v.len())));
            }
        }
        Ok(v)
    }

    fn finish(self) -> Result<()> {
        match self.arrays.keys().min() {
            Some(name) => Err(Error::Corrupt(format!("unexpected array '{name}'"))),
            None => Ok(()),
        }
    }
}

// ---------------------------------------------------------------- datasets

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: DatasetSpec,
    pub scene_seeds: Vec<u64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub trajectories: Vec<Trajectory>,
}

const OBJECT_FIELDS: usize = 8;
const JOINT_FIELDS: usize = 14;

fn kind_code(k: JointType) -> f64 {
    k.index() as f64
}

fn mode_code(m: EnvironmentMode) -> f64 {
    match m {
        EnvironmentMode::FixedOnly => 0.0,
        EnvironmentMode::Mixed => 1.0,
    }
}

fn whole(x: f64, what: &str) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
        Ok(x as usize)
    } else {
        Err(Error::Corrupt(format!("{what} {x} is not a count")))
    }
}

fn encode_trajectory(k: usize, t: &Trajectory, out: &mut Vec<(String, Vec<f64>)>) -> Result<()> {
    t.validate()?;
    let s0 = t.initial();
    let n = s0.objects.len();
    for s in &t.states {
        if s.objects.len() != n || s.joints != s0.joints {
            return Err(Error::InvalidScene(format!(
                "trajectory {k} changes its objects or joints over time"
            )));
        }
    }
    out.push((
        format!("traj.{k}.header"),
        vec![t.states.len() as f64, n as f64, s0.joints.len() as f64, s0.time as f64, t.dt, mode_code(t.environment_mode)],
    ));
    let mut objs = Vec::with_capacity(t.states.len() * n * OBJECT_FIELDS);
    for s in &t.states {
        for o in &s.objects {
            objs.extend_from_slice(&[
                o.position.x,
                o.position.y,
                o.velocity.x,
                o.velocity.y,
                o.angle,
                o.angular_velocity,
                o.radius,
                if o.controlled { 1.0 } else { 0.0 },
            ]);
        }
    }
    out.push((format!("traj.{k}.objects"), objs));
    let mut joints = Vec::with_capacity(s0.joints.len() * JOINT_FIELDS);
    for j in &s0.joints {
        joints.extend_from_slice(&[
            j.a as f64,
            j.b as f64,
            kind_code(j.kind),
            j.anchor.x,
            j.anchor.y,
            j.axis.x,
            j.axis.y,
            j.local_anchor_a.x,
            j.local_anchor_a.y,
            j.local_anchor_b.x,
            j.local_anchor_b.y,
            j.local_axis_a.x,
            j.local_axis_a.y,
            j.reference_angle,
        ]);
    }
    out.push((format!("traj.{k}.joints"), joints));
    out.push((
        format!("traj.{k}.controls"),
        t.controls.iter().flat_map(|u| [u.x, u.y]).collect(),
    ));
    Ok(())
}

fn decode_trajectory(k: usize, a: &mut Arrays) -> Result<Trajectory> {
    let h = a.take(&format!("traj.{k}.header"), Some(6))?;
    let (states, n, nj, t0) = (whole(h[0], "states")?, whole(h[1], "objects")?, whole(h[2], "joints")?, whole(h[3], "time")?);
    if states == 0 {
        return Err(Error::Corrupt(format!("trajectory {k} has no states")));
    }
    let mode = match h[5] {
        x if x == 0.0 => EnvironmentMode::FixedOnly,
        x if x == 1.0 => EnvironmentMode::Mixed,
        x => return Err(Error::Corrupt(format!("environment mode code {x}"))),
    };
    let v = |d: &[f64], i: usize| Vec2::new(d[i], d[i + 1]);
    let jd = a.take(&format!("traj.{k}.joints"), Some(nj * JOINT_FIELDS))?;
    let joints = jd
        .chunks_exact(JOINT_FIELDS)
        .map(|d| {
            let kind = JointType::from_index(whole(d[2], "joint kind")?)
                .ok_or_else(|| Error::Corrupt(format!("joint kind {}", d[2])))?;
            Ok(JointSpec {
                a: whole(d[0], "joint body")?,
                b: whole(d[1], "joint body")?,
                kind,
                anchor: v(d, 3),
                axis: v(d, 5),
                local_anchor_a: v(d, 7),
                local_anchor_b: v(d, 9),
                local_axis_a: v(d, 11),
                reference_angle: d[13],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let od = a.take(&format!("traj.{k}.objects"), Some(states * n * OBJECT_FIELDS))?;
    let states: Vec<SceneState> = od
        .chunks_exact(n * OBJECT_FIELDS)
        .enumerate()
        .map(|(t, row)| SceneState {
            objects: row
                .chunks_exact(OBJECT_FIELDS)
                .map(|d| ObjectState {
                    position: v(d, 0),
                    velocity: v(d, 2),
                    angle: d[4],
                    angular_velocity: d[5],
                    radius: d[6],
                    controlled: d[7] != 0.0,
                })
                .collect(),
            joints: joints.clone(),
            time: t0 + t,
        })
        .collect();
    let cd = a.take(&format!("traj.{k}.controls"), Some(2 * (states.len() - 1)))?;
    let traj = Trajectory {
        controls: cd.chunks_exact(2).map(|d| v(d, 0)).collect(),
        states,
        dt: h[4],
        environment_mode: mode,
    };
    traj.validate()?;
    Ok(traj)
}

pub fn save_dataset(path: &Path, d: &Dataset) -> Result<()> {
    if d.meta.count != d.trajectories.len() {
        return Err(Error::LengthMismatch(format!(
            "metadata counts {} trajectories, dataset holds {}",
            d.meta.count,
            d.trajectories.len()
        )));
    }
    let mut arrays = Vec::new();
    for (k, t) in d.trajectories.iter().enumerate() {
        encode_trajectory(k, t, &mut arrays)?;
    }
    let c = Container {
        layout_version: FEATURE_LAYOUT_VERSION,
        metadata: serde_json::to_string_pretty(&d.meta)?,
        arrays,
    };
    write_file(path, &encode(DATASET_MAGIC, DATASET_FORMAT_VERSION, &c))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let c = decode(&read_file(path)?, DATASET_MAGIC, "dataset", DATASET_FORMAT_VERSION)?;
    let meta: DatasetMeta = serde_json::from_str(&c.metadata)?;
    let mut a = Arrays::new(c.arrays);
    let trajectories = (0..meta.count)
        .map(|k| decode_trajectory(k, &mut a))
        .collect::<Result<Vec<_>>>()?;
    a.finish()?;
    Ok(Dataset { meta, trajectories })
}

// ------------------------------------------------------------- checkpoints

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CheckpointMeta {
    Physics { spec: PropNetSpec },
    Belief { spec: BeliefSpec },
}

/// Either network, as found in a checkpoint file.
#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint {
    Physics(PredictorParams),
    Belief(BeliefParams),
}

fn normalizer_arrays(n: &FeatureNormalizer, out: &mut Vec<(String, Vec<f64>)>) {
    for (name, v) in [
        ("object_shift", &n.object_shift),
        ("object_scale", &n.object_scale),
        ("edge_shift", &n.edge_shift),
        ("edge_scale", &n.edge_scale),
        ("target_scale", &n.target_scale),
    ] {
        out.push((format!("normalizer.{name}"), v.clone()));
    }
}

fn read_normalizer(a: &mut Arrays, like: &FeatureNormalizer) -> Result<FeatureNormalizer> {
    Ok(FeatureNormalizer {
        object_shift: a.take("normalizer.object_shift", Some(like.object_shift.len()))?,
        object_scale: a.take("normalizer.object_scale", Some(like.object_scale.len()))?,
        edge_shift: a.take("normalizer.edge_shift", Some(like.edge_shift.len()))?,
        edge_scale: a.take("normalizer.edge_scale", Some(like.edge_scale.len()))?,
        target_scale: a.take("normalizer.target_scale", Some(like.target_scale.len()))?,
    })
}

fn param_arrays<P: Parameters>(p: &P, out: &mut Vec<(String, Vec<f64>)>) {
    p.visit_params("", &mut |name, t| out.push((format!("param.{name}"), t.data().to_vec())));
}

fn fill_params<P: Parameters>(p: &mut P, a: &mut Arrays) -> Result<()> {
    let mut err = None;
    p.visit_params_mut("", &mut |name, t| {
        if err.is_some() {
            return;
        }
        match a.take(&format!("param.{name}"), Some(t.data().len())) {
            Ok(v) => t.data_mut().copy_from_slice(&v),
            Err(e) => err = Some(e),
        }
    });
    err.map_or(Ok(()), Err)
}

fn save_checkpoint<P: Parameters>(
    path: &Path,
    meta: &CheckpointMeta,
    params: &P,
    normalizer: &FeatureNormalizer,
    layout_version: u32,
) -> Result<()> {
    let mut arrays = Vec::new();
    param_arrays(params, &mut arrays);
    normalizer_arrays(normalizer, &mut arrays);
    let c = Container {
        layout_version,
        metadata: serde_json::to_string_pretty(meta)?,
        arrays,
    };
    write_file(path, &encode(CHECKPOINT_MAGIC, CHECKPOINT_FORMAT_VERSION, &c))
}

pub fn save_physics(path: &Path, p: &PredictorParams) -> Result<()> {
    let meta = CheckpointMeta::Physics { spec: p.spec().clone() };
    save_checkpoint(path, &meta, p, &p.normalizer, p.layout_version)
}

pub fn save_belief(path: &Path, p: &BeliefParams) -> Result<()> {
    let meta = CheckpointMeta::Belief { spec: p.spec.clone() };
    save_checkpoint(path, &meta, p, &p.normalizer, p.layout_version)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let c = decode(&read_file(path)?, CHECKPOINT_MAGIC, "checkpoint", CHECKPOINT_FORMAT_VERSION)?;
    let meta: CheckpointMeta = serde_json::from_str(&c.metadata)?;
    let mut a = Arrays::new(c.arrays);
    let out = match meta {
        CheckpointMeta::Physics { spec } => {
            let mut p = PredictorParams::zeros(spec)?;
            fill_params(&mut p, &mut a)?;
            p.normalizer = read_normalizer(&mut a, &p.normalizer)?;
            p.layout_version = c.layout_version;
            Checkpoint::Physics(p)
        }
        CheckpointMeta::Belief { spec } => {
            let mut p = BeliefParams::zeros(spec)?;
            fill_params(&mut p, &mut a)?;
            p.normalizer = read_normalizer(&mut a, &p.normalizer)?;
            p.layout_version = c.layout_version;
            Checkpoint::Belief(p)
        }
    };
    a.finish()?;
    Ok(out)
}

pub fn load_physics(path: &Path) -> Result<PredictorParams> {
    match read_checkpoint(path)? {
        Checkpoint::Physics(p) => Ok(p),
        Checkpoint::Belief(_) => Err(Error::Corrupt(format!("{} holds a belief network", path.display()))),
    }
}

pub fn load_belief(path: &Path) -> Result<BeliefParams> {
    match read_checkpoint(path)? {
        Checkpoint::Belief(p) => Ok(p),
        Checkpoint::Physics(_) => Err(Error::Corrupt(format!("{} holds a physics network", path.display()))),
    }
}
