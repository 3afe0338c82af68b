//! Run-directory management: field snapshots, trajectory and reward logs,
//! PPM rendering and checkpoints.

use crate::env::{Environment, EpisodeSummary, VectorEnv};
use crate::flow::{Field2, FluidState, GridSpec};
use crate::nn::{AdamState, MlpParams};
use crate::policy::{actor_architecture, critic_architecture};
use crate::swarm::{AgentState, ForceBreakdown};
use crate::trainer::{TrainHooks, TrainerState, UpdateStats};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// Velocity range (m/s) mapped onto the blue-white-red render colormap.
pub const RENDER_RANGE: (f64, f64) = (-0.45, 0.75);

// ---------------------------------------------------------------------------
// Field snapshots: flat little-endian f32 binary plus a JSON sidecar.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset_bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub t: f64,
    pub arrays: Vec<ArrayLayout>,
}

fn field_to_f32_bytes(field: &Field2, out: &mut Vec<u8>) {
    for v in field.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Writes `<stem>.bin` (u, then v, then p, row-major f32 LE) and
/// `<stem>.json` describing the layout. Returns the two paths.
pub fn write_field_snapshot(
    stem: &Path,
    grid: &GridSpec,
    state: &FluidState,
    t: f64,
) -> io::Result<(PathBuf, PathBuf)> {
    let mut bytes = Vec::with_capacity(4 * (3 * grid.nx * grid.ny + 2 * grid.ny + grid.nx));
    let u_offset = 0;
    field_to_f32_bytes(&state.vel.u, &mut bytes);
    let v_offset = bytes.len();
    field_to_f32_bytes(&state.vel.v, &mut bytes);
    let p_offset = bytes.len();
    field_to_f32_bytes(&state.pressure.0, &mut bytes);
    let meta = SnapshotMeta {
        nx: grid.nx,
        ny: grid.ny,
        dx: grid.dx,
        t,
        arrays: vec![
            ArrayLayout {
                name: "u".into(),
                rows: grid.nx + 1,
                cols: grid.ny,
                offset_bytes: u_offset,
            },
            ArrayLayout {
                name: "v".into(),
                rows: grid.nx,
                cols: grid.ny + 1,
                offset_bytes: v_offset,
            },
            ArrayLayout {
                name: "p".into(),
                rows: grid.nx,
                cols: grid.ny,
                offset_bytes: p_offset,
            },
        ],
    };
    let bin_path = stem.with_extension("bin");
    let json_path = stem.with_extension("json");
    fs::write(&bin_path, &bytes)?;
    fs::write(&json_path, serde_json::to_vec_pretty(&meta)?)?;
    Ok((bin_path, json_path))
}

/// A snapshot read back from disk (f32 data widened to f64).
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub u: Field2,
    pub v: Field2,
    pub p: Field2,
}

pub fn read_snapshot(json_path: &Path) -> io::Result<Snapshot> {
    let meta: SnapshotMeta = serde_json::from_slice(&fs::read(json_path)?)?;
    let bin_path = json_path.with_extension("bin");
    let mut bytes = Vec::new();
    File::open(&bin_path)?.read_to_end(&mut bytes)?;
    let read_array = |layout: &ArrayLayout| -> io::Result<Field2> {
        let count = layout.rows * layout.cols;
        let end = layout.offset_bytes + 4 * count;
        if end > bytes.len() {
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!("snapshot array {} overruns the binary", layout.name),
            ));
        }
        let mut field = Field2::zeros(layout.rows, layout.cols);
        for idx in 0..count {
            let at = layout.offset_bytes + 4 * idx;
            let value = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
            field.set(idx / layout.cols, idx % layout.cols, value);
        }
        Ok(field)
    };
    let find = |name: &str| -> io::Result<&ArrayLayout> {
        meta.arrays.iter().find(|a| a.name == name).ok_or_else(|| {
            io::Error::new(io::ErrorKind::InvalidData, format!("missing array {name}"))
        })
    };
    let u = read_array(find("u")?)?;
    let v = read_array(find("v")?)?;
    let p = read_array(find("p")?)?;
    Ok(Snapshot { meta, u, v, p })
}

/// Agent row block matching the trajectory-export schema.
pub fn write_agent_rows(
    path: &Path,
    step: u64,
    t: f64,
    agents: &[AgentState],
    forces: &[ForceBreakdown],
) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "step,t,agent_id,x,y,vx,vy,ax_action,ay_action,f_hydro_x,f_hydro_y,f_drag_x,f_drag_y"
    )?;
    for (agent, force) in agents.iter().zip(forces) {
        writeln!(
            w,
            "{step},{t},{},{},{},{},{},{},{},{},{},{},{}",
            agent.id,
            agent.pos.x,
            agent.pos.y,
            agent.vel.x,
            agent.vel.y,
            agent.prev_action.x,
            agent.prev_action.y,
            force.hydro.x,
            force.hydro.y,
            force.drag.x,
            force.drag.y
        )?;
    }
    w.flush()
}

/// Writes a full snapshot block named by the zero-padded global step:
/// fields, sidecar and the agent CSV rows.
pub fn write_snapshot(dir: &Path, global_step: u64, env: &Environment) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let stem = dir.join(format!("snap_{global_step:010}"));
    write_field_snapshot(&stem, env.grid(), env.fluid(), env.time())?;
    write_agent_rows(
        &dir.join(format!("snap_{global_step:010}_agents.csv")),
        global_step,
        env.time(),
        env.agents(),
        env.last_forces(),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// PPM rendering.

/// Diverging blue-white-red map over `RENDER_RANGE`, white at zero.
fn colormap(value: f64) -> [u8; 3] {
    let (lo, hi) = RENDER_RANGE;
    let v = value.clamp(lo, hi);
    if v < 0.0 {
        let t = v / lo; // 0 at zero velocity, 1 at the blue end
        let s = (255.0 * (1.0 - t)) as u8;
        [s, s, 255]
    } else {
        let t = v / hi;
        let s = (255.0 * (1.0 - t)) as u8;
        [255, s, s]
    }
}

/// Renders the x-velocity field (cell-centered) to a P6 PPM, with optional
/// agent disks drawn as filled dark circles. Rows run top-down.
pub fn render_ppm(
    snapshot: &Snapshot,
    agents: Option<&[(f64, f64, f64)]>,
    out: &Path,
) -> io::Result<()> {
    let (nx, ny) = (snapshot.meta.nx, snapshot.meta.ny);
    let dx = snapshot.meta.dx;
    let mut pixels = vec![0u8; 3 * nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let u_center = 0.5 * (snapshot.u.at(i, j) + snapshot.u.at(i + 1, j));
            let rgb = colormap(u_center);
            let row = ny - 1 - j;
            let at = 3 * (row * nx + i);
            pixels[at..at + 3].copy_from_slice(&rgb);
        }
    }
    if let Some(agents) = agents {
        for &(x, y, r) in agents {
            let i0 = (((x - r) / dx).floor().max(0.0)) as usize;
            let i1 = ((((x + r) / dx).ceil()).max(0.0) as usize).min(nx - 1);
            let j0 = (((y - r) / dx).floor().max(0.0)) as usize;
            let j1 = ((((y + r) / dx).ceil()).max(0.0) as usize).min(ny - 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    let cx = (i as f64 + 0.5) * dx;
                    let cy = (j as f64 + 0.5) * dx;
                    if (cx - x).powi(2) + (cy - y).powi(2) <= r * r {
                        let row = ny - 1 - j;
                        let at = 3 * (row * nx + i);
                        pixels[at..at + 3].copy_from_slice(&[40, 40, 40]);
                    }
                }
            }
        }
    }
    let mut w = BufWriter::new(File::create(out)?);
    write!(w, "P6\n{nx} {ny}\n255\n")?;
    w.write_all(&pixels)?;
    w.flush()
}

/// Reads the agent positions of a snapshot's CSV block, if present.
pub fn read_agent_circles(csv_path: &Path, radius: f64) -> io::Result<Vec<(f64, f64, f64)>> {
    let text = fs::read_to_string(csv_path)?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() >= 5 {
            let x: f64 = cols[3].parse().map_err(invalid_data)?;
            let y: f64 = cols[4].parse().map_err(invalid_data)?;
            out.push((x, y, radius));
        }
    }
    Ok(out)
}

fn invalid_data<E: std::fmt::Display>(e: E) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

// ---------------------------------------------------------------------------
// Checkpoints: flat little-endian f64 vector plus a JSON header.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub actor_arch: Vec<usize>,
    pub critic_arch: Vec<usize>,
    pub updates_done: usize,
    pub steps_per_env: usize,
    pub global_steps: u64,
    pub adam_t_actor: u64,
    pub adam_t_critic: u64,
    pub rng_seed_hex: String,
    pub rng_word_pos: u128,
    /// (element offset, element length) per section of the flat vector.
    pub sections: Vec<(String, usize, usize)>,
}

fn write_f64_slice(bytes: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

/// Saves `<stem>.json` + `<stem>.bin` with parameters and optimizer moments.
pub fn save_checkpoint(stem: &Path, state: &TrainerState) -> io::Result<()> {
    if let Some(parent) = stem.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut sections = Vec::new();
    let mut bytes = Vec::new();
    let mut offset = 0usize;
    let mut push = |name: &str, data: &[f64], bytes: &mut Vec<u8>| {
        sections.push((name.to_string(), offset, data.len()));
        write_f64_slice(bytes, data);
        offset += data.len();
    };
    push("actor", &state.actor.data, &mut bytes);
    push("critic", &state.critic.data, &mut bytes);
    push("actor_m", &state.actor_opt.m, &mut bytes);
    push("actor_v", &state.actor_opt.v, &mut bytes);
    push("critic_m", &state.critic_opt.m, &mut bytes);
    push("critic_v", &state.critic_opt.v, &mut bytes);
    let header = CheckpointHeader {
        version: 1,
        actor_arch: state.actor.arch.sizes.clone(),
        critic_arch: state.critic.arch.sizes.clone(),
        updates_done: state.updates_done,
        steps_per_env: state.steps_per_env,
        global_steps: state.global_steps,
        adam_t_actor: state.actor_opt.t,
        adam_t_critic: state.critic_opt.t,
        rng_seed_hex: hex_encode(&state.rng.get_seed()),
        rng_word_pos: state.rng.get_word_pos(),
        sections,
    };
    fs::write(
        stem.with_extension("json"),
        serde_json::to_vec_pretty(&header)?,
    )?;
    fs::write(stem.with_extension("bin"), &bytes)?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> io::Result<TrainerState> {
    let header: CheckpointHeader = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
    let bytes = fs::read(stem.with_extension("bin"))?;
    let section = |name: &str| -> io::Result<Vec<f64>> {
        let (_, offset, len) = header
            .sections
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| invalid_data(format!("missing checkpoint section {name}")))?;
        let start = 8 * offset;
        let end = start + 8 * len;
        if end > bytes.len() {
            return Err(invalid_data(format!(
                "checkpoint section {name} overruns binary"
            )));
        }
        Ok(bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let actor_arch = crate::nn::Architecture::new(header.actor_arch.clone());
    let critic_arch = crate::nn::Architecture::new(header.critic_arch.clone());
    if actor_arch != actor_architecture() {
        return Err(invalid_data("unexpected actor architecture"));
    }
    let n_agents = critic_arch.input_dim() / crate::env::OBS_DIM;
    if critic_arch != critic_architecture(n_agents) {
        return Err(invalid_data("unexpected critic architecture"));
    }
    let actor = MlpParams {
        arch: actor_arch,
        data: section("actor")?,
    };
    let critic = MlpParams {
        arch: critic_arch,
        data: section("critic")?,
    };
    if actor.data.len() != actor.arch.param_count()
        || critic.data.len() != critic.arch.param_count()
    {
        return Err(invalid_data("checkpoint parameter count mismatch"));
    }
    let actor_opt = AdamState {
        m: section("actor_m")?,
        v: section("actor_v")?,
        t: header.adam_t_actor,
    };
    let critic_opt = AdamState {
        m: section("critic_m")?,
        v: section("critic_v")?,
        t: header.adam_t_critic,
    };
    let seed = hex_decode(&header.rng_seed_hex).ok_or_else(|| invalid_data("bad rng seed hex"))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(header.rng_word_pos);
    Ok(TrainerState {
        actor,
        critic,
        actor_opt,
        critic_opt,
        rng,
        updates_done: header.updates_done,
        steps_per_env: header.steps_per_env,
        global_steps: header.global_steps,
    })
}

fn hex_encode(bytes: &[u8; 32]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hex_decode(text: &str) -> Option<[u8; 32]> {
    if text.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, chunk) in text.as_bytes().chunks_exact(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16)?;
        let lo = (chunk[1] as char).to_digit(16)?;
        out[i] = (hi * 16 + lo) as u8;
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// Run directory and CSV logging.

pub struct RunLogger {
    pub dir: PathBuf,
    rewards: BufWriter<File>,
    episodes: BufWriter<File>,
    updates: BufWriter<File>,
    snapshot_every: usize,
}

impl RunLogger {
    /// Creates `dir` (and parents), writes the resolved config into it and
    /// opens the CSV logs.
    pub fn create(dir: &Path, config_toml: &str, snapshot_every: usize) -> io::Result<Self> {
        fs::create_dir_all(dir.join("snapshots"))?;
        fs::create_dir_all(dir.join("checkpoints"))?;
        fs::write(dir.join("config.toml"), config_toml)?;
        let mut rewards = BufWriter::new(File::create(dir.join("rewards.csv"))?);
        writeln!(
            rewards,
            "global_step,env_id,episode_id,step_in_episode,mean_r_progress,mean_r_energy,mean_r_smooth,status"
        )?;
        let mut episodes = BufWriter::new(File::create(dir.join("episodes.csv"))?);
        writeln!(
            episodes,
            "env_id,episode_id,length,norm_progress,norm_energy,norm_smooth,status"
        )?;
        let mut updates = BufWriter::new(File::create(dir.join("update_stats.csv"))?);
        writeln!(
            updates,
            "update,global_step,loss_progress,loss_energy,loss_smooth,critic_loss,entropy,clip_fraction,approx_kl,cos_progress_energy,cos_progress_smooth,cos_energy_smooth,min_pair_cosine"
        )?;
        Ok(Self {
            dir: dir.to_path_buf(),
            rewards,
            episodes,
            updates,
            snapshot_every,
        })
    }

    pub fn write_episode_row(&mut self, summary: &EpisodeSummary) -> io::Result<()> {
        writeln!(
            self.episodes,
            "{},{},{},{},{},{},{}",
            summary.env_id,
            summary.episode_index,
            summary.length,
            summary.normalized[0],
            summary.normalized[1],
            summary.normalized[2],
            summary.status.label()
        )
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.rewards.flush()?;
        self.episodes.flush()?;
        self.updates.flush()
    }
}

impl TrainHooks for RunLogger {
    fn on_step(
        &mut self,
        global_step: u64,
        env_id: usize,
        episode_index: u64,
        step_in_episode: usize,
        mean: [f64; 3],
        status: &str,
    ) {
        let _ = writeln!(
            self.rewards,
            "{global_step},{env_id},{episode_index},{step_in_episode},{},{},{},{status}",
            mean[0], mean[1], mean[2]
        );
    }

    fn on_episode(&mut self, summary: &EpisodeSummary) {
        let _ = self.write_episode_row(summary);
    }

    fn on_update(&mut self, update: usize, global_step: u64, stats: &UpdateStats) {
        let _ = writeln!(
            self.updates,
            "{update},{global_step},{},{},{},{},{},{},{},{},{},{},{}",
            stats.actor_loss[0],
            stats.actor_loss[1],
            stats.actor_loss[2],
            stats.critic_loss,
            stats.entropy,
            stats.clip_fraction,
            stats.approx_kl,
            stats.pair_cosines[0],
            stats.pair_cosines[1],
            stats.pair_cosines[2],
            stats.min_pair_cosine
        );
        // Losses land on disk once per update so a crash costs at most one.
        let _ = self.flush();
    }

    fn on_checkpoint(&mut self, update: usize, state: &TrainerState) {
        let stem = self
            .dir
            .join("checkpoints")
            .join(format!("ckpt_{update:06}"));
        if let Err(e) = save_checkpoint(&stem, state) {
            eprintln!("checkpoint write failed: {e}");
        }
    }

    fn on_post_step(&mut self, venv: &VectorEnv, global_step: u64) {
        if self.snapshot_every == 0 {
            return;
        }
        let env = &venv.envs()[0];
        let steps_done = global_step / venv.n_envs() as u64;
        if steps_done % self.snapshot_every as u64 == 0 {
            if let Err(e) = write_snapshot(&self.dir.join("snapshots"), global_step, env) {
                eprintln!("snapshot write failed: {e}");
            }
        }
    }
}
