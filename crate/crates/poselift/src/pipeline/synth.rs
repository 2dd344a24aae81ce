use crate::error::{Error, Result};
use crate::numeric::StreamKey;
use crate::pipeline::camera::{project_pinhole, CameraExtrinsics};
use crate::pipeline::io::PoseSequence;
use rand::Rng;
use std::f64::consts::TAU;

/// Parent index and rest offset (mm) of every non-root joint of the default
/// 17-joint skeleton, in joint order. The root (index 0) anchors the chain.
const BONES: [(usize, [f64; 3]); 16] = [
    (0, [-130.0, 0.0, 0.0]),  // right_hip
    (1, [0.0, 0.0, -440.0]),  // right_knee
    (2, [0.0, 0.0, -440.0]),  // right_ankle
    (0, [130.0, 0.0, 0.0]),   // left_hip
    (4, [0.0, 0.0, -440.0]),  // left_knee
    (5, [0.0, 0.0, -440.0]),  // left_ankle
    (0, [0.0, 0.0, 230.0]),   // spine
    (7, [0.0, 0.0, 230.0]),   // thorax
    (8, [0.0, 0.0, 110.0]),   // neck
    (9, [0.0, 0.0, 120.0]),   // head
    (8, [180.0, 0.0, 0.0]),   // left_shoulder
    (11, [0.0, 0.0, -280.0]), // left_elbow
    (12, [0.0, 0.0, -250.0]), // left_wrist
    (8, [-180.0, 0.0, 0.0]),  // right_shoulder
    (14, [0.0, 0.0, -280.0]), // right_elbow
    (15, [0.0, 0.0, -250.0]), // right_wrist
];

const REST_ROOT: [f64; 3] = [0.0, 0.0, 1000.0];
const MIN_DEPTH_MM: f64 = 100.0;
const MAX_RESAMPLE_ATTEMPTS: usize = 100;

/// Parent-child joint index pairs of the generated kinematic chain, for
/// checking bone-length constancy.
pub fn bone_edges() -> Vec<(usize, usize)> {
    BONES
        .iter()
        .enumerate()
        .map(|(i, (parent, _))| (*parent, i + 1))
        .collect()
}

/// The camera used by the CLI's synthetic datasets: 4 m back from the
/// figure, slightly off-axis and above.
pub fn default_camera() -> CameraExtrinsics {
    CameraExtrinsics::look_at([600.0, -3900.0, 1300.0], [0.0, 0.0, 950.0])
        .expect("default camera is valid")
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_sequences: usize,
    pub length: usize,
    pub seed: u64,
    pub camera: CameraExtrinsics,
    /// Scales all joint-angle and root-translation amplitudes; 0 freezes
    /// the figure.
    pub motion_amplitude: f64,
}

impl SynthConfig {
    pub fn new(n_sequences: usize, length: usize, seed: u64) -> Self {
        SynthConfig {
            n_sequences,
            length,
            seed,
            camera: default_camera(),
            motion_amplitude: 1.0,
        }
    }
}

/// Per-axis sinusoid: angle(t) = amplitude * sin(tau * cycles * t / length + phase).
#[derive(Debug, Clone, Copy)]
struct Oscillator {
    amplitude: f64,
    cycles: f64,
    phase: f64,
}

impl Oscillator {
    fn sample(rng: &mut impl Rng, max_amplitude: f64) -> Self {
        Oscillator {
            amplitude: rng.gen_range(0.0..=max_amplitude),
            cycles: rng.gen_range(0.5..2.5),
            phase: rng.gen_range(0.0..TAU),
        }
    }

    fn value(&self, t: usize, length: usize) -> f64 {
        self.amplitude * (TAU * self.cycles * t as f64 / length as f64 + self.phase).sin()
    }
}

fn rotation_zyx(az: f64, ay: f64, ax: f64) -> [[f64; 3]; 3] {
    let (sz, cz) = az.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sx, cx) = ax.sin_cos();
    // Rz * Ry * Rx
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

/// Generates paired (2D, 3D) sequences from a jointed figure whose bone
/// angles follow smooth random sinusoids. 3D output is world-frame (the
/// camera extrinsics ride along in the pose record); 2D is the pinhole
/// projection of the camera-frame joints. Fully deterministic per seed;
/// sequences whose motion puts a joint too close to (or behind) the camera
/// are resampled.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<PoseSequence>> {
    if cfg.length < 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic sequence length must be >= 2, got {}",
            cfg.length
        )));
    }
    if cfg.motion_amplitude < 0.0 {
        return Err(Error::InvalidArgument("motion amplitude must be >= 0".into()));
    }

    let key = StreamKey::from_seed(cfg.seed).child("synth");
    let mut out = Vec::with_capacity(cfg.n_sequences);
    for i in 0..cfg.n_sequences {
        let mut rng = key.child_index("seq", i as u64).rng();
        let mut accepted = None;
        for _attempt in 0..MAX_RESAMPLE_ATTEMPTS {
            match generate_one(cfg, &mut rng) {
                Ok(frames) => {
                    accepted = Some(frames);
                    break;
                }
                Err(Error::Degenerate(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let (frames_2d, frames_3d) = accepted.ok_or_else(|| {
            Error::Degenerate(format!(
                "sequence {i}: no camera-visible motion found in {MAX_RESAMPLE_ATTEMPTS} attempts"
            ))
        })?;
        out.push(PoseSequence {
            subject: format!("S{}", i % 5),
            action: match i % 3 {
                0 => "sway".to_string(),
                1 => "wave".to_string(),
                _ => "step".to_string(),
            },
            camera: "cam0".to_string(),
            frames_2d,
            frames_3d: Some(frames_3d),
            extrinsics: Some(cfg.camera.clone()),
        });
    }
    Ok(out)
}

type FramePair = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn generate_one(cfg: &SynthConfig, rng: &mut impl Rng) -> Result<FramePair> {
    let amp = cfg.motion_amplitude;
    // Three rotation axes per bone plus root translation.
    let bone_osc: Vec<[Oscillator; 3]> = (0..BONES.len())
        .map(|_| {
            [
                Oscillator::sample(rng, 0.45 * amp),
                Oscillator::sample(rng, 0.45 * amp),
                Oscillator::sample(rng, 0.45 * amp),
            ]
        })
        .collect();
    let root_osc = [
        Oscillator::sample(rng, 220.0 * amp),
        Oscillator::sample(rng, 220.0 * amp),
        Oscillator::sample(rng, 120.0 * amp),
    ];

    let n_joints = BONES.len() + 1;
    let mut frames_3d = Vec::with_capacity(cfg.length);
    let mut frames_2d = Vec::with_capacity(cfg.length);
    for t in 0..cfg.length {
        let mut joints = vec![[0.0f64; 3]; n_joints];
        joints[0] = [
            REST_ROOT[0] + root_osc[0].value(t, cfg.length),
            REST_ROOT[1] + root_osc[1].value(t, cfg.length),
            REST_ROOT[2] + root_osc[2].value(t, cfg.length),
        ];
        for (b, (parent, offset)) in BONES.iter().enumerate() {
            let rot = rotation_zyx(
                bone_osc[b][0].value(t, cfg.length),
                bone_osc[b][1].value(t, cfg.length),
                bone_osc[b][2].value(t, cfg.length),
            );
            let rotated = crate::numeric::svd3::mat3_apply(&rot, offset);
            let p = joints[*parent];
            joints[b + 1] = [p[0] + rotated[0], p[1] + rotated[1], p[2] + rotated[2]];
        }

        let mut frame_3d = Vec::with_capacity(n_joints * 3);
        let mut frame_2d = Vec::with_capacity(n_joints * 2);
        for joint in &joints {
            let cam_pt = cfg.camera.world_point_to_camera(*joint);
            if cam_pt[2] < MIN_DEPTH_MM {
                return Err(Error::Degenerate("joint behind camera".into()));
            }
            let px = project_pinhole(cam_pt)?;
            frame_3d.extend_from_slice(joint);
            frame_2d.extend_from_slice(&px);
        }
        frames_3d.push(frame_3d);
        frames_2d.push(frame_2d);
    }
    Ok((frames_2d, frames_3d))
}
