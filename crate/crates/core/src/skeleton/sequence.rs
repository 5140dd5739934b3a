use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SkeletonGraph;
use crate::error::{Error, Result};

/// One labelled clip. Features are stored joint-major, then frame, then
/// coordinate: index `(j * T + t) * d + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    pub joints: usize,
    pub frames: usize,
    pub dims: usize,
    pub features: Vec<f64>,
    pub label: usize,
    pub subject_id: u64,
    pub sample_id: u64,
}

impl SkeletonSequence {
    pub fn new(joints: usize, frames: usize, dims: usize, features: Vec<f64>, label: usize) -> Result<Self> {
        if joints == 0 || frames == 0 || dims == 0 || features.len() != joints * frames * dims {
            return Err(Error::dim("sequence", &[joints, frames, dims], &[features.len()]));
        }
        Ok(SkeletonSequence {
            joints,
            frames,
            dims,
            features,
            label,
            subject_id: 0,
            sample_id: 0,
        })
    }

    #[inline]
    pub fn index(&self, joint: usize, frame: usize, coord: usize) -> usize {
        (joint * self.frames + frame) * self.dims + coord
    }

    pub fn at(&self, joint: usize, frame: usize, coord: usize) -> f64 {
        self.features[self.index(joint, frame, coord)]
    }

    fn with_features(&self, frames: usize, features: Vec<f64>) -> Self {
        SkeletonSequence {
            frames,
            features,
            ..self.clone()
        }
    }
}

/// Input stream derived from joint coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    /// Joint coordinates.
    #[default]
    J,
    /// Joint motion: next frame minus current frame.
    Jm,
    /// Bones: joint minus its parent.
    B,
    /// Bone motion.
    Bm,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::J, Modality::Jm, Modality::B, Modality::Bm];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::J => "j",
            Modality::Jm => "jm",
            Modality::B => "b",
            Modality::Bm => "bm",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "j" => Ok(Modality::J),
            "jm" => Ok(Modality::Jm),
            "b" => Ok(Modality::B),
            "bm" => Ok(Modality::Bm),
            other => Err(Error::Parameter(format!("unknown modality {other:?}"))),
        }
    }
}

fn bones(seq: &SkeletonSequence, graph: &SkeletonGraph) -> Vec<f64> {
    let mut out = vec![0.0; seq.features.len()];
    for j in 0..seq.joints {
        let p = graph.parent(j);
        if p == j {
            continue;
        }
        for t in 0..seq.frames {
            for c in 0..seq.dims {
                out[seq.index(j, t, c)] = seq.at(j, t, c) - seq.at(p, t, c);
            }
        }
    }
    out
}

fn motion(seq: &SkeletonSequence, features: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; features.len()];
    for j in 0..seq.joints {
        for t in 0..seq.frames.saturating_sub(1) {
            for c in 0..seq.dims {
                out[seq.index(j, t, c)] = features[seq.index(j, t + 1, c)] - features[seq.index(j, t, c)];
            }
        }
    }
    out
}

/// Re-expresses a sequence in another input modality. Shape is unchanged.
pub fn to_modality(seq: &SkeletonSequence, graph: &SkeletonGraph, modality: Modality) -> SkeletonSequence {
    let features = match modality {
        Modality::J => seq.features.clone(),
        Modality::Jm => motion(seq, &seq.features),
        Modality::B => bones(seq, graph),
        Modality::Bm => motion(seq, &bones(seq, graph)),
    };
    seq.with_features(seq.frames, features)
}

/// Crops or loop-pads to `window` frames and moves the root joint of the
/// first frame to the origin.
///
/// Longer clips are cropped at a random start when `augment` is set and at
/// the centre otherwise.
pub fn preprocess<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    graph: &SkeletonGraph,
    window: usize,
    augment: bool,
    rng: &mut R,
) -> Result<SkeletonSequence> {
    if window == 0 {
        return Err(Error::Parameter("window length must be at least 1".into()));
    }
    if graph.num_joints() != seq.joints {
        return Err(Error::dim("preprocess", &[graph.num_joints()], &[seq.joints]));
    }
    let start = if seq.frames > window {
        let slack = seq.frames - window;
        if augment {
            rng.random_range(0..=slack)
        } else {
            slack / 2
        }
    } else {
        0
    };
    let d = seq.dims;
    let mut features = vec![0.0; seq.joints * window * d];
    for j in 0..seq.joints {
        for t in 0..window {
            let src = if seq.frames > window { start + t } else { t % seq.frames };
            let from = seq.index(j, src, 0);
            let to = (j * window + t) * d;
            features[to..to + d].copy_from_slice(&seq.features[from..from + d]);
        }
    }
    let root = graph.root();
    let origin: Vec<f64> = features[root * window * d..root * window * d + d].to_vec();
    for frame in features.chunks_exact_mut(d) {
        for (v, o) in frame.iter_mut().zip(&origin) {
            *v -= o;
        }
    }
    Ok(seq.with_features(window, features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn ramp(joints: usize, frames: usize) -> SkeletonSequence {
        let f = (0..joints * frames * 3).map(|v| v as f64).collect();
        SkeletonSequence::new(joints, frames, 3, f, 0).unwrap()
    }

    #[test]
    fn constant_sequence_has_no_motion() {
        let g = SkeletonGraph::from_parents(&[0, 0]).unwrap();
        let mut s = ramp(2, 5);
        for j in 0..2 {
            for t in 0..5 {
                for c in 0..3 {
                    let i = s.index(j, t, c);
                    s.features[i] = (j * 3 + c) as f64;
                }
            }
        }
        assert!(to_modality(&s, &g, Modality::Jm).features.iter().all(|&v| v == 0.0));
        assert_eq!(to_modality(&s, &g, Modality::J), s);
    }

    #[test]
    fn bone_of_two_joint_chain() {
        let g = SkeletonGraph::from_parents(&[0, 0]).unwrap();
        let mut f = vec![0.0; 2 * 3];
        f[0..3].copy_from_slice(&[0.5, -1.0, 2.0]);
        f[3..6].copy_from_slice(&[1.5, -1.0, 2.0]);
        let s = SkeletonSequence::new(2, 1, 3, f, 0).unwrap();
        let b = to_modality(&s, &g, Modality::B);
        assert_eq!(&b.features[0..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&b.features[3..6], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn motion_pads_final_frame() {
        let g = SkeletonGraph::from_parents(&[0]).unwrap();
        let s = SkeletonSequence::new(1, 3, 1, vec![1.0, 4.0, 9.0], 0).unwrap();
        assert_eq!(to_modality(&s, &g, Modality::Jm).features, vec![3.0, 5.0, 0.0]);
        assert_eq!(to_modality(&s, &g, Modality::Bm).features, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn crop_and_pad() {
        let g = SkeletonGraph::from_parents(&[0, 0]).unwrap();
        let mut rng = rng_from(1);
        let s = ramp(2, 64);
        assert_eq!(preprocess(&s, &g, 64, false, &mut rng).unwrap().frames, 64);

        // centred crop of 100 frames to 64 starts at frame 18
        let s = SkeletonSequence::new(1, 100, 1, (0..100).map(|v| v as f64).collect(), 0).unwrap();
        let g1 = SkeletonGraph::from_parents(&[0]).unwrap();
        let p = preprocess(&s, &g1, 64, false, &mut rng).unwrap();
        let expected: Vec<f64> = (18..82).map(|v| (v - 18) as f64).collect();
        assert_eq!(p.features, expected);

        // loop padding from 10 to 64 frames
        let s = SkeletonSequence::new(1, 10, 1, (0..10).map(|v| v as f64).collect(), 0).unwrap();
        let p = preprocess(&s, &g1, 64, false, &mut rng).unwrap();
        for t in 0..64 {
            assert_eq!(p.features[t], (t % 10) as f64);
        }
    }

    #[test]
    fn random_crop_stays_in_range() {
        let g = SkeletonGraph::from_parents(&[0]).unwrap();
        let s = SkeletonSequence::new(1, 30, 1, (0..30).map(|v| v as f64).collect(), 0).unwrap();
        let mut rng = rng_from(3);
        for _ in 0..50 {
            let p = preprocess(&s, &g, 8, true, &mut rng).unwrap();
            assert_eq!(p.frames, 8);
            // root-centred, consecutive frames
            for t in 0..8 {
                assert_eq!(p.features[t], t as f64);
            }
        }
    }

    #[test]
    fn modality_names_round_trip() {
        for m in Modality::ALL {
            assert_eq!(m.as_str().parse::<Modality>().unwrap(), m);
        }
        assert!("x".parse::<Modality>().is_err());
    }
}
