use crate::error::{Error, Result};
use crate::numeric::StreamKey;
use crate::pipeline::io::PoseSequence;
use rand_distr::{Distribution, Normal};

/// Perturbs every 2D coordinate of every sequence with i.i.d. Gaussian
/// noise of standard deviation `sigma` pixels. Noise is applied to the raw
/// detections, before root-centering and normalization. Each sequence draws
/// from its own `(seed, index)` stream, so results are independent of
/// processing order.
pub fn add_gaussian_noise(
    sequences: &[PoseSequence],
    sigma: f64,
    seed: u64,
) -> Result<Vec<PoseSequence>> {
    if sigma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(sequences.to_vec());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let key = StreamKey::from_seed(seed).child("noise2d");
    let mut out = Vec::with_capacity(sequences.len());
    for (i, seq) in sequences.iter().enumerate() {
        let mut rng = key.child_index("seq", i as u64).rng();
        let mut noisy = seq.clone();
        for frame in &mut noisy.frames_2d {
            for v in frame.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        out.push(noisy);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_sequences(n: usize, frames: usize, dim: usize) -> Vec<PoseSequence> {
        (0..n)
            .map(|i| PoseSequence {
                subject: format!("S{i}"),
                action: "a".into(),
                camera: "c".into(),
                frames_2d: (0..frames).map(|f| vec![f as f64; dim]).collect(),
                frames_3d: None,
                extrinsics: None,
            })
            .collect()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let seqs = sample_sequences(3, 4, 34);
        let out = add_gaussian_noise(&seqs, 0.0, 7).unwrap();
        assert_eq!(out, seqs);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let seqs = sample_sequences(2, 10, 34);
        let a = add_gaussian_noise(&seqs, 5.0, 123).unwrap();
        let b = add_gaussian_noise(&seqs, 5.0, 123).unwrap();
        assert_eq!(a, b);
        let c = add_gaussian_noise(&seqs, 5.0, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn negative_sigma_rejected() {
        let seqs = sample_sequences(1, 2, 34);
        assert!(add_gaussian_noise(&seqs, -1.0, 0).is_err());
    }

    #[test]
    fn sample_std_matches_sigma() {
        // 100_000 coordinates of pure noise around zero.
        let seqs = vec![PoseSequence {
            subject: "S".into(),
            action: "a".into(),
            camera: "c".into(),
            frames_2d: (0..2000).map(|_| vec![0.0; 50]).collect(),
            frames_3d: None,
            extrinsics: None,
        }];
        let noisy = add_gaussian_noise(&seqs, 10.0, 42).unwrap();
        let values: Vec<f64> = noisy[0].frames_2d.iter().flatten().copied().collect();
        assert_eq!(values.len(), 100_000);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64;
        let std = var.sqrt();
        assert!((9.9..=10.1).contains(&std), "std = {std}");
    }
}
