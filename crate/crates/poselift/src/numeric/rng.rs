use crate::error::{Error, Result};
use crate::numeric::Matrix;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Labeled handle into the run's random stream tree.
///
/// Every stochastic operation draws from a stream derived from the run seed
/// by a path of labels (and optional indices), so results never depend on
/// scheduling or on how much randomness unrelated code consumed. Streams are
/// backed by the counter-based ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    root: u64,
    path: u64,
}

impl StreamKey {
    pub fn from_seed(seed: u64) -> Self {
        StreamKey {
            root: seed,
            path: 0xcbf29ce484222325, // FNV offset basis
        }
    }

    /// Derives a child stream by label.
    pub fn child(&self, label: &str) -> StreamKey {
        let mut path = self.path;
        for b in label.as_bytes() {
            path = (path ^ u64::from(*b)).wrapping_mul(0x100000001b3);
        }
        StreamKey {
            root: self.root,
            path,
        }
    }

    /// Derives a child stream by label and index (e.g. per epoch or step).
    pub fn child_index(&self, label: &str, index: u64) -> StreamKey {
        let base = self.child(label);
        let mut path = base.path;
        for b in index.to_le_bytes() {
            path = (path ^ u64::from(b)).wrapping_mul(0x100000001b3);
        }
        StreamKey {
            root: self.root,
            path,
        }
    }

    /// Instantiates the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut state = self.root ^ 0x9e3779b97f4a7c15;
        state = splitmix64(&mut state) ^ self.path;
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Samples a `fan_in x fan_out` matrix i.i.d. uniform on `[-a, a]` with
/// `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "xavier_uniform needs positive fans, got {fan_in}/{fan_out}"
        )));
    }
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut out = Matrix::zeros(fan_in, fan_out);
    for v in out.data_mut() {
        *v = dist.sample(rng);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_stream() {
        let a = StreamKey::from_seed(42).child("weights");
        let b = StreamKey::from_seed(42).child("weights");
        let xs: Vec<u64> = a.rng().sample_iter(rand::distributions::Standard).take(8).collect();
        let ys: Vec<u64> = b.rng().sample_iter(rand::distributions::Standard).take(8).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn sibling_streams_differ() {
        let root = StreamKey::from_seed(42);
        let a: u64 = root.child("a").rng().gen();
        let b: u64 = root.child("b").rng().gen();
        assert_ne!(a, b);
        let i0: u64 = root.child_index("step", 0).rng().gen();
        let i1: u64 = root.child_index("step", 1).rng().gen();
        assert_ne!(i0, i1);
    }

    #[test]
    fn xavier_bound_holds() {
        let mut rng = StreamKey::from_seed(7).child("init").rng();
        let m = xavier_uniform(30, 50, &mut rng).unwrap();
        let bound = (6.0f64 / 80.0).sqrt();
        for &v in m.data() {
            assert!(v.abs() <= bound);
        }
    }

    #[test]
    fn xavier_symmetric_fans_bound_is_one() {
        // fan_in = fan_out = 3 gives a = sqrt(6/6) = 1 exactly.
        let bound = (6.0f64 / 6.0).sqrt();
        assert_eq!(bound, 1.0);
        let mut rng = StreamKey::from_seed(1).rng();
        let m = xavier_uniform(3, 3, &mut rng).unwrap();
        for &v in m.data() {
            assert!(v.abs() <= 1.0);
        }
    }

    #[test]
    fn xavier_mean_near_zero() {
        let mut rng = StreamKey::from_seed(11).child("stat").rng();
        let m = xavier_uniform(100, 100, &mut rng).unwrap();
        // 1e4 samples from U[-a,a]; repeat 10x for 1e5 total.
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..10 {
            let m = xavier_uniform(100, 100, &mut rng).unwrap();
            sum += m.data().iter().sum::<f64>();
            count += m.data().len();
        }
        sum += m.data().iter().sum::<f64>();
        count += m.data().len();
        let a = (6.0f64 / 200.0).sqrt();
        let sd_mean = a / (3.0f64).sqrt() / (count as f64).sqrt();
        assert!((sum / count as f64).abs() < 3.0 * sd_mean);
    }

    #[test]
    fn zero_fan_rejected() {
        let mut rng = StreamKey::from_seed(0).rng();
        assert!(xavier_uniform(0, 4, &mut rng).is_err());
    }
}
