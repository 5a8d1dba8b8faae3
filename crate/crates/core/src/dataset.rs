//! In-memory labelled image sets and the synthetic blob generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::RealTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    images: RealTensor<T>,
    labels: Vec<usize>,
    classes: usize,
}

impl<T: Scalar> Dataset<T> {
    /// `images` is `(N, C, H, W)`; every label must be below `classes`.
    pub fn new(images: RealTensor<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let (n, _, _, _) = images.dims4()?;
        if n != labels.len() {
            return Err(Error::Data(format!("{n} images but {} labels", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self { images, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn images(&self) -> &RealTensor<T> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `(C, H, W)`.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(RealTensor<T>, Vec<usize>)> {
        let (c, h, w) = self.image_shape();
        let per = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Data(format!("index {i} out of range for {} examples", self.len())));
            }
            data.extend_from_slice(&self.images.data()[i * per..][..per]);
            labels.push(self.labels[i]);
        }
        Ok((RealTensor::from_vec(&[indices.len(), c, h, w], data)?, labels))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let (images, labels) = self.batch(indices)?;
        Self::new(images, labels, self.classes)
    }

    /// Per-channel mean and standard deviation over all pixels.
    pub fn channel_stats(&self) -> (Vec<T>, Vec<T>) {
        let (c, h, w) = self.image_shape();
        let plane = h * w;
        let count = T::from_usize_lossy(self.len() * plane);
        let mut mean = vec![T::zero(); c];
        let mut sq = vec![T::zero(); c];
        for (idx, p) in self.images.data().chunks(plane).enumerate() {
            let ch = idx % c;
            for &v in p {
                mean[ch] += v;
                sq[ch] += v * v;
            }
        }
        let std = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, &s)| {
                *m /= count;
                (s / count - *m * *m).max(T::zero()).sqrt()
            })
            .collect();
        (mean, std)
    }

    /// Maps every channel to `(x - mean) / std`; zero deviations map to 1.
    pub fn standardize(&mut self, mean: &[T], std: &[T]) -> Result<()> {
        let (c, h, w) = self.image_shape();
        if mean.len() != c || std.len() != c {
            return Err(Error::Shape(format!("standardization needs {c} channel statistics")));
        }
        let plane = h * w;
        for (idx, p) in self.images.data_mut().chunks_mut(plane).enumerate() {
            let ch = idx % c;
            let s = if std[ch] > T::zero() { std[ch] } else { T::one() };
            p.iter_mut().for_each(|v| *v = (*v - mean[ch]) / s);
        }
        Ok(())
    }

    /// Test fold `fold` of `k` contiguous folds and its complement.
    pub fn fold(&self, k: usize, fold: usize) -> Result<(Self, Self)> {
        if k < 2 || fold >= k || k > self.len() {
            return Err(Error::Domain(format!("invalid fold {fold} of {k} for {} examples", self.len())));
        }
        let n = self.len();
        let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
        let train: Vec<usize> = (0..lo).chain(hi..n).collect();
        let test: Vec<usize> = (lo..hi).collect();
        Ok((self.subset(&train)?, self.subset(&test)?))
    }
}

/// Parameters of the synthetic blob dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlobSpec {
    pub samples: usize,
    pub classes: usize,
    pub channels: usize,
    pub size: usize,
    pub noise: f64,
    pub seed: u64,
}

impl BlobSpec {
    /// 200 three-channel 8×8 images in two classes.
    pub fn bundled() -> Self {
        Self {
            samples: 200,
            classes: 2,
            channels: 3,
            size: 8,
            noise: 0.3,
            seed: 7,
        }
    }
}

/// Images of one Gaussian bump each. Every class has its own bump center
/// (spread on a circle) and color; samples jitter the center and add
/// pixel noise. Labels cycle through the classes.
pub fn synthetic_blobs<T: Scalar>(spec: &BlobSpec) -> Result<Dataset<T>> {
    if spec.classes == 0 || spec.channels == 0 || spec.size == 0 {
        return Err(Error::Domain("blob dataset dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.size as f64;
    let radius = 0.25 * s;
    let width = s / 6.0;
    let protos: Vec<(f64, f64, Vec<f64>)> = (0..spec.classes)
        .map(|c| {
            let a = std::f64::consts::TAU * c as f64 / spec.classes as f64;
            let color = (0..spec.channels).map(|_| rng.random_range(0.5..1.0)).collect();
            (0.5 * (s - 1.0) + radius * a.cos(), 0.5 * (s - 1.0) + radius * a.sin(), color)
        })
        .collect();
    let mut data = Vec::with_capacity(spec.samples * spec.channels * spec.size * spec.size);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let label = i % spec.classes;
        let (cy, cx, color) = &protos[label];
        let jy: f64 = StandardNormal.sample(&mut rng);
        let jx: f64 = StandardNormal.sample(&mut rng);
        let (cy, cx) = (cy + 0.5 * jy, cx + 0.5 * jx);
        for amp in color {
            for y in 0..spec.size {
                for x in 0..spec.size {
                    let r2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(T::lit(amp * (-r2 / (2.0 * width * width)).exp() + spec.noise * z));
                }
            }
        }
        labels.push(label);
    }
    let images = RealTensor::from_vec(&[spec.samples, spec.channels, spec.size, spec.size], data)?;
    Dataset::new(images, labels, spec.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let spec = BlobSpec::bundled();
        let a = synthetic_blobs::<f64>(&spec).unwrap();
        let b = synthetic_blobs::<f64>(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        assert_eq!(a.image_shape(), (3, 8, 8));
        assert_eq!(a.labels().iter().filter(|&&l| l == 1).count(), 100);
        let c = synthetic_blobs::<f64>(&BlobSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn standardization() {
        let mut d = synthetic_blobs::<f64>(&BlobSpec::bundled()).unwrap();
        let (m, s) = d.channel_stats();
        d.standardize(&m, &s).unwrap();
        let (m2, s2) = d.channel_stats();
        assert!(m2.iter().all(|v| v.abs() < 1e-12));
        assert!(s2.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn invalid_labels_and_batches() {
        let imgs = RealTensor::<f64>::zeros(&[2, 1, 2, 2]);
        assert!(matches!(Dataset::new(imgs.clone(), vec![0, 5], 3), Err(Error::Data(_))));
        assert!(Dataset::new(imgs.clone(), vec![0], 3).is_err());
        let d = Dataset::new(imgs, vec![0, 2], 3).unwrap();
        assert!(d.batch(&[2]).is_err());
        let (x, y) = d.batch(&[1, 0]).unwrap();
        assert_eq!(x.shape(), [2, 1, 2, 2]);
        assert_eq!(y, vec![2, 0]);
    }

    #[test]
    fn folds_partition() {
        let d = synthetic_blobs::<f64>(&BlobSpec { samples: 23, ..BlobSpec::bundled() }).unwrap();
        let mut total = 0;
        for f in 0..5 {
            let (train, test) = d.fold(5, f).unwrap();
            assert_eq!(train.len() + test.len(), 23);
            total += test.len();
        }
        assert_eq!(total, 23);
        assert!(d.fold(1, 0).is_err());
    }
}
