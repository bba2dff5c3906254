use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Feature pyramid used by the perceptual loss.
pub trait FeatureExtractor: Send + Sync {
    /// Activations of each configured layer.
    fn extract(&self, img: &Grid) -> Result<Vec<Vec<f64>>>;

    /// Pulls per-layer activation gradients back to the input image.
    fn backward(&self, img: &Grid, layer_grads: &[Vec<f64>]) -> Result<Grid>;
}

/// Pixels as the single feature layer.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn extract(&self, img: &Grid) -> Result<Vec<Vec<f64>>> {
        Ok(vec![img.as_slice().to_vec()])
    }

    fn backward(&self, img: &Grid, layer_grads: &[Vec<f64>]) -> Result<Grid> {
        match layer_grads {
            [g] => Grid::from_vec(img.height(), img.width(), g.clone()),
            _ => Err(Error::Dimension("identity extractor has one layer".into())),
        }
    }
}

/// Two fixed random ReLU layers (64 then 32 units) over the flattened image.
#[derive(Debug, Clone)]
pub struct RandomFeatureStack {
    height: usize,
    width: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

const L1_UNITS: usize = 64;
const L2_UNITS: usize = 32;

impl RandomFeatureStack {
    pub fn new(height: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = height * width;
        let s1 = Normal::new(0.0, (2.0 / n as f64).sqrt()).unwrap();
        let s2 = Normal::new(0.0, (2.0 / L1_UNITS as f64).sqrt()).unwrap();
        let sb = Normal::new(0.1, 0.05).unwrap();
        Self {
            height,
            width,
            w1: (0..L1_UNITS * n).map(|_| s1.sample(&mut rng)).collect(),
            b1: (0..L1_UNITS).map(|_| sb.sample(&mut rng)).collect(),
            w2: (0..L2_UNITS * L1_UNITS).map(|_| s2.sample(&mut rng)).collect(),
            b2: (0..L2_UNITS).map(|_| sb.sample(&mut rng)).collect(),
        }
    }

    fn check(&self, img: &Grid) -> Result<()> {
        if img.dims() != (self.height, self.width) {
            return Err(Error::Dimension(format!(
                "feature stack built for {}x{}, got {:?}",
                self.height,
                self.width,
                img.dims()
            )));
        }
        Ok(())
    }

    fn pre_activations(&self, img: &Grid) -> (Vec<f64>, Vec<f64>) {
        let x = img.as_slice();
        let z1: Vec<f64> = (0..L1_UNITS)
            .map(|o| affine_row(&self.w1, o, x) + self.b1[o])
            .collect();
        let h1: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
        let z2 = (0..L2_UNITS)
            .map(|o| affine_row(&self.w2, o, &h1) + self.b2[o])
            .collect();
        (z1, z2)
    }
}

fn affine_row(w: &[f64], row: usize, x: &[f64]) -> f64 {
    w[row * x.len()..(row + 1) * x.len()]
        .iter()
        .zip(x)
        .map(|(a, b)| a * b)
        .sum()
}

impl FeatureExtractor for RandomFeatureStack {
    fn extract(&self, img: &Grid) -> Result<Vec<Vec<f64>>> {
        self.check(img)?;
        let (z1, z2) = self.pre_activations(img);
        Ok(vec![
            z1.iter().map(|z| z.max(0.0)).collect(),
            z2.iter().map(|z| z.max(0.0)).collect(),
        ])
    }

    fn backward(&self, img: &Grid, layer_grads: &[Vec<f64>]) -> Result<Grid> {
        self.check(img)?;
        if layer_grads.len() != 2
            || layer_grads[0].len() != L1_UNITS
            || layer_grads[1].len() != L2_UNITS
        {
            return Err(Error::Dimension("feature stack expects 64 + 32 gradients".into()));
        }
        let (z1, z2) = self.pre_activations(img);
        let mut gh1 = layer_grads[0].clone();
        for o in 0..L2_UNITS {
            if z2[o] > 0.0 {
                let g = layer_grads[1][o];
                for (acc, w) in gh1.iter_mut().zip(&self.w2[o * L1_UNITS..(o + 1) * L1_UNITS]) {
                    *acc += g * w;
                }
            }
        }
        let n = self.height * self.width;
        let mut gx = vec![0.0; n];
        for o in 0..L1_UNITS {
            if z1[o] > 0.0 {
                let g = gh1[o];
                for (acc, w) in gx.iter_mut().zip(&self.w1[o * n..(o + 1) * n]) {
                    *acc += g * w;
                }
            }
        }
        Grid::from_vec(self.height, self.width, gx)
    }
}
