use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::network::{decide, Network, NetworkState};
use crate::nn::tensor::Tensor;
use crate::seed;

const PREDICT_BATCH: usize = 32;

/// One training example: an image and its label class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Heavy-ball momentum; 0 is plain mini-batch gradient descent.
    pub momentum: f64,
    pub seed: u64,
    /// Loss weight per label class.
    pub class_weights: Vec<f64>,
}

impl TrainConfig {
    /// Plain gradient descent, learning rate 1e-3, batches of 32, the majority
    /// (last) class weighted 0.1 and every other class 1.0.
    pub fn new(label_classes: usize) -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 32,
            momentum: 0.0,
            seed: 0,
            class_weights: default_class_weights(label_classes),
        }
    }
}

/// 0.1 for the no-anomaly class, 1.0 for the rest. With five classes the
/// no-anomaly class is last; in the binary task it is class 0.
pub fn default_class_weights(label_classes: usize) -> Vec<f64> {
    let mut w = vec![1.0; label_classes];
    if label_classes == 2 {
        w[0] = 0.1;
    } else if let Some(last) = w.last_mut() {
        *last = 0.1;
    }
    w
}

impl Network {
    /// Mini-batch gradient descent on the weighted loss. The sample order is
    /// reshuffled every epoch from `(seed, epoch)`. Returns the mean loss of
    /// each epoch, measured on the batches as they were visited.
    pub fn train(&mut self, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::Training {
                epoch: 0,
                message: "empty dataset".into(),
            });
        }
        if cfg.batch_size == 0 {
            return Err(Error::param("nn", "batch_size must be positive"));
        }
        if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
            return Err(Error::param("nn", "learning_rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&cfg.momentum) {
            return Err(Error::param("nn", "momentum must be in [0, 1)"));
        }
        for s in data {
            self.check_sample(s.class, &cfg.class_weights)?;
        }

        let mut velocity = NetworkState::zeros(&self.config)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let mut rng = seed::rng_indexed(cfg.seed, "nn-shuffle", epoch as u64);
            order.sort_unstable();
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<(&Tensor, usize)> = chunk.iter().map(|&i| (&data[i].image, data[i].class)).collect();
                let (loss, grads) = self.batch_gradients(&batch, &cfg.class_weights)?;
                if !loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        message: format!("loss became {loss}"),
                    });
                }
                epoch_loss += loss * chunk.len() as f64;
                if cfg.momentum > 0.0 {
                    for v in velocity.iter_mut() {
                        *v *= cfg.momentum;
                    }
                    velocity.add_scaled(&grads, 1.0);
                    self.state.add_scaled(&velocity, -cfg.learning_rate);
                } else if cfg.learning_rate > 0.0 {
                    self.state.add_scaled(&grads, -cfg.learning_rate);
                }
            }
            let mean = epoch_loss / data.len() as f64;
            if self.state.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    message: "parameters diverged".into(),
                });
            }
            log::debug!("epoch {epoch}: loss {mean:.6}");
            history.push(mean);
        }
        Ok(history)
    }

    /// Predicted label class for every sample.
    pub fn predict_all<'a>(&self, images: impl IntoIterator<Item = &'a Tensor>) -> Result<Vec<usize>> {
        let prep = self.prepare();
        let images: Vec<&Tensor> = images.into_iter().collect();
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(PREDICT_BATCH) {
            out.extend(self.forward_batch(&prep, chunk)?.iter().map(|s| decide(s)));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::config::{Activation, LayerSpec, NetworkConfig};

    fn small_config(classes: usize) -> NetworkConfig {
        NetworkConfig {
            input_size: 8,
            input_channels: 1,
            layers: vec![
                LayerSpec::conv(2, 3),
                LayerSpec::maxpool(2),
                LayerSpec::Flatten,
                LayerSpec::dense(4, Activation::Relu),
                LayerSpec::dense(classes, Activation::Sigmoid),
            ],
            num_classes: classes,
        }
    }

    /// Class 1 images are bright, class 0 images dark, with seeded texture.
    fn toy_data(n: usize) -> Vec<Sample> {
        use rand::Rng;
        let mut rng = seed::rng_for(5, "toy");
        (0..n)
            .map(|i| {
                let class = i % 2;
                let level = if class == 1 { 0.8 } else { -0.8 };
                let data = (0..64).map(|_| level + rng.random_range(-0.3..0.3)).collect();
                Sample {
                    image: Tensor::from_image(8, data).unwrap(),
                    class,
                }
            })
            .collect()
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let data = toy_data(40);
        let mut net = Network::initialized(small_config(2), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 0.1,
            batch_size: 8,
            class_weights: vec![1.0, 1.0],
            ..TrainConfig::new(2)
        };
        let history = net.train(&data, &cfg).unwrap();
        assert!(history.last().unwrap() < &history[0]);
        let preds = net.predict_all(data.iter().map(|s| &s.image)).unwrap();
        let correct = preds.iter().zip(&data).filter(|(p, s)| **p == s.class).count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn zero_learning_rate_keeps_state() {
        let data = toy_data(10);
        let mut net = Network::initialized(small_config(1), 2).unwrap();
        let before = net.state.clone();
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            ..TrainConfig::new(2)
        };
        net.train(&data, &cfg).unwrap();
        assert_eq!(net.state, before);
    }

    #[test]
    fn same_seed_same_history() {
        let data = toy_data(24);
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.05,
            batch_size: 5,
            seed: 77,
            ..TrainConfig::new(2)
        };
        let mut a = Network::initialized(small_config(1), 9).unwrap();
        let mut b = Network::initialized(small_config(1), 9).unwrap();
        let ha = a.train(&data, &cfg).unwrap();
        let hb = b.train(&data, &cfg).unwrap();
        assert_eq!(ha.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), hb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn empty_dataset_and_divergence_are_errors() {
        let mut net = Network::initialized(small_config(1), 2).unwrap();
        assert!(matches!(net.train(&[], &TrainConfig::new(2)), Err(Error::Training { epoch: 0, .. })));

        let mut data = toy_data(4);
        data[0].image.data[0] = f64::NAN;
        let err = net.train(&data, &TrainConfig::new(2)).unwrap_err();
        assert!(matches!(err, Error::Training { epoch: 0, .. }), "{err:?}");
    }

    #[test]
    fn default_weights() {
        assert_eq!(default_class_weights(5), vec![1.0, 1.0, 1.0, 1.0, 0.1]);
        assert_eq!(default_class_weights(2), vec![0.1, 1.0]);
    }
}
