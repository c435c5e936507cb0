//! Training: click-by-click (iterative) and all-at-once (bundled) schedules,
//! the RAdam optimizer and a step learning-rate schedule.
//!
//! In iterative mode each image is visited with an empty previous mask, a
//! simulated click is placed on the largest error, the loss is computed over
//! every click placed so far, and the weights are updated before the next
//! click is simulated from the new prediction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clicks::{bundled_clicks, encode_clicks, place_click, BundledParams, Click};
use crate::guided::{guided_filter_backward, guided_filter_raw};
use crate::imgcore::{apply_augmentation, binarize, draw_augmentation, AugmentParams, BinaryMask, Image, SoftMask};
use crate::net::layers::ParamKind;
use crate::net::{soft_iou_click_loss, MicroSegNet, NetInputs, Real, Tensor};
use crate::{Error, Result};

/// RAdam hyperparameters and the per-kind weight-decay map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Updates use the rectified adaptive step once the variance length
    /// estimate exceeds this; before that a momentum step is taken.
    pub rectify_threshold: f64,
    pub conv_weight_decay: f64,
    pub norm_weight_decay: f64,
    pub bias_weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rectify_threshold: 4.0,
            conv_weight_decay: 0.005,
            norm_weight_decay: 1e-5,
            bias_weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn decay_for(&self, kind: ParamKind) -> f64 {
        match kind {
            ParamKind::ConvWeight => self.conv_weight_decay,
            ParamKind::NormScale | ParamKind::NormShift => self.norm_weight_decay,
            ParamKind::ConvBias => self.bias_weight_decay,
        }
    }
}

/// One parameter buffer handed to the optimizer.
pub struct ParamSlot<'a, T> {
    pub name: &'a str,
    pub weight_decay: f64,
    pub value: &'a mut [T],
    pub grad: &'a [T],
}

/// Moment buffers and step counter. Moments are kept in 64-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    /// Whether the most recent step used the rectified adaptive update.
    pub last_rectified: Option<bool>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
            last_rectified: None,
        }
    }

    pub fn first_moment(&self, slot: usize) -> Option<&[f64]> {
        self.first.get(slot).map(Vec::as_slice)
    }

    pub fn second_moment(&self, slot: usize) -> Option<&[f64]> {
        self.second.get(slot).map(Vec::as_slice)
    }

    /// Length of the approximated simple moving average at step `t`.
    pub fn rho(&self, t: u64) -> f64 {
        let b2 = self.config.beta2;
        let rho_inf = 2.0 / (1.0 - b2) - 1.0;
        let b2t = b2.powi(t as i32);
        rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
    }
}

/// One RAdam update with decoupled weight decay.
///
/// Every gradient is checked first; a non-finite value aborts the step
/// without touching any parameter.
pub fn radam_step<T: Real>(slots: &mut [ParamSlot<'_, T>], state: &mut OptimizerState, lr: f64) -> Result<()> {
    for s in slots.iter() {
        if s.value.len() != s.grad.len() {
            return Err(Error::Shape(format!("{}: gradient length differs from parameter", s.name)));
        }
        if let Some(i) = s.grad.iter().position(|g| !g.f64().is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {} at index {i} (step {})",
                s.name,
                state.step + 1
            )));
        }
    }
    if state.first.is_empty() {
        state.first = slots.iter().map(|s| vec![0.0; s.value.len()]).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != slots.len() || slots.iter().zip(&state.first).any(|(s, m)| s.value.len() != m.len()) {
        return Err(Error::Shape("optimizer state does not match the parameter list".into()));
    }

    state.step += 1;
    let t = state.step;
    let OptimizerConfig { beta1, beta2, eps, .. } = state.config;
    let bias1 = 1.0 - beta1.powi(t as i32);
    let bias2 = 1.0 - beta2.powi(t as i32);
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let rho = state.rho(t);
    let rectified = rho > state.config.rectify_threshold;
    let r = if rectified {
        ((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt()
    } else {
        0.0
    };
    state.last_rectified = Some(rectified);

    for ((s, m), v) in slots.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        let decay = 1.0 - lr * s.weight_decay;
        for (((p, &g), m), v) in s.value.iter_mut().zip(s.grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g.f64();
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let mut x = p.f64() * decay;
            if rectified {
                let v_hat = (*v / bias2).sqrt();
                x -= lr * r * m_hat / (v_hat + eps);
            } else {
                x -= lr * m_hat;
            }
            *p = T::of(x);
        }
    }
    Ok(())
}

/// RAdam step over all network parameters, in declaration order.
pub fn radam_step_net<T: Real>(net: &mut MicroSegNet<T>, state: &mut OptimizerState, lr: f64) -> Result<()> {
    let cfg = state.config.clone();
    let mut params = net.params_mut();
    let mut slots: Vec<ParamSlot<'_, T>> = params
        .iter_mut()
        .map(|p| {
            let decay = cfg.decay_for(p.kind);
            let name = p.name.as_str();
            let (value, grad) = p.tensor.data_and_grad_mut();
            ParamSlot {
                name,
                weight_decay: decay,
                value,
                grad: grad.expect("params are tracked"),
            }
        })
        .collect();
    radam_step(&mut slots, state, lr)
}

/// Piecewise-constant learning rate, multiplied by `factor` at each milestone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    /// Epoch indices (0-based) from which the next reduction applies.
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base * self.factor.powi(drops as i32)
    }
}

/// Reference milestones for a 25-epoch run.
pub const REFERENCE_MILESTONES: [usize; 3] = [14, 17, 20];
pub const REFERENCE_EPOCHS: usize = 25;

/// Reference milestones rescaled to a run of `epochs` epochs.
pub fn scaled_milestones(epochs: usize) -> Vec<usize> {
    REFERENCE_MILESTONES
        .iter()
        .map(|&m| ((m * epochs) as f64 / REFERENCE_EPOCHS as f64).round() as usize)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Iterative,
    Bundled,
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::Iterative => "iterative",
            TrainMode::Bundled => "bundled",
        })
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iterative" => Ok(TrainMode::Iterative),
            "bundled" => Ok(TrainMode::Bundled),
            other => Err(Error::InvalidArgument(format!("unknown training mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub clicks_per_image: usize,
    pub epochs: usize,
    pub lr: f64,
    pub milestones: Vec<usize>,
    pub lr_factor: f64,
    pub seed: u64,
    pub mode: TrainMode,
    /// Random crop, flip, gamma and brightness; `None` trains on the samples as given.
    pub augment: Option<AugmentParams>,
    pub bundled: BundledParams,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            clicks_per_image: 4,
            epochs: REFERENCE_EPOCHS,
            lr: 1e-3,
            milestones: REFERENCE_MILESTONES.to_vec(),
            lr_factor: 0.1,
            seed: 0,
            mode: TrainMode::Iterative,
            augment: Some(AugmentParams::default()),
            bundled: BundledParams::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Same settings over `epochs` epochs with proportionally placed milestones.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self.milestones = scaled_milestones(epochs);
        self
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base: self.lr,
            milestones: self.milestones.clone(),
            factor: self.lr_factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clicks_per_image == 0 {
            return Err(Error::InvalidArgument("clicks_per_image must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    /// The prediction used for the loss, before the weights were updated.
    pub prediction: SoftMask,
}

fn check_sample(image: &Image, gt: &BinaryMask) -> Result<()> {
    if image.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            actual: gt.dims(),
        });
    }
    if gt.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// Forward, loss over `clicks`, backward and one optimizer step.
pub fn train_step<T: Real>(
    net: &mut MicroSegNet<T>,
    opt: &mut OptimizerState,
    lr: f64,
    image: &Image,
    gt: &BinaryMask,
    clicks: &[Click],
    prev: &SoftMask,
) -> Result<StepOutcome> {
    let (w, h) = image.dims();
    let enc = encode_clicks(clicks, w, h, net.config().sigmas)?;
    let inputs = NetInputs::<T>::new(image, &enc, prev)?;
    let (out, tape) = net.forward(&inputs)?;

    let refine = match net.config().guided {
        Some(params) if net.config().guided_in_training => Some(params),
        _ => None,
    };
    let raw: Vec<f64> = out.data().iter().map(|v| v.f64()).collect();
    let (pred, guide) = match refine {
        Some(params) => {
            let guide: Vec<f64> = image.luminance().data().iter().map(|&v| f64::from(v)).collect();
            (guided_filter_raw(&guide, &raw, w, h, params)?, Some((guide, params)))
        }
        None => (raw.clone(), None),
    };

    let loss = soft_iou_click_loss(&pred, gt, clicks)?;
    if !loss.total.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    let grad = match guide {
        Some((g, params)) => guided_filter_backward(&g, &raw, &loss.grad, w, h, params)?,
        None => loss.grad,
    };
    let d_out = Tensor::from_vec(out.shape(), grad.into_iter().map(T::of).collect())?;
    net.zero_grad();
    net.backward(&tape, &d_out)?;
    radam_step_net(net, opt, lr)?;

    Ok(StepOutcome {
        loss: loss.total,
        prediction: SoftMask::new(w, h, pred.iter().map(|&v| v as f32).collect())?,
    })
}

/// Per-image record of an iterative pass.
#[derive(Clone, Debug, PartialEq)]
pub struct IterativeOutcome {
    pub losses: Vec<f64>,
    pub clicks: Vec<Click>,
    /// Prediction from the last step taken.
    pub last_prediction: SoftMask,
}

/// Click-by-click training on one image. Stops early when the previous
/// prediction leaves no mislabeled pixel.
pub fn train_image_iterative<T: Real>(
    net: &mut MicroSegNet<T>,
    opt: &mut OptimizerState,
    lr: f64,
    image: &Image,
    gt: &BinaryMask,
    clicks_per_image: usize,
) -> Result<IterativeOutcome> {
    check_sample(image, gt)?;
    let (w, h) = image.dims();
    let mut prev = SoftMask::zeros(w, h);
    let mut clicks: Vec<Click> = Vec::with_capacity(clicks_per_image);
    let mut losses = Vec::with_capacity(clicks_per_image);
    for k in 1..=clicks_per_image {
        let click = match place_click(&binarize(&prev, 0.5), gt, None) {
            Ok(p) => p.click.with_ordinal(k as u32),
            Err(Error::AlreadyCorrect) => break,
            Err(e) => return Err(e),
        };
        clicks.push(click);
        let step = train_step(net, opt, lr, image, gt, &clicks, &prev)?;
        losses.push(step.loss);
        prev = step.prediction;
    }
    Ok(IterativeOutcome {
        losses,
        clicks,
        last_prediction: prev,
    })
}

/// One step with randomly sampled clicks and an empty previous mask.
pub fn train_image_bundled<T: Real, R: Rng + ?Sized>(
    net: &mut MicroSegNet<T>,
    opt: &mut OptimizerState,
    lr: f64,
    image: &Image,
    gt: &BinaryMask,
    params: &BundledParams,
    rng: &mut R,
) -> Result<(f64, Vec<Click>)> {
    check_sample(image, gt)?;
    let clicks = bundled_clicks(gt, rng, params)?;
    let (w, h) = image.dims();
    let step = train_step(net, opt, lr, image, gt, &clicks, &SoftMask::zeros(w, h))?;
    Ok((step.loss, clicks))
}

/// A training image with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub id: String,
    pub image: Image,
    pub gt: BinaryMask,
}

/// One line of the JSON-lines progress log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressRecord {
    pub epoch: usize,
    pub image: String,
    pub lr: f64,
    pub losses: Vec<f64>,
}

/// Model, optimizer state and sampling stream for a training run.
pub struct Trainer<T> {
    pub net: MicroSegNet<T>,
    pub optimizer: OptimizerState,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(net: MicroSegNet<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            optimizer: OptimizerState::new(config.optimizer.clone()),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            net,
            config,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Visit every sample once, in a seeded shuffled order.
    pub fn run_epoch(&mut self, samples: &[TrainSample], log: &mut dyn FnMut(&ProgressRecord)) -> Result<()> {
        let lr = self.config.schedule().at(self.epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut self.rng);
        for &i in &order {
            let s = &samples[i];
            let (image, gt) = match &self.config.augment {
                Some(params) => {
                    let draw = draw_augmentation(&s.gt, &mut self.rng, params)?;
                    apply_augmentation(&s.image, &s.gt, params.crop, &draw)
                }
                None => (s.image.clone(), s.gt.clone()),
            };
            if gt.is_empty() {
                continue;
            }
            let losses = match self.config.mode {
                TrainMode::Iterative => {
                    train_image_iterative(
                        &mut self.net,
                        &mut self.optimizer,
                        lr,
                        &image,
                        &gt,
                        self.config.clicks_per_image,
                    )?
                    .losses
                }
                TrainMode::Bundled => {
                    let (loss, _) = train_image_bundled(
                        &mut self.net,
                        &mut self.optimizer,
                        lr,
                        &image,
                        &gt,
                        &self.config.bundled,
                        &mut self.rng,
                    )?;
                    vec![loss]
                }
            };
            log(&ProgressRecord {
                epoch: self.epoch,
                image: s.id.clone(),
                lr,
                losses,
            });
        }
        self.epoch += 1;
        Ok(())
    }

    /// Run the remaining configured epochs.
    pub fn run(&mut self, samples: &[TrainSample], log: &mut dyn FnMut(&ProgressRecord)) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no training samples".into()));
        }
        while self.epoch < self.config.epochs {
            self.run_epoch(samples, log)?;
        }
        Ok(())
    }

    pub fn into_net(self) -> MicroSegNet<T> {
        self.net
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    fn tiny_net() -> MicroSegNet<f32> {
        MicroSegNet::new(NetConfig {
            width_multiplier: 1.0 / 16.0,
            init_seed: 3,
            ..NetConfig::default()
        })
    }

    fn square_sample() -> (Image, BinaryMask) {
        let gt = BinaryMask::from_fn(32, 32, |x, y| (8..24).contains(&x) && (8..24).contains(&y));
        let image = Image::from_fn(32, 32, |x, y| if gt.get(x, y) { [0.9, 0.2, 0.2] } else { [0.1, 0.3, 0.6] });
        (image, gt)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut cfg = OptimizerConfig::default();
        cfg.conv_weight_decay = 0.0;
        let mut state = OptimizerState::new(cfg);
        let mut value = vec![0.3f64, -1.2];
        let grad = vec![0.0; 2];
        for _ in 0..10 {
            let mut slots = [ParamSlot {
                name: "w",
                weight_decay: 0.0,
                value: &mut value,
                grad: &grad,
            }];
            radam_step(&mut slots, &mut state, 0.1).unwrap();
        }
        assert_eq!(value, vec![0.3, -1.2]);
    }

    #[test]
    fn early_steps_use_momentum_branch() {
        let mut state = OptimizerState::new(OptimizerConfig::default());
        let mut value = vec![1.0f64];
        let grad = vec![0.5];
        let mut seen = Vec::new();
        for _ in 0..8 {
            let mut slots = [ParamSlot {
                name: "w",
                weight_decay: 0.0,
                value: &mut value,
                grad: &grad,
            }];
            radam_step(&mut slots, &mut state, 0.01).unwrap();
            seen.push(state.last_rectified.unwrap());
        }
        assert!(!seen[0]);
        assert!(seen[7]);
        let switch = seen.iter().position(|&r| r).unwrap();
        assert!(seen[switch..].iter().all(|&r| r));
        assert!(state.rho(switch as u64) <= 4.0 && state.rho(switch as u64 + 1) > 4.0);
    }

    #[test]
    fn nan_gradient_aborts_untouched() {
        let mut state = OptimizerState::new(OptimizerConfig::default());
        let mut value = vec![1.0f32, 2.0];
        let grad = vec![0.1, f32::NAN];
        let mut slots = [ParamSlot {
            name: "w",
            weight_decay: 0.0,
            value: &mut value,
            grad: &grad,
        }];
        let err = radam_step(&mut slots, &mut state, 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref m) if m.contains("w at index 1")));
        assert_eq!(value, vec![1.0, 2.0]);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn decoupled_decay_scales_parameter() {
        let mut state = OptimizerState::new(OptimizerConfig::default());
        let mut value = vec![2.0f64];
        let grad = vec![0.0];
        let mut slots = [ParamSlot {
            name: "w",
            weight_decay: 0.5,
            value: &mut value,
            grad: &grad,
        }];
        radam_step(&mut slots, &mut state, 0.1).unwrap();
        assert!((value[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn schedule_steps_at_milestones() {
        let s = LrSchedule {
            base: 1.0,
            milestones: vec![14, 17, 20],
            factor: 0.1,
        };
        let lrs: Vec<f64> = (0..25).map(|e| s.at(e)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(lrs[13], 1.0);
        assert_eq!(lrs[14], 0.1);
        assert!((lrs[17] - 0.01).abs() < 1e-15);
        assert!((lrs[24] - 0.001).abs() < 1e-15);
        assert_eq!(scaled_milestones(25), vec![14, 17, 20]);
        assert_eq!(scaled_milestones(50), vec![28, 34, 40]);
    }

    #[test]
    fn iterative_pass_places_center_click_first() {
        let (image, gt) = square_sample();
        let mut net = tiny_net();
        let mut opt = OptimizerState::new(OptimizerConfig::default());
        let out = train_image_iterative(&mut net, &mut opt, 1e-3, &image, &gt, 1).unwrap();
        assert_eq!(out.losses.len(), 1);
        assert_eq!(opt.step, 1);
        let c = out.clicks[0];
        assert!(c.positive && c.ordinal == 1);
        assert!((15..=16).contains(&c.x) && (15..=16).contains(&c.y));
    }

    #[test]
    fn iterative_clicks_are_numbered() {
        let (image, gt) = square_sample();
        let mut net = tiny_net();
        let mut opt = OptimizerState::new(OptimizerConfig::default());
        let out = train_image_iterative(&mut net, &mut opt, 1e-3, &image, &gt, 4).unwrap();
        assert_eq!(out.losses.len(), out.clicks.len());
        for (k, c) in out.clicks.iter().enumerate() {
            assert_eq!(c.ordinal as usize, k + 1);
        }
    }

    #[test]
    fn bundled_is_deterministic() {
        let (image, gt) = square_sample();
        let run = || {
            let mut net = tiny_net();
            let mut opt = OptimizerState::new(OptimizerConfig::default());
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let (loss, clicks) =
                train_image_bundled(&mut net, &mut opt, 1e-3, &image, &gt, &BundledParams::default(), &mut rng).unwrap();
            (loss, clicks, net.params()[0].tensor.data().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn trainer_is_deterministic() {
        let (image, gt) = square_sample();
        let samples = vec![
            TrainSample {
                id: "a".into(),
                image: image.clone(),
                gt: gt.clone(),
            },
            TrainSample {
                id: "b".into(),
                image: image.flip_horizontal(),
                gt: gt.flip_horizontal(),
            },
        ];
        let cfg = TrainConfig {
            augment: Some(AugmentParams::crop_only(32)),
            seed: 11,
            ..TrainConfig::default()
        }
        .with_epochs(2);
        let run = || {
            let mut t = Trainer::new(tiny_net(), cfg.clone()).unwrap();
            let mut log = Vec::new();
            t.run(&samples, &mut |r| log.push(r.clone())).unwrap();
            (log, t.net.params().iter().map(|p| p.tensor.data().to_vec()).collect::<Vec<_>>())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            clicks_per_image: 0,
            ..TrainConfig::default()
        };
        assert!(Trainer::new(tiny_net(), cfg).is_err());
    }
}
