//! Shared helpers for integration tests: finite-difference gradient checks
//! and small random fixtures.

#![allow(dead_code)]

use clickseg::clicks::{encode_clicks, Click};
use clickseg::imgcore::{BinaryMask, Image, SoftMask};
use clickseg::net::layers::PyramidPooling;
use clickseg::net::ops::{self, ConvGeom};
use clickseg::net::{soft_iou_click_loss, MicroSegNet, NetConfig, NetInputs, Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worst relative error over the checked coordinates.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradReport {
    pub max_rel: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a non-smooth point.
    pub skipped: usize,
}

impl GradReport {
    pub fn merge(self, o: GradReport) -> GradReport {
        GradReport {
            max_rel: self.max_rel.max(o.max_rel),
            checked: self.checked + o.checked,
            skipped: self.skipped + o.skipped,
        }
    }
}

/// Settings for one precision.
#[derive(Clone, Copy, Debug)]
pub struct FdSettings {
    pub h: f64,
    /// Gradients smaller than this are compared against it instead of their own size.
    pub floor: f64,
    pub coords_per_tensor: usize,
}

pub const FD64: FdSettings = FdSettings {
    h: 1e-5,
    floor: 1e-4,
    coords_per_tensor: 6,
};

pub const FD32: FdSettings = FdSettings {
    h: 1e-2,
    floor: 1e-2,
    coords_per_tensor: 4,
};

pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Central differences at the given coordinates.
///
/// `eval_at(coord, delta)` evaluates the loss with coordinate `coord` shifted
/// by `delta` and returns the loss together with the sign pattern of every
/// kink; coordinates whose perturbation changes the pattern are skipped.
pub fn fd_check(
    analytic: &[f64],
    coords: &[usize],
    s: FdSettings,
    base_pattern: &[u8],
    mut eval_at: impl FnMut(usize, f64) -> (f64, Vec<u8>),
) -> GradReport {
    let mut r = GradReport::default();
    for &c in coords {
        let (lp, pp) = eval_at(c, s.h);
        let (lm, pm) = eval_at(c, -s.h);
        if pp != base_pattern || pm != base_pattern {
            r.skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * s.h);
        r.max_rel = r.max_rel.max(rel_err(analytic[c], numeric, s.floor));
        r.checked += 1;
    }
    r
}

pub fn pick_coords(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    if len <= n {
        return (0..len).collect();
    }
    (0..n).map(|_| rng.random_range(0..len)).collect()
}

pub fn random_tensor<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::of(rng.random_range(-scale..scale))).collect()).unwrap()
}

fn dot<T: Real>(y: &Tensor<T>, r: &[f64]) -> f64 {
    y.data().iter().zip(r).map(|(a, b)| a.f64() * b).sum()
}

fn as_f64<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.f64()).collect()
}

fn bump<T: Real>(t: &Tensor<T>, c: usize, d: f64) -> Tensor<T> {
    let mut t = t.clone();
    let v = t.data()[c].f64();
    t.data_mut()[c] = T::of(v + d);
    t
}

/// conv2d with stride 2 and dilation 2, gradients for input, weight, bias.
pub fn grad_conv2d<T: Real>(s: FdSettings, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = GradReport::default();
    for g in [
        ConvGeom::same(3),
        ConvGeom {
            stride: 2,
            dilation: 2,
            pad: 2,
        },
    ] {
        let x = random_tensor::<T>(&mut rng, &[1, 2, 7, 6], 1.0);
        let w = random_tensor::<T>(&mut rng, &[3, 2, 3, 3], 0.5);
        let b = random_tensor::<T>(&mut rng, &[3], 0.5);
        let y = ops::conv2d(&x, &w, Some(&b), g).unwrap();
        let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dy = Tensor::from_vec(y.shape(), r.iter().map(|&v| T::of(v)).collect()).unwrap();
        let (dx, dw, db) = ops::conv2d_backward(&x, &w, &dy, g).unwrap();
        let loss = |x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>| (dot(&ops::conv2d(x, w, Some(b), g).unwrap(), &r), vec![]);
        let cx = pick_coords(&mut rng, x.len(), s.coords_per_tensor * 2);
        let cw = pick_coords(&mut rng, w.len(), s.coords_per_tensor * 2);
        let cb = pick_coords(&mut rng, b.len(), 3);
        total = total
            .merge(fd_check(&as_f64(&dx), &cx, s, &[], |c, d| loss(&bump(&x, c, d), &w, &b)))
            .merge(fd_check(&as_f64(&dw), &cw, s, &[], |c, d| loss(&x, &bump(&w, c, d), &b)))
            .merge(fd_check(&as_f64(&db), &cb, s, &[], |c, d| loss(&x, &w, &bump(&b, c, d))));
    }
    total
}

pub fn grad_group_norm<T: Real>(s: FdSettings, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor::<T>(&mut rng, &[1, 4, 3, 3], 1.0);
    let gamma = random_tensor::<T>(&mut rng, &[4], 1.5);
    let beta = random_tensor::<T>(&mut rng, &[4], 0.5);
    let (y, cache) = ops::group_norm(&x, 2, &gamma, &beta).unwrap();
    let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dy = Tensor::from_vec(y.shape(), r.iter().map(|&v| T::of(v)).collect()).unwrap();
    let (dx, dg, db) = ops::group_norm_backward(&cache, &gamma, &dy).unwrap();
    let loss = |x: &Tensor<T>, g: &Tensor<T>, b: &Tensor<T>| (dot(&ops::group_norm(x, 2, g, b).unwrap().0, &r), vec![]);
    let cx = pick_coords(&mut rng, x.len(), s.coords_per_tensor * 3);
    fd_check(&as_f64(&dx), &cx, s, &[], |c, d| loss(&bump(&x, c, d), &gamma, &beta))
        .merge(fd_check(&as_f64(&dg), &[0, 1, 2, 3], s, &[], |c, d| {
            loss(&x, &bump(&gamma, c, d), &beta)
        }))
        .merge(fd_check(&as_f64(&db), &[0, 1, 2, 3], s, &[], |c, d| {
            loss(&x, &gamma, &bump(&beta, c, d))
        }))
}

pub fn grad_weight_standardize<T: Real>(s: FdSettings, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_tensor::<T>(&mut rng, &[3, 2, 3, 3], 1.0);
    let cache = ops::weight_standardize(&w).unwrap();
    let r: Vec<f64> = (0..w.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dh = Tensor::from_vec(w.shape(), r.iter().map(|&v| T::of(v)).collect()).unwrap();
    let dw = ops::weight_standardize_backward(&cache, &dh);
    let coords = pick_coords(&mut rng, w.len(), s.coords_per_tensor * 3);
    fd_check(&as_f64(&dw), &coords, s, &[], |c, d| {
        (dot(&ops::weight_standardize(&bump(&w, c, d)).unwrap().w_hat, &r), vec![])
    })
}

pub fn grad_bilinear<T: Real>(s: FdSettings, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor::<T>(&mut rng, &[1, 2, 3, 4], 1.0);
    let (oh, ow) = (7, 8);
    let y = ops::resize_bilinear(&x, oh, ow).unwrap();
    let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dy = Tensor::from_vec(y.shape(), r.iter().map(|&v| T::of(v)).collect()).unwrap();
    let dx = ops::resize_bilinear_backward(&dy, 3, 4).unwrap();
    let coords: Vec<usize> = (0..x.len()).collect();
    fd_check(&as_f64(&dx), &coords, s, &[], |c, d| {
        (dot(&ops::resize_bilinear(&bump(&x, c, d), oh, ow).unwrap(), &r), vec![])
    })
}

pub fn grad_pyramid_pool<T: Real>(s: FdSettings, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pp = PyramidPooling::<T>::new("pp", 3, 2, &[1, 2, 4], 0.01, 2.0, &mut rng);
    for p in pp.params_mut() {
        let len = p.tensor.len();
        let vals: Vec<T> = (0..len).map(|_| T::of(rng.random_range(-0.8..0.8))).collect();
        p.tensor.data_mut().copy_from_slice(&vals);
    }
    let x = random_tensor::<T>(&mut rng, &[1, 3, 8, 8], 1.0);
    let (y, cache) = pp.forward(&x).unwrap();
    let pattern = |c: &clickseg::net::layers::PyramidCache<T>| -> Vec<u8> {
        c.pre_activations()
            .flat_map(|z| z.data().iter().map(|&v| u8::from(v > T::zero())).collect::<Vec<_>>())
            .collect()
    };
    let base = pattern(&cache);
    let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dy = Tensor::from_vec(y.shape(), r.iter().map(|&v| T::of(v)).collect()).unwrap();
    let mut trained = pp.clone();
    let dx = trained.backward(&cache, &dy).unwrap();
    let eval = |pp: &PyramidPooling<T>, x: &Tensor<T>| {
        let (y, c) = pp.forward(x).unwrap();
        (dot(&y, &r), pattern(&c))
    };
    let cx = pick_coords(&mut rng, x.len(), s.coords_per_tensor * 3);
    let mut report = fd_check(&as_f64(&dx), &cx, s, &base, |c, d| eval(&pp, &bump(&x, c, d)));
    let n_params = pp.params().len();
    for pi in 0..n_params {
        let analytic: Vec<f64> = trained.params()[pi].grad().iter().map(|v| v.f64()).collect();
        let coords = pick_coords(&mut rng, analytic.len(), s.coords_per_tensor);
        report = report.merge(fd_check(&analytic, &coords, s, &base, |c, d| {
            let mut q = pp.clone();
            let t = &mut q.params_mut()[pi].tensor;
            let v = t.data()[c].f64();
            t.data_mut()[c] = T::of(v + d);
            eval(&q, &x)
        }));
    }
    report
}

/// 2x2 prediction with a few clicks; predictions kept away from 0, 1 and the
/// ground truth so `max` has no tie.
pub fn grad_loss<T: Real>(s: FdSettings, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (5, 4);
    let gt = BinaryMask::from_fn(w, h, |x, y| x + y < 4);
    let pred: Vec<T> = (0..w * h).map(|_| T::of(rng.random_range(0.1..0.9))).collect();
    let clicks = [Click::positive(1, 1, 1), Click::negative(4, 3, 2), Click::positive(0, 2, 3)];
    let lv = soft_iou_click_loss(&pred, &gt, &clicks).unwrap();
    let analytic: Vec<f64> = lv.grad.iter().map(|v| v.f64()).collect();
    let coords: Vec<usize> = (0..w * h).collect();
    fd_check(&analytic, &coords, s, &[], |c, d| {
        let mut p = pred.clone();
        p[c] = T::of(p[c].f64() + d);
        (soft_iou_click_loss(&p, &gt, &clicks).unwrap().total.f64(), vec![])
    })
}

pub fn tiny_net_config(seed: u64) -> NetConfig {
    NetConfig {
        width_multiplier: 1.0 / 16.0,
        min_channels: 1,
        init_seed: seed,
        ..NetConfig::default()
    }
}

pub struct NetFixture {
    pub image: Image,
    pub gt: BinaryMask,
    pub clicks: Vec<Click>,
    pub prev: SoftMask,
}

pub fn net_fixture(seed: u64, side: usize) -> NetFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = BinaryMask::from_fn(side, side, |x, y| {
        let (dx, dy) = (x as f64 - side as f64 * 0.45, y as f64 - side as f64 * 0.55);
        dx * dx + dy * dy < (side as f64 * 0.3).powi(2)
    });
    let image = Image::from_fn(side, side, |x, y| {
        let base = if gt.get(x, y) { 0.7 } else { 0.3 };
        [base, rng.random_range(0.0..1.0), (x + y) as f32 / (2 * side) as f32]
    });
    let prev = SoftMask::from_fn(side, side, |_, _| rng.random_range(0.0..1.0));
    let c = side / 2;
    NetFixture {
        image,
        gt,
        clicks: vec![Click::positive(c - 2, c + 1, 1), Click::negative(2, side - 3, 2)],
        prev,
    }
}

/// Scalar loss of the whole network (clip head and soft-IoU/click loss)
/// against every parameter tensor.
pub fn grad_full_net<T: Real>(s: FdSettings, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = net_fixture(seed, 32);
    let mut net = MicroSegNet::<T>::new(tiny_net_config(seed));
    let enc = encode_clicks(&f.clicks, 32, 32, net.config().sigmas).unwrap();
    let inputs = NetInputs::<T>::new(&f.image, &enc, &f.prev).unwrap();
    let eval = |net: &MicroSegNet<T>| {
        let (out, tape) = net.forward(&inputs).unwrap();
        let pred: Vec<f64> = out.data().iter().map(|v| v.f64()).collect();
        let mut pattern = tape.activation_pattern();
        // the max(a, g) kink of the loss sits at a = 0 and a = 1 for binary g
        pattern.extend(pred.iter().map(|&a| u8::from(a == 0.0) + 2 * u8::from(a == 1.0)));
        (soft_iou_click_loss(&pred, &f.gt, &f.clicks).unwrap().total, pattern)
    };
    let (out, tape) = net.forward(&inputs).unwrap();
    let pred: Vec<f64> = out.data().iter().map(|v| v.f64()).collect();
    let lv = soft_iou_click_loss(&pred, &f.gt, &f.clicks).unwrap();
    let d_out = Tensor::from_vec(out.shape(), lv.grad.iter().map(|&g| T::of(g)).collect()).unwrap();
    net.zero_grad();
    net.backward(&tape, &d_out).unwrap();
    let (_, base) = eval(&net);

    let mut report = GradReport::default();
    let n_params = net.params().len();
    for pi in 0..n_params {
        let analytic: Vec<f64> = net.params()[pi].grad().iter().map(|v| v.f64()).collect();
        let coords = pick_coords(&mut rng, analytic.len(), s.coords_per_tensor);
        let mut probe = net.clone();
        report = report.merge(fd_check(&analytic, &coords, s, &base, |c, d| {
            let t = &mut probe.params_mut()[pi].tensor;
            let v = t.data()[c];
            t.data_mut()[c] = T::of(v.f64() + d);
            let out = eval(&probe);
            probe.params_mut()[pi].tensor.data_mut()[c] = v;
            out
        }));
    }
    report
}
