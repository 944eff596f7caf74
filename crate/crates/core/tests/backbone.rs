use fadel_core::evidential::head_loss;
use fadel_core::net::{init_bound, Adam};
use fadel_core::{ClassWeights, EvidenceActivation, Head, Matrix, MlpModel, RngStream};

fn batch(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect())
}

fn batch_loss(model: &MlpModel, x: &Matrix, labels: &[usize], head: Head, w: &ClassWeights) -> f64 {
    let logits = model.infer(x).unwrap();
    labels.iter().enumerate().map(|(i, &t)| head_loss(head, logits.row(i), t, w, 0.0).unwrap().0).sum::<f64>()
        / labels.len() as f64
}

fn analytic(model: &MlpModel, x: &Matrix, labels: &[usize], head: Head, w: &ClassWeights) -> Vec<f64> {
    let cache = model.forward(x).unwrap();
    let mut up = Matrix::zeros(labels.len(), 2);
    for (i, &t) in labels.iter().enumerate() {
        let g = head_loss(head, cache.logits().row(i), t, w, 0.0).unwrap().1;
        for (u, v) in up.row_mut(i).iter_mut().zip(g) {
            *u = v / labels.len() as f64;
        }
    }
    model.backward(&cache, &up).unwrap().flatten()
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let heads = [
        Head::Softmax,
        Head::Evidential(EvidenceActivation::Relu),
        Head::Evidential(EvidenceActivation::Exponential),
        Head::Evidential(EvidenceActivation::Softplus),
    ];
    let w = ClassWeights::default();
    let mut rng = RngStream::new(17);
    let mut worst: f64 = 0.0;
    for case in 0..40 {
        let head = heads[case % heads.len()];
        let mut model = MlpModel::init(&[6, 5, 4, 2], &mut rng).unwrap();
        // Zero biases can park a pre-activation exactly on the ReLU kink.
        let mut p = model.params();
        for v in p.iter_mut().filter(|v| **v == 0.0) {
            *v = rng.uniform(-0.3, 0.3);
        }
        model.set_params(&p).unwrap();
        let x = batch(&mut rng, 3, 6);
        let labels = [0, 1, case % 2];
        let g = analytic(&model, &x, &labels, head, &w);
        let p = model.params();
        let h = 1e-6;
        for i in 0..p.len() {
            let mut m = model.clone();
            let mut q = p.clone();
            q[i] = p[i] + h;
            m.set_params(&q).unwrap();
            let up = batch_loss(&m, &x, &labels, head, &w);
            q[i] = p[i] - h;
            m.set_params(&q).unwrap();
            let down = batch_loss(&m, &x, &labels, head, &w);
            let fd = (up - down) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs());
            if scale < 1e-7 {
                continue;
            }
            worst = worst.max((g[i] - fd).abs() / scale);
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn default_shape_and_init_bounds() {
    let mut rng = RngStream::new(1);
    let model = MlpModel::init(&[80, 64, 64, 2], &mut rng).unwrap();
    assert_eq!(model.param_count(), 80 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
    for layer in model.layers() {
        let b = init_bound(layer.inputs);
        assert!(layer.weights.iter().all(|v| v.abs() <= b));
        assert!(layer.bias.iter().all(|&v| v == 0.0));
        let n = layer.weights.len() as f64;
        let mean = layer.weights.iter().sum::<f64>() / n;
        let var = layer.weights.iter().map(|v| v * v).sum::<f64>() / n;
        // Uniform(-b, b): mean 0, variance b^2 / 3.
        assert!(mean.abs() < 4.0 * b / (3.0 * n).sqrt());
        // x^2 has relative standard deviation sqrt(0.8) under Uniform(-b, b).
        assert!((var / (b * b / 3.0) - 1.0).abs() < 4.0 * (0.8 / n).sqrt());
    }
}

#[test]
fn duplicated_batch_gives_same_mean_gradient() {
    let mut rng = RngStream::new(4);
    let model = MlpModel::init(&[5, 8, 2], &mut rng).unwrap();
    let x = batch(&mut rng, 4, 5);
    let labels = [0, 1, 1, 0];
    let mut rows: Vec<Vec<f64>> = (0..4).map(|i| x.row(i).to_vec()).collect();
    rows.extend(rows.clone());
    let doubled = Matrix::from_rows(&rows);
    let labels2 = [0, 1, 1, 0, 0, 1, 1, 0];
    let head = Head::Evidential(EvidenceActivation::Softplus);
    let w = ClassWeights::default();
    let a = analytic(&model, &x, &labels, head, &w);
    let b = analytic(&model, &doubled, &labels2, head, &w);
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() <= 1e-14 * u.abs().max(1e-3));
    }
}

#[test]
fn adam_descends_on_a_fixed_batch() {
    let mut rng = RngStream::new(12);
    let mut model = MlpModel::init(&[4, 16, 2], &mut rng).unwrap();
    let x = batch(&mut rng, 32, 4);
    let labels: Vec<usize> = (0..32).map(|i| usize::from(x.row(i)[0] > 0.0)).collect();
    let head = Head::Softmax;
    let w = ClassWeights::uniform(2);
    let start = batch_loss(&model, &x, &labels, head, &w);
    let mut adam = Adam::new(&model, 1e-2);
    for _ in 0..200 {
        let cache = model.forward(&x).unwrap();
        let mut up = Matrix::zeros(32, 2);
        for (i, &t) in labels.iter().enumerate() {
            let g = head_loss(head, cache.logits().row(i), t, &w, 0.0).unwrap().1;
            up.row_mut(i).copy_from_slice(&g);
        }
        let grads = model.backward(&cache, &up).unwrap();
        adam.update(&mut model, &grads);
    }
    assert_eq!(adam.step_count(), 200);
    assert!(batch_loss(&model, &x, &labels, head, &w) < 0.2 * start);
}
