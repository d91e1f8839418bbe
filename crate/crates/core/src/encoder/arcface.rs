use ndarray::{Array1, Array2, ArrayView1};

use crate::nn::{cross_entropy, softmax};

const NORM_FLOOR: f64 = 1e-12;
const SIN_FLOOR: f64 = 1e-6;

/// Loss value plus gradients with respect to the raw embedding and class rows.
pub(crate) struct ArcfaceGrad {
    pub loss: f64,
    pub d_emb: Array1<f64>,
    pub d_classes: Array2<f64>,
}

/// Cosines between the normalized embedding and every normalized class row.
pub(crate) fn cosines(classes: &Array2<f64>, emb: ArrayView1<'_, f64>) -> Vec<f64> {
    let e_norm = emb.dot(&emb).sqrt().max(NORM_FLOOR);
    classes
        .rows()
        .into_iter()
        .map(|w| {
            let w_norm = w.dot(&w).sqrt().max(NORM_FLOOR);
            (w.dot(&emb) / (w_norm * e_norm)).clamp(-1.0, 1.0)
        })
        .collect()
}

fn logits(cos: &[f64], label: usize, scale: f64, margin: f64) -> Vec<f64> {
    cos.iter()
        .enumerate()
        .map(|(j, &c)| {
            if j == label {
                scale * (c.acos() + margin).cos()
            } else {
                scale * c
            }
        })
        .collect()
}

pub(crate) fn loss(
    classes: &Array2<f64>,
    emb: ArrayView1<'_, f64>,
    label: usize,
    scale: f64,
    margin: f64,
) -> f64 {
    let cos = cosines(classes, emb);
    cross_entropy(&logits(&cos, label, scale, margin), label)
}

pub(crate) fn loss_and_grad(
    classes: &Array2<f64>,
    emb: ArrayView1<'_, f64>,
    label: usize,
    scale: f64,
    margin: f64,
) -> ArcfaceGrad {
    let n = classes.nrows();
    let e_norm = emb.dot(&emb).sqrt().max(NORM_FLOOR);
    let e_hat = emb.mapv(|v| v / e_norm);
    let w_norms: Vec<f64> = classes
        .rows()
        .into_iter()
        .map(|w| w.dot(&w).sqrt().max(NORM_FLOOR))
        .collect();
    let cos = cosines(classes, emb);
    let z = logits(&cos, label, scale, margin);
    let loss = cross_entropy(&z, label);
    let p = softmax(&z);

    let mut d_emb = Array1::<f64>::zeros(emb.len());
    let mut d_classes = Array2::<f64>::zeros(classes.dim());
    for j in 0..n {
        let dz = p[j] - if j == label { 1.0 } else { 0.0 };
        // d cos(θ + m) / d cos θ = cos m + sin m · cos θ / sin θ
        let dphi = if j == label {
            let c = cos[j];
            let sin_theta = (1.0 - c * c).max(0.0).sqrt().max(SIN_FLOOR);
            margin.cos() + margin.sin() * c / sin_theta
        } else {
            1.0
        };
        let dc = scale * dz * dphi;
        if dc == 0.0 {
            continue;
        }
        let w = classes.row(j);
        let w_hat = w.mapv(|v| v / w_norms[j]);
        // ∂c/∂e = (ŵ − c ê)/|e|,  ∂c/∂w = (ê − c ŵ)/|w|
        d_emb.scaled_add(dc / e_norm, &(&w_hat - &(cos[j] * &e_hat)));
        let mut row = d_classes.row_mut(j);
        row.scaled_add(dc / w_norms[j], &(&e_hat - &(cos[j] * &w_hat)));
    }
    ArcfaceGrad {
        loss,
        d_emb,
        d_classes,
    }
}
