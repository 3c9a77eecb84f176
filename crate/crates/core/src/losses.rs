//! The training objectives: supervised dual-view cross-entropy, the NT-Xent
//! contrastive loss, thresholded self-supervised pseudo-labeling, and the
//! conditional-entropy term of the ENT baseline.
//!
//! NT-Xent follows the literal formula: for anchor i the candidate set A(i)
//! holds the 2(N-1) views of all *other* samples, so the positive pair is
//! absent from the denominator and per-anchor terms can be negative. The
//! SimCLR convention (positive included, only the anchor itself excluded)
//! is available behind [`NtxentDenominator::Simclr`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which views the NT-Xent denominator sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NtxentDenominator {
    /// A(i) excludes both views of sample i (the formula as written).
    #[default]
    Paper,
    /// Denominator over all other views including the positive (SimCLR).
    Simclr,
}

/// Pseudo-labels for one unlabeled batch: argmax and max of the averaged
/// weak/strong predictions, plus the confidence mask. Constant with respect
/// to the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelBatch {
    pub labels: Vec<usize>,
    pub confidences: Vec<f64>,
    pub mask: Vec<bool>,
    pub threshold: f64,
}

impl PseudoLabelBatch {
    pub fn mask_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            0.0
        } else {
            self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
        }
    }
}

/// Mean over the batch of the summed weak and strong cross-entropies:
/// `(1/N) sum_i (ce(p_weak_i, y_i) + ce(p_strong_i, y_i))`. Note the divisor
/// is N, not 2N.
pub fn supervised_loss(
    tape: &mut Tape,
    p_weak: Var,
    p_strong: Var,
    labels: &[usize],
) -> Result<Var> {
    let weak = tape.cross_entropy(p_weak, labels)?;
    let strong = tape.cross_entropy(p_strong, labels)?;
    tape.add(weak, strong)
}

/// NT-Xent over N (weak, strong) pairs of unit-normalized rows. The 2N
/// anchor terms (each sample anchored at its weak and its strong view) are
/// averaged; similarity is the dot product, scaled by 1/T.
pub fn ntxent_loss(
    tape: &mut Tape,
    z_weak: Var,
    z_strong: Var,
    temperature: f64,
    denominator: NtxentDenominator,
) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidHyperparameter(format!(
            "ntxent temperature must be positive, got {temperature}"
        )));
    }
    let shape_w = tape.shape(z_weak).to_vec();
    let shape_s = tape.shape(z_strong).to_vec();
    if shape_w != shape_s || shape_w.len() != 2 {
        return Err(Error::contract(format!(
            "ntxent: view shapes {shape_w:?} vs {shape_s:?}"
        )));
    }
    let n = shape_w[0];
    let d = shape_w[1];
    if n < 2 {
        return Err(Error::contract(format!(
            "ntxent needs at least 2 samples, got {n}"
        )));
    }
    for (name, v) in [("weak", z_weak), ("strong", z_strong)] {
        let values = tape.value(v);
        for r in 0..n {
            let norm: f64 = values[r * d..(r + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::contract(format!(
                    "ntxent: {name} row {r} has norm {norm}, expected 1 +/- 1e-6"
                )));
            }
        }
    }

    let z_all = tape.concat_rows(z_weak, z_strong)?; // [2n, d]
    let sim = tape.matmul_nt(z_all, z_all)?; // [2n, 2n]
    let scaled = tape.scale(sim, 1.0 / temperature);
    let exps = tape.exp(scaled);

    // Row r anchors sample r % n; its partner view sits at (r + n) % 2n.
    let partner: Vec<usize> = (0..2 * n).map(|r| (r + n) % (2 * n)).collect();
    let mut mask = vec![1.0; 4 * n * n];
    for r in 0..2 * n {
        for c in 0..2 * n {
            let excluded = match denominator {
                NtxentDenominator::Paper => c % n == r % n,
                NtxentDenominator::Simclr => c == r,
            };
            if excluded {
                mask[r * 2 * n + c] = 0.0;
            }
        }
    }
    let mask = tape.constant_from(vec![2 * n, 2 * n], mask)?;
    let masked = tape.mul(exps, mask)?;
    let denom = tape.row_sum(masked)?; // [2n]
    let log_denom = tape.ln_clamped(denom);
    let positives = tape.gather_cols(scaled, &partner)?; // sim(w_i, s_i)/T per anchor
    let terms = tape.sub(log_denom, positives)?;
    Ok(tape.mean_all(terms))
}

/// Argmax/max of the averaged predictions per sample; ties break toward the
/// lowest class index; mask is `confidence >= threshold`. Operates on plain
/// values: no gradient flows through pseudo-labels.
pub fn pseudo_label(p_weak: &Tensor, p_strong: &Tensor, threshold: f64) -> Result<PseudoLabelBatch> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidHyperparameter(format!(
            "pseudo-label threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let (n, k) = p_weak.dims2()?;
    if p_strong.dims2()? != (n, k) {
        return Err(Error::contract(format!(
            "pseudo_label: {:?} vs {:?}",
            p_weak.shape(),
            p_strong.shape()
        )));
    }
    let mut labels = Vec::with_capacity(n);
    let mut confidences = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = 0usize;
        let mut best_p = f64::NEG_INFINITY;
        for j in 0..k {
            let avg = (p_weak.values()[i * k + j] + p_strong.values()[i * k + j]) / 2.0;
            if avg > best_p {
                best_p = avg;
                best = j;
            }
        }
        labels.push(best);
        confidences.push(best_p);
        mask.push(best_p >= threshold);
    }
    Ok(PseudoLabelBatch {
        labels,
        confidences,
        mask,
        threshold,
    })
}

/// `(1/N) sum_i mask_i * (ce(p_weak_i, y~_i) + ce(p_strong_i, y~_i))`:
/// masked-out samples contribute exactly zero while the divisor stays N.
pub fn self_supervised_loss(
    tape: &mut Tape,
    p_weak: Var,
    p_strong: Var,
    pseudo: &PseudoLabelBatch,
) -> Result<Var> {
    let weak = tape.masked_cross_entropy(p_weak, &pseudo.labels, &pseudo.mask)?;
    let strong = tape.masked_cross_entropy(p_strong, &pseudo.labels, &pseudo.mask)?;
    tape.add(weak, strong)
}

/// Mean conditional entropy: `(1/N) sum_i -sum_k p_ik ln p_ik`.
pub fn entropy_loss(tape: &mut Tape, probs: Var) -> Result<Var> {
    let shape = tape.shape(probs).to_vec();
    if shape.len() != 2 {
        return Err(Error::contract(format!(
            "entropy_loss expects [batch, K], got {shape:?}"
        )));
    }
    let n = shape[0];
    let logs = tape.ln_clamped(probs);
    let p_log_p = tape.mul(probs, logs)?;
    let total = tape.sum_all(p_log_p);
    Ok(tape.scale(total, -1.0 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::Rng;

    fn tensor_rows(rows: &[Vec<f64>]) -> Tensor {
        let n = rows.len();
        let d = rows[0].len();
        Tensor::new(vec![n, d], rows.concat()).unwrap()
    }

    fn unit_rows(rows: &[Vec<f64>]) -> Tensor {
        let normalized: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                r.iter().map(|x| x / norm).collect()
            })
            .collect();
        tensor_rows(&normalized)
    }

    /// Independent brute-force NT-Xent: materializes every pairwise
    /// similarity and walks the 2N anchors directly.
    fn ntxent_brute(
        zw: &[Vec<f64>],
        zs: &[Vec<f64>],
        t: f64,
        denominator: NtxentDenominator,
    ) -> f64 {
        let n = zw.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let view = |idx: usize| -> &[f64] {
            if idx < n {
                &zw[idx]
            } else {
                &zs[idx - n]
            }
        };
        let mut total = 0.0;
        for anchor in 0..2 * n {
            let i = anchor % n;
            let numerator = (dot(&zw[i], &zs[i]) / t).exp();
            let mut denom = 0.0;
            for other in 0..2 * n {
                let excluded = match denominator {
                    NtxentDenominator::Paper => other % n == i,
                    NtxentDenominator::Simclr => other == anchor,
                };
                if !excluded {
                    denom += (dot(view(anchor), view(other)) / t).exp();
                }
            }
            total += -(numerator / denom).ln();
        }
        total / (2 * n) as f64
    }

    fn eval_ntxent(zw: &Tensor, zs: &Tensor, t: f64, denominator: NtxentDenominator) -> f64 {
        let mut tape = Tape::new();
        let w = tape.constant(zw);
        let s = tape.constant(zs);
        let loss = ntxent_loss(&mut tape, w, s, t, denominator).unwrap();
        tape.value(loss)[0]
    }

    #[test]
    fn ntxent_orthogonal_pairs_hit_closed_form() {
        // z1w = z1s = e1, z2w = z2s = e2, T = 1: every term is
        // -ln(e / (1 + 1)) = ln 2 - 1, which is negative because the
        // positive pair is excluded from the denominator.
        let zw = tensor_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let zs = zw.clone();
        let loss = eval_ntxent(&zw, &zs, 1.0, NtxentDenominator::Paper);
        let expected = 2.0_f64.ln() - 1.0;
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
        assert!(loss < 0.0);
    }

    #[test]
    fn ntxent_matches_brute_force_oracle() {
        let mut rng = crate::seeding::rng_from(&[2024]);
        for n in [2usize, 3, 4] {
            for t in [0.05, 0.5, 1.0] {
                let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
                    (0..n)
                        .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .collect()
                };
                let zw_raw = draw(&mut rng);
                let zs_raw = draw(&mut rng);
                let zw = unit_rows(&zw_raw);
                let zs = unit_rows(&zs_raw);
                let rows = |t: &Tensor| -> Vec<Vec<f64>> {
                    t.values().chunks(5).map(|c| c.to_vec()).collect()
                };
                for denom in [NtxentDenominator::Paper, NtxentDenominator::Simclr] {
                    let ours = eval_ntxent(&zw, &zs, t, denom);
                    let brute = ntxent_brute(&rows(&zw), &rows(&zs), t, denom);
                    assert!(
                        (ours - brute).abs() < 1e-9,
                        "n={n} t={t} {denom:?}: {ours} vs {brute}"
                    );
                }
            }
        }
    }

    #[test]
    fn ntxent_is_symmetric_in_view_roles_and_sample_order() {
        let zw = unit_rows(&[vec![0.3, 1.0, -0.2], vec![-1.0, 0.4, 0.1], vec![0.2, 0.2, 0.9]]);
        let zs = unit_rows(&[vec![0.5, 0.8, 0.0], vec![-0.9, 0.1, 0.4], vec![0.1, -0.4, 1.0]]);
        let base = eval_ntxent(&zw, &zs, 0.5, NtxentDenominator::Paper);
        let swapped = eval_ntxent(&zs, &zw, 0.5, NtxentDenominator::Paper);
        assert!((base - swapped).abs() < 1e-12);

        let permute = |t: &Tensor, order: &[usize]| -> Tensor {
            let rows: Vec<Vec<f64>> = t.values().chunks(3).map(|c| c.to_vec()).collect();
            tensor_rows(&order.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>())
        };
        let order = [2usize, 0, 1];
        let permuted = eval_ntxent(
            &permute(&zw, &order),
            &permute(&zs, &order),
            0.5,
            NtxentDenominator::Paper,
        );
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn ntxent_alignment_monotonicity() {
        // Construct a batch where every negative similarity is pinned to 0:
        // all other views are mutually orthogonal axes also orthogonal to
        // e1 and e6, and s1 rotates in the (e1, e6) plane. Increasing the
        // positive similarity cos(alpha) must strictly decrease the loss.
        let n = 3;
        let d = 8;
        let axis = |i: usize| -> Vec<f64> {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            v
        };
        let mut prev = f64::INFINITY;
        for &alpha in &[1.2f64, 0.9, 0.6, 0.3, 0.05] {
            let s1: Vec<f64> = {
                let mut v = vec![0.0; d];
                v[0] = alpha.cos();
                v[5] = alpha.sin();
                v
            };
            let zw = tensor_rows(&[axis(0), axis(1), axis(2)]);
            let zs = tensor_rows(&[s1, axis(3), axis(4)]);
            let loss = eval_ntxent(&zw, &zs, 0.5, NtxentDenominator::Paper);
            assert!(loss < prev, "loss did not decrease at alpha={alpha}");
            prev = loss;
            let _ = n;
        }
    }

    #[test]
    fn ntxent_rejects_bad_inputs() {
        let one = unit_rows(&[vec![1.0, 0.0]]);
        let mut tape = Tape::new();
        let w = tape.constant(&one);
        let s = tape.constant(&one);
        assert!(ntxent_loss(&mut tape, w, s, 1.0, NtxentDenominator::Paper).is_err());

        let non_unit = tensor_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        let unit = unit_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let mut tape = Tape::new();
        let w = tape.constant(&non_unit);
        let s = tape.constant(&unit);
        assert!(ntxent_loss(&mut tape, w, s, 1.0, NtxentDenominator::Paper).is_err());
    }

    #[test]
    fn ntxent_gradients_pass_finite_differences() {
        let mut rng = crate::seeding::rng_from(&[7]);
        // Leaves are raw features; normalize on-tape so perturbed inputs
        // stay valid unit rows inside the loss.
        let raw: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zw = Tensor::param(vec![2, 4], raw.clone()).unwrap();
        let raw2: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zs = Tensor::param(vec![2, 4], raw2).unwrap();
        let report = check_gradients(
            |tape, vars| {
                let w = tape.l2_normalize_rows(vars[0])?;
                let s = tape.l2_normalize_rows(vars[1])?;
                ntxent_loss(tape, w, s, 0.5, NtxentDenominator::Paper)
            },
            &[zw, zs],
            1e-4,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn supervised_loss_hand_values() {
        // Both views one-hot correct -> 0.
        let mut tape = Tape::new();
        let onehot = tape.constant(&tensor_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let l = supervised_loss(&mut tape, onehot, onehot, &[0, 1]).unwrap();
        assert_eq!(tape.value(l)[0], 0.0);

        // N = 1, both views uniform over K = 4 -> 2 ln 4 (divisor N, not 2N).
        let mut tape = Tape::new();
        let uniform = tape.constant(&Tensor::row(vec![0.25; 4]));
        let l = supervised_loss(&mut tape, uniform, uniform, &[3]).unwrap();
        assert!((tape.value(l)[0] - 2.0 * 4.0_f64.ln()).abs() < 1e-12);
        assert!((tape.value(l)[0] - 2.77259).abs() < 1e-5);
    }

    #[test]
    fn supervised_loss_is_view_symmetric() {
        let pw = tensor_rows(&[vec![0.7, 0.2, 0.1], vec![0.25, 0.5, 0.25]]);
        let ps = tensor_rows(&[vec![0.1, 0.8, 0.1], vec![0.4, 0.4, 0.2]]);
        let labels = [2usize, 0];
        let eval = |a: &Tensor, b: &Tensor| {
            let mut tape = Tape::new();
            let va = tape.constant(a);
            let vb = tape.constant(b);
            let l = supervised_loss(&mut tape, va, vb, &labels).unwrap();
            tape.value(l)[0]
        };
        assert_eq!(eval(&pw, &ps), eval(&ps, &pw));
    }

    #[test]
    fn pseudo_label_hand_case_and_ties() {
        let pw = tensor_rows(&[vec![0.6, 0.4]]);
        let ps = tensor_rows(&[vec![0.2, 0.8]]);
        let out = pseudo_label(&pw, &ps, 0.9).unwrap();
        assert_eq!(out.labels, vec![1]);
        assert!((out.confidences[0] - 0.6).abs() < 1e-12);
        assert_eq!(out.mask, vec![false]);

        // Identical views: argmax and max pass through.
        let p = tensor_rows(&[vec![0.1, 0.7, 0.2]]);
        let out = pseudo_label(&p, &p, 0.5).unwrap();
        assert_eq!(out.labels, vec![1]);
        assert!((out.confidences[0] - 0.7).abs() < 1e-12);
        assert_eq!(out.mask, vec![true]);

        // Exact tie breaks toward the lowest class index.
        let tied = tensor_rows(&[vec![0.5, 0.5]]);
        let out = pseudo_label(&tied, &tied, 0.4).unwrap();
        assert_eq!(out.labels, vec![0]);
    }

    #[test]
    fn threshold_is_inclusive() {
        // Confidence exactly equal to tau must switch the mask on.
        let p = tensor_rows(&[vec![0.9, 0.1]]);
        let out = pseudo_label(&p, &p, 0.9).unwrap();
        assert!((out.confidences[0] - 0.9).abs() < 1e-15);
        assert_eq!(out.mask, vec![true]);
    }

    #[test]
    fn self_supervised_hand_values_and_masking() {
        // Fully masked batch -> exactly 0.
        let low = tensor_rows(&[vec![0.5, 0.5], vec![0.6, 0.4]]);
        let pseudo = pseudo_label(&low, &low, 0.95).unwrap();
        assert!(pseudo.mask.iter().all(|m| !m));
        let mut tape = Tape::new();
        let v = tape.constant(&low);
        let l = self_supervised_loss(&mut tape, v, v, &pseudo).unwrap();
        assert_eq!(tape.value(l)[0], 0.0);

        // N = 1, both views (0.98, 0.02), tau = 0.9 -> 2 * (-ln 0.98).
        let p = tensor_rows(&[vec![0.98, 0.02]]);
        let pseudo = pseudo_label(&p, &p, 0.9).unwrap();
        assert_eq!(pseudo.labels, vec![0]);
        assert!(pseudo.mask[0]);
        let mut tape = Tape::new();
        let v = tape.constant(&p);
        let l = self_supervised_loss(&mut tape, v, v, &pseudo).unwrap();
        assert!((tape.value(l)[0] - 0.040405).abs() < 1e-5);
    }

    #[test]
    fn raising_threshold_never_raises_the_loss() {
        let pw = tensor_rows(&[vec![0.95, 0.05], vec![0.85, 0.15], vec![0.6, 0.4]]);
        let ps = tensor_rows(&[vec![0.9, 0.1], vec![0.8, 0.2], vec![0.7, 0.3]]);
        let mut prev = f64::INFINITY;
        for tau in [0.5, 0.8, 0.9, 0.99] {
            let pseudo = pseudo_label(&pw, &ps, tau).unwrap();
            let mut tape = Tape::new();
            let w = tape.constant(&pw);
            let s = tape.constant(&ps);
            let l = self_supervised_loss(&mut tape, w, s, &pseudo).unwrap();
            let v = tape.value(l)[0];
            assert!(v <= prev + 1e-15, "loss rose at tau={tau}");
            prev = v;
        }
    }

    #[test]
    fn masked_rows_deposit_exactly_zero_gradient() {
        let pw = Tensor::param(vec![2, 2], vec![0.95, 0.05, 0.6, 0.4]).unwrap();
        let ps = Tensor::param(vec![2, 2], vec![0.9, 0.1, 0.55, 0.45]).unwrap();
        let pseudo = pseudo_label(&pw, &ps, 0.9).unwrap();
        assert_eq!(pseudo.mask, vec![true, false]);
        let mut tape = Tape::new();
        let w = tape.leaf(&pw);
        let s = tape.leaf(&ps);
        let l = self_supervised_loss(&mut tape, w, s, &pseudo).unwrap();
        tape.backward(l).unwrap();
        for var in [w, s] {
            let g = tape.grad(var).unwrap();
            assert_eq!(&g[2..4], &[0.0, 0.0], "masked row leaked gradient");
            assert!(g[..2].iter().any(|x| *x != 0.0), "unmasked row got none");
        }
    }

    #[test]
    fn pseudo_labels_act_as_constants() {
        // Gradients are identical whether the pseudo batch came from
        // pseudo_label or was supplied by hand with the same fields.
        let pw = Tensor::param(vec![2, 2], vec![0.95, 0.05, 0.2, 0.8]).unwrap();
        let ps = Tensor::param(vec![2, 2], vec![0.9, 0.1, 0.3, 0.7]).unwrap();
        let computed = pseudo_label(&pw, &ps, 0.7).unwrap();
        let manual = PseudoLabelBatch {
            labels: computed.labels.clone(),
            confidences: computed.confidences.clone(),
            mask: computed.mask.clone(),
            threshold: 0.7,
        };
        let grads = |pseudo: &PseudoLabelBatch| -> (Vec<f64>, Vec<f64>) {
            let mut tape = Tape::new();
            let w = tape.leaf(&pw);
            let s = tape.leaf(&ps);
            let l = self_supervised_loss(&mut tape, w, s, pseudo).unwrap();
            tape.backward(l).unwrap();
            (tape.grad(w).unwrap().to_vec(), tape.grad(s).unwrap().to_vec())
        };
        assert_eq!(grads(&computed), grads(&manual));
    }

    #[test]
    fn entropy_hand_values_and_brute_force() {
        let mut tape = Tape::new();
        let onehot = tape.constant(&tensor_rows(&[vec![1.0, 0.0, 0.0]]));
        let l = entropy_loss(&mut tape, onehot).unwrap();
        assert!(tape.value(l)[0].abs() < 1e-10);

        let uniform = tape.constant(&Tensor::row(vec![0.25; 4]));
        let l = entropy_loss(&mut tape, uniform).unwrap();
        assert!((tape.value(l)[0] - 4.0_f64.ln()).abs() < 1e-12);

        // Random rows against direct summation.
        let mut rng = crate::seeding::rng_from(&[31]);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.iter().map(|v| v / sum).collect()
            })
            .collect();
        let brute: f64 = rows
            .iter()
            .map(|r| -r.iter().map(|p| p * p.ln()).sum::<f64>())
            .sum::<f64>()
            / rows.len() as f64;
        let t = tensor_rows(&rows);
        let v = tape.constant(&t);
        let l = entropy_loss(&mut tape, v).unwrap();
        assert!((tape.value(l)[0] - brute).abs() < 1e-10);
    }
}
