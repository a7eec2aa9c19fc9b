//! Connectionist temporal classification in log space.
//!
//! Labels are interleaved with blanks (`b l1 b l2 ... lL b`); the forward
//! (alpha) and backward (beta) recursions run with log-sum-exp so long
//! inputs do not underflow.

use crate::scalar::Scalar;

use super::error::{Result, TensorError};
use super::tensor::Tensor;

fn lse2<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Minimum frame count able to emit `target` (repeats need a blank between).
pub fn required_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn extended(target: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &l in target {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

fn check(logprobs_shape: (usize, usize), target: &[usize], blank: usize) -> Result<()> {
    let (frames, classes) = logprobs_shape;
    if blank >= classes {
        return Err(TensorError::IndexOutOfRange {
            index: blank,
            bound: classes,
        });
    }
    if let Some(&bad) = target.iter().find(|&&l| l >= classes || l == blank) {
        return Err(TensorError::IndexOutOfRange {
            index: bad,
            bound: classes,
        });
    }
    let required = required_frames(target);
    if frames < required || frames == 0 {
        return Err(TensorError::TargetTooLong {
            target_len: target.len(),
            required: required.max(1),
            frames,
        });
    }
    Ok(())
}

fn skip_allowed(ext: &[usize], s: usize, blank: usize) -> bool {
    s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]
}

/// Log-space alpha table `[T][S]`.
fn alphas<T: Scalar>(lp: &Tensor<T>, ext: &[usize], blank: usize) -> Vec<Vec<T>> {
    let frames = lp.rows();
    let s_len = ext.len();
    let ninf = T::neg_infinity();
    let mut alpha = vec![vec![ninf; s_len]; frames];
    alpha[0][0] = lp.at(0, ext[0]);
    if s_len > 1 {
        alpha[0][1] = lp.at(0, ext[1]);
    }
    for t in 1..frames {
        for s in 0..s_len {
            let mut acc = alpha[t - 1][s];
            if s >= 1 {
                acc = lse2(acc, alpha[t - 1][s - 1]);
            }
            if skip_allowed(ext, s, blank) {
                acc = lse2(acc, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = if acc == ninf { ninf } else { acc + lp.at(t, ext[s]) };
        }
    }
    alpha
}

fn betas<T: Scalar>(lp: &Tensor<T>, ext: &[usize], blank: usize) -> Vec<Vec<T>> {
    let frames = lp.rows();
    let s_len = ext.len();
    let ninf = T::neg_infinity();
    let mut beta = vec![vec![ninf; s_len]; frames];
    beta[frames - 1][s_len - 1] = lp.at(frames - 1, ext[s_len - 1]);
    if s_len > 1 {
        beta[frames - 1][s_len - 2] = lp.at(frames - 1, ext[s_len - 2]);
    }
    for t in (0..frames - 1).rev() {
        for s in 0..s_len {
            let mut acc = beta[t + 1][s];
            if s + 1 < s_len {
                acc = lse2(acc, beta[t + 1][s + 1]);
            }
            if s + 2 < s_len && skip_allowed(ext, s + 2, blank) {
                acc = lse2(acc, beta[t + 1][s + 2]);
            }
            beta[t][s] = if acc == ninf { ninf } else { acc + lp.at(t, ext[s]) };
        }
    }
    beta
}

/// Negative log-likelihood of `target` under frame-wise log distributions
/// `logprobs` (`[T, classes]`).
pub fn ctc_loss<T: Scalar>(logprobs: &Tensor<T>, target: &[usize], blank: usize) -> Result<T> {
    check((logprobs.rows(), logprobs.cols()), target, blank)?;
    let ext = extended(target, blank);
    let alpha = alphas(logprobs, &ext, blank);
    let last = &alpha[logprobs.rows() - 1];
    let s_len = ext.len();
    let total = if s_len > 1 {
        lse2(last[s_len - 1], last[s_len - 2])
    } else {
        last[0]
    };
    Ok(-total)
}

/// Loss plus its gradient with respect to every `logprobs` entry.
pub fn ctc_loss_and_grad<T: Scalar>(logprobs: &Tensor<T>, target: &[usize], blank: usize) -> Result<(T, Tensor<T>)> {
    check((logprobs.rows(), logprobs.cols()), target, blank)?;
    let ext = extended(target, blank);
    let frames = logprobs.rows();
    let alpha = alphas(logprobs, &ext, blank);
    let beta = betas(logprobs, &ext, blank);
    let s_len = ext.len();
    let last = &alpha[frames - 1];
    let log_total = if s_len > 1 {
        lse2(last[s_len - 1], last[s_len - 2])
    } else {
        last[0]
    };
    if !log_total.is_finite() {
        return Err(TensorError::NonFinite { op: "ctc" });
    }
    let mut grad = Tensor::zeros(logprobs.shape());
    for t in 0..frames {
        for s in 0..s_len {
            let a = alpha[t][s];
            let b = beta[t][s];
            if a == T::neg_infinity() || b == T::neg_infinity() {
                continue;
            }
            let k = ext[s];
            let occ = (a + b - logprobs.at(t, k) - log_total).exp();
            let cur = grad.at(t, k);
            grad.set(t, k, cur - occ);
        }
    }
    Ok((-log_total, grad))
}

/// Most probable single path consistent with `target` (forced alignment).
///
/// Returns, for every frame, the position in the blank-interleaved label
/// sequence (`2i + 1` is label `i`, even positions are blanks).
pub fn ctc_best_path<T: Scalar>(logprobs: &Tensor<T>, target: &[usize], blank: usize) -> Result<Vec<usize>> {
    check((logprobs.rows(), logprobs.cols()), target, blank)?;
    let ext = extended(target, blank);
    let frames = logprobs.rows();
    let s_len = ext.len();
    let ninf = T::neg_infinity();
    let mut score = vec![vec![ninf; s_len]; frames];
    let mut back = vec![vec![0usize; s_len]; frames];
    score[0][0] = logprobs.at(0, ext[0]);
    if s_len > 1 {
        score[0][1] = logprobs.at(0, ext[1]);
    }
    for t in 1..frames {
        for s in 0..s_len {
            let mut best = (score[t - 1][s], s);
            if s >= 1 && score[t - 1][s - 1] > best.0 {
                best = (score[t - 1][s - 1], s - 1);
            }
            if skip_allowed(&ext, s, blank) && score[t - 1][s - 2] > best.0 {
                best = (score[t - 1][s - 2], s - 2);
            }
            if best.0 > ninf {
                score[t][s] = best.0 + logprobs.at(t, ext[s]);
                back[t][s] = best.1;
            }
        }
    }
    let mut state = if s_len > 1 && score[frames - 1][s_len - 2] > score[frames - 1][s_len - 1] {
        s_len - 2
    } else {
        s_len - 1
    };
    let mut path = vec![0; frames];
    for t in (0..frames).rev() {
        path[t] = state;
        state = back[t][state];
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frame_single_label() {
        let lp = Tensor::<f64>::from_f64(&[1, 3], &[0.2f64.ln(), 0.5f64.ln(), 0.3f64.ln()]).unwrap();
        let loss = ctc_loss(&lp, &[1], 0).unwrap();
        assert!((loss - (-(0.5f64.ln()))).abs() < 1e-12);
    }

    #[test]
    fn too_long_target() {
        let lp = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(
            ctc_loss(&lp, &[1, 1], 0),
            Err(TensorError::TargetTooLong { required: 3, .. })
        ));
        assert_eq!(required_frames(&[1, 2, 2, 2]), 6);
    }

    #[test]
    fn empty_target_is_all_blank() {
        let lp = Tensor::<f64>::from_f64(&[2, 2], &[0.6f64.ln(), 0.4f64.ln(), 0.7f64.ln(), 0.3f64.ln()]).unwrap();
        let loss = ctc_loss(&lp, &[], 0).unwrap();
        assert!((loss + (0.42f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn best_path_is_monotone() {
        let lp = Tensor::<f64>::from_f64(
            &[4, 3],
            &[
                0.1f64.ln(),
                0.8f64.ln(),
                0.1f64.ln(),
                0.8f64.ln(),
                0.1f64.ln(),
                0.1f64.ln(),
                0.1f64.ln(),
                0.1f64.ln(),
                0.8f64.ln(),
                0.8f64.ln(),
                0.1f64.ln(),
                0.1f64.ln(),
            ],
        )
        .unwrap();
        let path = ctc_best_path(&lp, &[1, 2], 0).unwrap();
        assert_eq!(path, vec![1, 2, 3, 4]);
    }
}
