//! CTC negative log-likelihood with exact gradients, a brute-force
//! enumeration oracle, and greedy best-path decoding.
//!
//! The loss marginalizes over every frame-level path that collapses (merge
//! repeats, then drop blanks) to the target label sequence. The
//! forward-backward recursion runs entirely in log space over the
//! blank-augmented label sequence of length `2U + 1`, with `-inf` marking
//! impossible cells.

use crate::error::{Error, Result};
use crate::numerics::{log_softmax, log_sum_exp, softmax, Mat};
use crate::scalar::Scalar;

/// Target labels: row indices into a signature matrix, blank excluded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSeq(Vec<usize>);

impl LabelSeq {
    pub fn new(labels: Vec<usize>) -> Self {
        LabelSeq(labels)
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shortest frame count that can emit these labels: one frame per label
    /// plus a separating blank between adjacent repeats.
    pub fn min_frames(&self) -> usize {
        let repeats = self.0.windows(2).filter(|w| w[0] == w[1]).count();
        self.0.len() + repeats
    }
}

/// Per-frame raw logits over `z` phonemes plus the blank in the last column.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitSeq<S> {
    values: Mat<S>,
}

impl<S: Scalar> LogitSeq<S> {
    /// `values` is `T x (z + 1)` with the blank in column `z`.
    pub fn new(values: Mat<S>) -> Self {
        assert!(values.rows() >= 1 && values.cols() >= 2);
        LogitSeq { values }
    }

    pub fn values(&self) -> &Mat<S> {
        &self.values
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    /// Number of non-blank classes `z`.
    pub fn phoneme_count(&self) -> usize {
        self.values.cols() - 1
    }

    pub fn blank(&self) -> usize {
        self.values.cols() - 1
    }

    /// Row-wise softmax.
    pub fn posteriors(&self) -> Mat<S> {
        let mut out = Mat::zeros(self.values.rows(), self.values.cols());
        for t in 0..self.values.rows() {
            out.row_mut(t).copy_from_slice(&softmax(self.values.row(t)));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct CtcResult<S> {
    /// `-log P(y | x)`.
    pub loss: S,
    /// Exact gradient of the loss with respect to the raw logits.
    pub grad_logits: Mat<S>,
}

fn check_alignment<S: Scalar>(logits: &LogitSeq<S>, y: &LabelSeq) -> Result<()> {
    for &label in y.labels() {
        assert!(label < logits.phoneme_count(), "label out of range");
    }
    let required = y.min_frames();
    if logits.frames() < required {
        return Err(Error::ImpossibleAlignment {
            frames: logits.frames(),
            labels: y.len(),
            required,
            utterance: None,
        });
    }
    Ok(())
}

/// Blank-augmented label sequence: blank, y1, blank, y2, ..., blank.
fn extended_labels(y: &LabelSeq, blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * y.len() + 1);
    ext.push(blank);
    for &l in y.labels() {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

/// CTC loss and its gradient by log-space forward-backward.
pub fn ctc_loss<S: Scalar>(logits: &LogitSeq<S>, y: &LabelSeq) -> Result<CtcResult<S>> {
    check_alignment(logits, y)?;
    let frames = logits.frames();
    let classes = logits.values().cols();
    let blank = logits.blank();
    let ext = extended_labels(y, blank);
    let m = ext.len();
    let ninf = S::neg_infinity();

    let mut logp = Mat::zeros(frames, classes);
    for t in 0..frames {
        logp.row_mut(t).copy_from_slice(&log_softmax(logits.values().row(t)));
    }

    // A transition into position s can also come from s-2 when s-2 exists,
    // s is a phoneme position, and it differs from the phoneme at s-2.
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    // Alpha: path prefix sums including the emission at t.
    let mut alpha = Mat::from_fn(frames, m, |_, _| ninf);
    alpha[(0, 0)] = logp[(0, ext[0])];
    if m > 1 {
        alpha[(0, 1)] = logp[(0, ext[1])];
    }
    for t in 1..frames {
        for s in 0..m {
            let mut terms = vec![alpha[(t - 1, s)]];
            if s >= 1 {
                terms.push(alpha[(t - 1, s - 1)]);
            }
            if can_skip(s) {
                terms.push(alpha[(t - 1, s - 2)]);
            }
            let merged = log_sum_exp(&terms);
            alpha[(t, s)] = if merged == ninf {
                ninf
            } else {
                merged + logp[(t, ext[s])]
            };
        }
    }

    let mut final_terms = vec![alpha[(frames - 1, m - 1)]];
    if m >= 2 {
        final_terms.push(alpha[(frames - 1, m - 2)]);
    }
    let log_prob = log_sum_exp(&final_terms);
    if log_prob == ninf {
        // Unreachable when check_alignment passed, but fail loudly if not.
        return Err(Error::ImpossibleAlignment {
            frames,
            labels: y.len(),
            required: y.min_frames(),
            utterance: None,
        });
    }

    // Beta: path suffix sums, also including the emission at t.
    let mut beta = Mat::from_fn(frames, m, |_, _| ninf);
    beta[(frames - 1, m - 1)] = logp[(frames - 1, ext[m - 1])];
    if m >= 2 {
        beta[(frames - 1, m - 2)] = logp[(frames - 1, ext[m - 2])];
    }
    for t in (0..frames - 1).rev() {
        for s in 0..m {
            let mut terms = vec![beta[(t + 1, s)]];
            if s + 1 < m {
                terms.push(beta[(t + 1, s + 1)]);
            }
            if s + 2 < m && can_skip(s + 2) {
                terms.push(beta[(t + 1, s + 2)]);
            }
            let merged = log_sum_exp(&terms);
            beta[(t, s)] = if merged == ninf {
                ninf
            } else {
                merged + logp[(t, ext[s])]
            };
        }
    }

    // Gradient w.r.t. raw logits: softmax(t) - gamma(t), where gamma(t, k)
    // is the posterior mass of paths emitting class k at frame t.
    let mut grad = Mat::zeros(frames, classes);
    for t in 0..frames {
        let mut occupancy = vec![ninf; classes];
        for s in 0..m {
            let joint = alpha[(t, s)] + beta[(t, s)] - logp[(t, ext[s])];
            if joint != ninf && !joint.is_nan() {
                occupancy[ext[s]] = log_sum_exp(&[occupancy[ext[s]], joint]);
            }
        }
        let probs = softmax(logits.values().row(t));
        for k in 0..classes {
            let gamma = if occupancy[k] == ninf {
                S::zero()
            } else {
                (occupancy[k] - log_prob).exp()
            };
            grad[(t, k)] = probs[k] - gamma;
        }
    }

    Ok(CtcResult {
        loss: -log_prob,
        grad_logits: grad,
    })
}

/// Collapse a raw frame path: merge consecutive repeats, then drop blanks.
fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Exhaustive-path CTC loss, used as a verification oracle for [`ctc_loss`].
/// Enumerates all `(z + 1)^T` frame paths and sums the probability of those
/// collapsing to `y`.
pub fn brute_force_ctc<S: Scalar>(logits: &LogitSeq<S>, y: &LabelSeq) -> Result<S> {
    let frames = logits.frames();
    let classes = logits.values().cols();
    let blank = logits.blank();
    let total = (classes as f64).powi(frames as i32);
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            paths: total,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let mut logp = Mat::zeros(frames, classes);
    for t in 0..frames {
        logp.row_mut(t).copy_from_slice(&log_softmax(logits.values().row(t)));
    }

    let mut acc = S::neg_infinity();
    let mut path = vec![0usize; frames];
    loop {
        if collapse(&path, blank) == y.labels() {
            let lp = path
                .iter()
                .enumerate()
                .fold(S::zero(), |s, (t, &k)| s + logp[(t, k)]);
            acc = log_sum_exp(&[acc, lp]);
        }
        // Odometer increment over the path space.
        let mut pos = 0;
        loop {
            if pos == frames {
                if acc == S::neg_infinity() {
                    return Err(Error::ImpossibleAlignment {
                        frames,
                        labels: y.len(),
                        required: y.min_frames(),
                        utterance: None,
                    });
                }
                return Ok(-acc);
            }
            path[pos] += 1;
            if path[pos] < classes {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Best-path decoding: per-frame argmax (ties go to the lowest index),
/// collapse repeats, drop blanks.
pub fn greedy_decode<S: Scalar>(logits: &LogitSeq<S>) -> LabelSeq {
    let blank = logits.blank();
    let path: Vec<usize> = (0..logits.frames())
        .map(|t| {
            let row = logits.values().row(t);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    LabelSeq(collapse(&path, blank))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_logits(rng: &mut impl Rng, frames: usize, classes: usize) -> LogitSeq<f64> {
        LogitSeq::new(Mat::from_fn(frames, classes, |_, _| rng.gen_range(-3.0..3.0)))
    }

    #[test]
    fn single_frame_single_label() {
        let logits = LogitSeq::new(Mat::<f64>::zeros(1, 2));
        let r = ctc_loss(&logits, &LabelSeq::new(vec![0])).unwrap();
        assert!((r.loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_frames_single_label() {
        // 3 of the 4 equiprobable paths collapse to [0]: (0,0), (0,blank),
        // (blank,0). Loss = -ln(3/4) = ln(4/3).
        let logits = LogitSeq::new(Mat::<f64>::zeros(2, 2));
        let r = ctc_loss(&logits, &LabelSeq::new(vec![0])).unwrap();
        assert!((r.loss - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_target_is_the_all_blank_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits = random_logits(&mut rng, 4, 3);
        let r = ctc_loss(&logits, &LabelSeq::new(vec![])).unwrap();
        let mut want = 0.0;
        for t in 0..4 {
            want -= log_softmax(logits.values().row(t))[2];
        }
        assert!((r.loss - want).abs() < 1e-12);
        let brute = brute_force_ctc(&logits, &LabelSeq::new(vec![])).unwrap();
        assert!((r.loss - brute).abs() < 1e-12);
    }

    #[test]
    fn impossible_alignment_is_an_error() {
        let logits = LogitSeq::new(Mat::<f64>::zeros(2, 3));
        // Three labels in two frames.
        assert!(matches!(
            ctc_loss(&logits, &LabelSeq::new(vec![0, 1, 0])),
            Err(Error::ImpossibleAlignment { required: 3, .. })
        ));
        // Repeated label needs a separating blank: minimum 3 frames.
        assert!(matches!(
            ctc_loss(&logits, &LabelSeq::new(vec![0, 0])),
            Err(Error::ImpossibleAlignment { required: 3, .. })
        ));
        assert!(matches!(
            brute_force_ctc(&logits, &LabelSeq::new(vec![0, 0])),
            Err(Error::ImpossibleAlignment { .. })
        ));
    }

    #[test]
    fn brute_force_guard() {
        let logits = LogitSeq::new(Mat::<f64>::zeros(30, 4));
        assert!(matches!(
            brute_force_ctc(&logits, &LabelSeq::new(vec![0])),
            Err(Error::TooLarge { .. })
        ));
    }

    fn all_label_seqs(z: usize, max_len: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for seq in &frontier {
                for l in 0..z {
                    let mut s = seq.clone();
                    s.push(l);
                    next.push(s);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    #[test]
    fn matches_brute_force_exhaustively_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for frames in 1..=5 {
            for z in 1..=2 {
                let logits = random_logits(&mut rng, frames, z + 1);
                for labels in all_label_seqs(z, frames) {
                    let y = LabelSeq::new(labels);
                    if y.min_frames() > frames {
                        continue;
                    }
                    let fast = ctc_loss(&logits, &y).unwrap();
                    let slow = brute_force_ctc(&logits, &y).unwrap();
                    assert!(
                        (fast.loss - slow).abs() < 1e-10,
                        "T={frames} z={z} y={:?}: {} vs {}",
                        y.labels(),
                        fast.loss,
                        slow
                    );
                }
            }
        }
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..200 {
            let frames = rng.gen_range(1..=7);
            let z = rng.gen_range(1..=3);
            let logits = random_logits(&mut rng, frames, z + 1);
            let max_len = frames.min(4);
            let len = rng.gen_range(0..=max_len);
            let labels: Vec<usize> = (0..len).map(|_| rng.gen_range(0..z)).collect();
            let y = LabelSeq::new(labels);
            if y.min_frames() > frames {
                continue;
            }
            let fast = ctc_loss(&logits, &y).unwrap();
            let slow = brute_force_ctc(&logits, &y).unwrap();
            assert!(
                (fast.loss - slow).abs() < 1e-10,
                "case {case}: {} vs {}",
                fast.loss,
                slow
            );
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..12 {
            let frames = rng.gen_range(2..=5);
            let z = rng.gen_range(1..=3);
            let logits = random_logits(&mut rng, frames, z + 1);
            let len = rng.gen_range(1..=frames.min(3));
            let labels: Vec<usize> = (0..len).map(|_| rng.gen_range(0..z)).collect();
            let y = LabelSeq::new(labels);
            if y.min_frames() > frames {
                continue;
            }
            let r = ctc_loss(&logits, &y).unwrap();
            let theta = logits.values().data().to_vec();
            let err = grad_check(
                |v| {
                    let l = LogitSeq::new(Mat::from_vec(frames, z + 2 - 1, v.to_vec()));
                    ctc_loss(&l, &y).unwrap().loss
                },
                &theta,
                r.grad_logits.data(),
                1e-5,
            );
            assert!(err < 1e-6, "err={err}");
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero_and_loss_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let frames = rng.gen_range(1..=6);
            let z = rng.gen_range(1..=3);
            let logits = random_logits(&mut rng, frames, z + 1);
            let len = rng.gen_range(0..=frames.min(3));
            let labels: Vec<usize> = (0..len).map(|_| rng.gen_range(0..z)).collect();
            let y = LabelSeq::new(labels);
            if y.min_frames() > frames {
                continue;
            }
            let r = ctc_loss(&logits, &y).unwrap();
            assert!(r.loss >= 0.0);
            for t in 0..frames {
                let sum: f64 = r.grad_logits.row(t).iter().sum();
                assert!(sum.abs() < 1e-10, "row sum {sum}");
            }
        }
    }

    #[test]
    fn per_frame_logit_shift_leaves_loss_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let logits = random_logits(&mut rng, 5, 4);
        let y = LabelSeq::new(vec![0, 2]);
        let base = ctc_loss(&logits, &y).unwrap().loss;
        for t in 0..5 {
            let shifted = LogitSeq::new(Mat::from_fn(5, 4, |r, c| {
                logits.values()[(r, c)] + if r == t { 7.25 } else { 0.0 }
            }));
            let loss = ctc_loss(&shifted, &y).unwrap().loss;
            assert!((loss - base).abs() < 1e-10);
        }
    }

    fn one_hot_logits(path: &[usize], classes: usize) -> LogitSeq<f64> {
        LogitSeq::new(Mat::from_fn(path.len(), classes, |t, c| {
            if path[t] == c {
                5.0
            } else {
                0.0
            }
        }))
    }

    #[test]
    fn greedy_decode_examples() {
        // blank = index 3 for z = 3.
        let b = 3;
        assert_eq!(greedy_decode(&one_hot_logits(&[b, b, b], 4)).labels(), &[] as &[usize]);
        assert_eq!(greedy_decode(&one_hot_logits(&[0, 0, b, 0], 4)).labels(), &[0, 0]);
        assert_eq!(greedy_decode(&one_hot_logits(&[0, b, b, 2, 2], 4)).labels(), &[0, 2]);
    }

    #[test]
    fn greedy_ties_break_to_the_lowest_index() {
        let logits = LogitSeq::new(Mat::<f64>::zeros(3, 4));
        // All-equal rows: argmax is class 0 everywhere, collapsing to [0].
        assert_eq!(greedy_decode(&logits).labels(), &[0]);
    }

    proptest! {
        /// Greedy output never contains the blank, and equals an independent
        /// collapse of the argmax path. Equal consecutive output labels are
        /// legal when a blank separated them in the path ([p0, blank, p0]
        /// decodes to [p0, p0]); unbroken runs always merge.
        #[test]
        fn greedy_output_matches_independent_collapse(
            seed in 0u64..1000, frames in 1usize..10, z in 1usize..5
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let logits = random_logits(&mut rng, frames, z + 1);
            let out = greedy_decode(&logits);
            for &l in out.labels() {
                prop_assert!(l < z);
            }
            let mut want = Vec::new();
            let mut prev = usize::MAX;
            for t in 0..frames {
                let row = logits.values().row(t);
                let argmax = (0..=z).fold(0, |b, k| if row[k] > row[b] { k } else { b });
                if argmax != prev && argmax != z {
                    want.push(argmax);
                }
                prev = argmax;
            }
            prop_assert_eq!(out.labels(), want.as_slice());
        }
    }
}
