use crate::error::{Error, Result};
use crate::ndcore::{Matrix, RngState};

/// Remaining cycles at each cycle of a run-to-failure trajectory, capped.
pub fn assign_rul(len: usize, cap: f64) -> Vec<f64> {
    (1..=len).map(|t| ((len - t) as f64).min(cap)).collect()
}

/// Position of one window inside its trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpan {
    /// One-based cycle the window ends at.
    pub end: usize,
    /// Leading cycles filled by repeating the first cycle.
    pub padding: usize,
}

/// Sliding windows of length `t` over a trajectory of `len` cycles, ending
/// at the last cycle and stepping back by `stride`. A trajectory shorter than
/// `t` yields one left-padded window.
pub fn window_spans(len: usize, t: usize, stride: usize) -> Vec<WindowSpan> {
    assert!(t >= 1 && stride >= 1, "window length and stride must be positive");
    if len == 0 {
        return Vec::new();
    }
    if len < t {
        return vec![WindowSpan {
            end: len,
            padding: t - len,
        }];
    }
    let mut ends: Vec<usize> = (t..=len).rev().step_by(stride).collect();
    ends.reverse();
    ends.into_iter().map(|end| WindowSpan { end, padding: 0 }).collect()
}

/// Cycle rows of a window, time-ordered, with first-cycle padding applied.
pub fn window_rows<'a, R>(rows: &'a [R], span: WindowSpan, t: usize) -> impl Iterator<Item = &'a R> {
    let start = span.end + span.padding - t;
    (0..t).map(move |i| {
        let idx = (start + i).saturating_sub(span.padding);
        &rows[idx]
    })
}

/// Fixed-length windows stored contiguously as `n × steps × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub steps: usize,
    pub width: usize,
    pub engine_ids: Vec<u32>,
    pub data: Vec<f64>,
    /// RUL at each window's final cycle, when known.
    pub labels: Option<Vec<f64>>,
}

impl WindowSet {
    pub fn empty(steps: usize, width: usize, labeled: bool) -> Self {
        Self {
            steps,
            width,
            engine_ids: Vec::new(),
            data: Vec::new(),
            labels: labeled.then(Vec::new),
        }
    }

    pub fn len(&self) -> usize {
        self.engine_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.engine_ids.is_empty()
    }

    pub fn window(&self, i: usize) -> &[f64] {
        let n = self.steps * self.width;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> Option<f64> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn labels(&self) -> Result<&[f64]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Data("window set carries no labels".into()))
    }

    pub fn push(&mut self, engine_id: u32, rows: impl IntoIterator<Item = impl AsRef<[f64]>>, label: Option<f64>) {
        let before = self.data.len();
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), self.width, "window row width");
            self.data.extend_from_slice(r);
        }
        assert_eq!(self.data.len() - before, self.steps * self.width, "window length");
        self.engine_ids.push(engine_id);
        match (&mut self.labels, label) {
            (Some(l), Some(y)) => l.push(y),
            (None, None) => {}
            _ => panic!("label presence must match the window set"),
        }
    }

    /// Concatenates sets of equal geometry; labels survive only if every
    /// part has them.
    pub fn concat(parts: &[&WindowSet]) -> Result<WindowSet> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero window sets"))?;
        let labeled = parts.iter().all(|p| p.labels.is_some());
        let mut out = WindowSet::empty(first.steps, first.width, labeled);
        for p in parts {
            if (p.steps, p.width) != (first.steps, first.width) {
                return Err(Error::shape(
                    "window concat",
                    (first.steps, first.width),
                    (p.steps, p.width),
                ));
            }
            out.engine_ids.extend_from_slice(&p.engine_ids);
            out.data.extend_from_slice(&p.data);
            if let (Some(l), Some(pl)) = (&mut out.labels, &p.labels) {
                l.extend_from_slice(pl);
            }
        }
        Ok(out)
    }

    /// Copy with labels replaced.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<WindowSet> {
        if labels.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} windows",
                labels.len(),
                self.len()
            )));
        }
        Ok(WindowSet {
            labels: Some(labels),
            ..self.clone()
        })
    }

    pub fn select(&self, indices: &[usize]) -> WindowSet {
        let mut out = WindowSet::empty(self.steps, self.width, self.labels.is_some());
        for &i in indices {
            out.engine_ids.push(self.engine_ids[i]);
            out.data.extend_from_slice(self.window(i));
            if let (Some(l), Some(src)) = (&mut out.labels, &self.labels) {
                l.push(src[i]);
            }
        }
        out
    }

    /// Windows belonging to engines for which `keep` holds.
    pub fn filter_engines(&self, keep: impl Fn(u32) -> bool) -> WindowSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.engine_ids[i])).collect();
        self.select(&idx)
    }

    /// Time-major batch: `steps` matrices of shape `width × indices.len()`.
    pub fn batch(&self, indices: &[usize]) -> Vec<Matrix> {
        let b = indices.len();
        let mut out: Vec<Vec<f64>> = vec![vec![0.0; self.width * b]; self.steps];
        for (col, &i) in indices.iter().enumerate() {
            let w = self.window(i);
            for (t, step) in out.iter_mut().enumerate() {
                for f in 0..self.width {
                    step[f * b + col] = w[t * self.width + f];
                }
            }
        }
        out.into_iter()
            .map(|d| Matrix::new(self.width, b, d).expect("batch layout"))
            .collect()
    }

    /// Row vector `1 × indices.len()` of labels.
    pub fn label_batch(&self, indices: &[usize]) -> Result<Matrix> {
        let l = self.labels()?;
        Matrix::new(1, indices.len(), indices.iter().map(|&i| l[i]).collect())
    }

    /// Builds a set from time-major batches (inverse of [`batch`](Self::batch)).
    pub fn from_batch(seq: &[Matrix], engine_ids: Vec<u32>, labels: Option<Vec<f64>>) -> Result<WindowSet> {
        let steps = seq.len();
        let first = seq.first().ok_or_else(|| Error::invalid("empty sequence"))?;
        let (width, b) = first.shape();
        if engine_ids.len() != b {
            return Err(Error::invalid(format!("{} ids for {b} windows", engine_ids.len())));
        }
        let mut data = vec![0.0; b * steps * width];
        for (t, m) in seq.iter().enumerate() {
            if m.shape() != (width, b) {
                return Err(Error::shape("from_batch", (width, b), m.shape()));
            }
            for f in 0..width {
                for col in 0..b {
                    data[col * steps * width + t * width + f] = m.get(f, col);
                }
            }
        }
        Ok(WindowSet {
            steps,
            width,
            engine_ids,
            data,
            labels,
        })
    }
}

/// Engine-wise label mask: `labeled[i]` refers to the i-th training engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub labeled: Vec<bool>,
}

impl LabelMask {
    pub fn full(n: usize) -> Self {
        Self { labeled: vec![true; n] }
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled.iter().filter(|&&b| b).count()
    }
}

/// Keeps labels for `⌈f·n⌉` engines drawn uniformly without replacement.
pub fn drop_labels(n_engines: usize, fraction: f64, rng: &mut RngState) -> Result<LabelMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "label fraction must be in (0, 1], got {fraction}"
        )));
    }
    // guard against 0.3 * 100 = 30.000000000000004 rounding up
    let k = ((fraction * n_engines as f64) - 1e-9).ceil().max(0.0) as usize;
    if k == 0 {
        return Err(Error::Data(format!(
            "fraction {fraction} of {n_engines} engines leaves no labeled engine"
        )));
    }
    let mut order: Vec<usize> = (0..n_engines).collect();
    rng.shuffle(&mut order);
    let mut labeled = vec![false; n_engines];
    for &i in &order[..k.min(n_engines)] {
        labeled[i] = true;
    }
    Ok(LabelMask { labeled })
}

/// Engine-wise holdout: `⌊fraction · engines⌋` engines drawn with `rng`
/// form the second part. No holdout when that count is zero or would leave
/// nothing to train on.
pub fn holdout_engines(set: &WindowSet, fraction: f64, rng: &mut RngState) -> (WindowSet, Option<WindowSet>) {
    let mut ids: Vec<u32> = Vec::new();
    for &id in &set.engine_ids {
        if ids.last() != Some(&id) && !ids.contains(&id) {
            ids.push(id);
        }
    }
    let k = (fraction.max(0.0) * ids.len() as f64 + 1e-9).floor() as usize;
    if k == 0 || k >= ids.len() {
        return (set.clone(), None);
    }
    rng.shuffle(&mut ids);
    let held = &ids[..k];
    (
        set.filter_engines(|id| !held.contains(&id)),
        Some(set.filter_engines(|id| held.contains(&id))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rul_examples() {
        let l = assign_rul(200, 140.0);
        assert_eq!(l[199], 0.0);
        assert_eq!(l[9], 140.0);
        assert_eq!(assign_rul(100, 140.0)[59], 40.0);
    }

    #[test]
    fn spans_cover_the_tail() {
        let s = window_spans(5, 3, 1);
        assert_eq!(s.iter().map(|w| w.end).collect::<Vec<_>>(), vec![3, 4, 5]);
        assert!(s.iter().all(|w| w.padding == 0));
        assert_eq!(window_spans(2, 3, 1), vec![WindowSpan { end: 2, padding: 1 }]);
        let strided = window_spans(10, 3, 4);
        assert_eq!(strided.iter().map(|w| w.end).collect::<Vec<_>>(), vec![6, 10]);
    }

    #[test]
    fn padded_rows_repeat_the_first_cycle() {
        let rows = [[1.0], [2.0]];
        let span = window_spans(2, 4, 1)[0];
        let got: Vec<f64> = window_rows(&rows, span, 4).map(|r| r[0]).collect();
        assert_eq!(got, vec![1.0, 1.0, 1.0, 2.0]);
        let rows = [[1.0], [2.0], [3.0], [4.0]];
        let got: Vec<f64> = window_rows(&rows, WindowSpan { end: 3, padding: 0 }, 2)
            .map(|r| r[0])
            .collect();
        assert_eq!(got, vec![2.0, 3.0]);
    }

    #[test]
    fn batch_round_trips() {
        let mut set = WindowSet::empty(2, 3, true);
        set.push(1, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], Some(7.0));
        set.push(2, [[8.0, 9.0, 10.0], [11.0, 12.0, 13.0]], Some(14.0));
        let b = set.batch(&[1, 0]);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].shape(), (3, 2));
        assert_eq!(b[0].col_to_vec(0), vec![8.0, 9.0, 10.0]);
        assert_eq!(b[1].col_to_vec(1), vec![4.0, 5.0, 6.0]);
        assert_eq!(set.label_batch(&[1, 0]).unwrap().data(), &[14.0, 7.0]);
        let back = WindowSet::from_batch(&set.batch(&[0, 1]), vec![1, 2], Some(vec![7.0, 14.0])).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn mask_sizes() {
        let mut rng = RngState::new(3);
        assert_eq!(drop_labels(100, 1.0, &mut rng).unwrap().n_labeled(), 100);
        assert_eq!(drop_labels(100, 0.01, &mut rng).unwrap().n_labeled(), 1);
        assert_eq!(drop_labels(100, 0.3, &mut rng).unwrap().n_labeled(), 30);
        assert_eq!(drop_labels(90, 0.05, &mut rng).unwrap().n_labeled(), 5);
        assert!(drop_labels(100, 0.0, &mut rng).is_err());
        assert!(drop_labels(0, 0.5, &mut rng).is_err());
        assert!(drop_labels(10, 1.5, &mut rng).is_err());
    }

    #[test]
    fn holdout_is_engine_wise() {
        let mut set = WindowSet::empty(1, 1, false);
        for id in 1..=20u32 {
            for k in 0..3 {
                set.push(id, [[k as f64]], None);
            }
        }
        let (train, val) = holdout_engines(&set, 0.1, &mut RngState::new(1));
        let val = val.unwrap();
        assert_eq!(val.len(), 6);
        assert_eq!(train.len(), 54);
        assert!(val.engine_ids.iter().all(|id| !train.engine_ids.contains(id)));
        let (_, none) = holdout_engines(&set.filter_engines(|id| id <= 5), 0.1, &mut RngState::new(1));
        assert!(none.is_none());
    }

    #[test]
    fn mask_is_seeded() {
        let a = drop_labels(50, 0.2, &mut RngState::new(9)).unwrap();
        let b = drop_labels(50, 0.2, &mut RngState::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
