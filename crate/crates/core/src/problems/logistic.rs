use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;

use super::dataset::{LabeledDataset, Row};
use super::{FiniteSumProblem, ProblemMetadata};
use crate::rng::{Purpose, SeedStream};
use crate::{vector, Error, Result};

/// Largest parameter dimension for which dense Hessians are offered.
pub const MAX_HESSIAN_DIM: usize = 4096;

/// How samples are grouped into components.
#[derive(Debug, Clone, PartialEq)]
pub enum Grouping {
    /// One component per sample.
    PerSample,
    /// Consecutive chunks of the given size; the last may be shorter.
    Chunks(usize),
    /// Explicit sample-index lists.
    Explicit(Vec<Vec<usize>>),
}

/// Multinomial logistic regression with an L2 term.
///
/// Parameters are a `classes × features` weight matrix flattened row-major;
/// component `i` averages the cross-entropy over its sample group.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    data: Arc<LabeledDataset>,
    groups: Vec<Vec<usize>>,
    lambda: f64,
    classes: usize,
    feat: usize,
    metadata: ProblemMetadata,
}

pub fn make_logistic(dataset: Arc<LabeledDataset>, lambda: f64, grouping: Grouping) -> Result<LogisticProblem> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    if dataset.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let m = dataset.len();
    let groups = match grouping {
        Grouping::PerSample => (0..m).map(|i| vec![i]).collect(),
        Grouping::Chunks(0) => return Err(Error::invalid("chunk size must be positive")),
        Grouping::Chunks(k) => (0..m).collect::<Vec<_>>().chunks(k).map(|c| c.to_vec()).collect(),
        Grouping::Explicit(g) => g,
    };
    if groups.is_empty() {
        return Err(Error::invalid("grouping produced no components"));
    }
    for (gi, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::invalid(format!("group {gi} is empty")));
        }
        if let Some(&bad) = g.iter().find(|&&s| s >= m) {
            return Err(Error::invalid(format!("group {gi} references sample {bad} of {m}")));
        }
    }
    let max_row = (0..m).map(|s| dataset.features.row(s).norm_sq()).fold(0.0_f64, f64::max);
    let metadata = ProblemMetadata {
        // Softmax curvature is bounded by ½ I per sample.
        lipschitz: Some(0.5 * max_row + lambda),
        mu: if lambda > 0.0 { Some(lambda) } else { None },
        ..Default::default()
    };
    Ok(LogisticProblem {
        classes: dataset.class_count,
        feat: dataset.feature_dim(),
        data: dataset,
        groups,
        lambda,
        metadata,
    })
}

/// Groups of single-class samples: for each class in order,
/// `groups_per_class` groups of `samples_per_group` distinct samples drawn
/// from that class.
pub fn class_groups(
    dataset: &LabeledDataset,
    groups_per_class: usize,
    samples_per_group: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let members = dataset.class_members();
    let stream = SeedStream::new(seed);
    let mut out = Vec::with_capacity(members.len() * groups_per_class);
    for (c, pool) in members.iter().enumerate() {
        if pool.len() < samples_per_group {
            return Err(Error::invalid(format!(
                "class {c} has {} samples, need {samples_per_group} per group",
                pool.len()
            )));
        }
        for g in 0..groups_per_class {
            let mut rng = stream.rng2(Purpose::Generator, c as u64, g as u64);
            let mut pick: Vec<usize> = pool.choose_multiple(&mut rng, samples_per_group).copied().collect();
            pick.sort_unstable();
            out.push(pick);
        }
    }
    Ok(out)
}

impl LogisticProblem {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feat
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn dataset(&self) -> &LabeledDataset {
        &self.data
    }

    fn logits(&self, row: &Row<'_>, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = row.dot(&x[c * self.feat..(c + 1) * self.feat]);
        }
    }

    /// Softmax in place; returns log-sum-exp of the input.
    fn softmax(z: &mut [f64]) -> f64 {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in z.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in z.iter_mut() {
            *v /= s;
        }
        m + s.ln()
    }

    fn group_hvp(&self, i: usize, x: &[f64], v: &[f64], out: &mut [f64]) {
        let k = self.classes;
        let scale = 1.0 / self.groups[i].len() as f64;
        let mut p = vec![0.0; k];
        let mut u = vec![0.0; k];
        for &s in &self.groups[i] {
            let row = self.data.features.row(s);
            self.logits(&row, x, &mut p);
            Self::softmax(&mut p);
            self.logits(&row, v, &mut u);
            let pu = vector::dot(&p, &u);
            for c in 0..k {
                let coef = scale * p[c] * (u[c] - pu);
                row.axpy_into(coef, &mut out[c * self.feat..(c + 1) * self.feat]);
            }
        }
        vector::axpy(self.lambda, v, out);
    }
}

impl FiniteSumProblem for LogisticProblem {
    fn num_components(&self) -> usize {
        self.groups.len()
    }

    fn dim(&self) -> usize {
        self.classes * self.feat
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let group = &self.groups[i];
        let scale = 1.0 / group.len() as f64;
        let mut p = vec![0.0; self.classes];
        for &s in group {
            let row = self.data.features.row(s);
            self.logits(&row, x, &mut p);
            Self::softmax(&mut p);
            p[self.data.labels[s]] -= 1.0;
            for (c, pc) in p.iter().enumerate() {
                row.axpy_into(scale * pc, &mut out[c * self.feat..(c + 1) * self.feat]);
            }
        }
        vector::axpy(self.lambda, x, out);
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let group = &self.groups[i];
        let mut z = vec![0.0; self.classes];
        let mut loss = 0.0;
        for &s in group {
            let row = self.data.features.row(s);
            self.logits(&row, x, &mut z);
            let zy = z[self.data.labels[s]];
            loss += Self::softmax(&mut z) - zy;
        }
        loss / group.len() as f64 + 0.5 * self.lambda * vector::norm_sq(x)
    }

    fn has_hessian(&self) -> bool {
        self.dim() <= MAX_HESSIAN_DIM
    }

    fn component_hessian(&self, i: usize, x: &[f64]) -> Option<DMatrix<f64>> {
        if !self.has_hessian() {
            return None;
        }
        let (k, f, d) = (self.classes, self.feat, self.dim());
        let group = &self.groups[i];
        let scale = 1.0 / group.len() as f64;
        let mut h = DMatrix::zeros(d, d);
        let mut p = vec![0.0; k];
        for &s in group {
            let row = self.data.features.row(s);
            let phi = row.to_dense(f);
            self.logits(&row, x, &mut p);
            Self::softmax(&mut p);
            for a in 0..k {
                for b in 0..k {
                    let w = scale * (if a == b { p[a] } else { 0.0 } - p[a] * p[b]);
                    if w == 0.0 {
                        continue;
                    }
                    for r in 0..f {
                        if phi[r] == 0.0 {
                            continue;
                        }
                        for c in 0..f {
                            h[(a * f + r, b * f + c)] += w * phi[r] * phi[c];
                        }
                    }
                }
            }
        }
        for j in 0..d {
            h[(j, j)] += self.lambda;
        }
        Some(h)
    }

    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let n = self.num_components();
        let parts = crate::par::map_range(n, |i| {
            let mut out = vec![0.0; self.dim()];
            self.group_hvp(i, x, v, &mut out);
            out
        });
        Some(vector::mean_of(&parts, self.dim()))
    }

    fn metadata(&self) -> &ProblemMetadata {
        &self.metadata
    }

    fn accuracy(&self, x: &[f64]) -> Option<f64> {
        let mut z = vec![0.0; self.classes];
        let mut hits = 0usize;
        let mut total = 0usize;
        for g in &self.groups {
            for &s in g {
                self.logits(&self.data.features.row(s), x, &mut z);
                let arg = z
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                    .0;
                hits += usize::from(arg == self.data.labels[s]);
                total += 1;
            }
        }
        Some(hits as f64 / total as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::dataset::{synthetic_classification, Features, SyntheticClassSpec};
    use crate::problems::full_hessian;

    fn small() -> Arc<LabeledDataset> {
        Arc::new(
            synthetic_classification(&SyntheticClassSpec {
                classes: 3,
                samples_per_class: 6,
                features: 4,
                separation: 1.0,
                noise: 0.7,
                bias: true,
                seed: 5,
            })
            .unwrap(),
        )
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let f = Features::Dense { rows: 1, cols: 2, data: vec![0.3, -1.2] };
        let ds = Arc::new(LabeledDataset::new(f, vec![1], 2).unwrap());
        let p = make_logistic(ds, 0.0, Grouping::PerSample).unwrap();
        let x = vec![0.0; 4];
        assert!((p.component_value(0, &x) - std::f64::consts::LN_2).abs() < 1e-15);
        // gradient rows are (½ − 1{c=y}) φ
        let g = p.component_grad(0, &x);
        assert!((g[0] - 0.15).abs() < 1e-15 && (g[2] + 0.15).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let ds = small();
        let p = make_logistic(ds, 0.0, Grouping::Chunks(4)).unwrap();
        let d = p.dim();
        let x: Vec<f64> = (0..d).map(|k| ((k * 7 % 11) as f64 - 5.0) * 0.1).collect();
        for i in 0..p.num_components() {
            let g = p.component_grad(i, &x);
            let h = 1e-6;
            let fd: Vec<f64> = (0..d)
                .map(|k| {
                    let mut a = x.clone();
                    let mut b = x.clone();
                    a[k] += h;
                    b[k] -= h;
                    (p.component_value(i, &a) - p.component_value(i, &b)) / (2.0 * h)
                })
                .collect();
            assert!(vector::rel_err(&g, &fd) <= 1e-6, "component {i}");
        }
    }

    #[test]
    fn hessian_and_hvp_agree() {
        let p = make_logistic(small(), 0.01, Grouping::Chunks(3)).unwrap();
        let d = p.dim();
        let x: Vec<f64> = (0..d).map(|k| (k as f64 * 0.37).sin() * 0.2).collect();
        let v: Vec<f64> = (0..d).map(|k| (k as f64 * 1.3).cos()).collect();
        let dense = full_hessian(&p, &x).unwrap() * nalgebra::DVector::from_column_slice(&v);
        let hv = p.hessian_vector(&x, &v).unwrap();
        assert!(vector::rel_err(&hv, dense.as_slice()) < 1e-12);
    }

    #[test]
    fn empty_group_rejected() {
        assert!(make_logistic(small(), 0.0, Grouping::Explicit(vec![vec![0], vec![]])).is_err());
        assert!(make_logistic(small(), -1.0, Grouping::PerSample).is_err());
    }

    #[test]
    fn class_groups_are_single_class() {
        let ds = small();
        let groups = class_groups(&ds, 2, 4, 9).unwrap();
        assert_eq!(groups.len(), 6);
        for (gi, g) in groups.iter().enumerate() {
            assert_eq!(g.len(), 4);
            assert!(g.iter().all(|&s| ds.labels[s] == gi / 2));
        }
        assert!(class_groups(&ds, 1, 7, 0).is_err());
    }
}
