//! Finite seminorm families on matrix spaces.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lie::Matrix;

/// Largest singular value.
pub fn operator_norm(m: &Matrix) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.max().max(0.0).sqrt()
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.norm()
}

pub fn max_entry_norm(m: &Matrix) -> f64 {
    m.abs().max()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Operator,
    Frobenius,
    MaxEntry,
}

impl NormKind {
    pub fn eval(self, m: &Matrix) -> f64 {
        match self {
            NormKind::Operator => operator_norm(m),
            NormKind::Frobenius => frobenius_norm(m),
            NormKind::MaxEntry => max_entry_norm(m),
        }
    }

    /// Whether `‖XY‖ ≤ ‖X‖‖Y‖` holds for every multiple `c·‖·‖` with `c ≥ 1`.
    pub fn submultiplicative(self) -> bool {
        matches!(self, NormKind::Operator | NormKind::Frobenius)
    }
}

/// A named norm `scale · kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seminorm {
    pub id: String,
    pub kind: NormKind,
    pub scale: f64,
}

impl Seminorm {
    pub fn new(id: impl Into<String>, kind: NormKind, scale: f64) -> Self {
        Seminorm {
            id: id.into(),
            kind,
            scale,
        }
    }

    pub fn eval(&self, m: &Matrix) -> f64 {
        self.scale * self.kind.eval(m)
    }

    /// The same norm scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Seminorm {
        Seminorm {
            id: format!("{}*{}", fmt_factor(factor), self.id),
            kind: self.kind,
            scale: self.scale * factor,
        }
    }
}

fn fmt_factor(f: f64) -> String {
    if f.fract() == 0.0 && f.abs() < 1e15 {
        format!("{}", f as i64)
    } else {
        format!("{f}")
    }
}

/// Ordered family of norms together with declared dominations `v ≤ w`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeminormFamily {
    norms: Vec<Seminorm>,
    dominations: Vec<(String, String)>,
}

impl SeminormFamily {
    pub fn new() -> Self {
        Self::default()
    }

    /// Operator, Frobenius and max-entry norms with the standard dominations
    /// `max ≤ op ≤ fro`.
    pub fn standard() -> Self {
        let mut fam = Self::new();
        fam.push(Seminorm::new("op", NormKind::Operator, 1.0));
        fam.push(Seminorm::new("fro", NormKind::Frobenius, 1.0));
        fam.push(Seminorm::new("max", NormKind::MaxEntry, 1.0));
        fam.declare("max", "op").expect("ids exist");
        fam.declare("op", "fro").expect("ids exist");
        fam
    }

    pub fn push(&mut self, norm: Seminorm) {
        if let Some(slot) = self.norms.iter_mut().find(|n| n.id == norm.id) {
            *slot = norm;
        } else {
            self.norms.push(norm);
        }
    }

    pub fn declare(&mut self, smaller: &str, larger: &str) -> Result<()> {
        self.get(smaller)?;
        self.get(larger)?;
        self.dominations.push((smaller.into(), larger.into()));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&Seminorm> {
        self.norms
            .iter()
            .find(|n| n.id == id)
            .ok_or_else(|| LabError::Lookup(format!("seminorm '{id}'")))
    }

    pub fn norms(&self) -> &[Seminorm] {
        &self.norms
    }

    pub fn dominations(&self) -> &[(String, String)] {
        &self.dominations
    }

    pub fn eval(&self, id: &str, m: &Matrix) -> Result<f64> {
        Ok(self.get(id)?.eval(m))
    }

    /// Ensures `scale · norm(id)` is present and returns its id.
    pub fn with_multiple(&mut self, id: &str, factor: f64) -> Result<String> {
        let scaled = self.get(id)?.scaled(factor);
        let new_id = scaled.id.clone();
        if factor >= 1.0 {
            self.push(scaled);
            self.dominations.push((id.into(), new_id.clone()));
        } else {
            self.push(scaled);
            self.dominations.push((new_id.clone(), id.into()));
        }
        Ok(new_id)
    }

    /// Largest violation of homogeneity, the triangle inequality and the
    /// declared dominations over the given sample pairs.
    pub fn sample_violation(&self, samples: &[(Matrix, Matrix, f64)]) -> f64 {
        let mut worst: f64 = 0.0;
        for (x, y, lambda) in samples {
            for n in &self.norms {
                let nx = n.eval(x);
                let ny = n.eval(y);
                let scale = nx.max(ny).max(1.0);
                worst = worst.max((n.eval(&(x * *lambda)) - lambda.abs() * nx).abs() / scale);
                worst = worst.max((n.eval(&(x + y)) - nx - ny).max(0.0) / scale);
            }
            for (a, b) in &self.dominations {
                let (na, nb) = (self.get(a).unwrap(), self.get(b).unwrap());
                worst = worst.max((na.eval(x) - nb.eval(x)).max(0.0) / na.eval(x).max(1.0));
            }
        }
        worst
    }
}
