use crate::error::{Error, Result};

/// Where a point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Real,
    /// Produced by the model fitted at generation `j - 1`, i.e. part of `S_j`.
    Synthetic(usize),
}

/// A labeled point. Scalar labels are stored as a one-element vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub provenance: Provenance,
}

impl Point {
    pub fn scalar(x: Vec<f64>, y: f64, provenance: Provenance) -> Self {
        Point {
            x,
            y: vec![y],
            provenance,
        }
    }

    pub fn vector(x: Vec<f64>, y: Vec<f64>, provenance: Provenance) -> Self {
        Point { x, y, provenance }
    }

    /// First label coordinate.
    pub fn label(&self) -> f64 {
        self.y[0]
    }
}

/// An ordered collection of labeled points sharing one input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<Point>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Dataset {
            dim,
            points: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, capacity: usize) -> Self {
        Dataset {
            dim,
            points: Vec::with_capacity(capacity),
        }
    }

    pub fn from_points(dim: usize, points: Vec<Point>) -> Result<Self> {
        let mut ds = Dataset::with_capacity(dim, points.len());
        for p in points {
            ds.push(p)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, point: Point) -> Result<()> {
        if point.x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: point.x.len(),
            });
        }
        if point.y.is_empty() {
            return Err(Error::invalid("label", "must have at least one coordinate"));
        }
        if !point.x.iter().chain(&point.y).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset point"));
        }
        self.points.push(point);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn get(&self, index: usize) -> Option<&Point> {
        self.points.get(index)
    }

    /// Replaces the point at `index`, returning the old one.
    pub fn replace(&mut self, index: usize, point: Point) -> Result<Point> {
        if point.x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: point.x.len(),
            });
        }
        let slot = self
            .points
            .get_mut(index)
            .ok_or(Error::InsufficientPoints {
                requested: index + 1,
                available: 0,
            })?;
        Ok(std::mem::replace(slot, point))
    }

    /// Points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
        }
    }

    pub fn extend_from(&mut self, other: &Dataset) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        self.points.extend(other.points.iter().cloned());
        Ok(())
    }

    pub fn real_count(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.provenance == Provenance::Real)
            .count()
    }

    pub fn synthetic_count(&self) -> usize {
        self.len() - self.real_count()
    }

    /// Order-sensitive 64-bit digest of every coordinate bit pattern and tag.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over little-endian words.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |w: u64| {
            for b in w.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.dim as u64);
        feed(self.points.len() as u64);
        for p in &self.points {
            for v in p.x.iter().chain(&p.y) {
                feed(v.to_bits());
            }
            feed(match p.provenance {
                Provenance::Real => u64::MAX,
                Provenance::Synthetic(j) => j as u64,
            });
        }
        h
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}
