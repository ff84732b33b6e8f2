use crate::error::{Error, Result};

/// Dense row-major H×W grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Binary intima–media mask.
pub type WallMask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                found: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Copy of the rectangle `[y0, y0+h) × [x0, x0+w)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self>
    where
        T: Clone,
    {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::invalid(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(Grid::from_fn(h, w, |y, x| self.get(y0 + y, x0 + x).clone()))
    }

    pub fn ensure_same_shape<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }
}

impl Grid<bool> {
    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// Predicted per-pixel probability map; every value lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap(Grid<f64>);

impl ProbMap {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self(grid))
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Grid::from_vec(height, width, data)?)
    }

    pub fn from_mask(mask: &WallMask) -> Self {
        Self(mask.map(|&b| if b { 1.0 } else { 0.0 }))
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn into_grid(self) -> Grid<f64> {
        self.0
    }

    /// Binarize with `p >= threshold`.
    pub fn threshold(&self, threshold: f64) -> WallMask {
        self.0.map(|&p| p >= threshold)
    }
}

pub(crate) fn mask_as_f64(mask: &WallMask) -> Vec<f64> {
    mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}
