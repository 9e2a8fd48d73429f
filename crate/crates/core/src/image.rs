use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("image shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch {
        a: (usize, usize, usize),
        b: (usize, usize, usize),
    },
    #[error("buffer length {len} does not match {width}x{height}x{channels}")]
    BufferLength {
        len: usize,
        width: usize,
        height: usize,
        channels: usize,
    },
}

/// Row-major, channel-interleaved float image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, value: &[f64]) -> Self {
        let channels = value.len();
        let mut data = Vec::with_capacity(width * height * channels);
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if data.len() != width * height * channels {
            return Err(ImageError::BufferLength {
                len: data.len(),
                width,
                height,
                channels,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<(), ImageError> {
        if self.shape() != other.shape() {
            return Err(ImageError::ShapeMismatch {
                a: self.shape(),
                b: other.shape(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    /// Single channel as a contiguous plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    /// Rounds to 8 bits per channel and back, as storing to PNG would.
    pub fn quantized_u8(&self) -> Image {
        Image {
            data: self.data.iter().map(|&v| to_u8(v) as f64 / 255.0).collect(),
            ..*self
        }
    }
}

#[inline]
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
