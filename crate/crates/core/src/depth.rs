//! Depth maps and RGB image buffers.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::kernels;

/// (H×W) positive depth values in meters plus a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub mask: Vec<bool>,
}

impl DepthMap {
    /// All-valid map from row-major values.
    pub fn from_data(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width);
        DepthMap {
            height,
            width,
            data,
            mask: vec![true; height * width],
        }
    }

    pub fn with_mask(height: usize, width: usize, data: Vec<f32>, mask: Vec<bool>) -> Self {
        assert_eq!(data.len(), height * width);
        assert_eq!(mask.len(), height * width);
        DepthMap {
            height,
            width,
            data,
            mask,
        }
    }

    /// Fully invalid map (reprojection targets start empty).
    pub fn invalid(height: usize, width: usize) -> Self {
        DepthMap {
            height,
            width,
            data: vec![0.0; height * width],
            mask: vec![false; height * width],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn valid_at(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Planar RGB image, channels-first `[3×H×W]`, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ImageBuf {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), 3 * height * width);
        ImageBuf {
            height,
            width,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        ImageBuf {
            height,
            width,
            data: vec![0.0; 3 * height * width],
        }
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let plane = self.height * self.width;
        let i = row * self.width + col;
        [self.data[i], self.data[plane + i], self.data[2 * plane + i]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f32; 3]) {
        let plane = self.height * self.width;
        let i = row * self.width + col;
        self.data[i] = rgb[0];
        self.data[plane + i] = rgb[1];
        self.data[2 * plane + i] = rgb[2];
    }

    /// Bilinear resize (align-corners=false); identity when sizes match.
    pub fn resized(&self, height: usize, width: usize) -> ImageBuf {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let mut out = vec![0.0f32; 3 * height * width];
        kernels::bilinear_resize(&self.data, 3, self.height, self.width, height, width, &mut out);
        ImageBuf {
            height,
            width,
            data: out,
        }
    }
}
