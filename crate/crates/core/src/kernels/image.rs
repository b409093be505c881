use super::KernelError;

pub const WIDTH: usize = 32;
pub const HEIGHT: usize = 32;
pub const PIXELS: usize = WIDTH * HEIGHT;
pub const BINS: usize = 256;

/// 32x32 grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(pixels: Vec<u8>) -> Result<Self, KernelError> {
        if pixels.len() != PIXELS {
            return Err(KernelError::Shape {
                expected: PIXELS,
                got: pixels.len(),
            });
        }
        Ok(Self { pixels })
    }

    pub fn filled(v: u8) -> Self {
        Self {
            pixels: vec![v; PIXELS],
        }
    }

    /// One pixel per word; every word must be in [0, 255].
    pub fn from_words(words: &[u64]) -> Result<Self, KernelError> {
        let pixels = words
            .iter()
            .map(|&w| {
                u8::try_from(w)
                    .map_err(|_| KernelError::Domain(format!("pixel word {w} exceeds 255")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(pixels)
    }

    pub fn to_words(&self) -> Vec<u64> {
        self.pixels.iter().map(|&p| p as u64).collect()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * WIDTH + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * WIDTH + x] = v;
    }
}

/// 3x3 median with replicated borders.
pub fn noise_filter(img: &Image) -> Image {
    let mut out = vec![0u8; PIXELS];
    let mut win = [0u8; 9];
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let mut k = 0;
            for dy in [-1isize, 0, 1] {
                for dx in [-1isize, 0, 1] {
                    let sx = (x as isize + dx).clamp(0, WIDTH as isize - 1) as usize;
                    let sy = (y as isize + dy).clamp(0, HEIGHT as isize - 1) as usize;
                    win[k] = img.get(sx, sy);
                    k += 1;
                }
            }
            win.sort_unstable();
            out[y * WIDTH + x] = win[4];
        }
    }
    Image { pixels: out }
}

pub fn histogram(img: &Image) -> [u32; BINS] {
    let mut bins = [0u32; BINS];
    for &p in &img.pixels {
        bins[p as usize] += 1;
    }
    bins
}

/// CDF remap `round(255 * (cdf(v) - cdf_min) / (N - cdf_min))`, N = 1024.
/// A single-valued image has `cdf_min == N` and maps everything to 255.
pub fn hist_equalize(img: &Image, hist: &[u32; BINS]) -> Image {
    let n = PIXELS as u64;
    let mut cdf = [0u64; BINS];
    let mut acc = 0u64;
    for (v, &h) in hist.iter().enumerate() {
        acc += h as u64;
        cdf[v] = acc;
    }
    let cdf_min = hist
        .iter()
        .position(|&h| h > 0)
        .map(|v| cdf[v])
        .unwrap_or(0);
    let den = n.saturating_sub(cdf_min);
    let lut: Vec<u8> = cdf
        .iter()
        .map(|&c| {
            if den == 0 {
                return 255;
            }
            let num = 255 * c.saturating_sub(cdf_min);
            ((2 * num + den) / (2 * den)).min(255) as u8
        })
        .collect();
    Image {
        pixels: img.pixels.iter().map(|&p| lut[p as usize]).collect(),
    }
}

pub fn hist_to_words(hist: &[u32; BINS]) -> Vec<u64> {
    hist.iter().map(|&h| h as u64).collect()
}

pub fn hist_from_words(words: &[u64]) -> Result<[u32; BINS], KernelError> {
    if words.len() != BINS {
        return Err(KernelError::Shape {
            expected: BINS,
            got: words.len(),
        });
    }
    let mut h = [0u32; BINS];
    for (dst, &w) in h.iter_mut().zip(words) {
        *dst = u32::try_from(w)
            .map_err(|_| KernelError::Domain(format!("histogram bin {w} out of range")))?;
    }
    Ok(h)
}

/// Filter, histogram and equalization composed in one pass.
pub fn night_vision(img: &Image) -> Image {
    let filtered = noise_filter(img);
    let hist = histogram(&filtered);
    hist_equalize(&filtered, &hist)
}
