use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Interleaved `H×W×3` image; values are divided by `max_value` on preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
    max_value: f64,
}

impl RawImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>, max_value: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Input(format!("zero-sized image {height}×{width}")));
        }
        if data.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "{height}×{width}×3 image needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        if !(max_value > 0.0) {
            return Err(Error::Input("image max value must be positive".into()));
        }
        Ok(Self {
            height,
            width,
            data,
            max_value,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn px(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }
}

/// Indices `floor(i·L/k)` for `i = 0..k`.
pub fn sample_indices(len: usize, k: usize) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::Input("cannot sample frames from an empty video".into()));
    }
    if k == 0 {
        return Err(Error::Input("frame count must be at least 1".into()));
    }
    Ok((0..k).map(|i| i * len / k).collect())
}

pub fn sample_frames<T: Clone>(video: &[T], k: usize) -> Result<Vec<T>> {
    Ok(sample_indices(video.len(), k)?
        .into_iter()
        .map(|i| video[i].clone())
        .collect())
}

/// Source coordinate for destination index `d` under half-pixel alignment.
fn source_coord(d: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let s = ((d as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, s - lo as f64)
}

/// Bilinear resize to `target`, channel-first, scaled into `[0, 1]`.
pub fn preprocess_frame(img: &RawImage, target: (usize, usize)) -> Result<Tensor> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::Input(format!("zero-sized target {th}×{tw}")));
    }
    let ys: Vec<_> = (0..th).map(|y| source_coord(y, img.height, th)).collect();
    let xs: Vec<_> = (0..tw).map(|x| source_coord(x, img.width, tw)).collect();
    let mut out = Vec::with_capacity(3 * th * tw);
    for c in 0..3 {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = img.px(y0, x0, c) * (1.0 - fx) + img.px(y0, x1, c) * fx;
                let bottom = img.px(y1, x0, c) * (1.0 - fx) + img.px(y1, x1, c) * fx;
                let v = (top * (1.0 - fy) + bottom * fy) / img.max_value;
                out.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Tensor::new(vec![3, th, tw], out)
}

/// `K×3×H×W` stack with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    data: Tensor,
}

impl FrameStack {
    pub fn new(data: Tensor) -> Result<Self> {
        match data.dims() {
            [k, 3, h, w] if *k >= 1 && *h >= 1 && *w >= 1 => {}
            d => return Err(Error::Shape(format!("frame stack must be K×3×H×W, got {d:?}"))),
        }
        if data.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input("frame values must lie in [0, 1]".into()));
        }
        Ok(Self { data })
    }

    /// Samples `k` frames uniformly and preprocesses each to `size×size`.
    pub fn from_video(video: &[RawImage], k: usize, size: usize) -> Result<Self> {
        let picked = sample_frames(video, k)?;
        let mut values = Vec::with_capacity(k * 3 * size * size);
        for img in &picked {
            values.extend_from_slice(preprocess_frame(img, (size, size))?.values());
        }
        Self::new(Tensor::new(vec![k, 3, size, size], values)?)
    }

    pub fn frames(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }
}
