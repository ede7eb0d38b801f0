use std::sync::Arc;

use super::laplacian::matting_laplacian;
use super::spectral::{estimate_lambda_max, ExactProjector, PolyGraphFilter};
use super::{ChannelFilter, IdentityFilter};
use crate::error::{Error, Result};
use crate::ops::avg_pool2;
use crate::tensor::Tensor;

/// Number of resolutions the network's backward maps run at.
pub const PYRAMID_LEVELS: usize = 4;

/// Content image downsampled by repeated 2×2 averaging, full resolution first.
pub fn downsample_levels(content: &Tensor, levels: usize) -> Result<Vec<Tensor>> {
    let mult = 1usize << (levels - 1);
    for dim in [content.height(), content.width()] {
        if dim % mult != 0 {
            return Err(Error::Indivisible {
                op: "build_pyramid",
                dim,
                divisor: mult,
            });
        }
    }
    let mut out = vec![content.clone()];
    for _ in 1..levels {
        let next = avg_pool2(out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(out)
}

/// Matting Laplacians and low-pass filters at scales 1, 1/2, 1/4, 1/8.
#[derive(Clone, Debug)]
pub struct LaplacianPyramid {
    levels: Vec<PolyGraphFilter>,
}

impl LaplacianPyramid {
    pub fn levels(&self) -> &[PolyGraphFilter] {
        &self.levels
    }

    pub fn filters(&self) -> FilterPyramid {
        FilterPyramid {
            filters: self
                .levels
                .iter()
                .map(|f| Arc::new(f.clone()) as Arc<dyn ChannelFilter>)
                .collect(),
            shapes: self
                .levels
                .iter()
                .map(|f| (f.laplacian().height(), f.laplacian().width()))
                .collect(),
        }
    }

    /// Total sparse products performed by all levels so far.
    pub fn matvec_count(&self) -> usize {
        self.levels.iter().map(|f| f.laplacian().matvec_count()).sum()
    }

    pub fn reset_matvec_count(&self) {
        self.levels.iter().for_each(|f| f.laplacian().reset_matvec_count());
    }
}

pub fn build_pyramid(
    content: &Tensor,
    epsilon: f64,
    lambda_star_frac: f64,
    order: usize,
) -> Result<LaplacianPyramid> {
    if !(lambda_star_frac > 0.0 && lambda_star_frac <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "λ*/λ_max fraction {lambda_star_frac} must lie in (0, 1]"
        )));
    }
    let images = downsample_levels(content, PYRAMID_LEVELS)?;
    let levels = images
        .iter()
        .map(|img| {
            let l = Arc::new(matting_laplacian(img, epsilon)?);
            let filter = PolyGraphFilter::low_pass(l, lambda_star_frac, order)?;
            filter.laplacian().reset_matvec_count();
            Ok(filter)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LaplacianPyramid { levels })
}

/// One channel filter per backward-map resolution.
#[derive(Clone, Debug)]
pub struct FilterPyramid {
    filters: Vec<Arc<dyn ChannelFilter>>,
    shapes: Vec<(usize, usize)>,
}

impl FilterPyramid {
    pub fn new(filters: Vec<Arc<dyn ChannelFilter>>, shapes: Vec<(usize, usize)>) -> Result<Self> {
        if filters.len() != PYRAMID_LEVELS || shapes.len() != PYRAMID_LEVELS {
            return Err(Error::shape("FilterPyramid", PYRAMID_LEVELS, filters.len()));
        }
        for (f, &(h, w)) in filters.iter().zip(&shapes) {
            if f.len() != h * w {
                return Err(Error::shape("FilterPyramid", h * w, f.len()));
            }
        }
        Ok(FilterPyramid { filters, shapes })
    }

    /// Pass-through filters for an `h × w` image.
    pub fn identity(height: usize, width: usize) -> Self {
        let shapes: Vec<_> = (0..PYRAMID_LEVELS)
            .map(|l| (height >> l, width >> l))
            .collect();
        FilterPyramid {
            filters: shapes
                .iter()
                .map(|&(h, w)| Arc::new(IdentityFilter { len: h * w }) as Arc<dyn ChannelFilter>)
                .collect(),
            shapes,
        }
    }

    /// Exact spectral projectors at every level (oracle scale only).
    pub fn exact(content: &Tensor, epsilon: f64, lambda_star_frac: f64) -> Result<Self> {
        let images = downsample_levels(content, PYRAMID_LEVELS)?;
        let mut filters: Vec<Arc<dyn ChannelFilter>> = Vec::new();
        let mut shapes = Vec::new();
        for img in &images {
            let l = matting_laplacian(img, epsilon)?;
            let lmax = estimate_lambda_max(&l).value;
            filters.push(Arc::new(ExactProjector::new(&l, lambda_star_frac * lmax)?));
            shapes.push((img.height(), img.width()));
        }
        Ok(FilterPyramid { filters, shapes })
    }

    pub fn level(&self, l: usize) -> &Arc<dyn ChannelFilter> {
        &self.filters[l]
    }

    pub fn shape(&self, l: usize) -> (usize, usize) {
        self.shapes[l]
    }

    /// Verifies that level `l` matches an `h × w` plane.
    pub fn check(&self, l: usize, height: usize, width: usize) -> Result<()> {
        if self.shapes[l] != (height, width) {
            return Err(Error::shape(
                "filter pyramid",
                format!("{height}×{width} at level {l}"),
                format!("{}×{}", self.shapes[l].0, self.shapes[l].1),
            ));
        }
        Ok(())
    }
}
