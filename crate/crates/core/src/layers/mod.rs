//! Non-recurrent layers: dilated convolution, pooling, L2-norm scaling,
//! map softmax, bilinear upsampling, Gaussian blur and a dense layer.

mod blur;
mod conv;
mod dense;
mod l2norm;
mod pool;
mod softmax;
mod upsample;

pub use blur::{gaussian_blur, gaussian_kernel_size, GaussianBlur, BLUR_SIGMA_FRACTION};
pub use conv::{dilated_conv_forward, Activation, Conv2dParams, ConvCache};
pub use dense::{
    global_avg_pool, global_avg_pool_backward, resize_bilinear, LinearCache, LinearParams,
};
pub use l2norm::{l2norm_scale, L2NormCache, L2NormScaleParams, MIN_NORM};
pub use pool::{MaxPool, PoolCache};
pub use softmax::{softmax_map, softmax_map_backward};
pub use upsample::{bilinear_kernel_1d, bilinear_upsample, BilinearUpsample};
