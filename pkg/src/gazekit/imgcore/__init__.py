"""Image containers and pixel-level primitives shared by every stage."""

from gazekit.imgcore.ops import (
    canny,
    convolve,
    gaussian_kernel,
    gaussian_smooth,
    harris_corners,
    integral_image,
    rect_sum,
    resize_color,
    resize_gray,
    rgb_to_ycbcr,
    sobel_gradients,
    to_grayscale,
    ycbcr_planes,
)
from gazekit.imgcore.pnm import (
    read_image,
    read_pgm,
    read_ppm,
    write_image,
    write_pgm,
    write_ppm,
)
from gazekit.imgcore.types import (
    ColorImage,
    GradientField,
    GrayImage,
    IntegralImage,
    Kernel,
    Rect,
    ResponseMap,
)

__all__ = [
    "ColorImage",
    "GradientField",
    "GrayImage",
    "IntegralImage",
    "Kernel",
    "Rect",
    "ResponseMap",
    "canny",
    "convolve",
    "gaussian_kernel",
    "gaussian_smooth",
    "harris_corners",
    "integral_image",
    "read_image",
    "read_pgm",
    "read_ppm",
    "rect_sum",
    "resize_color",
    "resize_gray",
    "rgb_to_ycbcr",
    "sobel_gradients",
    "to_grayscale",
    "write_image",
    "write_pgm",
    "write_ppm",
    "ycbcr_planes",
]
