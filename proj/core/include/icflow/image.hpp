#ifndef ICFLOW_IMAGE_HPP
#define ICFLOW_IMAGE_HPP

#include <string>

#include "icflow/tensor.hpp"

namespace icflow {

// Images are (C,H,W) tensors with values in [0,1]; files are 8-bit.
// Supported formats: binary PPM (P6) and non-interlaced 8-bit PNG
// (grayscale, RGB, or RGBA on read; grayscale or RGB on write).
Tensor read_image(const std::string& path);
void write_image(const std::string& path, const Tensor& image);

Tensor to_gray(const Tensor& image);
Tensor clamp01(const Tensor& image);

}  // namespace icflow

#endif
