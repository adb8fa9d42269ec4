#pragma once

#include <string>
#include <vector>

#include "msdet/tensor.hpp"

namespace msdet::ppm {

// 8-bit RGB image, pixels interleaved row-major.
struct Image {
    int w = 0, h = 0;
    std::vector<unsigned char> px;  // 3 * w * h bytes

    Image() = default;
    Image(int w_, int h_) : w(w_), h(h_), px(size_t(3) * w_ * h_, 0) {}

    unsigned char& at(int y, int x, int ch) {
        return px[(size_t(y) * w + x) * 3 + ch];
    }
    unsigned char at(int y, int x, int ch) const {
        return px[(size_t(y) * w + x) * 3 + ch];
    }
};

// Binary PPM (P6, maxval 255). read() throws std::runtime_error on a
// malformed header or short pixel data.
Image read(const std::string& path);
void write(const Image& img, const std::string& path);

// (1,3,h,w) float tensor scaled to [0,1].
Tensor to_tensor(const Image& img);
// Clamps to [0,1] and quantizes to 8 bits. Input must be (1,3,h,w).
Image from_tensor(const Tensor& t);

}  // namespace msdet::ppm
