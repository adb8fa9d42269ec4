#include "msdet/ppm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace msdet::ppm {

namespace {

// Next whitespace-delimited token, skipping '#' comments to end of line.
int next_int(std::istream& is, const std::string& path) {
    for (;;) {
        int ch = is.peek();
        if (ch == EOF) throw std::runtime_error("ppm: truncated header in " + path);
        if (std::isspace(ch)) {
            is.get();
        } else if (ch == '#') {
            std::string line;
            std::getline(is, line);
        } else {
            break;
        }
    }
    int v;
    if (!(is >> v)) throw std::runtime_error("ppm: bad header token in " + path);
    return v;
}

}  // namespace

Image read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("ppm: cannot open " + path);
    char p, six;
    is.get(p);
    is.get(six);
    if (!is || p != 'P' || six != '6')
        throw std::runtime_error("ppm: " + path + " is not a P6 file");

    int w = next_int(is, path);
    int h = next_int(is, path);
    int maxval = next_int(is, path);
    if (w <= 0 || h <= 0 || w > 1 << 14 || h > 1 << 14)
        throw std::runtime_error("ppm: implausible dimensions in " + path);
    if (maxval != 255)
        throw std::runtime_error("ppm: only maxval 255 supported, " + path +
                                 " has " + std::to_string(maxval));
    is.get();  // the single whitespace byte after maxval

    Image img(w, h);
    is.read(reinterpret_cast<char*>(img.px.data()),
            std::streamsize(img.px.size()));
    if (!is) throw std::runtime_error("ppm: short pixel data in " + path);
    return img;
}

void write(const Image& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("ppm: cannot open " + path +
                                      " for writing");
    os << "P6\n" << img.w << " " << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.px.data()),
             std::streamsize(img.px.size()));
    if (!os) throw std::runtime_error("ppm: write failed for " + path);
}

Tensor to_tensor(const Image& img) {
    Tensor t(Shape4(1, 3, img.h, img.w));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                t.at(0, c, y, x) = float(img.at(y, x, c)) / 255.0f;
    return t;
}

Image from_tensor(const Tensor& t) {
    if (t.shape.n != 1 || t.shape.c != 3)
        throw ShapeError("ppm::from_tensor: need shape (1,3,h,w), got " +
                         t.shape.str());
    Image img(t.shape.w, t.shape.h);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < t.shape.h; ++y)
            for (int x = 0; x < t.shape.w; ++x) {
                float v = t.at(0, c, y, x);
                v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                img.at(y, x, c) =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
    return img;
}

}  // namespace msdet::ppm
