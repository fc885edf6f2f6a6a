#include "err/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace err::io {

namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

unsigned char quantize(double v) {
    const double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    return static_cast<unsigned char>(std::min(q, 255.0));
}

Tensor as_chw(const Tensor& image) {
    if (image.rank() == 4 && image.dim(0) == 1) return Tensor(Shape{image.dim(1), image.dim(2), image.dim(3)}, image.vec());
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ShapeError("save_image expects [3,H,W] or [1,3,H,W], got " + shape_str(image.shape()));
    }
    return image;
}

// Interleaved 8-bit RGB -> planar [3, H, W].
Tensor from_interleaved(const unsigned char* px, std::size_t h, std::size_t w) {
    std::vector<double> v(3 * h * w);
    for (std::size_t i = 0; i < h * w; ++i)
        for (std::size_t c = 0; c < 3; ++c) v[c * h * w + i] = px[3 * i + c] / 255.0;
    return Tensor(Shape{3, h, w}, std::move(v));
}

std::vector<unsigned char> to_interleaved(const Tensor& chw) {
    const std::size_t h = chw.dim(1), w = chw.dim(2);
    std::vector<unsigned char> px(3 * h * w);
    for (std::size_t i = 0; i < h * w; ++i)
        for (std::size_t c = 0; c < 3; ++c) px[3 * i + c] = quantize(chw[c * h * w + i]);
    return px;
}

void check_extent(std::size_t w, std::size_t h, const std::string& what) {
    if (w == 0 || h == 0 || w > kMaxExtent || h > kMaxExtent) {
        throw DataError(what + ": extent " + std::to_string(w) + "x" + std::to_string(h) + " out of range");
    }
}

Tensor decode_png(const std::string& path, const std::vector<unsigned char>& bytes) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
        throw DataError("png " + path + ": " + img.message);
    }
    if (img.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&img);
        throw DataError("png " + path + ": only 8-bit images are supported");
    }
    try {
        check_extent(img.width, img.height, "png " + path);
    } catch (...) {
        png_image_free(&img);
        throw;
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> px(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
        throw DataError("png " + path + ": " + img.message);
    }
    return from_interleaved(px.data(), img.height, img.width);
}

}  // namespace

Tensor decode_ppm(const std::vector<unsigned char>& bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&](const char* what) {
        skip_space();
        std::size_t v = 0, digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
            if (++digits > 9) throw DataError(std::string("ppm: ") + what + " too large");
        }
        if (digits == 0) throw DataError(std::string("ppm: missing ") + what);
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw DataError("ppm: not a binary P6 file");
    pos = 2;
    const std::size_t w = number("width"), h = number("height"), maxval = number("maxval");
    check_extent(w, h, "ppm");
    if (maxval != 255) throw DataError("ppm: only maxval 255 is supported, got " + std::to_string(maxval));
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DataError("ppm: malformed header");
    ++pos;
    if (bytes.size() - pos < 3 * w * h) throw DataError("ppm: truncated pixel data");
    return from_interleaved(bytes.data() + pos, h, w);
}

std::vector<unsigned char> encode_ppm(const Tensor& image) {
    Tensor chw = as_chw(image);
    const std::string header = "P6\n" + std::to_string(chw.dim(2)) + " " + std::to_string(chw.dim(1)) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    auto px = to_interleaved(chw);
    out.insert(out.end(), px.begin(), px.end());
    return out;
}

Tensor load_image(const std::string& path) {
    const auto bytes = read_file(path);
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return decode_png(path, bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
        try {
            return decode_ppm(bytes);
        } catch (const DataError& e) {
            throw DataError(path + ": " + e.what());
        }
    }
    throw DataError(path + ": unsupported image format (expected PNG or binary PPM)");
}

void save_image(const std::string& path, const Tensor& image) {
    Tensor chw = as_chw(image);
    const std::string ext = fs::path(path).extension().string();
    if (ext == ".ppm") {
        const auto bytes = encode_ppm(chw);
        std::ofstream out(path, std::ios::binary);
        if (!out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
            throw DataError("cannot write " + path);
        }
        return;
    }
    if (ext != ".png") throw DataError("save_image: unknown extension '" + ext + "' (use .png or .ppm)");
    auto px = to_interleaved(chw);
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(chw.dim(2));
    img.height = static_cast<png_uint_32>(chw.dim(1));
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, px.data(), 0, nullptr)) {
        throw DataError("png " + path + ": " + img.message);
    }
}

std::vector<std::string> list_images(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".png" || ext == ".ppm")) out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<ImagePair> load_pairs(const std::string& dir) {
    const fs::path in_dir = fs::path(dir) / "input", gt_dir = fs::path(dir) / "gt";
    if (!fs::is_directory(in_dir) || !fs::is_directory(gt_dir)) {
        throw DataError("data directory " + dir + " must contain input/ and gt/");
    }
    std::vector<ImagePair> pairs;
    for (const auto& path : list_images(in_dir.string())) {
        const fs::path name = fs::path(path).filename();
        const fs::path gt_path = gt_dir / name;
        if (!fs::exists(gt_path)) throw DataError("missing ground truth for " + name.string());
        ImagePair p{load_image(path), load_image(gt_path.string()), name.stem().string()};
        if (p.degraded.shape() != p.gt.shape()) {
            throw DataError("extent mismatch between input and gt for " + name.string());
        }
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw DataError("no image pairs found under " + in_dir.string());
    return pairs;
}

}  // namespace err::io
