#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "err/image.hpp"

namespace err::io {

/// Unreadable, malformed or missing image data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Largest accepted width or height.
inline constexpr std::size_t kMaxExtent = 1 << 15;

/// Reads an 8-bit PNG or binary PPM (P6) as [3, H, W] with values v / 255.
Tensor load_image(const std::string& path);
/// Writes [3, H, W] (or [1, 3, H, W]); format follows the extension (.png or .ppm).
/// Values are clamped to [0, 1] and rounded half up to 8 bits.
void save_image(const std::string& path, const Tensor& image);

Tensor decode_ppm(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> encode_ppm(const Tensor& image);

/// Paired data under `dir/input` and `dir/gt`, matched by file name.
std::vector<ImagePair> load_pairs(const std::string& dir);
/// Image files (.png, .ppm) directly inside `dir`, sorted by name.
std::vector<std::string> list_images(const std::string& dir);

}  // namespace err::io
