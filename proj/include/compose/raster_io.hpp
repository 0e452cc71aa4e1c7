#pragma once

// Container codecs for RGB float rasters: Radiance .hdr (RGBE), .pfm and
// 8-bit sRGB .png. Everything in memory is linear float; PNG applies the
// sRGB transfer on the way in and out.

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "color.hpp"
#include "error.hpp"

namespace compose {

struct RgbRaster {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // row-major RGB, top row first
};

enum class RasterFormat { Hdr, Pfm, Png };

inline std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

inline RasterFormat format_from_path(const std::filesystem::path& path) {
    const std::string ext = lower_extension(path);
    if (ext == ".hdr") return RasterFormat::Hdr;
    if (ext == ".pfm") return RasterFormat::Pfm;
    if (ext == ".png") return RasterFormat::Png;
    throw FormatError("unsupported image format '" + ext + "' (expected .hdr, .pfm or .png)");
}

/// Sniffs the container from its leading bytes.
inline RasterFormat format_from_bytes(const std::string& bytes) {
    if (bytes.size() >= 8 && static_cast<unsigned char>(bytes[0]) == 0x89 && bytes.compare(1, 3, "PNG") == 0)
        return RasterFormat::Png;
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == 'F' || bytes[1] == 'f')) return RasterFormat::Pfm;
    if (bytes.size() >= 2 && bytes[0] == '#' && bytes[1] == '?') return RasterFormat::Hdr;
    throw FormatError("unrecognized image container");
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace detail {

class ByteReader {
public:
    explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

    std::string line() {
        std::string out;
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') out.push_back(bytes_[pos_++]);
        if (pos_ >= bytes_.size()) throw FormatError("truncated header");
        ++pos_;
        return out;
    }
    // PFM headers separate tokens by any whitespace, with exactly one
    // whitespace byte before the pixel data.
    std::string token() {
        while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
        std::string out;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
            out.push_back(bytes_[pos_++]);
        if (out.empty()) throw FormatError("truncated header");
        return out;
    }
    void skip_one() {
        if (pos_ >= bytes_.size()) throw FormatError("truncated header");
        ++pos_;
    }
    unsigned char byte() {
        if (pos_ >= bytes_.size()) throw FormatError("truncated pixel data");
        return static_cast<unsigned char>(bytes_[pos_++]);
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    const char* cursor() const { return bytes_.data() + pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

inline int parse_dimension(const std::string& s) {
    try {
        std::size_t used = 0;
        const long v = std::stol(s, &used);
        if (used != s.size() || v <= 0 || v > (1 << 20)) throw FormatError("bad image dimension '" + s + "'");
        return static_cast<int>(v);
    } catch (const std::logic_error&) {
        throw FormatError("bad image dimension '" + s + "'");
    }
}

inline void rgbe_from_float(float r, float g, float b, unsigned char out[4]) {
    const float v = std::max({r, g, b});
    if (v < 1e-32f) {
        out[0] = out[1] = out[2] = out[3] = 0;
        return;
    }
    int e = 0;
    const float m = std::frexp(v, &e) * 256.0f / v;
    out[0] = static_cast<unsigned char>(r * m);
    out[1] = static_cast<unsigned char>(g * m);
    out[2] = static_cast<unsigned char>(b * m);
    out[3] = static_cast<unsigned char>(e + 128);
}

inline void float_from_rgbe(const unsigned char in[4], float* rgb) {
    if (in[3] == 0) {
        rgb[0] = rgb[1] = rgb[2] = 0.0f;
        return;
    }
    const float f = std::ldexp(1.0f, static_cast<int>(in[3]) - (128 + 8));
    rgb[0] = in[0] * f;
    rgb[1] = in[1] * f;
    rgb[2] = in[2] * f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PFM

inline std::string encode_pfm(const RgbRaster& img) {
    std::ostringstream header;
    header << "PF\n" << img.width << ' ' << img.height << "\n-1.0\n";
    std::string out = header.str();
    const std::size_t row_bytes = static_cast<std::size_t>(img.width) * 3 * sizeof(float);
    out.reserve(out.size() + row_bytes * img.height);
    for (int j = img.height - 1; j >= 0; --j) {
        const float* row = img.data.data() + static_cast<std::size_t>(j) * img.width * 3;
        for (int k = 0; k < img.width * 3; ++k) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(row[k]);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
            char buf[4];
            std::memcpy(buf, &bits, 4);
            out.append(buf, 4);
        }
    }
    return out;
}

inline RgbRaster decode_pfm(const std::string& bytes) {
    detail::ByteReader in(bytes);
    const std::string magic = in.token();
    int channels = 0;
    if (magic == "PF")
        channels = 3;
    else if (magic == "Pf")
        channels = 1;
    else
        throw FormatError("not a PFM file");
    RgbRaster img;
    img.width = detail::parse_dimension(in.token());
    img.height = detail::parse_dimension(in.token());
    double scale = 0;
    try {
        scale = std::stod(in.token());
    } catch (const std::logic_error&) {
        throw FormatError("bad PFM scale");
    }
    if (scale == 0.0) throw FormatError("bad PFM scale");
    in.skip_one();
    const bool little = scale < 0;
    const std::size_t count = static_cast<std::size_t>(img.width) * img.height * channels;
    if (in.remaining() < count * 4) throw FormatError("truncated PFM pixel data");
    img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    const bool swap = little != (std::endian::native == std::endian::little);
    for (int j = img.height - 1; j >= 0; --j) {
        for (int i = 0; i < img.width; ++i) {
            float px[3];
            for (int c = 0; c < channels; ++c) {
                std::uint32_t bits;
                std::memcpy(&bits, in.cursor(), 4);
                in.advance(4);
                if (swap) bits = __builtin_bswap32(bits);
                px[c] = std::bit_cast<float>(bits);
            }
            if (channels == 1) px[1] = px[2] = px[0];
            float* dst = img.data.data() + (static_cast<std::size_t>(j) * img.width + i) * 3;
            std::copy(px, px + 3, dst);
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Radiance RGBE

/// Writes flat (uncompressed) RGBE scanlines in -Y H +X W order.
inline std::string encode_hdr(const RgbRaster& img) {
    std::ostringstream header;
    header << "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " << img.height << " +X " << img.width << "\n";
    std::string out = header.str();
    out.reserve(out.size() + static_cast<std::size_t>(img.width) * img.height * 4);
    for (std::size_t p = 0; p < static_cast<std::size_t>(img.width) * img.height; ++p) {
        unsigned char rgbe[4];
        detail::rgbe_from_float(img.data[p * 3], img.data[p * 3 + 1], img.data[p * 3 + 2], rgbe);
        out.append(reinterpret_cast<const char*>(rgbe), 4);
    }
    return out;
}

/// Reads flat and new-style run-length encoded scanlines.
inline RgbRaster decode_hdr(const std::string& bytes) {
    detail::ByteReader in(bytes);
    const std::string magic = in.line();
    if (magic.rfind("#?", 0) != 0) throw FormatError("not a Radiance HDR file");
    bool rgbe = false;
    for (;;) {
        const std::string l = in.line();
        if (l.empty()) break;
        if (l.rfind("FORMAT=", 0) == 0) {
            if (l != "FORMAT=32-bit_rle_rgbe") throw FormatError("unsupported HDR pixel format: " + l);
            rgbe = true;
        }
    }
    (void)rgbe;  // FORMAT is optional; RGBE is the default
    std::istringstream res(in.line());
    std::string ya, yv, xa, xv;
    res >> ya >> yv >> xa >> xv;
    if (ya != "-Y" || xa != "+X") throw FormatError("unsupported HDR orientation (expected -Y H +X W)");
    RgbRaster img;
    img.height = detail::parse_dimension(yv);
    img.width = detail::parse_dimension(xv);
    img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);

    std::vector<unsigned char> scan(static_cast<std::size_t>(img.width) * 4);
    for (int j = 0; j < img.height; ++j) {
        unsigned char head[4];
        for (auto& h : head) h = in.byte();
        const bool rle = img.width >= 8 && img.width < 32768 && head[0] == 2 && head[1] == 2 &&
                         ((head[2] << 8) | head[3]) == img.width && !(head[2] & 0x80);
        if (rle) {
            for (int c = 0; c < 4; ++c) {
                int i = 0;
                while (i < img.width) {
                    int count = in.byte();
                    if (count > 128) {
                        count -= 128;
                        if (i + count > img.width) throw FormatError("bad HDR run length");
                        const unsigned char v = in.byte();
                        for (int k = 0; k < count; ++k) scan[(i++) * 4 + c] = v;
                    } else {
                        if (count == 0 || i + count > img.width) throw FormatError("bad HDR run length");
                        for (int k = 0; k < count; ++k) scan[(i++) * 4 + c] = in.byte();
                    }
                }
            }
        } else {
            std::copy(head, head + 4, scan.begin());
            for (int k = 4; k < img.width * 4; ++k) scan[k] = in.byte();
        }
        for (int i = 0; i < img.width; ++i)
            detail::float_from_rgbe(&scan[i * 4], img.data.data() + (static_cast<std::size_t>(j) * img.width + i) * 3);
    }
    return img;
}

// ---------------------------------------------------------------------------
// PNG (8-bit sRGB)

inline std::string encode_png8(int width, int height, const std::vector<std::uint8_t>& rgb) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0, nullptr))
        throw IoError(std::string("PNG encode failed: ") + image.message);
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, rgb.data(), 0, nullptr))
        throw IoError(std::string("PNG encode failed: ") + image.message);
    out.resize(size);
    return out;
}

/// Decodes any PNG to 8-bit RGB bytes (gray is expanded, alpha dropped).
inline std::vector<std::uint8_t> decode_png8(const std::string& bytes, int& width, int& height) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw FormatError(std::string("PNG decode failed: ") + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
        png_image_free(&image);
        throw FormatError(std::string("PNG decode failed: ") + image.message);
    }
    width = static_cast<int>(image.width);
    height = static_cast<int>(image.height);
    return rgb;
}

/// Linear to sRGB with exposure 1 and clipping to [0,1].
inline std::string encode_png(const RgbRaster& img) {
    std::vector<std::uint8_t> rgb(img.data.size());
    std::transform(img.data.begin(), img.data.end(), rgb.begin(), [](float v) { return linear_to_srgb8(v); });
    return encode_png8(img.width, img.height, rgb);
}

inline RgbRaster decode_png(const std::string& bytes) {
    RgbRaster img;
    const auto rgb = decode_png8(bytes, img.width, img.height);
    const auto& table = srgb8_to_linear_table();
    img.data.resize(rgb.size());
    std::transform(rgb.begin(), rgb.end(), img.data.begin(), [&](std::uint8_t v) { return table[v]; });
    return img;
}

// ---------------------------------------------------------------------------

inline RgbRaster decode_raster(const std::string& bytes, RasterFormat format) {
    switch (format) {
        case RasterFormat::Hdr: return decode_hdr(bytes);
        case RasterFormat::Pfm: return decode_pfm(bytes);
        case RasterFormat::Png: return decode_png(bytes);
    }
    throw FormatError("unknown format");
}

inline std::string encode_raster(const RgbRaster& img, RasterFormat format) {
    switch (format) {
        case RasterFormat::Hdr: return encode_hdr(img);
        case RasterFormat::Pfm: return encode_pfm(img);
        case RasterFormat::Png: return encode_png(img);
    }
    throw FormatError("unknown format");
}

inline RgbRaster read_raster(const std::filesystem::path& path) {
    const RasterFormat format = format_from_path(path);
    return decode_raster(read_file_bytes(path), format);
}

inline void write_raster(const RgbRaster& img, const std::filesystem::path& path) {
    const RasterFormat format = format_from_path(path);
    write_file_bytes(path, encode_raster(img, format));
}

}  // namespace compose
