#include "ldc/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ldc {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed while writing " + path);
}

namespace {

// Netpbm-style header tokenizer: whitespace separated, '#' comments to end of line.
class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

    std::string token() {
        skip_space_and_comments();
        std::size_t start = pos_;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
        if (start == pos_) throw FormatError("truncated image header");
        return bytes_.substr(start, pos_ - start);
    }

    long integer() {
        const std::string t = token();
        if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            throw FormatError("expected an integer in image header, got '" + t + "'");
        }
        if (t.size() > 9) throw FormatError("image header value too large");
        return std::stol(t);
    }

    /// Consumes the single whitespace byte that ends the header.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw FormatError("missing whitespace after image header");
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

void require_single_image(const Tensor& t, const char* what) {
    if (t.shape().n != 1) throw ShapeError(std::string(what) + " writes one image at a time, got " + t.shape().str());
}

}  // namespace

std::string encode_pfm(const Tensor& t) {
    require_single_image(t, "PFM");
    const Shape s = t.shape();
    if (s.c != 1 && s.c != 3) throw ShapeError("PFM needs 1 or 3 channels, got " + s.str());
    std::string out = (s.c == 1 ? "Pf\n" : "PF\n") + std::to_string(s.w) + " " + std::to_string(s.h) + "\n-1.0\n";
    const std::size_t header = out.size();
    out.resize(header + static_cast<std::size_t>(s.numel()) * 4);
    char* dst = out.data() + header;
    for (std::int64_t y = s.h - 1; y >= 0; --y) {
        for (std::int64_t x = 0; x < s.w; ++x) {
            for (std::int64_t c = 0; c < s.c; ++c) {
                const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(t.at(0, c, y, x)));
                for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xffu);
            }
        }
    }
    return out;
}

void write_pfm(const std::string& path, const Tensor& t) { write_file(path, encode_pfm(t)); }

Tensor decode_pfm(const std::string& bytes) {
    HeaderReader hr(bytes);
    const std::string magic = hr.token();
    std::int64_t channels;
    if (magic == "Pf") {
        channels = 1;
    } else if (magic == "PF") {
        channels = 3;
    } else {
        throw FormatError("not a PFM file (magic '" + magic + "')");
    }
    const long w = hr.integer();
    const long h = hr.integer();
    if (w <= 0 || h <= 0) throw FormatError("PFM extents must be positive");
    const std::string scale_tok = hr.token();
    double scale;
    try {
        std::size_t used = 0;
        scale = std::stod(scale_tok, &used);
        if (used != scale_tok.size()) throw FormatError("bad PFM scale '" + scale_tok + "'");
    } catch (const std::logic_error&) {
        throw FormatError("bad PFM scale '" + scale_tok + "'");
    }
    if (scale == 0.0 || !std::isfinite(scale)) throw FormatError("PFM scale must be non-zero");
    const bool little = scale < 0.0;
    const std::size_t start = hr.raster_start();
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels * 4;
    if (bytes.size() - start < need) throw FormatError("PFM raster truncated");

    Tensor t(Shape{1, channels, h, w});
    const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + start);
    for (std::int64_t y = h - 1; y >= 0; --y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (std::int64_t c = 0; c < channels; ++c) {
                std::uint32_t bits = 0;
                for (int b = 0; b < 4; ++b) {
                    const int shift = little ? 8 * b : 8 * (3 - b);
                    bits |= static_cast<std::uint32_t>(src[b]) << shift;
                }
                src += 4;
                t.at(0, c, y, x) = static_cast<double>(std::bit_cast<float>(bits));
            }
        }
    }
    return t;
}

Tensor read_pfm(const std::string& path) { return decode_pfm(read_file(path)); }

std::string encode_ppm(const Tensor& rgb) {
    require_single_image(rgb, "PPM");
    const Shape s = rgb.shape();
    if (s.c != 3) throw ShapeError("PPM needs 3 channels, got " + s.str());
    std::string out = "P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + static_cast<std::size_t>(s.numel()));
    char* dst = out.data() + header;
    for (std::int64_t y = 0; y < s.h; ++y) {
        for (std::int64_t x = 0; x < s.w; ++x) {
            for (std::int64_t c = 0; c < 3; ++c) {
                const double v = std::clamp(rgb.at(0, c, y, x), 0.0, 1.0);
                *dst++ = static_cast<char>(static_cast<unsigned char>(std::floor(v * 255.0 + 0.5)));
            }
        }
    }
    return out;
}

void write_ppm(const std::string& path, const Tensor& rgb) { write_file(path, encode_ppm(rgb)); }

Tensor decode_ppm(const std::string& bytes) {
    HeaderReader hr(bytes);
    const std::string magic = hr.token();
    if (magic != "P6") throw FormatError("not a binary PPM file (magic '" + magic + "')");
    const long w = hr.integer();
    const long h = hr.integer();
    const long maxval = hr.integer();
    if (w <= 0 || h <= 0) throw FormatError("PPM extents must be positive");
    if (maxval < 1 || maxval > 255) throw FormatError("only 8-bit PPM is supported");
    const std::size_t start = hr.raster_start();
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    if (bytes.size() - start < need) throw FormatError("PPM raster truncated");
    Tensor t(Shape{1, 3, h, w});
    const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + start);
    const auto denom = static_cast<double>(maxval);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (std::int64_t c = 0; c < 3; ++c) t.at(0, c, y, x) = static_cast<double>(*src++) / denom;
        }
    }
    return t;
}

Tensor read_ppm(const std::string& path) { return decode_ppm(read_file(path)); }

}  // namespace ldc
