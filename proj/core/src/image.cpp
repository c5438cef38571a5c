#include "icflow/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace icflow {

namespace {

unsigned char to_u8(double v) {
    const double c = std::min(1.0, std::max(0.0, v));
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// ---- PPM (binary P6) ----

void write_ppm(const std::string& path, const Tensor& img) {
    const Index c = img.extent(0), h = img.extent(1), w = img.extent(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x)
            for (Index ch = 0; ch < 3; ++ch)
                row[static_cast<std::size_t>(x * 3 + ch)] = to_u8(img.at(std::min(ch, c - 1), y, x));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw IoError("write failed: " + path);
}

Tensor read_ppm(std::ifstream& is, const std::string& path) {
    std::string magic;
    is >> magic;
    if (magic != "P6") throw IoError("unsupported PPM variant in " + path);
    auto next_int = [&]() {
        int v;
        // skip whitespace and # comments
        while (true) {
            is >> std::ws;
            if (is.peek() == '#') {
                std::string line;
                std::getline(is, line);
            } else {
                break;
            }
        }
        if (!(is >> v)) throw IoError("bad PPM header in " + path);
        return v;
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    if (maxval != 255) throw IoError("only 8-bit PPM supported: " + path);
    is.get();  // single whitespace after header
    std::vector<unsigned char> data(static_cast<std::size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!is) throw IoError("truncated PPM: " + path);
    Tensor img({3, h, w});
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index ch = 0; ch < 3; ++ch)
                img.at(ch, y, x) =
                    static_cast<double>(data[static_cast<std::size_t>((y * w + x) * 3 + ch)]) / 255.0;
    return img;
}

// ---- PNG (8-bit, non-interlaced) ----

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::ofstream& os, const char type[4], const std::vector<unsigned char>& payload) {
    std::vector<unsigned char> head;
    put_be32(head, static_cast<std::uint32_t>(payload.size()));
    os.write(reinterpret_cast<const char*>(head.data()), 4);
    os.write(type, 4);
    if (!payload.empty())
        os.write(reinterpret_cast<const char*>(payload.data()),
                 static_cast<std::streamsize>(payload.size()));
    std::uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!payload.empty()) crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
    std::vector<unsigned char> tail;
    put_be32(tail, crc);
    os.write(reinterpret_cast<const char*>(tail.data()), 4);
}

void write_png(const std::string& path, const Tensor& img) {
    const Index c = img.extent(0), h = img.extent(1), w = img.extent(2);
    if (c != 1 && c != 3) throw IoError("PNG write supports 1 or 3 channels");
    const int color_type = (c == 1) ? 0 : 2;

    // raw scanlines, filter byte 0
    std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (1 + static_cast<std::size_t>(w) * c));
    std::size_t at = 0;
    for (Index y = 0; y < h; ++y) {
        raw[at++] = 0;
        for (Index x = 0; x < w; ++x)
            for (Index ch = 0; ch < c; ++ch) raw[at++] = to_u8(img.at(ch, y, x));
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("PNG deflate failed");
    comp.resize(comp_len);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    os.write(reinterpret_cast<const char*>(sig), 8);
    std::vector<unsigned char> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(w));
    put_be32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);
    ihdr.push_back(static_cast<unsigned char>(color_type));
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(os, "IHDR", ihdr);
    put_chunk(os, "IDAT", comp);
    put_chunk(os, "IEND", {});
    if (!os) throw IoError("write failed: " + path);
}

std::uint32_t get_be32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

Tensor read_png(std::ifstream& is, const std::string& path) {
    std::vector<unsigned char> file((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
        throw IoError("bad PNG signature: " + path);

    Index w = 0, h = 0;
    int bit_depth = 0, color_type = 0, interlace = 0;
    std::vector<unsigned char> idat;
    std::size_t at = 8;
    while (at + 8 <= file.size()) {
        const std::uint32_t len = get_be32(&file[at]);
        const char* type = reinterpret_cast<const char*>(&file[at + 4]);
        if (at + 12 + len > file.size()) throw IoError("truncated PNG: " + path);
        const unsigned char* payload = &file[at + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = get_be32(payload);
            h = get_be32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            interlace = payload[12];
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        at += 12 + len;
    }
    if (w <= 0 || h <= 0) throw IoError("missing IHDR: " + path);
    if (bit_depth != 8 || interlace != 0)
        throw IoError("only 8-bit non-interlaced PNG supported: " + path);
    Index c;
    switch (color_type) {
        case 0: c = 1; break;
        case 2: c = 3; break;
        case 6: c = 4; break;
        default: throw IoError("unsupported PNG color type: " + path);
    }

    const std::size_t stride = static_cast<std::size_t>(w) * static_cast<std::size_t>(c);
    std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw IoError("PNG inflate failed: " + path);

    // undo scanline filters in place
    std::vector<unsigned char> prev(stride, 0);
    std::vector<unsigned char> cur(stride);
    const Index bpp = c;
    Tensor img({std::min<Index>(c, 3), h, w});
    for (Index y = 0; y < h; ++y) {
        const unsigned char filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
        const unsigned char* src = &raw[static_cast<std::size_t>(y) * (stride + 1) + 1];
        for (std::size_t i = 0; i < stride; ++i) {
            const int x = src[i];
            const int a = (i >= static_cast<std::size_t>(bpp)) ? cur[i - static_cast<std::size_t>(bpp)] : 0;
            const int b = prev[i];
            const int cc = (i >= static_cast<std::size_t>(bpp)) ? prev[i - static_cast<std::size_t>(bpp)] : 0;
            int v;
            switch (filter) {
                case 0: v = x; break;
                case 1: v = x + a; break;
                case 2: v = x + b; break;
                case 3: v = x + (a + b) / 2; break;
                case 4: v = x + paeth(a, b, cc); break;
                default: throw IoError("bad PNG filter: " + path);
            }
            cur[i] = static_cast<unsigned char>(v & 0xff);
        }
        for (Index x = 0; x < w; ++x)
            for (Index ch = 0; ch < std::min<Index>(c, 3); ++ch)
                img.at(ch, y, x) =
                    static_cast<double>(cur[static_cast<std::size_t>(x * c + ch)]) / 255.0;
        prev = cur;
    }
    return img;
}

}  // namespace

Tensor read_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    const int first = is.peek();
    if (first == 'P') return read_ppm(is, path);
    return read_png(is, path);
}

void write_image(const std::string& path, const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("write_image: expected (C,H,W)");
    if (ends_with(path, ".ppm"))
        write_ppm(path, image);
    else if (ends_with(path, ".png"))
        write_png(path, image);
    else
        throw IoError("unsupported image extension: " + path);
}

Tensor to_gray(const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("to_gray: expected (C,H,W)");
    const Index c = image.extent(0), h = image.extent(1), w = image.extent(2);
    if (c == 1) return image;
    Tensor out({1, h, w});
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            double s = 0.0;
            for (Index ch = 0; ch < c; ++ch) s += image.at(ch, y, x);
            out.at(0, y, x) = s / static_cast<double>(c);
        }
    return out;
}

Tensor clamp01(const Tensor& image) {
    Tensor out = image;
    for (Index i = 0; i < out.numel(); ++i) out.at(i) = std::min(1.0, std::max(0.0, out.at(i)));
    return out;
}

}  // namespace icflow
