#include "wayflow/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "wayflow/binio.hpp"
#include "wayflow/errors.hpp"

namespace wayflow::img {

namespace {

// ---- inflate ----

class BitReader {
public:
    BitReader(const uint8_t* data, size_t len) : data_(data), len_(len) {}

    uint32_t bits(int count) {
        uint32_t v = 0;
        for (int i = 0; i < count; ++i) v |= bit() << i;
        return v;
    }

    uint32_t bit() {
        if (pos_ >= len_) throw DataError("deflate stream truncated");
        const uint32_t b = (data_[pos_] >> nbit_) & 1u;
        if (++nbit_ == 8) {
            nbit_ = 0;
            ++pos_;
        }
        return b;
    }

    void align_byte() {
        if (nbit_ != 0) {
            nbit_ = 0;
            ++pos_;
        }
    }

    void raw(uint8_t* out, size_t n) {
        if (pos_ + n > len_) throw DataError("deflate stream truncated");
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }

private:
    const uint8_t* data_;
    size_t len_;
    size_t pos_ = 0;
    int nbit_ = 0;
};

// Canonical Huffman decoder over code lengths (max 15 bits).
struct Huffman {
    int count[16] = {0};      // number of codes per length
    std::vector<int> symbol;  // symbols ordered by (length, symbol)

    void build(const std::vector<int>& lengths) {
        for (int i = 0; i < 16; ++i) count[i] = 0;
        for (int len : lengths)
            if (len > 0) ++count[len];
        std::vector<int> offs(16, 0);
        for (int len = 1; len < 15; ++len)
            offs[static_cast<size_t>(len + 1)] =
                offs[static_cast<size_t>(len)] + count[len];
        symbol.assign(lengths.size(), 0);
        for (size_t sym = 0; sym < lengths.size(); ++sym)
            if (lengths[sym] > 0)
                symbol[static_cast<size_t>(
                    offs[static_cast<size_t>(lengths[sym])]++)] =
                    static_cast<int>(sym);
        // incomplete codes are acceptable for the distance tree only; the
        // decode loop errors out if an unassigned code appears
    }

    int decode(BitReader& br) const {
        int code = 0, first = 0, index = 0;
        for (int len = 1; len <= 15; ++len) {
            code |= static_cast<int>(br.bit());
            const int n = count[len];
            if (code - first < n)
                return symbol[static_cast<size_t>(index + (code - first))];
            index += n;
            first = (first + n) << 1;
            code <<= 1;
        }
        throw DataError("invalid huffman code in deflate stream");
    }
};

constexpr int kLenBase[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,
                              15, 17, 19, 23, 27, 31, 35, 43, 51,  59,
                              67, 83, 99, 115, 131, 163, 195, 227, 258};
constexpr int kLenExtra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                               2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
constexpr int kDistBase[30] = {1,    2,    3,    4,    5,    7,     9,    13,
                               17,   25,   33,   49,   65,   97,    129,  193,
                               257,  385,  513,  769,  1025, 1537,  2049, 3073,
                               4097, 6145, 8193, 12289, 16385, 24577};
constexpr int kDistExtra[30] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5, 5,
                                6, 6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12,
                                12, 13, 13};

void inflate_block(BitReader& br, const Huffman& lit, const Huffman& dist,
                   std::vector<uint8_t>& out) {
    for (;;) {
        const int sym = lit.decode(br);
        if (sym < 256) {
            out.push_back(static_cast<uint8_t>(sym));
        } else if (sym == 256) {
            return;
        } else {
            const int li = sym - 257;
            if (li >= 29) throw DataError("invalid length symbol");
            const int len = kLenBase[li] +
                            static_cast<int>(br.bits(kLenExtra[li]));
            const int ds = dist.decode(br);
            if (ds >= 30) throw DataError("invalid distance symbol");
            const size_t d = static_cast<size_t>(
                kDistBase[ds] + static_cast<int>(br.bits(kDistExtra[ds])));
            if (d > out.size()) throw DataError("deflate distance too far");
            for (int i = 0; i < len; ++i)
                out.push_back(out[out.size() - d]);
        }
    }
}

std::vector<uint8_t> inflate(const uint8_t* data, size_t len) {
    BitReader br(data, len);
    std::vector<uint8_t> out;
    for (;;) {
        const uint32_t bfinal = br.bit();
        const uint32_t btype = br.bits(2);
        if (btype == 0) {
            br.align_byte();
            uint8_t hdr[4];
            br.raw(hdr, 4);
            const uint32_t n = hdr[0] | (static_cast<uint32_t>(hdr[1]) << 8);
            const uint32_t nc = hdr[2] | (static_cast<uint32_t>(hdr[3]) << 8);
            if ((n ^ nc) != 0xFFFFu)
                throw DataError("stored block length check failed");
            const size_t at = out.size();
            out.resize(at + n);
            br.raw(out.data() + at, n);
        } else if (btype == 1) {
            std::vector<int> ll(288);
            for (int i = 0; i < 144; ++i) ll[static_cast<size_t>(i)] = 8;
            for (int i = 144; i < 256; ++i) ll[static_cast<size_t>(i)] = 9;
            for (int i = 256; i < 280; ++i) ll[static_cast<size_t>(i)] = 7;
            for (int i = 280; i < 288; ++i) ll[static_cast<size_t>(i)] = 8;
            std::vector<int> dl(30, 5);
            Huffman lit, dist;
            lit.build(ll);
            dist.build(dl);
            inflate_block(br, lit, dist, out);
        } else if (btype == 2) {
            const int hlit = static_cast<int>(br.bits(5)) + 257;
            const int hdist = static_cast<int>(br.bits(5)) + 1;
            const int hclen = static_cast<int>(br.bits(4)) + 4;
            static const int order[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                          11, 4,  12, 3, 13, 2, 14, 1, 15};
            std::vector<int> clen(19, 0);
            for (int i = 0; i < hclen; ++i)
                clen[static_cast<size_t>(order[i])] =
                    static_cast<int>(br.bits(3));
            Huffman cl;
            cl.build(clen);
            std::vector<int> lengths;
            lengths.reserve(static_cast<size_t>(hlit + hdist));
            while (static_cast<int>(lengths.size()) < hlit + hdist) {
                const int sym = cl.decode(br);
                if (sym < 16) {
                    lengths.push_back(sym);
                } else if (sym == 16) {
                    if (lengths.empty())
                        throw DataError("repeat with no previous length");
                    const int rep = 3 + static_cast<int>(br.bits(2));
                    for (int i = 0; i < rep; ++i)
                        lengths.push_back(lengths.back());
                } else if (sym == 17) {
                    const int rep = 3 + static_cast<int>(br.bits(3));
                    lengths.insert(lengths.end(), static_cast<size_t>(rep), 0);
                } else {
                    const int rep = 11 + static_cast<int>(br.bits(7));
                    lengths.insert(lengths.end(), static_cast<size_t>(rep), 0);
                }
            }
            if (static_cast<int>(lengths.size()) != hlit + hdist)
                throw DataError("code length overflow in deflate header");
            std::vector<int> ll(lengths.begin(), lengths.begin() + hlit);
            std::vector<int> dl(lengths.begin() + hlit, lengths.end());
            Huffman lit, dist;
            lit.build(ll);
            dist.build(dl);
            inflate_block(br, lit, dist, out);
        } else {
            throw DataError("invalid deflate block type");
        }
        if (bfinal) break;
    }
    return out;
}

uint32_t adler32(const uint8_t* data, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

// ---- PNG ----

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) |
           (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& payload) {
    put_be32(out, static_cast<uint32_t>(payload.size()));
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    put_be32(out, binio::crc32(body.data(), body.size()));
}

constexpr uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

std::vector<uint8_t> zlib_decompress(const uint8_t* data, size_t len) {
    if (len < 6) throw DataError("zlib stream too short");
    const uint8_t cmf = data[0], flg = data[1];
    if ((cmf & 0x0F) != 8) throw DataError("unsupported zlib method");
    if (((static_cast<unsigned>(cmf) << 8) | flg) % 31 != 0)
        throw DataError("zlib header check failed");
    if (flg & 0x20) throw DataError("zlib preset dictionary unsupported");
    std::vector<uint8_t> out = inflate(data + 2, len - 6);
    const uint32_t expect = get_be32(data + len - 4);
    if (adler32(out.data(), out.size()) != expect)
        throw DataError("zlib adler32 mismatch");
    return out;
}

Image8 decode_png(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
        throw DataError("not a png file");
    size_t pos = 8;
    int64_t width = 0, height = 0;
    int color_type = -1;
    std::vector<uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= bytes.size() && !saw_iend) {
        const uint32_t len = get_be32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size())
            throw DataError("png chunk truncated");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* payload = bytes.data() + pos + 8;
        const uint32_t crc_expect = get_be32(bytes.data() + pos + 8 + len);
        if (binio::crc32(bytes.data() + pos + 4, 4 + len) != crc_expect)
            throw DataError("png chunk crc mismatch");
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError("bad IHDR length");
            width = get_be32(payload);
            height = get_be32(payload + 4);
            const int bit_depth = payload[8];
            color_type = payload[9];
            if (bit_depth != 8)
                throw DataError("unsupported png bit depth (need 8)");
            if (color_type != 0 && color_type != 2 && color_type != 4 &&
                color_type != 6)
                throw DataError("unsupported png color type");
            if (payload[12] != 0)
                throw DataError("interlaced png unsupported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || width <= 0 || height <= 0)
        throw DataError("png missing image header");
    if (idat.empty()) throw DataError("png missing image data");

    const int channels = color_type == 0   ? 1
                         : color_type == 2 ? 3
                         : color_type == 4 ? 2
                                           : 4;
    std::vector<uint8_t> raw = zlib_decompress(idat.data(), idat.size());
    const size_t stride = static_cast<size_t>(width) * static_cast<size_t>(channels);
    if (raw.size() != (stride + 1) * static_cast<size_t>(height))
        throw DataError("png pixel payload has wrong size");

    std::vector<uint8_t> pixels(stride * static_cast<size_t>(height));
    std::vector<uint8_t> prev(stride, 0);
    for (int64_t y = 0; y < height; ++y) {
        const uint8_t* src = raw.data() + static_cast<size_t>(y) * (stride + 1);
        uint8_t* dst = pixels.data() + static_cast<size_t>(y) * stride;
        const uint8_t filter = src[0];
        ++src;
        for (size_t i = 0; i < stride; ++i) {
            const int left = i >= static_cast<size_t>(channels)
                                 ? dst[i - static_cast<size_t>(channels)]
                                 : 0;
            const int up = prev[i];
            const int ul = i >= static_cast<size_t>(channels)
                               ? prev[i - static_cast<size_t>(channels)]
                               : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += up; break;
                case 3: v += (left + up) / 2; break;
                case 4: v += paeth(left, up, ul); break;
                default: throw DataError("unknown png filter type");
            }
            dst[i] = static_cast<uint8_t>(v & 0xFF);
        }
        std::copy(dst, dst + stride, prev.data());
    }

    Image8 im;
    im.width = width;
    im.height = height;
    im.rgb.resize(static_cast<size_t>(width) * static_cast<size_t>(height) * 3);
    for (int64_t y = 0; y < height; ++y)
        for (int64_t x = 0; x < width; ++x) {
            const uint8_t* p =
                pixels.data() + static_cast<size_t>(y) * stride +
                static_cast<size_t>(x) * static_cast<size_t>(channels);
            uint8_t r, g, b;
            if (channels <= 2) {
                r = g = b = p[0];
            } else {
                r = p[0];
                g = p[1];
                b = p[2];
            }
            const size_t at = im.index(y, x);
            im.rgb[at] = r;
            im.rgb[at + 1] = g;
            im.rgb[at + 2] = b;
        }
    return im;
}

std::vector<uint8_t> encode_png(const Image8& im) {
    if (im.width <= 0 || im.height <= 0 ||
        im.rgb.size() != static_cast<size_t>(im.width * im.height * 3))
        throw ValueError("encode_png: malformed image");
    std::vector<uint8_t> out(kPngSig, kPngSig + 8);

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(im.width));
    put_be32(ihdr, static_cast<uint32_t>(im.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // no interlace
    put_chunk(out, "IHDR", ihdr);

    // raw scanlines, filter 0
    const size_t stride = static_cast<size_t>(im.width) * 3;
    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * static_cast<size_t>(im.height));
    for (int64_t y = 0; y < im.height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), im.rgb.begin() + static_cast<std::ptrdiff_t>(y * static_cast<int64_t>(stride)),
                   im.rgb.begin() + static_cast<std::ptrdiff_t>((y + 1) * static_cast<int64_t>(stride)));
    }

    // zlib wrapper around stored deflate blocks
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t at = 0;
    while (at < raw.size() || raw.empty()) {
        const size_t n = std::min<size_t>(65535, raw.size() - at);
        const bool final = at + n == raw.size();
        z.push_back(final ? 1 : 0);
        z.push_back(static_cast<uint8_t>(n));
        z.push_back(static_cast<uint8_t>(n >> 8));
        z.push_back(static_cast<uint8_t>(~n));
        z.push_back(static_cast<uint8_t>(~n >> 8));
        z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(at),
                 raw.begin() + static_cast<std::ptrdiff_t>(at + n));
        at += n;
        if (final) break;
    }
    const uint32_t ad = adler32(raw.data(), raw.size());
    z.push_back(static_cast<uint8_t>(ad >> 24));
    z.push_back(static_cast<uint8_t>(ad >> 16));
    z.push_back(static_cast<uint8_t>(ad >> 8));
    z.push_back(static_cast<uint8_t>(ad));
    put_chunk(out, "IDAT", z);
    put_chunk(out, "IEND", {});
    return out;
}

Image8 decode_ppm(const std::vector<uint8_t>& bytes) {
    size_t pos = 0;
    auto skip_space = [&]() {
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
    auto read_int = [&]() {
        skip_space();
        int64_t v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw DataError("ppm: expected integer");
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P')
        throw DataError("not a ppm file");
    const char kind = static_cast<char>(bytes[1]);
    pos = 2;
    if (kind != '6' && kind != '3') throw DataError("unsupported ppm variant");
    const int64_t w = read_int();
    const int64_t h = read_int();
    const int64_t maxv = read_int();
    if (w <= 0 || h <= 0 || maxv != 255)
        throw DataError("ppm: unsupported geometry or maxval");
    Image8 im;
    im.width = w;
    im.height = h;
    im.rgb.resize(static_cast<size_t>(w * h * 3));
    if (kind == '6') {
        ++pos;  // single whitespace after maxval
        if (pos + im.rgb.size() > bytes.size())
            throw DataError("ppm: truncated pixel data");
        std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos) +
                      static_cast<std::ptrdiff_t>(im.rgb.size()),
                  im.rgb.begin());
    } else {
        for (auto& b : im.rgb) {
            const int64_t v = read_int();
            if (v < 0 || v > 255) throw DataError("ppm: sample out of range");
            b = static_cast<uint8_t>(v);
        }
    }
    return im;
}

Image8 load_image(const std::string& path) {
    const std::vector<uint8_t> bytes = binio::read_file(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
        return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P')
        return decode_ppm(bytes);
    throw DataError("unrecognized image format: " + path);
}

void export_image(const Tensor& image, const std::string& path) {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw ShapeError("export_image expects [H, W, 3]");
    Image8 im;
    im.height = image.dim(0);
    im.width = image.dim(1);
    im.rgb.resize(static_cast<size_t>(image.numel()));
    for (int64_t i = 0; i < image.numel(); ++i) {
        const double clamped = std::min(1.0, std::max(-1.0, image[i]));
        // map to [0, 255], round half away from zero (value domain is >= 0)
        const double mapped = (clamped + 1.0) * 0.5 * 255.0;
        im.rgb[static_cast<size_t>(i)] =
            static_cast<uint8_t>(std::floor(mapped + 0.5));
    }
    binio::write_file_atomic(path, encode_png(im));
}

Tensor to_tensor(const Image8& im) {
    Tensor t({im.height, im.width, 3});
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<double>(im.rgb[static_cast<size_t>(i)]) / 127.5 -
               1.0;
    return t;
}

Image8 center_crop_resize(const Image8& im, int64_t size) {
    if (size <= 0) throw ValueError("resize: bad target size");
    const int64_t side = std::min(im.width, im.height);
    const int64_t x0 = (im.width - side) / 2;
    const int64_t y0 = (im.height - side) / 2;
    Image8 out;
    out.width = size;
    out.height = size;
    out.rgb.resize(static_cast<size_t>(size * size * 3));
    const double scale = static_cast<double>(side) / static_cast<double>(size);
    for (int64_t y = 0; y < size; ++y) {
        const double sy = (static_cast<double>(y) + 0.5) * scale - 0.5;
        const int64_t y1 = std::clamp<int64_t>(
            static_cast<int64_t>(std::floor(sy)), 0, side - 1);
        const int64_t y2 = std::min(y1 + 1, side - 1);
        const double fy = std::clamp(sy - static_cast<double>(y1), 0.0, 1.0);
        for (int64_t x = 0; x < size; ++x) {
            const double sx = (static_cast<double>(x) + 0.5) * scale - 0.5;
            const int64_t x1 = std::clamp<int64_t>(
                static_cast<int64_t>(std::floor(sx)), 0, side - 1);
            const int64_t x2 = std::min(x1 + 1, side - 1);
            const double fx =
                std::clamp(sx - static_cast<double>(x1), 0.0, 1.0);
            for (int64_t c = 0; c < 3; ++c) {
                auto px = [&](int64_t yy, int64_t xx) {
                    return static_cast<double>(
                        im.rgb[im.index(y0 + yy, x0 + xx) +
                               static_cast<size_t>(c)]);
                };
                const double top = px(y1, x1) * (1 - fx) + px(y1, x2) * fx;
                const double bot = px(y2, x1) * (1 - fx) + px(y2, x2) * fx;
                const double v = top * (1 - fy) + bot * fy;
                out.rgb[out.index(y, x) + static_cast<size_t>(c)] =
                    static_cast<uint8_t>(std::lround(v));
            }
        }
    }
    return out;
}

}  // namespace wayflow::img
