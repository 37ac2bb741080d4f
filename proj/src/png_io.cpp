#include "shapednet/png_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace shapednet {

uint32_t png_crc32(const uint8_t* data, size_t len) {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t n = 0; n < 256; ++n) {
            uint32_t c = n;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[n] = c;
        }
        return t;
    }();
    uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

uint32_t png_adler32(const uint8_t* data, size_t len) {
    const uint32_t MOD = 65521u;
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % MOD;
        b = (b + a) % MOD;
    }
    return (b << 16) | a;
}

namespace {

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
    put_be32(out, static_cast<uint32_t>(payload.size()));
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    put_be32(out, png_crc32(body.data(), body.size()));
}

}  // namespace

void write_png_gray(const std::string& path, const GrayImage& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<size_t>(img.width) * static_cast<size_t>(img.height))
        throw DataError("write_png_gray: inconsistent image dimensions");
    std::vector<uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.width));
    put_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // adaptive filtering
    ihdr.push_back(0);  // no interlace
    append_chunk(out, "IHDR", ihdr);

    // Raw scanlines, each prefixed with filter type 0.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (static_cast<size_t>(img.width) + 1));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const uint8_t* row = img.pixels.data() + static_cast<size_t>(y) * img.width;
        raw.insert(raw.end(), row, row + img.width);
    }
    // zlib stream of stored (uncompressed) deflate blocks.
    std::vector<uint8_t> z = {0x78, 0x01};
    size_t pos = 0;
    while (true) {
        const size_t n = std::min<size_t>(65535, raw.size() - pos);
        const bool final = pos + n == raw.size();
        z.push_back(final ? 1 : 0);
        z.push_back(static_cast<uint8_t>(n & 0xFF));
        z.push_back(static_cast<uint8_t>(n >> 8));
        z.push_back(static_cast<uint8_t>(~n & 0xFF));
        z.push_back(static_cast<uint8_t>((~n >> 8) & 0xFF));
        z.insert(z.end(), raw.begin() + static_cast<long>(pos),
                 raw.begin() + static_cast<long>(pos + n));
        pos += n;
        if (final) break;
    }
    put_be32(z, png_adler32(raw.data(), raw.size()));
    append_chunk(out, "IDAT", z);
    append_chunk(out, "IEND", {});

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    os.flush();
    if (!os) throw IoError("failed writing: " + path);
}

GrayImage read_png_gray(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
    const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw DataError("not a PNG file: " + path);

    auto be32 = [&](size_t off) -> uint32_t {
        return (static_cast<uint32_t>(bytes[off]) << 24) |
               (static_cast<uint32_t>(bytes[off + 1]) << 16) |
               (static_cast<uint32_t>(bytes[off + 2]) << 8) | bytes[off + 3];
    };

    int width = 0, height = 0;
    bool have_ihdr = false;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 12 <= bytes.size()) {
        const uint32_t len = be32(pos);
        if (pos + 12 + len > bytes.size()) throw DataError("truncated PNG chunk in " + path);
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* payload = bytes.data() + pos + 8;
        const uint32_t crc = be32(pos + 8 + len);
        if (png_crc32(bytes.data() + pos + 4, len + 4) != crc)
            throw DataError("PNG chunk CRC mismatch in " + path);
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError("bad IHDR length in " + path);
            width = static_cast<int>(be32(pos + 8));
            height = static_cast<int>(be32(pos + 12));
            const uint8_t depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8 || color != 0)
                throw DataError(path + ": only 8-bit grayscale PNGs are supported");
            if (interlace != 0) throw DataError(path + ": interlaced PNGs are not supported");
            have_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!have_ihdr || width <= 0 || height <= 0) throw DataError("missing IHDR in " + path);

    // zlib stream: header then stored blocks only.
    if (idat.size() < 2 || (idat[0] & 0x0F) != 8)
        throw DataError(path + ": unsupported zlib stream");
    std::vector<uint8_t> raw;
    size_t zp = 2;
    while (true) {
        if (zp >= idat.size()) throw DataError(path + ": truncated deflate stream");
        const uint8_t hdr = idat[zp++];
        if (((hdr >> 1) & 3) != 0)
            throw DataError(path + ": compressed deflate blocks are not supported");
        if (zp + 4 > idat.size()) throw DataError(path + ": truncated deflate stream");
        const uint32_t n = idat[zp] | (static_cast<uint32_t>(idat[zp + 1]) << 8);
        const uint32_t nn = idat[zp + 2] | (static_cast<uint32_t>(idat[zp + 3]) << 8);
        if ((n ^ nn) != 0xFFFF) throw DataError(path + ": corrupt stored block header");
        zp += 4;
        if (zp + n > idat.size()) throw DataError(path + ": truncated deflate stream");
        raw.insert(raw.end(), idat.begin() + static_cast<long>(zp),
                   idat.begin() + static_cast<long>(zp + n));
        zp += n;
        if (hdr & 1) break;
    }
    if (zp + 4 > idat.size()) throw DataError(path + ": missing adler32 checksum");
    const uint32_t adler = (static_cast<uint32_t>(idat[zp]) << 24) |
                           (static_cast<uint32_t>(idat[zp + 1]) << 16) |
                           (static_cast<uint32_t>(idat[zp + 2]) << 8) | idat[zp + 3];
    if (png_adler32(raw.data(), raw.size()) != adler)
        throw DataError(path + ": adler32 checksum mismatch");

    const size_t expect = static_cast<size_t>(height) * (static_cast<size_t>(width) + 1);
    if (raw.size() != expect) throw DataError(path + ": scanline data has the wrong size");
    GrayImage img(width, height);
    for (int y = 0; y < height; ++y) {
        const size_t off = static_cast<size_t>(y) * (static_cast<size_t>(width) + 1);
        if (raw[off] != 0)
            throw DataError(path + ": only filter type 0 is supported");
        std::memcpy(img.pixels.data() + static_cast<size_t>(y) * width, raw.data() + off + 1,
                    static_cast<size_t>(width));
    }
    return img;
}

}  // namespace shapednet
