#include "rlalign/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rlalign {

namespace {

static_assert(std::endian::native == std::endian::little,
              "IMG1 and checkpoint codecs assume a little-endian host");

void put_u32(std::vector<unsigned char>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<unsigned char> encode_img1(const Image2D& img)
{
    std::vector<unsigned char> out(std::begin(kImg1Magic), std::end(kImg1Magic));
    put_u32(out, static_cast<std::uint32_t>(img.height()));
    put_u32(out, static_cast<std::uint32_t>(img.width()));
    const auto px = img.pixels();
    const std::size_t start = out.size();
    out.resize(start + px.size() * sizeof(float));
    std::memcpy(out.data() + start, px.data(), px.size() * sizeof(float));
    return out;
}

Image2D decode_img1(const std::vector<unsigned char>& bytes)
{
    if (bytes.size() < 16 || !std::equal(std::begin(kImg1Magic), std::end(kImg1Magic), bytes.begin())) {
        throw FormatError("not an IMG1 file");
    }
    const std::uint32_t h = get_u32(bytes.data() + 8);
    const std::uint32_t w = get_u32(bytes.data() + 12);
    const std::uint64_t count = static_cast<std::uint64_t>(h) * w;
    if (h > (1u << 20) || w > (1u << 20) || bytes.size() != 16 + count * sizeof(float)) {
        throw FormatError("IMG1 payload size does not match header");
    }
    std::vector<float> px(count);
    std::memcpy(px.data(), bytes.data() + 16, count * sizeof(float));
    for (float v : px) {
        if (!std::isfinite(v)) throw FormatError("IMG1 contains non-finite intensities");
    }
    return Image2D(static_cast<int>(h), static_cast<int>(w), std::move(px));
}

void write_img1(const std::filesystem::path& path, const Image2D& img)
{
    write_file_bytes(path, encode_img1(img));
}

Image2D read_img1(const std::filesystem::path& path)
{
    return decode_img1(read_file_bytes(path));
}

Image2D read_pgm(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    std::size_t pos = 0;
    auto skip_space_and_comments = [&] {
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
    auto read_int = [&]() -> long {
        skip_space_and_comments();
        long v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            any = true;
            if (v > (1 << 24)) throw FormatError("PGM header value out of range");
            ++pos;
        }
        if (!any) throw FormatError("malformed PGM header");
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("not a binary PGM (P5)");
    pos = 2;
    const long w = read_int();
    const long h = read_int();
    const long maxval = read_int();
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) throw FormatError("unsupported PGM header");
    ++pos; // single whitespace byte before raster
    if (bytes.size() < pos + static_cast<std::size_t>(w * h)) throw FormatError("truncated PGM raster");
    Image2D img(static_cast<int>(h), static_cast<int>(w));
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
    return img;
}

void write_pgm(const std::filesystem::path& path, const Image2D& img)
{
    std::ostringstream header;
    header << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    const std::string hs = header.str();
    std::vector<unsigned char> out(hs.begin(), hs.end());
    for (float v : img.pixels()) {
        const float clamped = std::clamp(v, 0.0f, 1.0f);
        out.push_back(static_cast<unsigned char>(std::lround(clamped * 255.0f)));
    }
    write_file_bytes(path, out);
}

Image2D read_image(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return read_pgm(path);
    return decode_img1(bytes);
}

} // namespace rlalign
