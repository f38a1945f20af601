#include "nova/image.hpp"

#include "nova/error.hpp"

#include <png.h>

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

namespace nova {

namespace {

int read_header_int(std::istream& in) {
    int c = in.get();
    while (in && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (in && c != '\n') c = in.get();
        c = in.get();
    }
    if (!in || !std::isdigit(c)) throw DataError("pgm: malformed header");
    int value = 0;
    while (in && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;  // the single whitespace after the token is consumed
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage8& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

GrayImage8 read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::array<char, 2> magic{};
    in.read(magic.data(), 2);
    if (magic[0] != 'P' || magic[1] != '5') throw DataError("not a binary PGM: " + path.string());
    GrayImage8 img;
    img.width = read_header_int(in);
    img.height = read_header_int(in);
    const int maxval = read_header_int(in);
    if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255)
        throw DataError("unsupported PGM header: " + path.string());
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw DataError("truncated PGM: " + path.string());
    if (maxval != 255)
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>((p * 255 + maxval / 2) / maxval);
    return img;
}

GrayImage8 read_png_gray(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str()))
        throw DataError("cannot decode PNG " + path.string() + ": " + png.message);
    png.format = PNG_FORMAT_GRAY;
    GrayImage8 img;
    img.width = static_cast<int>(png.width);
    img.height = static_cast<int>(png.height);
    img.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw DataError("cannot decode PNG " + path.string() + ": " + png.message);
    }
    return img;
}

GrayImage8 read_gray_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::array<unsigned char, 4> sig{};
    in.read(reinterpret_cast<char*>(sig.data()), 4);
    in.close();
    if (sig[0] == 0x89 && sig[1] == 'P' && sig[2] == 'N' && sig[3] == 'G') return read_png_gray(path);
    return read_pgm(path);
}

Image to_unit_image(const GrayImage8& gray) {
    Image out(1, gray.height, gray.width);
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) out.data[i] = gray.pixels[i] / 255.0f;
    return out;
}

}  // namespace nova
