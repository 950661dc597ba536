#include "omnidist/image.hpp"

#include <fstream>
#include <sstream>

#include "omnidist/errors.hpp"

namespace omnidist {

namespace {

// Reads the next whitespace/comment-delimited token of a PNM header.
std::string next_token(const std::string& s, std::size_t& pos) {
    while (pos < s.size()) {
        if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
    const std::size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (start == pos) throw FormatError("pnm: truncated header");
    return s.substr(start, pos - start);
}

}  // namespace

Image decode_pnm(const std::string& bytes) {
    std::size_t pos = 0;
    const std::string magic = next_token(bytes, pos);
    int channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw FormatError("pnm: unsupported magic '" + magic + "' (want P5 or P6)");

    int width = 0, height = 0, maxval = 0;
    try {
        width = std::stoi(next_token(bytes, pos));
        height = std::stoi(next_token(bytes, pos));
        maxval = std::stoi(next_token(bytes, pos));
    } catch (const std::exception&) {
        throw FormatError("pnm: malformed header numbers");
    }
    if (width <= 0 || height <= 0) throw FormatError("pnm: non-positive dimensions");
    if (maxval != 255) throw FormatError("pnm: only maxval 255 supported");
    ++pos;  // single whitespace byte after maxval

    Image img(width, height, channels);
    if (bytes.size() - pos < img.pixels.size()) throw FormatError("pnm: truncated pixel data");
    std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data()) + pos, img.pixels.size(),
                img.pixels.begin());
    return img;
}

std::string encode_pnm(const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw FormatError("pnm: only 1- or 3-channel images supported");
    std::ostringstream out;
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    return out.str();
}

Image read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("pnm: cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_pnm(buf.str());
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("pnm: cannot open " + path.string() + " for writing");
    const std::string bytes = encode_pnm(img);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image rotate90(const Image& img, int quarter_turns) {
    const int k = ((quarter_turns % 4) + 4) % 4;
    if (k == 0) return img;
    const bool swap = (k % 2) == 1;
    Image out(swap ? img.height : img.width, swap ? img.width : img.height, img.channels);
    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u) {
            int nu = 0, nv = 0;
            switch (k) {
                case 1: nu = img.height - 1 - v; nv = u; break;             // 90 cw
                case 2: nu = img.width - 1 - u; nv = img.height - 1 - v; break;
                default: nu = v; nv = img.width - 1 - u; break;             // 270 cw
            }
            for (int c = 0; c < img.channels; ++c) out.at(nu, nv, c) = img.at(u, v, c);
        }
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.width, img.height, img.channels);
    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u)
            for (int c = 0; c < img.channels; ++c)
                out.at(img.width - 1 - u, v, c) = img.at(u, v, c);
    return out;
}

}  // namespace omnidist
