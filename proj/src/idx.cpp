#include "chaingan/idx.hpp"

#include <fstream>
#include <stdexcept>

namespace chaingan {

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    if (off + 4 > b.size())
        throw std::runtime_error("idx: truncated file, need 4 bytes at offset " + std::to_string(off) +
                                 " but file has " + std::to_string(b.size()));
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

} // namespace

IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes) {
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != 0x00000803u)
        throw std::runtime_error("idx: bad magic at offset 0: got 0x" + [&] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08x", magic);
            return std::string(buf);
        }() + ", expected 0x00000803");
    IdxImages out;
    out.count = static_cast<int>(read_be32(bytes, 4));
    out.rows = static_cast<int>(read_be32(bytes, 8));
    out.cols = static_cast<int>(read_be32(bytes, 12));
    if (out.count < 0 || out.rows <= 0 || out.cols <= 0)
        throw std::runtime_error("idx: nonsensical dimensions at offset 4");
    const std::size_t need = 16 + static_cast<std::size_t>(out.count) * out.rows * out.cols;
    if (bytes.size() < need)
        throw std::runtime_error("idx: truncated pixel data at offset " + std::to_string(bytes.size()) +
                                 ", expected " + std::to_string(need) + " bytes total");
    out.pixels.assign(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(need));
    return out;
}

IdxImages load_idx_images_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("idx: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_idx_images(bytes);
}

std::vector<std::uint8_t> write_idx_images(const IdxImages& images) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.pixels.size());
    auto push_be32 = [&](std::uint32_t v) {
        out.push_back(static_cast<std::uint8_t>(v >> 24));
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v));
    };
    push_be32(0x00000803u);
    push_be32(static_cast<std::uint32_t>(images.count));
    push_be32(static_cast<std::uint32_t>(images.rows));
    push_be32(static_cast<std::uint32_t>(images.cols));
    out.insert(out.end(), images.pixels.begin(), images.pixels.end());
    return out;
}

} // namespace chaingan
