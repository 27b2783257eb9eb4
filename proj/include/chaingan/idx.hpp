#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace chaingan {

// Raw contents of an IDX unsigned-byte image file (magic 0x00000803).
struct IdxImages {
    int count = 0;
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> pixels; // count * rows * cols
};

// Parses the big-endian IDX format. Malformed input is rejected with the
// byte offset of the problem.
IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes);

IdxImages load_idx_images_file(const std::string& path);

// Serializer used by tooling and tests to produce valid files.
std::vector<std::uint8_t> write_idx_images(const IdxImages& images);

} // namespace chaingan
