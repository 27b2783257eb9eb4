#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace chaingan {

// Dense row-major extents, rank 1..4. Scalars are shape {1}.
struct Shape {
    std::array<int, 4> d{1, 1, 1, 1};
    int rank = 1;

    Shape() = default;
    Shape(std::initializer_list<int> dims) {
        if (dims.size() == 0 || dims.size() > 4) throw std::invalid_argument("Shape: rank must be 1..4");
        rank = static_cast<int>(dims.size());
        int i = 0;
        for (int v : dims) {
            if (v <= 0) throw std::invalid_argument("Shape: extents must be positive, got " + std::to_string(v));
            d[i++] = v;
        }
        for (; i < 4; ++i) d[i] = 1;
    }

    int operator[](int i) const { return d[i]; }

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int i = 0; i < rank; ++i) n *= d[i];
        return n;
    }

    bool operator==(const Shape& o) const {
        if (rank != o.rank) return false;
        for (int i = 0; i < rank; ++i)
            if (d[i] != o.d[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "[";
        for (int i = 0; i < rank; ++i) {
            if (i) s += "x";
            s += std::to_string(d[i]);
        }
        return s + "]";
    }
};

} // namespace chaingan
