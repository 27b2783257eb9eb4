#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "chaingan/rng.hpp"
#include "chaingan/tensor.hpp"

namespace chaingan {

// Checkpoint container: magic "CGAN", u32 version, u64 config digest, then
// length-prefixed named tensors in little-endian IEEE-754. Model parameters,
// optimizer state, RNG state and counters all travel as named tensors.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { F32 = 1, F64 = 2, I64 = 3 };

struct NamedBlob {
    DType dtype = DType::F64;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> bytes;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

class CheckpointFile {
public:
    std::uint64_t config_digest = 0;

    template <typename T>
    void put_tensor(const std::string& name, const Tensor<T>& t) {
        NamedBlob b;
        b.dtype = sizeof(T) == 4 ? DType::F32 : DType::F64;
        for (int i = 0; i < t.shape().rank; ++i) b.dims.push_back(static_cast<std::uint32_t>(t.shape()[i]));
        b.bytes.resize(t.numel() * sizeof(T));
        std::memcpy(b.bytes.data(), t.data(), b.bytes.size());
        insert(name, std::move(b));
    }

    void put_i64(const std::string& name, std::int64_t v) {
        NamedBlob b;
        b.dtype = DType::I64;
        b.dims = {1};
        b.bytes.resize(8);
        std::memcpy(b.bytes.data(), &v, 8);
        insert(name, std::move(b));
    }

    void put_u64s(const std::string& name, const std::vector<std::uint64_t>& vs) {
        NamedBlob b;
        b.dtype = DType::I64;
        b.dims = {static_cast<std::uint32_t>(vs.size())};
        b.bytes.resize(vs.size() * 8);
        std::memcpy(b.bytes.data(), vs.data(), b.bytes.size());
        insert(name, std::move(b));
    }

    void put_f64s(const std::string& name, const std::vector<double>& vs) {
        NamedBlob b;
        b.dtype = DType::F64;
        b.dims = {static_cast<std::uint32_t>(vs.size())};
        b.bytes.resize(vs.size() * 8);
        std::memcpy(b.bytes.data(), vs.data(), b.bytes.size());
        insert(name, std::move(b));
    }

    bool has(const std::string& name) const { return blobs_.count(name) > 0; }

    const NamedBlob& get(const std::string& name) const {
        auto it = blobs_.find(name);
        if (it == blobs_.end()) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
        return it->second;
    }

    template <typename T>
    void read_tensor(const std::string& name, Tensor<T>& into) const {
        const NamedBlob& b = get(name);
        const DType want = sizeof(T) == 4 ? DType::F32 : DType::F64;
        if (b.dtype != want)
            throw std::runtime_error("checkpoint: '" + name + "' stored with a different precision");
        if (b.element_count() != static_cast<std::size_t>(into.numel()))
            throw std::runtime_error("checkpoint: '" + name + "' has " +
                                     std::to_string(b.element_count()) + " values, model expects " +
                                     std::to_string(into.numel()));
        std::memcpy(into.data(), b.bytes.data(), b.bytes.size());
    }

    std::int64_t read_i64(const std::string& name) const {
        const NamedBlob& b = get(name);
        std::int64_t v = 0;
        std::memcpy(&v, b.bytes.data(), 8);
        return v;
    }

    std::vector<std::uint64_t> read_u64s(const std::string& name) const {
        const NamedBlob& b = get(name);
        std::vector<std::uint64_t> out(b.element_count());
        std::memcpy(out.data(), b.bytes.data(), b.bytes.size());
        return out;
    }

    std::vector<double> read_f64s(const std::string& name) const {
        const NamedBlob& b = get(name);
        if (b.dtype != DType::F64) throw std::runtime_error("checkpoint: '" + name + "' is not f64");
        std::vector<double> out(b.element_count());
        std::memcpy(out.data(), b.bytes.data(), b.bytes.size());
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
        f.write("CGAN", 4);
        write_u32(f, kCheckpointVersion);
        write_u64(f, config_digest);
        write_u32(f, static_cast<std::uint32_t>(blobs_.size()));
        for (const auto& [name, b] : blobs_) {
            write_u32(f, static_cast<std::uint32_t>(name.size()));
            f.write(name.data(), static_cast<std::streamsize>(name.size()));
            f.put(static_cast<char>(b.dtype));
            write_u32(f, static_cast<std::uint32_t>(b.dims.size()));
            for (auto d : b.dims) write_u32(f, d);
            write_u64(f, b.bytes.size());
            f.write(reinterpret_cast<const char*>(b.bytes.data()), static_cast<std::streamsize>(b.bytes.size()));
        }
        if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
    }

    static CheckpointFile load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
        char magic[4];
        f.read(magic, 4);
        if (!f || std::memcmp(magic, "CGAN", 4) != 0)
            throw std::runtime_error("checkpoint: bad magic bytes in " + path);
        CheckpointFile ck;
        const std::uint32_t version = read_u32(f);
        if (version != kCheckpointVersion)
            throw std::runtime_error("checkpoint: file version " + std::to_string(version) +
                                     " does not match supported version " +
                                     std::to_string(kCheckpointVersion));
        ck.config_digest = read_u64(f);
        const std::uint32_t count = read_u32(f);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint32_t name_len = read_u32(f);
            std::string name(name_len, '\0');
            f.read(name.data(), name_len);
            NamedBlob b;
            b.dtype = static_cast<DType>(f.get());
            const std::uint32_t rank = read_u32(f);
            for (std::uint32_t r = 0; r < rank; ++r) b.dims.push_back(read_u32(f));
            const std::uint64_t len = read_u64(f);
            b.bytes.resize(len);
            f.read(reinterpret_cast<char*>(b.bytes.data()), static_cast<std::streamsize>(len));
            if (!f) throw std::runtime_error("checkpoint: truncated while reading '" + name + "'");
            ck.blobs_.emplace(std::move(name), std::move(b));
        }
        return ck;
    }

    const std::map<std::string, NamedBlob>& entries() const { return blobs_; }

private:
    void insert(const std::string& name, NamedBlob b) {
        if (!blobs_.emplace(name, std::move(b)).second)
            throw std::logic_error("checkpoint: duplicate entry '" + name + "'");
    }

    static void write_u32(std::ofstream& f, std::uint32_t v) {
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    static void write_u64(std::ofstream& f, std::uint64_t v) {
        f.write(reinterpret_cast<const char*>(&v), 8);
    }
    static std::uint32_t read_u32(std::ifstream& f) {
        std::uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    }
    static std::uint64_t read_u64(std::ifstream& f) {
        std::uint64_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 8);
        return v;
    }

    std::map<std::string, NamedBlob> blobs_;
};

} // namespace chaingan
