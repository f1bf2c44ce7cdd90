#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "crfnoise/types.hpp"

namespace crfnoise {

// Versioned binary file container: a fixed magic/version preamble, a JSON
// header describing typed payload blocks with checksums, then the raw
// little-endian payload. Shared by datasets, aux models, checkpoints, and
// chain-store snapshots.
namespace container {

inline constexpr char kMagic[4] = {'C', 'R', 'F', 'C'};
inline constexpr uint32_t kVersion = 1;

uint64_t fnv1a64(const uint8_t* data, size_t len);

class Writer {
  public:
    explicit Writer(std::string kind) { header_["kind"] = std::move(kind); }

    nlohmann::json& meta() { return header_["meta"]; }

    void add_bytes(const std::string& name, const std::string& dtype, const void* data,
                   size_t nbytes, uint64_t logical_count);
    void add_vec(const std::string& name, const Vec& v);
    void add_mat(const std::string& name, const Mat& m);
    void add_f32(const std::string& name, const std::vector<float>& v);
    void add_bits(const std::string& name, const std::vector<uint8_t>& packed,
                  uint64_t logical_bits);
    void add_u8(const std::string& name, const std::vector<uint8_t>& v);
    void add_u64(const std::string& name, const std::vector<uint64_t>& v);
    void add_text(const std::string& name, const std::string& text);

    void write(const std::string& path) const;

  private:
    nlohmann::json header_;
    std::vector<uint8_t> payload_;
};

class Reader {
  public:
    explicit Reader(const std::string& path);

    const std::string& kind() const { return kind_; }
    const nlohmann::json& meta() const { return meta_; }
    bool has_block(const std::string& name) const { return blocks_.count(name) > 0; }

    Vec read_vec(const std::string& name) const;
    Mat read_mat(const std::string& name) const;
    std::vector<float> read_f32(const std::string& name) const;
    std::vector<uint8_t> read_bits(const std::string& name, uint64_t* logical_bits = nullptr) const;
    std::vector<uint8_t> read_u8(const std::string& name) const;
    std::vector<uint64_t> read_u64(const std::string& name) const;
    std::string read_text(const std::string& name) const;

  private:
    struct Block {
        std::string dtype;
        uint64_t offset = 0;
        uint64_t nbytes = 0;
        uint64_t count = 0;
        uint64_t rows = 0, cols = 0;
    };
    const Block& get(const std::string& name, const std::string& dtype) const;

    std::string kind_;
    nlohmann::json meta_;
    std::map<std::string, Block> blocks_;
    std::vector<uint8_t> payload_;
};

}  // namespace container
}  // namespace crfnoise
