#include "crfnoise/container.hpp"

#include <cstring>
#include <fstream>

namespace crfnoise {
namespace container {

uint64_t fnv1a64(const uint8_t* data, size_t len) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void Writer::add_bytes(const std::string& name, const std::string& dtype, const void* data,
                       size_t nbytes, uint64_t logical_count) {
    nlohmann::json block;
    block["name"] = name;
    block["dtype"] = dtype;
    block["offset"] = payload_.size();
    block["bytes"] = nbytes;
    block["count"] = logical_count;
    char hex[24];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(
                      fnv1a64(static_cast<const uint8_t*>(data), nbytes)));
    block["checksum"] = hex;
    header_["blocks"].push_back(block);
    const auto* p = static_cast<const uint8_t*>(data);
    payload_.insert(payload_.end(), p, p + nbytes);
}

void Writer::add_vec(const std::string& name, const Vec& v) {
    add_bytes(name, "f64", v.data(), v.size() * sizeof(double), v.size());
}

void Writer::add_mat(const std::string& name, const Mat& m) {
    add_bytes(name, "f64", m.data(), m.size() * sizeof(double), m.size());
    header_["blocks"].back()["rows"] = m.rows();
    header_["blocks"].back()["cols"] = m.cols();
}

void Writer::add_f32(const std::string& name, const std::vector<float>& v) {
    add_bytes(name, "f32", v.data(), v.size() * sizeof(float), v.size());
}

void Writer::add_bits(const std::string& name, const std::vector<uint8_t>& packed,
                      uint64_t logical_bits) {
    add_bytes(name, "bits", packed.data(), packed.size(), logical_bits);
}

void Writer::add_u8(const std::string& name, const std::vector<uint8_t>& v) {
    add_bytes(name, "u8", v.data(), v.size(), v.size());
}

void Writer::add_u64(const std::string& name, const std::vector<uint64_t>& v) {
    add_bytes(name, "u64", v.data(), v.size() * sizeof(uint64_t), v.size());
}

void Writer::add_text(const std::string& name, const std::string& text) {
    add_bytes(name, "text", text.data(), text.size(), text.size());
}

void Writer::write(const std::string& path) const {
    std::string header = header_.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(kMagic, 4);
    uint32_t version = kVersion;
    uint64_t hlen = header.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(payload_.data()),
              static_cast<std::streamsize>(payload_.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

Reader::Reader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    uint32_t version = 0;
    uint64_t hlen = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a container file: " + path);
    if (version != kVersion)
        throw std::runtime_error("unsupported container version in " + path);
    std::string header(hlen, '\0');
    in.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("truncated header: " + path);
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("malformed header in " + path + ": " + e.what());
    }
    kind_ = h.at("kind").get<std::string>();
    meta_ = h.value("meta", nlohmann::json::object());

    payload_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());

    for (const auto& b : h.value("blocks", nlohmann::json::array())) {
        Block block;
        block.dtype = b.at("dtype").get<std::string>();
        block.offset = b.at("offset").get<uint64_t>();
        block.nbytes = b.at("bytes").get<uint64_t>();
        block.count = b.at("count").get<uint64_t>();
        block.rows = b.value("rows", 0);
        block.cols = b.value("cols", 0);
        if (block.offset + block.nbytes > payload_.size())
            throw std::runtime_error("block out of range in " + path);
        char hex[24];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a64(payload_.data() + block.offset, block.nbytes)));
        if (b.at("checksum").get<std::string>() != hex)
            throw std::runtime_error("checksum mismatch for block '" +
                                     b.at("name").get<std::string>() + "' in " + path);
        blocks_[b.at("name").get<std::string>()] = block;
    }
}

const Reader::Block& Reader::get(const std::string& name, const std::string& dtype) const {
    auto it = blocks_.find(name);
    if (it == blocks_.end()) throw std::runtime_error("missing block: " + name);
    if (it->second.dtype != dtype)
        throw std::runtime_error("block '" + name + "' has dtype " + it->second.dtype +
                                 ", expected " + dtype);
    return it->second;
}

Vec Reader::read_vec(const std::string& name) const {
    const Block& b = get(name, "f64");
    Vec v(b.count);
    std::memcpy(v.data(), payload_.data() + b.offset, b.nbytes);
    return v;
}

Mat Reader::read_mat(const std::string& name) const {
    const Block& b = get(name, "f64");
    if (b.rows * b.cols != b.count) throw std::runtime_error("block '" + name + "' is not a matrix");
    Mat m(b.rows, b.cols);
    std::memcpy(m.data(), payload_.data() + b.offset, b.nbytes);
    return m;
}

std::vector<float> Reader::read_f32(const std::string& name) const {
    const Block& b = get(name, "f32");
    std::vector<float> v(b.count);
    std::memcpy(v.data(), payload_.data() + b.offset, b.nbytes);
    return v;
}

std::vector<uint8_t> Reader::read_bits(const std::string& name, uint64_t* logical_bits) const {
    const Block& b = get(name, "bits");
    if (logical_bits) *logical_bits = b.count;
    return {payload_.begin() + static_cast<long>(b.offset),
            payload_.begin() + static_cast<long>(b.offset + b.nbytes)};
}

std::vector<uint8_t> Reader::read_u8(const std::string& name) const {
    const Block& b = get(name, "u8");
    return {payload_.begin() + static_cast<long>(b.offset),
            payload_.begin() + static_cast<long>(b.offset + b.nbytes)};
}

std::vector<uint64_t> Reader::read_u64(const std::string& name) const {
    const Block& b = get(name, "u64");
    std::vector<uint64_t> v(b.count);
    std::memcpy(v.data(), payload_.data() + b.offset, b.nbytes);
    return v;
}

std::string Reader::read_text(const std::string& name) const {
    const Block& b = get(name, "text");
    return {payload_.begin() + static_cast<long>(b.offset),
            payload_.begin() + static_cast<long>(b.offset + b.nbytes)};
}

}  // namespace container
}  // namespace crfnoise
