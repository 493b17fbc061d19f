#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "scenemetric/core/dataset_io.hpp"
#include "scenemetric/net/model.hpp"

namespace scenemetric {

// Checkpoint layout (little-endian):
//   "SMCKPT01"                       magic
//   u32 header length, header JSON   format version and NetworkConfig
//   u64 optimizer step, u32 tensor count
//   per tensor: u32 name length, name, u32 rank, u64 dims..., f64 values...
// Tensors are the parameters followed by their Adam first and second moments
// (named "<param>@m" and "<param>@v").

inline constexpr int kCheckpointVersion = 1;

namespace ckpt_detail {

inline void put_u64(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    explicit Reader(const std::string& bytes) : b_(bytes) {}

    const unsigned char* take(std::size_t n)
    {
        if (pos_ + n > b_.size())
            throw Error("malformed checkpoint: truncated");
        const auto* p = reinterpret_cast<const unsigned char*>(b_.data() + pos_);
        pos_ += n;
        return p;
    }
    std::uint32_t u32() { return io_detail::get_u32(take(4)); }
    std::uint64_t u64()
    {
        const unsigned char* p = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i)
            v = (v << 8) | p[i];
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n)
    {
        const unsigned char* p = take(n);
        return {reinterpret_cast<const char*>(p), n};
    }
    bool done() const { return pos_ == b_.size(); }

private:
    const std::string& b_;
    std::size_t pos_ = 0;
};

inline nlohmann::json config_to_json(const NetworkConfig& c)
{
    return {{"image_size", c.image_size},
            {"latent_i", c.latent_i},
            {"latent_t", c.latent_t},
            {"latent", c.latent},
            {"conv_channels", c.conv_channels},
            {"attention_width", c.attention_width},
            {"attention_heads", c.attention_heads},
            {"feedforward_width", c.feedforward_width},
            {"fusion_hidden", c.fusion_hidden},
            {"seed", c.seed}};
}

inline NetworkConfig config_from_json(const nlohmann::json& j)
{
    NetworkConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.latent_i = j.at("latent_i").get<std::size_t>();
    c.latent_t = j.at("latent_t").get<std::size_t>();
    c.latent = j.at("latent").get<std::size_t>();
    c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
    c.attention_width = j.at("attention_width").get<std::size_t>();
    c.attention_heads = j.at("attention_heads").get<std::size_t>();
    c.feedforward_width = j.at("feedforward_width").get<std::size_t>();
    c.fusion_hidden = j.at("fusion_hidden").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline void put_tensor(std::string& out, const std::string& name, const ad::Shape& shape,
                       const std::vector<double>& values)
{
    io_detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    io_detail::put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape)
        put_u64(out, d);
    for (double v : values)
        put_f64(out, v);
}

} // namespace ckpt_detail

inline std::string encode_checkpoint(const ModelState& s)
{
    using namespace ckpt_detail;
    std::string out = "SMCKPT01";
    const std::string header =
        nlohmann::json{{"version", kCheckpointVersion}, {"network", config_to_json(s.config)}}.dump();
    io_detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    put_u64(out, s.adam.step);
    io_detail::put_u32(out, static_cast<std::uint32_t>(3 * s.params.size()));
    for (const auto& p : s.params)
        put_tensor(out, p.name, p.value.shape, p.value.values);
    for (std::size_t k = 0; k < s.params.size(); ++k)
        put_tensor(out, s.params[k].name + "@m", s.params[k].value.shape, s.adam.m[k]);
    for (std::size_t k = 0; k < s.params.size(); ++k)
        put_tensor(out, s.params[k].name + "@v", s.params[k].value.shape, s.adam.v[k]);
    return out;
}

inline ModelState decode_checkpoint(const std::string& bytes)
{
    using namespace ckpt_detail;
    Reader r(bytes);
    if (bytes.size() < 8 || r.str(8) != "SMCKPT01")
        throw Error("malformed checkpoint: bad magic");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.str(r.u32()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed checkpoint header: ") + e.what());
    }
    if (header.value("version", -1) != kCheckpointVersion)
        throw Error("version mismatch: checkpoint version " + header.value("version", nlohmann::json(-1)).dump() +
                    ", expected " + std::to_string(kCheckpointVersion));
    NetworkConfig cfg;
    try {
        cfg = config_from_json(header.at("network"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed checkpoint header: ") + e.what());
    }
    ModelState s = init_model(cfg);
    s.adam.step = r.u64();
    const std::uint32_t count = r.u32();
    if (count != 3 * s.params.size())
        throw Error("shape mismatch: checkpoint holds " + std::to_string(count) + " tensors, expected " +
                    std::to_string(3 * s.params.size()));
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::size_t k = t % s.params.size();
        const std::size_t part = t / s.params.size();
        auto& p = s.params[k];
        const std::string expect = p.name + (part == 0 ? "" : part == 1 ? "@m" : "@v");
        const std::string name = r.str(r.u32());
        if (name != expect)
            throw Error("malformed checkpoint: tensor '" + name + "' where '" + expect + "' was expected");
        ad::Shape shape(r.u32());
        for (auto& d : shape)
            d = r.u64();
        if (shape != p.value.shape)
            throw Error("shape mismatch: tensor '" + name + "' has shape " + ad::shape_string(shape) +
                        ", expected " + ad::shape_string(p.value.shape));
        std::vector<double>& dst = part == 0 ? p.value.values : part == 1 ? s.adam.m[k] : s.adam.v[k];
        for (double& v : dst)
            v = r.f64();
    }
    if (!r.done())
        throw Error("malformed checkpoint: trailing bytes");
    return s;
}

inline void save_checkpoint(const ModelState& s, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    io_detail::write_file(tmp, encode_checkpoint(s));
    std::filesystem::rename(tmp, path);
}

inline ModelState load_checkpoint(const std::filesystem::path& path)
{
    return decode_checkpoint(io_detail::read_file(path));
}

} // namespace scenemetric
