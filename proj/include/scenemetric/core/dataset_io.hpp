#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scenemetric/core/error.hpp"
#include "scenemetric/core/scenario.hpp"

namespace scenemetric {

// Dataset directory layout:
//   manifest.json         version, image size, meters_per_pixel, one record per
//                         scenario (category, graph, route, group ids, file)
//   scenario_<id>.bin     S*S image floats, uint32 N, N*(x, y, t) floats
// All binary values are little-endian; floats are IEEE 754 binary32.

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

namespace io_detail {

inline void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("missing entry: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error("write failed for " + path.string());
}

inline std::string scenario_file_name(std::size_t id)
{
    std::ostringstream ss;
    ss << "scenario_" << std::setw(6) << std::setfill('0') << id << ".bin";
    return ss.str();
}

inline nlohmann::json graph_to_json(const TopologyGraph& g)
{
    nlohmann::json lanes = nlohmann::json::array();
    for (const auto& lane : g.lanes()) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : lane)
            pts.push_back({p.x, p.y});
        lanes.push_back(std::move(pts));
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges())
        edges.push_back({e.from, e.to, edge_kind_name(e.kind)});
    return {{"lanes", std::move(lanes)}, {"edges", std::move(edges)}};
}

inline TopologyGraph graph_from_json(const nlohmann::json& j)
{
    std::vector<Polyline> lanes;
    for (const auto& lane : j.at("lanes")) {
        Polyline pl;
        for (const auto& p : lane)
            pl.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        lanes.push_back(std::move(pl));
    }
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges"))
        edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(),
                         parse_edge_kind(e.at(2).get<std::string>())});
    return {std::move(lanes), std::move(edges)};
}

} // namespace io_detail

inline std::string encode_scenario_blob(const Scenario& s)
{
    std::string out;
    out.reserve(4 * s.image.pixels().size() + 4 + 12 * s.trajectory.size());
    for (float v : s.image.pixels())
        io_detail::put_f32(out, v);
    io_detail::put_u32(out, static_cast<std::uint32_t>(s.trajectory.size()));
    for (const auto& p : s.trajectory.points()) {
        io_detail::put_f32(out, p.x);
        io_detail::put_f32(out, p.y);
        io_detail::put_f32(out, p.t);
    }
    return out;
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& dir)
{
    require(!d.entries.empty(), "cannot save an empty dataset");
    const int size = d.entries.front().image.size();
    const double mpp = d.entries.front().image.meters_per_pixel();
    for (const auto& s : d.entries)
        require(s.image.size() == size && s.image.meters_per_pixel() == mpp,
                "shape mismatch: all scenarios in a dataset must share image size and resolution");
    require(d.groups.category.size() == d.size() && d.groups.graph.size() == d.size() &&
                d.groups.route.size() == d.size(),
            "group index does not cover every scenario");

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw Error("cannot create dataset directory " + dir.string() + ": " + ec.message());

    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& s = d.entries[i];
        const std::string file = io_detail::scenario_file_name(i);
        io_detail::write_file(dir / file, encode_scenario_blob(s));
        entries.push_back({{"id", i},
                           {"file", file},
                           {"category", category_name(s.category)},
                           {"num_points", s.trajectory.size()},
                           {"graph", io_detail::graph_to_json(s.graph)},
                           {"route", s.route.labels()},
                           {"groups",
                            {{"C", d.groups.category[i]}, {"G", d.groups.graph[i]}, {"R", d.groups.route[i]}}}});
    }
    nlohmann::json manifest = {{"format", "scenemetric-dataset"},
                               {"version", kDatasetFormatVersion},
                               {"image_size", size},
                               {"meters_per_pixel", mpp},
                               {"entries", std::move(entries)}};
    io_detail::write_file(dir / kManifestName, manifest.dump(1) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& dir)
{
    const auto manifest_path = dir / kManifestName;
    if (!std::filesystem::exists(manifest_path))
        throw Error("missing entry: no manifest at " + manifest_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(io_detail::read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed manifest " + manifest_path.string() + ": " + e.what());
    }

    Dataset d;
    try {
        const int version = manifest.at("version").get<int>();
        if (version != kDatasetFormatVersion)
            throw Error("version mismatch: manifest has version " + std::to_string(version) + ", expected " +
                        std::to_string(kDatasetFormatVersion));
        const int size = manifest.at("image_size").get<int>();
        const double mpp = manifest.at("meters_per_pixel").get<double>();
        require(size >= 8, "malformed manifest: image_size must be at least 8");
        const std::size_t pixel_count = static_cast<std::size_t>(size) * size;

        for (const auto& e : manifest.at("entries")) {
            const auto file = dir / e.at("file").get<std::string>();
            if (!std::filesystem::exists(file))
                throw Error("missing entry: " + file.string());
            const std::string blob = io_detail::read_file(file);
            const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
            const std::size_t n_points = e.at("num_points").get<std::size_t>();
            const std::size_t expected = 4 * pixel_count + 4 + 12 * n_points;
            if (blob.size() != expected)
                throw Error("shape mismatch in " + file.string() + ": expected " + std::to_string(expected) +
                            " bytes for S=" + std::to_string(size) + " and N=" + std::to_string(n_points) +
                            ", found " + std::to_string(blob.size()));
            std::vector<float> pixels(pixel_count);
            for (std::size_t i = 0; i < pixel_count; ++i)
                pixels[i] = io_detail::get_f32(bytes + 4 * i);
            const unsigned char* p = bytes + 4 * pixel_count;
            if (io_detail::get_u32(p) != n_points)
                throw Error("shape mismatch in " + file.string() + ": point count differs from manifest");
            p += 4;
            std::vector<TrajectoryPoint> pts(n_points);
            for (std::size_t i = 0; i < n_points; ++i, p += 12)
                pts[i] = {io_detail::get_f32(p), io_detail::get_f32(p + 4), io_detail::get_f32(p + 8)};

            std::vector<std::uint8_t> labels = e.at("route").get<std::vector<std::uint8_t>>();
            d.entries.emplace_back(InfrastructureImage(size, mpp, std::move(pixels)), Trajectory(std::move(pts)),
                                   io_detail::graph_from_json(e.at("graph")), RouteLabeling(std::move(labels)),
                                   parse_category(e.at("category").get<std::string>()));
            const auto& g = e.at("groups");
            d.groups.category.push_back(g.at("C").get<int>());
            d.groups.graph.push_back(g.at("G").get<int>());
            d.groups.route.push_back(g.at("R").get<int>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    require(!d.entries.empty(), "malformed manifest: no entries");
    return d;
}

} // namespace scenemetric
