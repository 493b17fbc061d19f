#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "scenemetric/net/train.hpp"
#include "scenemetric/synthgen.hpp"

namespace scenemetric {

/// Invalid or unreadable configuration (as opposed to a runtime failure).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Everything a pipeline run needs. A single seed drives generation, network
/// initialization and mining.
struct RunConfig {
    std::uint64_t seed = 7;
    GeneratorConfig generator;
    TrainConfig training;
    std::vector<GroupLevel> eval_levels{GroupLevel::C, GroupLevel::G, GroupLevel::R};
    std::size_t eval_neighbors = 15;

    /// Sub-seeds are fixed functions of the global seed.
    void apply_seed(std::uint64_t s)
    {
        seed = s;
        generator.seed = derive_seed(s, {0x67656e}); // "gen"
        training.seed = derive_seed(s, {0x747261696e}); // "train"
    }

    void validate() const
    {
        try {
            generator.validate();
            training.validate();
            require(training.network.image_size == generator.image_size,
                    "network image_size must equal generator image_size");
            require(eval_neighbors >= 1, "eval neighbors must be at least 1");
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(std::string("invalid config: ") + e.what());
        }
    }
};

namespace config_detail {

using boost::property_tree::ptree;

template <typename T>
T parse_value(const std::string& section, const std::string& key, const std::string& text)
{
    if constexpr (std::is_unsigned_v<T>)
        if (text.find('-') != std::string::npos)
            throw ConfigError("invalid value '" + text + "' for " + section + "." + key + " (must be nonnegative)");
    std::istringstream in(text);
    T v{};
    in >> v;
    if (!in || !(in >> std::ws).eof())
        throw ConfigError("invalid value '" + text + "' for " + section + "." + key);
    return v;
}

inline bool parse_bool(const std::string& section, const std::string& key, const std::string& text)
{
    if (text == "true" || text == "1" || text == "yes" || text == "on")
        return true;
    if (text == "false" || text == "0" || text == "no" || text == "off")
        return false;
    throw ConfigError("invalid boolean '" + text + "' for " + section + "." + key);
}

inline std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos)
            out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

/// Reads one section, rejecting keys that no handler claims.
class Section {
public:
    Section(const ptree& root, std::string name) : name_(std::move(name))
    {
        if (auto child = root.get_child_optional(name_))
            for (const auto& [k, v] : *child)
                values_[k] = v.get_value<std::string>();
    }

    template <typename T>
    void read(const std::string& key, T& target)
    {
        if (auto it = take(key))
            target = parse_value<T>(name_, key, **it);
    }

    void read_bool(const std::string& key, bool& target)
    {
        if (auto it = take(key))
            target = parse_bool(name_, key, **it);
    }

    std::optional<std::string> read_string(const std::string& key)
    {
        if (auto it = take(key))
            return **it;
        return std::nullopt;
    }

    void finish() const
    {
        for (const auto& [k, v] : values_)
            if (!used_.count(k))
                throw ConfigError("unknown config key " + name_ + "." + k);
    }

private:
    std::optional<const std::string*> take(const std::string& key)
    {
        auto it = values_.find(key);
        if (it == values_.end())
            return std::nullopt;
        used_.insert(key);
        return &it->second;
    }

    std::string name_;
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
};

} // namespace config_detail

inline RunConfig parse_run_config(const std::string& ini_text)
{
    using namespace config_detail;
    ptree root;
    try {
        std::istringstream in(ini_text);
        boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    const std::set<std::string> known{"run", "generator", "network", "margins", "weights", "mining", "training", "eval"};
    for (const auto& [name, child] : root) {
        if (!known.count(name))
            throw ConfigError("unknown config section [" + name + "]");
        if (child.empty() && !child.data().empty())
            throw ConfigError("config key '" + name + "' outside a section");
    }

    RunConfig cfg;
    Section run(root, "run");
    std::uint64_t seed = cfg.seed;
    run.read("seed", seed);
    run.finish();
    cfg.apply_seed(seed);

    auto& g = cfg.generator;
    Section gen(root, "generator");
    gen.read("scenarios_per_template", g.scenarios_per_template);
    if (auto short_key = gen.read_string("per_template")) {
        if (root.get_optional<std::string>("generator.scenarios_per_template"))
            throw ConfigError("generator.per_template and generator.scenarios_per_template are both set");
        g.scenarios_per_template = parse_value<int>("generator", "per_template", *short_key);
    }
    if (auto t = gen.read_string("templates"); t && *t != "all") {
        g.templates.clear();
        try {
            for (const auto& name : split_list(*t))
                g.templates.push_back(parse_category(name));
        } catch (const Error& e) {
            throw ConfigError(std::string("generator.templates: ") + e.what());
        }
    }
    gen.read("image_size", g.image_size);
    gen.read("jitter", g.jitter);
    gen.read("max_clutter_roads", g.max_clutter_roads);
    gen.read("extent", g.extent);
    gen.read("duration", g.duration);
    gen.read("time_step", g.time_step);
    gen.finish();

    auto& n = cfg.training.network;
    n.image_size = g.image_size;
    Section net(root, "network");
    net.read("latent_i", n.latent_i);
    net.read("latent_t", n.latent_t);
    net.read("latent", n.latent);
    if (auto c = net.read_string("conv_channels")) {
        n.conv_channels.clear();
        for (const auto& v : split_list(*c))
            n.conv_channels.push_back(parse_value<std::size_t>("network", "conv_channels", v));
    }
    net.read("attention_width", n.attention_width);
    net.read("attention_heads", n.attention_heads);
    net.read("feedforward_width", n.feedforward_width);
    net.read("fusion_hidden", n.fusion_hidden);
    net.finish();

    auto& m = cfg.training.margins;
    Section mar(root, "margins");
    mar.read("alpha_g", m.alpha_g);
    mar.read("alpha_r", m.alpha_r);
    mar.read("alpha_t", m.alpha_t);
    mar.finish();

    auto& w = cfg.training.weights;
    Section wt(root, "weights");
    wt.read("beta_m", w.beta_m);
    wt.read("beta_g", w.beta_g);
    wt.read("beta_r", w.beta_r);
    wt.read("beta_t", w.beta_t);
    wt.read("beta_rec", w.beta_rec);
    wt.read("gamma_i", w.gamma_i);
    wt.read("gamma_i_bar", w.gamma_i_bar);
    wt.read("gamma_t", w.gamma_t);
    wt.read("gamma_t_bar", w.gamma_t_bar);
    wt.finish();

    Section mine(root, "mining");
    if (auto s = mine.read_string("strategy")) {
        try {
            cfg.training.strategy = parse_strategy(*s);
        } catch (const Error& e) {
            throw ConfigError(std::string("mining.strategy: ") + e.what());
        }
    }
    mine.finish();

    auto& t = cfg.training;
    Section tr(root, "training");
    tr.read("epochs", t.epochs);
    tr.read("lr", t.adam.lr);
    tr.read_bool("cosine_decay", t.adam.cosine_decay);
    tr.read("final_lr_fraction", t.adam.final_lr_fraction);
    tr.finish();

    Section ev(root, "eval");
    if (auto l = ev.read_string("levels")) {
        cfg.eval_levels.clear();
        for (const auto& name : split_list(*l)) {
            if (name == "C")
                cfg.eval_levels.push_back(GroupLevel::C);
            else if (name == "G")
                cfg.eval_levels.push_back(GroupLevel::G);
            else if (name == "R")
                cfg.eval_levels.push_back(GroupLevel::R);
            else
                throw ConfigError("eval.levels: unknown level '" + name + "' (expected C, G or R)");
        }
    }
    ev.read("neighbors", cfg.eval_neighbors);
    ev.finish();

    cfg.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

} // namespace scenemetric
