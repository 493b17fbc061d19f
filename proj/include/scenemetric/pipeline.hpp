#pragma once

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include "scenemetric/core/dataset_io.hpp"
#include "scenemetric/eval/projection.hpp"
#include "scenemetric/eval/report.hpp"
#include "scenemetric/mining.hpp"
#include "scenemetric/net/checkpoint.hpp"
#include "scenemetric/net/train.hpp"
#include "scenemetric/run_config.hpp"

// Subcommand bodies behind the command-line tool. Each validates its inputs
// before writing anything.

namespace scenemetric {

namespace pipeline_detail {

inline std::string fmt(double v)
{
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

inline void ensure_parent(const std::filesystem::path& file)
{
    if (!file.has_parent_path())
        return;
    std::error_code ec;
    std::filesystem::create_directories(file.parent_path(), ec);
    if (ec)
        throw Error("cannot create directory " + file.parent_path().string() + ": " + ec.message());
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    ensure_parent(path);
    io_detail::write_file(path, text);
}

inline Dataset load_checked(const std::filesystem::path& dir)
{
    Dataset d = load_dataset(dir);
    require(d.size() > 0, "dataset " + dir.string() + " is empty");
    return d;
}

inline void check_compatible(const ModelState& s, const Dataset& d)
{
    if (s.config.image_size != d[0].image.size())
        throw ConfigError("checkpoint expects image size " + std::to_string(s.config.image_size) +
                          " but the dataset has " + std::to_string(d[0].image.size()));
}

} // namespace pipeline_detail

inline Dataset cmd_gen(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log)
{
    cfg.validate();
    Dataset d = generate(cfg.generator);
    try {
        save_dataset(d, out_dir);
    } catch (const std::filesystem::filesystem_error& e) {
        throw Error("cannot write dataset to " + out_dir.string() + ": " + e.code().message());
    }
    log << "wrote " << d.size() << " scenarios to " << out_dir.string() << "\n";
    for (GroupLevel l : kAllLevels)
        log << "groups " << group_level_name(l) << ": " << group_count(d.groups.level(l)) << "\n";
    return d;
}

inline std::string metrics_csv_header() { return "epoch,L_G,L_R,L_T,L_Rec,total,ordering_satisfaction\n"; }

inline std::string metrics_csv_row(const EpochMetrics& m)
{
    using pipeline_detail::fmt;
    return std::to_string(m.epoch) + "," + fmt(m.l_g) + "," + fmt(m.l_r) + "," + fmt(m.l_t) + "," + fmt(m.l_rec) +
           "," + fmt(m.total) + "," + fmt(m.ordering_satisfaction) + "\n";
}

/// Trains and writes the checkpoint after every epoch, so a divergence leaves
/// the last good one in place together with the metrics logged so far.
inline TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                             const std::filesystem::path& checkpoint, const std::filesystem::path& metrics,
                             std::ostream& log)
{
    cfg.validate();
    const Dataset d = pipeline_detail::load_checked(dataset_dir);
    if (d[0].image.size() != cfg.training.network.image_size)
        throw ConfigError("config image size " + std::to_string(cfg.training.network.image_size) +
                          " does not match dataset image size " + std::to_string(d[0].image.size()));
    {
        const ClassIndex idx = build_index(d);
        if (skipped_anchors(idx, cfg.training.strategy) == d.size())
            throw Error("no anchor of dataset " + dataset_dir.string() + " can be mined with strategy " +
                        std::string(strategy_name(cfg.training.strategy)));
    }
    pipeline_detail::ensure_parent(checkpoint);
    pipeline_detail::ensure_parent(metrics);

    std::string csv = metrics_csv_header();
    pipeline_detail::write_text(metrics, csv);
    TrainResult r = train(d, cfg.training, [&](const ModelState& s, const EpochMetrics& m) {
        save_checkpoint(s, checkpoint);
        csv += metrics_csv_row(m);
        pipeline_detail::write_text(metrics, csv);
        log << "epoch " << m.epoch << " total " << m.total << " ordering " << m.ordering_satisfaction << "\n";
    });
    if (r.log.empty())
        save_checkpoint(r.state, checkpoint);
    return r;
}

inline EvalReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                           const std::filesystem::path& dataset_dir, const std::filesystem::path& out_report)
{
    cfg.validate();
    const ModelState s = load_checkpoint(checkpoint);
    const Dataset d = pipeline_detail::load_checked(dataset_dir);
    pipeline_detail::check_compatible(s, d);
    const EvalReport r = evaluate(embed_dataset(s, d), d, cfg.eval_neighbors, cfg.eval_levels);
    pipeline_detail::write_text(out_report, report_to_json(r).dump(2) + "\n");
    return r;
}

inline Projection cmd_project(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_dir,
                              const std::filesystem::path& out_csv, std::ostream& log)
{
    const ModelState s = load_checkpoint(checkpoint);
    const Dataset d = pipeline_detail::load_checked(dataset_dir);
    pipeline_detail::check_compatible(s, d);
    const Projection p = project_2d(embed_dataset(s, d));
    if (p.zero_variance)
        log << "warning: embeddings have zero variance; projection is all zeros\n";
    std::string csv = "id,x,y,category,graph_class,route_class\n";
    for (std::size_t i = 0; i < d.size(); ++i)
        csv += std::to_string(i) + "," + pipeline_detail::fmt(p.points[i][0]) + "," +
               pipeline_detail::fmt(p.points[i][1]) + "," + std::string(category_name(d[i].category)) + "," +
               std::to_string(d.groups.graph[i]) + "," + std::to_string(d.groups.route[i]) + "\n";
    pipeline_detail::write_text(out_csv, csv);
    return p;
}

/// One epoch of quadruplets as CSV (anchor_id, pp_id, pn_id, nn_id, s_t).
inline MinedEpoch cmd_mine(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                           const std::filesystem::path& out_csv, std::ostream& log)
{
    cfg.validate();
    const Dataset d = pipeline_detail::load_checked(dataset_dir);
    const ClassIndex idx = build_index(d);
    Rng rng(derive_seed(cfg.training.seed, {2}));
    const MinedEpoch e = mine_epoch(idx, cfg.training.strategy, rng);
    std::string csv = "anchor_id,pp_id,pn_id,nn_id,s_t\n";
    for (const auto& q : e.quadruplets)
        csv += std::to_string(q.anchor) + "," + std::to_string(q.pp) + "," + std::to_string(q.pn) + "," +
               std::to_string(q.nn) + "," + pipeline_detail::fmt(q.s_t) + "\n";
    pipeline_detail::write_text(out_csv, csv);
    log << e.quadruplets.size() << " quadruplets, " << e.skipped.size() << " anchors skipped\n";
    return e;
}

} // namespace scenemetric
