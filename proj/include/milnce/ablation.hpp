#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "milnce/config.hpp"
#include "milnce/corpus.hpp"
#include "milnce/errors.hpp"
#include "milnce/evalkit.hpp"
#include "milnce/trainer.hpp"

namespace milnce {

/// One (cell, seed) outcome. Metrics are present only when status is "ok";
/// failed cells record the abort message and the grid keeps going.
struct AblationRow {
    std::string cellId;
    nlohmann::json cellFields;  // axis assignments for this cell
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double finalLoss = 0.0;
    EvalReport eval;
};

struct AblationResult {
    std::vector<AblationRow> rows;        // one per (cell, seed), cell-major
    std::vector<AblationRow> medianRows;  // one per cell, seed column = median
    std::vector<std::size_t> evalKs;
};

namespace detail {

inline double median_or_nan(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return median_of(std::move(v));
}

}  // namespace detail

/// Trains and evaluates every axis combination for every seed. Cells are
/// enumerated in axis-major order (last axis fastest), matching the config
/// document order.
inline AblationResult run_ablation_grid(
    const AblateConfig& cfg, const Corpus& corpus,
    const std::function<void(const AblationRow&)>& onRow = nullptr) {
    std::vector<std::size_t> sizes;
    std::size_t cells = 1;
    for (const auto& [_, values] : cfg.axes) {
        sizes.push_back(values.size());
        cells *= values.size();
    }

    AblationResult result;
    result.evalKs = cfg.base.evalKs;
    for (std::size_t cell = 0; cell < cells; ++cell) {
        nlohmann::json cellDoc = cfg.baseDoc;
        nlohmann::json cellFields = nlohmann::json::object();
        std::size_t rest = cell;
        std::ostringstream cellId;
        for (std::size_t ax = cfg.axes.size(); ax-- > 0;) {
            const auto& [field, values] = cfg.axes[ax];
            std::size_t idx = rest % sizes[ax];
            rest /= sizes[ax];
            cellDoc[field] = values[idx];
            cellFields[field] = values[idx];
        }
        bool first = true;
        for (const auto& [field, value] : cellFields.items()) {
            if (!first) cellId << ",";
            first = false;
            cellId << field << "=" << value.dump();
        }

        std::vector<AblationRow> cellRows;
        for (std::uint64_t seed : cfg.seeds) {
            AblationRow row;
            row.cellId = cellId.str();
            row.cellFields = cellFields;
            row.seed = seed;
            try {
                nlohmann::json doc = cellDoc;
                doc["seed"] = seed;
                RunConfig rc = run_config_from_json(doc);
                rc.finalize();
                double lastLoss = 0.0;
                Checkpoint ck = train(rc.trainConfig(), corpus, run_config_to_json(rc).dump(),
                                      [&](std::size_t, double, double loss) { lastLoss = loss; });
                row.finalLoss = lastLoss;
                row.eval = evaluate_heldout(corpus, ck.encoders, rc.evalOptions());
                row.ok = true;
            } catch (const std::exception& e) {
                row.ok = false;
                row.error = e.what();
            }
            if (onRow) onRow(row);
            cellRows.push_back(row);
            result.rows.push_back(std::move(row));
        }

        AblationRow med;
        med.cellId = cellId.str();
        med.cellFields = cellFields;
        std::vector<double> losses, locs, probes, medrs;
        std::map<std::size_t, std::vector<double>> recalls;
        for (const AblationRow& r : cellRows) {
            if (!r.ok) continue;
            losses.push_back(r.finalLoss);
            locs.push_back(r.eval.localization);
            probes.push_back(r.eval.probe.accuracy);
            medrs.push_back(r.eval.retrieval.medianRank);
            for (const auto& [k, v] : r.eval.retrieval.recallAtK) recalls[k].push_back(v);
        }
        med.ok = !losses.empty();
        if (med.ok) {
            med.finalLoss = detail::median_or_nan(losses);
            med.eval.localization = detail::median_or_nan(locs);
            med.eval.probe.accuracy = detail::median_or_nan(probes);
            med.eval.retrieval.medianRank = detail::median_or_nan(medrs);
            for (auto& [k, v] : recalls) med.eval.retrieval.recallAtK[k] = detail::median_or_nan(v);
        } else {
            med.error = "all seeds failed";
        }
        result.medianRows.push_back(std::move(med));
    }
    return result;
}

/// CSV layout (documented in docs/formats.md): one row per (cell, seed) then
/// one median row per cell with "median" in the seed column.
inline std::string ablation_csv(const AblationResult& result) {
    std::ostringstream os;
    os.precision(17);
    os << "cell,seed,status,finalLoss";
    for (std::size_t k : result.evalKs) os << ",r_at_" << k;
    os << ",med_r,localization,probe_acc\n";
    auto emit = [&](const AblationRow& row, const std::string& seedLabel) {
        os << '"' << row.cellId << '"' << ',' << seedLabel << ','
           << (row.ok ? "ok" : "failed");
        if (row.ok) {
            os << ',' << row.finalLoss;
            for (std::size_t k : result.evalKs) {
                auto it = row.eval.retrieval.recallAtK.find(k);
                os << ',' << (it == row.eval.retrieval.recallAtK.end() ? 0.0 : it->second);
            }
            os << ',' << row.eval.retrieval.medianRank << ',' << row.eval.localization << ','
               << row.eval.probe.accuracy;
        } else {
            os << ',';
            for (std::size_t i = 0; i < result.evalKs.size(); ++i) os << ',';
            os << ",,,";
        }
        os << '\n';
    };
    for (const AblationRow& row : result.rows) emit(row, std::to_string(row.seed));
    for (const AblationRow& row : result.medianRows) emit(row, "median");
    return os.str();
}

inline nlohmann::json ablation_summary_json(const AblateConfig& cfg,
                                            const AblationResult& result) {
    nlohmann::json rows = nlohmann::json::array();
    auto rowJson = [&](const AblationRow& r, const nlohmann::json& seed) {
        nlohmann::json jr{{"cell", r.cellId},
                          {"fields", r.cellFields},
                          {"seed", seed},
                          {"status", r.ok ? "ok" : "failed"}};
        if (r.ok) {
            nlohmann::json rk = nlohmann::json::object();
            for (const auto& [k, v] : r.eval.retrieval.recallAtK) rk[std::to_string(k)] = v;
            jr["finalLoss"] = r.finalLoss;
            jr["recallAtK"] = rk;
            jr["medianRank"] = r.eval.retrieval.medianRank;
            jr["localization"] = r.eval.localization;
            jr["probeAccuracy"] = r.eval.probe.accuracy;
        } else {
            jr["error"] = r.error;
        }
        return jr;
    };
    for (const AblationRow& r : result.rows) rows.push_back(rowJson(r, r.seed));
    nlohmann::json medians = nlohmann::json::array();
    for (const AblationRow& r : result.medianRows) medians.push_back(rowJson(r, "median"));
    nlohmann::json axes = nlohmann::json::object();
    for (const auto& [field, values] : cfg.axes) axes[field] = values;
    return nlohmann::json{{"base", cfg.baseDoc},
                          {"axes", axes},
                          {"seeds", cfg.seeds},
                          {"rows", rows},
                          {"medians", medians}};
}

}  // namespace milnce
