#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "milnce/corpus.hpp"
#include "milnce/errors.hpp"
#include "milnce/evalkit.hpp"
#include "milnce/trainer.hpp"

namespace milnce {

/// One flat JSON document drives generation, training and evaluation. Every
/// field has a default, unknown keys are rejected, and the resolved document
/// is echoed into every output file so any artifact reproduces its run.
struct RunConfig {
    std::uint64_t seed = 1;

    // corpus
    std::size_t numStreams = 2000;
    std::size_t segmentsPerStream = 12;
    std::size_t numTopics = 20;
    std::size_t topicDim = 16;
    std::size_t clipDim = 32;
    std::size_t vocabSize = 200;
    std::size_t tokensPerNarration = 8;
    double noiseSigma = 0.1;
    double pAligned = 0.5;
    std::size_t maxOffset = 2;
    double pIrrelevant = 0.1;

    // encoders
    std::size_t embedDim = 16;
    std::size_t hiddenDim = 64;
    std::size_t outputDim = 16;
    std::size_t maxWords = 16;

    // training
    std::string lossKind = "mil-nce";
    std::size_t bagSize = 5;
    std::string negMode = "joint";
    std::size_t batchSize = 32;
    std::size_t totalSteps = 2000;
    double baseLr = 1e-3;
    std::size_t warmupSteps = 100;
    std::array<std::size_t, 2> decaySteps = {1200, 1600};
    bool decayStepsExplicit = false;  // tracks whether the user pinned them
    double decayFactor = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double margin = 0.2;
    std::size_t checkpointEvery = 0;
    std::size_t logEvery = 50;
    double heldoutFraction = 0.1;

    // evaluation
    std::vector<std::size_t> evalKs = {1, 5, 10};
    double probeLambda = 1e-4;
    double probeTol = 1e-6;
    std::size_t probeMaxIters = 5000;
    double probeTrainFraction = 0.8;

    GenConfig genConfig() const {
        GenConfig g;
        g.numStreams = numStreams;
        g.segmentsPerStream = segmentsPerStream;
        g.numTopics = numTopics;
        g.topicDim = topicDim;
        g.clipDim = clipDim;
        g.vocabSize = vocabSize;
        g.tokensPerNarration = tokensPerNarration;
        g.noiseSigma = noiseSigma;
        g.pAligned = pAligned;
        g.maxOffset = maxOffset;
        g.pIrrelevant = pIrrelevant;
        g.seed = seed;
        return g;
    }

    TrainConfig trainConfig() const {
        TrainConfig t;
        t.lossKind = loss_kind_from_string(lossKind);
        t.bagSize = bagSize;
        t.negMode = negative_mode_from_string(negMode);
        t.batchSize = batchSize;
        t.totalSteps = totalSteps;
        t.seed = seed;
        t.encoder = EncoderConfig{clipDim,   embedDim, hiddenDim,
                                  outputDim, vocabSize, maxWords,
                                  t.lossKind == LossKind::attn_nce};
        t.schedule = Schedule{baseLr, warmupSteps, decaySteps, decayFactor};
        t.adam = AdamConfig{beta1, beta2, epsilon};
        t.margin = margin;
        t.checkpointEvery = checkpointEvery;
        t.logEvery = logEvery;
        t.heldoutFraction = heldoutFraction;
        return t;
    }

    EvalOptions evalOptions() const {
        EvalOptions e;
        e.ks = evalKs;
        e.heldoutFraction = heldoutFraction;
        e.probe = ProbeConfig{probeLambda, probeTol, probeMaxIters};
        e.probeTrainFraction = probeTrainFraction;
        return e;
    }

    /// Fills in decaySteps at 60% / 80% of totalSteps unless explicitly set,
    /// then validates the derived configs.
    void finalize() {
        if (!decayStepsExplicit) {
            decaySteps = {static_cast<std::size_t>(0.6 * static_cast<double>(totalSteps)),
                          static_cast<std::size_t>(0.8 * static_cast<double>(totalSteps))};
        }
        try {
            genConfig().validate();
            if (totalSteps > 0) trainConfig().validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    return nlohmann::json{
        {"seed", c.seed},
        {"numStreams", c.numStreams},
        {"segmentsPerStream", c.segmentsPerStream},
        {"numTopics", c.numTopics},
        {"topicDim", c.topicDim},
        {"clipDim", c.clipDim},
        {"vocabSize", c.vocabSize},
        {"tokensPerNarration", c.tokensPerNarration},
        {"noiseSigma", c.noiseSigma},
        {"pAligned", c.pAligned},
        {"maxOffset", c.maxOffset},
        {"pIrrelevant", c.pIrrelevant},
        {"embedDim", c.embedDim},
        {"hiddenDim", c.hiddenDim},
        {"outputDim", c.outputDim},
        {"maxWords", c.maxWords},
        {"lossKind", c.lossKind},
        {"bagSize", c.bagSize},
        {"negMode", c.negMode},
        {"batchSize", c.batchSize},
        {"totalSteps", c.totalSteps},
        {"baseLr", c.baseLr},
        {"warmupSteps", c.warmupSteps},
        {"decaySteps", c.decaySteps},
        {"decayFactor", c.decayFactor},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"epsilon", c.epsilon},
        {"margin", c.margin},
        {"checkpointEvery", c.checkpointEvery},
        {"logEvery", c.logEvery},
        {"heldoutFraction", c.heldoutFraction},
        {"evalKs", c.evalKs},
        {"probeLambda", c.probeLambda},
        {"probeTol", c.probeTol},
        {"probeMaxIters", c.probeMaxIters},
        {"probeTrainFraction", c.probeTrainFraction},
    };
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

inline const std::set<std::string>& run_config_keys() {
    static const std::set<std::string> keys = [] {
        std::set<std::string> k;
        for (const auto& [key, _] : run_config_to_json(RunConfig{}).items()) k.insert(key);
        k.insert("preset");
        return k;
    }();
    return keys;
}

}  // namespace detail

/// Named dimension presets. "desk" is the default; "table1" switches the
/// towers to the full-scale published shapes (word vectors 300 wide, hidden
/// 2048, joint space 512, clip features 1024).
inline void apply_preset(RunConfig& c, const std::string& preset) {
    if (preset == "desk") return;
    if (preset == "table1") {
        c.clipDim = 1024;
        c.embedDim = 300;
        c.hiddenDim = 2048;
        c.outputDim = 512;
        c.maxWords = 16;
        return;
    }
    throw ConfigError("config: unknown preset '" + preset + "'");
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("config: top-level JSON value must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!detail::run_config_keys().count(key)) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    RunConfig c;
    if (j.contains("preset")) {
        apply_preset(c, j.at("preset").get<std::string>());
    }
    detail::read_field(j, "seed", c.seed);
    detail::read_field(j, "numStreams", c.numStreams);
    detail::read_field(j, "segmentsPerStream", c.segmentsPerStream);
    detail::read_field(j, "numTopics", c.numTopics);
    detail::read_field(j, "topicDim", c.topicDim);
    detail::read_field(j, "clipDim", c.clipDim);
    detail::read_field(j, "vocabSize", c.vocabSize);
    detail::read_field(j, "tokensPerNarration", c.tokensPerNarration);
    detail::read_field(j, "noiseSigma", c.noiseSigma);
    detail::read_field(j, "pAligned", c.pAligned);
    detail::read_field(j, "maxOffset", c.maxOffset);
    detail::read_field(j, "pIrrelevant", c.pIrrelevant);
    detail::read_field(j, "embedDim", c.embedDim);
    detail::read_field(j, "hiddenDim", c.hiddenDim);
    detail::read_field(j, "outputDim", c.outputDim);
    detail::read_field(j, "maxWords", c.maxWords);
    detail::read_field(j, "lossKind", c.lossKind);
    detail::read_field(j, "bagSize", c.bagSize);
    detail::read_field(j, "negMode", c.negMode);
    detail::read_field(j, "batchSize", c.batchSize);
    detail::read_field(j, "totalSteps", c.totalSteps);
    detail::read_field(j, "baseLr", c.baseLr);
    detail::read_field(j, "warmupSteps", c.warmupSteps);
    if (j.contains("decaySteps")) {
        detail::read_field(j, "decaySteps", c.decaySteps);
        c.decayStepsExplicit = true;
    }
    detail::read_field(j, "decayFactor", c.decayFactor);
    detail::read_field(j, "beta1", c.beta1);
    detail::read_field(j, "beta2", c.beta2);
    detail::read_field(j, "epsilon", c.epsilon);
    detail::read_field(j, "margin", c.margin);
    detail::read_field(j, "checkpointEvery", c.checkpointEvery);
    detail::read_field(j, "logEvery", c.logEvery);
    detail::read_field(j, "heldoutFraction", c.heldoutFraction);
    detail::read_field(j, "evalKs", c.evalKs);
    detail::read_field(j, "probeLambda", c.probeLambda);
    detail::read_field(j, "probeTol", c.probeTol);
    detail::read_field(j, "probeMaxIters", c.probeMaxIters);
    detail::read_field(j, "probeTrainFraction", c.probeTrainFraction);
    return c;
}

/// Parses a JSON document, translating parse failures into ConfigError with a
/// 1-based line number.
inline nlohmann::json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1;
        const std::size_t stop = std::min(e.byte, text.size());
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') ++line;
        }
        throw ConfigError(origin + ": parse error at line " + std::to_string(line) + ": " +
                          e.what());
    }
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_json_text(buf.str(), path.string());
}

/// `key=value` overrides for top-level scalar fields only. Values parse as
/// JSON scalars, falling back to a plain string (so lossKind=mil-nce works
/// unquoted).
inline void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides) {
    for (const std::string& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("override '" + ov + "' is not of the form key=value");
        }
        std::string key = ov.substr(0, eq);
        std::string rawValue = ov.substr(eq + 1);
        if (!detail::run_config_keys().count(key)) {
            throw ConfigError("override: unknown key '" + key + "'");
        }
        nlohmann::json value;
        try {
            value = nlohmann::json::parse(rawValue);
        } catch (const nlohmann::json::parse_error&) {
            value = rawValue;
        }
        if (!value.is_primitive()) {
            throw ConfigError("override: '" + key + "' is not a scalar; only top-level "
                              "scalar fields can be overridden from the command line");
        }
        doc[key] = value;
    }
}

inline RunConfig load_run_config(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides = {}) {
    nlohmann::json doc = path.empty() ? nlohmann::json::object() : parse_json_file(path);
    apply_overrides(doc, overrides);
    RunConfig c = run_config_from_json(doc);
    c.finalize();
    return c;
}

// ---------------------------------------------------------------------------
// Ablation grid description: a base run config plus axes to cross and the
// seeds to repeat each cell with.
// ---------------------------------------------------------------------------

struct AblateConfig {
    RunConfig base;
    nlohmann::json baseDoc;                       // raw base overrides, re-echoed
    std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;
    std::vector<std::uint64_t> seeds;
};

inline AblateConfig ablate_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("ablate config: top-level value must be an object");
    for (const auto& [key, _] : j.items()) {
        if (key != "base" && key != "axes" && key != "seeds") {
            throw ConfigError("ablate config: unknown key '" + key + "'");
        }
    }
    AblateConfig a;
    a.baseDoc = j.value("base", nlohmann::json::object());
    a.base = run_config_from_json(a.baseDoc);
    if (!j.contains("axes") || !j.at("axes").is_object() || j.at("axes").empty()) {
        throw ConfigError("ablate config: 'axes' must be a nonempty object");
    }
    for (const auto& [field, values] : j.at("axes").items()) {
        if (!detail::run_config_keys().count(field)) {
            throw ConfigError("ablate config: unknown axis field '" + field + "'");
        }
        if (!values.is_array() || values.empty()) {
            throw ConfigError("ablate config: axis '" + field + "' needs a nonempty array");
        }
        a.axes.emplace_back(field, std::vector<nlohmann::json>(values.begin(), values.end()));
    }
    if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty()) {
        throw ConfigError("ablate config: 'seeds' must be a nonempty array");
    }
    a.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    return a;
}

}  // namespace milnce
