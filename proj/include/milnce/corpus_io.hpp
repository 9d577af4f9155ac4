#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "milnce/corpus.hpp"
#include "milnce/errors.hpp"

namespace milnce {

// Corpus container, JSON, documented in docs/formats.md. The config echo in
// the header reproduces the generating run exactly.

inline nlohmann::json gen_config_to_json(const GenConfig& cfg) {
    return nlohmann::json{
        {"numStreams", cfg.numStreams},
        {"segmentsPerStream", cfg.segmentsPerStream},
        {"numTopics", cfg.numTopics},
        {"topicDim", cfg.topicDim},
        {"clipDim", cfg.clipDim},
        {"vocabSize", cfg.vocabSize},
        {"tokensPerNarration", cfg.tokensPerNarration},
        {"noiseSigma", cfg.noiseSigma},
        {"pAligned", cfg.pAligned},
        {"maxOffset", cfg.maxOffset},
        {"pIrrelevant", cfg.pIrrelevant},
        {"seed", cfg.seed},
    };
}

inline GenConfig gen_config_from_json(const nlohmann::json& j) {
    GenConfig cfg;
    cfg.numStreams = j.at("numStreams").get<std::size_t>();
    cfg.segmentsPerStream = j.at("segmentsPerStream").get<std::size_t>();
    cfg.numTopics = j.at("numTopics").get<std::size_t>();
    cfg.topicDim = j.at("topicDim").get<std::size_t>();
    cfg.clipDim = j.at("clipDim").get<std::size_t>();
    cfg.vocabSize = j.at("vocabSize").get<std::size_t>();
    cfg.tokensPerNarration = j.at("tokensPerNarration").get<std::size_t>();
    cfg.noiseSigma = j.at("noiseSigma").get<double>();
    cfg.pAligned = j.at("pAligned").get<double>();
    cfg.maxOffset = j.at("maxOffset").get<std::size_t>();
    cfg.pIrrelevant = j.at("pIrrelevant").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

inline const char* alignment_kind_name(AlignmentKind k) {
    switch (k) {
        case AlignmentKind::aligned: return "aligned";
        case AlignmentKind::misaligned: return "misaligned";
        case AlignmentKind::irrelevant: return "irrelevant";
    }
    throw std::logic_error("bad AlignmentKind");
}

inline AlignmentKind alignment_kind_from_name(const std::string& s) {
    if (s == "aligned") return AlignmentKind::aligned;
    if (s == "misaligned") return AlignmentKind::misaligned;
    if (s == "irrelevant") return AlignmentKind::irrelevant;
    throw ArtifactError("corpus: unknown alignment kind '" + s + "'");
}

inline nlohmann::json corpus_to_json(const Corpus& corpus) {
    nlohmann::json streams = nlohmann::json::array();
    for (const Stream& s : corpus.streams) {
        nlohmann::json segs = nlohmann::json::array();
        for (const Segment& seg : s.segments) {
            segs.push_back(nlohmann::json{
                {"t", seg.timestamp},
                {"topic", seg.topicId},
                {"clip", seg.clip},
                {"tokens", seg.tokens},
                {"alignedTopic", seg.alignedTopicId},
                {"kind", alignment_kind_name(seg.kind)},
                {"matched", seg.matchedSegment},
            });
        }
        streams.push_back(nlohmann::json{{"id", s.id}, {"segments", std::move(segs)}});
    }
    return nlohmann::json{
        {"version", 1},
        {"config", gen_config_to_json(corpus.config)},
        {"streams", std::move(streams)},
    };
}

inline Corpus corpus_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j.at("version").get<int>() != 1) {
        throw ArtifactError("corpus: unsupported or missing version");
    }
    Corpus corpus;
    corpus.config = gen_config_from_json(j.at("config"));
    for (const auto& js : j.at("streams")) {
        Stream s;
        s.id = js.at("id").get<std::size_t>();
        for (const auto& jseg : js.at("segments")) {
            Segment seg;
            seg.timestamp = jseg.at("t").get<double>();
            seg.topicId = jseg.at("topic").get<std::uint32_t>();
            seg.clip = jseg.at("clip").get<std::vector<double>>();
            seg.tokens = jseg.at("tokens").get<std::vector<std::uint32_t>>();
            seg.alignedTopicId = jseg.at("alignedTopic").get<std::uint32_t>();
            seg.kind = alignment_kind_from_name(jseg.at("kind").get<std::string>());
            seg.matchedSegment = jseg.at("matched").get<std::size_t>();
            s.segments.push_back(std::move(seg));
        }
        corpus.streams.push_back(std::move(s));
    }
    return corpus;
}

inline void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ArtifactError("corpus: cannot open '" + tmp.string() + "' for write");
        os << corpus_to_json(corpus).dump() << '\n';
        if (!os) throw ArtifactError("corpus: write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ArtifactError("corpus: cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ArtifactError("corpus: parse error in '" + path.string() + "': " + e.what());
    }
    return corpus_from_json(j);
}

}  // namespace milnce
