// milnce: synthetic narrated-stream contrastive training at desk scale.
//
// Subcommands: gen, train, eval, gradcheck, ablate. One JSON config drives a
// run; --set key=value overrides top-level scalar fields. Exit codes:
//   0 success, 2 config/input error, 3 numeric abort,
//   4 gradient check failure, 5 artifact format mismatch.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "milnce/ablation.hpp"
#include "milnce/config.hpp"
#include "milnce/corpus_io.hpp"
#include "milnce/errors.hpp"
#include "milnce/evalkit.hpp"
#include "milnce/gradcheck.hpp"
#include "milnce/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitGradcheck = 4;
constexpr int kExitArtifact = 5;

void write_text_atomic(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw milnce::ConfigError("cannot open '" + tmp.string() + "' for write");
        os << text;
        if (!os) throw milnce::ConfigError("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

json retrieval_json(const milnce::RetrievalResult& r) {
    json rk = json::object();
    for (const auto& [k, v] : r.recallAtK) rk[std::to_string(k)] = v;
    return json{{"recallAtK", rk}, {"medianRank", r.medianRank}};
}

int cmd_gen(const std::string& configPath, const std::string& outPath,
            const std::vector<std::string>& sets) {
    milnce::RunConfig rc = milnce::load_run_config(configPath, sets);
    milnce::Corpus corpus = milnce::generate_corpus(rc.genConfig());
    milnce::save_corpus(outPath, corpus);
    milnce::CorpusStats st = milnce::corpus_stats(corpus);
    std::printf("wrote %s: %zu streams, %zu segments\n", outPath.c_str(),
                corpus.streams.size(), st.totalSegments);
    std::printf("misaligned fraction (non-irrelevant): %.4f\n", st.misalignedFraction);
    std::printf("irrelevant fraction: %.4f\n", st.irrelevantFraction);
    return 0;
}

int cmd_train(const std::string& configPath, const std::string& corpusPath,
              const std::string& outDir, const std::vector<std::string>& sets) {
    milnce::RunConfig rc = milnce::load_run_config(configPath, sets);
    milnce::Corpus corpus = milnce::load_corpus(corpusPath);
    milnce::TrainConfig tc = rc.trainConfig();
    const std::string echo = milnce::run_config_to_json(rc).dump();

    fs::create_directories(outDir);
    fs::path ckptPath = fs::path(outDir) / "checkpoint.bin";
    fs::path metricsPath = fs::path(outDir) / "metrics.jsonl";

    std::ostringstream metrics;
    milnce::Checkpoint ck = milnce::init_checkpoint(tc, echo);
    auto logLine = [&](std::size_t step, double lr, double loss) {
        json line{{"step", step}, {"lr", lr}, {"loss", loss}};
        metrics << line.dump() << '\n';
    };
    milnce::train_continue(ck, tc, corpus, [&](std::size_t step, double lr, double loss) {
        if (tc.logEvery > 0 && (step % tc.logEvery == 0 || step == tc.totalSteps)) {
            logLine(step, lr, loss);
        }
        if (tc.checkpointEvery > 0 && step % tc.checkpointEvery == 0 &&
            step != tc.totalSteps) {
            milnce::save_checkpoint(
                fs::path(outDir) / ("checkpoint-" + std::to_string(step) + ".bin"), ck);
        }
    });
    milnce::save_checkpoint(ckptPath, ck);
    write_text_atomic(metricsPath, metrics.str());
    std::printf("wrote %s and %s after %llu steps\n", ckptPath.c_str(), metricsPath.c_str(),
                static_cast<unsigned long long>(ck.step));
    return 0;
}

int cmd_eval(const std::string& checkpointPath, const std::string& corpusPath,
             const std::string& outPath, const std::vector<std::string>& sets,
             bool injectOracle) {
    milnce::Checkpoint ck = milnce::load_checkpoint(checkpointPath);
    milnce::Corpus corpus = milnce::load_corpus(corpusPath);
    if (ck.configEcho.empty()) {
        throw milnce::ArtifactError("checkpoint carries no config echo; cannot evaluate");
    }
    json doc = milnce::parse_json_text(ck.configEcho, "checkpoint config echo");
    milnce::apply_overrides(doc, sets);
    milnce::RunConfig rc = milnce::run_config_from_json(doc);
    rc.finalize();

    json out{{"config", milnce::run_config_to_json(rc)}, {"seed", rc.seed}};
    milnce::EvalOptions opts = rc.evalOptions();
    if (injectOracle) {
        // Test hook: retrieval and localization scored with ground-truth
        // oracle scores (1 for the true pair, 0 otherwise) instead of the
        // trained encoders.
        milnce::StreamSplit split =
            milnce::split_streams(corpus.streams.size(), opts.heldoutFraction);
        std::vector<std::size_t> offsets(corpus.streams.size(), 0);
        std::size_t items = 0;
        for (std::size_t s = split.trainEnd; s < split.total; ++s) {
            offsets[s] = items;
            items += corpus.streams[s].segments.size();
        }
        std::vector<std::size_t> gt;
        std::vector<std::size_t> queryOffsets;
        for (std::size_t s = split.trainEnd; s < split.total; ++s) {
            const milnce::Stream& stream = corpus.streams[s];
            for (std::size_t j = 0; j < stream.segments.size(); ++j) {
                if (stream.segments[j].isIrrelevant()) continue;
                gt.push_back(offsets[s] + stream.segments[j].matchedSegment);
            }
        }
        milnce::Matrix scores(gt.size(), items);
        for (std::size_t q = 0; q < gt.size(); ++q) scores(q, gt[q]) = 1.0;
        milnce::RetrievalResult rr = milnce::retrieval_eval(scores, gt, opts.ks);
        double loc = milnce::localize_streams(
            corpus, split.trainEnd, split.total, [&](std::size_t s) {
                const milnce::Stream& stream = corpus.streams[s];
                return [&stream](std::size_t clip, std::size_t narr) {
                    return stream.segments[narr].matchedSegment == clip ? 1.0 : 0.0;
                };
            });
        out["retrieval"] = retrieval_json(rr);
        out["localization"] = loc;
    } else {
        milnce::EvalReport report = milnce::evaluate_heldout(corpus, ck.encoders, opts);
        json perClass = json::object();
        for (const auto& [cls, acc] : report.probe.perClass) perClass[std::to_string(cls)] = acc;
        out["retrieval"] = retrieval_json(report.retrieval);
        out["localization"] = report.localization;
        out["probe"] = json{{"accuracy", report.probe.accuracy},
                            {"perClass", perClass},
                            {"iterations", report.probe.iterations},
                            {"converged", report.probe.converged}};
        out["queries"] = report.queries;
        out["items"] = report.items;
    }
    std::string text = out.dump(2) + "\n";
    if (outPath.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        write_text_atomic(outPath, text);
        std::printf("wrote %s\n", outPath.c_str());
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, bool corrupt) {
    milnce::GradCheckOptions opts;
    opts.corruptGradient = corrupt;
    auto reports = milnce::gradcheck_all(seed, opts);
    bool ok = true;
    for (const auto& r : reports) {
        bool pass = r.maxRelError <= opts.tolerance;
        ok = ok && pass;
        std::printf("%-10s  max rel err %.3e over %zu params  [%s]\n",
                    milnce::to_string(r.kind).c_str(), r.maxRelError, r.paramCount,
                    pass ? "ok" : "FAIL");
    }
    return ok ? 0 : kExitGradcheck;
}

int cmd_ablate(const std::string& gridPath, const std::string& corpusPath,
               const std::string& outCsv, const std::string& outSummary) {
    json doc = milnce::parse_json_file(gridPath);
    milnce::AblateConfig ac = milnce::ablate_config_from_json(doc);
    milnce::Corpus corpus = milnce::load_corpus(corpusPath);
    milnce::AblationResult result =
        milnce::run_ablation_grid(ac, corpus, [](const milnce::AblationRow& row) {
            std::printf("cell %s seed %llu: %s\n", row.cellId.c_str(),
                        static_cast<unsigned long long>(row.seed),
                        row.ok ? "ok" : row.error.c_str());
            std::fflush(stdout);
        });
    write_text_atomic(outCsv, milnce::ablation_csv(result));
    std::printf("wrote %s\n", outCsv.c_str());
    if (!outSummary.empty()) {
        write_text_atomic(outSummary, milnce::ablation_summary_json(ac, result).dump(2) + "\n");
        std::printf("wrote %s\n", outSummary.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MIL-NCE contrastive training on synthetic narrated streams"};
    app.require_subcommand(1);

    std::string configPath, corpusPath, outPath, outDir, checkpointPath;
    std::string gridPath, outCsv, outSummary;
    std::vector<std::string> sets;
    std::uint64_t seed = 1;
    bool corrupt = false;
    bool injectOracle = false;

    auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
    gen->add_option("--config", configPath, "run config JSON (defaults apply if omitted)");
    gen->add_option("--out", outPath, "corpus output path")->required();
    gen->add_option("--set", sets, "override top-level scalar config field (key=value)");

    auto* train = app.add_subcommand("train", "train encoders on a corpus");
    train->add_option("--config", configPath, "run config JSON");
    train->add_option("--corpus", corpusPath, "corpus file")->required();
    train->add_option("--out-dir", outDir, "output directory")->required();
    train->add_option("--set", sets, "override top-level scalar config field (key=value)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on held-out streams");
    eval->add_option("--checkpoint", checkpointPath, "checkpoint file")->required();
    eval->add_option("--corpus", corpusPath, "corpus file")->required();
    eval->add_option("--out", outPath, "metrics JSON output (stdout if omitted)");
    eval->add_option("--set", sets, "override top-level scalar config field (key=value)");
    eval->add_flag("--inject-oracle", injectOracle,
                   "test hook: score retrieval/localization with ground-truth oracle scores");

    auto* gc = app.add_subcommand("gradcheck",
                                  "finite-difference check of all loss gradients");
    gc->add_option("--seed", seed, "random seed");
    gc->add_flag("--corrupt-gradient", corrupt,
                 "test hook: corrupt one gradient entry; the check must fail");

    auto* ablate = app.add_subcommand("ablate", "run an ablation grid");
    ablate->add_option("--config", gridPath, "grid config JSON")->required();
    ablate->add_option("--corpus", corpusPath, "corpus file")->required();
    ablate->add_option("--out", outCsv, "results CSV path")->required();
    ablate->add_option("--summary", outSummary, "JSON summary path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(configPath, outPath, sets);
        if (train->parsed()) return cmd_train(configPath, corpusPath, outDir, sets);
        if (eval->parsed())
            return cmd_eval(checkpointPath, corpusPath, outPath, sets, injectOracle);
        if (gc->parsed()) return cmd_gradcheck(seed, corrupt);
        if (ablate->parsed()) return cmd_ablate(gridPath, corpusPath, outCsv, outSummary);
    } catch (const milnce::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const milnce::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const milnce::ArtifactError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitArtifact;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
