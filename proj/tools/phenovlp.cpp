// Command-line entry point: one subcommand per pipeline stage plus `run` and
// `ablate`. Exit codes: 0 ok, 1 bad input or parameters, 2 stage failure,
// 3 invariant violation.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/pipeline/ablation.hpp"
#include "phenovlp/pipeline/config.hpp"
#include "phenovlp/pipeline/stages.hpp"

namespace fs = std::filesystem;
using namespace phenovlp;
using namespace phenovlp::pipeline;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<long> seed;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config, "Run configuration file")->check(CLI::ExistingFile);
        cmd->add_option("--set", overrides, "Override a config key, section.key=value (repeatable)");
        cmd->add_option("--seed", seed, "Global seed");
    }

    RunConfig load() const {
        RunConfig c = config.empty() ? RunConfig() : RunConfig::load(config);
        if (config.empty()) c.set_base_dir(fs::current_path());
        for (const auto& o : overrides) c.apply_override(o);
        if (seed) c.set("seed", std::to_string(*seed));
        return c;
    }
};

fs::path pick(const std::string& flag, const fs::path& fallback, const char* what) {
    fs::path p = flag.empty() ? fallback : fs::path(flag);
    if (p.empty()) throw ParameterError(std::string("no ") + what + " given");
    return p;
}

int exit_code_for(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const StageError& x) {
        std::cerr << "stage failed: " << x.what() << "\n";
        return 2;
    } catch (const InputError& x) {
        std::cerr << "input error: " << x.what() << "\n";
        return 1;
    } catch (const ParameterError& x) {
        std::cerr << "parameter error: " << x.what() << "\n";
        return 1;
    } catch (const LookupError& x) {
        std::cerr << "lookup error: " << x.what() << "\n";
        return 1;
    } catch (const InvariantError& x) {
        std::cerr << "invariant violated: " << x.what() << "\n";
        return 3;
    } catch (const PreconditionError& x) {
        std::cerr << "precondition violated: " << x.what() << "\n";
        return 3;
    } catch (const std::exception& x) {
        std::cerr << "failed: " << x.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phenotype-linked vision-language pretraining pipeline"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    Common common;

    auto* build_kg_cmd = app.add_subcommand("build-kg", "Parse an OBO ontology into graph.jsonl");
    common.attach(build_kg_cmd);
    std::string obo, kg_out;
    build_kg_cmd->add_option("--obo", obo, "OBO file");
    build_kg_cmd->add_option("--out", kg_out, "Output directory");

    auto* curate_cmd = app.add_subcommand("curate", "Build phenotype-linked image-caption pairs");
    common.attach(curate_cmd);
    std::string corpus_path, graph_path, keep_list, cluster_model, pairs_out;
    bool mock_llm = false, no_split = false;
    curate_cmd->add_option("--corpus", corpus_path, "Article corpus JSONL");
    curate_cmd->add_option("--graph", graph_path, "graph.jsonl from build-kg");
    curate_cmd->add_option("--keeplist", keep_list, "Kept leaf clusters, one l1:l2 per line");
    curate_cmd->add_option("--cluster-model", cluster_model, "Previously fitted cluster model JSON");
    curate_cmd->add_option("--out", pairs_out, "Output pairs JSONL");
    curate_cmd->add_flag("--mock-llm", mock_llm, "Use the offline refiner and aligner");
    curate_cmd->add_flag("--no-split", no_split, "Keep compound figures whole");

    auto* split_cmd = app.add_subcommand("split-bench", "Split pairs into training and benchmark sets by article");
    common.attach(split_cmd);
    std::string split_pairs, holdout, split_out;
    split_cmd->add_option("--pairs", split_pairs, "Curated pairs JSONL");
    split_cmd->add_option("--holdout", holdout, "Comma-separated PMCIDs or a fraction in [0, 1]");
    split_cmd->add_option("--out", split_out, "Output directory");

    auto* knowledge_cmd = app.add_subcommand("train-knowledge", "Train the knowledge encoder on the ontology");
    common.attach(knowledge_cmd);
    std::string knowledge_graph, knowledge_out;
    knowledge_cmd->add_option("--graph", knowledge_graph, "graph.jsonl from build-kg");
    knowledge_cmd->add_option("--out", knowledge_out, "Checkpoint directory");

    auto* vlp_cmd = app.add_subcommand("train-vlp", "Train the image-text model");
    common.attach(vlp_cmd);
    std::string vlp_pairs, vlp_knowledge, vlp_out;
    vlp_cmd->add_option("--pairs", vlp_pairs, "Training pairs JSONL");
    vlp_cmd->add_option("--knowledge", vlp_knowledge, "Knowledge encoder checkpoint directory");
    vlp_cmd->add_option("--out", vlp_out, "Output directory");

    auto* eval_cmd = app.add_subcommand("evaluate", "Benchmark a trained model");
    common.attach(eval_cmd);
    std::string eval_pairs, eval_train, eval_model, eval_graph, eval_out;
    eval_cmd->add_option("--pairs", eval_pairs, "Benchmark pairs JSONL");
    eval_cmd->add_option("--train-pairs", eval_train, "Training pairs for the linear probe");
    eval_cmd->add_option("--model", eval_model, "Model directory");
    eval_cmd->add_option("--graph", eval_graph, "graph.jsonl from build-kg");
    eval_cmd->add_option("--out", eval_out, "Output metrics JSON");

    auto* run_cmd = app.add_subcommand("run", "Run every stage, skipping those that are up to date");
    common.attach(run_cmd);
    std::string run_out;
    run_cmd->add_option("--out", run_out, "Output root (overrides output_root)");

    auto* ablate_cmd = app.add_subcommand("ablate", "Run a grid of pipeline variants and tabulate metrics");
    common.attach(ablate_cmd);
    std::string grid = "kd=on,off;curation=on,off", ablate_out;
    ablate_cmd->add_option("--grid", grid, "Axes, e.g. kd=on,off;curation=on,off;init=scratch,pretrained")
        ->capture_default_str();
    ablate_cmd->add_option("--out", ablate_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        const RunConfig config = common.load();
        const RunLayout layout{config.output_root()};

        if (build_kg_cmd->parsed()) {
            const auto stats = build_kg(pick(obo, config.get_path("ontology.obo"), "--obo"), pick(kg_out, layout.kg_dir(), "--out"));
            std::cout << stats.dump(2) << "\n";
        } else if (curate_cmd->parsed()) {
            RunConfig c = config;
            if (mock_llm) c.set("curate.mock_llm", "true");
            if (no_split) c.set("curate.split", "false");
            const fs::path out = pick(pairs_out, layout.pairs(), "--out");
            const fs::path out_dir = out.parent_path().empty() ? fs::path(".") : out.parent_path();
            const CurateInputs inputs{pick(corpus_path, c.get_path("curate.corpus"), "--corpus"),
                                      pick(graph_path, layout.graph(), "--graph"),
                                      keep_list.empty() ? c.get_path("curate.keep_list") : fs::path(keep_list),
                                      cluster_model.empty() ? c.get_path("curate.cluster_model") : fs::path(cluster_model)};
            const auto stats = run_curate(c, inputs, out_dir);
            if (out.filename() != "pairs.jsonl") fs::rename(out_dir / "pairs.jsonl", out);
            std::cout << stats.to_json().dump(2) << "\n";
        } else if (split_cmd->parsed()) {
            const fs::path pairs = pick(split_pairs, layout.pairs(), "--pairs");
            std::string spec = holdout;
            if (spec.empty()) spec = config.get_text("split.holdout");
            if (spec.empty()) spec = std::to_string(config.get_real("split.holdout_fraction"));
            const auto report =
                run_split(pairs, spec, config.seed(), pick(split_out, pairs.parent_path() / "split", "--out"));
            std::cout << report.to_json().dump(2) << "\n";
        } else if (knowledge_cmd->parsed()) {
            run_train_knowledge(config, pick(knowledge_graph, layout.graph(), "--graph"),
                                pick(knowledge_out, layout.knowledge_dir(), "--out"));
        } else if (vlp_cmd->parsed()) {
            run_train_vlp(config, pick(vlp_pairs, layout.train_pairs(), "--pairs"),
                          pick(vlp_knowledge, layout.knowledge_dir(), "--knowledge"),
                          pick(vlp_out, layout.vlp_dir(), "--out"));
        } else if (eval_cmd->parsed()) {
            const EvaluateInputs inputs{pick(eval_pairs, layout.bench_pairs(), "--pairs"),
                                        eval_train.empty() ? layout.train_pairs() : fs::path(eval_train),
                                        pick(eval_model, layout.model_dir(), "--model"),
                                        pick(eval_graph, layout.graph(), "--graph")};
            const auto metrics = run_evaluate(config, inputs, pick(eval_out, layout.metrics(), "--out"));
            std::cout << metrics.dump(2) << "\n";
        } else if (run_cmd->parsed()) {
            RunConfig c = config;
            if (!run_out.empty()) c.set("output_root", fs::absolute(run_out).string());
            const auto report = run_pipeline(c);
            std::cout << "ran: " << report.ran.size() << ", up to date: " << report.skipped.size() << "\n"
                      << "manifest: " << RunLayout{c.output_root()}.manifest().string() << "\n";
        } else if (ablate_cmd->parsed()) {
            const auto table = run_ablations(config, AblationGrid::parse(grid), ablate_out);
            std::cout << table.to_csv();
        }
    } catch (...) {
        return exit_code_for(std::current_exception());
    }
    return 0;
}
