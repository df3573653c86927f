#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/corpus/pipeline.hpp"
#include "phenovlp/knowledge/trainer.hpp"
#include "phenovlp/pipeline/config.hpp"
#include "phenovlp/vlp/trainer.hpp"

namespace phenovlp::pipeline {

// Stage order of a full run.
const std::vector<std::string>& stage_names();

// Output layout under one run root.
struct RunLayout {
    std::filesystem::path root;

    std::filesystem::path kg_dir() const { return root / "kg"; }
    std::filesystem::path graph() const { return kg_dir() / "graph.jsonl"; }
    std::filesystem::path curated_dir() const { return root / "curated"; }
    std::filesystem::path pairs() const { return curated_dir() / "pairs.jsonl"; }
    std::filesystem::path split_dir() const { return root / "split"; }
    std::filesystem::path train_pairs() const { return split_dir() / "train.jsonl"; }
    std::filesystem::path bench_pairs() const { return split_dir() / "bench.jsonl"; }
    std::filesystem::path knowledge_dir() const { return root / "knowledge"; }
    std::filesystem::path vlp_dir() const { return root / "vlp"; }
    std::filesystem::path model_dir() const { return vlp_dir() / "model"; }
    std::filesystem::path eval_dir() const { return root / "eval"; }
    std::filesystem::path metrics() const { return eval_dir() / "metrics.json"; }
    std::filesystem::path manifest() const { return root / "manifest.json"; }
};

// Parses the ontology and writes graph.jsonl and kg_stats.json into `out_dir`.
json build_kg(const std::filesystem::path& obo, const std::filesystem::path& out_dir);

struct CurateInputs {
    std::filesystem::path corpus;
    std::filesystem::path graph;
    std::filesystem::path keep_list;      // required when the cluster filter is on
    std::filesystem::path cluster_model;  // optional; fit from the seed when empty
};

// Curation options from the [curate] section plus the global seed.
corpus::CurateOptions curate_options(const RunConfig& config);

// Runs curation into `out_dir` (pairs.jsonl, images/, audit.jsonl, ...). The
// mock backends are used when curate.mock_llm is set; otherwise endpoints come
// from PHENOVLP_LLM_* and PHENOVLP_MLLM_*.
corpus::CurateStats run_curate(const RunConfig& config, const CurateInputs& inputs,
                               const std::filesystem::path& out_dir);

// "PMC1,PMC2" lists articles; a bare number in [0, 1] is a holdout fraction.
std::set<std::string> resolve_holdout(const std::vector<corpus::ImageCaptionPair>& pairs, const std::string& spec,
                                      std::uint64_t seed);

// train.jsonl, bench.jsonl and split_report.json in `out_dir`, with image refs
// rewritten relative to it.
corpus::SplitReport run_split(const std::filesystem::path& pairs, const std::string& holdout, std::uint64_t seed,
                              const std::filesystem::path& out_dir);

knowledge::KnowledgeTrainConfig knowledge_config(const RunConfig& config);
knowledge::TextEncoderConfig text_config(const RunConfig& config);
vision::VisionEncoderConfig vision_config(const RunConfig& config);
vlp::VLPTrainConfig vlp_config(const RunConfig& config);

void run_train_knowledge(const RunConfig& config, const std::filesystem::path& graph,
                         const std::filesystem::path& out_dir, const knowledge::BatchHook& hook = {});

// Trains the dual encoder on `train_pairs`; the model goes to out_dir/model.
void run_train_vlp(const RunConfig& config, const std::filesystem::path& train_pairs,
                   const std::filesystem::path& knowledge_dir, const std::filesystem::path& out_dir);

struct EvaluateInputs {
    std::filesystem::path bench_pairs;
    std::filesystem::path train_pairs;  // linear-probe training features; optional
    std::filesystem::path model_dir;
    std::filesystem::path graph;
};

// Retrieval (I2T, T2I, I2P, P2I), zero-shot, phenotype matching and linear
// probe on the benchmark pairs. Returns and writes metrics.json.
json run_evaluate(const RunConfig& config, const EvaluateInputs& inputs, const std::filesystem::path& out_path);

// Flattened "task_metric" -> value view of metrics.json, for tables.
std::map<std::string, double> flatten_metrics(const json& metrics);

struct PipelineHooks {
    knowledge::BatchHook knowledge_batch;
};

struct PipelineReport {
    std::vector<std::string> ran;
    std::vector<std::string> skipped;
    json manifest;
};

// Every stage in order under config.output_root(). A stage is skipped when the
// manifest already records the same fingerprint (config section, seed and
// input hashes) and its outputs still hash to the recorded values. A failing
// stage raises StageError after the manifest has been written with the stages
// completed so far.
PipelineReport run_pipeline(const RunConfig& config, const PipelineHooks& hooks = {});

}  // namespace phenovlp::pipeline
