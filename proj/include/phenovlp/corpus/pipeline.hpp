#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phenovlp/corpus/cluster.hpp"
#include "phenovlp/corpus/curation.hpp"
#include "phenovlp/ontology/graph.hpp"

namespace phenovlp::corpus {

struct CurateOptions {
    std::uint64_t seed = 0;
    bool cluster_filter = true;
    int k1 = 20;
    int k2 = 20;
    std::set<LeafId> keep_set;
    // Previously fitted model; when absent the filter is fit on this corpus.
    std::optional<ClusterFilterModel> cluster_model;
    bool split = true;
    double detector_threshold = 0.5;
    std::size_t max_caption_tokens = 256;
    bool strict_keywords = false;
    int workers = 1;
};

struct CurateBackends {
    const TextRefiner& refiner;
    const VisionAligner& aligner;
    const SubfigureDetector& detector;
    const ImageEmbedder& embedder;
};

struct CurateStats {
    std::size_t articles = 0;
    std::size_t figures = 0;
    std::size_t matched_figures = 0;
    std::size_t filtered_out = 0;
    std::size_t missing_images = 0;
    std::size_t compound_fallbacks = 0;
    std::size_t split_figures = 0;
    std::size_t dropped_pairs = 0;
    std::size_t pairs = 0;

    json to_json() const;
};

struct CurateResult {
    std::vector<ImageCaptionPair> pairs;  // sorted by (pmcid, figure_id, subfigure_index)
    std::vector<json> audit;              // fallback and drop events, same order
    CurateStats stats;
    ClusterFilterModel cluster_model;
};

// Keyword match, cluster filter, split, refine, align and integrate. Image
// refs in `articles` resolve against `corpus_dir`; pair images are written to
// `out_dir`/images. Articles are processed by `workers` threads and merged in
// a fixed order, so the result does not depend on scheduling.
CurateResult curate(const std::vector<ArticleRecord>& articles, const std::filesystem::path& corpus_dir,
                    const ontology::PhenotypeGraph& graph, const CurateBackends& backends,
                    const CurateOptions& options, const std::filesystem::path& out_dir);

// Writes pairs.jsonl, audit.jsonl, cluster_model.json and curate_stats.json.
void write_curation_outputs(const CurateResult& result, const std::filesystem::path& out_dir);

struct SplitReport {
    std::size_t train_pairs = 0;
    std::size_t bench_pairs = 0;
    std::size_t train_articles = 0;
    std::size_t bench_articles = 0;
    bool pmcid_disjoint = true;
    bool figure_disjoint = true;

    json to_json() const;
};

struct BenchmarkSplit {
    std::vector<ImageCaptionPair> train;
    std::vector<ImageCaptionPair> bench;
    SplitReport report;
};

// Pairs of held-out articles go to the benchmark, the rest to training.
// Throws InvariantError if the two sides share an article or a figure.
BenchmarkSplit benchmark_split(const std::vector<ImageCaptionPair>& pairs, const std::set<std::string>& holdout);

// round(fraction * #articles) article ids drawn without replacement.
std::set<std::string> sample_holdout(const std::vector<ImageCaptionPair>& pairs, double fraction, std::uint64_t seed);

}  // namespace phenovlp::corpus
