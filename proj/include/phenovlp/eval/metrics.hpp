#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/nn/autograd.hpp"

namespace phenovlp::eval {

using nn::Matrix;

inline constexpr std::string_view kClassPlaceholder = "[CLASS_NAME]";

struct PromptTemplateSet {
    std::vector<std::string> templates;

    // Each template must contain the placeholder exactly once.
    void validate() const;
    std::vector<std::string> instantiate(std::string_view class_name) const;

    static PromptTemplateSet defaults();
    // One template per line; blank lines and '#' lines ignored.
    static PromptTemplateSet load(const std::filesystem::path& path);
};

using TextEmbedder = std::function<Matrix(std::span<const std::string>)>;

// Mean of the unit embeddings of every instantiated template, renormalised.
Eigen::RowVectorXd class_embedding(const TextEmbedder& embed, std::string_view class_name,
                                   const PromptTemplateSet& templates);
Matrix class_embeddings(const TextEmbedder& embed, const std::vector<std::string>& class_names,
                        const PromptTemplateSet& templates);

struct ZeroShotResult {
    std::vector<int> predictions;
    double accuracy = 0.0;
};

// argmax over classes of cosine(image, class); ties go to the lowest index.
ZeroShotResult zero_shot_classify(const Matrix& image_embeddings, const Matrix& class_embeddings,
                                  std::span<const int> labels);

// Indices of the k largest entries of `scores`, ties broken by lower index.
std::vector<int> top_k(const Eigen::RowVectorXd& scores, int k);

enum class HitRule { any, all };

// Fraction of queries whose top-k contains a truth item (any) or all truth
// items (all). Throws ParameterError if k > gallery size or a truth set is empty.
double recall_at_k(const Matrix& similarity, const std::vector<std::vector<int>>& truth, int k,
                   HitRule rule = HitRule::any);

struct RetrievalReport {
    std::string task;
    std::map<std::string, double> metrics;
    int n_queries = 0;
    std::vector<int> k_values;

    json to_json() const;
};

// R@k for every k in `ks` that fits the gallery; larger ks are skipped with a
// warning.
RetrievalReport retrieval_report(const std::string& task, const Matrix& similarity,
                                 const std::vector<std::vector<int>>& truth, const std::vector<int>& ks,
                                 HitRule rule = HitRule::any);

struct PhenotypeRetrieval {
    RetrievalReport i2p;
    RetrievalReport p2i;
    int p2i_excluded = 0;  // candidates with no linked image
};

// image_phenotypes[i] lists indices into the candidate phenotype list.
PhenotypeRetrieval phenotype_retrieval(const Matrix& image_embeddings, const Matrix& phenotype_embeddings,
                                       const std::vector<std::vector<int>>& image_phenotypes,
                                       const std::vector<int>& ks, HitRule rule = HitRule::any);

struct MatchingResult {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int n_images = 0;
    int excluded = 0;  // images with an empty truth set

    json to_json() const;
};

MatchingResult matching_metrics(const std::vector<std::set<int>>& predicted, const std::vector<std::set<int>>& truth,
                                bool macro = false);

// Top-K phenotype sets per image; K is |truth_i| unless fixed_k > 0.
std::vector<std::set<int>> predicted_phenotype_sets(const Matrix& similarity, const std::vector<std::set<int>>& truth,
                                                    int fixed_k = 0);

struct LabeledFeatureSet {
    Matrix features;
    std::vector<int> labels;
    std::vector<std::string> class_names;

    int classes() const { return static_cast<int>(class_names.size()); }
    void validate() const;
};

struct ProbeOptions {
    double weight_decay = 1e-4;
    int max_steps = 1000;
    double tolerance = 1e-6;
    double learning_rate = 0.5;
};

struct ProbeResult {
    double accuracy = 0.0;
    Matrix weights;  // d x C
    Eigen::RowVectorXd bias;
    std::vector<int> predictions;
    int train_examples = 0;
    int steps = 0;
};

// Per-class sample of ceil(ratio * n_c) examples (at least one where the class
// has any), in index order.
std::vector<int> stratified_subsample(const std::vector<int>& labels, int classes, double ratio, std::uint64_t seed);

// Multinomial logistic regression on frozen features.
ProbeResult linear_probe(const LabeledFeatureSet& train, const LabeledFeatureSet& test, double ratio,
                         std::uint64_t seed, const ProbeOptions& options = {});

}  // namespace phenovlp::eval
