#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/knowledge/text_encoder.hpp"
#include "phenovlp/ontology/graph.hpp"

namespace phenovlp::knowledge {

struct KnowledgeTrainConfig {
    int batch_phenotypes = 256;
    double temperature = 0.07;
    double learning_rate = 1e-5;
    double weight_decay = 0.01;
    int epochs = 10;
    std::uint64_t seed = 0;
    int max_tokens = 256;
    bool terminal_only = false;
    std::string kg_components = "full";  // full | no-def | no-syn | no-rel
    long max_steps = -1;                 // optional cap on total steps
    std::filesystem::path diagnostics_dir;  // where a NaN batch is dumped

    void validate() const;
    json to_json() const;
};

struct KnowledgeBatch {
    std::vector<std::string> texts;  // a_1, a_1+, a_2, a_2+, ...
    std::vector<int> pairing;
    std::vector<ontology::TermId> terms;
    std::vector<ontology::AttributeText> attributes;
};

// Terms that take part in knowledge training, sorted by id.
std::vector<ontology::TermId> eligible_terms(const ontology::PhenotypeGraph& graph, bool terminal_only);

// B distinct phenotypes drawn uniformly from `eligible`, two attributes each.
KnowledgeBatch build_knowledge_batch(const ontology::PhenotypeGraph& graph,
                                     const std::vector<ontology::TermId>& eligible, int batch_phenotypes,
                                     Rng& rng, const ontology::AttributeFilter& filter = {});

// All eligible graph terms.
KnowledgeBatch build_knowledge_batch(const ontology::PhenotypeGraph& graph, int batch_phenotypes, Rng& rng);

struct KnowledgeTrainResult {
    TextEncoder encoder;
    std::vector<double> loss_history;
};

using BatchHook = std::function<void(long step, const KnowledgeBatch&)>;

// epochs * ceil(#eligible / B) AdamW steps on the in-batch InfoNCE loss.
KnowledgeTrainResult train_knowledge_encoder(const KnowledgeTrainConfig& config,
                                             const ontology::PhenotypeGraph& graph, TextEncoder encoder,
                                             const BatchHook& hook = {});

long knowledge_total_steps(const KnowledgeTrainConfig& config, std::size_t eligible);

// Checkpoint directory: weights.bin, encoder.json, meta.json, loss_history.csv.
void save_knowledge_checkpoint(const std::filesystem::path& dir, const TextEncoder& encoder,
                               const KnowledgeTrainConfig& config, const std::vector<double>& history,
                               const std::string& graph_hash);

}  // namespace phenovlp::knowledge
