#include "phenovlp/knowledge/trainer.hpp"

#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/knowledge/loss.hpp"
#include "phenovlp/nn/optim.hpp"

namespace phenovlp::knowledge {

namespace fs = std::filesystem;

void KnowledgeTrainConfig::validate() const {
    if (batch_phenotypes < 2) throw ParameterError("batch_phenotypes must be at least 2 for in-batch negatives");
    if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
    if (epochs < 0) throw ParameterError("epochs must be non-negative");
    if (max_tokens < 1) throw ParameterError("max_tokens must be positive");
    ontology::AttributeFilter::from_components(kg_components);
}

json KnowledgeTrainConfig::to_json() const {
    return json{{"batch_phenotypes", batch_phenotypes}, {"temperature", temperature},
                {"learning_rate", learning_rate},       {"weight_decay", weight_decay},
                {"epochs", epochs},                     {"seed", seed},
                {"max_tokens", max_tokens},             {"terminal_only", terminal_only},
                {"kg_components", kg_components},       {"max_steps", max_steps}};
}

std::vector<ontology::TermId> eligible_terms(const ontology::PhenotypeGraph& graph, bool terminal_only) {
    std::vector<ontology::TermId> out;
    if (terminal_only) {
        const auto leaves = ontology::terminal_nodes(graph);
        out.assign(leaves.begin(), leaves.end());
    } else {
        for (const auto& [id, t] : graph.terms()) out.push_back(id);
    }
    return out;
}

KnowledgeBatch build_knowledge_batch(const ontology::PhenotypeGraph& graph,
                                     const std::vector<ontology::TermId>& eligible, int batch_phenotypes,
                                     Rng& rng, const ontology::AttributeFilter& filter) {
    if (batch_phenotypes < 2) throw ParameterError("batch_phenotypes must be at least 2");
    if (eligible.size() < static_cast<std::size_t>(batch_phenotypes)) {
        throw ParameterError("need " + std::to_string(batch_phenotypes) + " eligible phenotypes, graph has " +
                             std::to_string(eligible.size()));
    }
    KnowledgeBatch batch;
    const auto picks = rng.sample_without_replacement(eligible.size(), static_cast<std::size_t>(batch_phenotypes));
    for (auto p : picks) {
        const auto& id = eligible[p];
        auto [a, b] = ontology::sample_attribute_pair(graph, id, rng, filter);
        batch.terms.push_back(id);
        batch.texts.push_back(a.text);
        batch.texts.push_back(b.text);
        batch.attributes.push_back(std::move(a));
        batch.attributes.push_back(std::move(b));
    }
    batch.pairing = interleaved_pairing(batch_phenotypes);
    return batch;
}

KnowledgeBatch build_knowledge_batch(const ontology::PhenotypeGraph& graph, int batch_phenotypes, Rng& rng) {
    return build_knowledge_batch(graph, eligible_terms(graph, false), batch_phenotypes, rng);
}

long knowledge_total_steps(const KnowledgeTrainConfig& config, std::size_t eligible) {
    const long per_epoch = static_cast<long>((eligible + config.batch_phenotypes - 1) / config.batch_phenotypes);
    long total = per_epoch * config.epochs;
    if (config.max_steps >= 0) total = std::min(total, config.max_steps);
    return total;
}

namespace {

[[noreturn]] void dump_nan_batch(const KnowledgeTrainConfig& config, long step, const KnowledgeBatch& batch) {
    json dump{{"step", step}, {"texts", batch.texts}, {"terms", batch.terms}};
    std::string where = "(not written)";
    if (!config.diagnostics_dir.empty()) {
        const auto path = config.diagnostics_dir / ("nan_batch_step" + std::to_string(step) + ".json");
        write_json(path, dump);
        where = path.string();
    }
    throw StageError("train-knowledge", "non-finite loss at step " + std::to_string(step) + "; batch dump " + where);
}

}  // namespace

KnowledgeTrainResult train_knowledge_encoder(const KnowledgeTrainConfig& config,
                                             const ontology::PhenotypeGraph& graph, TextEncoder encoder,
                                             const BatchHook& hook) {
    config.validate();
    const auto filter = ontology::AttributeFilter::from_components(config.kg_components);
    const auto eligible = eligible_terms(graph, config.terminal_only);
    const long total = knowledge_total_steps(config, eligible.size());

    KnowledgeTrainResult result{std::move(encoder), {}};
    if (total == 0) return result;
    if (eligible.size() < static_cast<std::size_t>(config.batch_phenotypes)) {
        throw ParameterError("batch of " + std::to_string(config.batch_phenotypes) + " phenotypes exceeds the " +
                             std::to_string(eligible.size()) + " eligible terms");
    }

    nn::AdamW optim(result.encoder.parameters(), {.weight_decay = config.weight_decay});
    Rng rng(config.seed);
    result.loss_history.reserve(static_cast<std::size_t>(total));
    for (long step = 0; step < total; ++step) {
        const auto batch = build_knowledge_batch(graph, eligible, config.batch_phenotypes, rng, filter);
        if (hook) hook(step, batch);
        nn::Var z = result.encoder.forward(batch.texts);
        nn::Var loss = knowledge_infonce_loss(z, batch.pairing, config.temperature);
        if (!std::isfinite(loss.scalar())) dump_nan_batch(config, step, batch);
        optim.zero_grad();
        loss.backward();
        optim.step(config.learning_rate);
        result.loss_history.push_back(loss.scalar());
        if ((step + 1) % 50 == 0 || step + 1 == total) {
            spdlog::debug("train-knowledge step {}/{} loss {:.5f}", step + 1, total, loss.scalar());
        }
    }
    return result;
}

void save_knowledge_checkpoint(const fs::path& dir, const TextEncoder& encoder, const KnowledgeTrainConfig& config,
                               const std::vector<double>& history, const std::string& graph_hash) {
    encoder.save(dir);
    std::ostringstream csv;
    csv.precision(17);
    csv << "step,loss\n";
    for (std::size_t i = 0; i < history.size(); ++i) csv << i << ',' << history[i] << '\n';
    write_text(dir / "loss_history.csv", csv.str());
    json meta{{"config", config.to_json()},
              {"final_loss", history.empty() ? json(nullptr) : json(history.back())},
              {"steps", history.size()},
              {"graph_hash", graph_hash}};
    write_json(dir / "meta.json", meta);
}

}  // namespace phenovlp::knowledge
