#include "phenovlp/pipeline/stages.hpp"

#include <algorithm>
#include <charconv>
#include <memory>

#include <spdlog/spdlog.h>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/hash.hpp"
#include "phenovlp/common/text.hpp"
#include "phenovlp/corpus/cluster.hpp"
#include "phenovlp/corpus/model_clients.hpp"
#include "phenovlp/corpus/records.hpp"
#include "phenovlp/corpus/subfigure.hpp"
#include "phenovlp/eval/metrics.hpp"
#include "phenovlp/ontology/graph.hpp"
#include "phenovlp/vlp/model.hpp"
#include "phenovlp/vlp/teacher.hpp"

namespace phenovlp::pipeline {

namespace fs = std::filesystem;

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"build-kg", "curate", "split-bench", "train-knowledge", "train-vlp",
                                                "evaluate"};
    return names;
}

json build_kg(const fs::path& obo, const fs::path& out_dir) {
    ontology::ParseReport report;
    const auto graph = ontology::parse_ontology_file(obo, &report);
    fs::create_directories(out_dir);
    ontology::write_graph_jsonl(graph, out_dir / "graph.jsonl");
    json stats{{"terms", graph.size()},
               {"edges", graph.edge_count()},
               {"terminals", ontology::terminal_nodes(graph).size()},
               {"keywords", ontology::keyword_list(graph).size()},
               {"parse", report.to_json()}};
    write_json(out_dir / "kg_stats.json", stats);
    return stats;
}

corpus::CurateOptions curate_options(const RunConfig& config) {
    corpus::CurateOptions o;
    o.seed = config.seed();
    o.cluster_filter = config.get_bool("curate.cluster_filter");
    o.k1 = static_cast<int>(config.get_int("curate.k1"));
    o.k2 = static_cast<int>(config.get_int("curate.k2"));
    o.split = config.get_bool("curate.split");
    o.detector_threshold = config.get_real("curate.detector_threshold");
    const long tokens = config.get_int("curate.max_caption_tokens");
    if (tokens < 1) throw ParameterError("curate.max_caption_tokens must be positive");
    o.max_caption_tokens = static_cast<std::size_t>(tokens);
    o.strict_keywords = config.get_bool("curate.strict_keywords");
    o.workers = static_cast<int>(config.get_int("curate.workers"));
    return o;
}

namespace {

struct ExternalClients {
    std::unique_ptr<corpus::HttpModelClient> refiner;
    std::unique_ptr<corpus::HttpModelClient> aligner;
};

corpus::HttpClientConfig endpoint(const std::string& prefix) {
    auto cfg = corpus::HttpClientConfig::from_env(prefix);
    if (!cfg) {
        throw InputError("curate.mock_llm is off but PHENOVLP_" + prefix + "_URL is not set");
    }
    return *cfg;
}

}  // namespace

corpus::CurateStats run_curate(const RunConfig& config, const CurateInputs& inputs, const fs::path& out_dir) {
    const auto articles = corpus::read_corpus(inputs.corpus);
    const auto graph = ontology::read_graph_jsonl(inputs.graph);
    auto options = curate_options(config);
    if (!inputs.cluster_model.empty())
        options.cluster_model = corpus::ClusterFilterModel::from_json(read_json(inputs.cluster_model));
    if (!inputs.keep_list.empty()) {
        options.keep_set = corpus::read_keep_list(inputs.keep_list);
    } else if (options.cluster_model && !options.cluster_model->keep_set.empty()) {
        options.keep_set = options.cluster_model->keep_set;
    } else if (options.cluster_filter) {
        throw ParameterError("the cluster filter needs a keep list");
    }

    const corpus::PixelStatsEmbedder embedder(static_cast<int>(config.get_int("curate.embedder_dim")));
    const corpus::GutterDetector detector;
    const corpus::MockRefiner mock_refiner;
    const corpus::MockAligner mock_aligner;
    ExternalClients external;
    const corpus::TextRefiner* refiner = &mock_refiner;
    const corpus::VisionAligner* aligner = &mock_aligner;
    if (!config.get_bool("curate.mock_llm")) {
        external.refiner = std::make_unique<corpus::HttpModelClient>(endpoint("LLM"));
        external.aligner = std::make_unique<corpus::HttpModelClient>(endpoint("MLLM"));
        refiner = external.refiner.get();
        aligner = external.aligner.get();
    }
    const corpus::CurateBackends backends{*refiner, *aligner, detector, embedder};

    fs::create_directories(out_dir / "images");
    const auto result = corpus::curate(articles, inputs.corpus.parent_path(), graph, backends, options, out_dir);
    corpus::write_curation_outputs(result, out_dir);
    return result.stats;
}

std::set<std::string> resolve_holdout(const std::vector<corpus::ImageCaptionPair>& pairs, const std::string& spec,
                                      std::uint64_t seed) {
    const std::string s = text::trim(spec);
    if (s.empty()) return {};
    double fraction = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), fraction);
    if (r.ec == std::errc() && r.ptr == s.data() + s.size()) return corpus::sample_holdout(pairs, fraction, seed);

    std::set<std::string> known, out;
    for (const auto& p : pairs) known.insert(p.pmcid);
    for (const auto& part : text::split(s, ',')) {
        const auto id = text::trim(part);
        if (id.empty()) continue;
        if (!known.count(id)) spdlog::warn("holdout article {} has no pairs", id);
        out.insert(id);
    }
    return out;
}

corpus::SplitReport run_split(const fs::path& pairs_path, const std::string& holdout, std::uint64_t seed,
                              const fs::path& out_dir) {
    const auto pairs = corpus::read_pairs(pairs_path);
    auto split = corpus::benchmark_split(pairs, resolve_holdout(pairs, holdout, seed));
    fs::create_directories(out_dir);
    const auto from = fs::absolute(pairs_path).parent_path();
    const auto to = fs::absolute(out_dir);
    auto rebase = [&](std::vector<corpus::ImageCaptionPair>& side) {
        for (auto& p : side) p.image_ref = (from / p.image_ref).lexically_normal().lexically_relative(to).generic_string();
    };
    rebase(split.train);
    rebase(split.bench);
    corpus::write_pairs(out_dir / "train.jsonl", split.train);
    corpus::write_pairs(out_dir / "bench.jsonl", split.bench);
    write_json(out_dir / "split_report.json", split.report.to_json());
    return split.report;
}

knowledge::KnowledgeTrainConfig knowledge_config(const RunConfig& config) {
    knowledge::KnowledgeTrainConfig k;
    k.batch_phenotypes = static_cast<int>(config.get_int("knowledge.batch_phenotypes"));
    k.temperature = config.get_real("knowledge.temperature");
    k.learning_rate = config.get_real("knowledge.learning_rate");
    k.weight_decay = config.get_real("knowledge.weight_decay");
    k.epochs = static_cast<int>(config.get_int("knowledge.epochs"));
    k.seed = config.seed();
    k.max_tokens = static_cast<int>(config.get_int("text.max_tokens"));
    k.terminal_only = config.get_bool("knowledge.terminal_only");
    k.kg_components = config.get_text("knowledge.kg_components");
    k.max_steps = config.get_int("knowledge.max_steps");
    k.validate();
    return k;
}

knowledge::TextEncoderConfig text_config(const RunConfig& config) {
    knowledge::TextEncoderConfig t;
    t.vocab_size = static_cast<int>(config.get_int("text.vocab_size"));
    t.model_dim = static_cast<int>(config.get_int("text.model_dim"));
    t.heads = static_cast<int>(config.get_int("text.heads"));
    t.layers = static_cast<int>(config.get_int("text.layers"));
    t.hidden_dim = static_cast<int>(config.get_int("text.hidden_dim"));
    t.embed_dim = static_cast<int>(config.get_int("text.embed_dim"));
    t.max_tokens = static_cast<int>(config.get_int("text.max_tokens"));
    return t;
}

vision::VisionEncoderConfig vision_config(const RunConfig& config) {
    vision::VisionEncoderConfig v;
    v.image_size = static_cast<int>(config.get_int("vision.image_size"));
    v.channels = config.get_int_list("vision.channels");
    v.strides = config.get_int_list("vision.strides");
    v.embed_dim = static_cast<int>(config.get_int("vision.embed_dim"));
    v.validate();
    return v;
}

vlp::VLPTrainConfig vlp_config(const RunConfig& config) {
    vlp::VLPTrainConfig c;
    c.batch_size = static_cast<int>(config.get_int("vlp.batch_size"));
    c.alpha = config.get_real("vlp.alpha");
    c.tau_m = config.get_real("vlp.tau_m");
    c.tau_kd = config.get_real("vlp.tau_kd");
    c.learning_rate = config.get_real("vlp.learning_rate");
    c.weight_decay = config.get_real("vlp.weight_decay");
    c.warmup_steps = config.get_int("vlp.warmup_steps");
    c.epochs = static_cast<int>(config.get_int("vlp.epochs"));
    c.seed = config.seed();
    c.image_size = static_cast<int>(config.get_int("vision.image_size"));
    c.max_tokens = static_cast<int>(config.get_int("text.max_tokens"));
    c.kd_enabled = config.get_bool("vlp.kd_enabled");
    c.learnable_temperature = config.get_bool("vlp.learnable_temperature");
    c.max_steps = config.get_int("vlp.max_steps");
    c.validate();
    return c;
}

void run_train_knowledge(const RunConfig& config, const fs::path& graph_path, const fs::path& out_dir,
                         const knowledge::BatchHook& hook) {
    const auto graph = ontology::read_graph_jsonl(graph_path);
    auto k = knowledge_config(config);
    k.diagnostics_dir = out_dir;
    knowledge::TextEncoder encoder(text_config(config), config.seed());
    auto result = knowledge::train_knowledge_encoder(k, graph, std::move(encoder), hook);
    fs::create_directories(out_dir);
    knowledge::save_knowledge_checkpoint(out_dir, result.encoder, k, result.loss_history, hash_file(graph_path));
}

void run_train_vlp(const RunConfig& config, const fs::path& train_pairs, const fs::path& knowledge_dir,
                   const fs::path& out_dir) {
    auto c = vlp_config(config);
    c.diagnostics_dir = out_dir;
    const auto pairs = corpus::read_pairs(train_pairs);
    const auto data = vlp::load_vlp_dataset(pairs, train_pairs.parent_path(), c.image_size);
    if (data.examples.size() < 2) {
        throw ParameterError("training needs at least two readable pairs, found " + std::to_string(data.examples.size()));
    }
    auto knowledge_encoder = knowledge::TextEncoder::load(knowledge_dir);

    vlp::VLModelSpec spec;
    spec.vision = vision_config(config);
    spec.init = vlp::text_init_from_string(config.get_text("vlp.init"));
    spec.text = spec.init == vlp::TextInit::pretrained ? knowledge_encoder.config() : text_config(config);
    spec.seed = config.seed();
    auto model = vlp::make_vl_model(spec, &knowledge_encoder, knowledge_encoder.dim());

    std::unique_ptr<vlp::EncoderTeacher> teacher;
    if (c.kd_enabled) teacher = std::make_unique<vlp::EncoderTeacher>(std::move(knowledge_encoder));
    auto result = vlp::train_vlp(c, data, std::move(model), teacher.get());

    fs::create_directories(out_dir);
    result.model.save(out_dir / "model");
    vlp::write_loss_history(out_dir / "loss_history.csv", result.history);
    write_json(out_dir / "train_summary.json",
               json{{"examples", data.examples.size()},
                    {"skipped_missing", data.skipped_missing},
                    {"total_steps", result.total_steps},
                    {"final_loss", result.history.empty() ? json(nullptr) : json(result.history.back().loss)},
                    {"init", config.get_text("vlp.init")},
                    {"config", c.to_json()}});
}

namespace {

// Index of each example's label: its lowest phenotype id, among `classes`.
std::vector<int> first_phenotype_labels(const vlp::VLPDataset& data, const std::vector<std::string>& classes) {
    std::vector<int> labels;
    for (const auto& e : data.examples) {
        const auto& first = *std::min_element(e.phenotype_ids.begin(), e.phenotype_ids.end());
        labels.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), first) - classes.begin()));
    }
    return labels;
}

void add_first_phenotypes(const vlp::VLPDataset& data, std::set<std::string>& out) {
    for (const auto& e : data.examples) out.insert(*std::min_element(e.phenotype_ids.begin(), e.phenotype_ids.end()));
}

}  // namespace

json run_evaluate(const RunConfig& config, const EvaluateInputs& inputs, const fs::path& out_path) {
    const auto graph = ontology::read_graph_jsonl(inputs.graph);
    const auto model = vlp::VLModel::load(inputs.model_dir);
    const int image_size = model.vision.config().image_size;
    const auto bench = vlp::load_vlp_dataset(corpus::read_pairs(inputs.bench_pairs), inputs.bench_pairs.parent_path(),
                                             image_size);
    if (bench.examples.empty()) throw ParameterError("the benchmark split has no readable pairs");
    const auto ks = config.get_int_list("eval.ks");
    const auto templates_path = config.get_path("eval.templates");
    const auto templates =
        templates_path.empty() ? eval::PromptTemplateSet::defaults() : eval::PromptTemplateSet::load(templates_path);
    const eval::TextEmbedder embed = [&](std::span<const std::string> texts) { return model.text.encode(texts); };

    const nn::Matrix v = model.encode_images(bench.images());
    const auto captions = bench.captions();
    const nn::Matrix t = model.encode_texts(captions);
    const int n = static_cast<int>(captions.size());

    // Identical captions count as correct matches for one another.
    std::vector<std::vector<int>> caption_truth(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (captions[static_cast<std::size_t>(i)] == captions[static_cast<std::size_t>(j)])
                caption_truth[static_cast<std::size_t>(i)].push_back(j);
    const nn::Matrix sim = v * t.transpose();

    json out{{"n_images", n}, {"skipped_missing", bench.skipped_missing}};
    out["i2t"] = eval::retrieval_report("i2t", sim, caption_truth, ks).to_json();
    out["t2i"] = eval::retrieval_report("t2i", sim.transpose(), caption_truth, ks).to_json();

    // Phenotype retrieval over every terminal phenotype of the graph.
    const auto terminal_set = ontology::terminal_nodes(graph);
    const std::vector<std::string> candidates(terminal_set.begin(), terminal_set.end());
    std::vector<std::string> names;
    for (const auto& id : candidates) names.push_back(graph.term(id).name);
    const nn::Matrix p = eval::class_embeddings(embed, names, templates);
    std::vector<std::vector<int>> image_phenotypes;
    std::vector<std::set<int>> truth_sets;
    for (const auto& e : bench.examples) {
        std::vector<int> idx;
        for (const auto& id : e.phenotype_ids) {
            const auto it = std::lower_bound(candidates.begin(), candidates.end(), id);
            if (it == candidates.end() || *it != id) throw InvariantError("benchmark phenotype " + id + " is not terminal");
            idx.push_back(static_cast<int>(it - candidates.begin()));
        }
        truth_sets.emplace_back(idx.begin(), idx.end());
        image_phenotypes.push_back(std::move(idx));
    }
    const auto pr = eval::phenotype_retrieval(v, p, image_phenotypes, ks);
    out["i2p"] = pr.i2p.to_json();
    out["p2i"] = pr.p2i.to_json();
    out["p2i"]["excluded"] = pr.p2i_excluded;
    out["n_candidates"] = candidates.size();

    // Zero-shot labels each image with its lowest phenotype id.
    std::set<std::string> zs_set;
    add_first_phenotypes(bench, zs_set);
    const std::vector<std::string> zs_classes(zs_set.begin(), zs_set.end());
    std::vector<std::string> zs_names;
    for (const auto& id : zs_classes) zs_names.push_back(graph.term(id).name);
    const auto zs = eval::zero_shot_classify(v, eval::class_embeddings(embed, zs_names, templates),
                                             first_phenotype_labels(bench, zs_classes));
    out["zero_shot"] = {{"accuracy", zs.accuracy}, {"classes", zs_classes.size()}};

    const nn::Matrix phen_sim = v * p.transpose();
    const auto predicted =
        eval::predicted_phenotype_sets(phen_sim, truth_sets, static_cast<int>(config.get_int("eval.matching_k")));
    out["matching"] = eval::matching_metrics(predicted, truth_sets, config.get_bool("eval.macro")).to_json();

    if (!inputs.train_pairs.empty() && fs::exists(inputs.train_pairs)) {
        const auto train = vlp::load_vlp_dataset(corpus::read_pairs(inputs.train_pairs),
                                                 inputs.train_pairs.parent_path(), image_size);
        std::set<std::string> class_set;
        add_first_phenotypes(train, class_set);
        add_first_phenotypes(bench, class_set);
        const std::vector<std::string> classes(class_set.begin(), class_set.end());
        if (train.examples.empty() || classes.size() < 2) {
            out["linear_probe"] = {{"skipped", "needs training pairs from at least two classes"}};
        } else {
            const eval::LabeledFeatureSet train_set{model.encode_images(train.images()),
                                                    first_phenotype_labels(train, classes), classes};
            const eval::LabeledFeatureSet test_set{v, first_phenotype_labels(bench, classes), classes};
            eval::ProbeOptions po;
            po.weight_decay = config.get_real("eval.probe_weight_decay");
            po.max_steps = static_cast<int>(config.get_int("eval.probe_max_steps"));
            const auto probe =
                eval::linear_probe(train_set, test_set, config.get_real("eval.probe_ratio"), config.seed(), po);
            out["linear_probe"] = {{"accuracy", probe.accuracy},
                                   {"train_examples", probe.train_examples},
                                   {"classes", classes.size()}};
        }
    }

    fs::create_directories(out_path.parent_path());
    write_json(out_path, out);
    return out;
}

std::map<std::string, double> flatten_metrics(const json& metrics) {
    std::map<std::string, double> out;
    for (const char* task : {"i2t", "t2i", "i2p", "p2i"}) {
        if (!metrics.contains(task)) continue;
        for (const auto& [k, v] : metrics[task].at("metrics").items()) out[std::string(task) + "_" + k] = v.get<double>();
    }
    if (metrics.contains("zero_shot")) out["zero_shot_acc"] = metrics["zero_shot"].at("accuracy").get<double>();
    if (metrics.contains("matching"))
        for (const char* k : {"precision", "recall", "f1"}) out[std::string("match_") + k] = metrics["matching"].at(k).get<double>();
    if (metrics.contains("linear_probe") && metrics["linear_probe"].contains("accuracy"))
        out["probe_acc"] = metrics["linear_probe"]["accuracy"].get<double>();
    return out;
}

namespace {

struct StagePlan {
    std::string name;
    std::map<std::string, std::string> inputs;  // label -> content hash
    std::vector<std::string> sections;          // config sections the stage reads
    std::vector<std::string> outputs;           // paths relative to the run root
    std::string out_dir;                        // cleared before the stage runs
    std::function<void()> run;
};

std::string fingerprint(const StagePlan& plan, const RunConfig& config) {
    std::string s = plan.name + "\nseed=" + std::to_string(config.seed()) + "\n";
    for (const auto& sec : plan.sections) s += sec + "=" + config.section_hash(sec) + "\n";
    for (const auto& [k, v] : plan.inputs) s += k + "=" + v + "\n";
    return hex64(fnv1a(s));
}

std::string hash_or_empty(const fs::path& p) { return p.empty() ? std::string("none") : hash_path(p); }

// Content hash of the corpus images a curation run reads.
std::string corpus_images_hash(const fs::path& corpus_path) {
    std::uint64_t h = kFnvOffset;
    for (const auto& a : corpus::read_corpus(corpus_path))
        for (const auto& f : a.figures) {
            const auto p = corpus_path.parent_path() / f.image_ref;
            h = fnv1a(f.image_ref, h);
            h = fnv1a(fs::exists(p) ? hash_file(p) : std::string("missing"), h);
        }
    return hex64(h);
}

bool outputs_match(const json& record, const fs::path& root) {
    if (!record.contains("outputs")) return false;
    for (const auto& [rel, h] : record["outputs"].items()) {
        if (!fs::exists(root / rel) || hash_path(root / rel) != h.get<std::string>()) return false;
    }
    return true;
}

[[noreturn]] void rethrow_in_stage(const std::string& stage) {
    try {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const InputError& e) {
        throw InputError(stage + ": " + e.what());
    } catch (const ParameterError& e) {
        throw ParameterError(stage + ": " + e.what());
    } catch (const InvariantError& e) {
        throw InvariantError(stage + ": " + e.what());
    } catch (const PreconditionError& e) {
        throw PreconditionError(stage + ": " + e.what());
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

}  // namespace

PipelineReport run_pipeline(const RunConfig& config, const PipelineHooks& hooks) {
    const RunLayout L{config.output_root()};
    if (L.root.empty()) throw ParameterError("output_root is not set");

    json previous = json::object();
    if (fs::exists(L.manifest())) {
        try {
            previous = read_json(L.manifest());
        } catch (const InputError& e) {
            spdlog::warn("ignoring unreadable manifest: {}", e.what());
        }
    }
    json manifest{{"seed", config.seed()}, {"config_hash", hex64(fnv1a(config.serialize()))}, {"stages", json::object()}};
    auto finish_manifest = [&] {
        json artifacts = json::object();
        for (const auto& [name, rec] : manifest["stages"].items())
            for (const auto& [rel, h] : rec["outputs"].items()) artifacts[rel] = h;
        manifest["artifacts"] = artifacts;
        write_json(L.manifest(), manifest);
    };

    const auto obo = config.get_path("ontology.obo");
    const auto corpus_path = config.get_path("curate.corpus");
    const auto keep_list = config.get_path("curate.keep_list");
    const auto cluster_model = config.get_path("curate.cluster_model");
    const auto templates = config.get_path("eval.templates");
    if (obo.empty()) throw ParameterError("ontology.obo is not set");
    if (corpus_path.empty()) throw ParameterError("curate.corpus is not set");
    fs::create_directories(L.root);

    // Inputs are hashed lazily: upstream outputs exist only once their stage ran.
    std::vector<std::function<StagePlan()>> plans{
        [&] {
            return StagePlan{"build-kg",
                             {{"obo", hash_file(obo)}},
                             {"ontology"},
                             {"kg/graph.jsonl", "kg/kg_stats.json"},
                             "kg",
                             [&] { build_kg(obo, L.kg_dir()); }};
        },
        [&] {
            return StagePlan{"curate",
                             {{"corpus", hash_file(corpus_path)},
                              {"images", corpus_images_hash(corpus_path)},
                              {"graph", hash_file(L.graph())},
                              {"keep_list", hash_or_empty(keep_list)},
                              {"cluster_model", hash_or_empty(cluster_model)}},
                             {"curate"},
                             {"curated/pairs.jsonl", "curated/images", "curated/audit.jsonl", "curated/cluster_model.json",
                              "curated/curate_stats.json"},
                             "curated",
                             [&] { run_curate(config, {corpus_path, L.graph(), keep_list, cluster_model}, L.curated_dir()); }};
        },
        [&] {
            return StagePlan{"split-bench",
                             {{"pairs", hash_file(L.pairs())}},
                             {"split"},
                             {"split/train.jsonl", "split/bench.jsonl", "split/split_report.json"},
                             "split",
                             [&] {
                                 std::string holdout = config.get_text("split.holdout");
                                 if (holdout.empty()) holdout = std::to_string(config.get_real("split.holdout_fraction"));
                                 run_split(L.pairs(), holdout, config.seed(), L.split_dir());
                             }};
        },
        [&] {
            return StagePlan{"train-knowledge",
                             {{"graph", hash_file(L.graph())}},
                             {"text", "knowledge"},
                             {"knowledge"},
                             "knowledge",
                             [&] { run_train_knowledge(config, L.graph(), L.knowledge_dir(), hooks.knowledge_batch); }};
        },
        [&] {
            return StagePlan{"train-vlp",
                             {{"train", hash_file(L.train_pairs())},
                              {"images", hash_path(L.curated_dir() / "images")},
                              {"knowledge", hash_path(L.knowledge_dir())}},
                             {"text", "vision", "vlp"},
                             {"vlp"},
                             "vlp",
                             [&] { run_train_vlp(config, L.train_pairs(), L.knowledge_dir(), L.vlp_dir()); }};
        },
        [&] {
            return StagePlan{"evaluate",
                             {{"bench", hash_file(L.bench_pairs())},
                              {"train", hash_file(L.train_pairs())},
                              {"images", hash_path(L.curated_dir() / "images")},
                              {"model", hash_path(L.model_dir())},
                              {"graph", hash_file(L.graph())},
                              {"templates", hash_or_empty(templates)}},
                             {"eval"},
                             {"eval/metrics.json"},
                             "eval",
                             [&] {
                                 run_evaluate(config, {L.bench_pairs(), L.train_pairs(), L.model_dir(), L.graph()},
                                              L.metrics());
                             }};
        },
    };

    PipelineReport report;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        const std::string& name = stage_names()[i];
        try {
            const StagePlan plan = plans[i]();
            const std::string fp = fingerprint(plan, config);
            const json* before = previous.contains("stages") && previous["stages"].contains(name)
                                     ? &previous["stages"][name]
                                     : nullptr;
            json record{{"fingerprint", fp}, {"inputs", plan.inputs}};
            if (before && before->value("fingerprint", "") == fp && outputs_match(*before, L.root)) {
                record["outputs"] = (*before)["outputs"];
                report.skipped.push_back(name);
                spdlog::info("{}: up to date", name);
            } else {
                spdlog::info("{}: running", name);
                fs::remove_all(L.root / plan.out_dir);
                plan.run();
                json outputs = json::object();
                for (const auto& rel : plan.outputs) outputs[rel] = hash_path(L.root / rel);
                record["outputs"] = outputs;
                report.ran.push_back(name);
            }
            manifest["stages"][name] = record;
        } catch (...) {
            manifest["failed"] = {{"stage", name}};
            try {
                rethrow_in_stage(name);
            } catch (const std::exception& e) {
                manifest["failed"]["error"] = e.what();
                finish_manifest();
                throw;
            }
        }
        finish_manifest();
    }
    report.manifest = manifest;
    return report;
}

}  // namespace phenovlp::pipeline
